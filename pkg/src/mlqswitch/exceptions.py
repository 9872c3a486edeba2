"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class RiccatiBlowUp(ArithmeticError):
    """R + D'PD lost positive definiteness (or went non-finite) during a backward solve."""

    def __init__(self, message, node=None, time=None, r=None):
        super().__init__(message)
        self.node = node
        self.time = time
        self.r = r


class DegenerateTerminal(DomainError):
    """The stage-2 terminal weight sits on an equilibrium lambda_+ or lambda_-.

    The scalar Riccati solution is then constant, P2(t) = G2 for all t.
    """

    def __init__(self, message, which, value):
        super().__init__(message)
        self.which = which
        self.value = value


class SimulationError(RuntimeError):
    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line
