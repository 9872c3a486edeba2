"""Command-line driver: one YAML document configures every command.

Document layout::

    problem:            # kind: general | stopped | scalar | example43
      kind: scalar
      T: 1.0
      A1: 1.0
      ...
    x1: [1.0]           # default: first unit vector
    switch_time: 0.5    # default: the optimal switch time
    numerics: {n_steps: 2000, coarse_points: 65, tol_r: 1.0e-6, delta_pd: 1.0e-10}
    simulation: {n_paths: 100000, n_steps: 2000, seed: 0, antithetic: false,
                 workers: 1, trace_paths: 10}
    output: {directory: out, format: csv}

Matrices are row-major nested lists.  For ``general`` and ``stopped``
problems a coefficient may also be a list of matrices, sampled at the
``table_steps + 1`` uniform nodes of [0, T].
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from scipy.integrate import solve_ivp

from . import closed_form as cf
from .dot import find_optimal_time, sensitivity_fd, sensitivity_scalar, value_curve
from .exceptions import ConfigError, DomainError, RiccatiBlowUp, SimulationError
from .model import CoeffTable, ProblemSpec, TimeGrid, build_stopped_system
from .riccati import DELTA_PD, solve_stage1, solve_stage2, write_solution_csv
from .simulate import SimConfig, simulate_closed_loop

COMMANDS = ("riccati", "value-curve", "optimal-time", "simulate",
            "verify-example43", "verify-1d", "check-nontrivial")

_SCALAR_KEYS = ("A1", "B1", "C1", "D1", "Q1", "R1", "G1",
                "A2", "B2", "C2", "D2", "Q2", "R2", "G2", "K")
_SCALAR_DEFAULTS = {k: 0.0 for k in _SCALAR_KEYS} | {"R1": 1.0, "R2": 1.0, "K": 1.0}
_EX43_DEFAULTS = {"a": 0.0, "g": 1.0, "g1": 1.0}
_GENERAL_COEFFS = ("A1", "B1", "C1", "D1", "Q1", "R1", "G1",
                   "A", "B", "C", "D", "Q", "R", "G", "K")
_STOPPED_COEFFS = ("A1", "B1", "C1", "D1", "Q1", "R1", "G1",
                   "A2", "B2", "C2", "D2", "Q2", "R2", "G2", "K_lower", "K_upper")


# -- document helpers -------------------------------------------------------

def _line_map(text):
    """Dotted key path -> 1-based line of each mapping key in the document."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                lines[path] = key.start_mark.line + 1
                walk(value, path)

    try:
        walk(yaml.compose(text, Loader=yaml.SafeLoader), "")
    except yaml.YAMLError:
        pass
    return lines


class _Reader:
    """Typed access to one mapping of the document with strict-key checking."""

    def __init__(self, data, path, lines):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("expected a mapping", key=path or "<root>", line=lines.get(path))
        self.data, self.path, self.lines = data, path, lines
        self.used = set()

    def key(self, name):
        return f"{self.path}.{name}" if self.path else name

    def error(self, name, message):
        return ConfigError(message, key=self.key(name), line=self.lines.get(self.key(name)))

    def raw(self, name, default=None, required=False):
        self.used.add(name)
        if name not in self.data:
            if required:
                raise ConfigError("missing required key", key=self.key(name),
                                  line=self.lines.get(self.path))
            return default
        return self.data[name]

    def number(self, name, default=None, required=False):
        v = self.raw(name, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(name, f"expected a number, got {v!r}")
        return float(v)

    def integer(self, name, default=None, required=False, minimum=None):
        v = self.raw(name, default, required)
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(name, f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise self.error(name, f"must be at least {minimum}, got {v}")
        return v

    def boolean(self, name, default):
        v = self.raw(name, default)
        if not isinstance(v, bool):
            raise self.error(name, f"expected true or false, got {v!r}")
        return v

    def string(self, name, default=None, choices=None, required=False):
        v = self.raw(name, default, required)
        if not isinstance(v, str):
            raise self.error(name, f"expected a string, got {v!r}")
        if choices and v not in choices:
            raise self.error(name, f"must be one of {', '.join(choices)}, got {v!r}")
        return v

    def matrix(self, name, shape, default, table_count=None):
        """A constant (rows, cols) matrix, or a stack of table_count of them."""
        v = self.raw(name)
        if v is None:
            return np.asarray(default, dtype=float).tolist()
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [[v]]
        try:
            arr = np.array(v, dtype=float)
        except (TypeError, ValueError):
            raise self.error(name, "expected a numeric matrix") from None
        if arr.ndim == 2 and arr.shape == shape:
            return arr.tolist()
        if arr.ndim == 3 and arr.shape[1:] == shape:
            if table_count is None:
                raise self.error(name, "time-dependent table given but problem.table_steps is not set")
            if arr.shape[0] != table_count:
                raise self.error(name, f"table has {arr.shape[0]} samples, expected {table_count}")
            return arr.tolist()
        raise self.error(name, f"shape {arr.shape} does not match expected {shape}")

    def finish(self):
        extra = sorted(set(self.data) - self.used, key=str)
        if extra:
            raise self.error(str(extra[0]), "unknown key")


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class Numerics:
    n_steps: int = 2000
    coarse_points: int = 65
    tol_r: float = 1e-6
    delta_pd: float = DELTA_PD


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration.  ``problem`` holds the normalized problem section."""

    problem: dict
    x1: tuple
    switch_time: Optional[float]
    numerics: Numerics
    simulation: SimConfig
    trace_paths: int = 10
    output: OutputConfig = field(default_factory=OutputConfig)

    __hash__ = None

    @property
    def kind(self):
        return self.problem["kind"]

    @property
    def T(self):
        return self.problem["T"]

    def build_spec(self) -> ProblemSpec:
        return _build_spec(self.problem)

    def scalar_params(self) -> cf.Scalar1DParams:
        if self.kind != "scalar":
            raise DomainError(f"this command needs problem.kind = scalar, got {self.kind}")
        return cf.Scalar1DParams(**{k: self.problem[k] for k in _SCALAR_KEYS}, T=self.T)

    def example43_params(self) -> cf.Example43Params:
        if self.kind != "example43":
            raise DomainError(f"this command needs problem.kind = example43, got {self.kind}")
        return cf.Example43Params(self.problem["a"], self.problem["g"], self.problem["g1"], self.T)

    def to_document(self):
        sim = self.simulation
        return {
            "problem": dict(self.problem),
            "x1": list(self.x1),
            "switch_time": self.switch_time,
            "numerics": dataclasses.asdict(self.numerics),
            "simulation": {
                "n_paths": sim.n_paths, "n_steps": sim.n_steps, "seed": sim.seed,
                "antithetic": sim.antithetic, "workers": sim.workers,
                "trace_paths": self.trace_paths,
            },
            "output": dataclasses.asdict(self.output),
        }


def _dims(problem):
    kind = problem["kind"]
    if kind == "scalar":
        return 1, 1, 1
    if kind == "example43":
        return 2, 1, 1
    return problem["n1"], problem["n2"], problem["m"]


def _parse_problem(rd: _Reader):
    kind = rd.string("kind", required=True, choices=("general", "stopped", "scalar", "example43"))
    T = rd.number("T", required=True)
    if not T > 0:
        raise rd.error("T", f"horizon must be positive, got {T}")
    out = {"kind": kind, "T": T}
    if kind == "scalar":
        for k in _SCALAR_KEYS:
            out[k] = rd.number(k, _SCALAR_DEFAULTS[k])
        return out
    if kind == "example43":
        for k, dflt in _EX43_DEFAULTS.items():
            out[k] = rd.number(k, dflt)
        return out

    n1 = rd.integer("n1", required=True, minimum=1)
    n2 = rd.integer("n2", required=True, minimum=0 if kind == "general" else 1)
    m = rd.integer("m", required=True, minimum=1)
    out.update(n1=n1, n2=n2, m=m)
    table_steps = rd.raw("table_steps")
    if table_steps is not None:
        table_steps = rd.integer("table_steps", minimum=2)
        out["table_steps"] = table_steps
    out["delta"] = rd.number("delta", 1e-8)
    count = None if table_steps is None else table_steps + 1
    n = n1 + n2
    if kind == "general":
        shapes = {"A1": (n1, n1), "B1": (n1, m), "C1": (n1, n1), "D1": (n1, m),
                  "Q1": (n1, n1), "R1": (m, m), "G1": (n1, n1),
                  "A": (n, n), "B": (n, m), "C": (n, n), "D": (n, m),
                  "Q": (n, n), "R": (m, m), "G": (n, n), "K": (n, n1)}
        defaults = {k: np.zeros(s) for k, s in shapes.items()}
        defaults["R1"] = defaults["R"] = np.eye(m)
        defaults["K"] = np.eye(n, n1)
    else:
        shapes = {"A1": (n1, n1), "B1": (n1, m), "C1": (n1, n1), "D1": (n1, m),
                  "Q1": (n1, n1), "R1": (m, m), "G1": (n1, n1),
                  "A2": (n2, n2), "B2": (n2, m), "C2": (n2, n2), "D2": (n2, m),
                  "Q2": (n2, n2), "R2": (m, m), "G2": (n2, n2),
                  "K_lower": (n2, n1), "K_upper": (n1, n1)}
        defaults = {k: np.zeros(s) for k, s in shapes.items()}
        defaults["R1"] = defaults["R2"] = np.eye(m)
        defaults["K_upper"] = np.eye(n1)
    for name, shape in shapes.items():
        # the terminal weight G is a plain matrix, never a table
        tc = None if name in ("G", "G2") else count
        out[name] = rd.matrix(name, shape, defaults[name], tc)
    return out


def _coeff(value):
    arr = np.asarray(value, dtype=float)
    return CoeffTable(arr) if arr.ndim == 3 else CoeffTable.constant(arr)


def _build_spec(problem) -> ProblemSpec:
    kind, T = problem["kind"], problem["T"]
    if kind == "scalar":
        return cf.scalar_spec(cf.Scalar1DParams(**{k: problem[k] for k in _SCALAR_KEYS}, T=T))
    if kind == "example43":
        return cf.ex43_spec(cf.Example43Params(problem["a"], problem["g"], problem["g1"], T))
    horizon = TimeGrid.horizon(T, problem.get("table_steps", 2))
    if kind == "general":
        tables = {k: _coeff(problem[k]) for k in _GENERAL_COEFFS if k != "G"}
        return ProblemSpec(n1=problem["n1"], n2=problem["n2"], m=problem["m"], horizon=horizon,
                           G=np.asarray(problem["G"], dtype=float), delta=problem["delta"],
                           **tables)
    args = {k: _coeff(problem[k]) for k in _STOPPED_COEFFS if k != "G2"}
    return build_stopped_system(**args, G2=np.asarray(problem["G2"], dtype=float),
                                horizon=horizon, delta=problem["delta"])


def parse_config(document: str) -> RunConfig:
    """Parse a YAML configuration into a fully defaulted RunConfig.

    Parsing does not validate definiteness; call ``validate_spec`` on
    ``config.build_spec()`` for that.
    """
    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed document: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from exc
    lines = _line_map(document)
    root = _Reader(data, "", lines)
    prd = _Reader(root.raw("problem", required=True), "problem", lines)
    problem = _parse_problem(prd)
    prd.finish()

    n1 = _dims(problem)[0]
    x1 = root.raw("x1")
    if x1 is None:
        x1 = [1.0] + [0.0] * (n1 - 1)
    if isinstance(x1, (int, float)) and not isinstance(x1, bool):
        x1 = [x1]
    try:
        x1 = np.array(x1, dtype=float)
    except (TypeError, ValueError):
        raise root.error("x1", "expected a numeric vector") from None
    if x1.shape != (n1,):
        raise root.error("x1", f"shape {x1.shape} does not match expected ({n1},)")

    T = problem["T"]
    r = root.number("switch_time")
    if r is not None and not 0 <= r <= T:
        raise root.error("switch_time", f"must lie in [0, {T}], got {r}")

    nrd = _Reader(root.raw("numerics"), "numerics", lines)
    numerics = Numerics(
        n_steps=nrd.integer("n_steps", 2000, minimum=2),
        coarse_points=nrd.integer("coarse_points", 65, minimum=3),
        tol_r=nrd.number("tol_r", 1e-6 * T),
        delta_pd=nrd.number("delta_pd", DELTA_PD),
    )
    nrd.finish()

    srd = _Reader(root.raw("simulation"), "simulation", lines)
    try:
        sim = SimConfig(
            n_paths=srd.integer("n_paths", 100_000, minimum=1),
            n_steps=srd.integer("n_steps", numerics.n_steps, minimum=2),
            seed=srd.integer("seed", 0, minimum=0),
            antithetic=srd.boolean("antithetic", False),
            workers=srd.integer("workers", 1, minimum=1),
        )
    except DomainError as exc:
        raise ConfigError(str(exc), key="simulation", line=lines.get("simulation")) from exc
    trace = srd.integer("trace_paths", 10, minimum=0)
    srd.finish()

    ord_ = _Reader(root.raw("output"), "output", lines)
    output = OutputConfig(directory=ord_.string("directory", "out"),
                          format=ord_.string("format", "csv", choices=("csv",)))
    ord_.finish()
    root.finish()
    return RunConfig(problem=problem, x1=tuple(x1.tolist()), switch_time=r, numerics=numerics,
                     simulation=sim, trace_paths=trace, output=output)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_document(), sort_keys=False)


# -- commands ---------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _write_kv(path, items):
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key} = {_fmt(value)}\n")


class _Checks:
    def __init__(self):
        self.rows = []

    def add(self, name, value, tol, ok=None):
        ok = bool(value <= tol) if ok is None else bool(ok)
        self.rows.append((name, value, tol, ok))
        return ok

    @property
    def passed(self):
        return all(ok for *_, ok in self.rows)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("check,value,tolerance,status\n")
            for name, value, tol, ok in self.rows:
                fh.write(f"{name},{_fmt(value)},{_fmt(tol)},{'PASS' if ok else 'FAIL'}\n")


class _Context:
    def __init__(self, config: RunConfig, out: Path):
        self.config = config
        self.out = out
        self.num = config.numerics
        self._spec = None
        self._stage2 = None

    @property
    def spec(self):
        if self._spec is None:
            self._spec = self.config.build_spec()
        return self._spec

    @property
    def stage2(self):
        if self._stage2 is None:
            self._stage2 = solve_stage2(self.spec, self.num.n_steps, self.num.delta_pd)
        return self._stage2

    def optimal_time(self, x1=None):
        x1 = self.config.x1 if x1 is None else x1
        return find_optimal_time(self.spec, x1, self.num.coarse_points, self.num.tol_r,
                                 self.num.n_steps, stage2=self.stage2,
                                 delta_pd=self.num.delta_pd)

    def switch_time(self):
        r = self.config.switch_time
        return self.optimal_time().r_bar if r is None else r


def _cmd_riccati(ctx):
    write_solution_csv(ctx.stage2, ctx.out / "p_stage2.csv")
    r = ctx.switch_time()
    s1 = solve_stage1(ctx.spec, r, ctx.stage2.P_at(r), ctx.num.n_steps, ctx.num.delta_pd)
    write_solution_csv(s1, ctx.out / "p_stage1.csv")
    print(f"riccati: stage 2 on [0, {ctx.config.T:g}], stage 1 on [0, {r:.6g}]")
    return 0


def _cmd_value_curve(ctx):
    nodes = np.linspace(0.0, ctx.config.T, ctx.num.coarse_points)
    curve = value_curve(ctx.spec, ctx.config.x1, nodes, ctx.num.n_steps, ctx.stage2,
                        delta_pd=ctx.num.delta_pd)
    curve.write_csv(ctx.out / "value_curve.csv")
    print(f"value-curve: {len(nodes)} points, min phi = {curve.phi.min():.10g}")
    return 0


def _cmd_optimal_time(ctx):
    res = ctx.optimal_time()
    items = res.as_dict()
    items["tol_r"] = ctx.num.tol_r
    _write_kv(ctx.out / "optimal_time.txt", items)
    print(f"optimal-time: r_bar = {res.r_bar:.10g} ({res.classification.value})")
    return 0


def _cmd_simulate(ctx):
    cfg = ctx.config
    r = ctx.switch_time()
    stage1 = solve_stage1(ctx.spec, r, ctx.stage2.P_at(r), ctx.num.n_steps, ctx.num.delta_pd)
    report, sample = simulate_closed_loop(ctx.spec, r, ctx.stage2, stage1, cfg.x1,
                                          cfg.simulation, n_trace=cfg.trace_paths)
    report.write(ctx.out / "sim_report.txt")
    if sample is not None:
        sample.write_csv(ctx.out / "sim_paths.csv", cfg.trace_paths)
    print(f"simulate: mean cost {report.mean_cost:.10g} +- {report.std_error:.3g}")
    return 0


def _cmd_verify_example43(ctx):
    p = ctx.config.example43_params()
    spec, s2, T = ctx.spec, ctx.stage2, p.T
    checks = _Checks()
    ts = np.linspace(0.0, T, 100)
    err = max(abs(s2.P_at(t)[2, 2] - cf.p2_closed_ex43(t, p)) for t in ts)
    checks.add("stage2_P2_vs_closed_form", err, 1e-6)
    errs, gaps = [], []
    for r in np.linspace(0.1, 0.9, 9) * T:
        s1 = solve_stage1(spec, r, s2.P_at(r), ctx.num.n_steps, ctx.num.delta_pd)
        closed = cf.ex43_p1(0.0, r, p)
        errs.append(np.max(np.abs(s1.P0 - closed)))
        gaps.append(np.max(np.abs(cf.ex43_p1(0.0, r, p, method="expm") - closed)))
    checks.add("stage1_P1_0_vs_closed_form", max(errs), 1e-6)
    checks.add("closed_form_vs_matrix_exponential", max(gaps), 1e-10)
    x1 = ctx.config.x1
    res = ctx.optimal_time()
    grid = np.linspace(0.0, T, 10_001)
    brute = np.array([cf.ex43_value(r, x1, p) for r in grid])
    checks.add("optimal_value_vs_brute_force", res.phi_min - brute.min(), 1e-6)
    checks.add("optimal_time_vs_brute_force", abs(res.r_bar - grid[np.argmin(brute)]),
               2 * T / 10_000)
    checks.write(ctx.out / "verify_report.txt")
    print(f"verify-example43: {'PASS' if checks.passed else 'FAIL'}")
    return 0 if checks.passed else 1


def _stage1_scipy(params, r, P2_r):
    terminal = params.K ** 2 * P2_r + params.G1
    sol = solve_ivp(lambda t, y: [-cf.f_eval(1, y[0], params)], (r, 0.0), [terminal],
                    method="DOP853", rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


def _cmd_verify_1d(ctx):
    p = ctx.config.scalar_params()
    spec, s2, T = ctx.spec, ctx.stage2, p.T
    checks = _Checks()
    ts = np.linspace(0.0, T, 100)
    numeric = np.array([s2.P_at(t)[1, 1] for t in ts])
    if p.D2 == 0 and p.R2 == 1 and p.B2 != 0 and not cf.degenerate_terminal(p):
        closed = cf.p2_closed_general(ts, p)
        checks.add("stage2_P2_vs_closed_form", float(np.max(np.abs(numeric - closed))), 1e-6)
    reference = np.array([cf.p2_numeric(t, p) for t in ts])
    checks.add("stage2_P2_vs_reference_ode", float(np.max(np.abs(numeric - reference))), 1e-6)
    errs, rel = [], []
    for r in np.linspace(0.1, 0.9, 9) * T:
        P_r = s2.P_at(r)
        s1 = solve_stage1(spec, r, P_r, ctx.num.n_steps, ctx.num.delta_pd)
        errs.append(abs(s1.P0[0, 0] - _stage1_scipy(p, r, cf.p2_numeric(r, p))))
        a = sensitivity_scalar(p, r, s2, ctx.num.n_steps, ctx.num.delta_pd)
        b = sensitivity_fd(spec, [1.0], r, n_steps=ctx.num.n_steps, stage2=s2,
                           delta_pd=ctx.num.delta_pd)
        rel.append(abs(a - b) / max(abs(b), 1e-10))
    checks.add("stage1_P1_0_vs_reference_ode", max(errs), 1e-6)
    checks.add("sensitivity_scalar_vs_finite_difference", max(rel), 1e-3)
    r1 = ctx.optimal_time([1.0]).r_bar
    r2 = ctx.optimal_time([2.5]).r_bar
    checks.add("optimal_time_independent_of_x1", abs(r1 - r2), ctx.num.tol_r)
    checks.write(ctx.out / "verify_report.txt")
    print(f"verify-1d: {'PASS' if checks.passed else 'FAIL'}")
    return 0 if checks.passed else 1


def _cmd_check_nontrivial(ctx):
    cert = cf.nontrivial_certificate(ctx.config.scalar_params())
    _write_kv(ctx.out / "certificate.txt", cert.as_dict())
    print(f"check-nontrivial: nontrivial = {cert.nontrivial}")
    return 0


_HANDLERS = {
    "riccati": _cmd_riccati,
    "value-curve": _cmd_value_curve,
    "optimal-time": _cmd_optimal_time,
    "simulate": _cmd_simulate,
    "verify-example43": _cmd_verify_example43,
    "verify-1d": _cmd_verify_1d,
    "check-nontrivial": _cmd_check_nontrivial,
}


def run(config: RunConfig, command: str, out_dir=None) -> int:
    """Run one command and write its files; returns the process exit status."""
    if command not in _HANDLERS:
        raise DomainError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out = Path(config.output.directory if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _HANDLERS[command](_Context(config, out))


def _override(config, args):
    sim, num = config.simulation, config.numerics
    if args.steps is not None:
        num = dataclasses.replace(num, n_steps=args.steps)
        sim = dataclasses.replace(sim, n_steps=args.steps)
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    if args.paths is not None:
        sim = dataclasses.replace(sim, n_paths=args.paths)
    if args.workers is not None:
        sim = dataclasses.replace(sim, workers=args.workers)
    return dataclasses.replace(config, simulation=sim, numerics=num)


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlqswitch", description="LQ control with an optimal switch time.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML configuration file")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=_u64)
    parser.add_argument("--paths", type=_positive)
    parser.add_argument("--steps", type=_positive)
    parser.add_argument("--workers", type=_positive)
    args = parser.parse_args(argv)
    try:
        config = _override(parse_config(Path(args.config).read_text()), args)
        return run(config, args.command, args.out)
    except (ConfigError, DomainError, RiccatiBlowUp, SimulationError, OSError) as exc:
        print(f"mlqswitch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
