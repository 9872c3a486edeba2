"""Problem data for the two-stage LQ problem with a switch time.

Stage 1 runs the n1-dimensional state X1 on [0, r); at the switch time the full
n-dimensional state is started from X(r) = K(r) X1(r-0) and runs on [r, T].
All coefficients are deterministic functions of time, tabulated on a uniform
grid and linearly interpolated between nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import DomainError

PSD_RTOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise DomainError(f"grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise DomainError(f"grid needs n_steps >= 2, got {self.n_steps}")

    @classmethod
    def horizon(cls, T, n_steps=2000):
        return cls(0.0, float(T), int(n_steps))

    @property
    def step(self):
        return (self.t1 - self.t0) / self.n_steps

    @cached_property
    def nodes(self):
        k = np.arange(self.n_steps + 1)
        nodes = self.t0 + k * (self.t1 - self.t0) / self.n_steps
        nodes.setflags(write=False)
        return nodes

    def node(self, k):
        return self.t0 + k * (self.t1 - self.t0) / self.n_steps

    def locate(self, t):
        """Return ``(k, w)`` with t = node(k) + w * step, 0 <= w < 1.

        Times within 1e-9 steps of a node snap onto it (w == 0), and the right
        end point returns ``(n_steps, 0.0)``.
        """
        span = self.t1 - self.t0
        tol = 1e-12 * span
        if t < self.t0 - tol or t > self.t1 + tol:
            raise DomainError(f"t={t} outside [{self.t0}, {self.t1}]")
        s = (min(max(t, self.t0), self.t1) - self.t0) / span * self.n_steps
        k = int(round(s))
        if abs(s - k) < 1e-9:
            return k, 0.0
        k = int(np.floor(s))
        return k, s - k

    def snap(self, t):
        """Nearest node index and its time."""
        k, w = self.locate(t)
        if w >= 0.5:
            k += 1
        return k, self.node(k)


@dataclass(frozen=True)
class CoeffTable:
    """A matrix-valued function of time stored as node samples.

    ``samples`` has shape (count, rows, cols) where count is 1 (constant) or
    n_steps + 1 of the grid it is evaluated against.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 3 or s.shape[0] < 1:
            raise DomainError(f"coefficient samples must be (count, rows, cols), got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def constant(cls, value):
        return cls(np.atleast_2d(np.asarray(value, dtype=float))[None])

    @classmethod
    def from_function(cls, func, grid):
        return cls(np.stack([np.atleast_2d(np.asarray(func(t), dtype=float)) for t in grid.nodes]))

    @property
    def rows(self):
        return self.samples.shape[1]

    @property
    def cols(self):
        return self.samples.shape[2]

    @property
    def shape(self):
        return self.samples.shape[1:]

    @property
    def is_constant(self):
        return self.samples.shape[0] == 1

    def __eq__(self, other):
        return isinstance(other, CoeffTable) and np.array_equal(self.samples, other.samples)

    __hash__ = None


def as_table(value):
    return value if isinstance(value, CoeffTable) else CoeffTable.constant(value)


def coeff_at(table: CoeffTable, grid: TimeGrid, t: float) -> np.ndarray:
    """Evaluate a coefficient table at time ``t``.

    Constant tables return their only sample; otherwise the value is linearly
    interpolated between the bracketing nodes and is exact at the nodes.
    """
    k, w = grid.locate(t)
    s = table.samples
    if s.shape[0] == 1:
        return s[0]
    if s.shape[0] != grid.n_steps + 1:
        raise DomainError(
            f"table has {s.shape[0]} samples but the grid has {grid.n_steps + 1} nodes"
        )
    if w == 0.0:
        return s[k]
    return (1.0 - w) * s[k] + w * s[k + 1]


@dataclass(frozen=True)
class ProblemSpec:
    """Full data of the two-stage state equation and quadratic cost.

    Stage-1 tables are n1-dimensional, stage-2 tables n = n1 + n2 dimensional;
    ``G1`` and ``K`` are tabulated in the switch-time variable on ``horizon``.
    """

    n1: int
    n2: int
    m: int
    horizon: TimeGrid
    A1: CoeffTable
    B1: CoeffTable
    C1: CoeffTable
    D1: CoeffTable
    A: CoeffTable
    B: CoeffTable
    C: CoeffTable
    D: CoeffTable
    Q1: CoeffTable
    R1: CoeffTable
    Q: CoeffTable
    R: CoeffTable
    G1: CoeffTable
    G: np.ndarray
    K: CoeffTable
    delta: float = 1e-8

    def __post_init__(self):
        for name in TABLE_FIELDS:
            object.__setattr__(self, name, as_table(getattr(self, name)))
        object.__setattr__(self, "G", _frozen(np.atleast_2d(self.G)))

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def T(self):
        return self.horizon.t1

    def at(self, name, t):
        """Coefficient ``name`` evaluated at time ``t``."""
        if name == "G":
            return self.G
        return coeff_at(getattr(self, name), self.horizon, t)

    def expected_shapes(self):
        n1, n, m = self.n1, self.n, self.m
        return {
            "A1": (n1, n1), "B1": (n1, m), "C1": (n1, n1), "D1": (n1, m),
            "A": (n, n), "B": (n, m), "C": (n, n), "D": (n, m),
            "Q1": (n1, n1), "R1": (m, m), "Q": (n, n), "R": (m, m),
            "G1": (n1, n1), "G": (n, n), "K": (n, n1),
        }

    def __eq__(self, other):
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        same = (self.n1, self.n2, self.m, self.horizon, self.delta) == (
            other.n1, other.n2, other.m, other.horizon, other.delta)
        return same and np.array_equal(self.G, other.G) and all(
            getattr(self, f) == getattr(other, f) for f in TABLE_FIELDS)

    __hash__ = None


TABLE_FIELDS = ("A1", "B1", "C1", "D1", "A", "B", "C", "D",
                "Q1", "R1", "Q", "R", "G1", "K")
SYMMETRIC_PSD = ("Q1", "Q", "G1", "G")
SYMMETRIC_PD = ("R1", "R")


@dataclass(frozen=True)
class Violation:
    field: str
    node: Optional[int]  # None: constant table, i.e. every node
    description: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(
            f"{v.field}[{'all nodes' if v.node is None else v.node}]: {v.description}"
            for v in self.violations
        )


def _eig_check(name, mat, lower, violations, node):
    asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    if asym > 1e-12 * scale:
        violations.append(Violation(name, node, f"{name} not symmetric (asymmetry {asym:.3g})"))
        return
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    tol = PSD_RTOL * max(float(np.max(np.abs(eig))), 1.0 if lower > 0 else 0.0)
    if eig[0] < lower - tol:
        if lower > 0:
            violations.append(Violation(
                name, node, f"{name} not ⪰ δI (min eigenvalue {eig[0]:.6g} < δ={lower:.3g})"))
        else:
            violations.append(Violation(
                name, node, f"{name} not PSD (min eigenvalue {eig[0]:.6g})"))


def validate_spec(spec: ProblemSpec) -> ValidationReport:
    """Check dimensions, symmetry and the definiteness assumptions at every node.

    All violations are collected; nothing is raised.
    """
    violations = []
    n_nodes = spec.horizon.n_steps + 1
    if spec.n1 < 1 or spec.n2 < 1 or spec.m < 1:
        violations.append(Violation("dims", None, "n1, n2 and m must be positive"))
    if not (np.isfinite(spec.delta) and spec.delta > 0):
        violations.append(Violation("delta", None, f"delta must be positive, got {spec.delta}"))
    shapes = spec.expected_shapes()
    shape_ok = {}
    for name, want in shapes.items():
        if name == "G":
            got, count = spec.G.shape, 1
            values = spec.G[None]
        else:
            tab = getattr(spec, name)
            got, count = tab.shape, tab.samples.shape[0]
            values = tab.samples
        shape_ok[name] = got == want
        if got != want:
            violations.append(Violation(name, None, f"{name} has shape {got}, expected {want}"))
        if count not in (1, n_nodes):
            shape_ok[name] = False
            violations.append(Violation(
                name, None, f"{name} has {count} samples, expected 1 or {n_nodes}"))
        if not np.all(np.isfinite(values)):
            shape_ok[name] = False
            violations.append(Violation(name, None, f"{name} has non-finite entries"))

    for name in SYMMETRIC_PSD + SYMMETRIC_PD:
        if not shape_ok[name]:
            continue
        lower = spec.delta if name in SYMMETRIC_PD else 0.0
        values = spec.G[None] if name == "G" else getattr(spec, name).samples
        for k, mat in enumerate(values):
            node = None if values.shape[0] == 1 else k
            _eig_check(name, mat, lower, violations, node)
    return ValidationReport(tuple(violations))


def _broadcast_tables(tables):
    counts = {t.samples.shape[0] for t in tables} - {1}
    if len(counts) > 1:
        raise DomainError(f"coefficient tables have incompatible sample counts {sorted(counts)}")
    count = counts.pop() if counts else 1
    return count, [np.broadcast_to(t.samples, (count,) + t.shape) for t in tables]


def _block(upper_left, lower_right, count):
    """Per-sample block-diagonal stacking (or vertical stacking when upper_left is None)."""
    if upper_left is None:
        return lower_right
    out = np.zeros((count, upper_left.shape[1] + lower_right.shape[1],
                    upper_left.shape[2] + lower_right.shape[2]))
    out[:, :upper_left.shape[1], :upper_left.shape[2]] = upper_left
    out[:, upper_left.shape[1]:, upper_left.shape[2]:] = lower_right
    return out


def build_stopped_system(A1, B1, C1, D1, Q1, R1, G1, A2, B2, C2, D2, Q2, R2, G2,
                         K_lower, horizon, delta=1e-8, K_upper=None) -> ProblemSpec:
    """Assemble a spec whose first state block is frozen after the switch.

    On [r, T] the stage-2 coefficients are A = diag(0, A2), B = (0; B2),
    C = diag(0, C2), D = (0; D2), Q = diag(0, Q2), G = diag(0, G2) and the
    switch map is K = (K_upper; K_lower), with K_upper = I by default.
    Inputs may be constant array-likes or CoeffTables sampled on ``horizon``.
    """
    t = {k: as_table(v) for k, v in dict(
        A1=A1, B1=B1, C1=C1, D1=D1, Q1=Q1, R1=R1, G1=G1,
        A2=A2, B2=B2, C2=C2, D2=D2, Q2=Q2, R2=R2, K_lower=K_lower).items()}
    n1 = t["A1"].rows
    n2 = t["A2"].rows
    m = t["B1"].cols
    want = {
        "A1": (n1, n1), "B1": (n1, m), "C1": (n1, n1), "D1": (n1, m),
        "Q1": (n1, n1), "R1": (m, m), "G1": (n1, n1),
        "A2": (n2, n2), "B2": (n2, m), "C2": (n2, n2), "D2": (n2, m),
        "Q2": (n2, n2), "R2": (m, m), "K_lower": (n2, n1),
    }
    for name, shape in want.items():
        if t[name].shape != shape:
            raise DomainError(f"{name} has shape {t[name].shape}, expected {shape}")
    G2 = np.atleast_2d(np.asarray(G2, dtype=float))
    if G2.shape != (n2, n2):
        raise DomainError(f"G2 has shape {G2.shape}, expected {(n2, n2)}")
    K_upper = as_table(np.eye(n1) if K_upper is None else K_upper)
    if K_upper.shape != (n1, n1):
        raise DomainError(f"K_upper has shape {K_upper.shape}, expected {(n1, n1)}")

    count, (a2, b2, c2, d2, q2) = _broadcast_tables(
        [t["A2"], t["B2"], t["C2"], t["D2"], t["Q2"]])
    zero_sq = np.zeros((count, n1, n1))
    zero_col = np.zeros((count, n1, m))
    A = _block(zero_sq, a2, count)
    C = _block(zero_sq, c2, count)
    Q = _block(zero_sq, q2, count)
    B = np.concatenate([zero_col, b2], axis=1)
    D = np.concatenate([zero_col, d2], axis=1)
    kc, (ku, kl) = _broadcast_tables([K_upper, t["K_lower"]])
    K = np.concatenate([ku, kl], axis=1)
    G = np.zeros((n1 + n2, n1 + n2))
    G[n1:, n1:] = G2
    return ProblemSpec(
        n1=n1, n2=n2, m=m, horizon=horizon,
        A1=t["A1"], B1=t["B1"], C1=t["C1"], D1=t["D1"],
        A=CoeffTable(A), B=CoeffTable(B), C=CoeffTable(C), D=CoeffTable(D),
        Q1=t["Q1"], R1=t["R1"], Q=CoeffTable(Q), R=t["R2"],
        G1=t["G1"], G=G, K=CoeffTable(K), delta=delta,
    )
