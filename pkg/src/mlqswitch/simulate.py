"""Monte Carlo simulation of the controlled two-stage SDE.

Paths are stepped with Euler-Maruyama on a uniform grid of [0, T]. The switch
time is snapped to a grid node; the state there is X(r) = K(r) X1(r-), the
left limit of stage 1.  Costs use the trapezoid rule on node values plus the
two terminal terms, all multiplied by 1/2.

Controls are callables ``control(t, x)`` acting on a block of states: ``x``
has shape (paths, n1) on [0, r] and (paths, n) on [r, T], and the return value
has shape (paths, m).  The state dimension tells the two stages apart, so n2
must be positive.

Every path draws its Brownian increments from its own counter-based stream
(Philox keyed by the seed, counter offset by the stream index), and paths are
processed in fixed blocks, so results do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .exceptions import DomainError, SimulationError
from .model import ProblemSpec, TimeGrid
from .riccati import (RiccatiSolution, Stage1Solution, feedback_gain, solve_stage1,
                      stitched_terminal)

BLOCK_SIZE = 4096


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_steps: int = 2000
    seed: int = 0
    antithetic: bool = False
    workers: int = 1  # execution only; never changes results

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be at least 1")
        if self.n_steps < 2:
            raise DomainError("n_steps must be at least 2")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")


@dataclass(frozen=True)
class SimReport:
    mean_cost: float
    std_error: float
    n_paths: int
    r_used: float
    n_steps: int
    seed: int
    antithetic: bool
    stationarity_max_residual: Optional[float] = None
    terminal_adjoint_residual: Optional[float] = None
    jump_adjoint_residual: Optional[float] = None

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def write(self, path):
        with open(path, "w") as fh:
            for key, value in self.as_dict().items():
                if isinstance(value, float):
                    value = f"{value:.17g}"
                fh.write(f"{key} = {value}\n")


@dataclass(frozen=True, eq=False)
class PathSample:
    """State and control traces of the first few paths.

    Stage-1 arrays cover nodes 0..k_r, stage-2 arrays nodes k_r..N.
    """

    grid: TimeGrid
    k_switch: int
    X1: np.ndarray  # (paths, k_r + 1, n1)
    U1: np.ndarray  # (paths, k_r + 1, m)
    X: np.ndarray  # (paths, N - k_r + 1, n)
    U: np.ndarray  # (paths, N - k_r + 1, m)

    @property
    def r(self):
        return self.grid.node(self.k_switch)

    @property
    def t1(self):
        return self.grid.nodes[: self.k_switch + 1]

    @property
    def t2(self):
        return self.grid.nodes[self.k_switch:]

    def write_csv(self, path, max_paths=10):
        n1, n = self.X1.shape[2], self.X.shape[2]
        m = self.U.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "stage", "t"] + [f"x_{i}" for i in range(n)]
                       + [f"u_{i}" for i in range(m)])
            for p in range(min(max_paths, self.X.shape[0])):
                for t, x, u in zip(self.t1, self.X1[p], self.U1[p]):
                    w.writerow([p, 1, f"{t:.17g}"] + [f"{v:.17g}" for v in x]
                               + [""] * (n - n1) + [f"{v:.17g}" for v in u])
                for t, x, u in zip(self.t2, self.X[p], self.U[p]):
                    w.writerow([p, 2, f"{t:.17g}"] + [f"{v:.17g}" for v in x]
                               + [f"{v:.17g}" for v in u])


@dataclass(frozen=True, eq=False)
class AdjointPath:
    """Adjoint pair reconstructed from the Riccati solutions along one path."""

    p: np.ndarray  # (N - k_r + 1, n) on [r, T]
    q: np.ndarray
    p1: np.ndarray  # (k_r + 1, n1) on [0, r]
    q1: np.ndarray


@dataclass(frozen=True)
class StationarityResult:
    stage2_max_residual: float
    stage1_max_residual: float
    terminal_residual: float
    jump_residual: float
    max_state: float
    stage2_residuals: np.ndarray = field(repr=False, compare=False, default=None)
    stage1_residuals: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def max_residual(self):
        return max(self.stage2_max_residual, self.stage1_max_residual)


class OptimalFeedback:
    """u = -Psi1(t) x on [0, r] and u = -Psi(t) x on [r, T]."""

    def __init__(self, spec: ProblemSpec, stage2: RiccatiSolution, stage1: Stage1Solution):
        self.n1 = spec.n1
        self.stage2 = stage2
        self.stage1 = stage1

    def __call__(self, t, x):
        sol = self.stage1 if x.shape[1] == self.n1 else self.stage2
        return -(x @ feedback_gain(sol, t).T)

    def node_gains(self, times, stage):
        """Gains at the given times, stacked; lets the simulator skip the Python callback."""
        sol = self.stage1 if stage == 1 else self.stage2
        return np.stack([feedback_gain(sol, t) for t in times])


class _Model:
    """Coefficients at simulation nodes, evaluated once."""

    def __init__(self, spec, grid, k_switch):
        self.spec = spec
        self.grid = grid
        self.k = k_switch
        nodes = grid.nodes
        self.t = nodes
        r = nodes[k_switch]
        self.stage1 = {nm: [spec.at(nm, t) for t in nodes[: k_switch + 1]]
                       for nm in ("A1", "B1", "C1", "D1", "Q1", "R1")}
        self.stage2 = {nm: [spec.at(nm, t) for t in nodes[k_switch:]]
                       for nm in ("A", "B", "C", "D", "Q", "R")}
        self.G1 = spec.at("G1", r)
        self.K = spec.at("K", r)
        self.G = spec.G

    def stacked(self, stage):
        names = ("A1", "B1", "C1", "D1", "Q1", "R1") if stage == 1 else ("A", "B", "C", "D", "Q", "R")
        table = self.stage1 if stage == 1 else self.stage2
        return tuple(np.ascontiguousarray(np.stack(table[nm])) for nm in names)


@numba.njit(cache=True)
def _linear_stage(X, dW, k0, dt, A, B, C, D, Q, R, Psi, acc):
    """Advance a block in place through one stage under u = -Psi x, adding running costs to acc.

    X has shape (n, paths) and dW shape (steps, paths); stage node j uses dW[k0 + j].
    """
    steps = A.shape[0] - 1
    n, P = X.shape
    m = Psi.shape[1]
    u = np.empty((m, P))
    Xn = np.empty((n, P))
    for j in range(steps + 1):
        u[:, :] = 0.0
        for a in range(m):
            for b in range(n):
                c = Psi[j, a, b]
                for p in range(P):
                    u[a, p] -= c * X[b, p]
        if steps > 0:
            w = (0.5 if j == 0 or j == steps else 1.0) * dt
            for a in range(n):
                for b in range(n):
                    c = w * Q[j, a, b]
                    for p in range(P):
                        acc[p] += c * X[a, p] * X[b, p]
            for a in range(m):
                for b in range(m):
                    c = w * R[j, a, b]
                    for p in range(P):
                        acc[p] += c * u[a, p] * u[b, p]
        if j == steps:
            break
        for a in range(n):
            for p in range(P):
                Xn[a, p] = X[a, p]
            for b in range(n):
                ca = A[j, a, b] * dt
                cc = C[j, a, b]
                for p in range(P):
                    Xn[a, p] += X[b, p] * (ca + cc * dW[k0 + j, p])
            for b in range(m):
                cb = B[j, a, b] * dt
                cd = D[j, a, b]
                for p in range(P):
                    Xn[a, p] += u[b, p] * (cb + cd * dW[k0 + j, p])
        X[:, :] = Xn


@numba.njit(cache=True)
def _add_quad(acc, M, X):
    for a in range(X.shape[0]):
        for b in range(X.shape[0]):
            c = M[a, b]
            for p in range(X.shape[1]):
                acc[p] += c * X[a, p] * X[b, p]


@numba.njit(cache=True)
def _linear_block(x1, dW, k_r, dt, c1, c2, Psi1, Psi2, G1, K, G):
    """Costs of a block of paths under a linear feedback law; dW has shape (steps, paths)."""
    P = dW.shape[1]
    n1, n = x1.shape[0], K.shape[0]
    acc = np.zeros(P)
    X1 = np.empty((n1, P))
    for a in range(n1):
        X1[a, :] = x1[a]
    A1, B1, C1, D1, Q1, R1 = c1
    _linear_stage(X1, dW, 0, dt, A1, B1, C1, D1, Q1, R1, Psi1, acc)
    _add_quad(acc, G1, X1)
    X = np.zeros((n, P))
    for a in range(n):
        for b in range(n1):
            c = K[a, b]
            for p in range(P):
                X[a, p] += c * X1[b, p]
    A, B, C, D, Q, R = c2
    _linear_stage(X, dW, k_r, dt, A, B, C, D, Q, R, Psi2, acc)
    _add_quad(acc, G, X)
    return 0.5 * acc


def _quad(x, M):
    return np.sum((x @ M) * x, axis=1)


def brownian_increments(seed, first_path, n_block, n_steps, dt, antithetic=False):
    """(n_block, n_steps) Brownian increments for paths first_path, first_path+1, ..."""
    out = np.empty((n_block, n_steps))
    sq = math.sqrt(dt)
    for j in range(n_block):
        i = first_path + j
        stream, sign = (i // 2, -1.0 if i % 2 else 1.0) if antithetic else (i, 1.0)
        gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))
        gen.standard_normal(out=out[j])
        if sign < 0:
            out[j] = -out[j]
    out *= sq
    return out


def _run_block(model, control, x1, dW, first_path, record):
    """Per-path costs for one block; optionally the traces of its first ``record`` paths."""
    g, k_r = model.grid, model.k
    N, dt = g.n_steps, g.step
    B = dW.shape[0]
    t = model.t
    X1 = np.repeat(x1[None], B, axis=0)
    acc = np.zeros(B)
    traces = None
    if record:
        traces = ([], [], [], [])

    def check(X, step):
        if not np.all(np.isfinite(X)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
            raise SimulationError(
                f"non-finite state on path {first_path + bad} at step {step}",
                path=first_path + bad, step=step)

    def controls(tk, X, m_expected):
        u = np.asarray(control(tk, X), dtype=float)
        if u.shape != (X.shape[0], m_expected):
            raise DomainError(f"control returned shape {u.shape}, expected {(X.shape[0], m_expected)}")
        return u

    m = model.spec.m
    c1 = model.stage1
    for k in range(k_r + 1):
        u = controls(t[k], X1, m)
        if record:
            traces[0].append(X1[:record].copy())
            traces[1].append(u[:record].copy())
        w = 0.5 if k in (0, k_r) else 1.0
        if k_r > 0:
            acc += w * dt * (_quad(X1, c1["Q1"][k]) + _quad(u, c1["R1"][k]))
        if k == k_r:
            break
        drift = X1 @ c1["A1"][k].T + u @ c1["B1"][k].T
        diff = X1 @ c1["C1"][k].T + u @ c1["D1"][k].T
        X1 = X1 + drift * dt + diff * dW[:, k:k + 1]
        check(X1, k + 1)
    acc += _quad(X1, model.G1)
    X = X1 @ model.K.T
    c2 = model.stage2
    for j, k in enumerate(range(k_r, N + 1)):
        u = controls(t[k], X, m)
        if record:
            traces[2].append(X[:record].copy())
            traces[3].append(u[:record].copy())
        w = 0.5 if k in (k_r, N) else 1.0
        if N > k_r:
            acc += w * dt * (_quad(X, c2["Q"][j]) + _quad(u, c2["R"][j]))
        if k == N:
            break
        drift = X @ c2["A"][j].T + u @ c2["B"][j].T
        diff = X @ c2["C"][j].T + u @ c2["D"][j].T
        X = X + drift * dt + diff * dW[:, k:k + 1]
        check(X, k + 1)
    acc += _quad(X, model.G)
    costs = 0.5 * acc
    if record:
        traces = tuple(np.stack(tr, axis=1) for tr in traces)
    return costs, traces


def _snap(spec, r, n_steps):
    grid = TimeGrid(0.0, spec.T, n_steps)
    if not -1e-12 * spec.T <= r <= spec.T * (1 + 1e-12):
        raise DomainError(f"switch time r={r} outside [0, {spec.T}]")
    k, r_used = grid.snap(min(max(r, 0.0), spec.T))
    return grid, k, r_used


def path_costs(spec, r, control, x1, cfg: SimConfig, record=0):
    """Per-path costs (in path order) and, if ``record`` > 0, a PathSample of the first paths."""
    if spec.n2 < 1:
        raise DomainError("simulation needs n2 >= 1")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x1.shape != (spec.n1,):
        raise DomainError(f"x1 has shape {x1.shape}, expected ({spec.n1},)")
    grid, k_r, r_used = _snap(spec, r, cfg.n_steps)
    model = _Model(spec, grid, k_r)
    fast = None
    if hasattr(control, "node_gains"):
        nodes = grid.nodes
        fast = (model.stacked(1), model.stacked(2),
                np.ascontiguousarray(control.node_gains(nodes[: k_r + 1], 1)),
                np.ascontiguousarray(control.node_gains(nodes[k_r:], 2)),
                np.ascontiguousarray(model.G1), np.ascontiguousarray(model.K),
                np.ascontiguousarray(model.G))
    starts = list(range(0, cfg.n_paths, BLOCK_SIZE))

    def work(start):
        n_block = min(BLOCK_SIZE, cfg.n_paths - start)
        dW = brownian_increments(cfg.seed, start, n_block, cfg.n_steps, grid.step,
                                 cfg.antithetic)
        rec = min(record, n_block) if start == 0 else 0
        if fast is None:
            return _run_block(model, control, x1, dW, start, rec)
        costs = _linear_block(x1, np.ascontiguousarray(dW.T), k_r, grid.step, *fast)
        bad = np.flatnonzero(~np.isfinite(costs))
        if bad.size:
            # rerun the offending path on the checked loop to report the step
            i = int(bad[0])
            _run_block(model, control, x1, dW[i:i + 1], start + i, 0)
            raise SimulationError(f"non-finite cost on path {start + i}", path=start + i, step=None)
        traces = _run_block(model, control, x1, dW[:rec], start, rec)[1] if rec else None
        return costs, traces

    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]
    costs = np.concatenate([c for c, _ in results])
    sample = None
    if record:
        X1, U1, X, U = results[0][1]
        sample = PathSample(grid, k_r, X1, U1, X, U)
    return costs, r_used, sample


def _mean_and_se(costs, antithetic):
    if antithetic:
        costs = 0.5 * (costs[0::2] + costs[1::2])
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(len(costs))) if len(costs) > 1 else 0.0
    return mean, se


def simulate_with_control(spec, r, control: Callable, x1, cfg: SimConfig) -> SimReport:
    """Monte Carlo estimate of the cost of an arbitrary feedback law."""
    costs, r_used, _ = path_costs(spec, r, control, x1, cfg)
    mean, se = _mean_and_se(costs, cfg.antithetic)
    return SimReport(mean, se, cfg.n_paths, r_used, cfg.n_steps, cfg.seed, cfg.antithetic)


def _matching_stage1(spec, stage2, stage1, r_used, n_steps):
    if stage1 is not None and abs(stage1.r - r_used) <= 1e-12 * spec.T:
        return stage1
    return solve_stage1(spec, r_used, stage2.P_at(r_used), n_steps)


def simulate_closed_loop(spec, r, stage2: RiccatiSolution, stage1: Stage1Solution, x1,
                         cfg: SimConfig, n_trace=10):
    """Cost of the optimal feedback law, with maximum-principle residuals on traced paths.

    When snapping moves r off ``stage1.r`` the stage-1 equation is re-solved at
    the snapped time.  Returns (SimReport, PathSample).
    """
    _, _, r_used = _snap(spec, r, cfg.n_steps)
    stage1 = _matching_stage1(spec, stage2, stage1, r_used, cfg.n_steps)
    control = OptimalFeedback(spec, stage2, stage1)
    costs, r_used, sample = path_costs(spec, r_used, control, x1, cfg, record=n_trace)
    mean, se = _mean_and_se(costs, cfg.antithetic)
    st = stationarity_check(spec, r_used, stage2, stage1, sample) if sample is not None else None
    report = SimReport(
        mean, se, cfg.n_paths, r_used, cfg.n_steps, cfg.seed, cfg.antithetic,
        stationarity_max_residual=None if st is None else st.max_residual,
        terminal_adjoint_residual=None if st is None else st.terminal_residual,
        jump_adjoint_residual=None if st is None else st.jump_residual,
    )
    return report, sample


def reconstruct_adjoint(spec, stage2, stage1, sample: PathSample, path=0) -> AdjointPath:
    """p = -P X, q = -P (C X + D u) on [r, T] and the stage-1 analogues on [0, r]."""
    t1, t2 = sample.t1, sample.t2
    X1, U1 = sample.X1[path], sample.U1[path]
    X, U = sample.X[path], sample.U[path]
    P2 = np.stack([stage2.P_at(t) for t in t2])
    P1 = np.stack([stage1.P_at(t) for t in t1])
    C = np.stack([spec.at("C", t) for t in t2])
    D = np.stack([spec.at("D", t) for t in t2])
    C1 = np.stack([spec.at("C1", t) for t in t1])
    D1 = np.stack([spec.at("D1", t) for t in t1])
    p = -np.einsum("kij,kj->ki", P2, X)
    q = -np.einsum("kij,kj->ki", P2, np.einsum("kij,kj->ki", C, X) + np.einsum("kij,kj->ki", D, U))
    p1 = -np.einsum("kij,kj->ki", P1, X1)
    q1 = -np.einsum("kij,kj->ki", P1,
                    np.einsum("kij,kj->ki", C1, X1) + np.einsum("kij,kj->ki", D1, U1))
    return AdjointPath(p=p, q=q, p1=p1, q1=q1)


def stationarity_check(spec, r, stage2, stage1, sample: PathSample) -> StationarityResult:
    """Residuals of R u = B'p + D'q (both stages) and of the adjoint end conditions."""
    if abs(sample.r - r) > 1e-12 * spec.T or abs(stage1.r - sample.r) > 1e-12 * spec.T:
        raise DomainError(f"sample switches at {sample.r}, solutions at {stage1.r}, r={r}")
    if sample.X.shape[2] != spec.n or sample.X1.shape[2] != spec.n1:
        raise DomainError("sample dimensions do not match the spec")
    t1, t2 = sample.t1, sample.t2
    res2, res1 = [], []
    term = jump = 0.0
    B = [spec.at("B", t) for t in t2]
    D = [spec.at("D", t) for t in t2]
    R = [spec.at("R", t) for t in t2]
    B1 = [spec.at("B1", t) for t in t1]
    D1 = [spec.at("D1", t) for t in t1]
    R1 = [spec.at("R1", t) for t in t1]
    jump_matrix = stitched_terminal(spec, sample.r, stage2.P_at(sample.r))
    for path in range(sample.X.shape[0]):
        adj = reconstruct_adjoint(spec, stage2, stage1, sample, path)
        U, U1 = sample.U[path], sample.U1[path]
        res2.append([R[k] @ U[k] - B[k].T @ adj.p[k] - D[k].T @ adj.q[k]
                     for k in range(len(t2))])
        res1.append([R1[k] @ U1[k] - B1[k].T @ adj.p1[k] - D1[k].T @ adj.q1[k]
                     for k in range(len(t1))])
        term = max(term, float(np.max(np.abs(adj.p[-1] + spec.G @ sample.X[path, -1]))))
        jump = max(jump, float(np.max(np.abs(adj.p1[-1] + jump_matrix @ sample.X1[path, -1]))))
    res2 = np.abs(np.array(res2))
    res1 = np.abs(np.array(res1))
    max_state = float(max(np.max(np.abs(sample.X)), np.max(np.abs(sample.X1))))
    return StationarityResult(
        stage2_max_residual=float(res2.max()) if res2.size else 0.0,
        stage1_max_residual=float(res1.max()) if res1.size else 0.0,
        terminal_residual=term, jump_residual=jump, max_state=max_state,
        stage2_residuals=res2, stage1_residuals=res1,
    )


def compare_controls(spec, r, control_a, control_b, x1, cfg: SimConfig):
    """Mean paired cost difference J(a) - J(b) under common random numbers, with its std error."""
    ca, _, _ = path_costs(spec, r, control_a, x1, cfg)
    cb, _, _ = path_costs(spec, r, control_b, x1, cfg)
    return _mean_and_se(ca - cb, cfg.antithetic)
