"""Backward matrix Riccati solves for both stages and the feedback laws they induce.

Stage 2 solves, on [0, T],

    P' + PA + A'P + C'PC + Q - (PB + C'PD)(R + D'PD)^{-1}(B'P + D'PC) = 0,  P(T) = G,

and stage 1 solves the same equation with the stage-1 coefficients on [0, r]
from the stitched terminal value K(r)'P(r)K(r) + G1(r).  The optimal control is
u = -Psi X with Psi = (R + D'PD)^{-1}(B'P + D'PC).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import DomainError, RiccatiBlowUp
from .model import ProblemSpec, TimeGrid

DELTA_PD = 1e-10
_ZERO_TIME = np.zeros(1)
_ZERO_TIME.setflags(write=False)


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def riccati_rhs(P, A, B, C, D, Q, R):
    """Time derivative of P dictated by the Riccati equation (P' = -[...])."""
    PC = P @ C
    S = B.T @ P + D.T @ PC
    N = R + D.T @ P @ D
    gain = np.linalg.solve(N, S)
    return -(P @ A + A.T @ P + C.T @ PC + Q - S.T @ gain)


@numba.njit(cache=True)
def _pick(arr, i):
    return arr[0] if arr.shape[0] == 1 else arr[i]


@numba.njit(cache=True)
def _rhs_nb(P, A, B, C, D, Q, R):
    PC = P @ C
    S = B.T @ P + D.T @ PC
    N = R + D.T @ P @ D
    gain = np.linalg.solve(N, S)
    PA = P @ A
    return -(PA + PA.T + C.T @ PC + Q - S.T @ gain)


@numba.njit(cache=True)
def _rhs_at(P, i, A, B, C, D, Q, R):
    return _rhs_nb(P, _pick(A, i), _pick(B, i), _pick(C, i), _pick(D, i),
                   _pick(Q, i), _pick(R, i))


@numba.njit(cache=True)
def _rk4_backward(terminal, times, A, B, C, D, Q, R):
    """Classical RK4 backwards; ``times`` holds nodes at even and midpoints at odd indices.

    Coefficient arrays have one sample (constant) or one per entry of ``times``.
    Every stage argument and every update is symmetrized.  Returns node values,
    node derivatives and the first node that went non-finite (-1 if none).
    """
    n_nodes = (times.shape[0] + 1) // 2
    n = terminal.shape[0]
    P = np.empty((n_nodes, n, n))
    dP = np.empty((n_nodes, n, n))
    P[n_nodes - 1] = terminal
    cur = terminal.copy()
    for k in range(n_nodes - 1, 0, -1):
        h = times[2 * k] - times[2 * k - 2]
        k1 = _rhs_at(cur, 2 * k, A, B, C, D, Q, R)
        if not np.all(np.isfinite(k1)):
            return P, dP, k
        dP[k] = k1
        y = cur - 0.5 * h * k1
        k2 = _rhs_at(0.5 * (y + y.T), 2 * k - 1, A, B, C, D, Q, R)
        y = cur - 0.5 * h * k2
        k3 = _rhs_at(0.5 * (y + y.T), 2 * k - 1, A, B, C, D, Q, R)
        y = cur - h * k3
        k4 = _rhs_at(0.5 * (y + y.T), 2 * k - 2, A, B, C, D, Q, R)
        y = cur - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        cur = 0.5 * (y + y.T)
        P[k - 1] = cur
        if not np.all(np.isfinite(cur)):
            return P, dP, k - 1
    d0 = _rhs_at(P[0], 0, A, B, C, D, Q, R)
    if not np.all(np.isfinite(d0)):
        return P, dP, 0
    dP[0] = d0
    return P, dP, -1


def _double_times(nodes):
    times = np.empty(2 * len(nodes) - 1)
    times[0::2] = nodes
    times[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
    return times


def _coeff_stack(spec, name, times):
    # always a fresh writable C-contiguous array so the kernel compiles one signature
    tab = getattr(spec, name)
    if tab.is_constant:
        return np.array(tab.samples, dtype=np.float64, order="C")
    return np.array(np.stack([spec.at(name, t) for t in times]), dtype=np.float64, order="C")


class _PiecewiseSolution:
    """Shared node-lookup logic for the two solution types."""

    times: np.ndarray

    def _locate(self, t):
        times = self.times
        span = max(times[-1] - times[0], 1.0)
        tol = 1e-12 * span
        if t < times[0] - tol or t > times[-1] + tol:
            raise DomainError(f"t={t} outside the solution span [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return 0, 0.0
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2)
        for j in (k, k + 1):
            if abs(times[j] - t) <= tol:
                return j, 0.0
        return k, (t - times[k]) / (times[k + 1] - times[k])

    def P_at(self, t):
        """P(t): node value at nodes, cubic Hermite (using P') in between."""
        k, w = self._locate(t)
        if w == 0.0:
            return self.P[k]
        h = self.times[k + 1] - self.times[k]
        w2, w3 = w * w, w * w * w
        return ((2 * w3 - 3 * w2 + 1) * self.P[k] + (w3 - 2 * w2 + w) * h * self.dP[k]
                + (-2 * w3 + 3 * w2) * self.P[k + 1] + (w3 - w2) * h * self.dP[k + 1])

    def gain_at(self, t):
        k, w = self._locate(t)
        if w == 0.0:
            return self.Psi[k]
        return (1.0 - w) * self.Psi[k] + w * self.Psi[k + 1]


@dataclass(frozen=True, eq=False)
class RiccatiSolution(_PiecewiseSolution):
    """Stage-2 solution on a uniform grid of [0, T]; P[-1] is G."""

    grid: TimeGrid
    P: np.ndarray
    Psi: np.ndarray
    dP: np.ndarray

    @property
    def times(self):
        return self.grid.nodes


@dataclass(frozen=True, eq=False)
class Stage1Solution(_PiecewiseSolution):
    """Stage-1 solution on [0, r]; a single node when r = 0."""

    r: float
    grid: TimeGrid | None
    P: np.ndarray
    Psi: np.ndarray
    dP: np.ndarray
    terminal: np.ndarray

    @property
    def times(self):
        if self.grid is None:
            return _ZERO_TIME
        return self.grid.nodes

    @property
    def P0(self):
        return self.P[0]


def _blow_up(label, k, t, lo, r=None):
    where = f"t={t:.6g}" + (f", r={r:.6g}" if r is not None else "")
    return RiccatiBlowUp(
        f"Riccati blow-up in {label} at node {k} ({where}): "
        f"min eigenvalue of R + D'PD is {lo:.3g}", node=k, time=t, r=r)


def _node_gains(P, B, C, D, R, nodes, label, r=None, offset=0, delta_pd=DELTA_PD):
    """Psi at every node; raises on the latest node (first in backward time) where
    the smallest eigenvalue of R + D'PD falls below delta_pd."""
    DT = np.swapaxes(D, -1, -2)
    S = np.swapaxes(B, -1, -2) @ P + DT @ P @ C
    N = _sym(R + DT @ P @ D)
    with np.errstate(invalid="ignore"):
        lo = np.linalg.eigvalsh(N)[:, 0] if np.all(np.isfinite(N)) else None
    if lo is None:
        lo = np.array([np.linalg.eigvalsh(x)[0] if np.all(np.isfinite(x)) else np.nan
                       for x in N])
    bad = np.flatnonzero(~(lo >= delta_pd))
    if bad.size:
        k = int(bad[-1])
        raise _blow_up(label, k + offset, nodes[k], lo[k], r)
    return np.linalg.solve(N, S)


def _solve(spec, names, terminal, grid, label, r=None, delta_pd=DELTA_PD):
    nodes = grid.nodes
    times = _double_times(nodes)
    coeffs = [_coeff_stack(spec, nm, times) for nm in names]
    try:
        P, dP, bad = _rk4_backward(np.array(terminal, dtype=np.float64, order="C"), times, *coeffs)
    except np.linalg.LinAlgError as exc:
        raise RiccatiBlowUp(f"Riccati blow-up in {label}: R + D'PD became singular ({exc})",
                            r=r) from exc
    node_coeffs = [c if c.shape[0] == 1 else c[0::2] for c in coeffs]
    _, B, C, D, _, R = node_coeffs
    if bad >= 0:
        # report the first node (in backward time) that lost definiteness, or the
        # non-finite node itself when definiteness held until then
        good = slice(bad + 1, None)
        pick = lambda c: c if c.shape[0] == 1 else c[good]
        _node_gains(P[good], pick(B), pick(C), pick(D), pick(R), nodes[good], label, r,
                    offset=bad + 1, delta_pd=delta_pd)
        raise _blow_up(label, bad, nodes[bad], float("nan"), r)
    Psi = _node_gains(P, B, C, D, R, nodes, label, r, delta_pd=delta_pd)
    for arr in (P, dP, Psi):
        arr.setflags(write=False)
    return P, dP, Psi


def solve_stage2(spec: ProblemSpec, n_steps: int = 2000, delta_pd=DELTA_PD) -> RiccatiSolution:
    """Integrate the stage-2 Riccati equation backward from P(T) = G with RK4."""
    grid = TimeGrid(0.0, spec.T, n_steps)
    P, dP, Psi = _solve(spec, ("A", "B", "C", "D", "Q", "R"), _sym(spec.G), grid, "stage 2",
                        delta_pd=delta_pd)
    return RiccatiSolution(grid=grid, P=P, Psi=Psi, dP=dP)


def stage1_steps(r, T, n_steps):
    """Number of RK4 steps on [0, r]: proportional to r / T, at least 2."""
    return max(2, int(math.ceil(n_steps * r / T - 1e-9)))


def stitched_terminal(spec: ProblemSpec, r: float, P_at_r) -> np.ndarray:
    """K(r)' P(r) K(r) + G1(r)."""
    K = spec.at("K", r)
    return _sym(K.T @ np.asarray(P_at_r, dtype=float) @ K + spec.at("G1", r))


def solve_stage1(spec: ProblemSpec, r: float, P_at_r, n_steps: int = 2000,
                 delta_pd=DELTA_PD) -> Stage1Solution:
    """Integrate the stage-1 Riccati equation on [0, r] from the stitched terminal value."""
    T = spec.T
    if not (-1e-12 * T <= r <= T * (1 + 1e-12)):
        raise DomainError(f"switch time r={r} outside [0, {T}]")
    r = min(max(float(r), 0.0), T)
    P_at_r = np.asarray(P_at_r, dtype=float)
    if P_at_r.shape != (spec.n, spec.n):
        raise DomainError(f"P(r) has shape {P_at_r.shape}, expected {(spec.n, spec.n)}")
    terminal = stitched_terminal(spec, r, P_at_r)
    terminal.setflags(write=False)
    names = ("A1", "B1", "C1", "D1", "Q1", "R1")
    if r == 0.0:
        A, B, C, D, Q, R = (spec.at(nm, 0.0) for nm in names)
        Psi = _node_gains(terminal[None], B, C, D, R, np.array([0.0]), "stage 1", r,
                          delta_pd=delta_pd)
        dP = riccati_rhs(terminal, A, B, C, D, Q, R)[None]
        return Stage1Solution(r=0.0, grid=None, P=terminal[None], Psi=Psi, dP=dP,
                              terminal=terminal)
    grid = TimeGrid(0.0, r, stage1_steps(r, T, n_steps))
    P, dP, Psi = _solve(spec, names, terminal, grid, "stage 1", r=r, delta_pd=delta_pd)
    return Stage1Solution(r=r, grid=grid, P=P, Psi=Psi, dP=dP, terminal=terminal)


def feedback_gain(solution, t: float) -> np.ndarray:
    """Gain Psi(t), linearly interpolated between nodes; the control is u = -Psi(t) x."""
    return solution.gain_at(t)


def value_at_zero(stage1: Stage1Solution, x1) -> float:
    """Optimal cost 0.5 * <P1(0) x1, x1>."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x1.shape != (stage1.P0.shape[0],):
        raise DomainError(f"x1 has shape {x1.shape}, expected ({stage1.P0.shape[0]},)")
    return 0.5 * float(x1 @ stage1.P0 @ x1)


def write_solution_csv(solution, path):
    """Write t, P (row-major) and Psi (row-major) per node."""
    n = solution.P.shape[1]
    m = solution.Psi.shape[1]
    header = ["t"] + [f"P_{i}{j}" for i in range(n) for j in range(n)] \
        + [f"Psi_{i}{j}" for i in range(m) for j in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, P, Psi in zip(solution.times, solution.P, solution.Psi):
            w.writerow([f"{v:.17g}" for v in (t, *P.ravel(), *Psi.ravel())])
