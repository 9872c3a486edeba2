"""Choosing the deterministic switch time.

The optimal switch time minimizes phi(r) = <P1^r(0) x1, x1> over r in [0, T].
phi need not be convex or monotone, so the search evaluates a coarse grid,
keeps the best bracket and refines it by golden-section search.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .closed_form import (f_eval, f_prime, scalar_params_from_spec, scalar_spec,
                          switch_bracket)
from .exceptions import DomainError, RiccatiBlowUp
from .riccati import DELTA_PD, solve_stage1, solve_stage2

INV_PHI = (math.sqrt(5) - 1) / 2


class Classification(str, Enum):
    INTERIOR = "Interior"
    LEFT = "LeftBoundary"
    RIGHT = "RightBoundary"


@dataclass(frozen=True, eq=False)
class ValueCurve:
    r_nodes: np.ndarray
    phi: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "phi"])
            for r, v in zip(self.r_nodes, self.phi):
                w.writerow([f"{r:.17g}", f"{v:.17g}"])


@dataclass(frozen=True, eq=False)
class OptimalTimeResult:
    r_bar: float
    phi_min: float
    classification: Classification
    sensitivity_at_opt: float
    sensitivity_method: str
    curve: ValueCurve
    bracket: Optional[float] = None  # F1(K^2 P2 + G1) - K^2 F2(P2) at r_bar, scalar problems
    bracket_scale: Optional[float] = None
    n_evaluations: int = 0

    def as_dict(self):
        d = {
            "r_bar": self.r_bar,
            "phi_min": self.phi_min,
            "classification": self.classification.value,
            "sensitivity_at_opt": self.sensitivity_at_opt,
            "sensitivity_method": self.sensitivity_method,
            "coarse_points": len(self.curve.r_nodes),
            "n_evaluations": self.n_evaluations,
        }
        if self.bracket is not None:
            d["bracket"] = self.bracket
        return d


class _Phi:
    """phi(r) for a fixed spec and x1, reusing one stage-2 solve."""

    def __init__(self, spec, x1, n_steps=2000, stage2=None, delta_pd=DELTA_PD):
        self.spec = spec
        self.x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        if self.x1.shape != (spec.n1,):
            raise DomainError(f"x1 has shape {self.x1.shape}, expected ({spec.n1},)")
        self.n_steps = n_steps
        self.delta_pd = delta_pd
        self.stage2 = stage2 if stage2 is not None else solve_stage2(spec, n_steps, delta_pd)
        self.calls = 0

    def p1_zero(self, r):
        try:
            s1 = solve_stage1(self.spec, r, self.stage2.P_at(r), self.n_steps, self.delta_pd)
        except RiccatiBlowUp as exc:
            raise RiccatiBlowUp(f"{exc} [while evaluating phi at r={r:.17g}]",
                                node=exc.node, time=exc.time, r=r) from exc
        return s1.P0

    def __call__(self, r):
        self.calls += 1
        return float(self.x1 @ self.p1_zero(r) @ self.x1)


def _evaluate(phi, r_nodes, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(phi, r_nodes)))
    return np.array([phi(r) for r in r_nodes])


def value_curve(spec, x1, r_nodes, n_steps=2000, stage2=None, workers=None,
                delta_pd=DELTA_PD) -> ValueCurve:
    """phi(r) = <P1^r(0) x1, x1> at each r (no 1/2 factor)."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    if r_nodes.ndim != 1 or np.any(np.diff(r_nodes) <= 0):
        raise DomainError("r_nodes must be a strictly increasing 1-D sequence")
    phi = _Phi(spec, x1, n_steps, stage2, delta_pd)
    return ValueCurve(r_nodes, _evaluate(phi, r_nodes, workers))


def golden_section(f, a, b, tol):
    """Shrink [a, b] around a local minimum of f until its width is at most tol.

    Returns (x_best, f_best) over every point evaluated.
    """
    best = (None, math.inf)

    def ev(x):
        nonlocal best
        y = f(x)
        if y < best[1] or (y == best[1] and x < best[0]):
            best = (x, y)
        return y

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = ev(d)
    return best


def sensitivity_fd(spec, x1, r, h=None, n_steps=2000, stage2=None, delta_pd=DELTA_PD):
    """Finite-difference d phi / d r: central inside, one-sided within h of 0 or T."""
    T = spec.T
    h = 1e-4 * T if h is None else h
    if not 0 <= r <= T:
        raise DomainError(f"r={r} outside [0, {T}]")
    phi = _Phi(spec, x1, n_steps, stage2, delta_pd)
    if r - h >= 0 and r + h <= T:
        return (phi(r + h) - phi(r - h)) / (2 * h)
    if r + h <= T:
        return (phi(r + h) - phi(r)) / h
    return (phi(r) - phi(r - h)) / h


def sensitivity_scalar(params, r, p2=None, n_steps=2000, delta_pd=DELTA_PD):
    """d/dr P1^r(0) for the scalar problem, from the linearized stage-1 equation.

    Pi = exp(int_0^r F1'(P1^r(s)) ds) * [F1(K^2 P2(r) + G1) - K^2 F2(P2(r))],
    with the integral by the trapezoid rule on the stage-1 grid.  ``p2`` is a
    stage-2 solution of ``scalar_spec(params)`` (solved here if omitted).
    """
    T = params.T
    if not 0 < r < T:
        raise DomainError(f"sensitivity_scalar needs 0 < r < T, got r={r}")
    spec = scalar_spec(params)
    if p2 is None:
        p2 = solve_stage2(spec, n_steps, delta_pd)
    P_r = p2.P_at(r)
    s1 = solve_stage1(spec, r, P_r, n_steps, delta_pd)
    slope = f_prime(1, s1.P[:, 0, 0], params)
    integral = np.trapezoid(slope, s1.times)
    return math.exp(integral) * switch_bracket(P_r[1, 1], params)


def _classify(r, T, tol_r):
    if r < tol_r:
        return Classification.LEFT
    if r > T - tol_r:
        return Classification.RIGHT
    return Classification.INTERIOR


def find_optimal_time(spec, x1, coarse_points=65, tol_r=None, n_steps=2000,
                      stage2=None, workers=None, delta_pd=DELTA_PD) -> OptimalTimeResult:
    """Minimize phi over [0, T]: coarse grid, best bracket, golden-section refinement.

    Ties go to the smallest r.  The returned r_bar is the best point seen, so
    phi_min never exceeds the coarse minimum.
    """
    T = spec.T
    tol_r = 1e-6 * T if tol_r is None else tol_r
    if coarse_points < 3:
        raise DomainError("coarse_points must be at least 3")
    phi = _Phi(spec, x1, n_steps, stage2, delta_pd)
    if not np.any(phi.x1):
        raise DomainError("x1 must be nonzero")
    r_nodes = np.linspace(0.0, T, coarse_points)
    values = _evaluate(phi, r_nodes, workers)
    i = int(np.argmin(values))
    r_best, f_best = float(r_nodes[i]), float(values[i])
    lo, hi = r_nodes[max(i - 1, 0)], r_nodes[min(i + 1, coarse_points - 1)]
    r_gs, f_gs = golden_section(phi, lo, hi, tol_r)
    if f_gs < f_best:
        r_best, f_best = r_gs, f_gs
    cls = _classify(r_best, T, tol_r)

    params = scalar_params_from_spec(spec)
    bracket = scale = None
    if params is not None:
        P2 = phi.stage2.P_at(r_best)[1, 1]
        bracket = switch_bracket(P2, params)
        K2 = params.K ** 2
        scale = 1.0 + abs(f_eval(1, K2 * P2 + params.G1, params)) + abs(K2 * f_eval(2, P2, params))
    if params is not None and cls is Classification.INTERIOR:
        sens = sensitivity_scalar(params, r_best, phi.stage2, n_steps, delta_pd)
        method = "scalar"
    else:
        # one-sided at the boundaries; unit x1 for scalar problems so the value is d P1 / d r
        x_fd = np.ones(1) if params is not None else phi.x1
        r_fd = 0.0 if cls is Classification.LEFT else T if cls is Classification.RIGHT else r_best
        sens = sensitivity_fd(spec, x_fd, r_fd, n_steps=n_steps, stage2=phi.stage2,
                              delta_pd=delta_pd)
        method = "finite_difference"
    return OptimalTimeResult(
        r_bar=r_best, phi_min=f_best, classification=cls, sensitivity_at_opt=sens,
        sensitivity_method=method, curve=ValueCurve(r_nodes, values),
        bracket=bracket, bracket_scale=scale, n_evaluations=phi.calls,
    )
