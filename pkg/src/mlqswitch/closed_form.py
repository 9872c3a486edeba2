"""Analytic solutions used as oracles for the numerical solvers.

Two families are covered:

* the scalar constant-coefficient problem (n1 = n2 = m = 1, first block frozen
  after the switch), where both Riccati equations reduce to P' + F_i(P) = 0;
* the 3-state example with a double-integrator first stage, whose stage-1
  Hamiltonian matrix is nilpotent so the Riccati solution is available in
  closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import DegenerateTerminal, DomainError
from .model import ProblemSpec, TimeGrid, build_stopped_system

CERT_RTOL = 1e-9


@dataclass(frozen=True)
class Scalar1DParams:
    A1: float
    B1: float
    C1: float
    D1: float
    Q1: float
    R1: float
    G1: float
    A2: float
    B2: float
    C2: float
    D2: float
    Q2: float
    R2: float
    G2: float
    K: float
    T: float

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.R1 > 0 and self.R2 > 0):
            raise DomainError("R1 and R2 must be positive")
        if min(self.Q1, self.Q2, self.G1, self.G2) < 0:
            raise DomainError("Q1, Q2, G1, G2 must be nonnegative")
        if self.K == 0:
            raise DomainError("K must be nonzero")
        if not self.T > 0:
            raise DomainError("T must be positive")

    def stage(self, i):
        """(A, B, C, D, Q, R) of stage i."""
        if i == 1:
            return self.A1, self.B1, self.C1, self.D1, self.Q1, self.R1
        if i == 2:
            return self.A2, self.B2, self.C2, self.D2, self.Q2, self.R2
        raise DomainError(f"stage must be 1 or 2, got {i}")

    @property
    def is_special_case(self):
        """D2 = G1 = 0, R2 = K = 1, B2 != 0: the case with explicit P2 and Theta."""
        return self.D2 == 0 and self.G1 == 0 and self.R2 == 1 and self.K == 1 and self.B2 != 0

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return Scalar1DParams(**d)


@dataclass(frozen=True)
class Example43Params:
    a: float
    g: float
    g1: float
    T: float

    def __post_init__(self):
        if not (self.g > 0 and self.g1 > 0 and self.T > 0):
            raise DomainError("Example data needs g > 0, g1 > 0, T > 0")


def f_eval(stage, P, params: Scalar1DParams):
    """F_i(P) = (2A_i + C_i^2) P + Q_i - (B_i + C_i D_i)^2 P^2 / (R_i + D_i^2 P)."""
    A, B, C, D, Q, R = params.stage(stage)
    P = np.asarray(P, dtype=float)
    den = R + D * D * P
    if np.any(den <= 0):
        raise DomainError(f"R{stage} + D{stage}^2 P must be positive")
    out = (2 * A + C * C) * P + Q - (B + C * D) ** 2 * P * P / den
    return float(out) if out.ndim == 0 else out


def f_prime(stage, P, params: Scalar1DParams):
    """dF_i/dP = (2A_i + C_i^2) - (B_i + C_i D_i)^2 P (2R_i + D_i^2 P) / (R_i + D_i^2 P)^2."""
    A, B, C, D, Q, R = params.stage(stage)
    P = np.asarray(P, dtype=float)
    den = R + D * D * P
    if np.any(den <= 0):
        raise DomainError(f"R{stage} + D{stage}^2 P must be positive")
    out = (2 * A + C * C) - (B + C * D) ** 2 * P * (2 * R + D * D * P) / (den * den)
    return float(out) if out.ndim == 0 else out


def switch_bracket(P2_r, params: Scalar1DParams):
    """F1(K^2 P2(r) + G1) - K^2 F2(P2(r)); its sign is the sign of d/dr P1^r(0)."""
    K2 = params.K ** 2
    return f_eval(1, K2 * P2_r + params.G1, params) - K2 * f_eval(2, P2_r, params)


def lambda_pm(params: Scalar1DParams):
    """Roots lambda_+ >= lambda_- of B2^2 P^2 - (2A2 + C2^2) P - Q2."""
    B2 = params.B2
    if B2 == 0:
        raise DomainError("lambda_pm needs B2 != 0")
    lin = 2 * params.A2 + params.C2 ** 2
    root = math.sqrt(lin * lin + 4 * B2 * B2 * params.Q2)
    den = 2 * B2 * B2
    return (lin + root) / den, (lin - root) / den


def _check_p2_case(params):
    if params.D2 != 0 or params.R2 != 1 or params.B2 == 0:
        raise DomainError("explicit P2 needs D2 = 0, R2 = 1, B2 != 0")


def degenerate_terminal(params: Scalar1DParams):
    """'lambda_plus' / 'lambda_minus' if G2 equals that root (P2 is then constant), else None."""
    lp, lm = lambda_pm(params)
    for which, lam in (("lambda_plus", lp), ("lambda_minus", lm)):
        if abs(params.G2 - lam) <= 1e-12 * max(1.0, abs(lam)):
            return which
    return None


def p2_closed_general(t, params: Scalar1DParams):
    """Stage-2 scalar Riccati solution for D2 = 0, R2 = 1.

    P2(t) = [l+(G2 - l-) e^{E} - l-(G2 - l+)] / [(G2 - l-) e^{E} - (G2 - l+)]
    with E = B2^2 (l+ - l-)(T - t).  It is evaluated as
    l+ + (G2 - l+) / (1 + (G2 - l-) B2^2 (T - t) expm1(E)/E), which stays
    accurate as l+ - l- -> 0 (the double root) and saturates to l+ for large E.
    Raises DegenerateTerminal when G2 = lambda_+ or lambda_-.
    """
    _check_p2_case(params)
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12 * params.T) or np.any(t > params.T * (1 + 1e-12)):
        raise DomainError(f"t outside [0, {params.T}]")
    which = degenerate_terminal(params)
    if which is not None:
        raise DegenerateTerminal(
            f"G2 = {which}: the solution is the constant P2 = G2", which, params.G2)
    lp, lm = lambda_pm(params)
    G2 = params.G2
    tau = params.B2 ** 2 * (params.T - t)
    E = tau * (lp - lm)
    with np.errstate(over="ignore", invalid="ignore"):
        growth = np.where(E > 1e-12, np.expm1(E) / np.where(E > 1e-12, E, 1.0), 1.0 + 0.5 * E)
    out = np.where(tau == 0, G2, lp + (G2 - lp) / (1.0 + (G2 - lm) * tau * growth))
    return float(out) if out.ndim == 0 else out


def p2_initial_ordering(params: Scalar1DParams):
    """'above' if P2(0) > G2 (G2 strictly between the roots), 'below' if G2 is outside them."""
    lp, lm = lambda_pm(params)
    if degenerate_terminal(params):
        return "equal"
    return "above" if lm < params.G2 < lp else "below"


def p2_closed_ex43(t, params: Example43Params, r: float = 0.0):
    """Scalar stage-2 solution of P' + 2aP - P^2 = 0, P(T) = g, on [r, T].

    Written as g / (e^{-x} + g (T - t) (1 - e^{-x}) / x) with x = 2a(T - t),
    which covers a = 0 and never forms products of order a.
    """
    t = np.asarray(t, dtype=float)
    T, a, g = params.T, params.a, params.g
    if np.any(t < r - 1e-12 * T) or np.any(t > T * (1 + 1e-12)):
        raise DomainError(f"t outside [{r}, {T}]")
    x = 2 * a * (T - t)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        small = np.abs(x) < 1e-8
        damp = np.where(small, 1.0 - 0.5 * x, -np.expm1(-x) / np.where(small, 1.0, x))
        out = g / (np.exp(-x) + g * (T - t) * damp)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ThetaResult:
    coeffs: tuple  # highest degree first, as for numpy.polyval
    p_plus: Optional[float]
    reason: str = ""
    special_case: bool = True

    def __call__(self, P):
        return np.polyval(self.coeffs, P)


def theta_and_pplus(params: Scalar1DParams) -> ThetaResult:
    """Cubic Theta with F1(P) - F2(P) = Theta(P) / (R1 + D1^2 P), and its positive root P+."""
    p = params
    dA = 2 * (p.A1 - p.A2) + p.C1 ** 2 - p.C2 ** 2
    b1 = (p.B1 + p.C1 * p.D1) ** 2
    coeffs = (
        p.D1 ** 2 * p.B2 ** 2,
        dA * p.D1 ** 2 + p.R1 * p.B2 ** 2 - b1,
        dA * p.R1 + (p.Q1 - p.Q2) * p.D1 ** 2,
        (p.Q1 - p.Q2) * p.R1,
    )
    special = p.is_special_case
    if not special:
        return ThetaResult(coeffs, None, "needs D2 = G1 = 0, R2 = K = 1, B2 != 0", False)
    if p.D1 != 0 or p.R1 != 1:
        return ThetaResult(coeffs, None, "P+ needs D1 = 0 and R1 = 1")
    if not p.B2 ** 2 < p.B1 ** 2:
        return ThetaResult(coeffs, None, "P+ needs B2^2 < B1^2")
    diff = (2 * p.A1 + p.C1 ** 2) - (2 * p.A2 + p.C2 ** 2)
    dB = p.B1 ** 2 - p.B2 ** 2
    p_plus = (diff + math.sqrt(diff * diff + 4 * dB * p.Q1)) / (2 * dB)
    return ThetaResult(coeffs, p_plus)


# -- the 3-state example with a double-integrator first stage ---------------

_A1_EX = np.array([[0.0, 1.0], [0.0, 0.0]])
_M_EX = np.array([[0.0, 0.0], [0.0, 1.0]])
_J_EX = np.array([[0.0, 1.0], [1.0, 0.0]])


def ex43_hamiltonian(gbar):
    """4x4 matrix [[A1, -M], [-gbar J, -A1']] of the shifted stage-1 equation."""
    return np.block([[_A1_EX, -_M_EX], [-gbar * _J_EX, -_A1_EX.T]])


def ex43_exponential(gbar, s):
    """exp(H s) via its terminating series; H^4 = 0."""
    H = ex43_hamiltonian(gbar)
    H2 = H @ H
    H3 = H2 @ H
    return np.eye(4) + s * H + s * s / 2 * H2 + s ** 3 / 6 * H3


def ex43_gbar(r, params: Example43Params):
    return params.g1 + p2_closed_ex43(r, params, r)


def ex43_p1(t, r, params: Example43Params, method="closed"):
    """Stage-1 solution P1^r(t) of the example.

    ``method="closed"`` uses 3 gbar / (3 + gbar s^3) [[1, s], [s, s^2]] with
    s = r - t; ``method="expm"`` goes through the nilpotent exponential and the
    block inverse of its lower-right part.
    """
    if not (0 <= t <= r + 1e-15 and r <= params.T * (1 + 1e-12)):
        raise DomainError(f"need 0 <= t <= r <= T, got t={t}, r={r}")
    gbar = ex43_gbar(r, params)
    s = r - t
    if method == "closed":
        return 3 * gbar / (3 + gbar * s ** 3) * np.array([[1.0, s], [s, s * s]])
    if method == "expm":
        E = ex43_exponential(gbar, s)
        phi21, phi22 = E[2:, :2], E[2:, 2:]
        shifted = -np.linalg.solve(phi22, phi21)
        Gbar = np.array([[gbar, 0.0], [0.0, 0.0]])
        return shifted + Gbar
    raise ValueError(f"unknown method {method!r}")


def ex43_value(r, x1, params: Example43Params):
    """<P1^r(0) x1, x1> = 3 gbar / (3 + gbar r^3) (x1[0] + r x1[1])^2 (no 1/2 factor)."""
    gbar = ex43_gbar(r, params)
    x1 = np.asarray(x1, dtype=float)
    return 3 * gbar / (3 + gbar * r ** 3) * (x1[0] + r * x1[1]) ** 2


def ex43_spec(params: Example43Params, delta=1e-8) -> ProblemSpec:
    return build_stopped_system(
        A1=_A1_EX, B1=[[0.0], [1.0]], C1=np.zeros((2, 2)), D1=np.zeros((2, 1)),
        Q1=np.zeros((2, 2)), R1=[[1.0]], G1=[[params.g1, 0.0], [0.0, 0.0]],
        A2=[[params.a]], B2=[[1.0]], C2=[[0.0]], D2=[[0.0]], Q2=[[0.0]], R2=[[1.0]],
        G2=[[params.g]], K_lower=[[1.0, 0.0]],
        horizon=TimeGrid.horizon(params.T, 2), delta=delta,
    )


def scalar_spec(params: Scalar1DParams, delta=None) -> ProblemSpec:
    """Two-state spec of the scalar problem: X2(r) = K X1(r-), first block frozen after r."""
    p = params
    if delta is None:
        delta = min(p.R1, p.R2)
    return build_stopped_system(
        A1=p.A1, B1=p.B1, C1=p.C1, D1=p.D1, Q1=p.Q1, R1=p.R1, G1=p.G1,
        A2=p.A2, B2=p.B2, C2=p.C2, D2=p.D2, Q2=p.Q2, R2=p.R2, G2=p.G2,
        K_lower=p.K, horizon=TimeGrid.horizon(p.T, 2), delta=delta,
    )


def scalar_params_from_spec(spec: ProblemSpec) -> Optional[Scalar1DParams]:
    """Recover scalar parameters when the spec has exactly the frozen-first-block scalar form."""
    if (spec.n1, spec.n2, spec.m) != (1, 1, 1):
        return None
    tables = {}
    for name in ("A1", "B1", "C1", "D1", "Q1", "R1", "G1", "A", "B", "C", "D", "Q", "R", "K"):
        tab = getattr(spec, name)
        if not tab.is_constant:
            return None
        tables[name] = tab.samples[0]
    A, B, C, D, Q, K = (tables[k] for k in ("A", "B", "C", "D", "Q", "K"))
    G = spec.G
    frozen = (A[0, 0] == A[0, 1] == A[1, 0] == 0 and B[0, 0] == 0
              and C[0, 0] == C[0, 1] == C[1, 0] == 0 and D[0, 0] == 0
              and Q[0, 0] == Q[0, 1] == Q[1, 0] == 0
              and G[0, 0] == G[0, 1] == G[1, 0] == 0 and K[0, 0] == 1)
    if not frozen:
        return None
    try:
        return Scalar1DParams(
            A1=tables["A1"][0, 0], B1=tables["B1"][0, 0], C1=tables["C1"][0, 0],
            D1=tables["D1"][0, 0], Q1=tables["Q1"][0, 0], R1=tables["R1"][0, 0],
            G1=tables["G1"][0, 0], A2=A[1, 1], B2=B[1, 0], C2=C[1, 1], D2=D[1, 0],
            Q2=Q[1, 1], R2=tables["R"][0, 0], G2=G[1, 1], K=K[1, 0], T=spec.T)
    except DomainError:
        return None


def p2_numeric(t, params: Scalar1DParams):
    """Stage-2 scalar solution by adaptive integration (fallback outside the explicit case)."""
    T = params.T
    if t >= T:
        return params.G2
    sol = solve_ivp(lambda s, y: -f_eval(2, y[0], params), (T, t), [params.G2],
                    method="DOP853", rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


@dataclass(frozen=True)
class Certificate:
    implies_r_less_T: bool
    implies_r_greater_0: bool
    nontrivial: bool
    details: dict = field(default_factory=dict)

    def as_dict(self):
        out = {
            "implies_r_less_T": self.implies_r_less_T,
            "implies_r_greater_0": self.implies_r_greater_0,
            "nontrivial": self.nontrivial,
        }
        out.update(self.details)
        return out


def _strict(value, scale, sign):
    """Strict sign test with a relative dead band: True, False or 'marginal'."""
    if abs(value) <= CERT_RTOL * scale:
        return "marginal"
    return value > 0 if sign > 0 else value < 0


def nontrivial_certificate(params: Scalar1DParams) -> Certificate:
    """Check the sufficient sign conditions for an interior optimal switch time.

    F1(K^2 G2 + G1) - K^2 F2(G2) > 0 gives r_bar < T and
    F1(K^2 P2(0) + G1) - K^2 F2(P2(0)) < 0 gives r_bar > 0.
    """
    p = params
    d = {}
    degenerate = None
    explicit = p.D2 == 0 and p.R2 == 1 and p.B2 != 0
    if explicit:
        lp, lm = lambda_pm(p)
        d["lambda_plus"], d["lambda_minus"] = lp, lm
        degenerate = degenerate_terminal(p)
    if degenerate:
        P2_0 = p.G2
        d["degenerate"] = degenerate
        d["note"] = "G2 equals a root; P2 is constant and the Theta chain cannot hold"
    elif explicit:
        P2_0 = p2_closed_general(0.0, p)
        d["P2_0_method"] = "closed_form"
    else:
        P2_0 = p2_numeric(0.0, p)
        d["P2_0_method"] = "numeric"
    d["P2_0"] = P2_0
    if explicit and not degenerate:
        d["P2_0_vs_G2"] = p2_initial_ordering(p)

    K2 = p.K ** 2

    def bracket_and_scale(P):
        f1 = f_eval(1, K2 * P + p.G1, p)
        f2 = K2 * f_eval(2, P, p)
        return f1 - f2, 1.0 + abs(f1) + abs(f2)

    b_T, s_T = bracket_and_scale(p.G2)
    b_0, s_0 = bracket_and_scale(P2_0)
    d["bracket_at_G2"] = b_T
    d["bracket_at_P2_0"] = b_0
    less_T = _strict(b_T, s_T, +1)
    greater_0 = _strict(b_0, s_0, -1)
    d["r_less_T_condition"] = "marginal" if less_T == "marginal" else bool(less_T)
    d["r_greater_0_condition"] = "marginal" if greater_0 == "marginal" else bool(greater_0)
    less_T = less_T is True
    greater_0 = greater_0 is True

    th = theta_and_pplus(p)
    if th.special_case:
        d["theta_G2"] = float(th(p.G2))
        d["theta_P2_0"] = float(th(P2_0))
        if th.p_plus is not None:
            d["P_plus"] = th.p_plus
        else:
            d["P_plus_reason"] = th.reason
        if explicit:
            d["two_A2_plus_C2sq"] = 2 * p.A2 + p.C2 ** 2
            d["G2_B2sq"] = p.G2 * p.B2 ** 2
            d["two_A2_plus_C2sq_gt_G2_B2sq"] = d["two_A2_plus_C2sq"] > d["G2_B2sq"]
        if th.p_plus is not None and p.Q2 == 0 and not degenerate:
            d["chain_0_lt_G2_lt_Pplus_lt_P2_0"] = bool(0 < p.G2 < th.p_plus < P2_0)
    else:
        d["theta_reason"] = th.reason
    return Certificate(less_T, greater_0, less_T and greater_0, d)
