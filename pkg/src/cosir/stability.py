"""Local and global stability classification of steady states.

Each steady state gets two independent verdicts: a spectral one (sign of
the largest real part over the full 4x4 Jacobian spectrum) and, for the
closed-form kinds, the 2x2 block criterion that reduces stability to sign
conditions on small determinants and traces.  The block path is a
cross-check of the spectral path, never a shortcut.

The key derived quantity is the threshold quadratic

    Delta(lam) = det [[-a2 (s2 - s1) - g2 lam,  b2 s1],
                      [(g1 + g2) lam,           a3 s1 + e1 lam - mu3]]

whose unique positive root Lambda bounds the infected level I1* below
which the strain-1 point G3 stays locally stable.  Global certificates:
G2 is globally stable when S** <= sigma1; G3 when I1* stays below
min(a2 (s2 - s1) / g1, a3h (s3 - s1) / e1), with a vanishing g1 or e1
sending its term to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .equilibria import Equilibrium, closed_form_equilibria, residual
from .model import (
    InadmissibleError,
    ModelParameters,
    UsageError,
    derive,
    jacobian_sub,
    require_admissible,
)

EPS_SPEC = 1e-9  # spectral margin below which a verdict is "marginal"


def eigenvalues_4x4(m) -> np.ndarray:
    """All four eigenvalues, sorted by real part descending (ties broken by
    imaginary part descending).

    Each returned value lam is verified against |det(m - lam I)| at the
    matrix scale; finite entries are required.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise UsageError(f"expected a 4x4 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise UsageError("matrix entries must be finite")
    w = np.linalg.eigvals(m)
    scale = (1.0 + float(np.abs(m).max())) ** 4
    eye = np.eye(4)
    for lam in w:
        res = abs(np.linalg.det(m - lam * eye))
        if res > 1e-8 * scale:
            raise ArithmeticError(
                f"eigenvalue verification failed: |det(m - lam I)| = {res!r} at lam = {lam!r}"
            )
    order = np.lexsort((-w.imag, -w.real))
    return w[order]


def _delta_coefficients(params: ModelParameters) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of the threshold quadratic Delta(lam)."""
    d = derive(params)
    p = params.alpha2 * (d.sigma2 - d.sigma1)
    m = params.mu3 - params.alpha3 * d.sigma1
    a = -params.gamma2 * params.eta1
    b = -p * params.eta1 + params.gamma2 * m - params.beta2 * d.sigma1 * (params.gamma1 + params.gamma2)
    c = p * m
    return a, b, c


def delta_poly(params: ModelParameters, lam: float) -> float:
    """The threshold quadratic evaluated at lam."""
    a, b, c = _delta_coefficients(params)
    return (a * lam + b) * lam + c


def lambda_threshold(params: ModelParameters) -> float:
    """The unique positive root Lambda of the threshold quadratic.

    Uses the cancellation-free quadratic-formula branch.  Degenerate cases:
    with a zero quadratic coefficient the linear root is returned, and if no
    positive root exists at all (the block can never destabilize) the result
    is +inf.  Delta(0) <= 0 signals an admissibility violation and raises.
    """
    require_admissible(params)
    a, b, c = _delta_coefficients(params)
    if c <= 0.0:
        raise InadmissibleError(f"Delta(0) = {c!r} <= 0; threshold ordering is violated")
    if a == 0.0:
        lam = -c / b if b < 0.0 else math.inf
    else:
        disc = b * b - 4.0 * a * c  # > 0: root product c/a < 0
        sq = math.sqrt(disc)
        q = -(b + math.copysign(sq, b)) / 2.0 if b != 0.0 else -sq / 2.0
        r1 = q / a
        r2 = c / q
        lam = r1 if r1 > 0.0 else r2
    if math.isfinite(lam):
        scale = abs(c) + abs(b) * lam + abs(a) * lam * lam
        res = delta_poly(params, lam)
        if abs(res) > 1e-12 * scale:
            # one Newton polish; the closed form is already near machine level
            slope = 2.0 * a * lam + b
            if slope != 0.0:
                lam -= res / slope
    return lam


@dataclass(frozen=True)
class BlockCriteria:
    """The 2x2 stability blocks and the scalar criteria built from them.

    B governs G3 (entries use I1*), D governs G4 (entries use I2*); delta0
    is the threshold quadratic at 0 and lam its unique positive root.  The
    I* values are formula values and may be negative when the corresponding
    steady state does not exist.
    """

    B: np.ndarray
    D: np.ndarray
    delta0: float
    lam: float
    i1_star: float
    i2_star: float

    @property
    def det_B(self) -> float:
        return float(self.B[0, 0] * self.B[1, 1] - self.B[0, 1] * self.B[1, 0])

    @property
    def det_D(self) -> float:
        return float(self.D[0, 0] * self.D[1, 1] - self.D[0, 1] * self.D[1, 0])

    @property
    def trace_D(self) -> float:
        return float(self.D[0, 0] + self.D[1, 1])


def block_criteria(params: ModelParameters) -> BlockCriteria:
    d = derive(params)
    p = params
    i1 = (p.b / (p.K * p.alpha1)) * (d.s_star_star - d.sigma1)
    i2 = (p.b / (p.K * p.alpha2)) * (d.s_star_star - d.sigma2)
    g12 = p.gamma1 + p.gamma2
    B = np.array([
        [-p.alpha2 * (d.sigma2 - d.sigma1) - p.gamma2 * i1, p.beta2 * d.sigma1],
        [g12 * i1, p.alpha3 * d.sigma1 + p.eta1 * i1 - p.mu3],
    ])
    D = np.array([
        [p.alpha1 * (d.sigma2 - d.sigma1) - p.gamma1 * i2, p.beta1 * d.sigma2],
        [g12 * i2, -p.mu3 + p.alpha3 * d.sigma2 + p.eta2 * i2],
    ])
    _, _, c = _delta_coefficients(params)
    return BlockCriteria(
        B=B, D=D, delta0=c, lam=lambda_threshold(params), i1_star=i1, i2_star=i2
    )


@dataclass(frozen=True)
class GlobalConditions:
    """Global-stability certificates and the thresholds they induce.

    sigma0 is the value of S** at which I1* meets the global-certificate bound;
    sigma_hat the value at which it meets Lambda (local loss).  Both move
    with K.  A vanishing gamma1 or eta1 sends its bound term to +inf.
    """

    g2_global: bool
    g3_global: bool
    sigma0: float
    sigma_hat: float
    i1_star: float
    cond_bound: float


def global_conditions(params: ModelParameters) -> GlobalConditions:
    require_admissible(params)
    d = derive(params)
    p = params
    i1 = (p.b / (p.K * p.alpha1)) * (d.s_star_star - d.sigma1)
    term1 = p.alpha2 * (d.sigma2 - d.sigma1) / p.gamma1 if p.gamma1 > 0.0 else math.inf
    term2 = d.alpha3_hat * (d.sigma3 - d.sigma1) / p.eta1 if p.eta1 > 0.0 else math.inf
    bound = min(term1, term2)
    ka_over_b = p.K * p.alpha1 / p.b
    sigma0 = d.sigma1 + ka_over_b * bound if math.isfinite(bound) else math.inf
    lam = lambda_threshold(params)
    sigma_hat = d.sigma1 + ka_over_b * lam if math.isfinite(lam) else math.inf
    return GlobalConditions(
        g2_global=d.s_star_star <= d.sigma1,
        g3_global=d.s_star_star > d.sigma1 and i1 <= bound,
        sigma0=sigma0,
        sigma_hat=sigma_hat,
        i1_star=i1,
        cond_bound=bound,
    )


@dataclass(frozen=True)
class StabilityReport:
    kind: str
    eigenvalues: np.ndarray
    max_re: float
    local_stable: bool
    marginal: bool
    criterion_stable: Optional[bool]  # None for G5 (no closed criterion)
    criterion_marginal: bool
    criteria: BlockCriteria
    global_stable: str  # "yes" / "no" / "no-certificate"
    conditions: GlobalConditions


def _check_coords(params: ModelParameters, eq: Equilibrium):
    scale = 1.0 + float(np.abs(eq.y).max())
    if eq.kind == "G5":
        if np.any(eq.y <= 0.0):
            raise UsageError("a coexistence record must have positive coordinates")
        res = float(np.abs(residual(params, eq.y)).max())
        if res > 1e-8 * scale:
            raise UsageError(f"coordinates are not a steady state (residual {res!r})")
        return
    expected = {e.kind: e for e in closed_form_equilibria(params)}
    if eq.kind not in expected:
        raise UsageError(f"unknown steady-state kind {eq.kind!r}")
    diff = float(np.abs(expected[eq.kind].y - eq.y).max())
    if diff > 1e-8 * scale:
        raise UsageError(
            f"coordinates do not match the closed form of {eq.kind} (difference {diff!r})"
        )


def classify_local(
    params: ModelParameters, eq: Equilibrium, eps_spec: float = EPS_SPEC
) -> StabilityReport:
    """Classify a validated steady state.

    The spectral verdict always comes from the full 4x4 Jacobian; the block
    criterion for the matching kind is evaluated alongside as a cross-check.
    |max_re| <= eps_spec reports "marginal", never stable or unstable.
    """
    _check_coords(params, eq)
    d = derive(params)
    crit = block_criteria(params)
    cond = global_conditions(params)
    w = eigenvalues_4x4(jacobian_sub(params, np.append(eq.y, 0.0)))
    max_re = float(w.real.max())
    local_stable = max_re < -eps_spec
    marginal = abs(max_re) <= eps_spec

    scale = 1.0 + d.s_star_star
    criterion_marginal = False
    if eq.kind == "G1":
        criterion_stable = False  # b > mu0 puts a positive eigenvalue on the diagonal
    elif eq.kind == "G2":
        criterion_stable = d.s_star_star <= d.sigma1
        criterion_marginal = abs(d.s_star_star - d.sigma1) <= 1e-12 * scale
    elif eq.kind == "G3":
        criterion_stable = crit.i1_star > 0.0 and crit.det_B > 0.0
        criterion_marginal = (
            abs(crit.det_B) <= 1e-12 * scale or abs(crit.i1_star) <= 1e-12 * scale
        )
    elif eq.kind == "G4":
        criterion_stable = (
            d.s_star_star > d.sigma2 and crit.det_D > 0.0 and crit.trace_D < 0.0
        )
        criterion_marginal = (
            abs(crit.det_D) <= 1e-12 * scale or abs(crit.trace_D) <= 1e-12 * scale
        )
    else:
        criterion_stable = None  # spectral verdict only

    if eq.kind == "G2":
        global_stable = "yes" if cond.g2_global else "no"
    elif eq.kind == "G3":
        if cond.g3_global:
            global_stable = "yes"
        elif max_re > eps_spec:
            global_stable = "no"
        else:
            global_stable = "no-certificate"
    elif eq.kind == "G1":
        global_stable = "no"
    else:
        global_stable = "no" if max_re > eps_spec else "no-certificate"

    return StabilityReport(
        kind=eq.kind,
        eigenvalues=w,
        max_re=max_re,
        local_stable=local_stable,
        marginal=marginal,
        criterion_stable=criterion_stable,
        criterion_marginal=criterion_marginal,
        criteria=crit,
        global_stable=global_stable,
        conditions=cond,
    )


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None


def report_to_dict(report: StabilityReport) -> dict:
    """JSON-ready form of a stability report."""
    return {
        "kind": report.kind,
        "eigenvalues": [
            {"re": float(l.real), "im": float(l.imag)} for l in report.eigenvalues
        ],
        "max_re": float(report.max_re),
        "local_stable": bool(report.local_stable),
        "marginal": bool(report.marginal),
        "criterion_stable": report.criterion_stable,
        "criteria": {
            "det_B": _json_float(report.criteria.det_B),
            "Lambda": _json_float(report.criteria.lam),
            "I1_star": _json_float(report.criteria.i1_star),
            "det_D": _json_float(report.criteria.det_D),
            "trace_D": _json_float(report.criteria.trace_D),
        },
        "global": {
            "g2": bool(report.conditions.g2_global),
            "g3": bool(report.conditions.g3_global),
            "sigma0": _json_float(report.conditions.sigma0),
            "sigma_hat": _json_float(report.conditions.sigma_hat),
        },
    }
