"""Steady states of the core system and their validation.

Four steady states have closed forms: extinction G1 = (0,0,0,0), the
disease-free point G2 = (S**,0,0,0), and the single-strain points
G3 = (sigma1, I1*, 0, 0) and G4 = (sigma2, 0, I2*, 0), where the infected
level is b (S** - sigma_i) / (K alpha_i).  G3/G4 exist (are nonnegative)
precisely when S** exceeds the corresponding threshold; the boundary-
degenerate records with I* = 0 are still emitted, flagged exists=False,
so branch plots stay continuous.  When the formula value of I* is
negative the record is likewise emitted un-clamped: it is still an exact
root of the balance relations, just not an admissible population state.

Coexistence points (kind G5, all four coordinates strictly positive) have
no closed form and are searched for with a damped Newton iteration from a
deterministic seed set: a continuation seed off G3 along its unstable
direction when the local-stability determinant is negative, plus a coarse
grid over the box allowed by the a priori coordinate bounds.  All returned
roots are validated against the balance-relation residual and deduplicated;
the search is honest about coverage and never claims completeness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    ModelParameters,
    UsageError,
    derive,
    jacobian_sub,
    require_admissible,
)

RESIDUAL_VALID_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
LINE_SEARCH_MAX_HALVINGS = 30
DEDUPE_TOL = 1e-6
# formula value of I* must exceed this (times scale) to count as existing
EXIST_TOL = 1e-12
# a coordinate must exceed this (times scale) to count as strictly interior
INTERIOR_TOL = 1e-9


class BalanceError(AssertionError):
    """A steady-state record violates one of the balance relations."""


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A steady state with its validation data.

    kind      one of G1..G5
    y         coordinates (Y0, Y1, Y2, Y3)
    r_star    implied recovered level (rho1 Y1 + rho2 Y2 + rho3 Y3) / mu4'
    residual  inf-norm of the balance relations at y
    exists    closed-form kinds: the defining inequality holds strictly
    """

    kind: str
    y: np.ndarray
    r_star: float
    residual: float
    exists: bool

    @property
    def valid(self) -> bool:
        return self.residual <= RESIDUAL_VALID_TOL * (1.0 + float(np.abs(self.y).max()))

    def state5(self) -> np.ndarray:
        return np.append(self.y, self.r_star)


def residual(params: ModelParameters, y) -> np.ndarray:
    """Left-hand sides of the four balance relations at coordinates y.

    This is the oracle every solver output is checked against.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (4,):
        raise UsageError(f"expected 4 coordinates, got shape {y.shape}")
    p = params
    y0, y1, y2, y3 = y
    a3h = p.alpha3 + p.beta1 + p.beta2
    return np.array([
        (p.b * (1.0 - y0 / p.K) - p.alpha1 * y1 - p.alpha2 * y2 - a3h * y3 - p.mu0) * y0,
        (p.alpha1 * y0 - p.eta1 * y3 - p.gamma1 * y2 - p.mu1) * y1 + p.beta1 * y0 * y3,
        (p.alpha2 * y0 - p.eta2 * y3 - p.gamma2 * y1 - p.mu2) * y2 + p.beta2 * y0 * y3,
        (p.alpha3 * y0 + p.eta1 * y1 + p.eta2 * y2 - p.mu3) * y3 + (p.gamma1 + p.gamma2) * y1 * y2,
    ])


def make_equilibrium(params: ModelParameters, kind: str, y, exists: bool = True) -> Equilibrium:
    y = np.asarray(y, dtype=float).copy()
    res = float(np.abs(residual(params, y)).max())
    num = params.rho1 * y[1] + params.rho2 * y[2] + params.rho3 * y[3]
    if params.mu4p > 0.0:
        r_star = num / params.mu4p
    else:
        r_star = 0.0 if num == 0.0 else math.inf
    return Equilibrium(kind=kind, y=y, r_star=r_star, residual=res, exists=exists)


def closed_form_equilibria(params: ModelParameters) -> list[Equilibrium]:
    """The four closed-form steady states, existence-flagged and validated.

    Raises InadmissibleError for parameters failing the admissibility check.
    """
    require_admissible(params)
    d = derive(params)
    sss = d.s_star_star
    scale = 1.0 + sss
    i1 = (params.b / (params.K * params.alpha1)) * (sss - d.sigma1)
    i2 = (params.b / (params.K * params.alpha2)) * (sss - d.sigma2)
    return [
        make_equilibrium(params, "G1", (0.0, 0.0, 0.0, 0.0)),
        make_equilibrium(params, "G2", (sss, 0.0, 0.0, 0.0)),
        make_equilibrium(params, "G3", (d.sigma1, i1, 0.0, 0.0), exists=i1 > EXIST_TOL * scale),
        make_equilibrium(params, "G4", (d.sigma2, 0.0, i2, 0.0), exists=i2 > EXIST_TOL * scale),
    ]


@dataclass(frozen=True)
class BalanceReport:
    """Margins of the balance relations and a priori boxes at a steady state."""

    law1_error: float
    law2_error: float
    y0_box_ok: bool
    y0_window_ok: bool
    coord_bound: float
    coord_bound_ok: bool
    failures: tuple[str, ...]


def balance_checks(
    params: ModelParameters, eq: Equilibrium, tol: float = 1e-9, strict: bool = True
) -> BalanceReport:
    """Verify the transmission and removal balance identities at eq.

    Checks, with y = (Y0..Y3) and scale 1 + max|y|:
      law1:  a1 Y1 + a2 Y2 + a3h Y3 = (b/K)(S** - Y0)
      law2:  mu1 Y1 + mu2 Y2 + mu3 Y3 = (b/K)(S** - Y0) Y0
      box:   0 < Y0 <= S**; for kinds beyond G2 also sigma1 <= Y0 <= min(S**, sigma3)
      bound: max coordinate <= max((b-mu0)/a1, (b-mu0)/a2, (b-mu0)/a3h, sigma3)

    The algebraic identities law1/law2 hold for any exact root of the
    balance relations; the box and coordinate bounds presuppose a
    nonnegative steady state, so they are skipped for records flagged
    exists=False (boundary-degenerate or phantom branches).

    With strict=True a violation raises BalanceError naming the relation.
    """
    if eq.kind == "G1":
        raise UsageError("balance relations do not apply to the extinction point")
    p = params
    d = derive(p)
    y0, y1, y2, y3 = eq.y
    a3h = d.alpha3_hat
    scale = 1.0 + float(np.abs(eq.y).max())
    slop = 1e-12 * scale

    law1_lhs = p.alpha1 * y1 + p.alpha2 * y2 + a3h * y3
    law1_rhs = (p.b / p.K) * (d.s_star_star - y0)
    law2_lhs = p.mu1 * y1 + p.mu2 * y2 + p.mu3 * y3
    law2_rhs = (p.b / p.K) * (d.s_star_star - y0) * y0

    failures = []
    law1_err = abs(law1_lhs - law1_rhs)
    law2_err = abs(law2_lhs - law2_rhs)
    if law1_err > tol * scale:
        failures.append(f"law1 (transmission balance): |{law1_lhs!r} - {law1_rhs!r}|")
    if law2_err > tol * scale:
        failures.append(f"law2 (removal balance): |{law2_lhs!r} - {law2_rhs!r}|")

    y0_box = True
    y0_window = True
    r = p.b - p.mu0
    bound = max(r / p.alpha1, r / p.alpha2, r / a3h, d.sigma3)
    bound_ok = True
    if eq.exists:
        y0_box = 0.0 < y0 <= d.s_star_star + slop
        if not y0_box:
            failures.append("Y0 box: 0 < Y0 <= S**")
        if eq.kind != "G2":
            # the window and the coordinate bound hold for steady states
            # distinct from the disease-free one (whose Y0 = S** may exceed
            # every threshold)
            y0_window = d.sigma1 - slop <= y0 <= min(d.s_star_star, d.sigma3) + slop
            if not y0_window:
                failures.append("Y0 window: sigma1 <= Y0 <= min(S**, sigma3)")
            bound_ok = float(eq.y.max()) <= bound + slop
            if not bound_ok:
                failures.append("coordinate bound: max Y_i <= max((b-mu0)/a_i, sigma3)")

    report = BalanceReport(
        law1_error=law1_err,
        law2_error=law2_err,
        y0_box_ok=y0_box,
        y0_window_ok=y0_window,
        coord_bound=bound,
        coord_bound_ok=bound_ok,
        failures=tuple(failures),
    )
    if strict and failures:
        raise BalanceError("; ".join(failures))
    return report


def newton_root(
    params: ModelParameters,
    seed,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> Optional[np.ndarray]:
    """Damped Newton iteration on the balance-relation residual.

    Returns the root, or None when the iteration diverges, stalls, or hits
    a singular Jacobian.  Step halving (factor 0.5, at most 30 halvings)
    enforces a decreasing residual norm.
    """
    y = np.asarray(seed, dtype=float).copy()
    if y.shape != (4,):
        raise UsageError(f"expected a 4-component seed, got shape {y.shape}")
    r = residual(params, y)
    rn = float(np.abs(r).max())
    for _ in range(max_iter):
        if rn <= tol * (1.0 + float(np.abs(y).max())):
            return y
        jac = jacobian_sub(params, np.append(y, 0.0))
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        for _ in range(LINE_SEARCH_MAX_HALVINGS + 1):
            y_try = y + lam * step
            r_try = residual(params, y_try)
            rn_try = float(np.abs(r_try).max())
            if math.isfinite(rn_try) and rn_try < rn:
                y, r, rn = y_try, r_try, rn_try
                break
            lam *= 0.5
        else:
            return None
    if rn <= tol * (1.0 + float(np.abs(y).max())):
        return y
    return None


def _continuation_seeds(params: ModelParameters) -> list[np.ndarray]:
    """Seeds off G3 along its most unstable direction, when G3 exists and
    its stability determinant is negative."""
    from .stability import block_criteria  # local import to avoid a cycle

    d = derive(params)
    i1 = (params.b / (params.K * params.alpha1)) * (d.s_star_star - d.sigma1)
    if i1 <= 0.0:
        return []
    crit = block_criteria(params)
    if crit.det_B >= 0.0:
        return []
    g3 = np.array([d.sigma1, i1, 0.0, 0.0])
    jac = jacobian_sub(params, np.append(g3, 0.0))
    w, v = np.linalg.eig(jac)
    lead = int(np.argmax(w.real))
    vec = np.real(v[:, lead])
    vec = vec / max(1e-300, float(np.abs(vec).max()))
    delta = 1e-3 * (1.0 + float(np.abs(g3).max()))
    return [g3 + delta * vec, g3 - delta * vec]


def find_G5(
    params: ModelParameters,
    seeds: Optional[Sequence] = None,
    grid_density: int = 8,
    tol: float = NEWTON_TOL,
    dedupe_tol: float = DEDUPE_TOL,
) -> list[Equilibrium]:
    """Search for coexistence steady states (all coordinates positive).

    Seeding is deterministic: caller seeds first (if any), then continuation
    off an unstable G3, then a grid_density^4 grid over the a priori box
    Y0 in [sigma1, min(S**, sigma3)], other coordinates in (0, bound].
    Only strictly interior roots passing the residual test are returned,
    sorted by coordinates and deduplicated; an empty list means no root was
    found, not that none exists.
    """
    require_admissible(params)
    d = derive(params)
    seed_list = [np.asarray(s, dtype=float) for s in (seeds or [])]
    seed_list.extend(_continuation_seeds(params))

    r = params.b - params.mu0
    bound = max(r / params.alpha1, r / params.alpha2, r / d.alpha3_hat, d.sigma3)
    y0_hi = min(d.s_star_star, d.sigma3)
    if grid_density > 0 and y0_hi >= d.sigma1:
        y0s = np.linspace(d.sigma1, y0_hi, grid_density)
        others = bound * (np.arange(1, grid_density + 1) / grid_density)
        for y0 in y0s:
            for y1 in others:
                for y2 in others:
                    for y3 in others:
                        seed_list.append(np.array([y0, y1, y2, y3]))

    roots = []
    for seed in seed_list:
        y = newton_root(params, seed, tol=tol)
        if y is None:
            continue
        scale = 1.0 + float(np.abs(y).max())
        if np.any(y <= INTERIOR_TOL * scale):
            continue
        res = float(np.abs(residual(params, y)).max())
        if res > RESIDUAL_VALID_TOL * scale:
            continue
        roots.append(y)

    roots.sort(key=lambda v: tuple(v))
    unique: list[np.ndarray] = []
    for y in roots:
        if any(float(np.abs(y - u).max()) <= dedupe_tol for u in unique):
            continue
        unique.append(y)
    return [make_equilibrium(params, "G5", y) for y in unique]


def equilibria_to_json(records: Sequence[Equilibrium]) -> str:
    """JSON array of {kind, y, r_star, residual, exists} records."""
    payload = [
        {
            "kind": eq.kind,
            "y": [float(v) for v in eq.y],
            "r_star": float(eq.r_star),
            "residual": float(eq.residual),
            "exists": bool(eq.exists),
        }
        for eq in records
    ]
    return json.dumps(payload, indent=2)
