"""Carrying-capacity sweeps and the branch-point expansion near sigma_hat.

sweep_K classifies the stable steady state for each capacity on a grid,
using three mutually checking routes: the block criteria, the spectrum,
and (optionally) direct simulation from random initial states.  A
refinement pass bisects every adjacent pair of grid points whose stable
kind differs, down to 1e-6 in K, because the transition capacities are the
scientific payload.

Near the local-stability threshold of the strain-1 point G3 (where the
block determinant det B crosses zero), a coexistence point branches off
with leading-order coinfected level Y3 = c det B.  The coefficient c has
a closed form only in the vanishing cross-transmission limit,
c = -K a1^2 / (B b e1^2); in general it is defined operationally as the
fitted slope of Newton-computed Y3 against det B.  verify_bifurcation
tunes K so det B hits requested negative targets, locates the branch root
by Newton from an expansion-informed seed, and reports positivity, the
Y3 linearity, and the root's measured spectrum (the stability claim is
checked, never assumed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .equilibria import (
    Equilibrium,
    closed_form_equilibria,
    find_G5,
    newton_root,
    residual,
)
from .integrators import IntegratorConfig, integrate
from .model import (
    ModelParameters,
    UsageError,
    derive,
    jacobian_sub,
    require_admissible,
)
from .stability import (
    block_criteria,
    classify_local,
    delta_poly,
    eigenvalues_4x4,
    global_conditions,
)

REFINE_TOL = 1e-6


class BracketError(RuntimeError):
    """A capacity satisfying the requested condition could not be bracketed."""


@dataclass(frozen=True)
class SweepRecord:
    K: float
    s_star_star: float
    stable_kind: str  # G2/G3/G4/G5, "multiple", or "none-found"
    stable_coords: Optional[np.ndarray]
    criterion_ok: Optional[bool]
    spectral_ok: Optional[bool]
    simulation_ok: Optional[bool]
    max_re: float
    det_B: float
    lam: float
    sigma0: float
    sigma_hat: float
    crossed_sigma1: bool
    crossed_sigma0: bool
    crossed_sigma_hat: bool


@dataclass(frozen=True)
class SweepResult:
    records: tuple[SweepRecord, ...]
    transitions: tuple[dict, ...]


def _classify_capacity(params: ModelParameters, find_g5: Union[str, bool], grid_density: int):
    """Stable-kind decision at one capacity; returns (record fields)."""
    d = derive(params)
    cond = global_conditions(params)
    crit = block_criteria(params)
    eqs = {e.kind: e for e in closed_form_equilibria(params)}
    reports = {}
    for kind, eq in eqs.items():
        if kind == "G1" or eq.exists or kind == "G2":
            reports[kind] = classify_local(params, eq)
    stable = {k: eqs[k] for k, rep in reports.items() if rep.local_stable}

    has_certificate = cond.g2_global or cond.g3_global
    want_g5 = find_g5 is True or (find_g5 == "auto" and not stable and not has_certificate)
    if want_g5:
        for g5 in find_G5(params, grid_density=grid_density):
            rep = classify_local(params, g5)
            reports[g5.kind] = rep
            if rep.local_stable:
                stable[g5.kind] = g5

    if len(stable) == 1:
        kind = next(iter(stable))
        chosen = stable[kind]
    elif len(stable) > 1:
        kind, chosen = "multiple", None
    elif cond.g2_global:
        # marginal boundary: the disease-free point carries a global
        # certificate even when its leading eigenvalue sits at zero
        kind, chosen = "G2", eqs["G2"]
    elif cond.g3_global and eqs["G3"].exists:
        kind, chosen = "G3", eqs["G3"]
    else:
        kind, chosen = "none-found", None

    rep = reports.get(kind)
    return d, cond, crit, kind, chosen, rep


def sweep_K(
    params: ModelParameters,
    k_min: float,
    k_max: float,
    n: int,
    verify_by_simulation: bool = False,
    rng_seed: Optional[int] = None,
    refine: bool = True,
    find_g5: Union[str, bool] = "auto",
    grid_density: int = 5,
    sim_states: int = 5,
    sim_t_end: float = 2000.0,
    sim_tol: float = 1e-3,
) -> SweepResult:
    """Classify the stable steady state across a capacity grid.

    Records come back in strictly increasing K.  With verify_by_simulation,
    each record integrates sim_states trajectories from random positive
    initial states (seeded per record from rng_seed, which is then
    mandatory) and checks convergence to the classified point.
    """
    if not (0.0 < k_min < k_max):
        raise UsageError("need 0 < k_min < k_max")
    if n < 2:
        raise UsageError("need at least two grid points")
    if verify_by_simulation and rng_seed is None:
        raise UsageError("rng_seed is mandatory when simulation verification is on")
    require_admissible(params)

    grid = np.linspace(k_min, k_max, n)
    records = []
    for idx, k in enumerate(grid):
        pk = replace(params, K=float(k))
        d, cond, crit, kind, chosen, rep = _classify_capacity(pk, find_g5, grid_density)
        sim_ok = None
        if verify_by_simulation and chosen is not None:
            sim_ok = _simulate_convergence(
                pk, chosen, np.random.default_rng((rng_seed, idx)),
                sim_states, sim_t_end, sim_tol,
            )
        records.append(SweepRecord(
            K=float(k),
            s_star_star=d.s_star_star,
            stable_kind=kind,
            stable_coords=None if chosen is None else chosen.y.copy(),
            criterion_ok=None if rep is None else rep.criterion_stable,
            spectral_ok=None if rep is None else rep.local_stable,
            simulation_ok=sim_ok,
            max_re=math.nan if rep is None else rep.max_re,
            det_B=crit.det_B,
            lam=crit.lam,
            sigma0=cond.sigma0,
            sigma_hat=cond.sigma_hat,
            crossed_sigma1=d.s_star_star > d.sigma1,
            crossed_sigma0=d.s_star_star > cond.sigma0,
            crossed_sigma_hat=d.s_star_star > cond.sigma_hat,
        ))

    transitions = []
    if refine:
        for lo, hi in zip(records, records[1:]):
            if lo.stable_kind == hi.stable_kind:
                continue
            k_lo, k_hi = lo.K, hi.K
            kind_lo, kind_hi = lo.stable_kind, hi.stable_kind
            while k_hi - k_lo > REFINE_TOL:
                k_mid = 0.5 * (k_lo + k_hi)
                pk = replace(params, K=k_mid)
                _, _, _, kind_mid, _, _ = _classify_capacity(pk, find_g5, grid_density)
                if kind_mid == kind_lo:
                    k_lo = k_mid
                else:
                    k_hi = k_mid
                    kind_hi = kind_mid
            transitions.append({
                "k_lo": k_lo,
                "k_hi": k_hi,
                "kind_lo": kind_lo,
                "kind_hi": kind_hi,
                "k_mid": 0.5 * (k_lo + k_hi),
            })
    return SweepResult(records=tuple(records), transitions=tuple(transitions))


def _simulate_convergence(params, eq: Equilibrium, rng, n_states, t_end, tol) -> bool:
    cfg = IntegratorConfig(t_end=t_end, stop_at_steady=True, h_max=10.0)
    target = eq.y
    for _ in range(n_states):
        y0 = np.append(rng.uniform(0.05, 3.0, size=4), 0.0)
        traj = integrate(params, y0, cfg)
        if float(np.abs(traj.y[-1, :4] - target).max()) > tol:
            return False
    return True


@dataclass(frozen=True)
class BifurcationExpansion:
    """First-order data of the branch point near the G3 stability loss.

    D is the block determinant; A_scalar and B_scalar its diagonal factors
    (mu3 - a3 s1 - e1 I1* and a2 (s2 - s1) + g2 I1*); lambda_star the
    leading ratio Y2/Y3 on the branch; xi0_coeff and xi1_partial the
    first-order coefficients of the Y0 and Y1 corrections per unit Y3
    (xi1_partial omits a term whose coefficient has no defined value, so it
    is informational only).  c_closed_lv is the vanishing-cross-transmission
    closed form for the slope of Y3 against D, evaluated at these
    parameters; c_numeric the fitted slope near this parameter family's own
    threshold crossing (None when the crossing is unreachable by K).
    """

    D: float
    A_scalar: float
    B_scalar: float
    lambda_star: float
    xi0_coeff: float
    xi1_partial: float
    c_closed_lv: float
    c_numeric: Optional[float]
    y3_predicted: float
    i1_star: float
    K: float
    notes: tuple[str, ...]


def expansion_near_sigma_hat(
    params: ModelParameters, estimate_c: bool = True
) -> BifurcationExpansion:
    """Compute the branch-point expansion coefficients at the given
    parameters (requires S** > sigma1 so the strain-1 point exists)."""
    require_admissible(params)
    d = derive(params)
    if d.s_star_star <= d.sigma1:
        raise UsageError("expansion needs S** > sigma1 (the strain-1 point must exist)")
    crit = block_criteria(params)
    i1 = crit.i1_star
    a_scalar = params.mu3 - params.alpha3 * d.sigma1 - params.eta1 * i1
    b_scalar = params.alpha2 * (d.sigma2 - d.sigma1) + params.gamma2 * i1
    denom = params.mu2 + params.gamma2 * i1 - params.alpha2 * d.sigma1
    if denom <= 0.0:
        raise UsageError("lambda* undefined: mu2 + gamma2 I1* - alpha2 sigma1 <= 0")
    lam_star = params.beta2 * d.sigma1 / denom
    xi0 = (params.eta1 + lam_star * params.gamma1 - params.beta1 * d.sigma1 / i1) / params.alpha1
    xi1_partial = -(lam_star * params.alpha2) / params.alpha1 - (
        params.b / (params.alpha1 * params.K)
    ) * xi0

    notes = []
    if params.eta1 > 0.0:
        c_closed = -params.K * params.alpha1 ** 2 / (b_scalar * params.b * params.eta1 ** 2)
    else:
        c_closed = math.nan
        notes.append("eta1 = 0: closed-form slope undefined")

    c_numeric = None
    if estimate_c:
        try:
            ver = verify_bifurcation(
                params,
                d_values=(-1e-3, -3e-4, -1e-4, -3e-5, -1e-5),
                smallness_tol=math.inf,
            )
            c_numeric = ver.c_fit
        except BracketError as exc:
            notes.append(f"slope not estimated: {exc}")

    return BifurcationExpansion(
        D=crit.det_B,
        A_scalar=a_scalar,
        B_scalar=b_scalar,
        lambda_star=lam_star,
        xi0_coeff=xi0,
        xi1_partial=xi1_partial,
        c_closed_lv=c_closed,
        c_numeric=c_numeric,
        y3_predicted=c_closed * crit.det_B,
        i1_star=i1,
        K=params.K,
        notes=tuple(notes),
    )


def tune_capacity(params: ModelParameters, det_b_target: float, k_max: float = 1e12) -> float:
    """Find the capacity at which det B equals the requested value.

    det B as a function of K rises over its hump and then decreases through
    the unique sign change, so bisection on the single down-crossing is
    safe.  Raises BracketError, naming the scanned interval, when the
    target is below the large-K limit of det B (the crossing is then
    unreachable by tuning K alone).
    """
    require_admissible(params)
    p = params

    def det_b_at(k: float) -> float:
        return block_criteria(replace(p, K=k)).det_B

    k_exist = p.mu1 / p.alpha1 * p.b / (p.b - p.mu0)  # S** = sigma1 here
    k_lo = k_exist * (1.0 + 1e-9)

    # value approached as K -> inf
    i1_sup = (p.b - p.mu0) / p.alpha1
    det_b_inf = delta_poly(p, i1_sup)
    if det_b_target <= det_b_inf:
        raise BracketError(
            f"det B = {det_b_target!r} is unreachable: scanned K in ({k_exist!r}, inf); "
            f"det B decreases only to {det_b_inf!r} as K grows "
            "(the infected level I1* never reaches the threshold root Lambda)"
        )
    k_hi = max(2.0 * k_lo, p.K)
    while det_b_at(k_hi) > det_b_target:
        k_hi *= 2.0
        if k_hi > k_max:
            raise BracketError(
                f"det B = {det_b_target!r} not bracketed on ({k_lo!r}, {k_max!r}]"
            )
    for _ in range(200):
        k_mid = 0.5 * (k_lo + k_hi)
        if det_b_at(k_mid) > det_b_target:
            k_lo = k_mid
        else:
            k_hi = k_mid
        if (k_hi - k_lo) <= 4e-16 * k_hi:
            break
    return 0.5 * (k_lo + k_hi)


@dataclass(frozen=True)
class BifurcationVerification:
    entries: tuple[dict, ...]
    c_fit: float
    c_closed_ref: float
    slope_rel_err: float


def verify_bifurcation(
    params: ModelParameters,
    d_values: Sequence[float],
    smallness_tol: float = 1e-2,
    k_max: float = 1e12,
) -> BifurcationVerification:
    """Locate and measure the branch root for each det B target.

    Every target must be negative.  The cross-transmission rates are
    expected small (below smallness_tol) for the expansion to be
    trustworthy; pass a larger tolerance to override.  Raises BracketError
    when a target cannot be reached by tuning K.
    """
    require_admissible(params)
    small = max(params.beta1, params.beta2, params.gamma1, params.gamma2)
    if small > smallness_tol:
        raise UsageError(
            f"cross-transmission rates up to {small!r} exceed smallness_tol={smallness_tol!r}"
        )
    entries = []
    for d_target in d_values:
        if d_target >= 0.0:
            raise UsageError("det B targets must be negative")
        k_d = tune_capacity(params, d_target, k_max=k_max)
        pd = replace(params, K=k_d)
        exp = expansion_near_sigma_hat(pd, estimate_c=False)
        der = derive(pd)

        y3_guess = exp.c_closed_lv * d_target
        if not (math.isfinite(y3_guess) and y3_guess > 0.0):
            y3_guess = 1e-6 * (1.0 + der.s_star_star)
        seeds = [np.array([
            der.sigma1 + exp.xi0_coeff * y3_guess,
            exp.i1_star + exp.xi1_partial * y3_guess,
            exp.lambda_star * y3_guess,
            y3_guess,
        ])]
        g3 = np.array([der.sigma1, exp.i1_star, 0.0, 0.0])
        jac = jacobian_sub(pd, np.append(g3, 0.0))
        w, v = np.linalg.eig(jac)
        lead = int(np.argmax(w.real))
        vec = np.real(v[:, lead])
        vec = vec / max(1e-300, float(np.abs(vec).max()))
        delta = max(y3_guess, 1e-8)
        seeds.extend([g3 + delta * vec, g3 - delta * vec])

        root = None
        for seed in seeds:
            cand = newton_root(pd, seed)
            if cand is None or cand[3] <= 0.0:
                continue
            if float(np.abs(cand - g3).max()) > 0.5 * (1.0 + float(np.abs(g3).max())):
                continue  # wandered to a distant root; not the branch
            root = cand
            break

        entry = {
            "d_target": float(d_target),
            "K": float(k_d),
            "det_B": block_criteria(pd).det_B,
            "c_closed_lv": float(exp.c_closed_lv),
            "y3_predicted": float(exp.c_closed_lv * d_target),
            "found": root is not None,
        }
        if root is not None:
            res = float(np.abs(residual(pd, root)).max())
            eigs = eigenvalues_4x4(jacobian_sub(pd, np.append(root, 0.0)))
            max_re = float(eigs.real.max())
            entry.update({
                "y": [float(x) for x in root],
                "residual": res,
                "min_coord": float(root.min()),
                "all_positive": bool(np.all(root > 1e-12 * (1.0 + float(root.max())))),
                "y3": float(root[3]),
                "y3_over_predicted": float(root[3] / entry["y3_predicted"])
                if entry["y3_predicted"] != 0.0
                else math.nan,
                "max_re": max_re,
                "stable": bool(max_re < -1e-9),
            })
        entries.append(entry)

    found = [e for e in entries if e["found"]]
    if found:
        dd = np.array([e["d_target"] for e in found])
        y3 = np.array([e["y3"] for e in found])
        c_fit = float(np.dot(dd, y3) / np.dot(dd, dd))
        c_ref = float(np.mean([e["c_closed_lv"] for e in found]))
        rel = abs(c_fit - c_ref) / abs(c_ref) if c_ref != 0.0 else math.nan
    else:
        c_fit, c_ref, rel = math.nan, math.nan, math.nan
    return BifurcationVerification(
        entries=tuple(entries), c_fit=c_fit, c_closed_ref=c_ref, slope_rel_err=rel
    )


def write_sweep_csv(result: SweepResult, path) -> None:
    """K, s_star_star, stable_kind, Y0..Y3, det_B, Lambda, sigma0,
    sigma_hat, max_re, verified_by_sim rows."""

    def fmt(x) -> str:
        if x is None:
            return ""
        return repr(float(x))

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "K,s_star_star,stable_kind,Y0,Y1,Y2,Y3,det_B,Lambda,sigma0,sigma_hat,"
            "max_re,verified_by_sim\n"
        )
        for r in result.records:
            coords = r.stable_coords if r.stable_coords is not None else [None] * 4
            sim = "" if r.simulation_ok is None else str(bool(r.simulation_ok)).lower()
            fh.write(
                f"{float(r.K)!r},{float(r.s_star_star)!r},{r.stable_kind},"
                f"{fmt(coords[0])},{fmt(coords[1])},{fmt(coords[2])},{fmt(coords[3])},"
                f"{fmt(r.det_B)},{fmt(r.lam)},{fmt(r.sigma0)},{fmt(r.sigma_hat)},"
                f"{fmt(r.max_re)},{sim}\n"
            )


def verification_to_json(ver: BifurcationVerification) -> str:
    payload = {
        "entries": [dict(e) for e in ver.entries],
        "c_fit": None if math.isnan(ver.c_fit) else ver.c_fit,
        "c_closed_ref": None if math.isnan(ver.c_closed_ref) else ver.c_closed_ref,
        "slope_rel_err": None if math.isnan(ver.slope_rel_err) else ver.slope_rel_err,
    }
    return json.dumps(payload, indent=2)
