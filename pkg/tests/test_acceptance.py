"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criterion 4 (first clause) and criterion 9 encode requirements that are
analytically unattainable at the stated rates; they are implemented exactly
as stated and allowed to fail with a precise diagnostic rather than being
weakened.  A passing demonstration of the same branch-expansion substance
on a reachable parameter variant lives in test_bifurcation.py
(TestVerifyBifurcation) and is summarized here as a supplementary line.
"""

import math
import time

import numpy as np
import pytest

from cosir import (
    BracketError,
    IntegratorConfig,
    balance_checks,
    block_criteria,
    check_bounds,
    classify_local,
    closed_form_equilibria,
    delta_poly,
    derive,
    global_conditions,
    integrate,
    lambda_threshold,
    monitor_descent,
    sweep_K,
    v_dot,
    verify_bifurcation,
)
from conftest import P_REF, lv_limit, pref, random_admissible
from test_lyapunov import specialized_disease_free, specialized_strain1

RUN_TOL = IntegratorConfig(t_end=1.0)  # default tolerances, for reference
_RUNS = {}


def _report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {status} - {detail}", flush=True)
    return ok


def by_kind(params):
    return {e.kind: e for e in closed_form_equilibria(params)}


def convergence_runs(key):
    """50 trajectories from random positive initial states, cached so the
    bound-margin criterion can reuse them."""
    if key in _RUNS:
        return _RUNS[key]
    scenarios = {
        "g2": (pref(K=2.0), 2000.0, 202),
        "g3": (pref(K=4.0), 2000.0, 303),
        "boundary": (pref(K=8.0 / 3.0), 5000.0, 404),
    }
    params, horizon, seed = scenarios[key]
    rng = np.random.default_rng(seed)
    cfg = IntegratorConfig(t_end=horizon, h_max=10.0)
    runs = []
    for _ in range(50):
        y0 = np.append(rng.uniform(0.05, 3.0, size=4), 0.0)
        runs.append(integrate(params, y0, cfg))
    _RUNS[key] = (params, runs)
    return _RUNS[key]


def test_criterion_01_closed_form_equilibria():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_res, worst_law = 0.0, 0.0
    for _ in range(200):
        p = random_admissible(rng)
        for eq in closed_form_equilibria(p):
            scale = 1.0 + float(np.abs(eq.y).max())
            worst_res = max(worst_res, eq.residual / scale)
            if eq.kind != "G1":
                rep = balance_checks(p, eq, tol=1e-9, strict=True)
                worst_law = max(worst_law, rep.law1_error / scale, rep.law2_error / scale)
    elapsed = time.time() - t0
    ok = worst_res <= 1e-10 and worst_law <= 1e-9 and elapsed < 5.0
    assert _report(
        1, ok,
        f"200 draws: residual <= {worst_res:.2e} (tol 1e-10), "
        f"balance <= {worst_law:.2e} (tol 1e-9), {elapsed:.2f}s (< 5 s)",
    )


def test_criterion_02_disease_free_global_stability():
    t0 = time.time()
    params, runs = convergence_runs("g2")
    target = np.array([1.5, 0.0, 0.0, 0.0])
    g2 = by_kind(params)["G2"]
    worst_dist, worst_vdot = 0.0, -math.inf
    for traj in runs:
        worst_dist = max(worst_dist, float(np.abs(traj.y[-1, :4] - target).max()))
        rep = monitor_descent(params, g2, traj)
        assert rep.truncated_at is None
        worst_vdot = max(worst_vdot, rep.max_v_dot)
    elapsed = time.time() - t0
    ok = worst_dist <= 1e-4 and worst_vdot <= 1e-10 and elapsed < 60.0
    assert _report(
        2, ok,
        f"50 runs to t=2000: |y - (1.5,0,0,0)| <= {worst_dist:.2e} (tol 1e-4), "
        f"max v_dot = {worst_vdot:.2e} (tol 1e-10), {elapsed:.1f}s (< 60 s)",
    )


def test_criterion_03_strain1_global_stability():
    t0 = time.time()
    params, runs = convergence_runs("g3")
    # the certificate I1* = 2 <= min(4, 5.5) holds at these rates
    gc = global_conditions(params)
    assert gc.g3_global and gc.i1_star == pytest.approx(2.0, abs=1e-12)
    target = np.array([2.0, 2.0, 0.0, 0.0])
    g3 = by_kind(params)["G3"]
    worst_dist, worst_vdot = 0.0, -math.inf
    for traj in runs:
        worst_dist = max(worst_dist, float(np.abs(traj.y[-1, :4] - target).max()))
        rep = monitor_descent(params, g3, traj)
        assert rep.truncated_at is None
        worst_vdot = max(worst_vdot, rep.max_v_dot)
    elapsed = time.time() - t0
    ok = worst_dist <= 1e-4 and worst_vdot <= 1e-10 and elapsed < 60.0
    assert _report(
        3, ok,
        f"50 runs to t=2000: |y - (2,2,0,0)| <= {worst_dist:.2e} (tol 1e-4), "
        f"max v_dot = {worst_vdot:.2e} (tol 1e-10), {elapsed:.1f}s (< 60 s)",
    )


def test_criterion_04_boundary_capacity():
    params, runs = convergence_runs("boundary")
    target = np.array([2.0, 0.0, 0.0, 0.0])
    worst = max(float(np.abs(t.y[-1, :4] - target).max()) for t in runs)
    rep = classify_local(params, by_kind(params)["G2"])
    marginal_ok = rep.marginal and not rep.local_stable
    converged_ok = worst <= 1e-3
    detail = (
        f"50 runs to t=5000: |y - (2,0,0,0)| <= {worst:.3e} (tol 1e-3) "
        f"[the slow mode decays like 6/t, so ~1.2e-3 at t=5000 for any "
        f"generic start]; classifier marginal={rep.marginal}, "
        f"stable={rep.local_stable} (expected marginal, not stable)"
    )
    assert _report(4, converged_ok and marginal_ok, detail)


def test_criterion_05_criterion_spectrum_consistency():
    t0 = time.time()
    rng = np.random.default_rng(105)
    checks, exceptions = 0, 0
    for _ in range(200):
        p = random_admissible(rng)
        eqs = by_kind(p)
        crit = block_criteria(p)
        d = derive(p)
        if crit.i1_star > 1e-6 and abs(crit.det_B) > 1e-6:
            rep = classify_local(p, eqs["G3"])
            agree = (
                rep.criterion_stable == (crit.det_B > 0.0)
                and rep.local_stable == rep.criterion_stable
                and (crit.i1_star < crit.lam) == rep.criterion_stable
            )
            checks += 1
            exceptions += 0 if agree else 1
        if (
            crit.i2_star > 1e-6
            and abs(crit.det_D) > 1e-6
            and abs(crit.trace_D) > 1e-6
        ):
            rep = classify_local(p, eqs["G4"])
            checks += 1
            exceptions += 0 if rep.local_stable == rep.criterion_stable else 1
        if abs(d.s_star_star - d.sigma1) > 1e-6:
            rep = classify_local(p, eqs["G2"])
            checks += 1
            exceptions += 0 if rep.local_stable == rep.criterion_stable else 1
    elapsed = time.time() - t0
    ok = exceptions == 0 and checks >= 200
    assert _report(
        5, ok,
        f"200 draws, {checks} margin-cleared comparisons, "
        f"{exceptions} exceptions (required 0), {elapsed:.1f}s",
    )


def test_criterion_06_thresholds():
    lam = lambda_threshold(P_REF)
    # independent quadratic-formula oracle on the hand-expanded polynomial
    a, b, c = -0.02, 0.03, 0.52
    oracle = (-b - math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    gc = global_conditions(P_REF)
    scale = abs(c) + abs(b) * lam + abs(a) * lam * lam
    resid = abs(delta_poly(P_REF, lam))
    rng = np.random.default_rng(106)
    ordering_ok = True
    for _ in range(200):
        g = global_conditions(random_admissible(rng))
        if math.isfinite(g.sigma_hat) or math.isfinite(g.sigma0):
            ordering_ok &= g.sigma0 <= g.sigma_hat
    ok = (
        abs(lam - 5.90388) <= 1e-4
        and abs(lam - oracle) <= 1e-10
        and abs(gc.sigma0 - 4.0) <= 1e-12
        and abs(gc.sigma_hat - 4.95194) <= 1e-4
        and resid <= 1e-12 * scale
        and ordering_ok
    )
    assert _report(
        6, ok,
        f"Lambda = {lam:.6f} (5.90388 +/- 1e-4, oracle gap {abs(lam - oracle):.1e}), "
        f"sigma0 = {gc.sigma0!r} (4 exactly), sigma_hat = {gc.sigma_hat:.6f} "
        f"(4.95194 +/- 1e-4), |Delta(Lambda)| = {resid:.1e} <= 1e-12 scale, "
        f"sigma0 <= sigma_hat on 200 draws: {ordering_ok}",
    )


def test_criterion_07_a_priori_bounds():
    worst = math.inf
    for key in ("g2", "g3", "boundary"):
        params, runs = convergence_runs(key)
        sss = derive(params).s_star_star
        for traj in runs:
            s_m = max(sss, float(traj.y[0, 0]))
            tol = 10.0 * (1e-10 + 1e-8 * s_m)
            rep = check_bounds(traj, params)
            worst = min(worst, rep.colo_margin_min / tol, rep.total_margin_min / tol)
    ok = worst >= -1.0
    assert _report(
        7, ok,
        f"150 trajectories: worst margin / (10 x local tolerance) = {worst:.3f} "
        f"(>= -1 required)",
    )


def test_criterion_08_lyapunov_derivative_correctness():
    # generic evaluation against the specialized forms
    rng = np.random.default_rng(108)
    p2, p4 = pref(K=2.0), pref(K=4.0)
    g2, g3 = by_kind(p2)["G2"], by_kind(p4)["G3"]
    worst_rel = 0.0
    for _ in range(1000):
        y = rng.uniform(0.05, 3.0, size=4)
        a = v_dot(p2, g2, y).v_dot_analytic
        b = specialized_disease_free(p2, y)
        worst_rel = max(worst_rel, abs(a - b) / max(abs(a), abs(b)))
        a = v_dot(p4, g3, y).v_dot_analytic
        b = specialized_strain1(p4, 2.0, y)
        worst_rel = max(worst_rel, abs(a - b) / max(abs(a), abs(b)))
    # analytic derivative against finite differences along trajectories
    worst_fd = 0.0
    cfg = IntegratorConfig(t_end=10.0, h_max=0.002)
    for params, ref in ((p2, g2), (p4, g3)):
        traj = integrate(params, np.array([1.0, 0.5, 0.4, 0.2, 0.0]), cfg)
        rep = monitor_descent(params, ref, traj)
        worst_fd = max(worst_fd, rep.max_fd_gap_rel)
    ok = worst_rel <= 1e-13 and worst_fd <= 1e-5
    assert _report(
        8, ok,
        f"1000 states x 2 references: specialized-form gap <= {worst_rel:.2e} "
        f"(tol 1e-13); fd gap along trajectories <= {worst_fd:.2e} (tol 1e-5)",
    )


def test_criterion_09_branch_expansion_at_vanishing_cross_transmission():
    t0 = time.time()
    failures = []
    for label, params in (
        ("vanishing limit", lv_limit(P_REF)),
        ("beta=gamma=1e-3", pref(beta1=1e-3, beta2=1e-3, gamma1=1e-3, gamma2=1e-3)),
    ):
        try:
            ver = verify_bifurcation(params, [-1e-5, -3e-5, -1e-4])
        except BracketError as exc:
            failures.append(f"{label}: {exc}")
            continue
        for e in ver.entries:
            if not (e["found"] and e["all_positive"]):
                failures.append(f"{label}: no positive branch root at D={e['d_target']}")
            elif abs(e["y3"] - e["y3_predicted"]) > 0.1 * abs(e["y3_predicted"]):
                failures.append(f"{label}: Y3 off the cD prediction at D={e['d_target']}")
        if ver.slope_rel_err > 0.05:
            failures.append(f"{label}: slope off by {ver.slope_rel_err:.1%}")
    elapsed = time.time() - t0
    ok = not failures and elapsed < 120.0
    detail = (
        f"{elapsed:.1f}s; " + ("all targets verified" if ok else " | ".join(failures))
    )
    if not ok:
        detail += (
            " [unattainable at these rates: I1* < (b-mu0)/alpha1 = 6 for every K "
            "while the threshold root Lambda is 6.5 (vanishing limit) resp. "
            "6.4997 (1e-3), so det B > 0.04 for all K; see "
            "test_bifurcation.py::TestVerifyBifurcation for the same checks "
            "passing on a reachable variant (eta1 = 0.3)]"
        )
    assert _report(9, ok, detail)


def test_criterion_10_transition_map():
    t0 = time.time()
    res = sweep_K(P_REF, 0.5, 8.0, 76, refine=True)
    transitions = res.transitions
    trans_ok = (
        len(transitions) == 1
        and transitions[0]["kind_lo"] == "G2"
        and transitions[0]["kind_hi"] == "G3"
        and abs(transitions[0]["k_mid"] - 2.6667) <= 1e-3
    )
    lo, hi = 8.0 / 3.0, 16.0 / 3.0
    inside = [r for r in res.records if lo < r.K <= hi]
    unique_ok = bool(inside) and all(
        r.stable_kind == "G3" and r.spectral_ok and r.criterion_ok for r in inside
    )
    no_multiple = all(r.stable_kind != "multiple" for r in res.records)
    elapsed = time.time() - t0
    ok = trans_ok and unique_ok and no_multiple
    k_mid = transitions[0]["k_mid"] if transitions else math.nan
    assert _report(
        10, ok,
        f"transition G2->G3 at K = {k_mid:.6f} (2.6667 +/- 1e-3); "
        f"{len(inside)} records on (8/3, 16/3] all G3-stable: {unique_ok}; "
        f"no 'multiple' records: {no_multiple}; {elapsed:.1f}s",
    )


def test_supplementary_branch_expansion_reachable_variant():
    # same substance as criterion 9 on rates whose threshold IS reachable:
    # eta1 = 0.3 puts Lambda at 4.33 < 6, beta_i = 1e-4 keeps the branch
    # interior, and the closed-form slope applies to < 0.1%
    p = pref(beta1=1e-4, beta2=1e-4, gamma1=0.0, gamma2=0.0, eta1=0.3)
    ver = verify_bifurcation(p, [-1e-5, -3e-5, -1e-4])
    ok = (
        all(e["found"] and e["all_positive"] for e in ver.entries)
        and all(
            abs(e["y3"] - e["y3_predicted"]) <= 0.1 * abs(e["y3_predicted"])
            for e in ver.entries
        )
        and ver.slope_rel_err <= 0.05
    )
    print(
        f"[supplementary] {'PASS' if ok else 'FAIL'} - reachable variant "
        f"(eta1=0.3, beta=1e-4): slope {ver.c_fit:.4f} vs closed form "
        f"{ver.c_closed_ref:.4f} ({ver.slope_rel_err:.2%} off)",
        flush=True,
    )
    assert ok
