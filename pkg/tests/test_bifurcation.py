"""Capacity sweeps, threshold expansion, and branch verification."""

from dataclasses import replace

import numpy as np
import pytest

from cosir import (
    BracketError,
    UsageError,
    block_criteria,
    closed_form_equilibria,
    classify_local,
    expansion_near_sigma_hat,
    find_G5,
    lambda_threshold,
    sweep_K,
    tune_capacity,
    verify_bifurcation,
    write_sweep_csv,
)
from conftest import P_REF, lv_limit, pref

# near-vanishing cross transmission with a larger coinfection acquisition
# rate: the block determinant does reach negative values along K here
NEAR_LV = pref(beta1=1e-4, beta2=1e-4, gamma1=0.0, gamma2=0.0, eta1=0.3)


class TestSweep:
    def test_reference_regions(self):
        res = sweep_K(P_REF, 0.5, 8.0, 31)
        for rec in res.records:
            expected = "G2" if rec.K <= 8.0 / 3.0 else "G3"
            assert rec.stable_kind == expected
            assert rec.spectral_ok and rec.criterion_ok
        assert [r.K for r in res.records] == sorted(r.K for r in res.records)

    def test_transition_located(self):
        res = sweep_K(P_REF, 0.5, 8.0, 31)
        assert len(res.transitions) == 1
        tr = res.transitions[0]
        assert tr["kind_lo"] == "G2" and tr["kind_hi"] == "G3"
        assert tr["k_hi"] - tr["k_lo"] <= 1e-6
        assert tr["k_mid"] == pytest.approx(8.0 / 3.0, abs=1e-5)

    def test_threshold_markers(self):
        # stay below K = 8 where S** meets sigma0 exactly (the strict
        # marker is then at the mercy of the last floating-point ulp)
        res = sweep_K(P_REF, 0.5, 7.9, 16, refine=False)
        for rec in res.records:
            assert rec.crossed_sigma1 == (rec.s_star_star > 2.0)
            # the global and local thresholds are never crossed on this range
            assert not rec.crossed_sigma0 and not rec.crossed_sigma_hat
            assert rec.sigma0 <= rec.sigma_hat

    def test_simulation_verification(self):
        res = sweep_K(P_REF, 1.0, 7.0, 4, verify_by_simulation=True, rng_seed=7,
                      refine=False)
        assert all(r.simulation_ok for r in res.records)

    def test_simulation_requires_seed(self):
        with pytest.raises(UsageError):
            sweep_K(P_REF, 1.0, 7.0, 4, verify_by_simulation=True)

    def test_degenerate_grid_rejected(self):
        with pytest.raises(UsageError):
            sweep_K(P_REF, 2.0, 1.0, 10)
        with pytest.raises(UsageError):
            sweep_K(P_REF, 1.0, 2.0, 1)

    def test_no_multiple_in_certified_region(self):
        res = sweep_K(P_REF, 0.5, 8.0, 31, refine=False)
        assert all(r.stable_kind != "multiple" for r in res.records)

    def test_csv_export(self, tmp_path):
        res = sweep_K(P_REF, 0.5, 8.0, 7, refine=False)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(res, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",") == [
            "K", "s_star_star", "stable_kind", "Y0", "Y1", "Y2", "Y3",
            "det_B", "Lambda", "sigma0", "sigma_hat", "max_re", "verified_by_sim",
        ]
        assert len(lines) == 8
        first = lines[1].split(",")
        assert float(first[0]) == 0.5 and first[2] == "G2"
        for tok in (first[0], first[1], first[3]):
            assert repr(float(tok)) == tok


class TestDetBAlongK:
    def test_single_sign_change(self):
        lam = lambda_threshold(P_REF)
        k_star = 16.0 / (6.0 - lam)
        ks = np.linspace(150.0, 180.0, 61)
        vals = [block_criteria(pref(K=k)).det_B for k in ks]
        signs = np.sign(vals)
        flips = np.count_nonzero(np.diff(signs))
        assert flips == 1
        assert ks[int(np.argmax(np.diff(signs) != 0))] < k_star < 180.0

    def test_tune_capacity_hits_target(self):
        for d in (-1e-3, -1e-5, 0.0):
            k = tune_capacity(P_REF, d)
            assert block_criteria(pref(K=k)).det_B == pytest.approx(d, abs=1e-12)

    def test_unreachable_target_names_interval(self):
        with pytest.raises(BracketError, match="scanned K"):
            tune_capacity(lv_limit(P_REF), -1e-4)


class TestExpansion:
    def test_reference_consistency(self):
        exp = expansion_near_sigma_hat(P_REF, estimate_c=False)
        assert exp.D == pytest.approx(0.5, abs=1e-12)
        assert exp.D == pytest.approx(block_criteria(P_REF).det_B, abs=0.0)
        assert exp.A_scalar == pytest.approx(0.9, abs=1e-12)   # mu3 - a3 s1 - e1 I1*
        assert exp.B_scalar == pytest.approx(0.6, abs=1e-12)   # a2 (s2 - s1) + g2 I1*
        # lambda* = b2 s1 / (mu2 + g2 I1* - a2 s1) = 0.1 / 0.6
        assert exp.lambda_star == pytest.approx(1.0 / 6.0, rel=1e-12)
        # xi0 = (e1 + lambda* g1 - b1 s1 / I1*) / a1
        assert exp.xi0_coeff == pytest.approx((0.2 + 0.1 / 6.0 - 0.05) / 0.5, rel=1e-12)
        # xi1_partial = -(lambda* a2) / a1 - (b / (a1 K)) xi0 = -0.8 here
        assert exp.xi1_partial == pytest.approx(-0.8, rel=1e-12)

    def test_requires_strain1_existence(self):
        with pytest.raises(UsageError):
            expansion_near_sigma_hat(pref(K=2.0))

    def test_zero_determinant_predicts_zero_branch(self):
        k0 = tune_capacity(P_REF, 0.0)
        exp = expansion_near_sigma_hat(pref(K=k0), estimate_c=False)
        assert abs(exp.y3_predicted) <= 1e-10

    def test_closed_form_slope_in_vanishing_limit(self):
        p = replace(NEAR_LV, K=tune_capacity(NEAR_LV, -1e-4))
        exp = expansion_near_sigma_hat(p, estimate_c=True)
        b_scalar = p.alpha2 * 1.0  # sigma2 - sigma1 = 1, gamma2 = 0
        expected = -p.K * p.alpha1 ** 2 / (b_scalar * p.b * p.eta1 ** 2)
        assert exp.c_closed_lv == pytest.approx(expected, rel=1e-9)
        assert exp.c_numeric is not None
        assert exp.c_numeric == pytest.approx(exp.c_closed_lv, rel=0.05)

    def test_unreachable_threshold_noted(self):
        p = lv_limit(P_REF)
        exp = expansion_near_sigma_hat(p, estimate_c=True)
        assert exp.c_numeric is None
        assert any("slope not estimated" in n for n in exp.notes)


class TestVerifyBifurcation:
    def test_branch_root_positive_and_linear(self):
        ver = verify_bifurcation(NEAR_LV, [-1e-5, -3e-5, -1e-4])
        assert all(e["found"] for e in ver.entries)
        for e in ver.entries:
            assert e["all_positive"]
            assert abs(e["y3"] - e["y3_predicted"]) <= 0.1 * abs(e["y3_predicted"])
        assert ver.slope_rel_err <= 0.05
        # leading-order linearity between two targets
        e1, e2 = ver.entries[0], ver.entries[2]
        ratio = e1["y3"] / e2["y3"]
        assert ratio == pytest.approx(e1["d_target"] / e2["d_target"], rel=0.02)

    def test_branch_root_measured_stable(self):
        ver = verify_bifurcation(NEAR_LV, [-1e-4])
        entry = ver.entries[0]
        assert entry["stable"] and entry["max_re"] < 0.0

    def test_positive_det_b_leaves_strain1_stable(self):
        # just below the threshold capacity: no branch root near the
        # strain-1 point, which remains locally stable
        lam = lambda_threshold(P_REF)
        k_star = 16.0 / (6.0 - lam)
        p = pref(K=0.995 * k_star)
        crit = block_criteria(p)
        assert crit.det_B > 0.0
        g3 = {e.kind: e for e in closed_form_equilibria(p)}["G3"]
        assert classify_local(p, g3).local_stable
        d = cosir_derive(p)
        for root in find_G5(p, grid_density=6):
            assert np.abs(root.y - g3.y).max() > 0.5

    def test_full_reference_rates_linearity(self):
        # the closed-form slope no longer applies at beta = 0.05, gamma = 0.1,
        # but the branch is still linear in det B
        ver = verify_bifurcation(P_REF, [-1e-5, -1e-4], smallness_tol=1.0)
        e1, e2 = ver.entries
        assert e1["found"] and e2["found"]
        assert e1["all_positive"] and e2["all_positive"]
        assert e1["y3"] / e2["y3"] == pytest.approx(0.1, rel=0.02)

    def test_smallness_guard(self):
        with pytest.raises(UsageError):
            verify_bifurcation(P_REF, [-1e-4])

    def test_nonnegative_target_rejected(self):
        with pytest.raises(UsageError):
            verify_bifurcation(NEAR_LV, [1e-4])

    def test_unreachable_regime_raises(self):
        with pytest.raises(BracketError):
            verify_bifurcation(lv_limit(P_REF), [-1e-4])


def cosir_derive(p):
    from cosir import derive

    return derive(p)
