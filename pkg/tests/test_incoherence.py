import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incoherence_lab.covariance import Support, block_example_cov, convex_combination, identity_cov
from incoherence_lab.generators import random_instance
from incoherence_lab.incoherence import (PreconditionError, ScanBudgetError, SingularBlockError,
                                         block_example_instance, example_region_closed_form, lasso_incoherence,
                                         mri_check, mri_check_orthonormal, mri_implies_rip_bound,
                                         mri_infinite_R_classification, mri_min_slack, pairwise_incoherence,
                                         pwi_implies_mri_bound, pwi_mri_threshold, rip_constant,
                                         small_eigen_obstruction)


def _with_entry(p, j, k, v):
    a = np.eye(p)
    a[j, k] = a[k, j] = v
    return a


def _orthonormal(cross):
    cross = np.asarray(cross, dtype=float)
    s = cross.size
    a = np.eye(s + 1)
    a[:s, s] = a[s, :s] = cross
    return a, Support(tuple(range(s)), s + 1)


def _mri_by_hand(a, idx, R, d):
    """Plain-loop evaluation of the MRI inequalities (no vectorisation)."""
    offc = [k for k in range(a.shape[0]) if k not in idx]
    worst = math.inf
    for j in idx:
        for k in offc:
            for sgn in (1, -1):
                l1 = sum(abs(a[i, j] + sgn * a[i, k]) for i in idx)
                lhs = R / (1 + R) * l1 + d / (1 + R)
                worst = min(worst, a[j, j] + sgn * a[j, k] - lhs)
    return worst


class TestMRI:
    def test_identity_slack_is_one_sixth(self):
        rep = mri_check(identity_cov(5), (0, 2), spread=2.0, slack=0.5)
        assert rep.holds
        assert all(m.slack == pytest.approx(1 / 6, abs=1e-15) for m in rep.margins)
        assert len(rep.margins) == 2 * 3 * 2

    def test_identity_fails_at_unit_slack(self):
        for R in (1.0, 3.0, math.inf):
            rep = mri_check(identity_cov(4), (0, 1), R, 1.0)
            assert not rep.holds
            assert rep.min_slack == 0.0

    def test_single_large_cross_entry(self):
        a = _with_entry(4, 0, 3, 0.9)
        rep = mri_check(a, (0, 1), 1.0, 0.0)
        assert rep.holds
        plus = [m for m in rep.margins if (m.j, m.k, m.sign) == (0, 3, "+")][0]
        minus = [m for m in rep.margins if (m.j, m.k, m.sign) == (0, 3, "-")][0]
        assert plus.lhs == pytest.approx(0.95) and plus.rhs == pytest.approx(1.9)
        assert minus.lhs == pytest.approx(0.05) and minus.rhs == pytest.approx(0.1)

    def test_binding_is_minimum(self):
        sigma, supp, _ = random_instance(np.random.default_rng(5), 7, 3, "random")
        rep = mri_check(sigma, supp, 1.5, 0.1)
        assert rep.min_slack == min(m.slack for m in rep.margins)

    def test_report_json(self):
        rep = mri_check(identity_cov(3), (0,), math.inf, 0.0)
        d = rep.to_dict()
        assert d["spread"] == "inf"
        assert d["condition_name"] == "mri"

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6), R=st.sampled_from([1.0, 1.7, 2.0, 4.0]), d=st.floats(0, 0.8))
    def test_matches_plain_loop(self, seed, R, d):
        sigma, supp, _ = random_instance(np.random.default_rng(seed), 7, 3)
        want = _mri_by_hand(np.asarray(sigma), list(supp.indices), R, d)
        assert mri_min_slack(sigma, supp, R, d) == pytest.approx(want, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_monotone_in_slack_and_spread(self, seed):
        rng = np.random.default_rng(seed)
        sigma, supp, _ = random_instance(rng, 7, 3, "near_identity")
        holds = [[mri_check(sigma, supp, R, d).holds for d in (0.0, 0.1, 0.3, 0.6)]
                 for R in (1.0, 1.5, 2.0, 4.0, math.inf)]
        for row in holds:
            assert all(a >= b for a, b in zip(row, row[1:]))
        for col in zip(*holds):
            assert all(a >= b for a, b in zip(col, col[1:]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), R=st.sampled_from([1.0, 2.0, 3.0]))
    def test_convexity(self, seed, R):
        rng = np.random.default_rng(seed)
        supp = None
        found = []
        for _ in range(200):
            sigma, s2, _ = random_instance(rng, 6, 2, "near_identity", p_min=6)
            supp = supp or s2
            if mri_check(sigma, supp, R, 0.0).holds:
                found.append(sigma)
            if len(found) == 2:
                break
        if len(found) < 2:
            return
        for t in (0.25, 0.5, 0.75):
            assert mri_check(convex_combination(t, *found), supp, R, 0.0).holds


class TestOrthonormal:
    def test_small_cross_holds(self):
        a, supp = _orthonormal([0.4, 0.4])
        assert mri_check_orthonormal(a, supp, 1.0, 0.0).holds
        assert mri_check(a, supp, 1.0, 0.0).holds

    def test_large_cross_fails(self):
        a, supp = _orthonormal([0.6, 0.6])
        assert not mri_check_orthonormal(a, supp, 2.0, 0.0).holds
        assert not mri_check(a, supp, 2.0, 0.0).holds

    def test_requires_identity_block(self):
        with pytest.raises(PreconditionError):
            mri_check_orthonormal(_with_entry(3, 0, 1, 0.1), (0, 1))

    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 10**6), R=st.sampled_from([1.0, 1.5, 2.0, 5.0, math.inf]),
           d=st.sampled_from([0.0, 0.2, 0.5]))
    def test_agrees_with_full_check(self, seed, R, d):
        sigma, supp, _ = random_instance(np.random.default_rng(seed), 8, 4, "orthonormal")
        full = mri_check(sigma, supp, R, d)
        short = mri_check_orthonormal(sigma, supp, R, d)
        if min(abs(full.min_slack), abs(short.min_slack)) > 1e-9:
            assert full.holds == short.holds


class TestInfiniteSpread:
    def test_identity(self):
        assert mri_infinite_R_classification(identity_cov(4), (0, 1), 0.5)
        assert not mri_infinite_R_classification(identity_cov(4), (0, 1), 1.0)

    def test_correlation_touching_support(self):
        assert not mri_infinite_R_classification(_with_entry(4, 0, 2, 0.1), (0, 1), 0.0)
        assert not mri_infinite_R_classification(_with_entry(4, 0, 1, 0.1), (0, 1), 0.0)

    def test_correlation_away_from_support_is_allowed(self):
        a = _with_entry(4, 2, 3, 0.5)
        assert mri_infinite_R_classification(a, (0, 1), 0.0)
        assert mri_check(a, (0, 1), math.inf, 0.0).holds

    def test_single_coordinate_support(self):
        a = _with_entry(3, 0, 1, 0.3)
        assert mri_infinite_R_classification(a, (0,), 0.5)
        assert not mri_infinite_R_classification(a, (0,), 0.8)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10**6), d=st.sampled_from([0.0, 0.3, 0.9]), sparse=st.booleans())
    def test_matches_limit_check(self, seed, d, sparse):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(2, 6))
        a = np.eye(p)
        for j, k in itertools.combinations(range(p), 2):
            if rng.random() < (0.2 if sparse else 0.8):
                a[j, k] = a[k, j] = rng.uniform(-0.3, 0.3)
        if np.linalg.eigvalsh(a)[0] < 0:
            return
        supp = Support(tuple(range(int(rng.integers(1, p)))), p)
        assert mri_infinite_R_classification(a, supp, d) == mri_check(a, supp, math.inf, d).holds


class TestOtherConditions:
    def test_lasso_identity(self):
        assert lasso_incoherence(identity_cov(5), (1, 2)) == 0.0

    def test_lasso_boundary_value(self):
        mu, r = 0.3, 2
        eta = (1 - mu) / r
        a, supp, _ = block_example_instance(mu, eta, r, signs=(1, -1))
        closed = eta * (r + mu * (3 * r - 4)) / ((1 - mu) * (1 - mu + r * mu))
        assert closed == pytest.approx(1.0)
        assert lasso_incoherence(a, supp) == pytest.approx(1.0, abs=1e-12)

    def test_lasso_matches_column_solves(self):
        sigma, supp, _ = random_instance(np.random.default_rng(9), 6, 3, "random", p_min=6)
        a = np.asarray(sigma)
        idx = list(supp.indices)
        cols = [np.abs(np.linalg.solve(a[np.ix_(idx, idx)], a[idx, k])).sum() for k in supp.complement]
        assert lasso_incoherence(sigma, supp) == pytest.approx(max(cols), rel=1e-12)

    def test_lasso_singular(self):
        a = np.ones((3, 3))
        with pytest.raises(SingularBlockError):
            lasso_incoherence(a, (0, 1))

    def test_pairwise(self):
        assert pairwise_incoherence(identity_cov(3)) == 0.0
        a = 0.8 * np.eye(4) + 0.2
        assert pairwise_incoherence(a) == pytest.approx(0.2)
        assert pairwise_incoherence(block_example_cov(4, (0, 1), [2], 0.3, 0.1)) == pytest.approx(0.3)

    def test_rip(self):
        assert rip_constant(identity_cov(5), 3) == 0.0
        a = 0.5 * np.eye(4) + 0.5
        assert rip_constant(a, 2) == pytest.approx(0.5)
        assert rip_constant(random_instance(np.random.default_rng(1), 6, 2)[0], 1) == 0.0
        with pytest.raises(ScanBudgetError):
            rip_constant(identity_cov(40), 20)

    def test_rip_matches_all_subsets(self):
        sigma, _, _ = random_instance(np.random.default_rng(2), 7, 3, "random", p_min=7)
        a = np.asarray(sigma) - np.eye(7)
        want = max(np.abs(np.linalg.eigvalsh(a[np.ix_(t, t)])).max()
                   for k in range(1, 4) for t in itertools.combinations(range(7), k))
        assert rip_constant(sigma, 3) == pytest.approx(want, abs=1e-14)

    def test_thresholds(self):
        assert pwi_mri_threshold(2, 1.0, 0.0) == pytest.approx(1 / 3)
        assert pwi_mri_threshold(3, 2.0, 0.0) == pytest.approx(1 / 9)
        assert pwi_mri_threshold(4, 2.0, 1.0) == 0.0
        assert not pwi_implies_mri_bound(0.01, 3, 1.0, 1.0)
        assert mri_implies_rip_bound(2, 1.0, 0.0) == pytest.approx(3.0)
        assert mri_implies_rip_bound(3, 6.0, 0.0) == pytest.approx(5 / 12)
        assert mri_implies_rip_bound(3, 2.0, 1.0) == 0.0

    def test_small_eigen(self):
        assert not small_eigen_obstruction(identity_cov(4), (0, 1), 1.0, 0.5)
        a = 0.0001 * np.eye(3) + 0.9999 * np.ones((3, 3))
        a[2, :2] = a[:2, 2] = 0.0
        lam = 0.01
        for R in (1.0, 2.0):
            edge = lam * math.sqrt(2) * (R + 1)
            assert small_eigen_obstruction(a, (0, 1), R, edge * 1.001)
            assert not small_eigen_obstruction(a, (0, 1), R, edge * 0.999)
        assert not small_eigen_obstruction(a, (0, 1), 1.0, 0.0)


class TestBlockRegion:
    def test_degenerate_zeta(self):
        # r = 2, R = 1: only |mu| < 1 and |eta| < (1 + mu)/2 remain
        assert example_region_closed_form(0.5, 0.74, 2, 1.0, "mri")
        assert not example_region_closed_form(0.5, 0.76, 2, 1.0, "mri")

    def test_mu_zero(self):
        assert example_region_closed_form(0.0, 0.5, 2, 1.0, "lasso")
        assert not example_region_closed_form(0.0, 0.5, 2, 1.0, "mri")
        assert example_region_closed_form(0.0, 0.4999, 2, 1.0, "mri")

    def test_mu_outside_zeta(self):
        assert not example_region_closed_form(0.6, 0.1, 2, 2.0, "mri")
        a, supp, _ = block_example_instance(0.6, 0.1, 2)
        assert not mri_check(a, supp, 2.0, 0.0).holds

    @pytest.mark.parametrize("r,R", [(2, 1.0), (2, 2.0), (3, 1.0), (3, 2.0)])
    def test_closed_form_matches_direct(self, r, R):
        lo = -1.0 / (r - 1)
        mus = lo + (np.arange(50) + 0.5) * (1 - lo) / 50
        etas = -1 + (np.arange(50) + 0.5) * 2 / 50
        for mu in mus:
            for eta in etas:
                a, supp, _ = block_example_instance(mu, eta, r)
                slack = mri_min_slack(a, supp, R, 0.0)
                if abs(slack) < 1e-9:
                    continue
                assert example_region_closed_form(mu, eta, r, R, "mri") == (slack > 0), (mu, eta)
