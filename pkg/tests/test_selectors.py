import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incoherence_lab.covariance import ParamClass, Support, identity_cov, in_class
from incoherence_lab.dual import recovery_by_lambda_sweep
from incoherence_lab.generators import random_instance
from incoherence_lab.incoherence import lasso_incoherence
from incoherence_lab.selectors import (adaptive_lambda, conjecture1_search, embed, f2_holds, f3_holds,
                                       margin_of_beta, population_lasso, population_mr_select, population_omp,
                                       sign_patterns, top_s, truthfulness_search)

# A 4x4 correlation matrix (support {0, 1, 3}) where the max-min-1 ordering
# holds but the Lasso incoherence exceeds one.
F2_NOT_F3 = np.array([
    [1, .886922, .421555, .911512],
    [.886922, 1, .57043, .801753],
    [.421555, .57043, 1, .308084],
    [.911512, .801753, .308084, 1],
])


def cancellation_matrix():
    return np.array([[1, 0, 0.6], [0, 1, 0.6], [0.6, 0.6, 1]])


def f2_margin_by_loops(a, idx):
    off = [k for k in range(a.shape[0]) if k not in idx]
    worst = np.inf
    for signs in itertools.product((1, -1), repeat=len(idx)):
        beta = np.zeros(a.shape[0])
        beta[idx] = signs
        r = np.abs(a @ beta)
        worst = min(worst, min(r[j] for j in idx) - max(r[k] for k in off))
    return worst


class TestMarginalRegression:
    def test_identity(self):
        res = population_mr_select(identity_cov(5), embed(np.array([2.0, -1.5]), Support((1, 3), 5)), 2)
        assert set(res.selected) == {1, 3}
        assert res.recovers(Support((1, 3), 5))

    def test_cancellation(self):
        a = cancellation_matrix()
        res = population_mr_select(a, [1.0, -1.0, 0.0], 2)
        assert res.scores[2] == pytest.approx(0.0)
        assert res.recovers((0, 1))
        res = population_mr_select(a, [1.0, 1.0, 0.0], 2)
        assert res.scores[2] == pytest.approx(1.2)
        assert not res.recovers((0, 1))

    def test_zero_beta_ties(self):
        res = population_mr_select(identity_cov(4), np.zeros(4), 2)
        assert res.tie_flag
        assert res.selected == (0, 1)
        assert np.all(res.scores == 0)

    def test_top_s_ties(self):
        assert top_s(np.array([1.0, 3.0, 2.0, 2.0]), 2) == ((1, 2), True)
        assert top_s(np.array([1.0, 3.0, 2.0, 0.5]), 2) == ((1, 2), False)

    def test_margin(self):
        supp = Support((0, 1), 3)
        assert margin_of_beta(identity_cov(3), [1.0, 1.0, 0.0], supp, 0.0) == 1.0
        a = cancellation_matrix()
        m = margin_of_beta(a, [1.0, 1.0, 0.0], supp, 0.0)
        assert m == pytest.approx(-0.2)
        assert margin_of_beta(a, [1.0, -1.0, 0.0], supp, 0.0) == pytest.approx(1.0)
        assert margin_of_beta(a, [1.0, -1.0, 0.0], supp, 1.0 + 1e-9) < 0

    def test_sweep_witness_is_a_failure(self):
        cls = ParamClass(Support((0, 1), 3), 1.0, 2.0)
        v = recovery_by_lambda_sweep(cancellation_matrix(), cls, 0.0)
        assert not v.passed
        assert margin_of_beta(cancellation_matrix(), np.asarray(v.witness_beta), cls.support) <= 0


class TestLasso:
    def test_soft_threshold_at_identity(self):
        sol = population_lasso(identity_cov(4), [2.0, -2.0, 0.0, 0.0], 0.5)
        assert np.allclose(sol.beta_hat, [1.5, -1.5, 0, 0], atol=1e-12)
        assert sol.kkt_residual <= 1e-12

    def test_small_lambda_consistent_under_incoherence(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            sigma, supp, _ = random_instance(rng, 7, 3, "near_identity")
            if not lasso_incoherence(sigma, supp) < 0.95:
                continue
            for u in sign_patterns(supp.s):
                beta = embed(u, supp)
                assert population_lasso(sigma, beta, 1e-6).sign_consistent(beta)

    def test_incoherence_violated(self):
        a = cancellation_matrix()
        assert lasso_incoherence(a, (0, 1)) == pytest.approx(1.2)
        outcomes = []
        for u in sign_patterns(2):
            beta = embed(u, Support((0, 1), 3))
            outcomes.append(population_lasso(a, beta, 1e-4).sign_consistent(beta))
        assert not all(outcomes)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6), scale=st.sampled_from([1e-4, 1e-2, 0.3]))
    def test_kkt(self, seed, scale):
        rng = np.random.default_rng(seed)
        sigma, supp, _ = random_instance(rng, 7, 3, "near_identity")
        beta = embed(rng.choice([-1, 1], supp.s) * rng.uniform(1, 3, supp.s), supp)
        sol = population_lasso(sigma, beta, scale)
        assert np.abs(sol.dual_u).max() <= 1 + 1e-12
        nz = sol.beta_hat != 0
        assert np.array_equal(sol.dual_u[nz], np.sign(sol.beta_hat[nz]))
        assert sol.kkt_residual <= 1e-8
        a = np.asarray(sigma)
        assert np.abs(a @ (sol.beta_hat - beta) + scale * sol.dual_u).max() <= 1e-8

    def test_adaptive_lambda(self):
        supp = Support((0, 1), 3)
        assert adaptive_lambda(identity_cov(3), [2.0, -3.0, 0.0], supp) == pytest.approx(2e-4)


class TestOMP:
    def test_identity_order(self):
        res = population_omp(identity_cov(6), [0, 3.0, 0, -5.0, 1.0, 0], 3)
        assert res.selected == (3, 1, 4)

    def test_recovers_when_incoherent(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            sigma, supp, _ = random_instance(rng, 6, 3, "near_identity")
            if not f3_holds(sigma, supp):
                continue
            break
        else:
            pytest.skip("no incoherent instance drawn")
        for _ in range(10_000 // 10):
            b = rng.standard_normal(supp.s)
            if np.abs(b).min() < 1e-3:
                continue
            assert set(population_omp(sigma, embed(b, supp), supp.s).selected) == set(supp.indices)

    def test_first_pick_off_support_when_not_incoherent(self):
        supp = Support((0, 1, 3), 4)
        v = truthfulness_search(F2_NOT_F3, supp, "F3")
        assert not v.passed
        res = population_omp(F2_NOT_F3, np.asarray(v.witness_beta), 3)
        assert res.selected[0] == 2


class TestTruthfulness:
    @pytest.mark.parametrize("cond", ["F1", "F2", "F3", "F5"])
    def test_identity_passes(self, cond):
        v = truthfulness_search(identity_cov(5), (0, 2), cond, budget=500, spread=2.0)
        assert v.passed

    def test_f2_exact(self, rng):
        for _ in range(40):
            sigma, supp, _ = random_instance(rng, 7, 4)
            ok, m = f2_holds(sigma, supp)
            assert m == pytest.approx(f2_margin_by_loops(np.asarray(sigma), list(supp.indices)), abs=1e-12)
            assert truthfulness_search(sigma, supp, "F2", budget=200).passed == ok

    def test_f3_search_agrees_with_incoherence(self, rng):
        for _ in range(40):
            sigma, supp, _ = random_instance(rng, 7, 4)
            try:
                lai = lasso_incoherence(sigma, supp)
            except ValueError:
                continue
            if abs(lai - 1) < 1e-9:
                continue
            assert truthfulness_search(sigma, supp, "F3", budget=200).passed == (lai < 1)

    def test_f1_witness_in_class(self):
        a = cancellation_matrix()
        v = truthfulness_search(a, (0, 1), "F1", budget=200, rho=0.5, spread=3.0)
        assert not v.passed
        assert in_class(np.asarray(v.witness_beta), ParamClass(Support((0, 1), 3), 0.5, 3.0))
        assert margin_of_beta(a, np.asarray(v.witness_beta), Support((0, 1), 3)) <= 0

    def test_f2_without_f3(self):
        supp = Support((0, 1, 3), 4)
        assert f2_margin_by_loops(F2_NOT_F3, [0, 1, 3]) > 0.02
        assert f2_holds(F2_NOT_F3, supp)[0]
        inv = np.linalg.inv(F2_NOT_F3[np.ix_([0, 1, 3], [0, 1, 3])])
        scores = [np.abs(F2_NOT_F3 @ embed(inv @ u, supp)) for u in sign_patterns(3)]
        assert max(r[2] for r in scores) > 1.3  # on-support scores are all exactly one
        assert not f3_holds(F2_NOT_F3, supp)

    def test_conjecture_search_small(self):
        rep = conjecture1_search(300, 6, 3, seed=3)
        assert rep["instances"] == 300
        assert rep["f2_pass_f3_fail"] == len(rep["counterexamples"])
        assert rep["finding"] == (rep["f2_pass_f3_fail"] > 0)
        for p in (3, 6):
            assert f2_holds(identity_cov(p), (0,))[0] and f3_holds(identity_cov(p), (0,))
