"""
Verification suites behind ``incoherence-lab verify`` and the acceptance tests.

Each suite returns a JSON-ready summary with ``counts`` (``consistent``,
``violated``, ``boundary`` and suite-specific extras) and the offending
instances.  A suite "holds" when ``counts["violated"] == 0``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .covariance import CovMatrix, ParamClass, Support, format_matrix_csv, random_unit_diag_cov
from .dual import (ab_lambda_gap, alpha, alpha_R_batch, alpha_R_bound_check, gamma_sets_batch,
                   infnorm_attained_at_j, lambda_grid)
from .generators import perturbed_identity, random_instance, random_support
from .incoherence import (BOUNDARY_BAND, SingularBlockError, _jsonable, lasso_incoherence, mri_check,
                          mri_check_orthonormal, mri_implies_rip_bound, mri_min_slack, pairwise_incoherence,
                          pwi_implies_mri_bound, rip_constant, small_eigen_inequality_gap,
                          small_eigen_obstruction)
from .selectors import (adaptive_lambda, conjecture1_search, embed, margin_of_beta, population_lasso,
                        sign_patterns)
from .witness import brute_force_recovery, construct_counterexample_orthonormal, verify_theorem1

SUITES = ("theorem1", "lemmas", "props", "conjecture1")


def _summary(name, counts, offending=(), **extra):
    out = {"suite": name, "counts": dict(counts), "offending": list(offending)}
    out.update(extra)
    return _jsonable(out)


def holds(summary: dict) -> bool:
    return summary["counts"].get("violated", 0) == 0


def _record(sigma, supp, **kw):
    rec = {"support": list(supp.indices), "matrix_csv": format_matrix_csv(sigma)}
    rec.update(kw)
    return rec


# --------------------------------------------------------------------------
# theorem-level suites
# --------------------------------------------------------------------------

def theorem1_suite(instances: int = 200, seed: int = 0, R_values=(2.0, 3.0), p_max: int = 8,
                   s_max: int = 3) -> dict:
    return verify_theorem1(instances, p_max, s_max, R_values, seed)


def sufficiency_r1_suite(instances: int = 200, seed: int = 0, p_max: int = 8, s_max: int = 4,
                         max_draws: int = 100_000) -> dict:
    """Where MRI holds at ``R = 1``, no sign vertex of the class may break recovery."""
    rng = np.random.default_rng(seed)
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "draws": 0}
    offending = []
    while counts["consistent"] + counts["violated"] + counts["boundary"] < instances:
        if counts["draws"] >= max_draws:
            break
        counts["draws"] += 1
        kind = "near_identity" if rng.random() < 0.7 else None
        sigma, supp, _ = random_instance(rng, p_max, s_max, kind)
        slack = float(rng.choice([0.0, rng.uniform(0.0, 0.5)]))
        report = mri_check(sigma, supp, 1.0, slack)
        if not report.holds:
            continue
        cls = ParamClass(supp, 1.0, 1.0)
        verdict = brute_force_recovery(sigma, cls, slack, grid_per_coord=1, random_draws=0)
        if min(report.min_slack, abs(verdict.margin)) < BOUNDARY_BAND:
            counts["boundary"] += 1
        elif verdict.passed:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append(_record(sigma, supp, slack=slack, margin=verdict.margin))
    return _summary("sufficiency_r1", counts, offending)


def necessity_orthonormal_suite(instances: int = 100, seed: int = 0, p_max: int = 8, s_max: int = 4,
                                R_values=(1.0, 1.5, 2.0, 3.0, 5.0), max_draws: int = 100_000) -> dict:
    """Every ``Sigma_SS = I`` instance that breaks the per-``k`` bound gets a failing witness."""
    rng = np.random.default_rng(seed)
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "draws": 0}
    offending = []
    while counts["consistent"] + counts["violated"] + counts["boundary"] < instances:
        if counts["draws"] >= max_draws:
            break
        counts["draws"] += 1
        sigma, supp, _ = random_instance(rng, p_max, s_max, "orthonormal", s_min=1)
        R = float(rng.choice(R_values))
        slack = float(rng.choice([0.0, rng.uniform(0.0, 0.5)]))
        bound = mri_check_orthonormal(sigma, supp, R, slack)
        if bound.holds:
            continue
        if abs(bound.min_slack) < BOUNDARY_BAND:
            counts["boundary"] += 1
            continue
        verdict = construct_counterexample_orthonormal(sigma, ParamClass(supp, 1.0, R), slack)
        m = margin_of_beta(sigma, verdict.witness_beta.beta, supp, slack)
        if not verdict.passed and m <= 0:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append(_record(sigma, supp, spread=R, slack=slack, margin=m))
    return _summary("necessity_orthonormal", counts, offending)


# --------------------------------------------------------------------------
# lemmas
# --------------------------------------------------------------------------

def _random_phi(rng, m, s):
    phi = rng.standard_normal((m, s)) * np.exp(rng.uniform(-1, 1, (m, 1)))
    # sprinkle exact zeros and near-dominant coordinates
    phi[rng.random((m, s)) < 0.1] = 0.0
    boost = rng.random(m) < 0.3
    phi[boost, 0] *= rng.uniform(2, 6, boost.sum())
    return phi


def lemma_orthonormal_agreement(instances: int, rng, p_max: int = 8, s_max: int = 4) -> dict:
    counts = {"consistent": 0, "violated": 0, "boundary": 0}
    offending = []
    for _ in range(instances):
        sigma, supp, _ = random_instance(rng, p_max, s_max, "orthonormal")
        R = float(rng.choice([1.0, 1.5, 2.0, 3.0, 10.0, math.inf]))
        slack = float(rng.choice([0.0, rng.uniform(0, 0.6)]))
        full = mri_check(sigma, supp, R, slack)
        short = mri_check_orthonormal(sigma, supp, R, slack)
        if min(abs(full.min_slack), abs(short.min_slack)) < BOUNDARY_BAND:
            counts["boundary"] += 1
        elif full.holds == short.holds:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append(_record(sigma, supp, spread=R, slack=slack))
    return counts, offending


def lemma_ab_lambda(pairs: int, rng, resolution: float = 1e-3) -> dict:
    grid = lambda_grid(int(round(2 / resolution)) + 1)
    counts = {"consistent": 0, "violated": 0}
    for _ in range(pairs):
        a, b = rng.standard_normal(2) * rng.uniform(0.1, 3)
        gap = ab_lambda_gap(a, b, grid)
        ok = -1e-12 <= gap <= resolution * abs(b) + 1e-12
        counts["consistent" if ok else "violated"] += 1
    return counts


def lemma_dual_sets(draws: int, rng, s_max: int = 6, batch: int = 1000) -> dict:
    """Containments of the inner and outer sets, plus the ``R = 2`` collapse and the bound."""
    counts = {"consistent": 0, "violated": 0, "inner_only": 0, "dual_not_inner": 0,
              "r2_dual_not_inner": 0, "bound_checked": 0, "bound_violated": 0, "alpha_mismatch": 0}
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        s = int(rng.integers(1, s_max + 1))
        R = float(rng.choice([1.0, rng.uniform(1.0, 2.0), 2.0, rng.uniform(2.0, 5.0)]))
        rho = float(rng.uniform(0.5, 2.0))
        slack = float(rng.choice([0.0, rng.uniform(0.0, 1.0)]))
        cls = ParamClass(Support(tuple(range(s)), s + 1), rho, R)
        phi = _random_phi(rng, m, s)
        inner, outer = gamma_sets_batch(phi, cls, slack)
        dual = alpha_R_batch(phi, cls) > slack
        bad = (inner & ~dual) | (dual & ~inner & ~outer)
        counts["violated"] += int(bad.sum())
        counts["consistent"] += int((~bad).sum())
        counts["inner_only"] += int(inner.sum())
        extra = dual & ~inner
        counts["dual_not_inner"] += int(extra.sum())
        if R >= 2:
            counts["r2_dual_not_inner"] += int(extra.sum())
        for row in phi[extra][:20]:
            full = np.zeros(s + 1)
            full[:s] = row
            counts["bound_checked"] += 1
            if not alpha_R_bound_check(full, cls, slack, tol=1e-9):
                counts["bound_violated"] += 1
        if R == 1.0:
            unit = ParamClass(cls.support, 1.0, 1.0)
            a1 = alpha_R_batch(phi[:50], unit)
            for row, v in zip(phi[:50], a1):
                full = np.zeros(s + 1)
                full[:s] = row
                if abs(alpha(full, cls.support).value - v) > 1e-9 * (1 + abs(v)):
                    counts["alpha_mismatch"] += 1
        done += m
    counts["violated"] += counts["r2_dual_not_inner"] + counts["bound_violated"] + counts["alpha_mismatch"]
    return counts


def lemma_infnorm(instances: int, rng, p_max: int = 8, s_max: int = 4) -> dict:
    counts = {"consistent": 0, "violated": 0, "vacuous": 0}
    grid = lambda_grid(101)
    for _ in range(instances):
        sigma, supp, _ = random_instance(rng, p_max, s_max, "near_identity")
        R = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        cls = ParamClass(supp, 1.0, R)
        for j in supp.indices:
            for k in supp.complement:
                res = infnorm_attained_at_j(sigma, cls, j, k, grid)
                if res is None:
                    counts["vacuous"] += 1
                else:
                    counts["consistent" if res else "violated"] += 1
    return counts


def lemmas_suite(instances: int = 500, seed: int = 0, ab_pairs: int = 10_000, phi_draws: int = 100_000) -> dict:
    rng = np.random.default_rng(seed)
    ortho, offending = lemma_orthonormal_agreement(instances, rng)
    parts = {
        "orthonormal_agreement": ortho,
        "ab_lambda": lemma_ab_lambda(ab_pairs, rng),
        "dual_sets": lemma_dual_sets(phi_draws, rng),
        "infnorm": lemma_infnorm(max(1, instances // 5), rng),
    }
    counts = {
        "consistent": sum(p["consistent"] for p in parts.values()),
        "violated": sum(p["violated"] for p in parts.values()),
        "boundary": ortho["boundary"],
    }
    return _summary("lemmas", counts, offending, parts=parts)


# --------------------------------------------------------------------------
# propositions
# --------------------------------------------------------------------------

def _all_supports(p: int, s: int):
    for size in range(1, s + 1):
        for c in itertools.combinations(range(p), size):
            yield Support(c, p)


def mri_over_all_supports(sigma, s: int, spread: float, slack: float) -> tuple[bool, float]:
    worst = math.inf
    for supp in _all_supports(sigma.p, s):
        worst = min(worst, mri_min_slack(sigma, supp, spread, slack))
        if worst <= 0:
            return False, worst
    return True, worst


def prop_pwi(instances: int, rng, p_max: int = 10, s_max: int = 4) -> dict:
    """PWI below the threshold forces MRI on every support of size at most ``s``."""
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "premise_held": 0}
    offending = []
    for _ in range(instances):
        p = int(rng.integers(3, p_max + 1))
        s = int(rng.integers(2, min(s_max, p - 1) + 1))
        R = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        slack = float(rng.uniform(0.0, 0.5))
        thr = (1 - slack) / (2 * R * (s - 1) + 1)
        sigma = perturbed_identity(rng, p, thr * rng.uniform(0.5, 1.6))
        pw = pairwise_incoherence(sigma)
        if not pwi_implies_mri_bound(pw, s, R, slack):
            counts["consistent"] += 1
            continue
        counts["premise_held"] += 1
        ok, worst = mri_over_all_supports(sigma, s, R, slack)
        if abs(worst) < BOUNDARY_BAND:
            counts["boundary"] += 1
        elif ok:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append({"prop": "pwi", "matrix_csv": format_matrix_csv(sigma), "s": s,
                              "spread": R, "slack": slack})
    return counts, offending


def prop_rip(instances: int, rng, p_max: int = 10, s_max: int = 4) -> dict:
    """MRI on every support of size at most ``s`` bounds ``delta_2s``."""
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "premise_held": 0}
    offending = []
    for _ in range(instances):
        p = int(rng.integers(4, p_max + 1))
        s = int(rng.integers(2, min(s_max, p // 2) + 1))
        R = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        slack = float(rng.choice([0.0, rng.uniform(0.0, 0.5)]))
        size = rng.uniform(0.02, 0.6) / (R * s)
        sigma = perturbed_identity(rng, p, size)
        ok, worst = mri_over_all_supports(sigma, s, R, slack)
        if not ok:
            counts["consistent"] += 1
            continue
        counts["premise_held"] += 1
        delta = rip_constant(sigma, 2 * s)
        bound = mri_implies_rip_bound(s, R, slack)
        if min(abs(worst), abs(bound - delta)) < BOUNDARY_BAND:
            counts["boundary"] += 1
        elif delta < bound:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append({"prop": "rip", "matrix_csv": format_matrix_csv(sigma), "s": s,
                              "spread": R, "slack": slack, "delta": delta, "bound": bound})
    return counts, offending


def _near_singular(rng, p, supp):
    """Correlation matrix whose ``Sigma_SS`` is close to singular."""
    s = supp.s
    base = np.asarray(random_unit_diag_cov(p, int(rng.integers(2**31)), 1.0))
    v = rng.standard_normal(s)
    v /= np.linalg.norm(v)
    eps = 10 ** rng.uniform(-6, -1)
    idx = list(supp.indices)
    block = (1 - eps) * (np.eye(s) - np.outer(v, v)) + eps * np.eye(s)
    # rescale to unit diagonal, then splice into the base matrix
    d = 1 / np.sqrt(np.diag(block))
    block = block * d[:, None] * d[None, :]
    a = base.copy()
    a[np.ix_(idx, idx)] = block
    np.fill_diagonal(a, 1.0)
    try:
        return CovMatrix(a)
    except ValueError:
        return None


def prop_small_eigen(instances: int, rng, p_max: int = 10, s_max: int = 4) -> dict:
    """The eigenvalue inequality always holds; the obstruction always excludes MRI."""
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "obstructed": 0}
    offending = []
    done = 0
    while done < instances:
        p = int(rng.integers(3, p_max + 1))
        supp = random_support(rng, p, s_max)
        if rng.random() < 0.5 and supp.s >= 2:
            sigma = _near_singular(rng, p, supp)
            if sigma is None:
                continue
        else:
            sigma, supp, _ = random_instance(rng, p_max, s_max)
        done += 1
        R = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        slack = float(rng.uniform(0.0, 1.0))
        idx = list(supp.indices)
        if np.linalg.eigvalsh(np.asarray(sigma)[np.ix_(idx, idx)])[0] <= 0:
            counts["boundary"] += 1
            continue
        gap = small_eigen_inequality_gap(sigma, supp)
        bad = gap < -1e-12
        if small_eigen_obstruction(sigma, supp, R, slack):
            counts["obstructed"] += 1
            if mri_check(sigma, supp, R, slack).holds:
                bad = True
        if bad:
            counts["violated"] += 1
            offending.append({"prop": "small_eigen", "matrix_csv": format_matrix_csv(sigma),
                              "support": idx, "spread": R, "slack": slack, "gap": gap})
        else:
            counts["consistent"] += 1
    return counts, offending


def props_suite(instances: int = 500, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    parts, offending = {}, []
    for name, fn in (("pwi", prop_pwi), ("rip", prop_rip), ("small_eigen", prop_small_eigen)):
        c, off = fn(instances, rng)
        parts[name] = c
        offending += off
    counts = {k: sum(p.get(k, 0) for p in parts.values()) for k in ("consistent", "violated", "boundary")}
    return _summary("props", counts, offending, parts=parts)


# --------------------------------------------------------------------------
# Lasso and conjecture
# --------------------------------------------------------------------------

def lasso_sign_consistency(sigma, supp, lam_scale: float = 1.0) -> tuple[bool, float]:
    """Sign consistency of the population Lasso for every sign pattern of ``beta*_S``.

    Returns ``(all consistent, largest KKT residual)``.
    """
    worst = 0.0
    ok = True
    for u in sign_patterns(supp.s):
        beta = embed(u, supp)
        lam = adaptive_lambda(sigma, beta, supp) * lam_scale
        sol = population_lasso(sigma, beta, lam)
        worst = max(worst, sol.kkt_residual)
        ok &= sol.sign_consistent(beta)
    return bool(ok), worst


def lasso_suite(instances: int = 100, seed: int = 0, p_max: int = 8, s_max: int = 4) -> dict:
    rng = np.random.default_rng(seed)
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "lai_below_one": 0, "unstable": 0}
    offending = []
    max_kkt = 0.0
    done = 0
    while done < instances:
        sigma, supp, _ = random_instance(rng, p_max, s_max)
        try:
            lai = lasso_incoherence(sigma, supp)
        except SingularBlockError:
            continue
        done += 1
        if abs(lai - 1) < BOUNDARY_BAND:
            counts["boundary"] += 1
            continue
        verdicts = []
        for scale in (1.0, 0.5, 0.25):
            ok, kkt = lasso_sign_consistency(sigma, supp, scale)
            verdicts.append(ok)
            max_kkt = max(max_kkt, kkt)
        if len(set(verdicts)) > 1:
            counts["unstable"] += 1
        counts["lai_below_one"] += int(lai < 1)
        if verdicts[0] == (lai < 1) and len(set(verdicts)) == 1:
            counts["consistent"] += 1
        else:
            counts["violated"] += 1
            offending.append(_record(sigma, supp, lai=lai, consistent=verdicts))
    return _summary("lasso", counts, offending, max_kkt_residual=max_kkt)


def conjecture1_suite(instances: int = 10_000, seed: int = 0, p_max: int = 8, s_max: int = 4) -> dict:
    rep = conjecture1_search(instances, p_max, s_max, seed)
    counts = {"consistent": rep["f2_pass"] - rep["f2_pass_f3_fail"], "violated": 0, "boundary": 0,
              "f2_pass": rep["f2_pass"], "counterexamples": rep["f2_pass_f3_fail"]}
    return _summary("conjecture1", counts, rep["counterexamples"], finding=rep["finding"],
                    instances=instances)


def run_suite(name: str, instances: int | None, seed: int) -> dict:
    if name == "theorem1":
        return theorem1_suite(instances or 200, seed)
    if name == "lemmas":
        return lemmas_suite(instances or 500, seed)
    if name == "props":
        return props_suite(instances or 500, seed)
    if name == "conjecture1":
        return conjecture1_suite(instances or 10_000, seed)
    raise ValueError(f"unknown suite {name!r}")
