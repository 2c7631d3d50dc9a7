"""
Counterexample construction and brute-force recovery oracles.

``brute_force_recovery`` never looks at the dual machinery: it evaluates the MR
margin on explicit members of the class.  ``verify_theorem1`` cross-checks the
closed-form MRI test, the lambda sweep and the brute-force oracle.
"""

from __future__ import annotations

import math

import numpy as np

from .covariance import CoefVector, ParamClass, as_array, format_matrix_csv, spread_to_json
from .dual import recovery_by_lambda_sweep
from .generators import random_instance
from .incoherence import BOUNDARY_BAND, PreconditionError, _jsonable, mri_check, mri_check_orthonormal
from .selectors import (ARRANGEMENT_MAX_S, arrangement_candidates, embed, margin_of_beta, margins_of_betas,
                        random_class_members, sign_patterns, _violated_pair)
from .verdict import RecoveryVerdict

WITNESS_EPS = 1e-9


def _is_orthonormal(a, supp) -> bool:
    idx = list(supp.indices)
    return bool(np.array_equal(a[np.ix_(idx, idx)], np.eye(supp.s)))


def construct_counterexample_orthonormal(sigma, class_of: ParamClass, slack: float = 0.0) -> RecoveryVerdict:
    """Explicit failing ``beta`` when ``Sigma_SS = I`` and the per-``k`` bound fails.

    For the most violated ``k``: ``beta_{j*} = sign(Sigma_{j*k}) rho'`` at
    ``j* = argmin_j |Sigma_jk|`` and ``beta_j = sign(Sigma_jk) R rho'`` elsewhere,
    with ``rho' = rho (1 + 1e-9)``.
    """
    a = as_array(sigma)
    supp = class_of.support
    if not _is_orthonormal(a, supp):
        raise PreconditionError("Sigma_SS must equal the identity")
    if not class_of.finite:
        raise ValueError("the construction needs a finite spread")
    report = mri_check_orthonormal(a, supp, class_of.spread, slack / class_of.rho)
    if report.holds:
        return RecoveryVerdict(True, None, None, report.min_slack, "constructed", True)
    k = report.binding.k
    idx = list(supp.indices)
    col = a[idx, k]
    jstar = int(np.argmin(np.abs(col)))
    rho_w = class_of.rho * (1 + WITNESS_EPS)
    sgn = np.where(col < 0, -1.0, 1.0)
    beta_s = sgn * class_of.spread * rho_w
    beta_s[jstar] = sgn[jstar] * rho_w
    beta = embed(beta_s, supp)
    margin = margin_of_beta(a, beta, supp, slack)
    return RecoveryVerdict(False, CoefVector(beta, class_of), (idx[jstar], k), margin, "constructed", True,
                           {"bound_slack": report.min_slack})


def magnitude_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if points <= 1 or hi == lo:
        return np.unique([lo, hi])
    g = np.linspace(lo, hi, points)
    g[0], g[-1] = lo, hi
    return g


def brute_force_recovery(sigma, class_of: ParamClass, slack: float = 0.0, grid_per_coord: int = 5,
                         random_draws: int = 2000, seed: int = 0) -> RecoveryVerdict:
    """Minimise the MR margin over explicit class members.

    Candidates are all sign patterns times a magnitude grid on
    ``[rho (1 + 1e-9), R rho (1 + 1e-9)]`` (grid mode needs ``s <= 4``), uniform
    draws from the same box, and for ``s <= 8`` the box vertices plus the
    points where an on-support score changes sign.  The last set contains a
    minimiser of the margin over the closed box, so the verdict is exact then.
    """
    a = as_array(sigma)
    supp = class_of.support
    s = supp.s
    if not class_of.finite:
        raise ValueError("brute force needs a finite spread")
    lo = class_of.rho * (1 + WITNESS_EPS)
    hi = class_of.spread * lo
    parts = []
    if s <= 4 and grid_per_coord >= 1:
        g = magnitude_grid(lo, hi, grid_per_coord)
        mesh = np.stack(np.meshgrid(*([g] * s), indexing="ij"), axis=-1).reshape(-1, s)
        parts.append((sign_patterns(s, half=True)[:, None, :] * mesh[None]).reshape(-1, s))
    if random_draws > 0:
        rng = np.random.default_rng([seed, s, supp.p])
        parts.append(random_class_members(rng, random_draws, s, lo, hi))
    exact = s <= ARRANGEMENT_MAX_S
    if exact:
        parts.append(arrangement_candidates(a, supp, lo, hi))
    if not parts:
        raise ValueError("no candidates requested")
    cands = np.concatenate(parts)
    margins = margins_of_betas(a, cands, supp, slack)
    i = int(np.argmin(margins))
    margin = float(margins[i])
    detail = {"candidates": int(cands.shape[0])}
    if margin > 0:
        return RecoveryVerdict(True, None, None, margin, "brute_force", exact, detail)
    beta = embed(cands[i], supp)
    return RecoveryVerdict(False, CoefVector(beta, class_of), _violated_pair(a, beta, supp), margin,
                           "brute_force", exact, detail)


def _instance_record(sigma, supp, spread, slack, rho, kind, why):
    return {
        "reason": why,
        "kind": kind,
        "support": list(supp.indices),
        "spread": spread_to_json(spread),
        "slack": slack,
        "rho": rho,
        "matrix_csv": format_matrix_csv(sigma),
    }


def check_theorem1_instance(sigma, supp, spread: float, slack: float, rho: float = 1.0,
                            band: float = BOUNDARY_BAND, brute_kwargs: dict | None = None) -> dict:
    """Compare the three recovery decisions on one instance.

    Returns ``{"status": consistent | violated | boundary, ...}``.  Sufficiency
    (MRI implies recovery) is checked for every spread, necessity only for
    ``R >= 2`` or ``Sigma_SS = I``; the two oracles must always agree.
    """
    a = as_array(sigma)
    cls = ParamClass(supp, rho, spread)
    d = slack / rho
    mri = mri_check(a, supp, spread, d)
    sweep = recovery_by_lambda_sweep(a, cls, slack)
    brute = brute_force_recovery(a, cls, slack, **(brute_kwargs or {}))
    # a failing sweep at zero slack reports exactly 0, so its margin only
    # counts towards the band when it passes
    quantities = (mri.min_slack, brute.margin) + ((sweep.margin,) if sweep.passed else ())
    out = {"mri": mri.holds, "sweep": sweep.passed, "brute": brute.passed,
           "mri_slack": mri.min_slack, "sweep_margin": sweep.margin, "brute_margin": brute.margin}
    if min(abs(q) for q in quantities) < band:
        out["status"] = "boundary"
        return out
    problems = []
    if mri.holds and not (sweep.passed and brute.passed):
        problems.append("sufficiency")
    necessary = spread >= 2 or _is_orthonormal(a, supp)
    if necessary and not mri.holds and (sweep.passed or brute.passed):
        problems.append("necessity")
    if sweep.passed != brute.passed:
        problems.append("oracle disagreement")
    for v in (sweep, brute):
        if not v.passed and not margin_of_beta(a, v.witness_beta.beta, supp, slack) <= 0:
            problems.append(f"{v.method} witness has positive margin")
    out["status"] = "violated" if problems else "consistent"
    out["problems"] = problems
    out["gap"] = (not necessary) and (sweep.passed and not mri.holds)
    return out


def verify_theorem1(instances, p_max: int = 8, s_max: int = 3, R_values=(1.0, 2.0, 3.0), seed: int = 0,
                    slack_values=(0.0, 0.1, 0.3), abort: bool = False) -> dict:
    """Run :func:`check_theorem1_instance` over random instances and spreads.

    ``instances`` is a count of random draws or an explicit list of
    ``(sigma, support)`` pairs.  Infinite spreads are skipped.
    """
    rng = np.random.default_rng(seed)
    if isinstance(instances, int):
        pool = [random_instance(rng, p_max, s_max) for _ in range(instances)]
    else:
        pool = [(sig, sup, "given") for sig, sup in instances]
    counts = {"consistent": 0, "violated": 0, "boundary": 0, "gap": 0}
    offending = []
    for n, (sigma, supp, kind) in enumerate(pool):
        for R in R_values:
            if math.isinf(R):
                continue
            slack = float(slack_values[(n + int(R)) % len(slack_values)])
            res = check_theorem1_instance(sigma, supp, float(R), slack)
            counts[res["status"]] += 1
            counts["gap"] += int(res.get("gap", False))
            if res["status"] == "violated":
                rec = _instance_record(sigma, supp, R, slack, 1.0, kind, res["problems"])
                offending.append(rec)
                if abort:
                    raise AssertionError(f"theorem check violated: {res['problems']}")
    return _jsonable({
        "suite": "theorem1",
        "instances": len(pool),
        "R_values": [spread_to_json(float(r)) for r in R_values],
        "counts": counts,
        "offending": offending,
    })
