"""Random test instances ``(Sigma, S)`` used by the verification suites."""

from __future__ import annotations

import numpy as np

from .covariance import (CovMatrix, NotPSDError, Support, convex_combination, identity_cov,
                         orthonormal_support_cov, random_unit_diag_cov)

KINDS = ("random", "near_identity", "orthonormal")


def random_support(rng: np.random.Generator, p: int, s_max: int) -> Support:
    s = int(rng.integers(1, min(s_max, p - 1) + 1))
    return Support(tuple(sorted(rng.choice(p, size=s, replace=False).tolist())), p)


def random_instance(rng: np.random.Generator, p_max: int, s_max: int, kind: str | None = None,
                    p_min: int = 2, s_min: int = 1):
    """Draw one instance; returns ``(CovMatrix, Support, kind)``.

    ``random``: correlation matrix with log-uniform concentration and random rank.
    ``near_identity``: the identity blended with a random correlation matrix.
    ``orthonormal``: ``Sigma_SS = I`` with a random cross block.
    """
    if kind is None:
        kind = KINDS[int(rng.integers(len(KINDS)))]
    p = int(rng.integers(max(p_min, s_min + 1), p_max + 1))
    supp = random_support(rng, p, s_max)
    while supp.s < s_min:
        supp = random_support(rng, p, s_max)
    seed = int(rng.integers(2**31))
    if kind == "random":
        conc = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        rank = int(rng.integers(1, p + 1))
        sigma = random_unit_diag_cov(p, seed, conc, rank)
    elif kind == "near_identity":
        t = float(rng.uniform(0.5, 0.98))
        sigma = convex_combination(t, identity_cov(p), random_unit_diag_cov(p, seed, 0.05))
    elif kind == "orthonormal":
        scale = float(rng.uniform(0.05, 0.99))
        density = float(rng.uniform(0.3, 1.0))
        sigma = orthonormal_support_cov(p, supp, seed, scale, density)
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    return sigma, supp, kind


def perturbed_identity(rng: np.random.Generator, p: int, size: float) -> CovMatrix:
    """Identity plus a small symmetric perturbation, retried until it is PSD."""
    while True:
        e = rng.uniform(-size, size, (p, p))
        a = np.eye(p) + np.triu(e, 1) + np.triu(e, 1).T
        try:
            return CovMatrix(a)
        except NotPSDError:
            size *= 0.8
