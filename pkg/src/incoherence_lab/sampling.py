"""
Finite-sample Gaussian experiments for marginal regression.

Rows of ``X`` are drawn from ``N(0, Sigma)`` through the symmetric square root
of ``Sigma`` and ``y = X beta + sigma * eps``.  Every replicate gets its own
generator ``default_rng([seed, ...counters])`` so results do not depend on the
order or the number of workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .covariance import ParamClass, Support, as_array, block_example_cov, identity_cov
from .fileio import atomic_write_text, rows_to_csv, worker_count
from .incoherence import PreconditionError, mri_check
from .selectors import SelectionResult, random_class_members, top_s

TABLE_COLUMNS = ("p", "s", "n", "success_rate", "replicates", "seed")

# n = C * s * log(p) reaching 95% success for the identity family (see tests)
CALIBRATED_C = 10.0


@dataclass(frozen=True)
class SampleConfig:
    n: int = 100
    sigma_noise: float = 1.0
    seed: int = 0
    replicates: int = 100

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if int(self.replicates) < 1:
            raise ValueError("replicates must be >= 1")
        if not self.sigma_noise >= 0:
            raise ValueError("noise level must be non-negative")


@dataclass(frozen=True)
class XiBound:
    value: float
    t: float
    method: str = "operator_norm_bound"


def xi_bound(sigma, class_of: ParamClass, t: float) -> XiBound:
    """``||Sigma_SS||^{1/2} min{t, sqrt(s) rho R}``."""
    a = as_array(sigma)
    idx = list(class_of.support.indices)
    op = float(np.linalg.eigvalsh(a[np.ix_(idx, idx)])[-1])
    cap = min(t, math.sqrt(class_of.support.s) * class_of.rho * class_of.spread)
    return XiBound(math.sqrt(max(op, 0.0)) * cap, float(t))


class _Sampler:
    """Caches the square root of ``Sigma`` (skipped for the identity)."""

    def __init__(self, sigma):
        a = as_array(sigma)
        self.p = a.shape[0]
        if np.array_equal(a, np.eye(self.p)):
            self.root = None
        else:
            w, v = np.linalg.eigh(a)
            self.root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

    def draw(self, rng: np.random.Generator, beta: np.ndarray, n: int, noise: float):
        z = rng.standard_normal((n, self.p))
        x = z if self.root is None else z @ self.root
        y = x @ beta
        if noise > 0:
            y = y + noise * rng.standard_normal(n)
        return x, y


def sample_design(sigma, beta, config: SampleConfig, rng: np.random.Generator | None = None):
    """Draw ``(X, y)``; deterministic in ``config.seed`` unless ``rng`` is given."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    beta = np.asarray(beta, dtype=float)
    return _Sampler(sigma).draw(rng, beta, int(config.n), float(config.sigma_noise))


def sample_mr_select(X, y, s: int) -> SelectionResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    scores = np.abs(X.T @ y) / X.shape[0]
    selected, tie = top_s(scores, s)
    return SelectionResult(selected, scores, tie)


def _draw_beta(rng, class_of: ParamClass, t: float = math.inf) -> np.ndarray:
    supp = class_of.support
    lo = class_of.rho * (1 + 1e-9)
    hi = class_of.spread * lo if class_of.finite else lo * 10.0
    if math.sqrt(supp.s) * lo > t:
        raise ValueError("norm cap t is below every member of the class")
    for _ in range(10_000):
        b = random_class_members(rng, 1, supp.s, lo, hi)[0]
        if np.linalg.norm(b) <= t:
            break
    else:
        b = np.sign(b) * lo
    beta = np.zeros(supp.p)
    beta[list(supp.indices)] = b
    return beta


def concentration_experiment(sigma, class_of: ParamClass, t: float, config: SampleConfig,
                             beta_zero: bool = False) -> dict:
    """Deviation ``||r_hat - Sigma beta||_inf`` and its normalised ratio per replicate.

    The ratio divides by ``(xi + sigma) sqrt(log p / n)`` with ``xi`` from
    :func:`xi_bound`; its upper quantiles estimate the unspecified constant.
    """
    a = as_array(sigma)
    p = a.shape[0]
    n = int(config.n)
    if math.log(p) / n > 1:
        raise PreconditionError("the experiment needs log(p)/n <= 1")
    xi = xi_bound(a, class_of, t)
    sampler = _Sampler(a)
    scale = (xi.value + config.sigma_noise) * math.sqrt(math.log(p) / n)
    errors = np.empty(config.replicates)
    for rep in range(config.replicates):
        rng = np.random.default_rng([config.seed, n, p, rep])
        beta = np.zeros(p) if beta_zero else _draw_beta(rng, class_of, t)
        x, y = sampler.draw(rng, beta, n, float(config.sigma_noise))
        errors[rep] = np.abs(x.T @ y / n - a @ beta).max()
    ratio = errors / scale if scale > 0 else np.zeros_like(errors)
    qs = (0.5, 0.9, 0.99)
    return {
        "n": n,
        "p": p,
        "replicates": int(config.replicates),
        "seed": int(config.seed),
        "xi_bound": xi.value,
        "median_error": float(np.median(errors)),
        "ratio_quantiles": {str(q): float(np.quantile(ratio, q)) for q in qs},
    }


# --------------------------------------------------------------------------
# design families for phase-transition sweeps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityFamily:
    p: int
    name: str = "identity"

    def member(self, s: int):
        return identity_cov(self.p), Support(tuple(range(s)), self.p)


@dataclass(frozen=True)
class BlockFamily:
    """Equicorrelated blocks of size ``r`` on ``S = {0..s-1}``, cross correlation ``eta``."""

    p: int
    mu: float
    eta: float
    r: int
    name: str = "block"

    def member(self, s: int):
        sizes = [self.r] * (s // self.r) + ([s % self.r] if s % self.r else [])
        if max(sizes) != self.r:
            sizes = [s]
        supp = Support(tuple(range(s)), self.p)
        return block_example_cov(self.p, supp, sizes, self.mu, self.eta), supp


def parse_family(text: str, p: int):
    """``identity`` or ``block:mu,eta,r``."""
    text = text.strip()
    if text == "identity":
        return IdentityFamily(p)
    if text.startswith("block:"):
        parts = text[len("block:"):].split(",")
        if len(parts) != 3:
            raise ValueError(f"block family needs mu,eta,r: {text!r}")
        return BlockFamily(p, float(parts[0]), float(parts[1]), int(parts[2]))
    raise ValueError(f"unknown family {text!r}")


def _cell_success(sampler, class_of, s, n, config, cell_seed):
    hits = 0
    for rep in range(config.replicates):
        rng = np.random.default_rng([config.seed, cell_seed, s, n, rep])
        beta = _draw_beta(rng, class_of)
        x, y = sampler.draw(rng, beta, n, float(config.sigma_noise))
        res = sample_mr_select(x, y, s)
        hits += res.recovers(class_of.support)
    return hits


def phase_transition_sweep(family, s_values, n_grid, config: SampleConfig, rho: float = 1.0,
                           spread: float = 1.0, slack: float = 0.0, workers: int | None = None) -> list:
    """Empirical support-recovery probability of sample MR for each ``(s, n)``.

    Every family member must satisfy MRI at ``slack / rho``.  Cells run in
    parallel (``workers`` or the thread knob) but each replicate's generator
    depends only on ``(seed, s, n, replicate)``.
    """
    cells = []
    samplers = {}
    for s in s_values:
        sigma, supp = family.member(int(s))
        rep = mri_check(sigma, supp, spread, slack / rho)
        if not rep.holds:
            raise PreconditionError(f"family member for s={s} violates MRI (slack {rep.min_slack:.3g})")
        samplers[int(s)] = (_Sampler(sigma), ParamClass(supp, rho, spread), sigma.p)
        for n in n_grid:
            cells.append((int(s), int(n)))

    def run(cell):
        s, n = cell
        sampler, cls, _ = samplers[s]
        return _cell_success(sampler, cls, s, n, config, 0)

    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = list(pool.map(run, cells))
    else:
        hits = [run(c) for c in cells]
    return [
        {"p": samplers[s][2], "s": s, "n": n, "success_rate": h / config.replicates,
         "replicates": int(config.replicates), "seed": int(config.seed)}
        for (s, n), h in zip(cells, hits)
    ]


def calibrated_n(s: int, p: int, c: float = CALIBRATED_C) -> int:
    return int(math.ceil(c * s * math.log(p)))


def table_csv(rows) -> str:
    return rows_to_csv(rows, TABLE_COLUMNS)


def write_table(rows, path, metadata: dict) -> list:
    """Write the CSV and its ``.json`` sidecar; returns both paths."""
    from . import __version__

    csv_path = atomic_write_text(path, table_csv(rows))
    meta = dict(metadata)
    meta["library_version"] = __version__
    meta["columns"] = list(TABLE_COLUMNS)
    side = atomic_write_text(str(path) + ".json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return [str(csv_path), str(side)]


def config_dict(config: SampleConfig) -> dict:
    return asdict(config)
