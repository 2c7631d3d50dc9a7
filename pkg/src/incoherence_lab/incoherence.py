"""
Closed-form incoherence checks.

MR incoherence ``MRI_S(delta'; R)`` asks, for every ``j`` in ``S``, ``k`` outside
``S`` and both signs taken together,

    R/(1+R) * ||Sigma_Sj +- Sigma_Sk||_1 + delta'/(1+R) < Sigma_jj +- Sigma_jk.

Alongside it live the Lasso incoherence ``||Sigma_{S^c S} Sigma_SS^{-1}||_inf``,
the pairwise incoherence, RIP constants and the implications between them.
All strict inequalities are evaluated with zero tolerance.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .covariance import Support, as_array, as_support, block_example_cov

BOUNDARY_BAND = 1e-9
RIP_SCAN_BUDGET = 2_000_000
COND_LIMIT = 1e12


class PreconditionError(ValueError):
    """An operation was called outside the regime it is defined for."""


class SingularBlockError(ValueError):
    """``Sigma_SS`` is singular or too ill-conditioned to invert."""


class ScanBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class Margin:
    j: int | None
    k: int | None
    sign: str
    lhs: float
    rhs: float
    slack: float


@dataclass(frozen=True)
class IncoherenceReport:
    condition_name: str
    holds: bool
    margins: tuple = ()
    binding: Margin | None = None
    slack_param: float = 0.0
    spread: float | None = None
    value: float | None = None

    @property
    def min_slack(self) -> float:
        return self.binding.slack if self.binding is not None else math.inf

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _report(name, margins, slack_param, spread=None, value=None) -> IncoherenceReport:
    margins = tuple(margins)
    binding = None
    for m in margins:
        if binding is None or m.slack < binding.slack:
            binding = m
    holds = binding is not None and binding.slack > 0
    return IncoherenceReport(name, bool(holds), margins, binding, float(slack_param), spread, value)


def _blocks(sigma, support):
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    idx = np.asarray(supp.indices)
    offc = np.asarray(supp.complement)
    return a, supp, idx, offc


# --------------------------------------------------------------------------
# MR incoherence
# --------------------------------------------------------------------------

def mri_margin_arrays(sigma, support, spread: float, slack: float):
    """Vectorised MRI sides: ``lhs, rhs`` of shape ``(2, s, s^c)``, sign axis ``(+, -)``.

    For ``spread = inf`` the check is the intersection over all finite ``R``:
    the off-diagonal part of the l1 norm must vanish and ``delta' < rhs``.
    """
    a, supp, idx, offc = _blocks(sigma, support)
    on = a[np.ix_(idx, idx)]            # (s, s), column j is Sigma_Sj
    cross = a[np.ix_(idx, offc)]        # (s, m), column k is Sigma_Sk
    diag = np.diag(on)
    lhs = np.empty((2, idx.size, offc.size))
    rhs = np.empty_like(lhs)
    for t, sgn in enumerate((1.0, -1.0)):
        comb = on[:, :, None] + sgn * cross[:, None, :]      # [i, j, k]
        rhs[t] = diag[:, None] + sgn * cross
        if math.isinf(spread):
            absc = np.abs(comb)
            absc[np.arange(idx.size), np.arange(idx.size), :] = 0.0
            off = absc.sum(axis=0)
            lhs[t] = np.where(off == 0, float(slack), math.inf)
        else:
            l1 = np.abs(comb).sum(axis=0)
            lhs[t] = spread / (1 + spread) * l1 + slack / (1 + spread)
    return lhs, rhs, idx, offc


def mri_check(sigma, support, spread: float = 1.0, slack: float = 0.0) -> IncoherenceReport:
    """Evaluate MR incoherence ``MRI_S(slack; spread)`` with the full margin table."""
    if slack < 0:
        raise ValueError("slack must be non-negative")
    if not spread >= 1:
        raise ValueError("spread must lie in [1, inf]")
    lhs, rhs, idx, offc = mri_margin_arrays(sigma, support, spread, slack)
    margins = []
    for a, j in enumerate(idx):
        for b, k in enumerate(offc):
            for t, sgn in enumerate("+-"):
                l, r = float(lhs[t, a, b]), float(rhs[t, a, b])
                margins.append(Margin(int(j), int(k), sgn, l, r, r - l))
    return _report("mri", margins, slack, spread)


def mri_min_slack(sigma, support, spread: float = 1.0, slack: float = 0.0) -> float:
    lhs, rhs, _, _ = mri_margin_arrays(sigma, support, spread, slack)
    return float((rhs - lhs).min())


def _require_orthonormal(a, idx):
    on = a[np.ix_(idx, idx)]
    if not np.array_equal(on, np.eye(idx.size)):
        raise PreconditionError("Sigma_SS must equal the identity exactly")


def mri_check_orthonormal(sigma, support, spread: float = 1.0, slack: float = 0.0) -> IncoherenceReport:
    """MRI in the special case ``Sigma_SS = I``: one inequality per off-support ``k``.

        ||Sigma_Sk||_1 < (1 - delta')/R + (1 - 1/R) * min_j |Sigma_jk|
    """
    a, supp, idx, offc = _blocks(sigma, support)
    _require_orthonormal(a, idx)
    margins = []
    for k in offc:
        col = np.abs(a[idx, k])
        jpos = int(np.argmin(col))
        lo = float(col[jpos])
        l1 = float(col.sum())
        if math.isinf(spread):
            excess = float(np.delete(col, jpos).sum())
            lhs = l1 if excess == 0 else math.inf
            rhs = 1.0 - slack
        else:
            lhs = l1
            rhs = (1.0 - slack) / spread + (1.0 - 1.0 / spread) * lo
        margins.append(Margin(int(idx[jpos]), int(k), "|", lhs, rhs, rhs - lhs))
    return _report("mri_orthonormal", margins, slack, spread)


def mri_infinite_R_classification(sigma, support, slack: float = 0.0) -> bool:
    """Closed form of ``Sigma in MRI_S(slack; inf)``.

    With ``s >= 2`` this requires ``slack < 1`` and that every row and column of
    ``Sigma`` touching ``S`` is a row/column of the identity.  With ``s = 1``
    only ``|Sigma_jk| < 1 - slack`` is needed.
    """
    a, supp, idx, offc = _blocks(sigma, support)
    if not slack < 1:
        return False
    if supp.s == 1:
        return bool(np.all(np.abs(a[idx[0], offc]) < 1 - slack))
    rows = a[idx, :]
    target = np.zeros_like(rows)
    target[np.arange(idx.size), idx] = 1.0
    return bool(np.array_equal(rows, target))


# --------------------------------------------------------------------------
# Lasso / pairwise / RIP
# --------------------------------------------------------------------------

def sym_inverse(block: np.ndarray, cond_limit: float = COND_LIMIT) -> np.ndarray:
    w, v = np.linalg.eigh(block)
    if w[0] <= 0 or w[-1] / w[0] > cond_limit:
        raise SingularBlockError(f"block is singular or ill-conditioned (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
    return (v / w) @ v.T


def lasso_incoherence(sigma, support) -> float:
    """``||Sigma_{S^c S} Sigma_SS^{-1}||_inf`` (maximum absolute row sum)."""
    a, supp, idx, offc = _blocks(sigma, support)
    inv = sym_inverse(a[np.ix_(idx, idx)])
    m = a[np.ix_(offc, idx)] @ inv
    return float(np.abs(m).sum(axis=1).max())


def pairwise_incoherence(sigma) -> float:
    a = as_array(sigma)
    return float(np.abs(a - np.eye(a.shape[0])).max())


def rip_constant(sigma, order: int, budget: int = RIP_SCAN_BUDGET, chunk: int = 20000) -> float:
    """Restricted isometry constant ``max_{|T| <= order} ||Sigma_TT - I||_2``.

    Principal submatrices interlace, so only ``|T| = order`` is scanned.
    """
    a = as_array(sigma)
    p = a.shape[0]
    if not 1 <= order <= p:
        raise ValueError(f"order must lie in [1, {p}]")
    if math.comb(p, order) > budget:
        raise ScanBudgetError(f"C({p}, {order}) = {math.comb(p, order)} subsets exceeds budget {budget}")
    delta = a - np.eye(p)
    best = 0.0
    combos = itertools.combinations(range(p), order)
    while True:
        batch = list(itertools.islice(combos, chunk))
        if not batch:
            break
        t = np.asarray(batch)
        sub = delta[t[:, :, None], t[:, None, :]]
        w = np.linalg.eigvalsh(sub)
        best = max(best, float(np.abs(w).max()))
    return best


# --------------------------------------------------------------------------
# propositions relating the conditions
# --------------------------------------------------------------------------

def pwi_mri_threshold(s: int, spread: float, slack: float) -> float:
    return (1.0 - slack) / (2.0 * spread * (s - 1) + 1.0)


def pwi_implies_mri_bound(pwi_value: float, s: int, spread: float, slack: float) -> bool:
    """Sufficient PWI condition for MRI over all supports of size at most ``s``."""
    if s < 2:
        raise ValueError("s must be >= 2")
    if not math.isfinite(spread):
        raise ValueError("spread must be finite")
    return bool(pwi_value < pwi_mri_threshold(s, spread, slack))


def mri_implies_rip_bound(s: int, spread: float, slack: float) -> float:
    """Upper bound on ``delta_2s`` implied by MRI over all size-``s`` supports."""
    if s < 2:
        raise ValueError("s must be >= 2")
    if not (math.isfinite(spread) and spread >= 1):
        raise ValueError("spread must be finite and >= 1")
    return (1.0 - slack) / spread * (2 * s - 1) / (s - 1)


def small_eigen_obstruction(sigma, support, spread: float, slack: float) -> bool:
    """True when ``Sigma_SS`` is so close to singular that MRI must fail.

    With ``lambda_s^2`` the smallest eigenvalue of ``Sigma_SS`` (``lambda_s > 0``),
    the obstruction is ``lambda_s <= slack / (sqrt(s) (R + 1))``.
    """
    a, supp, idx, _ = _blocks(sigma, support)
    w = np.linalg.eigvalsh(a[np.ix_(idx, idx)])
    if w[0] <= 0:
        return False
    lam = math.sqrt(w[0])
    bound = 0.0 if math.isinf(spread) else slack / (math.sqrt(supp.s) * (spread + 1))
    return lam <= bound


def small_eigen_inequality_gap(sigma, support) -> float:
    """Smallest gap in the eigenvalue inequality behind the obstruction.

    There is a ``j`` in ``S`` with, for every ``k`` off the support and both signs,
    ``|Sigma_jj +- Sigma_jk| <= lambda_s sqrt(s) + ||Sigma_Sj +- Sigma_Sk||_1 / 2``.
    Returns ``max_j min_{k, +-} (rhs - lhs)``; it is non-negative whenever the
    inequality holds.
    """
    a, supp, idx, offc = _blocks(sigma, support)
    w = np.linalg.eigvalsh(a[np.ix_(idx, idx)])
    lam = math.sqrt(max(w[0], 0.0))
    on = a[np.ix_(idx, idx)]
    cross = a[np.ix_(idx, offc)]
    best = -math.inf
    for jj in range(idx.size):
        gaps = []
        for sgn in (1.0, -1.0):
            comb = on[:, jj][:, None] + sgn * cross
            lhs = np.abs(on[jj, jj] + sgn * cross[jj])
            rhs = lam * math.sqrt(idx.size) + 0.5 * np.abs(comb).sum(axis=0)
            gaps.append((rhs - lhs).min())
        best = max(best, float(min(gaps)))
    return best


def example_region_closed_form(mu: float, eta: float, r: int, spread: float, which: str) -> bool:
    """Closed-form membership for the block example (single aligned block of size r).

    ``lasso``: ``|eta| <= (1 - mu)/r`` with ``mu in (-1/(r-1), 1)``.
    ``mri``:   ``|mu| < zeta`` and ``|eta| < min{(zeta - mu)/(1 - zeta), (mu + zeta)/(1 + zeta)}``
    with ``zeta = 1/(R (r - 1))``; at ``zeta = 1`` the first term is unbounded.
    """
    if r < 2:
        raise ValueError("r must be >= 2")
    if not abs(mu) < 1:
        raise ValueError("|mu| must be < 1")
    if which == "lasso":
        return bool(-1.0 / (r - 1) < mu < 1 and abs(eta) <= (1 - mu) / r)
    if which == "mri":
        zeta = 0.0 if math.isinf(spread) else 1.0 / (spread * (r - 1))
        if not abs(mu) < zeta:
            return False
        first = math.inf if 1 - zeta == 0 else (zeta - mu) / (1 - zeta)
        second = (mu + zeta) / (1 + zeta)
        return bool(abs(eta) < min(first, second))
    raise ValueError(f"unknown region {which!r}")


def example_region_margin(mu: float, eta: float, r: int, spread: float) -> float:
    """Signed distance-like margin of the closed-form MRI region (positive inside)."""
    zeta = 0.0 if math.isinf(spread) else 1.0 / (spread * (r - 1))
    first = math.inf if 1 - zeta == 0 else (zeta - mu) / (1 - zeta)
    second = (mu + zeta) / (1 + zeta)
    return min(zeta - abs(mu), min(first, second) - abs(eta))


def block_example_instance(mu: float, eta: float, r: int, signs=None):
    """The single-block instance used for region sweeps: ``s = r``, ``p = r + 1``.

    Validation is skipped so PSD-infeasible grid cells can still be evaluated;
    returns ``(array, support, psd_ok)``.
    """
    p = r + 1
    supp = Support(tuple(range(r)), p)
    a = np.eye(p)
    a[:r, :r] = (1 - mu) * np.eye(r) + mu * np.ones((r, r))
    col = eta * (np.ones(r) if signs is None else np.asarray(signs, dtype=float))
    a[:r, r] = col
    a[r, :r] = col
    try:
        a = np.asarray(block_example_cov(p, supp, [r], mu, eta, 0, signs))
        psd_ok = True
    except ValueError:
        psd_ok = False
    return a, supp, psd_ok
