"""
Population-level selectors (MR, Lasso, OMP) and truthfulness searches.

Under the linear model ``cov(X, Y) = Sigma beta``, so every selector here only
needs ``Sigma`` and ``beta``.  Ties are broken towards the smallest index and
reported through ``tie_flag``; a tie at the selection cut counts as failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import CoefVector, ParamClass, Support, as_array, as_support, random_unit_diag_cov
from .incoherence import COND_LIMIT, SingularBlockError, lasso_incoherence, sym_inverse
from .verdict import RecoveryVerdict

WITNESS_EPS = 1e-9
ARRANGEMENT_MAX_S = 8
VERTEX_MAX_S = 20


@dataclass(frozen=True, eq=False)
class SelectionResult:
    selected: tuple
    scores: np.ndarray
    tie_flag: bool
    path: tuple = ()

    def recovers(self, support) -> bool:
        idx = support.indices if isinstance(support, Support) else tuple(support)
        return set(self.selected) == set(idx) and not self.tie_flag


@dataclass(frozen=True, eq=False)
class LassoSolution:
    beta_hat: np.ndarray
    dual_u: np.ndarray
    lam: float
    kkt_residual: float
    cycles: int = 0
    method: str = "coordinate_descent"

    def sign_consistent(self, beta_star) -> bool:
        return bool(np.array_equal(np.sign(self.beta_hat), np.sign(np.asarray(beta_star, dtype=float))))


class ConvergenceError(RuntimeError):
    pass


def _beta(beta) -> np.ndarray:
    if isinstance(beta, CoefVector):
        return beta.beta
    return np.asarray(beta, dtype=float)


def top_s(scores: np.ndarray, s: int) -> tuple[tuple, bool]:
    order = np.argsort(-scores, kind="stable")
    tie = s < scores.size and scores[order[s - 1]] == scores[order[s]]
    return tuple(int(i) for i in order[:s]), bool(tie)


def population_mr_select(sigma, beta, s: int) -> SelectionResult:
    """Marginal regression at the population level: top ``s`` of ``|Sigma beta|``."""
    scores = np.abs(as_array(sigma) @ _beta(beta))
    selected, tie = top_s(scores, s)
    return SelectionResult(selected, scores, tie)


def margin_of_beta(sigma, beta, support, slack: float = 0.0) -> float:
    """``min_{j in S} |<Sigma_j, beta>| - max_{k notin S} |<Sigma_k, beta>| - slack``."""
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    r = np.abs(a @ _beta(beta))
    return float(r[list(supp.indices)].min() - r[list(supp.complement)].max() - slack)


def margins_of_betas(sigma, beta_s: np.ndarray, support, slack: float = 0.0) -> np.ndarray:
    """Vectorised :func:`margin_of_beta` for rows ``beta_S`` of shape ``(m, s)``."""
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    idx = list(supp.indices)
    r = np.abs(beta_s @ a[idx, :])
    return r[:, idx].min(axis=1) - r[:, list(supp.complement)].max(axis=1) - slack


def embed(beta_s: np.ndarray, support: Support) -> np.ndarray:
    beta = np.zeros(support.p)
    beta[list(support.indices)] = beta_s
    return beta


# --------------------------------------------------------------------------
# candidate sets for searches over Gamma_S
# --------------------------------------------------------------------------

def sign_patterns(s: int, half: bool = False) -> np.ndarray:
    """All vectors in ``{+1, -1}^s``; with ``half`` only those with a leading ``+1``."""
    n = 1 << (s - 1 if half else s)
    bits = (np.arange(n)[:, None] >> np.arange(s)[None, :]) & 1
    out = 1.0 - 2.0 * bits
    if half:
        out = out[:, ::-1].copy()
    return out


def box_vertices(s: int, lo: float, hi: float) -> np.ndarray:
    bits = (np.arange(1 << s)[:, None] >> np.arange(s)[None, :]) & 1
    return np.where(bits == 1, hi, lo)


def arrangement_candidates(sigma, support, lo: float, hi: float) -> np.ndarray:
    """Signed box vertices plus points where some on-support score vanishes.

    For a fixed sign pattern and pair ``(j, k)``, ``|<Sigma_j, beta>| -
    |<Sigma_k, beta>|`` is piecewise linear on the magnitude box with a single
    kink along ``<Sigma_j, beta> = 0``; its minimum therefore sits at a box
    vertex or where that hyperplane crosses a box edge.  Evaluating the MR
    margin on this finite set decides recovery over the closed box exactly.
    """
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    idx = list(supp.indices)
    s = supp.s
    eps = sign_patterns(s, half=True)
    verts = box_vertices(s, lo, hi)
    out = [(eps[:, None, :] * verts[None, :, :]).reshape(-1, s)]
    if hi == lo or s == 1:
        return out[0]
    on = a[np.ix_(idx, idx)]
    corners = box_vertices(s - 1, lo, hi)
    for j in range(s):
        coef = eps * on[:, j][None, :]                   # (E, s): signed coefficients of <Sigma_j, .>
        for f in range(s):
            others = [i for i in range(s) if i != f]
            rest = coef[:, others] @ corners.T            # (E, C)
            cf = coef[:, f][:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                g = -rest / cf
            ok = np.isfinite(g) & (g >= lo) & (g <= hi)
            e_idx, c_idx = np.nonzero(ok)
            if e_idx.size == 0:
                continue
            mags = np.empty((e_idx.size, s))
            mags[:, others] = corners[c_idx]
            mags[:, f] = g[e_idx, c_idx]
            out.append(eps[e_idx] * mags)
    return np.concatenate(out, axis=0)


def random_class_members(rng: np.random.Generator, m: int, s: int, lo: float, hi: float) -> np.ndarray:
    signs = np.where(rng.random((m, s)) < 0.5, -1.0, 1.0)
    if hi == lo:
        return signs * lo
    # magnitudes in [lo, R lo] with the box ratio enforced exactly
    mags = lo * np.exp(rng.random((m, s)) * math.log(hi / lo))
    mags = np.clip(mags, lo, hi)
    return signs * mags


def _best_witness(sigma, cands, supp, slack, cls):
    margins = margins_of_betas(sigma, cands, supp, slack)
    i = int(np.argmin(margins))
    beta = embed(cands[i], supp)
    return float(margins[i]), beta, _violated_pair(sigma, beta, supp)


def _violated_pair(sigma, beta, supp):
    r = np.abs(as_array(sigma) @ beta)
    on = list(supp.indices)
    off = list(supp.complement)
    return int(on[int(np.argmin(r[on]))]), int(off[int(np.argmax(r[off]))])


# --------------------------------------------------------------------------
# Lasso
# --------------------------------------------------------------------------

def _lasso_kkt(sigma_a, beta_hat, beta_star, lam):
    g = sigma_a @ (beta_hat - beta_star)
    active = beta_hat != 0
    u = np.clip(-g / lam, -1.0, 1.0)
    u[active] = np.sign(beta_hat[active])
    resid = np.where(active, np.abs(g + lam * np.sign(beta_hat)), np.maximum(0.0, np.abs(g) - lam))
    return u, float(resid.max())


def lasso_kkt_construction(sigma, beta_star, lam: float, support=None) -> LassoSolution | None:
    """Closed-form primal/dual pair on the true support, or ``None`` if invalid.

    ``beta_S = beta*_S - lam Sigma_SS^{-1} sign(beta*_S)`` and
    ``u_{S^c} = Sigma_{S^c S} Sigma_SS^{-1} u_S``; valid when the signs are kept
    and the dual is strictly feasible off the support.
    """
    a = as_array(sigma)
    b = _beta(beta_star)
    supp = as_support(np.flatnonzero(b) if support is None else support, a.shape[0])
    idx, off = list(supp.indices), list(supp.complement)
    inv = sym_inverse(a[np.ix_(idx, idx)])
    u_s = np.sign(b[idx])
    beta_s = b[idx] - lam * inv @ u_s
    if not np.array_equal(np.sign(beta_s), u_s):
        return None
    u_off = a[np.ix_(off, idx)] @ inv @ u_s
    if not np.abs(u_off).max() < 1:
        return None
    beta_hat = embed(beta_s, supp)
    u = np.zeros(a.shape[0])
    u[idx] = u_s
    u[off] = u_off
    _, resid = _lasso_kkt(a, beta_hat, b, lam)
    return LassoSolution(beta_hat, u, float(lam), resid, 0, "kkt_construction")


def population_lasso(sigma, beta_star, lam: float, tol: float = 1e-12, max_cycles: int = 1_000_000,
                     kkt_tol: float = 1e-8, cross_check: bool = True) -> LassoSolution:
    """Population Lasso ``argmin 1/2 b'Sigma b - b'Sigma beta* + lam ||b||_1``.

    Solved by cyclic coordinate descent until a full cycle moves no coordinate
    by more than ``tol``.  When ``cross_check`` is set and the closed-form KKT
    construction is valid, the two solutions must agree to ``1e-7``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    a = as_array(sigma)
    b = _beta(beta_star)
    supp_idx = np.flatnonzero(b)
    if supp_idx.size and supp_idx.size < a.shape[0]:
        sym_inverse(a[np.ix_(supp_idx, supp_idx)])
    p = a.shape[0]
    target = a @ b
    beta = np.zeros(p)
    grad = -target.copy()            # Sigma beta - Sigma beta*
    cols = [a[:, j].copy() for j in range(p)]
    diag = np.diag(a).tolist()
    cycles = 0
    while True:
        cycles += 1
        biggest = 0.0
        for j in range(p):
            old = beta[j]
            z = old * diag[j] - grad[j]
            new = math.copysign(max(abs(z) - lam, 0.0), z) / diag[j]
            if new != old:
                d = new - old
                beta[j] = new
                grad += d * cols[j]
                biggest = max(biggest, abs(d))
        if biggest < tol:
            break
        if cycles >= max_cycles:
            raise ConvergenceError(f"coordinate descent did not converge in {max_cycles} cycles")
    grad = a @ beta - target
    u, resid = _lasso_kkt(a, beta, b, lam)
    if resid > kkt_tol:
        raise ConvergenceError(f"KKT residual {resid:.3e} above {kkt_tol:g}")
    sol = LassoSolution(beta, u, float(lam), resid, cycles)
    if cross_check and supp_idx.size and supp_idx.size < p:
        alt = lasso_kkt_construction(a, b, lam)
        if alt is not None and np.abs(alt.beta_hat - beta).max() > 1e-7:
            raise ConvergenceError("coordinate descent and KKT construction disagree")
    return sol


def adaptive_lambda(sigma, beta_star, support) -> float:
    """``1e-4 * min_j |beta*_j| * lambda_min(Sigma_SS)``."""
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    idx = list(supp.indices)
    b = _beta(beta_star)
    lam_min = float(np.linalg.eigvalsh(a[np.ix_(idx, idx)])[0])
    return 1e-4 * float(np.abs(b[idx]).min()) * lam_min


# --------------------------------------------------------------------------
# OMP
# --------------------------------------------------------------------------

def population_omp(sigma, beta, s: int) -> SelectionResult:
    """Orthogonal matching pursuit on population covariances.

    Step scores are ``|<Sigma_j, beta - gamma>|`` where ``gamma`` is the least
    squares refit on the indices chosen so far.
    """
    a = as_array(sigma)
    b = _beta(beta)
    r = a @ b
    chosen: list[int] = []
    path = []
    tie_any = False
    gamma = np.zeros_like(b)
    for _ in range(s):
        scores = np.abs(r - a @ gamma)
        masked = scores.copy()
        masked[chosen] = -np.inf
        order = np.argsort(-masked, kind="stable")
        best = int(order[0])
        if masked.size > len(chosen) + 1 and masked[order[1]] == masked[best]:
            tie_any = True
        chosen.append(best)
        path.append(scores)
        sub = a[np.ix_(chosen, chosen)]
        w = np.linalg.eigvalsh(sub)
        if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
            raise SingularBlockError("OMP refit system is singular")
        gamma = np.zeros_like(b)
        gamma[chosen] = np.linalg.solve(sub, r[chosen])
    return SelectionResult(tuple(chosen), path[-1], tie_any, tuple(path))


# --------------------------------------------------------------------------
# truthfulness conditions
# --------------------------------------------------------------------------

def f2_holds(sigma, support) -> tuple[bool, float]:
    """Max-min-1: exact check over sign vectors (the margin is scale free)."""
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    m = margins_of_betas(a, sign_patterns(supp.s, half=True), supp, 0.0)
    return bool(m.min() > 0), float(m.min())


def f3_holds(sigma, support) -> bool:
    """Max-max-infinity, decided through the Lasso incoherence."""
    try:
        return lasso_incoherence(sigma, support) < 1
    except SingularBlockError:
        return False


def truthfulness_search(sigma, support, condition: str, budget: int = 10_000, rho: float = 1.0,
                        spread: float = 1.0, seed: int = 0) -> RecoveryVerdict:
    """Try to falsify one of the truthfulness conditions F1, F2, F3, F5.

    F1 and F5 range over ``Gamma_{S, rho, R}``, F2 over ``Gamma_{S, rho, 1}`` and F3
    over every nonzero ``beta`` supported on ``S``.  Candidates are ``budget``
    random members plus structured points (sign vertices, the kink arrangement
    of :func:`arrangement_candidates`, or ``Sigma_SS^{-1} u`` for F3).
    """
    a = as_array(sigma)
    supp = as_support(support, a.shape[0])
    s = supp.s
    cond = condition.upper()
    rng = np.random.default_rng([seed, s, a.shape[0]])
    idx, off = list(supp.indices), list(supp.complement)
    lo = rho * (1 + WITNESS_EPS)

    if cond == "F3":
        cands = [rng.standard_normal((budget, s))]
        exact = s <= VERTEX_MAX_S
        try:
            inv = sym_inverse(a[np.ix_(idx, idx)])
            if exact:
                cands.append(sign_patterns(s, half=True) @ inv)
        except SingularBlockError:
            exact = False
        cands = np.concatenate(cands)
        r = np.abs(cands @ a[idx, :])
        margins = r[:, idx].max(axis=1) - r[:, off].max(axis=1)
        i = int(np.argmin(margins))
        margin = float(margins[i])
        passed = margin > 0
        witness = None if passed else CoefVector(embed(cands[i], supp))
        pair = None if passed else _violated_pair(a, embed(cands[i], supp), supp)
        return RecoveryVerdict(passed, witness, pair, margin, "search", exact, {"condition": "F3"})

    if cond == "F2":
        spread, exact = 1.0, s <= VERTEX_MAX_S
    elif cond in ("F1", "F5"):
        exact = cond == "F1" and s <= ARRANGEMENT_MAX_S
    else:
        raise ValueError(f"unknown condition {condition!r}")
    if not math.isfinite(spread):
        raise ValueError("F1/F5 searches need a finite spread")
    hi = spread * lo
    cls = ParamClass(supp, rho, spread)
    parts = [random_class_members(rng, budget, s, lo, hi)]
    if s <= VERTEX_MAX_S:
        parts.append(sign_patterns(s, half=True)[:, None, :] * box_vertices(s, lo, hi)[None] if s <= 10
                     else sign_patterns(s, half=True) * lo)
        parts[-1] = parts[-1].reshape(-1, s)
    if cond == "F1" and s <= ARRANGEMENT_MAX_S:
        parts.append(arrangement_candidates(a, supp, lo, hi))
    cands = np.concatenate(parts)
    r = np.abs(cands @ a[idx, :])
    off_score = r[:, off].max(axis=1) if cond != "F5" else r[:, off].min(axis=1)
    margins = r[:, idx].min(axis=1) - off_score
    i = int(np.argmin(margins))
    margin = float(margins[i])
    passed = margin > 0
    witness = pair = None
    if not passed:
        beta = embed(cands[i], supp)
        witness = CoefVector(beta, cls)
        pair = _violated_pair(a, beta, supp)
    return RecoveryVerdict(passed, witness, pair, margin, "search", exact, {"condition": cond})


def conjecture1_search(instance_count: int, p_max: int, s_max: int, seed: int) -> dict:
    """Look for matrices where max-min-1 (F2) holds but max-max-inf (F3) fails.

    Both conditions are decided exactly; any hit is recorded with its matrix.
    """
    from .covariance import format_matrix_csv

    rng = np.random.default_rng(seed)
    f2_count = f3_fail = 0
    hits = []
    for i in range(instance_count):
        p = int(rng.integers(2, p_max + 1))
        s = int(rng.integers(1, min(s_max, p - 1) + 1))
        conc = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
        rank = int(rng.integers(1, p + 1))
        sigma = random_unit_diag_cov(p, int(rng.integers(2**31)), conc, rank)
        supp = Support(tuple(sorted(rng.choice(p, size=s, replace=False).tolist())), p)
        f2, _ = f2_holds(sigma, supp)
        if not f2:
            continue
        f2_count += 1
        if f3_holds(sigma, supp):
            continue
        f3_fail += 1
        try:
            lai = lasso_incoherence(sigma, supp)
        except SingularBlockError:
            lai = math.inf
        hits.append({"index": i, "p": p, "support": list(supp.indices), "lasso_incoherence": lai,
                     "matrix_csv": format_matrix_csv(sigma)})
    return {
        "instances": instance_count,
        "f2_pass": f2_count,
        "f2_pass_f3_fail": f3_fail,
        "counterexamples": hits,
        "finding": bool(hits),
    }
