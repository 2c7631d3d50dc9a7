"""
Covariance matrices, supports and coefficient classes.

Every other module works with a unit-diagonal covariance ``Sigma`` of the
random design, a support ``S`` of size ``s`` and the coefficient class

    Gamma_{S, rho, R} = {beta : beta_{S^c} = 0, min_{j in S} |beta_j| > rho,
                         max_{j in S} |beta_j| <= R * min_{j in S} |beta_j|}

with spread ``R`` in ``[1, inf]``.  ``R = inf`` is stored as ``math.inf``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PSD_TOL = 1e-9


class CovarianceError(ValueError):
    """Base class for invalid covariance input."""


class CSVParseError(CovarianceError):
    pass


class NonSquareError(CovarianceError):
    pass


class SymmetryError(CovarianceError):
    pass


class UnitDiagonalError(CovarianceError):
    pass


class CorrelationRangeError(CovarianceError):
    pass


class NotPSDError(CovarianceError):
    pass


class SupportError(ValueError):
    pass


class ParamClassError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Validated unit-diagonal PSD matrix.

    The entries are stored as a read-only array; use :attr:`entries` or
    ``np.asarray(cov)`` to get at them.
    """

    entries: np.ndarray
    psd_tol: float = PSD_TOL

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise NonSquareError(f"covariance must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise CovarianceError("covariance has non-finite entries")
        if not np.array_equal(a, a.T):
            raise SymmetryError("covariance is not exactly symmetric")
        if not np.all(np.diag(a) == 1.0):
            bad = int(np.flatnonzero(np.diag(a) != 1.0)[0])
            raise UnitDiagonalError(f"diagonal entry {bad} is {a[bad, bad]!r}, expected 1")
        if np.any(np.abs(a) > 1.0):
            raise CorrelationRangeError("off-diagonal entries must lie in [-1, 1]")
        lam_min = float(np.linalg.eigvalsh(a)[0])
        if lam_min < -self.psd_tol:
            raise NotPSDError(f"smallest eigenvalue {lam_min:.3e} is below -{self.psd_tol:g}")
        object.__setattr__(self, "entries", _readonly(a))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, CovMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"CovMatrix(p={self.p})"


@dataclass(frozen=True)
class Support:
    """Strictly increasing index set ``S`` inside ``range(p)`` with ``0 < s < p``."""

    indices: tuple
    p: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise SupportError("support must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise SupportError(f"support indices must be strictly increasing: {idx}")
        if idx[0] < 0 or idx[-1] >= self.p:
            raise SupportError(f"support indices must lie in [0, {self.p})")
        if len(idx) >= self.p:
            raise SupportError("support must leave at least one off-support index")
        object.__setattr__(self, "indices", idx)

    @property
    def s(self) -> int:
        return len(self.indices)

    @property
    def complement(self) -> tuple:
        on = set(self.indices)
        return tuple(i for i in range(self.p) if i not in on)

    def __len__(self):
        return self.s

    def __iter__(self):
        return iter(self.indices)


def as_support(support, p: int) -> Support:
    if isinstance(support, Support):
        if support.p != p:
            raise SupportError(f"support built for p={support.p}, matrix has p={p}")
        return support
    return Support(tuple(sorted(int(i) for i in support)), p)


def parse_support(spec: str, p: int) -> Support:
    """Parse ``"0,2,5"`` or the inclusive range ``"0..3"`` (zero-based)."""
    spec = spec.strip()
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            idx = list(range(int(lo), int(hi) + 1))
        else:
            idx = [int(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise SupportError(f"cannot parse support {spec!r}") from exc
    if len(set(idx)) != len(idx):
        raise SupportError(f"duplicate indices in support {spec!r}")
    return Support(tuple(sorted(idx)), p)


@dataclass(frozen=True)
class ParamClass:
    """The coefficient class Gamma_{S, rho, R}; ``spread`` may be ``math.inf``."""

    support: Support
    rho: float
    spread: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ParamClassError(f"rho must be a positive finite number, got {self.rho}")
        if not self.spread >= 1:
            raise ParamClassError(f"spread must be >= 1 (or inf), got {self.spread}")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "spread", float(self.spread))

    @property
    def finite(self) -> bool:
        return math.isfinite(self.spread)

    def to_json(self) -> str:
        return json.dumps({
            "support": list(self.support.indices),
            "p": self.support.p,
            "rho": self.rho,
            "spread": "inf" if not self.finite else self.spread,
        })

    @classmethod
    def from_json(cls, text: str, p: int | None = None) -> "ParamClass":
        d = json.loads(text)
        p = d.get("p", p)
        if p is None:
            raise ParamClassError("dimension p missing from JSON and not given")
        spread = d["spread"]
        spread = math.inf if spread == "inf" else float(spread)
        return cls(Support(tuple(d["support"]), int(p)), float(d["rho"]), spread)


def in_class(beta, param_class: ParamClass) -> bool:
    """Exact membership test for Gamma_{S, rho, R} (strict ``> rho``, no tolerance)."""
    beta = np.asarray(beta, dtype=float)
    supp = param_class.support
    if beta.shape != (supp.p,):
        return False
    off = np.asarray(supp.complement, dtype=int)
    if np.any(beta[off] != 0):
        return False
    mags = np.abs(beta[list(supp.indices)])
    lo = mags.min()
    if not lo > param_class.rho:
        return False
    return bool(mags.max() <= param_class.spread * lo)


@dataclass(frozen=True, eq=False)
class CoefVector:
    beta: np.ndarray
    class_of: ParamClass | None = None

    def __post_init__(self):
        b = _readonly(self.beta)
        if b.ndim != 1:
            raise ValueError("beta must be a vector")
        if self.class_of is not None and not in_class(b, self.class_of):
            raise ParamClassError("beta is not a member of the claimed class")
        object.__setattr__(self, "beta", b)

    def __array__(self, dtype=None, copy=None):
        return self.beta if dtype is None else self.beta.astype(dtype)


def as_array(sigma) -> np.ndarray:
    """Plain float array from a CovMatrix or anything array-like (no validation)."""
    if isinstance(sigma, CovMatrix):
        return sigma.entries
    return np.asarray(sigma, dtype=float)


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------

def identity_cov(p: int) -> CovMatrix:
    if p < 1:
        raise ValueError("p must be >= 1")
    return CovMatrix(np.eye(p))


def block_example_cov(p: int, support, block_sizes: Sequence[int], mu: float, eta: float,
                      aligned_block: int = 0, signs: Sequence[float] | None = None) -> CovMatrix:
    """Block-equicorrelated design on the support with aligned cross-correlations.

    ``Sigma_SS`` is block diagonal with blocks ``(1 - mu) I + mu 11^T`` laid out
    in support order.  Every off-support column ``Sigma_Sk`` equals ``eta`` on the
    coordinates of block ``aligned_block`` (optionally multiplied by ``signs``)
    and zero elsewhere; ``Sigma_{S^c S^c} = I``.
    """
    supp = as_support(support, p)
    sizes = [int(r) for r in block_sizes]
    if sum(sizes) != supp.s or any(r < 1 for r in sizes):
        raise ValueError(f"block sizes {sizes} must be positive and sum to s={supp.s}")
    if not 0 <= aligned_block < len(sizes):
        raise ValueError(f"aligned_block {aligned_block} out of range")
    r_max = max(sizes)
    if sizes[aligned_block] != r_max:
        raise ValueError("aligned block must have the maximal block size")
    if r_max > 1 and mu < -1.0 / (r_max - 1):
        raise NotPSDError(f"mu={mu} is below -1/(r-1) = {-1.0 / (r_max - 1)}")
    if not (abs(mu) <= 1 and abs(eta) <= 1):
        raise CorrelationRangeError("mu and eta must lie in [-1, 1]")
    if signs is None:
        signs = np.ones(r_max)
    signs = np.asarray(signs, dtype=float)
    if signs.shape != (r_max,):
        raise ValueError("signs must have one entry per aligned-block coordinate")

    a = np.eye(p)
    idx = np.asarray(supp.indices)
    offc = np.asarray(supp.complement)
    start = 0
    aligned = None
    for b, r in enumerate(sizes):
        blk = idx[start:start + r]
        a[np.ix_(blk, blk)] = (1 - mu) * np.eye(r) + mu * np.ones((r, r))
        if b == aligned_block:
            aligned = blk
        start += r
    for k in offc:
        a[aligned, k] = eta * signs
        a[k, aligned] = eta * signs
    np.fill_diagonal(a, 1.0)
    return CovMatrix(a)


def random_unit_diag_cov(p: int, seed: int, concentration: float = 1.0,
                         rank: int | None = None) -> CovMatrix:
    """Random correlation matrix ``D^{-1/2} (A A^T / m + c I) D^{-1/2}``.

    ``A`` is ``p x m`` standard normal (``m = rank`` or ``p``); larger
    ``concentration`` ``c`` pulls the result towards the identity.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if not concentration > 0:
        raise ValueError("concentration must be positive")
    rng = np.random.default_rng(seed)
    m = p if rank is None else int(rank)
    a = rng.standard_normal((p, m))
    m_ = a @ a.T / m + concentration * np.eye(p)
    d = 1.0 / np.sqrt(np.diag(m_))
    c = m_ * d[:, None] * d[None, :]
    c = 0.5 * (c + c.T)
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 1.0)
    return CovMatrix(c)


def orthonormal_support_cov(p: int, support, seed: int, scale: float = 0.9,
                            density: float = 1.0) -> CovMatrix:
    """Random design with ``Sigma_SS = I`` and ``Sigma_{S^c S^c} = I``.

    The cross block ``B = Sigma_{S S^c}`` is random with spectral norm ``scale < 1``,
    which keeps ``[[I, B], [B^T, I]]`` positive definite.  ``density`` zeroes a
    random fraction of the cross entries.
    """
    supp = as_support(support, p)
    if not 0 <= scale < 1:
        raise ValueError("scale must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    idx = np.asarray(supp.indices)
    offc = np.asarray(supp.complement)
    b = rng.standard_normal((supp.s, offc.size))
    if density < 1:
        b *= rng.random(b.shape) < density
    norm = np.linalg.norm(b, 2)
    if norm > 0:
        b *= scale / norm
    a = np.eye(p)
    a[np.ix_(idx, offc)] = b
    a[np.ix_(offc, idx)] = b.T
    return CovMatrix(a)


def convex_combination(t: float, first: CovMatrix, second: CovMatrix) -> CovMatrix:
    a = t * as_array(first) + (1 - t) * as_array(second)
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 1.0)
    return CovMatrix(a)


# --------------------------------------------------------------------------
# CSV interchange
# --------------------------------------------------------------------------

def format_matrix_csv(m) -> str:
    a = as_array(m)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in a:
        writer.writerow([format(float(x), ".17g") for x in row])
    return buf.getvalue()


def write_matrix_csv(m, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_matrix_csv(m))


def parse_matrix_csv(text: str) -> CovMatrix:
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            rows.append([float(cell) for cell in row])
        except ValueError as exc:
            raise CSVParseError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise CSVParseError("empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CSVParseError(f"ragged rows: widths {sorted(widths)}")
    width = widths.pop()
    if width != len(rows):
        raise NonSquareError(f"matrix is {len(rows)}x{width}, expected square")
    return CovMatrix(np.array(rows))


def read_matrix_csv(path) -> CovMatrix:
    with open(path, newline="") as fh:
        return parse_matrix_csv(fh.read())


def spread_to_json(spread: float):
    return "inf" if math.isinf(spread) else float(spread)


def spread_from_text(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(value)
