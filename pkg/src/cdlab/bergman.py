"""Weighted Bergman space primitives and their truncated matrix realizations.

Basis convention: e_n has norm one and the canonical eigenvector at w has
coefficients ``sqrt(a_n(lam)) w^n``, so the backward shift built by
:func:`build_atom` satisfies ``T t(w) = w t(w)`` exactly on the interior window.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import DomainError
from .kernels import jet_coefficients, log_pochhammer_table


def _check_lambda(lam):
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise DomainError(f"weight lambda must be positive, got {lam}")
    return lam


@dataclass(frozen=True)
class KernelParam:
    """Weight of the kernel ``(1 - z conj(w))^(-lambda)``."""

    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_lambda(self.lam))

    def coeff(self, n):
        return pochhammer_coeff(self.lam, n)

    def weight(self, n):
        return shift_weight(self.lam, n)

    def kernel(self, z, w):
        return kernel_value(self.lam, z, w)


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """Sparse N x N complex matrix with its band and provenance.

    ``band`` is ``(lower, upper)``: no nonzero entry has ``row - col > lower``
    or ``col - row > upper``. For block operators ``block_dim`` is the size of
    one block; interior windows are taken per block.
    """

    matrix: sp.csr_matrix
    band: tuple
    source: tuple
    block_dim: int = None
    local_band: tuple = field(default=None)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        m.eliminate_zeros()
        m.sort_indices()
        if m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ValueError(f"expected a square matrix of size >= 2, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        lo, up = (int(b) for b in self.band)
        object.__setattr__(self, "band", (lo, up))
        coo = m.tocoo()
        if coo.nnz:
            off = coo.col - coo.row
            if off.max() > up or -off.min() > lo:
                raise ValueError(f"entries outside declared band {self.band} for {self.source}")
        bd = m.shape[0] if self.block_dim is None else int(self.block_dim)
        if m.shape[0] % bd:
            raise ValueError("block_dim must divide the dimension")
        object.__setattr__(self, "block_dim", bd)
        if self.local_band is None:
            object.__setattr__(self, "local_band", (lo, up) if bd == m.shape[0] else None)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def nblocks(self):
        return self.dim // self.block_dim

    @property
    def entries(self):
        """Dense copy of the matrix."""
        return self.matrix.toarray()

    def block(self, i, j):
        bd = self.block_dim
        return self.matrix[i * bd:(i + 1) * bd, j * bd:(j + 1) * bd].tocsr()

    def interior_rows(self, cut):
        return interior_rows(self.dim, self.block_dim, cut)


def band_of(matrix):
    """Actual (lower, upper) bandwidth of a sparse matrix."""
    coo = sp.coo_matrix(matrix)
    if not coo.nnz:
        return (0, 0)
    off = coo.col.astype(np.int64) - coo.row.astype(np.int64)
    return (max(0, -int(off.min())), max(0, int(off.max())))


def derived_operator(matrix, tag, block_dim=None, local_band=None):
    """Wrap a computed matrix, declaring its actual band."""
    return TruncatedOperator(matrix, band_of(matrix), ("derived", tag), block_dim, local_band)


def interior_rows(dim, block_dim, cut):
    """Row indices 0 .. block_dim-1-cut inside every block."""
    if cut >= block_dim:
        raise ValueError(f"interior window empty: cut {cut} >= block size {block_dim}")
    local = np.arange(block_dim - cut)
    return (np.arange(dim // block_dim)[:, None] * block_dim + local[None, :]).ravel()


def interior_norm(matrix, block_dim, cut):
    """Frobenius norm over the interior rows of a (block) matrix."""
    rows = interior_rows(matrix.shape[0], block_dim, cut)
    if sp.issparse(matrix):
        sub = matrix.tocsr()[rows]
        return float(np.sqrt(np.sum(np.abs(sub.data) ** 2)))
    return float(np.linalg.norm(np.asarray(matrix)[rows]))


@dataclass(frozen=True, eq=False)
class SectionVector:
    """Coefficients of the ``order``-th w-derivative of the kernel section."""

    coeffs: np.ndarray
    lam: float
    point: complex
    order: int


def pochhammer_coeff(lam, n):
    """a_n(lam) = lam (lam+1) ... (lam+n-1) / n!.

    Up to ``_PRODUCT_MAX`` terms the factors (lam+k)/(k+1) are multiplied in
    order, which keeps a_(n+1) = a_n (lam+n)/(n+1) within a few ulps.  Past
    that, or when the product could overflow, log-gamma differences are used
    (relative error around 1e-9 there).
    """
    lam = _check_lambda(lam)
    n = int(n)
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n <= _PRODUCT_MAX and abs(lam - 1.0) * math.log1p(n) < 600.0:
        k = np.arange(n, dtype=float)
        return float(np.prod((lam + k) / (k + 1.0)))
    return float(np.exp(gammaln(lam + n) - gammaln(lam) - gammaln(n + 1.0)))


_PRODUCT_MAX = 200_000


def shift_weight(lam, n):
    """w_n = sqrt((n+1)/(n+lam)) = sqrt(a_n / a_(n+1))."""
    lam = _check_lambda(lam)
    n = int(n)
    if n < 0:
        raise DomainError("n must be nonnegative")
    return math.sqrt((n + 1.0) / (n + lam))


def weight_table(lam, size):
    n = np.arange(int(size), dtype=float)
    return np.sqrt((n + 1.0) / (n + _check_lambda(lam)))


def kernel_value(lam, z, w):
    """(1 - z conj(w))^(-lam), principal branch."""
    lam = _check_lambda(lam)
    z, w = complex(z), complex(w)
    if abs(z) >= 1 or abs(w) >= 1:
        raise DomainError("kernel arguments must lie in the open unit disc")
    return complex((1.0 - z * w.conjugate()) ** (-lam))


def build_atom(lam, N):
    """Backward weighted shift: entry (n-1, n) = w_(n-1)(lam)."""
    lam = _check_lambda(lam)
    N = int(N)
    if N < 2:
        raise ValueError("truncation N must be at least 2")
    w = weight_table(lam, N - 1).astype(complex)
    mat = sp.diags([w], [1], shape=(N, N), format="csr")
    return TruncatedOperator(mat, (0, 1), ("atom", lam))


def section(lam, w, order, N):
    lam = _check_lambda(lam)
    w = complex(w)
    order, N = int(order), int(N)
    if abs(w) >= 1:
        raise DomainError("section point must lie in the open unit disc")
    if order < 0 or order >= N:
        raise ValueError(f"derivative order {order} must satisfy 0 <= order < N={N}")
    return SectionVector(jet_coefficients(lam, w, order, N), lam, w, order)


def connector_coefficients(lam_i, lam_j, k, size):
    """c_l = ((l+k)!/l!) sqrt(a_(l+k)(lam_i) / a_l(lam_j)) for l < size."""
    lam_i, lam_j = _check_lambda(lam_i), _check_lambda(lam_j)
    k, size = int(k), int(size)
    ell = np.arange(size, dtype=float)
    la_i = log_pochhammer_table(lam_i, size + k)[k:]
    la_j = log_pochhammer_table(lam_j, size)
    return np.exp(gammaln(ell + k + 1.0) - gammaln(ell + 1.0) + 0.5 * (la_i - la_j))


def build_connector(lam_i, lam_j, shift_k, N):
    """Forward shift of multiplicity k with S t_j(w) = t_i^(k)(w)."""
    lam_i, lam_j = _check_lambda(lam_i), _check_lambda(lam_j)
    if lam_j < lam_i:
        raise DomainError("connector needs lambda_j >= lambda_i")
    k, N = int(shift_k), int(N)
    if k < 0 or N < 2:
        raise ValueError("need shift_k >= 0 and N >= 2")
    if k >= N:
        return TruncatedOperator(sp.csr_matrix((N, N), dtype=complex), (k, 0),
                                 ("connector", lam_i, lam_j, k))
    c = connector_coefficients(lam_i, lam_j, k, N - k).astype(complex)
    mat = sp.diags([c], [-k], shape=(N, N), format="csr")
    return TruncatedOperator(mat, (k, 0), ("connector", lam_i, lam_j, k))
