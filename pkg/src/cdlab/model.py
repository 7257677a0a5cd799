"""Quasi-homogeneous block operators built from Bergman atoms.

A model is fixed by lambda0, the valency (gap between consecutive atom
weights), the rank n and a unit upper-triangular coefficient matrix mu. The
frame ``gamma_j = sum_(i<=j) mu[i,j] t_i^(j-i)`` is an eigenframe of the block
operator whose off-diagonal blocks are ``m[i,j] * connector(i, j)``; the
tables mu and m determine each other through :func:`mu_to_m` / :func:`m_to_mu`.
"""

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.special import poch

from .bergman import TruncatedOperator, band_of, build_atom, build_connector, interior_norm, section
from .errors import DomainError, UnboundedEntry

#: relative size below which a computed m coefficient counts as zero
ZERO_TOL = 1e-10


def _as_table(a, n=None):
    a = np.array(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient table must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"coefficient table must be {n}x{n}")
    return a


def mu_to_m(mu):
    """Block coefficients m from frame coefficients mu (unit diagonal).

    m[k,j] = -(mu[k,j] (j-k) + sum_(l=1)^(j-k-1) mu[k+l,j] m[k,k+l]) / mu[j,j]
    """
    mu = _as_table(mu)
    n = mu.shape[0]
    if not np.allclose(np.diag(mu), 1.0, rtol=0, atol=1e-12):
        raise ValueError("mu must have unit diagonal")
    m = np.zeros_like(mu)
    for d in range(1, n):
        for k in range(n - d):
            j = k + d
            acc = mu[k, j] * d
            for l in range(1, d):
                acc += mu[k + l, j] * m[k, k + l]
            m[k, j] = -acc / mu[j, j]
    return m


def m_to_mu(m):
    """Inverse of :func:`mu_to_m`; only the strictly upper part of m is read.

    mu[k,j] = -(sum_(l=1)^(j-k-1) m[k,k+l] mu[k+l,j] + m[k,j]) / (j-k)
    """
    m = _as_table(m)
    n = m.shape[0]
    mu = np.eye(n, dtype=complex)
    for j in range(1, n):
        for k in range(j - 1, -1, -1):
            acc = m[k, j]
            for l in range(1, j - k):
                acc += m[k, k + l] * mu[k + l, j]
            mu[k, j] = -acc / (j - k)
    return mu


@dataclass(frozen=True)
class CoefficientTable:
    mu: np.ndarray
    m: np.ndarray

    @classmethod
    def from_mu(cls, mu):
        mu = _as_table(mu)
        return cls(mu, mu_to_m(mu))

    @classmethod
    def from_m(cls, m):
        mu = m_to_mu(m)
        return cls(mu, mu_to_m(mu))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    lambda0: float
    valency: float
    n: int
    mu: np.ndarray
    trunc: int = 512

    def __post_init__(self):
        lam0, val, n = float(self.lambda0), float(self.valency), int(self.n)
        if not lam0 > 0:
            raise DomainError("lambda0 must be positive")
        if not val >= 0:
            raise DomainError("valency must be nonnegative")
        if n < 1:
            raise ValueError("rank n must be at least 1")
        mu = _as_table(self.mu, n)
        if np.any(np.tril(mu, -1) != 0):
            raise ValueError("mu must be upper triangular")
        if not np.allclose(np.diag(mu), 1.0, rtol=0, atol=1e-12):
            raise ValueError("mu must have unit diagonal")
        if int(self.trunc) < 2:
            raise ValueError("trunc must be at least 2")
        mu.setflags(write=False)
        object.__setattr__(self, "lambda0", lam0)
        object.__setattr__(self, "valency", val)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "trunc", int(self.trunc))
        m = mu_to_m(mu)
        m.setflags(write=False)
        object.__setattr__(self, "_m", m)

    @classmethod
    def from_m(cls, lambda0, valency, m, trunc=512):
        m = _as_table(m)
        return cls(lambda0, valency, m.shape[0], m_to_mu(m), trunc)

    @classmethod
    def from_entries(cls, lambda0, valency, n, entries=(), trunc=512):
        """Build mu from ``(i, j, re, im)`` off-diagonal entries."""
        mu = np.eye(int(n), dtype=complex)
        for i, j, re, im in entries:
            mu[int(i), int(j)] = complex(re, im)
        return cls(lambda0, valency, n, mu, trunc)

    @property
    def m(self):
        return self._m

    @property
    def lambdas(self):
        return self.lambda0 + self.valency * np.arange(self.n)

    def with_trunc(self, trunc):
        return ModelSpec(self.lambda0, self.valency, self.n, self.mu, trunc)

    def with_mu(self, mu):
        return ModelSpec(self.lambda0, self.valency, self.n, mu, self.trunc)


@dataclass(frozen=True)
class BoundednessVerdict:
    tags: tuple  # tags[i][j] in {"diagonal", "bounded-nonzero", "forced-zero", ""}
    regime: str
    forced_zero: tuple

    def tag(self, i, j):
        return self.tags[i][j]


REGIMES = {
    "supercritical": "valency >= 2: every block bounded, similar to the direct sum",
    "subcritical-bounded": "1 + (n-3)/(n-1) <= valency < 2: every block bounded",
    "banded": "1 <= valency < 1 + (n-3)/(n-1): far blocks must vanish",
    "adjacent-only": "valency < 1: only adjacent blocks may be nonzero",
}


def is_forced_zero(valency, d):
    """Blocks at distance d are unbounded unless zero when d*valency < 2d - 2."""
    return d * float(valency) < 2 * d - 2


def classify_boundedness(spec):
    n, val = spec.n, spec.valency
    tags, forced = [], []
    for i in range(n):
        row = []
        for j in range(n):
            if j < i:
                row.append("")
            elif j == i:
                row.append("diagonal")
            elif is_forced_zero(val, j - i):
                row.append("forced-zero")
                forced.append((i, j))
            else:
                row.append("bounded-nonzero")
        tags.append(tuple(row))
    if val >= 2:
        regime = "supercritical"
    elif n <= 2 or val >= 1 + (n - 3) / (n - 1):
        regime = "subcritical-bounded"
    elif val >= 1:
        regime = "banded"
    else:
        regime = "adjacent-only"
    return BoundednessVerdict(tuple(tags), regime, tuple(forced))


def effective_m(spec):
    """m with numerically-zero entries cleared; raises on forced-zero violations."""
    m = np.array(spec.m)
    scale = max(1.0, float(np.abs(spec.mu).max()))
    small = np.abs(m) <= ZERO_TOL * scale
    m[small] = 0
    for i, j in classify_boundedness(spec).forced_zero:
        if m[i, j] != 0:
            raise UnboundedEntry(i, j, m[i, j])
    return m


def assemble(spec, N=None):
    """Block upper-triangular operator on the direct sum of n truncated atoms."""
    N = spec.trunc if N is None else int(N)
    m = effective_m(spec)
    lams = spec.lambdas
    blocks = [[None] * spec.n for _ in range(spec.n)]
    for i in range(spec.n):
        blocks[i][i] = build_atom(lams[i], N).matrix
        for j in range(i + 1, spec.n):
            if m[i, j] != 0:
                blocks[i][j] = m[i, j] * build_connector(lams[i], lams[j], j - i - 1, N).matrix
    mat = sp.bmat(blocks, format="csr", dtype=complex)
    band = band_of(mat)
    src = ("assembled", spec.lambda0, spec.valency, spec.n)
    return TruncatedOperator(mat, band, src, block_dim=N, local_band=(max(spec.n - 2, 0), 1))


def intertwining_residual(T):
    """max_i interior ||S_ii S_(i,i+1) - S_(i,i+1) S_(i+1,i+1)||_F of an assembled operator."""
    worst = 0.0
    for i in range(T.nblocks - 1):
        a, s, b = T.block(i, i), T.block(i, i + 1), T.block(i + 1, i + 1)
        worst = max(worst, interior_norm(a @ s - s @ b, T.block_dim, 1))
    return worst


def check_intertwining(spec, N=None):
    return intertwining_residual(assemble(spec, N))


def frame_vectors(spec, w, N=None):
    """Columns gamma_0 .. gamma_(n-1) at w, stacked over the n atom blocks."""
    N = spec.trunc if N is None else int(N)
    lams = spec.lambdas
    G = np.zeros((spec.n * N, spec.n), dtype=complex)
    for j in range(spec.n):
        for i in range(j + 1):
            if spec.mu[i, j] != 0:
                G[i * N:(i + 1) * N, j] += spec.mu[i, j] * section(lams[i], w, j - i, N).coeffs
    return G


def homogeneous_gamma(lams, a, b):
    """binom(b, a) / (lam_a)_(b-a): coupling of atoms a < b in the homogeneous family."""
    return comb(b, a) / poch(lams[a], b - a)


def homogeneous_mu(lambda0, constants, trunc=512):
    """Spec with mu[a,b] = gamma(a,b) c_b / c_a and valency 2."""
    c = np.asarray(constants, dtype=float)
    n = c.shape[0]
    lams = lambda0 + 2.0 * np.arange(n)
    mu = np.eye(n, dtype=complex)
    for a in range(n):
        for b in range(a + 1, n):
            mu[a, b] = homogeneous_gamma(lams, a, b) * c[b] / c[a]
    return ModelSpec(lambda0, 2.0, n, mu, trunc)


def is_homogeneous(spec, tol=1e-9):
    """Test whether mu comes from the homogeneous family; returns (flag, constants).

    Constants c_0 = 1, c_1, ... are recovered from the adjacent entries and
    then every entry mu[a,b] = gamma(a,b) c_b / c_a is checked to ``tol``
    (relative to max(1, |mu[a,b]|)).
    """
    if spec.n < 2 or abs(spec.valency - 2.0) > 1e-12:
        return False, None
    lams = spec.lambdas
    c = np.ones(spec.n)
    for a in range(spec.n - 1):
        ratio = spec.mu[a, a + 1] / homogeneous_gamma(lams, a, a + 1)
        if abs(ratio.imag) > tol * max(1.0, abs(ratio)) or not ratio.real > 0:
            return False, None
        c[a + 1] = c[a] * ratio.real
    for a in range(spec.n):
        for b in range(a + 1, spec.n):
            want = homogeneous_gamma(lams, a, b) * c[b] / c[a]
            if abs(spec.mu[a, b] - want) > tol * max(1.0, abs(want)):
                return False, None
    return True, tuple(float(x) for x in c)
