"""Sylvester equations A X - X B = C between atoms, similarity and commutant.

Most right-hand sides met here are forward shifts, for which the solution is a
forward shift one step longer whose diagonal obeys a first-order scalar
recursion (:func:`cdlab.kernels.shift_recursion`). A matrix-free least-squares
solver covers the general case.
"""

from dataclasses import dataclass, field
from itertools import product
from math import comb

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as npoly
from scipy.sparse.linalg import LinearOperator, lsqr

from .analysis import operator_norm
from .bergman import (TruncatedOperator, build_atom, build_connector, connector_coefficients,
                      derived_operator, interior_norm, interior_rows, weight_table)
from .errors import ValencyTooSmall
from .kernels import shift_recursion
from .model import assemble, effective_m

MIN_FIT_LENGTH = 64
STABLE_RATIO = 1.05
DIVERGENT_RATIO = 1.3


@dataclass(frozen=True, eq=False)
class SylvesterSolution:
    X: TruncatedOperator
    residual: float
    coeffs: np.ndarray = None
    fitted_exponent: float = None
    bounded_verdict: str = "bounded"
    info: dict = field(default_factory=dict)


def growth_exponent(coeffs):
    """Slope of log|x_l| against log l over the second half of the sequence."""
    x = np.abs(np.asarray(coeffs))
    if x.shape[0] < MIN_FIT_LENGTH:
        raise ValueError(f"need at least {MIN_FIT_LENGTH} coefficients, got {x.shape[0]}")
    lo = x.shape[0] // 2
    win = x[lo:]
    if np.any(win == 0):
        raise ValueError("zero coefficient inside the fit window")
    ell = np.arange(lo, x.shape[0], dtype=float)
    return float(np.polyfit(np.log(ell), np.log(win), 1)[0])


def doubling_ratio(coeffs):
    """sup|x| over the full sequence divided by sup|x| over its first half.

    The recursion runs forward, so the first half is exactly the solution at
    half the truncation; this is the N-doubling ratio of sup|x_l|.
    """
    x = np.abs(np.asarray(coeffs))
    half = x[: max(1, x.shape[0] // 2)].max()
    return float(x.max() / half) if half > 0 else 1.0


def shift_solution(lam_a, lam_b, c, q, N):
    """Forward shift X of multiplicity q+1 solving atom(lam_a) X - X atom(lam_b) = C.

    ``c`` holds the diagonal of the forward shift C (multiplicity q); the
    first row of X is zero. Returns (X matrix, x coefficients).
    """
    length = N - q - 1
    if length <= 0:
        return sp.csr_matrix((N, N), dtype=complex), np.zeros(0, dtype=complex)
    wa = weight_table(lam_a, N - 1)
    wb = weight_table(lam_b, N - 1)
    x = shift_recursion(np.asarray(c)[:length], wa, wb, q)
    return sp.diags([x], [-(q + 1)], shape=(N, N), format="csr"), x


def sylvester_residual(A, X, B, C, cut=1):
    """Interior-window ||A X - X B - C||_F."""
    A, X, B, C = (M.matrix if isinstance(M, TruncatedOperator) else M for M in (A, X, B, C))
    R = A @ X - X @ B - C
    return interior_norm(R if sp.issparse(R) else np.asarray(R), A.shape[0], cut)


def solve_sylvester_closed(lambda0, lambda_k1, k, N):
    """Closed-form intertwiner for the connector of multiplicity k.

    Solves atom(lambda0) X - X atom(lambda_k1) = connector(lambda0, lambda_k1, k).
    """
    if not lambda_k1 > lambda0:
        raise ValueError("need lambda_k1 > lambda0")
    k, N = int(k), int(N)
    A, B = build_atom(lambda0, N), build_atom(lambda_k1, N)
    C = build_connector(lambda0, lambda_k1, k, N)
    c = connector_coefficients(lambda0, lambda_k1, k, max(N - k, 0)).astype(complex)
    Xm, x = shift_solution(lambda0, lambda_k1, c, k, N)
    X = TruncatedOperator(Xm, (k + 1, 0), ("derived", "sylvester", lambda0, lambda_k1, k))
    res = sylvester_residual(A, X, B, C)
    expo = growth_exponent(x) if x.shape[0] >= MIN_FIT_LENGTH else None
    ratio = doubling_ratio(x) if x.shape[0] else 1.0
    verdict = "bounded" if ratio <= STABLE_RATIO else "divergent"
    return SylvesterSolution(X, res, x, expo, verdict, {"sup_ratio": ratio})


def _lsqr_solve(A, B, C, cut, x0, iter_lim, atol):
    N = A.shape[0]
    keep = np.zeros(N, dtype=bool)
    keep[: N - cut] = True
    A, B = A.tocsr(), B.tocsr()
    AH, BT, Bc = A.conj().T.tocsr(), B.T.tocsr(), B.conj().tocsr()

    def mv(v):
        X = v.reshape(N, N)
        R = A @ X - (BT @ X.T).T
        R[~keep] = 0
        return R.ravel()

    def rmv(v):
        R = v.reshape(N, N).copy()
        R[~keep] = 0
        return (AH @ R - (Bc @ R.T).T).ravel()

    op = LinearOperator((N * N, N * N), matvec=mv, rmatvec=rmv, dtype=complex)
    rhs = np.asarray(C.toarray() if sp.issparse(C) else C, dtype=complex).copy()
    rhs[~keep] = 0
    out = lsqr(op, rhs.ravel(), atol=atol, btol=atol, iter_lim=iter_lim,
               x0=None if x0 is None else np.asarray(x0, dtype=complex).ravel())
    X = out[0].reshape(N, N)
    return X, int(out[2])


def solve_sylvester_generic(A, B, C, cut=1, x0=None, iter_lim=None, probe=True, rtol=1e-6):
    """Least-squares solution of A X - X B = C on the interior rows.

    LSQR works on the vectorized operator (the normal equations are never
    formed). The verdict is divergent when the residual stays above
    ``rtol * ||C||``, or when ``probe`` is on and ||X|| grows by at least
    DIVERGENT_RATIO when the problem is re-solved on the leading half and
    quarter truncations. Dense N x N iterates: intended for N <= 1024.
    """
    mats = [M.matrix if isinstance(M, TruncatedOperator) else sp.csr_matrix(M) for M in (A, B, C)]
    A_, B_, C_ = mats
    N = A_.shape[0]
    if B_.shape[0] != N or C_.shape[0] != N:
        raise ValueError("A, B and C must share the truncation")
    iter_lim = 16 * N + 100 if iter_lim is None else int(iter_lim)
    X, iters = _lsqr_solve(A_, B_, C_, cut, x0, iter_lim, 1e-14)
    Xs = sp.csr_matrix(X)
    res = sylvester_residual(A_, Xs, B_, C_, cut)
    cnorm = interior_norm(C_, N, cut)
    info = {"iterations": iters, "norm_X": operator_norm(X)}
    verdict = "bounded" if res <= rtol * max(cnorm, 1e-300) or res == 0 else "divergent"
    if probe and verdict == "bounded" and N >= 64:
        norms = []
        for size in (N // 4, N // 2):
            sub = [M[:size, :size] for M in mats]
            Xh, _ = _lsqr_solve(*sub, cut, None, 16 * size + 100, 1e-14)
            norms.append(operator_norm(Xh))
        norms.append(info["norm_X"])
        ratios = [b / a if a > 0 else 1.0 for a, b in zip(norms, norms[1:])]
        info["probe_norms"], info["probe_ratios"] = norms, ratios
        if ratios[-1] >= DIVERGENT_RATIO:
            verdict = "divergent"
    return SylvesterSolution(derived_operator(Xs, "sylvester-generic"), res, None, None, verdict, info)


@dataclass(frozen=True, eq=False)
class ReductionResult:
    Y: TruncatedOperator
    Y_inv: TruncatedOperator
    conjugated: TruncatedOperator
    offdiag_residual: float
    cond_Y: float
    block_residuals: dict = field(default_factory=dict)

    def reduced_operator(self, cut=1):
        """Y T Y^-1 compressed to the interior rows and columns of every block."""
        rows = interior_rows(self.conjugated.dim, self.conjugated.block_dim, cut)
        M = self.conjugated.matrix[rows][:, rows]
        return derived_operator(M, "reduced", self.conjugated.block_dim - cut, (0, 1))


def _single_diagonal(M, offset):
    """Entries of M on diagonal ``-offset`` if M has no others, else None."""
    coo = M.tocoo()
    if coo.nnz and np.any(coo.row - coo.col != offset):
        return None
    return M.diagonal(-offset)


def similarity_reduce(spec, N=None, tol=1e-6):
    """Block unit upper-triangular Y with Y T Y^-1 block diagonal (valency >= 2).

    Off-diagonal blocks are eliminated in order of increasing distance j-i:
    Y_ij solves S_ii Y_ij - Y_ij S_jj = S_ij + sum_(i<p<j) Y_ip S_pj, which
    gives Y T = diag(S_ii) Y. Each right-hand side is a forward shift, so the
    closed shift recursion applies; a least-squares refinement seeded with it
    is used only if its interior residual exceeds ``tol``.
    """
    if spec.valency < 2:
        raise ValencyTooSmall(spec.valency)
    N = spec.trunc if N is None else int(N)
    n = spec.n
    T = assemble(spec, N)
    lams = spec.lambdas
    S = {(i, j): T.block(i, j) for i in range(n) for j in range(i, n)}
    Y = {(i, i): sp.identity(N, dtype=complex, format="csr") for i in range(n)}
    block_res = {}
    for d in range(1, n):
        for i in range(n - d):
            j = i + d
            C = S[i, j].copy()
            for p in range(i + 1, j):
                C = C + Y[i, p] @ S[p, j]
            C = C.tocsr()
            c = _single_diagonal(C, d - 1)
            if c is not None:
                Yij, _ = shift_solution(lams[i], lams[j], c, d - 1, N)
                r = sylvester_residual(S[i, i], Yij, S[j, j], C)
            if c is None or r > tol:
                sol = solve_sylvester_generic(S[i, i], S[j, j], C, x0=None if c is None else Yij.toarray(),
                                              probe=False)
                Yij, r = sol.X.matrix, sol.residual
            Y[i, j] = Yij
            block_res[(i, j)] = r
    # inverse of a block unit upper-triangular matrix by back substitution
    Z = {(i, i): Y[i, i] for i in range(n)}
    for d in range(1, n):
        for i in range(n - d):
            j = i + d
            acc = Y[i, j] @ Z[j, j]
            for p in range(i + 1, j):
                acc = acc + Y[i, p] @ Z[p, j]
            Z[i, j] = (-acc).tocsr()
    grid = lambda D: sp.bmat([[D.get((i, j)) for j in range(n)] for i in range(n)], format="csr")
    Ym, Zm = grid(Y), grid(Z)
    conj = (Ym @ T.matrix @ Zm).tocsr()
    diag = sp.block_diag([S[i, i] for i in range(n)], format="csr")
    resid = interior_norm(conj - diag, N, 1)

    cond = operator_norm(Ym) * operator_norm(Zm)
    return ReductionResult(derived_operator(Ym, "similarity", N), derived_operator(Zm, "similarity-inverse", N),
                           derived_operator(conj, "conjugated", N), resid, cond, block_res)


# --- commutant -----------------------------------------------------------------
# A bundle map block X_ij is tracked as {(s, r): coeff}: t_j(w) -> sum coeff
# phi^(s)(w) t_i^(r)(w). Connector blocks S_ij send t_j to m_ij t_i^(j-i-1).

def _compose_x_then_s(xmap, m_pj, q):
    """X_ip o S_pj where S_pj t_j = m t_p^(q): differentiate X_ip q times (Leibniz)."""
    out = {}
    for (s, r), c in xmap.items():
        for a in range(q + 1):
            key = (s + a, r + q - a)
            out[key] = out.get(key, 0) + m_pj * c * comb(q, a)
    return out


def _compose_s_then_x(m_ip, shift, xmap):
    """S_ip o X_pj where S_ip t_p^(r) = m t_i^(shift + r)."""
    return {(s, shift + r): m_ip * c for (s, r), c in xmap.items()}


def _add(acc, other, sign=1):
    for k, v in other.items():
        acc[k] = acc.get(k, 0) + sign * v
    return acc


def commutant_jets(m):
    """Jet maps {(i, j): {(s, r): coeff}} of a commuting X with X_ii = phi(T_i)."""
    m = np.asarray(m)
    n = m.shape[0]
    X = {(i, i): {(0, 0): 1.0} for i in range(n)}
    for d in range(1, n):
        for i in range(n - d):
            j = i + d
            rhs = {}
            for p in range(i, j):
                if m[p, j] != 0 and X.get((i, p)):
                    _add(rhs, _compose_x_then_s(X[i, p], m[p, j], j - p - 1))
            for p in range(i + 1, j + 1):
                if m[i, p] != 0 and X.get((p, j)):
                    _add(rhs, _compose_s_then_x(m[i, p], p - i - 1, X[p, j]), -1)
            # S_ii X - X S_jj sends t_j to sum l_(s,r) r phi^(s) t_i^(r-1)
            X[i, j] = {(s, r + 1): c / (r + 1) for (s, r), c in rhs.items() if c != 0}
    return X


def _matrix_poly(coeffs, T):
    N = T.shape[0]
    eye = sp.identity(N, dtype=complex, format="csr")
    P = sp.csr_matrix((N, N), dtype=complex)
    for c in coeffs[::-1]:
        P = (P @ T + c * eye).tocsr()
    return P


def commutant_element(spec, phi, N=None):
    """Operator X commuting with the assembled T, with diagonal blocks phi(T_i).

    ``phi`` lists polynomial coefficients in ascending order (degree <= 32).
    Returns (X, residual) where residual is the interior ||T X - X T||_F.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=complex))
    phi = np.trim_zeros(phi, "b") if np.any(phi) else phi[:1]
    deg = phi.shape[0] - 1
    if deg > 32:
        raise ValueError("polynomial degree must be at most 32")
    N = spec.trunc if N is None else int(N)
    T = assemble(spec, N)
    m = effective_m(spec)
    lams = spec.lambdas
    jets = commutant_jets(m)
    derivs = [phi]
    for _ in range(spec.n):
        derivs.append(npoly.polyder(derivs[-1]) if derivs[-1].shape[0] > 1 else np.zeros(1, dtype=complex))
    atoms = [T.block(i, i) for i in range(spec.n)]
    cache = {}

    def phi_s(s, j):
        if (s, j) not in cache:
            cache[s, j] = _matrix_poly(derivs[s] if s < len(derivs) else np.zeros(1), atoms[j])
        return cache[s, j]

    blocks = [[None] * spec.n for _ in range(spec.n)]
    for (i, j), jm in jets.items():
        acc = sp.csr_matrix((N, N), dtype=complex)
        for (s, r), c in sorted(jm.items()):
            if c == 0 or s > deg:
                continue
            conn = build_connector(lams[i], lams[j], r, N).matrix if i != j or r else None
            term = phi_s(s, j) if conn is None else conn @ phi_s(s, j)
            acc = acc + c * term
        blocks[i][j] = acc.tocsr()
    Xm = sp.bmat(blocks, format="csr") if spec.n > 1 else blocks[0][0]
    X = derived_operator(Xm, "commutant", N)
    R = T.matrix @ Xm - Xm @ T.matrix
    return X, interior_norm(R, N, 1 + max(deg, 0))


@dataclass(frozen=True)
class IdempotentReport:
    patterns: tuple
    survives: tuple
    adjacent_rule: tuple
    commutator_norms: tuple
    components: int

    @property
    def survivors(self):
        return tuple(p for p, ok in zip(self.patterns, self.survives) if ok)

    @property
    def only_trivial(self):
        n = len(self.patterns[0])
        return set(self.survivors) == {(0,) * n, (1,) * n}


def idempotent_probe(spec, N=64, tol=1e-12):
    """Which block-diagonal 0/I patterns P commute with the assembled operator.

    A pattern survives when ||P T - T P||_F <= tol * ||T||_F, i.e. P_ii = P_jj
    for every nonzero block S_ij. ``adjacent_rule`` records the weaker check
    that only looks at first off-diagonal blocks.
    """
    T = assemble(spec, min(int(N), spec.trunc))
    n = spec.n
    blocks = {(i, j): T.block(i, j) for i in range(n) for j in range(i + 1, n)}
    bnorm = {k: float(np.sqrt(np.sum(np.abs(v.data) ** 2))) for k, v in blocks.items()}
    scale = max(float(np.sqrt(np.sum(np.abs(T.matrix.data) ** 2))), 1e-300)
    patterns, survives, adjacent, norms = [], [], [], []
    for p in product((0, 1), repeat=n):
        # block (i,j) of P T - T P is (p_i - p_j) S_ij
        cn = float(np.sqrt(sum((p[i] - p[j]) ** 2 * bnorm[i, j] ** 2 for (i, j) in blocks)))
        patterns.append(p)
        norms.append(cn)
        survives.append(cn <= tol * scale)
        adjacent.append(all(p[i] == p[i + 1] or bnorm[i, i + 1] == 0 for i in range(n - 1)))
    links = sum(1 for i in range(n - 1) if bnorm.get((i, i + 1), 0) > 0)
    return IdempotentReport(tuple(patterns), tuple(survives), tuple(adjacent), tuple(norms), n - links)
