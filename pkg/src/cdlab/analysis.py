"""Operator norms and growth of powers."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bergman import TruncatedOperator, build_atom, build_connector, interior_rows

DIVERGENT_SLOPE = 0.1
DIVERGENT_R2 = 0.9
CONTAMINATION_TOL = 1e-6


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int
    vector: np.ndarray = None


def _as_matrix(M):
    if isinstance(M, TruncatedOperator):
        return M.matrix
    return M if sp.issparse(M) else np.asarray(M)


def schur_bound(M):
    """Upper bound sqrt(max row sum * max column sum) of |entries| on ||M||."""
    A = abs(_as_matrix(M))
    rows = np.asarray(A.sum(axis=1)).ravel()
    cols = np.asarray(A.sum(axis=0)).ravel()
    return float(np.sqrt(rows.max() * cols.max())) if rows.size and cols.size else 0.0


def operator_norm(M, tol=1e-10, max_iter=5000, full_output=False):
    """Largest singular value by power iteration on M^H M.

    The start vector is a fixed pseudo-random vector, so results are
    reproducible. With ``full_output`` a :class:`NormEstimate` is returned;
    ``converged`` is False when the relative change did not drop below ``tol``
    within ``max_iter`` steps (an inconclusive estimate).
    """
    A = _as_matrix(M)
    AH = A.conj().T
    if sp.issparse(AH):
        AH = AH.tocsr()
    ncols = A.shape[1]
    rng = np.random.default_rng(20240611)
    v = rng.standard_normal(ncols) + 1j * rng.standard_normal(ncols)
    v /= np.linalg.norm(v)
    sigma, converged, it = 0.0, False, 0
    for it in range(1, max_iter + 1):
        u = A @ v
        new = float(np.linalg.norm(u))
        if new == 0.0:
            sigma, converged = 0.0, True
            break
        v = AH @ u
        nv = np.linalg.norm(v)
        v = v / nv
        if abs(new - sigma) <= tol * new:
            sigma, converged = new, True
            break
        sigma = new
    if full_output:
        return NormEstimate(sigma, converged, it, v)
    return sigma


def _fit(n_values, norms):
    x, y = np.log(np.asarray(n_values, float)), np.log(np.asarray(norms, float))
    slope, icept = np.polyfit(x, y, 1)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - (slope * x + icept)) ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def geometric_schedule(n_max, points=16):
    return tuple(int(v) for v in np.unique(np.round(np.geomspace(1, n_max, points)).astype(int)))


@dataclass(frozen=True)
class PowerTrace:
    n_values: tuple
    norms: tuple
    classification: str
    slope: float
    r2: float
    tail: tuple
    converged: tuple
    upper_bounds: tuple

    def cumulative_slopes(self):
        """Slope of the fit through the first k points, for k >= 2."""
        out = [float("nan")]
        for k in range(2, len(self.n_values) + 1):
            out.append(_fit(self.n_values[:k], self.norms[:k])[0])
        return tuple(out)


def fit_window(n_values, n_max):
    """Points used for the slope fit: n >= sqrt(n_max), at least three."""
    idx = [k for k, n in enumerate(n_values) if n * n >= n_max]
    return idx if len(idx) >= 3 else list(range(len(n_values)))


def classify_trace(slope, r2, contaminated):
    if slope >= DIVERGENT_SLOPE and r2 >= DIVERGENT_R2:
        return "divergent"
    if contaminated or slope >= DIVERGENT_SLOPE:
        return "inconclusive"
    return "power-bounded"


def power_trace(target, n_max=200, N=None, points=16, tol=1e-9, max_iter=1000):
    """||T^n|| over a geometric schedule of n, measured on interior rows.

    ``target`` is a ModelSpec (assembled at truncation N) or a
    TruncatedOperator. Interior rows of a truncated power are exact rows of
    the true power, so the norms are lower bounds and a divergent verdict is
    not a truncation artefact. A bounded verdict additionally needs the image
    of the top singular vector to leave the discarded rows (almost) empty.
    Power iteration estimates are lower bounds; ``upper_bounds`` holds the
    Schur-test bound of each interior block.
    """
    from .model import ModelSpec, assemble

    if isinstance(target, ModelSpec):
        T = assemble(target, N)
        up = 1
    else:
        T = target
        up = T.local_band[1] if T.local_band is not None else T.band[1]
    bd = T.block_dim
    n_max = int(n_max)
    if n_max * up * 2 > bd:
        raise ValueError(f"n_max*bandwidth = {n_max * up} too large for block size {bd}")
    sched = set(geometric_schedule(n_max, points))
    A = T.matrix
    P = A.copy()
    ns, norms, tails, conv, ubs = [], [], [], [], []
    for n in range(1, n_max + 1):
        if n > 1:
            P = (P @ A).tocsr()
        if n not in sched:
            continue
        rows = interior_rows(T.dim, bd, n * up)
        M = P[rows]
        est = operator_norm(M, tol=tol, max_iter=max_iter, full_output=True)
        ubs.append(schur_bound(M))
        image = P @ est.vector
        mask = np.ones(T.dim, dtype=bool)
        mask[rows] = False
        inner = np.linalg.norm(image[~mask])
        tails.append(float(np.linalg.norm(image[mask]) / inner) if inner > 0 else 0.0)
        ns.append(n)
        norms.append(est.value)
        conv.append(est.converged)
    if min(norms) > 0:
        idx = fit_window(ns, n_max)
        slope, r2 = _fit([ns[k] for k in idx], [norms[k] for k in idx])
    else:
        slope, r2 = float("nan"), float("nan")
    contaminated = max(tails) > CONTAMINATION_TOL
    label = classify_trace(slope, r2, contaminated) if np.isfinite(slope) else "inconclusive"
    return PowerTrace(tuple(ns), tuple(norms), label, slope, r2, tuple(tails), tuple(conv), tuple(ubs))


@dataclass(frozen=True)
class CrossTermTrace:
    n_values: tuple
    values: tuple
    slope: float
    r2: float


def cross_term_trace(lambda0, lambda1, n_max=200, N=4096, coupling=1.0, window=(1, 4), points=16):
    """||n T_0^(n-1) S_01|| with S_01 = coupling * connector(lambda0, lambda1, 0).

    The product is a single-diagonal matrix, so its norm restricted to input
    basis vectors l in [window[0]*n, window[1]*n] (and to interior rows) is the
    largest entry modulus there; no iteration is involved.
    """
    N = int(N)
    if n_max * 2 > N:
        raise ValueError("n_max too large for the truncation")
    T0 = build_atom(lambda0, N).matrix
    P = (coupling * build_connector(lambda0, lambda1, 0, N).matrix).tocsr()
    sched = set(geometric_schedule(n_max, points))
    ns, vals = [], []
    for n in range(1, n_max + 1):
        if n > 1:
            P = (T0 @ P).tocsr()
        if n not in sched:
            continue
        diag = P.diagonal(n - 1)  # entry (l-(n-1), l) for column l >= n-1
        cols = np.arange(n - 1, N)
        lo, hi = window[0] * n, window[1] * n
        sel = (cols >= lo) & (cols <= hi) & (cols - (n - 1) <= N - 1 - n)
        ns.append(n)
        vals.append(float(n * np.abs(diag[sel]).max()) if sel.any() else 0.0)
    if min(vals) > 0:
        idx = fit_window(ns, n_max)
        slope, r2 = _fit([ns[k] for k in idx], [vals[k] for k in idx])
    else:
        slope, r2 = None, None
    return CrossTermTrace(tuple(ns), tuple(vals), slope, r2)
