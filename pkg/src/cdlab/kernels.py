"""Scalar sequence kernels with a numba path and a numpy path.

Each public function dispatches on :func:`cdlab._accel.backend`. The two paths
use different arithmetic routes (running products versus log-domain closed
forms), so agreement between them doubles as a consistency check.
"""

import math

import numpy as np
from scipy.special import gammaln

from . import _accel
from ._accel import njit


@njit(cache=True)
def _log_poch_loop(lam, size):
    # running sum of log((lam+k)/(k+1)); avoids cancelling two large lgammas
    out = np.empty(size)
    acc = 0.0
    for n in range(size):
        out[n] = acc
        acc += math.log1p((lam - 1.0) / (n + 1.0))
    return out


def _log_poch_numpy(lam, size):
    n = np.arange(size, dtype=float)
    return gammaln(lam + n) - gammaln(lam) - gammaln(n + 1.0)


def log_pochhammer_table(lam, size):
    """``log a_n(lam)`` for ``n = 0 .. size-1`` where a_n = (lam)_n / n!."""
    lam = float(lam)
    size = int(size)
    if _accel.backend() == "numba":
        return _log_poch_loop(lam, size)
    return _log_poch_numpy(lam, size)


@njit(cache=True)
def _jet_loop(lam, w, order, size):
    # running product: c_n = c_{n-1} * w * sqrt(a_n/a_{n-1}) * n/(n-order)
    out = np.zeros(size, dtype=np.complex128)
    if order >= size:
        return out
    c = 1.0 + 0.0j
    for n in range(1, order + 1):
        # sqrt(a_order) * order!
        c *= math.sqrt((lam + n - 1.0) / n) * n
    out[order] = c
    for n in range(order + 1, size):
        c = c * w * math.sqrt((lam + n - 1.0) / n) * (n / (n - order))
        out[n] = c
    return out


def _jet_numpy(lam, w, order, size):
    out = np.zeros(size, dtype=complex)
    if order >= size:
        return out
    n = np.arange(order, size, dtype=float)
    p = n - order
    logmag = 0.5 * _log_poch_numpy(lam, size)[order:] + gammaln(n + 1.0) - gammaln(p + 1.0)
    if w == 0:
        out[order] = np.exp(logmag[0])
        return out
    logmag = logmag + p * math.log(abs(w))
    out[order:] = np.exp(logmag) * np.exp(1j * p * np.angle(w))
    return out


def jet_coefficients(lam, w, order, size):
    """Coefficients ``sqrt(a_n) n!/(n-order)! w^(n-order)`` for n < size."""
    lam = float(lam)
    w = complex(w)
    if _accel.backend() == "numba":
        return _jet_loop(lam, w, int(order), int(size))
    return _jet_numpy(lam, w, int(order), int(size))


@njit(cache=True)
def _shift_loop(c, wa, wb, q):
    size = c.shape[0]
    x = np.empty(size, dtype=np.complex128)
    prev = 0.0 + 0.0j
    for ell in range(size):
        rhs = c[ell]
        if ell > 0:
            rhs = rhs + prev * wb[ell - 1]
        prev = rhs / wa[ell + q]
        x[ell] = prev
    return x


def _shift_numpy(c, wa, wb, q):
    size = c.shape[0]
    denom = wa[q:q + size]
    # P_l = prod_{m<=l} wb[m-1]/wa[m+q], x_l = P_l * sum_{m<=l} c_m/(wa[m+q] P_m)
    logr = np.zeros(size)
    if size > 1:
        logr[1:] = np.log(wb[:size - 1]) - np.log(denom[1:])
    logp = np.cumsum(logr)
    return np.exp(logp) * np.cumsum(c / denom * np.exp(-logp))


def shift_recursion(c, wa, wb, q):
    """Solve ``x_l wa[l+q] - x_(l-1) wb[l-1] = c_l`` for l = 0 .. len(c)-1.

    This is the diagonal recursion satisfied by a forward shift X of
    multiplicity q+1 with ``A X - X B = C``, where A, B are backward weighted
    shifts with weights wa, wb and C is a forward shift of multiplicity q.
    ``wa`` needs at least ``len(c)+q`` entries.
    """
    c = np.ascontiguousarray(c, dtype=complex)
    wa = np.ascontiguousarray(wa, dtype=float)
    wb = np.ascontiguousarray(wb, dtype=float)
    q = int(q)
    if wa.shape[0] < c.shape[0] + q:
        raise ValueError("weight sequence too short for the requested recursion")
    if _accel.backend() == "numba":
        return _shift_loop(c, wa, wb, q)
    return _shift_numpy(c, wa, wb, q)
