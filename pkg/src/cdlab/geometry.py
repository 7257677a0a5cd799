"""Hermitian metrics, curvature and second fundamental forms of the eigenbundle.

Conventions: ``d`` and ``dbar`` are the Wirtinger derivatives
(d_x -/+ i d_y)/2 and curvature is K = -dbar(h^-1 d h), so the line bundle of
weight lam has K = -lam (1-|w|^2)^-2 < 0.
"""

from dataclasses import dataclass
from functools import partial
from math import comb, factorial

import numpy as np
from scipy.special import poch

from ._parallel import pmap
from .errors import ConsistencyError, NumericalError
from .model import effective_m, frame_vectors

DEFAULT_RADII = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_ANGLES = 16
DEFAULT_STEP = 1e-4


def kernel_jet(lam, p, q, w):
    """d^p dbar^q of (1 - w conj(w))^(-lam), with w and conj(w) independent."""
    w = complex(w)
    wb = w.conjugate()
    s = 1.0 - abs(w) ** 2
    total = 0j
    for r in range(min(p, q) + 1):
        total += (comb(p, r) * factorial(q) / factorial(q - r) * w ** (q - r)
                  * poch(lam, q) * poch(lam + q, p - r) * wb ** (p - r)
                  * s ** (-lam - q - (p - r)))
    return total


def grammian_closed(spec, w):
    """h[k,l] = <gamma_l, gamma_k> from kernel derivatives of each atom."""
    lams = spec.lambdas
    n = spec.n
    mu = spec.mu
    h = np.zeros((n, n), dtype=complex)
    for k in range(n):
        for l in range(n):
            acc = 0j
            for i in range(min(k, l) + 1):
                if mu[i, l] != 0 and mu[i, k] != 0:
                    acc += mu[i, l] * np.conj(mu[i, k]) * kernel_jet(lams[i], l - i, k - i, w)
            h[k, l] = acc
    return h


def grammian_frame(spec, w, N=None):
    """h = G^H G for the truncated frame vectors."""
    G = frame_vectors(spec, w, N)
    return G.conj().T @ G


def grammian(spec, w, N=None, rtol=1e-6):
    """Grammian of the eigenframe, cross-checked between two evaluation routes.

    Raises ConsistencyError when the truncated inner products and the closed
    kernel-derivative formula differ by more than ``rtol`` relative to max|h|.
    """
    if abs(w) >= 1:
        raise ValueError("w must lie in the open unit disc")
    h = grammian_closed(spec, w)
    ha = grammian_frame(spec, w, N)
    err = np.abs(h - ha).max() / np.abs(h).max()
    if err > rtol:
        raise ConsistencyError(f"grammian routes disagree by {err:.3g} at w={w}")
    return h


def line_curvature(lam, w):
    return -float(lam) / (1.0 - abs(complex(w)) ** 2) ** 2


def wirtinger(f, w, step=DEFAULT_STEP, conj=False, richardson=False):
    """Central-difference d f (or dbar f when ``conj``) at w."""

    def once(hs):
        fx = (f(w + hs) - f(w - hs)) / (2 * hs)
        fy = (f(w + 1j * hs) - f(w - 1j * hs)) / (2 * hs)
        return 0.5 * (fx + 1j * fy) if conj else 0.5 * (fx - 1j * fy)

    if not richardson:
        return once(step)
    return (4 * once(step / 2) - once(step)) / 3


def curvature_from_metric(hfunc, w, step=DEFAULT_STEP, cond_max=1e10):
    """-dbar(h^-1 d h) for a matrix-valued metric function, both derivatives numeric."""

    def connection(u):
        hu = np.atleast_2d(hfunc(u))
        if np.linalg.cond(hu) > cond_max:
            raise NumericalError(f"ill-conditioned metric at w={u}")
        return np.linalg.solve(hu, np.atleast_2d(wirtinger(hfunc, u, step)))

    return -wirtinger(connection, w, step, conj=True)


def curvature_matrix(spec, w, h_step=DEFAULT_STEP):
    return curvature_from_metric(partial(grammian_closed, spec), complex(w), h_step)


def stencil(func, w, step=DEFAULT_STEP):
    """Samples of func at [w, w+h, w-h, w+ih, w-ih] stacked on axis 0."""
    w = complex(w)
    pts = (w, w + step, w - step, w + 1j * step, w - 1j * step)
    return np.stack([np.atleast_2d(func(p)) for p in pts])


def _stencil_derivs(s, step):
    fx = (s[1] - s[2]) / (2 * step)
    fy = (s[3] - s[4]) / (2 * step)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def covariant_derivative(phi_samples, h_samples, h_step=DEFAULT_STEP):
    """Covariant derivatives (phi_w, phi_wbar) of a bundle map at the stencil centre.

    phi_wbar = dbar phi and phi_w = d phi + [h^-1 d h, phi]. Both sample sets
    are laid out as returned by :func:`stencil`.
    """
    phi = np.asarray(phi_samples, dtype=complex)
    hs = np.asarray(h_samples, dtype=complex)
    dphi, dbphi = _stencil_derivs(phi, h_step)
    dh, _ = _stencil_derivs(hs, h_step)
    conn = np.linalg.solve(hs[0], dh)
    return dphi + conn @ phi[0] - phi[0] @ conn, dbphi


def sff_adjacent(spec, i, w):
    """theta_(i,i+1) = mu K_i / sqrt(|t_(i+1)|^2/|t_i|^2 - |mu|^2 K_i)."""
    if not 0 <= i <= spec.n - 2:
        raise IndexError(f"adjacent index {i} out of range for n={spec.n}")
    mu = complex(spec.mu[i, i + 1])
    s = 1.0 - abs(complex(w)) ** 2
    K = line_curvature(spec.lambdas[i], w)
    rad = s ** (-spec.valency) - abs(mu) ** 2 * K
    if not rad > 0:
        raise NumericalError(f"nonpositive radicand {rad} in second fundamental form")
    return mu * K / np.sqrt(rad)


def sff_frame(spec, i, w, step=1e-3):
    """theta_(i,i+1) from the two-vector frame (t_i, mu t_i' + t_(i+1)).

    -h^(1/2) dbar(h^-1 <g1,g0>) / (|g1|^2 - |<g1,g0>|^2/h)^(1/2), with the
    dbar taken by Richardson-extrapolated central differences.
    """
    lam, lam1 = spec.lambdas[i], spec.lambdas[i + 1]
    mu = complex(spec.mu[i, i + 1])

    def ratio(u):
        return mu * kernel_jet(lam, 1, 0, u) / kernel_jet(lam, 0, 0, u)

    h = kernel_jet(lam, 0, 0, w).real
    g10 = mu * kernel_jet(lam, 1, 0, w)
    g11 = (abs(mu) ** 2 * kernel_jet(lam, 1, 1, w) + kernel_jet(lam1, 0, 0, w)).real
    rad = g11 - abs(g10) ** 2 / h
    if not rad > 0:
        raise NumericalError(f"nonpositive radicand {rad} in frame second fundamental form")
    return -np.sqrt(h) * wirtinger(ratio, complex(w), step, conj=True, richardson=True) / np.sqrt(rad)


def sff_numerator_term(lam, d, w):
    """dbar(h^-1 d^d h) for h = (1-|w|^2)^-lam, analytically."""
    h = kernel_jet(lam, 0, 0, w)
    return kernel_jet(lam, d, 1, w) / h - kernel_jet(lam, 0, 1, w) * kernel_jet(lam, d, 0, w) / h ** 2


def sff_general(spec, i, j, w, m=None):
    """theta_(i,j) from the block coefficient m[i,j] and derivatives of h_i."""
    if not 0 <= i < j < spec.n:
        raise IndexError(f"need 0 <= i < j < n, got ({i},{j})")
    if m is None:
        m = spec.m
    d = j - i
    c = complex(m[i, j]) / d
    if c == 0:
        return 0j
    lam_i, lam_j = spec.lambdas[i], spec.lambdas[j]
    h = kernel_jet(lam_i, 0, 0, w).real
    num = c * sff_numerator_term(lam_i, d, w)
    mixed = (h * kernel_jet(lam_i, d, d, w) - kernel_jet(lam_i, d, 0, w) * kernel_jet(lam_i, 0, d, w)).real
    rad = kernel_jet(lam_j, 0, 0, w).real / h + abs(c) ** 2 * mixed / h ** 2
    if not rad > 0:
        raise NumericalError(f"nonpositive radicand {rad} in second fundamental form ({i},{j})")
    return num / np.sqrt(rad)


@dataclass(frozen=True)
class DiscGrid:
    points: tuple
    step: float = DEFAULT_STEP

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        if not pts:
            raise ValueError("grid has no points")
        if max(abs(p) for p in pts) > 1 - 2 * self.step:
            raise ValueError("grid points must stay 2*step away from the unit circle")
        object.__setattr__(self, "points", pts)

    @classmethod
    def polar(cls, radii=DEFAULT_RADII, angles=DEFAULT_ANGLES, step=DEFAULT_STEP, origin=True):
        pts = [0j] if origin else []
        for r in radii:
            for a in range(int(angles)):
                pts.append(complex(r * np.cos(2 * np.pi * a / angles), r * np.sin(2 * np.pi * a / angles)))
        return cls(tuple(pts), step)


def sff_distinguishes(spec, spec_tilde, grid=None, differ_tol=1e-8, agree_tol=1e-10):
    """Whether theta separates the two models exactly where their m tables differ."""
    if (spec.n, spec.lambda0, spec.valency) != (spec_tilde.n, spec_tilde.lambda0, spec_tilde.valency):
        raise ValueError("specs must share lambda0, valency and n")
    grid = grid or DiscGrid.polar()
    m, mt = effective_m(spec), effective_m(spec_tilde)
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            dev = max(abs(sff_general(spec, i, j, w, m) - sff_general(spec_tilde, i, j, w, mt))
                      for w in grid.points)
            if abs(m[i, j] - mt[i, j]) > 1e-12:
                if not dev > differ_tol:
                    return False
            elif dev > agree_tol:
                return False
    return True


@dataclass(frozen=True, eq=False)
class GeometryReport:
    points: np.ndarray
    grammians: np.ndarray  # (P, n, n)
    curvature: np.ndarray  # (P, n, n)
    atom_curvature: np.ndarray  # (P, n)
    sff: np.ndarray  # (P, n-1), closed adjacent form
    sff_frame: np.ndarray  # (P, n-1), frame route
    sff_blocks: dict  # (i, j) -> (P,) from the block coefficients

    def columns(self):
        """Header and float rows: re_w, im_w, then flattened values."""
        n = self.grammians.shape[1]
        header = ["re_w", "im_w"]
        cols = [self.points.real, self.points.imag]

        def add(name, values):
            header.extend([f"{name}_re", f"{name}_im"])
            cols.extend([values.real, values.imag])

        for k in range(n):
            for l in range(n):
                add(f"h_{k}{l}", self.grammians[:, k, l])
        for k in range(n):
            for l in range(n):
                add(f"curvature_{k}{l}", self.curvature[:, k, l])
        for i in range(n):
            header.append(f"atom_curvature_{i}")
            cols.append(self.atom_curvature[:, i])
        for i in range(n - 1):
            add(f"theta_{i}{i + 1}", self.sff[:, i])
            add(f"theta_frame_{i}{i + 1}", self.sff_frame[:, i])
        for (i, j), v in sorted(self.sff_blocks.items()):
            add(f"theta_block_{i}{j}", v)
        return header, np.column_stack(cols)


def _point_report(spec, step, N, w):
    h = grammian(spec, w, N)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise NumericalError(f"grammian not positive definite at w={w}") from None
    K = curvature_matrix(spec, w, step)
    m = effective_m(spec)
    atoms = [line_curvature(lam, w) for lam in spec.lambdas]
    adj = [sff_adjacent(spec, i, w) for i in range(spec.n - 1)]
    frm = [sff_frame(spec, i, w) for i in range(spec.n - 1)]
    blocks = {(i, j): sff_general(spec, i, j, w, m) for i in range(spec.n) for j in range(i + 1, spec.n)}
    return h, K, atoms, adj, frm, blocks


def geometry_report(spec, grid=None, N=None, workers=None):
    grid = grid or DiscGrid.polar()
    res = pmap(partial(_point_report, spec, grid.step, N), grid.points, workers)
    n = spec.n
    keys = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return GeometryReport(
        points=np.array(grid.points),
        grammians=np.array([r[0] for r in res]),
        curvature=np.array([r[1] for r in res]),
        atom_curvature=np.array([r[2] for r in res], dtype=float).reshape(len(res), n),
        sff=np.array([r[3] for r in res], dtype=complex).reshape(len(res), n - 1),
        sff_frame=np.array([r[4] for r in res], dtype=complex).reshape(len(res), n - 1),
        sff_blocks={k: np.array([r[5][k] for r in res]) for k in keys},
    )
