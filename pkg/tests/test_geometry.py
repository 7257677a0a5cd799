import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdlab.geometry import (DiscGrid, covariant_derivative, curvature_from_metric, curvature_matrix,
                            geometry_report, grammian, grammian_closed, grammian_frame, kernel_jet,
                            line_curvature, sff_adjacent, sff_distinguishes, sff_frame, sff_general,
                            sff_numerator_term, stencil, wirtinger)
from cdlab.model import ModelSpec

GRID = DiscGrid.polar()


def spec2(mu01, lam0=1.0, val=1.0):
    return ModelSpec.from_entries(lam0, val, 2, [(0, 1, mu01.real, mu01.imag)])


@pytest.mark.parametrize("p,q", [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (2, 2), (3, 1), (0, 4)])
def test_kernel_jet_against_series(p, q):
    lam, w = 1.7, 0.25 - 0.15j
    wb = w.conjugate()
    total, a = 0j, 1.0
    for n in range(400):
        if n >= max(p, q):
            total += a * math.perm(n, p) * math.perm(n, q) * w ** (n - p) * wb ** (n - q)
        a *= (lam + n) / (n + 1)
    assert abs(total - kernel_jet(lam, p, q, w)) <= 1e-12 * max(1, abs(total))


def test_kernel_jet_first_derivative_finite_difference():
    lam, w = 1.7, 0.25 - 0.15j
    f = lambda u: (1 - abs(u) ** 2) ** (-lam)
    assert abs(wirtinger(f, w, 1e-3, richardson=True) - kernel_jet(lam, 1, 0, w)) <= 1e-9
    assert abs(wirtinger(f, w, 1e-3, conj=True, richardson=True) - kernel_jet(lam, 0, 1, w)) <= 1e-9


def test_grammian_two_block_origin():
    lam0, mu = 1.3, 0.5 - 0.7j
    h = grammian(spec2(mu, lam0), 0)
    np.testing.assert_allclose(h, [[1, 0], [0, 1 + lam0 * abs(mu) ** 2]], atol=1e-12)


@pytest.mark.parametrize("w", [0, 0.4, -0.3 + 0.5j])
def test_grammian_rank_one(w):
    spec = ModelSpec(2.5, 1.0, 1, np.eye(1))
    assert grammian(spec, w)[0, 0].real == pytest.approx((1 - abs(w) ** 2) ** -2.5, rel=1e-10)


def test_grammian_diagonal_for_trivial_mu():
    spec = ModelSpec(0.8, 1.5, 3, np.eye(3))
    h = grammian(spec, 0.3 + 0.2j)
    assert np.abs(h - np.diag(np.diag(h))).max() == 0
    for i, lam in enumerate(spec.lambdas):
        assert h[i, i].real == pytest.approx((1 - 0.13) ** -lam)


@pytest.mark.parametrize("seed", range(3))
def test_grammian_routes_agree_and_positive(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed
    mu = np.eye(n) + np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) * 0.6
    spec = ModelSpec(0.5 + rng.random(), 2.0, n, mu, 512)
    for w in GRID.points:
        hc, hf = grammian_closed(spec, w), grammian_frame(spec, w)
        assert np.abs(hc - hf).max() <= 1e-8 * np.abs(hc).max()
        assert np.abs(hc - hc.conj().T).max() <= 1e-12 * np.abs(hc).max()
        np.linalg.cholesky(hc)


def test_line_curvature_examples():
    assert line_curvature(1, 0) == -1
    assert line_curvature(2, cmath.sqrt(0.5)) == pytest.approx(-8)


def test_line_curvature_finite_difference():
    lam, w, s = 1.4, 0.3, 1e-4
    f = lambda u: -lam * -math.log(1 - abs(u) ** 2)  # -log h
    lap = (f(w + s) + f(w - s) + f(w + 1j * s) + f(w - 1j * s) - 4 * f(w)) / s ** 2
    # dbar d = laplacian / 4
    assert lap / 4 == pytest.approx(line_curvature(lam, w), rel=1e-5)


def test_curvature_matrix_rank_one():
    spec = ModelSpec(2.0, 1.0, 1, np.eye(1))
    for w in (0.2, 0.5j, -0.3 + 0.3j):
        assert curvature_matrix(spec, w)[0, 0] == pytest.approx(line_curvature(2.0, w), rel=1e-5)


def test_curvature_matrix_direct_sum():
    spec = ModelSpec(1.2, 0.7, 2, np.eye(2))
    K = curvature_matrix(spec, 0.25 + 0.1j)
    want = np.diag([line_curvature(lam, 0.25 + 0.1j) for lam in spec.lambdas])
    np.testing.assert_allclose(K, want, atol=1e-5 * np.abs(want).max())


def test_curvature_phase_invariance():
    spec = ModelSpec.from_entries(1.0, 1.5, 3, [(0, 1, 0.4, 0.3), (1, 2, -0.8, 0.1), (0, 2, 0.2, 0.0)])
    D = np.diag(np.exp(1j * np.array([0.0, 1.1, -2.3])))
    w = 0.3 - 0.2j
    K = curvature_from_metric(lambda u: grammian_closed(spec, u), w, 1e-3)
    Kp = curvature_from_metric(lambda u: D.conj().T @ grammian_closed(spec, u) @ D, w, 1e-3)
    ev, evp = np.sort_complex(np.linalg.eigvals(K)), np.sort_complex(np.linalg.eigvals(Kp))
    assert np.abs(ev - evp).max() <= 1e-8


def test_covariant_derivative_identity():
    spec = ModelSpec.from_entries(1.0, 1.0, 2, [(0, 1, 1.0, 0.5)])
    hs = stencil(lambda u: grammian_closed(spec, u), 0.2)
    ident = np.stack([np.eye(2)] * 5)
    dw, dwb = covariant_derivative(ident, hs)
    assert np.abs(dw).max() <= 1e-12 and np.abs(dwb).max() <= 1e-12


def test_covariant_derivative_scalar():
    lam, w = 1.5, 0.2
    h = lambda u: (1 - abs(u) ** 2) ** (-lam)
    phi = lambda u: u ** 2 + 3 * u.conjugate()
    dw, dwb = covariant_derivative(stencil(phi, w), stencil(h, w))
    assert dw[0, 0] == pytest.approx(2 * w, abs=1e-7)
    assert dwb[0, 0] == pytest.approx(3, abs=1e-7)


def test_covariant_derivative_of_curvature():
    lam, w = 1.5, 0.2
    K = stencil(lambda u: line_curvature(lam, u), w)
    h = stencil(lambda u: (1 - abs(u) ** 2) ** (-lam), w)
    _, dwb = covariant_derivative(K, h)
    want = -2 * lam * w * (1 - abs(w) ** 2) ** -3
    assert abs(dwb[0, 0] - want) <= 1e-4 * abs(want)


def test_sff_zero_coupling():
    spec = spec2(0j)
    assert sff_adjacent(spec, 0, 0.3) == 0
    assert sff_general(spec, 0, 1, 0.3) == 0


@pytest.mark.parametrize("lam0,mu", [(1.0, 1.0), (2.5, 0.3 - 1.2j), (0.4, -2j)])
def test_sff_origin_value(lam0, mu):
    want = -mu * lam0 / math.sqrt(1 + lam0 * abs(mu) ** 2)
    assert sff_adjacent(spec2(mu, lam0, 0.8), 0, 0) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("val", [0.5, 1.0, 2.0, 3.0])
def test_sff_closed_vs_frame(val):
    spec = spec2(0.7 + 0.4j, 1.2, val)
    for w in GRID.points:
        assert abs(sff_adjacent(spec, 0, w) - sff_frame(spec, 0, w)) <= 1e-7


def test_sff_general_reduces_to_adjacent():
    spec = ModelSpec.from_entries(0.9, 1.3, 3, [(0, 1, 0.5, 0.5), (1, 2, -1.0, 0.2)])
    for w in GRID.points[:10]:
        for i in range(2):
            # m[i,i+1] = -mu[i,i+1] makes the two formulas coincide
            assert abs(sff_general(spec, i, i + 1, w) - sff_adjacent(spec, i, w)) <= 1e-12


@pytest.mark.parametrize("w", [0, 0.3, 0.1 - 0.35j])
def test_sff_numerator_finite_difference(w):
    lam, s = 1.6, 2e-2
    h = lambda u: (1 - abs(u) ** 2) ** (-lam)
    d1 = lambda u: wirtinger(h, u, s, richardson=True)
    d2 = lambda u: wirtinger(d1, u, s, richardson=True) / h(u)
    approx = wirtinger(d2, w, s, conj=True, richardson=True)
    assert abs(approx - sff_numerator_term(lam, 2, w)) <= 1e-5 * max(1, abs(approx))


def test_sff_general_zero_coefficient():
    spec = ModelSpec.from_entries(1.0, 1.5, 3, [(0, 1, 1.0, 0.0), (1, 2, 1.0, 0.0), (0, 2, 0.5, 0.0)])
    # mu[0,2] = 0.5 with adjacent ones gives m[0,2] = -(2*0.5 - 1) = 0
    assert abs(spec.m[0, 2]) <= 1e-15
    assert sff_general(spec, 0, 2, 0.2) == 0


def test_distinguishes_identical():
    spec = spec2(0.3 + 0.1j)
    for w in GRID.points:
        assert abs(sff_general(spec, 0, 1, w) - sff_general(spec2(0.3 + 0.1j), 0, 1, w)) <= 1e-12
    assert sff_distinguishes(spec, spec2(0.3 + 0.1j), GRID)


def test_distinguishes_magnitude():
    a, b = spec2(1.0), spec2(2.0)
    small = DiscGrid.polar(radii=(0.1, 0.25, 0.5), angles=8)
    dev = max(abs(sff_adjacent(a, 0, w) - sff_adjacent(b, 0, w)) for w in small.points)
    assert dev > 1e-3
    assert sff_distinguishes(a, b, small)


def test_distinguishes_phase():
    assert sff_distinguishes(spec2(0.8), spec2(0.8 * cmath.exp(0.4j)), GRID)


@given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3),
       st.sampled_from([0.5, 1.0, 1.5, 3.0]))
def test_rigidity_surrogate(mu, mu_t, val):
    a, b = spec2(mu, 1.0, val), spec2(mu_t, 1.0, val)
    small = DiscGrid.polar(radii=(0.2, 0.5), angles=4)
    if abs(mu - mu_t) > 1e-6:
        assert sff_distinguishes(a, b, small)
    else:
        dev = max(abs(sff_general(a, 0, 1, w) - sff_general(b, 0, 1, w)) for w in small.points)
        assert dev <= 1e-5


def test_distinguishes_needs_shared_parameters():
    with pytest.raises(ValueError):
        sff_distinguishes(spec2(1.0, 1.0), spec2(1.0, 2.0))


def test_grid_validation():
    assert len(DiscGrid.polar().points) == 97
    with pytest.raises(ValueError):
        DiscGrid((0.99999,), 1e-4)
    with pytest.raises(ValueError):
        DiscGrid(())


def test_report_columns():
    spec = ModelSpec.from_entries(1.0, 1.0, 2, [(0, 1, 0.5, 0.0)], trunc=128)
    grid = DiscGrid.polar(radii=(0.2,), angles=4)
    rep = geometry_report(spec, grid, workers=1)
    header, rows = rep.columns()
    assert header[:2] == ["re_w", "im_w"]
    assert len(rows) == len(grid.points)
    assert all(len(r) == len(header) for r in rows)
    np.testing.assert_allclose(rep.atom_curvature[0], [-1.0, -2.0])
    assert rep.atom_curvature.max() < 0
