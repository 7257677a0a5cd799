"""The acceptance battery: ten numbered checks with measured values.

Every check is deterministic for a given seed. Wall-clock time is reported
separately from the measured values so that summaries are reproducible.
"""

import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import analysis, geometry, intertwiner, model
from .bergman import build_connector, connector_coefficients

CRITERIA = {
    1: ("intertwining identity", 10.0),
    2: ("coefficient recursions", 1.0),
    3: ("boundedness dichotomy", 30.0),
    4: ("closed-form sylvester", 60.0),
    5: ("similarity reduction", 60.0),
    6: ("curvature and second fundamental form", 20.0),
    7: ("commutant construction", 30.0),
    8: ("idempotent probe", 1.0),
    9: ("power-bound dichotomy", 120.0),
    10: ("reproducibility", None),
}


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    measured: float
    threshold: str
    detail: str = ""
    elapsed: float = field(default=0.0, compare=False)

    @property
    def budget(self):
        return CRITERIA[self.criterion][1]

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        budget = f" budget {self.budget:g}s" if self.budget else ""
        return (f"[{status}] criterion {self.criterion} ({self.name}): measured {self.measured:.6g} "
                f"vs {self.threshold}; {self.detail}; {self.elapsed:.2f}s{budget}")


def random_valid_spec(rng, n, valency, lambda0, trunc, scale=1.0):
    """Seeded spec whose forced-zero m entries are zero and others random complex."""
    m = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) * scale
    for d in range(2, n):
        if model.is_forced_zero(valency, d):
            for i in range(n - d):
                m[i, i + d] = 0
    return model.ModelSpec.from_m(lambda0, valency, m, trunc)


def _timed(fn):
    def wrapper(seed=0):
        t0 = time.perf_counter()
        res = fn(seed)
        res.elapsed = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_intertwining(seed=0):
    """20 seeded specs, n <= 5, valency in {0.5, 1, 2, 3}, N = 256."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    vals = (0.5, 1.0, 2.0, 3.0)
    for k in range(20):
        spec = random_valid_spec(rng, 2 + k % 4, vals[k % 4], 0.5 + 1.5 * rng.random(), 256)
        worst = max(worst, model.check_intertwining(spec))
    return CheckResult(1, CRITERIA[1][0], worst <= 1e-10, worst, "<= 1e-10", "max over 20 specs")


@_timed
def check_recursions(seed=0):
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for n in range(2, 9):
        m = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) * 0.5
        mu = model.m_to_mu(m)
        worst = max(worst, np.abs(model.mu_to_m(mu) - m).max())
        mu2 = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) * 0.5 + np.eye(n)
        worst = max(worst, np.abs(model.m_to_mu(model.mu_to_m(mu2)) - mu2).max())
    ones_dev = max(np.abs(model.mu_to_m(np.triu(np.ones((n, n))))[np.triu_indices(n, 1)] + 1).max()
                   for n in range(2, 9))
    ok = worst <= 1e-10 and ones_dev <= 1e-12
    return CheckResult(2, CRITERIA[2][0], ok, worst, "<= 1e-10",
                       f"all-ones table max |m+1| = {ones_dev:.3g}")


def sup_ratio(lam_i, lam_j, k, N):
    """sup of connector entries at 2N over sup at N."""
    c = connector_coefficients(lam_i, lam_j, k, 2 * N - k)
    return float(c.max() / c[: N - k].max())


@_timed
def check_dichotomy(seed=0, N=2048):
    agree, cells, worst_gap = 0, 0, np.inf
    for lam0, val, k in product((1.0, 1.5, 2.0), (1.0, 2.0, 3.0), (0, 1, 2)):
        spec = model.ModelSpec(lam0, val, k + 2, np.eye(k + 2))
        predicted = model.classify_boundedness(spec).tag(0, k + 1) != "forced-zero"
        ratio = sup_ratio(lam0, lam0 + (k + 1) * val, k, N)
        observed = ratio <= intertwiner.STABLE_RATIO
        worst_gap = min(worst_gap, abs(ratio - intertwiner.STABLE_RATIO))
        agree += predicted == observed
        cells += 1
    frac = agree / cells
    return CheckResult(3, CRITERIA[3][0], agree == cells, frac, "== 1 (fraction of 27 cells)",
                       f"closest sup ratio to the 1.05 cut is {worst_gap:.3g} away")


@_timed
def check_sylvester(seed=0):
    worst_res, worst_exp = 0.0, 0.0
    for lam0, val, k in product((1.0, 1.5, 2.0), (1.0, 2.0, 3.0), (0, 1, 2)):
        lam1 = lam0 + (k + 1) * val
        worst_res = max(worst_res, intertwiner.solve_sylvester_closed(lam0, lam1, k, 1024).residual)
        sol = intertwiner.solve_sylvester_closed(lam0, lam1, k, 4096)
        worst_exp = max(worst_exp, abs(sol.fitted_exponent - (lam0 - lam1 + 2 * k + 2) / 2))
    ok = worst_res <= 1e-9 and worst_exp <= 0.15
    return CheckResult(4, CRITERIA[4][0], ok, worst_res, "residual <= 1e-9, exponent error <= 0.15",
                       f"max exponent error {worst_exp:.4f}")


@_timed
def check_reduction(seed=0):
    rng = np.random.default_rng(seed + 5)
    worst_res, worst_cond = 0.0, 0.0
    for val, n in product((2.0, 2.5, 3.0), (2, 3, 4)):
        mu = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) + np.eye(n)
        spec = model.ModelSpec(1.0, val, n, mu, 512)
        a = intertwiner.similarity_reduce(spec)
        b = intertwiner.similarity_reduce(spec, N=1024)
        worst_res = max(worst_res, a.offdiag_residual, b.offdiag_residual)
        worst_cond = max(worst_cond, abs(b.cond_Y / a.cond_Y - 1))
    ok = worst_res <= 1e-6 and worst_cond < 0.05
    return CheckResult(5, CRITERIA[5][0], ok, worst_res, "residual <= 1e-6, cond change < 5%",
                       f"max relative cond(Y) change {worst_cond:.4f}")


def laplacian_curvature(lam, w, step=1e-4):
    """-(1/4) Laplacian of log h by the symmetric second difference."""
    f = lambda u: lam * -np.log1p(-abs(u) ** 2)  # log h for h = (1-|u|^2)^-lam
    lap = (f(w + step) + f(w - step) + f(w + 1j * step) + f(w - 1j * step) - 4 * f(w)) / step ** 2
    return -lap / 4


@_timed
def check_geometry(seed=0):
    rng = np.random.default_rng(seed + 6)
    grid = geometry.DiscGrid.polar()
    fd_err = 0.0
    for lam in (0.5, 1.0, 2.0, 3.5):
        for w in grid.points:
            exact = geometry.line_curvature(lam, w)
            fd_err = max(fd_err, abs(laplacian_curvature(lam, w) - exact) / abs(exact))
    route_err = 0.0
    for val in (0.5, 1.0, 1.5, 3.0):
        spec = model.ModelSpec.from_entries(1.0 + rng.random(), val, 2,
                                            [(0, 1, *rng.standard_normal(2))])
        for w in grid.points:
            a = geometry.sff_adjacent(spec, 0, w)
            b = geometry.sff_frame(spec, 0, w)
            c = geometry.sff_general(spec, 0, 1, w)
            route_err = max(route_err, abs(a - b), abs(a - c))
    dev_min = np.inf
    coarse = geometry.DiscGrid.polar(radii=(0.1, 0.3, 0.5), angles=8)
    for val in (0.5, 1.0, 1.5, 3.0):
        for _ in range(3):
            mu, mu_t = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            s = model.ModelSpec.from_entries(1.5, val, 2, [(0, 1, mu.real, mu.imag)])
            st = model.ModelSpec.from_entries(1.5, val, 2, [(0, 1, mu_t.real, mu_t.imag)])
            dev = max(abs(geometry.sff_adjacent(s, 0, w) - geometry.sff_adjacent(st, 0, w)) for w in coarse.points)
            dev_min = min(dev_min, dev)
        s = model.ModelSpec.from_entries(1.5, val, 2, [(0, 1, 0.7, 0.0)])
        st = model.ModelSpec.from_entries(1.5, val, 2, [(0, 1, 0.7 * np.cos(0.3), 0.7 * np.sin(0.3))])
        dev = max(abs(geometry.sff_adjacent(s, 0, w) - geometry.sff_adjacent(st, 0, w)) for w in coarse.points)
        dev_min = min(dev_min, dev)
    ok = fd_err <= 1e-5 and route_err <= 1e-7 and dev_min > 1e-8
    return CheckResult(6, CRITERIA[6][0], ok, route_err,
                       "fd <= 1e-5, routes <= 1e-7, rigidity deviation > 1e-8",
                       f"fd relative error {fd_err:.3g}; smallest rigidity deviation {dev_min:.3g}")


@_timed
def check_commutant(seed=0):
    rng = np.random.default_rng(seed + 7)
    worst = 0.0
    for val, n in product((0.5, 1.0, 1.5), (2, 3, 4)):
        spec = random_valid_spec(rng, n, val, 1.0, 512)
        for deg in range(9):
            phi = rng.standard_normal(deg + 1)
            worst = max(worst, intertwiner.commutant_element(spec, phi)[1])
    return CheckResult(7, CRITERIA[7][0], worst <= 1e-7, worst, "<= 1e-7", "degrees 0..8, n <= 4, N = 512")


@_timed
def check_idempotents(seed=0):
    rng = np.random.default_rng(seed + 8)
    bad = 0
    cases = 0
    for n in range(2, 6):
        for cuts in product((False, True), repeat=n - 1):
            # zero every m entry spanning a cut, so the chain splits there
            m = np.triu(rng.standard_normal((n, n)) + 1.0, 1)
            for i in range(n):
                for j in range(i + 1, n):
                    if any(cuts[i:j]):
                        m[i, j] = 0
            spec = model.ModelSpec.from_m(1.0, 2.0, m, 16)
            rep = intertwiner.idempotent_probe(spec, N=16)
            comps = 1 + sum(cuts)
            ok = len(rep.survivors) == 2 ** comps and rep.components == comps
            if not any(cuts):
                ok = ok and rep.only_trivial
            bad += not ok
            cases += 1
    return CheckResult(8, CRITERIA[8][0], bad == 0, float(cases - bad), f"== {cases} cases",
                       "2^c survivors for c chain components")


@_timed
def check_halmos(seed=0):
    spec2 = model.ModelSpec.from_entries(1.5, 2.0, 2, [(0, 1, 1.0, 0.0)], 4096)
    red = intertwiner.similarity_reduce(spec2).reduced_operator()
    tr2 = analysis.power_trace(red, 200)
    # ||T^n|| <= ||T||^n, so a bound <= 1 on T itself covers every n <= 200
    top = max(max(tr2.upper_bounds), analysis.schur_bound(red))
    spec1 = model.ModelSpec.from_entries(1.5, 1.0, 2, [(0, 1, 1.0, 0.0)], 4096)
    tr1 = analysis.power_trace(spec1, 200)
    ok = top <= 1 + 1e-6 and tr1.classification == "divergent" and abs(tr1.slope - 0.5) <= 0.15
    return CheckResult(9, CRITERIA[9][0], ok, tr1.slope,
                       "valency 1 slope 0.5 +- 0.15 and divergent; valency 2 norms <= 1 + 1e-6",
                       f"valency 1 {tr1.classification}; valency 2 max norm bound {top:.8f}")


BATTERY = (check_intertwining, check_recursions, check_dichotomy, check_sylvester, check_reduction,
           check_geometry, check_commutant, check_idempotents, check_halmos)


def summary_rows(results):
    return [[r.criterion, r.name, "pass" if r.passed else "fail", r.measured, r.threshold, r.detail]
            for r in results]


@_timed
def check_reproducibility(seed=0):
    """Recompute the cheap checks and compare their summary text byte for byte."""
    from .cli import format_csv

    cheap = (check_recursions, check_dichotomy, check_idempotents)
    header = ["criterion", "name", "status", "measured", "threshold", "detail"]
    a = format_csv(header, summary_rows([c(seed) for c in cheap]))
    b = format_csv(header, summary_rows([c(seed) for c in cheap]))
    same = a == b
    return CheckResult(10, CRITERIA[10][0], same, float(same), "== 1 (identical bytes)",
                       "in-process rerun of criteria 2, 3, 8")


def run_battery(seed=0, only=None):
    checks = BATTERY + (check_reproducibility,)
    return [c(seed) for c in checks if only is None or checks.index(c) + 1 in only]
