"""Command line runner: ``cdlab <command> --config <path> --out <dir>``.

Exit codes: 0 success, 2 invalid arguments or config, 3 model error
(unbounded entry, valency too small, domain error), 4 numerical or
consistency error, 5 suite finished with failed checks, 70 unexpected crash.
Every CSV ends with a ``# status: ...`` row; readers should treat ``#`` as a
comment marker.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__, _accel, analysis, config, geometry, intertwiner, model
from ._parallel import ENV_WORKERS, max_workers, pmap
from .errors import CdlabError, ConfigError, DomainError, NumericalError, ConsistencyError

log = logging.getLogger("cdlab")

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_NUMERICAL, EXIT_CHECKS, EXIT_CRASH = 0, 2, 3, 4, 5, 70
COMMANDS = ("classify", "assemble", "geometry", "sylvester", "reduce", "commutant",
            "powerbound", "suite", "validate")


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value) + 0.0, ".17g")  # no negative zero
    if value is None:
        return ""
    return str(value)


def format_csv(header, rows, status="ok"):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    buf.write(f"# status: {status}\n")
    return buf.getvalue()


class Run:
    """Collects output tables and timings for one invocation."""

    def __init__(self, out, command):
        self.out = Path(out)
        self.command = command
        self.files = {}
        self.timings = {}
        self.summary = {}
        self.pending = None

    def table(self, name, header, rows):
        self.pending = (name, header, list(rows))
        text = format_csv(header, self.pending[2])
        self._write(name, text)
        self.pending = None

    def abort_table(self, kind):
        if self.pending:
            name, header, rows = self.pending
            self._write(name, format_csv(header, rows, status=f"error {kind}"))

    def _write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def timed(self, label, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.timings[label] = round(time.perf_counter() - t0, 6)


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def cmd_classify(run, cfg, args):
    spec = config.model_spec(cfg)
    verdict = model.classify_boundedness(spec)
    rows = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            rows.append([i, j, (j - i) * spec.valency, 2 * (j - i) - 2, verdict.tag(i, j), verdict.regime,
                         *_cplx(spec.m[i, j])])
    run.table("classify.csv", ["i", "j", "weight_gap", "threshold", "tag", "regime", "m_re", "m_im"], rows)
    run.summary.update(regime=verdict.regime, forced_zero=[list(p) for p in verdict.forced_zero])


def cmd_assemble(run, cfg, args):
    spec = config.model_spec(cfg)
    T = run.timed("assemble", model.assemble, spec)
    res = model.intertwining_residual(T)
    tol = cfg["tolerances"]["intertwining"]
    rows = [["dim", T.dim], ["block_dim", T.block_dim], ["nnz", T.matrix.nnz], ["band_lower", T.band[0]],
            ["band_upper", T.band[1]], ["frobenius_norm", float(np.sqrt(np.sum(np.abs(T.matrix.data) ** 2)))],
            ["operator_norm_estimate", analysis.operator_norm(T, tol=1e-9, max_iter=2000)],
            ["intertwining_residual", res], ["tolerance", tol], ["within_tolerance", res <= tol]]
    run.table("assemble.csv", ["quantity", "value"], rows)
    m = model.effective_m(spec)
    blocks = [[i, j, *_cplx(m[i, j]), float(np.sqrt(np.sum(np.abs(T.block(i, j).data) ** 2)))]
              for i in range(spec.n) for j in range(i + 1, spec.n)]
    run.table("blocks.csv", ["i", "j", "m_re", "m_im", "block_frobenius"], blocks)
    run.summary.update(intertwining_residual=res, within_tolerance=bool(res <= tol))


def cmd_geometry(run, cfg, args):
    g = cfg["geometry"]
    spec = config.model_spec(cfg)
    grid = geometry.DiscGrid.polar(g["radii"], g["angles"], g["step"], g["origin"])
    rep = run.timed("geometry", geometry.geometry_report, spec, grid, g["trunc"], args.workers)
    header, data = rep.columns()
    run.table("geometry.csv", header, data.tolist())
    route = float(np.abs(rep.sff - rep.sff_frame).max()) if spec.n > 1 else 0.0
    run.summary.update(points=len(grid.points), sff_route_difference=route)


def _sylvester_cell(cell):
    lam0, val, k, N, fitN = cell
    lam1 = lam0 + (k + 1) * val
    a = intertwiner.solve_sylvester_closed(lam0, lam1, k, N)
    b = intertwiner.solve_sylvester_closed(lam0, lam1, k, fitN)
    return [lam0, val, k, lam1, N, a.residual, fitN, b.fitted_exponent, (lam0 - lam1 + 2 * k + 2) / 2,
            b.info["sup_ratio"], b.bounded_verdict]


def cmd_sylvester(run, cfg, args):
    s = cfg["sylvester"]
    N = args.trunc or s["trunc"]
    cells = [(l0, v, k, N, max(s["fit_trunc"], 2 * N)) for l0 in s["lambda0"] for v in s["valency"] for k in s["k"]]
    rows = run.timed("sylvester", pmap, _sylvester_cell, cells, args.workers)
    tol = args.tol or cfg["tolerances"]["sylvester"]
    run.table("sylvester.csv", ["lambda0", "valency", "k", "lambda_k1", "N", "residual", "fit_N",
                                "fitted_exponent", "predicted_exponent", "sup_ratio", "verdict"], rows)
    run.summary.update(cells=len(rows), max_residual=max(r[5] for r in rows),
                       within_tolerance=bool(max(r[5] for r in rows) <= tol))


def cmd_reduce(run, cfg, args):
    spec = config.model_spec(cfg)
    N = args.trunc or cfg["reduce"]["trunc"]
    tol = args.tol or cfg["tolerances"]["reduce"]
    rows, blocks = [], []
    for size in (N, 2 * N):
        r = run.timed(f"reduce_{size}", intertwiner.similarity_reduce, spec, size)
        rows.append([size, r.offdiag_residual, r.cond_Y, r.offdiag_residual <= tol])
        blocks.extend([size, i, j, v] for (i, j), v in sorted(r.block_residuals.items()))
    run.table("reduce.csv", ["N", "offdiag_residual", "cond_Y", "within_tolerance"], rows)
    run.table("reduce_blocks.csv", ["N", "i", "j", "sylvester_residual"], blocks)
    run.summary.update(cond_change=abs(rows[1][2] / rows[0][2] - 1), max_residual=max(r[1] for r in rows))


def cmd_commutant(run, cfg, args):
    spec = config.model_spec(cfg)
    c = cfg["commutant"]
    N = args.trunc or c["trunc"]
    tol = args.tol or cfg["tolerances"]["commutant"]
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg["seed"])
    rows = []
    for deg in c["degrees"]:
        phi = rng.standard_normal(deg + 1)
        X, res = intertwiner.commutant_element(spec, phi, N)
        rows.append([deg, res, float(abs(X.matrix).max()) if X.matrix.nnz else 0.0, res <= tol,
                     " ".join(fmt(v) for v in phi)])
    run.table("commutant.csv", ["degree", "residual", "max_entry", "within_tolerance", "phi_coefficients"], rows)
    probe = intertwiner.idempotent_probe(spec)
    prow = [[" ".join(map(str, p)), ok, adj, cn]
            for p, ok, adj, cn in zip(probe.patterns, probe.survives, probe.adjacent_rule, probe.commutator_norms)]
    run.table("idempotents.csv", ["pattern", "commutes", "adjacent_rule", "commutator_norm"], prow)
    run.summary.update(max_residual=max(r[1] for r in rows), only_trivial_idempotents=probe.only_trivial)


def cmd_powerbound(run, cfg, args):
    p = cfg["powerbound"]
    N = args.trunc or p["trunc"]
    spec = config.model_spec(cfg, trunc=N)
    mode = p["operator"]
    if mode == "auto":
        mode = "reduced" if spec.valency >= 2 and spec.n > 1 else "assembled"
    target = spec
    if mode == "reduced":
        target = run.timed("reduce", intertwiner.similarity_reduce, spec).reduced_operator()
    tr = run.timed("trace", analysis.power_trace, target, p["n_max"], N, p["points"])
    rows = [[n, v, ub, t, cs, c] for n, v, ub, t, cs, c in
            zip(tr.n_values, tr.norms, tr.upper_bounds, tr.tail, tr.cumulative_slopes(), tr.converged)]
    run.table("powerbound.csv", ["n", "norm", "upper_bound", "tail_ratio", "cumulative_slope", "converged"], rows)
    run.table("powerbound_summary.csv", ["operator", "classification", "slope", "r2", "max_norm", "max_upper_bound"],
              [[mode, tr.classification, tr.slope, tr.r2, max(tr.norms), max(tr.upper_bounds)]])
    run.summary.update(classification=tr.classification, slope=tr.slope)


def cmd_suite(run, cfg, args):
    from .acceptance import run_battery, summary_rows

    seed = args.seed if args.seed is not None else cfg["seed"]
    results = run_battery(seed)
    for r in results:
        run.timings[f"criterion_{r.criterion}"] = round(r.elapsed, 6)
        log.info(r.line())
    run.table("suite.csv", ["criterion", "name", "status", "measured", "threshold", "detail"], summary_rows(results))
    failed = [r.criterion for r in results if not r.passed]
    run.summary.update(passed=len(results) - len(failed), failed=failed)
    return EXIT_CHECKS if failed else EXIT_OK


HANDLERS = {"classify": cmd_classify, "assemble": cmd_assemble, "geometry": cmd_geometry,
            "sylvester": cmd_sylvester, "reduce": cmd_reduce, "commutant": cmd_commutant,
            "powerbound": cmd_powerbound, "suite": cmd_suite}


def build_parser():
    p = argparse.ArgumentParser(prog="cdlab", description="Quasi-homogeneous operator experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML config (optional for suite)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trunc", type=int, help="override the truncation dimension")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--tol", type=float, help="override the pass tolerance of the command")
    p.add_argument("--workers", type=int, help=f"worker processes (capped by {ENV_WORKERS})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _versions():
    import numba
    import scipy

    return {"cdlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _manifest(run, args, cfg, status, error=None):
    doc = {"command": args.command, "config_path": args.config, "config": cfg,
           "overrides": {"trunc": args.trunc, "seed": args.seed, "tol": args.tol},
           "backend": _accel.backend(), "workers": args.workers, "versions": _versions(),
           "timings": run.timings, "outputs": run.files, "summary": run.summary, "status": status}
    if error:
        doc["error"] = error
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "run_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=fmt) + "\n")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers is None:
        args.workers = max_workers()
    try:
        if args.command != "suite" and not args.config:
            raise ConfigError("--config is required for this command")
        cfg = config.load(args.config)
        if args.trunc is not None:
            if args.trunc < 2:
                raise ConfigError("--trunc must be at least 2")
            cfg["model"]["trunc"] = args.trunc
            cfg["geometry"]["trunc"] = args.trunc
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.command == "validate":
            config.model_spec(cfg)
            print(f"{args.config}: valid")
            return EXIT_OK
    except CdlabError as exc:
        print(f"cdlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.out:
        print("cdlab: --out is required", file=sys.stderr)
        return EXIT_USAGE
    run = Run(args.out, args.command)
    t0 = time.perf_counter()
    try:
        code = HANDLERS[args.command](run, cfg, args) or EXIT_OK
        status = "ok" if code == EXIT_OK else "checks_failed"
        error = None
    except ConfigError as exc:
        code, status, error = EXIT_USAGE, "error", exc.record()
    except (NumericalError, ConsistencyError) as exc:
        code, status, error = EXIT_NUMERICAL, "error", exc.record()
    except (CdlabError, DomainError) as exc:
        code, status, error = EXIT_MODEL, "error", exc.record()
    except Exception as exc:  # noqa: BLE001 - report any crash as a record
        code, status = EXIT_CRASH, "crash"
        error = {"kind": "crash", "message": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}
    if error:
        run.abort_table(error["kind"])
        run.table("error.csv", ["kind", "message"], [[error["kind"], error["message"]]])
        print(f"cdlab: {error['kind']}: {error['message']}", file=sys.stderr)
    run.timings["total"] = round(time.perf_counter() - t0, 6)
    _manifest(run, args, cfg, status, error)
    return code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
