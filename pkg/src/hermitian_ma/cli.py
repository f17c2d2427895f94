"""Command line runner: hermitian-ma {solve,flow,verify,concentrate} --config FILE.

Exit status: 0 everything passed, 2 a check was flagged or a solve failed
(partial artifacts are still written), 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, spectral
from . import pointwise as pw
from .builders import BuilderError, build_metric, build_rhs
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .diagnostics import (
    ConcentrationConfig,
    ball,
    capacity_comparability,
    capacity_family,
    cauchy_schwarz_family,
    check_mass_estimate,
    check_trace_inequality,
    cln_family,
    comparison_family,
    constant_bound_family,
    energy_family,
    growth_diagnostic,
    mass_concentration,
    metric_monotonicity_family,
    mixed_type_family,
    sup_bound_family,
    volume_capacity_diagnostic,
)
from .diagnostics.report import InequalityReport, _jsonable
from .fieldio import dump_field
from .flow import FlowError, chern_ricci_flow
from .grid import GeometryError, GridSpec, ScalarField, TopDensity, random_admissible
from .ma import GauduchonError, curvature_constant, gauduchon
from .solvers import (
    SolverError,
    solve_degenerate,
    solve_degenerate_lambda_zero,
    solve_lambda_positive,
    solve_lambda_zero,
)

log = logging.getLogger("hermitian_ma")

SCHEMA = "hermitian-ma/report/1"
EXIT_OK, EXIT_USAGE, EXIT_FLAGGED = 0, 1, 2

DEFAULT_SAMPLES = {"cln": 100, "cauchy_schwarz": 50, "energy": 10, "mixed_type": 100,
                   "trace": 100_000, "constant_bound": 100, "sup_bounds": 20, "comparison": 50,
                   "metric_monotonicity": 20}


class Run:
    """Collects the result, artifacts and timings of one task."""

    def __init__(self, cfg: RunConfig, out: Path, dump: bool):
        self.cfg = cfg
        self.out = out
        self.dump = dump
        self.result: dict = {}
        self.flags: list = []
        self.artifacts: list = []
        self.timing: dict = {}
        self.tag = ""

    def field(self, phi: ScalarField, name: str):
        if self.dump:
            dump_field(phi, self.out / "fields", name)
            self.artifacts += [f"fields/{name}.json", f"fields/{name}.bin"]

    def csv(self, name: str, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        self.artifacts.append(name)


# ------------------------------------------------------------------ setup

def _grid(cfg):
    return GridSpec(cfg.n, cfg.res)


def _metric(cfg, grid):
    return build_metric(grid, cfg.metric.name, **cfg.metric.params)


def _beta(cfg, grid, default="flat"):
    spec = cfg.beta
    if spec is None:
        return build_metric(grid, default)
    return build_metric(grid, spec.name, **spec.params)


def _rhs(cfg, omega, base=None, lam=None):
    params = dict(cfg.rhs.params)
    if cfg.rhs.name == "manufactured":
        params.setdefault("seed", cfg.seed)
        params.setdefault("lam", cfg.lam if lam is None else lam)
        if base is not None:
            params.setdefault("base", base)
    return build_rhs(omega, cfg.rhs.name, **params)


def _solve_summary(phi, rep):
    d = rep.to_dict(timing=False)
    d["sup"] = float(np.max(phi.values))
    d["inf"] = float(np.min(phi.values))
    return d


def _continuation_csv(run, rep, name="continuation.csv"):
    rows = [(s.get("label"), s.get("lam"), s.get("eps", ""), s.get("newton_iterations"),
             s.get("residual", ""), s.get("M", "")) for s in rep.stages]
    run.csv(name, ["label", "lam", "eps", "newton_iterations", "residual", "M"], rows)


# ------------------------------------------------------------------ tasks

def task_solve(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega = _metric(cfg, grid)
    f, extra = _rhs(cfg, omega)
    run.tag = "lambda-positive-newton"
    t = time.perf_counter()
    try:
        phi, rep = solve_lambda_positive(omega, f, cfg.lam, cfg.solver)
    finally:
        run.timing["solve_s"] = time.perf_counter() - t
    run.result["solve"] = _solve_summary(phi, rep)
    run.flags += rep.flags
    if "psi0" in extra:
        err = float(np.max(np.abs(phi.values - extra["psi0"].full())))
        run.result["manufactured_error"] = err
        if err > 1e-8:
            run.flags.append(f"manufactured solution recovered only to {err:.3e}")
        run.field(extra["psi0"], "psi0")
    _continuation_csv(run, rep)
    run.field(phi, "phi")


def task_solve_zero(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega = _metric(cfg, grid)
    f, extra = _rhs(cfg, omega, lam=0.0)
    run.tag = "lambda-zero-eps-continuation"
    t = time.perf_counter()
    try:
        psi, c, rep = solve_lambda_zero(omega, f, cfg.solver)
    finally:
        run.timing["solve_s"] = time.perf_counter() - t
    run.result["solve"] = _solve_summary(psi, rep)
    run.result["c"] = c
    run.flags += rep.flags
    if "psi0" in extra:
        p0 = extra["psi0"].full()
        err = float(np.max(np.abs(psi.values - (p0 - p0.max()))))
        run.result["manufactured_error"] = err
        run.result["c_error"] = abs(c - 1.0)
        if err > 1e-4:
            run.flags.append(f"manufactured solution recovered only to {err:.3e}")
        if abs(c - 1.0) > 1e-3:
            run.flags.append(f"|c - 1| = {abs(c - 1.0):.3e} exceeds 1e-3")
    _continuation_csv(run, rep)
    run.field(psi, "psi")


def task_degenerate(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega = _metric(cfg, grid)
    beta = _beta(cfg, grid, "degenerate-beta")
    base = None
    if cfg.rhs.name == "manufactured":
        base = beta if beta.positivity_margin() > 0 else beta + omega * cfg.solver.eps_schedule[-1]
    f, extra = _rhs(cfg, omega, base=base, lam=cfg.lam)
    t = time.perf_counter()
    try:
        if cfg.lam == 0.0:
            run.tag = "degenerate-normalizing-constant"
            phi, c, rep = solve_degenerate_lambda_zero(beta, f, cfg.solver, omega)
            run.result["c"] = c
            run.result["c_ratio"] = rep.extras["c_ratio"]
        else:
            run.tag = "degenerate-eps-path"
            phi, rep = solve_degenerate(beta, f, cfg.solver, omega)
    finally:
        run.timing["solve_s"] = time.perf_counter() - t
    run.result["solve"] = _solve_summary(phi, rep)
    g = growth_diagnostic(rep)
    run.result["growth"] = g.to_dict()
    run.flags += rep.flags
    if "psi0" in extra and cfg.lam != 0.0:
        err = float(np.max(np.abs(phi.values - extra["psi0"].full())))
        run.result["manufactured_error"] = err
        if err > 1e-4:
            run.flags.append(f"manufactured solution recovered only to {err:.3e}")
    _continuation_csv(run, rep)
    run.field(phi, "phi")


def task_flow(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega0 = _metric(cfg, grid)
    beta = _beta(cfg, grid, "flat")
    f, _ = _rhs(cfg, omega0)
    vol0 = np.broadcast_to(pw.det(omega0.parts()), grid.shape)
    dens = np.broadcast_to(f, grid.shape) * vol0
    scale = spectral.mean(vol0) / spectral.mean(dens)
    dens = dens * scale
    run.result["omega_vol_rescale"] = scale
    run.tag = "normalized-chern-ricci-flow"
    t = time.perf_counter()
    try:
        phi, trace = chern_ricci_flow(omega0, beta, TopDensity(grid, dens), cfg.flow)
    except FlowError as err:
        run.result["trace"] = err.trace.to_dict(timing=False)
        err.trace.to_csv(run.out / "flow_trace.csv")
        run.artifacts.append("flow_trace.csv")
        raise
    finally:
        run.timing["flow_s"] = time.perf_counter() - t
    run.timing["flow_wall_s"] = trace.wall_time
    run.result["trace"] = trace.to_dict(timing=False)
    trace.to_csv(run.out / "flow_trace.csv")
    run.artifacts.append("flow_trace.csv")
    # elliptic oracle for the steady state (beta + dd^c phi)^n = e^phi Omega
    t = time.perf_counter()
    fv = dens / vol0
    if beta.positivity_margin() > 0:
        ell, rep = solve_lambda_positive(beta, fv, 1.0, cfg.solver, reference=omega0)
    else:
        ell, rep = solve_degenerate(beta, fv, cfg.solver, omega0)
    run.timing["elliptic_s"] = time.perf_counter() - t
    diff = float(np.max(np.abs(phi.values - ell.values)))
    mono = trace.monotone_after()
    run.result["elliptic"] = _solve_summary(ell, rep)
    run.result["flow_elliptic_sup_difference"] = diff
    run.result["residual_monotone_after_transient"] = mono
    if diff > cfg.flow_agreement_tol:
        run.flags.append(f"flow and elliptic solutions differ by {diff:.3e}")
    if not mono:
        run.flags.append("steady residual is not monotone after the transient")
    run.field(phi, "phi_flow")
    run.field(ell, "phi_elliptic")


def task_concentrate(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega = _metric(cfg, grid)
    beta = _beta(cfg, grid, "flat")
    c = dict(cfg.concentration)
    spacings = c.pop("eps_grid_spacings", None)
    if spacings is not None:
        c["eps_list"] = [float(s) * grid.spacing for s in spacings]
    c.setdefault("points", [[0.5] * (2 * grid.n)])
    if "taus" not in c:
        vol = spectral.mean(np.broadcast_to(pw.det(beta.parts()), grid.shape))
        K = math.factorial(grid.n) * 2 ** grid.n
        c["taus"] = [(0.5 * K * vol) ** (1.0 / grid.n)]
    c["points"] = [tuple(float(v) for v in p) for p in c["points"]]
    for p in c["points"]:
        if len(p) != 2 * grid.n:
            raise ConfigError(f"concentration.points: each point needs {2 * grid.n} real coordinates")
    ccfg = ConcentrationConfig(solver=cfg.solver, **c)
    run.tag = "log-pole-mass-concentration"
    t = time.perf_counter()
    try:
        fields, rep = mass_concentration(beta, omega, ccfg)
    finally:
        run.timing["concentrate_s"] = time.perf_counter() - t
    run.result["report"] = rep.to_dict()
    if not rep.passed:
        run.flags.append("log-pole slope outside tolerance or gamma mass check failed")
    rows = []
    for eps, slopes in rep.fitted["slopes"].items():
        for j, (s, tau) in enumerate(zip(slopes, ccfg.taus)):
            rows.append((float(eps), j, float(tau), float(s)))
    run.csv("concentration_slopes.csv", ["eps", "point", "tau", "slope"], rows)
    for i, (eps, phi) in enumerate(sorted(fields.items())):
        run.field(phi, f"phi_eps{i}")


def _diag(name, grid, omega, beta, samples, seed, solver) -> InequalityReport:
    n = grid.n
    k = samples.get(name, DEFAULT_SAMPLES.get(name))
    center = (0.5,) * (2 * n)
    if name == "cln":
        return cln_family(omega, k, seed)
    if name == "cauchy_schwarz":
        if n != 2:
            return InequalityReport(name, 0, 0.0, True, {}, {"skipped": "n = 1"})
        return cauchy_schwarz_family(omega, k, seed)
    if name == "mass_estimate":
        eps = [2.0 ** -j for j in range(6)]
        u = random_admissible(beta + omega * eps[-1], seed)
        return check_mass_estimate(beta, omega, u, eps)
    if name == "energy":
        return energy_family(beta, omega, samples=k, seed=seed)
    if name == "mixed_type":
        return mixed_type_family(omega, k, seed)
    if name == "trace":
        return check_trace_inequality(k, seed)
    if name == "constant_bound":
        return constant_bound_family(omega, k, seed)
    if name == "sup_bounds":
        return sup_bound_family(omega, k, seed, cfg=solver)
    if name == "comparison":
        return comparison_family(omega, k, seed, cfg=solver)
    if name == "metric_monotonicity":
        return metric_monotonicity_family(omega, k, seed, cfg=solver)
    if name == "capacity":
        E = ball(grid, center, 0.2)
        m1, m2, ratio = capacity_comparability(E, omega, center)
        radii = [0.1, 0.2, 0.3]
        caps = capacity_family([ball(grid, center, r) for r in radii], omega, center)
        mono = all(b >= a for a, b in zip(caps, caps[1:]))
        ok = 1 - 1e-12 <= ratio <= 2 ** n + 1e-12 and mono
        return InequalityReport(name, len(radii) + 1, min(ratio - 1, 2 ** n - ratio), bool(ok),
                                {"ratio": ratio}, {"cap_omega": m1, "cap_2omega": m2,
                                                   "nested_radii": radii, "nested_caps": caps})
    if name == "volume_capacity":
        radii = [0.4, 0.3, 0.2, 0.14, 0.1, 0.07]
        return volume_capacity_diagnostic(beta, [ball(grid, center, r) for r in radii], omega, center)
    if name == "curvature":
        if n != 2:
            return InequalityReport(name, 0, 0.0, True, {}, {"skipped": "n = 1"})
        B = curvature_constant(omega).B
        ratios = []
        for e in (1.0, 0.5, 0.25):
            ratios.append(curvature_constant(beta + omega * e, reference=omega).B / e)
        spread = (max(ratios) - min(ratios)) / max(max(ratios), 1e-300)
        closed_beta = curvature_constant(beta, reference=omega).B if beta.positivity_margin() > 0 else 0.0
        return InequalityReport(name, 3, 1e-10 - spread, bool(spread <= 1e-10 or max(ratios) < 1e-14),
                                {"B": B}, {"B_over_eps": ratios, "B_beta": closed_beta})
    if name == "gauduchon":
        res = gauduchon(omega)
        scale = float(np.max(np.abs(omega.coeff)))
        ok = res.residual < 1e-8 * scale and bool(np.all(np.isfinite(res.G.full())))
        return InequalityReport(name, 1, 1e-8 * scale - res.residual, bool(ok),
                                {"kernel_dim": res.kernel_dim},
                                {"residual": res.residual, "G_range": [res.G.inf(), res.G.sup()]})
    raise ConfigError(f"unknown diagnostic {name!r}")


def task_verify(run: Run):
    cfg = run.cfg
    grid = _grid(cfg)
    omega = _metric(cfg, grid)
    beta = _beta(cfg, grid, "flat")
    run.tag = "estimate-suite"
    reports = {}
    rows = []
    for name in cfg.verify["diagnostics"]:
        t = time.perf_counter()
        try:
            r = _diag(name, grid, omega, beta, cfg.verify["samples"], cfg.seed, cfg.solver)
        except (SolverError, GauduchonError) as err:
            r = InequalityReport(name, 0, -math.inf, False, {}, {"error": str(err)})
        run.timing[f"{name}_s"] = time.perf_counter() - t
        reports[name] = r.to_dict()
        rows.append((name, r.samples, float(r.worst_margin), r.passed))
        log.info("%-20s %s (worst margin %.3e)", name, "pass" if r.passed else "FAIL", r.worst_margin)
        if not r.passed:
            run.flags.append(f"diagnostic {name} failed")
        if name == "mass_estimate":
            d = r.details
            run.csv("mass_estimate.csv", ["eps", "delta"], list(zip(d["eps"], d["delta"])))
        if name == "volume_capacity" and "caps" in r.details:
            d = r.details
            run.csv("volume_capacity.csv", ["capacity", "volume"], list(zip(d["caps"], d["vols"])))
    run.csv("diagnostics.csv", ["name", "samples", "worst_margin", "passed"], rows)
    run.result["diagnostics"] = reports


TASKS = {"solve": task_solve, "solve-zero": task_solve_zero, "degenerate": task_degenerate,
         "flow": task_flow, "verify": task_verify, "concentrate": task_concentrate}


# ------------------------------------------------------------------ report

def build_report(run: Run, status: str, code: int, messages, timing: bool = True) -> dict:
    rep = {
        "schema": SCHEMA,
        "version": __version__,
        "task": run.cfg.task,
        "result_tag": run.tag,
        "config_sha256": run.cfg.sha256(),
        "config": run.cfg.canonical(),
        "status": status,
        "exit_code": code,
        "flags": list(run.flags),
        "messages": list(messages),
        "result": run.result,
        "artifacts": sorted(set(run.artifacts)),
    }
    if timing:
        rep["timing"] = run.timing
    return _jsonable(rep)


def write_report(run: Run, status, code, messages):
    rep = build_report(run, status, code, messages)
    path = run.out / "report.json"
    path.write_text(json.dumps(rep, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def execute(cfg: RunConfig, out: Path, dump: bool = False):
    """Run one task; returns (exit code, Run). Never raises for numerical failures."""
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, dump)
    run.artifacts.append("report.json")
    t0 = time.perf_counter()
    messages = []
    try:
        TASKS[cfg.task](run)
        code = EXIT_FLAGGED if run.flags else EXIT_OK
        status = "flagged" if run.flags else "pass"
    except (SolverError, FlowError) as err:
        code, status = EXIT_FLAGGED, "failed"
        messages.append(f"numerical failure: {err}")
        rep = getattr(err, "report", None)
        if rep is not None and hasattr(rep, "to_dict"):
            run.result["partial"] = rep.to_dict(timing=False)
        phi = getattr(err, "phi", None)
        if phi is not None:
            run.field(phi if isinstance(phi, ScalarField) else ScalarField(_grid(cfg), phi), "last_iterate")
    run.timing["total_s"] = time.perf_counter() - t0
    write_report(run, status, code, messages)
    return code, run


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; here 2 means a flagged run."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser():
    p = _Parser(prog="hermitian-ma",
                description="Complex Monge-Ampere solvers and estimate checks on flat tori.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, tasks in COMMANDS.items():
        s = sub.add_parser(name, help=f"run task(s): {', '.join(tasks)}")
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--threads", type=int, default=None,
                       help="FFT worker cap (default: $HERMITIAN_MA_THREADS or 1)")
        s.add_argument("--dump-fields", action="store_true", help="write solution fields (JSON header + raw f64)")
        s.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set grid.res=32 (repeatable)")
        s.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        spectral.set_threads(args.threads)
    try:
        cfg = load_config(args.config, args.set, command=args.command)
        out = Path(args.out or cfg.output_dir)
        code, run = execute(cfg, out, args.dump_fields)
    except (ConfigError, BuilderError, GeometryError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    status = {EXIT_OK: "pass", EXIT_FLAGGED: "flagged"}[code]
    log.info("%s: %s -> %s", cfg.task, status, out / "report.json")
    for f in run.flags:
        log.warning("%s", f)
    return code


if __name__ == "__main__":
    sys.exit(main())
