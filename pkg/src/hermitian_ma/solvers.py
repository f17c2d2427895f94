"""Newton-Krylov solvers for (base + dd^c phi)^n = e^{lam phi} f omega^n.

The unknown is solved through the log-determinant residual

    R(phi) = log det(base + H(phi)) - lam*phi - log f - log det(omega),

whose linearization dphi -> tr(A^{-1} H(dphi)) - lam*dphi is strictly
negative for lam > 0. lam = 0 is only reached by continuation in lam.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pointwise as pw
from . import spectral
from .grid import Form11, GeometryError, GridSpec, ScalarField, TopDensity, closedness_residual
from .krylov import bicgstab

CLOSED_TOL = 1e-10


def _default_eps():
    return [2.0 ** -k for k in range(11)]


def _default_delta():
    return [10.0 ** -k for k in range(2, 9)]


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 50
    damping: float = 0.5
    min_step: float = 1e-6
    positivity_margin: float = 1e-8
    eps_schedule: list = field(default_factory=_default_eps)
    delta_schedule: list = field(default_factory=_default_delta)
    max_krylov: int = 200
    coarse_start: bool = True
    monotone_tol: float = 1e-6
    c_tol: float = 5e-3

    def __post_init__(self):
        for name in ("eps_schedule", "delta_schedule"):
            s = [float(v) for v in getattr(self, name)]
            if not s:
                raise ValueError(f"{name} must not be empty")
            if any(v <= 0 for v in s):
                raise ValueError(f"{name} must be positive")
            if any(b >= a for a, b in zip(s, s[1:])):
                raise ValueError(f"{name} must be strictly decreasing")
            setattr(self, name, s)
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if self.newton_tol <= 0 or self.max_newton < 1:
            raise ValueError("bad Newton settings")


@dataclass
class SolveReport:
    stages: list = field(default_factory=list)
    residual: float = math.inf
    converged: bool = False
    c: float | None = None
    c_sequence: list = field(default_factory=list)
    cauchy: list = field(default_factory=list)
    M: float = 0.0
    osc: float = 0.0
    margin: float = 0.0
    flags: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def iterations(self):
        return [s["newton_iterations"] for s in self.stages]

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


class SolverError(RuntimeError):
    """Solve failed; carries the last iterate and the partial report."""

    def __init__(self, message, phi=None, report=None):
        super().__init__(message)
        self.phi = phi
        self.report = report


# ---------------------------------------------------------------------------
# Newton core

class _Problem:
    """One fixed equation: base form, lam and log right-hand side.

    For n = 2 everything is kept as four real fields (a11, a22, Re a12,
    Im a12) and updated in place; at res = 64 a single field is 134 MB.
    """

    def __init__(self, grid, base_parts, lam, log_rhs, cfg):
        self.grid = grid
        self.sym = grid.symbols
        if grid.n == 2:
            b11, b22, b12 = base_parts
            b12 = np.asarray(b12)
            self.base = (b11, b22, np.ascontiguousarray(b12.real), np.ascontiguousarray(b12.imag))
        else:
            self.base = base_parts
        self.lam = float(lam)
        self.log_rhs = log_rhs
        self.cfg = cfg
        self.hmax = max(float(np.max(np.abs(self.sym.hess(j, j)[0]))) for j in range(grid.n))
        self.gmax = max(float(np.max(np.abs(b))) for b in self.base)

    def roundoff_floor(self, phi, margin):
        """Size of R that rounding of phi alone produces.

        A relative perturbation eps of phi moves H by eps |phi| |symbol|,
        and log det turns that into a relative error over lambda_min.
        """
        eps = np.finfo(float).eps
        scale = float(np.max(np.abs(phi))) * self.hmax + self.gmax
        return 4.0 * eps * (scale / margin + self.lam * float(np.max(np.abs(phi))))

    def evaluate(self, phi):
        """(R, inverse parts, margin) or None when positivity fails."""
        g = self.grid
        if g.n == 1:
            a = self.base[0] + spectral.hessian_parts(1, g.res, phi)[0]
            lam_min = float(np.min(a))
            if not lam_min >= self.cfg.positivity_margin:
                return None
            R = np.log(a) - self.lam * phi - self.log_rhs
            return np.broadcast_to(R, g.shape), (np.ones(g.shape), a), lam_min
        sym, shape = self.sym, g.shape
        F = spectral.rfft(phi)
        re, im = sym.hess(0, 1)
        a11 = spectral.irfft(F * sym.hess(0, 0)[0], shape)
        a11 += self.base[0]
        a22 = spectral.irfft(F * sym.hess(1, 1)[0], shape)
        a22 += self.base[1]
        ar = spectral.irfft(F * re, shape)
        ar += self.base[2]
        ai = spectral.irfft(F * im, shape)
        ai += self.base[3]
        del F
        det = a11 * a22
        det -= ar * ar
        det -= ai * ai
        # lambda_min = det / lambda_max avoids cancellation near degeneracy
        rad = a11 - a22
        rad *= 0.5
        rad *= rad
        rad += ar * ar
        rad += ai * ai
        np.sqrt(rad, out=rad)
        rad += 0.5 * (a11 + a22)
        rad = det / rad
        lam_min = float(np.min(rad))
        del rad
        if not lam_min >= self.cfg.positivity_margin:
            return None
        R = np.log(det)
        R -= self.lam * phi
        R -= self.log_rhs
        ar *= -1.0
        ai *= -1.0
        # adjugate parts and det: the caller solves the det-scaled system
        return R, (a22, a11, ar, ai, det), lam_min

    def operators(self, adj):
        """Jacobian matvec and preconditioner.

        det * tr((g + H)^{-1} H(d)) = tr(adj(g + H) H(d)) has bounded
        coefficients even where det is tiny, so it is close to a constant
        coefficient operator P. The right preconditioner is P^{-1} applied
        after multiplying by det, while the Krylov residual stays the
        unscaled one.
        """
        sym, shape, lam = self.sym, self.grid.shape, self.lam
        *cof, det = adj
        if self.grid.n == 1:
            syms, weights = (sym.hess(0, 0)[0],), (1.0,)
        else:
            syms = (sym.hess(0, 0)[0], sym.hess(1, 1)[0]) + sym.hess(0, 1)
            weights = (1.0, 1.0, 2.0, 2.0)

        def matvec(d):
            F = spectral.rfft(d)
            out = None
            for c, h, w in zip(cof, syms, weights):
                tmp = spectral.irfft(F * h, shape)
                tmp *= c
                if w != 1.0:
                    tmp *= w
                if out is None:
                    out = tmp
                else:
                    out += tmp
            out /= det
            out -= lam * d
            return out

        m = [spectral.mean(np.broadcast_to(x, shape)) for x in cof]
        psym = sum(w * mi * h for w, mi, h in zip(weights, m, syms)) - lam * spectral.mean(det)
        psym = np.broadcast_to(psym, self.sym.spec_shape)
        if lam > 0:
            inv_sym = 1.0 / psym
        else:
            safe = np.where(psym == 0, 1.0, psym)
            inv_sym = np.where(psym == 0, 0.0, 1.0 / safe)

        def precond(r):
            return spectral.irfft(spectral.rfft(r * det) * inv_sym, shape)

        return matvec, precond


def _newton_core(problem: _Problem, phi, label, mask=None):
    """Damped inexact Newton. Returns (phi, stage record, margin)."""
    cfg = problem.cfg
    stage = {"label": label, "lam": problem.lam, "newton_iterations": 0,
             "residuals": [], "krylov_iterations": [], "steps": []}
    state = problem.evaluate(phi)
    if state is None:
        stage["failure"] = "initial iterate not admissible"
        raise SolverError(f"{label}: initial iterate is not admissible", phi, stage)
    R, inv, margin = state
    del state
    for it in range(cfg.max_newton + 1):
        rn = float(np.max(np.abs(R)))
        stage["residuals"].append(rn)
        tol = max(cfg.newton_tol, problem.roundoff_floor(phi, margin))
        if rn <= tol:
            break
        if it == cfg.max_newton:
            stage["failure"] = "max_newton reached"
            raise SolverError(f"{label}: no convergence in {cfg.max_newton} Newton steps", phi, stage)
        matvec, precond = problem.operators(inv)
        eta = min(0.1, rn)
        step, info = bicgstab(matvec, np.negative(R), precond, rtol=eta, maxiter=cfg.max_krylov)
        del R
        stage["krylov_iterations"].append(info.iterations)
        del inv, matvec, precond
        t = 1.0
        st = None
        while t >= cfg.min_step:
            trial = phi + t * step
            st = problem.evaluate(trial)
            if st is not None and float(np.max(np.abs(st[0]))) <= (1.0 - 1e-4 * t) * rn:
                break
            st = trial = None
            t *= cfg.damping
        if st is None:
            stage["failure"] = "positivity or descent lost at minimal damping"
            raise SolverError(f"{label}: line search failed (residual {rn:.3e})", phi, stage)
        del step
        stage["steps"].append(t)
        phi = trial
        R, inv, margin = st
        st = trial = None
        stage["newton_iterations"] = it + 1
    res = stage["residuals"][-1]
    if mask is not None:
        res = float(np.max(np.abs(R[mask]))) if np.any(mask) else 0.0
    stage["residual"] = res
    stage["margin"] = margin
    stage["tolerance"] = tol
    return phi, stage, margin


_STALLS = ("positivity or descent lost at minimal damping", "max_newton reached")


def _newton(problem: _Problem, phi, label, mask=None):
    """Newton, falling back to a Newton homotopy when the line search stalls.

    The homotopy solves R(phi) = (1 - s) R(phi_start) for s rising from 0
    (where phi_start is exact) to 1 with adaptive steps; the recorded stage
    is the final s = 1 solve, with the path under "homotopy".
    """
    try:
        return _newton_core(problem, phi, label, mask)
    except SolverError as err:
        if (err.report or {}).get("failure") not in _STALLS:
            raise
        first = err
    R0 = np.array(problem.evaluate(phi)[0])
    path, s, ds = [], 0.0, 0.25
    while True:
        s_try = min(1.0, s + ds)
        if s_try == 1.0:
            sub = problem
        else:
            sub = copy.copy(problem)
            sub.log_rhs = problem.log_rhs + (1.0 - s_try) * R0
        try:
            out = _newton_core(sub, phi, f"{label} s={s_try:.4g}", mask if sub is problem else None)
        except SolverError as err:
            if (err.report or {}).get("failure") not in _STALLS:
                raise
            ds *= 0.25
            if ds < 1e-3:
                raise SolverError(f"{label}: homotopy stalled at s={s:.4g}", phi, first.report) from err
            continue
        phi = out[0]
        path.append({"s": s_try, "newton_iterations": out[1]["newton_iterations"]})
        if s_try == 1.0:
            out[1]["homotopy"] = path
            out[1]["label"] = label
            return out
        s, ds = s_try, min(2 * ds, 0.5)


# ---------------------------------------------------------------------------
# helpers

def _as_values(f, grid):
    v = f.density if isinstance(f, TopDensity) else (f.values if isinstance(f, ScalarField) else f)
    return np.broadcast_to(np.asarray(v, dtype=float), grid.shape)


def _check_rhs(f, omega: Form11):
    fv = _as_values(f, omega.grid)
    if float(np.min(fv)) < -1e-12:
        raise GeometryError("right-hand side must be nonnegative")
    if float(np.max(fv)) <= 0:
        raise GeometryError("right-hand side vanishes identically")
    vol = np.broadcast_to(pw.det(omega.parts()), omega.grid.shape)
    if spectral.mean(fv * vol) <= 0:
        raise GeometryError("right-hand side has zero total mass")
    return np.maximum(fv, 0.0), vol


def _log_rhs(fv, logvol, delta):
    return np.log(np.maximum(fv, delta) if delta else fv) + logvol


def _note_floor(report, stage, cfg):
    if stage["tolerance"] > cfg.newton_tol:
        report.extras.setdefault("roundoff_limited", []).append(
            {"label": stage["label"], "tolerance": stage["tolerance"]})


def _solve_fixed(grid, base_parts, lam, fv, logvol, cfg, phi, label, report):
    """One equation, with the delta-floor schedule when f has zeros."""
    if float(np.min(fv)) > 0:
        prob = _Problem(grid, base_parts, lam, _log_rhs(fv, logvol, None), cfg)
        phi, stage, margin = _newton(prob, phi, label)
        report.stages.append(stage)
        _note_floor(report, stage, cfg)
        return phi, stage
    dmin = cfg.delta_schedule[-1]
    mask = fv > dmin
    for delta in cfg.delta_schedule:
        prob = _Problem(grid, base_parts, lam, _log_rhs(fv, logvol, delta), cfg)
        phi, stage, margin = _newton(prob, phi, f"{label} delta={delta:.0e}",
                                     mask if delta == dmin else None)
        stage["delta"] = delta
        report.stages.append(stage)
        _note_floor(report, stage, cfg)
    return phi, stage


def _finish(report, phi, stage, t0):
    report.residual = stage["residual"]
    report.margin = stage["margin"]
    report.M = float(np.max(phi))
    report.osc = float(np.max(phi) - np.min(phi))
    report.converged = True
    report.wall_time = time.perf_counter() - t0


def _coarse_guess(grid, base_parts, lam, fv, logvol, cfg, stages=None):
    """Nested iteration: solve on the res/2 grid, interpolate back up.

    Returns None when the grid is already coarse or anything fails; the
    caller then starts from the constant guess.
    """
    if not cfg.coarse_start or grid.res < 32:
        return None
    cg = GridSpec(grid.n, grid.res // 2)
    cb = tuple(spectral.restrict(p) for p in base_parts)
    cf, clv = spectral.restrict(fv), spectral.restrict(logvol)
    phi = _coarse_guess(cg, cb, lam, cf, clv, cfg, stages)
    if phi is None:
        phi = _initial_constant(cb, lam, cf, clv, cg)
    try:
        phi, stage, _ = _newton(_Problem(cg, cb, lam, _log_rhs(cf, clv, None), cfg), phi, f"coarse res={cg.res}")
    except SolverError:
        return None
    if stages is not None:
        stages.append(stage)
    return spectral.prolong(phi, grid.res)


def _initial_constant(base_parts, lam, fv, logvol, grid):
    logdet = np.log(np.broadcast_to(pw.det(base_parts), grid.shape))
    return np.full(grid.shape, spectral.mean(logdet - np.log(np.maximum(fv, 1e-300)) - logvol) / lam)


# ---------------------------------------------------------------------------
# public solvers

def solve_lambda_positive(omega: Form11, f, lam: float, cfg: SolverConfig | None = None,
                          phi0: ScalarField | None = None, reference: Form11 | None = None):
    """Solve (omega + dd^c phi)^n = e^{lam phi} f omega^n for lam > 0.

    With ``reference`` the measure on the right is f reference^n instead,
    so different metrics can be compared against one fixed measure.
    """
    cfg = cfg or SolverConfig()
    if lam <= 0:
        raise ValueError("lam must be positive; use solve_lambda_zero for lam = 0")
    if not omega.is_positive():
        raise GeometryError("omega must be positive")
    t0 = time.perf_counter()
    g = omega.grid
    if reference is not None and reference.grid != g:
        raise GeometryError("reference form lives on a different grid")
    fv, vol = _check_rhs(f, reference if reference is not None else omega)
    logvol = np.log(vol)
    base = omega.parts()
    report = SolveReport()
    if phi0 is None:
        if float(np.min(fv)) > 0:
            coarse = []
            phi = _coarse_guess(g, base, lam, fv, logvol, cfg, coarse)
            if phi is not None and _Problem(g, base, lam, 0.0, cfg).evaluate(phi) is None:
                phi = None
            report.extras["coarse_start"] = phi is not None
            report.extras["coarse_stages"] = coarse
            if phi is None:
                phi = _initial_constant(base, lam, fv, logvol, g)
        else:
            phi = np.zeros(g.shape)
    else:
        phi = np.array(np.broadcast_to(phi0.values, g.shape), dtype=float)
    try:
        phi, stage = _solve_fixed(g, base, lam, fv, logvol, cfg, phi, f"lam={lam:g}", report)
    except SolverError as err:
        raise SolverError(str(err), err.phi, _partial(report, err))
    _finish(report, phi, stage, t0)
    return ScalarField(g, phi), report


def _partial(report, err):
    if isinstance(err.report, dict):
        report.stages.append(err.report)
    report.flags.append(str(err))
    return report


def _lambda_continuation(grid, base_parts, fv, logvol, cfg, phi, report, prev_lam=None):
    """lam = eps_k continuation; fills c_sequence and cauchy, returns psi."""
    psis_prev = None
    lam_prev, M_prev = prev_lam if prev_lam else (None, None)
    cs = []
    for eps in cfg.eps_schedule:
        if lam_prev is not None:
            phi = phi - M_prev + lam_prev * M_prev / eps
        phi, stage = _solve_fixed(grid, base_parts, eps, fv, logvol, cfg, phi, f"eps={eps:g}", report)
        M = float(np.max(phi))
        stage["eps"] = eps
        stage["M"] = M
        psi = phi - M
        if psis_prev is not None:
            report.cauchy.append(float(np.max(np.abs(psi - psis_prev))))
        psis_prev = psi
        cs.append(math.exp(eps * M))
        lam_prev, M_prev = eps, M
    report.c_sequence = cs
    eps = cfg.eps_schedule
    if len(cs) >= 2:
        cK, cK1 = cs[-1], cs[-2]
        rich = cK + (cK - cK1) * eps[-1] / (eps[-2] - eps[-1])
        report.extras["richardson_order_assumed"] = 1
    else:
        rich = cs[-1]
    report.extras["c_last"] = cs[-1]
    report.c = rich
    report.flags.extend(_sequence_flags(cs, report.cauchy))
    return psis_prev, stage


def _sequence_flags(cs, cauchy, tol=1e-9):
    flags = []
    if len(cs) >= 3:
        d = np.diff(cs)
        if not (np.all(d >= -tol) or np.all(d <= tol)):
            flags.append("c_k sequence is not monotone")
        tail = np.abs(d[-3:])
        if len(tail) >= 2 and np.any(np.diff(tail) > tol + 1e-3 * tail[:-1]):
            flags.append("c_k differences are not shrinking")
    if len(cauchy) >= 3 and cauchy[-1] > cauchy[-2] * 1.5 + tol:
        flags.append("Cauchy differences are growing")
    return flags


def solve_lambda_zero(omega: Form11, f, cfg: SolverConfig | None = None):
    """(omega + dd^c phi)^n = c f omega^n through lam = eps -> 0.

    c_k = exp(eps_k M_k) with M_k = sup phi_{eps_k}; the returned c is the
    last value plus one Richardson step assuming first-order convergence.
    """
    cfg = cfg or SolverConfig()
    if not omega.is_positive():
        raise GeometryError("omega must be positive")
    t0 = time.perf_counter()
    g = omega.grid
    fv, vol = _check_rhs(f, omega)
    logvol = np.log(vol)
    base = omega.parts()
    report = SolveReport()
    lam0 = cfg.eps_schedule[0]
    phi = _initial_constant(base, lam0, fv, logvol, g) if float(np.min(fv)) > 0 else np.zeros(g.shape)
    try:
        psi, stage = _lambda_continuation(g, base, fv, logvol, cfg, phi, report)
    except SolverError as err:
        raise SolverError(str(err), err.phi, _partial(report, err))
    _finish(report, psi, stage, t0)
    return ScalarField(g, psi), report.c, report


def _check_beta(beta: Form11, omega: Form11):
    if beta.grid != omega.grid:
        raise GeometryError("beta and omega live on different grids")
    res = closedness_residual(beta)
    if res > CLOSED_TOL * max(1.0, float(np.max(np.abs(beta.coeff)))):
        raise GeometryError(f"beta is not closed (residual {res:.3e})")
    if not beta.semipositive:
        raise GeometryError("beta is not semipositive")
    vol = spectral.mean(np.broadcast_to(pw.det(beta.parts()), beta.grid.shape))
    if vol <= 0:
        raise GeometryError("beta has zero volume")
    return vol


def _admissible_start(base, phi, eps_new, eps_old, grid, margin):
    """phi itself if admissible for the new base, otherwise a scaled copy."""
    H = spectral.hessian_parts(grid.n, grid.res, phi)
    for t in (1.0, eps_new / eps_old if eps_old else 0.0, 0.0):
        if float(np.min(pw.min_eig(pw.add(base, H, t)))) >= margin:
            return t * phi, t
    return None, None


def solve_degenerate(beta: Form11, f, cfg: SolverConfig | None = None, omega: Form11 | None = None,
                     exact_final: bool = True):
    """(beta + eps omega + dd^c phi)^n = e^phi f omega^n along the eps schedule.

    After the schedule, one more stage with eps = 0 is attempted when the
    last iterate is admissible for beta itself; this gives the limit
    solution rather than its O(eps_min) approximation. Failure of positivity
    as eps -> 0 stops the path at the last good stage.
    """
    cfg = cfg or SolverConfig()
    g = beta.grid
    omega = omega or Form11.identity(g)
    if not omega.is_positive():
        raise GeometryError("omega must be positive")
    t0 = time.perf_counter()
    vol_beta = _check_beta(beta, omega)
    fv, vol = _check_rhs(f, omega)
    logvol = np.log(vol)
    report = SolveReport()
    report.extras["beta_volume"] = vol_beta
    bp, op = beta.parts(), omega.parts()
    phi = None
    eps_done, sols = [], []
    n = g.n
    for eps in cfg.eps_schedule + ([0.0] if exact_final else []):
        base = pw.add(bp, op, eps) if eps > 0 else bp
        if phi is None:
            if float(np.min(fv)) > 0:
                phi = _initial_constant(base, 1.0, fv, logvol, g)
            else:
                phi = np.zeros(g.shape)
            scale = 1.0
        else:
            phi, scale = _admissible_start(base, phi, eps, eps_done[-1], g, cfg.positivity_margin)
            if phi is None:
                if eps == 0.0:
                    report.flags.append("exact eps = 0 stage skipped: last iterate not admissible for beta")
                else:
                    report.flags.append(f"positivity lost at eps={eps:g}; stopped at last good eps")
                break
        try:
            new, stage = _solve_fixed(g, base, 1.0, fv, logvol, cfg, phi, f"eps={eps:g}", report)
        except SolverError as err:
            if isinstance(err.report, dict):
                report.stages.append(err.report)
            if not sols:
                raise SolverError(str(err), err.phi, report)
            report.flags.append(f"stage eps={eps:g} failed ({err}); stopped at last good eps")
            break
        stage["eps"] = eps
        stage["warm_start_scale"] = scale
        if sols:
            worst = float(np.max(new - sols[-1]))
            stage["monotone_defect"] = worst
            if worst > cfg.monotone_tol:
                report.flags.append(f"monotonicity violated at eps={eps:g} by {worst:.3e}")
            report.cauchy.append(float(np.max(np.abs(new - sols[-1]))))
        phi = new
        sols.append(new)
        eps_done.append(eps)
    last = report.stages[-1] if "failure" not in report.stages[-1] else _last_good(report)
    growth = []
    for eps, s in zip(eps_done, sols):
        if 0 < eps < 1:
            growth.append(float(np.max(s) - np.min(s)) / math.log(1.0 / eps) ** n)
    report.extras["eps_reached"] = eps_done[-1]
    report.extras["growth"] = growth
    report.extras["growth_pass"] = bool(len(growth) < 3 or np.all(np.diff(growth[1:]) <= 1e-9))
    c = report.cauchy
    # the exact stage is not part of the geometric schedule
    cc = c[:len(cfg.eps_schedule) - 1]
    report.extras["cauchy_monotone"] = bool(np.all(np.diff(cc) <= 1e-12)) if len(cc) > 1 else True
    _finish(report, phi, last, t0)
    report.extras["final_base"] = "beta" if eps_done[-1] == 0.0 else f"beta+{eps_done[-1]:g}*omega"
    return ScalarField(g, phi), report


def _last_good(report):
    for s in reversed(report.stages):
        if "failure" not in s:
            return s
    raise SolverError("no stage converged", None, report)


def solve_degenerate_lambda_zero(beta: Form11, f, cfg: SolverConfig | None = None,
                                 omega: Form11 | None = None):
    """(beta + dd^c phi)^n = c f omega^n, c from exponent continuation.

    The metric is fixed at the end of the solve_degenerate path (beta when
    the exact stage succeeded, beta + eps_min omega otherwise) and lam runs
    over the eps schedule. c is cross-checked against int beta^n / int f omega^n.
    """
    cfg = cfg or SolverConfig()
    g = beta.grid
    omega = omega or Form11.identity(g)
    t0 = time.perf_counter()
    phi, rep0 = solve_degenerate(beta, f, cfg, omega)
    fv, vol = _check_rhs(f, omega)
    logvol = np.log(vol)
    eps_final = rep0.extras["eps_reached"]
    base_form = beta if eps_final == 0.0 else beta + omega * eps_final
    base = base_form.parts()
    report = SolveReport()
    report.stages = list(rep0.stages)
    report.flags = list(rep0.flags)
    report.extras["degenerate_path"] = {k: rep0.extras[k] for k in ("growth", "growth_pass", "eps_reached")}
    report.extras["final_base"] = rep0.extras["final_base"]
    try:
        psi, stage = _lambda_continuation(g, base, fv, logvol, cfg, phi.values, report,
                                          prev_lam=(1.0, float(np.max(phi.values))))
    except SolverError as err:
        raise SolverError(str(err), err.phi, _partial(report, err))
    fmass = spectral.mean(fv * vol)
    ratio = rep0.extras["beta_volume"] / fmass
    report.extras["c_ratio"] = ratio
    report.extras["c_ratio_final_base"] = spectral.mean(np.broadcast_to(pw.det(base), g.shape)) / fmass
    rel = abs(report.c - ratio) / ratio
    report.extras["c_rel_error"] = rel
    if rel > cfg.c_tol:
        report.flags.append(f"c deviates from the volume ratio by {rel:.3e}")
    _finish(report, psi, stage, t0)
    return ScalarField(g, psi), report.c, report
