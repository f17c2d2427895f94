"""Solver-level checks: comparison, metric monotonicity, uniqueness,
sup-bound sandwich over seeded data and the eps-growth diagnostic."""

from __future__ import annotations

import math

import numpy as np

from .. import pointwise as pw
from ..builders import smooth_density
from ..grid import Form11, random_admissible
from ..ma import gauduchon
from ..solvers import SolverConfig, solve_lambda_positive, solve_lambda_zero
from .inequalities import check_sup_bounds
from .report import InequalityReport


def ordered_pair(omega: Form11, seed: int, amplitude: float = 1.0, gap: float = 0.5):
    """Seeded densities f <= g pointwise."""
    f = smooth_density(omega, seed, amplitude)
    u = random_admissible(Form11.identity(omega.grid), seed + 7919).full()
    w = (u - u.min()) / max(float(np.ptp(u)), 1e-300)
    return f, f * (1.0 + gap * w)


def comparison_family(omega: Form11, samples: int = 50, seed: int = 0, tol: float = 1e-8,
                      cfg: SolverConfig | None = None) -> InequalityReport:
    """f <= g implies psi_g <= phi_f (lam = 1); margin is min(phi_f - psi_g)."""
    worst, viol, per = math.inf, 0, []
    for i in range(samples):
        f, g = ordered_pair(omega, seed + i)
        phi, _ = solve_lambda_positive(omega, f, 1.0, cfg)
        psi, _ = solve_lambda_positive(omega, g, 1.0, cfg, phi0=phi)
        m = float(np.min(phi.full() - psi.full()))
        per.append(m)
        worst = min(worst, m)
        viol += m < -tol
    return InequalityReport("comparison", samples, worst, viol == 0, {},
                            {"violations": viol, "per_sample": per})


def smaller_metric(omega: Form11, seed: int, shrink: float = 0.5) -> Form11:
    """Seeded w~ = (1 - rho) omega - s v v^* <= omega, still positive."""
    g = omega.grid
    rng = np.random.default_rng(seed)
    u = random_admissible(Form11.identity(g), seed + 104729).full()
    rho = shrink * (u - u.min()) / max(float(np.ptp(u)), 1e-300)
    parts = tuple(p * (1.0 - rho) for p in omega.parts())
    if g.n == 1:
        vv = (np.ones((1, 1)),)
    else:
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v /= np.linalg.norm(v)
        vv = tuple(np.full((1,) * 4, x) for x in (abs(v[0]) ** 2, abs(v[1]) ** 2, v[0] * np.conj(v[1])))
    s = 0.5 * (1 - shrink) * omega.positivity_margin()
    for _ in range(60):
        trial = pw.add(parts, vv, -s)
        if float(np.min(pw.min_eig(trial))) > 0.1 * (1 - shrink) * omega.positivity_margin():
            return Form11.from_parts(g, trial)
        s *= 0.5
    return Form11.from_parts(g, parts)


def metric_monotonicity_family(omega: Form11, samples: int = 20, seed: int = 0, tol: float = 1e-8,
                               cfg: SolverConfig | None = None) -> InequalityReport:
    """w~ <= w with the same measure f w^n (lam = 1): v <= u."""
    worst, viol, per = math.inf, 0, []
    for i in range(samples):
        small = smaller_metric(omega, seed + i)
        f = smooth_density(omega, seed + 1000 + i)
        u, _ = solve_lambda_positive(omega, f, 1.0, cfg)
        v, _ = solve_lambda_positive(small, f, 1.0, cfg, reference=omega)
        m = float(np.min(u.full() - v.full()))
        per.append(m)
        worst = min(worst, m)
        viol += m < -tol
    return InequalityReport("metric_monotonicity", samples, worst, viol == 0, {},
                            {"violations": viol, "per_sample": per})


def uniqueness_check(omega: Form11, f, seeds=(1, 2), lam: float = 1.0,
                     cfg: SolverConfig | None = None) -> InequalityReport:
    """Solves from different random admissible starts agree within 10 newton_tol."""
    cfg = cfg or SolverConfig()
    sols = []
    for s in seeds:
        start = random_admissible(omega, s)
        phi, _ = solve_lambda_positive(omega, f, lam, cfg, phi0=start)
        sols.append(phi.full())
    diff = max(float(np.max(np.abs(a - sols[0]))) for a in sols[1:])
    bound = 10 * cfg.newton_tol
    return InequalityReport("uniqueness", len(seeds), bound - diff, diff <= bound, {},
                            {"max_difference": diff})


def sup_bound_family(omega: Form11, samples: int = 20, seed: int = 0, tol: float = 1e-6,
                     cfg: SolverConfig | None = None) -> InequalityReport:
    """The sup-bound sandwich for seeded g: v from lam = 1, c_g from lam = 0."""
    G = gauduchon(omega).G
    worst, per = math.inf, []
    for i in range(samples):
        g = smooth_density(omega, seed + i)
        v, _ = solve_lambda_positive(omega, g, 1.0, cfg)
        _, c, _ = solve_lambda_zero(omega, g, cfg)
        r = check_sup_bounds(omega, g, v, c, G, tol)
        per.append(r.details)
        worst = min(worst, r.worst_margin)
    return InequalityReport("sup_bounds", samples, worst, worst >= -tol, {},
                            {"per_sample": per})


def growth_diagnostic(report) -> InequalityReport:
    """osc(phi_eps) / (log 1/eps)^n along a degenerate path.

    The ratio list starts at eps = 1/2 (eps = 1 has log 1/eps = 0); the
    trend is checked from eps = 1/4 on.
    """
    extras = report.extras.get("degenerate_path", report.extras)
    growth = list(extras.get("growth", []))
    tail = growth[1:]
    d = np.diff(tail) if len(tail) > 1 else np.zeros(0)
    worst = float(-np.max(d)) if d.size else 0.0
    return InequalityReport("growth", len(growth), worst, bool(worst >= -1e-9),
                            {"max_ratio": max(growth) if growth else 0.0}, {"ratios": growth})
