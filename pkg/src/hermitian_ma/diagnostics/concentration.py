"""Log-pole formation by mass concentration.

gamma_{j,eps} = dd^c chi(log(|z - x_j| / eps)) with the spline
chi(t) = t (t >= 0), t + t^2/2 (-1 < t < 0), -1/2 (t <= -1).
chi is C^1, convex and increasing; chi'' is the indicator of (-1, 0).

For a radial u(s), s = |z|^2, dd^c u has eigenvalues u'/pi (n - 1 times)
and (u' + s u'')/pi, so gamma^n has the closed-form density
pi^-n (chi'/(2s))^(n-1) chi''/(4s) against the flat volume. Its
absolute mass is 1 (the flat torus has absolute volume n! 2^n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .. import pointwise as pw
from .. import spectral
from ..grid import Form11, GeometryError, GridSpec, ScalarField
from ..solvers import SolverConfig, solve_degenerate_lambda_zero
from .report import InequalityReport


def abs_volume_factor(n: int) -> int:
    """Absolute volume of the flat unit torus, n! 2^n."""
    return math.factorial(n) * 2 ** n


def chi(t):
    t = np.asarray(t, float)
    return np.where(t >= 0, t, np.where(t <= -1, -0.5, t + 0.5 * t * t))


def chi_prime(t):
    t = np.asarray(t, float)
    return np.clip(1.0 + t, 0.0, 1.0)


def chi_second(t):
    t = np.asarray(t, float)
    return ((t > -1) & (t < 0)).astype(float)


def _radial_density(s, eps, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = 0.5 * np.log(s) - math.log(eps)
        d = math.pi ** -n * (chi_prime(t) / (2 * s)) ** (n - 1) * chi_second(t) / (4 * s)
    return np.where(s > 0, d, 0.0)


def gamma_density(grid: GridSpec, point, eps: float) -> np.ndarray:
    """Density of gamma_{eps}^n at ``point`` (flat volume normalized to 1)."""
    s = sum(d * d for d in grid.centered(point))
    return np.broadcast_to(_radial_density(s, eps, grid.n), grid.shape).copy()


def continuum_mass(n: int, eps: float) -> float:
    """Absolute mass of gamma^n by radial quadrature (should be 1)."""
    area = 2 * math.pi if n == 1 else 2 * math.pi ** 2
    K = abs_volume_factor(n)

    def integrand(r):
        return float(_radial_density(np.array(r * r), eps, n)) * area * r ** (2 * n - 1)

    val, _ = integrate.quad(integrand, eps / math.e, eps, epsabs=1e-13, epsrel=1e-12)
    return K * val


@dataclass
class ConcentrationConfig:
    points: list
    taus: list
    eps_list: list = field(default_factory=lambda: [0.125])
    fit_inner: float = 1.5
    fit_outer: float = 0.35
    slope_tol: float = 0.05
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if len(self.points) != len(self.taus) or not self.points:
            raise ValueError("points and taus must be non-empty and of equal length")
        if any(t <= 0 for t in self.taus):
            raise ValueError("weights tau_j must be positive")

    def delta(self, beta: Form11) -> float:
        """int beta^n - sum tau_j^n, absolute units."""
        n = beta.grid.n
        vb = spectral.mean(np.broadcast_to(pw.det(beta.parts()), beta.grid.shape))
        return abs_volume_factor(n) * vb - sum(t ** n for t in self.taus)


def concentration_rhs(beta: Form11, omega: Form11, cfg: ConcentrationConfig, eps: float):
    """Right-hand side density sum tau^n gamma^n + delta omega^n / int omega^n.

    Returned in flat-volume units together with the grid masses of the
    gamma terms before normalization.
    """
    g = beta.grid
    n = g.n
    K = abs_volume_factor(n)
    delta = cfg.delta(beta)
    if delta <= 0:
        raise GeometryError("need sum tau_j^n < int beta^n")
    vol = np.broadcast_to(pw.det(omega.parts()), g.shape)
    rhs = (delta / K) * vol / spectral.mean(vol)
    raw = []
    for x, tau in zip(cfg.points, cfg.taus):
        d = gamma_density(g, x, eps)
        m = K * spectral.mean(d)
        raw.append(m)
        rhs = rhs + tau ** n * d / m
    return rhs, raw


def radial_fit(phi: ScalarField, point, r_in: float, r_out: float):
    """Least-squares fit phi = a log r + b + c r^2 + d1 sum x_i^4 + d2 r^4 on an annulus."""
    g = phi.grid
    ds = [np.broadcast_to(d, g.shape) for d in g.centered(point)]
    r2 = sum(d * d for d in ds)
    sel = (r2 >= r_in * r_in) & (r2 <= r_out * r_out)
    if np.count_nonzero(sel) < 10:
        raise GeometryError("fit annulus holds too few grid points")
    r2s = r2[sel]
    X = np.stack([0.5 * np.log(r2s), np.ones_like(r2s), r2s,
                  sum(d[sel] ** 4 for d in ds), r2s * r2s], axis=1)
    coef, *_ = np.linalg.lstsq(X, phi.full()[sel], rcond=None)
    resid = float(np.max(np.abs(X @ coef - phi.full()[sel])))
    return float(coef[0]), resid


def mass_concentration(beta: Form11, omega: Form11, cfg: ConcentrationConfig):
    """Solve (beta + dd^c phi_eps)^n = c (sum tau^n gamma^n + delta omega^n/int omega^n)
    for each eps and fit the log-pole slope at every x_j.

    Returns ({eps: phi_eps}, InequalityReport).
    """
    g = beta.grid
    n = g.n
    h = g.spacing
    for eps in cfg.eps_list:
        if eps < 4 * h:
            raise GeometryError(f"eps={eps:g} is below 4 grid spacings ({4 * h:g})")
    fields, slopes, masses, cont, cs = {}, {}, {}, {}, {}
    worst = math.inf
    vol = np.broadcast_to(pw.det(omega.parts()), g.shape)
    for eps in cfg.eps_list:
        rhs, raw = concentration_rhs(beta, omega, cfg, eps)
        f = rhs / vol
        phi, c, rep = solve_degenerate_lambda_zero(beta, f, cfg.solver, omega)
        fields[eps] = phi
        cs[eps] = c
        masses[eps] = raw
        cont[eps] = continuum_mass(n, eps)
        sl = []
        for x, tau in zip(cfg.points, cfg.taus):
            a, _ = radial_fit(phi, x, cfg.fit_inner * eps, cfg.fit_outer)
            sl.append(a)
            worst = min(worst, cfg.slope_tol - abs(a - tau) / tau)
        slopes[eps] = sl
    mass_ok = all(abs(m - 1.0) <= 1e-6 for m in cont.values())
    return fields, InequalityReport(
        "mass_concentration", len(cfg.eps_list) * len(cfg.points), worst,
        bool(worst >= 0 and mass_ok),
        {"slopes": {repr(k): v for k, v in slopes.items()}},
        {"taus": list(cfg.taus), "continuum_mass": {repr(k): v for k, v in cont.items()},
         "grid_mass_before_normalization": {repr(k): v for k, v in masses.items()},
         "c": {repr(k): v for k, v in cs.items()}, "delta": cfg.delta(beta)})
