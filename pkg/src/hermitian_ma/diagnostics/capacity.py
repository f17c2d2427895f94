"""Certified lower bounds for cap_base(E) = sup { int_E (base + dd^c rho)^n :
rho base-psh, 0 <= rho <= 1 }.

Every candidate rho is checked pointwise (psh up to roundoff, values in
[0, 1]) before its mass counts, so each estimate is a genuine lower
bound for the discrete capacity.
"""

from __future__ import annotations

import math

import numpy as np

from .. import pointwise as pw
from .. import spectral
from ..grid import Form11, GeometryError, GridSpec, ScalarField
from .report import InequalityReport

PSH_TOL = -1e-12
WIDTHS = (1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4)


def _mask(E, grid):
    v = E.values if isinstance(E, ScalarField) else np.asarray(E)
    return np.broadcast_to(v, grid.shape).astype(bool)


def set_center(mask: np.ndarray, grid: GridSpec):
    """Circular mean of the set along every real axis."""
    out = []
    for c in grid.coords():
        ang = 2 * math.pi * np.broadcast_to(c, grid.shape)[mask]
        out.append((math.atan2(np.sin(ang).mean(), np.cos(ang).mean()) / (2 * math.pi)) % 1.0)
    return tuple(out)


def _s2(grid, center):
    """Smooth periodic stand-in for |x - center|^2."""
    return sum((np.sin(math.pi * d) / math.pi) ** 2 for d in grid.centered(center))


def dictionary(grid: GridSpec, center):
    """Model profiles (unscaled): Gaussian wells and log-type wells."""
    s2 = np.broadcast_to(_s2(grid, center), grid.shape)
    out = []
    for w in WIDTHS:
        out.append(-np.exp(-s2 / (2 * w * w)))
        out.append(0.5 * np.log(s2 + w * w))
    return out


def psh_limit(base_parts, hp, grid) -> float:
    """Largest t >= 0 with base + t H pointwise semipositive (closed form)."""
    return pw.psd_limit(base_parts, hp)


def _valid(base_parts, rho, grid, hp=None) -> bool:
    if float(np.min(rho)) < -1e-14 or float(np.max(rho)) > 1 + 1e-14:
        return False
    if hp is None:
        hp = spectral.hessian_parts(grid.n, grid.res, rho)
    return float(np.min(pw.min_eig(pw.add(base_parts, hp)))) >= PSH_TOL


def fit_candidate(base_parts, p, grid):
    """Scale and shift profile p into an admissible rho with values in [0, 1]."""
    p = p - np.min(p)
    osc = float(np.max(p))
    if osc <= 0:
        return np.zeros(grid.shape)
    hp = spectral.hessian_parts(grid.n, grid.res, p)
    t = min(psh_limit(base_parts, hp, grid) * (1 - 1e-9), 1.0 / osc)
    for _ in range(60):
        rho = t * p
        if _valid(base_parts, rho, grid, tuple(t * h for h in hp)):
            return rho
        t *= 0.5
    return np.zeros(grid.shape)


def _mass(base_parts, rho, mask, grid):
    A = pw.add(base_parts, spectral.hessian_parts(grid.n, grid.res, rho))
    return spectral.mean(np.where(mask, np.broadcast_to(pw.det(A), grid.shape), 0.0))


def _gradient(base_parts, rho, mask, grid):
    """Gradient of rho -> int_E det(base + H rho) (Hessian symbols are self-adjoint)."""
    A = pw.add(base_parts, spectral.hessian_parts(grid.n, grid.res, rho))
    sym = grid.symbols
    m = mask.astype(float)
    if grid.n == 1:
        return spectral.apply_symbol(m, sym.hess(0, 0)[0], grid.shape)
    a11, a22, a12 = (np.broadcast_to(x, grid.shape) for x in A)
    re, im = sym.hess(0, 1)
    out = spectral.apply_symbol(m * a22, sym.hess(0, 0)[0], grid.shape)
    out += spectral.apply_symbol(m * a11, sym.hess(1, 1)[0], grid.shape)
    out -= 2.0 * spectral.apply_symbol(m * a12.real, re, grid.shape)
    out -= 2.0 * spectral.apply_symbol(m * a12.imag, im, grid.shape)
    return out


def relax(base_parts, rho, mask, grid, iters: int = 20):
    """Projected ascent toward the relative extremal function.

    Each trial rho + eta*grad is pushed back into the admissible set by an
    affine rescaling (shift to min 0, shrink by the psh and range limits);
    a step is kept only if the certified mass increases.
    """
    best = _mass(base_parts, rho, mask, grid)
    eta = 1e-3
    for _ in range(iters):
        gr = _gradient(base_parts, rho, mask, grid)
        gmax = float(np.max(np.abs(gr)))
        if gmax == 0:
            break
        improved = False
        for _ in range(8):
            trial = rho + (eta / gmax) * gr
            trial = trial - np.min(trial)
            osc = float(np.max(trial))
            if osc > 0:
                hp = spectral.hessian_parts(grid.n, grid.res, trial)
                # largest s <= 1/osc keeping base + s H(trial) >= 0
                s = min(1.0, 1.0 / osc, psh_limit(base_parts, hp, grid) * (1 - 1e-9))
                cand = s * trial
                if _valid(base_parts, cand, grid):
                    m = _mass(base_parts, cand, mask, grid)
                    if m > best:
                        rho, best, improved = cand, m, True
                        eta *= 2.0
                        break
            eta *= 0.25
        if not improved:
            break
    return rho, best


def capacity_candidates(E, base: Form11, center=None, relax_iters: int = 20, seeds=()):
    """All certified candidates (rho, mass) considered for E."""
    grid = base.grid
    mask = _mask(E, grid)
    if not base.semipositive:
        raise GeometryError("capacity base form must be semipositive")
    bp = base.parts()
    if not np.any(mask):
        return [(np.zeros(grid.shape), 0.0)]
    center = center if center is not None else set_center(mask, grid)
    cands = [np.zeros(grid.shape)]
    for p in dictionary(grid, center):
        cands.append(fit_candidate(bp, p, grid))
    for s in seeds:
        s = np.broadcast_to(np.asarray(s, float), grid.shape)
        if _valid(bp, s, grid):
            cands.append(np.array(s))
    scored = [(c, _mass(bp, c, mask, grid)) for c in cands]
    if relax_iters > 0:
        rho0, m0 = max(scored, key=lambda x: x[1])
        rho, m = relax(bp, rho0, mask, grid, relax_iters)
        if m > m0:
            scored.append((rho, m))
    return scored


def capacity_estimate(E, base: Form11, center=None, relax_iters: int = 20, seeds=(),
                      return_candidate: bool = False):
    """Lower bound on cap_base(E); 0 for the empty set."""
    scored = capacity_candidates(E, base, center, relax_iters, seeds)
    rho, m = max(scored, key=lambda x: x[1])
    return (m, rho) if return_candidate else m


def capacity_family(sets, base: Form11, center=None, relax_iters: int = 20):
    """Estimates for several sets sharing every candidate.

    Each set's best candidate is re-scored on all other sets, which makes
    the estimates monotone under inclusion.
    """
    grid = base.grid
    bp = base.parts()
    pool = []
    for E in sets:
        m, rho = capacity_estimate(E, base, center, relax_iters, return_candidate=True)
        pool.append(rho)
    out = []
    for E in sets:
        mask = _mask(E, grid)
        if not np.any(mask):
            out.append(0.0)
            continue
        base_est = capacity_estimate(E, base, center, 0)
        out.append(max([base_est] + [_mass(bp, rho, mask, grid) for rho in pool]))
    return out


def capacity_comparability(E, base: Form11, center=None, relax_iters: int = 20):
    """(cap_base, cap_2base, ratio): ratio lies in [1, 2^n] by construction.

    Candidates are exchanged between the two problems: an omega-candidate
    rho is 2omega-admissible, and a 2omega-candidate rho gives the
    omega-candidate rho/2 with 2^-n times its mass.
    """
    grid = base.grid
    mask = _mask(E, grid)
    if not np.any(mask):
        return 0.0, 0.0, 1.0
    two = base * 2.0
    m1, r1 = capacity_estimate(E, base, center, relax_iters, return_candidate=True)
    m2, r2 = capacity_estimate(E, two, center, relax_iters, seeds=[r1], return_candidate=True)
    m1b = capacity_estimate(E, base, center, 0, seeds=[0.5 * r2])
    m1 = max(m1, m1b)
    return m1, m2, m2 / m1 if m1 > 0 else math.inf


def ball(grid: GridSpec, center, radius: float) -> ScalarField:
    d2 = sum(d * d for d in grid.centered(center))
    return ScalarField(grid, np.broadcast_to(d2 <= radius * radius, grid.shape).astype(float))


def volume_capacity_diagnostic(beta: Form11, sets, omega: Form11 | None = None, center=None,
                               relax_iters: int = 20) -> InequalityReport:
    """Regress log Vol_omega(E) on -cap_beta(E)^(-1/n).

    Vol <= C exp(-a cap^(-1/n)) is affine in these variables; the fit
    passes with a positive slope a and C from the upper envelope. The
    capacity is a lower bound, which can only make the check stricter.
    """
    sets = list(sets)
    if len(sets) < 4:
        raise ValueError("need at least 4 sets")
    grid = beta.grid
    omega = omega or Form11.identity(grid)
    n = grid.n
    caps = capacity_family(sets, beta, center, relax_iters)
    vol = np.broadcast_to(pw.det(omega.parts()), grid.shape)
    vols = [spectral.mean(np.where(_mask(E, grid), vol, 0.0)) for E in sets]
    use = [(c, v) for c, v in zip(caps, vols) if c > 0 and v > 0]
    if len(use) < 4:
        return InequalityReport("volume_capacity", len(use), -math.inf, False, {},
                                {"caps": caps, "vols": vols})
    x = np.array([-c ** (-1.0 / n) for c, _ in use])
    y = np.log([v for _, v in use])
    a, b = np.polyfit(x, y, 1)
    logC = float(np.max(y - a * x))
    return InequalityReport("volume_capacity", len(use), float(a), bool(a > 0),
                            {"a": float(a), "C": math.exp(logC), "intercept": float(b)},
                            {"caps": caps, "vols": vols, "lower_bound_caveat": True})
