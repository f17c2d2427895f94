"""Inequality checks: CLN, Cauchy-Schwarz, mass, energy, mixed type,
trace, constant comparison and the sup-bound sandwich."""

from __future__ import annotations

import math

import numpy as np

from .. import pointwise as pw
from .. import spectral
from ..grid import Form11, GeometryError, ScalarField, ddc_form_density, random_admissible
from ..ma import gauduchon
from .report import InequalityReport

ADMISSIBLE_TOL = -1e-10


def _admissible(omega: Form11, u: ScalarField, what: str):
    if u.grid != omega.grid:
        raise GeometryError("grid mismatch")
    parts = pw.add(omega.parts(), spectral.hessian_parts(u.grid.n, u.grid.res, u.values))
    m = float(np.min(pw.min_eig(parts)))
    if m < ADMISSIBLE_TOL:
        raise GeometryError(f"{what} is not psh for the given form (min eig {m:.3e})")
    return parts


def _vol(parts, grid):
    return np.broadcast_to(pw.det(parts), grid.shape)


# --------------------------------------------------------------------- CLN

def cln_integral(psi: ScalarField, phi: ScalarField, omega: Form11) -> float:
    """int |psi| (omega + dd^c phi)^n after validating the hypotheses."""
    if abs(psi.sup()) > 1e-12:
        raise GeometryError("psi must be normalized with sup = 0")
    if phi.inf() < -1e-12 or phi.sup() > 1 + 1e-12:
        raise GeometryError("phi must take values in [0, 1]")
    _admissible(omega, psi, "psi")
    parts = _admissible(omega, phi, "phi")
    return spectral.mean(np.abs(psi.full()) * _vol(parts, omega.grid))


def unit_range(omega: Form11, phi: ScalarField) -> ScalarField:
    """Map a psh phi into [0, 1] by shifting and shrinking (stays psh)."""
    v = phi.full() - phi.inf()
    osc = float(np.max(v))
    return ScalarField(phi.grid, v / max(osc, 1.0))


def check_cln(psi: ScalarField, phi: ScalarField, omega: Form11) -> InequalityReport:
    val = cln_integral(psi, phi, omega)
    return InequalityReport("cln", 1, -val, math.isfinite(val), {"C": val})


def cln_family(omega: Form11, samples: int = 100, seed: int = 0, modes: int = 4,
               amplitude: float = 1.0) -> InequalityReport:
    """Max of the CLN integral over seeded admissible pairs."""
    vals = []
    for i in range(samples):
        psi = random_admissible(omega, seed + 2 * i, amplitude=amplitude, modes=modes)
        phi = unit_range(omega, random_admissible(omega, seed + 2 * i + 1, amplitude=amplitude, modes=modes))
        vals.append(cln_integral(psi, phi, omega))
    C = max(vals)
    return InequalityReport("cln", samples, -C, bool(np.all(np.isfinite(vals))), {"C": C},
                            {"values": vals})


# --------------------------------------------------------- Cauchy-Schwarz

def _gradient_form(u: ScalarField):
    """Parts of du ^ d^c u, i.e. P_jk = (1/pi) d_j u conj(d_k u)."""
    g = u.grid
    grads = spectral.gradient(g.n, g.res, u.full())
    dz = [0.5 * (grads[2 * j] - 1j * grads[2 * j + 1]) for j in range(g.n)]
    if g.n == 1:
        return (np.abs(dz[0]) ** 2 / math.pi,)
    return (np.abs(dz[0]) ** 2 / math.pi, np.abs(dz[1]) ** 2 / math.pi, dz[0] * np.conj(dz[1]) / math.pi)


def cauchy_schwarz_terms(u: ScalarField, omega: Form11):
    """(lhs, rhs, lhs by the dual route) for n = 2.

    lhs = |int du ^ d^c omega| = |int u dd^c omega|; the dual route
    integrates dd^c u ^ omega instead and must agree to roundoff.
    rhs = (int du ^ d^c u ^ omega)^(1/2) (int omega^2)^(1/2).
    """
    g = omega.grid
    if g.n != 2:
        raise GeometryError("the Cauchy-Schwarz diagnostic is for n = 2")
    lhs = abs(spectral.mean(u.full() * ddc_form_density(omega)))
    dual = abs(spectral.mean(pw.mixed2(spectral.hessian_parts(2, g.res, u.full()), omega.parts())))
    P = _gradient_form(u)
    energy = spectral.mean(np.broadcast_to(pw.mixed2(P, omega.parts()), g.shape))
    vol = spectral.mean(_vol(omega.parts(), g))
    rhs = math.sqrt(max(energy, 0.0)) * math.sqrt(vol)
    return lhs, rhs, dual


def check_cauchy_schwarz(u_list, omega: Form11) -> InequalityReport:
    """Smallest C with lhs <= C rhs over the given functions."""
    if omega.grid.n != 2:
        raise GeometryError("the Cauchy-Schwarz diagnostic is for n = 2")
    ratios, lhss, rhss = [], [], []
    worst_dual = 0.0
    for u in u_list:
        _admissible(omega, u, "u")
        lhs, rhs, dual = cauchy_schwarz_terms(u, omega)
        worst_dual = max(worst_dual, abs(lhs - dual))
        lhss.append(lhs)
        rhss.append(rhs)
        if rhs > 0:
            ratios.append(lhs / rhs)
        elif lhs > 1e-13:
            ratios.append(math.inf)
    C = max(ratios) if ratios else 0.0
    return InequalityReport("cauchy_schwarz", len(lhss), -C, math.isfinite(C), {"C": C},
                            {"lhs": lhss, "rhs": rhss, "dual_route_defect": worst_dual})


def cauchy_schwarz_family(omega: Form11, samples: int = 50, seed: int = 0, modes: int = 4):
    us = [random_admissible(omega, seed + i, modes=modes) for i in range(samples)]
    return check_cauchy_schwarz(us, omega)


# ------------------------------------------------------------------- mass

def check_mass_estimate(beta: Form11, omega: Form11, u: ScalarField, eps_schedule=None,
                        slope_min: float = 0.9, slope_max: float = 1.5) -> InequalityReport:
    """Delta(eps) = |int (Omega + dd^c u)^n - int Omega^n| for Omega = beta + eps omega.

    The mass defect is controlled by B_Omega = eps B, so log Delta against
    log eps should have slope about one; passes for slope in [slope_min, slope_max].
    """
    eps_schedule = list(eps_schedule or [2.0 ** -k for k in range(6)])
    g = beta.grid
    if abs(u.sup()) > 1e-12:
        raise GeometryError("u must be normalized with sup = 0")
    _admissible(beta + omega * max(eps_schedule), u, "u")
    H = spectral.hessian_parts(g.n, g.res, u.full())
    deltas, margins = [], []
    for eps in eps_schedule:
        Om = pw.add(beta.parts(), omega.parts(), eps)
        Ou = pw.add(Om, H)
        margins.append(float(np.min(pw.min_eig(Ou))))
        deltas.append(abs(spectral.mean(_vol(Ou, g)) - spectral.mean(_vol(Om, g))))
    details = {"eps": eps_schedule, "delta": deltas, "margins": margins}
    if max(deltas) < 1e-13:
        return InequalityReport("mass_estimate", len(deltas), 0.0, True,
                                {"slope": None, "exact": True}, details)
    ok = [(e, d) for e, d in zip(eps_schedule, deltas) if d > 0]
    le = np.log([e for e, _ in ok])
    ld = np.log([d for _, d in ok])
    slope, icpt = np.polyfit(le, ld, 1)
    C = max(d / e for e, d in ok)
    return InequalityReport("mass_estimate", len(deltas),
                            float(min(slope - slope_min, slope_max - slope)),
                            bool(slope_min <= slope <= slope_max),
                            {"slope": float(slope), "intercept": float(icpt), "C_over_eps": C,
                             "exact": False}, details)


# ----------------------------------------------------------------- energy

def energy_terms(u: ScalarField, v: ScalarField, Omega: Form11):
    """(int (-v) Omega_v^n, int (-u) Omega_u^n) after validation."""
    if np.any(u.full() > v.full() + 1e-12):
        raise GeometryError("need u <= v")
    if v.sup() > -1 + 1e-12:
        raise GeometryError("need v <= -1")
    pu = _admissible(Omega, u, "u")
    pv = _admissible(Omega, v, "v")
    g = Omega.grid
    lhs = spectral.mean(-v.full() * _vol(pv, g))
    rhs = spectral.mean(-u.full() * _vol(pu, g))
    return lhs, rhs


def check_energy_inequality(u: ScalarField, v: ScalarField, Omega: Form11) -> InequalityReport:
    """int (-v) Omega_v^n <= 2^n int (-u) Omega_u^n + slack."""
    lhs, rhs = energy_terms(u, v, Omega)
    k = 2 ** Omega.grid.n
    margin = k * rhs - lhs
    slack = max(0.0, -margin)
    return InequalityReport("energy", 1, margin, True, {"slack": slack},
                            {"lhs": lhs, "rhs": rhs})


def energy_pairs(Omega: Form11, samples: int, seed: int, modes: int = 4):
    """Seeded admissible pairs u <= v <= -1 (shifted copies and convex mixes)."""
    out = []
    for i in range(samples):
        v = random_admissible(Omega, seed + 2 * i, modes=modes) - 1.0
        if i % 2 == 0:
            u = v - (0.5 + 0.25 * (i % 4))
        else:
            w = random_admissible(Omega, seed + 2 * i + 1, modes=modes) - 1.0
            m = 0.5 * (v.full() + w.full())
            u = ScalarField(Omega.grid, m - float(np.max(m - v.full())) - 1e-3)
        out.append((u, v))
    return out


def energy_family(beta: Form11, omega: Form11, eps_schedule=None, samples: int = 10,
                  seed: int = 0, modes: int = 4) -> InequalityReport:
    """Slack of the energy inequality along Omega = beta + eps omega.

    Pairs are generated for beta + eps_min omega, so they stay admissible
    for every larger eps. Passes when slack(eps) <= C eps holds with a
    finite C and slack is zero whenever Omega is closed.
    """
    eps_schedule = list(eps_schedule or [2.0 ** -k for k in range(5)])
    base = beta + omega * min(eps_schedule)
    if beta.positivity_margin() > 0:
        base = beta
    pairs = energy_pairs(base, samples, seed, modes)
    slacks, margins = [], []
    for eps in eps_schedule:
        Om = beta + omega * eps
        worst, worst_m = 0.0, math.inf
        for u, v in pairs:
            r = check_energy_inequality(u, v, Om)
            worst = max(worst, r.fitted["slack"])
            worst_m = min(worst_m, r.worst_margin)
        slacks.append(worst)
        margins.append(worst_m)
    C = max(s / e for s, e in zip(slacks, eps_schedule))
    return InequalityReport("energy", samples * len(eps_schedule), min(margins), math.isfinite(C),
                            {"C_slack_over_eps": C}, {"eps": eps_schedule, "slack": slacks,
                                                      "margins": margins})


# ------------------------------------------------------------- mixed type

def _rel_margin(lhs, rhs):
    scale = np.maximum(np.abs(rhs), 1e-300)
    return float(np.min((lhs - rhs) / scale))


def check_mixed_type(omega: Form11, u: ScalarField, v: ScalarField,
                     deltas=(0.0, 0.25, 0.5, 0.75, 1.0), tol: float = 1e-10) -> InequalityReport:
    """Both mixed-type displays with f, g the exact densities of omega_u, omega_v."""
    g = omega.grid
    n = g.n
    pu = _admissible(omega, u, "u")
    pv = _admissible(omega, v, "v")
    vol = _vol(omega.parts(), g)
    f = np.maximum(_vol(pu, g) / vol, 0.0)
    gg = np.maximum(_vol(pv, g) / vol, 0.0)
    margins = {}
    for k in range(n + 1):
        if n == 1:
            lhs = (pu if k == 1 else pv)[0]
        elif k == 1:
            lhs = pw.mixed2(pu, pv)
        else:
            lhs = pw.det(pu if k == 2 else pv)
        rhs = f ** (k / n) * gg ** ((n - k) / n)
        margins[f"k={k}"] = _rel_margin(np.broadcast_to(lhs, g.shape) / vol, rhs)
    for d in deltas:
        w = ScalarField(g, d * u.full() + (1 - d) * v.full())
        pw_ = pw.add(omega.parts(), spectral.hessian_parts(n, g.res, w.full()))
        lhs = _vol(pw_, g) / vol
        rhs = (d * f ** (1 / n) + (1 - d) * gg ** (1 / n)) ** n
        margins[f"delta={d}"] = _rel_margin(lhs, rhs)
    worst = min(margins.values())
    return InequalityReport("mixed_type", 1, worst, worst >= -tol, {}, {"margins": margins})


def mixed_type_family(omega: Form11, samples: int = 100, seed: int = 0, modes: int = 4):
    worst, fails = math.inf, 0
    per = []
    for i in range(samples):
        u = random_admissible(omega, seed + 2 * i, modes=modes)
        v = random_admissible(omega, seed + 2 * i + 1, modes=modes)
        r = check_mixed_type(omega, u, v)
        per.append(r.worst_margin)
        worst = min(worst, r.worst_margin)
        fails += not r.passed
    return InequalityReport("mixed_type", samples, worst, fails == 0, {}, {"violations": fails,
                                                                            "per_sample": per})


# ------------------------------------------------------------------ trace

def random_hermitian_pd(rng, count: int, n: int = 2, spread: float = 3.0):
    """Parts of random positive definite Hermitian matrices.

    Eigenvalues are 10^U(-spread, spread), eigenvectors Haar-ish from QR.
    """
    if n == 1:
        return (10.0 ** rng.uniform(-spread, spread, count),)
    lam = 10.0 ** rng.uniform(-spread, spread, (count, 2))
    theta = rng.uniform(0, 0.5 * math.pi, count)
    phase = rng.uniform(0, 2 * math.pi, count)
    c, s = np.cos(theta), np.sin(theta)
    # U = [[c, -s e^{-i p}], [s e^{i p}, c]], A = U diag(lam) U*
    a11 = lam[:, 0] * c * c + lam[:, 1] * s * s
    a22 = lam[:, 0] * s * s + lam[:, 1] * c * c
    a12 = (lam[:, 0] - lam[:, 1]) * c * s * np.exp(-1j * phase)
    return (a11, a22, a12)


def check_trace_inequality(samples: int = 100_000, seed: int = 0, n: int = 2,
                           tol: float = 1e-12) -> InequalityReport:
    """(tr_g tau)(tr_tau w) >= tr_g w on random positive triples."""
    rng = np.random.default_rng(seed)
    g = random_hermitian_pd(rng, samples, n)
    tau = random_hermitian_pd(rng, samples, n)
    w = random_hermitian_pd(rng, samples, n)
    ginv, tinv = pw.inverse(g), pw.inverse(tau)
    lhs = pw.trace_prod(ginv, tau) * pw.trace_prod(tinv, w)
    rhs = pw.trace_prod(ginv, w)
    rel = (lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs))
    worst = float(np.min(rel))
    viol = int(np.count_nonzero(rel < -tol))
    return InequalityReport("trace", samples, worst, viol == 0, {}, {"violations": viol})


# ------------------------------------------------------ constant bound

def density_ratio_sup(omega: Form11, u: ScalarField, v: ScalarField) -> float:
    """sup of density(omega_u^n) / density(omega_v^n); at least 1 in theory."""
    pu = _admissible(omega, u, "u")
    pv = _admissible(omega, v, "v")
    g = omega.grid
    return float(np.max(_vol(pu, g) / _vol(pv, g)))


def constant_bound_family(omega: Form11, samples: int = 100, seed: int = 0, modes: int = 4,
                          tol: float = 1e-10) -> InequalityReport:
    vals = []
    for i in range(samples):
        u = random_admissible(omega, seed + 2 * i, modes=modes)
        v = random_admissible(omega, seed + 2 * i + 1, modes=modes)
        vals.append(density_ratio_sup(omega, u, v))
    worst = min(vals) - 1.0
    return InequalityReport("constant_bound", samples, worst, worst >= -tol, {},
                            {"sup_ratios": vals})


# --------------------------------------------------------- sup bounds

def sup_bound_terms(omega: Form11, g_rhs, v: ScalarField, c_g: float, G: ScalarField | None = None):
    """Both sides of log c_g <= sup v <= C + n log(alpha0 / A).

    v solves (omega + dd^c v)^n = e^v g omega^n and c_g the lam = 0
    equation with the same g; G is the Gauduchon function (computed when
    not supplied).
    """
    grid = omega.grid
    n = grid.n
    if G is None:
        G = gauduchon(omega).G
    vol = _vol(omega.parts(), grid)
    gv = np.broadcast_to(np.asarray(getattr(g_rhs, "density", getattr(g_rhs, "values", g_rhs)), float), grid.shape)
    eG = np.exp(G.full())
    alpha0 = spectral.mean(eG * vol)
    w = gv ** (1.0 / n) * eG * vol
    A = spectral.mean(w)
    M = v.sup()
    C = spectral.mean(np.abs(v.full() - M) * w) / A
    upper = C + n * math.log(alpha0 / A)
    return {"log_c": math.log(c_g), "sup_v": M, "upper": upper, "C": C,
            "alpha0": alpha0, "A": A}


def check_sup_bounds(omega: Form11, g_rhs, v: ScalarField, c_g: float, G=None,
                     tol: float = 1e-6) -> InequalityReport:
    t = sup_bound_terms(omega, g_rhs, v, c_g, G)
    lower = t["sup_v"] - t["log_c"]
    upper = t["upper"] - t["sup_v"]
    worst = min(lower, upper)
    return InequalityReport("sup_bounds", 1, worst, worst >= -tol, {"C": t["C"]},
                            dict(t, lower_slack=lower, upper_slack=upper))
