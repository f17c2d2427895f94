import math
from types import SimpleNamespace

import numpy as np
import pytest

from hermitian_ma import pointwise as pw
from hermitian_ma import spectral
from hermitian_ma.builders import degenerate_beta, perturbed_diagonal, smooth_density
from hermitian_ma.diagnostics import (
    ConcentrationConfig,
    InequalityReport,
    ball,
    capacity_comparability,
    capacity_estimate,
    capacity_family,
    cauchy_schwarz_family,
    check_cauchy_schwarz,
    check_cln,
    check_energy_inequality,
    check_mass_estimate,
    check_mixed_type,
    check_sup_bounds,
    check_trace_inequality,
    cln_family,
    comparison_family,
    constant_bound_family,
    continuum_mass,
    energy_family,
    gamma_density,
    growth_diagnostic,
    mass_concentration,
    metric_monotonicity_family,
    mixed_type_family,
    sup_bound_family,
    uniqueness_check,
    volume_capacity_diagnostic,
)
from hermitian_ma.diagnostics.concentration import abs_volume_factor, chi, chi_prime, chi_second, concentration_rhs
from hermitian_ma.diagnostics.inequalities import density_ratio_sup, random_hermitian_pd, unit_range
from hermitian_ma.grid import Form11, GeometryError, GridSpec, ScalarField, ddc, random_admissible
from hermitian_ma.solvers import solve_degenerate, solve_degenerate_lambda_zero


def _w(res=16, n=2):
    return perturbed_diagonal(GridSpec(n, res), 0.3, 0.2 if n == 2 else 0.0)


# --------------------------------------------------------------------- CLN

def test_cln_zero_psi():
    w = _w()
    phi = unit_range(w, random_admissible(w, 1, modes=4))
    r = check_cln(ScalarField.zeros(w.grid), phi, w)
    assert r.fitted["C"] == 0.0 and r.passed


def test_cln_zero_phi_is_plain_integral():
    w = _w()
    psi = random_admissible(w, 2, modes=4)
    r = check_cln(psi, ScalarField.zeros(w.grid), w)
    ref = spectral.mean(np.abs(psi.full()) * np.broadcast_to(pw.det(w.parts()), w.grid.shape))
    assert r.fitted["C"] == pytest.approx(ref, rel=1e-14)


def test_cln_rejects_bad_inputs():
    w = _w()
    psi = random_admissible(w, 2, modes=4)
    with pytest.raises(GeometryError):
        check_cln(psi - 1.0, ScalarField.zeros(w.grid), w)
    with pytest.raises(GeometryError):
        check_cln(psi, ScalarField.zeros(w.grid) + 2.0, w)
    x = w.grid.coords()[0]
    bad = ScalarField(w.grid, np.broadcast_to(0.5 * np.cos(2 * math.pi * x), w.grid.shape))
    with pytest.raises(GeometryError):
        check_cln(ScalarField.zeros(w.grid), bad - bad.sup() + 0.0 * bad.inf(), w)


def test_cln_refinement_stability():
    a = cln_family(_w(16), samples=10).fitted["C"]
    b = cln_family(_w(32), samples=10).fitted["C"]
    assert abs(a / b - 1) <= 0.1


def test_report_reproducible_and_jsonable():
    a = cln_family(_w(16), samples=3, seed=5).to_dict()
    b = cln_family(_w(16), samples=3, seed=5).to_dict()
    assert a == b
    r = InequalityReport("x", 1, -math.inf, False, {"C": math.inf}, {"v": [math.nan]})
    d = r.to_dict()
    assert d["worst_margin"] == "-inf" and d["fitted"]["C"] == "inf" and d["details"]["v"] == ["nan"]


# --------------------------------------------------------- Cauchy-Schwarz

def test_cauchy_schwarz_constant_u():
    w = _w()
    r = check_cauchy_schwarz([ScalarField.zeros(w.grid) - 3.0], w)
    assert r.details["lhs"][0] <= 1e-15 and r.details["rhs"][0] == 0.0
    assert r.fitted["C"] == 0.0


def test_cauchy_schwarz_kahler_lhs_vanishes():
    g = GridSpec(2, 16)
    w = Form11.constant(g, [[2.0, 0.3 + 0.1j], [0.3 - 0.1j, 1.0]])
    r = cauchy_schwarz_family(w, samples=5)
    assert max(r.details["lhs"]) <= 1e-14
    assert min(r.details["rhs"]) > 0


def test_cauchy_schwarz_refinement_and_dual_route():
    a = cauchy_schwarz_family(_w(16), samples=10)
    b = cauchy_schwarz_family(_w(32), samples=10)
    assert 0 < a.fitted["C"] < math.inf
    assert abs(a.fitted["C"] / b.fitted["C"] - 1) <= 0.1
    # int du ^ d^c w = int u dd^c w, so both routes agree to roundoff
    assert a.details["dual_route_defect"] <= 1e-14


def test_cauchy_schwarz_rejects_n1():
    w = _w(16, n=1)
    with pytest.raises(GeometryError):
        check_cauchy_schwarz([ScalarField.zeros(w.grid)], w)


# ------------------------------------------------------------------- mass

def test_mass_closed_case_is_exact():
    g = GridSpec(2, 16)
    beta = degenerate_beta(g, 0.5)
    w = Form11.constant(g, np.diag([1.0, 2.0]))
    u = random_admissible(beta + w, 3, modes=4)
    r = check_mass_estimate(beta, w, u)
    assert r.passed and r.fitted["exact"]
    assert max(r.details["delta"]) <= 1e-12


def test_mass_zero_u():
    g = GridSpec(2, 16)
    r = check_mass_estimate(Form11.identity(g), _w(), ScalarField.zeros(g))
    assert r.details["delta"] == [0.0] * 6 and r.fitted["exact"]


def test_mass_nonclosed_slope():
    g = GridSpec(2, 16)
    beta = degenerate_beta(g, 0.5)
    w = _w()
    u = random_admissible(beta + w, 4, modes=4)
    r = check_mass_estimate(beta, w, u)
    assert not r.fitted["exact"]
    assert 0.9 <= r.fitted["slope"] <= 1.5 and r.passed


def test_mass_rejects_unnormalized():
    g = GridSpec(2, 16)
    with pytest.raises(GeometryError):
        check_mass_estimate(Form11.identity(g), _w(), ScalarField.zeros(g) - 1.0)


# ----------------------------------------------------------------- energy

def test_energy_equal_pair_margin():
    w = _w()
    v = random_admissible(w, 6, modes=4) - 1.0
    r = check_energy_inequality(v, v, w)
    rhs = r.details["rhs"]
    assert r.worst_margin == pytest.approx((2 ** 2 - 1) * rhs, rel=1e-14)
    assert r.fitted["slack"] == 0.0


def test_energy_kahler_has_no_slack():
    g = GridSpec(2, 16)
    beta = Form11.identity(g)
    r = energy_family(beta, Form11.constant(g, np.diag([1.0, 0.5])), samples=4)
    assert r.details["slack"] == [0.0] * 5 and r.passed


def test_energy_nonclosed_slack_is_linear():
    g = GridSpec(2, 16)
    r = energy_family(degenerate_beta(g, 0.5), _w(), samples=4)
    assert r.passed
    C = r.fitted["C_slack_over_eps"]
    for e, s in zip(r.details["eps"], r.details["slack"]):
        assert s <= C * e


def test_energy_rejects_unordered():
    w = _w()
    v = random_admissible(w, 6, modes=4) - 1.0
    with pytest.raises(GeometryError):
        check_energy_inequality(v + 0.5, v, w)
    with pytest.raises(GeometryError):
        check_energy_inequality(v, v + 0.5, w)


# --------------------------------------------------------------- capacity

def test_capacity_empty_and_whole_space():
    g = GridSpec(1, 32)
    w = perturbed_diagonal(g, 0.3)
    assert capacity_estimate(ScalarField.zeros(g), w) == 0.0
    total = spectral.mean(np.broadcast_to(pw.det(w.parts()), g.shape))
    assert capacity_estimate(ScalarField(g, np.ones(g.shape)), w) >= total


def test_capacity_nested_balls_monotone():
    g = GridSpec(2, 16)
    w = _w()
    c = (0.5, 0.5, 0.5, 0.5)
    sets = [ball(g, c, r) for r in (0.1, 0.2, 0.4)]
    caps = capacity_family(sets, w)
    assert all(a <= b for a, b in zip(caps, caps[1:]))
    assert caps[0] > 0


def test_capacity_comparability():
    for n, res in ((1, 32), (2, 16)):
        g = GridSpec(n, res)
        w = perturbed_diagonal(g, 0.3)
        m1, m2, ratio = capacity_comparability(ball(g, (0.5,) * (2 * n), 0.2), w)
        assert 1.0 <= ratio <= 2 ** n
        assert m1 > 0 and m2 > 0


def test_volume_capacity_rejects_small_family():
    g = GridSpec(1, 32)
    with pytest.raises(ValueError):
        volume_capacity_diagnostic(Form11.identity(g), [ball(g, (0.5, 0.5), r) for r in (0.1, 0.2, 0.3)])


@pytest.mark.parametrize("center", [(0.5, 0.5), (0.0, 0.5)])
def test_volume_capacity_fit_is_positive(center):
    # (0.5, 0.5): beta positive there; (0, 0.5): the degeneracy point of beta
    g = GridSpec(1, 64)
    beta = degenerate_beta(g, 1.0)
    sets = [ball(g, center, r) for r in (0.35, 0.25, 0.18, 0.12, 0.08)]
    r = volume_capacity_diagnostic(beta, sets)
    assert r.passed and r.fitted["a"] > 0 and r.fitted["C"] > 0
    assert r.details["lower_bound_caveat"]


# ------------------------------------------------------------------ trace

def _tr(g, t):
    return pw.trace_prod(pw.inverse(g), t)


def test_trace_examples():
    eye = (np.ones(1), np.ones(1), np.zeros(1, complex))
    assert _tr(eye, eye)[0] * _tr(eye, eye)[0] == 4.0 >= _tr(eye, eye)[0]
    rng = np.random.default_rng(0)
    # moderate conditioning: tr_g g = n is then exact to ~1e-15
    g = random_hermitian_pd(rng, 100, spread=1.0)
    w = random_hermitian_pd(rng, 100, spread=1.0)
    # tau = g: (tr_g g)(tr_g w) = n tr_g w
    np.testing.assert_allclose(_tr(g, g) * _tr(g, w), 2 * _tr(g, w), rtol=1e-12)


def test_trace_random_triples():
    r = check_trace_inequality(100_000, seed=0)
    assert r.passed and r.details["violations"] == 0 and r.samples == 100_000
    assert r.worst_margin >= -1e-12


# ------------------------------------------------------ mixed / constant

def test_mixed_type_equal_pair_is_equality():
    w = _w()
    u = random_admissible(w, 8, modes=4)
    r = check_mixed_type(w, u, u)
    assert r.passed
    assert max(abs(m) for m in r.details["margins"].values()) <= 1e-12


def test_mixed_type_family():
    r = mixed_type_family(_w(), samples=5)
    assert r.passed and r.details["violations"] == 0
    r1 = mixed_type_family(_w(32, n=1), samples=5)
    assert r1.passed


def test_constant_bound():
    w = _w()
    u = random_admissible(w, 9, modes=4)
    assert density_ratio_sup(w, u, u) == 1.0
    r = constant_bound_family(w, samples=10)
    assert r.passed and min(r.details["sup_ratios"]) >= 1.0


# ------------------------------------------------------------- sup bounds

def test_sup_bounds_flat_is_tight():
    g = GridSpec(2, 8)
    w = Form11.identity(g)
    r = check_sup_bounds(w, np.ones(g.shape), ScalarField.zeros(g), 1.0)
    assert r.details["lower_slack"] == 0.0
    assert abs(r.details["upper_slack"]) <= 1e-14 and r.passed


def test_sup_bound_family_small():
    r = sup_bound_family(_w(), samples=2)
    assert r.passed
    for d in r.details["per_sample"]:
        assert d["log_c"] <= d["sup_v"] + 1e-6 <= d["upper"] + 2e-6


# ------------------------------------------------------------- principles

def test_comparison_family_small():
    r = comparison_family(_w(), samples=3)
    assert r.passed and r.details["violations"] == 0


def test_metric_monotonicity_small():
    r = metric_monotonicity_family(_w(), samples=2)
    assert r.passed and r.worst_margin >= -1e-8


def test_uniqueness_check():
    w = _w()
    r = uniqueness_check(w, smooth_density(w, 3))
    assert r.passed


def test_growth_diagnostic():
    ok = SimpleNamespace(extras={"growth": [2.0, 0.5, 0.4, 0.3]})
    assert growth_diagnostic(ok).passed
    bad = SimpleNamespace(extras={"growth": [2.0, 0.5, 0.4, 0.6]})
    assert not growth_diagnostic(bad).passed
    _, rep = solve_degenerate(degenerate_beta(GridSpec(1, 32), 1.0), 1.0)
    r = growth_diagnostic(rep)
    assert r.samples == len(rep.extras["growth"])


# ---------------------------------------------------------- concentration

def test_chi_spline():
    t = np.linspace(-2, 1, 3001)
    assert chi(0.0) == 0.0 and chi(-1.0) == -0.5 and chi(-3.0) == -0.5 and chi(2.0) == 2.0
    assert chi_prime(0.0) == 1.0 and chi_prime(-1.0) == 0.0
    # C^1: chi' is the derivative of chi, continuous and nondecreasing
    h = t[1] - t[0]
    np.testing.assert_allclose(np.gradient(chi(t), h)[1:-1], chi_prime(t)[1:-1], atol=2 * h)
    assert np.all(np.diff(chi_prime(t)) >= 0)
    np.testing.assert_array_equal(chi_second(np.array([-1.5, -1.0, -0.5, 0.0, 0.5])), [0, 0, 1, 0, 0])


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("eps", [0.05, 0.125])
def test_continuum_mass_is_one(n, eps):
    assert abs(continuum_mass(n, eps) - 1.0) <= 1e-6


def test_gamma_support_and_grid_mass():
    g = GridSpec(1, 128)
    eps = 0.125
    d = gamma_density(g, (0.5, 0.5), eps)
    r2 = sum(x * x for x in np.broadcast_arrays(*g.centered((0.5, 0.5))))
    assert np.all(d[r2 > eps * eps * (1 + 1e-12)] == 0)
    assert np.all(d[r2 < (eps / math.e) ** 2 * (1 - 1e-12)] == 0)
    # quadrature on the grid approximates the continuum mass
    assert abs(abs_volume_factor(1) * spectral.mean(d) - 1.0) < 0.05


def test_concentration_config_validation():
    with pytest.raises(ValueError):
        ConcentrationConfig(points=[], taus=[])
    with pytest.raises(ValueError):
        ConcentrationConfig(points=[(0.5, 0.5)], taus=[1.0, 2.0])
    with pytest.raises(ValueError):
        ConcentrationConfig(points=[(0.5, 0.5)], taus=[0.0])


def test_concentration_rejections():
    g = GridSpec(1, 64)
    w = Form11.identity(g)
    with pytest.raises(GeometryError):
        mass_concentration(w, w, ConcentrationConfig([(0.5, 0.5)], [1.0], eps_list=[2 / 64]))
    # int beta^n = 2 in absolute units: tau = 2 leaves delta <= 0
    with pytest.raises(GeometryError):
        mass_concentration(w, w, ConcentrationConfig([(0.5, 0.5)], [2.0], eps_list=[0.125]))


def test_concentration_rhs_mass():
    g = GridSpec(1, 64)
    w = Form11.identity(g)
    cfg = ConcentrationConfig([(0.5, 0.5), (0.2, 0.3)], [0.5, 0.7])
    rhs, raw = concentration_rhs(w, w, cfg, 0.125)
    # gamma terms normalized to mass tau^n, plus delta: total int beta^n
    assert abs_volume_factor(1) * spectral.mean(rhs) == pytest.approx(2.0, rel=1e-13)
    assert cfg.delta(w) == pytest.approx(2.0 - 1.2, rel=1e-14)
    assert all(abs(m - 1) < 0.05 for m in raw)


def test_log_pole_slope():
    g = GridSpec(1, 64)
    w = Form11.identity(g)
    cfg = ConcentrationConfig([(0.5, 0.5)], [1.0], eps_list=[8 * g.spacing])
    fields, r = mass_concentration(w, w, cfg)
    assert r.passed
    a = r.fitted["slopes"][repr(8 * g.spacing)][0]
    assert abs(a - 1.0) <= 0.05
    assert abs(r.details["continuum_mass"][repr(8 * g.spacing)] - 1.0) <= 1e-6


def test_vanishing_weights_approach_pole_free_solve():
    g = GridSpec(1, 64)
    beta = Form11.identity(g)
    omega = beta + ddc(random_admissible(beta, 2, modes=4))
    vol = np.broadcast_to(pw.det(omega.parts()), g.shape)
    delta = 2.0
    f0 = (delta / 2) * vol / spectral.mean(vol) / vol
    ref, _, _ = solve_degenerate_lambda_zero(beta, f0, None, omega)
    diffs = []
    for tau in (1e-3, 1e-5):
        cfg = ConcentrationConfig([(0.5, 0.5)], [tau])
        fields, _ = mass_concentration(beta, omega, cfg)
        diffs.append(float(np.max(np.abs(fields[0.125].full() - ref.full()))))
    assert diffs[1] <= 1e-4
    assert diffs[1] < diffs[0]
