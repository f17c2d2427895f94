import math

import numpy as np
import pytest

from hermitian_ma.builders import bump, degenerate_beta, manufactured, perturbed_diagonal, vanishing_set
from hermitian_ma.grid import Form11, GeometryError, GridSpec, ScalarField, integrate, random_admissible
from hermitian_ma.ma import ma_density
from hermitian_ma.solvers import (
    SolverConfig,
    SolverError,
    solve_degenerate,
    solve_degenerate_lambda_zero,
    solve_lambda_positive,
    solve_lambda_zero,
)


def _cfg(**kw):
    return SolverConfig(**kw)


def test_config_validation():
    for bad in ({"eps_schedule": [1.0, 1.0]}, {"eps_schedule": []}, {"delta_schedule": [1e-2, -1.0]},
                {"damping": 1.5}, {"newton_tol": 0.0}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


@pytest.mark.parametrize("kappa", [1.0, 2.0, 0.3])
def test_constant_rhs_closed_form(kappa):
    w = perturbed_diagonal(GridSpec(2, 8), 0.3, 0.2)
    phi, rep = solve_lambda_positive(w, kappa, 1.0)
    np.testing.assert_allclose(phi.full(), -math.log(kappa), atol=1e-12)
    assert rep.converged and rep.residual <= 1e-10


def test_constant_pair_is_ordered():
    w = Form11.identity(GridSpec(2, 8))
    phi_f, _ = solve_lambda_positive(w, 1.0, 1.0)
    psi_g, _ = solve_lambda_positive(w, 2.0, 1.0)
    assert np.all(psi_g.full() <= phi_f.full())
    np.testing.assert_allclose(psi_g.full(), -math.log(2), atol=1e-14)


@pytest.mark.parametrize("n,res,lam", [(1, 32, 1.0), (2, 16, 1.0), (2, 16, 0.25)])
def test_manufactured_recovery(n, res, lam):
    w = perturbed_diagonal(GridSpec(n, res), 0.3, 0.2)
    f, ex = manufactured(w, lam=lam, seed=7)
    phi, rep = solve_lambda_positive(w, f, lam)
    assert np.max(np.abs(phi.full() - ex["psi0"].full())) <= 1e-8
    assert rep.margin > 0
    res_hist = rep.stages[-1]["residuals"]
    assert all(b < a for a, b in zip(res_hist, res_hist[1:]))


def test_uniqueness_from_random_starts():
    g = GridSpec(2, 16)
    w = perturbed_diagonal(g, 0.3, 0.2)
    f, _ = manufactured(w, seed=3)
    cfg = SolverConfig()
    sols = [solve_lambda_positive(w, f, 1.0, cfg, phi0=random_admissible(w, s))[0].full() for s in (11, 12)]
    assert np.max(np.abs(sols[0] - sols[1])) <= 10 * cfg.newton_tol


def test_reference_measure():
    # same measure against a different metric: f reference^n
    g = GridSpec(2, 8)
    w = perturbed_diagonal(g, 0.3, 0.2)
    ref = Form11.identity(g)
    phi, _ = solve_lambda_positive(w, 1.0, 1.0, reference=ref)
    d = ma_density(w, phi).density
    np.testing.assert_allclose(d, np.exp(phi.full()), rtol=1e-9)


def test_rejections():
    g = GridSpec(1, 16)
    w = Form11.identity(g)
    with pytest.raises(ValueError):
        solve_lambda_positive(w, 1.0, 0.0)
    with pytest.raises(GeometryError):
        solve_lambda_positive(w, 0.0, 1.0)
    with pytest.raises(GeometryError):
        solve_lambda_positive(w, -np.ones(g.shape), 1.0)
    with pytest.raises(GeometryError):
        solve_lambda_positive(Form11.identity(g, 0.0), 1.0, 1.0)


def test_positivity_failure_carries_iterate():
    g = GridSpec(1, 16)
    f = np.exp(40 * np.cos(2 * math.pi * g.coords()[0]) + 0 * g.coords()[1])
    with pytest.raises(SolverError) as err:
        solve_lambda_positive(Form11.identity(g), f, 1.0, SolverConfig(max_newton=2))
    assert err.value.report is not None


def test_vanishing_rhs_delta_schedule():
    g = GridSpec(1, 32)
    w = Form11.identity(g)
    f, _ = vanishing_set(w)
    assert np.min(f) == 0.0
    phi, rep = solve_lambda_positive(w, f, 1.0)
    deltas = [s["delta"] for s in rep.stages]
    assert deltas == SolverConfig().delta_schedule
    assert rep.converged and rep.margin > 0
    # warm starts: the floored solutions decrease as the floor drops
    assert rep.stages[-1]["newton_iterations"] <= rep.stages[0]["newton_iterations"] + 5


def test_lambda_zero_flat_unit():
    w = Form11.identity(GridSpec(2, 8))
    psi, c, rep = solve_lambda_zero(w, 1.0)
    assert abs(c - 1) <= 1e-12
    assert np.max(np.abs(psi.full())) <= 1e-12
    assert len(rep.c_sequence) == len(SolverConfig().eps_schedule)


def test_lambda_zero_normalized_bump():
    w = Form11.identity(GridSpec(1, 32))
    f, _ = bump(w, mass=1.0)
    psi, c, rep = solve_lambda_zero(w, f)
    assert abs(c - 1) <= 1e-3
    assert psi.sup() == 0.0
    assert not rep.flags


def test_lambda_zero_manufactured():
    w = perturbed_diagonal(GridSpec(2, 16), 0.3, 0.2)
    f, ex = manufactured(w, lam=0.0, seed=5)
    psi, c, rep = solve_lambda_zero(w, f)
    assert abs(c - 1) <= 1e-3
    p0 = ex["psi0"].full()
    assert np.max(np.abs(psi.full() - (p0 - p0.max()))) <= 1e-4
    assert rep.extras["richardson_order_assumed"] == 1


def test_lambda_zero_cauchy_shrinks():
    w = perturbed_diagonal(GridSpec(1, 32), 0.3)
    f, _ = bump(w, mass=1.0)
    _, _, rep = solve_lambda_zero(w, f)
    c = rep.cauchy
    assert c[-1] < c[0]


# ------------------------------------------------------------ degenerate path

def test_degenerate_flat_beta_unit_rhs():
    g = GridSpec(2, 8)
    phi, rep = solve_degenerate(Form11.identity(g), 1.0)
    assert rep.extras["eps_reached"] == 0.0
    assert np.max(np.abs(phi.full())) <= 1e-12
    for s in rep.stages:
        assert s["residual"] <= 1e-10


def test_degenerate_rejects_nonclosed_and_indefinite():
    g = GridSpec(2, 8)
    with pytest.raises(GeometryError):
        solve_degenerate(perturbed_diagonal(g, 0.3), 1.0)
    with pytest.raises(GeometryError):
        solve_degenerate(Form11.constant(g, np.diag([1.0, -0.5])), 1.0)
    with pytest.raises(GeometryError):
        solve_degenerate(Form11.constant(g, np.diag([1.0, 0.0])), 1.0)


def test_genuinely_degenerate_n1():
    g = GridSpec(1, 32)
    beta = degenerate_beta(g, 1.0)
    assert float(np.min(beta.full_parts()[0])) == pytest.approx(0.0, abs=1e-14)
    phi, rep = solve_degenerate(beta, 1.0)
    assert rep.converged
    assert rep.extras["cauchy_monotone"]
    assert not any("monotonicity" in fl for fl in rep.flags)
    defects = [s["monotone_defect"] for s in rep.stages if "monotone_defect" in s]
    assert max(defects) <= 1e-6


def test_degenerate_manufactured_recovery():
    # psi0 = -0.5 cos(2 pi x1)/pi leaves beta + dd^c psi0 = 1 - 0.5 cos >= 0.5
    g = GridSpec(1, 32)
    beta = degenerate_beta(g, 1.0)
    x = g.coords()[0]
    psi0 = ScalarField(g, np.broadcast_to(-0.5 * np.cos(2 * math.pi * x) / math.pi, g.shape))
    f = ma_density(beta, psi0).full() * np.exp(-psi0.full())
    phi, rep = solve_degenerate(beta, f)
    assert rep.extras["final_base"] == "beta"
    assert np.max(np.abs(phi.full() - psi0.full())) <= 1e-4


def test_degenerate_lambda_zero_ratio_examples():
    g = GridSpec(2, 8)
    w = Form11.identity(g)
    _, c, _ = solve_degenerate_lambda_zero(w, 1.0)
    assert abs(c - 1) <= 5e-3
    _, c, rep = solve_degenerate_lambda_zero(w, 2.0)
    assert abs(c - 0.5) <= 5e-3 * 0.5
    assert rep.extras["c_ratio"] == pytest.approx(0.5, rel=1e-14)


def test_degenerate_normalized_rhs_gives_unit_constant():
    # int beta^n = int f omega^n: c = 1 and phi solves (beta + dd^c phi)^n = f omega^n
    g = GridSpec(1, 64)
    beta = degenerate_beta(g, 1.0)
    w = Form11.identity(g)
    f, _ = bump(w, mass=integrate(ma_density(beta)))
    psi, c, rep = solve_degenerate_lambda_zero(beta, f)
    assert abs(c - 1) <= 5e-3
    assert rep.extras["final_base"] == "beta"
    lhs = ma_density(beta, psi).density
    assert np.max(np.abs(lhs - f)) <= 1e-2 * np.max(f)


def test_homotopy_rescues_stalled_line_search():
    # psi0 sits close to the admissibility boundary, so f spans almost two
    # decades; plain damped Newton from 0 stalls at lam = 1
    w = perturbed_diagonal(GridSpec(2, 16), 0.3, 0.2)
    f, _ = manufactured(w, lam=0.0, seed=5, margin=0.05)
    phi, rep = solve_lambda_positive(w, f, 1.0)
    stage = rep.stages[-1]
    assert [p["s"] for p in stage["homotopy"]][-1] == 1.0
    assert rep.converged and rep.residual <= SolverConfig().newton_tol
    d = ma_density(w, phi).density
    np.testing.assert_allclose(d, np.exp(phi.full()) * f * ma_density(w).density, rtol=1e-9)
