import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hermitian_ma import pointwise as pw
from hermitian_ma.diagnostics.inequalities import random_hermitian_pd
from hermitian_ma.krylov import bicgstab


def _dense(parts):
    m = pw.to_matrix(parts)
    return np.moveaxis(m, (0, 1), (-2, -1))


@given(st.integers(0, 2 ** 31))
def test_kernels_match_numpy_linalg(seed):
    rng = np.random.default_rng(seed)
    a = random_hermitian_pd(rng, 64)
    b = random_hermitian_pd(rng, 64)
    A, B = _dense(a), _dense(b)
    ev = np.linalg.eigvalsh(A)
    np.testing.assert_allclose(pw.det(a), np.linalg.det(A).real, rtol=1e-10)
    np.testing.assert_allclose(pw.min_eig(a), ev[:, 0], rtol=1e-8, atol=1e-12 * ev[:, 1].max())
    np.testing.assert_allclose(pw.max_eig(a), ev[:, 1], rtol=1e-10)
    np.testing.assert_allclose(_dense(pw.inverse(a)), np.linalg.inv(A), rtol=1e-8, atol=1e-8 * np.abs(np.linalg.inv(A)).max())
    np.testing.assert_allclose(pw.trace_prod(a, b), np.trace(A @ B, axis1=-2, axis2=-1).real, rtol=1e-10)
    polar = 0.5 * (np.linalg.det(A + B) - np.linalg.det(A) - np.linalg.det(B)).real
    np.testing.assert_allclose(pw.mixed2(a, b), polar, rtol=1e-8, atol=1e-10 * np.abs(polar).max())


def test_parts_roundtrip():
    rng = np.random.default_rng(0)
    a = random_hermitian_pd(rng, 10)
    back = pw.from_matrix(pw.to_matrix(a))
    for x, y in zip(a, back):
        np.testing.assert_array_equal(x, y)


def test_bicgstab_solves_nonsymmetric_system():
    rng = np.random.default_rng(1)
    n = 60
    M = np.eye(n) * 4 + rng.standard_normal((n, n)) * 0.3
    b = rng.standard_normal(n)
    x, info = bicgstab(lambda v: M @ v, b, rtol=1e-12, maxiter=500)
    assert info.converged
    np.testing.assert_allclose(x, np.linalg.solve(M, b), rtol=1e-9, atol=1e-10)


def test_bicgstab_preconditioner_and_zero_rhs():
    rng = np.random.default_rng(2)
    d = np.linspace(1, 100, 40)
    M = np.diag(d) + 0.01 * rng.standard_normal((40, 40))
    b = rng.standard_normal(40)
    x, info = bicgstab(lambda v: M @ v, b, precond=lambda r: r / d, rtol=1e-12)
    assert info.converged and info.iterations < 40
    np.testing.assert_allclose(M @ x, b, atol=1e-9)
    z, info = bicgstab(lambda v: M @ v, np.zeros(40))
    assert info.converged and np.all(z == 0)


@given(st.integers(0, 2 ** 31))
def test_psd_limit_matches_eigenvalue_bisection(seed):
    rng = np.random.default_rng(seed)
    a = random_hermitian_pd(rng, 8, spread=1.0)
    h = tuple(x - y for x, y in zip(random_hermitian_pd(rng, 8, spread=1.0), random_hermitian_pd(rng, 8, spread=1.0)))
    t = pw.psd_limit(a, h)
    A, H = _dense(a), _dense(h)

    def ok(s):
        return np.linalg.eigvalsh(A + s * H)[:, 0].min() >= 0

    if np.isinf(t):
        assert ok(1e6)
        return
    lo, hi = 0.0, 2 * t + 1
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    assert abs(t - lo) <= 1e-8 * max(1.0, lo)


def test_psd_limit_n1():
    assert pw.psd_limit((np.array([1.0, 2.0]),), (np.array([-0.5, 1.0]),)) == 2.0
    assert np.isinf(pw.psd_limit((np.array([1.0]),), (np.array([0.5]),)))
