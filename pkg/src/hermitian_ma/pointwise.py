"""Closed-form pointwise kernels on compact Hermitian parts.

A Hermitian field is carried as a tuple of arrays: ``(a,)`` (real) for
n = 1 and ``(a11, a22, a12)`` (real, real, complex) for n = 2. Keeping
the parts separate avoids materialising (2, 2) complex blocks on grids
with ~10^7 points.
"""

from __future__ import annotations

import numpy as np


def add(a, b, s: float = 1.0):
    """a + s*b, partwise."""
    return tuple(x + s * y for x, y in zip(a, b))


def scale(a, s):
    return tuple(s * x for x in a)


def det(a):
    if len(a) == 1:
        return a[0]
    a11, a22, a12 = a
    return a11 * a22 - (a12.real ** 2 + a12.imag ** 2)


def trace(a):
    if len(a) == 1:
        return a[0]
    return a[0] + a[1]


def min_eig(a):
    if len(a) == 1:
        return a[0]
    a11, a22, a12 = a
    half = 0.5 * (a11 + a22)
    rad = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12.real ** 2 + a12.imag ** 2)
    return half - rad


def max_eig(a):
    if len(a) == 1:
        return a[0]
    a11, a22, a12 = a
    half = 0.5 * (a11 + a22)
    rad = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12.real ** 2 + a12.imag ** 2)
    return half + rad


def inverse(a):
    """Parts of a^-1 (a must be nonsingular)."""
    if len(a) == 1:
        return (1.0 / a[0],)
    a11, a22, a12 = a
    d = det(a)
    return (a22 / d, a11 / d, -a12 / d)


def trace_prod(c, h):
    """tr(c h) for Hermitian c, h."""
    if len(c) == 1:
        return c[0] * h[0]
    c11, c22, c12 = c
    h11, h22, h12 = h
    return c11 * h11 + c22 * h22 + 2.0 * (c12.real * h12.real + c12.imag * h12.imag)


def mixed2(a, b):
    """Mixed discriminant D(a, b) for n = 2.

    Written as det(a+b) - (det a + det b) over two so that swapping the
    arguments gives a bit-identical result.
    """
    return 0.5 * (det(add(a, b)) - (det(a) + det(b)))


def psd_limit(base, h) -> float:
    """Largest t >= 0 with base + t h pointwise positive semidefinite.

    base must be semidefinite; inf when no point ever loses positivity.
    For n = 2 this is the first positive root of the quadratic
    det(base + t h) = d0 + 2 D t + e t^2.
    """
    if len(base) == 1:
        b, x = np.broadcast_arrays(base[0], h[0])
        neg = x < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(b[neg] / -x[neg]))
    d0, D, e = np.broadcast_arrays(det(base), mixed2(base, h), det(h))
    disc = D * D - d0 * e
    t = np.full(d0.shape, np.inf)
    real = disc >= 0
    sq = np.sqrt(np.where(real, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -(D + np.copysign(sq, D))
        r1 = np.where(e != 0, q / e, np.inf)
        r2 = np.where(q != 0, d0 / q, np.inf)
        lin = (e == 0) & (D < 0)
        t = np.where(lin, -d0 / np.where(D == 0, 1.0, 2 * D), t)
    for r in (r1, r2):
        ok = real & (e != 0) & (r > 0)
        t = np.where(ok, np.minimum(t, r), t)
    return float(np.min(t))


def from_matrix(coeff: np.ndarray):
    """Parts view of a full (n, n, ...) coefficient array."""
    n = coeff.shape[0]
    if n == 1:
        return (coeff[0, 0].real,)
    if n == 2:
        return (coeff[0, 0].real, coeff[1, 1].real, coeff[0, 1])
    raise ValueError(f"compact parts only support n <= 2, got n={n}")


def to_matrix(a) -> np.ndarray:
    if len(a) == 1:
        x = np.asarray(a[0])
        return x.astype(complex)[None, None]
    a11, a22, a12 = (np.asarray(x) for x in a)
    shape = np.broadcast_shapes(a11.shape, a22.shape, a12.shape)
    out = np.empty((2, 2) + shape, dtype=complex)
    out[0, 0] = a11
    out[1, 1] = a22
    out[0, 1] = a12
    out[1, 0] = np.conj(a12)
    return out
