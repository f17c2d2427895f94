"""Fourier machinery on the periodic grid.

All operators here are real-symbol multipliers applied through ``rfftn``.
Odd-order factors (first derivatives, and every mixed second derivative
across two real axes) have their Nyquist wavenumber zeroed, which is
required for a real result. Pure second derivatives d^2/dx^2 keep it:
zeroing it too would put the Nyquist modes into the kernel of the
Hessian and make the lam -> 0 limit ill-posed for rough data. The price
is that int det H(u) = 0 and dd^c dd^c u = 0 hold exactly only for
u without Nyquist content (e.g. anything band-limited to res/4).
"""

from __future__ import annotations

import math
import os
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

_THREADS = max(1, int(os.environ.get("HERMITIAN_MA_THREADS", "1")))


def set_threads(n: int) -> None:
    """Cap the number of FFT worker threads (results do not depend on it)."""
    global _THREADS
    _THREADS = max(1, int(n))


def get_threads() -> int:
    return _THREADS


def rfft(values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, workers=_THREADS)


def irfft(spec: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return sfft.irfftn(spec, s=shape, workers=_THREADS)


def total(values: np.ndarray) -> float:
    """Order-fixed (pairwise) sum over every entry."""
    return float(np.sum(np.ascontiguousarray(values).reshape(-1)))


def mean(values: np.ndarray) -> float:
    return total(values) / values.size


class Symbols:
    """Wavenumbers and complex-Hessian symbols for one grid.

    Axis order is (x1, y1, x2, y2, ...), last axis halved by ``rfftn``.
    ``hess(j, k)`` returns the real symbols of (1/pi) d^2/dz_j dzbar_k
    split as (real part, imaginary part); the imaginary part is ``None``
    on the diagonal.
    """

    def __init__(self, n: int, res: int):
        self.n = n
        self.res = res
        self.shape = (res,) * (2 * n)
        self.spec_shape = self.shape[:-1] + (res // 2 + 1,)
        d = 2 * n
        ks, full = [], []
        for axis in range(d):
            if axis == d - 1:
                k = np.fft.rfftfreq(res, 1.0 / res)
            else:
                k = np.fft.fftfreq(res, 1.0 / res)
            k = 2.0 * math.pi * k
            bshape = [1] * d
            bshape[axis] = k.size
            full.append(k.copy().reshape(bshape))
            k[np.abs(np.abs(k) - math.pi * res) < 1e-9] = 0.0
            ks.append(k.reshape(bshape))
        # kx, ky: Nyquist zeroed (odd factors); kx2, ky2: squares with Nyquist kept
        self.kx = ks[0::2]
        self.ky = ks[1::2]
        self.kx2 = [k * k for k in full[0::2]]
        self.ky2 = [k * k for k in full[1::2]]
        self._cache: dict = {}

    def hess(self, j: int, k: int):
        key = (min(j, k), max(j, k))
        if key not in self._cache:
            j, k = key
            kx, ky = self.kx, self.ky
            c = 1.0 / (4.0 * math.pi)
            if j == k:
                re = -(self.kx2[j] + self.ky2[j]) * c
                im = None
            else:
                re = -(kx[j] * kx[k] + ky[j] * ky[k]) * c
                im = (ky[j] * kx[k] - kx[j] * ky[k]) * c
            self._cache[key] = (re, im)
        return self._cache[key]

    def grad(self, j: int):
        """Symbols (i kx_j, i ky_j) of the real first derivatives."""
        return 1j * self.kx[j], 1j * self.ky[j]


@lru_cache(maxsize=8)
def symbols(n: int, res: int) -> Symbols:
    return Symbols(n, res)


def hessian_parts(n: int, res: int, values: np.ndarray):
    """Compact parts of the Hessian field H = (1/pi) d dbar.

    Returns ``(h,)`` for n = 1 and ``(h11, h22, h12)`` for n = 2.
    """
    sym = symbols(n, res)
    shape = sym.shape
    F = rfft(np.broadcast_to(values, shape))
    if n == 1:
        return (irfft(F * sym.hess(0, 0)[0], shape),)
    h11 = irfft(F * sym.hess(0, 0)[0], shape)
    h22 = irfft(F * sym.hess(1, 1)[0], shape)
    re, im = sym.hess(0, 1)
    h12 = irfft(F * re, shape) + 1j * irfft(F * im, shape)
    return (h11, h22, h12)


def apply_symbol(values: np.ndarray, symbol: np.ndarray, shape) -> np.ndarray:
    return irfft(rfft(np.broadcast_to(values, shape)) * symbol, shape)


def gradient(n: int, res: int, values: np.ndarray) -> list[np.ndarray]:
    """Real partial derivatives [d/dx1, d/dy1, ...] of a real field."""
    sym = symbols(n, res)
    F = rfft(np.broadcast_to(values, sym.shape))
    out = []
    for j in range(n):
        gx, gy = sym.grad(j)
        out.append(irfft(F * gx, sym.shape))
        out.append(irfft(F * gy, sym.shape))
    return out


def prolong(values: np.ndarray, fine_res: int) -> np.ndarray:
    """Trigonometric interpolation of a periodic field onto a finer grid.

    The coarse Nyquist modes are dropped (their interpolant is not real).
    """
    coarse = values.shape[0]
    dim = values.ndim
    F = rfft(values)
    out = np.zeros((fine_res,) * (dim - 1) + (fine_res // 2 + 1,), dtype=complex)
    half = coarse // 2
    full_src = np.r_[0:half, half + 1:coarse]
    full_dst = np.r_[0:half, fine_res - half + 1:fine_res]
    idx_src = [full_src] * (dim - 1) + [np.arange(half)]
    idx_dst = [full_dst] * (dim - 1) + [np.arange(half)]
    out[np.ix_(*idx_dst)] = F[np.ix_(*idx_src)]
    return irfft(out, (fine_res,) * dim) * (fine_res / coarse) ** dim


def restrict(values: np.ndarray, factor: int = 2) -> np.ndarray:
    """Injection onto every factor-th grid point (broadcast axes kept)."""
    sl = tuple(slice(None, None, factor) if s > 1 else slice(None) for s in np.shape(values))
    return np.ascontiguousarray(np.asarray(values)[sl])
