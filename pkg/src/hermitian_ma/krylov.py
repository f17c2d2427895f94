"""Right-preconditioned BiCGSTAB with order-fixed reductions.

scipy's Krylov solvers reduce through BLAS, whose threaded dot products
are not bit-reproducible across thread counts; this one only uses
pairwise ``np.sum`` so repeated solves are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import total


def _dot(a, b) -> float:
    return total(a * b)


@dataclass
class KrylovInfo:
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)


def bicgstab(matvec, b, precond=None, x0=None, rtol=1e-8, atol=0.0, maxiter=300):
    """Solve A x = b; returns (x, KrylovInfo). Residuals are L2 norms."""
    if precond is None:
        precond = lambda r: r.copy()  # the loop scales the result in place
    x = np.zeros_like(b) if x0 is None else x0.copy()
    # r is rebound, never written in place, so aliasing b is safe
    r = b - matvec(x) if x0 is not None else b
    bnorm = math.sqrt(_dot(b, b))
    target = max(rtol * bnorm, atol)
    rnorm = math.sqrt(_dot(r, r))
    info = KrylovInfo(False, 0, [rnorm])
    if rnorm <= target:
        info.converged = True
        return x, info
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxiter + 1):
        rho_new = _dot(rhat, r)
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = precond(p)
        v = matvec(phat)
        denom = _dot(rhat, v)
        if denom == 0.0:
            break
        alpha = rho_new / denom
        phat *= alpha
        x += phat
        del phat
        s = r - alpha * v
        del r
        snorm = math.sqrt(_dot(s, s))
        if snorm <= target:
            info.iterations = it
            info.residuals.append(snorm)
            info.converged = True
            return x, info
        shat = precond(s)
        t = matvec(shat)
        tt = _dot(t, t)
        omega = _dot(t, s) / tt if tt > 0 else 0.0
        shat *= omega
        x += shat
        del shat
        r = s - omega * t
        del s, t
        rho = rho_new
        rnorm = math.sqrt(_dot(r, r))
        info.iterations = it
        info.residuals.append(rnorm)
        if rnorm <= target:
            info.converged = True
            return x, info
        if omega == 0.0:
            break
    return x, info
