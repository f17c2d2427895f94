"""Monge-Ampere densities, mixed discriminants, torsion constants, traces
and the Gauduchon conformal factor."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import pointwise as pw
from . import spectral
from .grid import Form11, GeometryError, ScalarField, TopDensity, ddc_form_density
from .krylov import bicgstab

NEGATIVE_EIG_LIMIT = -1e-8


class PositivityError(GeometryError):
    """omega + dd^c phi fails to be semipositive."""

    def __init__(self, message, margin, count):
        super().__init__(message)
        self.margin = margin
        self.count = count


def _shifted_parts(omega: Form11, phi: ScalarField | None):
    if phi is None:
        return omega.parts()
    if phi.grid != omega.grid:
        raise GeometryError("grid mismatch between form and potential")
    # pin the value at the origin: an exact shift leaves the FFT input unchanged
    v = phi.values - phi.values.flat[0]
    return pw.add(omega.parts(), spectral.hessian_parts(phi.grid.n, phi.grid.res, v))


def ma_density(omega: Form11, phi: ScalarField | None = None, return_margin: bool = False):
    """Density of (omega + dd^c phi)^n, i.e. det(g + H(phi)).

    Raises PositivityError when the smallest eigenvalue drops below -1e-8
    anywhere; the error carries the margin and the number of bad points.
    """
    parts = _shifted_parts(omega, phi)
    lam = pw.min_eig(parts)
    margin = float(np.min(lam))
    if margin < NEGATIVE_EIG_LIMIT:
        count = int(np.count_nonzero(lam < NEGATIVE_EIG_LIMIT))
        raise PositivityError(
            f"omega + dd^c phi has negative eigenvalues at {count} points (min {margin:.3e})",
            margin, count)
    dens = TopDensity(omega.grid, pw.det(parts))
    return (dens, margin) if return_margin else dens


def _mixed_parts(parts_list):
    n = len(parts_list)
    if n == 1:
        return parts_list[0][0]
    levels = []
    for size in range(1, n + 1):
        dets = []
        for subset in itertools.combinations(range(n), size):
            acc = parts_list[subset[0]]
            for i in subset[1:]:
                acc = pw.add(acc, parts_list[i])
            dets.append(np.asarray(pw.det(acc), dtype=float))
        if len(dets) == 1:
            levels.append(dets[0])
        else:
            shape = np.broadcast_shapes(*(d.shape for d in dets))
            stack = np.sort(np.stack([np.broadcast_to(d, shape) for d in dets]), axis=0)
            levels.append(np.sum(stack, axis=0))
    out = levels[-1]
    for size in range(n - 1, 0, -1):
        sign = -1.0 if (n - size) % 2 else 1.0
        out = out + sign * levels[size - 1]
    return out / math.factorial(n)


def mixed_density(forms) -> TopDensity:
    """Pointwise mixed discriminant D(A_1, ..., A_n) by polarization.

    D = (1/n!) sum_S (-1)^(n-|S|) det(sum_{i in S} A_i). Determinants of
    equal-size subsets are summed in sorted order, which makes the result
    bit-identical under permutation of the arguments.
    """
    forms = list(forms)
    if not forms:
        raise GeometryError("mixed_density needs n forms")
    grid = forms[0].grid
    if len(forms) != grid.n:
        raise GeometryError(f"mixed_density needs exactly n={grid.n} forms, got {len(forms)}")
    for f in forms:
        if f.grid != grid:
            raise GeometryError("grid mismatch in mixed_density")
    return TopDensity(grid, _mixed_parts([f.parts() for f in forms]))


@dataclass
class CurvatureReport:
    B: float
    location: tuple
    dw_dcw_vanishes: bool = True


def curvature_constant(omega: Form11, reference: Form11 | None = None) -> CurvatureReport:
    """Smallest B with -B ref^2 <= 2n dd^c omega <= B ref^2 on the grid (n = 2).

    ``reference`` defaults to omega itself; passing the fixed background
    metric gives the constant of a perturbed family such as beta + eps*omega.
    The d omega ^ d^c omega clause is a 6-form on a surface and is zero.
    """
    if omega.grid.n != 2:
        raise GeometryError("curvature_constant is defined for n = 2 only")
    ref = omega if reference is None else reference
    if not ref.is_positive():
        raise GeometryError("reference form must be positive")
    ratio = np.abs(4.0 * ddc_form_density(omega)) / np.broadcast_to(pw.det(ref.parts()), omega.grid.shape)
    flat = int(np.argmax(ratio))
    loc = tuple(int(i) for i in np.unravel_index(flat, ratio.shape))
    return CurvatureReport(float(ratio.reshape(-1)[flat]), loc)


def trace(g: Form11, tau: Form11) -> ScalarField:
    """Pointwise tr(g^{-1} tau)."""
    if g.grid != tau.grid:
        raise GeometryError("grid mismatch in trace")
    gp = g.parts()
    d = np.min(pw.min_eig(gp))
    if d <= 0:
        raise GeometryError("trace needs a positive definite g")
    tr = pw.trace_prod(pw.inverse(gp), tau.parts())
    return ScalarField(g.grid, np.broadcast_to(tr, g.grid.shape).copy())


@dataclass
class GauduchonResult:
    G: ScalarField
    residual: float
    history: list = field(default_factory=list)
    kernel_dim: int = 1


class GauduchonError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _gauduchon_operator(omega: Form11):
    g = omega.grid
    sym = g.symbols
    shape = g.shape
    a11, a22, a12 = omega.full_parts()
    ar = np.ascontiguousarray(a12.real)
    ai = np.ascontiguousarray(a12.imag)
    h11 = sym.hess(0, 0)[0]
    h22 = sym.hess(1, 1)[0]
    hre, him = sym.hess(0, 1)

    def apply(u):
        F11 = spectral.rfft(u * a11)
        F22 = spectral.rfft(u * a22)
        Fr = spectral.rfft(u * ar)
        Fi = spectral.rfft(u * ai)
        spec = 0.5 * (F11 * h22 + F22 * h11) - Fr * hre - Fi * him
        return spectral.irfft(spec, shape)

    m11, m22 = spectral.mean(a11), spectral.mean(a22)
    mr, mi = spectral.mean(ar), spectral.mean(ai)
    psym = 0.5 * (m11 * h22 + m22 * h11) - mr * hre - mi * him
    psym = np.broadcast_to(psym, sym.spec_shape).copy()
    zero = psym == 0
    psym[zero] = 1.0
    inv = 1.0 / psym
    inv[zero] = 0.0

    def precond(r):
        return spectral.irfft(spectral.rfft(r) * inv, shape)

    return apply, precond


def gauduchon(omega: Form11, tol: float = 1e-11, max_iter: int = 20) -> GauduchonResult:
    """Conformal factor e^G with dd^c(e^G omega^{n-1}) = 0.

    n = 1: G = 0 exactly. n = 2: u = e^G spans the kernel of
    u -> density(dd^c(u omega)). The adjoint kills constants, so the range
    is mean-free; writing u = 1 + w with mean(w) = 0 and iterating
    deflated, preconditioned Krylov corrections on w converges to the
    kernel vector exactly when that kernel is one-dimensional (otherwise
    the deflated operator is singular and the iteration stalls, which is
    reported as an error). u is then scaled so that int u omega^n equals
    int omega^n.
    """
    g = omega.grid
    if not omega.is_positive():
        raise GeometryError("gauduchon needs a positive form")
    if g.n == 1:
        return GauduchonResult(ScalarField.zeros(g), 0.0, [0.0])
    apply, precond = _gauduchon_operator(omega)
    scale = max(float(np.max(np.abs(omega.coeff))), 1.0)
    u = np.ones(g.shape)
    history = []
    for _ in range(max_iter):
        r = apply(u)
        res = float(np.max(np.abs(r)))
        history.append(res)
        if res <= tol * scale:
            break
        w, _info = bicgstab(apply, -r, precond, rtol=1e-12, maxiter=400)
        w -= spectral.mean(w)
        u = u + w
    else:
        raise GauduchonError("Gauduchon kernel iteration did not converge", history)
    vol = np.broadcast_to(pw.det(omega.parts()), g.shape)
    u *= spectral.mean(vol) / spectral.mean(u * vol)
    if float(np.min(u)) <= 0:
        raise GauduchonError("kernel vector is not positive", history)
    res = float(np.max(np.abs(apply(u))))
    return GauduchonResult(ScalarField(g, np.log(u)), res, history)
