"""Periodic grids on the complex torus C^n / (Z + iZ)^n and the field types
living on them.

Conventions used throughout the package:

* real coordinates are ordered (x1, y1, x2, y2) with z_j = x_j + i y_j;
* a (1,1)-form i sum a_jk dz_j ^ dzbar_k is stored by its coefficient
  matrix a (shape ``(n, n) + grid shape``, trailing axes may be size 1);
* dd^c = (i/pi) d dbar, so dd^c phi has coefficients (1/pi) d_j dbar_k phi;
* top-degree forms are stored as densities against omega_0^n, omega_0
  the flat identity metric, so the flat torus has volume 1 and the
  density of alpha^n is det(a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pointwise as pw
from . import spectral

HERMITIAN_RTOL = 1e-12
SEMIPOSITIVE_TOL = 1e-10


class GeometryError(ValueError):
    """Invalid grid, field or form."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    res: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GeometryError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.res < 8 or self.res & (self.res - 1):
            raise GeometryError(f"res must be a power of two >= 8, got {self.res}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * (2 * self.n)

    @property
    def size(self) -> int:
        return self.res ** (2 * self.n)

    @property
    def spacing(self) -> float:
        return 1.0 / self.res

    def axis(self, index: int) -> np.ndarray:
        """Coordinate values along real axis ``index``, broadcastable."""
        shape = [1] * (2 * self.n)
        shape[index] = self.res
        return (np.arange(self.res) / self.res).reshape(shape)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable real coordinates [x1, y1, x2, y2, ...]."""
        return [self.axis(i) for i in range(2 * self.n)]

    def centered(self, point) -> list[np.ndarray]:
        """Minimal-image displacements (x - p) in [-1/2, 1/2) per real axis."""
        out = []
        for i, c in enumerate(self.coords()):
            d = c - point[i]
            out.append(d - np.floor(d + 0.5))
        return out

    @property
    def symbols(self) -> spectral.Symbols:
        return spectral.symbols(self.n, self.res)


def _check_grid(a, b):
    if a != b:
        raise GeometryError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        try:
            np.broadcast_shapes(v.shape, self.grid.shape)
        except ValueError:
            raise GeometryError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if v.ndim != 0 and v.ndim != 2 * self.grid.n:
            raise GeometryError("field rank must match grid dimension")
        if not np.all(np.isfinite(v)):
            raise GeometryError("field has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def full(self) -> np.ndarray:
        return np.broadcast_to(self.values, self.grid.shape)

    def sup(self) -> float:
        return float(np.max(self.values))

    def inf(self) -> float:
        return float(np.min(self.values))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            _check_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class TopDensity:
    """Top-degree form as a density against omega_0^n (flat volume 1)."""

    grid: GridSpec
    density: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        np.broadcast_shapes(d.shape, self.grid.shape)
        object.__setattr__(self, "density", d)

    def full(self) -> np.ndarray:
        return np.broadcast_to(self.density, self.grid.shape)

    def is_positive_measure(self) -> bool:
        return bool(np.min(self.density) >= -1e-12)


@dataclass(frozen=True, eq=False)
class Form11:
    """Hermitian (1,1)-form stored by its coefficient matrix field."""

    grid: GridSpec
    coeff: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeff, dtype=complex)
        n = self.grid.n
        if c.shape[:2] != (n, n) or c.ndim != 2 + 2 * n:
            raise GeometryError(f"coefficient array must have shape (n, n, *grid), got {c.shape}")
        np.broadcast_shapes(c.shape[2:], self.grid.shape)
        scale = max(float(np.max(np.abs(c))), 1.0)
        asym = float(np.max(np.abs(c - np.conj(np.swapaxes(c, 0, 1)))))
        if asym > HERMITIAN_RTOL * scale:
            raise GeometryError(f"coefficients are not Hermitian (defect {asym:.3e})")
        if not np.all(np.isfinite(c)):
            raise GeometryError("form has non-finite coefficients")
        object.__setattr__(self, "coeff", c)

    @classmethod
    def from_parts(cls, grid: GridSpec, parts) -> "Form11":
        return cls(grid, pw.to_matrix(parts))

    @classmethod
    def identity(cls, grid: GridSpec, scale: float = 1.0) -> "Form11":
        c = np.eye(grid.n, dtype=complex) * scale
        return cls(grid, c.reshape((grid.n, grid.n) + (1,) * (2 * grid.n)))

    @classmethod
    def constant(cls, grid: GridSpec, matrix) -> "Form11":
        m = np.asarray(matrix, dtype=complex)
        return cls(grid, m.reshape((grid.n, grid.n) + (1,) * (2 * grid.n)))

    def parts(self):
        return pw.from_matrix(self.coeff)

    def full_parts(self):
        shape = self.grid.shape
        return tuple(np.broadcast_to(p, shape) for p in self.parts())

    def min_eigenvalue(self) -> np.ndarray:
        return pw.min_eig(self.parts())

    def positivity_margin(self) -> float:
        return float(np.min(self.min_eigenvalue()))

    @property
    def semipositive(self) -> bool:
        return self.positivity_margin() >= -SEMIPOSITIVE_TOL

    def is_positive(self, margin: float = 0.0) -> bool:
        m = self.positivity_margin()
        return m > 0 and m >= margin

    def __add__(self, other: "Form11") -> "Form11":
        _check_grid(self.grid, other.grid)
        return Form11(self.grid, self.coeff + other.coeff)

    def __sub__(self, other: "Form11") -> "Form11":
        _check_grid(self.grid, other.grid)
        return Form11(self.grid, self.coeff - other.coeff)

    def __mul__(self, s) -> "Form11":
        if isinstance(s, ScalarField):
            _check_grid(self.grid, s.grid)
            return Form11(self.grid, self.coeff * s.values[None, None])
        return Form11(self.grid, self.coeff * float(s))

    __rmul__ = __mul__

    def volume_density(self) -> TopDensity:
        return TopDensity(self.grid, pw.det(self.parts()))


def ddc(phi: ScalarField) -> Form11:
    """dd^c phi as a Form11 with coefficients (1/pi) d_j dbar_k phi."""
    g = phi.grid
    return Form11.from_parts(g, spectral.hessian_parts(g.n, g.res, phi.values))


def hessian_parts(phi) -> tuple:
    """Compact parts of dd^c phi; accepts a ScalarField."""
    g = phi.grid
    return spectral.hessian_parts(g.n, g.res, phi.values)


def integrate(mu) -> float:
    """Integral of a top density against the unit-mass reference volume."""
    if isinstance(mu, TopDensity):
        return spectral.mean(mu.full())
    if isinstance(mu, ScalarField):
        return spectral.mean(mu.full())
    return spectral.mean(np.asarray(mu))


def ddc_form_density(form: Form11) -> np.ndarray:
    """Density of dd^c(form) for n = 2 (a (2,2) form, so top degree).

    With H_jk = (1/pi) d_j dbar_k the density against omega_0^2 is
    (H_22 a11 + H_11 a22)/2 - H_re(Re a12) - H_im(Im a12).
    """
    g = form.grid
    if g.n != 2:
        raise GeometryError("dd^c of a (1,1)-form is top degree only for n = 2")
    sym = g.symbols
    shape = g.shape
    a11, a22, a12 = (np.broadcast_to(p, shape) for p in form.parts())
    re, im = sym.hess(0, 1)
    # combine in Fourier space so closed forms cancel mode by mode
    spec = 0.5 * spectral.rfft(a11) * sym.hess(1, 1)[0]
    spec += 0.5 * spectral.rfft(a22) * sym.hess(0, 0)[0]
    spec -= spectral.rfft(np.ascontiguousarray(a12.real)) * re
    spec -= spectral.rfft(np.ascontiguousarray(a12.imag)) * im
    return spectral.irfft(spec, shape)


def torsion_top(omega: Form11) -> TopDensity:
    """Density of 2n dd^c omega for n = 2.

    The companion term 4n^2 d omega ^ d^c omega has degree 6 > 4 on a
    surface and vanishes identically, so it is not returned.
    """
    if omega.grid.n != 2:
        raise GeometryError("torsion_top is defined for n = 2 only")
    return TopDensity(omega.grid, 4.0 * ddc_form_density(omega))


def closedness_residual(form: Form11) -> float:
    """sup |d_l a_jk - d_j a_lk|, zero iff the form is d-closed.

    Always zero for n = 1 (every (1,1)-form on a curve is closed).
    """
    g = form.grid
    if g.n == 1:
        return 0.0
    shape = g.shape
    sym = g.symbols
    worst = 0.0
    c = np.broadcast_to(form.coeff, (2, 2) + shape)
    # d/dz_l = (d/dx_l - i d/dy_l)/2, applied to real and imaginary parts
    def dz(arr, l):
        gx, gy = sym.grad(l)
        out = []
        for part in (np.ascontiguousarray(arr.real), np.ascontiguousarray(arr.imag)):
            F = spectral.rfft(part)
            out.append(0.5 * (spectral.irfft(F * gx, shape) - 1j * spectral.irfft(F * gy, shape)))
        return out[0] + 1j * out[1]

    for k in range(2):
        diff = dz(c[1, k], 0) - dz(c[0, k], 1)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def random_admissible(omega: Form11, seed: int, amplitude: float = 1.0,
                      margin: float = 0.05, modes: int | None = None,
                      decay: float = 2.0) -> ScalarField:
    """Reproducible band-limited omega-psh potential with sup = 0.

    Fourier coefficients on the cube |k|_inf <= modes are drawn from
    ``default_rng(seed)`` in a resolution-independent order, so the same
    continuous function is sampled on every grid that resolves it. The
    field is scaled down to the largest multiple with min eig(omega +
    dd^c phi) >= margin * m0, where m0 is the positivity margin of omega.
    Before scaling, sup|phi| is at most ``amplitude``; that bound comes
    from the coefficient l1 norm, not the grid maximum, so refinement
    samples the same function up to the continuous scale factor.
    """
    g = omega.grid
    m0 = omega.positivity_margin()
    if m0 <= 0:
        raise GeometryError("random_admissible needs a positive base form")
    if amplitude == 0:
        return ScalarField.zeros(g)
    K = g.res // 4 if modes is None else int(modes)
    if K < 1 or K > g.res // 4:
        raise GeometryError(f"modes must lie in [1, res/4], got {K}")
    d = 2 * g.n
    rng = np.random.default_rng(seed)
    side = 2 * K + 1
    coef = rng.standard_normal((side,) * d) + 1j * rng.standard_normal((side,) * d)
    ks = np.meshgrid(*([np.arange(-K, K + 1)] * d), indexing="ij")
    k2 = sum(k.astype(float) ** 2 for k in ks)
    coef *= (1.0 + k2) ** (-decay)
    coef.reshape(-1)[(side ** d) // 2] = 0.0
    # Re sum c_k e^{2 pi i k.x}: symmetrize, keep k_last >= 0, real inverse FFT
    herm = 0.5 * (coef + np.conj(coef[(slice(None, None, -1),) * d]))
    keep = (slice(None),) * (d - 1) + (slice(K, None),)
    spec = np.zeros(g.symbols.spec_shape, dtype=complex)
    idx = tuple(np.mod(k[keep], g.res) for k in ks[:-1]) + (ks[-1][keep],)
    spec[idx] = herm[keep]
    p = spectral.irfft(spec, g.shape) * g.size
    del spec
    # l1 norm of the coefficients bounds sup|p| and does not depend on res
    p /= max(float(np.sum(np.abs(herm))), 1e-300)
    p *= amplitude
    hp = spectral.hessian_parts(g.n, g.res, p)
    # exact largest scale keeping min eig >= margin * m0; it moves continuously
    # with the sampled minimum, so refinement cannot flip a discrete choice
    shifted = pw.add(omega.parts(), Form11.identity(g).parts(), -margin * m0)
    t = min(1.0, pw.psd_limit(shifted, hp) * (1 - 1e-12))
    phi = t * p
    return ScalarField(g, phi - np.max(phi))
