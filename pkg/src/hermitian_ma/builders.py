"""Named metric and right-hand-side builders used by the CLI and tests."""

from __future__ import annotations

import math

import numpy as np

from . import pointwise as pw
from . import spectral
from .grid import Form11, GeometryError, GridSpec, random_admissible
from .ma import ma_density


class BuilderError(ValueError):
    pass


# ------------------------------------------------------------------ metrics

def flat(grid: GridSpec, scale: float = 1.0) -> Form11:
    if scale <= 0:
        raise BuilderError("flat metric needs scale > 0")
    return Form11.identity(grid, scale)


def perturbed_diagonal(grid: GridSpec, amplitude: float = 0.1, offdiag: float = 0.0) -> Form11:
    """diag(1 + a cos 2pi x2, 1) for n = 2, (1 + a cos 2pi x1) for n = 1.

    For n = 2 the coefficient depends on the second complex coordinate, so
    the form is not closed. ``offdiag`` adds b e^{2 pi i y1} to a12.
    """
    if not 0 <= abs(amplitude) < 1:
        raise BuilderError("amplitude must satisfy |a| < 1")
    c = grid.coords()
    if grid.n == 1:
        return Form11.from_parts(grid, (1.0 + amplitude * np.cos(2 * math.pi * c[0]) + 0 * c[1],))
    if abs(offdiag) ** 2 >= (1 - abs(amplitude)) * 1.0:
        raise BuilderError("offdiag too large for a positive metric")
    a11 = 1.0 + amplitude * np.cos(2 * math.pi * c[2])
    a22 = np.ones((1,) * 4)
    a12 = offdiag * np.exp(2j * math.pi * c[1])
    return Form11.from_parts(grid, (a11, a22, a12))


def degenerate_beta(grid: GridSpec, depth: float = 1.0) -> Form11:
    """Closed beta = flat + dd^c(depth cos(2 pi x1) / pi).

    The first diagonal entry is 1 - depth cos 2pi x1, so depth = 1 makes
    beta vanish on {x1 = 0} (a point for n = 1, a real hypersurface for
    n = 2) while int beta^n = 1.
    """
    if not 0 <= depth <= 1:
        raise BuilderError("depth must lie in [0, 1]")
    c = grid.coords()
    a11 = 1.0 - depth * np.cos(2 * math.pi * c[0])
    if grid.n == 1:
        return Form11.from_parts(grid, (a11 + 0 * c[1],))
    return Form11.from_parts(grid, (a11 + 0 * c[1], np.ones((1,) * 4), np.zeros((1,) * 4, complex)))


METRICS = {"flat": flat, "perturbed-diagonal": perturbed_diagonal, "degenerate-beta": degenerate_beta}


def build_metric(grid: GridSpec, name: str, **params) -> Form11:
    try:
        fn = METRICS[name]
    except KeyError:
        raise BuilderError(f"unknown metric builder {name!r}; choose from {sorted(METRICS)}") from None
    try:
        return fn(grid, **params)
    except TypeError as exc:
        raise BuilderError(f"metric {name!r}: {exc}") from None


# ---------------------------------------------------------- right-hand sides

def smooth_density(omega: Form11, seed: int, amplitude: float = 1.0, modes: int = 4,
                   mass: float | None = None) -> np.ndarray:
    """Positive smooth f = exp(amplitude * u), u a seeded band-limited field.

    Scaled so int f omega^n = mass (default int omega^n).
    """
    g = omega.grid
    u = random_admissible(Form11.identity(g), seed, modes=modes).full()
    u = u / max(float(np.max(np.abs(u))), 1e-300)
    f = np.exp(amplitude * u)
    return _normalize(f, omega, mass)


def _normalize(f, omega, mass):
    g = omega.grid
    vol = np.broadcast_to(pw.det(omega.parts()), g.shape)
    target = spectral.mean(vol) if mass is None else float(mass)
    total = spectral.mean(f * vol)
    if total <= 0:
        raise BuilderError("right-hand side has zero mass")
    return f * (target / total)


def constant(omega: Form11, value: float = 1.0):
    if value <= 0:
        raise BuilderError("constant right-hand side must be positive")
    return np.full(omega.grid.shape, float(value)), {}


def manufactured(omega: Form11, base: Form11 | None = None, lam: float = 1.0, seed: int = 0,
                 amplitude: float = 0.5, modes: int = 4, margin: float = 0.05):
    """f = density((base + dd^c psi0)^n) e^{-lam psi0} / density(omega^n).

    Returns (f, {"psi0": ScalarField}); psi0 is the exact solution for
    lam > 0 and, for lam = 0, the solution up to a constant with c = 1.
    """
    base = base or omega
    if base.positivity_margin() <= 0:
        raise BuilderError("manufactured data needs a positive base form")
    psi0 = random_admissible(base, seed, amplitude=amplitude, margin=margin, modes=modes)
    vol = np.broadcast_to(pw.det(omega.parts()), omega.grid.shape)
    f = ma_density(base, psi0).full() * np.exp(-lam * psi0.full()) / vol
    return f, {"psi0": psi0}


def bump(omega: Form11, center=None, height: float = 4.0, width: float = 0.1,
         mass: float | None = None):
    """1 + height * periodic Gaussian bump, normalized to the given mass."""
    g = omega.grid
    center = center if center is not None else (0.5,) * (2 * g.n)
    if len(center) != 2 * g.n:
        raise BuilderError(f"bump center needs {2 * g.n} real coordinates")
    if width <= 0 or height < 0:
        raise BuilderError("bump needs width > 0 and height >= 0")
    s2 = sum((np.sin(math.pi * d) / math.pi) ** 2 for d in g.centered(center))
    f = 1.0 + height * np.exp(-s2 / (2 * width * width))
    return _normalize(np.broadcast_to(f, g.shape).copy(), omega, mass), {}


def vanishing_set(omega: Form11, center=None, radius: float = 0.15, ramp: float = 0.1,
                  mass: float | None = None):
    """f = 0 on a ball, rising smoothly (sin^2 ramp) to 1 outside radius + ramp."""
    g = omega.grid
    center = center if center is not None else (0.5,) * (2 * g.n)
    if len(center) != 2 * g.n:
        raise BuilderError(f"vanishing-set center needs {2 * g.n} real coordinates")
    if radius <= 0 or ramp <= 0 or radius + ramp >= 0.5:
        raise BuilderError("vanishing-set needs radius, ramp > 0 and radius + ramp < 1/2")
    r = np.sqrt(sum(d * d for d in g.centered(center)))
    t = np.clip((r - radius) / ramp, 0.0, 1.0)
    f = np.sin(0.5 * math.pi * t) ** 2
    return _normalize(np.broadcast_to(f, g.shape).copy(), omega, mass), {}


RHS = {"constant": constant, "manufactured": manufactured, "bump": bump, "vanishing-set": vanishing_set}


def build_rhs(omega: Form11, name: str, **params):
    """Returns (f values against omega^n, extras)."""
    try:
        fn = RHS[name]
    except KeyError:
        raise BuilderError(f"unknown rhs builder {name!r}; choose from {sorted(RHS)}") from None
    try:
        return fn(omega, **params)
    except TypeError as exc:
        raise BuilderError(f"rhs {name!r}: {exc}") from None
    except GeometryError as exc:
        raise BuilderError(f"rhs {name!r}: {exc}") from None
