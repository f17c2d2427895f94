"""Normalized Chern-Ricci flow, potential form.

With the reference path w_t = e^{-t} w0 + (1 - e^{-t}) beta the metric
w(t) = w_t + dd^c phi(t) solves dw/dt = -Ric(w) - w exactly when

    d phi / dt = log[det(w_t + H(phi)) / Omega] - phi,      phi(0) = 0,

Ric being -(i) d dbar log of the volume density. The steady state is
(beta + dd^c phi)^n = e^phi Omega.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import pointwise as pw
from . import spectral
from .grid import Form11, GeometryError, ScalarField, TopDensity, closedness_residual, ddc
from .solvers import CLOSED_TOL, SolverConfig, _Problem

PATHS = ("exponential", "linear")


@dataclass
class FlowConfig:
    dt_init: float = 1e-3
    dt_max: float = 0.05
    dt_min: float = 1e-9
    t_end: float = 20.0
    margin: float = 1e-8
    cadence: int = 20
    err_tol: float = 1e-4
    path: str = "exponential"
    path_time: float = 5.0
    stability: float = 1.8

    def __post_init__(self):
        if not 0 < self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_init <= dt_max")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.path not in PATHS:
            raise ValueError(f"path must be one of {PATHS}")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    inf: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    margin: list = field(default_factory=list)
    steps: int = 0
    rejected: int = 0
    wall_time: float = 0.0
    aborted: str | None = None

    def record(self, t, phi, res, margin):
        if self.times and t <= self.times[-1]:
            return
        self.times.append(float(t))
        self.sup.append(float(np.max(phi)))
        self.inf.append(float(np.min(phi)))
        self.residual.append(float(res))
        self.margin.append(float(margin))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "sup", "inf", "residual", "margin"])
            for row in zip(self.times, self.sup, self.inf, self.residual, self.margin):
                w.writerow([repr(v) for v in row])

    def monotone_after(self, transient: float = 1.0, tol: float = 1e-12) -> bool:
        """Steady residual non-increasing for t >= transient (until it hits roundoff)."""
        r = [v for t, v in zip(self.times, self.residual) if t >= transient]
        for a, b in zip(r, r[1:]):
            if b > a * (1 + 1e-9) + tol:
                return False
        return True

    def to_dict(self, timing=True):
        d = {k: getattr(self, k) for k in ("times", "sup", "inf", "residual", "margin",
                                             "steps", "rejected", "aborted")}
        if timing:
            d["wall_time"] = self.wall_time
        return d


class FlowError(RuntimeError):
    def __init__(self, message, phi, trace):
        super().__init__(message)
        self.phi = phi
        self.trace = trace


def path_weight(t: float, cfg: FlowConfig) -> float:
    """Weight s(t) of beta in w_t = (1 - s) w0 + s beta."""
    if cfg.path == "exponential":
        return -math.expm1(-t)
    return min(t / cfg.path_time, 1.0)


def reference_form(omega0: Form11, beta: Form11, t: float, cfg: FlowConfig) -> Form11:
    s = path_weight(t, cfg)
    return omega0 * (1.0 - s) + beta * s


def metric_at(omega0, beta, phi: ScalarField, t: float, cfg: FlowConfig | None = None) -> Form11:
    """w(t) = w_t + dd^c phi(t)."""
    return reference_form(omega0, beta, t, cfg or FlowConfig()) + ddc(phi)


def _kmax2(grid):
    k = math.pi * grid.res
    return 2 * grid.n * k * k / (4.0 * math.pi)


def chern_ricci_flow(omega0: Form11, beta: Form11, omega_vol: TopDensity, cfg: FlowConfig | None = None,
                     phi0: ScalarField | None = None):
    """Integrate the potential flow to cfg.t_end; returns (phi, FlowTrace).

    Forward Euler. dt is capped by the explicit stability limit of the
    linearized operator, by a local error estimate from consecutive
    velocities, and halved whenever w_t + dd^c phi loses positivity.
    """
    cfg = cfg or FlowConfig()
    g = omega0.grid
    if beta.grid != g or omega_vol.grid != g:
        raise GeometryError("grid mismatch")
    if not omega0.is_positive():
        raise GeometryError("omega0 must be positive")
    if closedness_residual(beta) > CLOSED_TOL * max(1.0, float(np.max(np.abs(beta.coeff)))):
        raise GeometryError("beta must be closed")
    if not beta.semipositive:
        raise GeometryError("beta must be semipositive")
    vb = spectral.mean(np.broadcast_to(pw.det(beta.parts()), g.shape))
    if vb <= 0:
        raise GeometryError("beta has zero volume")
    ov = np.broadcast_to(omega_vol.density, g.shape)
    if float(np.min(ov)) <= 0:
        raise GeometryError("Omega must be a positive density")
    v0 = spectral.mean(np.broadcast_to(pw.det(omega0.parts()), g.shape))
    if abs(spectral.mean(ov) - v0) > 1e-8 * v0:
        raise GeometryError("Omega must have the same total volume as omega0")
    t0 = time.perf_counter()
    log_rhs = np.log(ov)
    scfg = SolverConfig(positivity_margin=cfg.margin)
    w0p, bp = omega0.parts(), beta.parts()
    k2 = _kmax2(g)

    def velocity(t, phi):
        s = path_weight(t, cfg)
        base = pw.add(pw.scale(w0p, 1.0 - s), bp, s)
        return _Problem(g, base, 1.0, log_rhs, scfg).evaluate(phi)

    steady = _Problem(g, bp, 1.0, log_rhs, scfg)

    def steady_residual(phi):
        st = steady.evaluate(phi)
        return math.inf if st is None else float(np.max(np.abs(st[0])))

    trace = FlowTrace()
    phi = np.zeros(g.shape) if phi0 is None else np.array(np.broadcast_to(phi0.values, g.shape), float)
    t = 0.0
    st = velocity(t, phi)
    if st is None:
        raise FlowError("initial metric is not positive", ScalarField(g, phi), trace)
    F, _, margin = st
    trace.record(t, phi, steady_residual(phi), margin)
    dt = cfg.dt_init
    F_prev = None
    step = 0
    while t < cfg.t_end * (1 - 1e-14):
        dt_stab = cfg.stability / (1.0 + k2 / margin)
        dt = min(dt, cfg.dt_max, dt_stab, cfg.t_end - t)
        if dt < cfg.dt_min:
            trace.aborted = f"dt fell below {cfg.dt_min:g} at t={t:.6g}"
            trace.wall_time = time.perf_counter() - t0
            raise FlowError(trace.aborted, ScalarField(g, phi), trace)
        new = phi + dt * F
        st = velocity(t + dt, new)
        if st is None:
            trace.rejected += 1
            dt *= 0.5
            continue
        phi, t = new, t + dt
        F_prev, (F, _, margin) = F, st
        step += 1
        # Euler local error ~ dt/2 |F_{k+1} - F_k|
        err = 0.5 * dt * float(np.max(np.abs(F - F_prev)))
        if err > cfg.err_tol:
            dt *= max(0.25, 0.9 * math.sqrt(cfg.err_tol / err))
        else:
            dt *= 1.5
        if step % cfg.cadence == 0 or t >= cfg.t_end * (1 - 1e-14):
            trace.record(t, phi, steady_residual(phi), margin)
    trace.steps = step
    trace.wall_time = time.perf_counter() - t0
    return ScalarField(g, phi), trace
