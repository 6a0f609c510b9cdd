"""Relative-entropy diagnostics along fluid trajectories.

The age measure splits as ``nu_t = theta_t + mu_t``: ``theta_t`` is the
surviving initial mass and ``mu_t`` has density ``Gs(x) k_{t-x}`` on
``[0, t]``.  With ``nu*(dx) = Gs(x) dx`` the tracked quantity is

    r_t = R(mu_t || nu*) = int_0^t Gs(t - x) k_x log k_x dx,

which the solver's piecewise-constant ``k`` makes a finite sum of exact
cell integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, HazardRegime, classify_hazard
from .fluid import FluidTrajectory
from .measures import (
    FiniteMeasure,
    MeasureError,
    SurvivalWeighted,
    _common_step,
    _GL_W,
    _GL_X,
    _span,
    equilibrium,
    tv_distance,
)

BUSY = 1 - 1e-9


def xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def modulus_xlogx(delta, c_h):
    """Modulus of continuity of ``x log x`` on ``[0, c_h]``.

    ``x log x`` is convex, so increments over a fixed length are extreme at
    the two ends of the interval; that gives the closed form below.
    """
    d = np.minimum(np.asarray(delta, dtype=float), c_h)
    left = -xlogx(np.minimum(d, min(math.exp(-1), c_h)))
    d_right = np.minimum(d, max(c_h - math.exp(-1), 0.0))
    right = xlogx(c_h) - xlogx(c_h - d_right)
    return np.maximum(np.maximum(left, right), 0.0)


def _is_cellwise(P: FiniteMeasure, dist):
    return (
        not P.has_atoms
        and P.grid is None
        and not P.shifted
        and len(P.sw) == 1
        and P.sw[0].dist == dist
    )


def _cell_grid(P, Q, dx, x_max):
    step = _common_step(P, Q, dx)
    span = _span(P, Q, x_max)
    n = max(int(math.ceil(span / step)), 1)
    edges = step * np.arange(n + 1)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    wts = half[:, None] * _GL_W[None, :]
    return pts, wts


def rel_entropy(P: FiniteMeasure, Q: FiniteMeasure, dx=None, x_max=None):
    """``int log(dP/dQ) dP`` with ``0 log 0 = 0``; ``inf`` without absolute continuity."""
    if P.has_atoms:
        unmatched = [x for x in P.atom_x if not np.any(np.abs(Q.atom_x - x) < 1e-12)]
        if unmatched or not Q.has_atoms:
            return math.inf
        raise MeasureError("relative entropy with matched atoms is not supported")
    if P.mass() == 0:
        return 0.0
    if Q.has_atoms:
        raise MeasureError("reference measure must have a density")
    pts, wts = _cell_grid(P, Q, dx, x_max)
    p = P.density(pts.ravel()).reshape(pts.shape)
    q = Q.density(pts.ravel()).reshape(pts.shape)
    if np.any((p > 0) & (q <= 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(p > 0, p * np.log(p / np.where(q > 0, q, 1.0)), 0.0)
    tail = P.mass() - P.cdf(float(pts.max()))
    if tail > 1e-10 * P.mass():
        # mass beyond the grid: fall back to a wider window
        return rel_entropy(P, Q, dx, 2 * _span(P, Q, x_max))
    return float((integrand * wts).sum())


def pinsker_rhs(c, R):
    """``|c - 1| + sqrt(2 |R| / c + 2 |log c|)``; ``inf`` at ``c = 0``."""
    c = np.asarray(c, dtype=float)
    R = np.asarray(R, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(c - 1) + np.sqrt(2 * np.abs(R) / c + 2 * np.abs(np.log(c)))
    out = np.where(c > 0, out, np.inf)
    return float(out) if out.ndim == 0 else out


def pinsker_bound(P: FiniteMeasure, Q: FiniteMeasure, dx=None, x_max=None):
    c = P.mass()
    if c <= 0:
        raise ValueError("pinsker bound needs <1, P> > 0")
    return pinsker_rhs(c, rel_entropy(P, Q, dx, x_max))


def entropy_estimate_gap(f: FiniteMeasure, service: Distribution, regime=None, dx=None):
    """``[int h f log(f/f*) - z log z] - eps_h R(f || f*)`` with ``f* = Gs``.

    ``f`` is a sub-probability measure with a density.  Cellwise laws
    (survival-weighted on the service law) are evaluated exactly.
    """
    regime = regime or classify_hazard(service)
    if not regime.is_bounded_away:
        raise ValueError("estimate needs a hazard bounded away from 0 and infinity")
    if f.has_atoms:
        raise ValueError("f must have a density")
    if f.mass() > 1 + 1e-12:
        raise ValueError("f must have total mass <= 1")
    eps = regime.eps_h
    if _is_cellwise(f, service):
        hfl = z = R = 0.0
        sv, isv = service.survival, service.integrated_survival
        for part in f.sw:
            e = part.edges
            phi = part.weights
            dG = -np.diff(sv(e))
            dI = np.diff(isv(e))
            hfl += float(np.dot(xlogx(phi), dG))
            R += float(np.dot(xlogx(phi), dI))
            z += float(np.dot(phi, dG))
            if part.tail:
                hfl += float(xlogx(part.tail)) * sv(part.end)
                R += float(xlogx(part.tail)) * (service.mean - isv(part.end))
                z += part.tail * sv(part.end)
    else:
        star = equilibrium(service)
        pts, wts = _cell_grid(f, star, dx, None)
        x = pts.ravel()
        p = f.density(x).reshape(pts.shape)
        q = service.survival(x).reshape(pts.shape)
        h = service.hazard(x).reshape(pts.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(p > 0, np.log(p / q), 0.0)
        plog = np.where(p > 0, p * lg, 0.0)
        hfl = float((h * plog * wts).sum())
        R = float((plog * wts).sum())
        z = float((h * p * wts).sum())
    lhs = hfl - float(xlogx(z))
    return lhs - eps * R


@dataclass(frozen=True)
class EntropyTrace:
    t: np.ndarray
    r: np.ndarray
    theta_mass: np.ndarray
    mu_mass: np.ndarray
    theta_h: np.ndarray
    upsilon: np.ndarray | None
    L: np.ndarray
    tv_bound: np.ndarray
    tv_actual: np.ndarray | None
    B: np.ndarray
    regime: HazardRegime
    c_r: float
    c_lip: float
    L_sensitivity: float

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def columns(self):
        nan = np.full_like(self.t, np.nan)
        return {
            "t": self.t,
            "r": self.r,
            "theta_mass": self.theta_mass,
            "mu_mass": self.mu_mass,
            "upsilon": self.upsilon if self.upsilon is not None else nan,
            "L": self.L,
            "tv_bound": self.tv_bound,
            "tv_actual": self.tv_actual if self.tv_actual is not None else nan,
        }


def entropy_trace(traj: FluidTrajectory, regime=None) -> EntropyTrace:
    service = traj.cfg.service
    regime = regime or classify_hazard(service)
    n, dt = traj.n, traj.dt
    Is = service.integrated_survival(dt * np.arange(n + 1))
    A1 = np.concatenate([[0.0], np.diff(Is)])
    k = traj.k
    phi = xlogx(k)
    r = np.convolve(phi, A1)[: n + 1]
    mu_mass = np.convolve(k, A1)[: n + 1]
    # exact L1 distance between mu_t and nu*: cells |k - 1| plus unreached ages
    tv_actual = np.convolve(np.abs(k - 1.0), A1)[: n + 1] + (service.mean - Is)
    tv_bound = pinsker_rhs(mu_mass, r)
    upsilon = modulus_xlogx(traj.theta_h, regime.c_h) if regime.is_bounded_away else None

    def busy_time(threshold):
        busy = (traj.B[:-1] >= threshold).astype(float)
        return np.concatenate([[0.0], np.cumsum(busy) * dt])

    L = busy_time(BUSY)
    return EntropyTrace(
        t=traj.t,
        r=r,
        theta_mass=traj.theta_mass,
        mu_mass=mu_mass,
        theta_h=traj.theta_h,
        upsilon=upsilon,
        L=L,
        tv_bound=tv_bound,
        tv_actual=tv_actual,
        B=traj.B,
        regime=regime,
        c_r=float(np.max(np.abs(r))),
        c_lip=float(2 * np.max(np.abs(phi), initial=0.0)),
        L_sensitivity=float(np.max(np.abs(busy_time(1 - 1e-6) - L))),
    )


def r_density_form(traj: FluidTrajectory, j) -> float:
    """``R(mu_t || nu*)`` by quadrature of the measures themselves (cross-check)."""
    mu = traj.mu_at(j)
    if mu.mass() == 0:
        return 0.0
    return rel_entropy(mu, equilibrium(traj.cfg.service), dx=traj.dt)


def tv_mu_nu_star(traj: FluidTrajectory, j) -> float | None:
    return tv_distance(traj.mu_at(j), equilibrium(traj.cfg.service), dx=traj.dt)


@dataclass(frozen=True)
class EnvelopeReport:
    s: float
    t: float
    lhs: float
    rhs: float
    slack: float
    applicable: bool

    @property
    def margin(self):
        return self.rhs + self.slack - self.lhs

    @property
    def passed(self):
        return (not self.applicable) or self.margin >= 0


def envelope_check(trace: EntropyTrace, s, t, slack=1e-4) -> EnvelopeReport:
    """``r_t <= c_r exp(-eps_h (L(t) - L(s))) + int_s^t Upsilon`` at a busy time ``t > s``."""
    if trace.upsilon is None:
        raise ValueError("envelope needs a hazard bounded away from 0 and infinity")
    dt = trace.dt
    i, j = int(round(s / dt)), int(round(t / dt))
    if not j > i:
        raise ValueError("need t > s")
    applicable = bool(trace.B[j] >= BUSY)
    ups = trace.upsilon[i : j + 1]
    integral = float(np.sum(0.5 * dt * (ups[:-1] + ups[1:])))
    rhs = trace.c_r * math.exp(-trace.regime.eps_h * (trace.L[j] - trace.L[i])) + integral
    return EnvelopeReport(float(s), float(t), float(trace.r[j]), rhs, slack, applicable)


def theta_decay_margin(trace: EntropyTrace) -> float:
    """``min_t [c_h exp(-eps_h t) - <h, theta_t>]`` (nonnegative when the bound holds)."""
    reg = trace.regime
    bound = reg.c_h * np.exp(-reg.eps_h * trace.t)
    return float(np.min(bound - trace.theta_h))


def lipschitz_margin(trace: EntropyTrace) -> float:
    """``min_j [c_lip dt - |r_{j+1} - r_j|]``."""
    return float(np.min(trace.c_lip * trace.dt - np.abs(np.diff(trace.r))))
