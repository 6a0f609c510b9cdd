"""Invariant states and the fixed-point set of the fluid dynamics.

With ``nu*(dx) = Gs(x) dx`` and ``eta*(dx) = Gr(x) dx`` the invariant states
are ``(x, (lam ^ 1) nu*, lam eta*)`` where ``x = lam`` below capacity and
otherwise any ``x`` with ``G_r(a(x)) = (lam - 1)/lam``, ``a(x)`` being the
``(x - 1)``-quantile of ``lam eta*``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution
from .errors import ConfigError
from .fluid import FluidConfig
from .measures import FiniteMeasure, equilibrium

ROOT_TOL = 1e-8
# CDF values within this of the level count as hitting it (plateaus are
# computed with roundoff)
LEVEL_TOL = 1e-12
_BISECT = 200


@dataclass(frozen=True)
class InvariantState:
    lam: float
    x_star: float
    nu_component: FiniteMeasure
    eta_component: FiniteMeasure
    x_l: float
    x_r: float
    unique: bool

    def to_config(self, service, patience, dt=0.01, horizon=50.0, **kw) -> FluidConfig:
        return FluidConfig(
            self.lam, service, patience, x0=self.x_star, nu0=self.nu_component,
            eta0=self.eta_component, dt=dt, horizon=horizon, **kw,
        )

    def summary(self):
        return {
            "lambda": self.lam,
            "x_star": self.x_star,
            "x_l": self.x_l,
            "x_r": self.x_r,
            "unique": self.unique,
            "nu_mass": self.nu_component.mass(),
            "eta_mass": self.eta_component.mass(),
        }

    def to_json(self):
        return json.dumps(self.summary())


def _bisect(pred, lo, hi):
    """Smallest point in ``[lo, hi]`` where the monotone predicate turns true."""
    if pred(lo):
        return lo
    for _ in range(_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _largest_false(pred, lo, hi):
    """Largest point in ``[lo, hi]`` where the monotone predicate is still false."""
    if pred(hi) is False:
        return hi
    for _ in range(_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return lo


def _age_for_queue(q, lam, patience):
    """``(F^{lam eta*})^{-1}(q)``: the age ``a`` with ``lam I_r(a) = q``."""
    if q <= 0:
        return 0.0
    mass = lam * patience.mean
    if q >= mass:
        return patience.support_end if math.isfinite(patience.support_end) else math.inf
    hi = patience.mean
    while lam * patience.integrated_survival(hi) < q:
        hi *= 2.0
    return _bisect(lambda a: lam * patience.integrated_survival(a) >= q, 0.0, hi)


def fixed_point_map(x, lam, patience):
    """``G_r((F^{lam eta*})^{-1}((x-1)^+))``, nondecreasing and continuous in ``x``."""
    a = _age_for_queue(max(x - 1.0, 0.0), lam, patience)
    return 1.0 if math.isinf(a) else float(patience.cdf(a))


def _root_interval(level, patience):
    """``[a_l, a_r]``: ages where ``G_r`` equals ``level``.

    Level hits are found with slack ``LEVEL_TOL``; a bracket wider than
    ``ROOT_TOL`` only counts as a plateau if the density vanishes inside it,
    otherwise an exact bisection collapses it to one root.
    """
    end = patience.support_end
    hi = end if math.isfinite(end) else float(patience.quantile(1 - 1e-15))
    cdf = lambda a: float(patience.cdf(a))  # noqa: E731
    a_l = _bisect(lambda a: cdf(a) >= level - LEVEL_TOL, 0.0, hi)
    a_r = max(_largest_false(lambda a: cdf(a) > level + LEVEL_TOL, 0.0, hi), a_l)
    if a_r - a_l < ROOT_TOL:
        return a_l, a_r
    probes = a_l + (a_r - a_l) * np.linspace(0.05, 0.95, 19)
    flat = probes[np.asarray(patience.density(probes)) <= 0.0]
    if len(flat) == 0:
        a = _bisect(lambda a: cdf(a) >= level, a_l, a_r)
        return a, a
    # sharpen the slack-based edges to where the density actually vanishes
    zero = lambda a: float(patience.density(a)) <= 0.0  # noqa: E731
    a_l = _bisect(zero, a_l, float(flat[0]))
    a_r = _largest_false(lambda a: not zero(a), float(flat[-1]), a_r)
    return a_l, a_r


def invariant_state(lam, service: Distribution, patience: Distribution) -> InvariantState:
    if not (lam > 0 and math.isfinite(lam)):
        raise ConfigError("lambda", "arrival rate must be positive")
    nu = equilibrium(service, min(lam, 1.0))
    eta = equilibrium(patience, lam)
    if lam < 1:
        return InvariantState(lam, lam, nu, eta, lam, lam, True)
    a_l, a_r = _root_interval((lam - 1.0) / lam, patience)
    x_l = 1.0 + lam * float(patience.integrated_survival(a_l))
    x_r = 1.0 + lam * float(patience.integrated_survival(a_r))
    unique = (x_r - x_l) < ROOT_TOL
    # on a plateau any point of [x_l, x_r] is a fixed point; report the left end
    return InvariantState(lam, x_l, nu, eta, x_l, x_r, unique)


def uniqueness_check(lam, patience: Distribution) -> bool:
    """True iff ``G_r(a) = (lam - 1)/lam`` has a single root."""
    if not lam > 1:
        raise ValueError("uniqueness check needs lambda > 1")
    a_l, a_r = _root_interval((lam - 1.0) / lam, patience)
    return (a_r - a_l) < ROOT_TOL
