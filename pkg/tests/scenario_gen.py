"""Random admissible fluid scenarios for property and acceptance tests."""
from __future__ import annotations

import numpy as np

from fluidq.distributions import make_distribution
from fluidq.fluid import FluidConfig
from fluidq.measures import equilibrium


def random_law(rng, role):
    fam = rng.choice(["exponential", "erlang", "hyperexponential", "lognormal", "weibull", "uniform"])
    if fam == "exponential":
        return make_distribution(fam, {"rate": float(rng.uniform(0.5, 2))}, role)
    if fam == "erlang":
        return make_distribution(fam, {"k": int(rng.integers(2, 4)), "rate": float(rng.uniform(1, 3))}, role)
    if fam == "hyperexponential":
        p = float(rng.uniform(0.2, 0.8))
        rates = [float(rng.uniform(0.3, 1)), float(rng.uniform(1.5, 4))]
        return make_distribution(fam, {"probs": [p, 1 - p], "rates": rates}, role)
    if fam == "lognormal":
        return make_distribution(fam, {"mu": float(rng.uniform(-0.5, 0.5)), "sigma": float(rng.uniform(0.3, 1.0))}, role)
    if fam == "weibull":
        return make_distribution(fam, {"shape": float(rng.uniform(0.7, 3)), "scale": float(rng.uniform(0.5, 2))}, role)
    return make_distribution(fam, {"low": 0.0, "high": float(rng.uniform(1, 4))}, role)


def random_config(rng, dt=0.02, horizon=10.0) -> FluidConfig:
    """Empty start, a partially busy start, or a saturated start with a queue."""
    service = random_law(rng, "service")
    patience = random_law(rng, "patience")
    lam = float(rng.uniform(0.3, 2.5))
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return FluidConfig(lam, service, patience, dt=dt, horizon=horizon)
    if kind == 1:
        c = float(rng.uniform(0.2, 1.0))
        return FluidConfig(lam, service, patience, x0=c, nu0=equilibrium(service, c),
                           dt=dt, horizon=horizon)
    q = float(rng.uniform(0.0, 0.5)) * patience.mean
    eta_coef = q / patience.mean + float(rng.uniform(0.0, 1.0))
    return FluidConfig(lam, service, patience, x0=1.0 + q, nu0=equilibrium(service, 1.0),
                       eta0=equilibrium(patience, eta_coef), dt=dt, horizon=horizon)


def random_configs(seed, count, **kw):
    master = np.random.default_rng(seed)
    return [random_config(np.random.default_rng(int(master.integers(1 << 62))), **kw) for _ in range(count)]


def random_multiclass(rng, dt=0.02, horizon=10.0):
    """J <= 4 classes, empty or saturated start with per-class queues."""
    from fluidq.multiclass import MulticlassConfig

    J = int(rng.integers(1, 5))
    service = random_law(rng, "service")
    lam = tuple(float(v) for v in rng.uniform(0.05, 1.0, J))
    theta = tuple(float(v) for v in rng.uniform(0.3, 3.0, J))
    if rng.integers(0, 2) == 0:
        return MulticlassConfig(lam, theta, service, dt=dt, horizon=horizon)
    w = rng.dirichlet(np.ones(J))
    q = rng.uniform(0.0, 0.5, J)
    nu0 = tuple(equilibrium(service, float(wi)) for wi in w)
    x0 = tuple(float(wi + qi) for wi, qi in zip(w, q))
    return MulticlassConfig(lam, theta, service, x0=x0, nu0=nu0, dt=dt, horizon=horizon)
