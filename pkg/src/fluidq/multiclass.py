"""Multiclass fluid model under nonpreemptive fixed priority.

Classes share one service law and renege exponentially at rates
``theta_i``; class 1 has the highest priority.  Each step computes the
aggregate admission exactly as the single-class solver does and hands it
out in priority order: class ``i`` takes ``min(remaining, Q_i + lam_i dt -
dR_i)``, so a lower class is only admitted once every higher queue has
been emptied within the step.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .distributions import Distribution, Exponential, make_distribution
from .errors import ConfigError, NumericalAbort
from .fluid import TOL_STATE, FluidConfig, _shifted_cells, _sw_measure, solve
from .measures import FiniteMeasure, SurvivalWeighted, equilibrium, survival_weights, zero

BORDERLINE_TOL = 1e-12


def rho_q(lam, theta):
    """Limit service shares ``rho`` and queues ``q``.

    ``sum_{i<=j} rho_i = min(sum_{i<=j} lam_i, 1)`` and
    ``q_i = (lam_i - rho_i) / theta_i``.
    """
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(lam <= 0) or np.any(theta <= 0):
        raise ValueError("rates must be positive")
    capped = np.minimum(np.cumsum(lam), 1.0)
    rho = np.diff(np.concatenate([[0.0], capped]))
    return rho, (lam - rho) / theta


def borderline_classes(lam, tol=BORDERLINE_TOL):
    """Indices ``j`` with ``sum_{i<=j} lam_i = 1`` (slow, non-exponential approach)."""
    return [j for j, c in enumerate(np.cumsum(lam)) if abs(c - 1.0) < tol]


@dataclass(frozen=True)
class MulticlassConfig:
    lam: tuple
    theta: tuple
    service: Distribution
    x0: tuple | None = None
    nu0: tuple | None = None
    dt: float = 0.01
    horizon: float = 100.0
    snap_every: float | None = None

    @property
    def J(self):
        return len(self.lam)

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def initial(self):
        J = self.J
        x0 = tuple(self.x0) if self.x0 is not None else (0.0,) * J
        nu0 = tuple(self.nu0) if self.nu0 is not None else tuple(zero() for _ in range(J))
        return x0, nu0

    def validate(self):
        J = self.J
        if J < 1:
            raise ConfigError("lambda", "need at least one class")
        if len(self.theta) != J:
            raise ConfigError("theta", f"expected {J} reneging rates")
        for i in range(J):
            if not (self.lam[i] > 0 and math.isfinite(self.lam[i])):
                raise ConfigError(f"lambda[{i}]", "must be positive")
            if not (self.theta[i] > 0 and math.isfinite(self.theta[i])):
                raise ConfigError(f"theta[{i}]", "must be positive")
        if not self.dt > 0:
            raise ConfigError("numerics.dt", "time step must be positive")
        if not self.horizon > 0:
            raise ConfigError("numerics.horizon", "horizon must be positive")
        if abs(self.service.mean - 1.0) > 1e-8:
            raise ConfigError("service", "service law must have mean 1")
        x0, nu0 = self.initial()
        if len(x0) != J or len(nu0) != J:
            raise ConfigError("initial", f"expected {J} initial masses and measures")
        masses = [m.mass() for m in nu0]
        for i in range(J):
            if x0[i] < masses[i] - TOL_STATE:
                raise ConfigError(f"initial.x0[{i}]", "x0 below the mass in service")
        b, x = sum(masses), sum(x0)
        if abs((1 - b) - max(1 - x, 0.0)) > TOL_STATE:
            raise ConfigError("initial.nu0", "aggregate state violates 1 - <1, nu> = (1 - X)^+")
        return self


@dataclass(frozen=True)
class MulticlassTrajectory:
    cfg: MulticlassConfig
    t: np.ndarray
    X: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    D: np.ndarray
    R: np.ndarray
    k: np.ndarray
    dep_rate: np.ndarray
    rho: np.ndarray
    q: np.ndarray
    nu0_cells: tuple = field(repr=False)

    @property
    def n(self):
        return len(self.t) - 1

    @property
    def dt(self):
        return self.cfg.dt

    # aggregates
    @property
    def X_tot(self):
        return self.X.sum(axis=0)

    @property
    def B_tot(self):
        return self.B.sum(axis=0)

    @property
    def Q_tot(self):
        return self.Q.sum(axis=0)

    @property
    def k_tot(self):
        return self.k.sum(axis=0)

    def nu_at(self, i, j) -> FiniteMeasure:
        w = self.k[i, :j][::-1].copy()
        new = FiniteMeasure(sw=(SurvivalWeighted(self.cfg.service, self.dt, w),))
        return self.nu0_cells[i].shift(j * self.dt, self.cfg.service) + new

    def check_invariants(self):
        dt = self.dt
        theta = np.asarray(self.cfg.theta)[:, None]
        lam = np.asarray(self.cfg.lam)[:, None]
        left_sum = np.concatenate([np.zeros((self.cfg.J, 1)), np.cumsum(self.Q[:, :-1], axis=1) * dt], axis=1)
        idle = 1 - self.B_tot
        higher = np.cumsum(self.Q, axis=0) - self.Q  # sum_{j<i} Q_j
        viol_start = (higher[:, :-1] > 1e-6) & (self.k > 1e-9)
        viol_end = (higher[:, 1:] > 1e-6) & (self.k > 1e-9)
        return {
            "renege_integral": float(np.max(np.abs(self.R - theta * left_sum))),
            "idleness": float(np.max(np.abs(idle - np.maximum(1 - self.X_tot, 0)))),
            "class_balance": float(
                np.max(np.abs(self.X[:, :1] + lam * self.t - (self.X + self.D + self.R)))
            ),
            "queue_balance": float(
                np.max(np.abs(self.Q[:, :1] + lam * self.t - (self.Q + self.K + self.R)))
            ),
            "x_split": float(np.max(np.abs(self.X - self.B - self.Q))),
            "priority_violations_start": int(viol_start.sum()),
            "priority_violations_end": int(viol_end.sum()),
        }

    def limit_errors(self, j=None):
        j = self.n if j is None else j
        return np.abs(self.Q[:, j] - self.q)

    def bl_errors(self, j=None, **kw):
        from .measures import bl_distance

        j = self.n if j is None else j
        star = equilibrium(self.cfg.service)
        return np.array(
            [bl_distance(self.nu_at(i, j), star.scale(self.rho[i]), dx=self.dt, **kw) for i in range(self.cfg.J)]
        )

    def to_csv(self, path):
        J = self.cfg.J
        names = ["t"]
        cols = [self.t]
        for base, arr in (("X", self.X), ("B", self.B), ("Q", self.Q), ("K", self.K),
                          ("D", self.D), ("R", self.R)):
            for i in range(J):
                names.append(f"{base}_{i + 1}")
                cols.append(arr[i])
        kg = np.concatenate([self.k, self.k[:, -1:]], axis=1)
        for i in range(J):
            names.append(f"k_{i + 1}")
            cols.append(kg[i])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in range(self.n + 1):
                w.writerow([repr(float(c[r])) for c in cols])

    def summary(self, q_tol=1e-3, bl_tol=5e-3):
        err = self.limit_errors()
        bl = self.bl_errors()
        return {
            "rho": self.rho.tolist(),
            "q": self.q.tolist(),
            "converged": bool(err.max() < q_tol and bl.max() < bl_tol),
            "sup_errors": {"queue": float(err.max()), "bl": float(bl.max())},
            "tolerances": {"queue": q_tol, "bl": bl_tol},
        }


def solve_multiclass(cfg: MulticlassConfig, backend=None) -> MulticlassTrajectory:
    cfg.validate()
    J, n, dt = cfg.J, cfg.steps, cfg.dt
    service = cfg.service
    x0, nu0 = cfg.initial()
    thm = np.zeros((J, n + 1))
    thh = np.zeros((J, n + 1))
    cells = []
    for i in range(J):
        ax, am, w, tail = survival_weights(nu0[i], service, dt)
        thm[i], thh[i] = _shifted_cells(ax, am, w, tail, service, dt, n)
        cells.append(_sw_measure(service, dt, ax, am, w, tail))
    Is = service.integrated_survival(dt * np.arange(n + 1))
    Gs = service.cdf(dt * np.arange(n + 1))
    A1 = np.concatenate([[0.0], np.diff(Is)])
    Ah = np.concatenate([[0.0], np.diff(Gs)])
    B0 = thm[:, 0].copy()
    Q0 = np.maximum(np.asarray(x0, float) - B0, 0.0)
    lam = np.asarray(cfg.lam, dtype=float)
    theta = np.asarray(cfg.theta, dtype=float)
    B, Q, K, D, R, k, dep, bad = kernels.multiclass_kernel(
        n, dt, lam, theta, B0, Q0, A1, Ah, thm, thh, backend=backend
    )
    if bad >= 0:
        raise NumericalAbort(f"nonfinite state at t = {(bad + 1) * dt:g}")
    rho, q = rho_q(lam, theta)
    return MulticlassTrajectory(
        cfg, dt * np.arange(n + 1), B + Q, B, Q, K, D, R, k, dep, rho, q, tuple(cells)
    )


@dataclass(frozen=True)
class AggregateReport:
    deviation: float
    k_lambda_error: float
    k_dep_error: float
    tolerance: float

    @property
    def passed(self):
        return self.deviation <= self.tolerance


def aggregate_consistency(traj: MulticlassTrajectory, backend=None, tol=5e-8) -> AggregateReport:
    """Compare the class sums with the single-class solver driven by the
    realized total reneging rate, and check the aggregate entry-rate rule."""
    cfg = traj.cfg
    x0, nu0 = cfg.initial()
    nu_tot = nu0[0]
    for m in nu0[1:]:
        nu_tot = nu_tot + m
    lam_tot = float(sum(cfg.lam))
    q0 = float(traj.Q_tot[0])
    dummy = make_distribution("exponential", {"rate": 1.0}, "patience")
    agg_cfg = FluidConfig(
        lam_tot, cfg.service, dummy, x0=float(sum(x0)), nu0=nu_tot,
        eta0=equilibrium(dummy, max(q0, 1.0)), dt=cfg.dt, horizon=cfg.horizon,
    )
    theta = np.asarray(cfg.theta)[:, None]
    override = (theta * traj.Q).sum(axis=0)
    agg = solve(agg_cfg, backend=backend, renege_override=override)
    dev = 0.0
    for mine, theirs in (
        (traj.X_tot, agg.X), (traj.B_tot, agg.B), (traj.K.sum(axis=0), agg.K),
        (traj.D.sum(axis=0), agg.D), (traj.R.sum(axis=0), agg.R),
    ):
        dev = max(dev, float(np.max(np.abs(mine - theirs))))
    dev = max(dev, float(np.max(np.abs(traj.k_tot - agg.k))))
    # entry-rule check off the switching set
    B = traj.B_tot
    k = traj.k_tot
    idle = (B[:-1] < 1 - 1e-6) & (B[1:] < 1 - 1e-6)
    busy = (B[:-1] >= 1 - 1e-9) & (B[1:] >= 1 - 1e-9) & (traj.Q_tot[:-1] > 1e-6)
    k_lam = float(np.max(np.abs(k[idle] - lam_tot), initial=0.0))
    dD = np.diff(traj.D.sum(axis=0)) / cfg.dt
    k_dep = float(np.max(np.abs(k[busy] - dD[busy]), initial=0.0))
    return AggregateReport(dev, k_lam, k_dep, tol)


def from_exponential_patience(patience: list[Distribution]):
    """Reneging rates from patience laws; only exponential laws are allowed."""
    rates = []
    for i, d in enumerate(patience):
        if not isinstance(d, Exponential):
            raise ConfigError(f"patience[{i}]", "multiclass model needs exponential reneging")
        rates.append(d.rate)
    return tuple(rates)


def summary_json(traj: MulticlassTrajectory, **kw):
    return json.dumps(traj.summary(**kw))
