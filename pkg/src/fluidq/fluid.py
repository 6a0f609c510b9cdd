"""Single-class fluid model of the many-server queue with reneging.

State: total mass ``X``, age measure ``nu_t`` of jobs in service and
potential-queue measure ``eta_t``.  Closed forms give both measures from
the initial data and the entry-rate history ``k``::

    <psi, eta_t> = int psi(x+t) Gr(x+t)/Gr(x) eta0(dx) + lam int_0^t psi(s) Gr(s) ds
    <psi, nu_t>  = int psi(x+t) Gs(x+t)/Gs(x) nu0(dx) + int_0^t psi(t-s) Gs(t-s) k(s) ds

with ``Gs``, ``Gr`` the service and patience survival functions.

The solver treats ``k`` as constant on each step and evaluates the history
integrals with exact per-cell integrals of the service survival, so
``B = <1, nu>`` and the balances ``Q(0) + lam t = Q + K + R`` and
``X(0) + lam t = X + D + R`` hold to roundoff.  Per step:

1. fix the mass ``C`` still in service at the end of the step among jobs
   already there;
2. queue reneging ``dR = min(renege_rate dt, Q)``;
3. admit ``dK = clip(fill, 0, Q + lam dt - dR)`` where ``fill`` is the entry
   that would bring ``B`` back to 1.

Admitting as much as capacity allows is the non-idling rule; its three
regimes reproduce ``k = lam`` (idle servers), ``k = <h, nu>`` (busy servers,
positive queue) and the boundary clamp.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .distributions import Distribution, Exponential
from .errors import ConfigError, NumericalAbort
from .measures import (
    FiniteMeasure,
    MeasureError,
    SurvivalWeighted,
    TestFunction,
    as_test_function,
    hazard_fn,
    inverse_cdf,
    survival_weights,
    zero,
)

TOL_STATE = 1e-8
QUAD_TOL = 1e-8
SHIFT_TOL = 5 * QUAD_TOL

CSV_COLUMNS = ("t", "X", "B", "Q", "K", "D", "R", "S", "k", "dep_rate", "renege_rate")


@dataclass(frozen=True)
class FluidConfig:
    lam: float
    service: Distribution
    patience: Distribution
    x0: float = 0.0
    nu0: FiniteMeasure = field(default_factory=zero)
    eta0: FiniteMeasure = field(default_factory=zero)
    dt: float = 0.01
    horizon: float = 30.0
    snap_every: float | None = None

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def validate(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError("lambda", "arrival rate must be positive and finite")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("numerics.dt", "time step must be positive")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError("numerics.horizon", "horizon must be positive")
        if abs(self.horizon / self.dt - self.steps) > 1e-6 * max(self.steps, 1):
            raise ConfigError("numerics.horizon", "horizon must be a multiple of dt")
        for name, d in (("service", self.service), ("patience", self.patience)):
            if not d.absolutely_continuous:
                raise ConfigError(name, f"{d.family} law has no density")
        if abs(self.service.mean - 1.0) > 1e-8:
            raise ConfigError("service", "service law must have mean 1")
        if not (self.x0 >= 0 and math.isfinite(self.x0)):
            raise ConfigError("initial.x0", "initial mass must be finite and >= 0")
        b0 = self.nu0.mass()
        if b0 > 1 + TOL_STATE:
            raise ConfigError("initial.nu0", f"<1, nu0> = {b0} exceeds 1")
        if abs((1 - b0) - max(1 - self.x0, 0.0)) > TOL_STATE:
            raise ConfigError(
                "initial.nu0", f"1 - <1, nu0> = {1 - b0} but (1 - x0)^+ = {max(1 - self.x0, 0.0)}"
            )
        if self.eta0.has_atoms:
            warnings.warn("eta0 has atoms; the fluid equations need a continuous eta0")
            raise ConfigError("initial.eta0", "atoms are not allowed in eta0")
        q0 = max(self.x0 - 1, 0.0)
        if q0 > self.eta0.mass() + TOL_STATE:
            raise ConfigError("initial.eta0", "initial queue exceeds the potential-queue mass")
        return self


def _node_values(fn, n):
    return np.asarray(fn(np.arange(n + 1, dtype=float)), dtype=float)


def _shifted_cells(atom_x, atom_m, weights, tail, dist, dt, n):
    """Mass and hazard integral of a survival-weighted initial measure shifted by ``t_j``.

    Returns arrays over ``j = 0..n``; exact for the cell representation.
    """
    M = len(weights)
    nodes = dt * np.arange(M + n + 2)
    isv = dist.integrated_survival(nodes)
    sv = dist.survival(nodes)
    cell_i = np.diff(isv)
    cell_g = -np.diff(sv)
    mass = np.zeros(n + 1)
    haz = np.zeros(n + 1)
    if M:
        # mass[j] = sum_m w_m cell_i[m + j]
        mass += np.correlate(cell_i[: M + n], weights, "valid")
        haz += np.correlate(cell_g[: M + n], weights, "valid")
    if tail:
        end = nodes[M : M + n + 1]
        mass += tail * (dist.mean - isv[M : M + n + 1])
        haz += tail * dist.survival(end)
    if len(atom_x):
        t = dt * np.arange(n + 1)
        s0 = dist.survival(atom_x)
        x = atom_x[None, :] + t[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(s0 > 0, atom_m / np.where(s0 > 0, s0, 1.0), 0.0)
        mass += (dist.survival(x) * scale).sum(axis=1)
        haz += (dist.density(x) * scale).sum(axis=1)
    return mass, haz


def _sw_measure(dist, dt, atom_x, atom_m, weights, tail):
    sw = (SurvivalWeighted(dist, dt, np.asarray(weights, float), float(tail), 0.0),)
    return FiniteMeasure(atom_x, atom_m, None, sw, ())


@dataclass(frozen=True)
class FluidTrajectory:
    cfg: FluidConfig
    t: np.ndarray
    X: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    D: np.ndarray
    R: np.ndarray
    S: np.ndarray
    k: np.ndarray  # entry rate on [t_j, t_{j+1}), length n
    dep_rate: np.ndarray
    renege_rate: np.ndarray
    eta_mass: np.ndarray
    theta_mass: np.ndarray  # <1, shifted nu0>
    theta_h: np.ndarray  # <h, shifted nu0>
    nu0_cells: FiniteMeasure
    eta0_cells: FiniteMeasure
    backend: str = "numba"

    @property
    def dt(self):
        return self.cfg.dt

    @property
    def n(self):
        return len(self.t) - 1

    @property
    def k_grid(self):
        """Entry rate at grid points (the last step's rate repeated at ``t_n``)."""
        return np.append(self.k, self.k[-1] if len(self.k) else 0.0)

    def index(self, t):
        j = int(round(t / self.dt))
        if j < 0 or j > self.n or abs(j * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"t = {t} is not a grid point")
        return j

    def mu_at(self, j) -> FiniteMeasure:
        """Mass that entered service after time 0: density ``Gs(x) k_{t-x}``."""
        w = self.k[:j][::-1].copy()
        return FiniteMeasure(sw=(SurvivalWeighted(self.cfg.service, self.dt, w, 0.0, 0.0),))

    def theta_at(self, j) -> FiniteMeasure:
        return self.nu0_cells.shift(j * self.dt, self.cfg.service)

    def nu_at(self, j) -> FiniteMeasure:
        return self.theta_at(j) + self.mu_at(j)

    def eta_at(self, j) -> FiniteMeasure:
        new = FiniteMeasure(
            sw=(SurvivalWeighted(self.cfg.patience, self.dt, np.full(j, self.cfg.lam), 0.0, 0.0),)
        )
        return self.eta0_cells.shift(j * self.dt, self.cfg.patience) + new

    def snapshot_indices(self):
        every = self.cfg.snap_every
        if not every:
            return [0, self.n]
        stride = max(int(round(every / self.dt)), 1)
        idx = list(range(0, self.n + 1, stride))
        if idx[-1] != self.n:
            idx.append(self.n)
        return idx

    def snapshots(self):
        return [(float(self.t[j]), self.nu_at(j), self.eta_at(j)) for j in self.snapshot_indices()]

    def columns(self):
        return {
            "t": self.t,
            "X": self.X,
            "B": self.B,
            "Q": self.Q,
            "K": self.K,
            "D": self.D,
            "R": self.R,
            "S": self.S,
            "k": self.k_grid,
            "dep_rate": self.dep_rate,
            "renege_rate": self.renege_rate,
        }

    def to_csv(self, path):
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for j in range(self.n + 1):
                writer.writerow([repr(float(cols[c][j])) for c in CSV_COLUMNS])

    def saturation_time(self, threshold=1 - 1e-9):
        """First grid time after which ``B`` stays above ``threshold``; None if never."""
        below = np.nonzero(self.B < threshold)[0]
        if len(below) == 0:
            return 0.0
        last = below[-1]
        if last == self.n:
            return None
        return float(self.t[last + 1])


def _prepare_patience(cfg, n):
    patience = cfg.patience
    ax, am, w_eta, tail_eta = survival_weights(cfg.eta0, patience, cfg.dt)
    if len(ax):
        raise ConfigError("initial.eta0", "atoms are not allowed in eta0")
    M = len(w_eta)
    extra = 0
    if tail_eta > 0 or isinstance(patience, Exponential) is False:
        end = patience.support_end
        if not math.isfinite(end):
            end = float(patience.quantile(1 - 1e-13))
        extra = int(math.ceil(end / cfg.dt)) + 1
    P = n + M + extra + 1
    nodes = cfg.dt * np.arange(P + 1)
    Ir = patience.integrated_survival(nodes)
    Gr = patience.cdf(nodes)
    return w_eta, tail_eta, Ir, Gr


def solve(cfg: FluidConfig, backend=None, renege_override=None) -> FluidTrajectory:
    """Time-step the fluid equations on ``[0, horizon]``.

    ``renege_override`` (length ``n + 1``) replaces the reneging functional by
    a prescribed rate path; used to compare aggregates of the multiclass model.
    """
    cfg.validate()
    n = cfg.steps
    dt = cfg.dt
    service = cfg.service
    ax, am, w_nu, tail_nu = survival_weights(cfg.nu0, service, dt)
    thm, thh = _shifted_cells(ax, am, w_nu, tail_nu, service, dt, n)
    Is = service.integrated_survival(dt * np.arange(n + 1))
    Gs = service.cdf(dt * np.arange(n + 1))
    A1 = np.concatenate([[0.0], np.diff(Is)])
    Ah = np.concatenate([[0.0], np.diff(Gs)])

    exp_rate = cfg.patience.rate if isinstance(cfg.patience, Exponential) else -1.0
    w_eta, tail_eta, Ir, Gr = _prepare_patience(cfg, n)

    B0 = float(thm[0])
    Q0 = max(cfg.x0 - 1.0, 0.0)
    use_override = renege_override is not None
    override = (
        np.ascontiguousarray(renege_override, dtype=float) if use_override else np.zeros(1)
    )
    if use_override and len(override) < n + 1:
        raise ConfigError("renege_override", f"needs {n + 1} values")
    backend_used = kernels.resolve(backend)
    B, Q, K, D, R, k, dep, ren, bad = kernels.fluid_kernel(
        n, dt, float(cfg.lam), B0, Q0, A1, Ah, thm, thh, float(exp_rate),
        Ir, Gr, np.ascontiguousarray(w_eta, dtype=float), float(tail_eta),
        override, use_override, backend=backend_used,
    )
    if bad >= 0:
        raise NumericalAbort(f"nonfinite state at t = {(bad + 1) * dt:g}")

    eta_old, _ = _shifted_cells(np.zeros(0), np.zeros(0), w_eta, tail_eta, cfg.patience, dt, n)
    t = dt * np.arange(n + 1)
    eta_mass = cfg.lam * Ir[: n + 1] + eta_old
    S = eta_old[0] + cfg.lam * t - eta_mass
    return FluidTrajectory(
        cfg=cfg,
        t=t,
        X=B + Q,
        B=B,
        Q=Q,
        K=K,
        D=D,
        R=R,
        S=S,
        k=k,
        dep_rate=dep,
        renege_rate=ren,
        eta_mass=eta_mass,
        theta_mass=thm,
        theta_h=thh,
        nu0_cells=_sw_measure(service, dt, ax, am, w_nu, tail_nu),
        eta0_cells=_sw_measure(cfg.patience, dt, np.zeros(0), np.zeros(0), w_eta, tail_eta),
        backend=backend_used,
    )


# closed-form evaluations


def eta_at(cfg: FluidConfig, t: float) -> FiniteMeasure:
    """Potential-queue measure at time ``t`` from the closed form (no time stepping)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return cfg.eta0
    new = FiniteMeasure(sw=(SurvivalWeighted(cfg.patience, float(t), np.array([cfg.lam])),))
    return cfg.eta0.shift(t, cfg.patience) + new


def nu_functional(psi, nu0: FiniteMeasure, k_history, t, service: Distribution, dt=None):
    """``<psi, nu_t>`` from the initial measure and an entry-rate history.

    ``k_history`` is either an array of rates on consecutive cells of width
    ``dt`` or a callable ``k(s)`` (then sampled at cell midpoints, with
    ``dt = t / 2000`` unless given).
    """
    psi = as_test_function(psi)
    total = nu0.shift(t, service).integrate(psi) if t > 0 else nu0.integrate(psi)
    if t <= 0:
        return total
    if callable(k_history):
        dt = dt or t / 2000.0
        m = int(math.ceil(t / dt - 1e-9))
        k = np.asarray(k_history(dt * (np.arange(m) + 0.5)), dtype=float) * np.ones(m)
    else:
        if dt is None:
            raise ValueError("dt is required with an array k_history")
        k = np.asarray(k_history, dtype=float)
        m = int(math.ceil(t / dt - 1e-9))
        if len(k) < m:
            raise ValueError("k_history does not cover [0, t]")
        k = k[:m]
    s0 = dt * np.arange(m)
    s1 = np.minimum(s0 + dt, t)
    # entry at time s has age t - s
    a_hi, a_lo = t - s0, t - s1
    if psi.kind == "one":
        cell = service.integrated_survival(a_hi) - service.integrated_survival(a_lo)
    elif psi.kind == "hazard" and psi.dist == service:
        cell = service.cdf(a_hi) - service.cdf(a_lo)
    else:
        from .measures import _gl_cells

        cell = _gl_cells(lambda a: psi(a) * service.survival(a), a_lo, a_hi)
    return total + float(np.dot(k, cell))


def reneging_rate(Q, eta_t: FiniteMeasure, patience: Distribution, tol=1e-9):
    """``int_{[0, a]} h_r d eta_t`` with ``a`` the ``Q``-quantile of ``eta_t``."""
    if Q < 0:
        raise ValueError("queue must be >= 0")
    if Q == 0:
        return 0.0
    mass = eta_t.mass()
    if Q > mass + tol:
        raise MeasureError(f"queue {Q} exceeds potential-queue mass {mass}")
    if isinstance(patience, Exponential):
        return patience.rate * Q
    a = inverse_cdf(eta_t, min(Q, mass))
    return eta_t.integrate(hazard_fn(patience), upper=a)


# time-shift semigroup


@dataclass(frozen=True)
class TimeShiftReport:
    t_cut: float
    deviation: float
    tolerance: float

    @property
    def passed(self):
        return self.deviation <= self.tolerance


def restart_config(traj: FluidTrajectory, j: int) -> FluidConfig:
    cfg = traj.cfg
    return replace(
        cfg,
        x0=float(traj.X[j]),
        nu0=traj.nu_at(j),
        eta0=traj.eta_at(j),
        horizon=cfg.horizon - j * cfg.dt,
    )


def time_shift_check(cfg: FluidConfig, t_cut, traj=None, backend=None, tol=SHIFT_TOL):
    """Re-solve from the state at ``t_cut`` and compare with the original tail."""
    traj = traj if traj is not None else solve(cfg, backend)
    j = traj.index(t_cut)
    if j == traj.n:
        return TimeShiftReport(float(t_cut), 0.0, tol)
    tail = solve(restart_config(traj, j), backend)
    dev = 0.0
    for name in ("X", "B", "Q"):
        dev = max(dev, float(np.max(np.abs(getattr(traj, name)[j:] - getattr(tail, name)))))
    for name in ("K", "D", "R"):
        orig = getattr(traj, name)
        dev = max(dev, float(np.max(np.abs(orig[j:] - orig[j] - getattr(tail, name)))))
    dev = max(dev, float(np.max(np.abs(traj.k[j:] - tail.k), initial=0.0)))
    return TimeShiftReport(float(t_cut), dev, tol)


def check_invariants(traj: FluidTrajectory, tol=TOL_STATE):
    """Max violation of each structural identity along the trajectory."""
    X, B, Q = traj.X, traj.B, traj.Q
    lam, t = traj.cfg.lam, traj.t
    out = {
        "queue": float(np.max(np.abs(Q - np.maximum(X - 1, 0)))),
        "non_idling": float(np.max(np.abs((1 - B) - np.maximum(1 - X, 0)))),
        "mass_balance": float(np.max(np.abs(Q[0] + lam * t - (Q + traj.K + traj.R)))),
        "total_balance": float(np.max(np.abs(X[0] + lam * t - (X + traj.D + traj.R)))),
        "monotone": float(
            max(0.0, *(-np.min(np.diff(getattr(traj, c)), initial=0.0) for c in "KDRS"))
        ),
        "k_nonneg": float(max(0.0, -np.min(traj.k, initial=0.0))),
        "queue_le_eta": float(max(0.0, np.max(Q - traj.eta_mass))),
    }
    return out
