"""Renewal-equation diagnostics for service laws with decreasing hazard.

``U`` solves ``U = G + G * dU`` and ``u = U'``.  The mass that entered
service after time 0, ``W(t) = B(t) - <1, theta_t>``, satisfies
``W = Gs * dK``, which inverts to ``K = W + Z`` with
``Z(t) = int_0^t W(t - s) dU(s)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import kernels
from .distributions import Distribution, Exponential, classify_hazard, make_distribution
from .errors import NumericalAbort
from .fluid import FluidTrajectory


@dataclass(frozen=True)
class RenewalTable:
    t: np.ndarray
    u: np.ndarray
    U: np.ndarray
    source: Distribution

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])


def renewal_density(service: Distribution, dt, horizon, backend=None) -> RenewalTable:
    """Renewal function by product integration with ``U`` linear on each cell.

    The kernel only ever sees exact cell increments of ``G`` and of
    ``int G``, so densities singular at 0 (Weibull shape < 1) are handled
    without special cases.  ``u(0) = g(0)`` is set exactly.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(horizon / dt))
    t = dt * np.arange(n + 1)
    G = service.cdf(t)
    Isv = service.integrated_survival(t)
    dG = np.concatenate([[0.0], np.diff(G)])
    dI = np.concatenate([[0.0], np.diff(Isv)])
    # int_cell (s - t_{m-1}) g(s) ds = dt G_m - int_cell G
    beta = (dt * G - (dt - dI)) / dt
    beta[0] = 0.0
    alpha = dG - beta
    U = kernels.renewal_kernel(G, alpha, beta, backend=backend)
    dU = np.diff(U)
    u = np.empty(n + 1)
    g0 = service.density_at_zero if service.absolutely_continuous else math.nan
    u[0] = g0
    if n:
        u[1:] = service.density(t[1:]) + np.convolve(dU / dt, dG[1:])[:n]
    limit = 10 * (1 + g0) * math.exp(min(horizon, 700.0))
    if np.any(~np.isfinite(u[1:])) or np.any(u[1:] > limit):
        raise NumericalAbort("renewal density diverged")
    return RenewalTable(t, u, U, service)


def volterra_residual(table: RenewalTable, start=1):
    """``max |u - g - g * u|`` on grid points ``>= start`` (Simpson convolution).

    NaN when the density is singular at 0, where the quadrature does not apply.
    """
    t, u, dt = table.t, table.u, table.dt
    g = table.source.density(t)
    if not (np.isfinite(g[0]) and np.isfinite(u[0])):
        return math.nan
    res = 0.0
    for j in range(max(start, 1), len(t)):
        conv = integrate.simpson(g[j::-1] * u[: j + 1], dx=dt)
        res = max(res, abs(u[j] - g[j] - conv))
    return res


@dataclass(frozen=True)
class ConcavityReport:
    passed: bool
    first_violation: float | None
    max_increase: float
    applicable: bool


def concavity_check(table: RenewalTable, slack=1e-8, force=False) -> ConcavityReport:
    """``u`` nonincreasing on the grid (i.e. ``U`` concave)."""
    regime = classify_hazard(table.source)
    if not regime.is_decreasing and not force:
        raise ValueError("concavity needs a decreasing service hazard (pass force=True)")
    u = table.u
    finite = np.isfinite(u)
    start = int(np.argmax(finite))
    inc = np.diff(u[start:])
    bad = np.nonzero(inc > slack)[0]
    first = float(table.t[start + bad[0] + 1]) if len(bad) else None
    return ConcavityReport(
        len(bad) == 0, first, float(max(inc.max(initial=0.0), 0.0)), regime.is_decreasing
    )


@dataclass(frozen=True)
class WZTrace:
    t: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    K: np.ndarray
    lambda_n: np.ndarray
    tau_n: list  # grid time bound, or None when the crossing is not observed
    n_star: int | None  # None: every lambda_n stays below 1
    g0: float

    @property
    def kwz_error(self):
        return float(np.max(np.abs(self.K - self.W - self.Z)))

    def zprime_margin(self):
        """``min_j [W_j g(0) - (Z_{j+1} - Z_j)/dt]``."""
        if math.isinf(self.g0):
            return math.inf
        dt = float(self.t[1] - self.t[0])
        zp = np.diff(self.Z) / dt
        w = np.maximum(self.W[:-1], self.W[1:])
        return float(np.min(w * self.g0 - zp))

    def tau_report(self):
        return [f"<= {tau:g}" if tau is not None else "not observed" for tau in self.tau_n]


def lambda_sequence(lam, eps, g0, max_terms=200):
    """``lambda_n = (lam - eps)(1 - (1 - 1/g0)^(n+1))`` until it settles."""
    q = 0.0 if math.isinf(g0) else 1.0 - 1.0 / g0
    out = []
    for n in range(max_terms):
        out.append((lam - eps) * (1.0 - q ** (n + 1)))
        if n > 0 and abs(out[-1] - out[-2]) < 1e-14:
            break
    return np.array(out)


def n_star(lambda_n, lam=None, eps=None):
    """``sup{n : lambda_n < 1}``; None when the supremum is infinite."""
    below = np.nonzero(lambda_n < 1.0)[0]
    if len(below) == 0:
        return -1
    if below[-1] == len(lambda_n) - 1:
        # the sequence settled below 1 (its limit lam - eps is < 1)
        if lam is None or lam - eps < 1.0:
            return None
    return int(below[-1])


def crossing_time(t, W, level):
    """First grid time after which ``W`` never drops below ``level``."""
    below = np.nonzero(W < level)[0]
    if len(below) == 0:
        return 0.0
    if below[-1] == len(W) - 1:
        return None
    return float(t[below[-1] + 1])


def wz_trace(traj: FluidTrajectory, table: RenewalTable, lam, eps) -> WZTrace:
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if abs(table.dt - traj.dt) > 1e-12 or len(table.t) < len(traj.t):
        raise ValueError("renewal table must share the trajectory grid")
    service = traj.cfg.service
    g0 = service.density_at_zero
    if classify_hazard(service).is_decreasing and g0 == 0:
        raise ValueError("a decreasing hazard cannot have g(0) = 0")
    n = traj.n
    W = traj.B - traj.theta_mass
    dU = np.diff(table.U[: n + 1])
    Z = np.zeros(n + 1)
    if n:
        Z[1:] = _renewal_convolution(dU, W)
    lam_n = lambda_sequence(lam, eps, g0)
    taus = [crossing_time(traj.t, W, c) for c in lam_n]
    return WZTrace(traj.t, W, Z, traj.K, lam_n, taus, n_star(lam_n, lam, eps), g0)


def _renewal_convolution(dU, W):
    """``Z_j = sum_{m=1..j} dU_m (W_{j-m} + W_{j-m+1}) / 2`` for ``j = 1..n``."""
    n = len(dU)
    a = np.convolve(dU, W[:n])[:n]  # sum_m dU_m W_{j-m}
    b = np.convolve(dU, W[1 : n + 1])[:n]  # sum_m dU_m W_{j-m+1}
    return 0.5 * (a + b)


def q_ode_oracle(lam, patience, q0, horizon, dt=1e-3):
    """Explicit Euler for ``Q' = lam Gr_bar(a(Q)) - 1`` with ``lam I_r(a(Q)) = Q``.

    ``patience`` may be a Distribution or an exponential rate.
    """
    if not isinstance(patience, Distribution):
        patience = make_distribution("exponential", {"rate": float(patience)}, "patience")
    n = int(round(horizon / dt))
    Q = np.empty(n + 1)
    Q[0] = q0
    if isinstance(patience, Exponential):
        theta = patience.rate
        for j in range(n):
            Q[j + 1] = Q[j] + dt * (lam - theta * Q[j] - 1.0)
        return Q
    end = patience.support_end
    top = end if math.isfinite(end) else float(patience.quantile(1 - 1e-14))
    a_grid = np.linspace(0.0, top, 200_001)
    i_grid = lam * patience.integrated_survival(a_grid)
    sbar = patience.survival(a_grid)
    for j in range(n):
        a = np.interp(Q[j], i_grid, a_grid)
        s = np.interp(a, a_grid, sbar)
        Q[j + 1] = max(Q[j] + dt * (lam * s - 1.0), 0.0)
    return Q
