"""Finite measures on the half-line.

A :class:`FiniteMeasure` is a sum of

* atoms,
* a piecewise-linear gridded density,
* survival-weighted parts with density ``survival(x) * w(x - offset)`` where
  ``w`` is piecewise constant on cells (the form every age/patience measure
  of the fluid model takes), and
* lazily shifted parts ``(base, t, dist)`` whose integral against ``psi`` is
  ``int psi(x + t) survival(x + t) / survival(x) base(dx)``.

Shifting atoms and survival-weighted parts with their own law is exact, so
only gridded densities ever end up in the lazy form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import diags, vstack

from .distributions import Distribution

OVERFLOW = 1e300
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class TestFunction:
    """A bounded or nonnegative test function.

    ``kind`` lets integration use exact rules: ``"one"`` for the constant
    1 and ``"hazard"`` for the hazard of ``dist``.
    """

    __test__ = False  # keep pytest from collecting this class

    fn: Callable[[np.ndarray], np.ndarray]
    bound: float = math.inf
    kind: str = "generic"
    dist: Distribution | None = None

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


def constant(c=1.0) -> TestFunction:
    if c == 1.0:
        return TestFunction(lambda x: np.ones_like(x), 1.0, "one")
    return TestFunction(lambda x: np.full_like(x, c), abs(c))


ONE = constant(1.0)


def hazard_fn(dist: Distribution) -> TestFunction:
    return TestFunction(lambda x: dist.hazard(x), math.inf, "hazard", dist)


def as_test_function(psi) -> TestFunction:
    if isinstance(psi, TestFunction):
        return psi
    if callable(psi):
        return TestFunction(psi)
    if np.isscalar(psi):
        return constant(float(psi))
    raise MeasureError("test function must be callable or a scalar")


def _gl_cells(fn, a, b):
    """Gauss-Legendre integral of ``fn`` over each cell ``[a_i, b_i]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fn(pts.ravel()).reshape(pts.shape)
    return (vals * _GL_W[None, :]).sum(axis=1) * half


# components


@dataclass(frozen=True)
class SurvivalWeighted:
    """Density ``dist.survival(x) * w`` with ``w = weights[m]`` on
    ``[offset + m dx, offset + (m+1) dx)`` and ``w = tail`` beyond."""

    dist: Distribution
    dx: float
    weights: np.ndarray
    tail: float = 0.0
    offset: float = 0.0

    @property
    def end(self):
        return self.offset + len(self.weights) * self.dx

    @property
    def edges(self):
        return self.offset + self.dx * np.arange(len(self.weights) + 1)

    def mass(self):
        isv = self.dist.integrated_survival
        total = 0.0
        if len(self.weights):
            total = float(np.dot(self.weights, np.diff(isv(self.edges))))
        if self.tail:
            total += self.tail * (self.dist.mean - isv(self.end))
        return total

    def _weight_at(self, x):
        x = np.asarray(x, dtype=float)
        m = np.floor((x - self.offset) / self.dx).astype(np.int64)
        n = len(self.weights)
        w = np.where(m >= n, self.tail, 0.0)
        inside = (m >= 0) & (m < n)
        if n:
            w = np.where(inside, self.weights[np.clip(m, 0, n - 1)], w)
        return np.where(x < self.offset, 0.0, w)

    def density(self, x):
        return self.dist.survival(x) * self._weight_at(x)

    def cdf(self, x):
        """Exact mass of ``[0, x]`` from differences of integrated survival."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        isv = self.dist.integrated_survival
        n = len(self.weights)
        out = np.zeros_like(x)
        if n:
            cell = self.weights * np.diff(isv(self.edges))
            cum = np.concatenate([[0.0], np.cumsum(cell)])
            m = np.clip(np.floor((x - self.offset) / self.dx).astype(np.int64), 0, n)
            start = self.offset + m * self.dx
            part = np.where(
                m < n,
                self.weights[np.clip(m, 0, n - 1)] * (isv(np.maximum(x, start)) - isv(start)),
                0.0,
            )
            out = cum[m] + np.where(x > self.offset, part, 0.0)
        if self.tail:
            out = out + self.tail * np.maximum(isv(np.maximum(x, self.end)) - isv(self.end), 0.0)
        return out

    def integrate(self, psi: TestFunction, upper=math.inf):
        if psi.kind == "one" and not math.isfinite(upper):
            return self.mass()
        if psi.kind == "hazard" and psi.dist == self.dist and not math.isfinite(upper):
            sv = self.dist.survival
            total = 0.0
            if len(self.weights):
                total = float(np.dot(self.weights, -np.diff(sv(self.edges))))
            if self.tail:
                total += self.tail * sv(self.end)
            return total
        total = 0.0
        n = len(self.weights)
        if n:
            a = self.edges[:-1]
            b = np.minimum(self.edges[1:], upper)
            keep = b > a
            if np.any(keep):
                vals = _gl_cells(lambda x: psi(x) * self.dist.survival(x), a[keep], b[keep])
                total += float(np.dot(self.weights[keep], vals))
        if self.tail:
            total += self.tail * _tail_integral(
                lambda x: psi(x) * self.dist.survival(x), self.end, upper, self.dist
            )
        return total

    def shifted(self, t):
        return SurvivalWeighted(self.dist, self.dx, self.weights, self.tail, self.offset + t)

    def scaled(self, c):
        return SurvivalWeighted(self.dist, self.dx, self.weights * c, self.tail * c, self.offset)

    def support_end(self):
        if self.tail > 0:
            return self.dist.support_end
        nz = np.nonzero(self.weights > 0)[0]
        if len(nz) == 0:
            return 0.0
        return min(self.offset + (nz[-1] + 1) * self.dx, self.dist.support_end)

    def breakpoints_aligned(self, dx):
        return _is_multiple(self.offset, dx) and (
            len(self.weights) == 0 or _is_multiple(self.dx, dx)
        )

    def to_json(self):
        return {
            "dist": self.dist.describe(),
            "dx": self.dx,
            "offset": self.offset,
            "weights": self.weights.tolist(),
            "tail": self.tail,
        }


def _tail_integral(fn, a, upper, dist):
    """Integral of ``fn`` over ``[a, min(upper, H))`` by composite Gauss rules."""
    end = min(upper, dist.support_end)
    if not end > a:
        return 0.0
    if not math.isfinite(end):
        # fn carries the survival factor, so this cutoff loses ~1e-15 of mass
        end = max(float(dist.quantile(1 - 1e-15)), a + dist.mean)
    edges = np.linspace(a, end, 257)
    return float(_gl_cells(fn, edges[:-1], edges[1:]).sum())


def _is_multiple(x, dx):
    if dx <= 0:
        return False
    r = x / dx
    return abs(r - round(r)) < 1e-9


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-linear density with nodes ``0, dx, ..., (n-1) dx``."""

    dx: float
    values: np.ndarray

    @property
    def nodes(self):
        return self.dx * np.arange(len(self.values))

    def mass(self):
        v = self.values
        return float(0.5 * self.dx * (v[:-1] + v[1:]).sum()) if len(v) > 1 else 0.0

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.values) < 2:
            return np.zeros_like(x)
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        v = self.values
        n = len(v) - 1
        if n < 1:
            return np.zeros_like(x)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.dx * (v[:-1] + v[1:]))])
        m = np.clip(np.floor(x / self.dx).astype(np.int64), 0, n)
        s = np.clip(x - m * self.dx, 0.0, self.dx)
        f0 = v[np.clip(m, 0, n)]
        f1 = v[np.clip(m + 1, 0, n)]
        part = np.where(m < n, f0 * s + (f1 - f0) * s * s / (2 * self.dx), 0.0)
        return np.where(x < 0, 0.0, cum[m] + part)

    def integrate(self, psi: TestFunction, upper=math.inf):
        v = self.values
        if len(v) < 2:
            return 0.0
        if psi.kind == "one" and not math.isfinite(upper):
            return self.mass()
        nodes = self.nodes
        if math.isfinite(upper) and upper < nodes[-1]:
            if upper <= 0:
                return 0.0
            keep = nodes < upper
            xs = np.concatenate([nodes[keep], [upper]])
            fs = np.concatenate([v[keep], [np.interp(upper, nodes, v)]])
        else:
            xs, fs = nodes, v
        prod = psi(xs) * fs
        prod = np.where(fs == 0, 0.0, prod)
        return float(np.sum(0.5 * np.diff(xs) * (prod[:-1] + prod[1:])))

    def support_end(self):
        nz = np.nonzero(self.values > 0)[0]
        if len(nz) == 0:
            return 0.0
        return min(nz[-1] + 1, len(self.values) - 1) * self.dx

    def breakpoints_aligned(self, dx):
        return _is_multiple(self.dx, dx)

    def to_json(self):
        return {"dx": self.dx, "values": self.values.tolist()}


@dataclass(frozen=True)
class Shifted:
    """Lazy ``base`` shifted by ``t`` with survival-ratio reweighting by ``dist``."""

    base: "FiniteMeasure"
    t: float
    dist: Distribution

    def _ratio(self, y):
        sy = self.dist.survival(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sy > 0, self.dist.survival(y + self.t) / np.where(sy > 0, sy, 1.0), 0.0)

    def mass(self):
        return self.base.integrate(TestFunction(self._ratio, 1.0))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        y = x - self.t
        return np.where(y >= 0, self.base.density(np.maximum(y, 0.0)) * self._ratio(np.maximum(y, 0.0)), 0.0)

    def integrate(self, psi: TestFunction, upper=math.inf):
        fn = TestFunction(lambda y: psi(y + self.t) * self._ratio(y), psi.bound)
        return self.base.integrate(fn, upper - self.t)

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        fn = TestFunction(self._ratio, 1.0)
        return np.array([self.base.integrate(fn, xi - self.t) if xi >= self.t else 0.0 for xi in x])

    def support_end(self):
        return self.base.support_end() + self.t

    def breakpoints_aligned(self, dx):
        return _is_multiple(self.t, dx) and self.base.breakpoints_aligned(dx)

    def to_json(self):
        return {
            "t": self.t,
            "dist": self.dist.describe(),
            "base_ref": f"base@{self.t:g}",
            "base": self.base.to_json(),
        }


# the measure


_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class FiniteMeasure:
    atom_x: np.ndarray = field(default_factory=lambda: _EMPTY)
    atom_m: np.ndarray = field(default_factory=lambda: _EMPTY)
    grid: GridDensity | None = None
    sw: tuple = ()
    shifted: tuple = ()

    def __post_init__(self):
        ax = np.asarray(self.atom_x, dtype=float)
        am = np.asarray(self.atom_m, dtype=float)
        if ax.shape != am.shape:
            raise MeasureError("atom locations and masses differ in length")
        if np.any(ax < 0) or np.any(am < 0):
            raise MeasureError("atoms need location >= 0 and mass >= 0")
        keep = am > 0
        order = np.argsort(ax[keep], kind="stable")
        object.__setattr__(self, "atom_x", ax[keep][order])
        object.__setattr__(self, "atom_m", am[keep][order])
        if self.grid is not None and np.any(np.asarray(self.grid.values) < 0):
            raise MeasureError("gridded density must be nonnegative")

    # construction helpers
    @property
    def parts(self):
        out = list(self.sw) + list(self.shifted)
        if self.grid is not None:
            out.append(self.grid)
        return out

    @property
    def has_atoms(self):
        return len(self.atom_x) > 0

    def mass(self):
        return float(self.atom_m.sum()) + sum(p.mass() for p in self.parts)

    def integrate(self, psi, upper=math.inf):
        psi = as_test_function(psi)
        total = 0.0
        if self.has_atoms:
            sel = self.atom_x <= upper
            if np.any(sel):
                total += float(np.dot(psi(self.atom_x[sel]), self.atom_m[sel]))
        for part in self.parts:
            total += part.integrate(psi, upper)
        if not math.isfinite(total) or abs(total) > OVERFLOW:
            raise MeasureError("integral diverges (exceeds overflow threshold)")
        return total

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for part in self.parts:
            out = out + part.density(x)
        return out

    def cdf(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = self.cdf_continuous(x)
        if self.has_atoms:
            cum = np.concatenate([[0.0], np.cumsum(self.atom_m)])
            out = out + cum[np.searchsorted(self.atom_x, x, side="right")]
        return float(out[0]) if scalar else out

    def cdf_continuous(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for part in self.parts:
            out = out + part.cdf(x)
        return out

    def support_end(self):
        ends = [p.support_end() for p in self.parts]
        if self.has_atoms:
            ends.append(float(self.atom_x[-1]))
        return max(ends, default=0.0)

    def breakpoints_aligned(self, dx):
        return all(p.breakpoints_aligned(dx) for p in self.parts)

    def shift(self, t, dist: Distribution) -> "FiniteMeasure":
        """``int psi d(shift)`` = ``int psi(x+t) survival(x+t)/survival(x) dmu``."""
        if t < 0:
            raise MeasureError("shift needs t >= 0")
        if t == 0:
            return self
        ax, am = self.atom_x, self.atom_m
        if self.has_atoms:
            s0 = dist.survival(ax)
            with np.errstate(divide="ignore", invalid="ignore"):
                am = np.where(s0 > 0, am * dist.survival(ax + t) / np.where(s0 > 0, s0, 1.0), 0.0)
            ax = ax + t
        sw, lazy = [], []
        for part in self.sw:
            if part.dist == dist:
                sw.append(part.shifted(t))
            else:
                lazy.append(Shifted(FiniteMeasure(sw=(part,)), t, dist))
        for part in self.shifted:
            if part.dist == dist:
                lazy.append(Shifted(part.base, part.t + t, dist))
            else:
                lazy.append(Shifted(FiniteMeasure(shifted=(part,)), t, dist))
        if self.grid is not None:
            lazy.append(Shifted(FiniteMeasure(grid=self.grid), t, dist))
        return FiniteMeasure(ax, am, None, tuple(sw), tuple(lazy))

    def scale(self, c) -> "FiniteMeasure":
        if c < 0:
            raise MeasureError("scale factor must be nonnegative")
        grid = None if self.grid is None else GridDensity(self.grid.dx, self.grid.values * c)
        lazy = tuple(Shifted(p.base.scale(c), p.t, p.dist) for p in self.shifted)
        return FiniteMeasure(
            self.atom_x, self.atom_m * c, grid, tuple(p.scaled(c) for p in self.sw), lazy
        )

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        if not isinstance(other, FiniteMeasure):
            return NotImplemented
        grid = self.grid
        if other.grid is not None:
            grid = other.grid if grid is None else _add_grids(grid, other.grid)
        return FiniteMeasure(
            np.concatenate([self.atom_x, other.atom_x]),
            np.concatenate([self.atom_m, other.atom_m]),
            grid,
            self.sw + other.sw,
            self.shifted + other.shifted,
        )

    def to_json(self):
        out = {"atoms": [[float(x), float(m)] for x, m in zip(self.atom_x, self.atom_m)]}
        out["grid"] = None if self.grid is None else self.grid.to_json()
        out["survival_weighted"] = [p.to_json() for p in self.sw]
        out["shifted"] = [p.to_json() for p in self.shifted]
        return out


def _add_grids(a: GridDensity, b: GridDensity) -> GridDensity:
    if not math.isclose(a.dx, b.dx, rel_tol=1e-12):
        raise MeasureError("cannot add gridded densities with different steps")
    n = max(len(a.values), len(b.values))
    va = np.pad(a.values, (0, n - len(a.values)))
    vb = np.pad(b.values, (0, n - len(b.values)))
    return GridDensity(a.dx, va + vb)


# constructors


def zero() -> FiniteMeasure:
    return FiniteMeasure()


def dirac(x, mass=1.0) -> FiniteMeasure:
    return FiniteMeasure(np.array([float(x)]), np.array([float(mass)]))


def atoms(xs, ms) -> FiniteMeasure:
    return FiniteMeasure(np.asarray(xs, float), np.asarray(ms, float))


def from_density(dx, values) -> FiniteMeasure:
    return FiniteMeasure(grid=GridDensity(float(dx), np.asarray(values, dtype=float)))


def equilibrium(dist: Distribution, coef=1.0) -> FiniteMeasure:
    """``coef * survival(x) dx``; with a mean-1 law and ``coef = 1`` this is a probability."""
    return FiniteMeasure(sw=(SurvivalWeighted(dist, 1.0, np.zeros(0), float(coef), 0.0),))


def survival_weighted(dist, dx, weights, tail=0.0, offset=0.0) -> FiniteMeasure:
    return FiniteMeasure(
        sw=(SurvivalWeighted(dist, float(dx), np.asarray(weights, float), float(tail), float(offset)),)
    )


# functional API


def integrate(psi, mu: FiniteMeasure, upper=math.inf) -> float:
    return mu.integrate(psi, upper)


def inverse_cdf(mu: FiniteMeasure, y: float, tol=1e-13) -> float:
    """``inf{x > 0 : F(x) >= y}``; bisection on the monotone CDF."""
    total = mu.mass()
    if y < 0:
        raise MeasureError("inverse_cdf needs y >= 0")
    if y > total * (1 + 1e-12) + 1e-15:
        raise MeasureError(f"inverse_cdf: y = {y} exceeds total mass {total}")
    if y <= 0:
        return 0.0
    if y >= total:
        end = mu.support_end()
        if math.isfinite(end):
            # supremum of the support: smallest x carrying all the mass
            hi = end
        else:
            return math.inf
    else:
        hi = max(mu.support_end(), 0.0)
        if not math.isfinite(hi):
            hi = 1.0
            while mu.cdf(hi) < y:
                hi *= 2.0
                if hi > 1e300:
                    return math.inf
    if y >= total:
        y = mu.cdf(hi)
    lo = 0.0
    if mu.cdf(lo) >= y:
        return 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mu.cdf(mid) >= y:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return hi


def _common_step(mu, rho, dx):
    if dx is not None:
        return float(dx)
    steps = []
    for m in (mu, rho):
        if m.grid is not None:
            steps.append(m.grid.dx)
        steps.extend(p.dx for p in m.sw if len(p.weights))
        for p in m.shifted:
            if p.base.grid is not None:
                steps.append(p.base.grid.dx)
    return min(steps) if steps else 0.01


def _span(mu, rho, x_max):
    if x_max is not None:
        return float(x_max)
    ends = [mu.support_end(), rho.support_end()]
    finite = [e for e in ends if math.isfinite(e)]
    hi = max(finite, default=1.0)
    if all(math.isfinite(e) for e in ends):
        return max(hi, 1e-12)
    x = max(hi, 1.0)
    mass = max(mu.mass(), rho.mass(), 1e-300)
    while (mu.mass() - mu.cdf(x)) + (rho.mass() - rho.cdf(x)) > 1e-12 * max(mass, 1.0):
        x *= 1.5
        if x > 1e7:
            break
    return x


def _signed_points(mu, rho, edges):
    """Signed masses of ``mu - rho`` at representative points.

    Atoms keep their locations; continuous mass is lumped at cell midpoints.
    """
    d_cont = np.diff(mu.cdf_continuous(edges) - rho.cdf_continuous(edges))
    mids = 0.5 * (edges[:-1] + edges[1:])
    # continuous mass beyond the last edge
    tail = (mu.mass() - mu.atom_m.sum() - mu.cdf_continuous(edges[-1:])[0]) - (
        rho.mass() - rho.atom_m.sum() - rho.cdf_continuous(edges[-1:])[0]
    )
    xs = [mids, [edges[-1]], mu.atom_x, rho.atom_x]
    ds = [d_cont, [tail], mu.atom_m, -rho.atom_m]
    x = np.concatenate(xs)
    d = np.concatenate(ds)
    order = np.argsort(x, kind="stable")
    return x[order], d[order]


def _bl_dictionary(x, d, centers):
    best = abs(d.sum())
    for a in np.array_split(centers, max(1, len(centers) // 256)):
        ramps = np.clip(x[None, :] - a[:, None], -1.0, 1.0)
        tents = np.maximum(0.0, 1.0 - np.abs(x[None, :] - a[:, None]))
        best = max(best, float(np.abs(ramps @ d).max()), float(np.abs(tents @ d).max()))
    return best


def _bl_lp(x, d):
    n = len(x)
    if n == 1:
        return abs(float(d[0]))
    gaps = np.diff(x)
    D = diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    A = vstack([D, -D]).tocsr()
    b = np.concatenate([gaps, gaps])
    res = linprog(-d, A_ub=A, b_ub=b, bounds=[(-1, 1)] * n, method="highs")
    if not res.success:
        raise MeasureError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


def bl_distance(mu, rho, dx=None, x_max=None, method="dictionary"):
    """Bounded-Lipschitz distance over functions with |f| <= 1 and Lip(f) <= 1.

    ``method="dictionary"`` maximizes over constants, unit ramps and tents
    (a lower bound); ``method="lp"`` solves the discretized problem exactly.
    """
    step = _common_step(mu, rho, dx)
    span = _span(mu, rho, x_max)
    n = max(int(math.ceil(span / step)), 1)
    edges = step * np.arange(n + 1)
    x, d = _signed_points(mu, rho, edges)
    if method == "lp":
        return _bl_lp(x, d)
    if method != "dictionary":
        raise MeasureError(f"unknown BL method '{method}'")
    spacing = max(step, span / 400.0)
    centers = np.arange(-1.0, span + 1.0 + spacing, spacing)
    return _bl_dictionary(x, d, centers)


def tv_distance(mu, rho, dx=None, x_max=None):
    """Total variation ``sum |atom mismatch| + int |density difference|``.

    Returns None when some part has breakpoints off the common grid.
    """
    step = _common_step(mu, rho, dx)
    if not (mu.breakpoints_aligned(step) and rho.breakpoints_aligned(step)):
        return None
    span = _span(mu, rho, x_max)
    n = max(int(math.ceil(span / step)), 1)
    edges = step * np.arange(n + 1)
    def diff(x):
        return mu.density(x) - rho.density(x)

    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.abs(diff(pts.ravel())).reshape(pts.shape)
    cont = float(((vals * _GL_W[None, :]).sum(axis=1) * half).sum())
    tail = abs(
        (mu.mass() - mu.atom_m.sum() - mu.cdf_continuous(edges[-1:])[0])
        - (rho.mass() - rho.atom_m.sum() - rho.cdf_continuous(edges[-1:])[0])
    )
    locs = np.concatenate([mu.atom_x, rho.atom_x])
    signed = np.concatenate([mu.atom_m, -rho.atom_m])
    atom_part = 0.0
    if len(locs):
        order = np.argsort(locs, kind="stable")
        locs, signed = locs[order], signed[order]
        group = np.concatenate([[0], np.cumsum(np.diff(locs) > 1e-12)])
        atom_part = float(np.abs(np.bincount(group, weights=signed)).sum())
    return cont + tail + atom_part


def distances(mu, rho, dx=None, x_max=None, method="dictionary"):
    """``(bl, tv)``; ``tv`` is None when it cannot be computed on a common grid."""
    return bl_distance(mu, rho, dx, x_max, method), tv_distance(mu, rho, dx, x_max)


# projection onto survival-weighted cells


def survival_weights(mu: FiniteMeasure, dist: Distribution, dx: float, n_min=0):
    """Express ``mu`` as atoms plus ``dist``-survival-weighted cells of width ``dx``.

    Aligned parts that already carry ``dist`` are copied exactly; any other
    continuous part is projected cell by cell with its exact cell masses.
    Returns ``(atom_x, atom_m, weights, tail)``.
    """
    isv = dist.integrated_survival
    pieces = []
    tail = 0.0
    rest = []
    for part in mu.sw:
        if part.dist == dist and part.breakpoints_aligned(dx) and (
            len(part.weights) == 0 or math.isclose(part.dx, dx, rel_tol=1e-12)
        ):
            pieces.append(part)
        else:
            rest.append(part)
    n = n_min
    for part in pieces:
        n = max(n, int(round(part.end / dx)))
    other = FiniteMeasure(grid=mu.grid, sw=tuple(rest), shifted=mu.shifted)
    other_mass = other.mass()
    if other_mass > 0:
        end = other.support_end()
        if not math.isfinite(end):
            end = _span(other, zero(), None)
        n = max(n, int(math.ceil(end / dx - 1e-9)))
    weights = np.zeros(n)
    edges = dx * np.arange(n + 1)
    cell_i = np.diff(isv(edges)) if n else np.zeros(0)
    for part in pieces:
        start = int(round(part.offset / dx))
        m = len(part.weights)
        weights[start : start + m] += part.weights
        weights[start + m :] += part.tail
        tail += part.tail
    if other_mass > 0:
        cm = np.diff(other.cdf_continuous(edges))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(cell_i > 0, cm / np.where(cell_i > 0, cell_i, 1.0), 0.0)
        weights += w
    return mu.atom_x.copy(), mu.atom_m.copy(), weights, tail
