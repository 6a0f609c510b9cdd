"""Lifetime laws for service and patience times.

Every family exposes survival, density, hazard and the integrated survival
``I(x) = int_0^x survival``.  The fluid solver never integrates a survival
function numerically: cell integrals are differences of ``I`` and of the
CDF, which keeps mass bookkeeping exact up to roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

FAMILIES = (
    "exponential",
    "weibull",
    "hyperexponential",
    "lognormal",
    "erlang",
    "uniform",
    "gridded-density",
    "deterministic",
)
ROLES = ("service", "patience", "interarrival", "generic")


class DistributionError(ValueError):
    """Invalid family, parameters or role."""


def _arr(x):
    return np.asarray(x, dtype=float)


def _ret(x, out):
    return float(np.asarray(out).reshape(-1)[0]) if np.ndim(x) == 0 else out


class Distribution:
    """Base class. Subclasses implement the ``_``-prefixed vector methods."""

    family = "abstract"
    absolutely_continuous = True

    def __init__(self, role="generic"):
        self.role = role

    # public vectorized API
    def survival(self, x):
        x = _arr(x)
        out = np.where(x < 0, 1.0, self._survival(np.maximum(x, 0.0)))
        return _ret(x, out)

    def cdf(self, x):
        x = _arr(x)
        out = np.where(x < 0, 0.0, self._cdf(np.maximum(x, 0.0)))
        return _ret(x, out)

    def density(self, x):
        x = _arr(x)
        out = np.where(x < 0, 0.0, self._density(np.maximum(x, 0.0)))
        return _ret(x, out)

    def hazard(self, x, delta=None):
        """Hazard rate; with ``delta`` given, refuse points beyond ``H - delta``."""
        x = _arr(x)
        if delta is not None and math.isfinite(self.support_end):
            if np.any(x > self.support_end - delta):
                raise DistributionError(
                    f"hazard requested beyond H - delta = {self.support_end - delta}"
                )
        out = self._hazard(np.maximum(x, 0.0))
        return _ret(x, out)

    def integrated_survival(self, x):
        """``int_0^x survival(u) du``, vectorized, exact for every family."""
        x = _arr(x)
        out = np.where(x <= 0, 0.0, self._isurv(np.maximum(x, 0.0)))
        return _ret(x, out)

    def sample(self, rng: np.random.Generator, size=None):
        return self._sample(rng, size)

    def quantile(self, p):
        """Inverse CDF (bisection fallback on the monotone CDF)."""
        p = _arr(p)
        out = self._quantile(p)
        return _ret(p, out)

    # defaults
    def _hazard(self, x):
        s = self._survival(x)
        d = self._density(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(s > 0, d / np.where(s > 0, s, 1.0), np.inf)
        return h

    def _quantile(self, p):
        p = np.atleast_1d(p)
        lo = np.zeros_like(p)
        hi = np.full_like(p, max(self.mean, 1e-12))
        for _ in range(200):
            need = self._cdf(hi) < p
            if not np.any(need & np.isfinite(hi)) or np.all(hi[need] > 1e300):
                break
            hi = np.where(need, hi * 2.0, hi)
            if math.isfinite(self.support_end):
                hi = np.minimum(hi, self.support_end)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self._cdf(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return hi

    def _sample(self, rng, size):
        u = rng.random(size)
        return self.quantile(u)

    def rescaled(self, factor):
        """Law of ``T / factor``; used to normalize the service mean to 1."""
        raise NotImplementedError

    @property
    def support_end(self):
        return math.inf

    @property
    def density_at_zero(self):
        return float(self._density(np.array([0.0]))[0])

    def analytic_regime(self):
        return None

    def describe(self):
        return {"family": self.family, "params": self.params(), "role": self.role}

    def params(self):
        raise NotImplementedError

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner}, role={self.role!r})"

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and _params_equal(self.params(), other.params())
        )

    def __hash__(self):
        return hash((self.family, repr(self.params())))


def _params_equal(a, b):
    if a.keys() != b.keys():
        return False
    for key in a:
        if not np.array_equal(np.asarray(a[key]), np.asarray(b[key])):
            return False
    return True


class Exponential(Distribution):
    family = "exponential"

    def __init__(self, rate, role="generic"):
        super().__init__(role)
        self.rate = float(rate)

    def params(self):
        return {"rate": self.rate}

    @property
    def mean(self):
        return 1.0 / self.rate

    def _survival(self, x):
        return np.exp(-self.rate * x)

    def _cdf(self, x):
        return -np.expm1(-self.rate * x)

    def _density(self, x):
        return self.rate * np.exp(-self.rate * x)

    def _hazard(self, x):
        return np.full_like(x, self.rate, dtype=float)

    def _isurv(self, x):
        return -np.expm1(-self.rate * x) / self.rate

    def _quantile(self, p):
        return -np.log1p(-p) / self.rate

    def _sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def rescaled(self, factor):
        return Exponential(self.rate * factor, self.role)

    def analytic_regime(self):
        return dict(eps_h=self.rate, c_h=self.rate, is_decreasing=True)


class Weibull(Distribution):
    family = "weibull"

    def __init__(self, shape, scale, role="generic"):
        super().__init__(role)
        self.shape = float(shape)
        self.scale = float(scale)

    def params(self):
        return {"shape": self.shape, "scale": self.scale}

    @property
    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def _z(self, x):
        return (x / self.scale) ** self.shape

    def _survival(self, x):
        return np.exp(-self._z(x))

    def _cdf(self, x):
        return -np.expm1(-self._z(x))

    def _density(self, x):
        return self._hazard(x) * self._survival(x)

    def _hazard(self, x):
        k, c = self.shape, self.scale
        with np.errstate(divide="ignore"):
            if k < 1:
                return np.where(x > 0, (k / c) * (x / c) ** (k - 1), np.inf)
            return (k / c) * (x / c) ** (k - 1)

    def _isurv(self, x):
        a = 1.0 / self.shape
        return self.mean * special.gammainc(a, self._z(x))

    def _quantile(self, p):
        return self.scale * (-np.log1p(-p)) ** (1.0 / self.shape)

    def _sample(self, rng, size):
        return self.scale * rng.weibull(self.shape, size)

    def rescaled(self, factor):
        return Weibull(self.shape, self.scale / factor, self.role)

    def analytic_regime(self):
        k, c = self.shape, self.scale
        if k == 1:
            return dict(eps_h=1 / c, c_h=1 / c, is_decreasing=True)
        if k < 1:
            return dict(eps_h=0.0, c_h=math.inf, is_decreasing=True)
        return dict(eps_h=0.0, c_h=math.inf, is_decreasing=False)


class HyperExponential(Distribution):
    family = "hyperexponential"

    def __init__(self, probs, rates, role="generic"):
        super().__init__(role)
        self.probs = np.asarray(probs, dtype=float)
        self.rates = np.asarray(rates, dtype=float)

    def params(self):
        return {"p": self.probs.tolist(), "rates": self.rates.tolist()}

    @property
    def mean(self):
        return float(np.sum(self.probs / self.rates))

    def _terms(self, x):
        return self.probs * np.exp(-np.multiply.outer(x, self.rates))

    def _survival(self, x):
        return self._terms(x).sum(axis=-1)

    def _cdf(self, x):
        return -(self.probs * np.expm1(-np.multiply.outer(x, self.rates))).sum(axis=-1)

    def _density(self, x):
        return (self._terms(x) * self.rates).sum(axis=-1)

    def _hazard(self, x):
        # softmax weights keep the ratio finite far in the tail
        logw = np.log(self.probs) - np.multiply.outer(x, self.rates)
        w = np.exp(logw - logw.max(axis=-1, keepdims=True))
        return (w * self.rates).sum(axis=-1) / w.sum(axis=-1)

    def _isurv(self, x):
        return -(self.probs / self.rates * np.expm1(-np.multiply.outer(x, self.rates))).sum(
            axis=-1
        )

    def _sample(self, rng, size):
        phase = rng.choice(len(self.probs), size=size, p=self.probs / self.probs.sum())
        return rng.exponential(1.0, size) / self.rates[phase]

    def rescaled(self, factor):
        return HyperExponential(self.probs, self.rates * factor, self.role)

    def analytic_regime(self):
        return dict(
            eps_h=float(self.rates.min()),
            c_h=float(np.dot(self.probs, self.rates)),
            is_decreasing=True,
        )


class LogNormal(Distribution):
    family = "lognormal"

    def __init__(self, mu, sigma, role="generic"):
        super().__init__(role)
        self.mu = float(mu)
        self.sigma = float(sigma)

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}

    @property
    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def _std(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def _survival(self, x):
        return special.ndtr(-self._std(x))

    def _cdf(self, x):
        return special.ndtr(self._std(x))

    def _density(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self._std(x)
            out = np.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2 * math.pi))
        return np.where(x > 0, out, 0.0)

    def _hazard(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self._std(x)
            logh = (
                -0.5 * z * z
                - np.log(x * self.sigma * math.sqrt(2 * math.pi))
                - special.log_ndtr(-z)
            )
        return np.where(x > 0, np.exp(logh), 0.0)

    def _isurv(self, x):
        z = self._std(x)
        return x * special.ndtr(-z) + self.mean * special.ndtr(z - self.sigma)

    def _quantile(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(p))

    def _sample(self, rng, size):
        return rng.lognormal(self.mu, self.sigma, size)

    def rescaled(self, factor):
        return LogNormal(self.mu - math.log(factor), self.sigma, self.role)


class Erlang(Distribution):
    family = "erlang"

    def __init__(self, k, rate, role="generic"):
        super().__init__(role)
        self.k = int(k)
        self.rate = float(rate)

    def params(self):
        return {"k": self.k, "rate": self.rate}

    @property
    def mean(self):
        return self.k / self.rate

    def _survival(self, x):
        return special.gammaincc(self.k, self.rate * x)

    def _cdf(self, x):
        return special.gammainc(self.k, self.rate * x)

    def _density(self, x):
        return stats.gamma.pdf(x, self.k, scale=1.0 / self.rate)

    def _isurv(self, x):
        r, k = self.rate, self.k
        return x * special.gammaincc(k, r * x) + (k / r) * special.gammainc(k + 1, r * x)

    def _quantile(self, p):
        return special.gammaincinv(self.k, p) / self.rate

    def _sample(self, rng, size):
        return rng.gamma(self.k, 1.0 / self.rate, size)

    def rescaled(self, factor):
        return Erlang(self.k, self.rate * factor, self.role)

    def analytic_regime(self):
        if self.k == 1:
            return dict(eps_h=self.rate, c_h=self.rate, is_decreasing=True)
        return dict(eps_h=0.0, c_h=self.rate, is_decreasing=False)


class Uniform(Distribution):
    family = "uniform"

    def __init__(self, low, high, role="generic"):
        super().__init__(role)
        self.low = float(low)
        self.high = float(high)

    def params(self):
        return {"low": self.low, "high": self.high}

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    @property
    def support_end(self):
        return self.high

    def _cdf(self, x):
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    def _survival(self, x):
        return 1.0 - self._cdf(x)

    def _density(self, x):
        inside = (x >= self.low) & (x < self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def _isurv(self, x):
        a, b = self.low, self.high
        y = np.clip(x, a, b)
        return np.minimum(x, a) + ((b - a) ** 2 - (b - y) ** 2) / (2 * (b - a))

    def _quantile(self, p):
        return self.low + p * (self.high - self.low)

    def _sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def rescaled(self, factor):
        return Uniform(self.low / factor, self.high / factor, self.role)

    def analytic_regime(self):
        return dict(eps_h=0.0, c_h=math.inf, is_decreasing=False)


class GriddedDensity(Distribution):
    """Piecewise-linear density on nodes ``0, dx, ..., (n-1) dx``; normalized on construction."""

    family = "gridded-density"

    def __init__(self, dx, values, role="generic"):
        super().__init__(role)
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise DistributionError("gridded-density needs at least two node values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DistributionError("gridded-density values must be finite and >= 0")
        self.dx = float(dx)
        cell = 0.5 * self.dx * (values[:-1] + values[1:])
        total = cell.sum()
        if total <= 0:
            raise DistributionError("gridded-density has zero mass")
        self.values = values / total
        f = self.values
        self._cell_mass = 0.5 * self.dx * (f[:-1] + f[1:])
        self._F = np.concatenate([[0.0], np.cumsum(self._cell_mass)])
        self._F[-1] = 1.0
        sbar = 1.0 - self._F
        # exact integral of the piecewise-quadratic survival over each cell
        d = self.dx
        cell_i = sbar[:-1] * d - f[:-1] * d * d / 2 - (f[1:] - f[:-1]) * d * d / 6
        self._I = np.concatenate([[0.0], np.cumsum(cell_i)])
        nz = np.nonzero(f > 0)[0]
        self._H = (min(nz[-1] + 1, len(f) - 1)) * d

    def params(self):
        return {"dx": self.dx, "values": self.values.tolist()}

    @property
    def mean(self):
        return float(self._I[-1])

    @property
    def support_end(self):
        return self._H

    def _locate(self, x):
        n = len(self.values) - 1
        idx = np.clip(np.floor(x / self.dx).astype(np.int64), 0, n - 1)
        s = np.clip(x - idx * self.dx, 0.0, None)
        beyond = x >= n * self.dx
        return idx, np.where(beyond, self.dx, s), beyond

    def _cdf(self, x):
        idx, s, _ = self._locate(x)
        f0, f1 = self.values[idx], self.values[idx + 1]
        out = self._F[idx] + f0 * s + (f1 - f0) * s * s / (2 * self.dx)
        return np.minimum(out, 1.0)

    def _survival(self, x):
        return np.maximum(1.0 - self._cdf(x), 0.0)

    def _density(self, x):
        idx, s, beyond = self._locate(x)
        f0, f1 = self.values[idx], self.values[idx + 1]
        return np.where(beyond, 0.0, f0 + (f1 - f0) * s / self.dx)

    def _isurv(self, x):
        idx, s, beyond = self._locate(x)
        f0, f1 = self.values[idx], self.values[idx + 1]
        sb = 1.0 - self._F[idx]
        part = sb * s - f0 * s * s / 2 - (f1 - f0) * s**3 / (6 * self.dx)
        return self._I[idx] + part

    def rescaled(self, factor):
        return GriddedDensity(self.dx / factor, self.values * factor, self.role)


class Deterministic(Distribution):
    """Point mass; only the simulator accepts it (no density)."""

    family = "deterministic"
    absolutely_continuous = False

    def __init__(self, value, role="generic"):
        super().__init__(role)
        self.value = float(value)

    def params(self):
        return {"value": self.value}

    @property
    def mean(self):
        return self.value

    @property
    def support_end(self):
        return self.value

    def _survival(self, x):
        return np.where(x < self.value, 1.0, 0.0)

    def _cdf(self, x):
        return 1.0 - self._survival(x)

    def _density(self, x):
        raise DistributionError("deterministic law has no density")

    def _hazard(self, x):
        raise DistributionError("deterministic law has no hazard")

    def _isurv(self, x):
        return np.minimum(x, self.value)

    def _quantile(self, p):
        return np.full_like(p, self.value, dtype=float)

    def _sample(self, rng, size):
        return np.full(size if size is not None else (), self.value)

    def rescaled(self, factor):
        return Deterministic(self.value / factor, self.role)


# construction


def _num(params, key, family, positive=True):
    if key not in params:
        raise DistributionError(f"{family}: missing parameter '{key}'")
    try:
        value = float(params[key])
    except (TypeError, ValueError) as exc:
        raise DistributionError(f"{family}: parameter '{key}' is not a number") from exc
    if not math.isfinite(value) or (positive and value <= 0):
        raise DistributionError(f"{family}: parameter '{key}' must be positive and finite")
    return value


def _build(family, params, role):
    if family == "exponential":
        if "rate" in params and float(params["rate"]) == 0.0:
            raise DistributionError("exponential: rate 0 has infinite mean")
        if "mean" in params:
            return Exponential(1.0 / _num(params, "mean", family), role)
        return Exponential(_num(params, "rate", family), role)
    if family == "weibull":
        shape = _num(params, "shape", family)
        if "scale" in params:
            scale = _num(params, "scale", family)
        else:
            mean = _num(params, "mean", family) if "mean" in params else 1.0
            scale = mean / math.gamma(1.0 + 1.0 / shape)
        return Weibull(shape, scale, role)
    if family == "hyperexponential":
        probs = np.asarray(params.get("p", params.get("probs")), dtype=float)
        rates = np.asarray(params.get("rates"), dtype=float)
        if probs.ndim != 1 or probs.shape != rates.shape or len(probs) == 0:
            raise DistributionError("hyperexponential: 'p' and 'rates' must be equal-length lists")
        if np.any(probs < 0) or np.any(rates <= 0) or not np.all(np.isfinite(rates)):
            raise DistributionError("hyperexponential: need p >= 0 and rates > 0")
        total = probs.sum()
        if total < 1 - 1e-12:
            raise DistributionError(
                "hyperexponential: weights sum below 1 imply an atom at 0"
            )
        if total > 1 + 1e-12:
            raise DistributionError("hyperexponential: weights sum above 1")
        keep = probs > 0
        return HyperExponential(probs[keep] / total, rates[keep], role)
    if family == "lognormal":
        sigma = _num(params, "sigma", family)
        return LogNormal(_num(params, "mu", family, positive=False), sigma, role)
    if family == "erlang":
        k = params.get("k")
        if k is None or int(k) != float(k) or int(k) < 1:
            raise DistributionError("erlang: 'k' must be a positive integer")
        return Erlang(int(k), _num(params, "rate", family), role)
    if family == "uniform":
        low = _num(params, "low", family, positive=False) if "low" in params else 0.0
        high = _num(params, "high", family)
        if low < 0 or high <= low:
            raise DistributionError("uniform: need 0 <= low < high")
        return Uniform(low, high, role)
    if family == "gridded-density":
        return GriddedDensity(_num(params, "dx", family), params.get("values", []), role)
    if family == "deterministic":
        value = _num(params, "value", family, positive=False)
        if value <= 0:
            raise DistributionError("deterministic: value 0 is an atom at 0")
        return Deterministic(value, role)
    raise DistributionError(f"unknown family '{family}' (choose from {', '.join(FAMILIES)})")


def make_distribution(family, params=None, role="generic", normalize=None):
    """Build a law from a family tag and parameter mapping.

    Service laws are rescaled to mean 1 unless ``normalize=False``.
    """
    params = dict(params or {})
    if role not in ROLES:
        raise DistributionError(f"unknown role '{role}'")
    dist = _build(family, params, role)
    mean = dist.mean
    if not math.isfinite(mean) or mean <= 0:
        raise DistributionError(f"{family}: infinite or zero mean")
    if normalize is None:
        normalize = role == "service"
    if normalize:
        dist = dist.rescaled(mean)
        if abs(dist.mean - 1.0) > 1e-10:
            # gridded laws pick up roundoff in the rescale; one more pass settles it
            dist = dist.rescaled(dist.mean)
    return dist


def from_spec(spec, role=None):
    """Build from a ``{family, params, role}`` mapping as found in scenario files."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise DistributionError("distribution spec needs a 'family' key")
    return make_distribution(
        spec["family"],
        spec.get("params", {}),
        role=role or spec.get("role", "generic"),
        normalize=spec.get("normalize"),
    )


# hazard classification


@dataclass(frozen=True)
class HazardRegime:
    eps_h: float
    c_h: float
    is_decreasing: bool
    is_bounded_away: bool
    scan_grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    analytic: bool = False


def default_scan_grid(d: Distribution, points=10_000, delta=None):
    lo = 1e-8 * d.mean
    if math.isfinite(d.support_end):
        hi = d.support_end - (delta if delta is not None else 1e-6 * d.support_end)
    else:
        hi = float(d.quantile(1 - 1e-12))
    return np.geomspace(lo, max(hi, 10 * lo), points)


def classify_hazard(d: Distribution, scan_grid=None, force_scan=False) -> HazardRegime:
    """Essential inf/sup and monotonicity of the hazard.

    Analytic when the family allows it; otherwise a scan over a log-spaced
    grid.  The scan only claims boundedness away from zero when the hazard
    has flattened out over the last tenth of the grid.
    """
    if not d.absolutely_continuous:
        raise DistributionError("hazard undefined for a law without density")
    known = None if force_scan else d.analytic_regime()
    if known is not None:
        eps, c = known["eps_h"], known["c_h"]
        bounded = eps > 0 and math.isfinite(c)
        return HazardRegime(eps, c, known["is_decreasing"], bounded, None, True)
    grid = default_scan_grid(d) if scan_grid is None else np.asarray(scan_grid, float)
    h = np.asarray(d.hazard(grid), dtype=float)
    isfin = np.isfinite(h)
    finite = bool(np.all(isfin))
    eps = float(np.nanmin(h))
    c = float(np.max(h)) if finite else math.inf
    # an infinite hazard is compatible with monotone decrease only as a prefix
    first = int(np.argmax(isfin)) if isfin.any() else len(h)
    prefix_ok = bool(np.all(isfin[first:]))
    decreasing = prefix_ok and bool(np.all(np.diff(h[isfin]) <= 1e-10))
    tail = h[-max(len(h) // 10, 2):]
    flat = abs(tail[0] - tail[-1]) <= 1e-3 * max(abs(tail[-1]), 1e-300)
    bounded = bool(eps > 0 and math.isfinite(c) and flat)
    return HazardRegime(max(eps, 0.0), c, decreasing, bounded, grid, False)
