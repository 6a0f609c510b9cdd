import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fluidq.distributions import (
    DistributionError,
    classify_hazard,
    from_spec,
    make_distribution,
)
from oracles import hyperexp_mean1, quad_inf

HYPER = {"probs": [0.5, 0.5], "rates": [0.5, 2.0]}

FAMILIES = [
    ("exponential", {"rate": 2.0}),
    ("weibull", {"shape": 0.5}),
    ("weibull", {"shape": 2.0}),
    ("hyperexponential", HYPER),
    ("lognormal", {"mu": 0.0, "sigma": 0.7}),
    ("erlang", {"k": 2, "rate": 2.0}),
    ("uniform", {"low": 0.0, "high": 2.0}),
    ("gridded-density", {"dx": 0.1, "values": [1.0, 0.8, 0.6, 0.4, 0.2, 0.0]}),
]


def _law(family, params, role="service"):
    return make_distribution(family, params, role)


def test_exponential_survival_and_hazard():
    d = _law("exponential", {"rate": 1.0})
    assert d.survival(1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert d.survival(1.0) == pytest.approx(0.367879, abs=1e-6)
    np.testing.assert_allclose(d.hazard(np.linspace(0, 20, 11)), 1.0, rtol=0, atol=1e-15)


def test_weibull_half_is_decreasing():
    assert classify_hazard(_law("weibull", {"shape": 0.5, "mean": 1.0})).is_decreasing


def test_hyperexponential_mean_one_by_quadrature():
    d = _law("hyperexponential", HYPER)
    p, r = hyperexp_mean1(HYPER["probs"], HYPER["rates"])
    assert quad_inf(lambda x: float(np.sum(p * np.exp(-r * x)))) == pytest.approx(1.0, abs=1e-10)
    assert quad_inf(lambda x: float(d.survival(x))) == pytest.approx(1.0, abs=1e-8)


def test_classify_exponential():
    reg = classify_hazard(_law("exponential", {"rate": 1.0}))
    assert (reg.eps_h, reg.c_h, reg.is_decreasing, reg.is_bounded_away) == (1.0, 1.0, True, True)


def test_classify_weibull_two():
    reg = classify_hazard(_law("weibull", {"shape": 2.0}))
    assert not reg.is_decreasing
    assert reg.eps_h == 0.0


def test_classify_hyperexponential_by_scan():
    d = _law("hyperexponential", HYPER)
    assert classify_hazard(d).is_decreasing
    scanned = classify_hazard(d, force_scan=True)
    assert scanned.is_decreasing and scanned.scan_grid is not None
    assert len(scanned.scan_grid) == 10_000


def test_classify_lognormal_not_bounded_away():
    reg = classify_hazard(_law("lognormal", {"mu": 0.0, "sigma": 0.7}))
    assert not reg.is_decreasing
    assert not reg.is_bounded_away


def test_bounded_away_implies_positive_finite():
    for fam, par in FAMILIES:
        reg = classify_hazard(_law(fam, par))
        if reg.is_bounded_away:
            assert reg.eps_h > 0 and math.isfinite(reg.c_h)


@pytest.mark.parametrize("family,params", FAMILIES)
def test_service_mean_normalized(family, params):
    d = _law(family, params)
    assert d.mean == pytest.approx(1.0, abs=1e-10)
    end = d.support_end
    val = quad_inf(lambda x: float(d.survival(x)), 0.0, end if math.isfinite(end) else np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("family,params", FAMILIES)
def test_density_integrates_to_one(family, params):
    d = _law(family, params)
    end = d.support_end
    if family == "weibull" and params["shape"] < 1:
        total = quad_inf(lambda x: float(d.density(x)), 0.0, 1.0) + quad_inf(
            lambda x: float(d.density(x)), 1.0
        )
    else:
        total = quad_inf(lambda x: float(d.density(x)), 0.0, end if math.isfinite(end) else np.inf)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("family,params", FAMILIES)
def test_survival_is_exp_of_minus_cumulative_hazard(family, params):
    d = _law(family, params)
    end = d.support_end
    top = 0.95 * end if math.isfinite(end) else float(d.quantile(0.999))
    for x in np.linspace(0.05, top, 7):
        pts = [p for p in np.arange(0.0, x, 0.1) if p > 0] if family == "gridded-density" else None
        cum, _ = __import__("scipy").integrate.quad(
            lambda u: float(d.hazard(u)), 0.0, x, limit=400, points=pts
        )
        assert abs(float(d.survival(x)) - math.exp(-cum)) < 1e-6


@pytest.mark.parametrize("family,params", FAMILIES)
def test_survival_basic_shape(family, params):
    d = _law(family, params)
    assert d.survival(0.0) == pytest.approx(1.0)
    x = np.linspace(0, 10, 400)
    assert np.all(np.diff(d.survival(x)) <= 1e-15)
    assert np.all(d.density(x[x < d.support_end]) >= 0)
    far = d.support_end if math.isfinite(d.support_end) else float(d.quantile(1 - 1e-13))
    assert d.survival(far) < 1e-12


@pytest.mark.parametrize(
    "family,params,ref",
    [
        ("exponential", {"rate": 1.0}, stats.expon()),
        ("weibull", {"shape": 2.0, "scale": 1 / math.gamma(1.5)}, stats.weibull_min(2.0, scale=1 / math.gamma(1.5))),
        ("lognormal", {"mu": -0.125, "sigma": 0.5}, stats.lognorm(s=0.5, scale=math.exp(-0.125))),
        ("erlang", {"k": 3, "rate": 3.0}, stats.gamma(3, scale=1 / 3)),
        ("uniform", {"low": 0.0, "high": 2.0}, stats.uniform(0, 2)),
    ],
)
def test_against_scipy(family, params, ref):
    d = _law(family, params)
    x = np.linspace(0.01, 1.9, 37)
    np.testing.assert_allclose(d.survival(x), ref.sf(x), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(d.density(x), ref.pdf(x), rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(d.quantile([0.1, 0.5, 0.9]), ref.ppf([0.1, 0.5, 0.9]), rtol=1e-8)


def test_rescaling_preserves_monotonicity_flags():
    for fam, par in FAMILIES[:6]:
        raw = make_distribution(fam, par, "patience")
        svc = make_distribution(fam, par, "service")
        assert classify_hazard(raw).is_decreasing == classify_hazard(svc).is_decreasing
        assert classify_hazard(raw).is_bounded_away == classify_hazard(svc).is_bounded_away


def test_hazard_capped_before_support_end():
    d = _law("uniform", {"low": 0.0, "high": 2.0})
    with pytest.raises(ValueError):
        d.hazard(1.99, delta=0.1)
    assert d.hazard(1.0, delta=0.1) == pytest.approx(1.0)


def test_rejects_atom_at_zero():
    with pytest.raises(DistributionError, match="atom"):
        make_distribution("hyperexponential", {"probs": [0.4, 0.4], "rates": [1, 2]})
    with pytest.raises(DistributionError):
        make_distribution("deterministic", {"value": 0.0})


def test_rejects_infinite_patience_mean():
    with pytest.raises(DistributionError):
        make_distribution("exponential", {"rate": 0.0}, "patience")


def test_rejects_unknown_family():
    with pytest.raises(DistributionError, match="unknown family"):
        make_distribution("pareto", {})


def test_from_spec_round_trip():
    d = from_spec({"family": "weibull", "params": {"shape": 0.5}, "role": "service"})
    assert d == make_distribution("weibull", {"shape": 0.5}, "service")
    assert d.describe()["family"] == "weibull"


@given(
    shape=st.floats(0.3, 5.0),
    x=st.floats(0.0, 20.0),
    y=st.floats(0.0, 20.0),
)
def test_weibull_survival_monotone_and_consistent(shape, x, y):
    d = make_distribution("weibull", {"shape": shape}, "service")
    lo, hi = min(x, y), max(x, y)
    assert d.survival(hi) <= d.survival(lo) + 1e-15
    assert d.cdf(x) + d.survival(x) == pytest.approx(1.0, abs=1e-14)
    assert d.integrated_survival(x) <= min(x, d.mean) + 1e-12


@given(p=st.floats(0.05, 0.95), r1=st.floats(0.1, 1.0), r2=st.floats(1.0, 10.0), q=st.floats(1e-6, 1 - 1e-6))
def test_hyperexp_quantile_inverts_cdf(p, r1, r2, q):
    d = make_distribution("hyperexponential", {"probs": [p, 1 - p], "rates": [r1, r2]}, "service")
    assert d.cdf(d.quantile(q)) == pytest.approx(q, abs=1e-9)
    assert classify_hazard(d).is_decreasing


def test_sample_mean(rng):
    for fam, par in FAMILIES:
        d = _law(fam, par)
        xs = d.sample(rng, 200_000)
        assert abs(xs.mean() - 1.0) < 6 * xs.std() / math.sqrt(len(xs))
