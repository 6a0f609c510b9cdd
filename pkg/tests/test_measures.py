import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluidq.distributions import make_distribution
from fluidq.measures import (
    ONE,
    MeasureError,
    atoms,
    bl_distance,
    constant,
    dirac,
    distances,
    equilibrium,
    from_density,
    hazard_fn,
    integrate,
    inverse_cdf,
    survival_weighted,
    tv_distance,
    zero,
)

EXP = make_distribution("exponential", {"rate": 1.0}, "service")
LOGN = make_distribution("lognormal", {"mu": 0.0, "sigma": 0.6}, "service")


def test_dirac_integral():
    psi = lambda x: np.cos(x) + 2  # noqa: E731
    assert integrate(psi, dirac(1.7)) == pytest.approx(math.cos(1.7) + 2)


def test_equilibrium_has_unit_mass():
    for d in (EXP, LOGN, make_distribution("weibull", {"shape": 0.5}, "service")):
        assert integrate(ONE, equilibrium(d)) == pytest.approx(1.0, abs=1e-10)


def test_uniform_density_first_moment():
    mu = from_density(0.01, np.ones(101))
    assert integrate(lambda x: x, mu, upper=1.0) == pytest.approx(0.5, abs=1e-12)


def test_inverse_cdf_at_zero_is_zero():
    assert inverse_cdf(equilibrium(EXP), 0.0) == 0.0
    assert inverse_cdf(dirac(2.0), 0.0) == 0.0


def test_inverse_cdf_exponential_median():
    assert inverse_cdf(equilibrium(EXP), 0.5) == pytest.approx(math.log(2), abs=1e-10)


def test_inverse_cdf_atom():
    assert inverse_cdf(dirac(1.0), 0.5) == pytest.approx(1.0, abs=1e-12)


def test_inverse_cdf_full_mass_gives_support_sup():
    mu = atoms([0.5, 2.0], [0.3, 0.7])
    assert inverse_cdf(mu, 1.0) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(MeasureError):
        inverse_cdf(mu, 1.5)


def test_inverse_cdf_flat_region_left_edge():
    mu = atoms([1.0, 3.0], [0.5, 0.5])
    assert inverse_cdf(mu, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_distances_identity():
    mu = equilibrium(EXP, 0.7)
    bl, tv = distances(mu, mu, dx=0.01)
    assert bl == pytest.approx(0.0, abs=1e-14)
    assert tv == pytest.approx(0.0, abs=1e-14)


def test_disjoint_diracs():
    bl, tv = distances(dirac(0.0), dirac(1.0), dx=0.01)
    assert tv == pytest.approx(2.0)
    assert bl == pytest.approx(1.0, abs=1e-12)
    assert bl_distance(dirac(0.0), dirac(1.0), dx=0.01, method="lp") == pytest.approx(1.0, abs=1e-9)


def test_half_equilibrium_tv():
    tv = tv_distance(equilibrium(EXP, 0.5), equilibrium(EXP), dx=0.01)
    assert tv == pytest.approx(0.5, abs=1e-10)


def test_dictionary_bl_is_lower_bound_of_lp():
    mu = equilibrium(EXP, 0.8)
    rho = from_density(0.05, np.linspace(1.0, 0.0, 41))
    d = bl_distance(mu, rho, dx=0.05)
    lp = bl_distance(mu, rho, dx=0.05, method="lp")
    assert d <= lp + 1e-9
    assert d >= 0.5 * lp


def test_shift_exact_for_survival_weighted_part():
    mu = equilibrium(EXP, 1.0)
    for t in (0.0, 0.5, 3.0):
        assert mu.shift(t, EXP).mass() == pytest.approx(math.exp(-t), abs=1e-12)
    mu = equilibrium(LOGN)
    masses = [mu.shift(t, LOGN).mass() for t in np.linspace(0, 5, 11)]
    assert np.all(np.diff(masses) <= 1e-14)
    # <1, shift(nu*, t)> = int_t^inf Gbar
    assert masses[2] == pytest.approx(LOGN.mean - LOGN.integrated_survival(1.0), abs=1e-10)


def test_shift_of_atom_reweights_by_survival_ratio():
    mu = dirac(1.0, 2.0)
    shifted = mu.shift(0.5, LOGN)
    ratio = LOGN.survival(1.5) / LOGN.survival(1.0)
    assert shifted.mass() == pytest.approx(2.0 * ratio, rel=1e-12)
    assert shifted.atom_x[0] == pytest.approx(1.5)


def test_shifted_grid_mass_dominated():
    mu = from_density(0.1, np.linspace(2.0, 0.0, 21))
    m0 = mu.mass()
    m = [mu.shift(t, LOGN).mass() for t in (0.0, 0.3, 1.0, 2.0)]
    assert m[0] == pytest.approx(m0, rel=1e-8)
    assert np.all(np.diff(m) <= 1e-12)


def test_hazard_integral_of_survival_weighted_is_exact():
    w = np.array([0.5, 1.0, 2.0])
    mu = survival_weighted(LOGN, 0.1, w)
    edges = 0.1 * np.arange(4)
    exact = float(np.dot(w, -np.diff(LOGN.survival(edges))))
    assert integrate(hazard_fn(LOGN), mu) == pytest.approx(exact, rel=1e-12)


def test_json_round_trip_fields():
    mu = atoms([0.5], [0.25]) + from_density(0.5, [1.0, 0.5, 0.0])
    data = json.loads(json.dumps(mu.to_json()))
    assert data["atoms"] == [[0.5, 0.25]]
    assert data["grid"]["dx"] == 0.5


def test_constant_test_function_bound():
    assert constant(3.0).bound == 3.0
    assert ONE.kind == "one"


@st.composite
def measures(draw):
    n_atoms = draw(st.integers(0, 3))
    xs = draw(st.lists(st.floats(0, 5), min_size=n_atoms, max_size=n_atoms))
    ms = draw(st.lists(st.floats(0.01, 2), min_size=n_atoms, max_size=n_atoms))
    vals = draw(st.lists(st.floats(0, 3), min_size=2, max_size=30))
    mu = from_density(0.1, vals)
    if n_atoms:
        mu = mu + atoms(xs, ms)
    coef = draw(st.floats(0, 1.5))
    if coef > 0:
        mu = mu + equilibrium(LOGN, coef)
    return mu


@given(measures())
def test_integral_of_one_is_mass(mu):
    assert integrate(ONE, mu) == pytest.approx(mu.mass(), rel=1e-10, abs=1e-12)


@given(measures(), st.floats(0, 1))
def test_right_continuous_inverse(mu, frac):
    y = frac * mu.mass()
    x = inverse_cdf(mu, y)
    assert mu.cdf(x) >= y - 1e-9 * max(1.0, mu.mass())


@given(measures(), st.floats(0, 10), st.floats(0, 10))
def test_cdf_monotone(mu, a, b):
    lo, hi = min(a, b), max(a, b)
    assert mu.cdf(lo) <= mu.cdf(hi) + 1e-12


@given(measures(), st.floats(0, 3), st.floats(0, 3))
def test_shift_mass_nonincreasing(mu, s, t):
    lo, hi = min(s, t), max(s, t)
    assert mu.shift(hi, LOGN).mass() <= mu.shift(lo, LOGN).mass() + 1e-10


@given(measures(), measures())
def test_tv_zero_iff_equal(mu, rho):
    assert tv_distance(mu, mu, dx=0.1) == pytest.approx(0.0, abs=1e-12)
    tv = tv_distance(mu, rho, dx=0.1)
    if tv is not None and tv < 1e-12:
        assert mu.mass() == pytest.approx(rho.mass(), abs=1e-10)


@given(measures(), measures())
def test_bl_symmetric_and_bounded_by_tv(mu, rho):
    a = bl_distance(mu, rho, dx=0.1)
    b = bl_distance(rho, mu, dx=0.1)
    assert a == pytest.approx(b, abs=1e-12)
    tv = tv_distance(mu, rho, dx=0.1)
    if tv is not None:
        assert a <= tv + 1e-9


def test_zero_measure():
    z = zero()
    assert z.mass() == 0.0
    assert inverse_cdf(z, 0.0) == 0.0
