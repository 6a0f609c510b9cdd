import math
import warnings

import numpy as np
import pytest

from fluidq.des import (
    DesConfig,
    birthdeath_distribution,
    birthdeath_oracle,
    birthdeath_stats,
    lag1_autocorr,
    replication_seeds,
    simulate,
    stationary_estimate,
)
from fluidq.distributions import make_distribution
from fluidq.errors import ConfigError
from fluidq.fluid import FluidConfig, solve
from fluidq.multiclass import MulticlassConfig, solve_multiclass
from oracles import mmnm_mean_over_N, poisson_mean_over_N

EXP = make_distribution("exponential", {"rate": 1.0}, "service")
PAT = make_distribution("exponential", {"rate": 1.0}, "patience")
DET = make_distribution("deterministic", {"value": 1.0}, "service")
LOGN = make_distribution("lognormal", {"mu": 0.0, "sigma": 0.8}, "service")
WEIB_PAT = make_distribution("weibull", {"shape": 1.5}, "patience")


# single runs


def test_same_seed_is_bitwise_identical():
    cfg = DesConfig(50, 1.5, LOGN, WEIB_PAT, seed=7, horizon=20, snapshot_times=(10.0,))
    a, b = simulate(cfg), simulate(cfg)
    for name in ("X", "B", "Q", "batch_X", "arrivals", "departures", "reneges"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.snapshots[10.0][0], b.snapshots[10.0][0])


def test_different_seeds_differ():
    a = simulate(DesConfig(50, 1.5, EXP, PAT, seed=1, horizon=10))
    b = simulate(DesConfig(50, 1.5, EXP, PAT, seed=2, horizon=10))
    assert not np.array_equal(a.X, b.X)


def test_md1_utilization():
    tr = simulate(DesConfig(1, 0.5, DET, None, seed=3, horizon=1e4, warmup=100.0))
    assert tr.batch_B.mean() == pytest.approx(0.5, abs=0.02)
    assert tr.reneges.sum() == 0


@pytest.mark.parametrize("patience", [PAT, WEIB_PAT, None])
def test_mass_balance(patience):
    tr = simulate(DesConfig(40, 1.3, LOGN, patience, seed=11, horizon=30))
    assert np.array_equal(tr.arrivals, tr.departures + tr.reneges + tr.in_system())


def test_work_conservation_at_events():
    tr = simulate(DesConfig(30, 1.2, LOGN, WEIB_PAT, seed=5, horizon=30, record_events=True, audit=True))
    idle = tr.event_B < 1 - 1e-12
    assert np.all(tr.event_Q[idle] == 0)
    assert np.all(tr.event_B <= 1 + 1e-12)
    np.testing.assert_allclose(tr.event_X, tr.event_B + tr.event_Q, atol=1e-12)
    assert tr.audit_violations == 0


def test_sample_split_and_bounds():
    tr = simulate(DesConfig(100, 2.0, EXP, PAT, seed=2, horizon=20))
    np.testing.assert_allclose(tr.X, tr.B + tr.Q, atol=1e-12)
    assert np.all(tr.B_tot <= 1 + 1e-12)
    assert np.all(tr.Q_tot[tr.B_tot < 1] == 0)


def test_snapshots_are_consistent():
    cfg = DesConfig(200, 1.5, EXP, PAT, seed=9, horizon=10, sample_dt=0.5, snapshot_times=(5.0, 10.0))
    tr = simulate(cfg)
    for ts in (5.0, 10.0):
        nu, eta = tr.nu_at(ts), tr.eta_at(ts)
        m = int(round(ts / cfg.sample_dt))
        assert nu.mass() == pytest.approx(tr.B_tot[m], abs=1e-12)
        assert nu.mass() <= 1 + 1e-12
        ages_nu, ages_eta = tr.snapshots[ts]
        assert np.all(ages_nu >= 0) and np.all(ages_eta >= 0)
        assert np.all(ages_nu <= ts) and np.all(ages_eta <= ts)
        # waiting jobs are all still potential-queue members
        assert eta.mass() >= tr.Q_tot[m] - 1e-12


def test_records_rows():
    tr = simulate(DesConfig(10, 1.0, EXP, PAT, seed=1, horizon=1, sample_dt=0.5))
    rows = list(tr.records())
    assert [r["t"] for r in rows] == [0.0, 0.5, 1.0]
    assert set(rows[0]) == {"t", "X", "B", "Q"}


def test_config_errors():
    with pytest.raises(ConfigError) as e:
        DesConfig(0, 1.0, EXP, PAT).validate()
    assert e.value.field == "N"
    with pytest.raises(ConfigError) as e:
        DesConfig(5, -1.0, EXP, PAT).validate()
    assert e.value.field == "lambda"
    with pytest.raises(ConfigError):
        DesConfig(5, 1.0, EXP, PAT, horizon=10, warmup=20).validate()


# multiclass priority


def test_multiclass_priority_audit_and_fluid_agreement():
    lam, theta = (0.5, 0.8), (1.0, 2.0)
    pats = tuple(make_distribution("exponential", {"rate": th}, "patience") for th in theta)
    tr = simulate(DesConfig(1000, lam, EXP, pats, seed=4, horizon=20, audit=True))
    assert tr.audit_violations == 0
    assert np.array_equal(tr.arrivals, tr.departures + tr.reneges + tr.in_system())
    fl = solve_multiclass(MulticlassConfig(lam, theta, EXP, dt=0.01, horizon=20))
    idx = np.rint(tr.t / 0.01).astype(int)
    late = tr.t >= 10
    # time averages over [10, 20] smooth out the N^-1/2 fluctuations
    gap = np.abs(tr.Q[:, late].mean(axis=1) - fl.Q[:, idx[late]].mean(axis=1))
    assert np.all(gap < 0.03)
    # the high-priority class hardly ever waits
    assert tr.Q[0].max() < 0.02


# birth-death oracle


@pytest.mark.parametrize(
    "lam,theta,N", [(0.5, 1.0, 1), (0.5, 0.3, 1), (1.2, 0.7, 5), (2.0, 0.5, 20), (0.8, 3.0, 10)]
)
def test_birthdeath_against_exact_rationals(lam, theta, N):
    ref = mmnm_mean_over_N(lam, theta, N, n_max=int(40 * N * max(lam, 1) / min(theta, 1)) + 200)
    assert birthdeath_oracle(lam, theta, N) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("N", [10, 500, 2000])
def test_birthdeath_poisson_case(N):
    # with theta = 1 every job leaves at rate 1: M/M/infinity
    assert birthdeath_oracle(2.0, 1.0, N) == pytest.approx(poisson_mean_over_N(2.0, N), rel=1e-12)


def test_birthdeath_limits():
    assert birthdeath_oracle(1e-9, 1.0, 10) < 1e-9
    assert birthdeath_oracle(0.0, 1.0, 10) == 0.0
    p = birthdeath_distribution(1.5, 0.5, 50)
    assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
    s = birthdeath_stats(1.5, 0.5, 50)
    assert s["x"] == pytest.approx(s["b"] + s["q"], rel=1e-12)
    with pytest.raises(ValueError):
        birthdeath_distribution(1.5, 0.0, 10)


# stationary estimates


def test_replication_seeds_distinct_and_stable():
    s = replication_seeds(42, 20)
    assert len(set(s)) == 20 and s == replication_seeds(42, 20)


def test_lag1_autocorr():
    assert lag1_autocorr(np.ones(10)) == 0.0
    assert lag1_autocorr(np.arange(50.0)) > 0.9
    alt = np.array([1.0, -1.0] * 20)
    assert lag1_autocorr(alt) < -0.9


def test_stationary_supercritical_n500():
    cfg = DesConfig(500, 2.0, EXP, PAT, seed=2026, horizon=60, warmup=20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = stationary_estimate(cfg, replications=8)
    assert est.x == pytest.approx(2.0, abs=0.05)
    assert abs(est.x - birthdeath_oracle(2.0, 1.0, 500)) <= max(3 * est.x_se, 1e-3)
    assert set(est.to_dict()) >= {"x", "b", "q", "psi", "batch_autocorr", "reliable"}
    # with theta = 1 and exp service, <1, nu> averages to the busy fraction
    assert est.psi["one"][0] == pytest.approx(est.b, abs=0.01)


def test_stationary_subcritical_busy_fraction():
    cfg = DesConfig(500, 0.5, EXP, PAT, seed=99, horizon=60, warmup=20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = stationary_estimate(cfg, replications=6)
    assert est.b == pytest.approx(0.5, abs=0.03)
    assert est.b == pytest.approx(birthdeath_stats(0.5, 1.0, 500)["b"], abs=0.03)


def test_stationary_needs_two_replications():
    with pytest.raises(ConfigError):
        stationary_estimate(DesConfig(10, 1.0, EXP, PAT, horizon=30, warmup=5), replications=1)


def test_autocorrelation_warning():
    # very short batches of a slowly mixing system
    cfg = DesConfig(2000, 2.0, EXP, PAT, seed=1, horizon=2.0, warmup=0.0, n_batches=20)
    with pytest.warns(RuntimeWarning, match="autocorrelation"):
        est = stationary_estimate(cfg, replications=2)
    assert not est.reliable


# fluid limit at N = 2000


@pytest.fixture(scope="module")
def sup_errors_n2000():
    fluid = solve(FluidConfig(2.0, EXP, PAT, dt=0.001, horizon=20))
    sups = []
    for s in replication_seeds(2000, 20):
        tr = simulate(DesConfig(2000, 2.0, EXP, PAT, seed=s, horizon=20, record_events=True))
        ref = np.interp(tr.event_t, fluid.t, fluid.X)
        sups.append(float(np.max(np.abs(tr.event_X - ref))))
    return np.array(sups)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="sup over [0, 20] of N^-1/2-scale fluctuations at N = 2000 is about 0.09 on "
    "typical paths; 0.05 is below the achievable fluctuation level",
)
def test_fluid_limit_sup_within_005(sup_errors_n2000):
    assert np.mean(sup_errors_n2000 < 0.05) >= 0.95


@pytest.mark.slow
def test_fluid_limit_sup_at_fluctuation_scale(sup_errors_n2000):
    assert np.mean(sup_errors_n2000 < 6 * math.sqrt(2 / 2000)) >= 0.95
