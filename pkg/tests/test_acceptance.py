"""Acceptance criteria 1-10, one test each.

Every test prints a single ``CRITERION n: PASS|FAIL`` line with the measured
quantities, then asserts.  Trajectories shared between criteria are module
fixtures.
"""
import math
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest

from fluidq.des import DesConfig, birthdeath_oracle, stationary_estimate
from fluidq.distributions import classify_hazard, make_distribution
from fluidq.entropy import entropy_estimate_gap, entropy_trace, envelope_check, theta_decay_margin
from fluidq.fluid import FluidConfig, check_invariants, solve, time_shift_check
from fluidq.invariant import invariant_state
from fluidq.measures import bl_distance, equilibrium, from_density, hazard_fn
from fluidq.multiclass import MulticlassConfig, rho_q, solve_multiclass
from fluidq.renewal import concavity_check, renewal_density, wz_trace
from oracles import erlang2_renewal_density
from scenario_gen import random_configs

EXP = make_distribution("exponential", {"rate": 1.0}, "service")
PAT = make_distribution("exponential", {"rate": 1.0}, "patience")
WEIB_HALF = make_distribution("weibull", {"shape": 0.5}, "service")
ERL = make_distribution("erlang", {"k": 2, "rate": 2.0}, "service")


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def subcritical():
    return solve(FluidConfig(0.5, EXP, PAT, dt=0.01, horizon=30))


@pytest.fixture(scope="module")
def supercritical():
    return solve(FluidConfig(2.0, EXP, PAT, dt=0.01, horizon=50))


@pytest.fixture(scope="module")
def critical():
    t0 = time.perf_counter()
    tr = solve(FluidConfig(1.0, WEIB_HALF, PAT, dt=0.005, horizon=100))
    wz = wz_trace(tr, renewal_density(WEIB_HALF, 0.005, 100), 1.0, 0.1)
    return tr, wz, time.perf_counter() - t0


def test_criterion_1_subcritical_convergence(capsys, subcritical):
    tr = subcritical
    ex, eb = abs(tr.X[-1] - 0.5), abs(tr.B[-1] - 0.5)
    bl_nu = bl_distance(tr.nu_at(tr.n), equilibrium(EXP, 0.5))
    bl_eta = bl_distance(tr.eta_at(tr.n), equilibrium(PAT, 0.5))
    ok = ex < 1e-3 and eb < 1e-3 and bl_nu < 5e-3 and bl_eta < 5e-3
    report(capsys, 1, ok, f"|X-0.5|={ex:.2e} |B-0.5|={eb:.2e} BL_nu={bl_nu:.2e} BL_eta={bl_eta:.2e}")


def test_criterion_2_supercritical_saturation(capsys, supercritical):
    tr = supercritical
    T = tr.saturation_time()
    e = entropy_trace(tr)
    tv_ok = bool(np.all(e.tv_actual <= e.tv_bound + 1e-12))
    h_err = abs(tr.nu_at(tr.n).integrate(hazard_fn(EXP)) - 1)
    star = invariant_state(2.0, EXP, PAT)
    q_err = abs(tr.Q[-1] - (star.x_star - 1))
    ok = T is not None and e.r[-1] < 1e-3 and tv_ok and h_err < 1e-3 and q_err < 1e-3 and star.x_star == pytest.approx(2.0)
    report(
        capsys, 2, ok,
        f"T={T} r50={e.r[-1]:.2e} tv<=bound:{tv_ok} |<h,nu>-1|={h_err:.2e} |Q-(x*-1)|={q_err:.2e}",
    )


def test_criterion_3_critical_decreasing_hazard(capsys, critical):
    tr, wz, secs = critical
    assert classify_hazard(WEIB_HALF).is_decreasing
    drop = float(-np.min(np.diff(wz.W)))
    ok = tr.B[-1] > 0.99 and drop <= 1e-12 and wz.W[-1] > wz.W[len(wz.W) // 2] and secs < 300
    report(capsys, 3, ok, f"B(100)={tr.B[-1]:.6f} max W decrease={max(drop, 0.0):.1e} runtime={secs:.1f}s")


def _gap_law(law, rng, count):
    worst = math.inf
    for _ in range(count):
        a = rng.uniform(0.2, 3.0)
        c1 = rng.uniform(0, 1)
        c2 = rng.uniform(0, 1 - c1)
        dx = a / 400
        x = dx * np.arange(int(30 / dx) + 1)
        f = from_density(dx, c1 * (x <= a) / a + c2 * law.survival(x))
        f = f.scale((c1 + c2 * law.mean) / f.mass())  # grid rounding of the box
        worst = min(worst, entropy_estimate_gap(f, law))
    return worst


def test_criterion_4_entropy_estimate(capsys):
    laws = [
        EXP,
        make_distribution("hyperexponential", {"p": [0.5, 0.5], "rates": [1.0, 3.0]}, "service"),
        make_distribution("hyperexponential", {"p": [0.2, 0.8], "rates": [0.5, 4.0 / 3.0]}, "service"),
    ]
    rng = np.random.default_rng(4)
    worst = [_gap_law(law, rng, 100) for law in laws]
    ok = min(worst) >= -1e-8
    report(capsys, 4, ok, "min gap per law: " + ", ".join(f"{w:.2e}" for w in worst))


def test_criterion_5_pinsker_along_trajectories(capsys, subcritical, supercritical, critical):
    excess = []
    for tr in (subcritical, supercritical, critical[0]):
        e = entropy_trace(tr)
        excess.append(float(np.max(e.tv_actual - e.tv_bound)))
    ok = max(excess) <= 1e-12
    report(capsys, 5, ok, "max(tv - bound) per trajectory: " + ", ".join(f"{x:.2e}" for x in excess))


def test_criterion_6_envelope_and_theta_decay(capsys, supercritical):
    e = entropy_trace(supercritical)
    pairs = [(s, t) for s in (0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0) for t in (s + 0.5, s + 2, s + 10, 50.0) if t <= 50]
    reps = [envelope_check(e, s, t, slack=1e-4) for s, t in pairs]
    checked = [r for r in reps if r.applicable]
    env_margin = min(r.margin for r in checked)
    th = theta_decay_margin(e)
    ok = all(r.passed for r in reps) and len(checked) > 0 and th >= -1e-4
    report(capsys, 6, ok, f"{len(checked)} busy pairs, min envelope margin={env_margin:.2e}, theta margin={th:.2e}")


def test_criterion_7_renewal_oracles(capsys, critical):
    u_exp = float(np.max(np.abs(renewal_density(EXP, 0.01, 50).u - 1)))
    tb = renewal_density(ERL, 0.002, 10)
    u_erl = float(np.max(np.abs(tb.u - erlang2_renewal_density(tb.t))))
    conc = concavity_check(renewal_density(WEIB_HALF, 0.01, 100))
    kwz = critical[1].kwz_error
    ok = u_exp < 1e-6 and u_erl < 1e-5 and conc.passed and kwz < 5e-4
    report(capsys, 7, ok, f"exp={u_exp:.1e} erlang2={u_erl:.1e} weibull concave={conc.passed} K-W-Z={kwz:.1e}")


def test_criterion_8_multiclass(capsys):
    lam = (0.5, 0.8, 0.5)
    rho, q = rho_q(lam, (1.0, 1.0, 1.0))
    tr = solve_multiclass(MulticlassConfig(lam, (1.0, 1.0, 1.0), EXP, dt=0.01, horizon=100))
    q_err = float(np.max(tr.limit_errors()))
    bl = float(np.max(tr.bl_errors()))
    prio = tr.check_invariants()["priority_violations_end"]
    bd = solve_multiclass(MulticlassConfig((1.0, 0.5), (1.0, 1.0), EXP, dt=0.01, horizon=100))
    bq, bbl = float(np.max(bd.limit_errors())), float(np.max(bd.bl_errors()))
    ok = (
        np.allclose(q, [0.0, 0.3, 0.5])
        and q_err < 1e-3 and bl < 5e-3 and prio == 0
        and bq < 1e-2 and bbl < 1e-2
    )
    report(
        capsys, 8, ok,
        f"q={np.round(q, 6).tolist()} |Q-q|={q_err:.1e} BL={bl:.1e} priority violations={prio}; "
        f"borderline |Q-q|={bq:.1e} BL={bbl:.1e}",
    )


@pytest.mark.slow
def test_criterion_9_interchange_of_limits(capsys):
    t0 = time.perf_counter()
    fluid_x = float(solve(FluidConfig(2.0, EXP, PAT, dt=0.01, horizon=50)).X[-1])
    est = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for N in (200, 500, 800):
            est[N] = stationary_estimate(DesConfig(N, 2.0, EXP, PAT, seed=2026, horizon=120, warmup=20), 20)
    s = est[500]
    bd = birthdeath_oracle(2.0, 1.0, 500)
    gaps = [abs(s.x - fluid_x), abs(s.x - bd)]
    rms = [est[N].rms_distance(fluid_x) for N in (200, 500, 800)]
    secs = time.perf_counter() - t0
    ok = max(gaps) <= 0.05 and max(gaps) <= 3 * s.x_se and rms[0] > rms[1] > rms[2] and secs < 600
    report(
        capsys, 9, ok,
        f"X500={s.x:.4f}±{s.x_se:.4f} fluid={fluid_x:.4f} birthdeath={bd:.4f} "
        f"rms(200,500,800)={', '.join(f'{r:.4f}' for r in rms)} runtime={secs:.0f}s",
    )


def _halving_ratio(cfg):
    coarse, fine = solve(cfg), solve(replace(cfg, dt=cfg.dt / 2))
    ref = solve(replace(cfg, dt=cfg.dt / 8))

    def err(tr, stride):
        return max(np.max(np.abs(getattr(tr, c) - getattr(ref, c)[::stride])) for c in "XBK")

    e1, e2 = err(coarse, 8), err(fine, 4)
    if e1 < 1e-9 and e2 < 1e-9:
        return math.inf  # both at roundoff: nothing left to converge
    return e1 / e2


def test_criterion_10_structural_suites(capsys):
    worst_state, worst_shift, ratios = 0.0, 0.0, []
    for cfg in random_configs(10, 50, dt=0.02, horizon=8.0):
        tr = solve(cfg)
        v = check_invariants(tr)
        worst_state = max(worst_state, v["queue"], v["non_idling"], v["mass_balance"])
        worst_shift = max(worst_shift, time_shift_check(cfg, 4.0, traj=tr).deviation)
        ratios.append(_halving_ratio(cfg))
    finite = [r for r in ratios if math.isfinite(r)]
    ok = worst_state < 1e-8 and worst_shift < 5e-8 and min(ratios) >= 1.8
    report(
        capsys, 10, ok,
        f"50 scenarios: invariants={worst_state:.1e} time shift={worst_shift:.1e} "
        f"halving ratio min={min(ratios):.2f} ({len(ratios) - len(finite)} at roundoff)",
    )
