"""Command-line front end: ``fluidq <mode> <scenario.yaml>``.

Exit codes: 0 success, 1 numerical abort, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import scenario as sc
from .distributions import DistributionError, Exponential, classify_hazard
from .errors import ConfigError, NumericalAbort
from .measures import MeasureError, bl_distance

EXIT_OK, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2


def _finite(obj):
    """Replace nonfinite floats by strings so the output stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return str(float(obj))
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True, default=_jsonable, allow_nan=False)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _write_columns(path, cols: dict):
    names = list(cols)
    n = len(cols[names[0]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for j in range(n):
            w.writerow([repr(float(cols[c][j])) for c in names])


def _fluid_config(s: sc.Scenario):
    from .fluid import FluidConfig

    return FluidConfig(
        lam=s.lam,
        service=s.service,
        patience=s.patience,
        x0=sc._number(s.initial_x0(), "initial.x0"),
        nu0=s.measure("nu0", s.service),
        eta0=s.measure("eta0", s.patience),
        dt=s.dt,
        horizon=s.horizon,
        snap_every=s.numerics.get("snap_every"),
    ).validate()


def _fluid_core(s: sc.Scenario):
    from .fluid import solve

    return solve(_fluid_config(s))


# modes


def run_fluid(s, out):
    from .fluid import TOL_STATE, check_invariants
    from .invariant import invariant_state

    traj = _fluid_core(s)
    traj.to_csv(os.path.join(out, f"{s.name}_fluid.csv"))
    inv = check_invariants(traj)
    star = invariant_state(s.lam, s.service, s.patience)
    j = traj.n
    bl_tol = 5e-3
    summary = {
        "mode": "fluid",
        "final": {c: float(v[j]) for c, v in traj.columns().items()},
        "invariant_x": star.x_star,
        "distance_to_invariant": {
            "x": abs(float(traj.X[j]) - star.x_star),
            "bl_nu": bl_distance(traj.nu_at(j), star.nu_component, dx=traj.dt),
            "bl_eta": bl_distance(traj.eta_at(j), star.eta_component, dx=traj.dt),
        },
        "saturation_time": traj.saturation_time(),
        "invariant_violations": inv,
        "tolerances": {"invariants": TOL_STATE, "x": 1e-3, "bl": bl_tol},
        "passed": {"invariants": bool(max(inv.values()) <= TOL_STATE)},
    }
    lines = [
        f"X({traj.t[j]:g}) = {traj.X[j]:.6f}  B = {traj.B[j]:.6f}  Q = {traj.Q[j]:.6f}",
        f"invariant x* = {star.x_star:.6f}",
    ]
    return summary, lines


def run_invariant(s, out):
    from .invariant import LEVEL_TOL, ROOT_TOL, invariant_state, uniqueness_check

    star = invariant_state(s.lam, s.service, s.patience)
    summary = {"mode": "invariant", **star.summary(), "tolerances": {"root": ROOT_TOL, "level": LEVEL_TOL}}
    if s.lam > 1:
        summary["unique_root"] = uniqueness_check(s.lam, s.patience)
    _write_json(os.path.join(out, f"{s.name}_invariant.json"), summary)
    return summary, [f"x* = {star.x_star:.9f}  range [{star.x_l:.9f}, {star.x_r:.9f}]"]


def run_entropy(s, out):
    from .entropy import entropy_trace, envelope_check, lipschitz_margin, theta_decay_margin

    traj = _fluid_core(s)
    trace = entropy_trace(traj)
    _write_columns(os.path.join(out, f"{s.name}_entropy.csv"), trace.columns())
    slack = float(s.section.get("slack", 1e-4))
    pinsker = trace.tv_bound - trace.tv_actual
    summary = {
        "mode": "entropy",
        "saturation_time": traj.saturation_time(),
        "r_final": float(trace.r[-1]),
        "c_r": trace.c_r,
        "c_lip": trace.c_lip,
        "L_sensitivity": trace.L_sensitivity,
        "pinsker_min_margin": float(np.min(pinsker[np.isfinite(pinsker)], initial=math.inf)),
        "lipschitz_margin": lipschitz_margin(trace),
        "regime": {"eps_h": trace.regime.eps_h, "c_h": trace.regime.c_h,
                   "bounded_away": trace.regime.is_bounded_away},
        "tolerances": {"envelope_slack": slack, "pinsker": 0.0},
    }
    if trace.upsilon is not None:
        summary["theta_decay_margin"] = theta_decay_margin(trace)
        checks = []
        for pair in s.section.get("pairs", []):
            rep = envelope_check(trace, float(pair[0]), float(pair[1]), slack)
            checks.append({"s": rep.s, "t": rep.t, "lhs": rep.lhs, "rhs": rep.rhs,
                           "applicable": rep.applicable, "passed": rep.passed})
        summary["envelope"] = checks
    return summary, [f"r_final = {trace.r[-1]:.3e}  c_r = {trace.c_r:.3e}"]


def run_renewal(s, out):
    from .renewal import concavity_check, renewal_density, volterra_residual, wz_trace

    dt = s.dt
    horizon = float(s.section.get("horizon", s.horizon))
    table = renewal_density(s.service, dt, horizon)
    regime = classify_hazard(s.service)
    summary = {
        "mode": "renewal",
        "volterra_residual": volterra_residual(table, start=1),
        "decreasing_hazard": regime.is_decreasing,
        "tolerances": {"volterra": 1e-6, "concavity_slack": 1e-8, "kwz": 5e-4},
    }
    if regime.is_decreasing:
        rep = concavity_check(table)
        summary["concavity"] = {"passed": rep.passed, "first_violation": rep.first_violation}
    W = np.full_like(table.t, np.nan)
    Z = np.full_like(table.t, np.nan)
    if s.lam is not None and s.patience is not None and regime.is_decreasing:
        eps = float(s.section.get("eps", 0.1))
        traj = _fluid_core(s)
        tr = wz_trace(traj, table, s.lam, eps)
        m = min(len(tr.t), len(table.t))
        W[:m], Z[:m] = tr.W[:m], tr.Z[:m]
        summary.update({
            "kwz_error": tr.kwz_error,
            "lambda_n": tr.lambda_n,
            "n_star": tr.n_star,
            "tau_n_estimates": tr.tau_report(),
            "B_final": float(traj.B[-1]),
        })
    _write_columns(
        os.path.join(out, f"{s.name}_renewal.csv"),
        {"t": table.t, "u": table.u, "U": table.U, "W": W, "Z": Z},
    )
    lines = [f"volterra residual {summary['volterra_residual']:.2e}  u({horizon:g}) = {table.u[-1]:.6f}"]
    if "concavity" in summary:
        lines.append(f"u nonincreasing: {summary['concavity']['passed']}")
    if "kwz_error" in summary:
        lines.append(f"max |K - W - Z| = {summary['kwz_error']:.2e}  B(end) = {summary['B_final']:.6f}")
    return summary, lines


def run_multiclass(s, out):
    from .multiclass import (
        MulticlassConfig,
        aggregate_consistency,
        borderline_classes,
        from_exponential_patience,
        solve_multiclass,
    )

    if s.patience is not None:
        from_exponential_patience([s.patience])
    J = len(s.lam)
    x0 = s.initial_x0()
    x0 = tuple(float(v) for v in (x0 if isinstance(x0, list) else [x0] * J))
    nu = s.raw.get("initial", {}).get("nu0")
    nu0 = tuple(s.measure("nu0", s.service, i) for i in range(J)) if isinstance(nu, list) else None
    cfg = MulticlassConfig(s.lam, s.theta, s.service, x0=x0, nu0=nu0, dt=s.dt, horizon=s.horizon)
    traj = solve_multiclass(cfg)
    traj.to_csv(os.path.join(out, f"{s.name}_multiclass.csv"))
    border = borderline_classes(s.lam)
    tol = 1e-2 if border else 1e-3
    bl_tol = 1e-2 if border else 5e-3
    summary = traj.summary(q_tol=tol, bl_tol=bl_tol)
    agg = aggregate_consistency(traj)
    summary.update({
        "mode": "multiclass",
        "borderline_classes": border,
        "invariant_violations": traj.check_invariants(),
        "aggregate_deviation": agg.deviation,
    })
    summary["tolerances"]["aggregate"] = agg.tolerance
    return summary, [f"Q(T) = {np.round(traj.Q[:, -1], 6).tolist()}  q = {np.round(traj.q, 6).tolist()}"]


def _des_config(s, args, **over):
    from .des import DesConfig

    d = s.des
    N = args.n if getattr(args, "n", None) is not None else d.get("N", 100)
    seed = args.seed_override if args.seed_override is not None else d.get("seed", 0)
    if getattr(args, "seed", None) is not None and args.seed_override is None:
        seed = args.seed
    warm = args.warmup if getattr(args, "warmup", None) is not None else d.get("warmup")
    if not isinstance(N, int) or N < 1:
        raise ConfigError("des.N", "server count must be a positive integer")
    kw = dict(
        N=N,
        lam=s.lam,
        service=s.service,
        patience=s.patience,
        seed=int(seed),
        horizon=float(d.get("horizon", s.horizon)),
        warmup=None if warm is None else float(warm),
        sample_dt=float(d.get("sample_dt", 0.1)),
        n_batches=int(d.get("batches", 20)),
    )
    kw.update(over)
    return DesConfig(**kw).validate()


def run_des(s, out, args):
    from .des import simulate, stationary_estimate

    reps = args.reps if getattr(args, "reps", None) is not None else int(s.des.get("reps", 1))
    cfg = _des_config(s, args)
    tr = simulate(cfg)
    with open(os.path.join(out, f"{s.name}_des.jsonl"), "w") as fh:
        for row in tr.records():
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    summary = {
        "mode": "des",
        "N": cfg.N,
        "seed": cfg.seed,
        "arrivals": tr.arrivals,
        "departures": tr.departures,
        "reneges": tr.reneges,
        "time_average_x": float(tr.batch_X.mean()),
        "tolerances": {"autocorr_warn": 0.2},
    }
    if reps > 1:
        st = stationary_estimate(cfg, reps)
        summary["stationary"] = st.to_dict()
    return summary, [f"time-average X = {summary['time_average_x']:.4f} (N = {cfg.N})"]


def run_interchange(s, out, args):
    from .des import birthdeath_stats, replication_seeds, simulate, stationary_estimate
    from .fluid import solve
    from .invariant import invariant_state

    fcfg = _fluid_config(s)
    traj = solve(fcfg)
    star = invariant_state(s.lam, s.service, s.patience)
    reps = args.reps if getattr(args, "reps", None) is not None else int(s.des.get("reps", 20))
    dcfg = _des_config(s, args)
    st = stationary_estimate(dcfg, reps)
    # finite-time corner: DES at the fluid horizon, same initial condition (empty)
    t_fin = min(s.horizon, dcfg.horizon)
    fin = []
    for seed in replication_seeds(dcfg.seed, reps):
        tr = simulate(_des_config(s, args, seed=seed, horizon=t_fin, warmup=0.0))
        fin.append(float(tr.X_tot[-1]))
    fin = np.array(fin)
    tol = float(s.des.get("tolerance", 0.05))
    rows = [
        ("des_finite_time_x", float(fin.mean()), float(fin.std(ddof=1) / math.sqrt(len(fin))), tol),
        ("fluid_finite_time_x", float(np.interp(t_fin, traj.t, traj.X)), 0.0, 1e-8),
        ("fluid_limit_x", float(traj.X[-1]), 0.0, 1e-3),
        ("invariant_x", star.x_star, 0.0, 1e-8),
        ("des_stationary_x", st.x, st.x_se, tol),
    ]
    exp_case = isinstance(s.service, Exponential) and isinstance(s.patience, Exponential)
    targets = [star.x_star]
    if exp_case:
        bd = birthdeath_stats(s.lam, s.patience.rate, dcfg.N)
        rows.append(("birthdeath_x", bd["x"], 0.0, 1e-12))
        targets.append(bd["x"])
    with open(os.path.join(out, f"{s.name}_interchange.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value", "stderr", "tolerance"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.6f}", f"{r[2]:.6f}", repr(r[3])])
    table = {r[0]: {"value": r[1], "stderr": r[2], "tolerance": r[3]} for r in rows}
    gap = max(abs(st.x - x) for x in targets)
    ok = gap <= tol and gap <= 3 * st.x_se
    summary = {
        "mode": "interchange",
        "table": table,
        "stationary": st.to_dict(),
        "agrees": bool(ok and abs(traj.X[-1] - star.x_star) <= 1e-3),
        "tolerances": {"absolute": tol, "stderr_multiple": 3.0},
    }
    lines = [f"{r[0]:<22} {r[1]:.3f}" + (f" ± {r[2]:.3f}" if r[2] else "") for r in rows]
    return summary, lines


RUNNERS = {
    "fluid": run_fluid,
    "invariant": run_invariant,
    "entropy": run_entropy,
    "renewal": run_renewal,
    "multiclass": run_multiclass,
    "des": run_des,
    "interchange": run_interchange,
}


def build_parser():
    p = argparse.ArgumentParser(prog="fluidq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in sc.MODES:
        sp = sub.add_parser(mode, help=f"run a scenario in {mode} mode")
        sp.add_argument("scenario", help="YAML scenario file")
        sp.add_argument("--out-dir", help="directory for CSV/JSON artifacts")
        sp.add_argument("--seed-override", type=int, help="replace the scenario seed")
        sp.add_argument("--dt-override", type=float, help="replace numerics.dt")
        if mode in ("des", "interchange"):
            sp.add_argument("--n", type=int, help="server count")
            sp.add_argument("--seed", type=int, help="master seed")
            sp.add_argument("--reps", type=int, help="replications")
            sp.add_argument("--warmup", type=float, help="warmup time")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        s = sc.load(args.scenario, args.mode)
        if args.dt_override is not None:
            s.numerics["dt"] = sc._number(args.dt_override, "numerics.dt", True)
        out = args.out_dir or os.path.join(s.base_dir, s.out_dir)
        os.makedirs(out, exist_ok=True)
        runner = RUNNERS[args.mode]
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.mode in ("des", "interchange"):
                summary, lines = runner(s, out, args)
            else:
                summary, lines = runner(s, out)
        summary["scenario"] = s.name
        _write_json(os.path.join(out, f"{s.name}_summary.json"), summary)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DistributionError, MeasureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for line in lines:
        print(line)
    print(f"artifacts written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
