"""Discrete-event simulation of the GI/G/N+G queue, single class or with
nonpreemptive priorities, scaled by ``1/N``.

Every arrival carries a patience clock.  The clock's expiry event removes
the job from the potential queue and, if the job is still waiting, makes
it renege.  Simultaneous events are ordered completion < expiry < arrival
and then by sequence number.
"""
from __future__ import annotations

import heapq
import math
import warnings
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import Distribution, make_distribution
from .errors import ConfigError
from .measures import FiniteMeasure, atoms, zero

COMPLETION, EXPIRY, ARRIVAL = 0, 1, 2
MAX_EVENTS = 200_000_000
AUTOCORR_WARN = 0.2
_BUF = 4096

# job states
WAITING, SERVING, DONE, RENEGED = 0, 1, 2, 3


@dataclass(frozen=True)
class DesConfig:
    """``lam``, ``patience`` may be scalars/single laws or per-class tuples.

    ``arrival`` is the interarrival law shape; it is rescaled so each class
    arrives at rate ``N lam_i``.  ``patience=None`` disables reneging.
    """

    N: int
    lam: float | tuple
    service: Distribution
    patience: Distribution | tuple | None
    seed: int = 0
    horizon: float = 50.0
    warmup: float | None = None
    sample_dt: float = 0.1
    snapshot_times: tuple = ()
    arrival: Distribution | None = None
    n_batches: int = 20
    record_events: bool = False
    audit: bool = False

    @property
    def lams(self):
        return tuple(float(x) for x in np.atleast_1d(self.lam))

    @property
    def J(self):
        return len(self.lams)

    @property
    def patiences(self):
        if self.patience is None or isinstance(self.patience, Distribution):
            return (self.patience,) * self.J
        return tuple(self.patience)

    @property
    def warmup_time(self):
        if self.warmup is not None:
            return float(self.warmup)
        pm = max((p.mean for p in self.patiences if p is not None), default=0.0)
        return 10.0 * pm + 10.0 * self.service.mean

    def validate(self):
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ConfigError("N", "server count must be a positive integer")
        for i, l in enumerate(self.lams):
            if not (l > 0 and math.isfinite(l)):
                raise ConfigError(f"lambda[{i}]" if self.J > 1 else "lambda", "must be positive")
        if len(self.patiences) != self.J:
            raise ConfigError("patience", f"expected {self.J} patience laws")
        if not self.horizon > 0:
            raise ConfigError("horizon", "must be positive")
        if not self.sample_dt > 0:
            raise ConfigError("sample_dt", "must be positive")
        if self.warmup is not None and not 0 <= self.warmup < self.horizon:
            raise ConfigError("warmup", "need 0 <= warmup < horizon")
        if self.n_batches < 2:
            raise ConfigError("n_batches", "need at least two batches")
        return self


class _Stream:
    """Buffered iid draws from one law on one generator."""

    __slots__ = ("dist", "rng", "scale", "buf", "pos")

    def __init__(self, dist, rng, scale=1.0):
        self.dist, self.rng, self.scale = dist, rng, scale
        self.buf = []
        self.pos = 0

    def next(self):
        if self.pos >= len(self.buf):
            self.buf = (np.asarray(self.dist.sample(self.rng, _BUF)) * self.scale).tolist()
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return v


@dataclass
class DesTrajectory:
    cfg: DesConfig
    t: np.ndarray
    X: np.ndarray  # (J, m) scaled counts at the sample times
    B: np.ndarray
    Q: np.ndarray
    batch_X: np.ndarray  # time-weighted batch means over [warmup, horizon], aggregate
    batch_B: np.ndarray
    batch_Q: np.ndarray
    batch_X2: np.ndarray  # time-weighted batch means of X^2
    psi_samples: dict  # name -> array of <psi, nu_N> at post-warmup sample times
    arrivals: np.ndarray
    departures: np.ndarray
    reneges: np.ndarray
    snapshots: dict = field(default_factory=dict)  # time -> (service ages, potential-queue ages)
    event_t: np.ndarray | None = None
    event_X: np.ndarray | None = None
    event_B: np.ndarray | None = None
    event_Q: np.ndarray | None = None
    audit_violations: int = 0
    n_events: int = 0

    @property
    def X_tot(self):
        return self.X.sum(axis=0)

    @property
    def B_tot(self):
        return self.B.sum(axis=0)

    @property
    def Q_tot(self):
        return self.Q.sum(axis=0)

    def in_system(self):
        """Unscaled jobs in system at the horizon, per class."""
        return np.rint(self.X[:, -1] * self.cfg.N).astype(int)

    def nu_at(self, time) -> FiniteMeasure:
        ages = self.snapshots[time][0]
        return _atom_measure(ages, self.cfg.N)

    def eta_at(self, time) -> FiniteMeasure:
        ages = self.snapshots[time][1]
        return _atom_measure(ages, self.cfg.N)

    def records(self):
        """One dict per sample time (JSONL rows)."""
        J = self.cfg.J
        for m, t in enumerate(self.t):
            row = {"t": float(t), "X": float(self.X_tot[m]), "B": float(self.B_tot[m]),
                   "Q": float(self.Q_tot[m])}
            if J > 1:
                for i in range(J):
                    row[f"X_{i + 1}"] = float(self.X[i, m])
                    row[f"Q_{i + 1}"] = float(self.Q[i, m])
            yield row


def _atom_measure(ages, N):
    if len(ages) == 0:
        return zero()
    xs, counts = np.unique(np.asarray(ages, dtype=float), return_counts=True)
    return atoms(xs, counts / N)


PSI = {
    "one": lambda a: np.ones_like(a),
    "min_age_1": lambda a: np.minimum(a, 1.0),
    "exp_neg_age": lambda a: np.exp(-a),
}


def simulate(cfg: DesConfig) -> DesTrajectory:
    cfg.validate()
    N, J = int(cfg.N), cfg.J
    lams = cfg.lams
    horizon = float(cfg.horizon)
    ss = np.random.SeedSequence(int(cfg.seed) & ((1 << 64) - 1))
    children = ss.spawn(2 * J + 1)
    rngs = [np.random.default_rng(c) for c in children]
    inter = cfg.arrival or make_distribution("exponential", {"rate": 1.0})
    arr_streams = [_Stream(inter, rngs[i], 1.0 / (N * lams[i] * inter.mean)) for i in range(J)]
    pats = cfg.patiences
    pat_streams = [
        _Stream(pats[i], rngs[J + i]) if pats[i] is not None else None for i in range(J)
    ]
    svc_stream = _Stream(cfg.service, rngs[2 * J])

    # job tables
    arr_time, deadline, cls, state, start = [], [], [], [], []
    queues = [deque() for _ in range(J)]
    n_wait = [0] * J
    n_serv = [0] * J
    busy = 0
    in_service = {}
    eta = {}
    arrivals = [0] * J
    departures = [0] * J
    reneges = [0] * J

    events = []
    seq = 0
    for i in range(J):
        heapq.heappush(events, (arr_streams[i].next(), ARRIVAL, seq, i))
        seq += 1

    # sampling
    n_samples = int(math.floor(horizon / cfg.sample_dt + 1e-9)) + 1
    sample_t = cfg.sample_dt * np.arange(n_samples)
    Xs = np.zeros((J, n_samples))
    Bs = np.zeros((J, n_samples))
    Qs = np.zeros((J, n_samples))
    next_sample = 0
    warm = cfg.warmup_time if cfg.warmup_time < horizon else 0.0
    nb = cfg.n_batches
    edges = np.linspace(warm, horizon, nb + 1)
    bx = np.zeros(nb)
    bb = np.zeros(nb)
    bq = np.zeros(nb)
    bx2 = np.zeros(nb)
    psi_vals = {k: [] for k in PSI}
    snap_times = sorted(float(s) for s in cfg.snapshot_times if 0 <= s <= horizon)
    snaps = {}
    si = 0
    ev_t, ev_x, ev_b, ev_q = ([], [], [], []) if cfg.record_events else (None,) * 4
    violations = 0
    now = 0.0
    n_events = 0
    inv_n = 1.0 / N

    def accumulate(t0, t1, x, b, q):
        if t1 <= warm:
            return
        t0 = max(t0, warm)
        lo = min(int((t0 - warm) / (horizon - warm) * nb), nb - 1)
        while t0 < t1 and lo < nb:
            seg_end = min(t1, edges[lo + 1])
            w = seg_end - t0
            bx[lo] += x * w
            bb[lo] += b * w
            bq[lo] += q * w
            bx2[lo] += x * x * w
            t0 = seg_end
            lo += 1

    def record_sample(m, tnow):
        for i in range(J):
            Xs[i, m] = (n_wait[i] + n_serv[i]) * inv_n
            Bs[i, m] = n_serv[i] * inv_n
            Qs[i, m] = n_wait[i] * inv_n
        if sample_t[m] >= warm and in_service:
            ages = tnow - np.fromiter(in_service.values(), float, len(in_service))
            for k, fn in PSI.items():
                psi_vals[k].append(float(fn(ages).sum()) * inv_n)
        elif sample_t[m] >= warm:
            for k in PSI:
                psi_vals[k].append(0.0)

    def start_service(job, tnow):
        nonlocal busy, seq
        c = cls[job]
        state[job] = SERVING
        start[job] = tnow
        n_serv[c] += 1
        busy += 1
        in_service[job] = tnow
        heapq.heappush(events, (tnow + svc_stream.next(), COMPLETION, seq, job))
        seq += 1

    def next_waiting():
        """Head of the highest-priority nonempty queue (drops reneged jobs)."""
        for c in range(J):
            q = queues[c]
            while q and state[q[0]] != WAITING:
                q.popleft()
            if q:
                return c
        return -1

    while events:
        t_ev, kind, _, payload = events[0]
        if t_ev > horizon:
            break
        heapq.heappop(events)
        n_events += 1
        if n_events > MAX_EVENTS:
            raise RuntimeError("event budget exceeded")
        # state is constant on [now, t_ev)
        while next_sample < n_samples and sample_t[next_sample] < t_ev:
            record_sample(next_sample, sample_t[next_sample])
            next_sample += 1
        while si < len(snap_times) and snap_times[si] < t_ev:
            ts = snap_times[si]
            snaps[ts] = (
                ts - np.fromiter(in_service.values(), float, len(in_service)),
                ts - np.fromiter(eta.values(), float, len(eta)),
            )
            si += 1
        tot_w = sum(n_wait)
        accumulate(now, t_ev, (tot_w + busy) * inv_n, busy * inv_n, tot_w * inv_n)
        now = t_ev

        if kind == ARRIVAL:
            c = payload
            job = len(arr_time)
            arr_time.append(now)
            cls.append(c)
            state.append(WAITING)
            start.append(math.nan)
            arrivals[c] += 1
            ps = pat_streams[c]
            if ps is not None:
                d = now + ps.next()
                deadline.append(d)
                eta[job] = now
                heapq.heappush(events, (d, EXPIRY, seq, job))
                seq += 1
            else:
                deadline.append(math.inf)
                eta[job] = now
            if busy < N:
                if cfg.audit and sum(n_wait[:c]) > 0:
                    violations += 1
                start_service(job, now)
            else:
                queues[c].append(job)
                n_wait[c] += 1
            heapq.heappush(events, (now + arr_streams[c].next(), ARRIVAL, seq, c))
            seq += 1
        elif kind == COMPLETION:
            job = payload
            c = cls[job]
            state[job] = DONE
            n_serv[c] -= 1
            busy -= 1
            departures[c] += 1
            del in_service[job]
            nxt = next_waiting()
            if nxt >= 0:
                jb = queues[nxt].popleft()
                n_wait[nxt] -= 1
                if cfg.audit and sum(n_wait[:nxt]) > 0:
                    violations += 1
                start_service(jb, now)
        else:  # EXPIRY
            job = payload
            eta.pop(job, None)
            if state[job] == WAITING:
                state[job] = RENEGED
                c = cls[job]
                n_wait[c] -= 1
                reneges[c] += 1
        if cfg.audit and busy < N and sum(n_wait) > 0:
            violations += 1
        if ev_t is not None:
            ev_t.append(now)
            ev_x.append((sum(n_wait) + busy) * inv_n)
            ev_b.append(busy * inv_n)
            ev_q.append(sum(n_wait) * inv_n)

    tot_w = sum(n_wait)
    accumulate(now, horizon, (tot_w + busy) * inv_n, busy * inv_n, tot_w * inv_n)
    while next_sample < n_samples:
        record_sample(next_sample, sample_t[next_sample])
        next_sample += 1
    while si < len(snap_times):
        ts = snap_times[si]
        snaps[ts] = (
            ts - np.fromiter(in_service.values(), float, len(in_service)),
            ts - np.fromiter(eta.values(), float, len(eta)),
        )
        si += 1
    width = np.diff(edges)
    return DesTrajectory(
        cfg=cfg,
        t=sample_t,
        X=Xs,
        B=Bs,
        Q=Qs,
        batch_X=bx / width,
        batch_B=bb / width,
        batch_Q=bq / width,
        batch_X2=bx2 / width,
        psi_samples={k: np.array(v) for k, v in psi_vals.items()},
        arrivals=np.array(arrivals),
        departures=np.array(departures),
        reneges=np.array(reneges),
        snapshots=snaps,
        event_t=np.array(ev_t) if ev_t is not None else None,
        event_X=np.array(ev_x) if ev_x is not None else None,
        event_B=np.array(ev_b) if ev_b is not None else None,
        event_Q=np.array(ev_q) if ev_q is not None else None,
        audit_violations=violations,
        n_events=n_events,
    )


def replication_seeds(seed, replications):
    """Independent 64-bit seeds for each replication from one master seed."""
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1))
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(replications)]


def lag1_autocorr(x):
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    den = float(np.dot(d, d))
    if den == 0:
        return 0.0
    return float(np.dot(d[:-1], d[1:]) / den)


@dataclass(frozen=True)
class StationarySummary:
    N: int
    replications: int
    x: float
    x_se: float
    b: float
    b_se: float
    q: float
    q_se: float
    psi: dict  # name -> (mean, se)
    rep_x: np.ndarray
    rep_x2: np.ndarray  # per-replication time averages of X^2
    autocorr: float
    reliable: bool

    def rms_distance(self, target):
        """``E[(X - target)^2]^(1/2)`` under the empirical stationary law."""
        m2 = self.rep_x2 - 2 * target * self.rep_x + target * target
        return float(math.sqrt(max(m2.mean(), 0.0)))

    def to_dict(self):
        return {
            "N": self.N,
            "replications": self.replications,
            "x": {"mean": self.x, "se": self.x_se},
            "b": {"mean": self.b, "se": self.b_se},
            "q": {"mean": self.q, "se": self.q_se},
            "psi": {k: {"mean": m, "se": s} for k, (m, s) in self.psi.items()},
            "batch_autocorr": self.autocorr,
            "reliable": self.reliable,
        }


def _rep_stats(cfg: DesConfig):
    tr = simulate(cfg)
    psi = {k: float(v.mean()) if len(v) else math.nan for k, v in tr.psi_samples.items()}
    return (
        float(tr.batch_X.mean()),
        float(tr.batch_B.mean()),
        float(tr.batch_Q.mean()),
        psi,
        lag1_autocorr(tr.batch_X),
        float(tr.batch_X2.mean()),
    )


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return float(vals.mean()), se


def stationary_estimate(cfg: DesConfig, replications=20, workers=1) -> StationarySummary:
    """Batch-means estimates with standard errors across replications."""
    cfg.validate()
    if not cfg.warmup_time < cfg.horizon:
        raise ConfigError("warmup", "warmup must be shorter than the horizon")
    if replications < 2:
        raise ConfigError("reps", "need at least two replications")
    cfgs = [
        DesConfig(**{**cfg.__dict__, "seed": s, "record_events": False, "snapshot_times": ()})
        for s in replication_seeds(cfg.seed, replications)
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            stats = list(ex.map(_rep_stats, cfgs))
    else:
        stats = [_rep_stats(c) for c in cfgs]
    xs, bs, qs, psis, acs, x2s = zip(*stats)
    x, xse = _mean_se(xs)
    b, bse = _mean_se(bs)
    q, qse = _mean_se(qs)
    psi = {k: _mean_se([p[k] for p in psis]) for k in PSI}
    ac = float(np.mean(acs))
    reliable = ac <= AUTOCORR_WARN
    if not reliable:
        warnings.warn(
            f"batch autocorrelation {ac:.2f} exceeds {AUTOCORR_WARN}; estimate unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    return StationarySummary(
        int(cfg.N), replications, x, xse, b, bse, q, qse, psi, np.array(xs), np.array(x2s), ac,
        reliable,
    )


def birthdeath_distribution(lam, theta, N, tol=1e-16):
    """Stationary law of the M/M/N+M chain: birth ``N lam``, death ``min(n, N) + theta (n - N)^+``."""
    if not (lam >= 0 and theta >= 0 and N >= 1):
        raise ValueError("need lam, theta >= 0 and N >= 1")
    if theta == 0 and lam >= 1:
        raise ValueError("no stationary law without reneging when lam >= 1")
    if lam == 0:
        return np.array([1.0])
    birth = N * lam
    logp = [0.0]
    n = 0
    peak = 0.0
    while True:
        n += 1
        death = min(n, N) + theta * max(n - N, 0)
        logp.append(logp[-1] + math.log(birth) - math.log(death))
        peak = max(peak, logp[-1])
        if birth < death and logp[-1] < peak + math.log(tol):
            break
    p = np.exp(np.array(logp) - peak)
    return p / p.sum()


def birthdeath_oracle(lam, theta, N):
    """Stationary mean number in system divided by ``N``."""
    p = birthdeath_distribution(lam, theta, N)
    return float(np.dot(np.arange(len(p)), p) / N)


def birthdeath_stats(lam, theta, N):
    p = birthdeath_distribution(lam, theta, N)
    n = np.arange(len(p))
    return {
        "x": float(np.dot(n, p) / N),
        "b": float(np.dot(np.minimum(n, N), p) / N),
        "q": float(np.dot(np.maximum(n - N, 0), p) / N),
    }
