"""Mini-slot-exact simulation driver.

``SimState`` owns the kernel arrays of one (episode, replication):
per-station channel descriptions, decision thresholds, and the positions
of the random streams.  ``run_interval`` advances one controller interval
and returns an :class:`IntervalReport`; ``run_episode`` alternates
intervals with per-station policy updates and records full traces.

Determinism contract: (scenario arrays, master seed, replication) fully
determine every trace value, independent of how episodes are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sstats

from .. import _rng
from ..analytic import E_OVERHEAD, NetworkParams
from ..channel import (KIND_DISCRETE, KIND_IID, KIND_JAKES, JAKES_OSCILLATORS,
                       RateModel, gain_of_rate, jakes_oscillators)
from ._backend import kernel as _default_kernel

_KIND_CODE = {KIND_IID: 0, KIND_JAKES: 1, KIND_DISCRETE: 2}


@dataclass
class IntervalReport:
    """Observables of one controller interval."""

    t: np.ndarray          # per-station channel time incl. overhead, mini-slots
    n: np.ndarray          # successful contentions per station
    bits: np.ndarray       # delivered bits per station
    hold_sum: np.ndarray   # integer mini-slots held per station
    tx: np.ndarray         # used transmission opportunities per station
    idle: int
    collisions: int
    elapsed: int           # mini-slots, first slot boundary at/after t_total

    @property
    def successes(self) -> int:
        return int(self.n.sum())


@dataclass
class SlotOutcome:
    kind: str              # "idle" | "collision" | "success"
    winner: int = -1
    transmitted: bool = False
    rate: float = 0.0      # bits/s, success only
    duration: int = 1      # mini-slots


class SimState:
    """Kernel arrays of one replication; single-threaded."""

    def __init__(self, models, params: NetworkParams, master_seed: int,
                 replication: int = 0, kernel=None):
        self.params = params
        self.models = tuple(models)
        self.kernel = kernel if kernel is not None else _default_kernel
        n = len(models)
        if n != params.n:
            raise ValueError("models length must match params.n")
        self.n = n
        self.clock = 0  # absolute mini-slots since episode start

        self.p = np.zeros(n)
        self.kind = np.array([_KIND_CODE[m.kind] for m in models], dtype=np.int32)
        self.w = np.array([m.W for m in models])
        self.rho = np.array([m.rho for m in models])
        self.u_giveup = np.zeros(n)
        self.gain_giveup = np.zeros(n)
        self.thr_rate = np.zeros(n)

        k_max = max((len(m.rate_table) for m in models), default=0) or 1
        self.table_rates = np.zeros((n, k_max))
        self.u_edges = np.full((n, k_max), 2.0)  # padding above any uniform
        self.table_len = np.zeros(n, dtype=np.int64)
        for i, m in enumerate(models):
            if m.kind == KIND_DISCRETE:
                tbl = np.array(m.rate_table)
                self.table_len[i] = tbl.size
                self.table_rates[i, : tbl.size] = tbl
                # u-space bin edges: the win transmits at table rate k iff its
                # gain uniform exceeds edge k (same comparison in both kernels).
                gains = np.array([gain_of_rate(m, r) for r in tbl])
                self.u_edges[i, : tbl.size] = -np.expm1(-gains)

        self.jakes_omega = np.zeros((n, JAKES_OSCILLATORS))
        self.jakes_phase = np.zeros((n, JAKES_OSCILLATORS))
        for i, m in enumerate(models):
            if m.kind == KIND_JAKES:
                om, ph = jakes_oscillators(m, master_seed, i, replication)
                self.jakes_omega[i] = om
                self.jakes_phase[i] = ph

        def keys(purpose):
            return np.array(
                [_rng.stream_key(master_seed, i, replication, purpose) for i in range(n)],
                dtype=np.uint64)

        self.contend_key = keys(_rng.CONTEND)
        self.gain_key = keys(_rng.GAIN)
        self.contend_ctr = np.zeros(n, dtype=np.uint64)
        self.gain_ctr = np.zeros(n, dtype=np.uint64)

    def set_config(self, p, thresholds) -> None:
        """Fix per-station access probabilities and rate thresholds."""
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("access probabilities must lie in [0, 1]")
        self.p[:] = p
        for i, (m, thr) in enumerate(zip(self.models, thresholds)):
            thr = float(thr)
            if thr < 0:
                raise ValueError("thresholds must be >= 0")
            if m.kind == KIND_DISCRETE:
                self.thr_rate[i] = thr
            elif m.kind == KIND_JAKES:
                self.gain_giveup[i] = 0.0 if thr == 0 else gain_of_rate(m, thr)
            else:
                self.u_giveup[i] = 0.0 if thr == 0 else -math.expm1(-gain_of_rate(m, thr))

    def run_interval(self, t_total: int | None = None) -> IntervalReport:
        """Advance one interval (default length params.t_total)."""
        t_total = self.params.t_total if t_total is None else int(t_total)
        n = self.n
        n_succ = np.zeros(n, dtype=np.int64)
        hold_sum = np.zeros(n, dtype=np.int64)
        bits = np.zeros(n)
        tx = np.zeros(n, dtype=np.int64)
        elapsed, idle, coll = self.kernel.run_interval(
            t_total, self.params.t_tx, self.clock,
            self.p, self.kind, self.w, self.rho,
            self.u_giveup, self.gain_giveup, self.thr_rate,
            self.table_rates, self.u_edges, self.table_len,
            self.jakes_omega, self.jakes_phase,
            self.contend_key, self.contend_ctr,
            self.gain_key, self.gain_ctr,
            n_succ, hold_sum, bits, tx)
        self.clock += elapsed
        t = hold_sum + n_succ * E_OVERHEAD
        return IntervalReport(t=t, n=n_succ, bits=bits, hold_sum=hold_sum,
                              tx=tx, idle=int(idle), collisions=int(coll),
                              elapsed=int(elapsed))


def run_interval(state: SimState, t_total: int | None = None) -> IntervalReport:
    return state.run_interval(t_total)


def run_slot(state: SimState) -> SlotOutcome:
    """Run a single contention mini-slot (plus transmission if used)."""
    rep = state.run_interval(t_total=1)
    if rep.idle:
        return SlotOutcome(kind="idle")
    if rep.collisions:
        return SlotOutcome(kind="collision")
    winner = int(np.argmax(rep.n))
    transmitted = bool(rep.tx[winner])
    rate = float(rep.bits[winner] / state.params.t_tx) if transmitted else 0.0
    return SlotOutcome(kind="success", winner=winner, transmitted=transmitted,
                       rate=rate, duration=rep.elapsed)


@dataclass
class EpisodeResult:
    """Per-interval traces of one episode (roster-indexed arrays)."""

    reports: list = field(default_factory=list)
    p: np.ndarray = None           # (intervals, n) probability used
    P: np.ndarray = None           # controller output after the interval
    E: np.ndarray = None           # error signal of the interval
    F: np.ndarray = None           # punishment term of the interval
    t: np.ndarray = None
    bits: np.ndarray = None
    successes: np.ndarray = None
    active: np.ndarray = None
    elapsed: np.ndarray = None     # (intervals,)

    def window(self, start: int = 0, stop: int | None = None):
        """Aggregate per-station throughput in bits/s over [start, stop)."""
        sl = slice(start, stop)
        total = self.elapsed[sl].sum()
        return self.bits[sl].sum(axis=0) / total


def run_episode(models, policies, params: NetworkParams, intervals: int,
                master_seed: int, replication: int = 0, events=(),
                initially_active=None, kernel=None) -> EpisodeResult:
    """Alternate intervals and policy updates; emit full traces.

    ``policies`` follow a small duck-typed protocol: ``reset(index,
    n_active)`` at episode start and on re-join, ``config() -> (p,
    threshold)`` at each interval start, and ``observe(interval, report,
    active)`` after each interval.  Honest controller policies additionally
    expose ``last_P/last_E/last_F`` for the traces.

    Join/leave ``events`` are dicts {"interval", "action", "station"}
    applied at interval boundaries; inactive stations keep consuming their
    contention streams with p = 0, so activation does not disturb others'
    randomness.
    """
    n = params.n
    state = SimState(models, params, master_seed, replication, kernel=kernel)
    active = np.ones(n, dtype=bool)
    if initially_active is not None:
        active[:] = initially_active
    by_interval = {}
    for ev in events:
        by_interval.setdefault(int(ev["interval"]), []).append(ev)

    res = EpisodeResult(
        p=np.zeros((intervals, n)), P=np.full((intervals, n), np.nan),
        E=np.full((intervals, n), np.nan), F=np.full((intervals, n), np.nan),
        t=np.zeros((intervals, n)), bits=np.zeros((intervals, n)),
        successes=np.zeros((intervals, n), dtype=np.int64),
        active=np.zeros((intervals, n), dtype=bool),
        elapsed=np.zeros(intervals, dtype=np.int64))

    for i, pol in enumerate(policies):
        if active[i]:
            pol.reset(i, int(active.sum()))

    for k in range(intervals):
        for ev in by_interval.get(k, ()):
            i = int(ev["station"])
            if ev["action"] == "join" and not active[i]:
                active[i] = True
                policies[i].reset(i, int(active.sum()))
            elif ev["action"] == "leave":
                active[i] = False

        p_vec = np.zeros(n)
        thr_vec = np.zeros(n)
        for i, pol in enumerate(policies):
            if active[i]:
                p_vec[i], thr_vec[i] = pol.config()
        state.set_config(p_vec, thr_vec)
        rep = state.run_interval()

        res.p[k] = p_vec
        res.t[k] = rep.t
        res.bits[k] = rep.bits
        res.successes[k] = rep.n
        res.active[k] = active
        res.elapsed[k] = rep.elapsed
        res.reports.append(rep)

        for i, pol in enumerate(policies):
            if active[i]:
                pol.observe(k, rep, active)
                res.P[k, i] = getattr(pol, "last_P", math.nan)
                res.E[k, i] = getattr(pol, "last_E", math.nan)
                res.F[k, i] = getattr(pol, "last_F", math.nan)
    return res


@dataclass
class MeasuredThroughput:
    mean: np.ndarray        # bits/s per station
    halfwidth: np.ndarray   # 95% Student-t half-widths (nan if 1 replication)
    n_replications: int

    @property
    def ci_free(self) -> bool:
        return self.n_replications < 2


def measure_throughput(episodes, measure_from: int = 0) -> MeasuredThroughput:
    """Mean per-station throughput across replications with 95% CIs."""
    if not episodes:
        raise ValueError("needs at least one episode")
    samples = np.array([ep.window(measure_from) for ep in episodes])
    mean = samples.mean(axis=0)
    r = samples.shape[0]
    if r < 2:
        return MeasuredThroughput(mean=mean,
                                  halfwidth=np.full(mean.shape, np.nan),
                                  n_replications=r)
    se = samples.std(axis=0, ddof=1) / math.sqrt(r)
    tval = float(_sstats.t.ppf(0.975, r - 1))
    return MeasuredThroughput(mean=mean, halfwidth=tval * se, n_replications=r)
