"""Station policies: the honest controller and the selfish strategies.

A policy is a small per-station state machine driven by the episode loop:
``reset`` at episode start (or re-join), ``config`` at the start of each
interval, ``observe`` at its end.  Honest stations compose the error
signal, the PI update and the control-signal mapping, keeping their rate
threshold fixed at the locally optimal value.  Selfish stations ignore the
controller and play fixed or adaptive {p, threshold} configurations.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import control, sim
from .analytic import (INV_E, NetworkParams, StationStats,
                       solve_min_deficit_from_holds)

SELFISH = "selfish"
HONEST = "honest"

ADAPTIVE_KINDS = ("adaptive-p", "adaptive-threshold", "adaptive-both")
STRATEGY_KINDS = ("doc", "fixed") + ADAPTIVE_KINDS

# Ceiling on honest access probabilities: a hard p = 1 would deadlock the
# collision channel, and the punishment argument only needs P bounded.
P_CEILING = 0.999
P_START = 0.5
P_GAIN_FLOOR = 0.01           # gain re-tuning never sees a smaller own p
THROUGHPUT_WINDOW = 5         # trailing mean fed to adaptive attackers
SHARE_WINDOW = 3              # smoothing of the own channel-time share
# Starvation alarm: losing most of the fair channel-time share also costs
# the station most of its leverage on the error signal, so on the onset of
# starvation the gains are boosted and then relaxed back to the nominal
# (provably stable) tuning.  The alarm re-arms only after the share
# recovers, so a deficit the boost cannot fix quickly falls back to the
# conservative loop instead of holding an unanalyzed high-gain regime.
ALARM_TRIGGER = 2.0           # share deficit that fires the alarm
ALARM_RECOVERY = 1.5          # deficit below which the alarm re-arms
ALARM_BOOST = 6.0             # initial gain boost when fired
ALARM_DECAY = 0.95            # per-interval relaxation toward 1

_symmetric_p_cache = {}


def symmetric_optimal_p(n: int) -> float:
    """Larger root of n p (1-p)^(n-1) = 1/e, the optimum of a symmetric net.

    Computable from local information alone (only n enters), which lets a
    station warm-start its controller near the operating point instead of
    integrating its way down from the join probability.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return INV_E
    p = _symmetric_p_cache.get(n)
    if p is None:
        f = lambda q: n * q * (1.0 - q) ** (n - 1) - INV_E
        lo, hi = 1.0 / n, 1.0 - 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
        p = 0.5 * (lo + hi)
        _symmetric_p_cache[n] = p
    return p


@dataclass(frozen=True)
class Strategy:
    """Declarative description of one station's behavior."""

    kind: str                          # doc | fixed | adaptive-*
    fixed_p: float = None
    fixed_threshold: float = None      # bits/s
    reference_rate: float = None       # bits/s, adaptive kinds
    hysteresis_low: float = 0.95

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "fixed":
            if self.fixed_p is None or not 0.0 <= self.fixed_p <= 1.0:
                raise ValueError("fixed strategy needs fixed_p in [0, 1]")
            if self.fixed_threshold is None or self.fixed_threshold < 0:
                raise ValueError("fixed strategy needs fixed_threshold >= 0")
        if self.kind in ADAPTIVE_KINDS and self.reference_rate is not None \
                and self.reference_rate <= 0:
            raise ValueError("adaptive strategies need reference_rate > 0")


class FixedStation:
    """Plays a constant {p, threshold} configuration."""

    def __init__(self, p: float, threshold: float):
        self.p = float(p)
        self.threshold = float(threshold)

    def reset(self, index, n_active):
        self.index = index

    def config(self):
        return self.p, self.threshold

    def observe(self, interval, report, active):
        pass


def adaptive_transition(state: str, rate: float, reference: float,
                        hysteresis_low: float = 0.95) -> str:
    """Two-state attacker machine.

    Selfish while gaining (rate above the all-honest reference); honest once
    the gain is gone, until the rate recovers above ``hysteresis_low`` of
    the reference.
    """
    if state == SELFISH:
        return HONEST if rate < reference else SELFISH
    return SELFISH if rate > hysteresis_low * reference else HONEST


class AdaptiveStation:
    """Alternates a selfish configuration with the honest one."""

    def __init__(self, kind: str, honest_p: float, honest_threshold: float,
                 reference_rate: float, hysteresis_low: float = 0.95,
                 window: int = THROUGHPUT_WINDOW):
        if kind not in ADAPTIVE_KINDS:
            raise ValueError(f"not an adaptive kind: {kind!r}")
        self.kind = kind
        self.honest = (float(honest_p), float(honest_threshold))
        selfish_p = 1.0 if kind in ("adaptive-p", "adaptive-both") else honest_p
        selfish_thr = 0.0 if kind in ("adaptive-threshold", "adaptive-both") \
            else honest_threshold
        self.selfish = (float(selfish_p), float(selfish_thr))
        self.reference_rate = float(reference_rate)
        self.hysteresis_low = float(hysteresis_low)
        self.window = int(window)

    def reset(self, index, n_active):
        self.index = index
        self.state = SELFISH
        self._history = deque(maxlen=self.window)

    def config(self):
        return self.selfish if self.state == SELFISH else self.honest

    def observe(self, interval, report, active):
        # Single-interval throughput is noisy; the attacker reacts to a short
        # trailing mean instead.
        self._history.append(report.bits[self.index] / report.elapsed)
        trailing = sum(self._history) / len(self._history)
        self.state = adaptive_transition(
            self.state, trailing, self.reference_rate, self.hysteresis_low)


class DocStation:
    """Honest station: fixed optimal threshold, PI-controlled access probability.

    The punishment inputs (deficit minimizer and its deficit value) are
    recomputed each interval from the measured average hold times of all
    stations; the controller gains are re-tuned each interval from a
    symmetric estimate of the plant gain based on the station's own control
    signal.
    """

    def __init__(self, threshold: float, t_hold: float, params: NetworkParams,
                 gain_mode: str = "ziegler-nichols", kp: float = None,
                 ki: float = None, gain_scale: float = 1.0,
                 punishment_scale: float = 1.0, minimizer_cache: dict = None):
        self.threshold = float(threshold)
        self.t_hold = float(t_hold)
        self.params = params
        if gain_mode not in ("ziegler-nichols", "manual"):
            raise ValueError(f"unknown gain_mode {gain_mode!r}")
        if gain_mode == "manual" and (kp is None or ki is None):
            raise ValueError("manual gain_mode needs Kp and Ki")
        self.gain_mode = gain_mode
        self.manual_gains = (kp, ki)
        self.gain_scale = float(gain_scale)
        self.punishment_scale = float(punishment_scale)
        self._cache = minimizer_cache if minimizer_cache is not None else {}

    def reset(self, index, n_active):
        self.index = index
        p_init = control.probability_to_control(P_START, self.t_hold)
        p_max = control.probability_to_control(P_CEILING, self.t_hold)
        self._p_floor = control.probability_to_control(P_GAIN_FLOOR, self.t_hold)
        self._own_t = deque(maxlen=SHARE_WINDOW)
        self._alarm = 1.0
        self._alarm_armed = True
        kp, ki = self._gains(n_active, p_init)
        self.state = control.ControllerState(
            kp=kp, ki=ki, error_sum=0.0, P=p_init, P_initial=p_init, P_max=p_max)
        self.p = P_START
        self._fresh = True
        self._hold_total = None
        self._succ_total = None
        self.last_P = p_init
        self.last_E = math.nan
        self.last_F = math.nan

    def config(self):
        return self.p, self.threshold

    def _gains(self, n_active, p_own):
        if self.gain_mode == "manual":
            kp, ki = self.manual_gains
        else:
            k_h = control.estimate_plant_gain(
                n_active * max(p_own, self._p_floor), self.params.t_total)
            kp, ki = control.tune_gains(n_active, k_h)
            kp *= self._alarm
            ki *= self._alarm
        return kp * self.gain_scale, ki * self.gain_scale

    def _update_alarm(self, n_active):
        t_star = self.params.t_total / n_active
        t_own = (sum(self._own_t) / len(self._own_t)) if self._own_t else t_star
        deficit = t_star / max(t_own, 1e-9 * t_star)
        if self._alarm_armed and deficit > ALARM_TRIGGER:
            self._alarm = ALARM_BOOST
            self._alarm_armed = False
        elif not self._alarm_armed and deficit <= ALARM_RECOVERY:
            self._alarm_armed = True
        self._alarm = max(1.0, ALARM_DECAY * self._alarm)

    def _hold_estimates(self, report, active):
        n = report.n.shape[0]
        if self._hold_total is None:
            self._hold_total = np.zeros(n)
            self._succ_total = np.zeros(n, dtype=np.int64)
        self._hold_total += report.hold_sum
        self._succ_total += report.n
        seen = self._succ_total > 0
        est = np.full(n, self.t_hold)
        est[seen] = self._hold_total[seen] / self._succ_total[seen]
        return est[active]

    def observe(self, interval, report, active):
        n_active = int(active.sum())
        if n_active == 1:
            # Alone in the channel there is nobody to compare against; the
            # optimal access probability is known outright.
            self.p = 1.0 / math.e
            self.last_E = 0.0
            self.last_F = 0.0
            self.last_P = control.probability_to_control(self.p, self.t_hold)
            return
        holds = self._hold_estimates(report, active)
        own = int(np.searchsorted(np.flatnonzero(active), self.index))
        self._own_t.append(float(report.t[self.index]))
        self._update_alarm(n_active)

        key = (holds.tobytes(), n_active, self.params.t_total)
        hit = self._cache.get(key)
        if hit is None:
            ap = NetworkParams(n=n_active, t_tx=self.params.t_tx,
                               t_total=self.params.t_total)
            hit = solve_min_deficit_from_holds(holds, ap)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = hit
        p_min, delta = hit

        t = report.t[active]
        pparams = control.PunishmentParams(
            n=n_active, t_star=self.params.t_total / n_active,
            p_min_i=float(p_min[own]), delta=float(delta))
        f = control.punishment(t, self.p, pparams) * self.punishment_scale
        e = float(t.sum() - n_active * t[own]) - f

        if self._fresh:
            # Warm start after the first measured interval: jump to the
            # symmetric-network optimum (a local computation; only n enters)
            # by seeding the integral accumulator.  The punishment term is
            # deliberately gentle above the optimum, so integrating the way
            # down from the join probability would take hundreds of
            # intervals; the pairwise terms then trim the heterogeneous
            # residual quickly.
            self._fresh = False
            p_target = control.probability_to_control(
                symmetric_optimal_p(n_active), self.t_hold)
            seed = (p_target - self.state.P_initial) / self.state.ki
            self.state = replace(self.state, error_sum=seed, P=p_target)
        else:
            kp, ki = self._gains(n_active, self.state.P)
            if ki != self.state.ki:
                # Bumpless retune: preserve the integral contribution
                # ki * error_sum so a gain refresh never moves the output.
                scaled = self.state.error_sum * (self.state.ki / ki)
                self.state = replace(self.state, kp=kp, ki=ki, error_sum=scaled)
            self.state = control.pi_update(self.state, e)
        self.p = control.control_to_probability(self.state.P, self.t_hold)
        self.last_P = self.state.P
        self.last_E = e
        self.last_F = f


def doc_policy(report, station: DocStation, active) -> tuple:
    """One honest update step: observe an interval, return the new config."""
    station.observe(0, report, active)
    return station.config()


def fixed_attack_grid(p_values, thresholds) -> list:
    """Cartesian product of fixed strategies, deduplicated."""
    if not len(p_values) or not len(thresholds):
        raise ValueError("grids must be nonempty")
    seen = {}
    for p in p_values:
        for thr in thresholds:
            seen.setdefault((float(p), float(thr)), None)
    return [Strategy(kind="fixed", fixed_p=p, fixed_threshold=thr)
            for (p, thr) in seen]


def default_attack_grid(threshold_star: float) -> list:
    """The 20 x 9 default attack grid around a station's optimal threshold."""
    p_values = [round(0.05 * k, 2) for k in range(1, 21)]
    thresholds = [s * threshold_star for s in
                  (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)]
    return fixed_attack_grid(p_values, thresholds)


def build_policy(strategy: Strategy, solved, index: int, params: NetworkParams,
                 controller: dict = None, cache: dict = None):
    """Instantiate the runtime policy of one station.

    ``solved`` carries the all-honest configuration (per-station thresholds,
    hold times, access probabilities); adaptive attackers additionally need
    their calibrated reference rate in ``strategy.reference_rate``.
    """
    controller = controller or {}
    if strategy.kind == "doc":
        return DocStation(
            threshold=solved.thresholds[index], t_hold=solved.t_holds[index],
            params=params,
            gain_mode=controller.get("gain_mode", "ziegler-nichols"),
            kp=controller.get("Kp"), ki=controller.get("Ki"),
            gain_scale=controller.get("gain_scale", 1.0),
            punishment_scale=controller.get("punishment_scale", 1.0),
            minimizer_cache=cache)
    if strategy.kind == "fixed":
        return FixedStation(strategy.fixed_p, strategy.fixed_threshold)
    if strategy.reference_rate is None:
        raise ValueError("adaptive strategy needs a calibrated reference_rate")
    return AdaptiveStation(
        strategy.kind, honest_p=solved.p_star[index],
        honest_threshold=solved.thresholds[index],
        reference_rate=strategy.reference_rate,
        hysteresis_low=strategy.hysteresis_low)


def build_policies(strategies, solved, params: NetworkParams, controller=None):
    """Policies for a whole roster, sharing one deficit-minimizer cache."""
    cache = {}
    return [build_policy(s, solved, i, params, controller, cache)
            for i, s in enumerate(strategies)]


def coalition_sweep(strategies_a, strategies_b, setup, pair_indices,
                    seed: int, intervals: int, measure_from: int,
                    reference: np.ndarray) -> list:
    """Throughput of two coordinated attackers over all strategy pairs.

    ``setup = (models, params, base_strategies, controller, solved)``; the
    two attacker roster slots are ``pair_indices``.  Returns one record per
    pair: (strategy_a, strategy_b, r_k, r_l, t_k, t_l) with throughputs in
    bits/s and per-interval mean channel times in mini-slots, plus the
    all-honest reference pair for comparison.
    """
    models, params, base, controller, solved = setup
    k, l = pair_indices
    records = []
    for sa in strategies_a:
        for sb in strategies_b:
            roster = list(base)
            roster[k] = sa
            roster[l] = sb
            policies = build_policies(roster, solved, params, controller)
            ep = sim.run_episode(models, policies, params, intervals, seed)
            r = ep.window(measure_from)
            t_mean = ep.t[measure_from:].mean(axis=0)
            records.append({
                "strategy_a": sa, "strategy_b": sb,
                "r_k": float(r[k]), "r_l": float(r[l]),
                "t_k": float(t_mean[k]), "t_l": float(t_mean[l]),
                "r_k_ref": float(reference[k]), "r_l_ref": float(reference[l]),
            })
    return records
