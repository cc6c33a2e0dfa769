"""Closed-form throughput model and the optimal-configuration solvers.

The contention process: stations contend per mini-slot (duration ``TAU``)
with access probabilities ``p_i``; a slot with exactly one contender is a
success, after which the winner holds the channel for its expected hold
time (one mini-slot if it gives up, the transmission duration plus one if
it transmits).  Station throughput is

    r_i = p_si * l_i / (sum_j p_sj * T_j + (1 - p_s) * TAU)

with ``p_si = p_i * prod_{j != i} (1 - p_j)`` and ``p_s = sum_i p_si``.

The proportionally fair operating point fixes the total success
probability at 1/e and equalizes the per-station channel time
``p_si * (T_i + E_OVERHEAD)``; the rate thresholds decouple per station
and solve a scalar mean-excess fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import RateModel, censored_mean, excess_mean, mean_rate, tail_prob

TAU = 1.0                            # mini-slot duration, the internal time unit
E_OVERHEAD = (math.e - 1.0) * TAU    # per-success channel-time overhead
INV_E = 1.0 / math.e                 # target total success probability


class SolverError(RuntimeError):
    """A configuration solver failed to bracket or converge."""


@dataclass(frozen=True)
class NetworkParams:
    """Global constants of one network scenario."""

    n: int
    t_tx: int = 10            # transmission duration in mini-slots
    t_total: int = 100_000    # controller interval length in mini-slots
    models: tuple = ()        # per-station RateModel, length n when present

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.t_tx <= 0:
            raise ValueError("t_tx must be > 0")
        if self.t_total < 10 * self.t_tx:
            raise ValueError("t_total must be much larger than t_tx")
        if self.models and len(self.models) != self.n:
            raise ValueError("models must have exactly n entries")


@dataclass(frozen=True)
class StationStats:
    """Per-station expected hold time and bits per successful contention."""

    t_hold: float      # mini-slots, in [TAU, t_tx + TAU]
    l_bits: float      # expected bits delivered per successful contention
    threshold: float   # rate threshold in bits/s


@dataclass(frozen=True)
class Allocation:
    """Access probabilities and the resulting throughput split."""

    p: np.ndarray       # per-station access probability
    r: np.ndarray       # per-station throughput, bits/s
    p_s_i: np.ndarray   # per-station success probability
    p_s: float          # total success probability


def station_stats(model: RateModel, threshold: float, params: NetworkParams) -> StationStats:
    """Expected hold time and bits per success at a given rate threshold.

    Bits are counted over the fixed data portion ``t_tx`` of a used
    transmission opportunity (the contention mini-slot carries none).
    """
    q = tail_prob(model, threshold)
    t_hold = (1.0 - q) * TAU + q * (params.t_tx + TAU)
    l_bits = censored_mean(model, threshold) * params.t_tx
    return StationStats(t_hold=t_hold, l_bits=l_bits, threshold=threshold)


def success_probabilities(p: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-station and total probability that a slot is a success."""
    p = np.asarray(p, dtype=np.float64)
    one_minus = 1.0 - p
    p_s_i = np.empty_like(p)
    for i in range(p.shape[0]):
        others = np.prod(one_minus[:i]) * np.prod(one_minus[i + 1:])
        p_s_i[i] = p[i] * others
    return p_s_i, float(p_s_i.sum())


def throughput(p, stats, params: NetworkParams) -> Allocation:
    """Per-station throughput of a configuration (access probs + stats)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("access probabilities must lie in [0, 1]")
    p_s_i, p_s = success_probabilities(p)
    t_hold = np.array([s.t_hold for s in stats])
    l_bits = np.array([s.l_bits for s in stats])
    denom = float(p_s_i @ t_hold) + (1.0 - p_s) * TAU
    r = p_s_i * l_bits / denom
    return Allocation(p=p, r=r, p_s_i=p_s_i, p_s=p_s)


def proportional_fairness(alloc: Allocation) -> float:
    """Sum of log throughputs; -inf if any station is starved."""
    if np.any(alloc.r <= 0):
        return -math.inf
    return float(np.log(alloc.r).sum())


def _bisect(f, lo, hi, f_lo, tol_x, tol_f=0.0, max_iter=200):
    """Root of a bracketing sign change, to |f| <= tol_f or width <= tol_x."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) <= tol_f or (hi - lo) <= tol_x:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_threshold(model: RateModel, params: NetworkParams) -> float:
    """Optimal rate threshold: the root of E[(R - x)^+] = x * TAU * e / t_tx.

    The left side is continuous and nonincreasing in x, the right side
    strictly increasing, so the root is unique.  It coincides with the
    threshold maximizing the single-station throughput
    l(x) / (T(x) + E_OVERHEAD).
    """
    mean = mean_rate(model)
    if not (mean > 0 and math.isfinite(mean)):
        raise SolverError("rate model has no finite positive mean")
    c = TAU * math.e / params.t_tx

    def f(x):
        return excess_mean(model, x) - c * x

    hi = mean
    while f(hi) > 0:
        hi *= 2.0
        if hi > 60.0 * mean:
            raise SolverError("threshold bracketing failed; malformed rate model")
    root = _bisect(f, 0.0, hi, f_lo=mean, tol_x=0.0, tol_f=1e-9 * mean, max_iter=200)
    return root


def _odds_coeffs(stats) -> np.ndarray:
    return 1.0 / np.array([s.t_hold + E_OVERHEAD for s in stats])


def _p_of_scale(scale: float, c: np.ndarray) -> np.ndarray:
    x = scale * c
    return x / (1.0 + x)


def _success_of_scale(scale: float, c: np.ndarray) -> float:
    # p_s along the equal-channel-time family, parameterized by the common
    # control scale: p_s = (scale * sum c) * prod 1/(1 + scale * c_i).
    x = scale * c
    return float(x.sum() * np.exp(-np.log1p(x).sum()))


def _peak_scale(c: np.ndarray) -> float:
    # p_s is unimodal in the scale; its maximizer satisfies sum p_i = 1.
    def g(s):
        return float(_p_of_scale(s, c).sum()) - 1.0

    lo, hi = 1e-12, 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise SolverError("equal-channel-time family has no interior peak")
    return _bisect(g, lo, hi, f_lo=g(lo), tol_x=0.0, tol_f=1e-13)


def solve_optimal_p(stats, params: NetworkParams, branch: str = "larger") -> np.ndarray:
    """Access probabilities of the proportionally fair operating point.

    Equalizing per-station channel time pins the contention odds
    ``p_i / (1 - p_i)`` to a common multiple of ``1 / (T_i + E_OVERHEAD)``,
    which reduces the system to a scalar equation p_s(scale) = 1/e.  That
    equation has two roots; by default the componentwise-larger one is
    returned.  ``branch="smaller"`` selects the other root (used to verify
    dominance).
    """
    n = len(stats)
    if n != params.n:
        raise ValueError("stats length must match params.n")
    if n == 1:
        return np.array([INV_E])
    c = _odds_coeffs(stats)
    peak = _peak_scale(c)
    peak_ps = _success_of_scale(peak, c)
    if peak_ps < INV_E:
        raise SolverError(
            f"peak success probability {peak_ps:.6f} below 1/e; no solution")

    def f(s):
        return _success_of_scale(s, c) - INV_E

    if branch == "larger":
        hi = peak * 2.0
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1e15:
                raise SolverError("upper root bracketing failed")
        scale = _bisect(f, peak, hi, f_lo=f(peak), tol_x=0.0, tol_f=1e-13, max_iter=300)
    elif branch == "smaller":
        lo = peak
        while f(lo) > 0:
            lo *= 0.5
            if lo < 1e-15:
                raise SolverError("lower root bracketing failed")
        scale = _bisect(f, lo, peak, f_lo=f(lo), tol_x=0.0, tol_f=1e-13, max_iter=300)
    else:
        raise ValueError("branch must be 'larger' or 'smaller'")
    return _p_of_scale(scale, c)


def throughput_slope_signs(p, stats, params: NetworkParams, h: float = 1e-6) -> np.ndarray:
    """Signs of the per-station throughput slope in the own access probability.

    Central finite difference of r_i in p_i with everything else fixed;
    positive everywhere in the interior (more access is more throughput
    when nobody reacts).
    """
    p = np.asarray(p, dtype=np.float64)
    signs = np.empty(p.shape[0], dtype=np.int64)
    for i in range(p.shape[0]):
        step = min(h, 0.5 * p[i] if p[i] > 0 else h, 0.5 * (1.0 - p[i]))
        up, dn = p.copy(), p.copy()
        up[i] += step
        dn[i] -= step
        diff = throughput(up, stats, params).r[i] - throughput(dn, stats, params).r[i]
        signs[i] = int(np.sign(diff))
    return signs


def channel_time_deficit(p, stats, params: NetworkParams) -> float:
    """Expected shortfall of total channel time against N * t_star.

    Channel time charges each success its hold time plus E_OVERHEAD; at the
    optimal configuration the overhead exactly covers the idle/collision
    time between successes and the deficit vanishes.
    """
    if len(stats) != params.n:
        raise ValueError("stats length must match params.n")
    p_s_i, p_s = success_probabilities(np.asarray(p, dtype=np.float64))
    t_hold = np.array([s.t_hold for s in stats])
    busy = float(p_s_i @ t_hold)
    t_star = params.t_total / params.n
    occupied = params.t_total * (busy + p_s * E_OVERHEAD) / (busy + (1.0 - p_s) * TAU)
    return params.n * t_star - occupied


def solve_min_deficit(stats, params: NetworkParams) -> tuple[np.ndarray, float]:
    """Deficit-minimizing probabilities on the equal-channel-time family.

    On that family minimizing the deficit is equivalent to maximizing the
    total success probability, whose maximizer satisfies sum p_i = 1.
    Returns the probabilities and the deficit value there (<= 0).
    """
    if len(stats) < 2:
        raise ValueError("needs at least two stations")
    if len(stats) != params.n:
        raise ValueError("stats length must match params.n")
    c = _odds_coeffs(stats)
    scale = _peak_scale(c)
    p_min = _p_of_scale(scale, c)
    delta = channel_time_deficit(p_min, stats, params)
    return p_min, delta


def solve_min_deficit_from_holds(t_holds, params: NetworkParams) -> tuple[np.ndarray, float]:
    """:func:`solve_min_deficit` from hold times alone (bits do not matter)."""
    stats = [StationStats(t_hold=float(t), l_bits=0.0, threshold=0.0) for t in t_holds]
    return solve_min_deficit(stats, params)
