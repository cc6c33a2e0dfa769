"""Per-station access-probability controller.

Each station runs an independent PI controller once per interval.  The
controller output (the control signal, in mini-slot units) maps
bijectively to the access probability via the station's expected hold
time.  The error signal compares the station's measured channel time with
everyone else's and subtracts a punishment term that (i) drives the system
to the optimal configuration when channel times are equal, and (ii) caps
the channel time any deviating station can capture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .analytic import E_OVERHEAD, TAU


@dataclass(frozen=True)
class ControllerState:
    """PI gains plus the integral accumulator and saturation bounds."""

    kp: float
    ki: float
    error_sum: float = 0.0   # accumulated error, mini-slot units
    P: float = 0.0           # current control signal, mini-slot units
    P_initial: float = 0.0   # startup control signal
    P_max: float = math.inf  # saturation ceiling


@dataclass(frozen=True)
class PunishmentParams:
    """Inputs of the punishment term for one station."""

    n: int             # station count
    t_star: float      # optimal per-station channel time, t_total / n
    p_min_i: float     # own component of the deficit-minimizing probabilities
    delta: float       # deficit at the deficit minimizer (<= 0)


def control_to_probability(P: float, t_hold: float) -> float:
    """Access probability for a control signal; strictly increasing in P."""
    if P < 0:
        raise ValueError("control signal must be >= 0")
    return P / (t_hold + E_OVERHEAD + P)


def probability_to_control(p: float, t_hold: float) -> float:
    """Control signal realizing an access probability; inverse of the above."""
    if not 0.0 <= p < 1.0:
        raise ValueError("probability must lie in [0, 1)")
    return p / (1.0 - p) * (t_hold + E_OVERHEAD)


def deficit(t, t_star: float, n: int) -> float:
    """Shortfall of the measured total channel time against n * t_star."""
    return n * t_star - float(np.sum(t))


def punishment(t, p_i: float, params: PunishmentParams) -> float:
    """Punishment term of the error signal, in mini-slots.

    Kept close to its upper bound D/(n-1) when the own probability is above
    the deficit minimizer (just enough punishment to cancel any gain) and
    well below it otherwise, so that under equal channel times the term is
    positive above the optimum and negative below it.
    """
    n = params.n
    d = deficit(t, params.t_star, n)
    if p_i > params.p_min_i:
        return min((n - 1) * d, d / n)
    return min((n - 1) * d, -d / n, (n - 1) * params.delta)


def error_signal(t, own: int, p_i: float, params: PunishmentParams) -> float:
    """Channel-time error of one station: sum_j (t_j - t_own) - punishment."""
    t = np.asarray(t, dtype=np.float64)
    gap = float(t.sum() - params.n * t[own])
    return gap - punishment(t, p_i, params)


def pi_update(state: ControllerState, error: float) -> ControllerState:
    """Position-form PI step with conditional-integration anti-windup.

    The integral accumulator is frozen whenever the output clamp is active
    and integrating the current error would push further into saturation.
    """
    new_sum = state.error_sum + error
    raw = state.P_initial + state.kp * error + state.ki * new_sum
    if (raw > state.P_max and error > 0) or (raw < 0.0 and error < 0):
        new_sum = state.error_sum
        raw = state.P_initial + state.kp * error + state.ki * new_sum
    P = min(max(raw, 0.0), state.P_max)
    return replace(state, error_sum=new_sum, P=P)


def estimate_plant_gain(p_sum_estimate: float, t_total: float) -> float:
    """Scalar gain of the linearized channel-time plant."""
    if p_sum_estimate <= 0:
        raise ValueError("control-signal sum estimate must be > 0")
    return t_total / p_sum_estimate


def tune_gains(n: int, plant_gain: float) -> tuple[float, float]:
    """Ziegler-Nichols PI gains for n stations and a given plant gain.

    The ultimate proportional gain is 1/(2 n K); the oscillation period at
    that gain is two intervals, giving kp = 0.4 Ku and ki = kp / 1.7.
    """
    kp = 0.4 / (2.0 * n * plant_gain)
    ki = kp / (0.85 * 2.0)
    return kp, ki


def stability_check(kp: float, ki: float, n: int, plant_gain: float) -> bool:
    """Sufficient condition for closed-loop stability of the gain pair."""
    bound = 1.0 / (n * plant_gain)
    return ki < kp + bound and ki > 2.0 * kp - bound
