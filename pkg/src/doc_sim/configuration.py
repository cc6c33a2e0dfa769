"""End-to-end solve of the all-honest operating point for a station set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analytic, control


@dataclass(frozen=True)
class SolvedConfig:
    """Everything the controller and the baselines need, solved once."""

    thresholds: np.ndarray   # per-station optimal rate threshold, bits/s
    t_holds: np.ndarray      # per-station expected hold time, mini-slots
    l_bits: np.ndarray       # per-station expected bits per success
    p_star: np.ndarray       # optimal access probabilities
    r_star: np.ndarray       # per-station throughput at the optimum, bits/s
    p_signal: np.ndarray     # per-station control signal at the optimum
    plant_gain: float        # scalar gain of the linearized plant
    kp: float
    ki: float
    p_min: np.ndarray        # deficit-minimizing probabilities (n >= 2)
    delta: float             # deficit at the minimizer


def solve_configuration(params: analytic.NetworkParams) -> SolvedConfig:
    """Solve thresholds, access probabilities, gains and punishment inputs."""
    models = params.models
    if len(models) != params.n:
        raise ValueError("params.models must hold one model per station")
    thresholds = np.array([analytic.solve_threshold(m, params) for m in models])
    stats = [analytic.station_stats(m, thr, params)
             for m, thr in zip(models, thresholds)]
    p_star = analytic.solve_optimal_p(stats, params)
    alloc = analytic.throughput(p_star, stats, params)
    p_signal = np.array([
        control.probability_to_control(p, s.t_hold)
        for p, s in zip(p_star, stats)])
    plant_gain = control.estimate_plant_gain(float(p_signal.sum()), params.t_total)
    kp, ki = control.tune_gains(params.n, plant_gain)
    if params.n >= 2:
        p_min, delta = analytic.solve_min_deficit(stats, params)
    else:
        p_min, delta = np.array([1.0 / np.e]), 0.0
    return SolvedConfig(
        thresholds=thresholds,
        t_holds=np.array([s.t_hold for s in stats]),
        l_bits=np.array([s.l_bits for s in stats]),
        p_star=p_star, r_star=alloc.r, p_signal=p_signal,
        plant_gain=plant_gain, kp=kp, ki=ki, p_min=p_min, delta=delta)
