"""Scenario catalog runners: per-figure experiments, baselines, CSV output.

Each bundled scenario (``fig5`` .. ``fig15``) names an experiment type;
:func:`run_scenario` dispatches to the matching runner.  All runners write
plot-ready CSVs under the output directory and return the same tables as
lists of dicts.  Replications and sweep/grid points fan out over a thread
pool (the compiled kernel releases the GIL); ``DOC_SIM_THREADS`` caps the
pool size.  Results are reproducible: the output of a runner is a pure
function of (scenario, master seed).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import sim, strategies
from .analytic import NetworkParams, StationStats, solve_optimal_p, TAU
from .configuration import SolvedConfig, solve_configuration
from .scenario import Scenario, ScenarioError, apply_overrides, validate_scenario
from .strategies import Strategy

TRACE_HEADER = "interval,station,p,P,E,F,t,bits,successes"
SUMMARY_HEADER = "param,station,throughput_bps,ci_halfwidth"

# Episode replication-index blocks, so calibration, measurement and grid
# episodes never share random streams.
_REP_CALIBRATION = 0
_REP_MEASURE = 100
_REP_GRID = 1000


def thread_count() -> int:
    env = os.environ.get("DOC_SIM_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [header]
    keys = header.split(",")
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in keys))
    path.write_text("\n".join(lines) + "\n")


def write_trace(path: Path, episode: sim.EpisodeResult) -> None:
    rows = []
    intervals, n = episode.p.shape
    for k in range(intervals):
        for i in range(n):
            rows.append({
                "interval": k, "station": i,
                "p": float(episode.p[k, i]), "P": float(episode.P[k, i]),
                "E": float(episode.E[k, i]), "F": float(episode.F[k, i]),
                "t": float(episode.t[k, i]), "bits": float(episode.bits[k, i]),
                "successes": int(episode.successes[k, i]),
            })
    write_csv(path, TRACE_HEADER, rows)


def models_and_params(scn: Scenario) -> tuple:
    models = tuple(s.channel for s in scn.stations)
    params = NetworkParams(n=scn.n, t_tx=scn.t_tx, t_total=scn.t_total,
                           models=models)
    return models, params


def resolve_strategy(spec: dict, solved: SolvedConfig, index: int) -> Strategy:
    """Turn a scenario strategy object into a concrete Strategy."""
    kind = spec.get("kind", "doc")
    if kind == "doc":
        return Strategy(kind="doc")
    if kind == "fixed":
        thr = spec.get("threshold_scale", 1.0) * solved.thresholds[index]
        return Strategy(kind="fixed", fixed_p=float(spec["p"]),
                        fixed_threshold=float(thr))
    return Strategy(kind=kind, hysteresis_low=spec.get("hysteresis_low", 0.95))


def scenario_point(scn: Scenario, assignments) -> Scenario:
    """Re-validate the scenario with override assignments applied."""
    return validate_scenario(apply_overrides(scn.raw, assignments), name=scn.name)


def _run_one(models, policies, params, intervals, seed, replication):
    return sim.run_episode(models, policies, params, intervals, seed,
                           replication=replication)


def run_episode_batch(scn: Scenario, roster, solved, seed: int, replications,
                      intervals: int = None, events=(), initially_active=None,
                      policy_patch=None) -> list:
    """Run a batch of episodes of one roster, in parallel, deterministically.

    ``roster`` is a list of Strategy; ``replications`` an iterable of
    replication indices; ``policy_patch`` an optional hook applied to the
    freshly built policy list of each episode (used for scheduled attacker
    switches and the like).
    """
    models, params = models_and_params(scn)
    intervals = scn.intervals if intervals is None else intervals

    def one(rep_idx):
        policies = strategies.build_policies(roster, solved, params,
                                             scn.controller)
        if policy_patch is not None:
            policy_patch(policies)
        return sim.run_episode(models, policies, params, intervals, seed,
                               replication=rep_idx, events=events,
                               initially_active=initially_active)

    reps = list(replications)
    workers = min(thread_count(), max(1, len(reps)))
    if workers == 1 or len(reps) == 1:
        return [one(r) for r in reps]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, reps))


def doc_roster(scn: Scenario) -> list:
    return [Strategy(kind="doc") for _ in range(scn.n)]


def roster_from_scenario(scn: Scenario, solved, seed: int) -> list:
    """Resolve the per-station strategy specs declared in the scenario.

    Inline adaptive attackers get their reference rate from an all-honest
    calibration batch.
    """
    roster = [resolve_strategy(s.strategy, solved, i)
              for i, s in enumerate(scn.stations)]
    needs_ref = [i for i, s in enumerate(roster)
                 if s.kind in strategies.ADAPTIVE_KINDS]
    if needs_ref:
        ref = calibrate_reference(scn, solved, seed)
        for i in needs_ref:
            roster[i] = Strategy(kind=roster[i].kind,
                                 reference_rate=float(ref.mean[i]),
                                 hysteresis_low=roster[i].hysteresis_low)
    return roster


def calibrate_reference(scn: Scenario, solved, seed: int, reps: int = None) -> sim.MeasuredThroughput:
    """All-honest throughput of each station, the attackers' yardstick."""
    reps = reps if reps is not None else max(3, scn.replications)
    eps = run_episode_batch(scn, doc_roster(scn), solved, seed,
                            range(_REP_CALIBRATION, _REP_CALIBRATION + reps))
    return sim.measure_throughput(eps, scn.measure_from)


def baseline_static(scn: Scenario, seed: int, reps: int = None) -> sim.MeasuredThroughput:
    """Simulate with p and thresholds pinned to the analytic optimum."""
    models, params = models_and_params(scn)
    solved = solve_configuration(params)
    roster = [Strategy(kind="fixed", fixed_p=float(solved.p_star[i]),
                       fixed_threshold=float(solved.thresholds[i]))
              for i in range(scn.n)]
    reps = reps if reps is not None else scn.replications
    eps = run_episode_batch(scn, roster, solved, seed,
                            range(_REP_MEASURE, _REP_MEASURE + reps))
    return sim.measure_throughput(eps, scn.measure_from)


def baseline_nonopportunistic(scn: Scenario, seed: int, reps: int = None) -> sim.MeasuredThroughput:
    """Always transmit after a successful contention (threshold 0)."""
    models, params = models_and_params(scn)
    solved = solve_configuration(params)
    from .analytic import censored_mean
    stats = [StationStats(t_hold=params.t_tx + TAU,
                          l_bits=censored_mean(m, 0.0) * params.t_tx,
                          threshold=0.0) for m in models]
    p = solve_optimal_p(stats, params) if scn.n > 1 else np.array([1.0 / math.e])
    roster = [Strategy(kind="fixed", fixed_p=float(p[i]), fixed_threshold=0.0)
              for i in range(scn.n)]
    reps = reps if reps is not None else scn.replications
    eps = run_episode_batch(scn, roster, solved, seed,
                            range(_REP_MEASURE, _REP_MEASURE + reps))
    return sim.measure_throughput(eps, scn.measure_from)


def fairness_and_tables(measured: sim.MeasuredThroughput) -> dict:
    """Log-throughput sum, a Jain-style spread index, and flags."""
    r = measured.mean
    flagged = bool(np.any(r <= 0))
    sum_log = -math.inf if flagged else float(np.log(r).sum())
    jain = float(r.sum() ** 2 / (r.shape[0] * (r * r).sum())) if not flagged else 0.0
    return {"sum_log_r": sum_log, "jain": jain, "flagged": flagged,
            "max_ci_halfwidth": float(np.nanmax(measured.halfwidth))
            if measured.n_replications > 1 else math.nan}


def _summary_rows(param, measured: sim.MeasuredThroughput) -> list:
    rows = []
    for i, (r, hw) in enumerate(zip(measured.mean, measured.halfwidth)):
        rows.append({"param": param, "station": i,
                     "throughput_bps": float(r), "ci_halfwidth": float(hw)})
    return rows


# ---------------------------------------------------------------------------
# experiment runners


def run_fairness_sweep(scn: Scenario, seed: int, out: Path) -> dict:
    values = scn.sweep["values"] if scn.sweep else [None]
    summary, baselines, metrics = [], [], []
    for v in values:
        point = scn if v is None else scenario_point(scn, [f"{scn.sweep['key']}={v}"])
        label = "-" if v is None else v
        models, params = models_and_params(point)
        solved = solve_configuration(params)
        eps = run_episode_batch(point, roster_from_scenario(point, solved, seed),
                                solved, seed,
                                range(_REP_MEASURE, _REP_MEASURE + point.replications))
        doc_mt = sim.measure_throughput(eps, point.measure_from)
        if eps:
            write_trace(out / f"trace_{point.name}_sweep{label}_rep0.csv", eps[0])
        static_mt = baseline_static(point, seed)
        nonopp_mt = baseline_nonopportunistic(point, seed)

        summary += _summary_rows(label, doc_mt)
        for name, mt in (("static", static_mt), ("non-opportunistic", nonopp_mt)):
            for row in _summary_rows(label, mt):
                baselines.append(dict(row, approach=name))
        for name, mt in (("doc", doc_mt), ("static", static_mt),
                         ("non-opportunistic", nonopp_mt)):
            metrics.append(dict(fairness_and_tables(mt), param=label, approach=name))

    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    write_csv(out / "baselines.csv",
              "approach,param,station,throughput_bps,ci_halfwidth", baselines)
    write_csv(out / "metrics.csv",
              "param,approach,sum_log_r,jain,flagged,max_ci_halfwidth", metrics)
    return {"summary": summary, "baselines": baselines, "metrics": metrics}


def _attack_grid_points(scn: Scenario, solved, station: int) -> list:
    atk = scn.attack or {}
    p_values = atk.get("p_values", [round(0.05 * k, 2) for k in range(1, 21)])
    scales = atk.get("threshold_scales",
                     [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0])
    thr_star = float(solved.thresholds[station])
    return [(p, s, Strategy(kind="fixed", fixed_p=float(p),
                            fixed_threshold=float(s * thr_star)))
            for p in p_values for s in scales]


def run_attack_grid(scn: Scenario, seed: int, out: Path) -> dict:
    if not scn.attack or "station" not in scn.attack:
        raise ScenarioError("attack_grid needs attack.station")
    station = int(scn.attack["station"])
    models, params = models_and_params(scn)
    solved = solve_configuration(params)
    ref = calibrate_reference(scn, solved, seed)
    points = _attack_grid_points(scn, solved, station)

    def one(idx_point):
        idx, (p, s, strat) = idx_point
        roster = doc_roster(scn)
        roster[station] = strat
        ep = run_episode_batch(scn, roster, solved, seed, [_REP_GRID + idx])[0]
        r = ep.window(scn.measure_from)
        return {"p": float(p), "threshold_scale": float(s),
                "attacker_bps": float(r[station]), "total_bps": float(r.sum()),
                "attacker_ref_bps": float(ref.mean[station]),
                "total_ref_bps": float(ref.mean.sum())}

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        grid = list(pool.map(one, enumerate(points)))

    write_csv(out / "grid.csv",
              "p,threshold_scale,attacker_bps,total_bps,attacker_ref_bps,total_ref_bps",
              grid)
    summary = [{"param": f"{g['p']}/{g['threshold_scale']}", "station": station,
                "throughput_bps": g["attacker_bps"], "ci_halfwidth": math.nan}
               for g in grid]
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"grid": grid, "summary": summary}


def run_attack_maxima(scn: Scenario, seed: int, out: Path) -> dict:
    if not scn.variants:
        raise ScenarioError("attack_maxima needs variants")
    rows = []
    for vi, variant in enumerate(scn.variants):
        point = scenario_point(scn, variant.get("set", []))
        tables = run_attack_grid(point, seed, out / f"variant_{vi}")
        grid = tables["grid"]
        best = max(grid, key=lambda g: g["attacker_bps"])
        rows.append({"label": variant.get("label", f"variant{vi}"),
                     "best_attacker_bps": best["attacker_bps"],
                     "best_p": best["p"], "best_threshold_scale": best["threshold_scale"],
                     "attacker_ref_bps": best["attacker_ref_bps"]})
    write_csv(out / "maxima.csv",
              "label,best_attacker_bps,best_p,best_threshold_scale,attacker_ref_bps",
              rows)
    summary = [{"param": r["label"], "station": -1,
                "throughput_bps": r["best_attacker_bps"],
                "ci_halfwidth": math.nan} for r in rows]
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"maxima": rows, "summary": summary}


def run_adaptive_attack(scn: Scenario, seed: int, out: Path) -> dict:
    if not scn.attack or "station" not in scn.attack:
        raise ScenarioError("adaptive_attack needs attack.station")
    station = int(scn.attack["station"])
    kinds = scn.attack.get("kinds", list(strategies.ADAPTIVE_KINDS))
    variants = scn.variants or ({"label": "-", "set": []},)
    rows = []
    for vi, variant in enumerate(variants):
        point = scenario_point(scn, variant.get("set", []))
        models, params = models_and_params(point)
        solved = solve_configuration(params)
        ref = calibrate_reference(point, solved, seed)
        for ki, kind in enumerate(kinds):
            roster = doc_roster(point)
            roster[station] = Strategy(
                kind=kind, reference_rate=float(ref.mean[station]),
                hysteresis_low=point.stations[station].strategy.get(
                    "hysteresis_low", 0.95))
            eps = run_episode_batch(
                point, roster, solved, seed,
                range(_REP_GRID + 10 * vi + 100 * ki,
                      _REP_GRID + 10 * vi + 100 * ki + point.replications))
            mt = sim.measure_throughput(eps, point.measure_from)
            write_trace(out / f"trace_{point.name}_{variant.get('label', vi)}_{kind}.csv",
                        eps[0])
            rows.append({"label": variant.get("label", f"variant{vi}"),
                         "strategy": kind,
                         "attacker_bps": float(mt.mean[station]),
                         "attacker_ref_bps": float(ref.mean[station]),
                         "gain": float(mt.mean[station] / ref.mean[station] - 1.0)})
    write_csv(out / "adaptive.csv",
              "label,strategy,attacker_bps,attacker_ref_bps,gain", rows)
    summary = [{"param": f"{r['label']}/{r['strategy']}", "station": station,
                "throughput_bps": r["attacker_bps"], "ci_halfwidth": math.nan}
               for r in rows]
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"adaptive": rows, "summary": summary}


def run_coalition(scn: Scenario, seed: int, out: Path) -> dict:
    if not scn.coalition or "stations" not in scn.coalition:
        raise ScenarioError("coalition needs coalition.stations")
    k, l = (int(i) for i in scn.coalition["stations"])
    models, params = models_and_params(scn)
    solved = solve_configuration(params)
    ref = calibrate_reference(scn, solved, seed)
    p_values = scn.coalition.get("p_values", [0.1, 0.3, 0.5, 0.8, 1.0])
    scales = scn.coalition.get("threshold_scales", [0.0, 1.0])
    grid_k = strategies.fixed_attack_grid(
        p_values, [s * solved.thresholds[k] for s in scales])
    grid_l = strategies.fixed_attack_grid(
        p_values, [s * solved.thresholds[l] for s in scales])
    setup = (models, params, doc_roster(scn), scn.controller, solved)
    records = strategies.coalition_sweep(
        grid_k, grid_l, setup, (k, l), seed, scn.intervals, scn.measure_from,
        ref.mean)
    t_star = scn.t_total / scn.n
    rows = [{"p_k": r["strategy_a"].fixed_p,
             "thr_k": r["strategy_a"].fixed_threshold,
             "p_l": r["strategy_b"].fixed_p,
             "thr_l": r["strategy_b"].fixed_threshold,
             "r_k": r["r_k"], "r_l": r["r_l"],
             "r_k_ref": r["r_k_ref"], "r_l_ref": r["r_l_ref"],
             "t_k": r["t_k"], "t_l": r["t_l"], "t_star": t_star}
            for r in records]
    write_csv(out / "coalition.csv",
              "p_k,thr_k,p_l,thr_l,r_k,r_l,r_k_ref,r_l_ref,t_k,t_l,t_star", rows)
    summary = [{"param": f"{r['p_k']}/{r['p_l']}", "station": k,
                "throughput_bps": r["r_k"], "ci_halfwidth": math.nan}
               for r in rows]
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"coalition": rows, "summary": summary}


def _interval_throughput(ep: sim.EpisodeResult, start: int) -> np.ndarray:
    return ep.bits[start:].sum(axis=1) / ep.elapsed[start:]


def run_gain_stability(scn: Scenario, seed: int, out: Path) -> dict:
    variants = scn.variants or ({"label": "tuned", "set": []},)
    rows, summary = [], []
    for vi, variant in enumerate(variants):
        point = scenario_point(scn, variant.get("set", []))
        models, params = models_and_params(point)
        solved = solve_configuration(params)
        ep = run_episode_batch(point, roster_from_scenario(point, solved, seed),
                               solved, seed, [_REP_MEASURE])[0]
        label = variant.get("label", f"variant{vi}")
        write_trace(out / f"trace_{point.name}_{label}.csv", ep)
        series = _interval_throughput(ep, point.measure_from)
        cov = float(series.std() / series.mean()) if series.mean() > 0 else math.inf
        rows.append({"label": label,
                     "gain_scale": point.controller.get("gain_scale", 1.0),
                     "throughput_cov": cov,
                     "mean_total_bps": float(series.mean())})
        summary.append({"param": label, "station": -1,
                        "throughput_bps": float(series.mean()),
                        "ci_halfwidth": math.nan})
    write_csv(out / "stability.csv",
              "label,gain_scale,throughput_cov,mean_total_bps", rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"stability": rows, "summary": summary}


class ScheduledSwitch:
    """Wraps a policy pair: honest until an interval, selfish afterwards."""

    def __init__(self, before, after, at_interval: int):
        self.before = before
        self.after = after
        self.at = int(at_interval)

    def reset(self, index, n_active):
        self._count = 0
        self.before.reset(index, n_active)
        self.after.reset(index, n_active)

    def config(self):
        return self.after.config() if self._count >= self.at else self.before.config()

    def observe(self, interval, report, active):
        self._count += 1
        self.before.observe(interval, report, active)
        self.after.observe(interval, report, active)

    @property
    def last_P(self):
        return getattr(self.before, "last_P", math.nan)

    @property
    def last_E(self):
        return getattr(self.before, "last_E", math.nan)

    @property
    def last_F(self):
        return getattr(self.before, "last_F", math.nan)


def reaction_cross_interval(ep: sim.EpisodeResult, station: int, ref: float,
                            switch_at: int, window: int = 5) -> int:
    """First interval >= switch_at where the trailing mean attacker
    throughput drops to the all-honest reference; -1 if never."""
    r = ep.bits[:, station] / ep.elapsed
    for k in range(switch_at, r.shape[0]):
        lo = max(switch_at, k - window + 1)
        if r[lo:k + 1].mean() <= ref:
            return k
    return -1


def run_reaction_speed(scn: Scenario, seed: int, out: Path) -> dict:
    if not scn.attack or "station" not in scn.attack:
        raise ScenarioError("reaction_speed needs attack.station")
    station = int(scn.attack["station"])
    switch_at = int(scn.attack.get("turn_selfish_at", 50))
    variants = scn.variants or ({"label": "tuned", "set": []},)
    rows, summary = [], []
    for vi, variant in enumerate(variants):
        point = scenario_point(scn, variant.get("set", []))
        models, params = models_and_params(point)
        solved = solve_configuration(params)
        ref = calibrate_reference(point, solved, seed)

        def make_switch(policies):
            selfish = strategies.FixedStation(
                1.0, float(solved.thresholds[station]))
            policies[station] = ScheduledSwitch(policies[station], selfish,
                                                switch_at)

        ep = run_episode_batch(point, doc_roster(point), solved, seed,
                               [_REP_MEASURE], policy_patch=make_switch)[0]
        label = variant.get("label", f"variant{vi}")
        write_trace(out / f"trace_{point.name}_{label}.csv", ep)
        cross = reaction_cross_interval(ep, station, float(ref.mean[station]),
                                        switch_at)
        rows.append({"label": label,
                     "gain_scale": point.controller.get("gain_scale", 1.0),
                     "switch_at": switch_at, "cross_interval": cross,
                     "reaction_intervals": cross - switch_at if cross >= 0 else -1})
        summary.append({"param": label, "station": station,
                        "throughput_bps": float(ep.window(point.measure_from)[station]),
                        "ci_halfwidth": math.nan})
    write_csv(out / "reaction.csv",
              "label,gain_scale,switch_at,cross_interval,reaction_intervals", rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"reaction": rows, "summary": summary}


def transient_events(station: int, period: int, stay: int, intervals: int) -> list:
    events = []
    k = period
    while k < intervals:
        events.append({"interval": k, "action": "join", "station": station})
        events.append({"interval": min(k + stay, intervals), "action": "leave",
                       "station": station})
        k += period
    return [e for e in events if e["interval"] < intervals]


def run_join_leave(scn: Scenario, seed: int, out: Path) -> dict:
    tr = scn.raw.get("transient", {})
    station = int(tr.get("station", scn.n - 1))
    period = int(tr.get("period", 100))
    stay = int(tr.get("stay", 50))
    events = transient_events(station, period, stay, scn.intervals)
    initially_active = np.ones(scn.n, dtype=bool)
    initially_active[station] = False

    variants = scn.variants or ({"label": "designed", "set": []},)
    rows, summary = [], []
    for vi, variant in enumerate(variants):
        point = scenario_point(scn, variant.get("set", []))
        models, params = models_and_params(point)
        solved = solve_configuration(params)
        eps = run_episode_batch(
            point, doc_roster(point), solved, seed,
            range(_REP_MEASURE, _REP_MEASURE + point.replications),
            events=events, initially_active=initially_active)
        label = variant.get("label", f"variant{vi}")
        write_trace(out / f"trace_{point.name}_{label}.csv", eps[0])
        totals = [float(ep.bits[point.measure_from:].sum()
                        / ep.elapsed[point.measure_from:].sum()) for ep in eps]
        rows.append({"label": label,
                     "punishment_scale": point.controller.get("punishment_scale", 1.0),
                     "total_bps": float(np.mean(totals))})
        summary.append({"param": label, "station": -1,
                        "throughput_bps": float(np.mean(totals)),
                        "ci_halfwidth": math.nan})
    write_csv(out / "join_leave.csv", "label,punishment_scale,total_bps", rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return {"join_leave": rows, "summary": summary}


_RUNNERS = {
    "fairness_sweep": run_fairness_sweep,
    "attack_grid": run_attack_grid,
    "attack_maxima": run_attack_maxima,
    "adaptive_attack": run_adaptive_attack,
    "coalition": run_coalition,
    "gain_stability": run_gain_stability,
    "reaction_speed": run_reaction_speed,
    "join_leave": run_join_leave,
}


def run_scenario(scn: Scenario, seed: int, out_dir) -> dict:
    """Execute a scenario end to end; returns the result tables."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ScenarioError(f"cannot create output directory {out}: {exc}") from exc
    runner = _RUNNERS[scn.experiment]
    return runner(scn, seed, out)
