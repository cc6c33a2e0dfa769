"""Command-line front end.

    doc-sim solve    --scenario fig5 [--out DIR]
    doc-sim run      --scenario fig7.json [--seed N] [--out DIR] [--set k=v ...]
    doc-sim sweep    --scenario fig5 --key station_groups.1.channel.rho \
                     --values 1,2,4 [--seed N] [--out DIR]
    doc-sim validate --scenario path/to/scenario.json

Scenarios are JSON files or names from the bundled catalog.  ``--set``
overrides any field by dotted path.  Outputs land under
``results/<scenario>/<timestamp>/`` unless ``--out`` is given; the summary
CSV content is a pure function of (scenario, seed, overrides).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import experiments, scenario as scn_mod, sim
from .analytic import SolverError
from .configuration import solve_configuration
from .control import stability_check
from .scenario import ScenarioError


def _load(args):
    path = scn_mod.resolve_scenario_path(args.scenario)
    raw = scn_mod.load_raw(path)
    if getattr(args, "set", None):
        raw = scn_mod.apply_overrides(raw, args.set)
    return scn_mod.validate_scenario(raw, name=path.stem)


def _out_dir(args, scn) -> Path:
    if args.out:
        return Path(args.out)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("results") / scn.name / stamp


def cmd_solve(args) -> int:
    scn = _load(args)
    models, params = experiments.models_and_params(scn)
    solved = solve_configuration(params)
    print(f"scenario {scn.name}: N={scn.n}, T_tx={scn.t_tx}, T_total={scn.t_total}")
    print(f"{'station':>7} {'rho':>6} {'threshold_bps':>14} {'p_star':>9} "
          f"{'T_hold':>8} {'r_star_bps':>12} {'P_signal':>9} {'p_min':>8}")
    for i, m in enumerate(models):
        print(f"{i:>7} {m.rho:>6.2f} {solved.thresholds[i]:>14.1f} "
              f"{solved.p_star[i]:>9.5f} {solved.t_holds[i]:>8.4f} "
              f"{solved.r_star[i]:>12.1f} {solved.p_signal[i]:>9.5f} "
              f"{solved.p_min[i]:>8.5f}")
    stable = stability_check(solved.kp, solved.ki, scn.n, solved.plant_gain)
    print(f"plant_gain K_H = {solved.plant_gain:.6g}")
    print(f"gains: Kp = {solved.kp:.6g}, Ki = {solved.ki:.6g} "
          f"(stability check: {'ok' if stable else 'VIOLATED'})")
    print(f"deficit minimum: Delta = {solved.delta:.6g} mini-slots")

    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "scenario": scn.name,
        "n": scn.n, "t_tx": scn.t_tx, "t_total": scn.t_total,
        "thresholds_bps": solved.thresholds.tolist(),
        "p_star": solved.p_star.tolist(),
        "t_holds": solved.t_holds.tolist(),
        "r_star_bps": solved.r_star.tolist(),
        "control_signals": solved.p_signal.tolist(),
        "plant_gain": solved.plant_gain,
        "Kp": solved.kp, "Ki": solved.ki,
        "p_min": solved.p_min.tolist(), "delta": solved.delta,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {out / 'config.json'}")
    return 0


def _print_summary(tables) -> None:
    rows = tables.get("summary", [])
    if not rows:
        return
    print(f"{'param':>16} {'station':>7} {'throughput_bps':>16} {'ci_halfwidth':>14}")
    for row in rows:
        hw = row["ci_halfwidth"]
        hw_s = f"{hw:.6g}" if isinstance(hw, float) and math.isfinite(hw) else "-"
        print(f"{str(row['param']):>16} {row['station']:>7} "
              f"{row['throughput_bps']:>16.1f} {hw_s:>14}")


def cmd_run(args) -> int:
    scn = _load(args)
    out = _out_dir(args, scn)
    tables = experiments.run_scenario(scn, args.seed, out)
    _print_summary(tables)
    print(f"results under {out}")
    return 0


def cmd_sweep(args) -> int:
    scn = _load(args)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ScenarioError("--values must list at least one value")
    raw = dict(scn.raw)
    raw["sweep"] = {"key": args.key,
                    "values": [json.loads(v) if _is_number(v) else v for v in values]}
    # Probe the path once so typos fail before any episode runs.
    scn_mod.apply_overrides(raw, [f"{args.key}={raw['sweep']['values'][0]}"])
    scn = scn_mod.validate_scenario(raw, name=scn.name)
    out = _out_dir(args, scn)
    tables = experiments.run_scenario(scn, args.seed, out)
    _print_summary(tables)
    print(f"results under {out}")
    return 0


def _is_number(text: str) -> bool:
    try:
        json.loads(text)
        return True
    except json.JSONDecodeError:
        return False


def cmd_validate(args) -> int:
    scn = _load(args)
    kinds = {s.channel.kind for s in scn.stations}
    print(f"{scn.name}: ok ({scn.experiment}, N={scn.n}, "
          f"intervals={scn.intervals}, replications={scn.replications}, "
          f"channels={sorted(kinds)}, backend={sim.backend_name()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doc-sim",
        description="Distributed opportunistic scheduling: solvers and simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, with_seed=True):
        p.add_argument("--scenario", required=True,
                       help="scenario JSON path or catalog name (fig5 .. fig15)")
        p.add_argument("--out", default=None, help="output directory")
        if with_seed:
            p.add_argument("--seed", type=int, default=1,
                           help="master seed (default 1)")

    p = sub.add_parser("solve", help="print and write the optimal configuration")
    common(p, with_seed=False)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run a scenario end to end")
    common(p)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario field by dotted path (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario across an axis of values")
    common(p)
    p.add_argument("--key", required=True, help="dotted path of the swept field")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a scenario file; writes nothing")
    common(p, with_seed=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
