"""Scenario files: schema, validation, overrides, and the bundled catalog.

A scenario is a JSON object.  Stations are declared in groups::

    {
      "name": "fig5",
      "experiment": "fairness_sweep",
      "params": {"T_tx": 10, "T_total": 100000},
      "station_groups": [
        {"count": 5,
         "channel": {"kind": "iid-rayleigh", "W": 1e7, "rho": 1.0},
         "strategy": {"kind": "doc"}},
        ...
      ],
      "controller": {"gain_mode": "ziegler-nichols", "gain_scale": 1.0},
      "intervals": 150, "replications": 3, "measure_from": 50,
      "sweep": {"key": "station_groups.1.channel.rho", "values": [1, 2, 4]}
    }

Channel objects take ``kind``, ``W``, ``rho``, ``doppler`` (radians per
mini-slot, jakes only) and ``rates_mbps`` (discrete only).  Strategy
objects take ``kind`` (doc | fixed | adaptive-p | adaptive-threshold |
adaptive-both), ``p``, ``threshold_scale`` (in units of the station's
optimal threshold) and ``hysteresis_low``.  Experiment-specific sections
(``attack``, ``coalition``, ``variants``, ``events``) are described in the
README.  Overrides address any field by dotted path, with integer segments
indexing lists (``station_groups.1.channel.rho=4``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .channel import KINDS, RateModel

EXPERIMENTS = (
    "fairness_sweep", "attack_grid", "attack_maxima", "adaptive_attack",
    "coalition", "gain_stability", "reaction_speed", "join_leave",
)

CONTROLLER_KEYS = {"gain_mode", "Kp", "Ki", "gain_scale", "punishment_scale"}
STRATEGY_KEYS = {"kind", "p", "threshold_scale", "hysteresis_low"}
CHANNEL_KEYS = {"kind", "W", "rho", "doppler", "rates_mbps"}


class ScenarioError(ValueError):
    """A scenario file failed validation; the message names the bad field."""


@dataclass(frozen=True)
class StationSpec:
    channel: RateModel
    strategy: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    experiment: str
    t_tx: int
    t_total: int
    intervals: int
    replications: int
    measure_from: int
    stations: tuple
    controller: dict
    events: tuple = ()
    sweep: dict = None
    attack: dict = None
    coalition: dict = None
    variants: tuple = None
    raw: dict = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.stations)


def _expect(cond, path, msg):
    if not cond:
        raise ScenarioError(f"{path}: {msg}")


def build_rate_model(d: dict, path: str = "channel") -> RateModel:
    _expect(isinstance(d, dict), path, "must be an object")
    unknown = set(d) - CHANNEL_KEYS
    _expect(not unknown, path, f"unknown keys {sorted(unknown)}; valid: {sorted(CHANNEL_KEYS)}")
    kind = d.get("kind")
    _expect(kind in KINDS, f"{path}.kind", f"must be one of {KINDS}")
    table = tuple(r * 1e6 for r in d.get("rates_mbps", ()))
    try:
        return RateModel(kind=kind, W=float(d.get("W", 1e7)),
                         rho=float(d.get("rho", 1.0)),
                         doppler=float(d.get("doppler", 0.0)),
                         rate_table=table)
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _validate_strategy(d: dict, path: str) -> dict:
    _expect(isinstance(d, dict), path, "must be an object")
    unknown = set(d) - STRATEGY_KEYS
    _expect(not unknown, path, f"unknown keys {sorted(unknown)}; valid: {sorted(STRATEGY_KEYS)}")
    kind = d.get("kind", "doc")
    valid = ("doc", "fixed", "adaptive-p", "adaptive-threshold", "adaptive-both")
    _expect(kind in valid, f"{path}.kind", f"must be one of {valid}")
    if kind == "fixed":
        _expect("p" in d, path, "fixed strategy needs p")
        _expect(0.0 <= d["p"] <= 1.0, f"{path}.p", "must lie in [0, 1]")
        _expect(d.get("threshold_scale", 1.0) >= 0, f"{path}.threshold_scale",
                "must be >= 0")
    hl = d.get("hysteresis_low", 0.95)
    _expect(0.0 < hl <= 1.0, f"{path}.hysteresis_low", "must lie in (0, 1]")
    return dict(d, kind=kind)


def validate_scenario(raw: dict, name: str = "scenario") -> Scenario:
    """Check a raw scenario object and return the typed form."""
    _expect(isinstance(raw, dict), name, "must be a JSON object")
    exp = raw.get("experiment")
    _expect(exp in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")

    params = raw.get("params", {})
    t_tx = int(params.get("T_tx", 10))
    t_total = int(params.get("T_total", 100_000))
    _expect(t_tx > 0, "params.T_tx", "must be > 0")
    _expect(t_total >= 10 * t_tx, "params.T_total", "must be well above T_tx")

    groups = raw.get("station_groups")
    _expect(isinstance(groups, list) and groups, "station_groups",
            "must be a nonempty list")
    stations = []
    for gi, g in enumerate(groups):
        gpath = f"station_groups.{gi}"
        _expect(isinstance(g, dict), gpath, "must be an object")
        count = int(g.get("count", 1))
        _expect(count >= 1, f"{gpath}.count", "must be >= 1")
        model = build_rate_model(g.get("channel", {}), f"{gpath}.channel")
        strat = _validate_strategy(g.get("strategy", {"kind": "doc"}),
                                   f"{gpath}.strategy")
        stations.extend(StationSpec(channel=model, strategy=strat)
                        for _ in range(count))
    declared_n = params.get("N")
    if declared_n is not None:
        _expect(int(declared_n) == len(stations), "params.N",
                f"does not match the {len(stations)} stations declared in groups")

    controller = raw.get("controller", {})
    unknown = set(controller) - CONTROLLER_KEYS
    _expect(not unknown, "controller",
            f"unknown keys {sorted(unknown)}; valid: {sorted(CONTROLLER_KEYS)}")

    intervals = int(raw.get("intervals", 100))
    replications = int(raw.get("replications", 1))
    measure_from = int(raw.get("measure_from", 0))
    _expect(intervals >= 0, "intervals", "must be >= 0")
    _expect(replications >= 1, "replications", "must be >= 1")
    _expect(0 <= measure_from <= intervals, "measure_from",
            "must lie in [0, intervals]")

    events = raw.get("events", [])
    for ei, ev in enumerate(events):
        _expect(isinstance(ev, dict) and {"interval", "action", "station"} <= set(ev),
                f"events.{ei}", "needs interval, action, station")
        _expect(ev["action"] in ("join", "leave"), f"events.{ei}.action",
                "must be join or leave")

    sweep = raw.get("sweep")
    if sweep is not None:
        _expect(isinstance(sweep, dict) and "key" in sweep and "values" in sweep,
                "sweep", "needs key and values")
        _expect(isinstance(sweep["values"], list) and sweep["values"],
                "sweep.values", "must be a nonempty list")

    return Scenario(
        name=str(raw.get("name", name)), experiment=exp, t_tx=t_tx,
        t_total=t_total, intervals=intervals, replications=replications,
        measure_from=measure_from, stations=tuple(stations),
        controller=dict(controller), events=tuple(events), sweep=sweep,
        attack=raw.get("attack"), coalition=raw.get("coalition"),
        variants=tuple(raw["variants"]) if raw.get("variants") else None,
        raw=raw)


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def load_scenario(path) -> Scenario:
    return validate_scenario(load_raw(path), name=Path(path).stem)


def catalog_dir():
    return resources.files("doc_sim") / "scenarios"


def catalog_names() -> list:
    return sorted(p.name[:-5] for p in catalog_dir().iterdir()
                  if p.name.endswith(".json"))


def resolve_scenario_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled catalog scenario."""
    p = Path(ref)
    if p.exists():
        return p
    cat = catalog_dir() / f"{ref}.json"
    if cat.is_file():
        return Path(str(cat))
    raise ScenarioError(
        f"scenario {ref!r} is neither a file nor a catalog name; "
        f"catalog: {', '.join(catalog_names())}")


def _parse_override(text: str) -> tuple:
    if "=" not in text:
        raise ScenarioError(f"override {text!r} must look like key=value")
    key, _, value = text.partition("=")
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``key=value`` overrides by dotted path; returns a new object."""
    out = copy.deepcopy(raw)
    for text in assignments:
        key, value = _parse_override(text)
        parts = key.split(".")
        node = out
        for depth, part in enumerate(parts[:-1]):
            node = _descend(node, part, parts, depth)
        leaf = parts[-1]
        if isinstance(node, list):
            idx = _list_index(node, leaf, key)
            node[idx] = value
        else:
            if leaf not in node:
                raise ScenarioError(
                    f"override {key!r}: unknown key {leaf!r}; "
                    f"valid keys here: {sorted(node.keys())}")
            node[leaf] = value
    return out


def _descend(node, part, parts, depth):
    path = ".".join(parts[: depth + 1])
    if isinstance(node, list):
        return node[_list_index(node, part, path)]
    if not isinstance(node, dict) or part not in node:
        valid = sorted(node.keys()) if isinstance(node, dict) else "a list index"
        raise ScenarioError(
            f"override path {path!r} not found; valid keys here: {valid}")
    return node[part]


def _list_index(node, part, path):
    try:
        idx = int(part)
    except ValueError:
        raise ScenarioError(f"override path {path!r}: list needs an integer index")
    if not -len(node) <= idx < len(node):
        raise ScenarioError(f"override path {path!r}: index out of range")
    return idx
