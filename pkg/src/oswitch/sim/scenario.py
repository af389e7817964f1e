"""Scenario configuration: traces, inverter, delays, slots, policy and run parameters."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional

from ..inverter import InverterConfig
from ..meter import Interval, NotificationMode, parse_mode
from ..policy import SwitchingPolicy, make_policy
from .traces import DAY, Traces, generate_traces, read_traces

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class DelayModel:
    L_r: float = 1.0
    L_p: float = 0.001
    L_e: float = 0.01

    def __post_init__(self):
        for k in ("L_r", "L_p", "L_e"):
            if getattr(self, k) < 0:
                raise ScenarioError(f"delay {k} must be >= 0")

    @property
    def L_monitor(self) -> float:
        return self.L_r + self.L_p + self.L_e


@dataclass
class Scenario:
    traces: Traces
    policy: SwitchingPolicy
    inverter: InverterConfig = field(default_factory=InverterConfig)
    delays: DelayModel = field(default_factory=DelayModel)
    slots_per_day: int = 48
    warmup_days: int = 7
    duration_s: float = DAY
    decision_period_s: float = 30.0
    cooldown_s: float = 60.0
    overload_tolerance_s: float = 0.1
    outlets_per_meter: int = 4
    notify_mode: NotificationMode = field(default_factory=lambda: Interval(1.0))
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ScenarioError("duration must be > 0")
        if self.decision_period_s <= 0:
            raise ScenarioError("decision period must be > 0")
        if self.warmup_days < 0:
            raise ScenarioError("warmup_days must be >= 0")
        if not 1 <= self.outlets_per_meter <= 4:
            raise ScenarioError("a meter hosts at most 4 outlets (feed + source relay each)")
        if self.cooldown_s < 0 or self.overload_tolerance_s < 0:
            raise ScenarioError("cooldown and overload tolerance must be >= 0")
        if self.traces.duration + 1e-9 < self.start_time + self.duration_s:
            raise ScenarioError(
                f"traces cover {self.traces.duration:.0f} s but the run needs "
                f"{self.start_time + self.duration_s:.0f} s (warm-up + duration)")

    @property
    def start_time(self) -> float:
        return self.warmup_days * DAY

    @property
    def n_outlets(self) -> int:
        return self.traces.n_outlets

    def with_policy(self, policy: SwitchingPolicy) -> "Scenario":
        return replace(self, policy=policy)


def _section(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ScenarioError(f"[{name}] must be a table")
    return sec


_INVERTER_KEYS = {"max_output_w", "dc_capacity_w", "conversion_efficiency",
                  "battery_capacity_wh", "battery_efficiency"}


def scenario_from_dict(doc: Dict[str, Any], base_dir: Path = Path("."),
                       seed: Optional[int] = None) -> Scenario:
    run = _section(doc, "run")
    seed = int(run.get("seed", 0)) if seed is None else int(seed)
    warmup = int(run.get("warmup_days", 7))
    duration = float(run.get("duration_s", DAY))
    resolution = float(run.get("resolution_s", 1.0))

    inv = _section(doc, "inverter")
    unknown = set(inv) - _INVERTER_KEYS
    if unknown:
        raise ScenarioError(f"unknown [inverter] keys: {sorted(unknown)}")
    inverter = InverterConfig(**{k: float(v) for k, v in inv.items()})

    d = _section(doc, "delays")
    delays = DelayModel(float(d.get("L_r", 1.0)), float(d.get("L_p", 0.001)),
                        float(d.get("L_e", 0.01)))

    slots = int(_section(doc, "slots").get("slots_per_day", 48))

    pol = dict(_section(doc, "policy"))
    name = pol.pop("name", "naive")
    try:
        policy = make_policy(name, slots_per_day=slots, **pol)
    except TypeError as exc:
        raise ScenarioError(f"bad [policy] parameters for {name!r}: {exc}") from None

    tr = _section(doc, "traces")
    total = warmup * DAY + duration
    if "outlets_csv" in tr or "pv_csv" in tr:
        try:
            traces = read_traces(base_dir / tr["outlets_csv"], base_dir / tr["pv_csv"],
                                 total, resolution)
        except KeyError as exc:
            raise ScenarioError(f"[traces] needs both outlets_csv and pv_csv (missing {exc})") from None
    else:
        spec = {"days": int(-(-total // DAY)), "resolution_s": resolution,
                "outlets": tr.get("outlets", []), "pv": tr.get("pv", {})}
        if not spec["outlets"]:
            raise ScenarioError("[traces] lists no outlets")
        traces = generate_traces(spec, seed)

    meters = _section(doc, "meters")
    return Scenario(
        traces=traces,
        policy=policy,
        inverter=inverter,
        delays=delays,
        slots_per_day=slots,
        warmup_days=warmup,
        duration_s=duration,
        decision_period_s=float(run.get("decision_period_s", 30.0)),
        cooldown_s=float(run.get("cooldown_s", 60.0)),
        overload_tolerance_s=float(run.get("overload_tolerance_s", 0.1)),
        outlets_per_meter=int(meters.get("outlets_per_meter", 4)),
        notify_mode=parse_mode(meters) if "mode" in meters else Interval(1.0),
        seed=seed,
        name=str(run.get("name", "scenario")),
    )


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"malformed scenario {path}: {exc}") from None
    return scenario_from_dict(doc, path.parent, seed)


def reference_scenario_path() -> Path:
    return Path(str(resources.files("oswitch") / "data" / "reference.toml"))


def reference_scenario(seed: Optional[int] = None, **overrides) -> Scenario:
    sc = load_scenario(reference_scenario_path(), seed)
    return replace(sc, **overrides) if overrides else sc


def read_toml(path) -> Dict[str, Any]:
    with open(path, "rb") as fh:
        return tomllib.load(fh)

