"""Parameterized driving scenes and the catalog that names them.

Eight road scenarios: six two-vehicle/pedestrian situations plus a
lane-change chain and a multi-adversary intersection.  Each scenario
declares the feature dimensions it consumes (with default ranges) and a
builder that turns one sampled feature vector into a Scene for the
integrator.  Two extra synthetic "probe" landscapes with exactly known
unsafe regions are provided for sampler calibration tests; they are not
part of the road catalog.

Geometry conventions: intersection at the origin, lanes 6 m wide, lane
centers at ±3 m.  Eastbound traffic uses y = -3, westbound y = +3,
northbound x = +3, southbound x = -3.
"""

from __future__ import annotations

import json
import math
import time
from importlib import resources
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .kinematics import Scene, SceneBuilder, run_scene
from .monitor import (
    EGO,
    TERM_CLEARED,
    TERM_CRASH,
    TERM_TIME_LIMIT,
    MinSeparation,
    Specification,
    Trajectory,
)
from .space import Dimension, FeatureSpace, SampleVector

TERMINATION_BY_CODE = {0: TERM_TIME_LIMIT, 1: TERM_CRASH, 2: TERM_CLEARED}

# Shared behavior constants (not sampled).
EGO_ACCEL = 3.0
BRAKE_DECEL = 6.0
HARD_DECEL = 8.0
WALK_ACCEL = 2.0
ROAD_END = 150.0
INTERSECTION_EGO_SPEED = 9.0
INTERSECTION_EGO_START = 25.0
INTERSECTION_BRAKE_TRIGGER = 20.0
MAX_INTERSECTION_ADVERSARIES = 8

ARM_CYCLE = ("north", "east", "south")
MANEUVERS = ("left", "straight", "right")


@dataclass(frozen=True)
class FeatureBinding:
    """One sampled scenario parameter with its default range."""

    name: str
    lo: float
    hi: float
    description: str = ""
    integer: bool = False  # floor() applied before use (choice encodings)


@dataclass(frozen=True)
class ScenarioConfig:
    """Selects a scenario and fixes its non-sampled constants."""

    scenario_id: str
    adversaries: int = 1  # intersection only
    lane_width: float = 6.0
    arm_length: float = 60.0
    max_frames: int = 300
    dt: float = 0.1

    def __post_init__(self):
        if self.scenario_id not in REGISTRY:
            raise ConfigError(
                f"unknown scenario {self.scenario_id!r}; "
                f"known: {sorted(REGISTRY)}"
            )
        if self.scenario_id == "intersection":
            if not 1 <= self.adversaries <= MAX_INTERSECTION_ADVERSARIES:
                raise ConfigError(
                    "intersection adversaries must be in "
                    f"[1, {MAX_INTERSECTION_ADVERSARIES}], got {self.adversaries}"
                )
        elif self.adversaries != 1:
            raise ConfigError(
                "adversary count is only configurable for the intersection scenario"
            )
        if self.lane_width <= 0 or self.arm_length <= 0:
            raise ConfigError("lane_width and arm_length must be positive")
        if self.max_frames < 1 or self.dt <= 0:
            raise ConfigError("max_frames must be >= 1 and dt positive")

    @property
    def half(self) -> float:
        return self.lane_width / 2.0


@dataclass(frozen=True)
class ScenarioDef:
    scenario_id: str
    summary: str
    in_catalog: bool
    features: Callable[[ScenarioConfig], tuple[FeatureBinding, ...]]
    monitored: Callable[[ScenarioConfig], tuple[str, ...]]
    builder: Callable[[ScenarioConfig, Mapping[str, float]], Scene]


# --------------------------------------------------------------- builders


def _build_1(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (-v["ego_distance"], -h), speed=v["ego_speed"],
        goal_x=cfg.arm_length, accel=EGO_ACCEL,
    )
    adv = b.add_waypoint_agent(
        "adv0", (v["adv_distance"], h),
        [(-h, h), (-h, -cfg.arm_length)], speed=v["adv_speed"],
    )
    b.brake_ahead(ego, adv, trigger=18.0, decel=HARD_DECEL, corridor=4.5)
    return b.build()


def _build_2(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_waypoint_agent(
        EGO, (-v["ego_distance"], -h),
        [(h, -h), (h, cfg.arm_length)], speed=v["ego_speed"], accel=EGO_ACCEL,
    )
    adv = b.add_waypoint_agent(
        "adv0", (v["adv_distance"], h),
        [(-cfg.arm_length, h)], speed=v["adv_speed"],
    )
    b.brake_ahead(ego, adv, trigger=18.0, decel=HARD_DECEL, corridor=4.5)
    return b.build()


def _build_3(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (0.0, -h), speed=v["ego_speed"], goal_x=ROAD_END, accel=EGO_ACCEL
    )
    lead = b.add_lane_agent(
        "adv0", (v["gap"], -h), speed=v["lead_speed"], goal_x=ROAD_END
    )
    b.lane_change(ego, lead, trigger=10.0, to_y=h, clear_margin=v["clear_margin"])
    return b.build()


def _build_4(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (0.0, -h), speed=v["ego_speed"], goal_x=ROAD_END, accel=EGO_ACCEL
    )
    adv = b.add_lane_agent(
        "adv0", (-v["gap"], -h), speed=v["adv_speed"], goal_x=ROAD_END
    )
    b.lane_change(adv, ego, trigger=10.0, to_y=h, clear_margin=v["clear_margin"])
    return b.build()


def _build_5(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (0.0, -h), speed=v["ego_speed"], goal_x=ROAD_END, accel=EGO_ACCEL
    )
    lead = b.add_lane_agent(
        "adv0", (v["lead_gap"], -h), speed=v["lead_speed"], goal_x=ROAD_END
    )
    blocker = b.add_lane_agent(
        "adv1", (v["blocker_gap"], h), speed=2.0, goal_x=ROAD_END
    )
    b.lane_change(ego, lead, trigger=15.0, to_y=h, clear_margin=8.0)
    b.brake_near(ego, blocker, trigger=16.0, decel=BRAKE_DECEL)
    b.boost_on_lateral(
        lead, ego, offset_threshold=1.0, boost_speed=v["boost_speed"], ref_y=-h
    )
    return b.build()


def _ped_edge(cfg: ScenarioConfig) -> float:
    return cfg.lane_width + 3.0


def _build_6(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    edge = _ped_edge(cfg)
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (-v["approach"], -h), speed=v["ego_speed"], goal_x=ROAD_END,
        accel=EGO_ACCEL,
    )
    ped = b.add_waypoint_agent(
        "ped", (0.0, -edge), [(0.0, edge)],
        speed=0.0, cruise=v["ped_speed"], accel=WALK_ACCEL,
    )
    b.wait_until_near(ped, ego, trigger=v["ped_trigger"])
    b.brake_near(ego, ped, trigger=16.0, decel=BRAKE_DECEL)
    return b.build()


def _build_7(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    edge = _ped_edge(cfg)
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (-40.0, -h), speed=v["ego_speed"], goal_x=ROAD_END, accel=EGO_ACCEL
    )
    lead = b.add_lane_agent(
        "adv0", (-40.0 + v["lead_gap"], -h), speed=v["lead_speed"], goal_x=ROAD_END
    )
    ped = b.add_waypoint_agent(
        "ped", (0.0, -edge), [(0.0, edge)],
        speed=0.0, cruise=v["ped_speed"], accel=WALK_ACCEL,
    )
    b.wait_until_near(ped, ego, trigger=v["ped_trigger"])
    b.brake_near(ego, lead, trigger=15.0, decel=BRAKE_DECEL)
    b.brake_near(ego, ped, trigger=15.0, decel=BRAKE_DECEL)
    b.brake_near(lead, ped, trigger=15.0, decel=BRAKE_DECEL)
    return b.build()


def _adversary_waypoints(cfg: ScenarioConfig, arm: str, maneuver: str):
    """Entry point plus waypoint chain for one intersection approach."""
    h, arm_len = cfg.half, cfg.arm_length
    table = {
        ("north", "left"): ((-h,), [(-h, -h), (arm_len, -h)]),
        ("north", "straight"): ((-h,), [(-h, -arm_len)]),
        ("north", "right"): ((-h,), [(-h, h), (-arm_len, h)]),
        ("east", "left"): ((h,), [(-h, h), (-h, -arm_len)]),
        ("east", "straight"): ((h,), [(-arm_len, h)]),
        ("east", "right"): ((h,), [(h, h), (h, arm_len)]),
        ("south", "left"): ((h,), [(h, h), (-arm_len, h)]),
        ("south", "straight"): ((h,), [(h, arm_len)]),
        ("south", "right"): ((h,), [(h, -h), (arm_len, -h)]),
    }
    lane, waypoints = table[(arm, maneuver)]
    return lane[0], waypoints


def _intersection_start(arm: str, lane: float, dist: float):
    if arm == "north":
        return (lane, dist)
    if arm == "east":
        return (dist, lane)
    return (lane, -dist)  # south


def maneuver_from_value(value: float) -> str:
    """Decode a [0, 3) feature value into a turn choice."""
    code = min(max(int(math.floor(value)), 0), len(MANEUVERS) - 1)
    return MANEUVERS[code]


def _build_intersection(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    h = cfg.half
    b = SceneBuilder()
    ego = b.add_lane_agent(
        EGO, (-INTERSECTION_EGO_START, -h), speed=INTERSECTION_EGO_SPEED,
        goal_x=cfg.arm_length, accel=EGO_ACCEL,
    )
    for i in range(cfg.adversaries):
        arm = ARM_CYCLE[i % len(ARM_CYCLE)]
        maneuver = maneuver_from_value(v[f"adv{i}_maneuver"])
        lane, waypoints = _adversary_waypoints(cfg, arm, maneuver)
        start = _intersection_start(arm, lane, v[f"adv{i}_distance"])
        adv = b.add_waypoint_agent(
            f"adv{i}", start, waypoints, speed=v[f"adv{i}_speed"]
        )
        b.brake_ahead(ego, adv, trigger=INTERSECTION_BRAKE_TRIGGER,
                      decel=HARD_DECEL, corridor=4.5)
    return b.build()


# Synthetic probe landscapes: the "probe" agent is parked at a distance
# that encodes whether the sampled point lies in the unsafe region, so
# the unsafe set is known exactly (margin -1 inside, +1 outside a 5 m
# floor).  Used to calibrate samplers, not part of the road catalog.


def _probe_scene(margin: float) -> Scene:
    b = SceneBuilder()
    b.add_lane_agent(EGO, (0.0, 0.0), speed=0.0, goal_x=math.inf)
    b.add_lane_agent("probe", (5.0 + margin, 0.0), speed=0.0, goal_x=math.inf)
    return b.build()


def band_unsafe(u: float) -> bool:
    return 0.3 <= u < 0.4


def _build_band(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    return _probe_scene(-1.0 if band_unsafe(v["u"]) else 1.0)


def two_region_unsafe(u: float, w: float) -> bool:
    in_a = 0.1 <= u < 0.3 and 0.1 <= w < 0.3
    in_b = 0.6 <= u < 0.8 and 0.6 <= w < 0.8
    return in_a or in_b


def _build_two_region(cfg: ScenarioConfig, v: Mapping[str, float]) -> Scene:
    return _probe_scene(-1.0 if two_region_unsafe(v["u"], v["w"]) else 1.0)


# --------------------------------------------------------------- registry


def _static(*bindings: FeatureBinding):
    return lambda cfg: bindings


def _intersection_features(cfg: ScenarioConfig) -> tuple[FeatureBinding, ...]:
    out = []
    for i in range(cfg.adversaries):
        out.extend(
            [
                FeatureBinding(
                    f"adv{i}_distance", 15.0 + 10.0 * i, 40.0 + 10.0 * i,
                    "start distance from the intersection center (m); "
                    "staggered per adversary so arrivals spread out",
                ),
                FeatureBinding(f"adv{i}_speed", 3.0, 10.0, "cruise speed (m/s)"),
                FeatureBinding(
                    f"adv{i}_maneuver", 0.0, 3.0,
                    "turn choice: [0,1) left, [1,2) straight, [2,3) right",
                    integer=True,
                ),
            ]
        )
    return tuple(out)


REGISTRY: dict[str, ScenarioDef] = {}


def _register(defn: ScenarioDef):
    REGISTRY[defn.scenario_id] = defn


_register(
    ScenarioDef(
        "1",
        "Ego drives straight through a 4-way intersection, braking when an "
        "oncoming vehicle cuts across with a left turn.",
        True,
        _static(
            FeatureBinding("ego_speed", 4.0, 12.0, "ego cruise speed (m/s)"),
            FeatureBinding("ego_distance", 15.0, 55.0, "ego start distance (m)"),
            FeatureBinding("adv_speed", 4.0, 12.0, "adversary cruise speed (m/s)"),
            FeatureBinding("adv_distance", 15.0, 55.0, "adversary start distance (m)"),
        ),
        lambda cfg: ("adv0",),
        _build_1,
    )
)
_register(
    ScenarioDef(
        "2",
        "Ego turns left at a 4-way intersection, braking for an oncoming "
        "vehicle that drives straight through.",
        True,
        _static(
            FeatureBinding("ego_speed", 4.0, 14.0, "ego cruise speed (m/s)"),
            FeatureBinding("ego_distance", 15.0, 55.0, "ego start distance (m)"),
            FeatureBinding("adv_speed", 4.0, 14.0, "adversary cruise speed (m/s)"),
            FeatureBinding("adv_distance", 15.0, 55.0, "adversary start distance (m)"),
        ),
        lambda cfg: ("adv0",),
        _build_2,
    )
)
_register(
    ScenarioDef(
        "3",
        "Ego changes lanes to pass a slower leading vehicle and merges back "
        "once clear.",
        True,
        _static(
            FeatureBinding("ego_speed", 8.0, 16.0, "ego cruise speed (m/s)"),
            FeatureBinding("lead_speed", 2.0, 7.0, "lead cruise speed (m/s)"),
            FeatureBinding("gap", 10.0, 40.0, "initial gap to the lead (m)"),
            FeatureBinding("clear_margin", 1.0, 10.0, "merge-back margin (m)"),
        ),
        lambda cfg: ("adv0",),
        _build_3,
    )
)
_register(
    ScenarioDef(
        "4",
        "A faster trailing vehicle changes lanes to pass the ego and merges "
        "back in front of it.",
        True,
        _static(
            FeatureBinding("ego_speed", 2.0, 8.0, "ego cruise speed (m/s)"),
            FeatureBinding("adv_speed", 8.0, 16.0, "trailing vehicle speed (m/s)"),
            FeatureBinding("gap", 10.0, 40.0, "initial gap behind the ego (m)"),
            FeatureBinding("clear_margin", 1.0, 10.0, "merge-back margin (m)"),
        ),
        lambda cfg: ("adv0",),
        _build_4,
    )
)
_register(
    ScenarioDef(
        "5",
        "Ego starts passing a lead vehicle that speeds up to block the merge, "
        "forcing the ego to brake behind a slow vehicle in the passing lane.",
        True,
        _static(
            FeatureBinding("ego_speed", 8.0, 14.0, "ego cruise speed (m/s)"),
            FeatureBinding("lead_speed", 3.0, 7.0, "lead initial speed (m/s)"),
            FeatureBinding("boost_speed", 8.0, 16.0, "lead speed once blocking (m/s)"),
            FeatureBinding("lead_gap", 8.0, 25.0, "initial gap to the lead (m)"),
            FeatureBinding(
                "blocker_gap", 25.0, 60.0, "gap to the slow passing-lane vehicle (m)"
            ),
        ),
        lambda cfg: ("adv0", "adv1"),
        _build_5,
    )
)
_register(
    ScenarioDef(
        "6",
        "A waiting pedestrian steps into the road as the ego approaches; the "
        "ego brakes to avoid them.",
        True,
        _static(
            FeatureBinding("ego_speed", 5.0, 12.0, "ego cruise speed (m/s)"),
            FeatureBinding("approach", 20.0, 60.0, "ego start distance (m)"),
            FeatureBinding("ped_speed", 0.8, 2.5, "pedestrian walking speed (m/s)"),
            FeatureBinding(
                "ped_trigger", 8.0, 45.0, "ego distance that starts the crossing (m)"
            ),
        ),
        lambda cfg: ("ped",),
        _build_6,
    )
)
_register(
    ScenarioDef(
        "7",
        "A pedestrian crosses in front of a two-vehicle platoon; the lead "
        "vehicle and the ego must both brake.",
        True,
        _static(
            FeatureBinding("ego_speed", 5.0, 13.0, "ego cruise speed (m/s)"),
            FeatureBinding("lead_gap", 8.0, 24.0, "gap to the lead vehicle (m)"),
            FeatureBinding("lead_speed", 5.0, 13.0, "lead cruise speed (m/s)"),
            FeatureBinding(
                "ped_trigger", 8.0, 45.0, "ego distance that starts the crossing (m)"
            ),
            FeatureBinding("ped_speed", 0.8, 2.5, "pedestrian walking speed (m/s)"),
        ),
        lambda cfg: ("adv0", "ped"),
        _build_7,
    )
)
_register(
    ScenarioDef(
        "intersection",
        "Ego drives straight through a 4-way intersection while m adversaries "
        "approach from cycling arms, each with a sampled distance, speed, and "
        "turn choice.",
        True,
        _intersection_features,
        lambda cfg: tuple(f"adv{i}" for i in range(cfg.adversaries)),
        _build_intersection,
    )
)
_register(
    ScenarioDef(
        "band",
        "Synthetic probe landscape: unsafe iff u lies in [0.3, 0.4), i.e. "
        "exactly one bucket of the first dimension at N=10.",
        False,
        _static(
            FeatureBinding("u", 0.0, 1.0, "probe coordinate with the unsafe band"),
            FeatureBinding("w", 0.0, 1.0, "inert probe coordinate"),
        ),
        lambda cfg: ("probe",),
        _build_band,
    )
)
_register(
    ScenarioDef(
        "two_region",
        "Synthetic probe landscape with two separated unsafe squares, "
        "[0.1,0.3)^2 and [0.6,0.8)^2.",
        False,
        _static(
            FeatureBinding("u", 0.0, 1.0, "probe coordinate 1"),
            FeatureBinding("w", 0.0, 1.0, "probe coordinate 2"),
        ),
        lambda cfg: ("probe",),
        _build_two_region,
    )
)


# --------------------------------------------------------------- public API


def scenario_ids(catalog_only: bool = True) -> tuple[str, ...]:
    return tuple(
        sid for sid, d in REGISTRY.items() if d.in_catalog or not catalog_only
    )


def list_scenarios() -> list[dict]:
    """Static catalog of the road scenarios with their feature ranges."""
    out = []
    for sid, d in REGISTRY.items():
        if not d.in_catalog:
            continue
        cfg = ScenarioConfig(sid)
        out.append(
            {
                "id": sid,
                "description": d.summary,
                "agents": (EGO,) + d.monitored(cfg),
                "features": [
                    {
                        "name": f.name,
                        "lo": f.lo,
                        "hi": f.hi,
                        "description": f.description,
                    }
                    for f in d.features(cfg)
                ],
            }
        )
    return out


def feature_bindings(cfg: ScenarioConfig) -> tuple[FeatureBinding, ...]:
    return REGISTRY[cfg.scenario_id].features(cfg)


def monitored_agents(cfg: ScenarioConfig) -> tuple[str, ...]:
    return REGISTRY[cfg.scenario_id].monitored(cfg)


def default_feature_space(cfg: ScenarioConfig, bucket_count: int = 10) -> FeatureSpace:
    dims = [Dimension(f.name, f.lo, f.hi) for f in feature_bindings(cfg)]
    return FeatureSpace(dims, bucket_count=bucket_count)


def default_specification(cfg: ScenarioConfig, threshold: float = 5.0) -> Specification:
    return Specification([MinSeparation(a, threshold) for a in monitored_agents(cfg)])


def bind_values(cfg: ScenarioConfig, values: Sequence[float]) -> dict[str, float]:
    bindings = feature_bindings(cfg)
    if len(values) != len(bindings):
        raise ConfigError(
            f"scenario {cfg.scenario_id!r} needs {len(bindings)} feature values "
            f"({[f.name for f in bindings]}), got {len(values)}"
        )
    return {f.name: float(v) for f, v in zip(bindings, values)}


def build_scene(cfg: ScenarioConfig, values: Sequence[float]) -> Scene:
    return REGISTRY[cfg.scenario_id].builder(cfg, bind_values(cfg, values))


def simulate(
    cfg: ScenarioConfig,
    sample: SampleVector | Sequence[float],
    backend: str | None = None,
) -> Trajectory:
    """Run one deterministic simulation of a sampled scenario."""
    values = sample.values if isinstance(sample, SampleVector) else sample
    scene = build_scene(cfg, values)
    pos, heading, speed, code = run_scene(
        scene, dt=cfg.dt, max_frames=cfg.max_frames, backend=backend
    )
    return Trajectory(
        scene.agents, pos, heading, speed, cfg.dt,
        TERMINATION_BY_CODE[code], max_frames=cfg.max_frames,
    )


def load_known_unsafe(scenario_id: str) -> dict:
    """Shipped feature values known to violate at least one clearance metric.

    Returns {"values": {name: float}, "rho": [...], ...}; the values were
    located by a coarse grid search over each scenario's feature ranges and
    are frozen as package data so smoke tests have a guaranteed hit.
    """
    path = resources.files("falsify.data").joinpath("known_unsafe.json")
    table = json.loads(path.read_text())
    if scenario_id not in table:
        raise ConfigError(
            f"no known-unsafe fixture for scenario {scenario_id!r}; "
            f"have {sorted(table)}"
        )
    return table[scenario_id]


def known_unsafe_values(cfg: ScenarioConfig) -> list[float]:
    """The known-unsafe fixture as a value list in feature order."""
    fixture = load_known_unsafe(cfg.scenario_id)
    stored = fixture["values"]
    bindings = feature_bindings(cfg)
    missing = [f.name for f in bindings if f.name not in stored]
    if missing:
        raise ConfigError(
            f"fixture for scenario {cfg.scenario_id!r} was recorded with "
            f"{fixture['scenario']} and lacks features {missing}"
        )
    return [stored[f.name] for f in bindings]


def simulate_with_delay(
    cfg: ScenarioConfig,
    sample: SampleVector | Sequence[float],
    artificial_delay: float,
    backend: str | None = None,
) -> Trajectory:
    """simulate(), padded so the call takes at least ``artificial_delay`` s.

    Stands in for an expensive simulator when measuring orchestration
    throughput; the returned trajectory is identical to simulate()'s.
    """
    if artificial_delay < 0:
        raise ConfigError(f"artificial delay must be >= 0, got {artificial_delay}")
    t0 = time.perf_counter()
    traj = simulate(cfg, sample, backend=backend)
    remaining = artificial_delay - (time.perf_counter() - t0)
    if remaining > 0:
        time.sleep(remaining)
    return traj
