"""Fixed-step kinematic integrator for scripted multi-agent scenes.

This is the hot loop of every simulation: forward-Euler point-mass
updates plus a small set of reactive rules (brake when near a target,
wait until a target approaches, speed up when a target drifts laterally,
change lanes around a target).  The same source is compiled with numba
when available and falls back to plain Python; set FALSIFY_NUMBA=0 to
force the fallback.  Both paths execute identical arithmetic, so results
are bit-identical across backends.

Agents come in two steering modes.  Waypoint agents head straight for
their next waypoint and advance through the list on capture.  Lane
agents travel in +x and steer toward a desired lateral offset with a
proportional heading law, which is what the lane-change rule perturbs.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)

MODE_WAYPOINT = 0
MODE_LANE = 1

RULE_NONE = 0
RULE_BRAKE_NEAR = 1        # f0=trigger distance, f1=decel rate
RULE_WAIT_UNTIL_NEAR = 2   # f0=trigger distance (latched once released)
RULE_BOOST_ON_LATERAL = 3  # f0=offset threshold, f1=boosted speed, f2=reference y
RULE_LANE_CHANGE = 4       # f0=trigger distance, f1=target lane y, f2=clear-ahead margin
RULE_BRAKE_AHEAD = 5       # f0=trigger distance, f1=decel rate, f2=corridor half-width

CODE_TIME_LIMIT = 0
CODE_CRASH = 1
CODE_CLEARED = 2

CRASH_DISTANCE = 0.5
CAPTURE_RADIUS = 1.5
LATERAL_GAIN = 0.15

MAX_RULES = 8
MAX_WAYPOINTS = 4

ENV_FLAG = "FALSIFY_NUMBA"


def _integrate_impl(
    mode,
    pos,
    heading,
    speed,
    cruise,
    accel,
    waypoints,
    wp_count,
    goal_x,
    lane_y,
    rule_type,
    rule_target,
    rule_f,
    dt,
    max_frames,
    crash_dist,
    capture_radius,
    lat_gain,
    out_pos,
    out_heading,
    out_speed,
):
    n = mode.shape[0]
    n_rules = rule_type.shape[1]
    wp_idx = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=np.int64)
    rule_state = np.zeros((n, n_rules), dtype=np.float64)
    prev = np.empty((n, 2), dtype=np.float64)
    frames = 0
    term = CODE_TIME_LIMIT

    for k in range(max_frames):
        for a in range(n):
            out_pos[k, a, 0] = pos[a, 0]
            out_pos[k, a, 1] = pos[a, 1]
            out_heading[k, a] = heading[a]
            out_speed[k, a] = speed[a]
        frames = k + 1

        # Goal bookkeeping on the recorded state.
        for a in range(n):
            if mode[a] == MODE_WAYPOINT:
                while wp_idx[a] < wp_count[a] and (
                    math.hypot(
                        waypoints[a, wp_idx[a], 0] - pos[a, 0],
                        waypoints[a, wp_idx[a], 1] - pos[a, 1],
                    )
                    < capture_radius
                ):
                    wp_idx[a] += 1
                if wp_idx[a] >= wp_count[a]:
                    done[a] = 1
            else:
                if pos[a, 0] >= goal_x[a]:
                    done[a] = 1

        crashed = False
        for a in range(1, n):
            if (
                math.hypot(pos[a, 0] - pos[0, 0], pos[a, 1] - pos[0, 1])
                < crash_dist
            ):
                crashed = True
        if crashed:
            term = CODE_CRASH
            break
        all_done = True
        for a in range(n):
            if done[a] == 0:
                all_done = False
        if all_done:
            term = CODE_CLEARED
            break
        if k == max_frames - 1:
            term = CODE_TIME_LIMIT
            break

        # Controls read the frame-k snapshot so agent order cannot matter.
        for a in range(n):
            prev[a, 0] = pos[a, 0]
            prev[a, 1] = pos[a, 1]

        for a in range(n):
            target_speed = cruise[a]
            braking = False
            brake_rate = 0.0
            holding = False
            y_des = lane_y[a]
            for r in range(n_rules):
                rt = rule_type[a, r]
                if rt == RULE_NONE:
                    continue
                tgt = rule_target[a, r]
                f0 = rule_f[a, r, 0]
                f1 = rule_f[a, r, 1]
                f2 = rule_f[a, r, 2]
                gap = math.hypot(prev[tgt, 0] - prev[a, 0], prev[tgt, 1] - prev[a, 1])
                if rt == RULE_BRAKE_NEAR:
                    if gap < f0:
                        braking = True
                        if f1 > brake_rate:
                            brake_rate = f1
                elif rt == RULE_WAIT_UNTIL_NEAR:
                    if rule_state[a, r] == 0.0 and gap < f0:
                        rule_state[a, r] = 1.0
                    if rule_state[a, r] == 0.0:
                        holding = True
                elif rt == RULE_BOOST_ON_LATERAL:
                    if rule_state[a, r] == 0.0 and abs(prev[tgt, 1] - f2) > f0:
                        rule_state[a, r] = 1.0
                    if rule_state[a, r] == 1.0:
                        target_speed = f1
                elif rt == RULE_LANE_CHANGE:
                    if rule_state[a, r] == 0.0 and gap < f0:
                        rule_state[a, r] = 1.0
                    if rule_state[a, r] == 1.0 and prev[a, 0] > prev[tgt, 0] + f2:
                        rule_state[a, r] = 2.0
                    if rule_state[a, r] == 1.0:
                        y_des = f1
                elif rt == RULE_BRAKE_AHEAD:
                    dx = prev[tgt, 0] - prev[a, 0]
                    dy = prev[tgt, 1] - prev[a, 1]
                    along = dx * math.cos(heading[a]) + dy * math.sin(heading[a])
                    cross = -dx * math.sin(heading[a]) + dy * math.cos(heading[a])
                    if 0.0 < along < f0 and abs(cross) < f2:
                        braking = True
                        if f1 > brake_rate:
                            brake_rate = f1
            if holding:
                target_speed = 0.0
            if braking:
                target_speed = 0.0

            if mode[a] == MODE_WAYPOINT:
                if wp_idx[a] < wp_count[a]:
                    heading[a] = math.atan2(
                        waypoints[a, wp_idx[a], 1] - pos[a, 1],
                        waypoints[a, wp_idx[a], 0] - pos[a, 0],
                    )
            else:
                heading[a] = math.atan2(lat_gain * (y_des - pos[a, 1]), 1.0)

            if speed[a] < target_speed:
                s = speed[a] + accel[a] * dt
                speed[a] = s if s < target_speed else target_speed
            elif speed[a] > target_speed:
                rate = brake_rate if braking else accel[a]
                s = speed[a] - rate * dt
                speed[a] = s if s > target_speed else target_speed
                if speed[a] < 0.0:
                    speed[a] = 0.0

            pos[a, 0] += speed[a] * math.cos(heading[a]) * dt
            pos[a, 1] += speed[a] * math.sin(heading[a]) * dt

    return frames, term


integrate_python = _integrate_impl


def numba_requested() -> bool:
    """Whether the env flag allows the compiled backend (default yes)."""
    flag = os.environ.get(ENV_FLAG, "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


def _compile_kernel():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is an install-time choice
        logger.info("numba unavailable; using the Python integrator")
        return None
    return njit(cache=True, nogil=True)(_integrate_impl)


integrate_numba = _compile_kernel() if numba_requested() else None


def active_backend() -> str:
    return "numba" if integrate_numba is not None else "python"


def kernel_functions() -> dict:
    """Both integrator entry points, for benchmarks and equivalence tests."""
    out = {"python": integrate_python}
    if integrate_numba is not None:
        out["numba"] = integrate_numba
    return out


@dataclass
class Scene:
    """Initial conditions plus behavior wiring for one simulation.

    Agent 0 is always the ego vehicle.  Built via SceneBuilder; arrays
    are laid out for direct handoff to the integrator.
    """

    agents: tuple[str, ...]
    mode: np.ndarray
    pos: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    cruise: np.ndarray
    accel: np.ndarray
    waypoints: np.ndarray
    wp_count: np.ndarray
    goal_x: np.ndarray
    lane_y: np.ndarray
    rule_type: np.ndarray
    rule_target: np.ndarray
    rule_f: np.ndarray


class SceneBuilder:
    """Assembles a Scene one agent at a time; the first agent is the ego."""

    def __init__(self):
        self._names: list[str] = []
        self._mode: list[int] = []
        self._pos: list[tuple[float, float]] = []
        self._speed: list[float] = []
        self._cruise: list[float] = []
        self._accel: list[float] = []
        self._waypoints: list[list[tuple[float, float]]] = []
        self._goal_x: list[float] = []
        self._lane_y: list[float] = []
        self._rules: list[list[tuple[int, int, float, float, float]]] = []

    def _add(self, name, mode, pos, speed, cruise, accel, waypoints, goal_x, lane_y):
        if name in self._names:
            raise DomainError(f"duplicate agent name {name!r}")
        if speed < 0 or cruise < 0 or accel <= 0:
            raise DomainError(
                f"agent {name!r}: speeds must be >= 0 and accel > 0"
            )
        self._names.append(name)
        self._mode.append(mode)
        self._pos.append((float(pos[0]), float(pos[1])))
        self._speed.append(float(speed))
        self._cruise.append(float(cruise))
        self._accel.append(float(accel))
        self._waypoints.append([(float(x), float(y)) for x, y in waypoints])
        self._goal_x.append(float(goal_x))
        self._lane_y.append(float(lane_y))
        self._rules.append([])
        return len(self._names) - 1

    def add_waypoint_agent(self, name, pos, waypoints, speed, cruise=None, accel=3.0):
        """Agent that chases a waypoint list and is done when it runs out."""
        if not waypoints:
            raise DomainError(f"agent {name!r}: waypoint agents need >= 1 waypoint")
        if len(waypoints) > MAX_WAYPOINTS:
            raise DomainError(
                f"agent {name!r}: at most {MAX_WAYPOINTS} waypoints supported"
            )
        cruise = speed if cruise is None else cruise
        return self._add(
            name, MODE_WAYPOINT, pos, speed, cruise, accel, waypoints,
            goal_x=math.inf, lane_y=pos[1],
        )

    def add_lane_agent(self, name, pos, speed, goal_x, cruise=None, accel=3.0):
        """Agent driving in +x holding its starting lateral offset."""
        cruise = speed if cruise is None else cruise
        return self._add(
            name, MODE_LANE, pos, speed, cruise, accel, [],
            goal_x=goal_x, lane_y=pos[1],
        )

    def _add_rule(self, agent, rule, target, f0, f1=0.0, f2=0.0):
        for idx in (agent, target):
            if not 0 <= idx < len(self._names):
                raise DomainError(f"rule references unknown agent index {idx}")
        if agent == target:
            raise DomainError("a rule cannot target its own agent")
        if len(self._rules[agent]) >= MAX_RULES:
            raise DomainError(f"agent {self._names[agent]!r} has too many rules")
        self._rules[agent].append((rule, target, float(f0), float(f1), float(f2)))

    def brake_near(self, agent, target, trigger, decel):
        if trigger <= 0 or decel <= 0:
            raise DomainError("brake rule needs trigger > 0 and decel > 0")
        self._add_rule(agent, RULE_BRAKE_NEAR, target, trigger, decel)

    def brake_ahead(self, agent, target, trigger, decel, corridor):
        """Brake only for targets ahead of the heading within a lateral corridor."""
        if trigger <= 0 or decel <= 0 or corridor <= 0:
            raise DomainError(
                "brake-ahead rule needs trigger, decel and corridor > 0"
            )
        self._add_rule(agent, RULE_BRAKE_AHEAD, target, trigger, decel, corridor)

    def wait_until_near(self, agent, target, trigger):
        if trigger < 0:
            raise DomainError("wait rule needs trigger >= 0")
        self._add_rule(agent, RULE_WAIT_UNTIL_NEAR, target, trigger)

    def boost_on_lateral(self, agent, target, offset_threshold, boost_speed, ref_y):
        if offset_threshold <= 0 or boost_speed < 0:
            raise DomainError("boost rule needs threshold > 0 and speed >= 0")
        self._add_rule(
            agent, RULE_BOOST_ON_LATERAL, target, offset_threshold, boost_speed, ref_y
        )

    def lane_change(self, agent, target, trigger, to_y, clear_margin):
        if self._mode[agent] != MODE_LANE:
            raise DomainError("lane changes apply to lane agents only")
        if trigger <= 0 or clear_margin < 0:
            raise DomainError("lane change needs trigger > 0 and clear margin >= 0")
        self._add_rule(agent, RULE_LANE_CHANGE, target, trigger, to_y, clear_margin)

    def build(self) -> Scene:
        n = len(self._names)
        if n < 1:
            raise DomainError("scene needs at least one agent")
        n_rules = max(1, max(len(r) for r in self._rules))
        waypoints = np.zeros((n, MAX_WAYPOINTS, 2))
        wp_count = np.zeros(n, dtype=np.int64)
        for a, wps in enumerate(self._waypoints):
            wp_count[a] = len(wps)
            for w, (x, y) in enumerate(wps):
                waypoints[a, w] = (x, y)
        rule_type = np.zeros((n, n_rules), dtype=np.int64)
        rule_target = np.zeros((n, n_rules), dtype=np.int64)
        rule_f = np.zeros((n, n_rules, 3))
        for a, rules in enumerate(self._rules):
            for r, (rt, tgt, f0, f1, f2) in enumerate(rules):
                rule_type[a, r] = rt
                rule_target[a, r] = tgt
                rule_f[a, r] = (f0, f1, f2)
        heading = np.zeros(n)
        for a in range(n):
            if self._mode[a] == MODE_WAYPOINT:
                wx, wy = self._waypoints[a][0]
                heading[a] = math.atan2(wy - self._pos[a][1], wx - self._pos[a][0])
        return Scene(
            agents=tuple(self._names),
            mode=np.array(self._mode, dtype=np.int64),
            pos=np.array(self._pos, dtype=float).reshape(n, 2),
            heading=heading,
            speed=np.array(self._speed, dtype=float),
            cruise=np.array(self._cruise, dtype=float),
            accel=np.array(self._accel, dtype=float),
            waypoints=waypoints,
            wp_count=wp_count,
            goal_x=np.array(self._goal_x, dtype=float),
            lane_y=np.array(self._lane_y, dtype=float),
            rule_type=rule_type,
            rule_target=rule_target,
            rule_f=rule_f,
        )


def run_scene(
    scene: Scene,
    dt: float = 0.1,
    max_frames: int = 300,
    backend: str | None = None,
):
    """Integrate a scene; returns (positions, headings, speeds, termination code).

    Output arrays are trimmed to the recorded frame count.  ``backend``
    forces "python" or "numba"; default follows the environment flag.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if max_frames < 1:
        raise DomainError(f"max_frames must be >= 1, got {max_frames}")
    fns = kernel_functions()
    if backend is None:
        fn = fns.get("numba", fns["python"])
    else:
        if backend not in fns:
            raise DomainError(
                f"backend {backend!r} unavailable; have {sorted(fns)}"
            )
        fn = fns[backend]
    n = len(scene.agents)
    out_pos = np.empty((max_frames, n, 2))
    out_heading = np.empty((max_frames, n))
    out_speed = np.empty((max_frames, n))
    frames, code = fn(
        scene.mode,
        scene.pos.copy(),
        scene.heading.copy(),
        scene.speed.copy(),
        scene.cruise,
        scene.accel,
        scene.waypoints,
        scene.wp_count,
        scene.goal_x,
        scene.lane_y,
        scene.rule_type,
        scene.rule_target,
        scene.rule_f,
        float(dt),
        int(max_frames),
        CRASH_DISTANCE,
        CAPTURE_RADIUS,
        LATERAL_GAIN,
        out_pos,
        out_heading,
        out_speed,
    )
    return out_pos[:frames], out_heading[:frames], out_speed[:frames], int(code)
