"""One simulation: the fixed-step loop coupling movement, smoke and dose."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import crowd
from .crowd import ObstacleField, Targets, fsm_step
from .fireenv import (AMBIENT, FedState, FireHistory, SmokeSpeedParams, conditions_at,
                      fed_increment, health_effect, walking_speed)
from .geometry import DEFAULT_WALL_THICKNESS, FloorPlan, ObstacleSet, locate_compartment, to_obstacles
from .navmesh import (FunnelError, NavGraph, NavMeshError, NoRouteError, attach_point,
                      build_navigation, detach_point, funnel, shortest_route)
from .sampler import ScenarioSample

INCAPACITATION_FED = 0.3
LETHAL_FED = 1.0


class Status(IntEnum):
    WAITING = 0
    MOVING = 1
    INCAPACITATED = 2
    DEAD = 3
    ESCAPED = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class EngineConfig:
    dt: float = 0.05
    env_update_stride: int = 20
    breathing_height: float = 1.8
    max_sim_time: float = 1800.0
    disk_radius: float = 0.6  # lower bound; each agent uses max(this, 2 r)
    tau_agent: float = crowd.TAU_AGENT
    tau_obstacle: float = crowd.TAU_OBSTACLE
    neighbor_dist: float = crowd.NEIGHBOR_DIST
    max_neighbors: int = crowd.MAX_NEIGHBORS
    keep_right: float = crowd.KEEP_RIGHT
    arc_step: float = math.pi / 8
    retain_frames: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.env_update_stride < 1:
            raise ValueError("env_update_stride must be >= 1")
        if not self.max_sim_time > 0:
            raise ValueError("max_sim_time must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(d) - known)
        if bad:
            raise ValueError(f"unknown engine settings {bad}")
        return cls(**d)


@dataclass
class Scene:
    """Immutable per-plan context shared by every simulation of a batch."""

    plan: FloorPlan
    obstacles: ObstacleSet
    graph: NavGraph
    field: ObstacleField

    @classmethod
    def build(cls, plan: FloorPlan, wall_thickness: float = DEFAULT_WALL_THICKNESS) -> "Scene":
        obs = to_obstacles(plan, wall_thickness)
        return cls(plan, obs, build_navigation(obs), ObstacleField.from_rectangles(obs.rectangles))

    def exit_nodes(self, exit_ids: Iterable[str]) -> frozenset[int]:
        wanted = set(exit_ids)
        return frozenset(n for n, gid in self.graph.exit_gap.items() if gid in wanted)

    @property
    def exit_ids(self) -> list[str]:
        return sorted({g.id for g in self.obstacles.exits})


@dataclass(frozen=True)
class ExitEvent:
    time: float
    exit_id: str


@dataclass
class AgentOutcome:
    id: int
    status: str
    egress_time: float | None
    fed_total: float
    health: str
    unresolved: bool
    exit_id: str | None
    incapacitated_time: float | None = None
    death_time: float | None = None


@dataclass
class SimulationOutcome:
    seed: int
    agents: list[AgentOutcome]
    rset: float | None
    fatalities: int
    steps: int
    end_time: float
    warnings: list[str] = field(default_factory=list)
    frames: list[dict] | None = None

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "rset": self.rset,
            "fatalities": self.fatalities,
            "steps": self.steps,
            "end_time": self.end_time,
            "warnings": list(self.warnings),
            "agents": [vars(a) for a in self.agents],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SimulationOutcome":
        return cls(d["seed"], [AgentOutcome(**a) for a in d["agents"]], d["rset"], d["fatalities"],
                   d["steps"], d["end_time"], list(d.get("warnings", [])))


class FramesNotRetained(RuntimeError):
    pass


def export_frames(outcome: SimulationOutcome) -> Iterator[str]:
    """One JSON line per step: ``{"t": s, "agents": [[id, x, y, status, fed_total], ...]}``."""
    if outcome.frames is None:
        raise FramesNotRetained("frames were not retained for this run")
    for fr in outcome.frames:
        yield json.dumps(fr, separators=(",", ":")) + "\n"


def _length(pts) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


class _Agent:
    __slots__ = ("spec", "status", "fed", "speed", "waypoints", "targets", "final_center",
                 "exit_id", "egress", "t_incap", "t_dead", "last_comp", "disk")

    def __init__(self, spec, disk):
        self.spec = spec
        self.status = Status.WAITING
        self.fed = FedState()
        self.speed = spec.v_horizontal
        self.waypoints: list | None = None
        self.targets = Targets()
        self.final_center = None
        self.exit_id = None
        self.egress = None
        self.t_incap = None
        self.t_dead = None
        self.last_comp = spec.compartment
        self.disk = disk


def run_simulation(scene: Scene, history: FireHistory | None, sample: ScenarioSample,
                   config: EngineConfig = EngineConfig(),
                   exit_events: Sequence[ExitEvent] = ()) -> SimulationOutcome:
    """Run one seeded simulation to completion or to ``config.max_sim_time``.

    Phases per step: state, goals, velocity, position, then every
    ``env_update_stride`` steps the smoke speed and dose update.
    """
    graph = replace(scene.graph, _transient={})
    rects = scene.field.rects
    exits_by_id = {g.id: g for g in scene.obstacles.exits}
    available = set(exits_by_id)
    events = sorted(exit_events, key=lambda e: (e.time, e.exit_id))
    warnings: list[str] = []
    warned: set[str] = set()

    def warn(msg: str) -> None:
        if msg not in warned:
            warned.add(msg)
            warnings.append(msg)

    agents = [_Agent(s, max(config.disk_radius, 2 * s.radius)) for s in sample.agents]
    n = len(agents)
    pos = np.array([a.spec.position for a in agents], dtype=float).reshape(n, 2)
    vel = np.zeros((n, 2))
    radius = np.array([a.spec.radius for a in agents], dtype=float)
    frames: list[dict] | None = [] if config.retain_frames else None
    dt = config.dt
    stride = config.env_update_stride
    max_steps = int(round(config.max_sim_time / dt))
    hist_end = history.end_time() if history is not None else math.inf

    def sees(a, b) -> bool:
        return bool(crowd._los(float(a[0]), float(a[1]), float(b[0]), float(b[1]), rects))

    def plan_route(ag: _Agent, p) -> None:
        nodes = scene.exit_nodes(available)
        ag.waypoints = None
        ag.exit_id = None
        if not nodes:
            warn("no exit available")
            return
        node = attach_point(graph, (float(p[0]), float(p[1]))) if graph.locate(tuple(p)) is not None else None
        if node is None:
            warn(f"agent {ag.spec.id} is off the navigation mesh")
            return
        try:
            # exits ranked by walked (funnelled) length; the midpoint metric
            # only picks the portal sequence towards each exit
            ranked = []
            for eid in sorted(available):
                try:
                    route = shortest_route(graph, node, scene.exit_nodes([eid]),
                                           min_width=2 * ag.spec.radius)
                except NoRouteError:
                    continue
                try:
                    wps = funnel(route, ag.spec.radius, config.arc_step)
                except FunnelError:
                    wps = [route.origin] + [((l[0] + r[0]) / 2, (l[1] + r[1]) / 2)
                                            for l, r in route.portals]
                ranked.append((_length(wps), eid, route, wps))
        finally:
            detach_point(graph, node)
        if not ranked:
            warn(f"agent {ag.spec.id}: no exit reachable")
            return
        ranked.sort(key=lambda c: (c[0], c[1]))
        pick = 1 if ag.spec.alternative_route and len(ranked) >= 2 else 0
        _, _, route, wps = ranked[pick]
        gap = exits_by_id[route.exit_id]
        ag.waypoints = wps
        ag.exit_id = route.exit_id
        ag.targets = Targets()
        g = wps[-1]
        # the final disk sits just past the exit line: entering it = reaching the doorway
        ag.final_center = (g[0] + gap.outward[0] * ag.disk, g[1] + gap.outward[1] * ag.disk)

    def pushed_out(ag: _Agent, p, t: float) -> bool:
        # beyond an exit line and inside no compartment: already outside
        if not available:
            return False
        gap = min((exits_by_id[e] for e in sorted(available)),
                  key=lambda g: math.hypot(p[0] - g.midpoint[0], p[1] - g.midpoint[1]))
        if (p[0] - gap.midpoint[0]) * gap.outward[0] + (p[1] - gap.midpoint[1]) * gap.outward[1] <= 0:
            return False
        if locate_compartment(scene.plan, (float(p[0]), float(p[1]))) is not None:
            return False
        ag.status = Status.ESCAPED
        ag.egress = t
        ag.exit_id = gap.id
        return True

    def env_update(t_now: float, span: float) -> None:
        """Speed from conditions at ``t_now``; dose over ``[t_now - span, t_now)``."""
        if history is None:
            return
        if t_now > hist_end:
            warn(f"fire history ends at {hist_end:g} s; conditions clamped")
        for i, ag in enumerate(agents):
            if ag.status in (Status.ESCAPED, Status.DEAD):
                continue
            comp = locate_compartment(scene.plan, (pos[i, 0], pos[i, 1])) or ag.last_comp
            ag.last_comp = comp
            if comp in history:
                now = conditions_at(history, comp, t_now, config.breathing_height)
                before = conditions_at(history, comp, t_now - span, config.breathing_height) \
                    if span > 0 else now
            else:
                warn(f"compartment {comp} missing from fire history; ambient air assumed")
                now = before = AMBIENT
            ag.speed = walking_speed(ag.spec.v_horizontal, now.Ks,
                                     SmokeSpeedParams(ag.spec.alpha, ag.spec.beta))
            if span > 0:
                ag.fed = fed_increment(ag.fed, before, span)
                if ag.fed.fed_total >= LETHAL_FED:
                    if ag.t_incap is None:
                        ag.t_incap = t_now
                    ag.t_dead = t_now
                    ag.status = Status.DEAD
                elif ag.fed.fed_total >= INCAPACITATION_FED and ag.status < Status.INCAPACITATED:
                    ag.t_incap = t_now
                    ag.status = Status.INCAPACITATED

    env_update(0.0, 0.0)
    step = 0
    ev = 0
    pref = np.zeros((n, 2))
    kind = np.zeros(n, dtype=np.int64)
    vmax = np.zeros(n)
    while step < max_steps and any(a.status not in (Status.ESCAPED, Status.DEAD) for a in agents):
        t = step * dt
        # state
        rerouting = False
        while ev < len(events) and events[ev].time <= t + 1e-12:
            if events[ev].exit_id not in exits_by_id:
                warn(f"exit event for unknown exit {events[ev].exit_id}")
            available.discard(events[ev].exit_id)
            ev += 1
            rerouting = True
        start = sample.alarm_time
        for i, ag in enumerate(agents):
            if ag.status == Status.WAITING and t >= start + ag.spec.pre_evac_time - 1e-12:
                ag.status = Status.MOVING
                if pushed_out(ag, pos[i], t):
                    vel[i] = 0.0
                    continue
                plan_route(ag, pos[i])
            elif rerouting and ag.status == Status.MOVING and ag.exit_id not in available:
                plan_route(ag, pos[i])
        # goals
        for i, ag in enumerate(agents):
            pref[i] = 0.0
            if ag.status != Status.MOVING:
                continue
            if pushed_out(ag, pos[i], t):
                vel[i] = 0.0
                continue
            if ag.waypoints is None:
                continue
            _, cmd = fsm_step(pos[i], ag.waypoints, ag.targets, ag.disk, sees, ag.final_center)
            if cmd is crowd.Command.ESCAPE:
                ag.status = Status.ESCAPED
                ag.egress = t
                vel[i] = 0.0
                continue
            k = ag.targets.walk
            target = ag.final_center if k == len(ag.waypoints) - 1 else ag.waypoints[k]
            dx, dy = target[0] - pos[i, 0], target[1] - pos[i, 1]
            dist = math.hypot(dx, dy)
            if dist > 1e-12:
                sp = min(ag.speed, dist / dt)
                pref[i, 0] = dx / dist * sp
                pref[i, 1] = dy / dist * sp
        # velocity
        active = False
        for i, ag in enumerate(agents):
            st = ag.status
            if st == Status.ESCAPED:
                kind[i] = crowd.ABSENT
            elif st in (Status.INCAPACITATED, Status.DEAD):
                kind[i] = crowd.STATIC
                vel[i] = 0.0
            else:
                kind[i] = crowd.DYNAMIC
                active = active or st == Status.MOVING
            vmax[i] = ag.speed
        if active:
            vel = crowd.orca_arrays(pos, vel, pref, radius, vmax, kind, scene.field, dt,
                                    config.tau_agent, config.tau_obstacle, config.neighbor_dist,
                                    config.max_neighbors, config.keep_right)
            # position
            pos = pos + vel * dt
        else:
            vel[:] = 0.0
        step += 1
        if step % stride == 0:
            env_update(step * dt, stride * dt)
        if frames is not None:
            frames.append({"t": step * dt, "agents": [
                [ag.spec.id, float(pos[i, 0]), float(pos[i, 1]), ag.status.label, ag.fed.fed_total]
                for i, ag in enumerate(agents)]})

    outs = []
    for ag in agents:
        unresolved = ag.status in (Status.WAITING, Status.MOVING)
        outs.append(AgentOutcome(ag.spec.id, ag.status.label, ag.egress, ag.fed.fed_total,
                                 health_effect(ag.fed.fed_total).value, unresolved, ag.exit_id,
                                 ag.t_incap, ag.t_dead))
    egress = [a.egress for a in agents if a.egress is not None]
    return SimulationOutcome(
        seed=sample.seed,
        agents=outs,
        rset=max(egress) if egress else None,
        fatalities=sum(1 for a in agents if a.status == Status.DEAD),
        steps=step,
        end_time=step * dt,
        warnings=warnings,
        frames=frames,
    )
