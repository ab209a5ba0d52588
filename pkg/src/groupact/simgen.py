"""Deterministic synthetic multi-agent scenarios with exact ground truth.

Agents follow simple kinematics: a default constant velocity, overridden per
frame by planted events (shared gait-modulated walks with per-member delay,
anchored jitter for in-place groups, box-pulsing fights, targeted approach,
path-retracing chases).  The same spec always produces bit-identical tracks;
annotations mirror exactly what was planted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .taxonomy import SINGLE, Taxonomy, default_taxonomy
from .trackio import AnnotationRecord, AnnotationSet, MbbSample, TrackSet


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    agent: int
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    box: tuple[float, float] = (10.0, 24.0)


@dataclass(frozen=True)
class EventSpec:
    """A planted activity.

    Member events ("sym" kinds) drive their members' motion; inter-group
    events reference two previously declared groups and may drive the second
    group (approach, chase).  ``params`` per label:

    - WalkTogether / RunTogether: velocity (vx, vy), gait_amp, gait_period,
      offsets {member: frames} for per-member asynchrony
    - InGroup: jitter (step scale)
    - Fight: jitter, box_jitter (area pulse fraction)
    - Approach: speed, min_dist (mover group steers at the target's centroid)
    - Chase: lag (frames), gain (path-time compression, keeps the chaser
      faster so group ordering stays stable)
    - Split / Ignore: annotation only; members move per their other events
    """

    label: str
    frames: tuple[int, int]
    members: tuple[int, ...] = ()
    group_id: str | None = None
    groups: tuple[str, str] | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    duration: int
    agents: tuple[AgentSpec, ...]
    events: tuple[EventSpec, ...] = ()
    noise_sigma: float = 0.0
    box_sigma: float = 0.0  # relative box-size noise

    def __post_init__(self) -> None:
        ids = [a.agent for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate agent ids")
        if self.noise_sigma < 0 or self.box_sigma < 0:
            raise ScenarioError("noise levels must be non-negative")
        for ev in self.events:
            a, b = ev.frames
            if not (0 <= a <= b < self.duration):
                raise ScenarioError(f"event {ev.label} interval outside duration")
            for m in ev.members:
                if m not in ids:
                    raise ScenarioError(f"event {ev.label} references missing agent {m}")

    @classmethod
    def from_payload(cls, obj: dict) -> "ScenarioSpec":
        agents = tuple(
            AgentSpec(
                agent=int(a["agent"]),
                start=tuple(float(v) for v in a["start"]),
                velocity=tuple(float(v) for v in a.get("velocity", (0.0, 0.0))),
                box=tuple(float(v) for v in a.get("box", (10.0, 24.0))),
            )
            for a in obj["agents"]
        )
        events = tuple(
            EventSpec(
                label=e["label"],
                frames=tuple(int(v) for v in e["frames"]),
                members=tuple(int(v) for v in e.get("members", ())),
                group_id=e.get("group_id"),
                groups=tuple(e["groups"]) if "groups" in e else None,
                params=dict(e.get("params", {})),
            )
            for e in obj.get("events", ())
        )
        return cls(
            seed=int(obj["seed"]),
            duration=int(obj["duration"]),
            agents=agents,
            events=events,
            noise_sigma=float(obj.get("noise_sigma", 0.0)),
            box_sigma=float(obj.get("box_sigma", 0.0)),
        )

    def to_payload(self) -> dict:
        return {
            "seed": self.seed,
            "duration": self.duration,
            "noise_sigma": self.noise_sigma,
            "box_sigma": self.box_sigma,
            "agents": [
                {
                    "agent": a.agent,
                    "start": list(a.start),
                    "velocity": list(a.velocity),
                    "box": list(a.box),
                }
                for a in self.agents
            ],
            "events": [
                {
                    "label": e.label,
                    "frames": list(e.frames),
                    **({"members": list(e.members)} if e.members else {}),
                    **({"group_id": e.group_id} if e.group_id else {}),
                    **({"groups": list(e.groups)} if e.groups else {}),
                    **({"params": e.params} if e.params else {}),
                }
                for e in self.events
            ],
        }


_MOTION_SYM = {"WalkTogether", "RunTogether", "InGroup", "Fight"}
_MOTION_ASYM = {"Approach", "Chase"}


def _gait(base: np.ndarray, amp: float, period: float, t: int) -> np.ndarray:
    return base * (1.0 + amp * math.sin(2.0 * math.pi * t / period))


def generate(spec: ScenarioSpec, taxonomy: Taxonomy | None = None) -> tuple[TrackSet, AnnotationSet]:
    """Simulate the scenario; returns tracks plus exact ground truth."""
    tax = taxonomy or default_taxonomy()
    rng = np.random.default_rng(spec.seed)
    T = spec.duration
    ids = [a.agent for a in spec.agents]
    index = {a: i for i, a in enumerate(ids)}
    agents = {a.agent: a for a in spec.agents}

    # one motion driver per agent per frame at most
    driver: dict[int, list[EventSpec | None]] = {a: [None] * T for a in ids}
    groups_declared: dict[str, EventSpec] = {}
    for ev in spec.events:
        if ev.members and ev.group_id:
            groups_declared[ev.group_id] = ev
        moved: tuple[int, ...] = ()
        if ev.label in _MOTION_SYM:
            moved = ev.members
        elif ev.label in _MOTION_ASYM:
            if not ev.groups or ev.groups[1] not in groups_declared:
                raise ScenarioError(f"event {ev.label} needs two declared groups")
            moved = groups_declared[ev.groups[1]].members
        for m in moved:
            for t in range(ev.frames[0], ev.frames[1] + 1):
                if driver[m][t] is not None:
                    raise ScenarioError(
                        f"agent {m} has conflicting motion events at frame {t}"
                    )
                driver[m][t] = ev

    pos = np.zeros((len(ids), T, 2))
    box = np.zeros((len(ids), T, 2))
    for a in ids:
        pos[index[a], 0] = agents[a].start
        box[index[a], :, 0] = agents[a].box[0]
        box[index[a], :, 1] = agents[a].box[1]

    anchors: dict[tuple, np.ndarray] = {}

    def lead_centroid(ev: EventSpec, frame_value: float, latest: int) -> np.ndarray:
        """Leader-group centroid at a (possibly fractional) past frame."""
        members = groups_declared[ev.groups[0]].members
        f = min(max(frame_value, 0.0), float(latest))
        lo = int(math.floor(f))
        hi = min(lo + 1, latest)
        frac = f - lo
        c_lo = np.mean([pos[index[m], lo] for m in members], axis=0)
        c_hi = np.mean([pos[index[m], hi] for m in members], axis=0)
        return (1.0 - frac) * c_lo + frac * c_hi

    # frame-sequential integration; rng consumption order is fixed by
    # (frame, agent-declaration-order) so identical specs give identical draws
    for t in range(1, T):
        for a in ids:
            i = index[a]
            ev = driver[a][t]
            if ev is None:
                vel = np.asarray(agents[a].velocity)
                pos[i, t] = pos[i, t - 1] + vel
                continue
            p = ev.params
            key = (a, ev.frames, ev.label)
            if ev.label in ("WalkTogether", "RunTogether"):
                base = np.asarray(p.get("velocity", agents[a].velocity), dtype=float)
                amp = float(p.get("gait_amp", 0.0))
                period = float(p.get("gait_period", 20.0))
                offset = int(p.get("offsets", {}).get(str(a), p.get("offsets", {}).get(a, 0)))
                phase = t - ev.frames[0] - offset
                vel = _gait(base, amp, period, phase)
                sway = float(p.get("sway_amp", 0.0))
                if sway:
                    # bounded perpendicular drift so formations breathe
                    speed = float(np.hypot(*base)) or 1.0
                    perp = np.array([-base[1], base[0]]) / speed
                    sway_period = float(p.get("sway_period", 37.0))
                    member_phase = 2.4 * ev.members.index(a)
                    vel = vel + perp * sway * math.sin(
                        2.0 * math.pi * t / sway_period + member_phase
                    )
                pos[i, t] = pos[i, t - 1] + vel
                box_amp = float(p.get("box_amp", 0.0))
                if box_amp:
                    box_period = float(p.get("box_period", period))
                    pulse = 1.0 + box_amp * math.sin(2.0 * math.pi * phase / box_period)
                    box[i, t] = box[i, t] * pulse
            elif ev.label in ("InGroup", "Fight"):
                if key not in anchors:
                    anchors[key] = pos[i, max(ev.frames[0] - 1, 0)].copy()
                anchor = anchors[key]
                overrides = p.get("jitter_overrides", {})
                jit = float(overrides.get(str(a), overrides.get(a, p.get("jitter", 0.3))))
                step = 0.5 * (anchor - pos[i, t - 1]) + rng.normal(0.0, jit, 2)
                pos[i, t] = pos[i, t - 1] + step
                bj_over = p.get("box_jitter_overrides", {})
                bj = float(
                    bj_over.get(
                        str(a),
                        bj_over.get(a, p.get("box_jitter", 0.08) if ev.label == "Fight" else 0.0),
                    )
                )
                if bj:
                    sign = 1.0 if (t % 2 == 0) else -1.0
                    scale = 1.0 + sign * bj * (0.8 + 0.2 * rng.random())
                    box[i, t] = box[i, t] * scale
            elif ev.label == "Approach":
                target = lead_centroid(ev, t - 1, t - 1)
                delta = target - pos[i, t - 1]
                dist = float(np.hypot(*delta))
                speed = float(p.get("speed", 1.5))
                min_dist = float(p.get("min_dist", 25.0))
                if dist > max(min_dist, 1e-9):
                    pos[i, t] = pos[i, t - 1] + delta / dist * min(speed, dist - min_dist)
                else:
                    pos[i, t] = pos[i, t - 1]
            elif ev.label == "Chase":
                lag = float(p.get("lag", 10))
                gain = float(p.get("gain", 1.1))
                t0 = ev.frames[0]
                src = t0 - lag + gain * (t - t0)
                ref = lead_centroid(ev, src, t - 1)
                if key not in anchors:
                    start = lead_centroid(ev, t0 - lag, max(t0 - 1, 0))
                    anchors[key] = pos[i, max(t0 - 1, 0)] - start
                pos[i, t] = ref + anchors[key]
            else:
                vel = np.asarray(agents[a].velocity)
                pos[i, t] = pos[i, t - 1] + vel

    if spec.noise_sigma > 0:
        pos = pos + rng.normal(0.0, spec.noise_sigma, pos.shape)
    if spec.box_sigma > 0:
        box = box * (1.0 + rng.normal(0.0, spec.box_sigma, box.shape))

    samples = []
    for a in ids:
        i = index[a]
        for t in range(T):
            samples.append(
                MbbSample(
                    t, a,
                    float(pos[i, t, 0]), float(pos[i, t, 1]),
                    float(box[i, t, 0]), float(box[i, t, 1]),
                )
            )
    tracks = TrackSet(samples)

    records = []
    for ev in spec.events:
        if ev.members:
            records.append(
                AnnotationRecord(
                    "sym", ev.label, ev.frames[0], ev.frames[1],
                    members=tuple(sorted(ev.members)), group_id=ev.group_id,
                )
            )
        else:
            records.append(
                AnnotationRecord(
                    "asym", ev.label, ev.frames[0], ev.frames[1], groups=ev.groups
                )
            )
    annotations = AnnotationSet(records, taxonomy=tax)
    return tracks, annotations


def load_spec(fp) -> ScenarioSpec:
    try:
        obj = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"unparseable scenario file: {exc}") from None
    try:
        return ScenarioSpec.from_payload(obj)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bad scenario structure: {exc}") from None
