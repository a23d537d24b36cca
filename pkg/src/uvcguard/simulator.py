"""Deterministic fixed-step simulation of occupants, sensors, and lamps.

Each tick runs the same pipeline: interpolate occupant positions, evaluate
the physical sensor models, feed events through fusion, step the
controller, apply lamp commands, then account dose, probe irradiance, and
occupant exposure against the post-command lamp state. All randomness
comes from one seeded generator drawn in a fixed order, so a scenario run
twice with the same seed produces identical output byte for byte.

Walls are opaque to PIR and ultrasonic sensing but transparent to BLE.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .controller import (ControllerState, CyclePolicy, LampAction,
                         LampCommand, LampRoster, step)
from .dosimetry import DoseGrid, LampOnIntervals, irradiance_at_point
from .fusion import (BleAdvert, FusionParams, OccupancyFusion,
                     OccupancySnapshot, Payload, PirMotion, SensorEvent,
                     UsPresence, distance_to_rssi)
from .room import (LampSpec, LampTier, Point3, RoomModel, SensorKind,
                   SensorSpec, angle_between_deg, validate as validate_room)

PIR_SPEED_THRESHOLD = 0.1      # m/s; slower targets look stationary to a PIR
BLE_ADVERT_PERIOD = 1.0        # s between beacon advertisements
CHEST_HEIGHT = 1.1             # m; exposure accounting plane
PROBE_HEIGHT = 0.7             # m; desk-level virtual radiometers
DOSE_CHECKPOINT_EVERY = 600.0  # s between dose-grid checkpoints
MAX_RECORDED_VIOLATIONS = 10000


# ---------------------------------------------------------------------------
# occupant scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Waypoint:
    t: float
    position: Point3
    inside_room: bool


@dataclass(frozen=True)
class OccupantScript:
    """Piecewise-linear movement script for one occupant.

    Positions interpolate linearly between waypoints and clamp outside the
    scripted range. The inside flag follows the most recent waypoint, but a
    position inside the room box always counts as inside: an occupant
    crossing the door plane mid-segment is treated as present from the
    crossing instant, never later.
    """

    occupant_id: str
    carries_beacon: bool
    waypoints: Tuple[Waypoint, ...]   # times in seconds from scenario start

    def __post_init__(self) -> None:
        object.__setattr__(self, "waypoints", tuple(self.waypoints))

    def position_at(self, t: float) -> Point3:
        wps = self.waypoints
        if t <= wps[0].t:
            return wps[0].position
        if t >= wps[-1].t:
            return wps[-1].position
        i = bisect_right([w.t for w in wps], t) - 1
        a, b = wps[i], wps[i + 1]
        frac = (t - a.t) / (b.t - a.t)
        return Point3(a.position.x + frac * (b.position.x - a.position.x),
                      a.position.y + frac * (b.position.y - a.position.y),
                      a.position.z + frac * (b.position.z - a.position.z))

    def flag_at(self, t: float) -> bool:
        wps = self.waypoints
        if t <= wps[0].t:
            return wps[0].inside_room
        if t >= wps[-1].t:
            return wps[-1].inside_room
        i = bisect_right([w.t for w in wps], t) - 1
        return wps[i].inside_room


class _OccupantTracker:
    """Fast per-tick interpolation cursor over one script."""

    __slots__ = ("script", "times", "wps", "index")

    def __init__(self, script: OccupantScript):
        self.script = script
        self.wps = script.waypoints
        self.times = [w.t for w in self.wps]
        self.index = 0

    def at(self, t: float) -> Tuple[Point3, bool]:
        wps = self.wps
        times = self.times
        n = len(wps)
        while self.index + 1 < n and times[self.index + 1] <= t:
            self.index += 1
        i = self.index
        if t <= times[0]:
            return wps[0].position, wps[0].inside_room
        if i + 1 >= n:
            return wps[-1].position, wps[-1].inside_room
        a, b = wps[i], wps[i + 1]
        frac = (t - a.t) / (b.t - a.t)
        pos = Point3(a.position.x + frac * (b.position.x - a.position.x),
                     a.position.y + frac * (b.position.y - a.position.y),
                     a.position.z + frac * (b.position.z - a.position.z))
        return pos, a.inside_room


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseParams:
    """Sensor imperfection knobs. Zero noise means ideal sensors except the
    PIR false-positive process, which defaults to 0.5 events/sensor/hour."""

    rssi_sigma_db: float = 0.0
    pir_miss_prob: float = 0.0
    false_positive_rate_per_hour: float = 0.5


@dataclass(frozen=True)
class Scenario:
    name: str
    room: RoomModel
    policy: CyclePolicy
    fusion: FusionParams
    occupants: Tuple[OccupantScript, ...]
    start_time: float            # epoch seconds; the calendar anchor
    duration: float
    tick: float = 0.1
    seed: int = 0
    noise: NoiseParams = field(default_factory=NoiseParams)
    assume_vacant_at_start: bool = False
    # test-only bypass: force lamps on over [start, end) windows given in
    # seconds from scenario start, ignoring the controller, to exercise
    # the violation-reporting path
    unsafe_force_on: Mapping[str, Tuple[Tuple[float, float], ...]] = \
        field(default_factory=dict)

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


class ScenarioError(ValueError):
    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def validate_scenario(sc: Scenario) -> List[str]:
    problems = list(validate_room(sc.room))
    if not 0.0 < sc.tick <= 1.0:
        problems.append(f"tick must be in (0, 1] seconds, got {sc.tick}")
    if sc.duration <= 0.0:
        problems.append("duration must be > 0")
    if sc.policy.reaction_deadline and sc.tick > max(sc.policy.reaction_deadline, 1e-9):
        problems.append("tick must not exceed the reaction deadline")
    for occ in sc.occupants:
        if not occ.waypoints:
            problems.append(f"occupant {occ.occupant_id!r}: needs waypoints")
            continue
        prev_t = -math.inf
        for i, wp in enumerate(occ.waypoints):
            if wp.t <= prev_t:
                problems.append(f"occupant {occ.occupant_id!r}: waypoint {i} "
                                "timestamps must strictly increase")
                break
            prev_t = wp.t
            if wp.inside_room and not sc.room.contains(wp.position):
                problems.append(f"occupant {occ.occupant_id!r}: waypoint {i} "
                                "flagged inside but lies outside the room box")
    lamp_ids = {l.id for l in sc.room.lamps}
    for lamp_id, spans in sc.unsafe_force_on.items():
        if lamp_id not in lamp_ids:
            problems.append(f"unsafe_force_on: unknown lamp {lamp_id!r}")
        for start, end in spans:
            if end < start:
                problems.append(f"unsafe_force_on[{lamp_id!r}]: bad interval")
    return problems


# ---------------------------------------------------------------------------
# sensor models
# ---------------------------------------------------------------------------

def _in_cone(sensor: SensorSpec, target: Point3) -> bool:
    offset = Point3(target.x - sensor.position.x,
                    target.y - sensor.position.y,
                    target.z - sensor.position.z)
    return angle_between_deg(sensor.aim, offset) <= sensor.fov_half_angle


def pir_model(sensor: SensorSpec, moves: Sequence[Tuple[Point3, Point3]],
              tick: float, rng: random.Random, miss_prob: float) -> bool:
    """True when any inside occupant moved fast enough within the view cone.

    ``moves`` holds (previous, current) positions of occupants currently
    inside the room; a displacement at or below the speed threshold looks
    stationary and passive infrared cannot see it.
    """
    threshold = PIR_SPEED_THRESHOLD * tick
    for prev, cur in moves:
        if prev is None:
            continue
        dx = cur.x - prev.x
        dy = cur.y - prev.y
        dz = cur.z - prev.z
        if dx * dx + dy * dy + dz * dz <= threshold * threshold:
            continue
        if not _in_cone(sensor, cur):
            continue
        if miss_prob > 0.0 and rng.random() < miss_prob:
            continue
        return True
    return False


def us_model(sensor: SensorSpec, positions: Sequence[Point3]) -> Optional[float]:
    """Distance to the nearest occupant in the cone and range, else None.

    Ultrasonic ranging sees stationary targets, which is exactly why it
    guards the desk zone.
    """
    best = None
    for pos in positions:
        d = sensor.position.distance_to(pos)
        if d > sensor.max_range:
            continue
        if not _in_cone(sensor, pos):
            continue
        if best is None or d < best:
            best = d
    return best


def ble_model(receiver: SensorSpec, beacon_pos: Point3, params: FusionParams,
              rng: random.Random, sigma_db: float) -> float:
    """RSSI in dBm heard by the receiver for a beacon at ``beacon_pos``."""
    rssi = distance_to_rssi(receiver.position.distance_to(beacon_pos), params)
    if sigma_db > 0.0:
        rssi += rng.gauss(0.0, sigma_db)
    return min(0.0, max(-120.0, rssi))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class Timeline:
    """Chronological record of everything a run produced."""

    scenario_name: str
    start_time: float
    end_time: float
    tick: float
    probe_names: Tuple[str, ...]
    events: List[SensorEvent] = field(default_factory=list)
    snapshots: List[OccupancySnapshot] = field(default_factory=list)
    commands: List[LampCommand] = field(default_factory=list)
    probe_samples: List[Tuple[float, Tuple[float, ...]]] = field(default_factory=list)
    dose_checkpoints: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    lamp_intervals: LampOnIntervals = field(default_factory=dict)


@dataclass(frozen=True)
class SafetyViolation:
    timestamp: float
    occupant_id: str
    lamp_id: str
    received_irradiance: float


@dataclass(frozen=True)
class SafetyReport:
    """Zero-exposure audit: pass verdict iff no violation was observed."""

    violations: Tuple[SafetyViolation, ...]
    violation_count: int
    total_occupant_dose: Dict[str, float]

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass
class SimulationResult:
    scenario: Scenario
    timeline: Timeline
    safety: SafetyReport
    dose_grid: DoseGrid


# ---------------------------------------------------------------------------
# safety accounting
# ---------------------------------------------------------------------------

def _box_entry_frac(pa: Point3, pb: Point3, room: RoomModel) -> float:
    """Segment fraction where pa->pb first enters the room box (slab clip).

    Assumes pb is inside; falls back to 0.0 (the conservative, earliest
    possible entry) for degenerate geometry.
    """
    frac = 0.0
    for a, b, lo, hi in ((pa.x, pb.x, 0.0, room.width),
                         (pa.y, pb.y, 0.0, room.length),
                         (pa.z, pb.z, 0.0, room.ceiling_height)):
        d = b - a
        if a < lo:
            if d <= 0.0:
                return 0.0
            frac = max(frac, (lo - a) / d)
        elif a > hi:
            if d >= 0.0:
                return 0.0
            frac = max(frac, (hi - a) / d)
    return min(frac, 1.0)


def _circle_cross_frac(pa: Point3, pb: Point3, center: Point3, radius: float,
                       entering: bool) -> float:
    """Fraction where the horizontal segment pa->pb crosses the circle."""
    dx, dy = pb.x - pa.x, pb.y - pa.y
    fx, fy = pa.x - center.x, pa.y - center.y
    a = dx * dx + dy * dy
    if a == 0.0:
        return 0.0 if entering else 1.0
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 0.0 if entering else 1.0
    root = math.sqrt(disc)
    s = (-b - root) / (2.0 * a) if entering else (-b + root) / (2.0 * a)
    return min(max(s, 0.0), 1.0)


class _SafetyAccumulator:
    """Interval-based exposure audit shared by the engine and safety_check.

    Each observation covers one tick [t, t+tick) over which the lamp state
    is constant. Room and zone entries are located geometrically on the
    movement segment, so the audit clock starts at the true crossing
    instant rather than the first tick that sampled the occupant inside.
    A lamp-on overlap is a violation only past ``reaction_deadline`` after
    room entry (when detection first became possible). Dose integrates
    all downward-lamp irradiance at chest height while inside, no grace.
    """

    def __init__(self, room: RoomModel, policy: CyclePolicy,
                 occupant_ids: Sequence[str], tick: float):
        self.room = room
        self.deadline = policy.reaction_deadline
        self.tick = tick
        self.ceiling = {l.id: l for l in room.lamps if l.tier is LampTier.CEILING}
        self.desk = {l.id: l for l in room.lamps if l.tier is LampTier.DESK}
        self.desk_zone = LampRoster.for_room(room).desk_lamp_zone
        self.zones = {z.desk_id: z for z in room.desk_zones}
        self.entered_at: Dict[str, Optional[float]] = {o: None for o in occupant_ids}
        self.dose: Dict[str, float] = {o: 0.0 for o in occupant_ids}
        self.violations: List[SafetyViolation] = []
        self.violation_count = 0

    def observe(self, t: float, occupant_id: str,
                pos_a: Point3, inside_a: bool,
                pos_b: Point3, inside_b: bool,
                on_lamps: Dict[str, LampSpec]) -> None:
        tick = self.tick
        if not inside_a and not inside_b:
            self.entered_at[occupant_id] = None
            return
        if inside_a:
            if self.entered_at[occupant_id] is None:
                self.entered_at[occupant_id] = t
        else:
            self.entered_at[occupant_id] = \
                t + _box_entry_frac(pos_a, pos_b, self.room) * tick
        entered = self.entered_at[occupant_id]
        # all sub-tick arithmetic runs on offsets from t: at epoch magnitudes
        # (t + tick) - t does not round back to tick, and that quantization
        # error would otherwise accumulate into the dose every single tick
        entered_off = entered - t            # negative once entry is past
        inside_off = max(0.0, entered_off)
        if inside_off >= tick:
            return
        eval_pos = pos_a if inside_a else pos_b
        chest = Point3(eval_pos.x, eval_pos.y, CHEST_HEIGHT)

        if on_lamps:
            downward_on = [l for l in on_lamps.values() if l.emits_downward]
            if downward_on:
                self.dose[occupant_id] += irradiance_at_point(downward_on, chest) \
                    * (tick - inside_off)

        overdue_off = entered_off + self.deadline
        violation_off = max(inside_off, overdue_off)
        if violation_off < tick - 1e-12:
            for lamp_id, lamp in self.ceiling.items():
                if lamp_id in on_lamps:
                    self._record(t + violation_off, occupant_id, lamp_id,
                                 irradiance_at_point([lamp], chest))

        for lamp_id, zone_id in self.desk_zone.items():
            if lamp_id not in on_lamps:
                continue
            zone = self.zones[zone_id]
            in_a = inside_a and (zone.center.horizontal_distance_to(pos_a)
                                 <= zone.exclusion_radius)
            in_b = inside_b and (zone.center.horizontal_distance_to(pos_b)
                                 <= zone.exclusion_radius)
            if not in_a and not in_b:
                continue
            zone_start_off = 0.0 if in_a else tick * _circle_cross_frac(
                pos_a, pos_b, zone.center, zone.exclusion_radius, entering=True)
            zone_end_off = tick if in_b else tick * _circle_cross_frac(
                pos_a, pos_b, zone.center, zone.exclusion_radius, entering=False)
            violation_off = max(zone_start_off, inside_off, overdue_off)
            if violation_off < zone_end_off - 1e-12:
                self._record(t + violation_off, occupant_id, lamp_id,
                             irradiance_at_point([self.desk[lamp_id]], chest))

    def _record(self, now: float, occupant_id: str, lamp_id: str,
                irradiance: float) -> None:
        self.violation_count += 1
        if len(self.violations) < MAX_RECORDED_VIOLATIONS:
            self.violations.append(SafetyViolation(
                timestamp=now, occupant_id=occupant_id, lamp_id=lamp_id,
                received_irradiance=irradiance))

    def report(self) -> SafetyReport:
        return SafetyReport(violations=tuple(self.violations),
                            violation_count=self.violation_count,
                            total_occupant_dose=dict(self.dose))


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

def _probe_points(room: RoomModel) -> List[Tuple[str, Point3]]:
    probes = [("room_center", Point3(room.width / 2.0, room.length / 2.0,
                                     PROBE_HEIGHT))]
    for zone in room.desk_zones:
        if zone.has_desk_lamp:
            probes.append((zone.desk_id,
                           Point3(zone.center.x, zone.center.y, PROBE_HEIGHT)))
    return probes


def simulate(scenario: Scenario) -> SimulationResult:
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError(problems)

    room = scenario.room
    policy = scenario.policy
    tick = scenario.tick
    start = scenario.start_time
    n_ticks = int(round(scenario.duration / tick))
    end = start + n_ticks * tick
    rng = random.Random(scenario.seed)
    noise = scenario.noise

    fusion = OccupancyFusion(room, scenario.fusion)
    state = ControllerState.initial(
        room, policy, start,
        assume_vacant_since=start if scenario.assume_vacant_at_start else None)

    sensors = sorted(room.sensors, key=lambda s: s.id)
    pir_sensors = [s for s in sensors if s.kind is SensorKind.PIR]
    us_sensors = [s for s in sensors if s.kind is SensorKind.ULTRASONIC]
    ble_sensors = [s for s in sensors if s.kind is SensorKind.BLE_RECEIVER]
    lamps_by_id = {l.id: l for l in room.lamps}

    # independent false-positive Poisson clock per PIR sensor
    fp_rate = noise.false_positive_rate_per_hour / 3600.0
    next_fp: Dict[str, float] = {}
    if fp_rate > 0.0:
        for s in pir_sensors:
            next_fp[s.id] = start + rng.expovariate(fp_rate)

    # hardware output latches (hold_time > 0 keeps re-emitting)
    latch_until: Dict[str, float] = {}
    latch_payload: Dict[str, Payload] = {}

    trackers = [_OccupantTracker(o) for o in scenario.occupants]
    beacon_indices = [i for i, tr in enumerate(trackers)
                      if tr.script.carries_beacon]

    probes = _probe_points(room)
    probe_positions = [p for _, p in probes]
    timeline = Timeline(scenario_name=scenario.name, start_time=start,
                        end_time=end, tick=tick,
                        probe_names=tuple(name for name, _ in probes))
    grid = DoseGrid.for_room(room)
    cell_centers = grid.cell_centers
    dose = grid.accumulated_dose
    safety = _SafetyAccumulator(room, policy,
                                [o.occupant_id for o in scenario.occupants], tick)

    force_on = {lamp: tuple((start + s, start + e) for s, e in spans)
                for lamp, spans in scenario.unsafe_force_on.items() if spans}

    controller_on: Dict[str, bool] = {}
    effective_on: Dict[str, LampSpec] = {}
    on_since: Dict[str, float] = {}
    cell_field: Optional[np.ndarray] = None
    probe_values: Tuple[float, ...] = tuple(0.0 for _ in probes)
    next_advert = start
    next_checkpoint = start + DOSE_CHECKPOINT_EVERY
    half_tick = tick * 0.5

    def refresh_field() -> None:
        nonlocal cell_field, probe_values
        on_lamps = list(effective_on.values())
        if on_lamps:
            flat = np.array([irradiance_at_point(on_lamps, c) for c in cell_centers])
            cell_field = flat.reshape(grid.rows, grid.cols)
        else:
            cell_field = None
        probe_values = tuple(
            irradiance_at_point(on_lamps, p) if on_lamps else 0.0
            for p in probe_positions)

    def sync_effective(now: float) -> None:
        desired = {lamp_id for lamp_id, on in controller_on.items() if on}
        for lamp_id, spans in force_on.items():
            for s, e in spans:
                if s <= now < e:
                    desired.add(lamp_id)
                    break
        if desired != set(effective_on):
            for lamp_id in list(effective_on):
                if lamp_id not in desired:
                    del effective_on[lamp_id]
                    timeline.lamp_intervals.setdefault(lamp_id, []).append(
                        (on_since.pop(lamp_id), now))
            for lamp_id in desired:
                if lamp_id not in effective_on:
                    effective_on[lamp_id] = lamps_by_id[lamp_id]
                    on_since[lamp_id] = now
            refresh_field()

    # occupant scripts run on scenario-relative clocks; everything else
    # (fusion, controller, logs) uses absolute epoch seconds
    positions: List[Point3] = []
    insides: List[bool] = []
    for tr in trackers:
        pos, flag = tr.at(0.0)
        positions.append(pos)
        insides.append(flag or room.contains(pos))
    prev_positions: List[Optional[Point3]] = [None] * len(trackers)

    for k in range(n_ticks):
        t = start + k * tick

        # -- occupant kinematics -------------------------------------------
        moves_inside: List[Tuple[Optional[Point3], Point3]] = []
        inside_positions: List[Point3] = []
        for i, pos in enumerate(positions):
            if insides[i]:
                inside_positions.append(pos)
                moves_inside.append((prev_positions[i], pos))

        # -- sensor models, in sorted-sensor order --------------------------
        advert_due = t >= next_advert - 1e-9
        if advert_due:
            next_advert += BLE_ADVERT_PERIOD
        for sensor in sensors:
            kind = sensor.kind
            payload: Optional[Payload] = None
            if kind is SensorKind.PIR:
                fired = bool(moves_inside) and pir_model(
                    sensor, moves_inside, tick, rng, noise.pir_miss_prob)
                if sensor.id in next_fp:
                    while next_fp[sensor.id] <= t:
                        fired = True
                        next_fp[sensor.id] += rng.expovariate(fp_rate)
                if fired:
                    payload = PirMotion()
            elif kind is SensorKind.ULTRASONIC:
                distance = us_model(sensor, inside_positions) \
                    if inside_positions else None
                if distance is not None:
                    payload = UsPresence(distance=distance)
            elif kind is SensorKind.BLE_RECEIVER and advert_due:
                for idx in beacon_indices:
                    rssi = ble_model(sensor, positions[idx], scenario.fusion,
                                     rng, noise.rssi_sigma_db)
                    event = SensorEvent(
                        timestamp=t, source=sensor.id,
                        payload=BleAdvert(
                            beacon_id=trackers[idx].script.occupant_id,
                            rssi=rssi))
                    fusion.ingest(event)
                    timeline.events.append(event)
                continue
            else:
                continue

            if payload is None and sensor.hold_time > 0.0:
                if t < latch_until.get(sensor.id, -math.inf):
                    payload = latch_payload.get(sensor.id)
            elif payload is not None and sensor.hold_time > 0.0:
                latch_until[sensor.id] = t + sensor.hold_time
                latch_payload[sensor.id] = payload
            if payload is not None:
                event = SensorEvent(timestamp=t, source=sensor.id, payload=payload)
                fusion.ingest(event)
                timeline.events.append(event)

        # -- fuse, decide, actuate ------------------------------------------
        snapshot = fusion.snapshot(t)
        timeline.snapshots.append(snapshot)
        state, commands = step(state, snapshot, t, policy)
        if commands:
            timeline.commands.extend(commands)
            for cmd in commands:
                controller_on[cmd.lamp_id] = cmd.action is LampAction.TURN_ON
        sync_effective(t)

        # -- accounting against the post-command lamp state -----------------
        timeline.probe_samples.append((t, probe_values))
        if t + half_tick >= next_checkpoint:
            timeline.dose_checkpoints.append((t, dose.copy()))
            next_checkpoint += DOSE_CHECKPOINT_EVERY
        if cell_field is not None:
            dose += cell_field * tick
        rel_next = (k + 1) * tick
        next_positions: List[Point3] = []
        next_insides: List[bool] = []
        for tr in trackers:
            pos, flag = tr.at(rel_next)
            next_positions.append(pos)
            next_insides.append(flag or room.contains(pos))
        for i, tr in enumerate(trackers):
            safety.observe(t, tr.script.occupant_id,
                           positions[i], insides[i],
                           next_positions[i], next_insides[i], effective_on)
        prev_positions = positions
        positions = next_positions
        insides = next_insides

    # close open intervals and take the final checkpoint
    for lamp_id, since in sorted(on_since.items()):
        timeline.lamp_intervals.setdefault(lamp_id, []).append((since, end))
    timeline.dose_checkpoints.append((end, dose.copy()))

    return SimulationResult(scenario=scenario, timeline=timeline,
                            safety=safety.report(), dose_grid=grid)


# ---------------------------------------------------------------------------
# timeline serialization
# ---------------------------------------------------------------------------

def write_probe_log(timeline: Timeline, stream) -> None:
    """Probe irradiance per tick as CSV, one column per probe, full float
    precision so identical runs serialize byte for byte."""
    header = "timestamp_s," + ",".join(f"{name}_w_m2"
                                       for name in timeline.probe_names)
    stream.write(header + "\n")
    for t, values in timeline.probe_samples:
        stream.write(f"{t!r}," + ",".join(repr(v) for v in values) + "\n")


DOSE_GRID_HEADER = "row,col,x_m,y_m,dose_j_m2"


def write_dose_grid_csv(grid: DoseGrid, stream) -> None:
    stream.write(DOSE_GRID_HEADER + "\n")
    for r in range(grid.rows):
        for c in range(grid.cols):
            center = grid.cell_center(r, c)
            dose = float(grid.accumulated_dose[r, c])
            stream.write(f"{r},{c},{center.x!r},{center.y!r},{dose!r}\n")


# ---------------------------------------------------------------------------
# independent safety audit
# ---------------------------------------------------------------------------

def safety_check(timeline: Timeline, scenario: Scenario) -> SafetyReport:
    """Re-derive the safety report from a timeline's command record.

    Replays lamp states tick by tick from the logged commands (plus any
    forced-on test windows) against the scripted occupant motion; agrees
    with the report simulate() produced for the same run.
    """
    room = scenario.room
    tick = scenario.tick
    start = scenario.start_time
    n_ticks = int(round(scenario.duration / tick))
    lamps_by_id = {l.id: l for l in room.lamps}
    trackers = [_OccupantTracker(o) for o in scenario.occupants]
    safety = _SafetyAccumulator(room, scenario.policy,
                                [o.occupant_id for o in scenario.occupants], tick)
    commands = timeline.commands
    force_on = {lamp: tuple((start + s, start + e) for s, e in spans)
                for lamp, spans in scenario.unsafe_force_on.items() if spans}
    positions = []
    insides = []
    for tr in trackers:
        pos, flag = tr.at(0.0)
        positions.append(pos)
        insides.append(flag or room.contains(pos))
    ci = 0
    controller_on: Dict[str, bool] = {}
    for k in range(n_ticks):
        t = start + k * tick
        while ci < len(commands) and commands[ci].timestamp <= t:
            cmd = commands[ci]
            controller_on[cmd.lamp_id] = cmd.action is LampAction.TURN_ON
            ci += 1
        on_lamps = {lamp_id: lamps_by_id[lamp_id]
                    for lamp_id, on in controller_on.items() if on}
        for lamp_id, spans in force_on.items():
            for s, e in spans:
                if s <= t < e:
                    on_lamps[lamp_id] = lamps_by_id[lamp_id]
                    break
        rel_next = (k + 1) * tick
        next_positions = []
        next_insides = []
        for tr in trackers:
            pos, flag = tr.at(rel_next)
            next_positions.append(pos)
            next_insides.append(flag or room.contains(pos))
        for i, tr in enumerate(trackers):
            safety.observe(t, tr.script.occupant_id,
                           positions[i], insides[i],
                           next_positions[i], next_insides[i], on_lamps)
        positions = next_positions
        insides = next_insides
    return safety.report()
