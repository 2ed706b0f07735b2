"""Train and commuter agents, their state machines, and the simulation world.

Boarding and alighting happen while a train dwells at a platform; boarding
is resolved at the departure instant, FIFO by platform arrival, up to the
train's remaining capacity.  Commuters left behind by an eligible departure
are counted as missed-train events.  Station occupancy counts everyone who
has tapped in or alighted and not yet boarded or tapped out.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .demand import Journeys
from .engine import Engine, Event, RngStream, sample_truncated_normal
from .errors import IllegalTransitionError, ValidationError
from .network import (
    DIRECTIONS,
    DWELL_S_INTERCHANGE,
    DWELL_S_REGULAR,
    Network,
    Station,
    platform_id,
    sample_walk_time,
)
from .routing import Route, RouteChoiceTable, sample_route

if TYPE_CHECKING:  # pragma: no cover
    from .simulation import SimConfig

# Event kinds
SPAWN_TRAIN = "SpawnTrain"
TRAIN_ARRIVE = "TrainArrive"
TRAIN_DEPART = "TrainDepart"
COMMUTER_TAP_IN = "CommuterTapIn"
COMMUTER_WALK_DONE = "CommuterWalkDone"

# Commuter states
WALKING_TO_PLATFORM = "WalkingToPlatform"
WAITING_ON_PLATFORM = "WaitingOnPlatform"
ON_TRAIN = "OnTrain"
WALKING_TRANSFER = "WalkingTransfer"
WALKING_TO_GATE = "WalkingToGate"
DEPARTED = "Departed"
REJECTED = "Rejected"

# Train states
DWELLING = "Dwelling"
MOVING = "Moving"
RETIRED = "Retired"


@dataclass(frozen=True)
class HeadwayParams:
    mean_s: float
    sd_s: float
    lo_s: float
    hi_s: float


@dataclass(frozen=True)
class DispatchSchedule:
    """Dispatch parameters applied to every line and direction."""

    first_train_s: int = 19_800  # 05:30
    last_train_s: int = 84_600  # 23:30
    peak_windows: tuple[tuple[int, int], ...] = (
        (27_000, 34_200),  # 07:30-09:30
        (63_000, 70_200),  # 17:30-19:30
    )
    peak: HeadwayParams = HeadwayParams(180.0, 45.0, 90.0, 270.0)
    offpeak: HeadwayParams = HeadwayParams(360.0, 45.0, 270.0, 450.0)

    def __post_init__(self):
        if self.first_train_s > self.last_train_s:
            raise ValidationError("first_train after last_train")
        windows = sorted(self.peak_windows)
        for (a1, b1), (a2, b2) in zip(windows, windows[1:]):
            if a2 < b1:
                raise ValidationError("peak windows overlap")

    def headway_params(self, t: int) -> HeadwayParams:
        for lo, hi in self.peak_windows:
            if lo <= t < hi:
                return self.peak
        return self.offpeak

    def expanded(self) -> "DispatchSchedule":
        """Scenario variant: peak dispatch widened to 6-11am and 4-9pm."""
        return DispatchSchedule(
            self.first_train_s,
            self.last_train_s,
            ((21_600, 39_600), (57_600, 75_600)),
            self.peak,
            self.offpeak,
        )


def generate_trains(schedule: DispatchSchedule, stream: RngStream) -> list[int]:
    """Spawn times for one line and direction: the first train, then
    cumulative truncated-normal headways until the last-train time.  The
    headway distribution is the one for the window containing the previous
    spawn time; the total count is therefore not fixed."""
    times = [schedule.first_train_s]
    t = schedule.first_train_s
    while True:
        params = schedule.headway_params(t)
        h = sample_truncated_normal(stream, params.mean_s, params.sd_s, params.lo_s, params.hi_s)
        t = t + int(round(h))
        if t > schedule.last_train_s:
            return times
        times.append(t)


def dwell_time(station: Station, stream: RngStream) -> float:
    """Uniform dwell: 55-65 s at interchanges, 30-40 s elsewhere."""
    lo, hi = DWELL_S_INTERCHANGE if station.is_interchange else DWELL_S_REGULAR
    return float(stream.rng.uniform(lo, hi))


class TrainAgent:
    __slots__ = (
        "id", "line_id", "direction", "capacity", "platform_seq",
        "pos_ix", "onboard_by_alight", "onboard_count", "state",
    )

    def __init__(self, train_id: int, line_id: str, direction: str,
                 capacity: int, platform_seq: tuple[str, ...]):
        self.id = train_id
        self.line_id = line_id
        self.direction = direction
        self.capacity = capacity
        self.platform_seq = platform_seq
        self.pos_ix = 0
        self.onboard_by_alight: dict[str, list["CommuterAgent"]] = {}
        self.onboard_count = 0
        self.state = DWELLING


class CommuterAgent:
    __slots__ = (
        "id", "origin", "destination", "legs", "leg_ix", "state",
        "missed_count", "tap_in_actual", "tap_out_actual",
        "platform_arrival_s", "board_s", "walk_s", "wait_s", "onboard_s",
    )

    def __init__(self, commuter_id: int, origin: str, destination: str,
                 legs: tuple[tuple[str, str], ...], tap_in_s: int):
        self.id = commuter_id
        self.origin = origin
        self.destination = destination
        self.legs = legs
        self.leg_ix = 0
        self.state = WALKING_TO_PLATFORM
        self.missed_count = 0
        self.tap_in_actual = tap_in_s
        self.tap_out_actual = -1
        self.platform_arrival_s = -1
        self.board_s = -1
        self.walk_s = 0
        self.wait_s = 0
        self.onboard_s = 0


@dataclass
class StationOccupancy:
    station_id: str
    max_today: int
    series: list[tuple[int, int]] = field(default_factory=list)


class SimWorld:
    """All mutable simulation state for one replication; single-threaded."""

    def __init__(self, network: Network, config: "SimConfig", journeys: Journeys):
        self.network = network
        self.config = config
        self.journeys = journeys
        self.engine = Engine(config.horizon_s, handler=self._handle)
        self.trace: list[str] = []
        if config.trace_events:
            self.engine.trace_hook = self._trace_event

        self.walk_stream = RngStream(config.seed, "walk")
        self.dwell_stream = RngStream(config.seed, "dwell")
        self.route_stream = RngStream(config.seed, "route")

        # Platform order along each line+direction, for route sanity checks.
        self._platform_order: dict[str, int] = {}
        self._line_platforms: dict[tuple[str, str], tuple[str, ...]] = {}
        for line in network.lines.values():
            for direction in DIRECTIONS:
                seq = tuple(
                    platform_id(s, line.id, direction) for s in line.stations(direction)
                )
                self._line_platforms[(line.id, direction)] = seq
                for i, pid in enumerate(seq):
                    self._platform_order[pid] = i

        self.queues: dict[str, deque[CommuterAgent]] = {p: deque() for p in network.platforms}
        self.occupancy: dict[str, int] = {s: 0 for s in network.stations}
        self.occ_max: dict[str, int] = {s: 0 for s in network.stations}
        self.occ_series: dict[str, list[tuple[int, int]]] = {s: [] for s in network.stations}
        self._occ_next_sample: dict[str, int] = {s: 0 for s in network.stations}
        self.station_missed: dict[str, int] = {s: 0 for s in network.stations}

        self.commuters: list[CommuterAgent] = []
        self.durations: dict[tuple[str, str], list[int]] = {}
        self.created = 0
        self.rejected = 0
        self.departed = 0
        self.missed_events = 0
        self.trains_dispatched = 0
        self._route_cache: dict[tuple[str, str], Route] = {}
        self._ride_total_cache: dict[tuple[str, ...], int] = {}

    # -- setup ---------------------------------------------------------------

    def schedule_all(self) -> None:
        schedule = self.config.dispatch
        for lid in sorted(self.network.lines):
            for direction in DIRECTIONS:
                stream = RngStream(self.config.seed, f"dispatch:{lid}:{direction}")
                for t in generate_trains(schedule, stream):
                    self.engine.schedule_at(t, SPAWN_TRAIN, payload=(lid, direction))
        tap = self.journeys.tap_in_s
        for i in range(len(self.journeys)):
            self.engine.schedule_at(int(tap[i]), COMMUTER_TAP_IN, payload=i)

    def run(self) -> None:
        self.schedule_all()
        self.engine.run()

    # -- event dispatch --------------------------------------------------------

    def _handle(self, event: Event) -> None:
        kind = event.kind
        if kind == TRAIN_ARRIVE:
            self._on_train_arrive(event.target, event.payload)
        elif kind == TRAIN_DEPART:
            self._on_train_depart(event.target, event.payload)
        elif kind == COMMUTER_WALK_DONE:
            self._on_walk_done(event.target)
        elif kind == COMMUTER_TAP_IN:
            self._on_tap_in(event.payload)
        elif kind == SPAWN_TRAIN:
            self._on_spawn_train(event.payload)
        else:
            raise IllegalTransitionError(f"unknown event kind {kind!r}")

    def _trace_event(self, event: Event) -> None:
        target = event.target
        agent = getattr(target, "id", "") if target is not None else ""
        where = event.payload if isinstance(event.payload, (str, int)) else ""
        self.trace.append(f"{event.fire_time},{event.kind},{agent},{where}")

    # -- trains ----------------------------------------------------------------

    def _on_spawn_train(self, payload: tuple[str, str]) -> None:
        lid, direction = payload
        line = self.network.lines[lid]
        capacity = max(1, int(round(line.capacity * self.config.capacity_scale)))
        train = TrainAgent(
            self.trains_dispatched, lid, direction, capacity,
            self._line_platforms[(lid, direction)],
        )
        self.trains_dispatched += 1
        self._arrive(train, 0)

    def _on_train_arrive(self, train: TrainAgent, ix: int) -> None:
        self._arrive(train, ix)

    def _arrive(self, train: TrainAgent, ix: int) -> None:
        train.pos_ix = ix
        train.state = DWELLING
        pid = train.platform_seq[ix]
        station = self.network.platforms[pid].station_id
        alighting = train.onboard_by_alight.pop(pid, None)
        if alighting:
            train.onboard_count -= len(alighting)
            for c in alighting:
                self._alight(c, pid, station)
        if ix == len(train.platform_seq) - 1:
            if train.onboard_count != 0:
                raise IllegalTransitionError(
                    f"train {train.id} retired with {train.onboard_count} aboard"
                )
            train.state = RETIRED
            return
        d = dwell_time(self.network.stations[station], self.dwell_stream)
        self.engine.schedule_at(
            self.engine.now + int(round(d)), TRAIN_DEPART, target=train, payload=ix
        )

    def _on_train_depart(self, train: TrainAgent, ix: int) -> None:
        pid = train.platform_seq[ix]
        self.board(train, pid)
        train.state = MOVING
        edge = self.network.edge_out[pid]
        self.engine.schedule_at(
            self.engine.now + edge.ride_time_s, TRAIN_ARRIVE, target=train, payload=ix + 1
        )

    def board(self, train: TrainAgent, pid: str) -> tuple[list[CommuterAgent], list[CommuterAgent]]:
        """Board waiting commuters FIFO up to capacity; the rest miss this
        train.  Returns (boarded, missed)."""
        queue = self.queues[pid]
        station = self.network.platforms[pid].station_id
        now = self.engine.now
        free = train.capacity - train.onboard_count
        n_board = min(free, len(queue))
        boarded = []
        for _ in range(n_board):
            c = queue.popleft()
            c.state = ON_TRAIN
            c.wait_s += now - c.platform_arrival_s
            c.board_s = now
            alight = c.legs[c.leg_ix][1]
            train.onboard_by_alight.setdefault(alight, []).append(c)
            boarded.append(c)
        train.onboard_count += n_board
        if train.onboard_count > train.capacity:
            raise IllegalTransitionError(f"train {train.id} over capacity")
        missed = list(queue)
        for c in missed:
            c.missed_count += 1
        self.missed_events += len(missed)
        self.station_missed[station] += len(missed)
        if n_board:
            self._occ_change(station, -n_board)
        return boarded, missed

    # -- commuters ---------------------------------------------------------------

    def _route_for(self, origin: str, destination: str) -> Route:
        table = self.config.route_table
        if table is not None:
            entry = table.get(origin, destination)
            if entry is not None:
                return sample_route(entry, self.route_stream)
        cached = self._route_cache.get((origin, destination))
        if cached is None:
            cached = self.network.shortest_route(origin, destination)
            self._check_route(cached)
            self._route_cache[(origin, destination)] = cached
        return cached

    def _check_route(self, route: Route) -> None:
        for board, alight in route.legs():
            if board not in self._platform_order or alight not in self._platform_order:
                raise ValidationError(f"route uses unknown platform: {board} -> {alight}")
            if (
                board.split(":")[1:] != alight.split(":")[1:]
                or self._platform_order[board] >= self._platform_order[alight]
            ):
                raise ValidationError(f"route leg {board} -> {alight} is not down-line")

    def gate_tap_in(self, station: Station) -> bool:
        """Apply the crowdedness limit: occupancy at or above psi (3*psi at
        interchanges) rejects the tap-in."""
        psi = self.config.psi
        limit = 3 * psi if station.is_interchange else psi
        if self.occupancy[station.id] >= limit:
            return False
        self._occ_change(station.id, +1)
        return True

    def _on_tap_in(self, index: int) -> None:
        j = self.journeys
        origin = j.station_ids[j.origin_codes[index]]
        destination = j.station_ids[j.dest_codes[index]]
        self.created += 1
        station = self.network.stations[origin]
        if not self.gate_tap_in(station):
            self.rejected += 1
            return
        route = self._route_for(origin, destination)
        if self.config.route_table is not None:
            self._check_route(route)
        c = CommuterAgent(
            len(self.commuters), origin, destination, tuple(route.legs()), self.engine.now
        )
        self.commuters.append(c)
        self._walk(c, self.network.walk_times.gate_mean(c.legs[0][0]))

    def _walk(self, c: CommuterAgent, mean_s: float) -> None:
        w = int(round(sample_walk_time(
            self.walk_stream, mean_s, self.config.walk_sd_fraction
        )))
        c.walk_s += w
        self.engine.schedule_at(self.engine.now + w, COMMUTER_WALK_DONE, target=c)

    def _on_walk_done(self, c: CommuterAgent) -> None:
        now = self.engine.now
        if c.state in (WALKING_TO_PLATFORM, WALKING_TRANSFER):
            c.state = WAITING_ON_PLATFORM
            c.platform_arrival_s = now
            self.queues[c.legs[c.leg_ix][0]].append(c)
        elif c.state == WALKING_TO_GATE:
            c.state = DEPARTED
            c.tap_out_actual = now
            self._occ_change(c.destination, -1)
            self.departed += 1
            duration = now - c.tap_in_actual
            self.durations.setdefault((c.origin, c.destination), []).append(duration)
        else:
            raise IllegalTransitionError(f"walk done in state {c.state}")

    def _alight(self, c: CommuterAgent, pid: str, station: str) -> None:
        if c.state != ON_TRAIN:
            raise IllegalTransitionError(f"alight in state {c.state}")
        now = self.engine.now
        c.onboard_s += now - c.board_s
        self._occ_change(station, +1)
        if c.leg_ix == len(c.legs) - 1:
            c.state = WALKING_TO_GATE
            self._walk(c, self.network.walk_times.gate_mean(pid))
        else:
            c.leg_ix += 1
            c.state = WALKING_TRANSFER
            self._walk(c, self.network.walk_times.transfer_mean(pid, c.legs[c.leg_ix][0]))

    # -- occupancy -----------------------------------------------------------------

    def _occ_change(self, station: str, delta: int) -> None:
        cur = self.occupancy[station] + delta
        if cur < 0:
            raise IllegalTransitionError(f"negative occupancy at {station}")
        self.occupancy[station] = cur
        if cur > self.occ_max[station]:
            self.occ_max[station] = cur
        now = self.engine.now
        if now >= self._occ_next_sample[station]:
            self.occ_series[station].append((now, cur))
            self._occ_next_sample[station] = now + self.config.occupancy_sample_period_s

    # -- end-of-run bookkeeping -------------------------------------------------------

    def ride_total_s(self, c: CommuterAgent) -> int:
        """Pure ride time along the commuter's legs (no dwells)."""
        key = tuple(p for leg in c.legs for p in leg)
        total = self._ride_total_cache.get(key)
        if total is None:
            total = 0
            for board, alight in c.legs:
                pid = board
                while pid != alight:
                    edge = self.network.edge_out[pid]
                    total += edge.ride_time_s
                    pid = edge.to_platform
            self._ride_total_cache[key] = total
        return total

    def finalize(self) -> None:
        """Conservation checks; raises if the books do not balance."""
        admitted = len(self.commuters)
        if self.created != admitted + self.rejected:
            raise IllegalTransitionError("tap-in conservation violated")
        stranded = sum(1 for c in self.commuters if c.state != DEPARTED)
        if admitted != self.departed + stranded:
            raise IllegalTransitionError("commuter conservation violated")
        if self.config.track_components:
            for c in self.commuters:
                if c.state != DEPARTED:
                    continue
                duration = c.tap_out_actual - c.tap_in_actual
                if c.walk_s + c.wait_s + c.onboard_s != duration:
                    raise IllegalTransitionError(
                        f"duration decomposition broken for commuter {c.id}"
                    )
                if c.onboard_s < self.ride_total_s(c):
                    raise IllegalTransitionError(
                        f"onboard time below pure ride time for commuter {c.id}"
                    )

    @property
    def stranded(self) -> int:
        return sum(1 for c in self.commuters if c.state != DEPARTED)

    @property
    def commuters_missed(self) -> int:
        return sum(1 for c in self.commuters if c.missed_count > 0)

    def station_occupancy(self) -> dict[str, StationOccupancy]:
        return {
            s: StationOccupancy(s, self.occ_max[s], self.occ_series[s])
            for s in sorted(self.network.stations)
        }
