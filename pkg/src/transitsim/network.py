"""Static transit world: stations, lines, platforms, directed ride edges,
and walk-time lookup.

File format is a CSV trio (stations.csv, edges.csv, walktimes.csv), plus an
optional lines.csv carrying the line kind (MRT/LRT); lines default to MRT
when the file is absent.  Directions are "up" (the line's listed station
order) and "down" (its reverse); every (station, line) pair gets exactly
two platforms, one per direction.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .engine import RngStream, sample_truncated_normal
from .errors import NoPathError, ParseError, ValidationError
from .routing import Route

MRT = "MRT"
LRT = "LRT"
TRAIN_CAPACITY = {MRT: 1920, LRT: 105}

# Dwell ranges in seconds; midpoints feed deterministic route costing.
DWELL_S_INTERCHANGE = (55, 65)
DWELL_S_REGULAR = (30, 40)

DIRECTIONS = ("up", "down")


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    line_ids: frozenset[str]

    @property
    def is_interchange(self) -> bool:
        return len(self.line_ids) >= 2


@dataclass(frozen=True)
class Platform:
    id: str
    station_id: str
    line_id: str
    direction: str


@dataclass(frozen=True)
class Edge:
    from_platform: str
    to_platform: str
    ride_time_s: int


@dataclass(frozen=True)
class Line:
    id: str
    kind: str  # MRT | LRT
    stations_up: tuple[str, ...]  # "down" visits the reverse order

    @property
    def capacity(self) -> int:
        return TRAIN_CAPACITY[self.kind]

    def stations(self, direction: str) -> tuple[str, ...]:
        return self.stations_up if direction == "up" else tuple(reversed(self.stations_up))


def platform_id(station_id: str, line_id: str, direction: str) -> str:
    return f"{station_id}:{line_id}:{direction}"


@dataclass
class WalkTimeTable:
    """Mean walking times; gate entries per platform, transfer entries per
    unordered platform pair within an interchange."""

    gate_s: dict[str, float] = field(default_factory=dict)  # platform -> mean
    transfer_s: dict[tuple[str, str], float] = field(default_factory=dict)
    walk_sd_fraction: float = 0.15  # runtime parameter, not serialized

    def set_transfer(self, a: str, b: str, mean_s: float) -> None:
        self.transfer_s[(a, b)] = mean_s
        self.transfer_s[(b, a)] = mean_s

    def gate_mean(self, platform: str) -> float:
        return self.gate_s[platform]

    def transfer_mean(self, a: str, b: str) -> float:
        return self.transfer_s[(a, b)]


def sample_walk_time(stream: RngStream, mean_s: float, sd_fraction: float = 0.15) -> float:
    """One stochastic walk leg: truncated normal around the mean estimate,
    sd = sd_fraction * mean, truncated to [0.5*mean, 1.5*mean]."""
    if mean_s <= 0:
        raise ValueError(f"walk mean must be positive, got {mean_s}")
    return sample_truncated_normal(
        stream, mean_s, sd_fraction * mean_s, 0.5 * mean_s, 1.5 * mean_s
    )


class Network:
    """Immutable after load; safe to share across replication threads."""

    def __init__(
        self,
        stations: dict[str, Station],
        lines: dict[str, Line],
        walk_times: WalkTimeTable,
        edges: list[Edge],
    ):
        self.stations = stations
        self.lines = lines
        self.walk_times = walk_times
        self.edges = edges
        self.platforms: dict[str, Platform] = {}
        for line in lines.values():
            for direction in DIRECTIONS:
                for sid in line.stations_up:
                    pid = platform_id(sid, line.id, direction)
                    self.platforms[pid] = Platform(pid, sid, line.id, direction)
        # Linear topology: at most one ride edge out of / into a platform.
        self.edge_out: dict[str, Edge] = {}
        self.edge_in: dict[str, Edge] = {}
        for e in edges:
            if e.from_platform in self.edge_out:
                raise ValidationError(f"platform {e.from_platform} has two outgoing edges")
            if e.to_platform in self.edge_in:
                raise ValidationError(f"platform {e.to_platform} has two incoming edges")
            self.edge_out[e.from_platform] = e
            self.edge_in[e.to_platform] = e
        self.station_platforms: dict[str, list[str]] = {s: [] for s in stations}
        for pid in sorted(self.platforms):
            self.station_platforms[self.platforms[pid].station_id].append(pid)
        self._shortest_cache: dict[tuple[str, str], Route] = {}

    # -- counts -------------------------------------------------------------

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def dwell_midpoint_s(self, station_id: str) -> float:
        lo, hi = (
            DWELL_S_INTERCHANGE
            if self.stations[station_id].is_interchange
            else DWELL_S_REGULAR
        )
        return (lo + hi) / 2.0

    # -- route costing ------------------------------------------------------

    def route_from_platforms(self, platforms: Iterable[str]) -> Route:
        """Build a Route (expected time, transfers, hop count) from a
        platform sequence.

        Expected time = sum of ride times + dwell midpoint at each
        departure station + mean transfer walks.  Gate walks are excluded:
        they are common to all candidates of an O-D pair.
        """
        seq = tuple(platforms)
        if len(seq) < 2:
            raise ValueError("route needs at least two platforms")
        total = 0.0
        transfers = 0
        hops = 0
        for a, b in zip(seq, seq[1:]):
            pa, pb = self.platforms[a], self.platforms[b]
            if pa.station_id == pb.station_id and pa.line_id != pb.line_id:
                total += self.walk_times.transfer_mean(a, b)
                transfers += 1
            else:
                edge = self.edge_out.get(a)
                if edge is None or edge.to_platform != b:
                    raise ValidationError(f"no ride edge {a} -> {b}")
                total += self.dwell_midpoint_s(pa.station_id) + edge.ride_time_s
                hops += 1
        return Route(
            platforms=seq,
            transfers=transfers,
            path_distance=hops,
            expected_time_s=total,
        )

    def shortest_route(self, origin: str, destination: str) -> Route:
        """Minimum-expected-time route; ties broken by lexicographic
        platform-id sequence."""
        if origin == destination:
            raise ValueError("origin equals destination")
        for sid in (origin, destination):
            if sid not in self.stations:
                raise ValidationError(f"unknown station {sid!r}")
        cached = self._shortest_cache.get((origin, destination))
        if cached is not None:
            return cached

        # Dijkstra over (platform, arrived_by_ride) with (cost, path) keys;
        # lexicographic path comparison gives the deterministic tie-break.
        heap: list[tuple[float, tuple[str, ...], str, bool]] = []
        for pid in self.station_platforms[origin]:
            heapq.heappush(heap, (0.0, (pid,), pid, False))
        settled: set[tuple[str, bool]] = set()
        while heap:
            cost, path, pid, by_ride = heapq.heappop(heap)
            state = (pid, by_ride)
            if state in settled:
                continue
            settled.add(state)
            platform = self.platforms[pid]
            if by_ride and platform.station_id == destination:
                route = self.route_from_platforms(path)
                self._shortest_cache[(origin, destination)] = route
                return route
            edge = self.edge_out.get(pid)
            if edge is not None:
                w = self.dwell_midpoint_s(platform.station_id) + edge.ride_time_s
                heapq.heappush(
                    heap, (cost + w, path + (edge.to_platform,), edge.to_platform, True)
                )
            if by_ride:  # transfers only after alighting, never back to back
                for other in self.station_platforms[platform.station_id]:
                    if self.platforms[other].line_id == platform.line_id:
                        continue
                    w = self.walk_times.transfer_mean(pid, other)
                    heapq.heappush(heap, (cost + w, path + (other,), other, False))
        raise NoPathError(f"{destination} unreachable from {origin}")

    # -- serialization --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "stations.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["station_id", "name", "line_ids"])
            for sid in sorted(self.stations):
                st = self.stations[sid]
                w.writerow([st.id, st.name, ";".join(sorted(st.line_ids))])
        with open(directory / "edges.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["line_id", "direction", "from_station", "to_station", "ride_time_s"])
            for lid in sorted(self.lines):
                line = self.lines[lid]
                for direction in DIRECTIONS:
                    seq = line.stations(direction)
                    for a, b in zip(seq, seq[1:]):
                        e = self.edge_out[platform_id(a, lid, direction)]
                        w.writerow([lid, direction, a, b, e.ride_time_s])
        with open(directory / "walktimes.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["kind", "station_id", "platform_a", "platform_b", "mean_s"])
            for pid in sorted(self.walk_times.gate_s):
                st = self.platforms[pid].station_id
                w.writerow(["gate", st, "", pid, _fmt(self.walk_times.gate_s[pid])])
            seen = set()
            for (a, b) in sorted(self.walk_times.transfer_s):
                if (b, a) in seen:
                    continue
                seen.add((a, b))
                st = self.platforms[a].station_id
                w.writerow(["transfer", st, a, b, _fmt(self.walk_times.transfer_s[(a, b)])])
        with open(directory / "lines.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["line_id", "kind"])
            for lid in sorted(self.lines):
                w.writerow([lid, self.lines[lid].kind])


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    if not path.exists():
        raise ParseError(f"missing file {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != expected_header:
        raise ParseError(f"{path.name}: expected header {expected_header}, got {rows[:1]}")
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(c == "" for c in row):
            continue
        if len(row) != len(expected_header):
            raise ParseError(f"{path.name}:{i}: expected {len(expected_header)} fields")
        body.append(row)
    return body


def load_network(directory: str | Path, walk_sd_fraction: float = 0.15) -> Network:
    """Load and validate a network from its CSV directory.

    Raises ParseError on malformed files and ValidationError on dangling
    references, broken line topology, or missing walk-time entries.
    """
    directory = Path(directory)
    station_rows = _read_rows(directory / "stations.csv", ["station_id", "name", "line_ids"])
    edge_rows = _read_rows(
        directory / "edges.csv",
        ["line_id", "direction", "from_station", "to_station", "ride_time_s"],
    )
    walk_rows = _read_rows(
        directory / "walktimes.csv",
        ["kind", "station_id", "platform_a", "platform_b", "mean_s"],
    )
    kinds: dict[str, str] = {}
    lines_path = directory / "lines.csv"
    if lines_path.exists():
        for lid, kind in _read_rows(lines_path, ["line_id", "kind"]):
            if kind not in TRAIN_CAPACITY:
                raise ParseError(f"lines.csv: unknown kind {kind!r}")
            kinds[lid] = kind

    declared_lines: dict[str, set[str]] = {}
    station_names: dict[str, str] = {}
    for sid, name, line_ids in station_rows:
        if ":" in sid:
            raise ParseError(f"station id {sid!r} may not contain ':'")
        if sid in station_names:
            raise ParseError(f"duplicate station {sid!r}")
        station_names[sid] = name
        declared_lines[sid] = {l for l in line_ids.split(";") if l}

    # Chain directed edges per (line, direction) into an ordered station list.
    per_line_dir: dict[tuple[str, str], dict[str, tuple[str, int]]] = {}
    for lid, direction, a, b, ride in edge_rows:
        if direction not in DIRECTIONS:
            raise ParseError(f"edges.csv: bad direction {direction!r}")
        for sid in (a, b):
            if sid not in station_names:
                raise ValidationError(f"edge references unknown station {sid!r}")
        try:
            ride_s = int(ride)
        except ValueError as exc:
            raise ParseError(f"edges.csv: bad ride_time_s {ride!r}") from exc
        if ride_s <= 0:
            raise ValidationError(f"edge {a}->{b} has non-positive ride time")
        succ = per_line_dir.setdefault((lid, direction), {})
        if a in succ:
            raise ValidationError(f"line {lid} {direction}: station {a} has two successors")
        succ[a] = (b, ride_s)

    lines: dict[str, Line] = {}
    edges: list[Edge] = []
    line_ids = sorted({lid for lid, _ in per_line_dir})
    for lid in line_ids:
        chains = {}
        for direction in DIRECTIONS:
            succ = per_line_dir.get((lid, direction))
            if not succ:
                raise ValidationError(f"line {lid} missing {direction} edges")
            heads = set(succ) - {b for b, _ in succ.values()}
            if len(heads) != 1:
                raise ValidationError(f"line {lid} {direction} is not a single path")
            order = [min(heads)]
            while order[-1] in succ:
                nxt = succ[order[-1]][0]
                if nxt in order:
                    raise ValidationError(f"line {lid} {direction} contains a cycle")
                order.append(nxt)
            if len(order) != len(succ) + 1:
                raise ValidationError(f"line {lid} {direction} is disconnected")
            chains[direction] = order
        if chains["down"] != list(reversed(chains["up"])):
            raise ValidationError(f"line {lid}: down order is not the reverse of up")
        lines[lid] = Line(lid, kinds.get(lid, MRT), tuple(chains["up"]))
        for direction in DIRECTIONS:
            succ = per_line_dir[(lid, direction)]
            for a, (b, ride_s) in succ.items():
                edges.append(
                    Edge(platform_id(a, lid, direction), platform_id(b, lid, direction), ride_s)
                )

    membership: dict[str, set[str]] = {sid: set() for sid in station_names}
    for lid, line in lines.items():
        for sid in line.stations_up:
            membership[sid].add(lid)
    stations: dict[str, Station] = {}
    for sid, name in station_names.items():
        if not membership[sid]:
            raise ValidationError(f"station {sid} is on no line")
        if declared_lines[sid] != membership[sid]:
            raise ValidationError(
                f"station {sid}: declared lines {sorted(declared_lines[sid])} "
                f"!= edge-derived {sorted(membership[sid])}"
            )
        stations[sid] = Station(sid, name, frozenset(membership[sid]))

    walk = WalkTimeTable(walk_sd_fraction=walk_sd_fraction)
    valid_platforms = {
        platform_id(sid, lid, d)
        for sid in stations
        for lid in membership[sid]
        for d in DIRECTIONS
    }
    for kind, sid, pa, pb, mean in walk_rows:
        try:
            mean_s = float(mean)
        except ValueError as exc:
            raise ParseError(f"walktimes.csv: bad mean_s {mean!r}") from exc
        if mean_s <= 0:
            raise ValidationError(f"walk time for {sid} must be positive")
        if kind == "gate":
            if pa != "" or pb not in valid_platforms:
                raise ValidationError(f"bad gate walk row for {sid!r}: {pb!r}")
            walk.gate_s[pb] = mean_s
        elif kind == "transfer":
            if pa not in valid_platforms or pb not in valid_platforms:
                raise ValidationError(f"bad transfer walk row {pa!r} -> {pb!r}")
            walk.set_transfer(pa, pb, mean_s)
        else:
            raise ParseError(f"walktimes.csv: unknown kind {kind!r}")

    for pid in sorted(valid_platforms):
        if pid not in walk.gate_s:
            raise ValidationError(f"missing gate walk time for platform {pid}")
    for sid, st_lines in membership.items():
        if len(st_lines) < 2:
            continue
        pids = [platform_id(sid, lid, d) for lid in sorted(st_lines) for d in DIRECTIONS]
        for i, a in enumerate(pids):
            for b in pids[i + 1 :]:
                la, lb = a.split(":")[1], b.split(":")[1]
                if la != lb and (a, b) not in walk.transfer_s:
                    raise ValidationError(f"missing transfer walk time {a} <-> {b}")

    return Network(stations, lines, walk, edges)
