"""Bundled synthetic fixtures.

city20: a 20-station, 2-line desk-scale city with one interchange, used
for fast experiments; capacities get scaled down at run time so that
saturation is reachable with modest populations.

sg121: a 7-line network synthesized to match headline counts of a large
metropolitan rapid-transit system (121 stations, 412 directed edges,
4 heavy lines and 3 light lines).  Topology and all timings are synthetic.

Run `python -m transitsim.fixtures --out fixtures` to (re)generate the
CSV directories.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from .demand import (
    DemandProfile,
    Journeys,
    calibrated_profile,
    gravity_profile,
    monday_profile,
    synthesize_demand,
)
from .engine import RngStream
from .network import (
    DIRECTIONS,
    Edge,
    Line,
    Network,
    Station,
    WalkTimeTable,
    platform_id,
)

GATE_WALK_S = 60.0
TRANSFER_WALK_S = 90.0


def _assemble(lines_def: dict[str, tuple[str, list[str]]], ride_time_s) -> Network:
    """Build a Network from {line_id: (kind, ordered stations)}; ride_time_s
    is a callable (line_index, hop_index) -> seconds."""
    membership: dict[str, set[str]] = {}
    for lid, (_, seq) in lines_def.items():
        for sid in seq:
            membership.setdefault(sid, set()).add(lid)
    stations = {
        sid: Station(sid, f"Station {sid}", frozenset(lids))
        for sid, lids in membership.items()
    }
    lines = {}
    edges = []
    for li, (lid, (kind, seq)) in enumerate(sorted(lines_def.items())):
        lines[lid] = Line(lid, kind, tuple(seq))
        for direction in DIRECTIONS:
            ordered = seq if direction == "up" else list(reversed(seq))
            for hop, (a, b) in enumerate(zip(ordered, ordered[1:])):
                edges.append(
                    Edge(
                        platform_id(a, lid, direction),
                        platform_id(b, lid, direction),
                        ride_time_s(li, hop),
                    )
                )
    walk = WalkTimeTable()
    for sid, lids in membership.items():
        pids = [platform_id(sid, lid, d) for lid in sorted(lids) for d in DIRECTIONS]
        for pid in pids:
            walk.gate_s[pid] = GATE_WALK_S
        for i, a in enumerate(pids):
            for b in pids[i + 1:]:
                if a.split(":")[1] != b.split(":")[1]:
                    walk.set_transfer(a, b, TRANSFER_WALK_S)
    return Network(stations, lines, walk, edges)


def build_city20() -> Network:
    """Two MRT lines crossing at one interchange; 20 stations."""
    line_a = [f"A{i:02d}" for i in range(1, 5)] + ["X01"] + [f"A{i:02d}" for i in range(5, 10)]
    line_b = [f"B{i:02d}" for i in range(1, 6)] + ["X01"] + [f"B{i:02d}" for i in range(6, 11)]
    return _assemble(
        {"LA": ("MRT", line_a), "LB": ("MRT", line_b)},
        lambda li, hop: 100 + 10 * ((hop * 3 + li * 7) % 6),
    )


# Line lengths and how many stations each later line shares with line M1.
_SG_LINE_SLOTS = (40, 38, 35, 30, 24, 23, 23)
_SG_OVERLAPS = (0, 20, 18, 16, 14, 12, 12)
_SG_OFFSETS = (0, 5, 10, 15, 18, 22, 26)
_SG_KINDS = ("MRT", "MRT", "MRT", "MRT", "LRT", "LRT", "LRT")
_SG_LINE_IDS = ("M1", "M2", "M3", "M4", "L1", "L2", "L3")


def build_sg121() -> Network:
    """121 stations, 412 directed edges, 7 lines; corridor-sharing layout."""
    trunk = [f"S{i:03d}" for i in range(1, _SG_LINE_SLOTS[0] + 1)]
    next_id = _SG_LINE_SLOTS[0] + 1
    lines_def: dict[str, tuple[str, list[str]]] = {_SG_LINE_IDS[0]: (_SG_KINDS[0], trunk)}
    for i in range(1, 7):
        shared = trunk[_SG_OFFSETS[i]: _SG_OFFSETS[i] + _SG_OVERLAPS[i]]
        fresh_n = _SG_LINE_SLOTS[i] - _SG_OVERLAPS[i]
        fresh = [f"S{j:03d}" for j in range(next_id, next_id + fresh_n)]
        next_id += fresh_n
        lines_def[_SG_LINE_IDS[i]] = (_SG_KINDS[i], shared + fresh)
    return _assemble(lines_def, lambda li, hop: 90 + 15 * ((hop * 7 + li * 13) % 5))


# -- demand profiles ---------------------------------------------------------

def city20_profile(network: Network) -> DemandProfile:
    """Desk demand: concentrated gravity weights (a few heavy O-D pairs)
    with the same calibrated bimodal peak mixture as the Monday profile."""
    return gravity_profile(network, calibrated_profile(0.402), sharpness=4.0)


def city20_journeys(network: Network, n: int, seed: int = 7) -> Journeys:
    return synthesize_demand(network, city20_profile(network), n, RngStream(seed, "city20-demand"))


def monday_journeys(network: Network, n: int = 2_078_010, seed: int = 7) -> Journeys:
    return synthesize_demand(network, monday_profile(network), n, RngStream(seed, "monday-demand"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="regenerate bundled network fixtures")
    parser.add_argument("--out", default="fixtures", help="output directory")
    args = parser.parse_args(argv)
    out = Path(args.out)
    build_city20().save(out / "city20")
    build_sg121().save(out / "sg121")
    print(f"wrote {out / 'city20'} and {out / 'sg121'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
