import filecmp
import heapq

import numpy as np
import pytest

from transitsim.engine import RngStream
from transitsim.errors import NoPathError, ParseError, ValidationError
from transitsim.fixtures import _assemble
from transitsim.network import load_network, sample_walk_time

from conftest import make_line_network, make_square_network


class TestLoadAndCounts:
    def test_city20_counts(self, city20):
        assert city20.n_stations == 20
        assert city20.n_edges == 38
        assert city20.n_lines == 2
        assert city20.stations["X01"].is_interchange
        assert sum(s.is_interchange for s in city20.stations.values()) == 1

    def test_sg121_counts(self, sg121):
        assert sg121.n_stations == 121
        assert sg121.n_edges == 412
        assert sg121.n_lines == 7
        kinds = sorted(l.kind for l in sg121.lines.values())
        assert kinds == ["LRT", "LRT", "LRT", "MRT", "MRT", "MRT", "MRT"]

    def test_two_station_line(self):
        net = make_line_network(2)
        assert net.n_stations == 2
        assert net.n_edges == 2
        assert len(net.platforms) == 4

    def test_save_load_save_is_identical(self, tmp_path, city20):
        a = tmp_path / "a"
        b = tmp_path / "b"
        city20.save(a)
        load_network(a).save(b)
        for name in ("stations.csv", "edges.csv", "walktimes.csv", "lines.csv"):
            assert filecmp.cmp(a / name, b / name, shallow=False), name

    def test_sg121_roundtrip_counts(self, tmp_path, sg121):
        sg121.save(tmp_path / "sg")
        net = load_network(tmp_path / "sg")
        assert (net.n_stations, net.n_edges, net.n_lines) == (121, 412, 7)

    def test_unknown_station_in_edge(self, tmp_path, city20):
        d = tmp_path / "net"
        city20.save(d)
        with open(d / "edges.csv", "a") as f:
            f.write("LA,up,A09,GHOST,120\n")
        with pytest.raises(ValidationError):
            load_network(d)

    def test_malformed_header(self, tmp_path, city20):
        d = tmp_path / "net"
        city20.save(d)
        (d / "stations.csv").write_text("id,label\nA,B\n")
        with pytest.raises(ParseError):
            load_network(d)

    def test_missing_transfer_walk(self, tmp_path, city20):
        d = tmp_path / "net"
        city20.save(d)
        rows = (d / "walktimes.csv").read_text().splitlines()
        kept = [r for r in rows if not r.startswith("transfer")]
        (d / "walktimes.csv").write_text("\n".join(kept) + "\n")
        with pytest.raises(ValidationError):
            load_network(d)

    def test_double_outgoing_edge_rejected(self, tmp_path, city20):
        d = tmp_path / "net"
        city20.save(d)
        with open(d / "edges.csv", "a") as f:
            f.write("LA,up,A01,A03,120\n")
        with pytest.raises(ValidationError):
            load_network(d)

    def test_missing_lines_csv_defaults_to_mrt(self, tmp_path, city20):
        d = tmp_path / "net"
        city20.save(d)
        (d / "lines.csv").unlink()
        net = load_network(d)
        assert all(l.kind == "MRT" for l in net.lines.values())


class TestShortestRoute:
    def test_adjacent_stations_single_edge(self, city20):
        r = city20.shortest_route("A01", "A02")
        assert r.path_distance == 1
        assert r.transfers == 0
        assert r.platforms == ("A01:LA:up", "A02:LA:up")

    def test_square_tie_break_lexicographic(self):
        net = make_square_network()
        r = net.shortest_route("A", "D")
        assert r.platforms == ("A:L1:up", "B:L1:up", "D:L1:up")

    def test_no_path(self):
        net = _assemble(
            {"L1": ("MRT", ["A", "B"]), "L2": ("MRT", ["C", "D"])},
            lambda li, hop: 100,
        )
        with pytest.raises(NoPathError):
            net.shortest_route("A", "C")

    def test_transfer_route_uses_interchange(self, city20):
        r = city20.shortest_route("A01", "B01")
        assert r.transfers == 1
        assert any(p.startswith("X01:") for p in r.platforms)

    def test_matches_exhaustive_oracle(self):
        # Three lines over 12 stations; oracle enumerates all simple
        # platform paths with an independent cost computation.
        rng = np.random.default_rng(5)
        for trial in range(4):
            ride = lambda li, hop: int(rng.integers(60, 300))
            net = _assemble(
                {
                    "L1": ("MRT", ["A", "B", "C", "D", "E"]),
                    "L2": ("MRT", ["F", "B", "G", "H"]),
                    "L3": ("MRT", ["I", "G", "D", "J"]),
                },
                ride,
            )
            for origin, destination in [("A", "H"), ("F", "J"), ("I", "E"), ("A", "E")]:
                best = _oracle_min_cost(net, origin, destination)
                got = net.shortest_route(origin, destination)
                assert got.expected_time_s == pytest.approx(best, abs=1e-9)

    def test_route_cost_definition(self):
        # Two stations, one edge: cost = dwell midpoint at origin + ride.
        net = make_line_network(3, ride_s=200)
        r = net.shortest_route("S01", "S03")
        assert r.expected_time_s == pytest.approx(35.0 + 200 + 35.0 + 200)


def _oracle_min_cost(net, origin, destination):
    best = [float("inf")]

    def walk(pid, cost, visited, by_ride):
        if cost >= best[0]:
            return
        platform = net.platforms[pid]
        if by_ride and platform.station_id == destination:
            best[0] = cost
            return
        edge = net.edge_out.get(pid)
        if edge is not None:
            nxt = net.platforms[edge.to_platform]
            if nxt.station_id not in visited:
                lo, hi = (55, 65) if net.stations[platform.station_id].is_interchange else (30, 40)
                walk(
                    edge.to_platform,
                    cost + (lo + hi) / 2 + edge.ride_time_s,
                    visited | {nxt.station_id},
                    True,
                )
        if by_ride:
            for other in net.station_platforms[platform.station_id]:
                if net.platforms[other].line_id != platform.line_id:
                    walk(other, cost + net.walk_times.transfer_s[(pid, other)], visited, False)

    for pid in net.station_platforms[origin]:
        walk(pid, 0.0, frozenset({origin}), False)
    return best[0]


class TestWalkTime:
    def test_bounds(self):
        stream = RngStream(3, "walk")
        for _ in range(300):
            assert 45 <= sample_walk_time(stream, 90, 0.15) <= 135

    def test_zero_fraction_returns_mean(self):
        assert sample_walk_time(RngStream(3, "walk"), 90, 0.0) == 90

    def test_monte_carlo_mean(self):
        stream = RngStream(11, "walk")
        xs = [sample_walk_time(stream, 120, 0.15) for _ in range(100_000)]
        assert abs(np.mean(xs) - 120) < 1.0

    def test_positive_mean_required(self):
        with pytest.raises(ValueError):
            sample_walk_time(RngStream(3, "walk"), 0.0)
