import numpy as np
import pandas as pd
import pytest

from transitsim.demand import gravity_profile, synthesize_demand
from transitsim.engine import RngStream
from transitsim.errors import ValidationError
from transitsim.simulation import (
    MetricsReport,
    SimConfig,
    run_replication,
    run_replications,
    write_crowdedness_csv,
    write_durations_csv,
    write_report_csv,
)

from conftest import make_line_network
from test_agents import _empty_journeys


@pytest.fixture(scope="module")
def small_demand(city20):
    return synthesize_demand(city20, gravity_profile(city20), 2_000, RngStream(1, "d"))


class TestReplication:
    def test_deterministic(self, city20, small_demand):
        config = SimConfig(seed=11, capacity_scale=0.1, trace_events=True)
        a = run_replication(city20, config, small_demand)
        b = run_replication(city20, config, small_demand)
        assert a == b

    def test_empty_demand_still_dispatches_trains(self, city20):
        report = run_replication(city20, SimConfig(seed=1), _empty_journeys(city20))
        assert report.commuters_total == 0
        assert report.departed == 0
        assert report.trains_dispatched > 0
        assert report.mean_duration_s == 0.0

    def test_mean_duration_matches_samples(self, city20, small_demand):
        report = run_replication(city20, SimConfig(seed=2), small_demand)
        pooled = report.all_durations()
        assert report.mean_duration_s == pytest.approx(np.mean(pooled))
        assert report.departed == len(pooled)

    def test_crowdedness_max_matches_series_max(self, city20, small_demand):
        report = run_replication(city20, SimConfig(seed=3), small_demand)
        for station, occ in report.stations.items():
            if occ.series:
                assert occ.max_today >= max(c for _, c in occ.series)

    def test_psi_must_be_positive(self):
        with pytest.raises(ValidationError):
            SimConfig(psi=0)

    def test_component_tracking_run(self, city20, small_demand):
        # finalize() raises if any departed commuter's duration does not
        # decompose exactly into walk + wait + onboard time.
        config = SimConfig(seed=4, track_components=True, capacity_scale=0.05, psi=400)
        report = run_replication(city20, config, small_demand)
        assert report.departed > 0


class TestReplications:
    def test_single_run_equals_replication(self, city20, small_demand):
        config = SimConfig(seed=5)
        assert run_replications(city20, config, small_demand, 1) == [
            run_replication(city20, config, small_demand)
        ]

    def test_seeds_increment(self, city20, small_demand):
        reports = run_replications(city20, SimConfig(seed=10), small_demand, 3)
        assert [r.seed for r in reports] == [10, 11, 12]

    def test_parallel_equals_serial(self, city20, small_demand):
        config = SimConfig(seed=20, capacity_scale=0.1)
        serial = run_replications(city20, config, small_demand, 4, max_parallel=1)
        parallel = run_replications(city20, config, small_demand, 4, max_parallel=4)
        assert serial == parallel

    def test_n_runs_validated(self, city20, small_demand):
        with pytest.raises(ValueError):
            run_replications(city20, SimConfig(), small_demand, 0)


class TestCsvOutputs:
    def test_roundtrip(self, tmp_path, city20, small_demand):
        reports = run_replications(city20, SimConfig(seed=6), small_demand, 2)
        write_report_csv(reports, tmp_path / "report.csv")
        write_durations_csv(reports, tmp_path / "durations.csv")
        write_crowdedness_csv(reports, tmp_path / "crowdedness.csv")

        rep = pd.read_csv(tmp_path / "report.csv")
        assert list(rep["departed"]) == [r.departed for r in reports]
        assert list(rep["mean_duration_s"]) == [r.mean_duration_s for r in reports]

        dur = pd.read_csv(tmp_path / "durations.csv")
        assert len(dur) == sum(r.departed for r in reports)
        pooled0 = dur[dur["run_id"] == 0]["duration_s"]
        assert sorted(pooled0) == sorted(reports[0].all_durations())

        crowd = pd.read_csv(tmp_path / "crowdedness.csv", dtype={"station_id": str})
        assert len(crowd) == city20.n_stations
        x01 = crowd[crowd["station_id"] == "X01"].iloc[0]
        want = np.mean([r.stations["X01"].max_today for r in reports])
        assert x01["max_crowdedness"] == pytest.approx(want)


def test_stranded_when_no_trains_left():
    net = make_line_network(3)
    from transitsim.demand import Journeys, JourneyRecord
    journeys = Journeys.from_records([JourneyRecord("S01", "S03", 85_000)])
    from transitsim.agents import DispatchSchedule
    config = SimConfig(seed=1, dispatch=DispatchSchedule(19_800, 20_000, peak_windows=()))
    report = run_replication(net, config, journeys)
    assert report.stranded == 1
    assert report.departed == 0
