import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transitsim.demand import (
    DemandProfile,
    JourneyRecord,
    Journeys,
    bimodal_profile,
    calibrated_profile,
    gravity_profile,
    monday_profile,
    parse_journeys,
    reshape_demand,
    reshape_eligible_mask,
    scale_population,
    synthesize_demand,
)
from transitsim.engine import RngStream
from transitsim.errors import EmptySourceError, ParseError, UnknownStationError


class TestParse:
    def test_three_valid_rows(self, tmp_path, city20):
        f = tmp_path / "j.csv"
        f.write_text(
            "origin,destination,tap_in_s,observed_duration_s\n"
            "A01,A02,100,\n"
            "A02,B01,200,900\n"
            "X01,A05,300,\n"
        )
        journeys, malformed = parse_journeys(f, city20)
        assert len(journeys) == 3
        assert malformed == 0
        assert journeys[1] == JourneyRecord("A02", "B01", 200, 900)

    def test_same_od_row_skipped(self, tmp_path, city20):
        f = tmp_path / "j.csv"
        f.write_text("origin,destination,tap_in_s\nA01,A01,100\nA01,A02,50\n")
        journeys, malformed = parse_journeys(f, city20)
        assert len(journeys) == 1
        assert malformed == 1

    def test_bad_values_counted(self, tmp_path, city20):
        f = tmp_path / "j.csv"
        f.write_text(
            "origin,destination,tap_in_s,observed_duration_s\n"
            "A01,A02,-5,\n"          # negative tap-in
            "A01,A02,90000,\n"       # past midnight
            "A01,A02,oops,\n"        # non-numeric
            "A01,A02,100,-3\n"       # non-positive duration
            "A01,A02,100,600\n"
        )
        journeys, malformed = parse_journeys(f, city20)
        assert len(journeys) == 1
        assert malformed == 4

    def test_unknown_station_raises(self, tmp_path, city20):
        f = tmp_path / "j.csv"
        f.write_text("origin,destination,tap_in_s\nA01,NOWHERE,100\n")
        with pytest.raises(UnknownStationError):
            parse_journeys(f, city20)

    def test_missing_file(self, tmp_path, city20):
        with pytest.raises(ParseError):
            parse_journeys(tmp_path / "absent.csv", city20)

    def test_csv_roundtrip(self, tmp_path, city20):
        stream = RngStream(5, "synth")
        journeys = synthesize_demand(city20, gravity_profile(city20), 500, stream)
        journeys.duration_s[::3] = 700.0  # give some rows durations
        f = tmp_path / "round.csv"
        journeys.to_csv(f)
        back, malformed = parse_journeys(f, city20)
        assert malformed == 0
        assert back == journeys


class TestSynthesize:
    def test_zero(self, city20):
        j = synthesize_demand(city20, gravity_profile(city20), 0, RngStream(1, "s"))
        assert len(j) == 0

    def test_single_od(self, city20):
        profile = DemandProfile({("A01", "B01"): 1.0}, bimodal_profile())
        j = synthesize_demand(city20, profile, 100, RngStream(1, "s"))
        assert len(j) == 100
        assert j.od_counts() == {("A01", "B01"): 100}

    def test_two_od_frequencies(self, city20):
        profile = DemandProfile(
            {("A01", "B01"): 0.7, ("B01", "A01"): 0.3}, bimodal_profile()
        )
        j = synthesize_demand(city20, profile, 100_000, RngStream(2, "s"))
        counts = j.od_counts()
        assert abs(counts[("A01", "B01")] / 100_000 - 0.7) < 0.01
        assert abs(counts[("B01", "A01")] / 100_000 - 0.3) < 0.01

    def test_tap_ins_inside_service_day(self, city20):
        j = synthesize_demand(city20, monday_profile(city20), 20_000, RngStream(3, "s"))
        assert j.tap_in_s.min() >= 0
        assert j.tap_in_s.max() < 86_400

    def test_calibrated_profile_hits_target(self):
        profile = calibrated_profile(0.402)
        p = profile.window_probability(7 * 3600, 9 * 3600) + profile.window_probability(
            18 * 3600, 20 * 3600
        )
        assert p == pytest.approx(0.402, abs=1e-12)


class TestScale:
    def test_multinomial_oracle(self, city20):
        profile = DemandProfile(
            {("A01", "B01"): 0.5, ("B01", "A01"): 0.3, ("A02", "X01"): 0.2},
            bimodal_profile(),
        )
        base = synthesize_demand(city20, profile, 30_000, RngStream(4, "s"))
        scaled = scale_population(base, len(base), RngStream(4, "scale"))
        counts = scaled.od_counts()
        base_counts = base.od_counts()
        n = len(base)
        for od, c in base_counts.items():
            p = c / n
            sd = np.sqrt(n * p * (1 - p))
            assert abs(counts.get(od, 0) - c) <= 3 * sd

    def test_zero_target(self, city20):
        base = synthesize_demand(city20, gravity_profile(city20), 100, RngStream(4, "s"))
        assert len(scale_population(base, 0, RngStream(1, "x"))) == 0

    def test_empty_source(self, city20):
        empty = synthesize_demand(city20, gravity_profile(city20), 0, RngStream(4, "s"))
        with pytest.raises(EmptySourceError):
            scale_population(empty, 10, RngStream(1, "x"))

    def test_support_preserved_and_durations_stripped(self, city20):
        base = synthesize_demand(city20, gravity_profile(city20), 2_000, RngStream(4, "s"))
        base.duration_s[:] = 500.0
        scaled = scale_population(base, 5_000, RngStream(5, "scale"))
        assert len(scaled) == 5_000
        assert set(scaled.od_counts()) <= set(base.od_counts())
        assert np.isnan(scaled.duration_s).all()


class TestReshape:
    def test_phi_zero_is_identity(self, city20):
        base = synthesize_demand(city20, monday_profile(city20), 5_000, RngStream(6, "s"))
        out = reshape_demand(base, 0.0, RngStream(6, "r"))
        assert out == base

    def test_phi_one_empties_windows(self, city20):
        base = synthesize_demand(city20, monday_profile(city20), 20_000, RngStream(7, "s"))
        out = reshape_demand(base, 1.0, RngStream(7, "r"))
        assert not reshape_eligible_mask(out).any()
        assert len(out) == len(base)

    def test_moved_records_land_in_target_windows(self, city20):
        base = synthesize_demand(city20, monday_profile(city20), 20_000, RngStream(8, "s"))
        out = reshape_demand(base, 1.0, RngStream(8, "r"))
        changed = out.tap_in_s != base.tap_in_s
        t = out.tap_in_s[changed]
        morning = (t >= 6 * 3600) & (t < 7 * 3600)
        evening = (t >= 20 * 3600) & (t < 21 * 3600)
        assert (morning | evening).all()

    def test_od_pairs_preserved(self, city20):
        base = synthesize_demand(city20, monday_profile(city20), 5_000, RngStream(9, "s"))
        out = reshape_demand(base, 0.5, RngStream(9, "r"))
        assert np.array_equal(out.origin_codes, base.origin_codes)
        assert np.array_equal(out.dest_codes, base.dest_codes)

    @given(st.floats(0.0, 1.0), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_moved_count_within_binomial_bound(self, phi, seed):
        records = [
            JourneyRecord("A", "B", int(t))
            for t in np.linspace(0, 86_399, 4_000)
        ]
        base = Journeys.from_records(records)
        eligible = int(reshape_eligible_mask(base).sum())
        out = reshape_demand(base, phi, RngStream(seed, "r"))
        moved = int((out.tap_in_s != base.tap_in_s).sum())
        sd = np.sqrt(eligible * phi * (1 - phi))
        # A phi-participant keeps its exact time with prob ~1/3600; ignore.
        assert abs(moved - phi * eligible) <= 4 * sd + 1


def test_gravity_weights_favour_high_degree(city20):
    profile = gravity_profile(city20)
    w = profile.od_weights
    # X01 is the only interchange and so the highest-ranked station.
    assert w[("X01", "B09")] > w[("A02", "A03")]
