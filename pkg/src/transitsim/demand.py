"""Journey-record ingestion, synthetic demand generation, Monte Carlo
population scaling, and temporal demand reshaping.

Journey collections are stored columnar (station-code arrays) so that
multi-million-record resampling stays fast; individual elements read back
as :class:`JourneyRecord`.  Observed durations ride along for validation
only and are never fed to the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Optional, Union

import numpy as np
import pandas as pd
from scipy.stats import norm

from .engine import RngStream
from .errors import EmptySourceError, ParseError, UnknownStationError

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network

SECONDS_PER_DAY = 86_400

# Reshaping windows: peak tap-ins move to the adjacent off-peak hour.
MORNING_WINDOW_S = (7 * 3600, 9 * 3600)
MORNING_TARGET_S = (6 * 3600, 7 * 3600)
EVENING_WINDOW_S = (18 * 3600, 20 * 3600)
EVENING_TARGET_S = (20 * 3600, 21 * 3600)


@dataclass(frozen=True)
class JourneyRecord:
    origin: str
    destination: str
    tap_in_s: int
    observed_duration_s: Optional[int] = None


class Journeys:
    """Columnar journey store; station ids are coded against a vocabulary."""

    def __init__(
        self,
        station_ids: tuple[str, ...],
        origin_codes: np.ndarray,
        dest_codes: np.ndarray,
        tap_in_s: np.ndarray,
        duration_s: np.ndarray,
    ):
        self.station_ids = station_ids
        self.origin_codes = origin_codes
        self.dest_codes = dest_codes
        self.tap_in_s = tap_in_s
        self.duration_s = duration_s  # float; NaN when unobserved

    def __len__(self) -> int:
        return len(self.tap_in_s)

    def __getitem__(self, i: int) -> JourneyRecord:
        d = self.duration_s[i]
        return JourneyRecord(
            self.station_ids[self.origin_codes[i]],
            self.station_ids[self.dest_codes[i]],
            int(self.tap_in_s[i]),
            None if np.isnan(d) else int(d),
        )

    def __iter__(self) -> Iterator[JourneyRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Journeys):
            return NotImplemented
        return (
            self.station_ids == other.station_ids
            and np.array_equal(self.origin_codes, other.origin_codes)
            and np.array_equal(self.dest_codes, other.dest_codes)
            and np.array_equal(self.tap_in_s, other.tap_in_s)
            and np.array_equal(self.duration_s, other.duration_s, equal_nan=True)
        )

    @property
    def has_durations(self) -> bool:
        return bool(np.any(~np.isnan(self.duration_s)))

    def od_counts(self) -> dict[tuple[str, str], int]:
        n = len(self.station_ids)
        packed = self.origin_codes.astype(np.int64) * n + self.dest_codes
        values, counts = np.unique(packed, return_counts=True)
        return {
            (self.station_ids[v // n], self.station_ids[v % n]): int(c)
            for v, c in zip(values, counts)
        }

    @classmethod
    def from_records(cls, records: Iterable[JourneyRecord]) -> "Journeys":
        records = list(records)
        vocab = tuple(sorted({r.origin for r in records} | {r.destination for r in records}))
        code = {s: i for i, s in enumerate(vocab)}
        return cls(
            vocab,
            np.array([code[r.origin] for r in records], dtype=np.int32),
            np.array([code[r.destination] for r in records], dtype=np.int32),
            np.array([r.tap_in_s for r in records], dtype=np.int64),
            np.array(
                [np.nan if r.observed_duration_s is None else r.observed_duration_s for r in records],
                dtype=float,
            ),
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        ids = np.asarray(self.station_ids, dtype=object)
        df = pd.DataFrame(
            {
                "origin": ids[self.origin_codes],
                "destination": ids[self.dest_codes],
                "tap_in_s": self.tap_in_s,
                "observed_duration_s": pd.array(
                    np.where(np.isnan(self.duration_s), None, self.duration_s), dtype="Int64"
                ),
            }
        )
        df.to_csv(path, index=False)


def parse_journeys(path: Union[str, Path], network: "Network") -> tuple[Journeys, int]:
    """Read journeys.csv, validating station ids against the network.

    Rows with origin == destination, out-of-day tap-in times, non-numeric
    fields, or non-positive observed durations are skipped and counted;
    the malformed count is returned alongside the records.  Unknown
    stations raise, a structurally broken file raises ParseError.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"missing journeys file {path}")
    try:
        df = pd.read_csv(path, dtype={"origin": str, "destination": str})
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from exc
    required = ["origin", "destination", "tap_in_s"]
    if list(df.columns[:3]) != required:
        raise ParseError(f"{path}: expected columns {required}, got {list(df.columns)}")
    if "observed_duration_s" not in df.columns:
        df["observed_duration_s"] = np.nan

    vocab = tuple(sorted(network.stations))
    code = {s: i for i, s in enumerate(vocab)}
    known = df["origin"].isin(code) & df["destination"].isin(code)
    if not known.all():
        bad = pd.concat([df.loc[~known, "origin"], df.loc[~known, "destination"]])
        unknown = sorted(set(bad) - set(code))
        raise UnknownStationError(f"{path}: unknown stations {unknown[:5]}")

    tap = pd.to_numeric(df["tap_in_s"], errors="coerce")
    dur = pd.to_numeric(df["observed_duration_s"], errors="coerce")
    ok = (
        tap.notna()
        & (tap >= 0)
        & (tap < SECONDS_PER_DAY)
        & (df["origin"] != df["destination"])
        & (df["observed_duration_s"].isna() | (dur > 0))
    )
    malformed = int((~ok).sum())
    kept = df[ok]
    journeys = Journeys(
        vocab,
        kept["origin"].map(code).to_numpy(dtype=np.int32),
        kept["destination"].map(code).to_numpy(dtype=np.int32),
        tap[ok].to_numpy(dtype=np.int64),
        dur[ok].to_numpy(dtype=float),
    )
    return journeys, malformed


# ---------------------------------------------------------------------------
# Synthetic demand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeProfile:
    """Bimodal tap-in time mixture: two Gaussian peaks over a uniform base."""

    morning_weight: float
    evening_weight: float
    morning_mean_s: float = 8.5 * 3600
    morning_sd_s: float = 0.8 * 3600
    evening_mean_s: float = 18.5 * 3600
    evening_sd_s: float = 0.9 * 3600
    base_lo_s: int = int(5.5 * 3600)
    base_hi_s: int = int(23.5 * 3600)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w_base = 1.0 - self.morning_weight - self.evening_weight
        comp = rng.choice(3, size=n, p=[self.morning_weight, self.evening_weight, w_base])
        out = np.empty(n, dtype=np.int64)
        for label, mean, sd in (
            (0, self.morning_mean_s, self.morning_sd_s),
            (1, self.evening_mean_s, self.evening_sd_s),
        ):
            mask = comp == label
            draws = rng.normal(mean, sd, int(mask.sum()))
            bad = (draws < 0) | (draws >= SECONDS_PER_DAY)
            while bad.any():
                draws[bad] = rng.normal(mean, sd, int(bad.sum()))
                bad = (draws < 0) | (draws >= SECONDS_PER_DAY)
            out[mask] = draws.astype(np.int64)
        base = comp == 2
        out[base] = rng.integers(self.base_lo_s, self.base_hi_s, int(base.sum()))
        return out

    def window_probability(self, lo_s: float, hi_s: float) -> float:
        """Expected fraction of tap-ins falling in [lo_s, hi_s)."""
        p = 0.0
        for w, mean, sd in (
            (self.morning_weight, self.morning_mean_s, self.morning_sd_s),
            (self.evening_weight, self.evening_mean_s, self.evening_sd_s),
        ):
            p += w * (norm.cdf((hi_s - mean) / sd) - norm.cdf((lo_s - mean) / sd))
        w_base = 1.0 - self.morning_weight - self.evening_weight
        overlap = max(0.0, min(hi_s, self.base_hi_s) - max(lo_s, self.base_lo_s))
        p += w_base * overlap / (self.base_hi_s - self.base_lo_s)
        return p


def _peak_eligible_probability(profile: TimeProfile) -> float:
    return profile.window_probability(*MORNING_WINDOW_S) + profile.window_probability(
        *EVENING_WINDOW_S
    )


def bimodal_profile(peak_scale: float = 0.39, morning_share: float = 0.55) -> TimeProfile:
    return TimeProfile(
        morning_weight=peak_scale * morning_share,
        evening_weight=peak_scale * (1.0 - morning_share),
    )


def calibrated_profile(target_eligible_fraction: float, morning_share: float = 0.55) -> TimeProfile:
    """Solve the peak-mixture scale so the expected fraction of tap-ins in
    the reshaping-eligible windows hits the target."""
    unit = bimodal_profile(1.0, morning_share)
    flat = bimodal_profile(0.0, morning_share)
    p1 = _peak_eligible_probability(unit)
    p0 = _peak_eligible_probability(flat)
    scale = (target_eligible_fraction - p0) / (p1 - p0)
    if not 0.0 < scale < 1.0:
        raise ValueError(f"target {target_eligible_fraction} not reachable, scale={scale}")
    return bimodal_profile(scale, morning_share)


@dataclass
class DemandProfile:
    """Weighted O-D pairs plus tap-in time profile(s).

    time_profile may be a single shared TimeProfile or a per-O-D dict
    (missing pairs fall back to `default_time_profile`).
    """

    od_weights: dict[tuple[str, str], float]
    time_profile: Union[TimeProfile, dict[tuple[str, str], TimeProfile]]
    default_time_profile: TimeProfile = field(default_factory=lambda: bimodal_profile())

    def __post_init__(self):
        total = sum(self.od_weights.values())
        if total <= 0 or any(w < 0 for w in self.od_weights.values()):
            raise ValueError("od_weights must be non-negative with positive sum")
        self.od_weights = {od: w / total for od, w in self.od_weights.items()}

    def profile_for(self, od: tuple[str, str]) -> TimeProfile:
        if isinstance(self.time_profile, TimeProfile):
            return self.time_profile
        return self.time_profile.get(od, self.default_time_profile)


def station_degree_ranks(network: "Network") -> dict[str, int]:
    """1-based rank of each station by adjacent-station count (ascending);
    ties broken by station id for determinism."""
    neighbours: dict[str, set[str]] = {s: set() for s in network.stations}
    for line in network.lines.values():
        seq = line.stations_up
        for a, b in zip(seq, seq[1:]):
            neighbours[a].add(b)
            neighbours[b].add(a)
    order = sorted(network.stations, key=lambda s: (len(neighbours[s]), s))
    return {s: i + 1 for i, s in enumerate(order)}


def gravity_profile(
    network: "Network",
    time_profile: Optional[TimeProfile] = None,
    sharpness: float = 1.0,
) -> DemandProfile:
    """Gravity-style weights: w(o,d) proportional to (rank_o * rank_d)^sharpness."""
    ranks = station_degree_ranks(network)
    weights = {
        (o, d): float(ranks[o] * ranks[d]) ** sharpness
        for o in network.stations
        for d in network.stations
        if o != d
    }
    return DemandProfile(weights, time_profile or bimodal_profile())


MONDAY_ELIGIBLE_FRACTION = 0.402  # share of tap-ins inside the reshaping windows


def monday_profile(network: "Network") -> DemandProfile:
    """Synthetic Monday-shaped demand: gravity O-D weights with the peak
    mixture calibrated so the reshaping-eligible fraction is 0.402."""
    return gravity_profile(network, calibrated_profile(MONDAY_ELIGIBLE_FRACTION))


def synthesize_demand(
    network: "Network", profile: DemandProfile, n: int, stream: RngStream
) -> Journeys:
    """Draw n journey records from the profile (no observed durations)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    vocab = tuple(sorted(network.stations))
    code = {s: i for i, s in enumerate(vocab)}
    pairs = sorted(profile.od_weights)
    weights = np.array([profile.od_weights[od] for od in pairs])
    rng = stream.rng
    pair_idx = rng.choice(len(pairs), size=n, p=weights / weights.sum())
    origin_codes = np.array([code[o] for o, _ in pairs], dtype=np.int32)[pair_idx]
    dest_codes = np.array([code[d] for _, d in pairs], dtype=np.int32)[pair_idx]

    tap = np.empty(n, dtype=np.int64)
    if isinstance(profile.time_profile, TimeProfile):
        tap[:] = profile.time_profile.sample(n, rng)
    else:
        for i, od in enumerate(pairs):
            mask = pair_idx == i
            k = int(mask.sum())
            if k:
                tap[mask] = profile.profile_for(od).sample(k, rng)
    return Journeys(vocab, origin_codes, dest_codes, tap, np.full(n, np.nan))


# ---------------------------------------------------------------------------
# Scaling and reshaping
# ---------------------------------------------------------------------------

def scale_population(journeys: Journeys, target_n: int, stream: RngStream) -> Journeys:
    """Monte Carlo resample to target_n records, uniform with replacement;
    observed durations are stripped (duplicates get fresh walk draws at
    simulation time)."""
    if len(journeys) == 0:
        raise EmptySourceError("cannot scale an empty journey set")
    if target_n < 0:
        raise ValueError("target_n must be >= 0")
    idx = stream.rng.integers(0, len(journeys), size=target_n)
    return Journeys(
        journeys.station_ids,
        journeys.origin_codes[idx],
        journeys.dest_codes[idx],
        journeys.tap_in_s[idx],
        np.full(target_n, np.nan),
    )


def reshape_eligible_mask(journeys: Journeys) -> np.ndarray:
    t = journeys.tap_in_s
    morning = (t >= MORNING_WINDOW_S[0]) & (t < MORNING_WINDOW_S[1])
    evening = (t >= EVENING_WINDOW_S[0]) & (t < EVENING_WINDOW_S[1])
    return morning | evening


def reshape_demand(journeys: Journeys, phi: float, stream: RngStream) -> Journeys:
    """Move each peak-window tap-in, with probability phi, uniformly into
    the adjacent shoulder window; origins/destinations and record count
    are preserved."""
    if not 0.0 <= phi <= 1.0:
        raise ValueError(f"phi must be in [0, 1], got {phi}")
    t = journeys.tap_in_s.copy()
    rng = stream.rng
    participate = rng.random(len(t)) < phi
    morning = participate & (t >= MORNING_WINDOW_S[0]) & (t < MORNING_WINDOW_S[1])
    evening = participate & (t >= EVENING_WINDOW_S[0]) & (t < EVENING_WINDOW_S[1])
    t[morning] = rng.integers(*MORNING_TARGET_S, size=int(morning.sum()))
    t[evening] = rng.integers(*EVENING_TARGET_S, size=int(evening.sum()))
    return Journeys(
        journeys.station_ids,
        journeys.origin_codes.copy(),
        journeys.dest_codes.copy(),
        t,
        journeys.duration_s.copy(),
    )
