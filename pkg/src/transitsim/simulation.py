"""One-replication orchestration and the cross-replication driver.

A replication owns its entire world (network shared read-only) and is a
pure function of (config, journeys): identical inputs give identical
reports.  Replications are independent; `run_replications` fans them out
over a thread pool and returns reports in seed order regardless of
execution interleaving.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .agents import DispatchSchedule, SimWorld, StationOccupancy
from .demand import Journeys
from .engine import DEFAULT_HORIZON_S
from .errors import ValidationError
from .network import Network
from .routing import RouteChoiceTable


@dataclass
class SimConfig:
    seed: int = 0
    horizon_s: int = DEFAULT_HORIZON_S
    dispatch: DispatchSchedule = field(default_factory=DispatchSchedule)
    psi: float = math.inf  # station crowdedness limit; tripled at interchanges
    walk_sd_fraction: float = 0.15
    capacity_scale: float = 1.0
    route_table: Optional[RouteChoiceTable] = None
    trace_events: bool = False
    track_components: bool = False
    occupancy_sample_period_s: int = 60

    def __post_init__(self):
        if not self.psi > 0:
            raise ValidationError("psi must be positive (or infinite)")

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


@dataclass
class MetricsReport:
    seed: int
    durations: dict[tuple[str, str], list[int]]
    stations: dict[str, StationOccupancy]
    station_missed_events: dict[str, int]
    commuters_total: int
    admitted: int
    departed: int
    rejected: int
    stranded: int
    commuters_missed: int
    missed_events: int
    trains_dispatched: int
    mean_duration_s: float  # 0.0 when nothing departed
    trace: list[str] = field(default_factory=list)  # only when trace_events

    def all_durations(self) -> list[int]:
        out: list[int] = []
        for od in sorted(self.durations):
            out.extend(self.durations[od])
        return out


def run_replication(network: Network, config: SimConfig, journeys: Journeys) -> MetricsReport:
    """Run one full service day and collect its metrics."""
    world = SimWorld(network, config, journeys)
    world.run()
    world.finalize()
    n_samples = sum(len(v) for v in world.durations.values())
    total = sum(sum(v) for v in world.durations.values())
    return MetricsReport(
        seed=config.seed,
        durations={od: world.durations[od] for od in sorted(world.durations)},
        stations=world.station_occupancy(),
        station_missed_events=dict(sorted(world.station_missed.items())),
        commuters_total=world.created,
        admitted=len(world.commuters),
        departed=world.departed,
        rejected=world.rejected,
        stranded=world.stranded,
        commuters_missed=world.commuters_missed,
        missed_events=world.missed_events,
        trains_dispatched=world.trains_dispatched,
        mean_duration_s=total / n_samples if n_samples else 0.0,
        trace=world.trace,
    )


def run_replications(
    network: Network,
    config: SimConfig,
    journeys: Journeys,
    n_runs: int,
    max_parallel: int = 1,
) -> list[MetricsReport]:
    """n_runs independent replications with seeds seed+0..n_runs-1."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    configs = [config.with_seed(config.seed + i) for i in range(n_runs)]
    if max_parallel <= 1 or n_runs == 1:
        return [run_replication(network, c, journeys) for c in configs]
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = [pool.submit(run_replication, network, c, journeys) for c in configs]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# CSV outputs
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_report_csv(reports: list[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["run_id", "seed", "commuters_total", "admitted", "departed", "rejected",
             "stranded", "commuters_missed", "missed_events", "trains_dispatched",
             "mean_duration_s"]
        )
        for i, r in enumerate(reports):
            w.writerow(
                [i, r.seed, r.commuters_total, r.admitted, r.departed, r.rejected,
                 r.stranded, r.commuters_missed, r.missed_events, r.trains_dispatched,
                 _fmt(r.mean_duration_s)]
            )


def write_durations_csv(reports: list[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["origin", "destination", "duration_s", "run_id"])
        for i, r in enumerate(reports):
            for od in sorted(r.durations):
                for d in r.durations[od]:
                    w.writerow([od[0], od[1], d, i])


def write_crowdedness_csv(reports: list[MetricsReport], path: str | Path) -> None:
    """Per-station max crowdedness and missed-train events, averaged over
    replications."""
    stations = sorted(reports[0].stations)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["station_id", "max_crowdedness", "missed_events"])
        for s in stations:
            crowd = sum(r.stations[s].max_today for r in reports) / len(reports)
            missed = sum(r.station_missed_events[s] for r in reports) / len(reports)
            w.writerow([s, _fmt(crowd), _fmt(missed)])
