"""Scenario experiment drivers.

Scenario A sweeps population against station crowdedness limits (psi);
Scenario B sweeps population against peak-demand reshaping participation
(phi) at a fixed psi.  Both expand the peak dispatch windows to 6-11am
and 4-9pm and reuse the same scaled demand draw for every cell at a given
population, so only the swept knob differs within a column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .demand import Journeys, reshape_demand, scale_population
from .engine import RngStream, _derive_seed
from .errors import TooFewPointsError
from .network import Network
from .simulation import MetricsReport, SimConfig, run_replication

DEFAULT_PSI_VALUES = (math.inf, 9000.0, 7000.0, 5000.0, 3000.0)
DEFAULT_PHI_VALUES = (0.0, 0.05, 0.10, 0.20, 0.30)


@dataclass
class ScenarioSpec:
    kind: str  # "A" or "B"
    populations: tuple[int, ...]
    psi_values: tuple[float, ...] = DEFAULT_PSI_VALUES
    phi_values: tuple[float, ...] = DEFAULT_PHI_VALUES
    psi_b: float = 3000.0  # fixed crowd limit for Scenario B
    runs_per_cell: int = 3
    seed: int = 0
    expanded_peaks: bool = True
    base_config: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.kind not in ("A", "B"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not self.populations:
            raise ValueError("populations must be non-empty")

    @staticmethod
    def population_range(start: int, end: int, step: int) -> tuple[int, ...]:
        if step <= 0:
            raise ValueError("step must be positive")
        return tuple(range(start, end + 1, step))


@dataclass(frozen=True)
class ScenarioCell:
    population: int
    psi: float
    phi: Optional[float]
    mean_duration_s: float
    commuters_missed: float
    missed_events: float
    rejected: float


def _cell_seed(base_seed: int, population: int, run: int) -> int:
    # Same (population, run) seed across psi/phi values: paired comparisons.
    return _derive_seed(base_seed, f"cell:{population}:{run}") % (2**63)


def _average(population: int, psi: float, phi: Optional[float],
             reports: Sequence[MetricsReport]) -> ScenarioCell:
    n = len(reports)
    return ScenarioCell(
        population=population,
        psi=psi,
        phi=phi,
        mean_duration_s=sum(r.mean_duration_s for r in reports) / n,
        commuters_missed=sum(r.commuters_missed for r in reports) / n,
        missed_events=sum(r.missed_events for r in reports) / n,
        rejected=sum(r.rejected for r in reports) / n,
    )


def _scenario_config(spec: ScenarioSpec) -> SimConfig:
    config = spec.base_config
    if spec.expanded_peaks:
        config = replace(config, dispatch=config.dispatch.expanded())
    return config


def _scaled_demand(spec: ScenarioSpec, base: Journeys, population: int) -> Journeys:
    # A fresh stream per population makes draws prefix-stable: growing the
    # population extends the smaller draw instead of reshuffling it.
    return scale_population(base, population, RngStream(spec.seed, "scenario-demand"))


def run_scenario_a(spec: ScenarioSpec, network: Network, base: Journeys) -> list[ScenarioCell]:
    """Population x psi grid of averaged service-quality indicators."""
    assert spec.kind == "A"
    template = _scenario_config(spec)
    cells: list[ScenarioCell] = []
    for population in spec.populations:
        demand = _scaled_demand(spec, base, population)
        for psi in spec.psi_values:
            reports = [
                run_replication(
                    network,
                    replace(template, psi=psi, seed=_cell_seed(spec.seed, population, r)),
                    demand,
                )
                for r in range(spec.runs_per_cell)
            ]
            cells.append(_average(population, psi, None, reports))
    return cells


def run_scenario_b(spec: ScenarioSpec, network: Network, base: Journeys) -> list[ScenarioCell]:
    """Population x phi grid at fixed psi; deltas against the phi=0 row
    come from `scenario_b_deltas`."""
    assert spec.kind == "B"
    template = _scenario_config(spec)
    cells: list[ScenarioCell] = []
    for population in spec.populations:
        demand = _scaled_demand(spec, base, population)
        for phi in spec.phi_values:
            reshaped = reshape_demand(
                demand, phi, RngStream(spec.seed, f"reshape:{population}:{phi}")
            )
            reports = [
                run_replication(
                    network,
                    replace(template, psi=spec.psi_b, seed=_cell_seed(spec.seed, population, r)),
                    reshaped,
                )
                for r in range(spec.runs_per_cell)
            ]
            cells.append(_average(population, spec.psi_b, phi, reports))
    return cells


def scenario_b_deltas(cells: Sequence[ScenarioCell]) -> dict[tuple[int, float], tuple[float, float, float]]:
    """(population, phi) -> deltas of (mean duration, commuters missed,
    missed events) against the phi=0 cell at the same population."""
    baseline = {c.population: c for c in cells if c.phi == 0.0}
    out = {}
    for c in cells:
        b = baseline[c.population]
        out[(c.population, c.phi)] = (
            c.mean_duration_s - b.mean_duration_s,
            c.commuters_missed - b.commuters_missed,
            c.missed_events - b.missed_events,
        )
    return out


def smooth3(values: Sequence[float]) -> list[float]:
    """Centered 3-point moving average with shrinking edge windows."""
    v = list(values)
    return [
        float(np.mean(v[max(0, i - 1): i + 2]))
        for i in range(len(v))
    ]


def detect_critical_point(
    populations: Sequence[int], values: Sequence[float], floor: float = 1e-9
) -> Optional[int]:
    """Population at the maximum second difference of log(value).

    Returns None (no knee) when the log curve is flat or concave, e.g. for
    constant or linearly growing columns.  Needs at least 5 points.
    """
    if len(populations) < 5:
        raise TooFewPointsError(f"need >= 5 populations, got {len(populations)}")
    if len(populations) != len(values):
        raise ValueError("populations and values differ in length")
    y = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    d2 = y[2:] - 2.0 * y[1:-1] + y[:-2]
    best = int(np.argmax(d2))
    if d2[best] <= 1e-6:
        return None
    return int(populations[best + 1])
