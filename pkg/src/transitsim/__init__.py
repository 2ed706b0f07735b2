"""Agent-based discrete-event simulator of a train rapid-transit system
driven by smart-card style journey records."""

from .agents import DispatchSchedule, SimWorld, dwell_time, generate_trains
from .demand import (
    DemandProfile,
    JourneyRecord,
    Journeys,
    gravity_profile,
    monday_profile,
    parse_journeys,
    reshape_demand,
    scale_population,
    synthesize_demand,
)
from .engine import Engine, Event, RngStream, sample_truncated_normal
from .metrics import (
    DensityEstimate,
    GofReport,
    LogNormalFit,
    bhattacharyya,
    fit_lognormal_ppcc,
    kde,
    linfoot,
    ppcc,
)
from .network import Network, load_network, sample_walk_time
from .routing import (
    GumbelComponent,
    Route,
    RouteChoiceTable,
    enumerate_candidates,
    fit_gumbel_mixture,
    match_components_to_routes,
    sample_route,
)
from .scenarios import (
    ScenarioCell,
    ScenarioSpec,
    detect_critical_point,
    run_scenario_a,
    run_scenario_b,
)
from .simulation import MetricsReport, SimConfig, run_replication, run_replications

__version__ = "0.1.0"
