"""Command-line entry point.

Subcommands: simulate, validate, fit-routes, scenario, synth.  Options can
also come from a key=value spec file (--spec); explicit flags win.  All
outputs are header-rowed CSV with locale-independent formatting, and every
subcommand is deterministic given its arguments and seed.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import demand as demand_mod
from .demand import parse_journeys, reshape_eligible_mask, synthesize_demand
from .engine import RngStream
from .errors import TransitSimError
from .fixtures import city20_profile
from .metrics import MIN_OD_DEMAND, gof_report
from .network import load_network
from .routing import RouteChoiceTable, enumerate_candidates, fit_gumbel_mixture, match_components_to_routes
from .scenarios import (
    DEFAULT_PHI_VALUES,
    DEFAULT_PSI_VALUES,
    ScenarioSpec,
    detect_critical_point,
    run_scenario_a,
    run_scenario_b,
    scenario_b_deltas,
)
from .simulation import (
    SimConfig,
    run_replications,
    write_crowdedness_csv,
    write_durations_csv,
    write_report_csv,
)


def _read_spec_file(path: str) -> dict[str, str]:
    """Parse a flat key = value file; '#' starts a comment."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TransitSimError(f"spec file line not key=value: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_spec(args: argparse.Namespace, defaults: dict[str, object]) -> None:
    """Fill None-valued args from the spec file, then from hard defaults."""
    spec = _read_spec_file(args.spec) if getattr(args, "spec", None) else {}
    for key, default in defaults.items():
        if getattr(args, key, None) is not None:
            continue
        if key in spec:
            raw = spec[key]
            if isinstance(default, bool):
                value: object = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int) and not isinstance(default, bool):
                value = int(raw)
            elif isinstance(default, float):
                value = float(raw)
            else:
                value = raw
            setattr(args, key, value)
        else:
            setattr(args, key, default)


def _parse_float(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(_parse_float(t) for t in text.split(",") if t)


def _parse_populations(text: str) -> tuple[int, ...]:
    if ":" in text:
        start, end, step = (int(t) for t in text.split(":"))
        return ScenarioSpec.population_range(start, end, step)
    return tuple(int(t) for t in text.split(",") if t)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    _apply_spec(args, {
        "seed": 0, "runs": 1, "psi": "inf", "phi": None, "population": None,
        "max_parallel": 1, "walk_sd_fraction": 0.15, "capacity_scale": 1.0,
    })
    network = load_network(args.network)
    journeys, malformed = parse_journeys(args.journeys, network)
    print(f"loaded {len(journeys)} journeys ({malformed} malformed rows skipped)")

    if args.population is not None:
        journeys = demand_mod.scale_population(
            journeys, int(args.population), RngStream(args.seed, "cli-scale")
        )
        print(f"scaled demand to {len(journeys)} journeys")
    if args.phi is not None:
        eligible = int(reshape_eligible_mask(journeys).sum())
        print(f"reshaping: {eligible} eligible tap-ins "
              f"({eligible / max(len(journeys), 1):.3f} of demand), phi={args.phi}")
        journeys = demand_mod.reshape_demand(
            journeys, float(args.phi), RngStream(args.seed, "cli-reshape")
        )

    route_table = None
    if args.routes:
        route_table = RouteChoiceTable.load(args.routes)
        for (o, d), entry in route_table.entries.items():
            for route, _ in entry:
                for pid in route.platforms:
                    if pid not in network.platforms:
                        raise TransitSimError(f"routes file uses unknown platform {pid}")

    config = SimConfig(
        seed=args.seed,
        psi=_parse_float(str(args.psi)),
        walk_sd_fraction=args.walk_sd_fraction,
        capacity_scale=args.capacity_scale,
        route_table=route_table,
        trace_events=args.trace,
    )
    reports = run_replications(network, config, journeys, args.runs, args.max_parallel)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(reports, out / "report.csv")
    write_durations_csv(reports, out / "durations.csv")
    write_crowdedness_csv(reports, out / "crowdedness.csv")
    if args.trace:
        for i, r in enumerate(reports):
            name = "events.log" if args.runs == 1 else f"events_{i}.log"
            (out / name).write_text("\n".join(r.trace) + "\n")
    for i, r in enumerate(reports):
        print(f"run {i}: departed={r.departed} rejected={r.rejected} "
              f"stranded={r.stranded} missed_events={r.missed_events} "
              f"mean_duration_s={r.mean_duration_s:.1f}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _read_durations_csv(path: str) -> dict[tuple[str, str], np.ndarray]:
    df = pd.read_csv(path, dtype={"origin": str, "destination": str})
    required = {"origin", "destination", "duration_s"}
    if not required.issubset(df.columns):
        raise TransitSimError(f"{path}: expected columns {sorted(required)}")
    return {
        od: group["duration_s"].to_numpy(dtype=float)
        for od, group in df.groupby(["origin", "destination"], sort=True)
    }


def cmd_validate(args: argparse.Namespace) -> int:
    _apply_spec(args, {"min_od_demand": MIN_OD_DEMAND, "day": "all"})
    sim = _read_durations_csv(args.sim_durations)
    emp_df = pd.read_csv(args.journeys, dtype={"origin": str, "destination": str})
    if "observed_duration_s" not in emp_df.columns:
        raise TransitSimError("empirical journeys need an observed_duration_s column")
    emp_df = emp_df[pd.to_numeric(emp_df["observed_duration_s"], errors="coerce") > 0]

    rows = []
    for od, group in emp_df.groupby(["origin", "destination"], sort=True):
        emp = group["observed_duration_s"].to_numpy(dtype=float)
        if len(emp) < args.min_od_demand:
            continue
        sim_d = sim.get(od)
        if sim_d is None or len(sim_d) < 2 or np.ptp(sim_d) == 0 or np.ptp(emp) == 0:
            continue
        g = gof_report(emp, sim_d)
        rows.append((od[0], od[1], len(emp), len(sim_d), g))

    if not rows:
        print("error: no O-D pair meets the demand threshold", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gof.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["day", "origin", "destination", "n_empirical", "n_sim",
                    "BC", "PPCC", "F", "C", "Q"])
        for o, d, ne, ns, g in rows:
            w.writerow([args.day, o, d, ne, ns, repr(g.bc), repr(g.ppcc),
                        repr(g.f), repr(g.c), repr(g.q)])
    means = [
        float(np.mean([getattr(g, name) for *_, g in rows]))
        for name in ("bc", "ppcc", "f", "c", "q")
    ]
    with open(out / "gof_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["day", "od_pairs", "mean_BC", "mean_PPCC", "mean_F", "mean_C", "mean_Q"])
        w.writerow([args.day, len(rows)] + [repr(m) for m in means])
    print(f"{args.day}: {len(rows)} O-D pairs, mean BC={means[0]:.3f} "
          f"PPCC={means[1]:.3f} F={means[2]:.3f} C={means[3]:.3f} Q={means[4]:.3f}")
    return 0


# ---------------------------------------------------------------------------
# fit-routes
# ---------------------------------------------------------------------------

def cmd_fit_routes(args: argparse.Namespace) -> int:
    _apply_spec(args, {"seed": 0, "min_od_demand": MIN_OD_DEMAND, "k_max": 3})
    network = load_network(args.network)
    journeys, _ = parse_journeys(args.journeys, network)
    dur = journeys.duration_s
    has = ~np.isnan(dur)

    table = RouteChoiceTable()
    skipped = 0
    od_counts = journeys.od_counts()
    for od in sorted(od_counts):
        if od_counts[od] < max(args.min_od_demand, 30):
            continue
        mask = (
            has
            & (journeys.origin_codes == journeys.station_ids.index(od[0]))
            & (journeys.dest_codes == journeys.station_ids.index(od[1]))
        )
        samples = dur[mask]
        if len(samples) < 30:
            continue
        candidates = enumerate_candidates(network, od[0], od[1])
        try:
            components = fit_gumbel_mixture(
                samples,
                k_max=min(args.k_max, len(candidates)),
                stream=RngStream(args.seed, f"fit:{od[0]}:{od[1]}"),
            )
            entry = match_components_to_routes(components, candidates)
        except TransitSimError:
            skipped += 1
            continue
        table.set(od[0], od[1], entry)

    if not len(table):
        print("error: no O-D pair had enough duration samples to fit", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.save(out / "routes.csv")
    print(f"fitted {len(table)} O-D pairs ({skipped} skipped) -> {out / 'routes.csv'}")
    return 0


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

_INDICATORS = ("mean_duration_s", "commuters_missed", "missed_events")


def cmd_scenario(args: argparse.Namespace) -> int:
    _apply_spec(args, {
        "kind": "", "seed": 0, "runs": 3, "populations": "",
        "psi_list": "", "phi_list": "", "psi": 3000.0,
        "capacity_scale": 1.0, "walk_sd_fraction": 0.15, "expanded_peaks": True,
    })
    if args.kind not in ("A", "B"):
        print(f"error: unknown scenario kind {args.kind!r}", file=sys.stderr)
        return 1
    if not args.populations:
        print("error: populations not given (flag or spec file)", file=sys.stderr)
        return 1
    network = load_network(args.network)
    journeys, _ = parse_journeys(args.journeys, network)

    base_config = SimConfig(
        walk_sd_fraction=args.walk_sd_fraction, capacity_scale=args.capacity_scale
    )
    spec = ScenarioSpec(
        kind=args.kind,
        populations=_parse_populations(str(args.populations)),
        psi_values=_parse_float_list(args.psi_list) if args.psi_list else DEFAULT_PSI_VALUES,
        phi_values=_parse_float_list(args.phi_list) if args.phi_list else DEFAULT_PHI_VALUES,
        psi_b=_parse_float(str(args.psi)),
        runs_per_cell=args.runs,
        seed=args.seed,
        expanded_peaks=args.expanded_peaks,
        base_config=base_config,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.kind == "A":
        cells = run_scenario_a(spec, network, journeys)
        with open(out / "scenario_a.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["population", "psi", "mean_duration_s", "commuters_missed",
                        "missed_events", "rejected"])
            for c in cells:
                w.writerow([c.population, repr(c.psi), repr(c.mean_duration_s),
                            repr(c.commuters_missed), repr(c.missed_events), repr(c.rejected)])
        groups = {psi: [c for c in cells if c.psi == psi] for psi in spec.psi_values}
        group_key = "psi"
    else:
        cells = run_scenario_b(spec, network, journeys)
        deltas = scenario_b_deltas(cells)
        with open(out / "scenario_b.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["population", "psi", "phi", "mean_duration_s", "commuters_missed",
                        "missed_events", "rejected", "delta_mean_duration_s",
                        "delta_commuters_missed", "delta_missed_events"])
            for c in cells:
                dm, dcm, dme = deltas[(c.population, c.phi)]
                w.writerow([c.population, repr(c.psi), repr(c.phi), repr(c.mean_duration_s),
                            repr(c.commuters_missed), repr(c.missed_events), repr(c.rejected),
                            repr(dm), repr(dcm), repr(dme)])
        groups = {phi: [c for c in cells if c.phi == phi] for phi in spec.phi_values}
        group_key = "phi"

    with open(out / "critical_points.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", group_key, "indicator", "population"])
        for value, column in groups.items():
            column = sorted(column, key=lambda c: c.population)
            pops = [c.population for c in column]
            if len(pops) < 5:
                continue
            for indicator in _INDICATORS:
                knee = detect_critical_point(pops, [getattr(c, indicator) for c in column])
                w.writerow([args.kind, repr(value), indicator, "" if knee is None else knee])
    print(f"scenario {args.kind}: {len(cells)} cells -> {out}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    _apply_spec(args, {"seed": 0, "n": 0, "profile": "monday", "with_durations": False})
    if args.n < 0:
        print("error: --n must be >= 0", file=sys.stderr)
        return 1
    network = load_network(args.network)
    if args.profile == "monday":
        profile = demand_mod.monday_profile(network)
    elif args.profile == "gravity":
        profile = demand_mod.gravity_profile(network)
    elif args.profile == "desk":
        profile = city20_profile(network)
    else:
        print(f"error: unknown profile {args.profile!r}", file=sys.stderr)
        return 1
    journeys = synthesize_demand(network, profile, args.n, RngStream(args.seed, "synth"))
    if args.with_durations and args.n > 0:
        journeys = _attach_durations(network, journeys, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    journeys.to_csv(out)
    print(f"wrote {len(journeys)} journeys ({args.profile} profile) -> {out}")
    return 0


def _attach_durations(network, journeys, seed: int):
    """Synthesize plausible observed durations: route expected time plus
    gate walks plus Gumbel noise.  For demos and fit-routes exercises."""
    rng = RngStream(seed, "synth-durations").rng
    n_st = len(journeys.station_ids)
    packed = journeys.origin_codes.astype(np.int64) * n_st + journeys.dest_codes
    durations = np.empty(len(journeys), dtype=float)
    for code in np.unique(packed):
        o = journeys.station_ids[int(code) // n_st]
        d = journeys.station_ids[int(code) % n_st]
        route = network.shortest_route(o, d)
        walks = (network.walk_times.gate_mean(route.platforms[0])
                 + network.walk_times.gate_mean(route.platforms[-1]))
        loc = route.expected_time_s + walks
        mask = packed == code
        u = rng.random(int(mask.sum()))
        durations[mask] = loc - 0.08 * loc * np.log(-np.log(u))
    journeys.duration_s[:] = np.maximum(durations, 60.0).round()
    return journeys


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transitsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run replications and write reports")
    p.add_argument("--network", required=True)
    p.add_argument("--journeys", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--psi")
    p.add_argument("--phi", type=float)
    p.add_argument("--population", type=int)
    p.add_argument("--max-parallel", type=int)
    p.add_argument("--walk-sd-fraction", type=float)
    p.add_argument("--capacity-scale", type=float)
    p.add_argument("--routes", help="route-choice table csv (default: shortest path)")
    p.add_argument("--trace", action="store_true", help="write events.log")
    p.add_argument("--spec", help="key=value option file; flags win")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="goodness of fit of sim vs empirical durations")
    p.add_argument("--sim-durations", required=True)
    p.add_argument("--journeys", required=True, help="empirical journeys with durations")
    p.add_argument("--out", required=True)
    p.add_argument("--min-od-demand", type=int)
    p.add_argument("--day")
    p.add_argument("--spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit-routes", help="fit route-choice table from durations")
    p.add_argument("--network", required=True)
    p.add_argument("--journeys", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-od-demand", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--spec")
    p.set_defaults(func=cmd_fit_routes)

    p = sub.add_parser("scenario", help="population sweep experiments")
    p.add_argument("--kind")
    p.add_argument("--network", required=True)
    p.add_argument("--journeys", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, help="replications per cell")
    p.add_argument("--populations", help="start:end:step or comma list")
    p.add_argument("--psi-list")
    p.add_argument("--phi-list")
    p.add_argument("--psi", help="fixed crowd limit for kind B")
    p.add_argument("--capacity-scale", type=float)
    p.add_argument("--walk-sd-fraction", type=float)
    p.add_argument("--expanded-peaks", dest="expanded_peaks", action="store_true", default=None)
    p.add_argument("--no-expanded-peaks", dest="expanded_peaks", action="store_false")
    p.add_argument("--spec")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("synth", help="generate synthetic demand")
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--profile", help="monday | gravity | desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--with-durations", action="store_true", default=None)
    p.add_argument("--spec")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TransitSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
