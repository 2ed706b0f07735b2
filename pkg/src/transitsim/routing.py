"""Route choice machinery.

Candidate routes for an O-D pair are enumerated under detour and transfer
constraints.  Empirical travel-duration samples are fitted with a mixture
of Gumbel components (EM, restarts, BIC model selection); each component
is matched to a candidate route by mean duration under a path-distance
rank-consistency constraint, and the component weight becomes the route's
selection probability.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

from .engine import RngStream
from .errors import (
    DegenerateFitError,
    InsufficientDataError,
    MoreComponentsThanRoutesError,
    NoPathError,
    ValidationError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network

EULER_GAMMA = float(np.euler_gamma)

DEFAULT_DETOUR_FACTOR = 1.5
DEFAULT_MAX_TRANSFERS = 2

# Fitted scales below this are considered numerical collapse, not structure.
MIN_SCALE_S = 1.0


@dataclass(frozen=True)
class Route:
    """An ordered platform sequence; consecutive same-station platforms on
    different lines are transfer walks, all other steps are ride edges."""

    platforms: tuple[str, ...]
    transfers: int
    path_distance: int  # station-hop count
    expected_time_s: float

    @property
    def origin(self) -> str:
        return self.platforms[0].split(":")[0]

    @property
    def destination(self) -> str:
        return self.platforms[-1].split(":")[0]

    def legs(self) -> list[tuple[str, str]]:
        """(board_platform, alight_platform) per ride leg, in travel order."""
        out = []
        board = self.platforms[0]
        prev = self.platforms[0]
        for pid in self.platforms[1:]:
            if pid.split(":")[0] == prev.split(":")[0] and pid.split(":")[1] != prev.split(":")[1]:
                out.append((board, prev))
                board = pid
            prev = pid
        out.append((board, self.platforms[-1]))
        return out


@dataclass(frozen=True)
class GumbelComponent:
    location_s: float  # mu
    scale_s: float  # beta > 0
    weight: float  # in (0, 1]

    @property
    def mean_s(self) -> float:
        return self.location_s + EULER_GAMMA * self.scale_s


class RouteChoiceTable:
    """Per-O-D route/probability lists; probabilities sum to 1 (1e-9)."""

    def __init__(self, entries: Optional[dict[tuple[str, str], list[tuple[Route, float]]]] = None):
        self.entries: dict[tuple[str, str], list[tuple[Route, float]]] = {}
        if entries:
            for od, entry in entries.items():
                self.set(od[0], od[1], entry)

    def set(self, origin: str, destination: str, entry: list[tuple[Route, float]]) -> None:
        total = sum(p for _, p in entry)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"probabilities for ({origin},{destination}) sum to {total}")
        self.entries[(origin, destination)] = list(entry)

    def get(self, origin: str, destination: str) -> Optional[list[tuple[Route, float]]]:
        return self.entries.get((origin, destination))

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["origin", "destination", "route_rank", "probability",
                 "transfers", "expected_time_s", "platform_sequence"]
            )
            for (o, d) in sorted(self.entries):
                for rank, (route, p) in enumerate(self.entries[(o, d)]):
                    w.writerow(
                        [o, d, rank, repr(p), route.transfers,
                         repr(route.expected_time_s), ";".join(route.platforms)]
                    )

    @classmethod
    def load(cls, path: str | Path) -> "RouteChoiceTable":
        table = cls()
        grouped: dict[tuple[str, str], list[tuple[Route, float]]] = {}
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            for row in reader:
                if not row:
                    continue
                o, d, _rank, p, transfers, expected, seq = row
                platforms = tuple(seq.split(";"))
                stations = [pid.split(":")[0] for pid in platforms]
                hops = sum(1 for a, b in zip(stations, stations[1:]) if a != b)
                route = Route(platforms, int(transfers), hops, float(expected))
                grouped.setdefault((o, d), []).append((route, float(p)))
        for (o, d), entry in grouped.items():
            table.set(o, d, entry)
        return table


# ---------------------------------------------------------------------------
# Candidate enumeration
# ---------------------------------------------------------------------------

def enumerate_candidates(
    network: "Network",
    origin: str,
    destination: str,
    detour_factor: float = DEFAULT_DETOUR_FACTOR,
    max_transfers: int = DEFAULT_MAX_TRANSFERS,
) -> list[Route]:
    """All simple routes within detour_factor of the shortest expected time
    and at most max_transfers line changes, sorted by expected time.

    Simple means no station is entered twice by riding; the shortest route
    is always included.
    """
    shortest = network.shortest_route(origin, destination)  # raises NoPathError
    budget = detour_factor * shortest.expected_time_s + 1e-9
    found: list[Route] = []

    def extend(pid: str, cost: float, transfers: int, visited: frozenset[str], path: tuple[str, ...], by_ride: bool):
        platform = network.platforms[pid]
        if by_ride and platform.station_id == destination:
            found.append(network.route_from_platforms(path))
            return
        edge = network.edge_out.get(pid)
        if edge is not None:
            nxt = network.platforms[edge.to_platform]
            if nxt.station_id not in visited:
                w = network.dwell_midpoint_s(platform.station_id) + edge.ride_time_s
                if cost + w <= budget:
                    extend(
                        edge.to_platform, cost + w, transfers,
                        visited | {nxt.station_id}, path + (edge.to_platform,), True,
                    )
        if by_ride and transfers < max_transfers:
            for other in network.station_platforms[platform.station_id]:
                if network.platforms[other].line_id == platform.line_id:
                    continue
                w = network.walk_times.transfer_mean(pid, other)
                if cost + w <= budget:
                    extend(other, cost + w, transfers + 1, visited, path + (other,), False)

    for pid in network.station_platforms[origin]:
        extend(pid, 0.0, 0, frozenset({origin}), (pid,), False)

    found.sort(key=lambda r: (r.expected_time_s, r.platforms))
    if not found:
        raise NoPathError(f"no candidate route {origin} -> {destination}")
    return found


# ---------------------------------------------------------------------------
# Gumbel mixture fitting
# ---------------------------------------------------------------------------

def gumbel_logpdf(x: np.ndarray, mu: float, beta: float) -> np.ndarray:
    z = (x - mu) / beta
    return -math.log(beta) - z - np.exp(np.minimum(-z, 700.0))


def mixture_pdf(components: Sequence[GumbelComponent], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in components:
        out += c.weight * np.exp(gumbel_logpdf(x, c.location_s, c.scale_s))
    return out


def sample_mixture(components: Sequence[GumbelComponent], n: int, stream: RngStream) -> np.ndarray:
    """Inverse-CDF draws from a Gumbel mixture."""
    weights = np.array([c.weight for c in components])
    idx = stream.rng.choice(len(components), size=n, p=weights / weights.sum())
    u = stream.rng.random(n)
    mu = np.array([c.location_s for c in components])[idx]
    beta = np.array([c.scale_s for c in components])[idx]
    return mu - beta * np.log(-np.log(u))


def _weighted_gumbel_mle(x: np.ndarray, w: np.ndarray, beta0: float) -> tuple[float, float]:
    """Weighted maximum-likelihood (mu, beta) via the standard fixed point
    on beta; exponentials are shifted by min(x) for stability."""
    wsum = w.sum()
    xbar = float(w @ x) / wsum
    c = float(x.min())
    u = x - c
    beta = max(float(beta0), 1e-6)
    for _ in range(200):
        e = np.exp(-u / beta)
        s0 = float(w @ e)
        s1 = float(w @ (x * e))
        beta_new = xbar - s1 / s0
        if beta_new < 1e-9:
            beta_new = 1e-9
        if abs(beta_new - beta) <= 1e-8 * max(1.0, beta):
            beta = beta_new
            break
        beta = beta_new
    mu = c - beta * math.log(float(w @ np.exp(-u / beta)) / wsum)
    return mu, beta


def _kmeans_1d(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 30) -> np.ndarray:
    centers = np.sort(rng.choice(x, size=k, replace=False).astype(float))
    centers += rng.normal(0.0, 1e-6 * max(1.0, float(np.ptp(x))), size=k)
    for _ in range(iters):
        assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        for j in range(k):
            sel = x[assign == j]
            centers[j] = sel.mean() if len(sel) else float(rng.choice(x))
        centers = np.sort(centers)
    return centers


def _init_from_centers(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Moment-matched mixture parameters from k-means clusters."""
    k = len(centers)
    n = len(x)
    assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    w = np.empty(k)
    mu = np.empty(k)
    beta = np.empty(k)
    spread = max(float(np.std(x)), 1e-3)
    for j in range(k):
        sel = x[assign == j]
        s = float(np.std(sel)) if len(sel) > 1 else spread
        b = max(s * math.sqrt(6.0) / math.pi, 1e-3)
        m = float(sel.mean()) if len(sel) else float(centers[j])
        beta[j] = b
        mu[j] = m - EULER_GAMMA * b
        w[j] = max(len(sel), 1) / n
    return w / w.sum(), mu, beta


def _em_from_init(
    x: np.ndarray,
    w: np.ndarray,
    mu: np.ndarray,
    beta: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[float]]:
    n = len(x)
    k = len(w)
    xc = x[:, None]
    history: list[float] = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        z = (xc - mu[None, :]) / beta[None, :]
        logp = np.log(w)[None, :] - np.log(beta)[None, :] - z - np.exp(np.minimum(-z, 700.0))
        m = logp.max(axis=1)
        norm = m + np.log(np.exp(logp - m[:, None]).sum(axis=1))
        ll = float(norm.sum())
        history.append(ll)
        resp = np.exp(logp - norm[:, None])
        w = np.clip(resp.sum(axis=0) / n, 1e-12, None)
        w = w / w.sum()
        for j in range(k):
            mu[j], beta[j] = _weighted_gumbel_mle(x, resp[:, j], beta[j])
        if abs(ll - prev_ll) <= tol * (1.0 + abs(ll)):
            break
        prev_ll = ll
    return w, mu, beta, history


def _em_gumbel(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    tol: float = 1e-7,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[float]]:
    """One EM run from a k-means start; returns (w, mu, beta, ll_history)."""
    centers = _kmeans_1d(x, k, rng)
    w, mu, beta = _init_from_centers(x, centers)
    return _em_from_init(x, w, mu, beta, max_iter, tol)


def fit_gumbel_mixture(
    durations: Iterable[float],
    k_max: int,
    stream: Optional[RngStream] = None,
    n_restarts: int = 20,
) -> list[GumbelComponent]:
    """Fit a Gumbel mixture to duration samples by EM.

    The component count k in [1, k_max] is selected by BIC; each k keeps
    the best log-likelihood over n_restarts seeded k-means starts (one
    start suffices for k=1).  Components come back sorted by mean.

    Raises InsufficientDataError below 30 samples and DegenerateFitError
    when every usable fit collapses a scale below 1 s (constant input
    included).
    """
    x = np.asarray(list(durations), dtype=float)
    if len(x) < 30:
        raise InsufficientDataError(f"need >= 30 durations, got {len(x)}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if float(np.ptp(x)) == 0.0:
        raise DegenerateFitError("constant durations cannot support a scale")
    if stream is None:
        stream = RngStream(0, "gumbel-fit")
    rng = stream.rng

    n = len(x)
    best_per_k: dict[int, tuple[float, np.ndarray, np.ndarray, np.ndarray]] = {}
    for k in range(1, k_max + 1):
        restarts = 1 if k == 1 else n_restarts
        best_ll = -np.inf
        best = None
        seen_inits: set[tuple[float, ...]] = set()
        for _ in range(restarts):
            centers = _kmeans_1d(x, k, rng)
            key = tuple(np.round(centers, 6))
            if key in seen_inits:  # identical init => identical EM result
                continue
            seen_inits.add(key)
            w0, mu0, beta0 = _init_from_centers(x, centers)
            w, mu, beta, history = _em_from_init(x, w0, mu0, beta0)
            if float(beta.min()) < MIN_SCALE_S:
                continue
            if history[-1] > best_ll:
                best_ll = history[-1]
                best = (w, mu, beta)
        if best is not None:
            best_per_k[k] = (best_ll, *best)

    if not best_per_k:
        raise DegenerateFitError("every candidate fit collapsed below 1 s scale")

    def bic(k: int) -> float:
        ll = best_per_k[k][0]
        return -2.0 * ll + (3 * k - 1) * math.log(n)

    k_best = min(best_per_k, key=lambda k: (bic(k), k))
    _, w, mu, beta = best_per_k[k_best]
    components = [
        GumbelComponent(float(mu[j]), float(beta[j]), float(w[j])) for j in range(k_best)
    ]
    components.sort(key=lambda c: c.mean_s)
    return components


# ---------------------------------------------------------------------------
# Component-to-route matching and assignment
# ---------------------------------------------------------------------------

def match_components_to_routes(
    components: Sequence[GumbelComponent], routes: Sequence[Route]
) -> list[tuple[Route, float]]:
    """Injectively assign components to routes.

    Minimizes the total |component mean - route expected time| over
    assignments whose route path distances are non-decreasing in component
    mean order; unmatched routes get probability 0.  Route probability is
    the component weight.
    """
    if len(components) > len(routes):
        raise MoreComponentsThanRoutesError(
            f"{len(components)} components for {len(routes)} routes"
        )
    comps = sorted(components, key=lambda c: c.mean_s)
    ordered = sorted(routes, key=lambda r: (r.expected_time_s, r.platforms))
    k = len(comps)

    best_cost = math.inf
    best_perm: Optional[tuple[int, ...]] = None
    for perm in itertools.permutations(range(len(ordered)), k):
        dists = [ordered[i].path_distance for i in perm]
        if any(a > b for a, b in zip(dists, dists[1:])):
            continue
        cost = sum(abs(c.mean_s - ordered[i].expected_time_s) for c, i in zip(comps, perm))
        if cost < best_cost - 1e-12 or (abs(cost - best_cost) <= 1e-12 and perm < best_perm):
            best_cost = cost
            best_perm = perm
    assert best_perm is not None  # a sorted-by-distance assignment always exists

    prob = {i: c.weight for c, i in zip(comps, best_perm)}
    return [(route, prob.get(i, 0.0)) for i, route in enumerate(ordered)]


def sample_route(entry: Sequence[tuple[Route, float]], stream: RngStream) -> Route:
    """Draw one route from a (route, probability) list."""
    probs = np.array([p for _, p in entry], dtype=float)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"route probabilities sum to {total}")
    u = stream.rng.random()
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(entry) - 1)
    return entry[idx][0]
