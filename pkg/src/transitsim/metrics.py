"""Statistical validation of travel-duration distributions.

Simulated and empirical duration samples are turned into Gaussian kernel
density estimates and compared with Bhattacharyya's coefficient, the
probability plot correlation coefficient, and Linfoot's criteria
(Fidelity, Structural Content, Correlation Quantity).  Maximum station
crowdedness is checked against a log-normal via a PPCC fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import InsufficientDataError, NonPositiveValueError, ZeroVarianceError

# Only O-D pairs at or above this demand enter validation summaries.
MIN_OD_DEMAND = 2000

KDE_GRID_POINTS = 512
KDE_GRID_PAD_BANDWIDTHS = 3.0


@dataclass(frozen=True)
class DensityEstimate:
    grid_s: np.ndarray
    density: np.ndarray  # renormalized: trapezoidal integral over grid = 1
    bandwidth_s: float


@dataclass(frozen=True)
class GofReport:
    bc: float
    ppcc: float
    f: float
    c: float
    q: float


@dataclass(frozen=True)
class LogNormalFit:
    mu: float
    sigma: float
    ppcc: float


def _trapz(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def silverman_bandwidth(x: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5); falls
    back to sd when the IQR degenerates."""
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    a = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * a * len(x) ** (-0.2)


def kde(samples: Iterable[float]) -> DensityEstimate:
    """Gaussian-kernel density on a 512-point grid spanning the sample
    range padded by three bandwidths, renormalized on the grid."""
    x = np.asarray(list(samples), dtype=float)
    if len(x) < 2 or float(np.ptp(x)) == 0.0:
        raise InsufficientDataError("kde needs >= 2 non-identical samples")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - KDE_GRID_PAD_BANDWIDTHS * h,
                       x.max() + KDE_GRID_PAD_BANDWIDTHS * h,
                       KDE_GRID_POINTS)
    density = np.zeros(KDE_GRID_POINTS)
    inv = 1.0 / (h * np.sqrt(2.0 * np.pi))
    for start in range(0, len(x), 4096):  # bounded memory for large samples
        chunk = x[start:start + 4096]
        z = (grid[:, None] - chunk[None, :]) / h
        density += inv * np.exp(-0.5 * z * z).sum(axis=1)
    density /= len(x)
    density /= _trapz(density, grid)
    return DensityEstimate(grid, density, h)


def common_grid(p: DensityEstimate, q: DensityEstimate) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Union grid with linear interpolation; zero density outside either
    estimate's own support.  Symmetric in (p, q)."""
    grid = np.union1d(p.grid_s, q.grid_s)
    pv = np.interp(grid, p.grid_s, p.density, left=0.0, right=0.0)
    qv = np.interp(grid, q.grid_s, q.density, left=0.0, right=0.0)
    return grid, pv, qv


def bhattacharyya(p: DensityEstimate, q: DensityEstimate) -> float:
    """Overlap integral of sqrt(p * q); 1 for identical densities, 0 for
    disjoint supports."""
    grid, pv, qv = common_grid(p, q)
    return _trapz(np.sqrt(pv * qv), grid)


def linfoot(p: DensityEstimate, q: DensityEstimate) -> tuple[float, float, float]:
    """Linfoot's criteria (F, C, Q) of q against reference p.

    F = 1 - int((q-p)^2) / int(p^2); C = int(q^2) / int(p^2);
    Q = int(p*q) / int(p^2).  The identity F = 2Q - C holds by expansion.
    """
    grid, pv, qv = common_grid(p, q)
    denom = _trapz(pv * pv, grid)
    f = 1.0 - _trapz((qv - pv) ** 2, grid) / denom
    c = _trapz(qv * qv, grid) / denom
    q_ = _trapz(pv * qv, grid) / denom
    return f, c, q_


def ppcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of paired order statistics.

    The larger sample is resampled to the smaller one's length by linear
    interpolation of its order statistics, so the measure reads similarity
    up to a linear map (affine transforms of either sample give 1).
    """
    xs = np.sort(np.asarray(x, dtype=float))
    ys = np.sort(np.asarray(y, dtype=float))
    if len(xs) < 2 or len(ys) < 2:
        raise InsufficientDataError("ppcc needs >= 2 samples on each side")
    n = min(len(xs), len(ys))
    positions = np.linspace(0.0, 1.0, n)
    if len(xs) > n:
        xs = np.interp(positions, np.linspace(0.0, 1.0, len(xs)), xs)
    if len(ys) > n:
        ys = np.interp(positions, np.linspace(0.0, 1.0, len(ys)), ys)
    if np.std(xs) == 0.0 or np.std(ys) == 0.0:
        raise ZeroVarianceError("constant sample in ppcc")
    return float(np.corrcoef(xs, ys)[0, 1])


def filliben_medians(n: int) -> np.ndarray:
    """Filliben's approximation to uniform order-statistic medians."""
    m = (np.arange(1, n + 1) - 0.3175) / (n + 0.365)
    m[0] = 1.0 - 0.5 ** (1.0 / n)
    m[-1] = 0.5 ** (1.0 / n)
    return m


def fit_lognormal_ppcc(values: Iterable[float]) -> LogNormalFit:
    """Fit log(values) ~ Normal(mu, sigma) and score the fit by the
    correlation of sorted log-values against standard-normal
    order-statistic medians."""
    v = np.asarray(list(values), dtype=float)
    if len(v) < 3:
        raise InsufficientDataError("need >= 3 values")
    if np.any(v <= 0):
        raise NonPositiveValueError("log-normal fit needs positive values")
    logs = np.log(v)
    sigma = float(np.std(logs, ddof=1))
    if sigma == 0.0:
        raise ZeroVarianceError("constant values: sigma = 0 is degenerate")
    mu = float(np.mean(logs))
    z = norm.ppf(filliben_medians(len(v)))
    r = float(np.corrcoef(np.sort(logs), z)[0, 1])
    return LogNormalFit(mu, sigma, r)


def gof_report(empirical: Sequence[float], simulated: Sequence[float]) -> GofReport:
    """All goodness-of-fit measures of simulated against empirical
    durations (empirical is the reference density p)."""
    p = kde(empirical)
    q = kde(simulated)
    f, c, q_ = linfoot(p, q)
    return GofReport(
        bc=bhattacharyya(p, q),
        ppcc=ppcc(empirical, simulated),
        f=f,
        c=c,
        q=q_,
    )
