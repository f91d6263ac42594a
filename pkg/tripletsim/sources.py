"""Photon-pair statistics of the two heralded sources."""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy import stats
from scipy.optimize import brentq, minimize_scalar

from tripletsim.detectors import dark_click_probability
from tripletsim.errors import CalibrationError, DomainError, TruncationError
from tripletsim.models.detectors import DetectorParams
from tripletsim.models.sources import PairDistribution, SourceParams

logger = logging.getLogger(__name__)

TAIL_TOLERANCE = 1e-12
MU_BRACKET = (0.0, 0.5)
MU_GRID_FLOOR = 1e-7
MU_GRID_POINTS = 81


def _tail_mass(mu: float, n_max: int, statistics: str, modes: int) -> float:
    match statistics:
        case "thermal":
            return float(stats.nbinom.sf(n_max, modes, 1.0 / (1.0 + mu / modes)))
        case "poisson":
            return float(stats.poisson.sf(n_max, mu))
        case "deterministic":
            return 0.0 if round(mu) <= n_max else 1.0
        case _:
            raise NotImplementedError(f"Unknown photon statistics `{statistics}`")


def required_n_max(
    mu: float, statistics: str = "thermal", modes: int = 1, tol: float = TAIL_TOLERANCE
) -> int:
    """Smallest n_max whose neglected tail mass is below tol."""
    n_max = max(1, int(round(mu)) + 1)
    while _tail_mass(mu, n_max, statistics, modes) > tol:
        n_max = int(n_max * 1.5) + 1
    lo, hi = max(1, n_max // 2), n_max
    while lo < hi:
        mid = (lo + hi) // 2
        if _tail_mass(mu, mid, statistics, modes) > tol:
            lo = mid + 1
        else:
            hi = mid
    return hi


def pair_number_distribution(
    mu: float, n_max: int, *, statistics: str = "thermal", modes: int = 1
) -> PairDistribution:
    """Pair-number law P(n), n = 0..n_max, renormalised over the truncated support.

    The default single-mode thermal law is P(n) = mu^n / (1 + mu)^(n + 1).
    """
    if mu < 0:
        raise DomainError(f"sources: mu must be non-negative, got {mu}")
    if n_max < 1:
        raise DomainError(f"sources: n_max must be at least 1, got {n_max}")
    tail = _tail_mass(mu, n_max, statistics, modes)
    if tail > TAIL_TOLERANCE:
        needed = required_n_max(mu, statistics, modes)
        raise TruncationError(
            f"sources: tail mass {tail:.3g} above {TAIL_TOLERANCE:g} at n_max={n_max}; use n_max >= {needed}",
            required_n_max=needed,
        )
    n = np.arange(n_max + 1)
    match statistics:
        case "thermal" if modes == 1:
            x = mu / (1.0 + mu)
            p = (1.0 - x) * x**n
        case "thermal":
            p = stats.nbinom.pmf(n, modes, 1.0 / (1.0 + mu / modes))
        case "poisson":
            p = stats.poisson.pmf(n, mu)
        case "deterministic":
            p = (n == round(mu)).astype(float)
        case _:
            raise NotImplementedError(f"Unknown photon statistics `{statistics}`")
    return PairDistribution(probabilities=p / p.sum())


def source_distribution(source: SourceParams) -> PairDistribution:
    mu = require_mu(source)
    n_max = required_n_max(mu, source.statistics, source.modes)
    return pair_number_distribution(mu, n_max, statistics=source.statistics, modes=source.modes)


def require_mu(source: SourceParams) -> float:
    if source.mu is None:
        raise DomainError("sources: mean pair number is unresolved; resolve the config or set mu")
    return source.mu


def thinned(dist: PairDistribution, keep: float) -> PairDistribution:
    """Distribution of survivors when each of the n pairs is kept independently with probability keep."""
    n = np.arange(dist.n_max + 1)
    kernel = stats.binom.pmf(n[None, :], n[:, None], keep)  # [n, j]
    p = dist.probabilities @ kernel
    return PairDistribution(probabilities=p / p.sum())


def emission_table(source: SourceParams, herald: DetectorParams, window_ns: float) -> np.ndarray:
    """Joint law of one pulse: table[c, k] = P(herald click = c, k telecom photons delivered)."""
    dist = source_distribution(source)
    n = np.arange(dist.n_max + 1)
    h = source.herald_transmission * herald.efficiency
    t = source.signal_transmission
    no_dark = 1.0 - dark_click_probability(herald, window_ns)
    delivered = stats.binom.pmf(n[None, :], n[:, None], t)  # [n, k]
    p_n = dist.probabilities
    quiet = (p_n * no_dark * (1.0 - h) ** n) @ delivered
    total = p_n @ delivered
    return np.vstack([quiet, total - quiet])


def herald_click_probability(source: SourceParams, herald: DetectorParams, window_ns: float) -> float:
    """Exact per-pulse herald click probability, 1 - (1 - p_dark) * E[(1 - H)^n]."""
    dist = source_distribution(source)
    n = np.arange(dist.n_max + 1)
    h = source.herald_transmission * herald.efficiency
    no_dark = 1.0 - dark_click_probability(herald, window_ns)
    return float(1.0 - no_dark * (dist.probabilities @ (1.0 - h) ** n))


def _click(dark: float, transmission: float, n: np.ndarray) -> np.ndarray:
    """1 - (1 - dark) (1 - transmission)^n, kept accurate when dark is tiny and n = 0."""
    quiet = (1.0 - transmission) ** n
    return (1.0 - quiet) + dark * quiet


def heralded_g2(
    source: SourceParams,
    herald_detector: DetectorParams,
    signal_detectors: tuple[DetectorParams, DetectorParams],
    window_ns: float,
) -> float:
    """Conditional g2(0) of the heralded arm behind a balanced splitter, by exact enumeration.

    g2 = P(h, a, b) P(h) / (P(h, a) P(h, b)), with binomial losses on both arms and
    dark counts on all three detectors.
    """
    det_a, det_b = signal_detectors
    dist = source_distribution(source)
    n = np.arange(dist.n_max + 1)
    p_n = dist.probabilities
    h = source.herald_transmission * herald_detector.efficiency
    t = source.signal_transmission
    ta, tb = 0.5 * t * det_a.efficiency, 0.5 * t * det_b.efficiency
    da = dark_click_probability(det_a, window_ns)
    db = dark_click_probability(det_b, window_ns)

    herald = _click(dark_click_probability(herald_detector, window_ns), h, n)
    click_a = _click(da, ta, n)
    click_b = _click(db, tb, n)
    # the photons split between a and b, so the joint click is the product plus an
    # anticorrelation term that vanishes at n = 0
    split = (1.0 - ta - tb) ** n - ((1.0 - ta) * (1.0 - tb)) ** n
    click_ab = click_a * click_b + (1.0 - da) * (1.0 - db) * split

    p_h = p_n @ herald
    p_ha = p_n @ (herald * click_a)
    p_hb = p_n @ (herald * click_b)
    p_hab = p_n @ (herald * click_ab)
    if p_ha == 0 or p_hb == 0:
        return 0.0
    return float(p_hab * p_h / (p_ha * p_hb))


def _g2_minimum(g2_of: Callable[[float], float]) -> tuple[float, float]:
    """Global minimum of g2 over the bracket: a log grid search refined by a bounded scalar minimisation.

    With dark counts g2 equals 1 at mu = 0 and is not unimodal below the minimum.
    """
    lo, hi = MU_BRACKET
    grid = np.concatenate([[lo], np.geomspace(MU_GRID_FLOOR, hi, MU_GRID_POINTS)])
    values = np.array([g2_of(float(mu)) for mu in grid])
    i = int(np.argmin(values))
    if values[i] == 0.0 or i in (0, grid.size - 1):
        return float(grid[i]), float(values[i])
    refined = minimize_scalar(g2_of, bounds=(grid[i - 1], grid[i + 1]), method="bounded")
    if refined.fun < values[i]:
        return float(refined.x), float(refined.fun)
    return float(grid[i]), float(values[i])


def mu_from_g2(
    g2: float,
    source: SourceParams,
    herald_detector: DetectorParams,
    signal_detectors: tuple[DetectorParams, DetectorParams],
    window_ns: float,
    xtol: float = 1e-14,
) -> float:
    """Invert heralded_g2 for the mean pair number on the rising branch above the g2 minimum."""
    if not 0 <= g2 < 1:
        raise CalibrationError(f"sources: g2 must lie in [0, 1), got {g2}")

    def g2_of(mu: float) -> float:
        trial = source.model_copy(update={"mu": mu})
        return heralded_g2(trial, herald_detector, signal_detectors, window_ns)

    lo, g2_lo = _g2_minimum(g2_of)
    hi = MU_BRACKET[1]
    if g2_lo == g2:
        return lo
    if g2 < g2_lo or g2_of(hi) < g2:
        raise CalibrationError(
            f"sources: no mean pair number in [{lo:.3g}, {hi}] reproduces g2={g2} (minimum g2 is {g2_lo:.4g})"
        )
    mu = brentq(lambda m: g2_of(m) - g2, lo, hi, xtol=xtol)
    logger.info(f"Calibrated mu={mu:.6g} from g2={g2}")
    return mu


def sample_emission(rng: np.random.Generator, mu: float, size: int | None = None) -> int | np.ndarray:
    """Thermal pair number by inverse CDF on the geometric tail, P(N >= n) = x^n with x = mu/(1+mu)."""
    if mu <= 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    u = 1.0 - rng.random(size)  # in (0, 1]
    n = np.floor(np.log(u) / math.log(mu / (1.0 + mu))).astype(np.int64)
    return int(n) if size is None else n


def sample_from_table(
    rng: np.random.Generator, probabilities: np.ndarray, size: int, start: int = 0
) -> np.ndarray:
    """Inverse-CDF draws from a probability table restricted to indices >= start."""
    p = np.asarray(probabilities, dtype=float)[start:]
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return start + np.searchsorted(cdf, rng.random(size), side="right").clip(max=p.size - 1)
