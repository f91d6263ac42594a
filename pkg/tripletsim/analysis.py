"""Coincidence histograms, background and significance statistics over time-tag streams."""

import logging
import math
import time

import numpy as np
from scipy.special import gammaln, logsumexp

from tripletsim.errors import DomainError, TimeTagFormatError
from tripletsim.models.config import AnalysisParams
from tripletsim.models.results import (
    BackgroundEstimate,
    CoincHistogram1D,
    CoincHistogram2D,
    G2Estimate,
    Significance,
    SignificanceReport,
    TimeTagStream,
)

logger = logging.getLogger(__name__)

MIN_BACKGROUND_PIXELS = 30
PS_PER_S = 1e12


def _check_sorted(*streams: TimeTagStream) -> None:
    for s in streams:
        if not s.is_sorted():
            raise TimeTagFormatError(f"analysis: {s.label} timestamps are not strictly increasing")


def _check_durations(*streams: TimeTagStream) -> None:
    durations = {s.duration_ps for s in streams}
    if len(durations) > 1:
        labels = ", ".join(f"{s.label}={s.duration_ps}" for s in streams)
        raise DomainError(f"analysis: streams cover different durations ({labels} ps)")


def _bin_index(delta_ps: np.ndarray, bin_width_ps: float) -> np.ndarray:
    # round to nearest, bin centres on exact multiples of the bin width
    return np.floor(delta_ps / bin_width_ps + 0.5).astype(np.int64)


def _window_pairs(
    t_ref: np.ndarray, t_other: np.ndarray, bin_width_ps: float, half_window_bins: int
) -> tuple[np.ndarray, np.ndarray]:
    """All (ref index, bin of t_ref - t_other) with |bin| <= half_window_bins, grouped by ref index."""
    reach = int(math.ceil((half_window_bins + 0.5) * bin_width_ps))
    lo = np.searchsorted(t_other, t_ref - reach, side="left")
    hi = np.searchsorted(t_other, t_ref + reach, side="right")
    counts = hi - lo
    total = int(counts.sum())
    ref = np.repeat(np.arange(t_ref.size), counts)
    starts = np.cumsum(counts) - counts
    other = np.arange(total) - np.repeat(starts, counts) + np.repeat(lo, counts)
    bins = _bin_index(t_ref[ref] - t_other[other], bin_width_ps)
    keep = np.abs(bins) <= half_window_bins
    return ref[keep], bins[keep]


def build_threefold_histogram(
    s1: TimeTagStream, s2: TimeTagStream, s3: TimeTagStream, bin_width_ps: float, half_window_bins: int
) -> CoincHistogram2D:
    """Histogram of (tau31, tau32) over every D1 and D2 tag in the window of each D3 tag."""
    if bin_width_ps <= 0 or half_window_bins < 0:
        raise DomainError(f"analysis: bad binning ({bin_width_ps} ps, {half_window_bins} bins)")
    _check_sorted(s1, s2, s3)
    _check_durations(s1, s2, s3)
    start = time.monotonic()
    t3 = s3.timestamps_ps
    ref31, bins31 = _window_pairs(t3, s1.timestamps_ps, bin_width_ps, half_window_bins)
    ref32, bins32 = _window_pairs(t3, s2.timestamps_ps, bin_width_ps, half_window_bins)

    # every D1 partner of a D3 tag pairs with every D2 partner of the same tag
    n2 = np.bincount(ref32, minlength=t3.size)
    start2 = np.cumsum(n2) - n2
    reps = n2[ref31]
    within = np.arange(int(reps.sum())) - np.repeat(np.cumsum(reps) - reps, reps)
    idx2 = np.repeat(start2[ref31], reps) + within
    tau31 = np.repeat(bins31, reps)
    tau32 = bins32[idx2]

    side = 2 * half_window_bins + 1
    flat = (tau31 + half_window_bins) * side + (tau32 + half_window_bins)
    counts = np.bincount(flat, minlength=side * side).reshape(side, side)
    offsets = np.arange(-half_window_bins, half_window_bins + 1)
    duration = time.monotonic() - start
    logger.info(f"Threefold histogram of {tau31.size} triples from {t3.size} D3 tags in {duration:.2f} s")
    return CoincHistogram2D(
        bin_width_ps=bin_width_ps,
        tau31_offsets=offsets,
        tau32_offsets=offsets,
        counts=counts.astype(np.int64),
        duration_s=s3.duration_ps / PS_PER_S,
    )


def build_twofold_histogram(
    sa: TimeTagStream, sb: TimeTagStream, bin_width_ps: float, half_window_bins: int
) -> CoincHistogram1D:
    """Histogram of tau = t_b - t_a."""
    if bin_width_ps <= 0 or half_window_bins < 0:
        raise DomainError(f"analysis: bad binning ({bin_width_ps} ps, {half_window_bins} bins)")
    _check_sorted(sa, sb)
    _check_durations(sa, sb)
    _, bins = _window_pairs(sb.timestamps_ps, sa.timestamps_ps, bin_width_ps, half_window_bins)
    side = 2 * half_window_bins + 1
    counts = np.bincount(bins + half_window_bins, minlength=side)
    return CoincHistogram1D(
        bin_width_ps=bin_width_ps,
        offsets=np.arange(-half_window_bins, half_window_bins + 1),
        counts=counts.astype(np.int64),
        duration_s=sa.duration_ps / PS_PER_S,
    )


def estimate_background(
    h: CoincHistogram2D, exclude: tuple[int, int] = (0, 0), radius: int = 0
) -> BackgroundEstimate:
    """Mean and dispersion index (variance/mean) of all pixels outside the excluded square."""
    tau31, tau32 = np.meshgrid(h.tau31_offsets, h.tau32_offsets, indexing="ij")
    excluded = (np.abs(tau31 - exclude[0]) <= radius) & (np.abs(tau32 - exclude[1]) <= radius)
    pixels = h.counts[~excluded]
    if pixels.size < MIN_BACKGROUND_PIXELS:
        raise DomainError(
            f"analysis: {pixels.size} background pixels, at least {MIN_BACKGROUND_PIXELS} are needed"
        )
    mean = float(pixels.mean())
    dispersion = float(pixels.var(ddof=1)) / mean if mean > 0 else None
    return BackgroundEstimate(mean=mean, dispersion=dispersion, n_pixels=int(pixels.size))


def significance(peak_count: int, background_mean: float) -> Significance:
    """Gaussian z-score of the peak on the Poisson background, (peak - mean)/sqrt(mean)."""
    if background_mean < 0:
        raise DomainError(f"analysis: background mean must be non-negative, got {background_mean}")
    if background_mean == 0:
        z = math.inf if peak_count > 0 else 0.0
        return Significance(peak_count=peak_count, background_mean=0.0, z_sigma=z, infinite=peak_count > 0)
    z = (peak_count - background_mean) / math.sqrt(background_mean)
    return Significance(peak_count=peak_count, background_mean=background_mean, z_sigma=z)


def poisson_tail_log10(k: int, lam: float) -> float:
    """log10 P(X >= k) for X ~ Poisson(lam), summed in log space."""
    if lam <= 0:
        raise DomainError(f"analysis: Poisson mean must be positive, got {lam}")
    if k <= 0:
        return 0.0
    upper = int(max(k, lam) + 40.0 * math.sqrt(lam) + 100)
    j = np.arange(k, upper + 1, dtype=float)
    log_terms = -lam + j * math.log(lam) - gammaln(j + 1.0)
    return min(0.0, float(logsumexp(log_terms)) / math.log(10.0))


def analyze_threefold(
    s1: TimeTagStream,
    s2: TimeTagStream,
    s3: TimeTagStream,
    params: AnalysisParams,
    peak: tuple[int, int] = (0, 0),
) -> tuple[CoincHistogram2D, SignificanceReport]:
    """Histogram, background, z-score and accidental tail probability of the peak pixel."""
    bin_width = params.bin_width_ps
    if bin_width is None:
        raise DomainError("analysis: bin width is unresolved")
    h = build_threefold_histogram(s1, s2, s3, bin_width, params.half_window_bins)
    background = estimate_background(h, exclude=peak, radius=params.peak_exclusion_radius)
    peak_count = h.count_at(*peak)
    sig = significance(peak_count, background.mean)
    if background.mean > 0:
        tail = poisson_tail_log10(peak_count, background.mean)
    else:
        tail = 0.0 if peak_count == 0 else -math.inf
    logger.info(f"Peak {peak_count} over background {background.mean:.3f}: z={sig.z_sigma:.2f}")
    return h, SignificanceReport(
        peak_coords=peak,
        peak_count=peak_count,
        background_mean=background.mean,
        dispersion=background.dispersion,
        z_sigma=sig.z_sigma,
        z_infinite=sig.infinite,
        tail_log10_prob=tail,
        n_pixels=background.n_pixels,
        histogram_total=h.total,
        exclusion_radius=params.peak_exclusion_radius,
    )


def _has_same_bin_partner(herald: np.ndarray, signal: np.ndarray, bin_width_ps: float) -> np.ndarray:
    ref, bins = _window_pairs(herald, signal, bin_width_ps, 0)
    hit = np.zeros(herald.size, dtype=bool)
    hit[ref[bins == 0]] = True
    return hit


def estimate_conditional_g2(
    herald: TimeTagStream, signal_a: TimeTagStream, signal_b: TimeTagStream, bin_width_ps: float
) -> G2Estimate:
    """Heralded g2(0) = N_hab N_h / (N_ha N_hb) from same-bin coincidences."""
    _check_sorted(herald, signal_a, signal_b)
    a = _has_same_bin_partner(herald.timestamps_ps, signal_a.timestamps_ps, bin_width_ps)
    b = _has_same_bin_partner(herald.timestamps_ps, signal_b.timestamps_ps, bin_width_ps)
    n_h, n_ha, n_hb, n_hab = len(herald), int(a.sum()), int(b.sum()), int((a & b).sum())
    undefined = n_ha == 0 or n_hb == 0
    value = None if undefined else n_hab * n_h / (n_ha * n_hb)
    return G2Estimate(
        value=value, undefined=undefined, n_herald=n_h, n_herald_a=n_ha, n_herald_b=n_hb, n_herald_ab=n_hab
    )
