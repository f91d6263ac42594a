"""Event-driven Monte Carlo of the two heralded sources, the upconversion stage and the detectors.

Pulse slots are never visited one by one: every random process is a thinned
Bernoulli sequence over slots, sampled by geometric skips between events. The
slot range is cut into fixed chunks, and each (chunk, process) pair owns a
Philox counter-based generator, so results do not depend on the worker count.
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from functools import partial

import numpy as np
from scipy.optimize import curve_fit

from tripletsim.analysis import build_twofold_histogram
from tripletsim.detectors import dark_click_probability
from tripletsim.errors import CapacityError, DomainError
from tripletsim.models.config import ClockParams, ExperimentConfig
from tripletsim.models.detectors import DetectorParams
from tripletsim.models.results import DelayScanFit, DelayScanPoint, SimulationResult, TimeTagStream
from tripletsim.models.sources import SourceParams
from tripletsim.rates import d3_conversion_probability, slot_probabilities
from tripletsim.sources import sample_from_table, source_distribution, thinned

logger = logging.getLogger(__name__)

CHUNK_SLOTS_FULL = 2**26
CHUNK_SLOTS_CONDITIONED = 2**38
MAX_SCAN_DELAY_PULSE_WIDTHS = 10.0


class Stream(IntEnum):
    SOURCE1 = 0
    SOURCE2 = 1
    DARK1 = 2
    DARK2 = 3
    DARK3 = 4
    CONVERSION = 5
    HERALD_TOTALS = 6


# delay-scan point i uses streams DELAY_STREAM_BASE + DELAY_STREAM_STRIDE * i + Stream
DELAY_STREAM_BASE = 16
DELAY_STREAM_STRIDE = 8


def stream_key(seed: int) -> np.ndarray:
    """128-bit Philox key derived from a 64-bit seed."""
    return np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)


def chunk_generator(key: np.ndarray, chunk: int, stream: int) -> np.random.Generator:
    counter = np.array([0, 0, stream, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def skip_sample(rng: np.random.Generator, p: float, start: int, stop: int) -> np.ndarray:
    """Indices in [start, stop) of a Bernoulli(p) sequence, drawn as geometric gaps."""
    if stop <= start or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(start, stop, dtype=np.int64)
    parts = []
    position = start - 1
    while True:
        expected = (stop - 1 - position) * p
        batch = int(expected + 5.0 * math.sqrt(expected) + 16)
        slots = position + np.cumsum(rng.geometric(p, size=batch))
        if slots[-1] >= stop:
            parts.append(slots[slots < stop])
            break
        parts.append(slots)
        position = int(slots[-1])
    return np.concatenate(parts)


def slot_times_ps(slots: np.ndarray, numerator: int, denominator: int) -> np.ndarray:
    """round(n * period) for period = numerator/denominator ps, exact in the integer part."""
    whole, rest = np.divmod(np.asarray(slots, dtype=np.int64), denominator)
    return whole * numerator + np.rint(rest * (numerator / denominator)).astype(np.int64)


@dataclass(frozen=True)
class _Timebase:
    numerator: int
    denominator: int

    @classmethod
    def of(cls, clock: ClockParams) -> "_Timebase":
        period = clock.period_fraction
        return cls(period.numerator, period.denominator)

    def times(self, slots: np.ndarray) -> np.ndarray:
        return slot_times_ps(slots, self.numerator, self.denominator)

    def duration(self, slots: int) -> int:
        return int(self.times(np.array([slots]))[0])


@dataclass(frozen=True)
class _SourcePlan:
    # law of the number of pairs with at least one member surviving its arm
    active_table: np.ndarray
    herald_given_active: float
    signal_transmission: float
    herald_dark: float

    @classmethod
    def of(cls, source: SourceParams, herald: DetectorParams, window_ns: float) -> "_SourcePlan":
        h = source.herald_transmission * herald.efficiency
        t = source.signal_transmission
        active = 1.0 - (1.0 - h) * (1.0 - t)
        return cls(
            active_table=thinned(source_distribution(source), active).probabilities,
            herald_given_active=h / active if active > 0 else 0.0,
            signal_transmission=t,
            herald_dark=dark_click_probability(herald, window_ns),
        )

    @property
    def active_prob(self) -> float:
        return float(1.0 - self.active_table[0])

    def sample(
        self, rng: np.random.Generator, start: int, stop: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Slots with an active pair, whether the herald photon clicked, and telecom photons delivered."""
        slots = skip_sample(rng, self.active_prob, start, stop)
        if slots.size == 0:
            return slots, np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)
        pairs = sample_from_table(rng, self.active_table, slots.size, start=1)
        detected = rng.binomial(pairs, self.herald_given_active)
        delivered = rng.binomial(detected, self.signal_transmission) + (pairs - detected)
        return slots, detected > 0, delivered


def _run_chunks(task: Callable[[int], dict], n_chunks: int, workers: int) -> list[dict]:
    if workers <= 1 or n_chunks <= 1:
        return [task(chunk) for chunk in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_chunks), chunksize=max(1, n_chunks // (4 * workers))))


def _chunk_bounds(chunk: int, chunk_slots: int, slots: int) -> tuple[int, int]:
    start = chunk * chunk_slots
    return start, min(start + chunk_slots, slots)


def _sum_truth(parts: list[dict]) -> dict[str, int]:
    truth: dict[str, int] = {}
    for part in parts:
        for key, value in part["truth"].items():
            truth[key] = truth.get(key, 0) + int(value)
    return truth


def _streams(
    config: ExperimentConfig, slot_lists: Sequence[np.ndarray], timebase: _Timebase, slots: int
) -> list[TimeTagStream]:
    duration = timebase.duration(slots)
    return [
        TimeTagStream(
            label=det.label, channel=det.channel, timestamps_ps=timebase.times(s), duration_ps=duration
        )
        for det, s in zip(config.detectors, slot_lists, strict=True)
    ]


@dataclass(frozen=True)
class _FullPlan:
    key: np.ndarray
    slots: int
    sources: tuple[_SourcePlan, _SourcePlan]
    conversion: float
    d3_dark: float


def _full_chunk(plan: _FullPlan, chunk: int) -> dict:
    start, stop = _chunk_bounds(chunk, CHUNK_SLOTS_FULL, plan.slots)
    s1, click1, k1 = plan.sources[0].sample(chunk_generator(plan.key, chunk, Stream.SOURCE1), start, stop)
    s2, click2, k2 = plan.sources[1].sample(chunk_generator(plan.key, chunk, Stream.SOURCE2), start, stop)
    herald_dark1, herald_dark2 = plan.sources[0].herald_dark, plan.sources[1].herald_dark
    dark1 = skip_sample(chunk_generator(plan.key, chunk, Stream.DARK1), herald_dark1, start, stop)
    dark2 = skip_sample(chunk_generator(plan.key, chunk, Stream.DARK2), herald_dark2, start, stop)
    dark3 = skip_sample(chunk_generator(plan.key, chunk, Stream.DARK3), plan.d3_dark, start, stop)

    lit1, lit2 = k1 > 0, k2 > 0
    both, i1, i2 = np.intersect1d(s1[lit1], s2[lit2], assume_unique=True, return_indices=True)
    pairs = k1[lit1][i1] * k2[lit2][i2]
    converted = chunk_generator(plan.key, chunk, Stream.CONVERSION).binomial(pairs, plan.conversion)
    photon3 = both[converted > 0]

    d1 = np.union1d(s1[click1], dark1)
    d2 = np.union1d(s2[click2], dark2)
    d3 = np.union1d(photon3, dark3)
    heralded = np.intersect1d(d1, d2, assume_unique=True)
    return {
        "slots": (d1, d2, d3),
        "truth": {
            "true_triples": np.intersect1d(photon3, heralded, assume_unique=True).size,
            "d3_photon_clicks": photon3.size,
            "d3_dark_clicks": dark3.size,
            "herald1_clicks": d1.size,
            "herald2_clicks": d2.size,
            "herald_twofolds": heralded.size,
        },
    }


def simulate_full(
    config: ExperimentConfig, duration_s: float, seed: int, workers: int = 1
) -> SimulationResult:
    """Every click of every detector, pulse by pulse."""
    if duration_s <= 0:
        raise DomainError(f"simulation: duration must be positive, got {duration_s} s")
    slots = config.clock.slots(duration_s)
    probs = slot_probabilities(config)
    expected_tags = slots * (probs.herald1 + probs.herald2 + probs.d3_click)
    if expected_tags > config.memory_cap_tags:
        raise CapacityError(
            f"simulation: about {expected_tags:.3g} tags expected, "
            f"above the cap of {config.memory_cap_tags:.3g}; "
            "shorten the run or use conditioned mode"
        )
    window_ns = config.clock.period_ns
    plan = _FullPlan(
        key=stream_key(seed),
        slots=slots,
        sources=(
            _SourcePlan.of(config.source1, config.d1, window_ns),
            _SourcePlan.of(config.source2, config.d2, window_ns),
        ),
        conversion=d3_conversion_probability(config),
        d3_dark=probs.d3_dark,
    )
    n_chunks = max(1, -(-slots // CHUNK_SLOTS_FULL))
    start = time.monotonic()
    parts = _run_chunks(partial(_full_chunk, plan), n_chunks, workers)
    slot_lists = [np.concatenate([p["slots"][i] for p in parts]) for i in range(3)]
    streams = _streams(config, slot_lists, _Timebase.of(config.clock), slots)
    duration = time.monotonic() - start
    logger.info(f"Full simulation of {slots} slots in {n_chunks} chunks took {duration:.2f} s")
    return SimulationResult(
        streams=streams,
        truth_counts=_sum_truth(parts),
        seed=seed,
        mode="full",
        slots=slots,
        duration_s=duration_s,
        config_fingerprint=config.fingerprint(),
    )


@dataclass(frozen=True)
class _ConditionedPlan:
    key: np.ndarray
    slots: int
    d3_click: float
    # P(herald1, herald2, photon | D3 click), indexed c1 * 4 + c2 * 2 + photon
    categories: np.ndarray
    herald_marginals: tuple[float, float]
    window_slots: int


def _neighbours(
    rng: np.random.Generator, p: float, centres: np.ndarray, reach: int, slots: int
) -> np.ndarray:
    """Herald clicks in the union of the slots within +-reach of the sorted centres, centres excluded.

    Overlapping windows are merged first so that every slot is drawn at most once.
    """
    if centres.size == 0:
        return np.empty(0, dtype=np.int64)
    lo = np.maximum(centres - reach, 0)
    hi = np.minimum(centres + reach + 1, slots)
    opens = np.ones(centres.size, dtype=bool)
    opens[1:] = lo[1:] >= np.maximum.accumulate(hi)[:-1]
    first = np.flatnonzero(opens)
    starts = lo[first]
    lengths = np.maximum.reduceat(hi, first) - starts
    offsets = np.cumsum(lengths) - lengths
    virtual = skip_sample(rng, p, 0, int(lengths.sum()))
    interval = np.searchsorted(offsets, virtual, side="right") - 1
    found = starts[interval] + (virtual - offsets[interval])
    return found[~np.isin(found, centres, assume_unique=True)]


def _conditioned_chunk(plan: _ConditionedPlan, chunk: int) -> dict:
    start, stop = _chunk_bounds(chunk, CHUNK_SLOTS_CONDITIONED, plan.slots)
    d3 = skip_sample(chunk_generator(plan.key, chunk, Stream.DARK3), plan.d3_click, start, stop)
    if d3.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return {"slots": (empty, empty, d3), "truth": {}}
    categories = chunk_generator(plan.key, chunk, Stream.CONVERSION)
    category = sample_from_table(categories, plan.categories, d3.size)
    same1, same2, photon = (category & 4) > 0, (category & 2) > 0, (category & 1) > 0

    p1, p2 = plan.herald_marginals
    reach = plan.window_slots
    near1 = _neighbours(chunk_generator(plan.key, chunk, Stream.SOURCE1), p1, d3, reach, plan.slots)
    near2 = _neighbours(chunk_generator(plan.key, chunk, Stream.SOURCE2), p2, d3, reach, plan.slots)
    return {
        "slots": (np.concatenate([d3[same1], near1]), np.concatenate([d3[same2], near2]), d3),
        "truth": {
            "true_triples": int(np.count_nonzero(photon & same1 & same2)),
            "d3_photon_clicks": int(np.count_nonzero(photon)),
            "d3_dark_clicks": int(np.count_nonzero(~photon)),
        },
    }


def simulate_conditioned(
    config: ExperimentConfig, duration_s: float, seed: int, workers: int = 1
) -> SimulationResult:
    """Only the clicks the threefold analyzer can see: D3 clicks and herald clicks inside their windows.

    Each D3 click carries its same-slot herald outcomes drawn from the exact joint law;
    heralds in the surrounding slots are drawn at their marginal rates. Herald singles
    totals, which the analyzer never sees, are reported in the truth counts.
    """
    if duration_s <= 0:
        raise DomainError(f"simulation: duration must be positive, got {duration_s} s")
    slots = config.clock.slots(duration_s)
    probs = slot_probabilities(config)
    categories = probs.joint / probs.d3_click if probs.d3_click > 0 else probs.joint
    reach_ps = (config.analysis.half_window_bins + 0.5) * config.bin_width_ps
    window_slots = math.ceil(reach_ps / config.clock.period_ps)
    key = stream_key(seed)
    plan = _ConditionedPlan(
        key=key,
        slots=slots,
        d3_click=probs.d3_click,
        categories=categories,
        herald_marginals=(probs.herald1, probs.herald2),
        window_slots=window_slots,
    )
    n_chunks = max(1, -(-slots // CHUNK_SLOTS_CONDITIONED))
    start = time.monotonic()
    parts = _run_chunks(partial(_conditioned_chunk, plan), n_chunks, workers)
    # neighbourhoods may reach across chunk edges and overlap each other
    slot_lists = [np.unique(np.concatenate([p["slots"][i] for p in parts])) for i in range(3)]
    streams = _streams(config, slot_lists, _Timebase.of(config.clock), slots)

    truth = {"true_triples": 0, "d3_photon_clicks": 0, "d3_dark_clicks": 0} | _sum_truth(parts)
    totals = chunk_generator(key, 0, Stream.HERALD_TOTALS)
    truth["herald1_clicks"] = int(totals.binomial(slots, probs.herald1))
    truth["herald2_clicks"] = int(totals.binomial(slots, probs.herald2))
    duration = time.monotonic() - start
    logger.info(f"Conditioned simulation of {slots} slots in {n_chunks} chunks took {duration:.2f} s")
    return SimulationResult(
        streams=streams,
        truth_counts=truth,
        seed=seed,
        mode="conditioned",
        slots=slots,
        duration_s=duration_s,
        config_fingerprint=config.fingerprint(),
        window_slots=window_slots,
    )


@dataclass(frozen=True)
class _ScanPlan:
    key: np.ndarray
    slots: int
    stream_base: int
    source: _SourcePlan
    seed_pairs: float
    seed_signal_transmission: float
    seed_herald_efficiency: float
    seed_herald_dark: float
    conversion: float
    d3_dark: float


def _scan_chunk(plan: _ScanPlan, chunk: int) -> dict:
    """D3 clicks, and the seeded source's herald clicks in those same slots."""
    start, stop = _chunk_bounds(chunk, CHUNK_SLOTS_FULL, plan.slots)

    def rng(stream: Stream) -> np.random.Generator:
        return chunk_generator(plan.key, chunk, plan.stream_base + stream)

    slots, _, delivered = plan.source.sample(rng(Stream.SOURCE1), start, stop)
    lit = delivered > 0
    seeded = rng(Stream.SOURCE2)
    stimulated = seeded.poisson(plan.seed_pairs, size=int(lit.sum()))
    coherent = seeded.binomial(stimulated, plan.seed_signal_transmission)
    converted = rng(Stream.CONVERSION).binomial(delivered[lit] * coherent, plan.conversion)
    d3 = np.union1d(slots[lit][converted > 0], skip_sample(rng(Stream.DARK3), plan.d3_dark, start, stop))

    # stimulated pairs in the D3 slots: reuse the lit draws, fresh Poisson draws elsewhere
    pairs = seeded.poisson(plan.seed_pairs, size=d3.size)
    lit_slots = slots[lit]
    at = np.searchsorted(lit_slots, d3)
    known = at < lit_slots.size
    known[known] = lit_slots[at[known]] == d3[known]
    pairs[known] = stimulated[at[known]]
    herald_rng = rng(Stream.DARK2)
    clicked = (herald_rng.binomial(pairs, plan.seed_herald_efficiency) > 0) | (
        herald_rng.random(d3.size) < plan.seed_herald_dark
    )
    return {"slots": (d3[clicked], d3), "truth": {}}


def simulate_delay_scan(
    config: ExperimentConfig, delays_ps: Sequence[float], seed: int, workers: int = 1
) -> list[DelayScanPoint]:
    """Twofold rate between the seeded source's herald and D3 while that source emits a coherent field.

    The seeded source emits a Poissonian number of stimulated pairs per slot, mean
    seed_mean_photons. Their telecom members meet the unseeded source's photons in the
    waveguide and their herald-wavelength members reach the seeded source's herald detector.
    The delay enters through the pulse-overlap factor. The herald is only resolved in slots
    where D3 clicked, which is all the zero-delay twofold bin needs.
    """
    limit = MAX_SCAN_DELAY_PULSE_WIDTHS * config.clock.pulse_fwhm_ps
    scan = config.delay_scan
    if scan.seeded_source == 2:
        seeded, unseeded, herald, unseeded_herald = config.source2, config.source1, config.d2, config.d1
    else:
        seeded, unseeded, herald, unseeded_herald = config.source1, config.source2, config.d1, config.d2
    window_ns = config.clock.period_ns
    source = _SourcePlan.of(unseeded, unseeded_herald, window_ns)
    slots = config.clock.slots(scan.dwell_s)
    timebase = _Timebase.of(config.clock)
    duration = timebase.duration(slots)
    key = stream_key(seed)
    n_chunks = max(1, -(-slots // CHUNK_SLOTS_FULL))

    points = []
    for i, delay in enumerate(delays_ps):
        if abs(delay) > limit:
            raise DomainError(f"simulation: delay {delay} ps is beyond +-{limit} ps")
        plan = _ScanPlan(
            key=key,
            slots=slots,
            stream_base=DELAY_STREAM_BASE + DELAY_STREAM_STRIDE * i,
            source=source,
            seed_pairs=scan.seed_mean_photons,
            seed_signal_transmission=seeded.signal_transmission,
            seed_herald_efficiency=seeded.herald_transmission * herald.efficiency,
            seed_herald_dark=dark_click_probability(herald, window_ns),
            conversion=d3_conversion_probability(config, delay),
            d3_dark=dark_click_probability(config.d3, window_ns),
        )
        parts = _run_chunks(partial(_scan_chunk, plan), n_chunks, workers)
        herald_tags, d3_tags = (
            TimeTagStream(
                label=det.label,
                channel=det.channel,
                timestamps_ps=timebase.times(np.concatenate([p["slots"][j] for p in parts])),
                duration_ps=duration,
            )
            for j, det in enumerate((herald, config.d3))
        )
        coincidences = build_twofold_histogram(herald_tags, d3_tags, config.bin_width_ps, 0).count_at(0)
        points.append(
            DelayScanPoint(
                delay_ps=float(delay),
                twofold_rate_hz=coincidences / scan.dwell_s,
                coincidences=coincidences,
                herald_label=herald.label,
                dwell_s=scan.dwell_s,
            )
        )
        logger.info(f"Delay {delay:+.2f} ps: {coincidences} {herald.label}-{config.d3.label} coincidences")
    return points


def _gaussian_floor(
    delay: np.ndarray, amplitude: float, center: float, fwhm: float, floor: float
) -> np.ndarray:
    return amplitude * np.exp(-4.0 * math.log(2.0) * (delay - center) ** 2 / fwhm**2) + floor


def fit_delay_scan(points: Sequence[DelayScanPoint]) -> DelayScanFit:
    """Gaussian-plus-floor fit of the twofold rate against delay."""
    if len(points) < 4:
        raise DomainError(f"simulation: a delay-scan fit needs at least 4 points, got {len(points)}")
    delay = np.array([p.delay_ps for p in points])
    rate = np.array([p.twofold_rate_hz for p in points])
    # Poisson weights; a zero-count point still carries one count of uncertainty
    sigma = np.sqrt(np.maximum([p.coincidences for p in points], 1)) / np.array([p.dwell_s for p in points])
    p0 = [rate.max() - rate.min(), delay[np.argmax(rate)], (delay.max() - delay.min()) / 4, rate.min()]
    try:
        params, _ = curve_fit(_gaussian_floor, delay, rate, p0=p0, sigma=sigma, maxfev=10_000)
    except RuntimeError as e:
        raise DomainError(f"simulation: delay-scan fit did not converge: {e}") from e
    amplitude, center, fwhm, floor = (float(v) for v in params)
    return DelayScanFit(center_ps=center, fwhm_ps=abs(fwhm), amplitude_hz=amplitude, floor_hz=floor)


@dataclass(frozen=True)
class _G2Plan:
    key: np.ndarray
    slots: int
    emission_table: np.ndarray
    herald_efficiency: float
    signal_transmission: float
    arm_efficiencies: tuple[float, float]
    darks: tuple[float, float, float]


def _g2_chunk(plan: _G2Plan, chunk: int) -> dict:
    start, stop = _chunk_bounds(chunk, CHUNK_SLOTS_FULL, plan.slots)
    rng = chunk_generator(plan.key, chunk, Stream.SOURCE1)
    slots = skip_sample(rng, float(1.0 - plan.emission_table[0]), start, stop)
    if slots.size:
        pairs = sample_from_table(rng, plan.emission_table, slots.size, start=1)
    else:
        pairs = np.zeros(0, dtype=np.int64)
    herald = rng.binomial(pairs, plan.herald_efficiency) > 0
    delivered = rng.binomial(pairs, plan.signal_transmission)
    arm_a = rng.binomial(delivered, 0.5)
    click_a = rng.binomial(arm_a, plan.arm_efficiencies[0]) > 0
    click_b = rng.binomial(delivered - arm_a, plan.arm_efficiencies[1]) > 0
    clicks = (slots[herald], slots[click_a], slots[click_b])
    darks = (Stream.DARK1, Stream.DARK2, Stream.DARK3)
    merged = tuple(
        np.union1d(c, skip_sample(chunk_generator(plan.key, chunk, s), p, start, stop))
        for c, s, p in zip(clicks, darks, plan.darks, strict=True)
    )
    return {"slots": merged, "truth": {}}


def simulate_g2_measurement(
    source: SourceParams,
    herald: DetectorParams,
    signal_detectors: tuple[DetectorParams, DetectorParams],
    pulses: int,
    seed: int,
    clock: ClockParams | None = None,
    workers: int = 1,
) -> tuple[TimeTagStream, TimeTagStream, TimeTagStream]:
    """Herald and the two outputs of a balanced splitter on the heralded arm, for a g2 measurement."""
    if pulses <= 0:
        raise DomainError(f"simulation: pulse count must be positive, got {pulses}")
    clock = clock or ClockParams()
    window_ns = clock.period_ns
    det_a, det_b = signal_detectors
    plan = _G2Plan(
        key=stream_key(seed),
        slots=pulses,
        emission_table=source_distribution(source).probabilities,
        herald_efficiency=source.herald_transmission * herald.efficiency,
        signal_transmission=source.signal_transmission,
        arm_efficiencies=(det_a.efficiency, det_b.efficiency),
        darks=tuple(dark_click_probability(d, window_ns) for d in (herald, det_a, det_b)),
    )
    n_chunks = max(1, -(-pulses // CHUNK_SLOTS_FULL))
    parts = _run_chunks(partial(_g2_chunk, plan), n_chunks, workers)
    timebase = _Timebase.of(clock)
    duration = timebase.duration(pulses)
    herald_tags, a_tags, b_tags = (
        TimeTagStream(
            label=det.label,
            channel=det.channel,
            timestamps_ps=timebase.times(np.concatenate([p["slots"][i] for p in parts])),
            duration_ps=duration,
        )
        for i, det in enumerate((herald, det_a, det_b))
    )
    return herald_tags, a_tags, b_tags
