import logging
import os
import time
from collections.abc import Sequence

import numpy as np

from tripletsim.analysis import analyze_threefold, build_twofold_histogram, estimate_conditional_g2
from tripletsim.config import IDEAL_DETECTOR, resolve_config
from tripletsim.errors import ConfigError
from tripletsim.models.config import ExperimentConfig
from tripletsim.models.results import (
    CoincHistogram2D,
    ComparisonReport,
    DelayScanFit,
    DelayScanPoint,
    G2Estimate,
    PhasematchMap,
    RateReport,
    SignificanceReport,
    SimulationResult,
    TimeTagStream,
)
from tripletsim.optics import classical_map, default_map_axis
from tripletsim.rates import compare_mc_analytic, predict_rates
from tripletsim.simulation import (
    fit_delay_scan,
    simulate_conditioned,
    simulate_delay_scan,
    simulate_full,
    simulate_g2_measurement,
)


def _workers_from_env() -> int:
    value = os.environ.get("TRIPLET_SIM_THREADS")
    if value is None:
        return 1
    try:
        workers = int(value)
    except ValueError as e:
        raise ConfigError(f"config: TRIPLET_SIM_THREADS must be an integer, got `{value}`") from e
    if workers < 1:
        raise ConfigError(f"config: TRIPLET_SIM_THREADS must be at least 1, got {workers}")
    return workers


class TripletSim:
    """
    Runs the photon-photon upconversion experiment on one configuration.

    The client bundles the simulators, the coincidence analysis and the closed-form
    rate model behind one configuration, so that a simulated run, its analysis and
    the matching prediction always come from the same parameters.

    Example:
        sim = TripletSim(builtin_config("observed"), verbose=True)
        result = sim.simulate(duration_s=260 * 3600)
        histogram, report = sim.analyze(result.streams)
        print(report.peak_count, report.background_mean, report.z_sigma)
    """

    def __init__(self, config: ExperimentConfig, *, workers: int | None = None, verbose: bool = False):
        """
        Args:
            config: Experiment configuration. Sources given only by their measured g2
                are resolved to a mean pair number here.
            workers: Simulation worker processes. Defaults to TRIPLET_SIM_THREADS, or 1.
                Results do not depend on this number.
            verbose: Log progress at INFO level.
        """
        if verbose:
            logging.basicConfig(
                level=logging.INFO,
                format="tripletsim: %(levelname)s - %(message)s",
            )
        self.logger = logging.getLogger(__name__)
        self.config = resolve_config(config)
        self.workers = workers if workers is not None else _workers_from_env()
        self.logger.info(f"Using config {self.config.fingerprint()[:12]} with {self.workers} worker(s)")

    def simulate(
        self, duration_s: float | None = None, seed: int | None = None, mode: str | None = None
    ) -> SimulationResult:
        duration_s = duration_s or self.config.duration_s
        seed = self.config.seed if seed is None else seed
        mode = mode or self.config.mode
        self.logger.info(f"Simulating {duration_s:g} s in {mode} mode with seed {seed}")
        st = time.monotonic()
        match mode:
            case "full":
                result = simulate_full(self.config, duration_s, seed, self.workers)
            case "conditioned":
                result = simulate_conditioned(self.config, duration_s, seed, self.workers)
            case _:
                raise NotImplementedError(f"Unknown simulation mode `{mode}`")
        counts = ", ".join(f"{s.label}={len(s)}" for s in result.streams)
        self.logger.info(f"Simulated {counts} tags in {time.monotonic() - st:.2f} seconds")
        return result

    def analyze(self, streams: Sequence[TimeTagStream]) -> tuple[CoincHistogram2D, SignificanceReport]:
        s1, s2, s3 = streams
        return analyze_threefold(s1, s2, s3, self.config.analysis)

    def predict(self) -> RateReport:
        return predict_rates(self.config)

    def compare(
        self, result: SimulationResult, histogram: CoincHistogram2D, significance: SignificanceReport
    ) -> ComparisonReport:
        twofold = None
        if result.mode == "full":
            d1, d2, _ = result.streams
            twofold = build_twofold_histogram(d1, d2, self.config.bin_width_ps, 0).count_at(0)
        return compare_mc_analytic(
            result, histogram, significance, self.predict(), herald_twofold_count=twofold
        )

    def delay_scan(
        self, delays_ps: Sequence[float] | None = None, seed: int | None = None
    ) -> tuple[list[DelayScanPoint], DelayScanFit]:
        """Scan the inter-photon delay with one source replaced by its coherent seed field."""
        if delays_ps is None:
            fwhm = self.config.clock.pulse_fwhm_ps
            delays_ps = np.linspace(-3.0 * fwhm, 3.0 * fwhm, 25).tolist()
        seed = self.config.seed if seed is None else seed
        points = simulate_delay_scan(self.config, delays_ps, seed, self.workers)
        fit = fit_delay_scan(points)
        self.logger.info(f"Delay scan optimum at {fit.center_ps:+.2f} ps, FWHM {fit.fwhm_ps:.2f} ps")
        return points, fit

    def phasematch_map(
        self,
        lambda1_nm: np.ndarray | None = None,
        lambda2_nm: np.ndarray | None = None,
        power1_mw: float = 1.0,
        power2_mw: float = 1.0,
    ) -> PhasematchMap:
        pm = self.config.phasematch
        lambda1_nm = default_map_axis(pm) if lambda1_nm is None else lambda1_nm
        lambda2_nm = default_map_axis(pm) if lambda2_nm is None else lambda2_nm
        return classical_map(lambda1_nm, lambda2_nm, pm, power1_mw, power2_mw)

    def measure_g2(self, source: int, pulses: int = 10**8, seed: int | None = None) -> G2Estimate:
        """Simulated heralded g2 of one source behind ideal splitter detectors."""
        match source:
            case 1:
                params, herald = self.config.source1, self.config.d1
            case 2:
                params, herald = self.config.source2, self.config.d2
            case _:
                raise NotImplementedError(f"There is no source {source}")
        seed = self.config.seed if seed is None else seed
        det_a = IDEAL_DETECTOR.model_copy(update={"label": "A", "channel": 10})
        det_b = IDEAL_DETECTOR.model_copy(update={"label": "B", "channel": 11})
        h, a, b = simulate_g2_measurement(
            params, herald, (det_a, det_b), pulses, seed, self.config.clock, self.workers
        )
        return estimate_conditional_g2(h, a, b, self.config.bin_width_ps)
