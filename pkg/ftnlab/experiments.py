import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from math import log2, sqrt
from pathlib import Path
from typing import Callable, Iterable, Mapping
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
import yaml
from beautiful_repr import StylizedMixin, Field
from scipy.stats import norm
from tqdm import tqdm

from ftnlab.interfaces import IDetector, IFrameSimulator
from ftnlab.modulation import FtnConfig, ModulationScheme, modulate, tau_key
from ftnlab.channels import ChannelSpec, FadingChannel, esn0_to_ebn0, simulator_for, snr_db_to_n0
from ftnlab.networks import ConvBaselineNetwork, NetworkDetector, load_model, parse_network_kind
from ftnlab.oracles import MapOracleDetector, MatchedFilterDetector
from ftnlab.ldpc import DEFAULT_MAX_ITERS, LdpcCode, code_path, coded_frame_pipeline, load_alist
from ftnlab.logs import is_progress_visible
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin, Loop, Diapason
from ftnlab.errors.experiment_errors import *
from ftnlab.errors.core_errors import FtnLabError, InputError


logger = logging.getLogger(__name__)

OUTPUT_DIR_VARIABLE = "FTNLAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

CSV_HEADER = ('snr_db', 'bits', 'errors', 'ber', 'ci_low', 'ci_high')

NETWORK_DETECTORS = ("fk-cnn", "conv-k2", "conv-k3", "conv-k4", "conv-k5")
DETECTORS = (*NETWORK_DETECTORS, "map-oracle", "mf-threshold")

SPECTRAL_EFFICIENCY_ORDERS = (2, 4, 16, 64)
SPECTRAL_EFFICIENCY_GRID = (("bpsk", 0.35), ("qpsk", 0.35), ("qam16", 0.5), ("qam64", 0.5))
SPECTRAL_EFFICIENCY_TAUS = (0.7, 0.8, 0.9, 1.0)

_tau_diapason = Diapason(0, 1, is_end_inclusive=True, is_start_inclusive=False)


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_VARIABLE, DEFAULT_OUTPUT_DIR))


def wilson_ci(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Function returning the Wilson score interval of a binomial proportion."""

    if trials < 1 or not 0 <= errors <= trials:
        raise InputError(f"Wilson interval needs 0 <= errors <= trials and trials >= 1, got {errors}/{trials}")
    if not 0 < level < 1:
        raise InputError(f"Confidence level {level} must lie in (0, 1)")

    z = norm.ppf(1 - (1 - level) / 2)
    proportion = errors / trials
    denominator = 1 + z ** 2 / trials
    center = (proportion + z ** 2 / (2 * trials)) / denominator
    half_width = z * sqrt(proportion * (1 - proportion) / trials + z ** 2 / (4 * trials ** 2)) / denominator

    low = 0. if errors == 0 else max(0., center - half_width)
    high = 1. if errors == trials else min(1., center + half_width)

    return float(low), float(high)


def spectral_efficiency(M: int, tau: float, beta: float) -> float:
    """Function returning the bits per second per Hertz of FTN signaling."""

    ReportAnalyzer((BadReportHandler(ExperimentConfigurationError), ))(Report.of_checks((
        (M in SPECTRAL_EFFICIENCY_ORDERS, f"Constellation size {M} is not one of {SPECTRAL_EFFICIENCY_ORDERS}"),
        (tau in _tau_diapason, f"tau = {tau} is outside {_tau_diapason}"),
        (beta >= 0, f"Roll-off {beta} must not be negative"),
    )))

    return int(log2(M)) / tau / (1 + beta)


def spectral_efficiency_grid() -> list[tuple[str, float, float, float]]:
    """Function returning (modulation, beta, tau, efficiency) rows of the comparison grid."""

    return [
        (name, beta, tau, spectral_efficiency(ModulationScheme.of(name).constellation_size, tau, beta))
        for name, beta in SPECTRAL_EFFICIENCY_GRID
        for tau in SPECTRAL_EFFICIENCY_TAUS
    ]


@dataclass(frozen=True, repr=False)
class ExperimentConfig(StylizedMixin, StrictToStateMixin):
    """Monte-Carlo BER experiment over a list of SNR points (Es/N0 in dB)."""

    _repr_fields = (Field('name'), Field('detector'), Field('tau'), Field('modulation'), Field('channel'))
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(ExperimentConfigurationError), ))

    detector: str = "fk-cnn"
    tau: float = 0.9
    beta: float = 0.35
    modulation: str = "bpsk"
    snr_db: tuple[float, ...] = tuple()
    channel: str = "awgn"
    fading_paths: int = 3
    fading_seed: int = 0
    rayleigh_magnitude: bool = True
    frames: int = 1000
    symbols_per_frame: int = 1000
    min_errors: int = 400
    seed: int = 0
    model_path: str | None = None
    isi_length: int | None = None
    code: str | None = None
    max_iters: int = DEFAULT_MAX_ITERS
    workers: int = 1
    name: str = "ber"

    def __post_init__(self) -> None:
        object.__setattr__(self, 'snr_db', tuple(float(snr) for snr in self.snr_db))
        object.__setattr__(self, 'detector', str(self.detector).lower())
        self._check_state_errors()

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> Self:
        unknown = set(mapping) - {config_field.name for config_field in fields(cls)}

        if unknown:
            raise ExperimentConfigurationError(f"Unknown experiment options: {', '.join(sorted(unknown))}")

        try:
            return cls(**mapping)
        except TypeError as error:
            raise ExperimentConfigurationError(str(error)) from error

    @classmethod
    def from_yaml(cls, path: str | Path) -> Self:
        with open(path) as file:
            mapping = yaml.safe_load(file) or dict()

        if not isinstance(mapping, Mapping):
            raise ExperimentConfigurationError(f"Experiment config {path} must hold a mapping")

        return cls.from_mapping(mapping)

    def with_overrides(self, **overrides) -> Self:
        """Method for replacing the options that are not None."""

        return type(self).from_mapping(self.to_mapping() | {
            name: value for name, value in overrides.items() if value is not None
        })

    def to_mapping(self) -> dict:
        return asdict(self) | {'snr_db': list(self.snr_db)}

    @property
    def scheme(self) -> ModulationScheme:
        return ModulationScheme.of(self.modulation)

    @property
    def ftn_config(self) -> FtnConfig:
        if self.isi_length is not None:
            return FtnConfig(self.tau, self.isi_length, self.beta, modulation=self.scheme)

        return FtnConfig.for_tau(self.tau, self.scheme, self.beta)

    @property
    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(self.channel, self.fading_paths, self.rayleigh_magnitude, self.fading_seed)

    @property
    def is_network_detector(self) -> bool:
        return self.detector in NETWORK_DETECTORS

    def _is_correct(self) -> Report:
        if self.detector not in DETECTORS:
            return Report(False, f"Unknown detector {self.detector!r}; expected one of {', '.join(DETECTORS)}")

        try:
            self.ftn_config
            self.channel_spec
        except FtnLabError as error:
            return Report(False, str(error))

        return Report.of_checks((
            (self.frames >= 1, f"Frame budget {self.frames} must be positive"),
            (self.symbols_per_frame >= 1, f"Frame length {self.symbols_per_frame} must be positive"),
            (self.min_errors >= 100, f"Stop rule of {self.min_errors} errors is below 100"),
            (self.workers >= 1, f"Worker count {self.workers} must be positive"),
            (self.max_iters >= 1, f"BP iteration limit {self.max_iters} must be positive"),
        ))


@dataclass(frozen=True)
class BerPoint(StrictToStateMixin):
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(ExperimentError), ))

    snr_db: float
    bits: int
    errors: int
    ber: float
    ci_low: float
    ci_high: float
    frames: int = 0
    stop_reason: str = "frame_budget"
    ebn0_db: float | None = None

    def __post_init__(self) -> None:
        self._check_state_errors()

    @classmethod
    def of_counts(
        cls,
        snr_db: float,
        bits: int,
        errors: int,
        frames: int = 0,
        stop_reason: str = "frame_budget",
        ebn0_db: float | None = None
    ) -> Self:
        ci_low, ci_high = wilson_ci(errors, bits)

        return cls(snr_db, bits, errors, errors / bits, ci_low, ci_high, frames, stop_reason, ebn0_db)

    def _is_correct(self) -> Report:
        return Report.of_checks((
            (0 <= self.errors <= self.bits, f"{self.errors} errors in {self.bits} bits"),
            (self.ci_low <= self.ber <= self.ci_high, f"BER {self.ber} is outside [{self.ci_low}, {self.ci_high}]"),
        ))


@dataclass
class RunManifest:
    """Echo of everything a sweep depended on."""

    config: dict
    seed: int
    point_seeds: list[dict] = field(default_factory=list)
    package_version: str = ""
    model_sha256: str | None = None
    code_sha256: str | None = None
    wall_time_s: float = 0.
    points: list[dict] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        with open(path, 'w') as file:
            json.dump(asdict(self), file, indent=2)
            file.write('\n')


def _file_digest(path: str | Path | None) -> str | None:
    if path is None:
        return None

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_detector(config: ExperimentConfig) -> IDetector:
    """
    Function creating the detector of an experiment, checking a network model
    against the configured link before anything is simulated.
    """

    if config.detector == "map-oracle":
        return MapOracleDetector(config.ftn_config)
    elif config.detector == "mf-threshold":
        return MatchedFilterDetector()

    if config.model_path is None:
        raise MissingModelError(f"Detector {config.detector} needs a model_path")
    if not Path(config.model_path).is_file():
        raise MissingModelError(f"Model file {config.model_path} does not exist")

    network = load_model(config.model_path)
    kind, kernel_length = parse_network_kind(config.detector)
    ftn_config = config.ftn_config
    network_kernel = network.kernel_length if isinstance(network, ConvBaselineNetwork) else None

    ReportAnalyzer((BadReportHandler(ModelMismatchError), ))(Report.of_checks((
        (
            (kind == "conv") == isinstance(network, ConvBaselineNetwork) and kernel_length == network_kernel,
            f"Model {config.model_path} is not a {config.detector} network"
        ),
        (tau_key(network.tau) == tau_key(config.tau), f"Model was trained for tau = {network.tau}, not {config.tau}"),
        (
            network.isi_length >= ftn_config.isi_length,
            f"Model window reaches N = {network.isi_length}, short of the configured N = {ftn_config.isi_length}"
        ),
        (network.modulation == config.scheme, f"Model detects {network.modulation.name}, not {config.scheme.name}"),
    )))

    return NetworkDetector(network)


def load_code(name_or_path: str) -> LdpcCode:
    path = Path(name_or_path)

    return load_alist(path if path.is_file() else code_path(name_or_path))


class _UncodedLink:
    def __init__(self, config: ExperimentConfig, detector: IDetector, simulator: IFrameSimulator):
        self.__config = config
        self.__detector = detector
        self.__simulator = simulator

    @property
    def code_rate(self) -> float:
        return 1.

    def __call__(self, n0: float, rng: np.random.Generator, channel: FadingChannel | None) -> tuple[int, int]:
        scheme = self.__config.scheme
        bits = rng.integers(0, 2, self.__config.symbols_per_frame * scheme.bits_per_symbol, dtype=np.uint8)
        received = self.__simulator(modulate(bits, scheme), n0, rng, channel)

        return int(np.count_nonzero(self.__detector.detect(received) != bits)), len(bits)


class _CodedLink:
    def __init__(
        self,
        config: ExperimentConfig,
        detector: IDetector,
        simulator: IFrameSimulator,
        code: LdpcCode
    ):
        self.__config = config
        self.__detector = detector
        self.__simulator = simulator
        self.__code = code

    @property
    def code_rate(self) -> float:
        return self.__code.rate

    def __call__(self, n0: float, rng: np.random.Generator, channel: FadingChannel | None) -> tuple[int, int]:
        info_bits = rng.integers(0, 2, self.__code.k, dtype=np.uint8)
        decoded = coded_frame_pipeline(
            info_bits,
            self.__code,
            self.__config.ftn_config,
            self.__detector,
            n0,
            rng,
            self.__simulator,
            channel,
            self.__config.max_iters
        )

        return int(np.count_nonzero(decoded != info_bits)), len(info_bits)


class BerPointLoop(Loop):
    """Loop sending frames at one SNR until enough errors or the frame budget."""

    def __init__(
        self,
        config: ExperimentConfig,
        link: Callable[[float, np.random.Generator, FadingChannel | None], tuple[int, int]],
        snr_db: float,
        rng: np.random.Generator,
        show_progress: bool = False
    ):
        self.config = config
        self.link = link
        self.snr_db = snr_db
        self.n0 = snr_db_to_n0(snr_db)
        self.rng = rng
        self.channel_source = config.channel_spec.create_source()
        self.errors = 0
        self.bits = 0
        self.frames = 0
        self.stop_reason = "frame_budget"
        self.progress = tqdm(
            total=config.frames,
            desc=f"{config.detector} {snr_db:g} dB",
            disable=not show_progress,
            leave=False
        )

    def _handle(self) -> None:
        errors, bits = self.link(self.n0, self.rng, self.channel_source(self.rng))

        self.errors += errors
        self.bits += bits
        self.frames += 1
        self.progress.update()

        if self.errors >= self.config.min_errors:
            self.stop_reason = "min_errors"
            self.finish()
        elif self.frames >= self.config.frames:
            self.stop_reason = "frame_budget"
            self.finish()

    def finish(self) -> None:
        super().finish()
        self.progress.close()

    def to_point(self, code_rate: float = 1.) -> BerPoint:
        return BerPoint.of_counts(
            self.snr_db,
            self.bits,
            self.errors,
            self.frames,
            self.stop_reason,
            esn0_to_ebn0(self.snr_db, self.config.scheme.bits_per_symbol, code_rate)
        )


def write_ber_csv(points: Iterable[BerPoint], path: str | Path) -> None:
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        writer.writerows(
            (repr(point.snr_db), point.bits, point.errors, repr(point.ber), repr(point.ci_low), repr(point.ci_high))
            for point in points
        )


def snr_at_ber(points: Iterable[BerPoint], target_ber: float) -> float:
    """
    Function interpolating the SNR at which a sweep crosses target_ber,
    linearly in log10(BER) between the two points bracketing it.
    """

    if not 0 < target_ber < 1:
        raise InputError(f"Target BER {target_ber} must lie in (0, 1)")

    ordered = sorted(points, key=lambda point: point.snr_db)

    for lower, upper in zip(ordered, ordered[1:]):
        if lower.ber >= target_ber >= upper.ber and upper.ber > 0:
            if lower.ber == upper.ber:
                return lower.snr_db

            fraction = (np.log10(lower.ber) - np.log10(target_ber)) / (np.log10(lower.ber) - np.log10(upper.ber))

            return float(lower.snr_db + fraction * (upper.snr_db - lower.snr_db))

    raise InputError(f"No pair of sweep points brackets BER {target_ber}")


def _run_sweep(
    config: ExperimentConfig,
    link_factory: Callable[[IDetector, IFrameSimulator], '_UncodedLink | _CodedLink'],
    output_dir: str | Path | None,
    code_sha256: str | None = None
) -> tuple[list[BerPoint], RunManifest]:
    started = time.perf_counter()
    detector = build_detector(config)
    link = link_factory(detector, simulator_for(config.ftn_config, config.channel_spec))

    seed_sequences = np.random.SeedSequence(config.seed).spawn(len(config.snr_db))
    show_progress = is_progress_visible() and config.workers == 1

    def run_point(snr_db: float, seed_sequence: np.random.SeedSequence) -> BerPoint:
        loop = BerPointLoop(config, link, snr_db, np.random.default_rng(seed_sequence), show_progress)
        loop.run()
        point = loop.to_point(link.code_rate)

        logger.info(
            "%s at %g dB (Eb/N0 %.2f dB): %d errors in %d bits, BER %.3e [%.3e, %.3e], stopped by %s",
            config.detector, snr_db, point.ebn0_db, point.errors, point.bits,
            point.ber, point.ci_low, point.ci_high, point.stop_reason
        )

        return point

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            points = list(executor.map(run_point, config.snr_db, seed_sequences))
    else:
        points = [run_point(snr_db, seed_sequence) for snr_db, seed_sequence in zip(config.snr_db, seed_sequences)]

    from ftnlab import __version__

    manifest = RunManifest(
        config.to_mapping(),
        config.seed,
        [
            {'snr_db': snr_db, 'entropy': seed_sequence.entropy, 'spawn_key': list(seed_sequence.spawn_key)}
            for snr_db, seed_sequence in zip(config.snr_db, seed_sequences)
        ],
        __version__,
        _file_digest(config.model_path) if config.is_network_detector else None,
        code_sha256,
        time.perf_counter() - started,
        [asdict(point) for point in points]
    )

    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)

        write_ber_csv(points, output_dir / f"{config.name}.csv")
        manifest.to_json(output_dir / f"{config.name}.manifest.json")
        logger.info("Wrote %s and its manifest", output_dir / f"{config.name}.csv")

    return points, manifest


def run_ber_sweep(
    config: ExperimentConfig,
    output_dir: str | Path | None = None
) -> tuple[list[BerPoint], RunManifest]:
    """
    Function measuring the uncoded BER of the configured detector at every SNR
    point, writing <name>.csv and <name>.manifest.json when output_dir is given.
    """

    return _run_sweep(config, lambda detector, simulator: _UncodedLink(config, detector, simulator), output_dir)


def run_coded_sweep(
    config: ExperimentConfig,
    output_dir: str | Path | None = None,
    code: LdpcCode | None = None
) -> tuple[list[BerPoint], RunManifest]:
    """
    Function measuring the info-bit BER of LDPC-coded frames, one codeword per
    frame, decoded from the detector's soft outputs.
    """

    if code is None:
        if config.code is None:
            raise ExperimentConfigurationError("Coded sweeps need a code name or alist path")

        code = load_code(config.code)

    if code.n % config.scheme.bits_per_symbol:
        raise CodeMismatchError(
            f"Codeword of {code.n} bits does not fill whole {config.scheme.name} symbols"
        )

    code_file = None if config.code is None else Path(config.code)
    code_sha256 = None

    if code_file is not None:
        code_sha256 = _file_digest(code_file if code_file.is_file() else code_path(config.code))

    return _run_sweep(
        config,
        lambda detector, simulator: _CodedLink(config, detector, simulator, code),
        output_dir,
        code_sha256
    )
