import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from math import isclose, log2, pi, sqrt
from pathlib import Path
from typing import Iterable
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
from beautiful_repr import StylizedMixin, Field
from scipy.linalg import eigh, toeplitz

from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin, Diapason
from ftnlab.errors.signal_errors import *


logger = logging.getLogger(__name__)

SHIPPED_ISI_LENGTHS = {0.7: 8, 0.8: 6, 0.9: 2, 1.0: 1}

DEFAULT_BETA = 0.35
DEFAULT_SAMPLES_PER_SYMBOL = 20
DEFAULT_SPAN_SYMBOLS = 16

SQUARE_ROOT_JITTER = 1e-12
NEGATIVE_EIGENVALUE_TOLERANCE = 1e-9


def tau_key(tau: float) -> float:
    """Function for using compression factors as dictionary keys."""

    return round(float(tau), 6)


def gray_code(index: int) -> int:
    return index ^ (index >> 1)


class ModulationKind(Enum):
    bpsk = "bpsk"
    qpsk = "qpsk"
    qam16 = "qam16"
    qam64 = "qam64"


_LEVELS_AND_DIMENSIONS = {
    ModulationKind.bpsk: (2, 1),
    ModulationKind.qpsk: (2, 2),
    ModulationKind.qam16: (4, 2),
    ModulationKind.qam64: (8, 2),
}


@dataclass(frozen=True, repr=False, eq=False)
class ModulationScheme(StylizedMixin):
    """
    Gray-mapped PAM or square QAM constellation with unit average symbol energy.

    Each real dimension carries a PAM alphabet whose level m has amplitude
    (L - 1 - 2m) * scale and bit pattern gray(m) written MSB first, so bit 0 of
    every pattern selects the positive side. In-phase bits precede quadrature
    bits inside a symbol.
    """

    _repr_fields = (Field('kind', value_transformer=lambda kind: kind.value), Field('bits_per_symbol'))

    kind: ModulationKind

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ModulationScheme) and self.kind is other.kind

    def __hash__(self) -> int:
        return hash(self.kind)

    @classmethod
    def of(cls, name: str | ModulationKind | Self) -> Self:
        if isinstance(name, ModulationScheme):
            return name
        elif isinstance(name, ModulationKind):
            return cls(name)

        try:
            return cls(ModulationKind(str(name).lower().replace('-', '')))
        except ValueError as error:
            raise UnknownModulationError(
                f"Unknown modulation {name!r}; expected one of "
                f"{', '.join(kind.value for kind in ModulationKind)}"
            ) from error

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def pam_levels_per_dimension(self) -> int:
        return _LEVELS_AND_DIMENSIONS[self.kind][0]

    @property
    def dimensions(self) -> int:
        return _LEVELS_AND_DIMENSIONS[self.kind][1]

    @property
    def is_complex(self) -> bool:
        return self.dimensions == 2

    @property
    def bits_per_dimension(self) -> int:
        return int(log2(self.pam_levels_per_dimension))

    @property
    def bits_per_symbol(self) -> int:
        return self.bits_per_dimension * self.dimensions

    @property
    def constellation_size(self) -> int:
        return 2 ** self.bits_per_symbol

    @cached_property
    def amplitude_scale(self) -> float:
        levels = self.pam_levels_per_dimension

        return sqrt(3 / (self.dimensions * (levels ** 2 - 1)))

    @cached_property
    def amplitudes(self) -> np.ndarray:
        """PAM amplitudes per level index, from the most positive downwards."""

        levels = self.pam_levels_per_dimension

        return (levels - 1 - 2 * np.arange(levels)) * self.amplitude_scale

    @cached_property
    def bit_patterns(self) -> np.ndarray:
        """Gray bit pattern of every PAM level index, MSB first."""

        return np.array(
            [
                [(gray_code(index) >> shift) & 1 for shift in reversed(range(self.bits_per_dimension))]
                for index in range(self.pam_levels_per_dimension)
            ],
            dtype=np.uint8
        )

    @cached_property
    def level_of_pattern(self) -> np.ndarray:
        """Level index addressed by the integer value of a Gray pattern."""

        lookup = np.empty(self.pam_levels_per_dimension, dtype=np.int64)

        for index in range(self.pam_levels_per_dimension):
            lookup[gray_code(index)] = index

        return lookup

    @cached_property
    def constellation(self) -> np.ndarray:
        """Every symbol of the alphabet in the order of its integer bit label."""

        labels = np.arange(self.constellation_size)
        bits = (labels[:, None] >> np.arange(self.bits_per_symbol)[::-1]) & 1

        return modulate(bits.astype(np.uint8).ravel(), self).symbols

    def split_dimension_bits(self, bits: np.ndarray) -> np.ndarray:
        """Method reshaping a flat bit stream into (symbols, dimensions, bits per dimension)."""

        return np.asarray(bits, dtype=np.uint8).reshape(-1, self.dimensions, self.bits_per_dimension)

    def dimension_values(self, samples: np.ndarray) -> np.ndarray:
        """Method returning real per-dimension values of shape (symbols, dimensions)."""

        samples = np.asarray(samples)

        if self.is_complex:
            return np.stack((samples.real, samples.imag), axis=-1)

        return samples.real[:, None]

    def levels_of(self, values: np.ndarray) -> np.ndarray:
        """Method returning the nearest level index with ties toward the positive side."""

        levels = self.pam_levels_per_dimension
        position = ((levels - 1) - np.asarray(values) / self.amplitude_scale) / 2

        return np.clip(np.ceil(position - 0.5), 0, levels - 1).astype(np.int64)


BPSK = ModulationScheme(ModulationKind.bpsk)
QPSK = ModulationScheme(ModulationKind.qpsk)
QAM16 = ModulationScheme(ModulationKind.qam16)
QAM64 = ModulationScheme(ModulationKind.qam64)


@dataclass(frozen=True, repr=False, eq=False)
class SymbolFrame(StylizedMixin):
    _repr_fields = (Field('scheme'), Field('length'))

    bits: np.ndarray
    symbols: np.ndarray
    scheme: ModulationScheme

    @property
    def length(self) -> int:
        return len(self.symbols)


def modulate(bits: Iterable[int], scheme: ModulationScheme) -> SymbolFrame:
    bits = np.asarray(tuple(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8).ravel()

    if len(bits) % scheme.bits_per_symbol:
        raise BitCountError(
            f"{len(bits)} bits do not fill whole {scheme.name} symbols "
            f"of {scheme.bits_per_symbol} bits"
        )

    dimension_bits = scheme.split_dimension_bits(bits)
    pattern_values = dimension_bits @ (1 << np.arange(scheme.bits_per_dimension)[::-1])
    amplitudes = scheme.amplitudes[scheme.level_of_pattern[pattern_values]]

    symbols = amplitudes[:, 0].astype(np.complex128)

    if scheme.is_complex:
        symbols = symbols + 1j * amplitudes[:, 1]

    return SymbolFrame(bits, symbols, scheme)


def demodulate_hard(samples: np.ndarray, scheme: ModulationScheme) -> np.ndarray:
    """Function for per-symbol nearest-level decisions ignoring any interference."""

    levels = scheme.levels_of(scheme.dimension_values(samples))

    return scheme.bit_patterns[levels].reshape(-1).astype(np.uint8)


@dataclass(frozen=True, repr=False, eq=False)
class PulseShape(StylizedMixin):
    """Unit-energy root-raised-cosine pulse sampled on a grid of T / samples_per_symbol."""

    _repr_fields = (Field('beta'), Field('span_symbols'), Field('samples_per_symbol'))

    taps: np.ndarray
    samples_per_symbol: int
    span_symbols: int
    beta: float

    @property
    def grid_step(self) -> float:
        return 1 / self.samples_per_symbol

    @property
    def times(self) -> np.ndarray:
        return np.arange(-self.span_symbols * self.samples_per_symbol, self.span_symbols * self.samples_per_symbol + 1) * self.grid_step

    @property
    def energy(self) -> float:
        return float(np.sum(self.taps ** 2) * self.grid_step)


def rrc_value(times: np.ndarray, beta: float) -> np.ndarray:
    """Closed-form root-raised-cosine with T = 1 and its analytic limits."""

    times = np.asarray(times, dtype=np.float64)
    values = np.empty_like(times)

    is_origin = np.isclose(times, 0, atol=1e-12)
    is_pole = (
        np.isclose(np.abs(times), 1 / (4 * beta), atol=1e-12) if beta > 0
        else np.zeros_like(times, dtype=bool)
    )
    is_regular = ~(is_origin | is_pole)

    regular = times[is_regular]
    values[is_regular] = (
        np.sin(pi * regular * (1 - beta)) + 4 * beta * regular * np.cos(pi * regular * (1 + beta))
    ) / (pi * regular * (1 - (4 * beta * regular) ** 2))

    values[is_origin] = 1 - beta + 4 * beta / pi

    if is_pole.any():
        values[is_pole] = beta / sqrt(2) * (
            (1 + 2 / pi) * np.sin(pi / (4 * beta))
            + (1 - 2 / pi) * np.cos(pi / (4 * beta))
        )

    return values


def rrc_taps(
    beta: float = DEFAULT_BETA,
    span_symbols: int = DEFAULT_SPAN_SYMBOLS,
    samples_per_symbol: int = DEFAULT_SAMPLES_PER_SYMBOL
) -> PulseShape:
    """
    Function sampling the closed-form root-raised cosine over span_symbols on
    each side and scaling it to unit energy on the sampling grid.

    The closed form has unit energy over the whole time axis. The truncated
    tails hold about 4e-6 of it at a span of 16, so after rescaling every tap,
    the centre included, sits about 2e-6 above its closed-form value.
    """

    ReportAnalyzer((BadReportHandler(PulseConfigurationError), ))(Report.of_checks((
        (0 <= beta <= 1, f"Roll-off {beta} must lie in [0, 1]"),
        (span_symbols >= 8, f"Span of {span_symbols} symbols is shorter than 8"),
        (samples_per_symbol >= 10, f"{samples_per_symbol} samples per symbol is fewer than 10"),
    )))

    return _cached_rrc_taps(float(beta), int(span_symbols), int(samples_per_symbol))


@lru_cache(maxsize=32)
def _cached_rrc_taps(beta: float, span_symbols: int, samples_per_symbol: int) -> PulseShape:
    half_length = span_symbols * samples_per_symbol
    times = np.arange(-half_length, half_length + 1) / samples_per_symbol

    taps = rrc_value(times, beta)
    taps = (taps + taps[::-1]) / 2
    taps /= np.sqrt(np.sum(taps ** 2) / samples_per_symbol)
    taps.setflags(write=False)

    return PulseShape(taps, samples_per_symbol, span_symbols, beta)


def symbol_step(pulse: PulseShape, tau: float) -> int:
    """Function returning the grid samples per FTN symbol interval."""

    step = tau * pulse.samples_per_symbol

    if not isclose(step, round(step), abs_tol=1e-9) or round(step) < 1:
        raise GridAlignmentError(
            f"tau = {tau} times {pulse.samples_per_symbol} samples per symbol "
            "is not a whole number of grid samples"
        )

    return int(round(step))


@dataclass(frozen=True, repr=False, eq=False)
class IsiProfile(StylizedMixin, StrictToStateMixin):
    """One-sided ISI coefficients x_0..x_n of a sampled raised-cosine autocorrelation."""

    _repr_fields = (
        Field('tau'),
        Field('beta'),
        Field('coeffs', value_transformer=lambda coeffs: np.array2string(coeffs[:4], precision=4)),
    )
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(PulseConfigurationError), ))

    tau: float
    beta: float
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        self._check_state_errors()

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1

    def truncated(self, isi_length: int) -> Self:
        if isi_length > self.n_max:
            raise IsiMatrixError(f"Profile holds {self.n_max} one-sided coefficients, {isi_length} requested")

        return type(self)(self.tau, self.beta, self.coeffs[:isi_length + 1])

    def _is_correct(self) -> Report:
        if not len(self.coeffs):
            return Report(False, "Profile has no coefficients")

        return Report.of_checks((
            (0.99 <= self.coeffs[0] <= 1.001, f"x_0 = {self.coeffs[0]} is not a unit-energy main tap"),
        ))


def _pulse_autocorrelation(pulse: PulseShape) -> np.ndarray:
    return np.convolve(pulse.taps, pulse.taps[::-1]) * pulse.grid_step


def isi_coefficients(pulse: PulseShape, tau: float, n_max: int) -> IsiProfile:
    if n_max < 0:
        raise PulseConfigurationError(f"ISI profile length n_max = {n_max} must not be negative")

    step = symbol_step(pulse, tau)
    autocorrelation = _pulse_autocorrelation(pulse)
    center = len(pulse.taps) - 1

    lags = center + step * np.arange(n_max + 1)
    coeffs = np.zeros(n_max + 1)
    inside = lags < len(autocorrelation)
    coeffs[inside] = autocorrelation[lags[inside]]
    coeffs.setflags(write=False)

    return IsiProfile(float(tau), pulse.beta, coeffs)


def full_support_profile(pulse: PulseShape, tau: float) -> IsiProfile:
    """Function returning every nonzero lag of the sampled autocorrelation."""

    return isi_coefficients(pulse, tau, (len(pulse.taps) - 1) // symbol_step(pulse, tau))


@dataclass(frozen=True, repr=False, eq=False)
class IsiMatrix(StylizedMixin):
    """Banded symmetric Toeplitz ISI matrix with a cached symmetric square root."""

    _repr_fields = (Field('size'), Field('bandwidth'))

    entries: np.ndarray
    bandwidth: int

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def square_root(self) -> np.ndarray:
        """Symmetric S with S @ S = X, built once per matrix."""

        eigenvalues, eigenvectors = self._factorize(self.entries)
        scale = max(float(np.max(np.abs(eigenvalues))), 1.0)

        if eigenvalues.min() < -NEGATIVE_EIGENVALUE_TOLERANCE * scale:
            logger.warning(
                "ISI matrix of size %d has eigenvalue %.3e; retrying with %.0e jitter",
                self.size, eigenvalues.min(), SQUARE_ROOT_JITTER
            )
            eigenvalues, eigenvectors = self._factorize(
                self.entries + SQUARE_ROOT_JITTER * np.eye(self.size)
            )

            if eigenvalues.min() < -NEGATIVE_EIGENVALUE_TOLERANCE * scale:
                raise SquareRootFactorizationError(
                    f"ISI matrix is not positive semidefinite (eigenvalue {eigenvalues.min():.3e})"
                )

        root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0, None))) @ eigenvectors.T
        root.setflags(write=False)

        return root

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    @staticmethod
    def _factorize(entries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        try:
            return eigh(entries)
        except np.linalg.LinAlgError as error:
            raise SquareRootFactorizationError(str(error)) from error


def build_isi_matrix(profile: IsiProfile, K: int, N: int | None = None) -> IsiMatrix:
    N = profile.n_max if N is None else N

    ReportAnalyzer((BadReportHandler(IsiMatrixError), ))(Report.of_checks((
        (K >= 1, f"Block length {K} must be positive"),
        (0 <= N <= profile.n_max, f"One-sided length {N} exceeds the {profile.n_max} coefficients of the profile"),
    )))

    column = np.zeros(K)
    used = min(N + 1, K)
    column[:used] = profile.coeffs[:used]

    entries = toeplitz(column)
    entries.setflags(write=False)

    return IsiMatrix(entries, N)


@lru_cache(maxsize=64)
def _cached_simulation_matrix(
    tau: float,
    beta: float,
    span_symbols: int,
    samples_per_symbol: int,
    K: int
) -> IsiMatrix:
    pulse = rrc_taps(beta, span_symbols, samples_per_symbol)

    return build_isi_matrix(full_support_profile(pulse, tau), K)


@dataclass(frozen=True, repr=False, eq=False)
class FtnConfig(StylizedMixin, StrictToStateMixin):
    """Link configuration: compression factor, pulse, detector ISI length and modulation."""

    _repr_fields = (
        Field('tau'),
        Field('beta'),
        Field('isi_length'),
        Field('modulation'),
    )
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(FtnConfigurationError), ))
    _tau_diapason = Diapason(0, 1, is_end_inclusive=True, is_start_inclusive=False)

    tau: float
    isi_length: int
    beta: float = DEFAULT_BETA
    samples_per_symbol: int = DEFAULT_SAMPLES_PER_SYMBOL
    span_symbols: int = DEFAULT_SPAN_SYMBOLS
    modulation: ModulationScheme = field(default=BPSK)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'modulation', ModulationScheme.of(self.modulation))
        self._check_state_errors()

    @classmethod
    def for_tau(
        cls,
        tau: float,
        modulation: str | ModulationScheme = BPSK,
        beta: float = DEFAULT_BETA,
        **kwargs
    ) -> Self:
        """Method for building the shipped configuration of a compression factor."""

        try:
            isi_length = SHIPPED_ISI_LENGTHS[tau_key(tau)]
        except KeyError as error:
            raise FtnConfigurationError(
                f"No shipped ISI length for tau = {tau}; pass isi_length explicitly"
            ) from error

        return cls(tau, isi_length, beta, modulation=ModulationScheme.of(modulation), **kwargs)

    @property
    def window_width(self) -> int:
        return 2 * self.isi_length + 1

    @cached_property
    def pulse(self) -> PulseShape:
        return rrc_taps(self.beta, self.span_symbols, self.samples_per_symbol)

    @property
    def step(self) -> int:
        return symbol_step(self.pulse, self.tau)

    @cached_property
    def detector_profile(self) -> IsiProfile:
        return isi_coefficients(self.pulse, self.tau, self.isi_length)

    @cached_property
    def simulation_profile(self) -> IsiProfile:
        return full_support_profile(self.pulse, self.tau)

    def simulation_matrix(self, K: int) -> IsiMatrix:
        return _cached_simulation_matrix(
            float(self.tau), float(self.beta), self.span_symbols, self.samples_per_symbol, int(K)
        )

    def _is_correct(self) -> Report:
        step = self.tau * self.samples_per_symbol

        return Report.of_checks((
            (self.tau in self._tau_diapason, f"tau = {self.tau} is outside {self._tau_diapason}"),
            (isclose(step, round(step), abs_tol=1e-9), f"tau * Q = {step} is not an integer"),
            (self.isi_length >= 1, f"ISI length {self.isi_length} must be at least 1"),
        ))


def export_pulse_csv(pulse: PulseShape, path: str | Path) -> None:
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(('t', 'g'))
        writer.writerows(zip(map(repr, pulse.times.tolist()), map(repr, pulse.taps.tolist())))


def export_profile_csv(profile: IsiProfile, path: str | Path) -> None:
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(('i', 'x_i'))
        writer.writerows(enumerate(map(repr, profile.coeffs.tolist())))
