import logging
from dataclasses import dataclass
from enum import Enum
from math import inf, log10
from typing import Callable
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
from beautiful_repr import StylizedMixin, Field
from scipy.signal import fftconvolve

from ftnlab.interfaces import IFrameSimulator
from ftnlab.modulation import FtnConfig, IsiMatrix, ModulationScheme, PulseShape, SymbolFrame, symbol_step
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin
from ftnlab.errors.signal_errors import *


logger = logging.getLogger(__name__)


def snr_db_to_n0(snr_db: float, symbol_energy: float = 1.) -> float:
    """Function converting Es/N0 in dB into the noise density for unit-energy symbols."""

    return symbol_energy * 10 ** (-snr_db / 10)


def n0_to_snr_db(n0: float, symbol_energy: float = 1.) -> float:
    return inf if n0 == 0 else 10 * log10(symbol_energy / n0)


def esn0_to_ebn0(snr_db: float, bits_per_symbol: int, code_rate: float = 1.) -> float:
    return snr_db - 10 * log10(bits_per_symbol * code_rate)


@dataclass(frozen=True, repr=False, eq=False)
class FadingChannel(StylizedMixin, StrictToStateMixin):
    """Quasi-static multipath channel with taps at integer symbol delays."""

    _repr_fields = (
        Field('taps', value_transformer=lambda taps: np.array2string(taps, precision=3)),
        Field('delays', value_transformer=lambda delays: delays.tolist()),
    )
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(FadingChannelError), ))

    taps: np.ndarray
    delays: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'taps', np.asarray(self.taps))
        object.__setattr__(self, 'delays', np.asarray(self.delays, dtype=np.int64))
        self._check_state_errors()

    @classmethod
    def identity(cls) -> Self:
        return cls(np.ones(1), np.zeros(1, dtype=np.int64))

    @property
    def path_count(self) -> int:
        return len(self.taps)

    @property
    def max_delay(self) -> int:
        return int(self.delays[-1])

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.taps)

    def convolve(self, symbols: np.ndarray) -> np.ndarray:
        """Method returning the full channel output on the symbol grid."""

        symbols = np.asarray(symbols)
        output = np.zeros(len(symbols) + self.max_delay, dtype=np.result_type(symbols, self.taps))

        for tap, delay in zip(self.taps, self.delays):
            output[delay:delay + len(symbols)] += tap * symbols

        return output

    def _is_correct(self) -> Report:
        return Report.of_checks((
            (self.taps.ndim == 1 and len(self.taps) >= 1, "Fading channel needs at least one tap"),
            (self.taps.shape == self.delays.shape, "Every fading tap needs exactly one delay"),
            (len(self.delays) == 0 or self.delays[0] == 0, "Fading delays must start at 0"),
            (bool(np.all(np.diff(self.delays) > 0)), "Fading delays must be strictly increasing"),
        ))


def draw_fading_channel(
    rng: np.random.Generator,
    L: int = 3,
    rayleigh_magnitude: bool = False
) -> FadingChannel:
    """
    Function drawing L equal-power circularly-symmetric Gaussian taps at delays
    0..L-1 with total unit average power.

    With rayleigh_magnitude the taps are replaced by their magnitudes, leaving
    real Rayleigh-distributed gains of the same power.
    """

    if L < 1:
        raise FadingChannelError(f"Path count {L} must be positive")

    taps = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) * np.sqrt(1 / (2 * L))

    return FadingChannel(np.abs(taps) if rayleigh_magnitude else taps, np.arange(L))


class ChannelMode(Enum):
    awgn = "awgn"
    block_fading = "block_fading"
    fixed_fading = "fixed_fading"


@dataclass(frozen=True)
class ChannelSpec:
    """Description of how channels are drawn frame after frame."""

    mode: ChannelMode = ChannelMode.awgn
    paths: int = 3
    rayleigh_magnitude: bool = True
    fading_seed: int = 0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, 'mode', ChannelMode(self.mode))
        except ValueError as error:
            raise FadingChannelError(
                f"Unknown channel mode {self.mode!r}; expected one of "
                f"{', '.join(mode.value for mode in ChannelMode)}"
            ) from error

        if self.paths < 1:
            raise FadingChannelError(f"Path count {self.paths} must be positive")

    @property
    def is_fading(self) -> bool:
        return self.mode is not ChannelMode.awgn

    def create_source(self) -> Callable[[np.random.Generator], FadingChannel | None]:
        """Method returning a per-frame channel draw for the configured mode."""

        if self.mode is ChannelMode.awgn:
            return lambda rng: None
        elif self.mode is ChannelMode.fixed_fading:
            channel = draw_fading_channel(
                np.random.default_rng(self.fading_seed), self.paths, self.rayleigh_magnitude
            )
            logger.info("Fixed fading channel %r", channel)

            return lambda rng: channel

        return lambda rng: draw_fading_channel(rng, self.paths, self.rayleigh_magnitude)


@dataclass(frozen=True, repr=False, eq=False)
class ReceivedFrame(StylizedMixin):
    """Matched-filtered samples at the FTN symbol rate with their realization."""

    _repr_fields = (Field('length'), Field('snr_db'), Field('sim_mode'), Field('channel'))

    samples: np.ndarray
    n0: float
    transmitted: SymbolFrame
    sim_mode: str
    channel: FadingChannel | None = None

    @property
    def length(self) -> int:
        return len(self.samples)

    @property
    def snr_db(self) -> float:
        return n0_to_snr_db(self.n0)

    @property
    def scheme(self) -> ModulationScheme:
        return self.transmitted.scheme


def draw_colored_noise(
    matrix: IsiMatrix,
    n0: float,
    rng: np.random.Generator,
    is_complex: bool = False,
    frames: int | None = None
) -> np.ndarray:
    """
    Function drawing noise with covariance X * n0 / 2 per real dimension, one
    row per frame when frames is given.
    """

    shape = (1 if frames is None else frames, matrix.size)
    scale = np.sqrt(n0 / 2)

    noise = rng.standard_normal(shape) @ matrix.square_root * scale

    if is_complex:
        noise = noise + 1j * (rng.standard_normal(shape) @ matrix.square_root * scale)

    return noise[0] if frames is None else noise


def simulate_matrix_model(
    frame: SymbolFrame,
    matrix: IsiMatrix,
    n0: float,
    rng: np.random.Generator
) -> ReceivedFrame:
    if matrix.size != frame.length:
        raise IsiMatrixError(f"ISI matrix of size {matrix.size} cannot carry a frame of {frame.length} symbols")

    samples = (matrix.entries @ frame.symbols).astype(np.complex128)

    if n0 > 0:
        samples = samples + draw_colored_noise(matrix, n0, rng, frame.scheme.is_complex)

    return ReceivedFrame(samples, n0, frame, "matrix")


def simulate_waveform_model(
    frame: SymbolFrame,
    pulse: PulseShape,
    tau: float,
    n0: float,
    channel: FadingChannel | None,
    rng: np.random.Generator
) -> ReceivedFrame:
    step = symbol_step(pulse, tau)
    is_complex = frame.scheme.is_complex or (channel is not None and channel.is_complex)
    symbols = frame.symbols if is_complex else frame.symbols.real

    if frame.length == 0:
        return ReceivedFrame(np.zeros(0, dtype=np.complex128), n0, frame, "waveform", channel)

    upsampled = np.zeros((frame.length - 1) * step + 1, dtype=symbols.dtype)
    upsampled[::step] = symbols
    transmitted = fftconvolve(upsampled, pulse.taps)

    if channel is not None:
        faded = np.zeros(len(transmitted) + channel.max_delay * step, dtype=np.result_type(transmitted, channel.taps))

        for tap, delay in zip(channel.taps, channel.delays):
            faded[delay * step:delay * step + len(transmitted)] += tap * transmitted

        transmitted = faded

    if n0 > 0:
        deviation = np.sqrt(n0 / (2 * pulse.grid_step))
        noise = rng.standard_normal(len(transmitted)) * deviation

        if is_complex:
            noise = noise + 1j * rng.standard_normal(len(transmitted)) * deviation

        transmitted = transmitted + noise

    filtered = fftconvolve(transmitted, pulse.taps[::-1]) * pulse.grid_step
    samples = filtered[len(pulse.taps) - 1 + step * np.arange(frame.length)]

    return ReceivedFrame(samples.astype(np.complex128), n0, frame, "waveform", channel)


class MatrixModelSimulator(IFrameSimulator):
    """Fast path: y = X a + w with the full-support ISI matrix of the link."""

    def __init__(self, config: FtnConfig):
        self._config = config

    @property
    def config(self) -> FtnConfig:
        return self._config

    def __call__(
        self,
        frame: SymbolFrame,
        n0: float,
        rng: np.random.Generator,
        channel: FadingChannel | None = None
    ) -> ReceivedFrame:
        if channel is not None:
            raise FadingChannelError("The matrix model carries no fading; use the waveform model")

        return simulate_matrix_model(frame, self._config.simulation_matrix(frame.length), n0, rng)


class WaveformModelSimulator(IFrameSimulator):
    """Physical path on the oversampled grid, the only one applying fading."""

    def __init__(self, config: FtnConfig):
        self._config = config

    @property
    def config(self) -> FtnConfig:
        return self._config

    def __call__(
        self,
        frame: SymbolFrame,
        n0: float,
        rng: np.random.Generator,
        channel: FadingChannel | None = None
    ) -> ReceivedFrame:
        return simulate_waveform_model(frame, self._config.pulse, self._config.tau, n0, channel, rng)


def simulator_for(config: FtnConfig, channel_spec: ChannelSpec) -> IFrameSimulator:
    return (WaveformModelSimulator if channel_spec.is_fading else MatrixModelSimulator)(config)
