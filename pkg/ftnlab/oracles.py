import logging
from dataclasses import dataclass
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
from beautiful_repr import StylizedMixin, Field

from ftnlab.interfaces import IDetector
from ftnlab.modulation import BPSK, FtnConfig, IsiMatrix, ModulationScheme, demodulate_hard
from ftnlab.channels import FadingChannel, ReceivedFrame
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin
from ftnlab.errors.oracle_errors import *


logger = logging.getLogger(__name__)

MAX_ENUMERATION = 2 ** 20
MIN_DEFAULT_BLOCK = 12
SINGULARITY_TOLERANCE = 1e-12


def enumeration_cap(alphabet_size: int) -> int:
    """Function returning the longest block whose candidates fit the enumeration limit."""

    K = 1

    while alphabet_size ** (K + 1) <= MAX_ENUMERATION:
        K += 1

    return K


@dataclass(frozen=True)
class MapBlockConfig(StrictToStateMixin):
    """
    Block geometry of the exhaustive oracle: K enumerated symbols per block of
    which guard symbols on each side are discarded when scoring streams.
    """

    _state_report_analyzer = ReportAnalyzer((BadReportHandler(EnumerationSizeError), ))

    K: int = 12
    guard: int = 3

    def __post_init__(self) -> None:
        self._check_state_errors()

    @classmethod
    def default_for(
        cls,
        scheme: ModulationScheme,
        isi_length: int,
        is_joint_complex: bool = False,
        channel_memory: int = 0
    ) -> Self:
        """
        Method for the default geometry: a guard of the detector ISI length
        plus the channel memory on each side, and a block of four guards but
        at least 12 symbols, both capped by the enumeration limit.
        """

        alphabet = scheme.constellation_size if is_joint_complex else scheme.pam_levels_per_dimension
        cap = enumeration_cap(alphabet)
        guard = isi_length + channel_memory
        K = min(cap, max(MIN_DEFAULT_BLOCK, 4 * guard))

        return cls(K, min(guard, (K - 1) // 2))

    @property
    def stride(self) -> int:
        return self.K - 2 * self.guard

    def check_alphabet(self, alphabet_size: int) -> None:
        if alphabet_size ** self.K > MAX_ENUMERATION:
            raise EnumerationSizeError(
                f"{alphabet_size}^{self.K} candidates exceed the enumeration limit of {MAX_ENUMERATION}"
            )

    def _is_correct(self) -> Report:
        return Report.of_checks((
            (self.K >= 1, f"Block length {self.K} must be positive"),
            (self.guard >= 0, f"Guard {self.guard} must not be negative"),
            (self.K - 2 * self.guard >= 1, f"Guards of {self.guard} leave no interior in a block of {self.K}"),
        ))


def _matrix_entries(X: IsiMatrix | np.ndarray) -> np.ndarray:
    return X.entries if isinstance(X, IsiMatrix) else np.asarray(X, dtype=np.float64)


def _check_invertible(X: IsiMatrix | np.ndarray) -> None:
    eigenvalues = X.eigenvalues if isinstance(X, IsiMatrix) else np.linalg.eigvalsh(_matrix_entries(X))

    if eigenvalues.min() <= SINGULARITY_TOLERANCE * max(abs(eigenvalues.max()), 1.):
        raise SingularIsiMatrixError(f"ISI matrix is singular on the block (eigenvalue {eigenvalues.min():.3e})")


def channel_matrix(channel: FadingChannel | None, K: int) -> np.ndarray:
    """Function returning the lower-triangular Toeplitz channel convolution truncated to K symbols."""

    if channel is None:
        return np.eye(K)

    matrix = np.zeros((K, K), dtype=channel.taps.dtype)

    for tap, delay in zip(channel.taps, channel.delays):
        matrix += tap * np.eye(K, k=-int(delay))

    return matrix


def sequence_metric(
    a: np.ndarray,
    y: np.ndarray,
    X: IsiMatrix | np.ndarray,
    channel: FadingChannel | None = None
) -> float:
    """
    Function returning 2 Re(c^H y) - c^H X c for the channel-filtered candidate
    c; larger values are more likely under noise of covariance X * N0 / 2.
    """

    entries = _matrix_entries(X)
    a = np.asarray(a)
    y = np.asarray(y)

    if not (a.shape == y.shape == (entries.shape[0], )):
        raise BlockShapeError(f"Candidate {a.shape}, block {y.shape} and matrix {entries.shape} disagree")

    _check_invertible(X)

    c = channel_matrix(channel, len(a)) @ a

    return float(2 * np.real(np.vdot(c, y)) - np.real(np.vdot(c, entries @ c)))


def _half_digits(length: int, size: int) -> np.ndarray:
    powers = size ** np.arange(length - 1, -1, -1, dtype=np.int64)

    return (np.arange(size ** length, dtype=np.int64)[:, None] // powers) % size


def _marginal_bit_probabilities(
    y: np.ndarray,
    entries: np.ndarray,
    mixing: np.ndarray,
    alphabet: np.ndarray,
    bit_table: np.ndarray,
    n0: float
) -> np.ndarray:
    """
    Function marginalizing exp(metric / N0) over every candidate. The block
    is split into a left and a right half so that the metric of a candidate
    pair is a sum of two per-half terms and one bilinear cross term.
    """

    K = len(y)
    left_length = K // 2
    left_digits = _half_digits(left_length, len(alphabet))
    right_digits = _half_digits(K - left_length, len(alphabet))

    left = alphabet[left_digits] @ mixing[:, :left_length].T
    right = alphabet[right_digits] @ mixing[:, left_length:].T

    def own_terms(candidates: np.ndarray) -> np.ndarray:
        return (
            2 * np.real(np.conj(candidates) @ y)
            - np.real(np.sum(np.conj(candidates) * (candidates @ entries), axis=1))
        )

    metrics = (
        own_terms(left)[:, None]
        + own_terms(right)[None, :]
        - 2 * np.real(np.conj(left) @ entries @ right.T)
    )

    if n0 > 0:
        weights = np.exp((metrics - metrics.max()) / n0)
    else:
        weights = (metrics == metrics.max()).astype(np.float64)

    normalization = weights.sum()
    left_probabilities = np.einsum('i,ipb->pb', weights.sum(axis=1), bit_table[left_digits])
    right_probabilities = np.einsum('j,jpb->pb', weights.sum(axis=0), bit_table[right_digits])

    return np.concatenate((left_probabilities, right_probabilities)) / normalization


def exhaustive_map_bits(
    y: np.ndarray,
    X: IsiMatrix | np.ndarray,
    n0: float,
    scheme: ModulationScheme = BPSK,
    channel: FadingChannel | None = None,
    block: MapBlockConfig | None = None
) -> np.ndarray:
    """
    Function returning P(bit = 1 | y) for every bit of a block by summing
    exp(metric / N0) over all candidate sequences.

    Real channels decouple the dimensions, so complex schemes are enumerated
    per dimension over their PAM alphabet; a complex channel mixes the
    dimensions and is enumerated jointly over the whole constellation.
    """

    entries = _matrix_entries(X)
    y = np.asarray(y)
    K = len(y)
    block = MapBlockConfig(K, 0) if block is None else block

    if entries.shape != (K, K):
        raise BlockShapeError(f"Block of {K} samples does not match a matrix of shape {entries.shape}")

    mixing = channel_matrix(channel, K)

    if channel is not None and channel.is_complex:
        block.check_alphabet(scheme.constellation_size)
        labels = np.arange(scheme.constellation_size)
        label_bits = ((labels[:, None] >> np.arange(scheme.bits_per_symbol)[::-1]) & 1).astype(np.float64)

        return _marginal_bit_probabilities(
            y.astype(np.complex128), entries, mixing, scheme.constellation, label_bits, n0
        ).reshape(-1)

    block.check_alphabet(scheme.pam_levels_per_dimension)
    mixing = mixing.real
    dimension_values = scheme.dimension_values(y.astype(np.complex128))
    probabilities = np.stack(
        [
            _marginal_bit_probabilities(
                dimension_values[:, dimension],
                entries,
                mixing,
                scheme.amplitudes,
                scheme.bit_patterns.astype(np.float64),
                n0
            )
            for dimension in range(scheme.dimensions)
        ],
        axis=1
    )

    return probabilities.reshape(-1)


def mf_threshold_detect(y: np.ndarray, scheme: ModulationScheme = BPSK) -> np.ndarray:
    """Function deciding every sample on its own nearest level, ties to bit 0."""

    return demodulate_hard(np.asarray(y, dtype=np.complex128), scheme)


class MatchedFilterDetector(IDetector, StylizedMixin):
    """Symbol-by-symbol threshold detector ignoring interference."""

    _repr_fields = tuple()

    def bit_probabilities(self, frame: ReceivedFrame) -> np.ndarray:
        return mf_threshold_detect(frame.samples, frame.scheme).astype(np.float64)


class MapOracleDetector(IDetector, StylizedMixin):
    """
    Stream detector running the exhaustive oracle on overlapping blocks and
    keeping only decisions at least guard symbols away from a block edge.
    """

    _repr_fields = (Field('tau', value_getter=lambda detector, _: detector.config.tau), Field('block'))

    def __init__(self, config: FtnConfig, block: MapBlockConfig | None = None):
        self.__config = config
        self.__block = block

    @property
    def config(self) -> FtnConfig:
        return self.__config

    @property
    def block(self) -> MapBlockConfig | None:
        return self.__block

    def bit_probabilities(self, frame: ReceivedFrame) -> np.ndarray:
        scheme = frame.scheme
        channel = frame.channel
        block = self.__block or MapBlockConfig.default_for(
            scheme,
            self.__config.isi_length,
            channel is not None and channel.is_complex,
            0 if channel is None else channel.max_delay
        )
        length = frame.length
        bits_per_symbol = scheme.bits_per_symbol
        probabilities = np.empty((length, bits_per_symbol))

        next_unassigned = 0

        for start in self._block_starts(length, block):
            stop = min(start + block.K, length)
            low = 0 if start == 0 else start + block.guard
            high = length if stop == length else stop - block.guard

            block_probabilities = exhaustive_map_bits(
                frame.samples[start:stop],
                self.__config.simulation_matrix(stop - start),
                frame.n0,
                scheme,
                channel,
                block
            ).reshape(stop - start, bits_per_symbol)

            low = max(low, next_unassigned)
            probabilities[low:high] = block_probabilities[low - start:high - start]
            next_unassigned = max(next_unassigned, high)

        return probabilities.reshape(-1)

    @staticmethod
    def _block_starts(length: int, block: MapBlockConfig) -> tuple[int]:
        if length <= block.K:
            return (0, ) if length else tuple()

        starts = list(range(0, length - block.K, block.stride))
        starts.append(length - block.K)

        return tuple(starts)
