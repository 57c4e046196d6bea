import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
from beautiful_repr import StylizedMixin, Field
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ftnlab.interfaces import IDetectorNetwork, IDetector
from ftnlab.modulation import BPSK, ModulationScheme, tau_key
from ftnlab.channels import ReceivedFrame
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin
from ftnlab.errors.detector_errors import *


logger = logging.getLogger(__name__)

KERNEL_ALLOCATIONS = {
    0.9: (2, 1),
    0.8: (4, 2, 2, 1, 1, 1),
    0.7: (8, 6, 4, 2, 2, 1, 1, 1),
    1.0: (2, ),
}

# Single-filter layers appended beyond N unless a config says otherwise.
DEFAULT_WINDOW_EXTENSIONS = {
    0.9: 2,
}

DENSE_WIDTH = 4
BASELINE_FILTERS = 2
MODEL_FORMAT_VERSION = 1
BCE_CLAMP = 1e-12

_PROBABILITY_FLOOR = np.finfo(np.float64).tiny
_PROBABILITY_CEILING = np.nextafter(1., 0.)


def default_window_extension(tau: float) -> int:
    return DEFAULT_WINDOW_EXTENSIONS.get(tau_key(tau), 0)


def allocation_for(tau: float, window_extension: int = 0) -> tuple[int]:
    """
    Function returning the filter count per kernel layer for a compression
    factor, extended by single-filter layers at distances beyond N.
    """

    try:
        allocation = KERNEL_ALLOCATIONS[tau_key(tau)]
    except KeyError as error:
        raise KernelAllocationError(
            f"No shipped kernel allocation for tau = {tau}; pass an allocation explicitly"
        ) from error

    if window_extension < 0:
        raise KernelAllocationError(f"Window extension {window_extension} must not be negative")

    return allocation + (1, ) * window_extension


class BranchMode(Enum):
    real = "real"
    dual = "dual"


@dataclass(frozen=True, repr=False, eq=False)
class WindowBatch(StylizedMixin):
    """Rows of 2N+1 received samples, row m centred on sample m of a frame."""

    _repr_fields = (Field('window_width'), Field('frame_id'))

    rows: np.ndarray
    center_index: int
    frame_id: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def window_width(self) -> int:
        return 2 * self.center_index + 1


def make_windows(frame: ReceivedFrame | np.ndarray, N: int, frame_id: int = 0) -> WindowBatch:
    samples = np.asarray(frame.samples if isinstance(frame, ReceivedFrame) else frame)

    if N < 0:
        raise WindowShapeError(f"One-sided window length {N} must not be negative")

    padded = np.concatenate((np.zeros(N, dtype=samples.dtype), samples, np.zeros(N, dtype=samples.dtype)))
    rows = sliding_window_view(padded, 2 * N + 1).copy() if len(samples) else np.zeros((0, 2 * N + 1), dtype=samples.dtype)

    return WindowBatch(rows, N, frame_id)


def gather_triplet(window: np.ndarray, i: int) -> np.ndarray:
    window = np.asarray(window)
    N = (window.shape[-1] - 1) // 2

    if not 1 <= i <= N:
        raise TripletDistanceError(f"Distance {i} is outside 1..{N}")

    return window[..., [N - i, N, N + i]]


def bce_loss(p: np.ndarray, labels: np.ndarray) -> float:
    """Function returning the mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12]."""

    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1 - BCE_CLAMP)
    labels = np.asarray(labels, dtype=np.float64).reshape(p.shape)

    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    limit = np.sqrt(6 / (fan_in + fan_out))

    return rng.uniform(-limit, limit, shape)


@dataclass(frozen=True, repr=False, eq=False)
class FkLayerSpec(StylizedMixin, StrictToStateMixin):
    """
    Fixed kernel layer of one distance: every filter sees only the triplet
    (left neighbour, centre, right neighbour) at that distance.
    """

    _repr_fields = (Field('distance'), Field('filter_count'))
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(NetworkStructureError), ))

    distance: int
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, 'weights', np.asarray(self.weights, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, 'biases', np.asarray(self.biases, dtype=np.float64).reshape(-1))
        self._check_state_errors()

    @property
    def filter_count(self) -> int:
        return len(self.biases)

    def _is_correct(self) -> Report:
        return Report.of_checks((
            (self.distance >= 1, f"Kernel distance {self.distance} must be at least 1"),
            (self.filter_count >= 1, f"Layer at distance {self.distance} has no filters"),
            (len(self.weights) == self.filter_count, "Every filter needs one weight triple and one bias"),
        ))


@dataclass(frozen=True, repr=False, eq=False)
class DenseHead(StylizedMixin):
    """Dense tanh layer followed by one sigmoid output neuron per bit."""

    _repr_fields = (Field('width'), Field('output_bits'))

    dense_weights: np.ndarray
    dense_biases: np.ndarray
    output_weights: np.ndarray
    output_biases: np.ndarray

    def __post_init__(self) -> None:
        for name in ('dense_weights', 'dense_biases', 'output_weights', 'output_biases'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

        if (
            self.dense_weights.ndim != 2
            or self.dense_biases.shape != (self.dense_weights.shape[0], )
            or self.output_weights.shape[1:] != (self.dense_weights.shape[0], )
            or self.output_biases.shape != (self.output_weights.shape[0], )
        ):
            raise NetworkStructureError("Dense head parameter shapes are inconsistent")

    @property
    def width(self) -> int:
        return self.dense_weights.shape[0]

    @property
    def input_width(self) -> int:
        return self.dense_weights.shape[1]

    @property
    def output_bits(self) -> int:
        return self.output_weights.shape[0]

    @property
    def parameters(self) -> tuple[np.ndarray]:
        return (self.dense_weights, self.dense_biases, self.output_weights, self.output_biases)

    @classmethod
    def initialized(cls, rng: np.random.Generator, input_width: int, output_bits: int, width: int = DENSE_WIDTH) -> Self:
        return cls(
            glorot_uniform(rng, (width, input_width)),
            np.zeros(width),
            glorot_uniform(rng, (output_bits, width)),
            np.zeros(output_bits)
        )

    @classmethod
    def zeros(cls, input_width: int, output_bits: int, width: int = DENSE_WIDTH) -> Self:
        return cls(np.zeros((width, input_width)), np.zeros(width), np.zeros((output_bits, width)), np.zeros(output_bits))


class DetectorNetwork(IDetectorNetwork, StylizedMixin, ABC):
    """
    Base class of the real-valued detector networks sharing the dense head.

    Subclasses turn a batch of windows into a feature vector through
    _extract_features and propagate feature gradients back into their own
    parameters through _feature_gradients.
    """

    _repr_fields = (
        Field('tau'),
        Field('isi_length'),
        Field('modulation'),
        Field('branch_mode', value_transformer=lambda mode: mode.value),
    )

    def __init__(
        self,
        tau: float,
        isi_length: int,
        head: DenseHead,
        modulation: ModulationScheme = BPSK,
        quadrature: Self | None = None
    ):
        self.__tau = float(tau)
        self.__isi_length = isi_length
        self.__head = head
        self.__modulation = ModulationScheme.of(modulation)
        self.__quadrature = quadrature

        if head.output_bits != self.__modulation.bits_per_dimension:
            raise NetworkStructureError(
                f"{self.__modulation.name} needs {self.__modulation.bits_per_dimension} output bits "
                f"per dimension, the head has {head.output_bits}"
            )

        if quadrature is not None and not self.__modulation.is_complex:
            raise BranchModeError("Only complex modulations carry a quadrature branch")

    @property
    def tau(self) -> float:
        return self.__tau

    @property
    def isi_length(self) -> int:
        return self.__isi_length

    @property
    def head(self) -> DenseHead:
        return self.__head

    @property
    def modulation(self) -> ModulationScheme:
        return self.__modulation

    @property
    def quadrature(self) -> Self | None:
        """Independent quadrature branch, None when both dimensions share weights."""

        return self.__quadrature

    @property
    def shared_branches(self) -> bool:
        return self.__quadrature is None

    @property
    def quadrature_branch(self) -> Self:
        return self if self.__quadrature is None else self.__quadrature

    @property
    def branch_mode(self) -> BranchMode:
        return BranchMode.dual if self.__modulation.is_complex else BranchMode.real

    @property
    def window_width(self) -> int:
        return 2 * self.__isi_length + 1

    @property
    def output_bits(self) -> int:
        return self.__head.output_bits

    @property
    def parameters(self) -> tuple[np.ndarray]:
        return (*self._feature_parameters, *self.__head.parameters)

    def with_parameters(self, parameters: Iterable[np.ndarray]) -> Self:
        parameters = tuple(parameters)
        feature_count = len(self._feature_parameters)

        if len(parameters) != len(self.parameters):
            raise NetworkStructureError(f"Expected {len(self.parameters)} parameter arrays, got {len(parameters)}")

        for old, new in zip(self.parameters, parameters):
            if np.shape(new) != old.shape:
                raise NetworkStructureError(f"Parameter of shape {np.shape(new)} replaces one of shape {old.shape}")

        return self._rebuild(parameters[:feature_count], DenseHead(*parameters[feature_count:]))

    def with_quadrature(self, quadrature: Self | None) -> Self:
        return self._rebuild(self._feature_parameters, self.__head, quadrature)

    def forward(self, rows: np.ndarray) -> np.ndarray:
        rows = self._checked_rows(rows)
        features, _ = self._extract_features(rows)

        return self._head_forward(features)[1]

    def features(self, rows: np.ndarray) -> np.ndarray:
        """Method returning the tanh feature vector fed to the dense head."""

        return self._extract_features(self._checked_rows(rows))[0]

    def backward(self, rows: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray]:
        return self.loss_and_gradients(rows, labels)[1]

    def loss_and_gradients(self, rows: np.ndarray, labels: np.ndarray) -> tuple[float, tuple[np.ndarray]]:
        """Method returning the mean binary cross-entropy and its exact gradients."""

        rows = self._checked_rows(rows)
        labels = np.asarray(labels, dtype=np.float64).reshape(len(rows), self.output_bits)

        features, cache = self._extract_features(rows)
        hidden, probabilities = self._head_forward(features)

        output_delta = (probabilities - labels) / labels.size
        hidden_delta = (output_delta @ self.__head.output_weights) * (1 - hidden ** 2)
        feature_delta = hidden_delta @ self.__head.dense_weights

        return bce_loss(probabilities, labels), (
            *self._feature_gradients(rows, cache, feature_delta),
            hidden_delta.T @ features,
            hidden_delta.sum(axis=0),
            output_delta.T @ hidden,
            output_delta.sum(axis=0),
        )

    def to_document(self) -> dict:
        document = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self._kind,
            "tau": self.__tau,
            "isi_length": self.__isi_length,
            "modulation": self.__modulation.name,
            "branch_mode": self.branch_mode.value,
            "shared_branches": self.shared_branches,
            **self._architecture_document(),
            "parameters": self._parameters_document(),
        }

        if self.__quadrature is not None:
            document["quadrature_parameters"] = self.__quadrature._parameters_document()

        return document

    def _parameters_document(self) -> dict:
        return {
            **self._feature_parameters_document(),
            "dense_weights": self.__head.dense_weights.tolist(),
            "dense_biases": self.__head.dense_biases.tolist(),
            "output_weights": self.__head.output_weights.tolist(),
            "output_biases": self.__head.output_biases.tolist(),
        }

    def _head_forward(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(features @ self.__head.dense_weights.T + self.__head.dense_biases)
        probabilities = expit(hidden @ self.__head.output_weights.T + self.__head.output_biases)

        return hidden, np.clip(probabilities, _PROBABILITY_FLOOR, _PROBABILITY_CEILING)

    def _checked_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)

        if rows.ndim == 1:
            rows = rows[None, :]

        if rows.ndim != 2 or rows.shape[1] != self.window_width:
            raise WindowShapeError(
                f"Network for tau = {self.__tau} expects windows of width {self.window_width}, "
                f"got shape {rows.shape}"
            )

        if np.iscomplexobj(rows):
            raise WindowShapeError("Detector networks take real windows; split complex windows per dimension")

        return rows.astype(np.float64, copy=False)

    @property
    @abstractmethod
    def _kind(self) -> str:
        pass

    @property
    @abstractmethod
    def _feature_parameters(self) -> tuple[np.ndarray]:
        pass

    @abstractmethod
    def _rebuild(self, feature_parameters: tuple[np.ndarray], head: DenseHead, quadrature: Self | None = ...) -> Self:
        pass

    @abstractmethod
    def _extract_features(self, rows: np.ndarray) -> tuple[np.ndarray, object]:
        pass

    @abstractmethod
    def _feature_gradients(self, rows: np.ndarray, cache: object, feature_delta: np.ndarray) -> tuple[np.ndarray]:
        pass

    @abstractmethod
    def _architecture_document(self) -> dict:
        pass

    @abstractmethod
    def _feature_parameters_document(self) -> dict:
        pass


class FkNetwork(DetectorNetwork):
    """
    Structured fixed-kernel detector.

    Layer i evaluates its filters once, on the triplet (y[k-i], y[k], y[k+i]),
    so the hierarchical allocation puts more filters on the strong near
    interference and a single filter on the weak far interference.
    """

    def __init__(
        self,
        tau: float,
        layers: Iterable[FkLayerSpec],
        head: DenseHead,
        modulation: ModulationScheme = BPSK,
        quadrature: Self | None = None
    ):
        self.__layers = tuple(layers)

        if tuple(layer.distance for layer in self.__layers) != tuple(range(1, len(self.__layers) + 1)):
            raise NetworkStructureError("Kernel layers must cover distances 1..N in order")

        if head.input_width != sum(layer.filter_count for layer in self.__layers):
            raise NetworkStructureError(
                f"Dense head takes {head.input_width} features, the layers produce "
                f"{sum(layer.filter_count for layer in self.__layers)}"
            )

        super().__init__(tau, len(self.__layers), head, modulation, quadrature)

    @classmethod
    def initialized(
        cls,
        tau: float,
        allocation: Iterable[int],
        rng: np.random.Generator,
        modulation: ModulationScheme = BPSK,
        shared_branches: bool = True
    ) -> Self:
        """Method for creating a network with uniform Glorot weights and zero biases."""

        modulation = ModulationScheme.of(modulation)
        allocation = tuple(allocation)

        network = cls(
            tau,
            (
                FkLayerSpec(distance, glorot_uniform(rng, (filter_count, 3)), np.zeros(filter_count))
                for distance, filter_count in enumerate(allocation, start=1)
            ),
            DenseHead.initialized(rng, sum(allocation), modulation.bits_per_dimension),
            modulation
        )

        if not shared_branches and modulation.is_complex:
            network = network.with_quadrature(cls.initialized(tau, allocation, rng, modulation))

        return network

    @classmethod
    def zeros(cls, tau: float, allocation: Iterable[int], modulation: ModulationScheme = BPSK) -> Self:
        modulation = ModulationScheme.of(modulation)
        allocation = tuple(allocation)

        return cls(
            tau,
            (
                FkLayerSpec(distance, np.zeros((filter_count, 3)), np.zeros(filter_count))
                for distance, filter_count in enumerate(allocation, start=1)
            ),
            DenseHead.zeros(sum(allocation), modulation.bits_per_dimension),
            modulation
        )

    @property
    def layers(self) -> tuple[FkLayerSpec]:
        return self.__layers

    @property
    def allocation(self) -> tuple[int]:
        return tuple(layer.filter_count for layer in self.__layers)

    @property
    def feature_count(self) -> int:
        return sum(self.allocation)

    @property
    def _kind(self) -> str:
        return "fk"

    @property
    def _feature_parameters(self) -> tuple[np.ndarray]:
        return tuple(
            parameter
            for layer in self.__layers
            for parameter in (layer.weights, layer.biases)
        )

    def _rebuild(self, feature_parameters: tuple[np.ndarray], head: DenseHead, quadrature: Self | None = ...) -> Self:
        return type(self)(
            self.tau,
            (
                FkLayerSpec(layer.distance, feature_parameters[2 * index], feature_parameters[2 * index + 1])
                for index, layer in enumerate(self.__layers)
            ),
            head,
            self.modulation,
            self.quadrature if quadrature is ... else quadrature
        )

    def _extract_features(self, rows: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        triplets = [gather_triplet(rows, layer.distance) for layer in self.__layers]
        activations = [
            np.tanh(triplet @ layer.weights.T + layer.biases)
            for triplet, layer in zip(triplets, self.__layers)
        ]

        return np.concatenate(activations, axis=1), (triplets, activations)

    def _feature_gradients(self, rows: np.ndarray, cache: object, feature_delta: np.ndarray) -> tuple[np.ndarray]:
        triplets, activations = cache
        gradients = list()
        offset = 0

        for triplet, activation, layer in zip(triplets, activations, self.__layers):
            delta = feature_delta[:, offset:offset + layer.filter_count] * (1 - activation ** 2)
            gradients.extend((delta.T @ triplet, delta.sum(axis=0)))
            offset += layer.filter_count

        return tuple(gradients)

    def _architecture_document(self) -> dict:
        return {"allocation": list(self.allocation)}

    def _feature_parameters_document(self) -> dict:
        return {
            "layers": [
                {"distance": layer.distance, "weights": layer.weights.tolist(), "biases": layer.biases.tolist()}
                for layer in self.__layers
            ]
        }

    @classmethod
    def from_document(cls, document: dict) -> Self:
        modulation = ModulationScheme.of(document["modulation"])

        def build(parameters: dict) -> Self:
            return cls(
                document["tau"],
                (
                    FkLayerSpec(layer["distance"], layer["weights"], layer["biases"])
                    for layer in parameters["layers"]
                ),
                _head_from_document(parameters),
                modulation
            )

        network = build(document["parameters"])

        if tuple(network.allocation) != tuple(document["allocation"]):
            raise ModelFileError("Stored allocation disagrees with the stored layers")

        if document.get("quadrature_parameters") is not None:
            network = network.with_quadrature(build(document["quadrature_parameters"]))

        return network


class ConvBaselineNetwork(DetectorNetwork):
    """Conventional detector sliding kernels of length r across the whole window."""

    def __init__(
        self,
        tau: float,
        isi_length: int,
        kernel_weights: np.ndarray,
        kernel_biases: np.ndarray,
        head: DenseHead,
        modulation: ModulationScheme = BPSK,
        quadrature: Self | None = None
    ):
        self.__kernel_weights = np.asarray(kernel_weights, dtype=np.float64)
        self.__kernel_biases = np.asarray(kernel_biases, dtype=np.float64).reshape(-1)

        if self.__kernel_weights.ndim != 2 or len(self.__kernel_weights) != len(self.__kernel_biases):
            raise NetworkStructureError("Every convolution filter needs one kernel and one bias")

        if not 1 <= self.__kernel_weights.shape[1] <= 2 * isi_length + 1:
            raise NetworkStructureError(
                f"Kernel length {self.__kernel_weights.shape[1]} does not fit a window of width {2 * isi_length + 1}"
            )

        self.__positions = 2 * isi_length + 2 - self.__kernel_weights.shape[1]

        if head.input_width != self.filter_count * self.__positions:
            raise NetworkStructureError(
                f"Dense head takes {head.input_width} features, the convolution produces "
                f"{self.filter_count * self.__positions}"
            )

        super().__init__(tau, isi_length, head, modulation, quadrature)

    @classmethod
    def initialized(
        cls,
        tau: float,
        isi_length: int,
        kernel_length: int,
        rng: np.random.Generator,
        modulation: ModulationScheme = BPSK,
        filters: int = BASELINE_FILTERS,
        shared_branches: bool = True
    ) -> Self:
        modulation = ModulationScheme.of(modulation)
        positions = 2 * isi_length + 2 - kernel_length

        network = cls(
            tau,
            isi_length,
            glorot_uniform(rng, (filters, kernel_length)),
            np.zeros(filters),
            DenseHead.initialized(rng, filters * positions, modulation.bits_per_dimension),
            modulation
        )

        if not shared_branches and modulation.is_complex:
            network = network.with_quadrature(
                cls.initialized(tau, isi_length, kernel_length, rng, modulation, filters)
            )

        return network

    @classmethod
    def zeros(
        cls,
        tau: float,
        isi_length: int,
        kernel_length: int,
        modulation: ModulationScheme = BPSK,
        filters: int = BASELINE_FILTERS
    ) -> Self:
        modulation = ModulationScheme.of(modulation)
        positions = 2 * isi_length + 2 - kernel_length

        return cls(
            tau,
            isi_length,
            np.zeros((filters, kernel_length)),
            np.zeros(filters),
            DenseHead.zeros(filters * positions, modulation.bits_per_dimension),
            modulation
        )

    @property
    def kernel_length(self) -> int:
        return self.__kernel_weights.shape[1]

    @property
    def filter_count(self) -> int:
        return len(self.__kernel_biases)

    @property
    def positions(self) -> int:
        return self.__positions

    @property
    def kernel_weights(self) -> np.ndarray:
        return self.__kernel_weights

    @property
    def kernel_biases(self) -> np.ndarray:
        return self.__kernel_biases

    def preactivations(self, rows: np.ndarray) -> np.ndarray:
        """Method returning kernel outputs before tanh, shaped (rows, filters, positions)."""

        patches = sliding_window_view(self._checked_rows(rows), self.kernel_length, axis=1)

        return np.einsum('rpj,fj->rfp', patches, self.__kernel_weights) + self.__kernel_biases[None, :, None]

    @property
    def _kind(self) -> str:
        return "conv"

    @property
    def _feature_parameters(self) -> tuple[np.ndarray]:
        return (self.__kernel_weights, self.__kernel_biases)

    def _rebuild(self, feature_parameters: tuple[np.ndarray], head: DenseHead, quadrature: Self | None = ...) -> Self:
        return type(self)(
            self.tau,
            self.isi_length,
            *feature_parameters,
            head,
            self.modulation,
            self.quadrature if quadrature is ... else quadrature
        )

    def _extract_features(self, rows: np.ndarray) -> tuple[np.ndarray, tuple]:
        patches = sliding_window_view(rows, self.kernel_length, axis=1)
        activations = np.tanh(
            np.einsum('rpj,fj->rfp', patches, self.__kernel_weights) + self.__kernel_biases[None, :, None]
        )

        return activations.reshape(len(rows), -1), (patches, activations)

    def _feature_gradients(self, rows: np.ndarray, cache: object, feature_delta: np.ndarray) -> tuple[np.ndarray]:
        patches, activations = cache
        delta = feature_delta.reshape(activations.shape) * (1 - activations ** 2)

        return (np.einsum('rfp,rpj->fj', delta, patches), delta.sum(axis=(0, 2)))

    def _architecture_document(self) -> dict:
        return {"kernel_length": self.kernel_length, "filters": self.filter_count}

    def _feature_parameters_document(self) -> dict:
        return {"kernel_weights": self.__kernel_weights.tolist(), "kernel_biases": self.__kernel_biases.tolist()}

    @classmethod
    def from_document(cls, document: dict) -> Self:
        modulation = ModulationScheme.of(document["modulation"])

        def build(parameters: dict) -> Self:
            return cls(
                document["tau"],
                document["isi_length"],
                parameters["kernel_weights"],
                parameters["kernel_biases"],
                _head_from_document(parameters),
                modulation
            )

        network = build(document["parameters"])

        if document.get("quadrature_parameters") is not None:
            network = network.with_quadrature(build(document["quadrature_parameters"]))

        return network


def _head_from_document(parameters: dict) -> DenseHead:
    return DenseHead(
        parameters["dense_weights"],
        parameters["dense_biases"],
        parameters["output_weights"],
        parameters["output_biases"]
    )


_NETWORK_KINDS = {"fk": FkNetwork, "conv": ConvBaselineNetwork}


def fk_forward(net: DetectorNetwork, window: np.ndarray) -> np.ndarray:
    return net.forward(np.asarray(window)[None, :])[0]


def fk_forward_complex(net: DetectorNetwork, window: np.ndarray) -> np.ndarray:
    """Function applying the in-phase and quadrature branches to one complex window."""

    if net.branch_mode is not BranchMode.dual:
        raise BranchModeError(f"A {net.branch_mode.value} network has no quadrature branch")

    window = np.asarray(window, dtype=np.complex128)

    return np.concatenate((
        fk_forward(net, window.real),
        fk_forward(net.quadrature_branch, window.imag),
    ))


def conv_baseline_forward(net: ConvBaselineNetwork, window: np.ndarray) -> np.ndarray:
    return fk_forward(net, window)


def hard_decision(p: float | np.ndarray) -> int | np.ndarray:
    decisions = (np.asarray(p) > 0.5).astype(np.uint8)

    return int(decisions) if decisions.ndim == 0 else decisions


def to_llr(p: float | np.ndarray, epsilon: float = 1e-7) -> float | np.ndarray:
    """Function converting P(bit = 1) into ln P(bit = 0) / P(bit = 1)."""

    clamped = np.clip(np.asarray(p, dtype=np.float64), epsilon, 1 - epsilon)
    llrs = np.log1p(-clamped) - np.log(clamped)

    return float(llrs) if llrs.ndim == 0 else llrs


def save_model(net: DetectorNetwork, path: str | Path) -> None:
    with open(path, 'w') as file:
        json.dump(net.to_document(), file, indent=2)
        file.write('\n')

    logger.info("Saved %r to %s", net, path)


def load_model(path: str | Path) -> DetectorNetwork:
    try:
        with open(path) as file:
            document = json.load(file)
    except FileNotFoundError as error:
        raise ModelFileError(f"Model file {path} does not exist") from error
    except json.JSONDecodeError as error:
        raise ModelFileError(f"Model file {path} is not valid JSON: {error}") from error

    if document.get("format_version") != MODEL_FORMAT_VERSION:
        raise UnsupportedModelVersionError(
            f"Model file {path} has format version {document.get('format_version')}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )

    try:
        network_type = _NETWORK_KINDS[document["kind"]]
    except KeyError as error:
        raise ModelFileError(f"Model file {path} has unknown kind {document.get('kind')!r}") from error

    try:
        return network_type.from_document(document)
    except (KeyError, TypeError, ValueError) as error:
        raise ModelFileError(f"Model file {path} is incomplete: {error}") from error


class NetworkDetector(IDetector, StylizedMixin):
    """Frame detector running a network on every window of a received frame."""

    _repr_fields = (Field('network'), )

    def __init__(self, network: DetectorNetwork):
        self.__network = network

    @property
    def network(self) -> DetectorNetwork:
        return self.__network

    def bit_probabilities(self, frame: ReceivedFrame) -> np.ndarray:
        if frame.scheme != self.__network.modulation:
            raise ModulationMismatchError(
                f"Network detects {self.__network.modulation.name}, frame carries {frame.scheme.name}"
            )

        rows = make_windows(frame, self.__network.isi_length).rows
        probabilities = self.__network.forward(rows.real)

        if self.__network.branch_mode is BranchMode.dual:
            probabilities = np.concatenate(
                (probabilities, self.__network.quadrature_branch.forward(rows.imag)),
                axis=1
            )

        return probabilities.reshape(-1)


def parse_network_kind(name: str) -> tuple[str, int | None]:
    """Function splitting a detector name into the network kind and its kernel length."""

    normalized = str(name).lower()

    if normalized in ("fk", "fk-cnn", "cnn-fk"):
        return "fk", None

    prefix, _, length = normalized.partition("-k")

    if prefix in ("conv", "cnn") and length.isdigit() and int(length) >= 1:
        return "conv", int(length)

    raise NetworkStructureError(f"Unknown network kind {name!r}; expected fk-cnn or conv-k2..conv-k5")
