import csv
import logging
from dataclasses import dataclass, field, fields, asdict
from math import floor
from pathlib import Path
from typing import Iterable, Mapping
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
import yaml
from beautiful_repr import StylizedMixin, Field
from tqdm import tqdm

from ftnlab.modulation import FtnConfig, ModulationScheme, SHIPPED_ISI_LENGTHS, modulate, tau_key
from ftnlab.channels import ChannelSpec, simulator_for, snr_db_to_n0
from ftnlab.networks import (
    ConvBaselineNetwork, DetectorNetwork, FkNetwork, allocation_for, default_window_extension, make_windows,
    parse_network_kind
)
from ftnlab.logs import is_progress_visible
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin, HandlerLoop, LoopHandler
from ftnlab.errors.training_errors import *
from ftnlab.errors.core_errors import FtnLabError


logger = logging.getLogger(__name__)

VALIDATION_STREAM = 0x5EED


@dataclass(frozen=True, repr=False)
class TrainConfig(StylizedMixin, StrictToStateMixin):
    """Training hyperparameters; the defaults are the full-budget values divided by desk_scale."""

    _repr_fields = (Field('tau'), Field('modulation'), Field('detector'), Field('desk_scale'), Field('seed'))
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(TrainConfigurationError), ))

    tau: float
    modulation: str = "bpsk"
    detector: str = "fk"
    beta: float = 0.35
    snr_db_set: tuple[float, ...] = (7., 8., 9., 10.)
    batch_size: int = 1000
    steps_per_epoch: int = 4000
    epochs: int = 20
    init_lr: float = 1e-3
    decay_rate: float = 0.9
    decay_steps: int = 20000
    staircase: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    channel_mode: str = "awgn"
    fading_paths: int = 3
    fading_seed: int = 0
    rayleigh_magnitude: bool = True
    desk_scale: int = 10
    validation_windows: int = 100000
    frame_symbols: int = 250
    window_extension: int | None = None
    shared_branches: bool = True
    allocation: tuple[int, ...] | None = None
    isi_length: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, 'snr_db_set', tuple(float(snr) for snr in self.snr_db_set))

        if self.window_extension is None:
            object.__setattr__(self, 'window_extension', default_window_extension(self.tau))

        if self.allocation is not None:
            object.__setattr__(self, 'allocation', tuple(int(count) for count in self.allocation))

        self._check_state_errors()

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> Self:
        known = {config_field.name for config_field in fields(cls)}
        unknown = set(mapping) - known

        if unknown:
            raise TrainConfigurationError(f"Unknown training options: {', '.join(sorted(unknown))}")

        try:
            return cls(**mapping)
        except TypeError as error:
            raise TrainConfigurationError(str(error)) from error

    @classmethod
    def from_yaml(cls, path: str | Path) -> Self:
        with open(path) as file:
            mapping = yaml.safe_load(file) or dict()

        if not isinstance(mapping, Mapping):
            raise TrainConfigurationError(f"Training config {path} must hold a mapping")

        return cls.from_mapping(mapping)

    def to_mapping(self) -> dict:
        mapping = asdict(self)
        mapping['snr_db_set'] = list(self.snr_db_set)
        mapping['allocation'] = None if self.allocation is None else list(self.allocation)

        return mapping

    @property
    def scheme(self) -> ModulationScheme:
        return ModulationScheme.of(self.modulation)

    @property
    def network_kind(self) -> tuple[str, int | None]:
        return parse_network_kind(self.detector)

    @property
    def kernel_allocation(self) -> tuple[int]:
        return self.allocation if self.allocation is not None else allocation_for(self.tau, self.window_extension)

    @property
    def network_isi_length(self) -> int:
        if self.network_kind[0] == "fk":
            return len(self.kernel_allocation)
        elif self.isi_length is not None:
            return self.isi_length + self.window_extension

        try:
            return SHIPPED_ISI_LENGTHS[tau_key(self.tau)] + self.window_extension
        except KeyError as error:
            raise TrainConfigurationError(f"No shipped ISI length for tau = {self.tau}; set isi_length") from error

    @property
    def ftn_config(self) -> FtnConfig:
        return FtnConfig(self.tau, self.network_isi_length, self.beta, modulation=self.scheme)

    @property
    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(self.channel_mode, self.fading_paths, self.rayleigh_magnitude, self.fading_seed)

    @property
    def scaled_steps_per_epoch(self) -> int:
        return max(1, self.steps_per_epoch // self.desk_scale)

    @property
    def scaled_decay_steps(self) -> int:
        return max(1, self.decay_steps // self.desk_scale)

    @property
    def scaled_validation_windows(self) -> int:
        return max(self.batch_size, self.validation_windows // self.desk_scale)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.scaled_steps_per_epoch

    @property
    def samples_per_epoch(self) -> int:
        return self.batch_size * self.scaled_steps_per_epoch

    def _is_correct(self) -> Report:
        try:
            self.network_kind
            ChannelSpec(self.channel_mode, self.fading_paths)
            ModulationScheme.of(self.modulation)
        except FtnLabError as error:
            return Report(False, str(error))

        return Report.of_checks((
            (len(self.snr_db_set) > 0, "Training SNR set is empty"),
            (self.batch_size > 0, f"Batch size {self.batch_size} must be positive"),
            (self.steps_per_epoch > 0, f"Steps per epoch {self.steps_per_epoch} must be positive"),
            (self.epochs >= 0, f"Epoch count {self.epochs} must not be negative"),
            (self.init_lr > 0, f"Initial learning rate {self.init_lr} must be positive"),
            (0 < self.decay_rate <= 1, f"Decay rate {self.decay_rate} must lie in (0, 1]"),
            (self.decay_steps > 0, f"Decay steps {self.decay_steps} must be positive"),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "Adam moment rates must lie in [0, 1)"),
            (self.adam_epsilon > 0, f"Adam epsilon {self.adam_epsilon} must be positive"),
            (self.desk_scale >= 1, f"Desk scale {self.desk_scale} must be at least 1"),
            (self.validation_windows > 0, f"Validation size {self.validation_windows} must be positive"),
            (self.frame_symbols > 0, f"Frame length {self.frame_symbols} must be positive"),
            (self.window_extension >= 0, f"Window extension {self.window_extension} must not be negative"),
        ))


@dataclass(frozen=True)
class AdamState:
    first_moments: tuple[np.ndarray, ...]
    second_moments: tuple[np.ndarray, ...]
    step: int = 0

    @classmethod
    def zeros_like(cls, parameters: Iterable[np.ndarray]) -> Self:
        parameters = tuple(parameters)

        return cls(
            tuple(np.zeros_like(parameter) for parameter in parameters),
            tuple(np.zeros_like(parameter) for parameter in parameters)
        )


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path: str | Path) -> None:
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(('epoch', 'train_loss', 'val_loss', 'lr'))
            writer.writerows(
                (epoch, repr(train), repr(validation), repr(rate))
                for epoch, (train, validation, rate) in enumerate(
                    zip(self.train_loss, self.val_loss, self.lr), start=1
                )
            )


def lr_at(config: TrainConfig, global_step: int) -> float:
    """Function returning the exponentially decayed learning rate of a step."""

    exponent = global_step / config.scaled_decay_steps

    return config.init_lr * config.decay_rate ** (floor(exponent) if config.staircase else exponent)


def adam_step(
    state: AdamState,
    params: Iterable[np.ndarray],
    grads: Iterable[np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8
) -> tuple[tuple[np.ndarray, ...], AdamState]:
    step = state.step + 1
    first_moments = list()
    second_moments = list()
    updated = list()

    for parameter, gradient, first, second in zip(params, grads, state.first_moments, state.second_moments):
        first = beta1 * first + (1 - beta1) * gradient
        second = beta2 * second + (1 - beta2) * gradient ** 2

        corrected_first = first / (1 - beta1 ** step)
        corrected_second = second / (1 - beta2 ** step)

        updated.append(parameter - lr * corrected_first / (np.sqrt(corrected_second) + epsilon))
        first_moments.append(first)
        second_moments.append(second)

    return tuple(updated), AdamState(tuple(first_moments), tuple(second_moments), step)


def backward(net: DetectorNetwork, window: np.ndarray, label: np.ndarray | int) -> tuple[np.ndarray]:
    rows = np.atleast_2d(np.asarray(window, dtype=np.float64))

    return net.backward(rows, np.asarray(label, dtype=np.float64).reshape(len(rows), net.output_bits))


@dataclass(frozen=True)
class GradientErrors:
    """
    Worst disagreement between analytic gradients and central differences,
    split into a relative error over components of magnitude at least the
    floor and an absolute error over the components below it.
    """

    relative: float
    absolute: float


def gradient_errors(
    net: DetectorNetwork,
    rows: np.ndarray,
    labels: np.ndarray | int,
    h: float = 5e-6,
    floor_magnitude: float = 1e-5
) -> GradientErrors:
    if not 1e-8 <= h <= 1e-4:
        raise GradientCheckError(f"Step {h} is outside [1e-8, 1e-4]")

    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64).reshape(len(rows), net.output_bits)

    analytic = net.backward(rows, labels)
    parameters = [parameter.copy() for parameter in net.parameters]
    relative = absolute = 0.

    for index, parameter in enumerate(parameters):
        for position in np.ndindex(parameter.shape):
            original = parameter[position]

            parameter[position] = original + h
            upper = net.with_parameters(parameters).loss_and_gradients(rows, labels)[0]
            parameter[position] = original - h
            lower = net.with_parameters(parameters).loss_and_gradients(rows, labels)[0]
            parameter[position] = original

            numeric = (upper - lower) / (2 * h)
            exact = analytic[index][position]
            scale = max(abs(exact), abs(numeric))

            if scale >= floor_magnitude:
                relative = max(relative, abs(exact - numeric) / scale)
            else:
                absolute = max(absolute, abs(exact - numeric))

    return GradientErrors(relative, absolute)


def gradient_check(
    net: DetectorNetwork,
    rows: np.ndarray,
    labels: np.ndarray | int,
    h: float = 5e-6,
    floor_magnitude: float = 1e-5
) -> float:
    """Function returning the relative part of gradient_errors."""

    return gradient_errors(net, rows, labels, h, floor_magnitude).relative


class BatchGenerator:
    """
    Generator of (window, label) pairs drawn from frames simulated at an SNR
    picked uniformly from the training set for every frame.
    """

    def __init__(self, config: TrainConfig):
        self.__config = config
        self.__ftn_config = config.ftn_config
        self.__simulator = simulator_for(self.__ftn_config, config.channel_spec)
        self.__channel_source = config.channel_spec.create_source()

    @property
    def config(self) -> TrainConfig:
        return self.__config

    def __call__(
        self,
        rng: np.random.Generator,
        size: int | None = None,
        dimensions: tuple[int, ...] | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        scheme = self.__config.scheme
        size = self.__config.batch_size if size is None else size
        dimensions = tuple(range(scheme.dimensions)) if dimensions is None else dimensions

        row_parts = list()
        label_parts = list()
        collected = 0

        while collected < size:
            bits = rng.integers(0, 2, self.__config.frame_symbols * scheme.bits_per_symbol, dtype=np.uint8)
            snr_db = self.__config.snr_db_set[rng.integers(len(self.__config.snr_db_set))]
            frame = modulate(bits, scheme)
            channel = self.__channel_source(rng)
            received = self.__simulator(frame, snr_db_to_n0(snr_db), rng, channel)

            windows = make_windows(received, self.__ftn_config.isi_length).rows
            dimension_bits = scheme.split_dimension_bits(bits)

            for dimension in dimensions:
                row_parts.append(windows.imag if dimension else windows.real)
                label_parts.append(dimension_bits[:, dimension, :])
                collected += len(windows)

        return (
            np.concatenate(row_parts)[:size].astype(np.float64),
            np.concatenate(label_parts)[:size].astype(np.float64)
        )


def generate_batch(config: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    return BatchGenerator(config)(rng)


def initialize_network(config: TrainConfig, rng: np.random.Generator) -> DetectorNetwork:
    kind, kernel_length = config.network_kind

    if kind == "fk":
        return FkNetwork.initialized(
            config.tau, config.kernel_allocation, rng, config.scheme, config.shared_branches
        )

    return ConvBaselineNetwork.initialized(
        config.tau,
        config.network_isi_length,
        kernel_length,
        rng,
        config.scheme,
        shared_branches=config.shared_branches
    )


@dataclass
class _Branch:
    network: DetectorNetwork
    optimizer: AdamState
    dimensions: tuple[int, ...]
    validation_rows: np.ndarray
    validation_labels: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)


class TrainingLoop(HandlerLoop):
    """
    Loop performing one optimization step per iteration and closing every epoch
    with a validation pass; dual-branch networks with independent weights are
    optimized as two branches fed by their own dimension.
    """

    _handlers_factories = (
        lambda loop: OptimizationStepHandler(loop),
        lambda loop: EpochSummaryHandler(loop),
    )

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.history = TrainHistory()
        self.step = 0
        self.last_finite_loss: float | None = None

        network = initialize_network(config, rng)
        self.generator = BatchGenerator(config)
        validation_rng = np.random.default_rng([config.seed, VALIDATION_STREAM])

        if network.shared_branches:
            parts = ((network, tuple(range(config.scheme.dimensions))), )
        else:
            parts = ((network.with_quadrature(None), (0, )), (network.quadrature, (1, )))

        self.branches = list()

        for branch_network, dimensions in parts:
            validation_rows, validation_labels = self.generator(
                validation_rng, config.scaled_validation_windows, dimensions
            )
            self.branches.append(_Branch(
                branch_network,
                AdamState.zeros_like(branch_network.parameters),
                dimensions,
                validation_rows,
                validation_labels
            ))

        self.progress = tqdm(
            total=config.total_steps,
            desc=f"train tau={config.tau}",
            disable=not is_progress_visible(),
            leave=False
        )

        super().__init__()

    @property
    def network(self) -> DetectorNetwork:
        if len(self.branches) == 1:
            return self.branches[0].network

        return self.branches[0].network.with_quadrature(self.branches[1].network)

    @property
    def epoch(self) -> int:
        return len(self.history)

    def _prepare(self) -> None:
        if self.config.total_steps == 0:
            self.finish()

    def finish(self) -> None:
        super().finish()
        self.progress.close()


class OptimizationStepHandler(LoopHandler):
    """Handler drawing one batch per branch and applying one Adam update."""

    def update(self) -> None:
        loop = self.loop
        config = loop.config
        rate = lr_at(config, loop.step)

        for branch in loop.branches:
            rows, labels = loop.generator(loop.rng, dimensions=branch.dimensions)
            loss, gradients = branch.network.loss_and_gradients(rows, labels)

            if not np.isfinite(loss):
                loop.progress.close()
                raise TrainingDivergenceError(loop.step, rate, loop.last_finite_loss)

            parameters, branch.optimizer = adam_step(
                branch.optimizer,
                branch.network.parameters,
                gradients,
                rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_epsilon
            )
            branch.network = branch.network.with_parameters(parameters)
            branch.epoch_losses.append(loss)
            loop.last_finite_loss = loss

        loop.step += 1
        loop.progress.update()

        if loop.step % config.scaled_decay_steps == 0:
            logger.debug("Learning rate decays to %.3e after step %d", lr_at(config, loop.step), loop.step)


class EpochSummaryHandler(LoopHandler):
    """Handler recording losses and learning rate at the end of each epoch."""

    def update(self) -> None:
        loop = self.loop
        config = loop.config

        if loop.step % config.scaled_steps_per_epoch:
            return

        train_loss = float(np.mean([np.mean(branch.epoch_losses) for branch in loop.branches]))
        val_loss = float(np.mean([
            branch.network.loss_and_gradients(branch.validation_rows, branch.validation_labels)[0]
            for branch in loop.branches
        ]))

        for branch in loop.branches:
            branch.epoch_losses.clear()

        loop.history.train_loss.append(train_loss)
        loop.history.val_loss.append(val_loss)
        loop.history.lr.append(lr_at(config, loop.step - 1))

        logger.info(
            "epoch %d/%d: train loss %.5f, validation loss %.5f, lr %.3e",
            loop.epoch, config.epochs, train_loss, val_loss, loop.history.lr[-1]
        )

        if loop.epoch >= config.epochs:
            loop.finish()


def train(config: TrainConfig, rng: np.random.Generator | None = None) -> tuple[DetectorNetwork, TrainHistory]:
    """Function training one detector from scratch, reproducible from config.seed."""

    rng = np.random.default_rng(config.seed) if rng is None else rng

    logger.info(
        "Training %s for tau = %s, %s: %d epochs of %d steps, batch %d",
        config.detector, config.tau, config.scheme.name, config.epochs,
        config.scaled_steps_per_epoch, config.batch_size
    )

    loop = TrainingLoop(config, rng)
    loop.run()

    return loop.network, loop.history
