from abc import ABC, abstractmethod
from typing import Iterable

import numpy as np


class IUpdatable(ABC):
    """Interface of anything that advances its own state by one step."""

    @abstractmethod
    def update(self) -> None:
        """Main method for continuing computations."""


class ILoop(ABC):
    """
    Loop class representation interface for abstracting dependencies on how a
    loop starts.
    """

    @abstractmethod
    def run(self) -> None:
        """Loop start method."""

    @abstractmethod
    def finish(self) -> None:
        """Method for forcibly ending a loop."""


class IFrameSimulator(ABC):
    """Interface of a channel path turning a symbol frame into received samples."""

    @abstractmethod
    def __call__(
        self,
        frame: 'SymbolFrame',
        n0: float,
        rng: np.random.Generator,
        channel: 'FadingChannel | None' = None
    ) -> 'ReceivedFrame':
        pass


class IDetectorNetwork(ABC):
    """
    Interface of a trainable real-valued detector network mapping windows of
    width 2N+1 onto bit probabilities.
    """

    @property
    @abstractmethod
    def window_width(self) -> int:
        pass

    @property
    @abstractmethod
    def output_bits(self) -> int:
        pass

    @abstractmethod
    def forward(self, rows: np.ndarray) -> np.ndarray:
        """Method returning P(bit = 1) of shape (rows, output_bits)."""

    @abstractmethod
    def backward(self, rows: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray]:
        """Method returning mean binary cross-entropy gradients per parameter."""

    @property
    @abstractmethod
    def parameters(self) -> tuple[np.ndarray]:
        pass

    @abstractmethod
    def with_parameters(self, parameters: Iterable[np.ndarray]) -> 'IDetectorNetwork':
        """Method for creating the same architecture with other parameter values."""


class IDetector(ABC):
    """Interface of a frame-level detector producing soft and hard bit decisions."""

    @abstractmethod
    def bit_probabilities(self, frame: 'ReceivedFrame') -> np.ndarray:
        """Method returning P(bit = 1) per transmitted bit in modulation order."""

    def detect(self, frame: 'ReceivedFrame') -> np.ndarray:
        return (self.bit_probabilities(frame) > 0.5).astype(np.uint8)
