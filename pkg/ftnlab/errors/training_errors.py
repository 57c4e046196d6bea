from ftnlab.errors.core_errors import ConfigurationError, InputError, NumericalError


class TrainingError(Exception):
    pass


class TrainConfigurationError(TrainingError, ConfigurationError):
    pass


class TrainingDivergenceError(TrainingError, NumericalError):
    def __init__(self, step: int, learning_rate: float, last_finite_loss: float | None):
        self.step = step
        self.learning_rate = learning_rate
        self.last_finite_loss = last_finite_loss

        super().__init__(
            f"Loss became non-finite at step {step} "
            f"(learning rate {learning_rate:.3e}, last finite loss {last_finite_loss})"
        )


class GradientCheckError(TrainingError, InputError):
    pass
