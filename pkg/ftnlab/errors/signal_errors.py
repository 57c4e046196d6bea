from ftnlab.errors.core_errors import ConfigurationError, InputError, NumericalError


class SignalError(Exception):
    pass


class PulseConfigurationError(SignalError, ConfigurationError):
    pass


class GridAlignmentError(SignalError, ConfigurationError):
    pass


class FtnConfigurationError(SignalError, ConfigurationError):
    pass


class ModulationError(SignalError):
    pass


class UnknownModulationError(ModulationError, ConfigurationError):
    pass


class BitCountError(ModulationError, InputError):
    pass


class IsiMatrixError(SignalError, InputError):
    pass


class SquareRootFactorizationError(SignalError, NumericalError):
    pass


class FadingChannelError(SignalError, ConfigurationError):
    pass
