class FtnLabError(Exception):
    pass


class ConfigurationError(FtnLabError):
    pass


class InputError(FtnLabError):
    pass


class NumericalError(FtnLabError):
    pass
