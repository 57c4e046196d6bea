from ftnlab.errors.core_errors import ConfigurationError


class ExperimentError(Exception):
    pass


class ExperimentConfigurationError(ExperimentError, ConfigurationError):
    pass


class MissingModelError(ExperimentConfigurationError):
    pass


class ModelMismatchError(ExperimentConfigurationError):
    pass


class CodeMismatchError(ExperimentConfigurationError):
    pass
