from ftnlab.errors.core_errors import ConfigurationError, InputError


class ComplexityError(Exception):
    pass


class OperationCountError(ComplexityError, InputError):
    pass


class LutWeightsError(ComplexityError, ConfigurationError):
    pass


class TableMismatchError(ComplexityError):
    pass
