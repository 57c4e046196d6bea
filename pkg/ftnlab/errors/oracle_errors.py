from ftnlab.errors.core_errors import ConfigurationError, InputError, NumericalError


class OracleError(Exception):
    pass


class EnumerationSizeError(OracleError, ConfigurationError):
    pass


class BlockShapeError(OracleError, InputError):
    pass


class SingularIsiMatrixError(OracleError, NumericalError):
    pass
