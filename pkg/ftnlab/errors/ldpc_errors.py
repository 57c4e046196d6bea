from ftnlab.errors.core_errors import ConfigurationError, InputError


class LdpcError(Exception):
    pass


class AlistParseError(LdpcError, ConfigurationError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number

        super().__init__(
            message if line_number is None else f"line {line_number}: {message}"
        )


class LlrLengthError(LdpcError, InputError):
    pass


class CodewordLengthError(LdpcError, ConfigurationError):
    pass


class InfoLengthError(LdpcError, InputError):
    pass
