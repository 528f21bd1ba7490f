class CSSLError(Exception):
    pass


class ConfigError(CSSLError, ValueError):
    """Inconsistent sizes, bad priors, unknown modes or config keys."""


class InputError(CSSLError, ValueError):
    """Data handed to an operation does not match its contract."""


class ParseError(InputError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(InputError):
    pass


class TrainingError(CSSLError, RuntimeError):
    pass
