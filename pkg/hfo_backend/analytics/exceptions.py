"""
Error hierarchy shared by the numeric library and the management commands
"""


class TfecError(Exception):
    """Base class for every error raised by the detector package"""

    exit_code = 1


class ParameterError(TfecError, ValueError):
    """A library operation was called with arguments violating its preconditions"""

    exit_code = 2


class ConfigError(TfecError):
    """The run configuration is malformed or holds an invalid value"""

    exit_code = 2


class DataContractError(TfecError):
    """Input data does not honour its declared contract (container, schema, fs)"""

    exit_code = 3


class SchemaError(TfecError):
    """A table (annotations, detections) has missing columns or unknown values"""

    exit_code = 2
