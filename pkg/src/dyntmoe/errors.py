"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
CheckpointError -> 4.
"""


class DynTMoEError(Exception):
    pass


class DimensionError(DynTMoEError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(DynTMoEError, ValueError):
    """An argument is outside its valid range."""


class ContractError(DynTMoEError, RuntimeError):
    """An operation was invoked in a state that forbids it."""


class ConfigError(DynTMoEError, ValueError):
    pass


class DataError(DynTMoEError, ValueError):
    pass


class CheckpointError(DynTMoEError, IOError):
    pass
