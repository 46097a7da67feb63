"""Exception hierarchy. CLI exit codes are attached to the classes."""


class VolmboError(Exception):
    exit_code = 1


class ParameterError(VolmboError, ValueError):
    """Invalid numeric parameter (k >= N, odd Taylor order, ...)."""

    exit_code = 2


class ConfigError(VolmboError, ValueError):
    exit_code = 2


class StructuralError(VolmboError, ValueError):
    """Graph structure unusable: isolated vertex, disconnected graph."""

    exit_code = 3


class DataFormatError(VolmboError, ValueError):
    exit_code = 3


class InputError(VolmboError, ValueError):
    """Non-finite or mis-shaped numeric input."""

    exit_code = 3


class ConstraintError(VolmboError, ValueError):
    """Volume constraints that no clustering can satisfy."""

    exit_code = 4


class ConvergenceError(VolmboError, RuntimeError):
    exit_code = 1


class KernelError(VolmboError, ValueError):
    """A diffusion kernel failed verification of a declared structural flag."""

    exit_code = 2
