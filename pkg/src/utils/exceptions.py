class WickLabException(Exception):
    """Base exception for the Wick NLS laboratory."""
    pass


class AliasingException(WickLabException):
    """Raised when a physical grid is too coarse for an exact product in strict mode."""
    pass


class PathDisagreementException(WickLabException):
    """Raised when the direct and expanded gauged nonlinearities disagree."""
    pass


class NonRealEnergyException(WickLabException):
    """Raised when a potential energy has a non-negligible imaginary part."""
    pass


class SlotParityException(WickLabException):
    """Raised when a polarization slot index conflicts with its parity."""
    pass


class NumericalAbortException(WickLabException):
    """Raised when the instability detector stops an integration."""
    pass


class TrajectoryGridException(WickLabException):
    """Raised when a trajectory does not cover the requested time grid."""
    pass


class MissingScaleException(WickLabException):
    """Raised when a decomposition needs a scale that was not solved."""
    pass


class ColumnSolveException(WickLabException):
    """Raised when a kernel column solve fails."""
    pass


class BudgetExceededException(WickLabException):
    """Raised when an enumeration or expansion exceeds its budget."""
    pass


class InvalidInstanceException(WickLabException):
    """Raised when counting or deviation inputs violate their hypotheses."""
    pass


class DegenerateEnsembleException(WickLabException):
    """Raised when an ensemble's effective sample size is too small to use."""
    pass


class ConfigException(WickLabException):
    """Raised when a configuration file or flag set is invalid."""
    pass


class FieldFormatException(WickLabException):
    """Raised when a binary field file is malformed."""
    pass


class RunNotFoundException(WickLabException):
    """Raised when a stored run does not exist."""
    pass
