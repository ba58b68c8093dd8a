from .exceptions import (
    WickLabException,
    AliasingException,
    PathDisagreementException,
    NonRealEnergyException,
    SlotParityException,
    NumericalAbortException,
    TrajectoryGridException,
    MissingScaleException,
    ColumnSolveException,
    BudgetExceededException,
    InvalidInstanceException,
    DegenerateEnsembleException,
    ConfigException,
    FieldFormatException,
    RunNotFoundException,
)
from .logging_setup import configure_logging
from .parallel import chunked, parallel_map
from .field_io import read_field, read_kernel, read_trajectory, write_field, write_kernel, write_trajectory
from .run_store import RunStore, file_digest

__all__ = [
    "WickLabException",
    "AliasingException",
    "PathDisagreementException",
    "NonRealEnergyException",
    "SlotParityException",
    "NumericalAbortException",
    "TrajectoryGridException",
    "MissingScaleException",
    "ColumnSolveException",
    "BudgetExceededException",
    "InvalidInstanceException",
    "DegenerateEnsembleException",
    "ConfigException",
    "FieldFormatException",
    "RunNotFoundException",
    "configure_logging",
    "chunked",
    "parallel_map",
    "read_field",
    "read_kernel",
    "read_trajectory",
    "write_field",
    "write_kernel",
    "write_trajectory",
    "RunStore",
    "file_digest",
]
