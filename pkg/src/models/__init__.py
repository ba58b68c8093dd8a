from .spectral_models import SpectralField, PhysicalGrid, Wavenumber
from .wick_models import SmallParams, WickContext, PolarizationSlot
from .measure_models import GffSample, MassStats, GibbsEnsemble
from .dynamics_models import EvolutionConfig, Trajectory, ConservationRow, ConservationReport, TimeGrid
from .operator_models import ScaleSet, KernelMatrix, TimeFrequencyKernel, Decomposition, ScanRow, ScanReport
from .counting_models import CountingInstance, LatticeTuple, CountResult
from .deviation_models import PairingStructure, MultilinearExpression, TailReport, DeviationRow
from .experiment_models import (
    ObservableComparison,
    KSResult,
    InvarianceReport,
    DistanceRow,
    SmoothingRow,
    ConvergenceReport,
    StabilityRow,
    StabilityReport,
    ProjectionRow,
    DeviationSuiteRow,
    DeviationSuiteReport,
)
from .run_models import InventoryEntry, RunManifest, ObservableTable, RunResult, ReplayReport

__all__ = [
    "SpectralField",
    "PhysicalGrid",
    "Wavenumber",
    "SmallParams",
    "WickContext",
    "PolarizationSlot",
    "GffSample",
    "MassStats",
    "GibbsEnsemble",
    "EvolutionConfig",
    "Trajectory",
    "ConservationRow",
    "ConservationReport",
    "TimeGrid",
    "ScaleSet",
    "KernelMatrix",
    "TimeFrequencyKernel",
    "Decomposition",
    "ScanRow",
    "ScanReport",
    "CountingInstance",
    "LatticeTuple",
    "CountResult",
    "PairingStructure",
    "MultilinearExpression",
    "TailReport",
    "DeviationRow",
    "ObservableComparison",
    "KSResult",
    "InvarianceReport",
    "DistanceRow",
    "SmoothingRow",
    "ConvergenceReport",
    "StabilityRow",
    "StabilityReport",
    "ProjectionRow",
    "DeviationSuiteRow",
    "DeviationSuiteReport",
    "InventoryEntry",
    "RunManifest",
    "ObservableTable",
    "RunResult",
    "ReplayReport",
]
