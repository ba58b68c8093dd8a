from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class ObservableComparison(BaseModel):
    """Weighted mean of one observable before and after the flow."""

    name: str
    before: float
    before_se: float
    after: float
    after_se: float
    z: float


class KSResult(BaseModel):
    name: str
    statistic: float
    pvalue: float


class InvarianceReport(BaseModel):
    """
    Pushforward test of the truncated Gibbs measure under the flow.

    ``refinement`` holds the maximal |z| and the mean relative H_N violation at
    dt and dt/2; the violation ratio is about 16 for a fourth-order scheme.
    """

    N: int
    r: int
    t: float
    count: int
    seed: int
    dt: float
    ess: float
    path: str = Field("direct", description="'direct' or 'gauged' (gauged flow then inverse gauge)")
    nonlinear: bool = True
    comparisons: List[ObservableComparison]
    ks: List[KSResult]
    max_abs_z: float
    min_ks_pvalue: float
    hamiltonian_violation: float
    refinement: Dict[str, float] = Field(default_factory=dict)
    passed: bool


class DistanceRow(BaseModel):
    seed: int
    N: int
    N_next: int
    distance: float


class SmoothingRow(BaseModel):
    seed: int
    N: int
    remainder: float
    solution: float


class ConvergenceReport(BaseModel):
    """Consecutive-cutoff distances in H^{-epsilon} and the smoothing of the nonlinear remainder."""

    cutoffs: List[int]
    r: int
    tau: float
    epsilon: float
    smoothing_s: float
    seeds: List[int]
    distances: List[DistanceRow]
    smoothing: List[SmoothingRow]
    decay_slope: Optional[float] = None
    decay_ok: Optional[bool] = None
    remainder_slope: Optional[float] = None
    solution_slope: Optional[float] = None


class StabilityRow(BaseModel):
    seed: int
    N: int
    amplitude: float
    initial_distance: float
    max_distance: float
    final_distance: float
    growth: float


class StabilityReport(BaseModel):
    """L^2 growth of a perturbation of size A N^{-1+gamma} over [-tau, tau]."""

    r: int
    tau: float
    gamma: float
    rows: List[StabilityRow]
    max_growth: float
    growth_slope_in_log_N: Optional[float] = None


class ProjectionRow(BaseModel):
    seed: int
    N: int
    N_next: int
    defect: float


class DeviationSuiteRow(BaseModel):
    n: int
    d: int
    moment_F: float
    moment_G: float
    dominated: bool


class DeviationSuiteReport(BaseModel):
    domination: List[DeviationSuiteRow]
    isometry: Dict[int, float]
    isometry_limit: Dict[int, float]
    tails: List[Dict[str, Optional[float]]]
    monte_carlo: List[Dict[str, float]]
    passed: bool
