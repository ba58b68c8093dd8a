import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# Margin for the strict comparison log2 L < (1 - delta) log2 N.
SCALE_MARGIN = 1e-12


def _is_dyadic(value: float) -> bool:
    exponent = math.log2(value) if value > 0 else float("nan")
    return math.isfinite(exponent) and exponent == round(exponent)


class ScaleSet(BaseModel):
    """
    Dyadic scales L with 1/2 <= L < N^{1-delta} for one cutoff N.

    Example:
        >>> ScaleSet.for_cutoff(8, 0.1).scales
        [0.5, 1.0, 2.0, 4.0]
    """

    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1)
    delta: float = Field(..., gt=0.0, lt=1.0)
    scales: List[float]

    @field_validator("N")
    @classmethod
    def validate_dyadic(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"N must be dyadic, got {value}")
        return value

    @model_validator(mode="after")
    def validate_scales(self) -> "ScaleSet":
        for L in self.scales:
            if not _is_dyadic(L) or not self.admits(self.N, L, self.delta):
                raise ValueError(f"({self.N}, {L}) is not an admissible scale pair")
        return self

    @staticmethod
    def admits(N: int, L: float, delta: float) -> bool:
        """Membership rule 1/2 <= L < N^{1-delta}, compared in log2."""
        return L >= 0.5 and math.log2(L) < (1.0 - delta) * math.log2(N) - SCALE_MARGIN

    @classmethod
    def for_cutoff(cls, N: int, delta: float) -> "ScaleSet":
        scales = []
        L = 0.5
        while cls.admits(N, L, delta):
            scales.append(L)
            L *= 2.0
        return cls(N=N, delta=delta, scales=scales)

    @property
    def largest(self) -> float:
        """L_0, the largest admissible scale."""
        return self.scales[-1]

    @property
    def pairs(self) -> List[Tuple[int, float]]:
        return [(self.N, L) for L in self.scales]

    def __contains__(self, L: float) -> bool:
        return L in self.scales


class KernelMatrix(BaseModel):
    """
    Time samples H_{k k*}(t) of the linear map from band data to psi.

    Rows run over <k> <= N and columns over N/2 < <k*> <= N, both in
    lexicographic order; ``entries`` has shape (times, rows, columns).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    N: int = Field(..., ge=1)
    L: float = Field(..., ge=0.5)
    times: np.ndarray
    row_modes: List[Tuple[int, int]]
    column_modes: List[Tuple[int, int]]
    entries: np.ndarray

    @field_validator("times", "entries")
    @classmethod
    def freeze(cls, value: np.ndarray) -> np.ndarray:
        array = np.array(value)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_shape(self) -> "KernelMatrix":
        expected = (len(self.times), len(self.row_modes), len(self.column_modes))
        if self.entries.shape != expected:
            raise ValueError(f"entries must have shape {expected}, got {self.entries.shape}")
        return self

    @property
    def row_ksq(self) -> np.ndarray:
        return np.array([kx * kx + ky * ky for kx, ky in self.row_modes], dtype=float)

    def minus(self, other: "KernelMatrix") -> "KernelMatrix":
        """Entrywise difference h = H - H', same N and grid."""
        if other.N != self.N or other.entries.shape != self.entries.shape:
            raise ValueError("kernels live on different grids")
        return self.model_copy(update={"entries": self.entries - other.entries})


class TimeFrequencyKernel(BaseModel):
    """Twisted transform values on the DFT dual grid of a windowed kernel or trajectory."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lambdas: np.ndarray = Field(description="Dual frequencies 2 pi fftfreq(P, dt)")
    values: np.ndarray = Field(description="Twisted transform, frequency axis first")
    window_half_width: float
    points: int
    spacing: float

    @property
    def d_lambda(self) -> float:
        return 2.0 * math.pi / (self.points * self.spacing)


class Decomposition(BaseModel):
    """
    Pieces of the band solution y_N = v_N - v_{N/2} on a symmetric time grid.

    psi and zeta are keyed by the scale L; zeta[L] = psi[L] - psi[L/2] for
    L >= 1, and z = y - psi[L_0]. Frame arrays have shape (times, 2K+1, 2K+1).
    Kernels and their differences are present only when they were built.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    N: int
    scales: ScaleSet
    times: np.ndarray
    m_star: float
    y: np.ndarray
    psi: Dict[float, np.ndarray]
    zeta: Dict[float, np.ndarray]
    z: np.ndarray
    kernels: Dict[float, KernelMatrix] = Field(default_factory=dict)
    h: Dict[float, KernelMatrix] = Field(default_factory=dict)

    def _require(self, table: Dict[float, object], L: float, name: str) -> None:
        if L not in table:
            from src.utils.exceptions import MissingScaleException  # deferred: src.utils imports src.models

            raise MissingScaleException(f"{name} at scale L={L} was not computed")

    def telescoping_error(self) -> float:
        """max |psi_{1/2} + sum_L zeta_L - psi_{L_0}| over the grid."""
        self._require(self.psi, 0.5, "psi")
        self._require(self.psi, self.scales.largest, "psi")
        total = np.array(self.psi[0.5])
        for L in self.scales.scales[1:]:
            self._require(self.zeta, L, "zeta")
            total = total + self.zeta[L]
        return float(np.max(np.abs(total - self.psi[self.scales.largest])))

    def ansatz_error(self) -> float:
        """max |e^{it Lap} Delta_N f + sum zeta + z - y|; zero up to roundoff by construction."""
        total = np.array(self.psi[0.5]) + self.z
        for L in self.scales.scales[1:]:
            self._require(self.zeta, L, "zeta")
            total = total + self.zeta[L]
        return float(np.max(np.abs(total - self.y)))


class ScanRow(BaseModel):
    N: int
    L: float
    seed: int
    yb_h: Optional[float] = None
    zb_h: Optional[float] = None
    zb_h_weighted: Optional[float] = None
    xb_y: float
    xb_z: float
    bound_yb: float
    bound_zb: float
    bound_z: float


class ScanReport(BaseModel):
    """Measured proxy norms beside their bounds, with log-log slope fits."""

    rows: List[ScanRow]
    fits: Dict[str, float]
    note: str = "fit tolerances are engineering choices, not the constants of the bounds"
