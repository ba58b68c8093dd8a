from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.spectral_models import SpectralField, half_width


class EvolutionConfig(BaseModel):
    """Time stepping parameters for the truncated flows."""

    model_config = ConfigDict(frozen=True)

    scheme: Literal["rk4-ip", "strang"] = Field("rk4-ip", description="Integrator")
    dt: float = Field(..., gt=0.0, description="Requested step; shrunk to divide the span")
    t_span: Tuple[float, float] = Field((0.0, 1.0), description="Start and end time, either order")
    save_stride: int = Field(1, ge=1, description="Steps between saved frames")
    blowup_factor: float = Field(1e3, gt=1.0, description="Abort when the L2 norm grows by this factor")
    nonlinear: bool = Field(True, description="Switch the nonlinearity off for linear checks")
    max_dt_n2: float = Field(1.0, gt=0.0, description="Stability constant for dt * N^2")

    @property
    def span(self) -> float:
        return self.t_span[1] - self.t_span[0]

    def steps(self) -> int:
        """Number of steps, dt rounded down to divide |t1 - t0|."""
        return max(int(np.ceil(abs(self.span) / self.dt - 1e-9)), 0)

    def step_size(self) -> float:
        """Signed step actually used."""
        n = self.steps()
        return self.span / n if n else 0.0

    def check_stability(self, cutoff: int) -> None:
        if self.dt * cutoff * cutoff > self.max_dt_n2:
            raise ValueError(
                f"dt={self.dt} too large for cutoff {cutoff}: dt*N^2 must be <= {self.max_dt_n2}"
            )


class Trajectory(BaseModel):
    """
    Time samples of a truncated solution.

    Times are strictly monotone in integration order (decreasing for
    backward runs); two-sided grids are stored increasing. ``gauge_phase`` is
    B(t) = int_{t_ref}^t A[W^{2r}(u)] dt', with ``phase_rate`` its integrand.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cutoff: int = Field(..., ge=1)
    r: int = Field(..., ge=1)
    gauged: bool = False
    times: np.ndarray
    frames: np.ndarray
    mass: np.ndarray
    hamiltonian: np.ndarray
    phase_rate: np.ndarray
    gauge_phase: np.ndarray
    m_star: Optional[float] = None

    @field_validator("times", "frames", "mass", "hamiltonian", "phase_rate", "gauge_phase")
    @classmethod
    def freeze_arrays(cls, value: np.ndarray) -> np.ndarray:
        array = np.array(value)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_grid(self) -> "Trajectory":
        count = len(self.times)
        if count == 0:
            raise ValueError("a trajectory needs at least one frame")
        side = 2 * half_width(self.cutoff) + 1
        if self.frames.shape != (count, side, side):
            raise ValueError(f"frames must have shape ({count}, {side}, {side}), got {self.frames.shape}")
        for name in ("mass", "hamiltonian", "phase_rate", "gauge_phase"):
            if len(getattr(self, name)) != count:
                raise ValueError(f"{name} must have one entry per frame")
        if count > 1:
            steps = np.diff(self.times)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("times must be strictly monotone")
        return self

    @property
    def states(self) -> List[SpectralField]:
        return [self.state(i) for i in range(len(self.times))]

    def state(self, index: int) -> SpectralField:
        return SpectralField(cutoff=self.cutoff, coeffs=self.frames[index])

    @property
    def final(self) -> SpectralField:
        return self.state(len(self.times) - 1)


class ConservationRow(BaseModel):
    t: float
    mass: float
    hamiltonian: float
    mass_drift: float
    hamiltonian_drift: float


class ConservationReport(BaseModel):
    """Per-frame conserved quantities with drifts relative to the first frame."""

    rows: List[ConservationRow]
    max_mass_drift: float
    max_hamiltonian_drift: float


class TimeGrid(BaseModel):
    """Uniform grid t_j = -T + j (2T/P), j = 0..P-1, on [-T, T); t = 0 sits at j = P/2."""

    model_config = ConfigDict(frozen=True)

    half_width: float = Field(2.0, gt=0.0, description="T")
    points: int = Field(1024, ge=4, description="P, even")

    @field_validator("points")
    @classmethod
    def validate_even(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"points must be even, got {value}")
        return value

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def zero_index(self) -> int:
        return self.points // 2

    @property
    def times(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(half_width=self.half_width, points=self.points * factor)
