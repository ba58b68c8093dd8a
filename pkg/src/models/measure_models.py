from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.spectral_models import SpectralField


class GffSample(BaseModel):
    """One draw Pi_N f of the Gaussian free field, with coefficients g_k / <k>."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: SpectralField
    seed: int = Field(..., ge=0, description="Master seed")
    index: int = Field(0, ge=0, description="Sample index within the master stream")
    N: int = Field(..., ge=1, description="Cutoff")


class MassStats(BaseModel):
    """Truncated mass m_N, renormalized mass m_N* = m_N - sigma_N and increment nu_N."""

    model_config = ConfigDict(frozen=True)

    m_N: float = Field(..., ge=0.0)
    m_N_star: float
    nu_N: float


class GibbsEnsemble(BaseModel):
    """
    Weighted samples representing the truncated Gibbs measure.

    Attributes:
        samples: Fields at cutoff N
        log_weights: Unnormalized log importance weights (zero for pCN)
        seed: Master seed
        N: Cutoff
        r: Nonlinearity parameter
        ess: Effective sample size (sum w)^2 / sum w^2
        sampler_tag: "importance" or "pcn"
        log_partition: log of the Z_N estimate (importance sampling only)
        acceptance_rate: pCN acceptance rate
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: List[SpectralField]
    log_weights: np.ndarray
    seed: int
    N: int = Field(..., ge=1)
    r: int = Field(..., ge=1)
    ess: float = Field(..., gt=0.0)
    sampler_tag: Literal["importance", "pcn"]
    log_partition: Optional[float] = None
    acceptance_rate: Optional[float] = None
    chains: int = 1

    @field_validator("log_weights")
    @classmethod
    def validate_weights(cls, value: np.ndarray) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(array)):
            raise ValueError("log weights must be finite")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_counts(self) -> "GibbsEnsemble":
        if len(self.samples) != len(self.log_weights):
            raise ValueError("one log weight per sample is required")
        if self.ess > len(self.samples) * (1 + 1e-9):
            raise ValueError("ess cannot exceed the sample count")
        return self

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def weights(self) -> np.ndarray:
        """Self-normalized weights summing to one."""
        shifted = np.exp(self.log_weights - np.max(self.log_weights))
        return shifted / shifted.sum()

    @property
    def coefficient_stack(self) -> np.ndarray:
        return np.stack([s.coeffs for s in self.samples])
