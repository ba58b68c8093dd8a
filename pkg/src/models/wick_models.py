from fractions import Fraction
from typing import Dict, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SmallParams(BaseModel):
    """Small parameters derived from delta; every exponent used by the diagnostics comes from here."""

    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., gt=0.0, lt=1.0, description="Base small parameter")
    epsilon: float = Field(0.1, gt=0.0, description="Negative regularity for convergence distances")

    @property
    def delta0(self) -> float:
        return self.delta ** (1.0 / 50.0)

    @property
    def gamma(self) -> float:
        return self.delta ** 0.75

    @property
    def gamma0(self) -> float:
        return self.delta ** 1.25

    @property
    def kappa(self) -> float:
        return self.delta ** -4

    @property
    def b(self) -> float:
        return 0.5 + self.delta ** 4

    @property
    def b1(self) -> float:
        return self.b + self.delta ** 4

    @property
    def b2(self) -> float:
        return self.b - self.delta ** 6

    @property
    def a0(self) -> float:
        return 2.0 * self.b - 10.0 * self.delta ** 6

    def hierarchy_report(self) -> Dict[str, bool]:
        """Which orderings of the hierarchy 1 >> delta0 >> epsilon >> gamma >> delta >> gamma0 hold."""
        return {
            "delta0 < 1": self.delta0 < 1.0,
            "epsilon < delta0": self.epsilon < self.delta0,
            "gamma < epsilon": self.gamma < self.epsilon,
            "delta < gamma": self.delta < self.gamma,
            "gamma0 < delta": self.gamma0 < self.delta,
            "b2 < b < b1": self.b2 < self.b < self.b1,
            "a0 > 1": self.a0 > 1.0,
        }


class WickContext(BaseModel):
    """
    Everything the Wick-ordered nonlinearity of degree 2r+1 needs at cutoff N.

    Attributes:
        r: Nonlinearity parameter, the equation has a degree 2r+1 nonlinearity
        N: Truncation cutoff
        sigma_N: Exact sum of <k>^-2 over <k> <= N
        c_rl: Expansion coefficients binomial(r+1, r-l) r!/l!, l = 0..r, as exact rationals
        params: Small parameter block
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    r: int = Field(..., ge=1, description="Nonlinearity parameter")
    N: int = Field(..., ge=1, description="Truncation cutoff")
    sigma_N: float = Field(..., gt=0.0, description="Expected truncated mass")
    c_rl: Tuple[Fraction, ...] = Field(..., description="Coefficients of the N_{2l+1} expansion")
    params: SmallParams

    @model_validator(mode="after")
    def validate_coefficients(self) -> "WickContext":
        if len(self.c_rl) != self.r + 1:
            raise ValueError(f"expected {self.r + 1} expansion coefficients, got {len(self.c_rl)}")
        return self

    def coefficient(self, l: int) -> float:
        return float(self.c_rl[l])


class PolarizationSlot(BaseModel):
    """Argument slot of a (2l+1)-multilinear form; odd slots are holomorphic, even ones antiholomorphic."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1, description="1-based slot index")
    parity: Literal["holomorphic", "antiholomorphic"]

    @classmethod
    def for_index(cls, index: int) -> "PolarizationSlot":
        return cls(index=index, parity="holomorphic" if index % 2 == 1 else "antiholomorphic")

    @property
    def sign(self) -> int:
        """iota_j = +1 for holomorphic slots, -1 otherwise."""
        return 1 if self.parity == "holomorphic" else -1

    @property
    def consistent(self) -> bool:
        return (self.index % 2 == 1) == (self.parity == "holomorphic")
