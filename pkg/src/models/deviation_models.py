from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vector = Tuple[int, int]


class PairingStructure(BaseModel):
    """
    A choice of disjoint index pairs (i_s, j_s) with opposite signs.

    Indices are 1-based; i_s < j_s and the pairs are sorted. Instantiated on a
    tuple (k_1, ..., k_n), every pair forces k_{i_s} = k_{j_s}.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1)
    signs: List[int]
    pairs: List[Tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_pairs(self) -> "PairingStructure":
        if len(self.signs) != self.n:
            raise ValueError(f"expected {self.n} signs, got {len(self.signs)}")
        used = [index for pair in self.pairs for index in pair]
        if len(used) != len(set(used)):
            raise ValueError("pairs must be disjoint")
        for i, j in self.pairs:
            if not 1 <= i < j <= self.n:
                raise ValueError(f"pair ({i}, {j}) is out of range or unordered")
            if self.signs[i - 1] != -self.signs[j - 1]:
                raise ValueError(f"pair ({i}, {j}) joins equal signs")
        return self

    @property
    def X(self) -> List[int]:
        return [i for i, _ in self.pairs]

    @property
    def Y(self) -> List[int]:
        return [j for _, j in self.pairs]

    @property
    def free(self) -> List[int]:
        """Indices outside X and Y."""
        used = set(self.X) | set(self.Y)
        return [m for m in range(1, self.n + 1) if m not in used]

    def is_over_paired(self, ks: List[Vector]) -> Dict[Tuple[int, int], bool]:
        """For each pair, whether a third index carries the same wavenumber in ``ks``."""
        flags = {}
        for i, j in self.pairs:
            value = tuple(ks[i - 1])
            flags[(i, j)] = any(tuple(ks[m]) == value for m in range(self.n) if m not in (i - 1, j - 1))
        return flags


class MultilinearExpression(BaseModel):
    """
    F = sum over (k_1..k_n) in E^n of a_{k_1..k_n} prod_j g_{k_j}^{iota_j}.

    ``coefficients`` has shape (|E|,) * n and is indexed by positions in
    ``support``; g^- means the complex conjugate. ``measurable_modes`` records
    the modes the coefficients are declared measurable on, if any.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    support: List[Vector]
    signs: List[int]
    coefficients: np.ndarray
    measurable_modes: Optional[List[Vector]] = None

    @field_validator("signs")
    @classmethod
    def validate_signs(cls, value: List[int]) -> List[int]:
        if not value or any(s not in (1, -1) for s in value):
            raise ValueError("signs must be a non-empty list of +1/-1")
        return value

    @field_validator("coefficients")
    @classmethod
    def freeze(cls, value: np.ndarray) -> np.ndarray:
        array = np.array(value, dtype=np.complex128)
        if not np.all(np.isfinite(array)):
            raise ValueError("coefficients must be finite")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_shape(self) -> "MultilinearExpression":
        if len(set(map(tuple, self.support))) != len(self.support):
            raise ValueError("support points must be distinct")
        expected = (len(self.support),) * len(self.signs)
        if self.coefficients.shape != expected:
            raise ValueError(f"coefficients must have shape {expected}, got {self.coefficients.shape}")
        return self

    @property
    def n(self) -> int:
        return len(self.signs)

    @property
    def size(self) -> int:
        return len(self.support)

    def with_coefficients(self, coefficients: np.ndarray) -> "MultilinearExpression":
        return self.model_copy(update={"coefficients": coefficients})

    def absolute(self) -> "MultilinearExpression":
        """Same expression with |a| in place of a (the comparison polynomial G)."""
        return self.with_coefficients(np.abs(self.coefficients))


class TailReport(BaseModel):
    """Empirical exceedance P(|F| >= B M^{1/2}) along a ladder of B."""

    n: int
    trials: int
    M: float
    B: List[float]
    exceedance: List[float]
    slope: Optional[float] = None
    expected_slope: float
    slope_ok: Optional[bool] = None
    monotone: bool
    certainty_level: float = Field(..., description="A")
    certainty_failures: float = Field(..., description="Fraction with |F| > A^theta M^{1/2}")


class DeviationRow(BaseModel):
    """One Monte Carlo draw of the kernel deviation check."""

    trial: int
    value: float
    bound: float
    ratio: float
