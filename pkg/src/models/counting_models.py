from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.exceptions import InvalidInstanceException

Vector = Tuple[int, int]
SetName = Literal["S1", "S2", "S3"]


class CountingInstance(BaseModel):
    """
    Parameters of the lattice sets S1, S2, S3 and their plus variants.

    Indices are 1-based as in the constraint rows: variables 2i-1 and 2i
    (i <= p) form a pair block of width R_i. Box constraints are discs of
    radius N_j around k_j^0 (S1, S2) or around the origin (S3).

    Attributes:
        signs: iota_j in {+1, -1}, j = 1..n
        sizes: Dyadic N_j, j = 1..n
        N0: Dyadic bound on |k| and |k'| (S2, S3)
        M: Width of the relaxed quadratic constraint (S3)
        centers: k_j^0
        d: Shift of the linear constraint
        d_prime: Right side of the plus constraint
        alpha: Shift of the quadratic constraint
        Gamma: Threshold of the Gamma-condition (S3)
        iota: Sign of k' (S2)
        p: Number of pair blocks
        R: Pair block widths R_i
        A: Index subset of the plus constraint, containing 1..2p
        delta: Small parameter for the R_i hypothesis
    """

    model_config = ConfigDict(frozen=True)

    signs: List[int]
    sizes: List[int]
    N0: int = Field(1, ge=1)
    M: float = Field(1.0, ge=0.0)
    centers: Optional[List[Vector]] = None
    d: Vector = (0, 0)
    d_prime: Vector = (0, 0)
    alpha: float = 0.0
    Gamma: float = 0.0
    iota: int = 1
    p: int = Field(0, ge=0)
    R: List[float] = Field(default_factory=list)
    A: List[int] = Field(default_factory=list)
    delta: float = Field(0.1, gt=0.0, lt=1.0)

    @field_validator("signs")
    @classmethod
    def validate_signs(cls, value: List[int]) -> List[int]:
        if not value or any(s not in (1, -1) for s in value):
            raise ValueError("signs must be a non-empty list of +1/-1")
        return value

    @model_validator(mode="after")
    def validate_shapes(self) -> "CountingInstance":
        n = len(self.signs)
        if len(self.sizes) != n:
            raise ValueError(f"expected {n} sizes, got {len(self.sizes)}")
        if self.centers is not None and len(self.centers) != n:
            raise ValueError(f"expected {n} centers, got {len(self.centers)}")
        if len(self.R) != self.p:
            raise ValueError(f"expected {self.p} pair widths, got {len(self.R)}")
        if self.iota not in (1, -1):
            raise ValueError("iota must be +1 or -1")
        if any(j < 1 or j > n for j in self.A):
            raise ValueError(f"A must be a subset of 1..{n}")
        return self

    @property
    def n(self) -> int:
        return len(self.signs)

    @property
    def box_centers(self) -> List[Vector]:
        return list(self.centers) if self.centers is not None else [(0, 0)] * self.n

    @property
    def ordered_sizes(self) -> List[int]:
        """N^{(1)} >= N^{(2)} >= ..."""
        return sorted(self.sizes, reverse=True)

    def check_hypotheses(self) -> None:
        """
        Raise InvalidInstanceException unless the hypotheses of the bounds hold:
        dyadic sizes, 2p <= n, N_{2i-1} ~ N_{2i} within a factor 2, opposite signs
        in each pair block, R_i <= 2 N_{2i-1}^{1-delta} and {1..2p} inside A.
        """
        for N in list(self.sizes) + [self.N0]:
            if N < 1 or N & (N - 1):
                raise InvalidInstanceException(f"size {N} is not dyadic")
        if 2 * self.p > self.n:
            raise InvalidInstanceException(f"2p = {2 * self.p} exceeds n = {self.n}")
        for i in range(self.p):
            a, b = self.sizes[2 * i], self.sizes[2 * i + 1]
            if max(a, b) > 2 * min(a, b):
                raise InvalidInstanceException(f"pair block {i + 1}: sizes {a} and {b} are not comparable")
            if self.signs[2 * i] != -self.signs[2 * i + 1]:
                raise InvalidInstanceException(f"pair block {i + 1}: signs must be opposite")
            if not 0 <= self.R[i] <= 2.0 * a ** (1.0 - self.delta):
                raise InvalidInstanceException(f"pair block {i + 1}: R = {self.R[i]} exceeds 2 N^(1-delta)")
        if self.A and not set(range(1, 2 * self.p + 1)) <= set(self.A):
            raise InvalidInstanceException("A must contain every pair block index")


class LatticeTuple(BaseModel):
    """A tuple (k, k', k_1, ..., k_n); k' is present only for S2."""

    model_config = ConfigDict(frozen=True)

    k: Vector
    ks: List[Vector]
    k_prime: Optional[Vector] = None

    def signed_vectors(self, signs: List[int], iota: int = 1) -> List[Tuple[Vector, int]]:
        """Every vector with its sign; k carries -1, k' carries iota."""
        out = [(self.k, -1)]
        if self.k_prime is not None:
            out.append((self.k_prime, iota))
        out.extend(zip(self.ks, signs))
        return out

    def satisfies_linear(self, instance: CountingInstance) -> bool:
        total = [0, 0]
        for (x, y), s in zip(self.ks, instance.signs):
            total[0] += s * x
            total[1] += s * y
        if self.k_prime is not None:
            total[0] += instance.iota * self.k_prime[0]
            total[1] += instance.iota * self.k_prime[1]
        return total == [self.k[0] + instance.d[0], self.k[1] + instance.d[1]]


class CountResult(BaseModel):
    """One row of a counting batch."""

    which: SetName
    plus: bool = False
    n: int
    signs: List[int]
    sizes: List[int]
    N0: int
    alpha: float
    p: int
    count: int
    weighted: Optional[float] = None
    rhs: float
    ratio: float
