"""
Value types for truncated Fourier fields on the 2-torus.

Coefficients are stored densely on the square [-K, K]^2 with
K = ceil(sqrt(N^2 - 1)); entries with <k> > N are structurally zero.
Index [i, j] holds the mode k = (i - K, j - K). The Fourier convention is
mean-normalized, u_k = (2 pi)^-2 int u(x) e^{-ik.x} dx, so that the space
mean of |u|^2 equals sum_k |u_k|^2.
"""

import math
from fractions import Fraction
from functools import lru_cache
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Cutoff = Union[int, float, Fraction]


def half_width(cutoff: Cutoff) -> int:
    """Array half-width K = ceil(sqrt(N^2 - 1)) for a cutoff N (0 below N = 1)."""
    square = Fraction(cutoff) ** 2 - 1
    if square <= 0:
        return 0
    root = math.isqrt(math.floor(square))
    return root if Fraction(root * root) >= square else root + 1


@lru_cache(maxsize=64)
def wavenumber_table(K: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (kx, ky, |k|^2) integer arrays of shape (2K+1, 2K+1)."""
    axis = np.arange(-K, K + 1, dtype=np.int64)
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    ksq = kx * kx + ky * ky
    for array in (kx, ky, ksq):
        array.setflags(write=False)
    return kx, ky, ksq


def shell_mask(K: int, cutoff: Cutoff) -> np.ndarray:
    """Boolean mask of modes with <k> <= N on a (2K+1)^2 array, in exact arithmetic."""
    _, _, ksq = wavenumber_table(K)
    bound = Fraction(cutoff) ** 2
    # q(|k|^2 + 1) <= p with N^2 = p/q
    return bound.denominator * (ksq + 1) <= bound.numerator


def band_mask(K: int, cutoff: Cutoff) -> np.ndarray:
    """Boolean mask of the dyadic band N/2 < <k> <= N."""
    return shell_mask(K, cutoff) & ~shell_mask(K, Fraction(cutoff) / 2)


def bracket(K: int) -> np.ndarray:
    """Japanese bracket <k> = sqrt(|k|^2 + 1) on a (2K+1)^2 array."""
    return np.sqrt(wavenumber_table(K)[2] + 1.0)


class Wavenumber(BaseModel):
    """Lattice point k in Z^2."""

    model_config = ConfigDict(frozen=True)

    kx: int = Field(..., description="First component")
    ky: int = Field(..., description="Second component")

    @property
    def norm_squared(self) -> int:
        return self.kx * self.kx + self.ky * self.ky

    @property
    def bracket_squared(self) -> int:
        """<k>^2 = |k|^2 + 1, always a positive integer."""
        return self.norm_squared + 1

    @property
    def bracket(self) -> float:
        return math.sqrt(self.bracket_squared)

    def within(self, cutoff: Cutoff) -> bool:
        """True when <k> <= N."""
        bound = Fraction(cutoff) ** 2
        return bound.denominator * self.bracket_squared <= bound.numerator


class SpectralField(BaseModel):
    """
    Truncated complex Fourier field Pi_N u on the 2-torus.

    Attributes:
        cutoff: Truncation parameter N, modes with <k> <= N are retained
        coeffs: Dense complex array of shape (2K+1, 2K+1), read-only

    Example:
        >>> u = SpectralField.zeros(4)
        >>> u.coeffs.shape
        (9, 9)
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cutoff: int = Field(ge=1, description="Truncation parameter N")
    coeffs: np.ndarray = Field(description="Dense coefficient array over [-K, K]^2")

    @field_validator("coeffs")
    @classmethod
    def validate_coeffs(cls, value: np.ndarray) -> np.ndarray:
        """Coerce to a read-only complex square array of odd side."""
        array = np.array(value, dtype=np.complex128)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] % 2 != 1:
            raise ValueError(f"coeffs must be a square array of odd side, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("coeffs must be finite")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_support(self) -> "SpectralField":
        """Side must match the cutoff and modes outside the shell must vanish."""
        K = half_width(self.cutoff)
        if self.coeffs.shape[0] != 2 * K + 1:
            raise ValueError(
                f"cutoff {self.cutoff} needs side {2 * K + 1}, got {self.coeffs.shape[0]}"
            )
        if np.any(self.coeffs[~shell_mask(K, self.cutoff)] != 0):
            raise ValueError("coefficients outside <k> <= N must be zero")
        return self

    @classmethod
    def from_coeffs(cls, cutoff: int, coeffs: np.ndarray) -> "SpectralField":
        """Build a field from a (2K+1)^2 array, zeroing everything outside the shell."""
        K = half_width(cutoff)
        array = np.array(coeffs, dtype=np.complex128)
        array[~shell_mask(K, cutoff)] = 0.0
        return cls(cutoff=cutoff, coeffs=array)

    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralField":
        K = half_width(cutoff)
        return cls(cutoff=cutoff, coeffs=np.zeros((2 * K + 1, 2 * K + 1), dtype=np.complex128))

    @classmethod
    def single_mode(cls, cutoff: int, k: Tuple[int, int], amplitude: complex = 1.0) -> "SpectralField":
        """Field a e^{ik.x}, or the zero field when <k> > N."""
        K = half_width(cutoff)
        array = np.zeros((2 * K + 1, 2 * K + 1), dtype=np.complex128)
        if abs(k[0]) <= K and abs(k[1]) <= K:
            array[k[0] + K, k[1] + K] = amplitude
        return cls.from_coeffs(cutoff, array)

    @property
    def half_width(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def coefficient(self, k: Tuple[int, int]) -> complex:
        """Coefficient u_k (zero outside the stored square)."""
        K = self.half_width
        if abs(k[0]) > K or abs(k[1]) > K:
            return 0j
        return complex(self.coeffs[k[0] + K, k[1] + K])

    def resized(self, cutoff: int) -> np.ndarray:
        """Coefficient array laid out for another cutoff (truncating or zero padding)."""
        K_new = half_width(cutoff)
        K = self.half_width
        out = np.zeros((2 * K_new + 1, 2 * K_new + 1), dtype=np.complex128)
        common = min(K, K_new)
        out[K_new - common:K_new + common + 1, K_new - common:K_new + common + 1] = \
            self.coeffs[K - common:K + common + 1, K - common:K + common + 1]
        return out

    def _align(self, other: "SpectralField") -> Tuple[int, np.ndarray, np.ndarray]:
        cutoff = max(self.cutoff, other.cutoff)
        return cutoff, self.resized(cutoff), other.resized(cutoff)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        cutoff, left, right = self._align(other)
        return SpectralField(cutoff=cutoff, coeffs=left + right)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        cutoff, left, right = self._align(other)
        return SpectralField(cutoff=cutoff, coeffs=left - right)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return SpectralField(cutoff=self.cutoff, coeffs=self.coeffs * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(cutoff=self.cutoff, coeffs=-self.coeffs)


class PhysicalGrid(BaseModel):
    """Samples u(x) on the uniform M x M grid of [0, 2 pi)^2, axis 0 along x_1."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    size: int = Field(ge=1, description="Points per axis M")
    values: np.ndarray = Field(description="Complex samples of shape (M, M)")

    @model_validator(mode="after")
    def validate_shape(self) -> "PhysicalGrid":
        if self.values.shape != (self.size, self.size):
            raise ValueError(f"values must have shape ({self.size}, {self.size}), got {self.values.shape}")
        return self

    def at(self, index: Tuple[int, int] = (0, 0)) -> complex:
        """Value at the grid point x = 2 pi * index / M."""
        return complex(self.values[index])


def mode_list(K: int, mask: np.ndarray) -> List[Tuple[int, int]]:
    """Wavenumbers selected by a mask, in lexicographic order of (kx, ky)."""
    rows, cols = np.nonzero(mask)
    return [(int(i) - K, int(j) - K) for i, j in zip(rows, cols)]
