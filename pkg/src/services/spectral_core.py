"""
Fourier representation of fields on the 2-torus.

Truncation Pi_N and the dyadic band Delta_N, exact pseudospectral products,
the linear Schrodinger propagator and Sobolev norms. Array-level helpers
(``grid_from_coeffs``, ``coeffs_from_grid``) accept arbitrary leading batch
axes and are used by the integrators; the SpectralField wrappers are what the
rest of the package calls.
"""

import logging
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft as sfft

from src.config import settings
from src.models.spectral_models import (
    Cutoff,
    PhysicalGrid,
    SpectralField,
    band_mask,
    bracket,
    half_width,
    mode_list,
    shell_mask,
    wavenumber_table,
)
from src.utils.exceptions import AliasingException

logger = logging.getLogger(__name__)

GRID_POLICIES = ("exact", "compact", "three_halves")


def exactness_threshold(cutoff: Cutoff, degree: int) -> int:
    """Smallest grid size (q+1)(2N)+1 for which a degree-q product is exact on retained modes."""
    return int(np.ceil((degree + 1) * 2 * float(cutoff))) + 1


def grid_size(cutoff: Cutoff, degree: int, policy: Optional[str] = None) -> int:
    """
    Grid size per axis for evaluating a degree-q pointwise polynomial.

    Args:
        cutoff: Largest cutoff among the factors
        degree: Polynomial degree q in (u, u-bar)
        policy: "exact" (power of two >= (q+1)(2N+1)), "compact" (fast FFT
            length >= the exactness threshold) or "three_halves" (not exact)

    Returns:
        Grid size M
    """
    policy = policy or settings.grid_policy
    if policy not in GRID_POLICIES:
        raise ValueError(f"Unknown grid policy {policy!r}, expected one of {GRID_POLICIES}")
    if policy == "exact":
        target = (degree + 1) * (2 * int(np.ceil(float(cutoff))) + 1)
        return 1 << max(int(target - 1).bit_length(), 0)
    if policy == "compact":
        return sfft.next_fast_len(exactness_threshold(cutoff, degree))
    K = half_width(cutoff)
    return sfft.next_fast_len(int(np.ceil(1.5 * (2 * K + 1))))


def check_grid(M: int, cutoff: Cutoff, degree: int, strict: Optional[bool] = None) -> None:
    """Raise AliasingException when M is below the exactness threshold in strict mode."""
    strict = settings.strict_aliasing if strict is None else strict
    threshold = exactness_threshold(cutoff, degree)
    if M < threshold:
        if strict:
            raise AliasingException(
                f"grid size {M} below {threshold} for a degree-{degree} product at cutoff {cutoff}"
            )
        logger.debug("grid size %d below exactness threshold %d", M, threshold)


@lru_cache(maxsize=128)
def _placement(K: int, M: int) -> np.ndarray:
    """FFT-ordered indices of -K..K on an M-point axis."""
    if 2 * K + 1 > M:
        raise AliasingException(f"grid size {M} cannot hold modes up to |k| = {K}")
    return np.arange(-K, K + 1) % M


def grid_from_coeffs(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Evaluate u(x) on an M x M grid from (..., 2K+1, 2K+1) coefficients."""
    K = (coeffs.shape[-1] - 1) // 2
    idx = _placement(K, M)
    padded = np.zeros(coeffs.shape[:-2] + (M, M), dtype=np.complex128)
    padded[..., idx[:, None], idx[None, :]] = coeffs
    return sfft.ifft2(padded, norm="forward", workers=settings.fft_workers)


def coeffs_from_grid(values: np.ndarray, K: int) -> np.ndarray:
    """Mean-normalized Fourier coefficients on [-K, K]^2 of (..., M, M) grid values."""
    M = values.shape[-1]
    spectrum = sfft.fft2(values, norm="forward", workers=settings.fft_workers)
    idx = _placement(K, M)
    return spectrum[..., idx[:, None], idx[None, :]]


def project(u: SpectralField, N: int) -> SpectralField:
    """Spectral truncation Pi_N; the result has cutoff min(u.cutoff, N)."""
    if N < 1:
        raise ValueError(f"cutoff must be >= 1, got {N}")
    if N >= u.cutoff:
        return u
    return SpectralField.from_coeffs(N, u.resized(N))


def embed(u: SpectralField, N: int) -> SpectralField:
    """Zero-padded copy of u at the larger cutoff N."""
    if N < u.cutoff:
        raise ValueError(f"cannot embed cutoff {u.cutoff} into {N}; use project")
    return SpectralField(cutoff=N, coeffs=u.resized(N))


def delta_band(u: SpectralField, N: int) -> SpectralField:
    """Dyadic band Delta_N = Pi_N - Pi_{N/2}, keeping modes with N/2 < <k> <= N."""
    if N < 1 or N & (N - 1):
        raise ValueError(f"band index must be a dyadic integer, got {N}")
    cutoff = min(u.cutoff, N)
    K = half_width(cutoff)
    array = u.resized(cutoff)
    array[~band_mask(K, N)] = 0.0
    return SpectralField(cutoff=cutoff, coeffs=array)


def mean(u: SpectralField) -> complex:
    """Space mean, the zero mode u_0."""
    return u.coefficient((0, 0))


def mass(u: SpectralField) -> float:
    """Truncated mass sum_k |u_k|^2 (the mean of |u|^2)."""
    return float(np.sum(np.abs(u.coeffs) ** 2))


def inner(u: SpectralField, v: SpectralField) -> complex:
    """L^2 pairing mean(u v-bar) = sum_k u_k conj(v_k)."""
    cutoff = max(u.cutoff, v.cutoff)
    return complex(np.sum(u.resized(cutoff) * np.conj(v.resized(cutoff))))


def gradient_energy(u: SpectralField) -> float:
    """Kinetic term mean|grad u|^2 = sum_k |k|^2 |u_k|^2."""
    _, _, ksq = wavenumber_table(u.half_width)
    return float(np.sum(ksq * np.abs(u.coeffs) ** 2))


def to_physical(u: SpectralField, M: int, degree: int = 1, strict: Optional[bool] = None) -> PhysicalGrid:
    """Sample u on the M x M grid; M is checked against the product degree it will be used for."""
    check_grid(M, u.cutoff, degree, strict)
    return PhysicalGrid(size=M, values=grid_from_coeffs(u.coeffs, M))


def to_spectral(g: PhysicalGrid, N: int) -> SpectralField:
    """Project grid samples onto the modes <k> <= N."""
    return SpectralField.from_coeffs(N, coeffs_from_grid(g.values, half_width(N)))


def product(fields: List[SpectralField], conjugate: List[bool], N: Optional[int] = None) -> SpectralField:
    """
    Pointwise product of fields (optionally conjugated), projected to cutoff N.

    Args:
        fields: Factors
        conjugate: Per-factor flag, True to use the complex conjugate
        N: Output cutoff, defaults to the largest input cutoff

    Returns:
        Pi_N of the product
    """
    top = max(f.cutoff for f in fields)
    N = N or top
    M = grid_size(max(top, N), len(fields))
    check_grid(M, max(top, N), len(fields))
    values = np.ones((M, M), dtype=np.complex128)
    for field, conj in zip(fields, conjugate):
        grid = grid_from_coeffs(field.coeffs, M)
        values *= np.conj(grid) if conj else grid
    return SpectralField.from_coeffs(N, coeffs_from_grid(values, half_width(N)))


def sobolev_norm(u: SpectralField, s: float) -> float:
    """H^s norm (sum_k <k>^{2s} |u_k|^2)^{1/2}."""
    weights = bracket(u.half_width) ** (2.0 * s)
    return float(np.sqrt(np.sum(weights * np.abs(u.coeffs) ** 2)))


def linear_flow(u: SpectralField, t: float) -> SpectralField:
    """Free Schrodinger propagator e^{it Laplacian}: u_k -> e^{-i|k|^2 t} u_k."""
    _, _, ksq = wavenumber_table(u.half_width)
    return SpectralField(cutoff=u.cutoff, coeffs=u.coeffs * np.exp(-1j * ksq * t))


def shell_modes(N: Cutoff) -> List[Tuple[int, int]]:
    """Wavenumbers with <k> <= N, lexicographic."""
    K = half_width(N)
    return mode_list(K, shell_mask(K, N))


def band_modes(N: int) -> List[Tuple[int, int]]:
    """Wavenumbers with N/2 < <k> <= N, lexicographic."""
    K = half_width(N)
    return mode_list(K, band_mask(K, N))


def dyadic_scales(N: int) -> List[int]:
    """Dyadic integers 1, 2, 4, ... up to N."""
    scales = []
    scale = 1
    while scale <= N:
        scales.append(scale)
        scale *= 2
    return scales