"""
Wick-ordered powers and the polynomials built from them.

Every polynomial here is a polynomial in |u|^2 (times u for odd degree), with
a "level" playing the role of the renormalization constant: sigma_N for the
Wick powers W^n, the field's own mass m = mean|v|^2 for the pair-free
polynomials :|v|^{2p}: and :|v|^{2p} v:. Coefficients are exact rationals.

Grid kernels (``wick_grid``, ``gauged_grid``, ``linearized_gauged_grid``) act on
physical samples with arbitrary leading batch axes and are shared with the
integrators; the SpectralField functions wrap them.
"""

import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from src.config import settings
from src.models.spectral_models import SpectralField, half_width, wavenumber_table
from src.models.wick_models import PolarizationSlot, SmallParams, WickContext
from src.services.spectral_core import (
    check_grid,
    coeffs_from_grid,
    grid_from_coeffs,
    grid_size,
    mass,
)
from src.utils.exceptions import PathDisagreementException, SlotParityException

logger = logging.getLogger(__name__)

Level = Union[float, np.ndarray]


@lru_cache(maxsize=None)
def sigma_exact(N: int) -> Fraction:
    """sigma_N = sum over <k> <= N of <k>^-2, grouped by shells |k|^2 = n."""
    if N < 1:
        return Fraction(0)
    K = half_width(N)
    _, _, ksq = wavenumber_table(K)
    values, counts = np.unique(ksq[ksq + 1 <= N * N], return_counts=True)
    return sum((Fraction(int(c), int(n) + 1) for n, c in zip(values, counts)), Fraction(0))


def sigma(N: int) -> float:
    """Expected truncated mass of the free field, sigma_N."""
    if N < 1:
        raise ValueError(f"cutoff must be >= 1, got {N}")
    return float(sigma_exact(N))


@lru_cache(maxsize=None)
def wick_coefficients(n: int) -> Tuple[Fraction, ...]:
    """
    Coefficients of W^n as a polynomial in |u|^2.

    For n = 2p the entry j multiplies level^{p-j} |u|^{2j}; for n = 2p+1 it
    multiplies level^{p-j} |u|^{2j} u. Entries are
    (-1)^{p-j} C(p, j) p!/j! (even) and (-1)^{p-j} C(p+1, p-j) p!/j! (odd).
    """
    if n < 0:
        raise ValueError(f"degree must be non-negative, got {n}")
    p = n // 2
    fact = math.factorial(p)
    if n % 2 == 0:
        return tuple(Fraction((-1) ** (p - j) * math.comb(p, j) * fact, math.factorial(j)) for j in range(p + 1))
    return tuple(Fraction((-1) ** (p - j) * math.comb(p + 1, p - j) * fact, math.factorial(j)) for j in range(p + 1))


@lru_cache(maxsize=None)
def expansion_coefficients(r: int) -> Tuple[Fraction, ...]:
    """c_rl = C(r+1, r-l) r!/l! for l = 0..r."""
    return tuple(Fraction(math.comb(r + 1, r - l) * math.factorial(r), math.factorial(l)) for l in range(r + 1))


def make_context(r: int, N: int, delta: Optional[float] = None, epsilon: Optional[float] = None) -> WickContext:
    """Build the WickContext for degree 2r+1 at cutoff N."""
    params = SmallParams(
        delta=settings.default_delta if delta is None else delta,
        epsilon=settings.default_epsilon if epsilon is None else epsilon,
    )
    return WickContext(r=r, N=N, sigma_N=sigma(N), c_rl=expansion_coefficients(r), params=params)


def grid_mean(values: np.ndarray) -> np.ndarray:
    """Space mean over the last two axes, kept for broadcasting."""
    return np.mean(values, axis=(-2, -1), keepdims=True)


def _powers(a: np.ndarray, top: int) -> list:
    out = [np.ones_like(a)]
    for _ in range(top):
        out.append(out[-1] * a)
    return out


def wick_grid(g: np.ndarray, n: int, level: Level, drop_linear: bool = False) -> np.ndarray:
    """
    Pointwise Wick polynomial of degree n with the given level.

    Args:
        g: Physical samples, any leading batch axes
        n: Degree
        level: sigma (Wick powers) or m (pair-free polynomials); scalar or broadcastable
        drop_linear: Omit the j = 0 term of an odd polynomial (it is linear in u)

    Returns:
        Samples of the polynomial
    """
    coeffs = wick_coefficients(n)
    p = n // 2
    a = np.abs(g) ** 2
    result = np.zeros_like(a)
    for j in range(p, -1, -1):
        term = 0.0 if (drop_linear and n % 2 == 1 and j == 0) else float(coeffs[j]) * level ** (p - j)
        result = result * a + term
    return result * g if n % 2 == 1 else result


def linear_coefficient(n: int, level: float) -> float:
    """Coefficient of the linear term of an odd Wick polynomial."""
    if n % 2 == 0:
        return 0.0
    return float(wick_coefficients(n)[0]) * level ** (n // 2)


def gauged_grid(g: np.ndarray, m: Level, m_star: Level, r: int) -> np.ndarray:
    """Expansion sum_l c_rl (m*)^{r-l} N_{2l+1}(v) evaluated on the grid."""
    a = np.abs(g) ** 2
    powers = _powers(a, r)
    means = [grid_mean(p) for p in powers]
    c = expansion_coefficients(r)
    total = np.zeros_like(g)
    for l in range(1, r + 1):
        odd = wick_coefficients(2 * l + 1)
        even = wick_coefficients(2 * l)
        local = sum(float(odd[j]) * m ** (l - j) * powers[j] for j in range(l + 1))
        centered = sum(float(even[j]) * m ** (l - j) * means[j] for j in range(l + 1))
        total = total + float(c[l]) * m_star ** (r - l) * (local - (l + 1) * centered) * g
    return total


def gauged_direct_grid(g: np.ndarray, level: Level, r: int) -> np.ndarray:
    """Direct form W^{2r+1}(v) - (r+1) A[W^{2r}(v)] v on the grid."""
    return wick_grid(g, 2 * r + 1, level) - (r + 1) * grid_mean(wick_grid(g, 2 * r, level)) * g


def _pairfree_derivative(l: int, g: np.ndarray, w: np.ndarray, m: float, holomorphic: bool) -> np.ndarray:
    """
    Directional derivative of N_{2l+1} at g along w in one slot class.

    The formal polynomial treats v and v-bar as independent, with every
    m = A(v v-bar) differentiated as well. In the holomorphic class v moves
    along w; in the antiholomorphic class v-bar moves along w-bar.
    """
    odd = wick_coefficients(2 * l + 1)
    even = wick_coefficients(2 * l)
    a = np.abs(g) ** 2
    powers = _powers(a, l)
    if holomorphic:
        dm = grid_mean(w * np.conj(g))
        cross = w * np.conj(g)
    else:
        dm = grid_mean(g * np.conj(w))
        cross = g * np.conj(w)

    local = np.zeros(np.broadcast_shapes(g.shape, w.shape), dtype=np.complex128)
    scalar = 0.0
    d_scalar = 0.0
    for j in range(l + 1):
        level = m ** (l - j)
        d_level = (l - j) * m ** (l - j - 1) * dm if j < l else 0.0
        mean_power = grid_mean(powers[j])
        local = local + float(odd[j]) * d_level * powers[j] * g
        if holomorphic:
            local = local + float(odd[j]) * level * (j + 1) * powers[j] * w
        elif j > 0:
            local = local + float(odd[j]) * level * j * powers[j - 1] * g * cross
        scalar = scalar + float(even[j]) * level * mean_power
        d_scalar = d_scalar + float(even[j]) * d_level * mean_power
        if j > 0:
            d_scalar = d_scalar + float(even[j]) * level * j * grid_mean(powers[j - 1] * cross)
    if holomorphic:
        return local - (l + 1) * (d_scalar * g + scalar * w)
    return local - (l + 1) * d_scalar * g


def linearized_gauged_grid(g: np.ndarray, w: np.ndarray, m: float, m_star: float, r: int) -> np.ndarray:
    """sum_l (l+1) c_rl (m*)^{r-l} N_{2l+1}(w, v, ..., v) with w in the first slot."""
    c = expansion_coefficients(r)
    total = np.zeros(np.broadcast_shapes(g.shape, w.shape), dtype=np.complex128)
    for l in range(1, r + 1):
        total = total + float(c[l]) * m_star ** (r - l) * _pairfree_derivative(l, g, w, m, holomorphic=True)
    return total


def _to_field(values: np.ndarray, N: int) -> SpectralField:
    return SpectralField.from_coeffs(N, coeffs_from_grid(values, half_width(N)))


def wick_power_grid(u: SpectralField, n: int, sigma_value: float, M: Optional[int] = None) -> np.ndarray:
    """Samples of W^n(u) with level sigma on an exact grid."""
    M = M or grid_size(u.cutoff, n)
    check_grid(M, u.cutoff, n)
    return wick_grid(grid_from_coeffs(u.coeffs, M), n, sigma_value)


def wick_power(u: SpectralField, n: int, sigma_value: float, N_out: Optional[int] = None) -> SpectralField:
    """
    Wick power W^n(u) with sigma in place of sigma_N, projected to N_out.

    Args:
        u: Field (already truncated)
        n: Degree
        sigma_value: Renormalization level, non-negative
        N_out: Output cutoff, defaults to u.cutoff

    Returns:
        Pi_{N_out} W^n(u)
    """
    if sigma_value < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma_value}")
    N_out = N_out or u.cutoff
    M = grid_size(max(u.cutoff, N_out), n)
    return _to_field(wick_power_grid(u, n, sigma_value, M), N_out)


def wick_pairfree(v: SpectralField, n: int, N_out: Optional[int] = None) -> SpectralField:
    """Pair-free polynomial :|v|^{2p}: (n = 2p) or :|v|^{2p} v: (n = 2p+1), level m = mean|v|^2."""
    N_out = N_out or v.cutoff
    M = grid_size(max(v.cutoff, N_out), n)
    check_grid(M, max(v.cutoff, N_out), n)
    return _to_field(wick_grid(grid_from_coeffs(v.coeffs, M), n, mass(v)), N_out)


def script_N(v: SpectralField, l: int, N_out: Optional[int] = None) -> SpectralField:
    """Simple polynomial N_{2l+1}(v) = :|v|^{2l} v: - (l+1) A(:|v|^{2l}:) v."""
    if l < 0:
        raise ValueError(f"l must be non-negative, got {l}")
    N_out = N_out or v.cutoff
    M = grid_size(max(v.cutoff, N_out), 2 * l + 1)
    check_grid(M, max(v.cutoff, N_out), 2 * l + 1)
    g = grid_from_coeffs(v.coeffs, M)
    m = mass(v)
    values = wick_grid(g, 2 * l + 1, m) - (l + 1) * grid_mean(wick_grid(g, 2 * l, m)) * g
    return _to_field(values, N_out)


def script_N_polarized(
    l: int,
    slot: PolarizationSlot,
    w: SpectralField,
    v: SpectralField,
    N_out: Optional[int] = None,
) -> SpectralField:
    """
    Multilinear form N_{2l+1} with w in ``slot`` and v in every other slot.

    The form is the slot-class derivative of the formal polynomial divided by
    the number of slots in that class (l+1 holomorphic, l antiholomorphic), so
    it is symmetric within each class and N(v, ..., v) = N_{2l+1}(v).

    Raises:
        SlotParityException: If the slot index and parity disagree
        ValueError: If the slot index exceeds 2l+1
    """
    if not slot.consistent:
        raise SlotParityException(f"slot {slot.index} cannot be {slot.parity}")
    if slot.index > 2 * l + 1:
        raise ValueError(f"slot {slot.index} out of range for a {2 * l + 1}-linear form")
    top = max(v.cutoff, w.cutoff)
    N_out = N_out or top
    if l == 0:
        return SpectralField.zeros(N_out)
    M = grid_size(max(top, N_out), 2 * l + 1)
    check_grid(M, max(top, N_out), 2 * l + 1)
    g = grid_from_coeffs(v.coeffs, M)
    h = grid_from_coeffs(w.coeffs, M)
    holomorphic = slot.parity == "holomorphic"
    derivative = _pairfree_derivative(l, g, h, mass(v), holomorphic)
    multiplicity = l + 1 if holomorphic else l
    return _to_field(derivative / multiplicity, N_out)


def gauged_nonlinearity(
    v: SpectralField,
    ctx: WickContext,
    m_star: float,
    verify: bool = True,
    tolerance: Optional[float] = None,
) -> SpectralField:
    """
    Gauged nonlinearity Q_N(v) through its expansion in the simple polynomials.

    With ``verify`` the direct form W^{2r+1}(v) - (r+1) A[W^{2r}(v)] v is also
    evaluated, with level m(v) - m_star, and the two must agree. The level
    should be sigma_N; a frozen m_star that drifted from m(v) - sigma_N by more
    than settings.mass_tolerance is logged as a warning.

    Raises:
        PathDisagreementException: If the relative difference exceeds the tolerance
    """
    if not np.isfinite(m_star):
        raise ValueError("m_star must be finite")
    M = grid_size(v.cutoff, 2 * ctx.r + 1)
    check_grid(M, v.cutoff, 2 * ctx.r + 1)
    g = grid_from_coeffs(v.coeffs, M)
    m = mass(v)
    expanded = coeffs_from_grid(gauged_grid(g, m, m_star, ctx.r), v.half_width)
    if verify:
        direct = coeffs_from_grid(gauged_direct_grid(g, m - m_star, ctx.r), v.half_width)
        drift = abs(m - m_star - ctx.sigma_N)
        if drift > settings.mass_tolerance * max(1.0, ctx.sigma_N):
            logger.warning("m_star is %.3e away from m(v) - sigma_N", drift)
        tolerance = settings.path_tolerance if tolerance is None else tolerance
        scale = max(np.linalg.norm(direct), np.finfo(float).tiny)
        gap = np.linalg.norm(direct - expanded) / scale
        if gap > tolerance:
            raise PathDisagreementException(f"direct and expanded Q_N differ by {gap:.3e} (relative)")
    return SpectralField.from_coeffs(v.cutoff, expanded)


def phase_rate(u: SpectralField, ctx: WickContext) -> float:
    """A[W^{2r}(u)], the integrand of the gauge phase; real for any u."""
    return float(np.real(np.mean(wick_power_grid(u, 2 * ctx.r, ctx.sigma_N))))
