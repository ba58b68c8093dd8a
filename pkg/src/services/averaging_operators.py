"""
Random averaging operators: the linear flows psi_{N,L}, their kernels
H^{N,L}, the decomposition of the band solution, and windowed time-frequency
proxies of the X^{s,b}, Y^b and Z^b norms.

Every time-dependent object lives on a symmetric TimeGrid [-T, T). The
reference solutions v_L that drive psi are integrated on the twice refined
grid so each RK4 stage time is a saved frame.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import eigh
from scipy.stats import linregress

from src.config import settings
from src.models.dynamics_models import TimeGrid, Trajectory
from src.models.operator_models import (
    Decomposition,
    KernelMatrix,
    ScaleSet,
    ScanReport,
    ScanRow,
    TimeFrequencyKernel,
)
from src.models.spectral_models import SpectralField, bracket, half_width, shell_mask, wavenumber_table
from src.models.wick_models import WickContext
from src.services.gibbs_measures import sample_gff
from src.services.spectral_core import (
    band_modes,
    check_grid,
    coeffs_from_grid,
    delta_band,
    grid_from_coeffs,
    grid_size,
    mass,
    project,
    shell_modes,
)
from src.services.truncated_dynamics import InteractionPictureRK4, evolve_on_grid
from src.services.wick_calculus import linearized_gauged_grid, make_context
from src.utils.exceptions import ColumnSolveException, MissingScaleException, TrajectoryGridException
from src.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

Frames = Union[Trajectory, np.ndarray]


def default_grid() -> TimeGrid:
    return TimeGrid(half_width=settings.window_half_width, points=settings.window_points)


def largest_scale(N: int, delta: float) -> float:
    """L_0: the largest dyadic L with (N, L) admissible."""
    return ScaleSet.for_cutoff(N, delta).largest


def _bump(x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(-1.0 / safe), 0.0)


def window(t: Union[float, np.ndarray], half_width: Optional[float] = None) -> np.ndarray:
    """
    Smooth cutoff equal to 1 on [-T/2, T/2] and 0 outside [-T, T].

    With the default T = 2 this is 1 on [-1, 1] and vanishes outside [-2, 2].
    """
    T = half_width or settings.window_half_width
    s = np.abs(np.asarray(t, dtype=float)) * (2.0 / T)
    rise = _bump(2.0 - s)
    return rise / (rise + _bump(s - 1.0))


def _frames_and_times(data: Frames, times: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Trajectory):
        return np.asarray(data.frames), np.asarray(data.times)
    if isinstance(data, KernelMatrix):
        return np.asarray(data.entries), np.asarray(data.times)
    if times is None:
        raise ValueError("times are required with a bare frame array")
    return np.asarray(data), np.asarray(times, dtype=float)


def _check_coverage(times: np.ndarray, half_width: float) -> float:
    if len(times) < 4:
        raise TrajectoryGridException("at least four time samples are needed")
    dt = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-12):
        raise TrajectoryGridException("times must be uniformly spaced and increasing")
    if times[0] > -half_width + 1e-9 or times[-1] < half_width - dt - 1e-9:
        raise TrajectoryGridException(
            f"samples on [{times[0]:.3f}, {times[-1]:.3f}] do not cover the window [-{half_width}, {half_width})"
        )
    return dt


def twisted_transform(
    data: Frames,
    times: Optional[np.ndarray] = None,
    ksq: Optional[np.ndarray] = None,
    half_width: Optional[float] = None,
) -> TimeFrequencyKernel:
    """
    Windowed twisted Fourier transform in time.

    u~_k(lambda) = (dt / 2 pi) sum_j e^{-i lambda t_j} e^{i |k|^2 t_j} chi(t_j) u_k(t_j),
    so a free solution concentrates at lambda = 0. Trajectories and kernels default to
    the window of their own grid. ``ksq`` broadcasts against
    the non-time axes; for coefficient frames it defaults to the |k|^2 table and
    for kernels to the row wavenumbers.
    """
    frames, t = _frames_and_times(data, times)
    if half_width is None and isinstance(data, (Trajectory, KernelMatrix)):
        half_width = -float(t[0])
    T = half_width or settings.window_half_width
    dt = _check_coverage(t, T)
    if ksq is None:
        if isinstance(data, KernelMatrix):
            ksq = data.row_ksq[:, None]
        else:
            ksq = wavenumber_table((frames.shape[-1] - 1) // 2)[2]
    shape = (len(t),) + (1,) * (frames.ndim - 1)
    twist = np.exp(1j * ksq[None] * t.reshape(shape))
    weighted = window(t, T).reshape(shape) * twist * frames
    P = len(t)
    lambdas = 2.0 * math.pi * np.fft.fftfreq(P, dt)
    phase = np.exp(-1j * lambdas * t[0]).reshape((P,) + (1,) * (frames.ndim - 1))
    values = (dt / (2.0 * math.pi)) * phase * np.fft.fft(weighted, axis=0)
    _leakage_check(values, lambdas)
    return TimeFrequencyKernel(lambdas=lambdas, values=values, window_half_width=T, points=P, spacing=dt)


def _leakage_check(values: np.ndarray, lambdas: np.ndarray) -> None:
    energy = np.abs(values) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return
    edge = np.abs(lambdas) >= 0.9 * np.max(np.abs(lambdas))
    fraction = float(np.sum(energy[edge])) / total
    if fraction > settings.leakage_threshold:
        logger.warning("spectral leakage %.2e near the Nyquist band; refine the time grid", fraction)


def _lambda_weights(transform: TimeFrequencyKernel, b: float) -> np.ndarray:
    return (1.0 + transform.lambdas ** 2) ** b


def xsb_norm(
    data: Frames,
    s: float = 0.0,
    b: float = 0.5,
    times: Optional[np.ndarray] = None,
    half_width: Optional[float] = None,
) -> float:
    """l^2_k L^2_lambda norm of <k>^s <lambda>^b u~_k(lambda); X^{0,0} is the windowed spacetime L^2 norm / sqrt(2 pi)."""
    frames, t = _frames_and_times(data, times)
    K = (frames.shape[-1] - 1) // 2
    transform = twisted_transform(frames, t, half_width=half_width)
    spatial = bracket(K) ** (2.0 * s)
    density = np.sum(spatial * np.abs(transform.values) ** 2, axis=(-2, -1))
    return float(math.sqrt(transform.d_lambda * np.sum(_lambda_weights(transform, b) * density)))


def _kernel_transform(kernel: Union[KernelMatrix, TimeFrequencyKernel]) -> TimeFrequencyKernel:
    return kernel if isinstance(kernel, TimeFrequencyKernel) else twisted_transform(kernel)


def yb_norm(kernel: Union[KernelMatrix, TimeFrequencyKernel], b: float = 0.5) -> float:
    """
    Operator norm from l^2_{k*} to l^2_k L^2_lambda of <lambda>^b h~(lambda).

    Computed as the square root of the largest eigenvalue of
    sum_lambda d_lambda <lambda>^{2b} h~^H h~.
    """
    transform = _kernel_transform(kernel)
    A = np.sqrt(_lambda_weights(transform, b))[:, None, None] * transform.values
    gram = transform.d_lambda * np.einsum("mkc,mkd->cd", np.conj(A), A)
    if gram.shape[0] == 0:
        return 0.0
    top = eigh(gram, eigvals_only=True, subset_by_index=[gram.shape[0] - 1, gram.shape[0] - 1])
    return float(math.sqrt(max(float(top[0]), 0.0)))


def zb_norm(
    kernel: Union[KernelMatrix, TimeFrequencyKernel],
    b: float = 0.5,
    weighted: bool = False,
    kappa: Optional[float] = None,
    L: Optional[float] = None,
    modes: Optional[Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]] = None,
) -> float:
    """
    l^2_{k,k*} L^2_lambda norm of <lambda>^b h~; with ``weighted`` each entry
    carries (1 + |k - k*| / L)^kappa.
    """
    transform = _kernel_transform(kernel)
    density = np.abs(transform.values) ** 2
    if weighted:
        if isinstance(kernel, KernelMatrix):
            modes = modes or (kernel.row_modes, kernel.column_modes)
            L = L or kernel.L
        if modes is None or L is None:
            raise ValueError("weighted Z^b needs the row/column modes and the scale L")
        kappa = settings.weighted_zb_kappa if kappa is None else kappa
        rows = np.array(modes[0], dtype=float)
        cols = np.array(modes[1], dtype=float)
        distance = np.linalg.norm(rows[:, None, :] - cols[None, :, :], axis=-1)
        density = density * ((1.0 + distance / L) ** (2.0 * kappa))[None]
    total = np.sum(density, axis=(-2, -1))
    return float(math.sqrt(transform.d_lambda * np.sum(_lambda_weights(transform, b) * total)))


def apply_kernel(kernel: KernelMatrix, y: Union[SpectralField, np.ndarray]) -> np.ndarray:
    """
    Frames (times, 2K+1, 2K+1) of sum_{k*} H_{k k*}(t) y_{k*}.

    ``y`` is either a field (its band coefficients are read off) or a vector
    over the kernel's column modes.
    """
    K = half_width(kernel.N)
    if isinstance(y, SpectralField):
        vector = np.array([y.coefficient(k) for k in kernel.column_modes])
    else:
        vector = np.asarray(y, dtype=np.complex128)
    if vector.shape != (len(kernel.column_modes),):
        raise ValueError(f"expected {len(kernel.column_modes)} band coefficients, got {vector.shape}")
    values = kernel.entries @ vector
    frames = np.zeros((len(kernel.times), 2 * K + 1, 2 * K + 1), dtype=np.complex128)
    rows = np.array(kernel.row_modes) + K
    frames[:, rows[:, 0], rows[:, 1]] = values
    return frames


def yb_norm_power(
    kernel: KernelMatrix, b: float = 0.5, iterations: int = 50, starts: int = 4, seed: int = 0
) -> float:
    """
    Power-iteration estimate of the Y^b norm, evaluated through apply_kernel
    and xsb_norm on the output so it shares no code path with ``yb_norm``.
    """
    transform = twisted_transform(kernel)
    A = np.sqrt(_lambda_weights(transform, b))[:, None, None] * transform.values
    columns = len(kernel.column_modes)
    if columns == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        x = rng.standard_normal(columns) + 1j * rng.standard_normal(columns)
        x /= np.linalg.norm(x)
        for _ in range(iterations):
            image = np.einsum("mkc,c->mk", A, x)
            x_next = np.einsum("mkc,mk->c", np.conj(A), image)
            size = np.linalg.norm(x_next)
            if size == 0.0:
                break
            x = x_next / size
        best = max(best, xsb_norm(apply_kernel(kernel, x), 0.0, b, kernel.times, transform.window_half_width))
    return best


def _cumulative(G: np.ndarray, times: np.ndarray) -> np.ndarray:
    if len(times) < 3:
        raise TrajectoryGridException("Duhamel quadrature needs at least three samples")
    return cumulative_simpson(G, x=times, axis=0, initial=0.0)


def _duhamel_parts(F: np.ndarray, grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    times = grid.times
    if F.shape[0] != len(times):
        raise TrajectoryGridException(f"forcing has {F.shape[0]} frames, grid has {len(times)}")
    ksq = wavenumber_table((F.shape[-1] - 1) // 2)[2]
    chi = window(times, grid.half_width)[:, None, None]
    rotation = np.exp(1j * ksq[None] * times[:, None, None])
    C = _cumulative(rotation * chi * F, times)
    return C, chi, np.conj(rotation), C[grid.zero_index]


def duhamel(F: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """I F(t) = chi(t) int_0^t e^{i(t - t') Lap} chi(t') F(t') dt'."""
    C, chi, back, C0 = _duhamel_parts(F, grid)
    return chi * back * (C - C0[None])


def duhamel_symmetric(F: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """J F(t) = chi(t) int sgn(t - t') e^{i(t - t') Lap} chi(t') F(t') dt' over the grid."""
    C, chi, back, _ = _duhamel_parts(F, grid)
    return chi * back * (2.0 * C - C[-1][None])


def gauged_reference(f: SpectralField, L: float, r: int, grid: TimeGrid, delta: Optional[float] = None) -> Optional[Trajectory]:
    """v_L: gauged solution from Pi_L f on the refined grid, or None for L = 1/2."""
    if L < 1:
        return None
    cutoff = int(L)
    ctx = make_context(r, cutoff, delta=delta)
    return evolve_on_grid(project(f, cutoff), ctx, grid.refined(2), gauged=True)


def _frame_lookup(traj: Trajectory, M: int) -> Callable[[float], np.ndarray]:
    t0 = float(traj.times[0])
    step = float(traj.times[1] - traj.times[0])

    @lru_cache(maxsize=8)
    def physical(index: int) -> np.ndarray:
        return grid_from_coeffs(np.asarray(traj.frames[index]), M)

    def at(t: float) -> np.ndarray:
        index = int(round((t - t0) / step))
        if index < 0 or index >= len(traj.times) or abs(traj.times[index] - t) > 1e-9 * max(1.0, abs(t)):
            raise TrajectoryGridException(f"reference trajectory has no frame at t={t:.9f}")
        return physical(index)

    return at


def _psi_frames(
    N: int,
    L: float,
    vL_traj: Optional[Trajectory],
    ctx: WickContext,
    data: np.ndarray,
    m_star: float,
    grid: TimeGrid,
) -> np.ndarray:
    """Solve the psi equation for a stack of band data, returning (times, batch..., 2K+1, 2K+1)."""
    K = half_width(N)
    _, _, ksq = wavenumber_table(K)
    times = grid.times
    zero = grid.zero_index
    out = np.empty((len(times),) + data.shape, dtype=np.complex128)
    if L < 1:
        out[:] = np.exp(-1j * ksq[None] * times.reshape((-1,) + (1,) * data.ndim)) * data[None]
        return out
    if vL_traj is None:
        raise MissingScaleException(f"psi at L={L} needs the reference solution v_L")
    if vL_traj.cutoff > N:
        raise ValueError(f"reference cutoff {vL_traj.cutoff} exceeds N={N}")

    n = 2 * ctx.r + 1
    M = grid_size(N, n)
    check_grid(M, N, n)
    mask = shell_mask(K, N)
    m_L = float(vL_traj.mass[0])
    lookup = _frame_lookup(vL_traj, M)

    def forcing(t: float, psi: np.ndarray) -> np.ndarray:
        values = linearized_gauged_grid(lookup(t), grid_from_coeffs(psi, M), m_L, m_star, ctx.r)
        return -1j * mask * coeffs_from_grid(values, K)

    out[zero] = data
    for direction, stop in ((1, len(times) - 1), (-1, 0)):
        stepper = InteractionPictureRK4(-1j * ksq, forcing, direction * grid.spacing)
        y = data
        j = zero
        while j != stop:
            y = stepper.step(float(times[j]), y)
            j += direction
            out[j] = y
    return out


def _band_data(N: int, data: SpectralField) -> np.ndarray:
    return delta_band(data, N).resized(N)


def solve_psi(
    N: int,
    L: float,
    vL_traj: Optional[Trajectory],
    ctx: WickContext,
    data: SpectralField,
    m_star: float,
    grid: Optional[TimeGrid] = None,
) -> Trajectory:
    """
    psi_{N,L}: the linear flow driven by v_L with psi(0) = Delta_N data.

    Solves (i d_t + Lap) psi = sum_l (l+1) c_rl (m*)^{r-l} Pi_N N_{2l+1}(psi, v_L, ..., v_L)
    with psi in the first slot, on both sides of t = 0. For L = 1/2 the
    reference vanishes and psi is the free flow. The returned trajectory logs
    the mass and the quadratic energy sum |k|^2 |psi_k|^2; its phase logs are zero.

    Raises:
        TrajectoryGridException: If v_L lacks a frame at some RK4 stage time
        MissingScaleException: If L >= 1 and no v_L is given
    """
    grid = grid or default_grid()
    if ctx.N != N:
        raise ValueError(f"context cutoff {ctx.N} differs from N={N}")
    if not ScaleSet.admits(N, L, ctx.params.delta):
        raise ValueError(f"({N}, {L}) is not an admissible scale pair")
    frames = _psi_frames(N, L, vL_traj, ctx, _band_data(N, data), m_star, grid)
    ksq = wavenumber_table(half_width(N))[2]
    zeros = np.zeros(len(grid.times))
    return Trajectory(
        cutoff=N, r=ctx.r, gauged=True, times=grid.times, frames=frames,
        mass=np.sum(np.abs(frames) ** 2, axis=(-2, -1)),
        hamiltonian=np.sum(ksq * np.abs(frames) ** 2, axis=(-2, -1)),
        phase_rate=zeros, gauge_phase=zeros, m_star=m_star,
    )


def build_H(
    N: int,
    L: float,
    vL_traj: Optional[Trajectory],
    ctx: WickContext,
    m_star: float,
    grid: Optional[TimeGrid] = None,
    workers: Optional[int] = None,
) -> KernelMatrix:
    """
    Kernel H^{N,L}: column k* is psi_{N,L} started from e^{i k* x}.

    Columns are solved in stacks of settings.column_chunk.

    Raises:
        ColumnSolveException: If a column turns non-finite
    """
    grid = grid or default_grid()
    if ctx.N != N:
        raise ValueError(f"context cutoff {ctx.N} differs from N={N}")
    K = half_width(N)
    rows = shell_modes(N)
    columns = band_modes(N)
    row_index = np.array(rows) + K
    column_index = np.array(columns) + K

    def solve(chunk: range) -> np.ndarray:
        data = np.zeros((len(chunk), 2 * K + 1, 2 * K + 1), dtype=np.complex128)
        data[np.arange(len(chunk)), column_index[chunk.start:chunk.stop, 0], column_index[chunk.start:chunk.stop, 1]] = 1.0
        frames = _psi_frames(N, L, vL_traj, ctx, data, m_star, grid)
        if not np.all(np.isfinite(frames)):
            raise ColumnSolveException(f"columns {chunk.start}..{chunk.stop - 1} of H^({N},{L}) diverged")
        return frames[:, :, row_index[:, 0], row_index[:, 1]]

    parts = parallel_map(solve, chunked(len(columns), settings.column_chunk), workers or settings.workers)
    entries = np.concatenate(parts, axis=1).transpose(0, 2, 1)
    logger.debug("built H^(%d,%s) with %d columns on %d times", N, L, len(columns), len(grid.times))
    return KernelMatrix(N=N, L=L, times=grid.times, row_modes=rows, column_modes=columns, entries=entries)


def _pad_frames(frames: np.ndarray, N: int) -> np.ndarray:
    K = half_width(N)
    k = (frames.shape[-1] - 1) // 2
    out = np.zeros(frames.shape[:-2] + (2 * K + 1, 2 * K + 1), dtype=np.complex128)
    out[..., K - k:K + k + 1, K - k:K + k + 1] = frames
    return out


def decompose(
    N: int,
    f: SpectralField,
    ctx: WickContext,
    grid: Optional[TimeGrid] = None,
    references: Optional[Dict[float, Trajectory]] = None,
    build_kernels: Optional[bool] = None,
) -> Decomposition:
    """
    Split y_N = v_N - v_{N/2} into psi_{N,1/2}, the zeta_{N,L} and the remainder z_N.

    Args:
        N: Dyadic cutoff
        f: Initial data (a free-field draw) with cutoff >= N
        ctx: Context at cutoff N
        grid: Time grid, defaults to the configured window grid
        references: Precomputed v_L trajectories on the refined grid, by L
        build_kernels: Also build H^{N,L} and h^{N,L}; defaults to N <= settings.kernel_max_cutoff

    Returns:
        Decomposition with z(0) = 0 by construction
    """
    grid = grid or default_grid()
    if ctx.N != N:
        raise ValueError(f"context cutoff {ctx.N} differs from N={N}")
    scales = ScaleSet.for_cutoff(N, ctx.params.delta)
    build_kernels = N <= settings.kernel_max_cutoff if build_kernels is None else build_kernels
    references = dict(references or {})
    f_N = project(f, N)
    m_star = mass(f_N) - ctx.sigma_N

    v_N = evolve_on_grid(f_N, ctx, grid, gauged=True)
    y = np.array(v_N.frames)
    if N >= 2:
        half_ctx = make_context(ctx.r, N // 2, delta=ctx.params.delta)
        v_half = evolve_on_grid(project(f, N // 2), half_ctx, grid, gauged=True)
        y = y - _pad_frames(np.asarray(v_half.frames), N)

    psi: Dict[float, np.ndarray] = {}
    zeta: Dict[float, np.ndarray] = {}
    kernels: Dict[float, KernelMatrix] = {}
    h: Dict[float, KernelMatrix] = {}
    for L in scales.scales:
        if L >= 1 and L not in references:
            references[L] = gauged_reference(f, L, ctx.r, grid, delta=ctx.params.delta)
        reference = references.get(L)
        psi[L] = np.asarray(solve_psi(N, L, reference, ctx, f_N, m_star, grid).frames)
        if L >= 1:
            zeta[L] = psi[L] - psi[L / 2]
        if build_kernels:
            kernels[L] = build_H(N, L, reference, ctx, m_star, grid)
            h[L] = kernels[L].minus(kernels[L / 2]) if L >= 1 else kernels[L]
    z = y - psi[scales.largest]
    logger.info("decomposed N=%d over scales %s, |z(0)|=%.2e", N, scales.scales, float(np.max(np.abs(z[grid.zero_index]))))
    return Decomposition(
        N=N, scales=scales, times=grid.times, m_star=m_star, y=y, psi=psi, zeta=zeta, z=z,
        kernels=kernels, h=h,
    )


def log_log_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x over the positive points (NaN below two distinct x)."""
    points = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len({p[0] for p in points}) < 2:
        return float("nan")
    fit = linregress([p[0] for p in points], [p[1] for p in points])
    return float(fit.slope)


def apriori_scan(
    N_max: int,
    r: int,
    seeds: Sequence[int],
    delta: Optional[float] = None,
    grid: Optional[TimeGrid] = None,
    N_min: int = 2,
) -> ScanReport:
    """
    Measure the kernel and remainder proxy norms against their bounds.

    For every dyadic N in [N_min, N_max], seed and admissible L: Y^b and Z^b
    of h^{N,L} (when kernels are built) beside L^{-delta0} and
    N^{1/2 + delta^{5/4}} L^{-1/2}, and X^{0,b} of z_N beside N^{-1+gamma}.
    Fits: slope of mean log X^b(z_N) in log N and of mean log Z^b(h) in log L
    at the largest N with kernels (settings.kernel_max_cutoff caps them), recorded
    as ``zb_fit_cutoff``.
    """
    grid = grid or default_grid()
    rows: List[ScanRow] = []
    N = N_min
    while N <= N_max:
        ctx = make_context(r, N, delta=delta)
        p = ctx.params
        for seed in seeds:
            f = sample_gff(N, seed).field
            parts = decompose(N, f, ctx, grid)
            xb_y = xsb_norm(parts.y, 0.0, p.b, parts.times, grid.half_width)
            xb_z = xsb_norm(parts.z, 0.0, p.b, parts.times, grid.half_width)
            for L in parts.scales.scales:
                kernel = parts.h.get(L)
                rows.append(ScanRow(
                    N=N, L=L, seed=seed,
                    yb_h=yb_norm(kernel, p.b) if kernel is not None else None,
                    zb_h=zb_norm(kernel, p.b) if kernel is not None else None,
                    zb_h_weighted=zb_norm(kernel, p.b, weighted=True) if kernel is not None else None,
                    xb_y=xb_y, xb_z=xb_z,
                    bound_yb=L ** (-p.delta0),
                    bound_zb=N ** (0.5 + p.delta ** 1.25) * L ** -0.5,
                    bound_z=N ** (-1.0 + p.gamma),
                ))
        N *= 2

    fits: Dict[str, float] = {}
    cutoffs = sorted({row.N for row in rows})
    z_means = [np.mean([row.xb_z for row in rows if row.N == n]) for n in cutoffs]
    fits["z_slope_in_N"] = log_log_slope(cutoffs, z_means)
    kernel_cutoffs = [row.N for row in rows if row.zb_h is not None]
    fit_cutoff = max(kernel_cutoffs, default=0)
    fits["zb_fit_cutoff"] = float(fit_cutoff)
    top = [row for row in rows if row.N == fit_cutoff and row.zb_h is not None]
    scales = sorted({row.L for row in top})
    fits["zb_slope_in_L"] = log_log_slope(scales, [np.mean([row.zb_h for row in top if row.L == L]) for L in scales])
    logger.info("a-priori scan fits: %s", fits)
    return ScanReport(rows=rows, fits=fits)
