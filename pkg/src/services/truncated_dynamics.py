"""
Time integration of the truncated Wick-ordered NLS and its gauged version.

Both flows are integrated in the interaction picture of the diagonal
operator -i(|k|^2 + c), where c is a constant frequency shift taken out of the
nonlinearity: the linear term of W^{2r+1} for the truncated flow, the mean
frequency of the initial state for the gauged flow. Arrays carry arbitrary
leading batch axes so an ensemble is stepped as one stack.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from src.config import settings
from src.models.dynamics_models import (
    ConservationReport,
    ConservationRow,
    EvolutionConfig,
    TimeGrid,
    Trajectory,
)
from src.models.spectral_models import SpectralField, half_width, shell_mask, wavenumber_table
from src.models.wick_models import WickContext
from src.services.gibbs_measures import hamiltonian_batch
from src.services.spectral_core import check_grid, coeffs_from_grid, embed, grid_from_coeffs, grid_size
from src.services.wick_calculus import (
    gauged_grid,
    gauged_nonlinearity,
    grid_mean,
    linear_coefficient,
    wick_grid,
)
from src.utils.exceptions import NumericalAbortException, TrajectoryGridException
from src.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

Nonlinearity = Callable[[float, np.ndarray], np.ndarray]


class InteractionPictureRK4:
    """
    Classical RK4 in the interaction picture of a diagonal linear operator.

    Integrates y' = L y + F(t, y) with L given by its symbol. The exponential
    factors are exact, so with F = 0 a step is the exact linear propagator.
    """

    def __init__(self, symbol: np.ndarray, nonlinear: Nonlinearity, dt: float):
        self.symbol = symbol
        self.nonlinear = nonlinear
        self.dt = dt
        self.exp_half = np.exp(0.5 * dt * symbol)

    def step(self, t: float, y: np.ndarray) -> np.ndarray:
        h = self.dt
        half = self.exp_half
        y_i = half * y
        k1 = half * self.nonlinear(t, y)
        k2 = self.nonlinear(t + 0.5 * h, y_i + 0.5 * h * k1)
        k3 = self.nonlinear(t + 0.5 * h, y_i + 0.5 * h * k2)
        k4 = self.nonlinear(t + h, half * (y_i + h * k3))
        return half * (y_i + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3)) + h / 6.0 * k4


class StrangSplitting(InteractionPictureRK4):
    """Linear half step, one RK4 step of y' = F(y), linear half step."""

    def step(self, t: float, y: np.ndarray) -> np.ndarray:
        h = self.dt
        mid = t + 0.5 * h
        z = self.exp_half * y
        k1 = self.nonlinear(mid, z)
        k2 = self.nonlinear(mid, z + 0.5 * h * k1)
        k3 = self.nonlinear(mid, z + 0.5 * h * k2)
        k4 = self.nonlinear(mid, z + h * k3)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return self.exp_half * z


SCHEMES = {"rk4-ip": InteractionPictureRK4, "strang": StrangSplitting}


def default_config(cutoff: int, t1: float, **overrides) -> EvolutionConfig:
    """EvolutionConfig on [0, t1] with dt = dt_factor / N^2 and the configured blowup factor."""
    values = {"dt": settings.dt_for(cutoff), "t_span": (0.0, t1), "blowup_factor": settings.blowup_factor}
    values.update(overrides)
    return EvolutionConfig(**values)


def _padded(u: SpectralField, ctx: WickContext) -> np.ndarray:
    if u.cutoff > ctx.N:
        raise ValueError(f"field cutoff {u.cutoff} exceeds the flow cutoff {ctx.N}")
    return embed(u, ctx.N).coeffs


def _masses(y: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(y) ** 2, axis=(-2, -1), keepdims=True)


def rhs_truncated(u: SpectralField, ctx: WickContext) -> SpectralField:
    """du/dt = -i(|k|^2 u_k + [Pi_N W^{2r+1}(Pi_N u)]_k)."""
    coeffs = _padded(u, ctx)
    K = half_width(ctx.N)
    n = 2 * ctx.r + 1
    M = grid_size(ctx.N, n)
    check_grid(M, ctx.N, n)
    _, _, ksq = wavenumber_table(K)
    nonlinear = coeffs_from_grid(wick_grid(grid_from_coeffs(coeffs, M), n, ctx.sigma_N), K)
    return SpectralField.from_coeffs(ctx.N, -1j * (ksq * coeffs + nonlinear))


def rhs_gauged(v: SpectralField, ctx: WickContext, m_star: float) -> SpectralField:
    """dv/dt = -i(|k|^2 v_k + [Pi_N Q_N(v)]_k) with m_star frozen."""
    field = SpectralField.from_coeffs(ctx.N, _padded(v, ctx))
    q = gauged_nonlinearity(field, ctx, m_star, verify=settings.verify_paths)
    _, _, ksq = wavenumber_table(half_width(ctx.N))
    return SpectralField.from_coeffs(ctx.N, -1j * (ksq * field.coeffs + q.coeffs))


def _frequency_shift(
    y0: np.ndarray, ctx: WickContext, gauged: bool, m_star: Union[float, np.ndarray], M: int
) -> Union[float, np.ndarray]:
    if not gauged:
        return linear_coefficient(2 * ctx.r + 1, ctx.sigma_N)
    g = grid_from_coeffs(y0, M)
    m = _masses(y0)
    q = gauged_grid(g, m, m_star, ctx.r)
    pairing = np.real(grid_mean(q * np.conj(g)))
    return np.where(m > 0, pairing / np.where(m > 0, m, 1.0), 0.0)


def _nonlinear_operator(
    ctx: WickContext,
    gauged: bool,
    m_star: Union[float, np.ndarray],
    shift: Union[float, np.ndarray],
    M: int,
) -> Nonlinearity:
    K = half_width(ctx.N)
    mask = shell_mask(K, ctx.N)
    n = 2 * ctx.r + 1

    def apply(t: float, y: np.ndarray) -> np.ndarray:
        g = grid_from_coeffs(y, M)
        if gauged:
            values = gauged_grid(g, _masses(y), m_star, ctx.r)
        else:
            values = wick_grid(g, n, ctx.sigma_N)
        return -1j * (mask * coeffs_from_grid(values, K) - shift * y)

    return apply


def _zero_operator(t: float, y: np.ndarray) -> np.ndarray:
    return np.zeros_like(y)


def integrate_array(
    y0: np.ndarray,
    ctx: WickContext,
    cfg: EvolutionConfig,
    gauged: bool = False,
    m_star: Union[float, np.ndarray, None] = None,
    on_save: Optional[Callable[[float, np.ndarray], None]] = None,
) -> np.ndarray:
    """
    Step a (..., 2K+1, 2K+1) coefficient stack across cfg.t_span.

    Args:
        y0: Initial coefficients at cutoff ctx.N
        ctx: Wick context
        cfg: Scheme, step and span; the signed step handles backward runs
        gauged: Integrate the gauged flow instead of the truncated one
        m_star: Frozen m_N*, scalar or broadcastable per sample; defaults to mass - sigma_N
        on_save: Called with (t, state) at t0, every save_stride steps and at t1

    Returns:
        State at t1

    Raises:
        NumericalAbortException: If a norm leaves [0, blowup_factor x initial] or turns non-finite
    """
    cfg.check_stability(ctx.N)
    K = half_width(ctx.N)
    _, _, ksq = wavenumber_table(K)
    y = np.asarray(y0, dtype=np.complex128) * shell_mask(K, ctx.N)
    n = 2 * ctx.r + 1
    M = grid_size(ctx.N, n)
    check_grid(M, ctx.N, n)
    if gauged and m_star is None:
        m_star = _masses(y) - ctx.sigma_N

    if cfg.nonlinear:
        shift = _frequency_shift(y, ctx, gauged, m_star, M)
        nonlinear = _nonlinear_operator(ctx, gauged, m_star, shift, M)
    else:
        shift, nonlinear = 0.0, _zero_operator

    steps = cfg.steps()
    h = cfg.step_size()
    stepper = SCHEMES[cfg.scheme](-1j * (ksq + shift), nonlinear, h)
    t0 = cfg.t_span[0]
    norm0 = np.sqrt(_masses(y))
    limit = cfg.blowup_factor * norm0
    if on_save is not None:
        on_save(t0, y)
    for step in range(1, steps + 1):
        y = stepper.step(t0 + (step - 1) * h, y)
        norm = np.sqrt(_masses(y))
        if not np.all(np.isfinite(norm)) or np.any((norm0 > 0) & (norm > limit)):
            ratio = float(np.max(norm / np.where(norm0 > 0, norm0, 1.0)))
            raise NumericalAbortException(
                f"norm grew by {ratio:.3e} at t={t0 + step * h:.6f} (step {step}, dt={h:.3e}, N={ctx.N})"
            )
        if on_save is not None and (step % cfg.save_stride == 0 or step == steps):
            on_save(t0 + step * h, y)
    logger.debug("integrated %d steps of %s, N=%d r=%d gauged=%s", steps, cfg.scheme, ctx.N, ctx.r, gauged)
    return y


def phase_rate_batch(frames: np.ndarray, ctx: WickContext) -> np.ndarray:
    """A[W^{2r}(u)] per frame; the imaginary part vanishes identically."""
    M = grid_size(ctx.N, 2 * ctx.r)
    values = wick_grid(grid_from_coeffs(frames, M), 2 * ctx.r, ctx.sigma_N)
    return np.real(np.mean(values, axis=(-2, -1)))


def cumulative_phase(times: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """
    B(t) = int_{t_0}^t rate dt' by composite Simpson on the saved grid.

    Warns when Simpson and trapezoid disagree by more than the quadrature
    tolerance, the signal that the saved grid is too coarse.
    """
    if len(times) < 2:
        return np.zeros(len(times))
    trapezoid = cumulative_trapezoid(rates, times, initial=0.0)
    if len(times) < 3:
        return trapezoid
    simpson = cumulative_simpson(rates, x=times, initial=0.0)
    gap = float(np.max(np.abs(simpson - trapezoid)))
    if gap > settings.quadrature_tolerance:
        logger.warning("gauge phase quadrature unresolved: Simpson/trapezoid gap %.3e; save more frames", gap)
    return simpson


def _trajectory(
    times: List[float], frames: List[np.ndarray], ctx: WickContext, gauged: bool, m_star: Optional[float]
) -> Trajectory:
    stack = np.stack(frames)
    time_array = np.asarray(times, dtype=float)
    rates = phase_rate_batch(stack, ctx)
    return Trajectory(
        cutoff=ctx.N,
        r=ctx.r,
        gauged=gauged,
        times=time_array,
        frames=stack,
        mass=np.sum(np.abs(stack) ** 2, axis=(-2, -1)),
        hamiltonian=hamiltonian_batch(stack, ctx),
        phase_rate=rates,
        gauge_phase=cumulative_phase(time_array, rates),
        m_star=m_star,
    )


def evolve(
    u0: SpectralField,
    ctx: WickContext,
    cfg: EvolutionConfig,
    gauged: bool = False,
    m_star: Optional[float] = None,
) -> Trajectory:
    """
    Solve the truncated (or gauged) flow from u0 over cfg.t_span.

    Args:
        u0: Initial data with cutoff <= ctx.N
        ctx: Wick context
        cfg: Evolution config
        gauged: Use the gauged equation
        m_star: Frozen m_N* for the gauged flow, defaults to m_N(u0) - sigma_N

    Returns:
        Trajectory with mass, H_N, phase rate and gauge phase logged per saved frame
    """
    y0 = _padded(u0, ctx)
    if gauged and m_star is None:
        m_star = float(np.sum(np.abs(y0) ** 2)) - ctx.sigma_N
    times: List[float] = []
    frames: List[np.ndarray] = []

    def save(t: float, y: np.ndarray) -> None:
        times.append(t)
        frames.append(y.copy())

    integrate_array(y0, ctx, cfg, gauged=gauged, m_star=m_star, on_save=save)
    return _trajectory(times, frames, ctx, gauged, m_star if gauged else None)


def evolve_on_grid(
    u0: SpectralField,
    ctx: WickContext,
    grid: TimeGrid,
    gauged: bool = False,
    m_star: Optional[float] = None,
    dt: Optional[float] = None,
    scheme: str = "rk4-ip",
) -> Trajectory:
    """
    Two-sided integration onto every point of a symmetric TimeGrid.

    The forward leg covers [0, T - dt_grid], the backward leg [-T, 0]; the step is
    the largest divisor of the grid spacing not above ``dt``. The gauge phase is
    measured from t = 0 on both legs.

    Raises:
        TrajectoryGridException: If the saved times miss the grid
    """
    dt = dt or settings.dt_for(ctx.N)
    substeps = max(int(np.ceil(grid.spacing / dt - 1e-9)), 1)
    h = grid.spacing / substeps
    target = grid.times
    common = {"dt": h, "save_stride": substeps, "scheme": scheme, "blowup_factor": settings.blowup_factor}
    forward = evolve(u0, ctx, EvolutionConfig(t_span=(0.0, float(target[-1])), **common), gauged, m_star)
    backward = evolve(u0, ctx, EvolutionConfig(t_span=(0.0, float(target[0])), **common), gauged, m_star)

    def merge(name: str) -> np.ndarray:
        return np.concatenate([getattr(backward, name)[:0:-1], getattr(forward, name)])

    times = merge("times")
    if times.shape != target.shape or np.max(np.abs(times - target)) > 1e-9 * max(grid.half_width, 1.0):
        raise TrajectoryGridException(f"integration produced {len(times)} frames off the {grid.points}-point grid")
    return Trajectory(
        cutoff=ctx.N,
        r=ctx.r,
        gauged=gauged,
        times=target,
        frames=merge("frames"),
        mass=merge("mass"),
        hamiltonian=merge("hamiltonian"),
        phase_rate=merge("phase_rate"),
        gauge_phase=merge("gauge_phase"),
        m_star=forward.m_star,
    )


def evolve_ensemble(
    samples: Sequence[SpectralField],
    ctx: WickContext,
    cfg: EvolutionConfig,
    gauged: bool = False,
    workers: Optional[int] = None,
) -> List[SpectralField]:
    """Final states of many initial data, stepped in stacks of settings.batch_size."""
    if not samples:
        return []
    stack = np.stack([_padded(u, ctx) for u in samples])
    workers = workers or settings.workers

    def run(indices: range) -> np.ndarray:
        return integrate_array(stack[indices.start:indices.stop], ctx, cfg, gauged=gauged)

    finals = np.concatenate(parallel_map(run, chunked(len(stack), settings.batch_size), workers))
    logger.info("evolved %d samples over %s (N=%d, r=%d)", len(stack), cfg.t_span, ctx.N, ctx.r)
    return [SpectralField.from_coeffs(ctx.N, c) for c in finals]


def _gauged_frames(traj: Trajectory, sign: float) -> Tuple[np.ndarray, np.ndarray]:
    phase = cumulative_phase(traj.times, traj.phase_rate)
    return traj.frames * np.exp(sign * 1j * (traj.r + 1) * phase)[:, None, None], phase


def gauge_forward(traj_u: Trajectory, ctx: WickContext) -> Trajectory:
    """v(t) = u(t) exp((r+1) i B(t)), B the cumulative integral of A[W^{2r}(u)] from the first frame."""
    if traj_u.gauged:
        raise ValueError("trajectory is already gauged")
    frames, phase = _gauged_frames(traj_u, 1.0)
    m_star = float(traj_u.mass[0]) - ctx.sigma_N
    return traj_u.model_copy(update={"frames": frames, "gauged": True, "gauge_phase": phase, "m_star": m_star})


def gauge_inverse(traj_v: Trajectory, ctx: WickContext) -> Trajectory:
    """u(t) = v(t) exp(-(r+1) i B(t)); B is phase invariant so it is read off v."""
    if not traj_v.gauged:
        raise ValueError("trajectory is not gauged")
    frames, phase = _gauged_frames(traj_v, -1.0)
    return traj_v.model_copy(update={"frames": frames, "gauged": False, "gauge_phase": phase, "m_star": None})


def conservation_report(traj: Trajectory) -> ConservationReport:
    """Mass and H_N per frame with relative drifts from the first frame."""
    m0 = float(traj.mass[0])
    h0 = float(traj.hamiltonian[0])
    mass_scale = m0 if m0 > 0 else 1.0
    energy_scale = max(abs(h0), 1.0)
    rows = [
        ConservationRow(
            t=float(t),
            mass=float(m),
            hamiltonian=float(e),
            mass_drift=abs(float(m) - m0) / mass_scale,
            hamiltonian_drift=abs(float(e) - h0) / energy_scale,
        )
        for t, m, e in zip(traj.times, traj.mass, traj.hamiltonian)
    ]
    return ConservationReport(
        rows=rows,
        max_mass_drift=max(row.mass_drift for row in rows),
        max_hamiltonian_drift=max(row.hamiltonian_drift for row in rows),
    )


def drift_refinement(u0: SpectralField, ctx: WickContext, cfg: EvolutionConfig, gauged: bool = False) -> Dict[str, float]:
    """Maximal H_N drift at dt and dt/2 and their ratio, about 16 for a fourth-order scheme."""
    coarse = conservation_report(evolve(u0, ctx, cfg, gauged)).max_hamiltonian_drift
    fine_cfg = cfg.model_copy(update={"dt": cfg.dt / 2.0, "save_stride": cfg.save_stride * 2})
    fine = conservation_report(evolve(u0, ctx, fine_cfg, gauged)).max_hamiltonian_drift
    ratio = coarse / fine if fine > 0 else float("inf")
    logger.info("H_N drift %.3e at dt=%.3e, %.3e at dt/2, ratio %.2f", coarse, cfg.dt, fine, ratio)
    return {"dt": cfg.dt, "drift": coarse, "drift_half": fine, "ratio": ratio}


def compose_local_steps(
    u0: SpectralField,
    ctx: WickContext,
    tau: float,
    pieces: int,
    gauged: bool = False,
    dt: Optional[float] = None,
    scheme: str = "rk4-ip",
) -> Trajectory:
    """Evolve to pieces * tau by restarting on each interval [j tau, (j+1) tau]."""
    if pieces < 1 or tau <= 0:
        raise ValueError("need tau > 0 and at least one piece")
    dt = dt or settings.dt_for(ctx.N)
    field = SpectralField.from_coeffs(ctx.N, _padded(u0, ctx))
    m_star = float(np.sum(np.abs(field.coeffs) ** 2)) - ctx.sigma_N if gauged else None
    times: List[float] = [0.0]
    frames: List[np.ndarray] = [np.array(field.coeffs)]
    for j in range(pieces):
        cfg = EvolutionConfig(
            dt=dt, t_span=(j * tau, (j + 1) * tau), scheme=scheme, blowup_factor=settings.blowup_factor
        )
        piece = evolve(field, ctx, cfg, gauged, m_star)
        times.extend(piece.times[1:].tolist())
        frames.extend(np.array(f) for f in piece.frames[1:])
        field = piece.final
    return _trajectory(times, frames, ctx, gauged, m_star)
