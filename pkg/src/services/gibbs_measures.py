"""
Samplers for the Gaussian free field and the truncated Gibbs measures.

Random streams are keyed by (master seed, stream, sample index, dyadic
shell) through numpy SeedSequence spawn keys, so a sample never depends on the
worker count, the batch size or the cutoff it is truncated to: Pi_N of the
draw at cutoff 2N is the draw at cutoff N.
"""

import logging
import math
from functools import lru_cache
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.config import settings
from src.models.measure_models import GffSample, GibbsEnsemble, MassStats
from src.models.spectral_models import SpectralField, band_mask, half_width, shell_mask, wavenumber_table
from src.models.wick_models import WickContext
from src.services.spectral_core import grid_from_coeffs, grid_size, project
from src.services.wick_calculus import make_context, sigma, wick_grid
from src.utils.exceptions import NonRealEnergyException
from src.utils.parallel import chunked, parallel_map

logger = logging.getLogger(__name__)

IMPORTANCE_STREAM = 0


@lru_cache(maxsize=32)
def _shell_layout(j: int) -> Tuple[np.ndarray, np.ndarray]:
    """Wavenumbers of the dyadic shell 2^{j-1} < <k> <= 2^j (shell 0 is k = 0)."""
    scale = 1 << j
    K = half_width(scale)
    kx, ky, _ = wavenumber_table(K)
    mask = band_mask(K, scale)
    return kx[mask], ky[mask]


def _shell_count(N: int) -> int:
    return max(int(math.ceil(math.log2(N))), 0) + 1


def gaussian_coefficients(N: int, seed: int, index: int = 0, stream: int = IMPORTANCE_STREAM) -> np.ndarray:
    """
    Standard complex Gaussians g_k for <k> <= N on the dense (2K+1)^2 layout.

    Args:
        N: Cutoff
        seed: Master seed
        index: Sample index
        stream: Independent stream id (importance sampling, pCN chains, ...)

    Returns:
        Array with g_k at <k> <= N and zero elsewhere
    """
    K = half_width(N)
    out = np.zeros((2 * K + 1, 2 * K + 1), dtype=np.complex128)
    inside = shell_mask(K, N)
    for j in range(_shell_count(N)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index, j)))
        kx, ky = _shell_layout(j)
        draws = rng.standard_normal((2, kx.size))
        g = (draws[0] + 1j * draws[1]) / math.sqrt(2.0)
        keep = (np.abs(kx) <= K) & (np.abs(ky) <= K)
        rows, cols, values = kx[keep] + K, ky[keep] + K, g[keep]
        selected = inside[rows, cols]
        out[rows[selected], cols[selected]] = values[selected]
    return out


def gff_coefficients(N: int, seed: int, index: int = 0, stream: int = IMPORTANCE_STREAM) -> np.ndarray:
    """Coefficients g_k / <k> of Pi_N f."""
    g = gaussian_coefficients(N, seed, index, stream)
    K = half_width(N)
    return g / np.sqrt(wavenumber_table(K)[2] + 1.0)


def sample_gff(N: int, seed: int, index: int = 0) -> GffSample:
    """Draw Pi_N f(omega) with f = sum_k g_k / <k> e^{ik.x}."""
    if N < 1:
        raise ValueError(f"cutoff must be >= 1, got {N}")
    field = SpectralField.from_coeffs(N, gff_coefficients(N, seed, index))
    return GffSample(field=field, seed=seed, index=index, N=N)


def gff_stack(N: int, seed: int, indices: Iterable[int], stream: int = IMPORTANCE_STREAM) -> np.ndarray:
    return np.stack([gff_coefficients(N, seed, i, stream) for i in indices])


def potential_batch(coeffs: np.ndarray, ctx: WickContext, tolerance: float = 1e-10) -> np.ndarray:
    """V_N = A[W^{2r+2}(Pi_N u)] / (r+1) for a stack of coefficient arrays."""
    n = 2 * ctx.r + 2
    M = grid_size(ctx.N, n)
    values = np.mean(wick_grid(grid_from_coeffs(coeffs, M), n, ctx.sigma_N), axis=(-2, -1))
    values = values / (ctx.r + 1)
    if np.iscomplexobj(values):
        if np.any(np.abs(values.imag) > tolerance * np.maximum(1.0, np.abs(values.real))):
            raise NonRealEnergyException("potential energy has a non-negligible imaginary part")
        values = values.real
    return values


def _truncated_coeffs(u: SpectralField, ctx: WickContext) -> np.ndarray:
    return project(u, ctx.N).resized(ctx.N)


def potential_energy(u: SpectralField, ctx: WickContext) -> float:
    """Truncated potential energy V_N[u] = A[W^{2r+2}(Pi_N u)] / (r+1)."""
    return float(potential_batch(_truncated_coeffs(u, ctx)[None], ctx)[0])


def kinetic_batch(coeffs: np.ndarray) -> np.ndarray:
    K = (coeffs.shape[-1] - 1) // 2
    return np.sum(wavenumber_table(K)[2] * np.abs(coeffs) ** 2, axis=(-2, -1))


def hamiltonian_batch(coeffs: np.ndarray, ctx: WickContext) -> np.ndarray:
    return kinetic_batch(coeffs) + potential_batch(coeffs, ctx)


def hamiltonian(u: SpectralField, ctx: WickContext) -> float:
    """H_N[u] = sum_k |k|^2 |u_k|^2 + V_N[u]."""
    return float(hamiltonian_batch(_truncated_coeffs(u, ctx)[None], ctx)[0])


def mass_stats(u: SpectralField, ctx: WickContext) -> MassStats:
    """m_N, m_N* and nu_N = m_N* - m_{N/2}* of a field."""
    m_N = float(np.sum(np.abs(project(u, ctx.N).coeffs) ** 2))
    m_star = m_N - ctx.sigma_N
    half = ctx.N // 2
    if half >= 1:
        m_half_star = float(np.sum(np.abs(project(u, half).coeffs) ** 2)) - sigma(half)
    else:
        m_half_star = 0.0
    return MassStats(m_N=m_N, m_N_star=m_star, nu_N=m_star - m_half_star)


def log_density_weight(coeffs: np.ndarray, ctx: WickContext, mass_weight: Optional[bool] = None) -> np.ndarray:
    """Log Radon-Nikodym weight -V_N (minus the mass when the optional mass weight is on)."""
    mass_weight = settings.mass_weight if mass_weight is None else mass_weight
    log_w = -potential_batch(coeffs, ctx)
    if mass_weight:
        log_w = log_w - np.sum(np.abs(coeffs) ** 2, axis=(-2, -1))
    return log_w


def effective_sample_size(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed stably in log space."""
    log_weights = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(log_weights) - logsumexp(2.0 * log_weights)))


def weighted_mean_and_se(values: np.ndarray, log_weights: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    Self-normalized mean and its delta-method standard error.

    Args:
        values: Per-sample observable
        log_weights: Unnormalized log weights, uniform when omitted

    Returns:
        (mean, standard error)
    """
    values = np.asarray(values, dtype=float)
    if log_weights is None:
        w = np.full(values.size, 1.0 / values.size)
    else:
        w = np.exp(log_weights - np.max(log_weights))
        w = w / w.sum()
    mean = float(np.sum(w * values))
    se = float(np.sqrt(np.sum(w ** 2 * (values - mean) ** 2)))
    return mean, se


def batch_means_se(values: np.ndarray, batches: int = 20) -> float:
    """Standard error of a correlated chain mean from non-overlapping batch means."""
    values = np.asarray(values, dtype=float)
    batches = max(2, min(batches, values.size // 2))
    size = values.size // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def resample_indices(log_weights: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Systematic resampling of a weighted ensemble."""
    w = np.exp(log_weights - np.max(log_weights))
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    positions = (rng.random() + np.arange(count)) / count
    return np.searchsorted(cdf, positions, side="left")


def sample_gibbs_importance(
    N: int,
    r: int,
    count: int,
    seed: int,
    ctx: Optional[WickContext] = None,
    workers: Optional[int] = None,
    mass_weight: Optional[bool] = None,
) -> GibbsEnsemble:
    """
    Importance sampler: free-field draws weighted by e^{-V_N}.

    Args:
        N: Cutoff
        r: Nonlinearity parameter
        count: Number of samples
        seed: Master seed
        ctx: Context, built from (r, N) when omitted
        workers: Thread count, defaults to settings.workers
        mass_weight: Include the optional e^{-M[u]} factor

    Returns:
        GibbsEnsemble with log_weights = -V_N and log_partition = log mean e^{-V_N}
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    ctx = ctx or make_context(r, N)
    workers = workers or settings.workers

    def run(indices: range) -> Tuple[np.ndarray, np.ndarray]:
        stack = gff_stack(N, seed, indices)
        return stack, log_density_weight(stack, ctx, mass_weight)

    parts = parallel_map(run, chunked(count, settings.batch_size), workers)
    stack = np.concatenate([p[0] for p in parts])
    log_w = np.concatenate([p[1] for p in parts])
    ess = effective_sample_size(log_w)
    if ess < settings.ess_warning_fraction * count:
        logger.warning("degenerate importance weights: ess=%.1f for %d samples", ess, count)
    samples = [SpectralField(cutoff=N, coeffs=c) for c in stack]
    log_z = float(logsumexp(log_w) - math.log(count))
    logger.info("importance ensemble N=%d r=%d count=%d ess=%.1f log Z=%.4f", N, r, count, ess, log_z)
    return GibbsEnsemble(
        samples=samples, log_weights=log_w, seed=seed, N=N, r=r,
        ess=min(ess, float(count)), sampler_tag="importance", log_partition=log_z,
    )


def _pcn_chain(
    N: int,
    ctx: WickContext,
    steps: int,
    step_size: float,
    seed: int,
    chain: int,
    weighted: bool,
    mass_weight: Optional[bool],
) -> Tuple[np.ndarray, int]:
    stream = 1 + chain
    accept_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))
    current = gff_coefficients(N, seed, 0, stream)
    log_w = float(log_density_weight(current[None], ctx, mass_weight)[0]) if weighted else 0.0
    keep = math.sqrt(1.0 - step_size ** 2)
    states = np.empty((steps,) + current.shape, dtype=np.complex128)
    accepted = 0
    for step in range(steps):
        proposal = keep * current + step_size * gff_coefficients(N, seed, step + 1, stream)
        proposal_log_w = float(log_density_weight(proposal[None], ctx, mass_weight)[0]) if weighted else 0.0
        if math.log(accept_rng.random()) < proposal_log_w - log_w:
            current, log_w = proposal, proposal_log_w
            accepted += 1
        states[step] = current
    return states, accepted


def sample_gibbs_pcn(
    N: int,
    r: int,
    steps: int,
    step_size: float,
    seed: int,
    chains: int = 1,
    ctx: Optional[WickContext] = None,
    weighted: bool = True,
    workers: Optional[int] = None,
    mass_weight: Optional[bool] = None,
) -> GibbsEnsemble:
    """
    Preconditioned Crank-Nicolson chains targeting the truncated Gibbs measure.

    Proposal u' = sqrt(1 - beta^2) u + beta * (fresh free field), accepted with
    probability min(1, e^{V_N[u] - V_N[u']}). beta = 1 is the independence
    sampler; ``weighted=False`` switches the potential off and leaves the free
    field invariant.

    Returns:
        GibbsEnsemble with uniform weights, the chains concatenated
    """
    if not 0.0 < step_size <= 1.0:
        raise ValueError(f"step size must lie in (0, 1], got {step_size}")
    if steps < 1 or chains < 1:
        raise ValueError("steps and chains must be positive")
    ctx = ctx or make_context(r, N)
    workers = workers or settings.workers
    results = parallel_map(
        lambda c: _pcn_chain(N, ctx, steps, step_size, seed, c, weighted, mass_weight),
        list(range(chains)),
        workers,
    )
    stack = np.concatenate([states for states, _ in results])
    acceptance = sum(a for _, a in results) / float(steps * chains)
    masses = np.sum(np.abs(stack) ** 2, axis=(-2, -1))
    se = batch_means_se(masses)
    variance = float(np.var(masses))
    ess = float(np.clip(variance / se ** 2, 1.0, stack.shape[0])) if se > 0 else float(stack.shape[0])
    logger.info("pcn N=%d r=%d chains=%d acceptance=%.3f ess~%.1f", N, r, chains, acceptance, ess)
    return GibbsEnsemble(
        samples=[SpectralField(cutoff=N, coeffs=c) for c in stack],
        log_weights=np.zeros(stack.shape[0]), seed=seed, N=N, r=r, ess=ess,
        sampler_tag="pcn", acceptance_rate=acceptance, chains=chains,
    )


def radon_nikodym_moments(
    N: int, r: int, qs: Sequence[float], count: int, seed: int
) -> Dict[float, float]:
    """log E_rho[e^{-q V_N}] estimated from free-field draws, per q."""
    ensemble = sample_gibbs_importance(N, r, count, seed, mass_weight=False)
    return {float(q): float(logsumexp(q * ensemble.log_weights) - math.log(count)) for q in qs}


def partition_function_ladder(cutoffs: Sequence[int], r: int, count: int, seed: int) -> Dict[int, float]:
    """log Z_N estimates on a ladder of cutoffs, from nested draws of one seed."""
    return {N: float(sample_gibbs_importance(N, r, count, seed).log_partition) for N in cutoffs}
