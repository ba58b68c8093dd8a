"""
Flagship experiments: measure invariance, truncation convergence and
stability, plus the counting and deviation suites.

Every experiment is a pure function of its parameters and master seed; the
ExperimentService wraps them with persistence and manifests.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import ks_2samp

from src.config import settings
from src.models.counting_models import CountResult, SetName
from src.models.dynamics_models import TimeGrid, Trajectory
from src.models.experiment_models import (
    ConvergenceReport,
    DeviationSuiteReport,
    DeviationSuiteRow,
    DistanceRow,
    InvarianceReport,
    KSResult,
    ObservableComparison,
    ProjectionRow,
    SmoothingRow,
    StabilityReport,
    StabilityRow,
)
from src.models.measure_models import GibbsEnsemble
from src.models.spectral_models import SpectralField, bracket, half_width, shell_mask, wavenumber_table
from src.models.wick_models import WickContext
from src.services.averaging_operators import log_log_slope
from src.services.gaussian_deviation import (
    isometry_ratio,
    moment,
    moment_domination,
    random_expression,
    sample_F,
    tail_check,
)
from src.services.gibbs_measures import (
    gaussian_coefficients,
    hamiltonian_batch,
    potential_batch,
    resample_indices,
    sample_gff,
    sample_gibbs_importance,
    weighted_mean_and_se,
)
from src.services.lattice_counting import (
    count_S123,
    counting_batch,
    gaussian_divisors,
    integer_divisors,
    naive_gaussian_divisors,
    naive_integer_divisors,
    random_instances,
)
from src.services.spectral_core import grid_from_coeffs, grid_size, project
from src.services.truncated_dynamics import default_config, evolve, evolve_ensemble, evolve_on_grid, gauge_inverse
from src.services.wick_calculus import make_context, wick_grid
from src.utils.exceptions import DegenerateEnsembleException
from src.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

PERTURBATION_STREAM = 11


def observables(coeffs: np.ndarray, ctx: WickContext, modes: Optional[Sequence[Sequence[int]]] = None) -> Dict[str, np.ndarray]:
    """
    Per-sample observables of a coefficient stack: m_N, V_N, H_N, the mean of
    W^4, and |u_k|^2 and Re u_k for every listed mode inside the shell.
    """
    modes = settings.observable_modes if modes is None else modes
    K = half_width(ctx.N)
    out = {
        "mass": np.sum(np.abs(coeffs) ** 2, axis=(-2, -1)),
        "potential": potential_batch(coeffs, ctx),
        "hamiltonian": hamiltonian_batch(coeffs, ctx),
    }
    M = grid_size(ctx.N, 4)
    out["wick4_mean"] = np.real(np.mean(wick_grid(grid_from_coeffs(coeffs, M), 4, ctx.sigma_N), axis=(-2, -1)))
    inside = shell_mask(K, ctx.N)
    for kx, ky in modes:
        if abs(kx) > K or abs(ky) > K or not inside[kx + K, ky + K]:
            continue
        values = coeffs[:, kx + K, ky + K]
        out[f"abs2_{kx}_{ky}"] = np.abs(values) ** 2
        out[f"re_{kx}_{ky}"] = np.real(values)
    return out


def _z_score(diff: float, se: float) -> float:
    if diff == 0.0:
        return 0.0
    return diff / se if se > 0 else math.copysign(math.inf, diff)


def _evolve_stack(
    ensemble: GibbsEnsemble,
    ctx: WickContext,
    t: float,
    dt: float,
    path: str,
    nonlinear: bool,
    workers: Optional[int],
) -> np.ndarray:
    if t == 0.0:
        return ensemble.coefficient_stack
    cfg = default_config(ctx.N, t, dt=dt, nonlinear=nonlinear)
    if path == "direct":
        finals = evolve_ensemble(ensemble.samples, ctx, cfg, workers=workers)
    elif path == "gauged":
        finals = parallel_map(
            lambda u: gauge_inverse(evolve(u, ctx, cfg, gauged=True), ctx).final,
            list(ensemble.samples),
            workers or settings.workers,
        )
    else:
        raise ValueError(f"unknown path {path!r}, expected 'direct' or 'gauged'")
    return np.stack([u.coeffs for u in finals])


def _compare(
    ensemble: GibbsEnsemble, after: np.ndarray, ctx: WickContext, seed: int
) -> Tuple[List[ObservableComparison], List[KSResult], float]:
    before_obs = observables(ensemble.coefficient_stack, ctx)
    after_obs = observables(after, ctx)
    log_w = ensemble.log_weights
    comparisons = []
    for name, before in before_obs.items():
        m0, se0 = weighted_mean_and_se(before, log_w)
        m1, se1 = weighted_mean_and_se(after_obs[name], log_w)
        z = _z_score(m1 - m0, math.sqrt(se0 ** 2 + se1 ** 2))
        comparisons.append(ObservableComparison(name=name, before=m0, before_se=se0, after=m1, after_se=se1, z=z))

    index = resample_indices(log_w, ensemble.count, seed)
    ks = []
    for name in before_obs:
        if name == "mass" or name.startswith("re_"):
            result = ks_2samp(before_obs[name][index], after_obs[name][index])
            ks.append(KSResult(name=name, statistic=float(result.statistic), pvalue=float(result.pvalue)))

    h0 = before_obs["hamiltonian"]
    violation, _ = weighted_mean_and_se(np.abs(after_obs["hamiltonian"] - h0) / np.maximum(np.abs(h0), 1.0), log_w)
    return comparisons, ks, violation


def invariance_experiment(
    N: int,
    r: int,
    t: float,
    count: int,
    seed: int,
    dt: Optional[float] = None,
    path: str = "direct",
    nonlinear: bool = True,
    refine: bool = False,
    workers: Optional[int] = None,
) -> InvarianceReport:
    """
    Push a weighted Gibbs ensemble through the flow and compare observables.

    Samples are free-field draws weighted by e^{-V_N}; the pushforward keeps
    the weights. Means are compared by z-scores with the two standard errors
    combined, distributions of m_N and Re u_k by two-sample KS tests on a
    systematic resample. ``path="gauged"`` evolves the gauged flow and undoes
    the gauge. With ``refine`` the run is repeated at dt/2.

    Raises:
        DegenerateEnsembleException: If the effective sample size falls below
            settings.ess_abort_fraction * count
    """
    ctx = make_context(r, N)
    dt = dt or settings.dt_for(N)
    ensemble = sample_gibbs_importance(N, r, count, seed, ctx=ctx, workers=workers)
    if ensemble.ess < settings.ess_abort_fraction * count:
        raise DegenerateEnsembleException(
            f"effective sample size {ensemble.ess:.1f} below {settings.ess_abort_fraction:g} x {count}"
        )
    after = _evolve_stack(ensemble, ctx, t, dt, path, nonlinear, workers)
    comparisons, ks, violation = _compare(ensemble, after, ctx, seed)
    max_z = max(abs(c.z) for c in comparisons)
    min_p = min((k.pvalue for k in ks), default=1.0)

    refinement: Dict[str, float] = {}
    if refine and t != 0.0:
        half = _evolve_stack(ensemble, ctx, t, dt / 2.0, path, nonlinear, workers)
        comparisons_half, _, violation_half = _compare(ensemble, half, ctx, seed)
        refinement = {
            "max_abs_z": max_z,
            "max_abs_z_half": max(abs(c.z) for c in comparisons_half),
            "violation": violation,
            "violation_half": violation_half,
            "violation_ratio": violation / violation_half if violation_half > 0 else math.inf,
        }

    passed = max_z <= settings.z_threshold and min_p > settings.ks_pvalue_threshold
    logger.info("invariance N=%d r=%d t=%g: max|z|=%.2f min p=%.3g passed=%s", N, r, t, max_z, min_p, passed)
    return InvarianceReport(
        N=N, r=r, t=t, count=count, seed=seed, dt=dt, ess=ensemble.ess, path=path, nonlinear=nonlinear,
        comparisons=comparisons, ks=ks, max_abs_z=max_z, min_ks_pvalue=min_p,
        hamiltonian_violation=violation, refinement=refinement, passed=passed,
    )


def frame_norms(frames: np.ndarray, s: float) -> np.ndarray:
    """H^s norm of every frame of a (times, 2K+1, 2K+1) stack."""
    K = (frames.shape[-1] - 1) // 2
    weights = bracket(K) ** (2.0 * s)
    return np.sqrt(np.sum(weights * np.abs(frames) ** 2, axis=(-2, -1)))


def _padded_frames(traj: Trajectory, cutoff: int) -> np.ndarray:
    return np.stack([traj.state(i).resized(cutoff) for i in range(len(traj.times))])


def trajectory_distance(a: Trajectory, b: Trajectory, s: float = 0.0) -> float:
    """sup over the shared grid of the H^s distance between two trajectories."""
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ValueError("trajectories live on different time grids")
    cutoff = max(a.cutoff, b.cutoff)
    return float(np.max(frame_norms(_padded_frames(a, cutoff) - _padded_frames(b, cutoff), s)))


def _ladder(
    f: SpectralField, cutoffs: Sequence[int], r: int, grid: TimeGrid, gauged: bool
) -> Dict[int, Trajectory]:
    return {N: evolve_on_grid(project(f, N), make_context(r, N), grid, gauged=gauged) for N in cutoffs}


def _symmetric_grid(tau: Optional[float], points: int) -> TimeGrid:
    return TimeGrid(half_width=tau or settings.tau, points=points)


def convergence_experiment(
    cutoffs: Sequence[int],
    r: int,
    seeds: Sequence[int],
    tau: Optional[float] = None,
    epsilon: Optional[float] = None,
    smoothing_s: float = 0.3,
    points: int = 16,
    gauged: bool = True,
    workers: Optional[int] = None,
) -> ConvergenceReport:
    """
    Distances sup_t ||v_N - v_{N'}||_{H^{-epsilon}} between consecutive
    cutoffs sharing one free-field draw per seed, and sup_t H^s norms of the
    nonlinear remainder v_N(t) - e^{it Lap} v_N(0) beside those of v_N.
    """
    cutoffs = sorted(cutoffs)
    epsilon = settings.default_epsilon if epsilon is None else epsilon
    grid = _symmetric_grid(tau, points)

    def run(seed: int) -> Tuple[List[DistanceRow], List[SmoothingRow]]:
        f = sample_gff(cutoffs[-1], seed).field
        trajs = _ladder(f, cutoffs, r, grid, gauged)
        distances = [
            DistanceRow(seed=seed, N=a, N_next=b, distance=trajectory_distance(trajs[a], trajs[b], -epsilon))
            for a, b in zip(cutoffs, cutoffs[1:])
        ]
        smoothing = []
        for N, traj in trajs.items():
            K = half_width(N)
            ksq = wavenumber_table(K)[2]
            free = traj.frames[grid.zero_index][None] * np.exp(-1j * ksq[None] * grid.times[:, None, None])
            smoothing.append(SmoothingRow(
                seed=seed, N=N,
                remainder=float(np.max(frame_norms(traj.frames - free, smoothing_s))),
                solution=float(np.max(frame_norms(np.asarray(traj.frames), smoothing_s))),
            ))
        return distances, smoothing

    results = parallel_map(run, list(seeds), workers or settings.workers)
    distances = [row for part, _ in results for row in part]
    smoothing = [row for _, part in results for row in part]

    decay_slope = None
    if len(cutoffs) > 2:
        decay_slope = log_log_slope(
            cutoffs[:-1], [float(np.mean([d.distance for d in distances if d.N == N])) for N in cutoffs[:-1]]
        )
    remainder_slope = solution_slope = None
    if len(cutoffs) > 1:
        remainder_slope = log_log_slope(cutoffs, [float(np.mean([s.remainder for s in smoothing if s.N == N])) for N in cutoffs])
        solution_slope = log_log_slope(cutoffs, [float(np.mean([s.solution for s in smoothing if s.N == N])) for N in cutoffs])
    decay_ok = None if decay_slope is None or math.isnan(decay_slope) else decay_slope <= -0.05
    logger.info("convergence over %s: decay slope %s, remainder slope %s", cutoffs, decay_slope, remainder_slope)
    return ConvergenceReport(
        cutoffs=list(cutoffs), r=r, tau=grid.half_width, epsilon=epsilon, smoothing_s=smoothing_s,
        seeds=list(seeds), distances=distances, smoothing=smoothing, decay_slope=decay_slope,
        decay_ok=decay_ok, remainder_slope=remainder_slope, solution_slope=solution_slope,
    )


def perturbation_direction(N: int, seed: int) -> np.ndarray:
    """Unit L^2 coefficient array supported in <k> <= N, from an independent stream."""
    g = gaussian_coefficients(N, seed, 0, stream=PERTURBATION_STREAM)
    return g / np.sqrt(np.sum(np.abs(g) ** 2))


def stability_experiment(
    cutoffs: Sequence[int],
    r: int,
    amplitude: float = 1.0,
    tau: Optional[float] = None,
    seeds: Sequence[int] = (0,),
    gamma: Optional[float] = None,
    points: int = 16,
    gauged: bool = True,
    workers: Optional[int] = None,
) -> StabilityReport:
    """
    Evolve v_N and w = v_N + A N^{-1+gamma} e from t = 0 over [-tau, tau] and
    report the growth of ||w - v_N||_{L^2}; the growth is fitted against log log N.
    """
    grid = _symmetric_grid(tau, points)

    def run(task: Tuple[int, int]) -> StabilityRow:
        N, seed = task
        ctx = make_context(r, N)
        g = ctx.params.gamma if gamma is None else gamma
        v0 = project(sample_gff(N, seed).field, N)
        size = amplitude * N ** (-1.0 + g)
        w0 = SpectralField.from_coeffs(N, v0.coeffs + size * perturbation_direction(N, seed))
        v = evolve_on_grid(v0, ctx, grid, gauged=gauged)
        w = evolve_on_grid(w0, ctx, grid, gauged=gauged)
        distance = frame_norms(np.asarray(w.frames) - np.asarray(v.frames), 0.0)
        initial = float(distance[grid.zero_index])
        largest = float(np.max(distance))
        return StabilityRow(
            seed=seed, N=N, amplitude=amplitude, initial_distance=initial, max_distance=largest,
            final_distance=float(distance[-1]), growth=largest / initial if initial > 0 else 0.0,
        )

    tasks = [(N, seed) for N in sorted(cutoffs) for seed in seeds]
    rows = parallel_map(run, tasks, workers or settings.workers)
    Ns = sorted({row.N for row in rows if row.N >= 2})
    slope = None
    if len(Ns) > 1:
        slope = log_log_slope([math.log(N) for N in Ns], [float(np.mean([x.growth for x in rows if x.N == N])) for N in Ns])
    used_gamma = make_context(r, min(cutoffs)).params.gamma if gamma is None else gamma
    return StabilityReport(
        r=r, tau=grid.half_width, gamma=used_gamma, rows=rows,
        max_growth=max((row.growth for row in rows), default=0.0), growth_slope_in_log_N=slope,
    )


def projection_defect(
    cutoffs: Sequence[int],
    r: int,
    seeds: Sequence[int],
    tau: Optional[float] = None,
    points: int = 16,
    gauged: bool = True,
) -> List[ProjectionRow]:
    """sup_t ||v_N - Pi_N v_{N'}||_{L^2} for consecutive cutoffs on one draw per seed."""
    cutoffs = sorted(cutoffs)
    grid = _symmetric_grid(tau, points)
    rows = []
    for seed in seeds:
        trajs = _ladder(sample_gff(cutoffs[-1], seed).field, cutoffs, r, grid, gauged)
        for a, b in zip(cutoffs, cutoffs[1:]):
            K = half_width(a)
            projected = _padded_frames(trajs[b], a) * shell_mask(K, a)
            defect = float(np.max(frame_norms(np.asarray(trajs[a].frames) - projected, 0.0)))
            rows.append(ProjectionRow(seed=seed, N=a, N_next=b, defect=defect))
    return rows


def counting_suite(
    count: int,
    seed: int,
    which: SetName = "S1",
    plus: bool = False,
    n: int = 3,
    max_size: int = 8,
    p: int = 0,
    weighted: bool = False,
    workers: Optional[int] = None,
) -> Tuple[List[CountResult], Dict[str, float]]:
    """
    Count random instances and fit the batch constant max(count / rhs).

    The summary also records the largest gap between the counts with and
    without pairings, which is never negative.
    """
    instances = random_instances(count, seed, n=n, max_size=max_size, which=which, p=p, plus=plus)
    results = counting_batch(instances, which, plus, weighted=weighted, workers=workers)
    gaps = [count_S123(inst, which, plus, exclude_pairings=False) - res.count for inst, res in zip(instances, results)]
    summary = {
        "instances": float(len(results)),
        "constant": max((r.ratio for r in results), default=0.0),
        "min_pairing_gap": float(min(gaps, default=0)),
        "max_pairing_gap": float(max(gaps, default=0)),
    }
    return results, summary


def divisor_crosscheck(count: int, seed: int, limit: int = 10 ** 5, gaussian_limit: int = 300) -> List[Dict[str, object]]:
    """Factorization-based divisor lists against trial division, in Z and Z[i]."""
    rng = np.random.default_rng(seed)
    rows: List[Dict[str, object]] = []
    for _ in range(count):
        m = int(rng.integers(1, limit + 1)) * int(rng.choice([-1, 1]))
        fast, slow = integer_divisors(m), naive_integer_divisors(m)
        rows.append({"ring": "Z", "m": str(m), "divisors": len(fast), "agree": fast == slow})
        z = (int(rng.integers(-gaussian_limit, gaussian_limit + 1)), int(rng.integers(-gaussian_limit, gaussian_limit + 1)))
        if z == (0, 0):
            z = (1, 1)
        fast_g, slow_g = gaussian_divisors(z), naive_gaussian_divisors(z)
        rows.append({"ring": "Z[i]", "m": f"{z[0]}{z[1]:+d}i", "divisors": len(fast_g), "agree": fast_g == slow_g})
    return rows


def deviation_suite(
    seed: int,
    n_max: int = 3,
    d_max: int = 3,
    support_size: int = 4,
    trials: Optional[int] = None,
    workers: Optional[int] = None,
) -> DeviationSuiteReport:
    """
    Moment domination E|F|^{2d} <= E|G|^{2d} exactly, E|G|^2 / M against
    n! 2^n, the tail shape, and E|F|^2 against Monte Carlo within 3 standard errors.
    """
    trials = trials or settings.tail_trials
    domination: List[DeviationSuiteRow] = []
    isometry: Dict[int, float] = {}
    limits: Dict[int, float] = {}
    tails: List[Dict[str, Optional[float]]] = []
    monte_carlo: List[Dict[str, float]] = []
    for n in range(1, n_max + 1):
        expr = random_expression(n, support_size, seed + n)
        for d in range(1, d_max + 1):
            if 2 * n * d > settings.isserlis_degree_budget:
                continue
            F, G = moment_domination(expr, d)
            domination.append(DeviationSuiteRow(n=n, d=d, moment_F=F, moment_G=G, dominated=F <= G * (1.0 + 1e-9) + 1e-12))
        isometry[n] = isometry_ratio(expr)
        limits[n] = float(math.factorial(n) * 2 ** n)
        tail = tail_check(expr, trials=trials, seed=seed + 100 + n, workers=workers)
        tails.append({
            "n": float(n),
            "slope": tail.slope,
            "expected": tail.expected_slope,
            "slope_ok": None if tail.slope_ok is None else float(tail.slope_ok),
            "exceedance_at_3": tail.exceedance[tail.B.index(3.0)] if 3.0 in tail.B else None,
        })
        values = sample_F(expr, trials, seed + 200 + n, workers) ** 2
        exact = moment(expr, 1)
        se = float(np.std(values, ddof=1) / math.sqrt(trials))
        monte_carlo.append({"n": float(n), "exact": exact, "estimate": float(np.mean(values)), "se": se,
                            "z": _z_score(float(np.mean(values)) - exact, se)})
    passed = (
        all(row.dominated for row in domination)
        and all(isometry[n] <= limits[n] for n in isometry)
        and all(abs(row["z"]) <= 3.0 for row in monte_carlo)
        and all(t["slope_ok"] != 0.0 for t in tails)
    )
    return DeviationSuiteReport(
        domination=domination, isometry=isometry, isometry_limit=limits, tails=tails,
        monte_carlo=monte_carlo, passed=passed,
    )
