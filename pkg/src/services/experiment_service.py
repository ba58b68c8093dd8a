import json
import logging
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from src import __version__
from src.config import settings
from src.config.settings import Settings
from src.models.counting_models import CountingInstance
from src.models.dynamics_models import TimeGrid
from src.models.run_models import ObservableTable, ReplayReport, RunManifest, RunResult
from src.services.averaging_operators import apriori_scan, decompose, default_grid
from src.services.experiments import (
    convergence_experiment,
    counting_suite,
    deviation_suite,
    divisor_crosscheck,
    invariance_experiment,
    observables,
    projection_defect,
    stability_experiment,
)
from src.services.gaussian_deviation import load_expressions, moment_domination, tail_check
from src.services.gibbs_measures import sample_gff, sample_gibbs_importance, sample_gibbs_pcn, weighted_mean_and_se
from src.services.lattice_counting import counting_batch
from src.services.spectral_core import gradient_energy, mass
from src.services.truncated_dynamics import conservation_report, default_config, evolve
from src.services.wick_calculus import make_context
from src.utils.exceptions import ConfigException, WickLabException
from src.utils.run_store import RunStore

logger = logging.getLogger(__name__)

# Fields that never change a run's outputs.
VOLATILE_SETTINGS = {"project_root", "out_dir", "workers", "fft_workers", "log_level"}

KINDS = (
    "sample-gff",
    "sample-gibbs",
    "evolve",
    "invariance",
    "convergence",
    "stability",
    "rao-scan",
    "counting",
    "deviation",
)


def settings_snapshot() -> Dict[str, Any]:
    """The settings that can influence outputs, JSON-ready."""
    return settings.model_dump(mode="json", exclude=VOLATILE_SETTINGS)


def apply_settings(values: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate and assign settings fields in place.

    Returns:
        The previous values of the assigned fields

    Raises:
        ConfigException: On unknown keys or values that fail validation
    """
    unknown = sorted(set(values) - set(Settings.model_fields))
    if unknown:
        raise ConfigException(f"unknown settings: {', '.join(unknown)}")
    try:
        validated = Settings(**{**settings.model_dump(), **values})
    except ValidationError as e:
        raise ConfigException(f"invalid settings: {e}") from e
    previous = {key: getattr(settings, key) for key in values}
    for key in values:
        setattr(settings, key, getattr(validated, key))
    return previous


@contextmanager
def overridden_settings(values: Dict[str, Any]) -> Iterator[None]:
    previous = apply_settings({k: v for k, v in values.items() if k not in VOLATILE_SETTINGS})
    try:
        yield
    finally:
        for key, value in previous.items():
            setattr(settings, key, value)


def _cell(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def _rows(items: Sequence[BaseModel]) -> List[Dict[str, Any]]:
    return [{k: _cell(v) for k, v in item.model_dump().items()} for item in items]


def _finite(values: Dict[str, Any]) -> Dict[str, float]:
    """Drop None entries and cast booleans so a summary block is all floats."""
    return {k: float(v) for k, v in values.items() if v is not None}


class ExperimentService:
    """Runs laboratory experiments and persists every run with a replayable manifest."""

    def __init__(self, store: Optional[RunStore] = None, workers: Optional[int] = None):
        """
        Initialize the experiment service.

        Args:
            store: Run store, defaults to one rooted at settings.runs_path
            workers: Worker count; outputs never depend on it
        """
        self.store = store or RunStore()
        self.workers = workers or settings.workers
        self._replay_of: Optional[str] = None

    def _record(
        self, kind: str, seed: int, params: Dict[str, Any], body: Callable[[str], Dict[str, Any]]
    ) -> RunResult:
        """
        Create a run directory, execute ``body`` in it and write the manifest.

        A failing body still leaves a manifest with status "failed" and the
        error message before the exception propagates.
        """
        run_id = self.store.create_run(kind, seed)
        manifest = RunManifest(
            run_id=run_id,
            kind=kind,
            params=params,
            seed=seed,
            code_version=__version__,
            settings=settings_snapshot(),
            started_at=datetime.now(),
            replay_of=self._replay_of,
        )
        self.store.write_manifest(manifest)
        logger.info("run %s started", run_id)
        start = time.perf_counter()
        try:
            summary = body(run_id)
        except (WickLabException, ValueError) as e:
            failed = manifest.model_copy(update={
                "status": "failed",
                "message": str(e),
                "wall_clock": time.perf_counter() - start,
                "outputs": self.store.inventory(run_id),
            })
            self.store.write_manifest(failed)
            logger.error("run %s failed: %s", run_id, e)
            raise
        manifest = manifest.model_copy(update={
            "status": "ok",
            "wall_clock": time.perf_counter() - start,
            "outputs": self.store.inventory(run_id),
        })
        self.store.write_manifest(manifest)
        logger.info("run %s finished in %.1fs with %d outputs", run_id, manifest.wall_clock, len(manifest.outputs))
        return RunResult(manifest=manifest, summary=summary)

    def _write_report(self, run_id: str, report: BaseModel, name: str = "report") -> Path:
        path = self.store.run_path(run_id) / f"{name}.json"
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return path

    def sample_gff(self, N: int, seed: int, count: int = 1) -> RunResult:
        """Draw ``count`` free-field samples at cutoff N; every draw is stored as a field file."""
        params = {"N": N, "count": count}

        def body(run_id: str) -> Dict[str, Any]:
            rows = []
            for index in range(count):
                f = sample_gff(N, seed, index).field
                self.store.write_field(run_id, f"gff_{index:04d}", f, {"seed": seed, "index": index})
                rows.append({"index": index, "mass": mass(f), "gradient_energy": gradient_energy(f)})
            table = ObservableTable.from_rows("samples", rows)
            masses = np.asarray(table.columns["mass"], dtype=float)
            m, se = weighted_mean_and_se(masses)
            table.summary = {"mass": {"mean": m, "se": se}}
            self.store.write_table(run_id, table)
            return {"samples": count, "mean mass": m, "mass se": se}

        return self._record("sample-gff", seed, params, body)

    def sample_gibbs(
        self,
        N: int,
        r: int,
        count: int,
        seed: int,
        sampler: str = "importance",
        step_size: float = 0.5,
        chains: int = 1,
        save_fields: int = 0,
    ) -> RunResult:
        """
        Sample the truncated Gibbs measure by importance weighting or pCN.

        For pCN ``count`` is the number of steps per chain.
        """
        params = {"N": N, "r": r, "count": count, "sampler": sampler, "step_size": step_size,
                  "chains": chains, "save_fields": save_fields}

        def body(run_id: str) -> Dict[str, Any]:
            ctx = make_context(r, N)
            if sampler == "importance":
                ensemble = sample_gibbs_importance(N, r, count, seed, ctx=ctx, workers=self.workers)
            elif sampler == "pcn":
                ensemble = sample_gibbs_pcn(N, r, count, step_size, seed, chains=chains, ctx=ctx, workers=self.workers)
            else:
                raise ConfigException(f"unknown sampler {sampler!r}, expected 'importance' or 'pcn'")
            values = observables(ensemble.coefficient_stack, ctx)
            columns: Dict[str, List[Any]] = {
                "index": list(range(ensemble.count)),
                "log_weight": [float(w) for w in ensemble.log_weights],
            }
            summary: Dict[str, Dict[str, float]] = {}
            for name, column in values.items():
                columns[name] = [float(v) for v in column]
                m, se = weighted_mean_and_se(column, ensemble.log_weights)
                summary[name] = {"mean": m, "se": se}
            summary["ensemble"] = _finite({
                "ess": ensemble.ess,
                "log_partition": ensemble.log_partition,
                "acceptance_rate": ensemble.acceptance_rate,
            })
            self.store.write_table(run_id, ObservableTable(name="samples", columns=columns, summary=summary))
            for index in range(min(save_fields, ensemble.count)):
                self.store.write_field(run_id, f"sample_{index:04d}", ensemble.samples[index], {"sampler": sampler})
            return {"samples": ensemble.count, **summary["ensemble"],
                    "mean H_N": summary["hamiltonian"]["mean"], "mean m_N": summary["mass"]["mean"]}

        return self._record("sample-gibbs", seed, params, body)

    def evolve(
        self,
        N: int,
        r: int,
        t: float,
        seed: int,
        dt: Optional[float] = None,
        scheme: str = "rk4-ip",
        gauged: bool = False,
        nonlinear: bool = True,
        save_stride: int = 10,
    ) -> RunResult:
        """Evolve one free-field draw and store the trajectory with its conservation log."""
        params = {"N": N, "r": r, "t": t, "dt": dt, "scheme": scheme, "gauged": gauged,
                  "nonlinear": nonlinear, "save_stride": save_stride}

        def body(run_id: str) -> Dict[str, Any]:
            ctx = make_context(r, N)
            overrides = {"scheme": scheme, "nonlinear": nonlinear, "save_stride": save_stride}
            if dt is not None:
                overrides["dt"] = dt
            cfg = default_config(N, t, **overrides)
            traj = evolve(sample_gff(N, seed).field, ctx, cfg, gauged=gauged)
            self.store.write_trajectory(run_id, "trajectory", traj, {"seed": seed, "scheme": scheme})
            report = conservation_report(traj)
            table = ObservableTable.from_rows("conservation", _rows(report.rows))
            table.summary = {"drift": {"mass": report.max_mass_drift, "hamiltonian": report.max_hamiltonian_drift}}
            self.store.write_table(run_id, table)
            return {"frames": len(traj.times), "dt": cfg.dt, "max mass drift": report.max_mass_drift,
                    "max H_N drift": report.max_hamiltonian_drift}

        return self._record("evolve", seed, params, body)

    def invariance(
        self,
        N: int,
        r: int,
        t: float,
        count: int,
        seed: int,
        dt: Optional[float] = None,
        path: str = "direct",
        nonlinear: bool = True,
        refine: bool = False,
    ) -> RunResult:
        params = {"N": N, "r": r, "t": t, "count": count, "dt": dt, "path": path,
                  "nonlinear": nonlinear, "refine": refine}

        def body(run_id: str) -> Dict[str, Any]:
            report = invariance_experiment(N, r, t, count, seed, dt=dt, path=path, nonlinear=nonlinear,
                                           refine=refine, workers=self.workers)
            verdict = _finite({"max_abs_z": report.max_abs_z, "min_ks_pvalue": report.min_ks_pvalue,
                               "ess": report.ess, "hamiltonian_violation": report.hamiltonian_violation,
                               "passed": report.passed})
            table = ObservableTable.from_rows("observables", _rows(report.comparisons))
            table.summary = {"verdict": verdict}
            if report.refinement:
                table.summary["refinement"] = dict(report.refinement)
            self.store.write_table(run_id, table)
            self.store.write_table(run_id, ObservableTable.from_rows("ks", _rows(report.ks)))
            self._write_report(run_id, report)
            return {**verdict, **{f"refinement {k}": v for k, v in report.refinement.items()}}

        return self._record("invariance", seed, params, body)

    def convergence(
        self,
        cutoffs: Sequence[int],
        r: int,
        seed: int,
        seeds: int = 10,
        tau: Optional[float] = None,
        epsilon: Optional[float] = None,
        smoothing_s: float = 0.3,
        points: int = 16,
        gauged: bool = True,
    ) -> RunResult:
        """Truncation ladder on ``seeds`` consecutive seeds starting at ``seed``."""
        params = {"cutoffs": list(cutoffs), "r": r, "seeds": seeds, "tau": tau, "epsilon": epsilon,
                  "smoothing_s": smoothing_s, "points": points, "gauged": gauged}

        def body(run_id: str) -> Dict[str, Any]:
            report = convergence_experiment(
                cutoffs, r, [seed + i for i in range(seeds)], tau=tau, epsilon=epsilon,
                smoothing_s=smoothing_s, points=points, gauged=gauged, workers=self.workers,
            )
            fits = _finite({"decay_slope": report.decay_slope, "decay_ok": report.decay_ok,
                            "remainder_slope": report.remainder_slope, "solution_slope": report.solution_slope})
            distances = ObservableTable.from_rows("distances", _rows(report.distances))
            distances.summary = {"fits": fits}
            self.store.write_table(run_id, distances)
            self.store.write_table(run_id, ObservableTable.from_rows("smoothing", _rows(report.smoothing)))
            self._write_report(run_id, report)
            return fits

        return self._record("convergence", seed, params, body)

    def stability(
        self,
        cutoffs: Sequence[int],
        r: int,
        seed: int,
        amplitude: float = 1.0,
        seeds: int = 1,
        tau: Optional[float] = None,
        gamma: Optional[float] = None,
        points: int = 16,
        gauged: bool = True,
    ) -> RunResult:
        """Perturbation growth on the ladder, with the projection defect between consecutive cutoffs."""
        params = {"cutoffs": list(cutoffs), "r": r, "amplitude": amplitude, "seeds": seeds, "tau": tau,
                  "gamma": gamma, "points": points, "gauged": gauged}

        def body(run_id: str) -> Dict[str, Any]:
            seed_list = [seed + i for i in range(seeds)]
            report = stability_experiment(cutoffs, r, amplitude=amplitude, tau=tau, seeds=seed_list,
                                          gamma=gamma, points=points, gauged=gauged, workers=self.workers)
            fits = _finite({"max_growth": report.max_growth, "gamma": report.gamma,
                            "growth_slope_in_log_N": report.growth_slope_in_log_N})
            growth = ObservableTable.from_rows("growth", _rows(report.rows))
            growth.summary = {"fits": fits}
            self.store.write_table(run_id, growth)
            if len(cutoffs) > 1:
                defects = projection_defect(cutoffs, r, seed_list, tau=tau, points=points, gauged=gauged)
                self.store.write_table(run_id, ObservableTable.from_rows("projection", _rows(defects)))
            self._write_report(run_id, report)
            return fits

        return self._record("stability", seed, params, body)

    def rao_scan(
        self,
        N_max: int,
        r: int,
        seed: int,
        seeds: int = 1,
        N_min: int = 2,
        delta: Optional[float] = None,
        half_width: Optional[float] = None,
        points: Optional[int] = None,
        store_kernels: bool = False,
    ) -> RunResult:
        """
        A-priori scan of the averaging-operator kernels and the remainder.

        With ``store_kernels`` the h^{N,L} kernels of the first seed at N_max
        are written as kernel files.
        """
        params = {"N_max": N_max, "r": r, "seeds": seeds, "N_min": N_min, "delta": delta,
                  "half_width": half_width, "points": points, "store_kernels": store_kernels}

        def body(run_id: str) -> Dict[str, Any]:
            base = default_grid()
            grid = TimeGrid(half_width=half_width or base.half_width, points=points or base.points)
            report = apriori_scan(N_max, r, [seed + i for i in range(seeds)], delta=delta, grid=grid, N_min=N_min)
            table = ObservableTable.from_rows("scan", _rows(report.rows))
            table.summary = {"fits": dict(report.fits)}
            self.store.write_table(run_id, table)
            if store_kernels:
                parts = decompose(N_max, sample_gff(N_max, seed).field, make_context(r, N_max, delta=delta), grid,
                                  build_kernels=True)
                for L, kernel in sorted(parts.h.items()):
                    self.store.write_kernel(run_id, f"h_N{N_max}_L{L:g}", kernel, {"N": N_max, "L": L})
            return {**report.fits, "rows": len(report.rows)}

        return self._record("rao-scan", seed, params, body)

    def counting(
        self,
        seed: int,
        which: str = "S1",
        plus: bool = False,
        count: int = 100,
        n: int = 3,
        max_size: int = 8,
        p: int = 0,
        weighted: bool = False,
        instances: Optional[List[Dict[str, Any]]] = None,
        divisor_trials: int = 0,
    ) -> RunResult:
        """
        Exact lattice counts against their bounds.

        ``instances`` (CountingInstance fields) replace the random batch; the
        manifest keeps them inline so a replay does not depend on the input file.
        """
        params = {"which": which, "plus": plus, "count": count, "n": n, "max_size": max_size, "p": p,
                  "weighted": weighted, "instances": instances, "divisor_trials": divisor_trials}

        def body(run_id: str) -> Dict[str, Any]:
            if instances is not None:
                try:
                    batch = [CountingInstance.model_validate(item) for item in instances]
                except ValidationError as e:
                    raise ConfigException(f"invalid counting instance: {e}") from e
                results = counting_batch(batch, which, plus, weighted=weighted, workers=self.workers)
                summary = {"instances": float(len(results)), "constant": max((x.ratio for x in results), default=0.0)}
            else:
                results, summary = counting_suite(count, seed, which, plus, n=n, max_size=max_size, p=p,
                                                  weighted=weighted, workers=self.workers)
            table = ObservableTable.from_rows("counts", _rows(results))
            table.summary = {"batch": summary}
            self.store.write_table(run_id, table)
            if divisor_trials > 0:
                rows = divisor_crosscheck(divisor_trials, seed)
                divisors = ObservableTable.from_rows("divisors", rows)
                divisors.summary = {"agreement": {"all": float(all(row["agree"] for row in rows))}}
                self.store.write_table(run_id, divisors)
                summary = {**summary, "divisors agree": float(all(row["agree"] for row in rows))}
            return summary

        return self._record("counting", seed, params, body)

    def deviation(
        self,
        seed: int,
        n_max: int = 3,
        d_max: int = 3,
        support_size: int = 4,
        trials: Optional[int] = None,
        expressions: Optional[str] = None,
    ) -> RunResult:
        """Gaussian deviation suite; ``expressions`` adds tail and moment checks of expressions read from JSON."""
        params = {"n_max": n_max, "d_max": d_max, "support_size": support_size, "trials": trials,
                  "expressions": expressions}

        def body(run_id: str) -> Dict[str, Any]:
            report = deviation_suite(seed, n_max=n_max, d_max=d_max, support_size=support_size, trials=trials,
                                     workers=self.workers)
            domination = ObservableTable.from_rows("domination", _rows(report.domination))
            domination.summary = {
                "isometry": {str(n): ratio for n, ratio in report.isometry.items()},
                "verdict": {"passed": float(report.passed)},
            }
            self.store.write_table(run_id, domination)
            self.store.write_table(run_id, ObservableTable.from_rows("tails", report.tails))
            self.store.write_table(run_id, ObservableTable.from_rows("monte_carlo", report.monte_carlo))
            if expressions:
                rows = []
                for index, expr in enumerate(load_expressions(Path(expressions))):
                    tail = tail_check(expr, trials=trials, seed=seed + 1000 + index, workers=self.workers)
                    F, G = moment_domination(expr, 1)
                    rows.append({"index": index, "n": expr.n, "size": expr.size, "M": tail.M, "slope": tail.slope,
                                 "expected_slope": tail.expected_slope, "moment_F": F, "moment_G": G,
                                 "certainty_failures": tail.certainty_failures})
                self.store.write_table(run_id, ObservableTable.from_rows("expressions", rows))
            self._write_report(run_id, report)
            return {"passed": report.passed, "rows": len(report.domination),
                    **{f"isometry n={n}": ratio for n, ratio in report.isometry.items()}}

        return self._record("deviation", seed, params, body)

    def run(self, kind: str, seed: int, **params: Any) -> RunResult:
        """Dispatch a run by its kind name ("rao-scan" runs ``rao_scan``)."""
        if kind not in KINDS:
            raise ConfigException(f"unknown experiment kind {kind!r}")
        return getattr(self, kind.replace("-", "_"))(seed=seed, **params)

    def replay(self, run_id: str) -> ReplayReport:
        """
        Re-execute a stored run under its settings snapshot and compare output digests.

        Returns:
            ReplayReport; ``identical`` is True when every output is bit-identical
        """
        manifest = self.store.read_manifest(run_id)
        if manifest.code_version != __version__:
            logger.warning("replaying %s made by version %s with %s", run_id, manifest.code_version, __version__)
        self._replay_of = run_id
        try:
            with overridden_settings(manifest.settings):
                replayed = self.run(manifest.kind, manifest.seed, **manifest.params).manifest
        finally:
            self._replay_of = None
        before, after = manifest.digests(), replayed.digests()
        report = ReplayReport(
            run_id=run_id,
            replay_id=replayed.run_id,
            matches={name: after.get(name) == digest for name, digest in before.items() if name in after},
            missing=sorted(set(before) - set(after)),
            extra=sorted(set(after) - set(before)),
        )
        logger.info("replay of %s as %s: identical=%s", run_id, replayed.run_id, report.identical)
        return report


def load_instances(path: Path) -> List[Dict[str, Any]]:
    """Counting instances from a JSON file holding one object or a list of objects."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigException(f"cannot read instances from {path}: {e}") from e
    return data if isinstance(data, list) else [data]
