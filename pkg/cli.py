"""
CLI interface for the Wick NLS Lab.
Every subcommand runs one experiment, writes its outputs and a manifest under
the output directory, and prints a summary.

Exit codes: 0 success, 1 other laboratory error, 2 usage or configuration
error, 3 numerical abort.
"""

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src import __version__
from src.services import ExperimentService
from src.services.experiment_service import apply_settings, load_instances
from src.models import ReplayReport, RunResult
from src.utils import (
    AliasingException,
    ConfigException,
    DegenerateEnsembleException,
    NumericalAbortException,
    PathDisagreementException,
    RunStore,
    WickLabException,
    configure_logging,
)

console = Console()

NUMERICAL_ABORTS = (
    NumericalAbortException,
    AliasingException,
    PathDisagreementException,
    DegenerateEnsembleException,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Wick-ordered NLS laboratory on the 2D torus")
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--out-dir", default=None, help="Run output directory (default: settings.out_dir)")
    parser.add_argument("--config", default=None, help="TOML file; [lab] sets settings, [<command>] sets flags")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads; outputs do not depend on it")
    parser.add_argument("--log-level", default=None, help="Logging level (default: settings.log_level)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-gff", help="Draw free-field samples and store them as field files")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--count", type=int, default=1)

    p = sub.add_parser("sample-gibbs", help="Sample the truncated Gibbs measure")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--count", type=int, default=1024, help="Samples, or steps per chain for pcn")
    p.add_argument("--sampler", choices=["importance", "pcn"], default="importance")
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--save-fields", type=int, default=0)

    p = sub.add_parser("evolve", help="Evolve one free-field draw and log conservation")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--scheme", choices=["rk4-ip", "strang"], default="rk4-ip")
    p.add_argument("--gauged", action="store_true")
    p.add_argument("--linear", action="store_true", help="Switch the nonlinearity off")
    p.add_argument("--save-stride", type=int, default=10)

    p = sub.add_parser("invariance", help="Gibbs measure invariance under the truncated flow")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--count", type=int, default=4096)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--path", choices=["direct", "gauged"], default="direct")
    p.add_argument("--linear", action="store_true")
    p.add_argument("--refine", action="store_true", help="Repeat at dt/2 and report the trend")

    p = sub.add_parser("convergence", help="Distances between consecutive truncations")
    p.add_argument("--cutoffs", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--seeds", type=int, default=10, help="Number of consecutive seeds from --seed")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--smoothing-s", type=float, default=0.3)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--ungauged", action="store_true")

    p = sub.add_parser("stability", help="Growth of a small perturbation along the cutoff ladder")
    p.add_argument("--cutoffs", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--ungauged", action="store_true")

    p = sub.add_parser("rao-scan", help="A-priori bounds of the random averaging operators")
    p.add_argument("--N-max", type=int, default=8)
    p.add_argument("--N-min", type=int, default=2)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--store-kernels", action="store_true")

    p = sub.add_parser("counting", help="Exact lattice counts against their bounds")
    p.add_argument("--instances", default=None, help="JSON file with counting instances")
    p.add_argument("--which", choices=["S1", "S2", "S3"], default="S1")
    p.add_argument("--plus", action="store_true")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--max-size", type=int, default=8)
    p.add_argument("--p", type=int, default=0)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--divisor-trials", type=int, default=0)

    p = sub.add_parser("deviation", help="Gaussian multilinear deviation suite")
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--support-size", type=int, default=4)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--expressions", default=None, help="JSON file with extra expressions")

    p = sub.add_parser("replay", help="Re-execute a stored run and compare output digests")
    p.add_argument("run_id")
    return parser


def load_config(path: str) -> Dict[str, Dict[str, Any]]:
    """Read a TOML config; every top-level entry must be a section."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigException(f"cannot read config {path}: {e}") from e
    loose = [key for key, value in data.items() if not isinstance(value, dict)]
    if loose:
        raise ConfigException(f"config keys outside a section: {', '.join(loose)}")
    return data


def apply_config(args: argparse.Namespace, config: Dict[str, Dict[str, Any]]) -> None:
    """Apply [lab] to settings and the section of the chosen command to its flags."""
    apply_settings(config.get("lab", {}))
    for key, value in config.get(args.command, {}).items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in ("command", "config"):
            raise ConfigException(f"unknown option {key!r} in section [{args.command}]")
        setattr(args, attr, value)


def _run(service: ExperimentService, args: argparse.Namespace) -> RunResult:
    common = {"seed": args.seed}
    if args.command == "sample-gff":
        return service.sample_gff(args.N, count=args.count, **common)
    if args.command == "sample-gibbs":
        return service.sample_gibbs(args.N, args.r, args.count, sampler=args.sampler, step_size=args.step_size,
                                    chains=args.chains, save_fields=args.save_fields, **common)
    if args.command == "evolve":
        return service.evolve(args.N, args.r, args.t, dt=args.dt, scheme=args.scheme, gauged=args.gauged,
                              nonlinear=not args.linear, save_stride=args.save_stride, **common)
    if args.command == "invariance":
        return service.invariance(args.N, args.r, args.t, args.count, dt=args.dt, path=args.path,
                                  nonlinear=not args.linear, refine=args.refine, **common)
    if args.command == "convergence":
        return service.convergence(args.cutoffs, args.r, seeds=args.seeds, tau=args.tau, epsilon=args.epsilon,
                                   smoothing_s=args.smoothing_s, points=args.points, gauged=not args.ungauged,
                                   **common)
    if args.command == "stability":
        return service.stability(args.cutoffs, args.r, amplitude=args.amplitude, seeds=args.seeds, tau=args.tau,
                                 gamma=args.gamma, points=args.points, gauged=not args.ungauged, **common)
    if args.command == "rao-scan":
        return service.rao_scan(args.N_max, args.r, seeds=args.seeds, N_min=args.N_min, delta=args.delta,
                                half_width=args.half_width, points=args.points, store_kernels=args.store_kernels,
                                **common)
    if args.command == "counting":
        instances = load_instances(Path(args.instances)) if args.instances else None
        return service.counting(which=args.which, plus=args.plus, count=args.count, n=args.n,
                                max_size=args.max_size, p=args.p, weighted=args.weighted, instances=instances,
                                divisor_trials=args.divisor_trials, **common)
    if args.command == "deviation":
        return service.deviation(n_max=args.n_max, d_max=args.d_max, support_size=args.support_size,
                                 trials=args.trials, expressions=args.expressions, **common)
    raise ConfigException(f"unknown command {args.command!r}")


def show_result(result: RunResult) -> None:
    """Display a run summary."""
    manifest = result.manifest
    table = Table(title=f"{manifest.kind} - {manifest.run_id}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    for key, value in result.summary.items():
        table.add_row(str(key), f"{value:.6g}" if isinstance(value, float) else str(value))
    table.add_row("Outputs", str(len(manifest.outputs)))
    table.add_row("Wall clock", f"{manifest.wall_clock:.2f} s")
    console.print(table)


def show_replay(report: ReplayReport) -> None:
    """Display a digest comparison."""
    table = Table(title=f"Replay of {report.run_id} as {report.replay_id}")
    table.add_column("Output", style="cyan")
    table.add_column("Identical", style="green")
    for name, same in report.matches.items():
        table.add_row(name, "yes" if same else "[red]no[/red]")
    for name in report.missing:
        table.add_row(name, "[red]missing[/red]")
    for name in report.extra:
        table.add_row(name, "[yellow]extra[/yellow]")
    console.print(table)
    verdict = "[green]bit-identical[/green]" if report.identical else "[red]outputs differ[/red]"
    console.print(Panel.fit(verdict, border_style="blue"))


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI interface; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        if args.config:
            apply_config(args, load_config(args.config))
        configure_logging(args.log_level)
        console.print(Panel.fit(
            f"[bold cyan]Wick NLS Lab[/bold cyan] {__version__}\n"
            f"{args.command} with seed {args.seed}",
            border_style="blue"
        ))
        store = RunStore(Path(args.out_dir)) if args.out_dir else RunStore()
        service = ExperimentService(store, workers=args.workers)
        if args.command == "replay":
            report = service.replay(args.run_id)
            show_replay(report)
            return 0 if report.identical else 1
        show_result(_run(service, args))
        return 0
    except (ConfigException, ValueError) as e:
        console.print(f"[red]Error: {e}[/red]")
        return 2
    except NUMERICAL_ABORTS as e:
        console.print(f"[red]Error: numerical abort: {e}[/red]")
        return 3
    except WickLabException as e:
        console.print(f"[red]Error: {e}[/red]")
        return 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user[/yellow]")
        sys.exit(130)
