import csv
import hashlib
import json
import logging
import shutil
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.config import settings
from src.models.dynamics_models import Trajectory
from src.models.operator_models import KernelMatrix
from src.models.run_models import InventoryEntry, ObservableTable, RunManifest
from src.models.spectral_models import SpectralField
from src.utils.exceptions import RunNotFoundException
from src.utils.field_io import read_field, read_trajectory, write_field, write_kernel, write_trajectory

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class RunStore:
    """Stores run outputs (manifest, CSV tables, binary fields) in one directory per run."""

    def __init__(self, root: Optional[Path] = None):
        """
        Initialize the run store.

        Args:
            root: Directory holding the run directories
        """
        self.root = Path(root) if root is not None else settings.runs_path
        self.root.mkdir(parents=True, exist_ok=True)

    def run_path(self, run_id: str) -> Path:
        """Directory of a run; raises RunNotFoundException when it does not exist."""
        safe = run_id.replace("/", "_").replace("\\", "_").replace("..", "_")
        path = self.root / safe
        if not path.is_dir():
            raise RunNotFoundException(f"Run not found: {run_id}")
        return path

    def create_run(self, kind: str, seed: int) -> str:
        """
        Create an empty run directory.

        Returns:
            The new run id, ``<timestamp>-<kind>-s<seed>``
        """
        stamp = datetime.now().strftime("%Y%m%dT%H%M%S%f")
        run_id = f"{stamp}-{kind}-s{seed}"
        suffix = 1
        while (self.root / run_id).exists():
            run_id = f"{stamp}-{kind}-s{seed}-{suffix}"
            suffix += 1
        (self.root / run_id).mkdir(parents=True)
        logger.debug("created run %s", run_id)
        return run_id

    def write_manifest(self, manifest: RunManifest) -> Path:
        path = self.run_path(manifest.run_id) / MANIFEST
        path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        return path

    def read_manifest(self, run_id: str) -> RunManifest:
        path = self.run_path(run_id) / MANIFEST
        if not path.exists():
            raise RunNotFoundException(f"Run {run_id} has no manifest")
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))

    def inventory(self, run_id: str) -> List[InventoryEntry]:
        """Digest every output file of a run, manifest excluded, in name order."""
        base = self.run_path(run_id)
        entries = []
        for path in sorted(p for p in base.rglob("*") if p.is_file() and p.name != MANIFEST):
            relative = path.relative_to(base).as_posix()
            entries.append(InventoryEntry(name=relative, path=relative, sha256=file_digest(path), bytes=path.stat().st_size))
        return entries

    def write_table(self, run_id: str, table: Union[ObservableTable, List[Dict[str, Any]]], name: Optional[str] = None) -> Path:
        """Write a table as ``<name>.csv``; summaries go to ``<name>.summary.json``."""
        if not isinstance(table, ObservableTable):
            table = ObservableTable.from_rows(name or "table", table)
        name = name or table.name
        path = self.run_path(run_id) / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(list(table.columns))
            for row in table.rows():
                writer.writerow([_format_cell(v) for v in row.values()])
        if table.summary:
            summary_path = self.run_path(run_id) / f"{name}.summary.json"
            summary_path.write_text(json.dumps(table.summary, indent=2, sort_keys=True), encoding="utf-8")
        return path

    def read_table(self, run_id: str, name: str) -> List[Dict[str, str]]:
        path = self.run_path(run_id) / f"{name}.csv"
        if not path.exists():
            raise RunNotFoundException(f"Run {run_id} has no table {name}")
        with open(path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))

    def list_tables(self, run_id: str) -> List[str]:
        return sorted(p.stem for p in self.run_path(run_id).glob("*.csv"))

    def write_field(self, run_id: str, name: str, u: SpectralField, meta: Optional[Dict[str, Any]] = None) -> Path:
        return write_field(self.run_path(run_id) / f"{name}.wnls", u, meta)

    def read_field(self, run_id: str, name: str) -> SpectralField:
        return read_field(self.run_path(run_id) / f"{name}.wnls")

    def write_trajectory(self, run_id: str, name: str, traj: Trajectory, meta: Optional[Dict[str, Any]] = None) -> Path:
        return write_trajectory(self.run_path(run_id) / f"{name}.wnls", traj, meta)

    def read_trajectory(self, run_id: str, name: str) -> Trajectory:
        return read_trajectory(self.run_path(run_id) / f"{name}.wnls")

    def write_kernel(self, run_id: str, name: str, kernel: KernelMatrix, meta: Optional[Dict[str, Any]] = None) -> Path:
        return write_kernel(self.run_path(run_id) / f"{name}.wnls", kernel, meta)

    def list_runs(self) -> List[RunManifest]:
        """Manifests of every run with a readable manifest, newest first."""
        manifests = []
        for path in sorted(self.root.iterdir(), reverse=True):
            if not (path / MANIFEST).exists():
                continue
            try:
                manifests.append(RunManifest.model_validate_json((path / MANIFEST).read_text(encoding="utf-8")))
            except ValueError as e:
                logger.warning("skipping unreadable manifest in %s: %s", path.name, e)
        return manifests

    def clear(self) -> int:
        """
        Delete every run directory.

        Returns:
            Number of runs deleted
        """
        count = 0
        for path in self.root.iterdir():
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
                count += 1
        return count


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


__all__ = ["RunStore", "file_digest"]
