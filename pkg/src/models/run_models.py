from datetime import datetime
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, model_validator

Cell = Union[float, int, str, bool, None]


class InventoryEntry(BaseModel):
    """One output file of a run."""

    name: str
    path: str = Field(..., description="Path relative to the run directory")
    sha256: str
    bytes: int = Field(..., ge=0)


class RunManifest(BaseModel):
    """
    Everything needed to replay a run bit for bit.

    Attributes:
        run_id: Directory name under the run store
        kind: Experiment or command name
        params: Physical and numerical parameters passed to the experiment
        seed: Master seed
        code_version: Package version that produced the outputs
        settings: Snapshot of the laboratory settings
        outputs: Output file inventory with digests
        started_at: Start time
        wall_clock: Elapsed seconds
        status: "running", "ok" or "failed"
        replay_of: Run this one re-executes, if any
    """

    run_id: str
    kind: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    code_version: str
    settings: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[InventoryEntry] = Field(default_factory=list)
    started_at: datetime
    wall_clock: Optional[float] = None
    status: str = "running"
    message: Optional[str] = None
    replay_of: Optional[str] = None

    def digests(self) -> Dict[str, str]:
        return {entry.name: entry.sha256 for entry in self.outputs}


class ObservableTable(BaseModel):
    """
    Named columns of equal length, written as CSV.

    ``summary`` maps an observable to statistics such as mean and standard
    error; standard errors come from independent samples only.
    """

    name: str
    columns: Dict[str, List[Cell]] = Field(default_factory=dict)
    summary: Dict[str, Dict[str, float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_lengths(self) -> "ObservableTable":
        lengths = {len(values) for values in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table {self.name!r} has columns of different lengths {sorted(lengths)}")
        return self

    @property
    def length(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @classmethod
    def from_rows(cls, name: str, rows: List[Dict[str, Cell]]) -> "ObservableTable":
        """Build from a list of row dicts; the first row fixes the column order."""
        if not rows:
            return cls(name=name)
        keys = list(rows[0].keys())
        for row in rows[1:]:
            keys.extend(k for k in row if k not in keys)
        return cls(name=name, columns={k: [row.get(k) for row in rows] for k in keys})

    def rows(self) -> List[Dict[str, Cell]]:
        keys = list(self.columns)
        return [{k: self.columns[k][i] for k in keys} for i in range(self.length)]


class RunResult(BaseModel):
    """A finished run: its manifest and the headline numbers shown to the user."""

    manifest: RunManifest
    summary: Dict[str, Any] = Field(default_factory=dict)


class ReplayReport(BaseModel):
    """Digest comparison between a run and its replay."""

    run_id: str
    replay_id: str
    matches: Dict[str, bool]
    missing: List[str] = Field(default_factory=list)
    extra: List[str] = Field(default_factory=list)

    @property
    def identical(self) -> bool:
        return all(self.matches.values()) and not self.missing and not self.extra
