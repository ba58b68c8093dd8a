"""
Binary storage for fields, trajectories and kernels.

Layout: magic b"WNLS", u32 version, u32 cutoff, u32 side, then row-major
little-endian complex128 (interleaved f64 re, im). Trajectories insert a u32
frame count and the f64 time grid before the frames; kernels insert the
frame count, the column count and the time grid. A JSON sidecar next to each
file records the kind, the normalization convention and metadata.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.models.dynamics_models import Trajectory
from src.models.operator_models import KernelMatrix
from src.models.spectral_models import SpectralField
from src.utils.exceptions import FieldFormatException

MAGIC = b"WNLS"
VERSION = 1
NORMALIZATION = "mean-normalized"
_U32 = np.dtype("<u4")
_F64 = np.dtype("<f8")
_C128 = np.dtype("<c16")


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(Path(path).suffix + ".json")


def _header(cutoff: int, side: int) -> bytes:
    return MAGIC + np.array([VERSION, cutoff, side], dtype=_U32).tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, dtype: np.dtype, count: int) -> np.ndarray:
        size = dtype.itemsize * count
        if self.offset + size > len(self.data):
            raise FieldFormatException("file is truncated")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out

    def header(self) -> Tuple[int, int]:
        if self.data[:4] != MAGIC:
            raise FieldFormatException(f"bad magic {self.data[:4]!r}")
        self.offset = 4
        version, cutoff, side = (int(v) for v in self.take(_U32, 3))
        if version != VERSION:
            raise FieldFormatException(f"unsupported version {version}")
        return cutoff, side

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FieldFormatException(f"{len(self.data) - self.offset} trailing bytes")


def encode_field(u: SpectralField) -> bytes:
    side = u.coeffs.shape[0]
    return _header(u.cutoff, side) + u.coeffs.astype(_C128).tobytes()


def decode_field(data: bytes) -> SpectralField:
    reader = _Reader(data)
    cutoff, side = reader.header()
    coeffs = reader.take(_C128, side * side).reshape(side, side)
    reader.finish()
    try:
        return SpectralField(cutoff=cutoff, coeffs=coeffs)
    except ValueError as e:
        raise FieldFormatException(f"invalid field payload: {e}") from e


def _write(path: Path, payload: bytes, meta: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    sidecar = {"normalization": NORMALIZATION, **meta}
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path


def read_sidecar(path: Path) -> Dict[str, Any]:
    target = sidecar_path(path)
    if not target.exists():
        raise FieldFormatException(f"missing sidecar {target.name}")
    meta = json.loads(target.read_text(encoding="utf-8"))
    if meta.get("normalization") != NORMALIZATION:
        raise FieldFormatException(f"unknown normalization {meta.get('normalization')!r}")
    return meta


def write_field(path: Path, u: SpectralField, meta: Optional[Dict[str, Any]] = None) -> Path:
    return _write(path, encode_field(u), {"kind": "field", "cutoff": u.cutoff, **(meta or {})})


def read_field(path: Path) -> SpectralField:
    read_sidecar(path)
    return decode_field(Path(path).read_bytes())


def write_trajectory(path: Path, traj: Trajectory, meta: Optional[Dict[str, Any]] = None) -> Path:
    side = traj.frames.shape[1]
    payload = (
        _header(traj.cutoff, side)
        + np.array([len(traj.times)], dtype=_U32).tobytes()
        + traj.times.astype(_F64).tobytes()
        + traj.frames.astype(_C128).tobytes()
    )
    info = {
        "kind": "trajectory",
        "cutoff": traj.cutoff,
        "r": traj.r,
        "gauged": traj.gauged,
        "m_star": traj.m_star,
        "mass": traj.mass.tolist(),
        "hamiltonian": traj.hamiltonian.tolist(),
        "phase_rate": traj.phase_rate.tolist(),
        "gauge_phase": traj.gauge_phase.tolist(),
        **(meta or {}),
    }
    return _write(path, payload, info)


def read_trajectory(path: Path) -> Trajectory:
    meta = read_sidecar(path)
    reader = _Reader(Path(path).read_bytes())
    cutoff, side = reader.header()
    count = int(reader.take(_U32, 1)[0])
    times = reader.take(_F64, count)
    frames = reader.take(_C128, count * side * side).reshape(count, side, side)
    reader.finish()
    return Trajectory(
        cutoff=cutoff,
        r=meta["r"],
        gauged=meta["gauged"],
        m_star=meta.get("m_star"),
        times=times,
        frames=frames,
        mass=np.asarray(meta["mass"]),
        hamiltonian=np.asarray(meta["hamiltonian"]),
        phase_rate=np.asarray(meta["phase_rate"]),
        gauge_phase=np.asarray(meta["gauge_phase"]),
    )


def write_kernel(path: Path, kernel: KernelMatrix, meta: Optional[Dict[str, Any]] = None) -> Path:
    count, rows, cols = kernel.entries.shape
    payload = (
        _header(kernel.N, rows)
        + np.array([count, cols], dtype=_U32).tobytes()
        + kernel.times.astype(_F64).tobytes()
        + kernel.entries.astype(_C128).tobytes()
    )
    info = {
        "kind": "kernel",
        "cutoff": kernel.N,
        "L": kernel.L,
        "row_modes": [list(k) for k in kernel.row_modes],
        "column_modes": [list(k) for k in kernel.column_modes],
        **(meta or {}),
    }
    return _write(path, payload, info)


def read_kernel(path: Path) -> KernelMatrix:
    meta = read_sidecar(path)
    reader = _Reader(Path(path).read_bytes())
    N, rows = reader.header()
    count, cols = (int(v) for v in reader.take(_U32, 2))
    times = reader.take(_F64, count)
    entries = reader.take(_C128, count * rows * cols).reshape(count, rows, cols)
    reader.finish()
    return KernelMatrix(
        N=N,
        L=meta["L"],
        times=times,
        row_modes=[tuple(k) for k in meta["row_modes"]],
        column_modes=[tuple(k) for k in meta["column_modes"]],
        entries=entries,
    )
