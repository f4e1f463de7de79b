"""Binary field container, CSV tables, record directories and run manifests.

Container layout: a 64-byte little-endian header

    magic b"DELFIELD" | version u32 | dim u32 | N u32 | components u32 |
    scalar width u32 | endian marker u32 (0x01020304) | time f64 | zero padding

followed by ``components * N**dim`` float64 values in row-major order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import DissipativeRecord
from .core import ConservedField, EosParams, TorusGrid, Trajectory
from .defects import BlockPartition, DefectField
from .solver import EnergyLedger

MAGIC = b"DELFIELD"
VERSION = 1
ENDIAN_MARK = 0x01020304
HEADER = struct.Struct("<8sIIIIIId")
HEADER_SIZE = 64


class ContainerError(ValueError):
    pass


def write_array(path, data: np.ndarray, dim: int, cells: int, time: float = 0.0) -> Path:
    """Write ``data`` of shape ``(components, *(cells,)*dim)``."""
    data = np.ascontiguousarray(data, dtype="<f8")
    if data.shape[1:] != (cells,) * dim:
        raise ContainerError(f"array shape {data.shape} does not match dim={dim}, N={cells}")
    head = HEADER.pack(MAGIC, VERSION, dim, cells, data.shape[0], 8, ENDIAN_MARK, float(time))
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_SIZE, b"\0"))
        fh.write(data.tobytes(order="C"))
    return path


def read_array(path) -> tuple[np.ndarray, int, int, float]:
    """Return ``(data, dim, cells, time)``."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ContainerError(f"{path}: truncated header")
    magic, version, dim, cells, ncomp, width, mark, time = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if mark != ENDIAN_MARK or width != 8:
        raise ContainerError(f"{path}: unsupported byte order or scalar width")
    count = ncomp * cells**dim
    body = raw[HEADER_SIZE:]
    if len(body) != 8 * count:
        raise ContainerError(f"{path}: expected {count} values, found {len(body) // 8}")
    data = np.frombuffer(body, dtype="<f8").reshape((ncomp,) + (cells,) * dim).astype(float)
    return data, dim, cells, time


def write_field(path, f: ConservedField) -> Path:
    return write_array(path, np.concatenate([f.rho[None], f.mom]), f.grid.dim, f.grid.cells, f.time)


def read_field(path) -> ConservedField:
    data, dim, cells, time = read_array(path)
    if data.shape[0] != dim + 1:
        raise ContainerError(f"{path}: not a density/momentum field")
    return ConservedField(TorusGrid(dim, cells), data[0], data[1:], time)


def write_defect(path, D: DefectField, time: float = 0.0) -> Path:
    """Defects on their block grid: ``Rv`` components row-major, then ``Rp``."""
    g = D.grid
    data = np.concatenate([D.Rv.reshape((g.dim * g.dim,) + g.shape), D.Rp[None]])
    return write_array(path, data, g.dim, g.cells, time)


def read_defect_arrays(path) -> tuple[np.ndarray, np.ndarray, float]:
    data, dim, cells, time = read_array(path)
    if data.shape[0] != dim * dim + 1:
        raise ContainerError(f"{path}: not a defect field")
    return data[:-1].reshape((dim, dim) + (cells,) * dim), data[-1], time


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# {{{ records


def save_record(record: DissipativeRecord, directory) -> list[Path]:
    """Write a record as a directory of containers, a ledger CSV and ``record.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for k, (s, D) in enumerate(zip(record.trajectory, record.defects)):
        written.append(write_field(d / f"field_{k:04d}.bin", s))
        written.append(write_defect(d / f"defect_{k:04d}.bin", D, s.time))
    written.append(write_csv(d / "ledger.csv", ["time", "energy", "dissipation", "slack"], record.ledger.rows()))
    meta = {
        "snapshots": len(record.trajectory),
        "block": record.partition.block,
        "fine_cells": record.partition.grid.cells,
        "dim": record.grid.dim,
        "eos": {"a": record.eos.a, "gamma": record.eos.gamma},
        "provenance": record.provenance,
    }
    p = d / "record.json"
    p.write_text(json.dumps(meta, indent=2, default=str))
    written.append(p)
    return written


def load_record(directory) -> DissipativeRecord:
    d = Path(directory)
    meta_path = d / "record.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"record metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text())
    part = BlockPartition(TorusGrid(meta["dim"], meta["fine_cells"]), meta["block"])
    snaps, defects = [], []
    for k in range(meta["snapshots"]):
        snaps.append(read_field(d / f"field_{k:04d}.bin"))
        Rv, Rp, _ = read_defect_arrays(d / f"defect_{k:04d}.bin")
        defects.append(DefectField(part, Rv, Rp))
    _, rows = read_csv(d / "ledger.csv")
    cols = np.array(rows, dtype=float).reshape(-1, 4)
    ledger = EnergyLedger(cols[:, 0], cols[:, 1], cols[:, 2])
    eos = EosParams(**meta["eos"])
    return DissipativeRecord(Trajectory(snaps), defects, ledger, eos, meta.get("provenance", {}))


# }}}


# {{{ manifest


def versions() -> dict:
    import scipy

    from . import __version__

    return {"dissipative_euler": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    versions: dict = field(default_factory=versions)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = digest(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = digest(path)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, default=str))
        return path


def verify_manifest(path) -> list[str]:
    """Outputs whose file is missing or whose digest does not match."""
    m = json.loads(Path(path).read_text())
    bad = []
    for p, h in m["outputs"].items():
        if not Path(p).exists() or digest(p) != h:
            bad.append(p)
    return bad


# }}}
