"""Binary snapshots, diagnostics CSV files and run manifests.

Snapshot layout (all little-endian)::

    magic        8 bytes   b"CHMLSNAP"
    version      uint32    1
    header_len   uint32    bytes of header following this field
    dim          uint32
    sizes        dim x uint64
    extents      dim x float64
    time         float64
    params       5 x float64   D, epsilon, p_infinity, chi, alpha
    model_tag    uint8 length + utf-8
    n_fields     uint32
    field names  n_fields x (uint8 length + utf-8)
    payload      float64, fields in declared order, each row-major

Conservation states store ``p_tilde, q_0 .. q_{dim-1}``; Keller-Segel
states store ``u, c``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsRecord
from .dynamics import MODEL_TAGS, KSState, ModelParams, State
from .errors import SnapshotFormatError
from .grid import make_grid

MAGIC = b"CHMLSNAP"
VERSION = 1


@dataclass
class SnapshotHeader:
    version: int
    dim: int
    sizes: tuple[int, ...]
    extents: tuple[float, ...]
    time: float
    params: ModelParams
    model_tag: str
    field_names: tuple[str, ...]
    payload_offset: int

    @property
    def payload_nbytes(self) -> int:
        return 8 * len(self.field_names) * int(np.prod(self.sizes))


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 255:
        raise ValueError("string too long for snapshot header")
    return struct.pack("<B", len(b)) + b


def _fields_of(state) -> tuple[str, list[str], list[np.ndarray]]:
    if isinstance(state, KSState):
        return "keller_segel", ["u", "c"], [state.u, state.c]
    names = ["p_tilde"] + [f"q_{i}" for i in range(state.grid.dim)]
    return state.model_tag, names, [state.p_tilde, *state.q]


def snapshot_bytes(state) -> bytes:
    g = state.grid
    tag, names, arrays = _fields_of(state)
    prm = state.params
    body = struct.pack("<I", g.dim)
    body += struct.pack(f"<{g.dim}Q", *g.sizes)
    body += struct.pack(f"<{g.dim}d", *g.extents)
    body += struct.pack("<d", state.time)
    body += struct.pack("<5d", prm.D, prm.epsilon, prm.p_infinity, prm.chi, prm.alpha)
    body += _pack_str(tag)
    body += struct.pack("<I", len(names))
    body += b"".join(_pack_str(n) for n in names)
    head = MAGIC + struct.pack("<II", VERSION, len(body))
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return head + body + payload


def save_snapshot(state, path) -> Path:
    path = Path(path)
    path.write_bytes(snapshot_bytes(state))
    return path


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf, self.pos = buf, pos

    def take(self, fmt: str):
        n = struct.calcsize(fmt)
        if self.pos + n > len(self.buf):
            raise SnapshotFormatError("truncated snapshot header")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += n
        return out

    def string(self) -> str:
        (n,) = self.take("<B")
        (raw,) = self.take(f"<{n}s")
        return raw.decode("utf-8")


def _parse_header(buf: bytes) -> SnapshotHeader:
    if len(buf) < 16:
        raise SnapshotFormatError("truncated snapshot: header incomplete")
    if buf[:8] != MAGIC:
        raise SnapshotFormatError(f"bad magic {buf[:8]!r}; not a chemolab snapshot")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version} (expected {VERSION})")
    if len(buf) < 16 + hlen:
        raise SnapshotFormatError("truncated snapshot header")
    r = _Reader(buf[: 16 + hlen], 16)
    (dim,) = r.take("<I")
    if dim not in (1, 2, 3):
        raise SnapshotFormatError(f"invalid dimension {dim}")
    sizes = r.take(f"<{dim}Q")
    extents = r.take(f"<{dim}d")
    (t,) = r.take("<d")
    D, eps, pinf, chi, alpha = r.take("<5d")
    tag = r.string()
    if tag not in MODEL_TAGS:
        raise SnapshotFormatError(f"unknown model tag {tag!r}")
    (nf,) = r.take("<I")
    names = tuple(r.string() for _ in range(nf))
    if r.pos != 16 + hlen:
        raise SnapshotFormatError("header length mismatch")
    expect = ("u", "c") if tag == "keller_segel" else ("p_tilde",) + tuple(f"q_{i}" for i in range(dim))
    if names != expect:
        raise SnapshotFormatError(f"field names {names} inconsistent with dim={dim}, tag={tag}")
    return SnapshotHeader(
        version, dim, tuple(int(n) for n in sizes), tuple(extents), t,
        ModelParams(D, eps, pinf, chi, alpha), tag, names, r.pos,
    )


def read_header(path) -> SnapshotHeader:
    """Parse only the header; the payload is not read."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) == 16 and head[:8] == MAGIC:
            (hlen,) = struct.unpack_from("<I", head, 12)
            head += fh.read(hlen)
    return _parse_header(head)


def load_snapshot(path):
    buf = Path(path).read_bytes()
    h = _parse_header(buf)
    payload = buf[h.payload_offset:]
    if len(payload) != h.payload_nbytes:
        raise SnapshotFormatError(
            f"payload has {len(payload)} bytes, expected {h.payload_nbytes} (truncated or padded)"
        )
    grid = make_grid(h.dim, h.sizes, h.extents)
    data = np.frombuffer(payload, dtype="<f8").astype(float).reshape((len(h.field_names),) + h.sizes)
    if h.model_tag == "keller_segel":
        return KSState(grid, data[0].copy(), data[1].copy(), h.params, h.time)
    state = State(grid, data[0].copy(), data[1:].copy(), h.params, h.time)
    if state.model_tag != h.model_tag:
        raise SnapshotFormatError(f"model tag {h.model_tag} inconsistent with epsilon={h.params.epsilon}")
    return state


# CSV ---------------------------------------------------------------------------


def emit_diagnostics_csv(record: DiagnosticsRecord, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(record)):
            w.writerow([repr(float(record[c][i])) for c in CSV_COLUMNS])
    return path


def read_diagnostics_csv(path) -> DiagnosticsRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise SnapshotFormatError(f"{path}: unexpected diagnostics header")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(CSV_COLUMNS))
    return DiagnosticsRecord({c: data[:, i].copy() for i, c in enumerate(CSV_COLUMNS)})


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


def write_errors_csv(path, result, norms) -> Path:
    """One row per (eps, comparison time): ``eps, t, {norm}_theta, {norm}_psi, ...``."""
    header = ["eps", "t"] + [f"{n}_{v}" for n in norms for v in ("theta", "psi")]
    rows = []
    for j, e in enumerate(result.eps):
        for i, t in enumerate(result.times):
            row = [float(e), float(t)]
            for n in norms:
                row += [float(result.errors[n][j, i, 0]), float(result.errors[n][j, i, 1])]
            rows.append(row)
    return write_csv(path, header, rows)


def write_rate_csv(path, fits, norms) -> Path:
    """``norm, slope, intercept, r2``; a refused fit is written as nan."""
    rows = []
    for n in norms:
        f = fits[n]
        vals = (f.slope, f.intercept, f.r2) if f is not None else (float("nan"),) * 3
        rows.append([n, *map(float, vals)])
    return write_csv(path, ["norm", "slope", "intercept", "r2"], rows)


# manifests -----------------------------------------------------------------------


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(directory, config: dict, artifacts, exit_status: int = 0, **extra) -> Path:
    from . import __version__

    directory = Path(directory)
    path = directory / "manifest.json"
    rel = sorted(str(Path(a).relative_to(directory)) for a in artifacts)
    manifest = {
        "config_hash": config_hash(config),
        "config": config,
        "code_version": __version__,
        "exit_status": exit_status,
        "artifacts": rel + ["manifest.json"],
        **extra,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return path
