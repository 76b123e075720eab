"""Binary and CSV persistence for signature databases and PCA reductions.

Database file (``.wsdb``), little-endian::

    b"WSDB" | u16 version | u16 len + utf-8 modulation | u16 len + utf-8 channel
    | f64 build SNR | u32 rows | u16 dim | u64 seed | rows*dim f64, row-major

Reduction file (``.wspc``), little-endian::

    b"WSPC" | u16 version | u16 len + utf-8 source tag | u16 dim | u16 rho
    | rho f64 explained-variance fractions | dim*rho f64 loadings, row-major
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .signature import WS_DIM, WS_LABELS, ReductionMatrix, SignatureDatabase

DB_MAGIC = b"WSDB"
PCA_MAGIC = b"WSPC"
DB_VERSION = 1
PCA_VERSION = 1

_DB_TAIL = struct.Struct("<dIHQ")


class FormatError(ValueError):
    """A file is not in the expected format or has an unsupported version."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for a u16 length prefix")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {self.what} file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str | struct.Struct):
        st = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return st.unpack(self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def header(self, magic: bytes, supported: int) -> int:
        if self.take(len(magic)) != magic:
            raise FormatError(f"not a {self.what} file (bad magic)")
        (version,) = self.unpack("<H")
        if version != supported:
            raise FormatError(f"unsupported {self.what} format version {version} (this reader handles version {supported})")
        return version


def db_to_bytes(db: SignatureDatabase) -> bytes:
    rows = np.ascontiguousarray(db.rows, dtype="<f8")
    head = (
        DB_MAGIC
        + struct.pack("<H", DB_VERSION)
        + _pack_str(db.modulation.value)
        + _pack_str(db.channel_tag)
        + _DB_TAIL.pack(float(db.build_snr_db), rows.shape[0], rows.shape[1], int(db.seed) & 0xFFFFFFFFFFFFFFFF)
    )
    return head + rows.tobytes()


def db_from_bytes(data: bytes) -> SignatureDatabase:
    rd = _Reader(data, "WSDB")
    rd.header(DB_MAGIC, DB_VERSION)
    label = rd.string()
    tag = rd.string()
    snr, count, dim, seed = rd.unpack(_DB_TAIL)
    if dim != WS_DIM:
        raise FormatError(f"WSDB dimension {dim} != {WS_DIM}")
    body = rd.take(8 * count * dim)
    if rd.pos != len(data):
        raise FormatError("trailing bytes after WSDB body")
    rows = np.frombuffer(body, dtype="<f8").reshape(count, dim).astype(float)
    return SignatureDatabase(label, tag, rows, snr, seed)


def write_db(db: SignatureDatabase, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(db_to_bytes(db))
    return path


def read_db(path: str | Path) -> SignatureDatabase:
    return db_from_bytes(Path(path).read_bytes())


def db_filename(label: str, channel_tag: str) -> str:
    return f"{label}_{channel_tag}.wsdb"


def export_csv(db: SignatureDatabase, path: str | Path | None = None) -> str:
    """Lossless text dump: one header line of entry names, then ``%.17g`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(WS_LABELS)
    for row in db.rows:
        w.writerow([f"{v:.17g}" for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def import_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != WS_LABELS:
        raise FormatError("CSV header does not name the signature entries")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, WS_DIM)


def reduction_to_bytes(w: ReductionMatrix) -> bytes:
    W = np.ascontiguousarray(w.loadings, dtype="<f8")
    explained = np.zeros(w.rho) if len(w.explained) != w.rho else np.asarray(w.explained)
    return (
        PCA_MAGIC
        + struct.pack("<H", PCA_VERSION)
        + _pack_str(w.source_tag)
        + struct.pack("<HH", *W.shape)
        + explained.astype("<f8").tobytes()
        + W.tobytes()
    )


def reduction_from_bytes(data: bytes) -> ReductionMatrix:
    rd = _Reader(data, "WSPC")
    rd.header(PCA_MAGIC, PCA_VERSION)
    tag = rd.string()
    dim, rho = rd.unpack("<HH")
    explained = np.frombuffer(rd.take(8 * rho), dtype="<f8").astype(float)
    W = np.frombuffer(rd.take(8 * dim * rho), dtype="<f8").reshape(dim, rho).astype(float)
    if rd.pos != len(data):
        raise FormatError("trailing bytes after WSPC body")
    return ReductionMatrix(W, tag, explained)


def write_reduction(w: ReductionMatrix, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(reduction_to_bytes(w))
    return path


def read_reduction(path: str | Path) -> ReductionMatrix:
    return reduction_from_bytes(Path(path).read_bytes())
