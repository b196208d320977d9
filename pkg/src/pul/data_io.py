"""Dataset files, model checkpoints and run-history records.

Binary dataset layout (little-endian)::

    magic   4s   b"PULD"
    version u16  1
    flags   u16  bit 0: labels present, bit 1: camera ids present
    N       u64
    D       u32
    samples N*D float32, row-major
    labels  N int32      (if flagged)
    cameras N int32      (if flagged)

Model checkpoint layout (little-endian)::

    magic    4s   b"PULM"
    version  u16  1
    reserved u16  0
    meta_len u32
    meta     JSON, utf-8: {"arch": ..., "params": [[name, shape], ...]}
    arrays   float64, in the order listed in meta

History files hold one JSON object per line.
"""
from __future__ import annotations

import csv
import fcntl
import json
import os
import struct

import numpy as np

from .errors import FormatError, HistoryLockedError, InvalidInputError, UnsupportedVersionError
from .types import Dataset, EmbedModel, IterationRecord

__all__ = [
    "DATASET_VERSION",
    "MODEL_VERSION",
    "dataset_to_bytes",
    "dataset_from_bytes",
    "save_dataset",
    "load_dataset",
    "save_csv",
    "load_csv",
    "model_to_bytes",
    "model_from_bytes",
    "save_model",
    "load_model",
    "HistoryWriter",
    "append_history_record",
    "read_history",
]

DATASET_MAGIC = b"PULD"
DATASET_VERSION = 1
MODEL_MAGIC = b"PULM"
MODEL_VERSION = 1

_DS_HEADER = struct.Struct("<4sHHQI")
_MODEL_HEADER = struct.Struct("<4sHHI")
_HAS_LABELS, _HAS_CAMERAS = 1, 2


def _int32(arr, name):
    info = np.iinfo(np.int32)
    if arr.size and (arr.min() < info.min or arr.max() > info.max):
        raise InvalidInputError(f"{name} do not fit in 32-bit integers")
    return arr.astype("<i4").tobytes()


def dataset_to_bytes(ds: Dataset) -> bytes:
    flags = (_HAS_LABELS if ds.labels is not None else 0) | \
            (_HAS_CAMERAS if ds.camera_ids is not None else 0)
    parts = [_DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, flags, ds.N, ds.D),
             ds.samples.astype("<f4").tobytes()]
    if ds.labels is not None:
        parts.append(_int32(ds.labels, "labels"))
    if ds.camera_ids is not None:
        parts.append(_int32(ds.camera_ids, "camera ids"))
    return b"".join(parts)


def dataset_from_bytes(buf: bytes) -> Dataset:
    if len(buf) < _DS_HEADER.size:
        raise FormatError("truncated dataset header", len(buf))
    magic, version, flags, n, d = _DS_HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}", 0)
    if version != DATASET_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version}", 4)
    if flags & ~(_HAS_LABELS | _HAS_CAMERAS):
        raise FormatError(f"unknown flag bits {flags:#x}", 6)
    if n < 1 or d < 1:
        raise FormatError(f"invalid shape N={n}, D={d}", 8)
    off = _DS_HEADER.size
    blocks = [("samples", n * d * 4)]
    if flags & _HAS_LABELS:
        blocks.append(("labels", n * 4))
    if flags & _HAS_CAMERAS:
        blocks.append(("cameras", n * 4))
    expected = off + sum(size for _, size in blocks)
    if len(buf) < expected:
        raise FormatError(f"truncated data: expected {expected} bytes, got {len(buf)}", len(buf))
    if len(buf) > expected:
        raise FormatError("trailing bytes after dataset payload", expected)
    out = {}
    for name, size in blocks:
        dtype = "<f4" if name == "samples" else "<i4"
        out[name] = np.frombuffer(buf, dtype=dtype, count=size // 4, offset=off)
        off += size
    samples = out["samples"].reshape(n, d).astype(np.float32)
    return Dataset(samples, out.get("labels"), out.get("cameras"))


def _write_atomic(path, data: bytes):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def save_dataset(path, ds: Dataset):
    _write_atomic(path, dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    """Read a binary dataset file, or a CSV file when the name ends in ``.csv``."""
    if str(path).lower().endswith(".csv"):
        return load_csv(path)
    with open(path, "rb") as f:
        return dataset_from_bytes(f.read())


def save_csv(path, ds: Dataset):
    """Write a header row, then optional ``label``/``camera`` columns and features."""
    header = (["label"] if ds.labels is not None else []) + \
             (["camera"] if ds.camera_ids is not None else []) + \
             [f"f{j}" for j in range(ds.D)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(ds.N):
            row = []
            if ds.labels is not None:
                row.append(int(ds.labels[i]))
            if ds.camera_ids is not None:
                row.append(int(ds.camera_ids[i]))
            row.extend(repr(float(v)) for v in ds.samples[i])
            w.writerow(row)


def load_csv(path) -> Dataset:
    """Read a CSV with a header row; ``label`` and ``camera`` columns are optional."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError("empty CSV file", 0)
    header = [h.strip().lower() for h in rows[0]]
    label_col = header.index("label") if "label" in header else None
    cam_col = header.index("camera") if "camera" in header else None
    feat_cols = [j for j in range(len(header)) if j not in (label_col, cam_col)]
    if not feat_cols or len(rows) < 2:
        raise FormatError("CSV needs at least one feature column and one data row")
    X, labels, cams = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            X.append([float(row[j]) for j in feat_cols])
            if label_col is not None:
                labels.append(int(row[label_col]))
            if cam_col is not None:
                cams.append(int(row[cam_col]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return Dataset(np.array(X), labels if label_col is not None else None,
                   cams if cam_col is not None else None)


def model_to_bytes(model: EmbedModel) -> bytes:
    params = model.params()
    names = sorted(params)
    meta = {"arch": model.arch, "params": [[k, list(params[k].shape)] for k in names]}
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, 0, len(meta_bytes)), meta_bytes]
    parts.extend(np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in names)
    return b"".join(parts)


def model_from_bytes(buf: bytes) -> EmbedModel:
    if len(buf) < _MODEL_HEADER.size:
        raise FormatError("truncated model header", len(buf))
    magic, version, _, meta_len = _MODEL_HEADER.unpack_from(buf, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", 0)
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {version}", 4)
    off = _MODEL_HEADER.size
    try:
        meta = json.loads(buf[off:off + meta_len].decode())
        arch, entries = meta["arch"], meta["params"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable model metadata: {exc}", off) from None
    off += meta_len
    params = {}
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        if len(buf) < off + 8 * count:
            raise FormatError(f"truncated parameter {name}", len(buf))
        params[name] = np.frombuffer(buf, "<f8", count, off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(buf):
        raise FormatError("trailing bytes after model payload", off)
    theta = {k: v for k, v in params.items() if k not in ("Wc", "bc")}
    w = {k: params[k] for k in ("Wc", "bc") if k in params}
    try:
        return EmbedModel(arch, theta, w)
    except InvalidInputError as exc:
        raise FormatError(f"inconsistent model: {exc}") from None


def save_model(path, model: EmbedModel):
    _write_atomic(path, model_to_bytes(model))


def load_model(path) -> EmbedModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())


def _record_line(record) -> str:
    if isinstance(record, IterationRecord):
        record = record.to_dict()
    return json.dumps(record, sort_keys=True) + "\n"


class HistoryWriter:
    """Exclusive, line-buffered writer for a history file.

    Holds a non-blocking advisory lock for its whole lifetime; a second
    writer (in this or another process) gets :class:`HistoryLockedError`.
    ``truncate=True`` starts the file afresh.
    """

    def __init__(self, path, truncate=False):
        self.path = path
        self._f = open(path, "a", encoding="utf-8")
        try:
            fcntl.flock(self._f.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            self._f.close()
            raise HistoryLockedError(f"{path} is locked by another writer") from None
        if truncate:
            self._f.truncate(0)

    def append(self, record):
        self._f.write(_record_line(record))
        self._f.flush()

    def close(self):
        if not self._f.closed:
            fcntl.flock(self._f.fileno(), fcntl.LOCK_UN)
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def append_history_record(path, record):
    """Append one record, failing fast if another writer holds the file."""
    with HistoryWriter(path) as w:
        w.append(record)


def read_history(path) -> list:
    records = []
    offset = 0
    with open(path, "rb") as f:
        for raw in f:
            line = raw.decode("utf-8").strip()
            if line:
                try:
                    records.append(IterationRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError) as exc:
                    raise FormatError(f"bad history record: {exc}", offset) from None
            offset += len(raw)
    return records
