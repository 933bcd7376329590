"""
File output helpers: atomic writes, 17-digit JSON/CSV and binary caches.

JSON reports put every run-dependent field (the timestamp) on the first line
so two runs can be compared byte for byte after dropping that line.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io as _io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

REPORT_VERSION = 1
EIG_MAGIC = b"PTEIGSYS"
EIG_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(np.real(obj)), "im": float(np.imag(obj))}
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps17(obj, indent: int = 1, _level: int = 0) -> str:
    """json.dumps with every float printed to 17 significant digits."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps17(v) for v in obj) + "]"
        items = [pad + dumps17(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, float):
        return fmt_float(obj)
    return json.dumps(obj)


def timestamp() -> str:
    """UTC timestamp, honouring SOURCE_DATE_EPOCH for reproducible builds."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def report_text(kind: str, body) -> str:
    """JSON document whose first line holds the only timestamped field."""
    header = {"kind": kind, "version": REPORT_VERSION, "created": timestamp()}
    return '{"header": ' + json.dumps(header) + ',\n"body": ' + dumps17(body) + "\n}\n"


def write_report(path, kind: str, body) -> Path:
    return atomic_write_text(path, report_text(kind, body))


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def strip_header(text: str) -> str:
    """Report text without the timestamped first line."""
    return text.split("\n", 1)[1] if "\n" in text else ""


def write_csv(path, header, rows) -> Path:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def save_eigen_cache(path, lambdas, subspaces, fields, meta: dict) -> Path:
    """Write an eigen-system cache.

    Layout: magic, uint32 version, uint32 metadata length, metadata JSON,
    then little-endian float64 eigenvalues, int32 subspace tags and
    complex128 fields (row major), followed by a SHA-256 of everything
    before it.
    """
    lambdas = np.ascontiguousarray(lambdas, dtype="<f8")
    subspaces = np.ascontiguousarray(subspaces, dtype="<i4")
    fields = np.ascontiguousarray(fields, dtype="<c16")
    m = dict(meta)
    m["count"] = int(lambdas.size)
    m["ndof"] = int(fields.shape[1]) if fields.ndim == 2 else 0
    mj = json.dumps(_plain(m), sort_keys=True).encode()
    body = (EIG_MAGIC + struct.pack("<II", EIG_VERSION, len(mj)) + mj
            + lambdas.tobytes() + subspaces.tobytes() + fields.tobytes())
    return atomic_write_bytes(path, body + hashlib.sha256(body).digest())


def load_eigen_cache(path, expect_meta: dict | None = None):
    """Read a cache written by ``save_eigen_cache``.

    Returns ``(lambdas, subspaces, fields, meta)`` or raises ValueError on any
    corruption or metadata mismatch.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(EIG_MAGIC) + 8 + 32 or not raw.startswith(EIG_MAGIC):
        raise ValueError("not an eigen-system cache")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError("eigen-system cache checksum mismatch")
    off = len(EIG_MAGIC)
    version, mlen = struct.unpack_from("<II", body, off)
    if version != EIG_VERSION:
        raise ValueError(f"unsupported eigen cache version {version}")
    off += 8
    meta = json.loads(body[off:off + mlen])
    off += mlen
    cnt, ndof = meta["count"], meta["ndof"]
    lam = np.frombuffer(body, "<f8", cnt, off).copy()
    off += 8 * cnt
    sub = np.frombuffer(body, "<i4", cnt, off).copy()
    off += 4 * cnt
    fields = np.frombuffer(body, "<c16", cnt * ndof, off).reshape(cnt, ndof).copy()
    if expect_meta:
        for k, v in _plain(expect_meta).items():
            if meta.get(k) != v:
                raise ValueError(f"eigen cache metadata mismatch on {k!r}")
    return lam, sub, fields, meta
