"""On-disk formats: the dataset container and model checkpoints.

Dataset layout::

    <root>/manifest.json          structured sample index
    <root>/blobs/<id>.<name>.bin  one array per file

Each blob is an 8-byte magic, two little-endian uint64 dimensions (rows,
cols) and the array as little-endian float32 in row-major [space, time]
order. The manifest stores shape, dtype, byte order and a SHA-256 per blob.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
from pathlib import Path

import numpy as np

from .errors import IntegrityError, InvalidArgument, VersionMismatch

BLOB_MAGIC = b"PWAVBLB1"
DATASET_FORMAT = "pinowave-dataset"
DATASET_VERSION = 1
_HEADER = struct.Struct("<8sQQ")


def _as_2d(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgument(f"blobs hold 2D arrays, got shape {arr.shape}")
    return arr


def encode_blob(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(_as_2d(arr), dtype="<f4")
    return _HEADER.pack(BLOB_MAGIC, a.shape[0], a.shape[1]) + a.tobytes(order="C")


def decode_blob(data: bytes, expected_shape=None) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise IntegrityError("blob shorter than its header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != BLOB_MAGIC:
        raise IntegrityError(f"bad blob magic {magic!r}")
    payload = data[_HEADER.size:]
    if len(payload) != rows * cols * 4:
        raise IntegrityError(f"blob payload has {len(payload)} bytes, header promises {rows}x{cols} float32")
    if expected_shape is not None and tuple(expected_shape) != (rows, cols):
        raise IntegrityError(f"blob shape {(rows, cols)} disagrees with manifest {tuple(expected_shape)}")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


class DatasetWriter:
    """Writes blobs and keeps the manifest; manifest updates are serialized."""

    def __init__(self, root, meta: dict | None = None):
        self.root = Path(root)
        (self.root / "blobs").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        existing = self.root / "manifest.json"
        if existing.exists():
            self.manifest = json.loads(existing.read_text())
            _check_version(self.manifest)
        else:
            self.manifest = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "meta": {}, "samples": []}
        self.manifest["meta"].update(meta or {})
        self._index = {s["id"]: s for s in self.manifest["samples"]}

    def set_meta(self, **meta):
        with self._lock:
            self.manifest["meta"].update(meta)

    def add_sample(self, record: dict):
        with self._lock:
            if record["id"] in self._index:
                self._index[record["id"]].update(record)
                return
            record = dict(record)
            record.setdefault("arrays", {})
            self.manifest["samples"].append(record)
            self._index[record["id"]] = record

    def update_sample(self, sample_id: str, **fields):
        with self._lock:
            self._index[sample_id].update(fields)

    def write_array(self, sample_id: str, name: str, arr: np.ndarray):
        data = encode_blob(arr)
        rel = f"blobs/{sample_id}.{name}.bin"
        tmp = self.root / (rel + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, self.root / rel)
        rows, cols = _HEADER.unpack_from(data)[1:]
        entry = {"file": rel, "shape": [rows, cols], "dtype": "float32", "byte_order": "little",
                 "order": "row-major[space,time]", "sha256": hashlib.sha256(data).hexdigest()}
        with self._lock:
            self._index[sample_id].setdefault("arrays", {})[name] = entry

    def flush(self) -> dict:
        with self._lock:
            text = json.dumps(self.manifest, indent=1, sort_keys=True)
            tmp = self.root / "manifest.json.tmp"
            tmp.write_text(text)
            os.replace(tmp, self.root / "manifest.json")
            return json.loads(text)


def _check_version(manifest: dict):
    if manifest.get("format") != DATASET_FORMAT:
        raise IntegrityError(f"not a {DATASET_FORMAT} manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise VersionMismatch(f"dataset version {manifest.get('version')} unsupported (expected {DATASET_VERSION})")


class DatasetReader:
    def __init__(self, root):
        self.root = Path(root)
        path = self.root / "manifest.json"
        if not path.exists():
            raise InvalidArgument(f"no manifest.json under {self.root}")
        self.manifest = json.loads(path.read_text())
        _check_version(self.manifest)
        self._index = {s["id"]: s for s in self.manifest["samples"]}

    @property
    def meta(self) -> dict:
        return self.manifest["meta"]

    def samples(self, status: str | None = "ok", split: str | None = None) -> list[dict]:
        out = []
        for s in self.manifest["samples"]:
            if status is not None and s.get("status") != status:
                continue
            if split is not None and s.get("split") != split:
                continue
            out.append(s)
        return out

    def record(self, sample_id: str) -> dict:
        return self._index[sample_id]

    def read_array(self, sample_id: str, name: str) -> np.ndarray:
        entry = self._index[sample_id]["arrays"].get(name)
        if entry is None:
            raise InvalidArgument(f"sample {sample_id} has no array {name!r}")
        data = (self.root / entry["file"]).read_bytes()
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            raise IntegrityError(f"checksum mismatch for {entry['file']}")
        return decode_blob(data, entry["shape"])


# --- checkpoints ------------------------------------------------------------

CKPT_MAGIC = b"PWAVCKPT"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<8sIQ")


def write_checkpoint(path, header: dict, tensors: dict[str, np.ndarray]):
    """Header JSON plus raw little-endian tensors, protected by a SHA-256."""
    index = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes(order="C")
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                      "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    head = dict(header)
    head["tensors"] = index
    head["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    head_bytes = json.dumps(head, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(head_bytes)))
        fh.write(head_bytes)
        fh.write(payload)
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEAD.size:
        raise IntegrityError("checkpoint truncated before header")
    magic, version, head_len = _CKPT_HEAD.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise IntegrityError("not a pinowave checkpoint")
    if version != CKPT_VERSION:
        raise VersionMismatch(f"checkpoint version {version} unsupported (expected {CKPT_VERSION})")
    start = _CKPT_HEAD.size
    if len(data) < start + head_len:
        raise IntegrityError("checkpoint truncated inside header")
    try:
        head = json.loads(data[start:start + head_len])
    except ValueError as exc:
        raise IntegrityError(f"corrupt checkpoint header: {exc}") from None
    payload = data[start + head_len:]
    expected = sum(t["nbytes"] for t in head["tensors"])
    if len(payload) != expected:
        raise IntegrityError(f"checkpoint payload has {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != head["payload_sha256"]:
        raise IntegrityError("checkpoint payload checksum mismatch")
    tensors = {}
    for t in head["tensors"]:
        raw = payload[t["offset"]:t["offset"] + t["nbytes"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype=np.dtype(t["dtype"])).reshape(t["shape"]).copy()
    return head, tensors
