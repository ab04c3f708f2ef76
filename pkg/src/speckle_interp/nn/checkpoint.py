"""SIL1 checkpoint files.

Layout (little-endian throughout)::

    b"SIL1"  u32 version  u32 layer_count
    per layer:  u8 kind_tag  u8 n_hyper  n_hyper x u32  u64 weight_offset  u64 weight_nbytes
    f32 weight blob (offsets are relative to its start)
    u32 metadata_nbytes  UTF-8 JSON metadata

The metadata carries the model name and input shape along with whatever the
trainer records (config, seed, final loss).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, FormatError, TruncatedError
from .layers import layer_from_spec
from .model import Model

MAGIC = b"SIL1"
VERSION = 1


def checkpoint_bytes(model: Model, metadata: dict | None = None) -> bytes:
    header = [MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    blobs = []
    offset = 0
    for layer in model.layers:
        hyper = layer.hyper()
        raw = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for p in layer.params)
        header.append(struct.pack("<BB", layer.tag, len(hyper)))
        header.append(struct.pack(f"<{len(hyper)}I", *hyper))
        header.append(struct.pack("<QQ", offset, len(raw)))
        blobs.append(raw)
        offset += len(raw)
    meta = dict(metadata or {})
    meta["model"] = {"name": model.name, "input_shape": list(model.input_shape)}
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return b"".join(header + blobs + [struct.pack("<I", len(meta_raw)), meta_raw])


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"checkpoint truncated reading {what}", expected=self.pos + n, actual=len(self.buf))
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(buf: bytes) -> tuple[Model, dict]:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"not a SIL1 checkpoint (magic {magic!r})")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    records = []
    for i in range(count):
        tag, nh = r.unpack("<BB", f"layer {i} record")
        hyper = r.unpack(f"<{nh}I", f"layer {i} hyperparameters")
        off, nbytes = r.unpack("<QQ", f"layer {i} weight extent")
        records.append((tag, hyper, off, nbytes))
    blob_start = r.pos
    blob_len = sum(rec[3] for rec in records)
    r.take(blob_len, "weight blob")
    (meta_len,) = r.unpack("<I", "metadata length")
    meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after checkpoint metadata")

    layers = []
    for i, (tag, hyper, off, nbytes) in enumerate(records):
        try:
            layer = layer_from_spec(tag, tuple(hyper))
        except (TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"layer {i}: cannot rebuild kind {tag} from {hyper}: {exc}") from None
        expected = sum(int(np.prod(s)) for s in layer.param_shapes()) * 4
        if nbytes != expected or off + nbytes > blob_len:
            raise FormatError(f"layer {i}: weight extent {off}+{nbytes} inconsistent with {expected} bytes of parameters")
        pos = blob_start + off
        for p in layer.params:
            size = p.data.size
            p.data = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).astype(np.float32).reshape(p.shape)
            pos += size * 4
        layers.append(layer)
    info = meta.get("model", {})
    model = Model(layers, tuple(info.get("input_shape", (1, 1, 1))), name=info.get("name", "model"))
    return model.eval(), meta


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    write_atomic(path, checkpoint_bytes(model, metadata))
    return path


def load_checkpoint(path) -> tuple[Model, dict]:
    return parse_checkpoint(Path(path).read_bytes())


def write_atomic(path: Path, data: bytes) -> None:
    """Write through a temporary sibling and rename, so readers never see a partial file."""
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
