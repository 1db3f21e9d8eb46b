"""Versioned binary model checkpoints.

Layout (all integers little-endian)::

    magic    8 bytes   b"SEQTAGCK"
    version  u32
    length   u64       payload byte count
    sha256   32 bytes  digest of the payload
    payload            sequence of blocks

Each block is ``name_len u16, name, kind u8, ...``.  Kind 0 is a UTF-8 JSON
document (``u64`` length + bytes); kind 1 is a float64 array (``u8`` ndim,
``u64`` per dimension, then the raw ``<f8`` data).
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from . import crf
from .corpus import TagSet
from .embeddings import CharEncoder, EmbeddingStack, PrecomputedContextual, StaticTable
from .model import SequenceModel
from .neural import BiLstmEncoder, LstmParams

MAGIC = b"SEQTAGCK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


def _write_block(buf: io.BytesIO, name: str, value) -> None:
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    if isinstance(value, np.ndarray):
        arr = np.ascontiguousarray(value, dtype="<f8")
        buf.write(struct.pack("<BB", 1, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    else:
        doc = json.dumps(value, sort_keys=True, ensure_ascii=False).encode("utf-8")
        buf.write(struct.pack("<BQ", 0, len(doc)))
        buf.write(doc)


def _read_blocks(payload: bytes) -> dict[str, Any]:
    out: dict[str, Any] = {}
    view = memoryview(payload)
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointCorruptError("block runs past the end of the payload")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    while pos < len(view):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (kind,) = struct.unpack("<B", take(1))
        if kind == 0:
            (n,) = struct.unpack("<Q", take(8))
            out[name] = json.loads(take(n).decode("utf-8"))
        elif kind == 1:
            (ndim,) = struct.unpack("<B", take(1))
            shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        else:
            raise CheckpointCorruptError(f"unknown block kind {kind}")
    return out


def _lstm_arrays(prefix: str, p: LstmParams) -> dict[str, np.ndarray]:
    return {f"{prefix}.W": p.W.value, f"{prefix}.U": p.U.value, f"{prefix}.b": p.b.value}


def _lstm_from(blocks: dict, prefix: str) -> LstmParams:
    return LstmParams(blocks[f"{prefix}.W"], blocks[f"{prefix}.U"], blocks[f"{prefix}.b"])


def model_to_bytes(model: SequenceModel) -> bytes:
    meta = {
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture,
        "dev_score": model.dev_score,
        "layers": 0 if model.encoder is None else len(model.encoder.layers),
    }
    providers = []
    arrays: dict[str, np.ndarray] = {}
    for i, p in enumerate(model.stack.providers):
        key = f"provider{i}"
        desc = {"kind": p.kind, "name": p.name, "trainable": p.trainable, "dim": p.dim}
        if isinstance(p, StaticTable):
            desc["vocab"] = sorted(p.vocab, key=p.vocab.get)
            arrays[f"{key}.matrix"] = p.matrix.value
            arrays[f"{key}.oov"] = p.oov_vector
        elif isinstance(p, PrecomputedContextual):
            keys = list(p.store)
            desc["keys"] = [[sid, idx] for sid, idx in keys]
            arrays[f"{key}.vectors"] = (
                np.array([p.store[k] for k in keys]) if keys else np.zeros((0, p.dim))
            )
        elif isinstance(p, CharEncoder):
            desc["chars"] = sorted(p.chars, key=p.chars.get)
            arrays[f"{key}.table"] = p.table.value
            arrays.update(_lstm_arrays(f"{key}.fwd", p.fwd))
            arrays.update(_lstm_arrays(f"{key}.bwd", p.bwd))
        providers.append(desc)
    if model.encoder is not None:
        for l, (fw, bw) in enumerate(model.encoder.layers):
            arrays.update(_lstm_arrays(f"encoder.layer{l}.fwd", fw))
            arrays.update(_lstm_arrays(f"encoder.layer{l}.bwd", bw))
    arrays["proj.W"] = model.proj_W.value
    arrays["proj.b"] = model.proj_b.value
    arrays["crf.A"] = model.transitions.A.value
    arrays["crf.start"] = model.transitions.start.value
    arrays["crf.end"] = model.transitions.end.value

    buf = io.BytesIO()
    _write_block(buf, "meta", meta)
    _write_block(buf, "config", model.config)
    _write_block(buf, "tagset", model.tagset.to_records())
    _write_block(buf, "stack", providers)
    for name, arr in arrays.items():
        _write_block(buf, name, arr)
    payload = buf.getvalue()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(payload), hashlib.sha256(payload).digest())
    return header + payload


def model_from_bytes(data: bytes) -> SequenceModel:
    if len(data) < _HEADER.size:
        raise CheckpointCorruptError("file shorter than the checkpoint header")
    magic, version, length, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointCorruptError("not a seqtag checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}"
        )
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise CheckpointCorruptError(
            f"payload is {len(payload)} bytes, header says {length} (truncated or padded)"
        )
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointCorruptError("checksum mismatch")
    try:
        blocks = _read_blocks(payload)
        return _assemble(blocks)
    except CheckpointError:
        raise
    except (KeyError, ValueError, struct.error, UnicodeDecodeError) as exc:
        raise CheckpointCorruptError(f"malformed checkpoint content: {exc}") from exc


def _assemble(blocks: dict[str, Any]) -> SequenceModel:
    meta = blocks["meta"]
    providers = []
    for i, desc in enumerate(blocks["stack"]):
        key = f"provider{i}"
        kind = desc["kind"]
        if kind == "static":
            vocab = {w: r for r, w in enumerate(desc["vocab"])}
            providers.append(StaticTable(vocab, blocks[f"{key}.matrix"], blocks[f"{key}.oov"],
                                         desc["name"], desc["trainable"]))
        elif kind == "precomputed":
            vecs = blocks[f"{key}.vectors"]
            store = {(sid, int(idx)): vecs[j] for j, (sid, idx) in enumerate(desc["keys"])}
            providers.append(PrecomputedContextual(store, desc["dim"], desc["name"]))
        elif kind == "char":
            chars = {c: j + 1 for j, c in enumerate(desc["chars"])}
            providers.append(CharEncoder(chars, blocks[f"{key}.table"], _lstm_from(blocks, f"{key}.fwd"),
                                         _lstm_from(blocks, f"{key}.bwd"), desc["name"], desc["trainable"]))
        else:
            raise CheckpointCorruptError(f"unknown provider kind {kind!r}")
    encoder = None
    if meta["architecture"] == "bilstm-crf":
        encoder = BiLstmEncoder([
            (_lstm_from(blocks, f"encoder.layer{l}.fwd"), _lstm_from(blocks, f"encoder.layer{l}.bwd"))
            for l in range(meta["layers"])
        ])
    trans = crf.Transitions(blocks["crf.A"], blocks["crf.start"], blocks["crf.end"])
    model = SequenceModel(
        EmbeddingStack(providers), encoder, blocks["proj.W"], blocks["proj.b"], trans,
        TagSet.from_records(blocks["tagset"]), blocks["config"],
    )
    model.dev_score = meta["dev_score"]
    return model


def save_model(model: SequenceModel, path: str | os.PathLike) -> None:
    """Write atomically: a temp file in the same directory is renamed into place."""
    path = Path(path)
    data = model_to_bytes(model)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path: str | os.PathLike) -> SequenceModel:
    return model_from_bytes(Path(path).read_bytes())
