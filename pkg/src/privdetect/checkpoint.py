"""Binary checkpoint container.

Layout (little-endian)::

    b"PMLC" | u32 version | u32 meta_len | meta (UTF-8 JSON) | u32 n_tensors
    then per tensor: u16 name_len | name | u8 ndim | u32 * ndim dims | f64 * prod(dims)

The metadata holds the label vocabulary, the full configuration, the word
list of the embedding table and the seed. Trained parameters and the
frozen inputs (word vectors, OOV vector, label embeddings, adjacency) are
stored as named tensors.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tensor
from .config import TrainConfig
from .data import EmbeddingTable, LabelVocabulary
from .model import Model

MAGIC = b"PMLC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def save_checkpoint(model: Model, path, extra: dict | None = None) -> None:
    meta = {
        "writer": f"privdetect {__version__}",
        "labels": list(model.vocab.names),
        "config": model.config.to_dict(),
        "words": list(model.table.words),
        "oov_policy": model.table.oov_policy,
        "seed": model.config.seed,
    }
    if extra:
        meta["extra"] = extra
    tensors = {name: p.data for name, p in model.params.items()}
    tensors["frozen.embeddings"] = model.table.matrix
    tensors["frozen.oov"] = model.table.oov
    tensors["frozen.label_embeddings"] = model.label_embeddings
    tensors["frozen.adjacency"] = model.adjacency
    meta_raw = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_raw)), meta_raw,
             struct.pack("<I", len(tensors))]
    parts += [_pack_tensor(name, arr) for name, arr in tensors.items()]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (metadata, tensors) without building a model."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    r = _Reader(buf, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: corrupt metadata block") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return meta, tensors


def load_checkpoint(path) -> Model:
    meta, tensors = read_container(path)
    try:
        config = TrainConfig.from_dict(meta["config"])
        vocab = LabelVocabulary(meta["labels"])
        table = EmbeddingTable(meta["words"], tensors.pop("frozen.embeddings"),
                               tensors.pop("frozen.oov"), meta.get("oov_policy", ""))
        label_emb = tensors.pop("frozen.label_embeddings")
        adjacency = tensors.pop("frozen.adjacency")
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing entry {exc}") from None
    params = {name: Tensor(arr, requires_grad=True) for name, arr in tensors.items()}
    model = Model(config, vocab, table, adjacency, params, label_embeddings=label_emb)
    expected = set(Model.parameter_names(config))
    if set(params) != expected:
        missing = sorted(expected - set(params))
        extra = sorted(set(params) - expected)
        raise CheckpointError(f"{path}: parameter mismatch (missing {missing}, unexpected {extra})")
    return model


def describe(path) -> str:
    meta, tensors = read_container(path)
    cfg = meta.get("config", {})
    lines = [f"checkpoint {path}", f"  format version {VERSION}, written by {meta.get('writer')}",
             f"  labels ({len(meta.get('labels', []))}): {', '.join(meta.get('labels', []))}",
             f"  variant {cfg.get('variant')}, fusion {cfg.get('fusion')}, "
             f"gcn_layers {cfg.get('gcn_layers')}, seed {meta.get('seed')}",
             f"  vocabulary {len(meta.get('words', []))} words"]
    total = 0
    for name, arr in tensors.items():
        total += arr.size
        lines.append(f"  {name:<28} {'x'.join(map(str, arr.shape)) or 'scalar':>12}  "
                     f"norm={np.linalg.norm(arr):.6g}")
    lines.append(f"  {total} values")
    return "\n".join(lines)
