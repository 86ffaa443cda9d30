"""Checkpoint file format.

Layout (all integers little-endian):

    8 bytes   magic "PUNERCKP"
    u32       format version (currently 1)
    u64       manifest length in bytes
    ...       UTF-8 JSON manifest: model config, vocabulary symbols,
              global step, optimizer step, and a tensor directory of
              {name, shape, offset} entries (offsets into the data section)
    ...       raw little-endian float32 tensor data, in directory order

Optimizer moment tensors, when saved, live in the same directory under
"opt.m.*" / "opt.v.*" names. Reloading reproduces bit-identical forward
outputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .network import Seq2Seq
from .vocab import Vocab

MAGIC = b"PUNERCKP"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    vocab: Vocab
    params: dict[str, np.ndarray]
    global_step: int = 0
    optimizer_state: dict[str, np.ndarray] | None = None
    optimizer_step: int = 0


def save_checkpoint(
    model: Seq2Seq,
    path: str | Path,
    optimizer=None,
    global_step: int = 0,
) -> None:
    """Write the model (and optionally AdamW moments) to ``path``."""
    tensors: list[tuple[str, np.ndarray]] = [
        (name, np.ascontiguousarray(t, dtype="<f4")) for name, t in model.params.items()
    ]
    if optimizer is not None:
        tensors.extend(
            (name, np.ascontiguousarray(t, dtype="<f4"))
            for name, t in sorted(optimizer.state_tensors().items())
        )
    directory = []
    offset = 0
    for name, t in tensors:
        directory.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.nbytes
    manifest = {
        "config": model.config.to_dict(),
        "vocab": list(model.vocab.symbols),
        "global_step": int(global_step),
        "optimizer_step": int(optimizer.step_count) if optimizer is not None else 0,
        "tensors": directory,
    }
    blob = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in tensors:
            fh.write(t.tobytes())


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version} (expected {VERSION})"
        )
    (manifest_len,) = struct.unpack_from("<Q", raw, len(MAGIC) + 4)
    header_end = len(MAGIC) + 12
    if header_end + manifest_len > len(raw):
        raise CheckpointError(f"{path}: truncated file (manifest cut short)")
    try:
        manifest = json.loads(raw[header_end : header_end + manifest_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc.msg}") from None
    data = raw[header_end + manifest_len :]

    params: dict[str, np.ndarray] = {}
    opt_state: dict[str, np.ndarray] = {}
    expected_end = 0
    for entry in manifest["tensors"]:
        shape = tuple(int(x) for x in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        end = start + count * 4
        if start != expected_end:
            raise CheckpointError(
                f"{path}: tensor {entry['name']!r} offset {start} does not match "
                f"manifest order (expected {expected_end})"
            )
        if end > len(data):
            raise CheckpointError(f"{path}: truncated file (tensor data cut short)")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start).reshape(shape)
        if entry["name"].startswith("opt."):
            opt_state[entry["name"]] = arr.copy()
        else:
            params[entry["name"]] = arr.copy()
        expected_end = end
    if expected_end != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")

    config = ModelConfig.from_dict(manifest["config"])
    vocab = Vocab(symbols=tuple(manifest["vocab"]))
    ckpt = ModelCheckpoint(
        config=config,
        vocab=vocab,
        params=params,
        global_step=int(manifest.get("global_step", 0)),
        optimizer_state=opt_state or None,
        optimizer_step=int(manifest.get("optimizer_step", 0)),
    )
    # shape validation against the config-derived parameter manifest
    model_from_checkpoint(ckpt)
    return ckpt


def model_from_checkpoint(ckpt: ModelCheckpoint) -> Seq2Seq:
    try:
        return Seq2Seq(ckpt.config, ckpt.vocab, params=ckpt.params)
    except ValueError as exc:
        raise CheckpointError(f"checkpoint tensors inconsistent with config: {exc}") from None
