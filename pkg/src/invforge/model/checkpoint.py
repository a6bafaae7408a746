"""Checkpoint container: one JSON header line, then raw little-endian float64 tensors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..graphs import Vocabulary
from .ggnn import GgnnConfig
from .rnn import RnnConfig

FORMAT = "invforge-checkpoint"
VERSION = 1
MODELS = ("ggnn", "nocontext", "rnn")


@dataclass
class Checkpoint:
    model: str
    config: GgnnConfig | RnnConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)


def config_for(model: str, values: dict | None = None):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    cls = RnnConfig if model == "rnn" else GgnnConfig
    return cls(**(values or {}))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors, offset, blobs = [], 0, []
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format": FORMAT,
        "version": VERSION,
        "model": ckpt.model,
        "config": ckpt.config.to_json(),
        "vocab": ckpt.vocab.to_json(),
        "extra": ckpt.extra,
        "tensors": tensors,
    }
    data = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n" + b"".join(blobs)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    body = memoryview(raw)[nl + 1 :]
    params = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"])) if t["shape"] else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=t["offset"]).astype(np.float64)
        params[t["name"]] = arr.reshape(t["shape"])
    return Checkpoint(
        header["model"],
        config_for(header["model"], header["config"]),
        Vocabulary.from_json(header["vocab"]),
        params,
        header.get("extra", {}),
    )
