"""Checkpoint directories: ``model.json`` (config + parameter table) and ``params.bin``."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..spectro import PlaneStats
from .vgg import VggConfig, VggNet

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: VggConfig
    state: dict  # name -> array, includes batch-norm running statistics
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: VggNet, **metadata):
        return cls(model.config, {k: v.copy() for k, v in model.state().items()}, dict(metadata))

    def build_model(self, dtype=np.float32) -> VggNet:
        model = VggNet(self.config, seed=0, dtype=dtype)
        model.load_state(self.state)
        return model

    @property
    def input_stats(self) -> PlaneStats:
        return PlaneStats.from_dict(self.metadata["input_stats"])


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    table = []
    offset = 0
    chunks = []
    for name in sorted(ckpt.state):
        arr = np.ascontiguousarray(ckpt.state[name], dtype="<f4")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "parameters": table,
        "blob_bytes": offset,
        "metadata": ckpt.metadata,
    }
    (path / "params.bin").write_bytes(b"".join(chunks))
    (path / "model.json").write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        doc = json.loads((path / "model.json").read_text())
        blob = (path / "params.bin").read_bytes()
    except (FileNotFoundError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint at {path}: {e}") from e
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('format_version')!r} unsupported")
    if len(blob) != doc["blob_bytes"]:
        raise CheckpointError(f"params.bin has {len(blob)} bytes, table says {doc['blob_bytes']}")
    config = VggConfig.from_dict(doc["config"])
    state = {}
    for entry in doc["parameters"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + 4 * n
        if end > len(blob):
            raise CheckpointError(f"{entry['name']} runs past the end of params.bin")
        state[entry["name"]] = np.frombuffer(blob, "<f4", n, entry["offset"]).reshape(entry["shape"]).copy()
    ckpt = Checkpoint(config, state, doc.get("metadata", {}))
    try:
        ckpt.build_model()
    except Exception as e:
        raise CheckpointError(f"parameter table does not match config: {e}") from e
    return ckpt


def write_history(history, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_balanced_acc"])
        for epoch, loss, val in history:
            w.writerow([epoch, f"{loss:.6f}", f"{val:.6f}"])


def read_history(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [(int(r["epoch"]), float(r["train_loss"]), float(r["val_balanced_acc"])) for r in rows]
