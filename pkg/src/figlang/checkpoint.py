"""Checkpoint directories: manifest.json + weights.bin + tokenizer.json.

weights.bin is raw little-endian float32, row-major, tensors packed in the
parameter-dict order recorded by the manifest. Loading restores float64
working copies; save(load(x)) is bit-identical to x.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .config import ModelConfig, TrainConfig
from .errors import DataError

FORMAT_VERSION = 1
DTYPE = "float32-le"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def save_checkpoint(out_dir, params: dict[str, Tensor], *, model_config: ModelConfig,
                    task: str, tokenizer_path, train_config: TrainConfig | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tok_dst = out / "tokenizer.json"
    src = Path(tokenizer_path)
    if src.resolve() != tok_dst.resolve():
        shutil.copyfile(src, tok_dst)

    tensors = []
    offset = 0
    blobs = []
    for name, t in params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(t.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    with open(out / "weights.bin", "wb") as f:
        for raw in blobs:
            f.write(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": DTYPE,
        "task": task,
        "model_config": model_config.to_dict(),
        "train_config": asdict(train_config) if train_config is not None else None,
        "tokenizer_sha256": sha256_file(tok_dst),
        "tensors": tensors,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return out


class CheckpointBundle:
    def __init__(self, params, model_config, train_config, task, manifest, path):
        self.params = params
        self.model_config = model_config
        self.train_config = train_config
        self.task = task
        self.manifest = manifest
        self.path = path
        self.tokenizer_path = Path(path) / "tokenizer.json"


def load_checkpoint(ckpt_dir) -> CheckpointBundle:
    root = Path(ckpt_dir)
    man_path = root / "manifest.json"
    if not man_path.is_file():
        raise DataError(f"not a checkpoint directory (no manifest.json): {root}")
    with open(man_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format_version: "
                        f"{manifest.get('format_version')!r}")
    if manifest.get("dtype") != DTYPE:
        raise DataError(f"unsupported checkpoint dtype: {manifest.get('dtype')!r}")

    tok_path = root / "tokenizer.json"
    if not tok_path.is_file():
        raise DataError(f"checkpoint missing tokenizer.json: {root}")
    got = sha256_file(tok_path)
    want = manifest.get("tokenizer_sha256")
    if got != want:
        raise DataError(f"tokenizer hash mismatch: manifest says {want}, file is {got}")

    blob = (root / "weights.bin").read_bytes()
    params: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        n = entry["nbytes"]
        start = entry["offset"]
        raw = blob[start:start + n]
        if len(raw) != n:
            raise DataError(f"weights.bin truncated at tensor {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).astype(np.float64)
        params[entry["name"]] = Tensor(arr, requires_grad=True)

    model_config = ModelConfig.from_dict(manifest["model_config"])
    tc = manifest.get("train_config")
    train_config = TrainConfig(**tc) if tc else None
    return CheckpointBundle(params, model_config, train_config,
                            manifest["task"], manifest, root)
