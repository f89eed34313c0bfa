"""Checkpoint directory format.

One directory per checkpoint: meta.json (config snapshot, epoch, stage, RNG
states, blob index with sha256 checksums) plus one raw little-endian fp32
blob per named parameter under params/, momentum buffers under optim/, and
the frozen mask table under masks/ once it exists. Loading verifies every
checksum; save-then-load is the identity on parameters, optimizer state,
epoch and RNG state.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from sctreid.errors import CheckpointError
from sctreid.recombination import MaskTable

CHECKPOINT_VERSION = 1


def _write_blob(root, rel, array):
    path = os.path.join(root, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    payload = array.tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)
    return {"shape": list(array.shape), "dtype": str(array.dtype),
            "sha256": hashlib.sha256(payload).hexdigest()}


def _read_blob(root, rel, entry):
    with open(os.path.join(root, rel), "rb") as fh:
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != entry["sha256"]:
        raise CheckpointError(f"blob {rel} failed its checksum")
    return np.frombuffer(payload, dtype=entry["dtype"]).reshape(entry["shape"]).copy()


@dataclass
class CheckpointData:
    epoch_next: int
    stage: str
    config_snapshot: dict
    params: dict                    # name -> fp32 numpy array
    momentum: dict                  # param name -> fp32 numpy array
    torch_rng: torch.Tensor
    numpy_rng_state: dict
    extra: dict = field(default_factory=dict)
    mask_table: MaskTable = None


def save_checkpoint(directory, *, epoch_next, stage, config_snapshot, params,
                    momentum, torch_rng, numpy_rng_state, extra=None,
                    mask_table=None):
    """params / momentum: name -> torch tensor (stored as little-endian fp32)."""
    os.makedirs(directory, exist_ok=True)
    index = {}
    for name, tensor in params.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        index[f"params/{name}.bin"] = _write_blob(directory, f"params/{name}.bin", arr)
    for name, tensor in momentum.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        index[f"optim/{name}.bin"] = _write_blob(directory, f"optim/{name}.bin", arr)
    index["rng/torch.bin"] = _write_blob(
        directory, "rng/torch.bin", torch_rng.numpy().astype(np.uint8))
    if mask_table is not None:
        mask_table.save(os.path.join(directory, "masks"))
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch_next": int(epoch_next),
        "stage": stage,
        "config": config_snapshot,
        "numpy_rng_state": numpy_rng_state,
        "has_mask_table": mask_table is not None,
        "extra": extra or {},
        "blobs": index,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_checkpoint(directory):
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.exists(meta_path):
        raise CheckpointError(f"no checkpoint at {directory}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    params, momentum = {}, {}
    torch_rng = None
    for rel, entry in meta["blobs"].items():
        arr = _read_blob(directory, rel, entry)
        if rel.startswith("params/"):
            params[rel[len("params/"):-len(".bin")]] = arr
        elif rel.startswith("optim/"):
            momentum[rel[len("optim/"):-len(".bin")]] = arr
        elif rel == "rng/torch.bin":
            torch_rng = torch.from_numpy(arr.astype(np.uint8))
    mask_table = None
    if meta.get("has_mask_table"):
        mask_table = MaskTable.load(os.path.join(directory, "masks"))
    return CheckpointData(
        epoch_next=meta["epoch_next"], stage=meta["stage"],
        config_snapshot=meta["config"], params=params, momentum=momentum,
        torch_rng=torch_rng, numpy_rng_state=meta["numpy_rng_state"],
        extra=meta.get("extra", {}), mask_table=mask_table)


def latest_checkpoint(checkpoints_dir):
    """Highest-epoch checkpoint directory under checkpoints_dir, or None."""
    if not os.path.isdir(checkpoints_dir):
        return None
    candidates = [d for d in os.listdir(checkpoints_dir) if d.startswith("epoch_")]
    if not candidates:
        return None
    best = max(candidates, key=lambda d: int(d.split("_")[1]))
    return os.path.join(checkpoints_dir, best)
