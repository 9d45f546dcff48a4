"""Single-file checkpoints: named tensors plus a JSON metadata header.

The container is a safetensors file. Its string metadata carries the caller's
JSON metadata under ``edgegan`` and a SHA-256 digest of every tensor's
name, dtype, shape and bytes under ``sha256``. Loading verifies the digest
before anything is returned.
"""

import hashlib
import json
import os
from pathlib import Path

import torch
from safetensors import SafetensorError
from safetensors.torch import load as st_load
from safetensors.torch import save as st_save

from .errors import CheckpointError

FORMAT = "edgegan-checkpoint/1"


def _digest(tensors):
    h = hashlib.sha256()
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(json.dumps(list(t.shape)).encode())
        h.update(t.reshape(-1).view(torch.uint8).numpy().tobytes() if t.numel() else b"")
    return h.hexdigest()


def save_tensors(path, tensors, metadata=None):
    path = Path(path)
    tensors = {k: v.detach().cpu().contiguous().clone() for k, v in tensors.items()}
    header = {
        "format": FORMAT,
        "edgegan": json.dumps(metadata or {}),
        "sha256": _digest(tensors),
    }
    blob = st_save(tensors, metadata=header)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return path


def load_tensors(path):
    """Return (tensors, metadata) or raise CheckpointError."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        header_len = int.from_bytes(blob[:8], "little")
        header = json.loads(blob[8:8 + header_len])
        meta = header.get("__metadata__") or {}
        tensors = st_load(blob)
    except (SafetensorError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an edgegan checkpoint")
    if _digest(tensors) != meta.get("sha256"):
        raise CheckpointError(f"checksum mismatch in {path}: file is corrupt")
    try:
        metadata = json.loads(meta["edgegan"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad metadata header in {path}") from exc
    return tensors, metadata
