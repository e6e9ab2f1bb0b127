"""Checkpoint directory format: manifest.json plus one raw float32 blob per network.

Layout::

    <dir>/manifest.json   architecture, tensor names/shapes/offsets, training metadata
    <dir>/anchor.bin      row-major little-endian float32, tensors back to back
    <dir>/hbridge.bin
    <dir>/vbridge.bin
    <dir>/critic.bin

Tensor entries are sorted by name so save/load round-trips are byte-identical.
The same container (manifest + data.bin) doubles as a lossless export for
arbitrary named float arrays (patterns, feature dumps).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from .models import QuiltArch, QuiltGenerator

MANIFEST_NAME = "manifest.json"
_DTYPE = "<f4"

NETWORK_FILES = {
    "anchor": "anchor.bin",
    "hbridge": "hbridge.bin",
    "vbridge": "vbridge.bin",
    "critic": "critic.bin",
}


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack_tensors(named: dict[str, np.ndarray]) -> tuple[bytes, list[dict]]:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype=_DTYPE)
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), entries


def _unpack_tensors(blob: bytes, entries: list[dict]) -> dict[str, np.ndarray]:
    out = {}
    for e in entries:
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ValueError(f"blob truncated at tensor {e['name']}")
        arr = np.frombuffer(raw, dtype=_DTYPE).reshape(e["shape"])
        out[e["name"]] = arr
    return out


def _manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()


def save_checkpoint(model: QuiltGenerator, path: str | Path) -> Path:
    """Write the model to a checkpoint directory (atomic per file, manifest last)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    nets = {
        "anchor": model.anchor_net,
        "hbridge": model.hbridge_net,
        "vbridge": model.vbridge_net,
        "critic": model.critic,
    }
    networks = {}
    for key, net in nets.items():
        named = {n: t.detach().cpu().numpy() for n, t in net.state_dict().items()}
        blob, entries = _pack_tensors(named)
        _atomic_write(path / NETWORK_FILES[key], blob)
        networks[key] = {"file": NETWORK_FILES[key], "tensors": entries}
    manifest = {
        "format_version": 1,
        "kind": "quilt_checkpoint",
        "dtype": "float32",
        "byte_order": "little",
        "arch": dataclasses.asdict(model.arch),
        "networks": networks,
        "training_meta": model.training_meta,
    }
    _atomic_write(path / MANIFEST_NAME, _manifest_bytes(manifest))
    return path


def load_checkpoint(path: str | Path) -> QuiltGenerator:
    """Load a checkpoint directory, validating every tensor shape against the manifest."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("kind") != "quilt_checkpoint":
        raise ValueError(f"{path} is not a quilt checkpoint")
    arch = QuiltArch(**manifest["arch"])
    model = QuiltGenerator(arch, seed=0, training_meta=manifest.get("training_meta", {}))
    nets = {
        "anchor": model.anchor_net,
        "hbridge": model.hbridge_net,
        "vbridge": model.vbridge_net,
        "critic": model.critic,
    }
    for key, net in nets.items():
        info = manifest["networks"][key]
        blob = (path / info["file"]).read_bytes()
        named = _unpack_tensors(blob, info["tensors"])
        state = net.state_dict()
        if set(named) != set(state):
            raise ValueError(f"network {key}: tensor names do not match the architecture")
        for name, arr in named.items():
            if tuple(arr.shape) != tuple(state[name].shape):
                raise ValueError(f"network {key}: tensor {name} has shape {arr.shape}, "
                                 f"architecture expects {tuple(state[name].shape)}")
        net.load_state_dict({n: torch.from_numpy(a.copy()) for n, a in named.items()})
    return model


def checkpoint_digest(path: str | Path) -> str:
    """SHA-256 over the manifest and all blobs, for frozen-parameter checks."""
    path = Path(path)
    h = hashlib.sha256()
    for name in sorted(p.name for p in path.iterdir() if p.is_file()):
        h.update(name.encode())
        h.update((path / name).read_bytes())
    return h.hexdigest()


def save_array_container(arrays: dict[str, np.ndarray], path: str | Path) -> Path:
    """Lossless float32 export of named arrays using the checkpoint container."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob, entries = _pack_tensors(arrays)
    _atomic_write(path / "data.bin", blob)
    manifest = {
        "format_version": 1,
        "kind": "array_container",
        "dtype": "float32",
        "byte_order": "little",
        "tensors": entries,
    }
    _atomic_write(path / MANIFEST_NAME, _manifest_bytes(manifest))
    return path


def load_array_container(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads((path / MANIFEST_NAME).read_text())
    if manifest.get("kind") != "array_container":
        raise ValueError(f"{path} is not an array container")
    return _unpack_tensors((path / "data.bin").read_bytes(), manifest["tensors"])
