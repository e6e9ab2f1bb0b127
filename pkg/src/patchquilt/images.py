"""PNG I/O helpers. Internal convention: float32 in [0, 1], channels-first."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def save_pattern_png(pattern, path: str | Path):
    """Write a single-channel [0,1] pattern as 8-bit grayscale PNG."""
    arr = pattern.detach().cpu().numpy() if isinstance(pattern, torch.Tensor) else np.asarray(pattern)
    if arr.ndim != 2:
        raise ValueError(f"pattern must be 2-D, got shape {arr.shape}")
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8), mode="L").save(path)


def load_pattern_png(path: str | Path) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_image_png(image, path: str | Path):
    """Write a (C, H, W) or (H, W) image in [0,1] as PNG (grayscale or RGB)."""
    arr = image.detach().cpu().numpy() if isinstance(image, torch.Tensor) else np.asarray(image)
    if arr.ndim == 2:
        return save_pattern_png(arr, path)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (C, H, W) with C in {{1, 3}}, got {arr.shape}")
    if arr.shape[0] == 1:
        return save_pattern_png(arr[0], path)
    u8 = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(path)


def load_image_png(path: str | Path) -> np.ndarray:
    """Read a PNG as float32 (C, H, W) in [0,1]; grayscale stays single channel."""
    img = Image.open(path)
    if img.mode in ("L", "I;16", "I"):
        return np.asarray(img.convert("L"), dtype=np.float32)[None] / 255.0
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)
