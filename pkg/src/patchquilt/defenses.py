"""Smoothing-based input-transformation defenses."""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image

DEFAULT_JPEG_QUALITY = 75
DEFAULT_KEEP_FRACTION = 0.5


def jpeg_defense(image: torch.Tensor, quality: int = DEFAULT_JPEG_QUALITY) -> torch.Tensor:
    """Encode to baseline JPEG at the given quality and decode back.

    Accepts (H, W), (1, H, W) or (3, H, W) in [0, 1]; returns the same shape.
    """
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in 1..100, got {quality}")
    arr = image.detach().cpu().numpy()
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (C, H, W) with C in {{1, 3}}, got {arr.shape}")
    u8 = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)
    if arr.shape[0] == 1:
        pil = Image.fromarray(u8[0], mode="L")
    else:
        pil = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    try:
        pil.save(buf, format="JPEG", quality=quality)
        buf.seek(0)
        back = Image.open(buf)
        back.load()
    except OSError as e:
        raise OSError(f"JPEG round trip failed at quality {quality}: {e}") from e
    out = np.asarray(back, dtype=np.float32) / 255.0
    out = out[None] if out.ndim == 2 else out.transpose(2, 0, 1)
    result = torch.from_numpy(out.copy()).to(image.dtype)
    return result[0] if squeeze else result


def lowpass_defense(image: torch.Tensor, keep_fraction: float = DEFAULT_KEEP_FRACTION
                    ) -> torch.Tensor:
    """Zero every Fourier coefficient outside a centered radial mask.

    ``keep_fraction`` scales the kept radius relative to the half-diagonal of
    the spectrum, so keep_fraction=1 keeps everything (identity).
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    squeeze = image.ndim == 2
    x = image[None] if squeeze else image
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (H, W), got {tuple(image.shape)}")
    h, w = x.shape[-2], x.shape[-1]
    fy = torch.fft.fftshift(torch.fft.fftfreq(h)) * h
    fx = torch.fft.fftshift(torch.fft.fftfreq(w)) * w
    radius = torch.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    max_radius = float(np.hypot(h / 2, w / 2))
    mask = (radius <= keep_fraction * max_radius).to(x.dtype)
    spectrum = torch.fft.fftshift(torch.fft.fft2(x.to(torch.float64)), dim=(-2, -1))
    filtered = torch.fft.ifft2(torch.fft.ifftshift(spectrum * mask, dim=(-2, -1)))
    out = torch.clamp(filtered.real, 0.0, 1.0).to(image.dtype)
    return out[0] if squeeze else out
