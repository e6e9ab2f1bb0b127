"""Procedural ground-truth pattern corpora.

Three families of single-channel [0,1] patterns:

* ``lens_dirt``    - 30..60 bright points blurred with a sigma=5 Gaussian.
* ``rain_streaks`` - anti-aliased slanted line segments, lightly blurred.
                     Simplified stand-in; not a physically based rain model.
* ``snow_flakes``  - radially decaying Gaussian blobs. Simplified stand-in.

A corpus is a directory of NNNN.png files plus a manifest recording the
family, parameters, seed, and per-file content hashes. Generation is
deterministic: image ``i`` uses an rng seeded by ``(seed, i)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.draw import line_aa

from .images import load_pattern_png, save_pattern_png

MANIFEST_NAME = "manifest.json"

# rain/snow are procedural stand-ins, flagged as such in corpus manifests
STANDIN_FAMILIES = {"rain_streaks", "snow_flakes"}


def gen_lens_dirt(size: int, rng: np.random.Generator, min_points: int = 30,
                  max_points: int = 60, sigma: float = 5.0) -> np.ndarray:
    """Bright dirt specks on a dark background.

    Points are placed without replacement (pre-blur mass equals the point
    count exactly) and blurred with a normalized Gaussian, kernel radius
    ceil(3*sigma), periodic boundaries so no mass leaks at the edges. The
    result is rescaled to peak at 1.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    n = int(rng.integers(min_points, max_points + 1))
    img = np.zeros((size, size), dtype=np.float64)
    flat = rng.choice(size * size, size=n, replace=False)
    img[np.unravel_index(flat, img.shape)] = 1.0
    img = gaussian_filter(img, sigma=sigma, mode="wrap", truncate=3.0)
    peak = img.max()
    if peak > 0:
        img /= peak
    return img.astype(np.float32)


def gen_rain_streaks(size: int, rng: np.random.Generator,
                     angle_deg: tuple[float, float] = (70.0, 110.0),
                     streak_count: tuple[int, int] = (80, 200),
                     length: tuple[float, float] = (15.0, 40.0),
                     blur_sigma: float = 0.5) -> np.ndarray:
    """Slanted anti-aliased streaks, angle measured from horizontal."""
    if size < 32:
        raise ValueError(f"size must be >= 32, got {size}")
    img = np.zeros((size, size), dtype=np.float64)
    n = int(rng.integers(streak_count[0], streak_count[1] + 1))
    for _ in range(n):
        ln = rng.uniform(length[0], length[1])
        theta = math.radians(rng.uniform(angle_deg[0], angle_deg[1]))
        cy, cx = rng.uniform(0, size, size=2)
        dr, dc = math.sin(theta) * ln / 2, math.cos(theta) * ln / 2
        r0 = int(np.clip(round(cy - dr), 0, size - 1))
        c0 = int(np.clip(round(cx - dc), 0, size - 1))
        r1 = int(np.clip(round(cy + dr), 0, size - 1))
        c1 = int(np.clip(round(cx + dc), 0, size - 1))
        rr, cc, val = line_aa(r0, c0, r1, c1)
        intensity = rng.uniform(0.3, 1.0)
        img[rr, cc] = np.maximum(img[rr, cc], val * intensity)
    # truncate=2.0 keeps the blur footprint to radius 1 at sigma 0.5
    img = gaussian_filter(img, sigma=blur_sigma, truncate=2.0)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def gen_snow_flakes(size: int, rng: np.random.Generator,
                    flake_count: tuple[int, int] = (40, 120),
                    radius: tuple[float, float] = (1.0, 4.0),
                    intensity: tuple[float, float] = (0.5, 1.0)) -> np.ndarray:
    """Radially decaying Gaussian blobs at uniform positions."""
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    img = np.zeros((size, size), dtype=np.float64)
    n = int(rng.integers(flake_count[0], flake_count[1] + 1))
    for _ in range(n):
        r = rng.uniform(radius[0], radius[1])
        peak = rng.uniform(intensity[0], intensity[1])
        cy, cx = rng.uniform(0, size, size=2)
        rad = int(math.ceil(3 * r))
        y0, y1 = max(0, int(cy) - rad), min(size, int(cy) + rad + 1)
        x0, x1 = max(0, int(cx) - rad), min(size, int(cx) + rad + 1)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        img[y0:y1, x0:x1] += peak * np.exp(-d2 / (2 * r * r))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


FAMILIES = {
    "lens_dirt": gen_lens_dirt,
    "rain_streaks": gen_rain_streaks,
    "snow_flakes": gen_snow_flakes,
}


@dataclass(frozen=True)
class PatternSpec:
    """Recipe for one corpus: family, image size/count, seed, parameter overrides."""

    family: str
    size: int = 256
    count: int = 2000
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        if self.size < 16:
            raise ValueError(f"size must be >= 16, got {self.size}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")


def generate_pattern_image(spec: PatternSpec, index: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, index])
    return FAMILIES[spec.family](spec.size, rng, **spec.params)


def build_corpus(spec: PatternSpec, out_dir: str | Path) -> dict:
    """Write spec.count pattern PNGs plus a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create corpus directory {out_dir}: {e}") from e
    files = []
    for i in range(spec.count):
        img = generate_pattern_image(spec, i)
        name = f"{i:04d}.png"
        path = out_dir / name
        try:
            save_pattern_png(img, path)
        except OSError as e:
            raise OSError(f"failed writing {path}: {e}") from e
        files.append({"name": name, "sha256": hashlib.sha256(path.read_bytes()).hexdigest()})
    manifest = {
        "kind": "pattern_corpus",
        "family": spec.family,
        "size": spec.size,
        "count": spec.count,
        "seed": spec.seed,
        "params": dict(spec.params),
        "standin": spec.family in STANDIN_FAMILIES,
        "files": files,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_corpus(path: str | Path) -> tuple[list[np.ndarray], dict]:
    """Read a corpus directory back as float32 [0,1] arrays plus its manifest."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no corpus manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    images = [load_pattern_png(path / f["name"]) for f in manifest["files"]]
    return images, manifest
