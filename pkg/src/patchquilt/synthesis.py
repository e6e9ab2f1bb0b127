"""Composing a generated pattern onto a benign image.

Two modes, both differentiable with respect to the pattern (away from the
clamp boundaries):

* additive:    I_adv = clip(I + gamma * P)
* depth_aware: attenuates the pattern with scene depth and adds a distance
               veil; an approximation documented as such, not a physically
               calibrated model.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

DEPTH_SCALE = 100.0  # depth in [0,1] maps to [0, 100] before exponential falloff


@dataclass(frozen=True)
class SynthesisConfig:
    mode: str = "additive"  # "additive" | "depth_aware"
    gamma: float = 0.3      # -0.3 suits dark-spot patterns like lens dirt
    depth_alpha: float = 0.03
    depth_beta: float = 0.04
    fallback_additive: bool = False  # depth_aware without a depth map falls back if set

    def __post_init__(self):
        if self.mode not in ("additive", "depth_aware"):
            raise ValueError(f"unknown synthesis mode {self.mode!r}")
        if abs(self.gamma) > 1:
            raise ValueError(f"|gamma| must be <= 1, got {self.gamma}")
        if self.depth_alpha < 0 or self.depth_beta < 0:
            raise ValueError("depth_alpha and depth_beta must be >= 0")


def _check_spatial(image: torch.Tensor, pattern: torch.Tensor):
    if image.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (C, H, W), got shape {tuple(image.shape)}")
    if image.ndim == 3 and image.shape[0] not in (1, 3):
        raise ValueError(f"image channel count must be 1 or 3, got {image.shape[0]}")
    if pattern.ndim != 2:
        raise ValueError(f"pattern must be (H, W), got shape {tuple(pattern.shape)}")
    if tuple(image.shape[-2:]) != tuple(pattern.shape):
        raise ValueError(f"pattern shape {tuple(pattern.shape)} does not match image "
                         f"spatial shape {tuple(image.shape[-2:])}")


def additive(image: torch.Tensor, pattern: torch.Tensor, gamma: float) -> torch.Tensor:
    """clip(I + gamma * P, 0, 1) with the pattern broadcast across channels."""
    _check_spatial(image, pattern)
    return torch.clamp(image + gamma * pattern, 0.0, 1.0)


def depth_aware(image: torch.Tensor, pattern: torch.Tensor, depth: torch.Tensor,
                alpha: float = 0.03, beta: float = 0.04) -> torch.Tensor:
    """Depth-attenuated composition: nearer pattern pixels show through more.

    weight w(d) = exp(-beta * 100d), veil v(d) = alpha * (1 - exp(-beta * 100d)),
    I_adv = clip(I * (1 - v) + w * P + v, 0, 1).
    """
    _check_spatial(image, pattern)
    if depth is None:
        raise ValueError("depth_aware synthesis requires a depth map")
    if tuple(depth.shape) != tuple(pattern.shape):
        raise ValueError(f"depth shape {tuple(depth.shape)} does not match pattern")
    if depth.min() < 0 or depth.max() > 1:
        raise ValueError("depth must be normalized to [0, 1]")
    decay = torch.exp(-beta * DEPTH_SCALE * depth)
    veil = alpha * (1.0 - decay)
    return torch.clamp(image * (1.0 - veil) + decay * pattern + veil, 0.0, 1.0)


def synthesize(image: torch.Tensor, pattern: torch.Tensor, config: SynthesisConfig,
               depth: torch.Tensor | None = None) -> torch.Tensor:
    if config.mode == "additive":
        return additive(image, pattern, config.gamma)
    if depth is None and config.fallback_additive:
        return additive(image, pattern, config.gamma)
    return depth_aware(image, pattern, depth, config.depth_alpha, config.depth_beta)
