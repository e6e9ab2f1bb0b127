"""Patch generators, critic, latent sampling, and the three-pass quilting forward.

Three networks cooperate to tile a canvas of arbitrary size:

* ``AnchorGenerator`` maps a latent vector to a free-standing patch.
* ``BridgeGenerator`` (horizontal or vertical flavour) maps a latent vector
  plus a conditioning canvas of already-generated neighbors to the patch that
  fills the gap between them.
* ``PatchCritic`` scores patches for adversarial training (Wasserstein
  convention: unbounded output, no normalization layers).

All patch outputs are squashed to [0, 1]. Normalization inside the
generators is GroupNorm so a cell's output never depends on which other
cells share its batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .grid import GridPlan, NeighborRefs, Role, assemble, crop_to_target, neighbors

_NORM_GROUPS = 8


@dataclass(frozen=True)
class QuiltArch:
    """Architecture descriptor shared by all four networks."""

    patch_h: int = 32
    patch_w: int = 32
    latent_dim: int = 128
    base_channels: int = 64

    def __post_init__(self):
        for name, v in (("patch_h", self.patch_h), ("patch_w", self.patch_w)):
            if v < 16 or v % 16 != 0:
                raise ValueError(f"{name} must be a positive multiple of 16, got {v}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.base_channels < _NORM_GROUPS or self.base_channels % _NORM_GROUPS != 0:
            raise ValueError(f"base_channels must be a positive multiple of {_NORM_GROUPS}")


def _squash(x: torch.Tensor) -> torch.Tensor:
    # scaled tanh onto [0, 1]
    return (torch.tanh(x) + 1.0) / 2.0


class _UpBlock(nn.Module):
    """2x nearest-neighbor upsample, 3x3 conv, GroupNorm, ReLU."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, 1, 1)
        self.norm = nn.GroupNorm(_NORM_GROUPS, c_out)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.relu(self.norm(self.conv(x)))


class _DownBlock(nn.Module):
    """Strided 4x4 conv, GroupNorm, LeakyReLU."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 4, 2, 1)
        self.norm = nn.GroupNorm(_NORM_GROUPS, c_out)

    def forward(self, x):
        return F.leaky_relu(self.norm(self.conv(x)), 0.2)


class AnchorGenerator(nn.Module):
    """Latent vector -> patch_h x patch_w patch in [0, 1]."""

    def __init__(self, arch: QuiltArch):
        super().__init__()
        self.arch = arch
        b = arch.base_channels
        self.h0, self.w0 = arch.patch_h // 8, arch.patch_w // 8
        self.proj = nn.Linear(arch.latent_dim, 4 * b * self.h0 * self.w0)
        self.up = nn.Sequential(_UpBlock(4 * b, 2 * b), _UpBlock(2 * b, b), _UpBlock(b, b))
        self.out = nn.Conv2d(b, 1, 3, 1, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.arch.latent_dim:
            raise ValueError(f"expected latents of shape (B, {self.arch.latent_dim}), "
                             f"got {tuple(z.shape)}")
        x = self.proj(z).view(-1, 4 * self.arch.base_channels, self.h0, self.w0)
        return _squash(self.out(self.up(x)))


class BridgeGenerator(nn.Module):
    """Conditional patch generator filling the gap between generated neighbors.

    The conditioning canvas spatially concatenates the neighbor patches with
    zero slots (context_rows x context_cols patch slots); the latent vector is
    broadcast-concatenated at the encoder bottleneck. Only the canvas-center
    patch is returned.
    """

    def __init__(self, arch: QuiltArch, context_rows: int, context_cols: int):
        super().__init__()
        if context_cols % 2 == 0 or context_rows % 2 == 0:
            raise ValueError("context grid must have odd extents so a center slot exists")
        self.arch = arch
        self.context_rows = context_rows
        self.context_cols = context_cols
        b = arch.base_channels
        self.enc = nn.Sequential(_DownBlock(1, b), _DownBlock(b, 2 * b), _DownBlock(2 * b, 4 * b))
        self.merge = nn.Conv2d(4 * b + arch.latent_dim, 4 * b, 3, 1, 1)
        self.up = nn.Sequential(_UpBlock(4 * b, 2 * b), _UpBlock(2 * b, b), _UpBlock(b, b))
        self.out = nn.Conv2d(b, 1, 3, 1, 1)

    @property
    def canvas_shape(self) -> tuple[int, int]:
        return (self.context_rows * self.arch.patch_h, self.context_cols * self.arch.patch_w)

    def _check_canvas(self, canvas: torch.Tensor):
        h, w = self.arch.patch_h, self.arch.patch_w
        if canvas.ndim != 4 or canvas.shape[1] != 1 or tuple(canvas.shape[2:]) != self.canvas_shape:
            raise ValueError(f"expected canvas of shape (B, 1, {self.canvas_shape[0]}, "
                             f"{self.canvas_shape[1]}), got {tuple(canvas.shape)}")
        # the band being generated must be blank; anything else is a caller bug
        r0 = (self.context_rows // 2) * h
        if self.context_rows == 1:
            center = canvas[:, :, :, (self.context_cols // 2) * w:(self.context_cols // 2 + 1) * w]
        else:
            center = canvas[:, :, r0:r0 + h, :]
        if center.detach().abs().max() > 0:
            raise ValueError("conditioning canvas center band must be zero")

    def forward(self, z: torch.Tensor, canvas: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.arch.latent_dim:
            raise ValueError(f"expected latents of shape (B, {self.arch.latent_dim}), "
                             f"got {tuple(z.shape)}")
        self._check_canvas(canvas)
        if z.shape[0] != canvas.shape[0]:
            raise ValueError("latent and canvas batch sizes differ")
        x = self.enc(canvas)
        zmap = z[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        x = F.relu(self.merge(torch.cat([x, zmap], dim=1)))
        full = _squash(self.out(self.up(x)))
        h, w = self.arch.patch_h, self.arch.patch_w
        r0 = (self.context_rows // 2) * h
        c0 = (self.context_cols // 2) * w
        return full[:, :, r0:r0 + h, c0:c0 + w]


class PatchCritic(nn.Module):
    """Wasserstein critic: four strided conv blocks, no normalization, scalar score."""

    def __init__(self, arch: QuiltArch):
        super().__init__()
        self.arch = arch
        b = arch.base_channels
        self.body = nn.Sequential(
            nn.Conv2d(1, b, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(b, 2 * b, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * b, 4 * b, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(4 * b, 8 * b, 4, 2, 1), nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(8 * b * (arch.patch_h // 16) * (arch.patch_w // 16), 1)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.ndim != 4 or patches.shape[1] != 1 or \
                tuple(patches.shape[2:]) != (self.arch.patch_h, self.arch.patch_w):
            raise ValueError(f"expected patches of shape (B, 1, {self.arch.patch_h}, "
                             f"{self.arch.patch_w}), got {tuple(patches.shape)}")
        return self.head(self.body(patches).flatten(1)).squeeze(1)


class LinearCritic(nn.Module):
    """D(x) = <weight, x> + bias. Analytic test configuration for the gradient penalty."""

    def __init__(self, patch_h: int, patch_w: int, weight: Optional[torch.Tensor] = None,
                 bias: float = 0.0):
        super().__init__()
        if weight is None:
            weight = torch.randn(patch_h, patch_w)
        if tuple(weight.shape) != (patch_h, patch_w):
            raise ValueError("weight shape must match the patch shape")
        self.weight = nn.Parameter(weight.clone())
        self.bias = nn.Parameter(torch.tensor(float(bias)))

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.ndim != 4 or tuple(patches.shape[1:]) != (1,) + tuple(self.weight.shape):
            raise ValueError(f"expected patches of shape (B, 1, {self.weight.shape[0]}, "
                             f"{self.weight.shape[1]}), got {tuple(patches.shape)}")
        return (patches[:, 0] * self.weight).sum(dim=(1, 2)) + self.bias


@dataclass
class LatentSet:
    """Per-cell latent vectors, one dict per generation pass."""

    anchor: dict[tuple[int, int], torch.Tensor]
    hbridge: dict[tuple[int, int], torch.Tensor]
    vbridge: dict[tuple[int, int], torch.Tensor]
    latent_dim: int

    def by_role(self, role: Role) -> dict[tuple[int, int], torch.Tensor]:
        return {Role.ANCHOR: self.anchor, Role.HBRIDGE: self.hbridge,
                Role.VBRIDGE: self.vbridge}[role]

    def tensors(self) -> list[torch.Tensor]:
        out = []
        for d in (self.anchor, self.hbridge, self.vbridge):
            out.extend(d[c] for c in sorted(d))
        return out

    def clone(self) -> "LatentSet":
        return LatentSet(
            anchor={c: z.detach().clone() for c, z in self.anchor.items()},
            hbridge={c: z.detach().clone() for c, z in self.hbridge.items()},
            vbridge={c: z.detach().clone() for c, z in self.vbridge.items()},
            latent_dim=self.latent_dim,
        )

    def requires_grad_(self, flag: bool = True) -> "LatentSet":
        for z in self.tensors():
            z.requires_grad_(flag)
        return self


def sample_latents(plan: GridPlan, latent_dim: int, seed: int) -> LatentSet:
    """Standard-normal latent per cell, deterministic in the seed.

    Cells are visited in a fixed order (anchors, then horizontal bridges,
    then vertical bridges, row-major within each role), so the same seed
    always yields the same vectors.
    """
    if latent_dim < 1:
        raise ValueError(f"latent_dim must be >= 1, got {latent_dim}")
    gen = torch.Generator().manual_seed(seed)
    sets: dict[Role, dict] = {}
    for role in (Role.ANCHOR, Role.HBRIDGE, Role.VBRIDGE):
        sets[role] = {c: torch.randn(latent_dim, generator=gen) for c in plan.cells_of(role)}
    return LatentSet(anchor=sets[Role.ANCHOR], hbridge=sets[Role.HBRIDGE],
                     vbridge=sets[Role.VBRIDGE], latent_dim=latent_dim)


def _context_canvas(refs: NeighborRefs, patches: dict, h: int, w: int,
                    like: torch.Tensor) -> torch.Tensor:
    rows = []
    for row in refs.cells:
        slots = [patches[ref] if ref is not None else like.new_zeros(h, w) for ref in row]
        rows.append(torch.cat(slots, dim=1))
    return torch.cat(rows, dim=0)


class QuiltGenerator(nn.Module):
    """The full generator bundle plus its critic and training metadata."""

    def __init__(self, arch: QuiltArch, seed: Optional[int] = None,
                 training_meta: Optional[dict] = None):
        super().__init__()
        self.arch = arch
        self.training_meta = dict(training_meta or {})
        with torch.random.fork_rng():
            if seed is not None:
                torch.manual_seed(seed)
            self.anchor_net = AnchorGenerator(arch)
            self.hbridge_net = BridgeGenerator(arch, 1, 3)
            self.vbridge_net = BridgeGenerator(arch, 3, 3)
            self.critic = PatchCritic(arch)

    def _check_latents(self, latents: LatentSet, plan: GridPlan):
        if latents.latent_dim != self.arch.latent_dim:
            raise ValueError(f"latent dim {latents.latent_dim} does not match "
                             f"architecture ({self.arch.latent_dim})")
        if plan.patch_h != self.arch.patch_h or plan.patch_w != self.arch.patch_w:
            raise ValueError(f"plan patch ({plan.patch_h}, {plan.patch_w}) does not match "
                             f"architecture ({self.arch.patch_h}, {self.arch.patch_w})")
        for role in Role:
            want = set(plan.cells_of(role))
            have = set(latents.by_role(role))
            if want != have:
                raise ValueError(f"latents for role {role.value} cover {len(have)} cells, "
                                 f"plan needs {len(want)}")

    def generate_cells(self, latents: LatentSet, plan: GridPlan) -> dict:
        """Three generation passes; returns a cell -> (patch_h, patch_w) tensor map."""
        self._check_latents(latents, plan)
        h, w = self.arch.patch_h, self.arch.patch_w
        patches: dict[tuple[int, int], torch.Tensor] = {}

        cells = plan.cells_of(Role.ANCHOR)
        z = torch.stack([latents.anchor[c] for c in cells])
        out = self.anchor_net(z)
        patches.update({c: out[n, 0] for n, c in enumerate(cells)})

        for role, net in ((Role.HBRIDGE, self.hbridge_net), (Role.VBRIDGE, self.vbridge_net)):
            cells = plan.cells_of(role)
            if not cells:
                continue
            z = torch.stack([latents.by_role(role)[c] for c in cells])
            ctx = torch.stack([
                _context_canvas(neighbors(plan, *c), patches, h, w, z) for c in cells
            ]).unsqueeze(1)
            out = net(z, ctx)
            patches.update({c: out[n, 0] for n, c in enumerate(cells)})
        return patches

    def generate_canvas(self, latents: LatentSet, plan: GridPlan) -> torch.Tensor:
        return assemble(plan, self.generate_cells(latents, plan))

    def generate(self, latents: LatentSet, plan: GridPlan) -> torch.Tensor:
        """Full pattern at the plan's target scale (canvas cropped top-left)."""
        return crop_to_target(self.generate_canvas(latents, plan), plan.target_h, plan.target_w)

    def naive_canvas(self, latents: LatentSet, plan: GridPlan) -> torch.Tensor:
        """Baseline canvas: every cell filled by an independent anchor sample.

        Ignores the bridge networks entirely; used to measure how much the
        conditional passes improve seam smoothness.
        """
        self._check_latents(latents, plan)
        cells = plan.cells()
        z = torch.stack([latents.by_role(plan.role(*c))[c] for c in cells])
        out = self.anchor_net(z)
        return assemble(plan, {c: out[n, 0] for n, c in enumerate(cells)})
