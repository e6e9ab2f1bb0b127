"""Tiling geometry for scale-free patch quilting.

A target image of size H x W is covered by a grid of fixed-size patches.
Row/column counts are rounded up to the next odd integer so the grid always
alternates anchor cells (odd row, odd column) with bridge cells, and always
terminates on an anchor row/column; the surplus canvas is cropped away.

Cell indices are 1-based in the public API (cell ``(1, 1)`` is the top-left
anchor); pixel coordinates are 0-based numpy/torch slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
import torch

MAX_PATCH_SIDE = 1024

CellIndex = tuple[int, int]


class Role(Enum):
    """What a grid cell holds and which pass generates it."""

    ANCHOR = "anchor"    # odd row, odd column: generated first, unconditional
    HBRIDGE = "hbridge"  # odd row, even column: fills the gap between left/right anchors
    VBRIDGE = "vbridge"  # even row, any column: fills gaps between the rows above/below


def cell_role(i: int, j: int) -> Role:
    """Role of cell (i, j), 1-based. Upper-range checks need a plan; see GridPlan.role."""
    if i < 1 or j < 1:
        raise ValueError(f"cell indices are 1-based, got ({i}, {j})")
    if i % 2 == 0:
        return Role.VBRIDGE
    return Role.ANCHOR if j % 2 == 1 else Role.HBRIDGE


@dataclass(frozen=True)
class GridPlan:
    """Patch grid covering a target scale, including the padded canvas size."""

    target_h: int
    target_w: int
    patch_h: int
    patch_w: int
    rows: int
    cols: int
    canvas_h: int
    canvas_w: int

    def role(self, i: int, j: int) -> Role:
        if not (1 <= i <= self.rows and 1 <= j <= self.cols):
            raise ValueError(f"cell ({i}, {j}) outside {self.rows}x{self.cols} grid")
        return cell_role(i, j)

    def cells(self) -> list[CellIndex]:
        return [(i, j) for i in range(1, self.rows + 1) for j in range(1, self.cols + 1)]

    def cells_of(self, role: Role) -> list[CellIndex]:
        return [c for c in self.cells() if cell_role(*c) is role]

    def role_counts(self) -> dict[Role, int]:
        counts = {role: 0 for role in Role}
        for c in self.cells():
            counts[cell_role(*c)] += 1
        return counts

    def slot(self, i: int, j: int) -> tuple[slice, slice]:
        """Pixel window of cell (i, j) on the canvas, as 0-based slices."""
        self.role(i, j)  # range check
        return (
            slice((i - 1) * self.patch_h, i * self.patch_h),
            slice((j - 1) * self.patch_w, j * self.patch_w),
        )


def _odd_ceil(target: int, patch: int) -> int:
    n = math.ceil(target / patch)
    return n + 1 if n % 2 == 0 else n


def compute_grid(target_h: int, target_w: int, patch_h: int, patch_w: int) -> GridPlan:
    """Grid plan for a target scale: minimum patch counts, rounded up to odd.

    Canvas size is rows*patch_h x cols*patch_w and always covers the target;
    crop_to_target removes the surplus.
    """
    for name, v in (("target_h", target_h), ("target_w", target_w),
                    ("patch_h", patch_h), ("patch_w", patch_w)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if patch_h > MAX_PATCH_SIDE or patch_w > MAX_PATCH_SIDE:
        raise ValueError(f"patch side exceeds {MAX_PATCH_SIDE}")
    rows = _odd_ceil(target_h, patch_h)
    cols = _odd_ceil(target_w, patch_w)
    return GridPlan(
        target_h=target_h,
        target_w=target_w,
        patch_h=patch_h,
        patch_w=patch_w,
        rows=rows,
        cols=cols,
        canvas_h=rows * patch_h,
        canvas_w=cols * patch_w,
    )


@dataclass(frozen=True)
class NeighborRefs:
    """Conditioning-context cells for a bridge cell.

    ``cells`` mirrors the layout of the conditioning canvas: one row of three
    entries for a horizontal bridge, three rows of three for a vertical
    bridge. ``None`` marks a zero slot (the cell being generated, not-yet-
    generated cells, or out-of-range columns).
    """

    role: Role
    cells: tuple[tuple[Optional[CellIndex], ...], ...]


def neighbors(plan: GridPlan, i: int, j: int) -> NeighborRefs:
    """Context cells feeding the bridge generator for cell (i, j)."""
    role = plan.role(i, j)
    if role is Role.ANCHOR:
        raise ValueError(f"cell ({i}, {j}) is an anchor; anchors have no conditioning context")
    if role is Role.HBRIDGE:
        # j is even and the grid has odd width, so both horizontal anchors exist.
        return NeighborRefs(role=role, cells=(((i, j - 1), None, (i, j + 1)),))
    rows = []
    for r in (i - 1, i, i + 1):
        row: list[Optional[CellIndex]] = []
        for c in (j - 1, j, j + 1):
            if r == i or c < 1 or c > plan.cols:
                row.append(None)  # middle row is the not-yet-generated band
            else:
                row.append((r, c))
        rows.append(tuple(row))
    return NeighborRefs(role=role, cells=tuple(rows))


def _is_torch(x) -> bool:
    return isinstance(x, torch.Tensor)


def assemble(plan: GridPlan, patches: Mapping[CellIndex, "np.ndarray | torch.Tensor"]):
    """Concatenate per-cell patches into the padded canvas.

    Pure placement: with torch inputs the output is built by concatenation so
    gradients flow unchanged into every patch.
    """
    expected = set(plan.cells())
    missing = expected - set(patches)
    if missing:
        raise ValueError(f"patches missing for cells {sorted(missing)[:4]}"
                         f"{'...' if len(missing) > 4 else ''}")
    shape = (plan.patch_h, plan.patch_w)
    for cell, p in patches.items():
        if cell not in expected:
            raise ValueError(f"patch given for cell {cell} outside the plan")
        if tuple(p.shape) != shape:
            raise ValueError(f"patch at {cell} has shape {tuple(p.shape)}, expected {shape}")
    rows = [[patches[(i, j)] for j in range(1, plan.cols + 1)]
            for i in range(1, plan.rows + 1)]
    if _is_torch(rows[0][0]):
        return torch.cat([torch.cat(r, dim=1) for r in rows], dim=0)
    return np.block(rows)


def extract_cell(plan: GridPlan, canvas, i: int, j: int):
    """Slot (i, j) of an assembled canvas (a view, not a copy)."""
    if tuple(canvas.shape) != (plan.canvas_h, plan.canvas_w):
        raise ValueError(f"canvas shape {tuple(canvas.shape)} does not match plan "
                         f"({plan.canvas_h}, {plan.canvas_w})")
    rs, cs = plan.slot(i, j)
    return canvas[rs, cs]


def crop_to_target(canvas, target_h: int, target_w: int):
    """Top-left target_h x target_w window of a canvas."""
    h, w = canvas.shape[-2], canvas.shape[-1]
    if target_h > h or target_w > w:
        raise ValueError(f"target ({target_h}, {target_w}) larger than canvas ({h}, {w})")
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    return canvas[..., :target_h, :target_w]


def seam_roughness(canvas, plan: GridPlan) -> tuple[float, float]:
    """Mean |difference| across seam-straddling pixel pairs vs interior pairs.

    Returns (seam, interior) where seam averages over adjacent pixel pairs
    that straddle a patch boundary and interior over all other adjacent
    pairs. Requires a plan with at least one seam.
    """
    if plan.rows == 1 and plan.cols == 1:
        raise ValueError("1x1 plan has no seams")
    x = canvas.detach().cpu().numpy() if _is_torch(canvas) else np.asarray(canvas)
    if x.shape != (plan.canvas_h, plan.canvas_w):
        raise ValueError(f"canvas shape {x.shape} does not match plan")
    h, w = plan.patch_h, plan.patch_w
    vdiff = np.abs(np.diff(x, axis=0))  # (H-1, W): pairs (r, r+1)
    hdiff = np.abs(np.diff(x, axis=1))  # (H, W-1): pairs (c, c+1)
    vseam = np.zeros(vdiff.shape[0], dtype=bool)
    vseam[[r * h - 1 for r in range(1, plan.rows)]] = True
    hseam = np.zeros(hdiff.shape[1], dtype=bool)
    hseam[[c * w - 1 for c in range(1, plan.cols)]] = True
    seam_vals = np.concatenate([vdiff[vseam].ravel(), hdiff[:, hseam].ravel()])
    interior_vals = np.concatenate([vdiff[~vseam].ravel(), hdiff[:, ~hseam].ravel()])
    return float(seam_vals.mean()), float(interior_vals.mean())
