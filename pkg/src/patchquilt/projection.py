"""Two-component PCA projection of attack-trajectory feature sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PcaProjection:
    segments: list[np.ndarray]       # per input sequence, (T_i, n_components)
    components: np.ndarray           # (n_components, d), orthonormal rows
    explained_variance: np.ndarray   # per-component variance, descending
    total_variance: float
    rank_deficient: bool

    @property
    def explained_ratio(self) -> float:
        if self.total_variance == 0:
            return 0.0
        return float(self.explained_variance.sum() / self.total_variance)


def pca_project(trajectories: list[np.ndarray]) -> PcaProjection:
    """Project pooled feature points onto their top two principal components.

    All sequences must share one feature dimension d >= 2 and pool to at
    least 3 points. If the pooled data has rank < 2 the projection falls
    back to one component and sets ``rank_deficient``.
    """
    if not trajectories:
        raise ValueError("no trajectories given")
    arrays = [np.asarray(t, dtype=np.float64) for t in trajectories]
    dims = {a.shape[1] for a in arrays if a.ndim == 2}
    if any(a.ndim != 2 for a in arrays) or len(dims) != 1:
        raise ValueError("every trajectory must be a (T_i, d) array with one shared d")
    d = dims.pop()
    if d < 2:
        raise ValueError(f"feature dimension must be >= 2, got {d}")
    pooled = np.concatenate(arrays, axis=0)
    n = pooled.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 pooled points, got {n}")

    mean = pooled.mean(axis=0)
    centered = pooled - mean
    # SVD of the centered data: right-singular vectors are the eigenvectors
    # of the covariance, singular values give the per-component variance.
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = svals ** 2 / (n - 1)
    total = float(variances.sum())
    tol = max(n, d) * np.finfo(np.float64).eps * (svals[0] if svals.size else 0.0)
    rank = int((svals > tol).sum())
    n_comp = 2 if rank >= 2 else 1
    components = vt[:n_comp]

    segments = [(a - mean) @ components.T for a in arrays]
    return PcaProjection(
        segments=segments,
        components=components,
        explained_variance=variances[:n_comp],
        total_variance=total,
        rank_deficient=rank < 2,
    )
