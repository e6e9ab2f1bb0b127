"""Latent-space gradient-ascent attack against a frozen pattern generator.

The attack never touches generator weights: the only free variables are the
per-cell latent vectors. Each iteration regenerates the pattern at the
target image's scale, composes it onto the image, evaluates the target
model's training loss, and ascends the loss with Adam under a cosine-decayed
learning rate. The adversarial image returned is the one synthesized from
the final-iteration latents.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import torch

from .grid import compute_grid
from .images import save_image_png
from .models import LatentSet, QuiltGenerator, sample_latents
from .synthesis import SynthesisConfig, synthesize


@runtime_checkable
class ModelAdapter(Protocol):
    """Target-model interface: differentiable loss plus label prediction.

    ``feature`` is optional (used for trajectory projections); adapters that
    lack it simply do not define the method.
    """

    def loss(self, image: torch.Tensor, label: int) -> torch.Tensor: ...

    def predict(self, image: torch.Tensor) -> int: ...


@dataclass(frozen=True)
class AttackConfig:
    iterations: int = 300
    learning_rate: float = 0.03
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    optimizer: str = "adam"       # "sgd" gives plain single-step gradient ascent
    cosine_schedule: bool = True
    keep_best: bool = False       # keep the best-loss iterate instead of the last
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    seed: int = 0
    record_features: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def cosine_lr(base: float, step: int, total: int) -> float:
    """Annealed learning rate for step in 1..total; starts at base, decays toward 0."""
    return 0.5 * base * (1.0 + math.cos(math.pi * (step - 1) / total))


@dataclass
class TrajectoryPoint:
    step: int
    loss: float
    prediction: int
    lr: float
    feature: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    points: list[TrajectoryPoint]
    final_latents: LatentSet

    def losses(self) -> np.ndarray:
        return np.array([p.loss for p in self.points])

    def features(self) -> Optional[np.ndarray]:
        if not self.points or self.points[0].feature is None:
            return None
        return np.stack([p.feature for p in self.points])


def attack(adapter: ModelAdapter, image: torch.Tensor, label: int,
           model: QuiltGenerator, config: AttackConfig,
           depth: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, Trajectory]:
    """Optimize the latent set to maximize the adapter's loss on the synthesized image."""
    if image.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (C, H, W), got {tuple(image.shape)}")
    h, w = int(image.shape[-2]), int(image.shape[-1])
    plan = compute_grid(h, w, model.arch.patch_h, model.arch.patch_w)
    latents = sample_latents(plan, model.arch.latent_dim, config.seed).requires_grad_(True)
    zs = latents.tensors()
    image = image.detach()

    opt = None
    if config.optimizer == "adam":
        opt = torch.optim.Adam(zs, lr=config.learning_rate,
                               betas=(config.adam_beta1, config.adam_beta2))

    want_features = config.record_features and hasattr(adapter, "feature")
    points: list[TrajectoryPoint] = []
    best_loss, best_state = -math.inf, None

    for t in range(1, config.iterations + 1):
        lr = cosine_lr(config.learning_rate, t, config.iterations) \
            if config.cosine_schedule else config.learning_rate
        pattern = model.generate(latents, plan)
        adv = synthesize(image, pattern, config.synthesis, depth)
        loss = adapter.loss(adv, label)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss {float(loss)} at attack iteration {t}")
        with torch.no_grad():
            pred = adapter.predict(adv)
            feat = None
            if want_features:
                feat = adapter.feature(adv).detach().cpu().numpy().ravel()
        points.append(TrajectoryPoint(step=t, loss=float(loss), prediction=int(pred),
                                      lr=lr, feature=feat))
        if config.keep_best and float(loss) > best_loss:
            best_loss = float(loss)
            best_state = [z.detach().clone() for z in zs]

        if not loss.requires_grad:
            continue  # loss is constant w.r.t. the latents: zero gradient, no update
        if opt is not None:
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            (-loss).backward(inputs=zs)
            if not all(torch.isfinite(z.grad).all() for z in zs if z.grad is not None):
                raise RuntimeError(f"non-finite latent gradient at attack iteration {t}")
            opt.step()
        else:
            grads = torch.autograd.grad(loss, zs, allow_unused=True)
            with torch.no_grad():
                for z, g in zip(zs, grads):
                    if g is not None:
                        if not torch.isfinite(g).all():
                            raise RuntimeError(
                                f"non-finite latent gradient at attack iteration {t}")
                        z += lr * g

    if config.keep_best and best_state is not None:
        with torch.no_grad():
            for z, b in zip(zs, best_state):
                z.copy_(b)

    with torch.no_grad():
        pattern = model.generate(latents, plan)
        adv = synthesize(image, pattern, config.synthesis, depth)
    final = latents.clone()
    return adv.detach(), Trajectory(points=points, final_latents=final)


MANIFEST_FIELDS = ["sample_id", "clean_label", "clean_pred", "adv_pred", "success",
                   "final_loss"]


def _write_trajectory_csv(traj: Trajectory, path: Path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "prediction", "lr"])
        for p in traj.points:
            writer.writerow([p.step, f"{p.loss:.8f}", p.prediction, f"{p.lr:.8f}"])


def batch_attack(adapter: ModelAdapter, images: Sequence[torch.Tensor],
                 labels: Sequence[int], model: QuiltGenerator, config: AttackConfig,
                 out_dir: str | Path, workers: int = 1,
                 depths: Optional[Sequence[torch.Tensor]] = None) -> list[dict]:
    """Attack every sample independently; write PNGs, trajectories, and a manifest.

    Per-sample failures are recorded in the manifest and do not stop the
    batch. Sample ``i`` uses seed ``config.seed + i``, so reruns with the
    same config reproduce the same results regardless of worker count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "adv").mkdir(exist_ok=True)
    (out_dir / "trajectories").mkdir(exist_ok=True)
    if len(images) != len(labels):
        raise ValueError("images and labels length mismatch")

    def run_one(i: int) -> dict:
        image, label = images[i], int(labels[i])
        depth = depths[i] if depths is not None else None
        row = {"sample_id": i, "clean_label": label}
        try:
            with torch.no_grad():
                row["clean_pred"] = int(adapter.predict(image))
            cfg = replace(config, seed=config.seed + i)
            adv, traj = attack(adapter, image, label, model, cfg, depth)
            with torch.no_grad():
                row["adv_pred"] = int(adapter.predict(adv))
            row["success"] = int(row["adv_pred"] != label)
            row["final_loss"] = traj.points[-1].loss
            save_image_png(adv, out_dir / "adv" / f"{i:04d}.png")
            _write_trajectory_csv(traj, out_dir / "trajectories" / f"{i:04d}.csv")
            if config.record_features and traj.features() is not None:
                np.save(out_dir / "trajectories" / f"{i:04d}_features.npy", traj.features())
            row["adv_image"] = adv
        except Exception as e:  # per-sample failure: record and continue
            row.update({"clean_pred": row.get("clean_pred", -1), "adv_pred": -1,
                        "success": 0, "final_loss": float("nan"), "error": str(e)})
        return row

    if workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_one, range(len(images))))
    else:
        rows = [run_one(i) for i in range(len(images))]

    with open(out_dir / "manifest.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return rows
