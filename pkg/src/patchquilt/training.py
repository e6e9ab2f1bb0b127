"""Adversarial training of the quilting generators with a gradient-penalty critic.

Each step alternates ``n_critic`` critic updates with one joint generator
update. Critic batches mix two kinds of negatives: every patch of a freshly
generated canvas (patch-level realism) and random crops of the assembled
canvas that may straddle seams (cross-patch smoothness); positives are
matching random crops of one ground-truth pattern per step. The generator
update maximizes the critic score of its patches, and, by default, of the
seam-straddling crops as well, so all three generators receive a smoothness
signal through the assembly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .grid import GridPlan, assemble, compute_grid
from .images import save_pattern_png
from .models import QuiltArch, QuiltGenerator, sample_latents


@dataclass(frozen=True)
class TrainConfig:
    gp_weight: float = 10.0
    n_critic: int = 5
    learning_rate: float = 1e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    batch_size: int = 4       # recorded for provenance; crop counts drive the batches
    epochs: int = 8
    m_inter: int = 32
    train_canvas: int = 256
    seed: int = 0
    inter_generator_term: bool = True
    steps: Optional[int] = None   # overrides epochs * corpus size when set
    sample_every: int = 500       # 0 disables periodic sample PNGs

    def __post_init__(self):
        if self.gp_weight < 0:
            raise ValueError("gp_weight must be >= 0")
        if self.n_critic < 1 or self.m_inter < 1 or self.batch_size < 1:
            raise ValueError("n_critic, m_inter, and batch_size must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1 when set")


def random_crops(image: torch.Tensor, count: int, patch_h: int, patch_w: int,
                 rng: np.random.Generator) -> tuple[torch.Tensor, list[tuple[int, int]]]:
    """``count`` uniform random patch_h x patch_w crops of a 2-D image.

    Returns the crops stacked as (count, 1, patch_h, patch_w) plus the
    top-left coordinate of each crop.
    """
    h, w = image.shape[-2], image.shape[-1]
    if h < patch_h or w < patch_w:
        raise ValueError(f"image ({h}, {w}) smaller than crop ({patch_h}, {patch_w})")
    rows = rng.integers(0, h - patch_h + 1, size=count)
    cols = rng.integers(0, w - patch_w + 1, size=count)
    crops = torch.stack([image[r:r + patch_h, c:c + patch_w] for r, c in zip(rows, cols)])
    return crops.unsqueeze(1), list(zip(rows.tolist(), cols.tolist()))


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor, gp_weight: float,
                     gen: Optional[torch.Generator] = None) -> torch.Tensor:
    """gp_weight * E[(||grad_x D(x_interp)||_2 - 1)^2] over per-pair uniform mixes."""
    if real.shape != fake.shape:
        raise ValueError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} batches "
                         "must have the same shape")
    if real.shape[0] == 0:
        raise ValueError("empty batch")
    if gp_weight < 0:
        raise ValueError("gp_weight must be >= 0")
    if gp_weight == 0:
        return real.new_zeros(())
    eps_shape = (real.shape[0],) + (1,) * (real.ndim - 1)
    eps = torch.rand(eps_shape, generator=gen, dtype=real.dtype, device=real.device)
    mixed = (eps * real.detach() + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(mixed)
    grads, = torch.autograd.grad(scores.sum(), mixed, create_graph=True)
    norms = grads.flatten(1).norm(2, dim=1)
    return gp_weight * ((norms - 1.0) ** 2).mean()


def critic_loss(critic, real: torch.Tensor, fake: torch.Tensor, gp_weight: float,
                gen: Optional[torch.Generator] = None) -> torch.Tensor:
    """mean D(fake) - mean D(real) + gradient penalty; fakes treated as constants."""
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ValueError("empty batch")
    w_term = critic(fake.detach()).mean() - critic(real.detach()).mean()
    return w_term + gradient_penalty(critic, real, fake, gp_weight, gen)


def generator_loss(critic, fake: torch.Tensor) -> torch.Tensor:
    """-mean D(fake); gradients flow into whichever generators produced the batch."""
    if fake.shape[0] == 0:
        raise ValueError("empty batch")
    return -critic(fake).mean()


def build_intra_batches(generated, gt_pattern: torch.Tensor,
                        rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """All generated patches as negatives, the same number of gt crops as positives."""
    if hasattr(generated, "items"):
        patches = [generated[c] for c in sorted(generated)]
    else:
        patches = list(generated)
    if not patches:
        raise ValueError("no generated patches")
    negatives = torch.stack(patches).unsqueeze(1)
    h, w = patches[0].shape
    positives, _ = random_crops(gt_pattern, len(patches), h, w, rng)
    return negatives, positives


def build_inter_batches(canvas: torch.Tensor, gt_pattern: torch.Tensor, m_inter: int,
                        patch_h: int, patch_w: int,
                        rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """m_inter crops of the assembled canvas (seams included) vs m_inter gt crops."""
    if m_inter < 1:
        raise ValueError("m_inter must be >= 1")
    negatives, _ = random_crops(canvas, m_inter, patch_h, patch_w, rng)
    positives, _ = random_crops(gt_pattern, m_inter, patch_h, patch_w, rng)
    return negatives, positives


@dataclass
class StepLog:
    step: int
    critic_loss: float
    gen_loss_intra: float
    gen_loss_inter: float
    gp: float


class Trainer:
    """Owns the model, the four optimizers, and all sampling state."""

    def __init__(self, config: TrainConfig, arch: QuiltArch,
                 corpus: Sequence[np.ndarray], plan: Optional[GridPlan] = None):
        if len(corpus) == 0:
            raise ValueError("corpus is empty")
        if plan is None:
            plan = compute_grid(config.train_canvas, config.train_canvas,
                                arch.patch_h, arch.patch_w)
        if plan.target_h != config.train_canvas or plan.target_w != config.train_canvas:
            raise ValueError(f"plan target ({plan.target_h}, {plan.target_w}) does not match "
                             f"train_canvas {config.train_canvas}")
        self.config = config
        self.arch = arch
        self.plan = plan
        self.model = QuiltGenerator(arch, seed=config.seed)
        self.corpus = [torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
                       for img in corpus]
        for img in self.corpus:
            if img.shape[0] < arch.patch_h or img.shape[1] < arch.patch_w:
                raise ValueError("corpus image smaller than the patch size")
        betas = (config.adam_beta1, config.adam_beta2)
        lr = config.learning_rate
        self.opt_anchor = torch.optim.Adam(self.model.anchor_net.parameters(), lr=lr, betas=betas)
        self.opt_hbridge = torch.optim.Adam(self.model.hbridge_net.parameters(), lr=lr, betas=betas)
        self.opt_vbridge = torch.optim.Adam(self.model.vbridge_net.parameters(), lr=lr, betas=betas)
        self.opt_critic = torch.optim.Adam(self.model.critic.parameters(), lr=lr, betas=betas)
        self.rng = np.random.default_rng(config.seed)
        self.torch_gen = torch.Generator().manual_seed(config.seed + 1)
        self._latent_counter = 0
        self.step = 0
        self.logs: list[StepLog] = []

    def _fresh_latents(self):
        self._latent_counter += 1
        return sample_latents(self.plan, self.arch.latent_dim,
                              self.config.seed * 1_000_003 + self._latent_counter)

    def _batches(self, gt: torch.Tensor, cells: dict, canvas: torch.Tensor):
        neg_intra, pos_intra = build_intra_batches(cells, gt, self.rng)
        neg_inter, pos_inter = build_inter_batches(
            canvas, gt, self.config.m_inter, self.arch.patch_h, self.arch.patch_w, self.rng)
        return torch.cat([neg_intra, neg_inter]), torch.cat([pos_intra, pos_inter])

    def critic_update(self, gt: torch.Tensor) -> tuple[float, float]:
        """One critic step on a freshly generated canvas; returns (loss, gp)."""
        with torch.no_grad():
            latents = self._fresh_latents()
            cells = self.model.generate_cells(latents, self.plan)
            canvas = assemble(self.plan, cells)
        fake, real = self._batches(gt, cells, canvas)
        w_term = self.model.critic(fake).mean() - self.model.critic(real).mean()
        gp = gradient_penalty(self.model.critic, real, fake, self.config.gp_weight,
                              self.torch_gen)
        loss = w_term + gp
        self.opt_critic.zero_grad()
        loss.backward()
        self.opt_critic.step()
        return float(loss.detach()), float(gp.detach())

    def generator_update(self, gt: torch.Tensor) -> tuple[float, float]:
        """One joint update of all three generators; returns (intra, inter) losses."""
        latents = self._fresh_latents()
        cells = self.model.generate_cells(latents, self.plan)
        canvas = assemble(self.plan, cells)
        patches = torch.stack([cells[c] for c in sorted(cells)]).unsqueeze(1)
        loss_intra = generator_loss(self.model.critic, patches)
        if self.config.inter_generator_term:
            crops, _ = random_crops(canvas, self.config.m_inter,
                                    self.arch.patch_h, self.arch.patch_w, self.rng)
            loss_inter = generator_loss(self.model.critic, crops)
        else:
            loss_inter = canvas.new_zeros(())
        total = loss_intra + loss_inter
        for opt in (self.opt_anchor, self.opt_hbridge, self.opt_vbridge):
            opt.zero_grad()
        total.backward()
        for opt in (self.opt_anchor, self.opt_hbridge, self.opt_vbridge):
            opt.step()
        return float(loss_intra.detach()), float(loss_inter.detach())

    def run_step(self) -> StepLog:
        gt = self.corpus[int(self.rng.integers(len(self.corpus)))]
        closses, gps = [], []
        for _ in range(self.config.n_critic):
            c, g = self.critic_update(gt)
            closses.append(c)
            gps.append(g)
        gi, gx = self.generator_update(gt)
        self.step += 1
        log = StepLog(step=self.step, critic_loss=float(np.mean(closses)),
                      gen_loss_intra=gi, gen_loss_inter=gx, gp=float(np.mean(gps)))
        if not all(math.isfinite(v) for v in
                   (log.critic_loss, log.gen_loss_intra, log.gen_loss_inter, log.gp)):
            raise RuntimeError(
                f"non-finite loss at step {log.step}: critic={log.critic_loss} "
                f"gen_intra={log.gen_loss_intra} gen_inter={log.gen_loss_inter} gp={log.gp}")
        self.logs.append(log)
        return log

    def write_sample(self, out_dir: Path):
        with torch.no_grad():
            latents = sample_latents(self.plan, self.arch.latent_dim, self.config.seed)
            canvas = self.model.generate_canvas(latents, self.plan)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_pattern_png(canvas, out_dir / f"step_{self.step:06d}.png")


def write_log_csv(logs: Sequence[StepLog], path: str | Path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "critic_loss", "gen_loss_intra", "gen_loss_inter", "gp"])
        for log in logs:
            writer.writerow([log.step, f"{log.critic_loss:.8f}", f"{log.gen_loss_intra:.8f}",
                             f"{log.gen_loss_inter:.8f}", f"{log.gp:.8f}"])


def train(config: TrainConfig, arch: QuiltArch, corpus: Sequence[np.ndarray],
          out_dir: str | Path, plan: Optional[GridPlan] = None,
          meta: Optional[dict] = None) -> QuiltGenerator:
    """Run the full loop and write checkpoint, train_log.csv, and sample PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(config, arch, corpus, plan)
    total = config.steps if config.steps is not None else config.epochs * len(corpus)
    for _ in range(total):
        trainer.run_step()
        if config.sample_every and trainer.step % config.sample_every == 0:
            trainer.write_sample(out_dir / "samples")
    trainer.model.training_meta = {
        "steps": trainer.step,
        "seed": config.seed,
        "config": asdict(config),
        **(meta or {}),
    }
    save_checkpoint(trainer.model, out_dir / "checkpoint")
    write_log_csv(trainer.logs, out_dir / "train_log.csv")
    return trainer.model
