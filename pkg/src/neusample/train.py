"""End-to-end training on a scene dataset.

One optimization step samples a batch of rays uniformly over all training
pixels, renders them with density noise, and applies Adam under the
polynomial schedule.  All randomness (batch choice, stratified baseline
samples, density noise) is drawn from a single generator derived from the
run seed, so a repeated run replays bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NumericalError
from .metrics import psnr
from .optim import AdamState, PolynomialSchedule, adam_step
from .pipeline import render_image


@dataclass
class TrainSettings:
    iters: int
    batch_rays: int = 4096
    lr: float = 5e-4
    lr_final: float = 5e-6
    lr_power: float = 1.0
    noise_std: float = 1.0
    seed: int = 0
    eval_every: int = 0       # 0: no periodic test-view metric
    checkpoint_every: int = 0  # 0: only the final checkpoint
    chunk_rays: int = 512
    workers: int = 1


def evaluate_view(pipeline, dataset, view_id, chunk=512, workers=1):
    """PSNR of one rendered view against its reference image."""
    cam = dataset.cameras[view_id]
    img, _, _ = render_image(pipeline, cam, dataset.near, dataset.far,
                             background=dataset.background, chunk=chunk,
                             workers=workers)
    return psnr(img, dataset.images[view_id]), img


def train_pipeline(pipeline, dataset, settings, adam_state=None, log=None,
                   on_checkpoint=None, start_step=0):
    """Run ``settings.iters`` optimization steps in place.

    ``on_checkpoint(step, adam_state)`` is invoked at the configured cadence
    and once at the end.  Returns (adam_state, log rows).  Raises
    NumericalError (with a ``diagnostics`` attribute) on a non-finite loss.
    """
    params = pipeline.named_params()
    schedule = PolynomialSchedule(settings.lr, settings.lr_final,
                                  start_step + settings.iters, settings.lr_power)
    if adam_state is None:
        adam_state = AdamState.init(params, schedule)
    else:
        adam_state.schedule = schedule
    rng = np.random.default_rng(np.random.SeedSequence([settings.seed, 1]))

    rays_all, colors_all = dataset.ray_pool("train")
    n_rays = len(rays_all)
    log = log if log is not None else []

    for it in range(settings.iters):
        step = start_step + it
        idx = rng.choice(n_rays, size=min(settings.batch_rays, n_rays),
                         replace=False)
        loss, out = pipeline.training_loss(
            rays_all[idx], colors_all[idx], noise_std=settings.noise_std,
            background=dataset.background, rng=rng)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            err = NumericalError(f"non-finite loss at step {step}")
            err.diagnostics = {
                "step": step,
                "loss": loss_val,
                "lr": adam_state.schedule.lr(adam_state.step),
                "finite_params": {n: bool(np.all(np.isfinite(p.data)))
                                  for n, p in params},
            }
            raise err
        ad.zero_grad(v for _, v in params)
        ad.backward(loss)
        adam_step(params, adam_state)

        row = {"step": step + 1, "loss": loss_val,
               "lr": adam_state.schedule.lr(adam_state.step)}
        if settings.eval_every and (it + 1) % settings.eval_every == 0:
            test_psnr, _ = evaluate_view(pipeline, dataset,
                                         dataset.test_ids[0],
                                         chunk=settings.chunk_rays,
                                         workers=settings.workers)
            row["test_psnr"] = test_psnr
        log.append(row)
        if (on_checkpoint and settings.checkpoint_every
                and (it + 1) % settings.checkpoint_every == 0):
            on_checkpoint(step + 1, adam_state)
    if on_checkpoint:
        on_checkpoint(start_step + settings.iters, adam_state)
    return adam_state, log


def evaluate_dataset(pipeline, dataset, split="test", chunk=512, workers=1,
                     with_ssim=True):
    """Per-view PSNR/SSIM rows over a split; images returned alongside."""
    from .metrics import ssim as ssim_fn

    rows, renders = [], {}
    for view_id in dataset.split(split):
        score, img = evaluate_view(pipeline, dataset, view_id, chunk=chunk,
                                   workers=workers)
        row = {"view": f"{view_id:04d}", "psnr": score}
        if with_ssim:
            row["ssim"] = ssim_fn(img, dataset.images[view_id])
        rows.append(row)
        renders[view_id] = img
    return rows, renders
