"""Shrinking a trained sample field to fewer outputs.

Extraction copies the trunk verbatim and keeps an evenly spaced subset of
head output channels (centered strides), so before any fine-tuning the
extracted field's outputs are an exact subsequence of the regular field's.
An optional depth boost then regresses the extracted field's mean depth
onto the regular pipeline's expected ray depth over a spiral of poses
(only the extracted sample field receives gradients), and a short
fine-tuning pass adapts both extracted networks to the new sample count.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fields import SampleField
from .optim import AdamState, PolynomialSchedule, adam_step
from .pipeline import NeuSamplePipeline
from .render import depth_boost_loss
from .sampling import Rays
from .scene import camera_rays, spiral_poses
from .train import TrainSettings, train_pipeline


@dataclass
class ExtractionPlan:
    n_extract: int
    depth_boost: bool | None = None     # None: use the scene's depth-complex flag
    boost_pose_count: int = 120
    boost_rays_per_iter: int = 8192
    boost_lr: float = 5e-5
    boost_lr_final: float | None = None  # None: constant at boost_lr
    boost_epochs: int = 1
    finetune_iters: int = 0

    def resolve_boost(self, dataset):
        if self.depth_boost is None:
            return bool(dataset.depth_complex)
        return self.depth_boost


def extract_head_indices(n_regular, n_extract):
    """Centered-stride selection of output channels: channel i of the
    extracted head copies channel floor((i + 0.5) * N / N_e)."""
    if n_extract > n_regular:
        raise ValueError(
            f"cannot extract {n_extract} outputs from a {n_regular}-output field")
    return np.floor((np.arange(n_extract) + 0.5) * n_regular / n_extract).astype(int)


def extract_sample_field(regular, n_extract):
    """New sample field with ``n_extract`` outputs: trunk copied exactly,
    head rows selected by :func:`extract_head_indices`."""
    extracted = SampleField(n_extract, hidden=regular.hidden,
                            num_layers=regular.num_layers,
                            enc_origin=regular.enc_origin,
                            enc_dir=regular.enc_dir,
                            rng=np.random.default_rng(0))
    for dst, src in zip(extracted.trunk, regular.trunk):
        dst.w.data = src.w.data.copy()
        dst.b.data = src.b.data.copy()
    idx = extract_head_indices(regular.n_outputs, n_extract)
    extracted.head.w.data = regular.head.w.data[:, idx].copy()
    extracted.head.b.data = regular.head.b.data[idx].copy()
    return extracted


def _copy_field(field):
    clone = copy.deepcopy(field)
    for (_, dst), (_, src) in zip(clone.named_params(), field.named_params()):
        dst.data = src.data.copy()
        dst.grad = None
    return clone


def extract_pipeline(regular, n_extract):
    """Extracted pipeline: reduced sample field plus a copy of the radiance
    field (identical architecture, parameters copied verbatim)."""
    return NeuSamplePipeline(extract_sample_field(regular.sample_field, n_extract),
                             _copy_field(regular.radiance_field))


def predict_ray_depth(pipeline, rays, background=None):
    """Expected depth of each ray under the full pipeline, noise-free.
    Returns a detached (B,) array; nothing is retained for gradients."""
    out, _ = pipeline.render_rays(rays, background=background)
    return out.depth


def depth_boost(extracted, regular, dataset, plan, seed=0, log=None):
    """Fit the extracted field's mean depth to the regular pipeline's
    per-ray expected depth over one (or more) epochs of spiral-pose rays.

    Only the extracted sample-field parameters are updated; the regular
    pipeline and the extracted radiance field are never touched.  Returns
    the per-iteration losses.
    """
    if not plan.resolve_boost(dataset):
        return []
    poses = spiral_poses(dataset, plan.boost_pose_count)
    origins = np.concatenate([camera_rays(c, dataset.near, dataset.far).origins
                              for c in poses])
    dirs = np.concatenate([camera_rays(c, dataset.near, dataset.far).dirs
                           for c in poses])
    all_rays = Rays(origins, dirs, np.full(len(origins), dataset.near),
                    np.full(len(origins), dataset.far))

    # Targets are fixed by the frozen regular fields; compute them once.
    targets = np.empty(len(all_rays))
    for start in range(0, len(all_rays), 2048):
        stop = min(start + 2048, len(all_rays))
        targets[start:stop] = predict_ray_depth(regular, all_rays[start:stop],
                                                background=dataset.background)

    params = extracted.sample_field.named_params()
    iters_per_epoch = max(1, len(all_rays) // plan.boost_rays_per_iter)
    total = plan.boost_epochs * iters_per_epoch
    lr_final = plan.boost_lr if plan.boost_lr_final is None else plan.boost_lr_final
    state = AdamState.init(params, PolynomialSchedule(plan.boost_lr,
                                                      lr_final, total))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    losses = log if log is not None else []
    for _ in range(plan.boost_epochs):
        order = rng.permutation(len(all_rays))
        for it in range(iters_per_epoch):
            idx = order[it * plan.boost_rays_per_iter:
                        (it + 1) * plan.boost_rays_per_iter]
            batch = all_rays[idx]
            t_hat = extracted.sample_field.forward(batch.origins, batch.dirs)
            t_abs = ad.add(ad.constant(batch.near[:, None]),
                           ad.mul(t_hat, ad.constant(
                               (batch.far - batch.near)[:, None])))
            loss = depth_boost_loss(t_abs, targets[idx])
            ad.zero_grad(v for _, v in params)
            ad.backward(loss)
            adam_step(params, state)
            losses.append(float(loss.data))
    return losses


def finetune(extracted, dataset, plan, seed=0, batch_rays=None, noise_std=1.0,
             lr=5e-5, lr_final=5e-6):
    """Short end-to-end training of the extracted fields on the scene."""
    if plan.finetune_iters <= 0:
        return []
    settings = TrainSettings(iters=plan.finetune_iters,
                             batch_rays=batch_rays or 1024,
                             lr=lr, lr_final=lr_final, noise_std=noise_std,
                             seed=seed + 3)
    _, log = train_pipeline(extracted, dataset, settings)
    return log


def run_extraction(regular, dataset, plan, seed=0, batch_rays=None,
                   noise_std=1.0):
    """extract -> optional depth boost -> fine-tune; returns the extracted
    pipeline plus the boost/finetune histories."""
    extracted = extract_pipeline(regular, plan.n_extract)
    boost_log = depth_boost(extracted, regular, dataset, plan, seed=seed)
    tune_log = finetune(extracted, dataset, plan, seed=seed,
                        batch_rays=batch_rays, noise_std=noise_std)
    return extracted, boost_log, tune_log
