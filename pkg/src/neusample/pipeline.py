"""Renderer pipelines: single-shot learned sampling and the two-stage
coarse/fine baseline.

Both expose the same surface: ``render_rays`` for one batch (keeping the
color on the autodiff graph), ``training_loss`` for one optimization step,
and ``named_params`` for the optimizer and checkpoints.  ``render_image``
splits a camera's rays over a thread pool; chunks write disjoint slices of
the output, so results do not depend on scheduling order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .fields import EncodingConfig, RadianceField, SampleField
from .metrics import hierarchical_ray_cost, neusample_ray_cost
from .render import color_loss, composite
from .sampling import SampleSet, inverse_cdf_resample, stratified_sample, to_world_samples
from .scene import camera_rays

NEUSAMPLE = "neusample"
HIERARCHICAL = "hierarchical-baseline"


def _flat_dirs(rays, n_samples):
    return np.repeat(rays.dirs, n_samples, axis=0)


def _query_field(field, sample_set, rays):
    """Evaluate a radiance field on every sample of a batch."""
    n = sample_set.n_samples
    x = ad.reshape(sample_set.x, (-1, 3))
    raw, rgb = field.forward(x, _flat_dirs(rays, n))
    return ad.reshape(raw, (len(rays), n)), ad.reshape(rgb, (len(rays), n, 3))


class NeuSamplePipeline:
    kind = NEUSAMPLE

    def __init__(self, sample_field, radiance_field):
        self.sample_field = sample_field
        self.radiance_field = radiance_field

    @property
    def n_samples(self):
        return self.sample_field.n_outputs

    def named_params(self):
        return ([(f"sample_field.{n}", v) for n, v in self.sample_field.named_params()]
                + [(f"radiance.{n}", v) for n, v in self.radiance_field.named_params()])

    def sample_rays(self, rays):
        """Sample field -> ordered world-space samples (differentiable)."""
        t_hat = self.sample_field.forward(rays.origins, rays.dirs)
        return to_world_samples(rays, t_hat)

    def render_rays(self, rays, noise_std=0.0, background=None, rng=None):
        samples = self.sample_rays(rays)
        raw, rgb = _query_field(self.radiance_field, samples, rays)
        out = composite(samples, raw, rgb, noise_std=noise_std,
                        background=background, rng=rng)
        return out, samples

    def training_loss(self, rays, target, noise_std=0.0, background=None, rng=None):
        out, _ = self.render_rays(rays, noise_std=noise_std,
                                  background=background, rng=rng)
        return color_loss(out.color, target), out

    def eval_color(self, rays, background=None):
        out, _ = self.render_rays(rays, background=background)
        return out

    def ray_macs(self):
        return neusample_ray_cost(self.sample_field.layer_shapes(),
                                  self.radiance_field.layer_shapes(),
                                  self.n_samples)


class HierarchicalPipeline:
    """Stratified coarse pass, inverse-CDF resampling from the coarse
    weights (detached, NeRF-style mid-bin edges), then a fine pass over the
    merged coarse+fine depth set through a second network."""

    kind = HIERARCHICAL

    def __init__(self, coarse_field, fine_field, n_coarse, n_fine):
        if n_coarse < 3:
            raise ConfigError("hierarchical baseline needs n_coarse >= 3")
        self.coarse_field = coarse_field
        self.fine_field = fine_field
        self.n_coarse = n_coarse
        self.n_fine = n_fine

    def named_params(self):
        return ([(f"coarse.{n}", v) for n, v in self.coarse_field.named_params()]
                + [(f"fine.{n}", v) for n, v in self.fine_field.named_params()])

    def render_rays(self, rays, noise_std=0.0, background=None, rng=None):
        coarse_samples = stratified_sample(rays, self.n_coarse, rng)
        raw_c, rgb_c = _query_field(self.coarse_field, coarse_samples, rays)
        out_c = composite(coarse_samples, raw_c, rgb_c, noise_std=noise_std,
                          background=background, rng=rng)

        t_c = coarse_samples.depths
        edges = 0.5 * (t_c[:, 1:] + t_c[:, :-1])
        t_f = inverse_cdf_resample(edges, out_c.weights[:, 1:-1],
                                   self.n_fine, rng)
        union = np.sort(np.concatenate([t_c, t_f], axis=1), axis=1)
        fine_samples = SampleSet(rays, union)
        raw_f, rgb_f = _query_field(self.fine_field, fine_samples, rays)
        out_f = composite(fine_samples, raw_f, rgb_f, noise_std=noise_std,
                          background=background, rng=rng)
        return out_f, out_c

    def training_loss(self, rays, target, noise_std=0.0, background=None, rng=None):
        out_f, out_c = self.render_rays(rays, noise_std=noise_std,
                                        background=background, rng=rng)
        loss = ad.add(color_loss(out_c.color, target),
                      color_loss(out_f.color, target))
        return loss, out_f

    def eval_color(self, rays, background=None):
        out_f, _ = self.render_rays(rays, background=background)
        return out_f

    def ray_macs(self):
        return hierarchical_ray_cost(self.coarse_field.layer_shapes(),
                                     self.fine_field.layer_shapes(),
                                     self.n_coarse, self.n_fine)


# ---------------------------------------------------------------------------
# construction / checkpoint round-trip
# ---------------------------------------------------------------------------


def build_pipeline(arch, seed=0):
    """Build a randomly initialized pipeline from an architecture dict
    (the same dict that checkpoints store)."""
    kind = arch["pipeline"]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    enc_pos = EncodingConfig(arch["freq_pos"])
    enc_view = EncodingConfig(arch["freq_view_dir"])

    def radiance():
        return RadianceField(hidden=arch["hidden"],
                             num_layers=arch["radiance_layers"],
                             dir_hidden=arch["dir_hidden"],
                             enc_pos=enc_pos, enc_dir=enc_view, rng=rng)

    if kind == NEUSAMPLE:
        sf = SampleField(arch["n_samples"], hidden=arch["hidden"],
                         num_layers=arch["sample_layers"],
                         enc_origin=EncodingConfig(arch["freq_origin"]),
                         enc_dir=EncodingConfig(arch["freq_ray_dir"]),
                         rng=rng)
        return NeuSamplePipeline(sf, radiance())
    if kind == HIERARCHICAL:
        return HierarchicalPipeline(radiance(), radiance(),
                                    arch["n_coarse"], arch["n_fine"])
    raise ConfigError(f"unknown pipeline kind {kind!r}")


def pipeline_arch(pipeline):
    """Architecture dict sufficient to rebuild ``pipeline``."""
    if pipeline.kind == NEUSAMPLE:
        sf, rf = pipeline.sample_field, pipeline.radiance_field
        return {
            "pipeline": NEUSAMPLE,
            "n_samples": sf.n_outputs,
            "hidden": rf.hidden,
            "sample_layers": sf.num_layers,
            "radiance_layers": rf.num_layers,
            "dir_hidden": rf.dir_hidden,
            "freq_origin": sf.enc_origin.num_frequencies,
            "freq_ray_dir": sf.enc_dir.num_frequencies,
            "freq_pos": rf.enc_pos.num_frequencies,
            "freq_view_dir": rf.enc_dir.num_frequencies,
        }
    rf = pipeline.fine_field
    return {
        "pipeline": HIERARCHICAL,
        "n_coarse": pipeline.n_coarse,
        "n_fine": pipeline.n_fine,
        "hidden": rf.hidden,
        "sample_layers": 0,
        "radiance_layers": rf.num_layers,
        "dir_hidden": rf.dir_hidden,
        "freq_origin": 0,
        "freq_ray_dir": 0,
        "freq_pos": rf.enc_pos.num_frequencies,
        "freq_view_dir": rf.enc_dir.num_frequencies,
    }


def load_params(pipeline, params):
    """Copy a checkpoint's parameter dict into a freshly built pipeline."""
    own = dict(pipeline.named_params())
    missing = set(own) - set(params)
    extra = set(params) - set(own)
    if missing or extra:
        raise ConfigError(
            f"checkpoint parameters do not match architecture "
            f"(missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]})")
    for name, value in own.items():
        src = params[name]
        if src.shape != value.data.shape:
            raise ConfigError(
                f"checkpoint parameter {name!r} has shape {src.shape}, "
                f"architecture expects {value.data.shape}")
        value.data = src.copy()
    return pipeline


def pipeline_from_checkpoint(ckpt, expect_arch=None):
    """Rebuild a pipeline from a loaded checkpoint.

    ``expect_arch`` guards slot mismatches: requesting, say, a 64-output
    sample field from a 192-output checkpoint fails here rather than
    silently reshaping (extraction is the supported path for that).
    """
    if expect_arch is not None and expect_arch != ckpt.arch:
        diffs = {k: (ckpt.arch.get(k), expect_arch.get(k))
                 for k in set(ckpt.arch) | set(expect_arch)
                 if ckpt.arch.get(k) != expect_arch.get(k)}
        raise ConfigError(
            f"checkpoint architecture does not match the requested one: "
            f"{diffs}; use the extraction pipeline to change sample counts")
    pipeline = build_pipeline(ckpt.arch, seed=0)
    return load_params(pipeline, ckpt.params)


# ---------------------------------------------------------------------------
# image rendering
# ---------------------------------------------------------------------------


def render_rays_chunked(pipeline, rays, background=None, chunk=512, workers=1):
    """Deterministic eval-mode render of a ray batch.

    Returns (rgb (B, 3), depth (B,), acc (B,)).  Chunks are independent
    and write disjoint output slices, so any worker count gives identical
    results; workers only change wall time.
    """
    b = len(rays)
    rgb = np.empty((b, 3))
    depth = np.empty(b)
    acc = np.empty(b)

    def run(start):
        stop = min(start + chunk, b)
        out = pipeline.eval_color(rays[start:stop], background=background)
        rgb[start:stop] = out.color.data
        depth[start:stop] = out.depth
        acc[start:stop] = out.alpha_acc

    starts = range(0, b, chunk)
    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return rgb, depth, acc


def render_image(pipeline, camera, near, far, background=None, chunk=512,
                 workers=1):
    rays = camera_rays(camera, near, far)
    rgb, depth, acc = render_rays_chunked(pipeline, rays, background=background,
                                          chunk=chunk, workers=workers)
    h, w = camera.height, camera.width
    return (rgb.reshape(h, w, 3), depth.reshape(h, w), acc.reshape(h, w))


def sample_records(pipeline, rays, background=None):
    """Per-sample dump for inspection: for every ray, exactly N records
    with depth, rgb, sigma, and weight; the weights of one ray sum to its
    accumulated opacity."""
    if pipeline.kind != NEUSAMPLE:
        raise ConfigError("sample dumps are defined for the single-shot pipeline")
    samples = pipeline.sample_rays(rays)
    raw, rgb = _query_field(pipeline.radiance_field, samples, rays)
    out = composite(samples, raw, rgb, background=background)
    sigma = np.maximum(raw.data, 0.0)
    records = []
    for i in range(len(rays)):
        for j in range(samples.n_samples):
            records.append({
                "ray": i,
                "sample": j,
                "depth": float(samples.depths[i, j]),
                "rgb": [float(c) for c in rgb.data[i, j]],
                "sigma": float(sigma[i, j]),
                "weight": float(out.weights[i, j]),
            })
    return records, out
