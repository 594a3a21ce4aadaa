"""Quality metrics, analytic cost accounting, and the report format.

Costs are multiply-accumulate counts of affine layers only (encodings and
compositing are negligible by comparison and excluded); they are pure
functions of layer shapes and per-ray evaluation counts, so the relative
cost of two pipelines never depends on image size.  Reports are JSON
lines, one record per view plus an aggregate row, so they diff cleanly
and parse back losslessly.
"""

from __future__ import annotations

import json
import os
import threading
import time

import numpy as np

PSNR_SENTINEL_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def psnr(img_a, img_b):
    """10 log10(1/MSE) for images in [0, 1]; capped at the 99 dB sentinel."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse <= 0.0:
        return PSNR_SENTINEL_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_SENTINEL_DB)


def _gaussian_kernel():
    r = np.arange(_SSIM_WINDOW) - (_SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * _SSIM_SIGMA**2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_mean(img, kernel):
    win = np.lib.stride_tricks.sliding_window_view(img, kernel.shape)
    return np.einsum("hwij,ij->hw", win, kernel)


def ssim(img_a, img_b):
    """Structural similarity with the standard 11x11 Gaussian window
    (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2), averaged over channels."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[0], a.shape[1]) < _SSIM_WINDOW:
        raise ValueError(
            f"ssim: image {a.shape[1]}x{a.shape[0]} smaller than the "
            f"{_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    kernel = _gaussian_kernel()
    scores = []
    for c in range(a.shape[2]):
        xa, xb = a[:, :, c], b[:, :, c]
        mu_a = _windowed_mean(xa, kernel)
        mu_b = _windowed_mean(xb, kernel)
        var_a = _windowed_mean(xa * xa, kernel) - mu_a**2
        var_b = _windowed_mean(xb * xb, kernel) - mu_b**2
        cov = _windowed_mean(xa * xb, kernel) - mu_a * mu_b
        num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
        den = (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# analytic cost model
# ---------------------------------------------------------------------------


def mac_count(layer_shapes):
    """Multiply-accumulates of one forward pass over affine layers."""
    return sum(int(fi) * int(fo) for fi, fo in layer_shapes)


def neusample_ray_cost(sample_field_shapes, radiance_shapes, n_samples):
    """Per-ray MACs: one sample-field eval plus one radiance eval per sample."""
    return mac_count(sample_field_shapes) + n_samples * mac_count(radiance_shapes)


def hierarchical_ray_cost(coarse_shapes, fine_shapes, n_coarse, n_fine):
    """Per-ray MACs of the two-stage baseline: the coarse network runs on
    the coarse samples, the fine network on the merged coarse+fine set."""
    return (n_coarse * mac_count(coarse_shapes)
            + (n_coarse + n_fine) * mac_count(fine_shapes))


def relative_cost(baseline_ray_macs, pipeline_ray_macs):
    return pipeline_ray_macs / baseline_ray_macs


def eval_counts(pipeline_kind, n_samples=None, n_coarse=None, n_fine=None):
    """Network evaluations per rendered ray, by network role."""
    if pipeline_kind == "neusample":
        return {"sample_field": 1, "radiance": n_samples}
    return {"coarse": n_coarse, "fine": n_coarse + n_fine}


# ---------------------------------------------------------------------------
# wall-clock benchmarking
# ---------------------------------------------------------------------------


def bench_render(render_fn, repeats=3, warmup=1):
    """Median/min wall time of ``render_fn()`` over ``repeats`` runs.

    Warm-up runs are excluded: the first evaluation pays allocator growth
    and page-fault costs that say nothing about steady-state throughput.
    """
    for _ in range(max(0, warmup)):
        render_fn()
    runs = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        render_fn()
        runs.append((time.perf_counter() - t0) * 1e3)
    return {
        "median_ms": float(np.median(runs)),
        "min_ms": float(min(runs)),
        "runs_ms": runs,
        "threads": threading.active_count(),
        "cpu_count": os.cpu_count(),
    }


# ---------------------------------------------------------------------------
# report I/O
# ---------------------------------------------------------------------------


def write_report(path, rows):
    """One JSON object per line; floats round-trip exactly via repr."""
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_report(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def aggregate_row(rows, keys=("psnr", "ssim")):
    agg = {"view": "aggregate"}
    for key in keys:
        vals = [r[key] for r in rows if key in r and r[key] is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    return agg
