"""Differentiable quadrature rendering and the training losses.

A ray's color is the transmittance-weighted sum of per-sample colors,
with weight w_i = T_i (1 - exp(-sigma_i delta_i)) and T_i the product of
the survival factors of all earlier samples.  The composited color stays
on the autodiff graph (through depths, densities, and colors); weights,
transmittance, expected depth, and accumulated opacity are reported as
detached arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels


@dataclass
class RenderOutput:
    color: ad.Value            # (B, 3), on the graph
    weights: np.ndarray        # (B, N)
    transmittance: np.ndarray  # (B, N), T_1 = 1, non-increasing
    depth: np.ndarray          # (B,) expected depth, sum_i w_i t_i
    alpha_acc: np.ndarray      # (B,) accumulated opacity, sum_i w_i

    @property
    def rgb(self):
        return self.color.data


def composite(samples, raw_density, rgb, noise_std=0.0, background=None, rng=None):
    """Composite one batch of rays.

    samples:     SampleSet with ascending depths
    raw_density: (B, N) Value of pre-activation densities
    rgb:         (B, N, 3) Value of per-sample colors
    noise_std:   std of the density regularization noise (0 at eval time);
                 densities become relu(raw + noise)
    background:  (3,) color added under the residual transmittance, or None

    Gradients of the color flow into the sample depths (through the gaps),
    the raw densities (through the ReLU), and the colors.
    """
    t = samples.t
    tdata = np.ascontiguousarray(t.data)
    if np.any(tdata[:, 1:] - tdata[:, :-1] < 0):
        raise ValueError("composite: sample depths must be sorted ascending")
    raw = raw_density if isinstance(raw_density, ad.Value) else ad.constant(raw_density)
    col = rgb if isinstance(rgb, ad.Value) else ad.constant(rgb)
    if raw.shape != tdata.shape or col.shape != tdata.shape + (3,):
        raise ValueError(
            f"composite: shape mismatch, depths {tdata.shape}, densities "
            f"{raw.shape}, colors {col.shape}")
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("composite: noise_std > 0 requires an rng")
        noise = rng.standard_normal(tdata.shape) * noise_std
    else:
        noise = np.zeros_like(tdata)
    bg = None if background is None else np.asarray(background, dtype=np.float64)
    far = samples.rays.far

    raw_data = np.ascontiguousarray(raw.data)
    col_data = np.ascontiguousarray(col.data)
    (color, weights, trans, depth, acc,
     sigma, delta, mask, decay) = kernels.composite_forward(
        tdata, raw_data, noise, col_data, far, bg)

    def vjp(g):
        return kernels.composite_backward(
            np.ascontiguousarray(g), tdata, col_data, far, bg,
            sigma, delta, mask, decay, trans, weights)

    color_value = ad.custom_op("composite", color, (t, raw, col), vjp)
    return RenderOutput(color=color_value, weights=weights, transmittance=trans,
                        depth=depth, alpha_acc=acc)


def color_loss(rendered, reference):
    """Mean over the batch of the squared L2 color error."""
    ref = reference.data if isinstance(reference, ad.Value) else np.asarray(reference)
    if rendered.shape != ref.shape:
        raise ValueError(
            f"color_loss: shape mismatch {rendered.shape} vs {ref.shape}")
    diff = rendered - ad.constant(ref)
    return ad.mul(ad.reduce_sum(ad.square(diff)), 1.0 / ref.shape[0])


def depth_boost_loss(extracted_t, target_depth):
    """|mean_i t^e_i - d_r| per ray, averaged over the batch.

    ``extracted_t`` is a (B, N_e) Value of absolute depths from the
    extracted sample field; ``target_depth`` is the detached (B,) expected
    depth of the regular pipeline, so gradients reach only the extracted
    field.
    """
    extracted_t = extracted_t if isinstance(extracted_t, ad.Value) else ad.constant(extracted_t)
    target = np.broadcast_to(np.asarray(target_depth, dtype=np.float64),
                             (extracted_t.shape[0],))
    dev = ad.reduce_mean(extracted_t, axis=1) - ad.constant(target)
    return ad.reduce_mean(ad.absolute(dev))
