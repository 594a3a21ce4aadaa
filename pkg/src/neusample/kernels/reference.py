"""Pure-numpy implementations of the hot per-ray kernels.

These are the fallback backend and the semantic reference for the compiled
extension in ``_core.pyx``; both expose the same functions with identical
signatures and (up to floating-point summation order, which is matched
deliberately) identical outputs.

Shapes use B for rays, N for samples per ray, M for PDF bins, L for
encoding frequencies.  All arrays are float64 and C-contiguous.
"""

from __future__ import annotations

import numpy as np

# Trailing gap between the last sample and the far bound is clamped below
# so total optical depth stays finite even when a sample sits on the bound.
DELTA_FLOOR = 1e-10

BACKEND = "python"


def composite_forward(t, sigma_raw, noise, rgb, far, background):
    """Quadrature compositing of one batch of rays.

    t:         (B, N) ascending sample depths
    sigma_raw: (B, N) pre-activation densities
    noise:     (B, N) additive density noise (zeros at eval time)
    rgb:       (B, N, 3) per-sample colors in [0, 1]
    far:       (B,) far bounds (defines the trailing gap)
    background:(3,) color composited under residual transmittance, or None

    Returns (color, weights, trans, depth, acc, sigma, delta, mask, decay):
    color (B, 3); weights/trans (B, N); depth/acc (B,); the rest are the
    saved intermediates the backward pass needs.
    """
    pre = sigma_raw + noise
    mask = (pre > 0.0).view(np.uint8)
    sigma = np.where(mask, pre, 0.0)
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = np.maximum(far - t[:, -1], DELTA_FLOOR)
    decay = np.exp(-sigma * delta)
    trans = np.ones_like(decay)
    trans[:, 1:] = np.cumprod(decay[:, :-1], axis=1)
    weights = trans * (1.0 - decay)
    color = np.einsum("bn,bnc->bc", weights, rgb)
    acc = weights.sum(axis=1)
    depth = (weights * t).sum(axis=1)
    if background is not None:
        color = color + (1.0 - acc)[:, None] * background
    return color, weights, trans, depth, acc, sigma, delta, mask, decay


def composite_backward(gcolor, t, rgb, far, background, sigma, delta, mask,
                       decay, trans, weights):
    """Gradient of the composited color w.r.t. t, sigma_raw, and rgb.

    Uses dw_k/ds_i = -w_k for i < k and trans_i * decay_i for i = k, where
    s_i = sigma_i * delta_i, which turns the double sum into one reversed
    cumulative sum.
    """
    crel = rgb if background is None else rgb - background
    gw = np.einsum("bc,bnc->bn", gcolor, crel)
    grgb = gcolor[:, None, :] * weights[..., None]

    wg = weights * gw
    suffix = np.zeros_like(wg)
    suffix[:, :-1] = np.flip(np.cumsum(np.flip(wg[:, 1:], axis=1), axis=1), axis=1)
    gs = trans * decay * gw - suffix
    gsigma_raw = gs * delta * mask
    gdelta = gs * sigma

    gt = np.zeros_like(t)
    gt[:, 1:] += gdelta[:, :-1]
    gt[:, :-1] -= gdelta[:, :-1]
    gt[:, -1] -= gdelta[:, -1] * (far - t[:, -1] > DELTA_FLOOR)
    return gt, gsigma_raw, grgb


def encode_forward(x, freqs, include_identity):
    """Sinusoidal lifting of each scalar of x (B, K) at the given angular
    frequencies (L,).  Output layout per scalar: [x?, sin f0 x, cos f0 x,
    sin f1 x, cos f1 x, ...], blocks concatenated per input scalar."""
    b, k = x.shape
    nf = freqs.shape[0]
    width = 2 * nf + (1 if include_identity else 0)
    out = np.empty((b, k, width))
    off = 0
    if include_identity:
        out[:, :, 0] = x
        off = 1
    ang = x[:, :, None] * freqs
    out[:, :, off::2] = np.sin(ang)
    out[:, :, off + 1 :: 2] = np.cos(ang)
    return out.reshape(b, k * width)


def encode_backward(x, freqs, include_identity, gout):
    b, k = x.shape
    nf = freqs.shape[0]
    width = 2 * nf + (1 if include_identity else 0)
    g = gout.reshape(b, k, width)
    ang = x[:, :, None] * freqs
    off = 1 if include_identity else 0
    gx = np.einsum("bkl,bkl->bk", g[:, :, off::2], np.cos(ang) * freqs)
    gx -= np.einsum("bkl,bkl->bk", g[:, :, off + 1 :: 2], np.sin(ang) * freqs)
    if include_identity:
        gx += g[:, :, 0]
    return gx


def sample_pdf(edges, weights, u):
    """Inverse-transform sampling of piecewise-constant ray PDFs.

    edges:   (B, M+1) ascending bin edges
    weights: (B, M) non-negative bin masses (caller applies any floor)
    u:       (B, n) uniform variates in [0, 1)

    Returns (B, n) depths, ascending per row.
    """
    b, m = weights.shape
    total = weights.sum(axis=1, keepdims=True)
    cdf = np.zeros((b, m + 1))
    np.cumsum(weights / total, axis=1, out=cdf[:, 1:])

    u = np.sort(u, axis=1)
    # Row-offset trick: shift each row by 2*row so one flat searchsorted
    # resolves all rows (cdf and u both live in [0, 1]).
    shift = 2.0 * np.arange(b)[:, None]
    flat = np.searchsorted(
        (cdf + shift).reshape(-1), (u + shift).reshape(-1), side="right"
    )
    hi = np.clip(flat.reshape(b, -1) - np.arange(b)[:, None] * (m + 1), 1, m)
    lo = hi - 1
    cdf_lo = np.take_along_axis(cdf, lo, axis=1)
    span = np.take_along_axis(cdf, hi, axis=1) - cdf_lo
    frac = (u - cdf_lo) / np.where(span < 1e-12, 1.0, span)
    e_lo = np.take_along_axis(edges, lo, axis=1)
    e_hi = np.take_along_axis(edges, hi, axis=1)
    return e_lo + frac * (e_hi - e_lo)
