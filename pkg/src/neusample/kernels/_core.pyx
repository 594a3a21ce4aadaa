# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: single-pass variants of the numpy reference.

Each function mirrors reference.py exactly (same signatures, same
summation order), so the two backends agree to floating-point noise and
either can back the autodiff ops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp, sin as c_sin, cos as c_cos

cnp.import_array()

BACKEND = "compiled"

cdef double DELTA_FLOOR_C = 1e-10
DELTA_FLOOR = DELTA_FLOOR_C


def composite_forward(double[:, ::1] t, double[:, ::1] sigma_raw,
                      double[:, ::1] noise, double[:, :, ::1] rgb,
                      double[::1] far, background):
    cdef Py_ssize_t b = t.shape[0], n = t.shape[1]
    cdef cnp.ndarray[double, ndim=2] color_a = np.zeros((b, 3))
    cdef cnp.ndarray[double, ndim=2] weights_a = np.empty((b, n))
    cdef cnp.ndarray[double, ndim=2] trans_a = np.empty((b, n))
    cdef cnp.ndarray[double, ndim=1] depth_a = np.zeros(b)
    cdef cnp.ndarray[double, ndim=1] acc_a = np.zeros(b)
    cdef cnp.ndarray[double, ndim=2] sigma_a = np.empty((b, n))
    cdef cnp.ndarray[double, ndim=2] delta_a = np.empty((b, n))
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] mask_a = np.empty((b, n), dtype=np.uint8)
    cdef cnp.ndarray[double, ndim=2] decay_a = np.empty((b, n))
    cdef double[:, ::1] color = color_a, weights = weights_a, trans = trans_a
    cdef double[:, ::1] sigma = sigma_a, delta = delta_a, decay = decay_a
    cdef double[::1] depth = depth_a, acc = acc_a
    cdef cnp.uint8_t[:, ::1] mask = mask_a
    cdef double[::1] bg
    cdef bint has_bg = background is not None
    if has_bg:
        bg = np.ascontiguousarray(background, dtype=np.float64)

    cdef Py_ssize_t i, j, c
    cdef double pre, tr, d, e, w, rem
    for i in range(b):
        tr = 1.0
        for j in range(n):
            pre = sigma_raw[i, j] + noise[i, j]
            if pre > 0.0:
                mask[i, j] = 1
                sigma[i, j] = pre
            else:
                mask[i, j] = 0
                sigma[i, j] = 0.0
            if j + 1 < n:
                d = t[i, j + 1] - t[i, j]
            else:
                d = far[i] - t[i, j]
                if d < DELTA_FLOOR_C:
                    d = DELTA_FLOOR_C
            delta[i, j] = d
            e = c_exp(-sigma[i, j] * d)
            decay[i, j] = e
            trans[i, j] = tr
            w = tr * (1.0 - e)
            weights[i, j] = w
            for c in range(3):
                color[i, c] += w * rgb[i, j, c]
            acc[i] += w
            depth[i] += w * t[i, j]
            tr *= e
        if has_bg:
            rem = 1.0 - acc[i]
            for c in range(3):
                color[i, c] += rem * bg[c]
    return (color_a, weights_a, trans_a, depth_a, acc_a, sigma_a, delta_a,
            mask_a, decay_a)


def composite_backward(double[:, ::1] gcolor, double[:, ::1] t,
                       double[:, :, ::1] rgb, double[::1] far, background,
                       double[:, ::1] sigma, double[:, ::1] delta,
                       cnp.uint8_t[:, ::1] mask, double[:, ::1] decay,
                       double[:, ::1] trans, double[:, ::1] weights):
    cdef Py_ssize_t b = t.shape[0], n = t.shape[1]
    cdef cnp.ndarray[double, ndim=2] gt_a = np.zeros((b, n))
    cdef cnp.ndarray[double, ndim=2] gsig_a = np.empty((b, n))
    cdef cnp.ndarray[double, ndim=3] grgb_a = np.empty((b, n, 3))
    cdef double[:, ::1] gt = gt_a, gsig = gsig_a
    cdef double[:, :, ::1] grgb = grgb_a
    cdef double[::1] bg
    cdef bint has_bg = background is not None
    if has_bg:
        bg = np.ascontiguousarray(background, dtype=np.float64)

    cdef Py_ssize_t i, j, c
    cdef double gw, suffix, gs, gd, bgc
    for i in range(b):
        suffix = 0.0
        for j in range(n - 1, -1, -1):
            gw = 0.0
            for c in range(3):
                bgc = bg[c] if has_bg else 0.0
                gw += gcolor[i, c] * (rgb[i, j, c] - bgc)
                grgb[i, j, c] = gcolor[i, c] * weights[i, j]
            gs = trans[i, j] * decay[i, j] * gw - suffix
            suffix += weights[i, j] * gw
            gsig[i, j] = gs * delta[i, j] if mask[i, j] else 0.0
            gd = gs * sigma[i, j]
            if j + 1 < n:
                gt[i, j + 1] += gd
                gt[i, j] -= gd
            elif far[i] - t[i, j] > DELTA_FLOOR_C:
                gt[i, j] -= gd
    return gt_a, gsig_a, grgb_a


def encode_forward(double[:, ::1] x, double[::1] freqs, bint include_identity):
    cdef Py_ssize_t b = x.shape[0], k = x.shape[1], nf = freqs.shape[0]
    cdef Py_ssize_t width = 2 * nf + (1 if include_identity else 0)
    cdef cnp.ndarray[double, ndim=2] out_a = np.empty((b, k * width))
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, j, l, base
    cdef double v, ang
    for i in range(b):
        for j in range(k):
            base = j * width
            v = x[i, j]
            if include_identity:
                out[i, base] = v
                base += 1
            for l in range(nf):
                ang = v * freqs[l]
                out[i, base + 2 * l] = c_sin(ang)
                out[i, base + 2 * l + 1] = c_cos(ang)
    return out_a


def encode_backward(double[:, ::1] x, double[::1] freqs, bint include_identity,
                    double[:, ::1] gout):
    cdef Py_ssize_t b = x.shape[0], k = x.shape[1], nf = freqs.shape[0]
    cdef Py_ssize_t width = 2 * nf + (1 if include_identity else 0)
    cdef cnp.ndarray[double, ndim=2] gx_a = np.empty((b, k))
    cdef double[:, ::1] gx = gx_a
    cdef Py_ssize_t i, j, l, base
    cdef double v, ang, acc
    for i in range(b):
        for j in range(k):
            base = j * width
            v = x[i, j]
            acc = 0.0
            if include_identity:
                base += 1
            for l in range(nf):
                ang = v * freqs[l]
                acc += gout[i, base + 2 * l] * c_cos(ang) * freqs[l]
                acc -= gout[i, base + 2 * l + 1] * c_sin(ang) * freqs[l]
            if include_identity:
                acc += gout[i, j * width]
            gx[i, j] = acc
    return gx_a


def sample_pdf(double[:, ::1] edges, double[:, ::1] weights, double[:, ::1] u_in):
    cdef Py_ssize_t b = weights.shape[0], m = weights.shape[1]
    cdef Py_ssize_t n = u_in.shape[1]
    cdef cnp.ndarray[double, ndim=2] u_a = np.sort(u_in, axis=1)
    cdef cnp.ndarray[double, ndim=2] out_a = np.empty((b, n))
    cdef cnp.ndarray[double, ndim=1] cdf_a = np.empty(m + 1)
    cdef double[:, ::1] u = u_a, out = out_a
    cdef double[::1] cdf = cdf_a
    cdef Py_ssize_t i, j, hi
    cdef double total, uv, lo_c, span, frac
    for i in range(b):
        total = 0.0
        for j in range(m):
            total += weights[i, j]
        cdf[0] = 0.0
        for j in range(m):
            cdf[j + 1] = cdf[j] + weights[i, j] / total
        hi = 1
        for j in range(n):
            uv = u[i, j]
            while hi < m and cdf[hi] <= uv:
                hi += 1
            lo_c = cdf[hi - 1]
            span = cdf[hi] - lo_c
            if span < 1e-12:
                frac = (uv - lo_c)
            else:
                frac = (uv - lo_c) / span
            out[i, j] = edges[i, hi - 1] + frac * (edges[i, hi] - edges[i, hi - 1])
    return out_a
