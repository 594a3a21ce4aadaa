"""Ray containers and the three depth-sampling strategies.

Depths live in [near, far] along unit-direction rays.  Batches are structs
of arrays: (B, 3) origins/directions with (B,) bounds.  All strategies are
pure functions of their rng, so parallel callers derive per-worker seeds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels

# Mass floor added to resampling weights before normalization so degenerate
# all-zero weights fall back to a uniform PDF.
WEIGHT_FLOOR = 1e-5


@dataclass
class Rays:
    """A batch of rays: origin o, unit direction d, and [near, far] bounds."""

    origins: np.ndarray  # (B, 3)
    dirs: np.ndarray     # (B, 3)
    near: np.ndarray     # (B,)
    far: np.ndarray      # (B,)

    def __post_init__(self):
        self.origins = np.ascontiguousarray(self.origins, dtype=np.float64)
        self.dirs = np.ascontiguousarray(self.dirs, dtype=np.float64)
        b = self.origins.shape[0]
        self.near = np.broadcast_to(np.asarray(self.near, dtype=np.float64), (b,)).copy()
        self.far = np.broadcast_to(np.asarray(self.far, dtype=np.float64), (b,)).copy()
        if np.any(self.near >= self.far):
            raise ValueError("rays: near bound must be strictly below far bound")
        norms = np.linalg.norm(self.dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            warnings.warn("rays: normalizing non-unit directions", stacklevel=2)
            self.dirs = self.dirs / norms[:, None]

    def __len__(self):
        return self.origins.shape[0]

    def __getitem__(self, idx):
        return Rays(self.origins[idx], self.dirs[idx], self.near[idx], self.far[idx])

    @classmethod
    def single(cls, origin, direction, near, far):
        return cls(np.asarray(origin, dtype=np.float64)[None, :],
                   np.asarray(direction, dtype=np.float64)[None, :],
                   np.atleast_1d(near), np.atleast_1d(far))


class SampleSet:
    """Ordered sample depths with their world positions.

    ``t`` is an ascending (B, N) Value, ``x`` the (B, N, 3) Value with
    x_i = o + t_i d; both stay on the autodiff graph when the depths came
    from a sample field.  ``gaps`` returns the inter-sample distances with
    the trailing gap bounded by the far plane.
    """

    def __init__(self, rays, t):
        self.rays = rays
        self.t = t if isinstance(t, ad.Value) else ad.constant(t)
        t3 = ad.reshape(self.t, (len(rays), -1, 1))
        self.x = ad.add(ad.constant(rays.origins[:, None, :]),
                        ad.mul(t3, ad.constant(rays.dirs[:, None, :])))

    @property
    def depths(self):
        return self.t.data

    @property
    def positions(self):
        return self.x.data

    @property
    def n_samples(self):
        return self.t.data.shape[1]

    def gaps(self):
        t = self.t.data
        delta = np.empty_like(t)
        delta[:, :-1] = t[:, 1:] - t[:, :-1]
        delta[:, -1] = np.maximum(self.rays.far - t[:, -1], kernels.DELTA_FLOOR)
        return delta


def stratified_sample(rays, n_coarse, rng=None):
    """One uniform draw from each of ``n_coarse`` evenly partitioned bins
    of [near, far]; deterministic bin midpoints when ``rng`` is None."""
    if n_coarse < 1:
        raise ValueError("n_coarse must be >= 1")
    b = len(rays)
    if rng is None:
        u = np.full((b, n_coarse), 0.5)
    else:
        u = rng.uniform(size=(b, n_coarse))
    offsets = (np.arange(n_coarse) + u) / n_coarse
    t = rays.near[:, None] + offsets * (rays.far - rays.near)[:, None]
    return SampleSet(rays, t)


def inverse_cdf_resample(bin_edges, weights, n_fine, rng=None, floor=WEIGHT_FLOOR):
    """Draw ``n_fine`` depths per ray from the piecewise-constant PDF whose
    bins are consecutive ``bin_edges`` with mass proportional to the
    floored ``weights``.

    bin_edges: (B, M+1) ascending; weights: (B, M) non-negative.  The mass
    floor keeps degenerate all-zero rows sampling uniformly.  Deterministic
    mid-quantile variates when ``rng`` is None.  Returns (B, n_fine),
    ascending per row.
    """
    bin_edges = np.ascontiguousarray(bin_edges, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if bin_edges.shape[1] != weights.shape[1] + 1:
        raise ValueError(
            f"inverse_cdf_resample: need one more edge than weights, got "
            f"edges {bin_edges.shape} and weights {weights.shape}")
    if rng is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine,
                            (weights.shape[0], n_fine)).copy()
    else:
        u = rng.uniform(size=(weights.shape[0], n_fine))
    return kernels.sample_pdf(bin_edges, weights + floor, u)


def to_world_samples(rays, t_hat):
    """Map relative depths in (0, 1) to an ordered world-space SampleSet.

    t_i = (1 - t̂_i) near + t̂_i far; the depths are then sorted with a
    gradient-transparent permutation (the ordering is treated as locally
    constant) and positions are reconstructed as o + t d.
    """
    t_hat = t_hat if isinstance(t_hat, ad.Value) else ad.constant(t_hat)
    span = ad.constant((rays.far - rays.near)[:, None])
    t = ad.add(ad.constant(rays.near[:, None]), ad.mul(t_hat, span))
    t_sorted = ad.sort_by_key(t.data, t)
    return SampleSet(rays, t_sorted)
