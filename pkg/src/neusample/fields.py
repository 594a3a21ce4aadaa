"""Positional encoding and the two field networks.

The sample field maps a ray (origin + unit direction) to N relative depths
in (0, 1) through an 8-layer, width-256 ReLU trunk with a mid-trunk skip
concatenation and a sigmoid head.  The radiance field maps a point and a
view direction to a raw (pre-activation) density and a sigmoid-bounded
RGB, with the density branch independent of the direction by construction.
Widths, depths, output counts, and encoding frequencies are all
configurable so reduced desk-scale variants train without code changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels


@dataclass(frozen=True)
class EncodingConfig:
    """Sinusoidal lifting: per scalar p emit [p?] ++ [sin(f_l p), cos(f_l p)]
    with angular frequencies f_l = pi * frequency_base**l."""

    num_frequencies: int = 10
    include_identity: bool = True
    frequency_base: float = 2.0

    def out_dim(self, in_dim):
        return in_dim * (2 * self.num_frequencies + (1 if self.include_identity else 0))

    def angular_frequencies(self):
        return np.pi * self.frequency_base ** np.arange(self.num_frequencies, dtype=np.float64)


def encode(x, cfg):
    """Positional-encode an (B, K) array or Value; Values stay on the graph."""
    freqs = cfg.angular_frequencies()
    if not isinstance(x, ad.Value):
        return kernels.encode_forward(np.ascontiguousarray(x, dtype=np.float64), freqs, cfg.include_identity)
    data = np.ascontiguousarray(x.data)
    out = kernels.encode_forward(data, freqs, cfg.include_identity)

    def vjp(g):
        return (kernels.encode_backward(data, freqs, cfg.include_identity,
                                        np.ascontiguousarray(g)),)

    return ad.custom_op("positional-encode", out, (x,), vjp)


def positional_encode(v, cfg):
    """Single-vector convenience wrapper around :func:`encode`."""
    v = np.asarray(v, dtype=np.float64)
    return encode(v[None, :], cfg)[0]


class Affine:
    """One fully connected layer, y = x @ w + b."""

    def __init__(self, w, b):
        self.w = ad.Value(w) if not isinstance(w, ad.Value) else w
        self.b = ad.Value(b) if not isinstance(b, ad.Value) else b

    @classmethod
    def init(cls, fan_in, fan_out, rng, zero=False):
        # Kaiming-style uniform fan-in scaling; biases start at zero.
        if zero:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return cls(w, np.zeros(fan_out))

    def __call__(self, x):
        return ad.matmul(x, self.w) + self.b

    @property
    def shape(self):
        return self.w.data.shape


def _check_directions(dirs, strict, what):
    norms = np.linalg.norm(dirs, axis=-1)
    if np.all(np.abs(norms - 1.0) <= 1e-6):
        return dirs
    if strict:
        raise ValueError(f"{what}: directions are not unit length (max |1-|d|| = "
                         f"{np.abs(norms - 1).max():.3g})")
    warnings.warn(f"{what}: normalizing non-unit directions", stacklevel=3)
    return dirs / norms[..., None]


class SampleField:
    """Ray -> N relative sample positions in (0, 1).

    Trunk of ``num_layers`` ReLU layers at ``hidden`` width; the encoded
    input is re-concatenated after layer ``num_layers // 2``; the head is a
    single affine to ``n_outputs`` followed by a sigmoid.
    """

    def __init__(self, n_outputs, hidden=256, num_layers=8,
                 enc_origin=EncodingConfig(10), enc_dir=EncodingConfig(10),
                 rng=None):
        if n_outputs < 1 or num_layers < 1:
            raise ValueError("n_outputs and num_layers must be positive")
        rng = rng or np.random.default_rng(0)
        self.n_outputs = n_outputs
        self.hidden = hidden
        self.num_layers = num_layers
        self.enc_origin = enc_origin
        self.enc_dir = enc_dir
        self.skip_after = num_layers // 2 if num_layers >= 2 else None
        self.in_dim = enc_origin.out_dim(3) + enc_dir.out_dim(3)
        self.trunk = [
            Affine.init(fi, fo, rng) for fi, fo in self.trunk_shapes(
                self.in_dim, hidden, num_layers, self.skip_after)
        ]
        self.head = Affine.init(hidden, n_outputs, rng)

    @staticmethod
    def trunk_shapes(in_dim, hidden, num_layers, skip_after):
        shapes = []
        last = in_dim
        for i in range(num_layers):
            shapes.append((last, hidden))
            last = hidden + in_dim if skip_after is not None and i + 1 == skip_after else hidden
        return shapes

    def layer_shapes(self):
        """(fan_in, fan_out) of every affine layer, trunk then head."""
        return [lyr.shape for lyr in self.trunk] + [self.head.shape]

    def named_params(self):
        out = []
        for i, lyr in enumerate(self.trunk):
            out += [(f"trunk.{i}.w", lyr.w), (f"trunk.{i}.b", lyr.b)]
        out += [("head.w", self.head.w), ("head.b", self.head.b)]
        return out

    def forward(self, origins, dirs, strict=False):
        """origins/dirs: (B, 3) arrays.  Returns a (B, N) Value in (0, 1)."""
        dirs = _check_directions(np.asarray(dirs, dtype=np.float64), strict,
                                 "sample field")
        inp = ad.concat([encode(ad.constant(origins), self.enc_origin),
                         encode(ad.constant(dirs), self.enc_dir)])
        h = inp
        for i, lyr in enumerate(self.trunk):
            h = ad.relu(lyr(h))
            if self.skip_after is not None and i + 1 == self.skip_after:
                h = ad.concat([h, inp])
        return ad.sigmoid(self.head(h))


class RadianceField:
    """Point + view direction -> (raw density, rgb).

    The trunk re-concatenates the encoded position after layer
    ``num_layers // 2 + 1``; the density head reads the trunk output
    directly, so the raw density is exactly independent of the direction.
    The direction branch concatenates a linear feature of the trunk with
    the encoded direction and passes one ``dir_hidden``-wide ReLU layer
    before the sigmoid RGB head.
    """

    def __init__(self, hidden=256, num_layers=8, dir_hidden=128,
                 enc_pos=EncodingConfig(10), enc_dir=EncodingConfig(4),
                 rng=None):
        rng = rng or np.random.default_rng(0)
        self.hidden = hidden
        self.num_layers = num_layers
        self.dir_hidden = dir_hidden
        self.enc_pos = enc_pos
        self.enc_dir = enc_dir
        self.skip_after = num_layers // 2 + 1 if num_layers >= 3 else None
        self.pos_dim = enc_pos.out_dim(3)
        self.dir_dim = enc_dir.out_dim(3)
        self.trunk = [
            Affine.init(fi, fo, rng) for fi, fo in SampleField.trunk_shapes(
                self.pos_dim, hidden, num_layers, self.skip_after)
        ]
        self.density_head = Affine.init(hidden, 1, rng)
        self.feature = Affine.init(hidden, hidden, rng)
        self.dir_layer = Affine.init(hidden + self.dir_dim, dir_hidden, rng)
        self.rgb_head = Affine.init(dir_hidden, 3, rng)

    def layer_shapes(self):
        return ([lyr.shape for lyr in self.trunk]
                + [self.density_head.shape, self.feature.shape,
                   self.dir_layer.shape, self.rgb_head.shape])

    def named_params(self):
        out = []
        for i, lyr in enumerate(self.trunk):
            out += [(f"trunk.{i}.w", lyr.w), (f"trunk.{i}.b", lyr.b)]
        for name, lyr in (("density_head", self.density_head),
                          ("feature", self.feature),
                          ("dir_layer", self.dir_layer),
                          ("rgb_head", self.rgb_head)):
            out += [(f"{name}.w", lyr.w), (f"{name}.b", lyr.b)]
        return out

    def forward(self, positions, dirs, strict=False):
        """positions: (M, 3) Value or array; dirs: (M, 3) array.

        Returns (raw_density (M,), rgb (M, 3)) Values.  Gradients flow into
        the positions, which is what lets a sample field learn where to
        place its samples.
        """
        pos = positions if isinstance(positions, ad.Value) else ad.constant(positions)
        dirs = _check_directions(np.asarray(dirs, dtype=np.float64), strict,
                                 "radiance field")
        inp = encode(pos, self.enc_pos)
        h = inp
        for i, lyr in enumerate(self.trunk):
            h = ad.relu(lyr(h))
            if self.skip_after is not None and i + 1 == self.skip_after:
                h = ad.concat([h, inp])
        raw_density = ad.reshape(self.density_head(h), (-1,))
        feat = self.feature(h)
        d_enc = encode(np.ascontiguousarray(dirs), self.enc_dir)
        hd = ad.relu(self.dir_layer(ad.concat([feat, ad.constant(d_enc)])))
        rgb = ad.sigmoid(self.rgb_head(hd))
        return raw_density, rgb
