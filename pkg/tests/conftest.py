import numpy as np
import pytest

from neusample.fields import EncodingConfig, RadianceField, SampleField
from neusample.sampling import Rays


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_sample_field(n_outputs=4, hidden=16, num_layers=2, freqs=2, seed=7):
    return SampleField(n_outputs, hidden=hidden, num_layers=num_layers,
                       enc_origin=EncodingConfig(freqs),
                       enc_dir=EncodingConfig(freqs),
                       rng=np.random.default_rng(seed))


def tiny_radiance_field(hidden=16, num_layers=2, dir_hidden=8, seed=8,
                        density_bias=1.0):
    rf = RadianceField(hidden=hidden, num_layers=num_layers,
                       dir_hidden=dir_hidden, enc_pos=EncodingConfig(2),
                       enc_dir=EncodingConfig(1),
                       rng=np.random.default_rng(seed))
    # Push densities into the ReLU-active regime so gradients flow.
    rf.density_head.b.data[:] = density_bias
    return rf


def random_rays(n, seed=0, near=2.0, far=6.0):
    r = np.random.default_rng(seed)
    origins = r.normal(0.0, 1.0, (n, 3))
    dirs = r.normal(0.0, 1.0, (n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return Rays(origins, dirs, np.full(n, near), np.full(n, far))
