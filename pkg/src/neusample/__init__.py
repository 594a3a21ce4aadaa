"""Single-shot learned ray sampling for neural volume rendering.

A sample field maps each camera ray to an ordered set of depths in one
network evaluation, replacing the coarse stage of the classic two-pass
hierarchical renderer; the samples feed a radiance field and a
differentiable quadrature compositor, and the whole stack trains end to
end with the package's own reverse-mode autodiff.  Trained sample fields
can be extracted to fewer outputs (with an optional depth-boost
initialization) and fine-tuned for cheaper inference.
"""

from .autodiff import Value, backward, forward_op, grad_check
from .config import RunConfig, desk_profile
from .fields import EncodingConfig, RadianceField, SampleField
from .kernels import backend_name
from .metrics import psnr, relative_cost, ssim
from .pipeline import HierarchicalPipeline, NeuSamplePipeline, build_pipeline
from .render import color_loss, composite, depth_boost_loss
from .sampling import Rays, inverse_cdf_resample, stratified_sample, to_world_samples
from .scene import SceneDataset, load_blender_scene, load_scene, toy_preset

__version__ = "0.1.0"

__all__ = [
    "EncodingConfig", "HierarchicalPipeline", "NeuSamplePipeline", "Rays",
    "RadianceField", "RunConfig", "SampleField", "SceneDataset", "Value",
    "backend_name", "backward", "build_pipeline", "color_loss", "composite",
    "depth_boost_loss", "desk_profile", "forward_op", "grad_check",
    "inverse_cdf_resample", "load_blender_scene", "load_scene", "psnr",
    "relative_cost", "ssim", "stratified_sample", "to_world_samples",
    "toy_preset", "__version__",
]
