"""Run configuration: one dataclass drives every CLI command.

Defaults follow the reference training recipe (4096-ray batches, Adam
from 5e-4 to 5e-6 under a power-1 polynomial schedule, unit density noise,
192 sample-field outputs, width-256 8-layer networks, 10-frequency ray
encodings).  ``desk_profile`` shrinks widths, counts, and iterations to
something a CPU finishes in minutes; it is the out-of-the-box smoke-test
profile, while the full-scale defaults remain selectable and are
documented as long-running on CPU.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DATA_ROOT_ENV = "NEUSAMPLE_DATA_ROOT"


@dataclass
class ExtractionConfig:
    n_extract: int = 64
    depth_boost: bool | None = None
    boost_pose_count: int = 120
    boost_rays_per_iter: int = 8192
    boost_lr: float = 5e-5
    boost_epochs: int = 1
    finetune_iters: int | None = None  # None: 10% of the training iterations


@dataclass
class RunConfig:
    scene: str = ""
    pipeline: str = "neusample"          # or "hierarchical-baseline"
    # sample counts
    n_samples: int = 192
    n_coarse: int = 64
    n_fine: int = 128
    # architecture
    hidden: int = 256
    sample_layers: int = 8
    radiance_layers: int = 8
    dir_hidden: int = 128
    freq_origin: int = 10
    freq_ray_dir: int = 10
    freq_pos: int = 10
    freq_view_dir: int = 4
    # training
    iters: int = 400_000
    batch_rays: int = 4096
    lr: float = 5e-4
    lr_final: float = 5e-6
    lr_power: float = 1.0
    noise_std: float = 1.0
    # run plumbing
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1
    chunk_rays: int = 512
    downscale: int = 1
    eval_every: int = 0
    checkpoint_every: int = 0
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)

    def __post_init__(self):
        if self.pipeline not in ("neusample", "hierarchical-baseline"):
            raise ConfigError(
                f"invalid config field 'pipeline': {self.pipeline!r} "
                f"(expected 'neusample' or 'hierarchical-baseline')")
        for name in ("n_samples", "n_coarse", "n_fine", "hidden", "batch_rays",
                     "workers", "chunk_rays", "downscale"):
            if getattr(self, name) < 1:
                raise ConfigError(f"invalid config field {name!r}: must be >= 1")
        if self.iters < 0:
            raise ConfigError("invalid config field 'iters': must be >= 0")

    def arch(self):
        """Architecture dict for pipeline construction / checkpoints."""
        return {
            "pipeline": self.pipeline,
            "n_samples": self.n_samples,
            "n_coarse": self.n_coarse,
            "n_fine": self.n_fine,
            "hidden": self.hidden,
            "sample_layers": self.sample_layers,
            "radiance_layers": self.radiance_layers,
            "dir_hidden": self.dir_hidden,
            "freq_origin": self.freq_origin,
            "freq_ray_dir": self.freq_ray_dir,
            "freq_pos": self.freq_pos,
            "freq_view_dir": self.freq_view_dir,
        }

    def scene_path(self):
        p = Path(self.scene)
        root = os.environ.get(DATA_ROOT_ENV)
        if not p.is_absolute() and root and not p.exists():
            return Path(root) / p
        return p

    def finetune_iters(self):
        if self.extraction.finetune_iters is not None:
            return self.extraction.finetune_iters
        return max(1, self.iters // 10)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        ext_data = data.pop("extraction", {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
        ext_known = {f.name for f in dataclasses.fields(ExtractionConfig)}
        ext_unknown = set(ext_data) - ext_known
        if ext_unknown:
            raise ConfigError(
                f"unknown config field 'extraction.{sorted(ext_unknown)[0]}'")
        return cls(extraction=ExtractionConfig(**ext_data), **data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(data)


def desk_profile(**overrides):
    """Small-everything profile: width-64 nets, 32 samples, 5k iterations.
    Finishes on a laptop CPU while still exercising every code path."""
    cfg = dict(
        n_samples=32,
        n_coarse=8,
        n_fine=16,
        hidden=64,
        sample_layers=4,
        radiance_layers=4,
        dir_hidden=32,
        iters=5000,
        batch_rays=256,
        chunk_rays=1024,
        eval_every=1000,
        extraction=ExtractionConfig(n_extract=8, boost_pose_count=30,
                                    boost_rays_per_iter=2048,
                                    finetune_iters=500),
    )
    cfg.update(overrides)
    return RunConfig(**cfg)
