"""Versioned checkpoints: a JSON manifest beside a raw float64 blob.

``<name>.manifest`` holds the format version, the architecture needed to
rebuild the networks, the training step, and the name/shape/offset of
every array; ``<name>.blob`` is the concatenation of all arrays as
little-endian float64 in manifest order.  A SHA-256 over the blob guards
integrity, and loading is all-or-nothing: version or hash mismatches
raise before any array is handed out.  Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    arch: dict
    params: dict           # name -> float64 array
    train_step: int
    optimizer: dict | None  # {"step", "beta1", "beta2", "eps", "schedule", "m", "v"}

    @property
    def pipeline_kind(self):
        return self.arch["pipeline"]


def _paths(base):
    base = Path(base)
    if base.suffix in (".manifest", ".blob"):
        base = base.with_suffix("")
    return base.with_suffix(".manifest"), base.with_suffix(".blob")


def save_checkpoint(base, arch, named_params, train_step=0, optimizer=None):
    """Write ``base``.manifest and ``base``.blob.

    ``named_params`` is an ordered sequence of (name, array-or-Value);
    ``optimizer`` optionally carries Adam moments keyed like the params.
    """
    manifest_path, blob_path = _paths(base)
    entries, chunks = [], []
    offset = 0

    def push(name, arr):
        nonlocal offset
        arr = np.ascontiguousarray(
            arr.data if hasattr(arr, "data") and hasattr(arr, "grad") else arr,
            dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size

    for name, p in named_params:
        push(name, p)
    opt_meta = None
    if optimizer is not None:
        opt_entries_start = len(entries)
        for name, arr in optimizer["m"].items():
            push(f"opt.m.{name}", arr)
        for name, arr in optimizer["v"].items():
            push(f"opt.v.{name}", arr)
        opt_meta = {
            "step": optimizer["step"],
            "beta1": optimizer["beta1"],
            "beta2": optimizer["beta2"],
            "eps": optimizer["eps"],
            "schedule": optimizer["schedule"],
            "first_entry": opt_entries_start,
        }

    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "train_step": train_step,
        "arch": arch,
        "params": entries,
        "optimizer": opt_meta,
        "blob_doubles": offset,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    blob_path.write_bytes(blob)
    return manifest_path, blob_path


def load_checkpoint(base):
    manifest_path, blob_path = _paths(base)
    if not manifest_path.exists():
        raise DataError(f"checkpoint manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path.name}: invalid JSON ({e})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"unsupported checkpoint format version {version!r} "
            f"(this build reads version {FORMAT_VERSION})")
    blob = blob_path.read_bytes()
    if len(blob) != 8 * manifest["blob_doubles"]:
        raise DataError(
            f"checkpoint blob is {len(blob)} bytes, manifest expects "
            f"{8 * manifest['blob_doubles']}; refusing partial load")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["blob_sha256"]:
        raise DataError("checkpoint blob hash mismatch; file is corrupt")

    flat = np.frombuffer(blob, dtype="<f8")
    arrays = {}
    for entry in manifest["params"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = (
            flat[entry["offset"]:entry["offset"] + size]
            .reshape(entry["shape"]).copy())

    params = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    optimizer = None
    meta = manifest.get("optimizer")
    if meta is not None:
        optimizer = {
            "step": meta["step"],
            "beta1": meta["beta1"],
            "beta2": meta["beta2"],
            "eps": meta["eps"],
            "schedule": meta["schedule"],
            "m": {k[len("opt.m."):]: v for k, v in arrays.items()
                  if k.startswith("opt.m.")},
            "v": {k[len("opt.v."):]: v for k, v in arrays.items()
                  if k.startswith("opt.v.")},
        }
    return Checkpoint(arch=manifest["arch"], params=params,
                      train_step=manifest["train_step"], optimizer=optimizer)
