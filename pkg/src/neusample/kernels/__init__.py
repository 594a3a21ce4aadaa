"""Hot-loop kernels with a compiled core and a pure-python fallback.

The compiled Cython extension (``neusample.kernels._core``) is preferred
when importable; otherwise the numpy reference implementation is used.
Set NEUSAMPLE_KERNELS=py or =c to force a backend (``c`` raises if the
extension is missing).  ``get_backend`` returns either module explicitly,
which the kernel benchmark uses to time both.
"""

from __future__ import annotations

import os

from . import reference


def _load(choice):
    if choice == "py":
        return reference
    try:
        from . import _core
    except ImportError:
        if choice == "c":
            raise ImportError(
                "NEUSAMPLE_KERNELS=c requested but the compiled extension is "
                "not available; build it with `pip install -e .`"
            ) from None
        return reference
    return _core


_active = _load(os.environ.get("NEUSAMPLE_KERNELS", "auto"))


def backend_name():
    """Name of the active backend: 'compiled' or 'python'."""
    return "compiled" if _active.BACKEND == "compiled" else "python"


def get_backend(name):
    """Explicit backend module by name ('py'/'python' or 'c'/'compiled')."""
    return _load({"python": "py", "compiled": "c"}.get(name, name))


composite_forward = _active.composite_forward
composite_backward = _active.composite_backward
encode_forward = _active.encode_forward
encode_backward = _active.encode_backward
sample_pdf = _active.sample_pdf
DELTA_FLOOR = reference.DELTA_FLOOR
