"""Micro-benchmark of the hot kernels on both backends.

Times the compositing forward+backward pass, the sinusoidal encoding, and
the inverse-CDF sampler at training-typical sizes, on the pure-python
backend and (when built) the compiled one.  Exposed as
``neusample bench --compare-kernels`` and runnable directly:
``python -m neusample.benchmarks``.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def _composite_case(rng, b=1024, n=64):
    t = np.sort(rng.uniform(2, 6, (b, n)), axis=1)
    raw = rng.normal(0, 2, (b, n))
    noise = rng.normal(0, 1, (b, n))
    rgb = rng.uniform(0, 1, (b, n, 3))
    far = np.full(b, 6.0)
    bg = np.ones(3)
    gcolor = rng.normal(0, 1, (b, 3))

    def run(mod):
        out = mod.composite_forward(t, raw, noise, rgb, far, bg)
        _, w, tr, _, _, sig, dl, mask, dec = out
        mod.composite_backward(gcolor, t, rgb, far, bg, sig, dl, mask, dec, tr, w)

    return run


def _encode_case(rng, m=32768, k=3, freqs=10):
    x = rng.normal(0, 2, (m, k))
    f = np.pi * 2.0 ** np.arange(freqs, dtype=np.float64)
    g = rng.normal(0, 1, (m, k * (2 * freqs + 1)))

    def run(mod):
        mod.encode_forward(x, f, True)
        mod.encode_backward(x, f, True, g)

    return run


def _sample_pdf_case(rng, b=1024, m=63, n=128):
    edges = np.sort(rng.uniform(2, 6, (b, m + 1)), axis=1)
    w = rng.uniform(0, 1, (b, m)) + 1e-5
    u = rng.uniform(0, 1, (b, n))

    def run(mod):
        mod.sample_pdf(edges, w, u)

    return run


def compare_kernel_backends(repeats=5, seed=0):
    """Rows of {kernel, python_ms, compiled_ms, speedup}; compiled columns
    are None when the extension is not built."""
    rng = np.random.default_rng(seed)
    cases = {
        "composite_fwd_bwd": _composite_case(rng),
        "encode_fwd_bwd": _encode_case(rng),
        "sample_pdf": _sample_pdf_case(rng),
    }
    py = kernels.get_backend("py")
    try:
        cc = kernels.get_backend("c")
    except ImportError:
        cc = None
    rows = []
    for name, run in cases.items():
        py_ms = _time(lambda: run(py), repeats)
        if cc is None:
            rows.append({"kernel": name, "python_ms": py_ms,
                         "compiled_ms": None, "speedup": None})
        else:
            cc_ms = _time(lambda: run(cc), repeats)
            rows.append({"kernel": name, "python_ms": py_ms,
                         "compiled_ms": cc_ms,
                         "speedup": py_ms / cc_ms if cc_ms > 0 else None})
    return rows


def main():
    print(f"active backend: {kernels.backend_name()}")
    for row in compare_kernel_backends():
        compiled = ("n/a" if row["compiled_ms"] is None
                    else f"{row['compiled_ms']:.3f} ms")
        speedup = ("" if row["speedup"] is None
                   else f"  ({row['speedup']:.1f}x)")
        print(f"{row['kernel']:>20}: python {row['python_ms']:.3f} ms, "
              f"compiled {compiled}{speedup}")


if __name__ == "__main__":
    main()
