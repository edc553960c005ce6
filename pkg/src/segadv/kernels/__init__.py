"""Backend selection for the hot kernels.

Two interchangeable implementations exist:

- ``segadv.kernels._core`` — Cython extension (built by setup.py)
- ``segadv.kernels.numpy_backend`` — pure numpy fallback

The environment variable ``SEGADV_KERNELS`` picks one: ``auto`` (default,
prefer the compiled core), ``cython`` (fail if not built), or ``numpy``.
Results agree across backends up to floating-point summation order;
each backend is individually deterministic.

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

import numpy as np

from . import numpy_backend

_requested = os.environ.get("SEGADV_KERNELS", "auto")
if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(f"SEGADV_KERNELS must be auto|cython|numpy, got {_requested!r}")

if _requested in ("auto", "cython"):
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = numpy_backend
        BACKEND = "numpy"
else:
    _impl = numpy_backend
    BACKEND = "numpy"


def im2col(x, kh, kw, stride, pad):
    x = np.ascontiguousarray(x)
    return _impl.im2col(x, kh, kw, stride, pad)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    cols = np.ascontiguousarray(cols)
    return _impl.col2im(cols, c, h, w, kh, kw, stride, pad)


def edt_sq(mask):
    """Squared Euclidean distance to the nearest true pixel. Exact.

    `mask` must contain at least one true pixel.
    """
    mask = np.ascontiguousarray(mask)
    if not mask.any():
        raise ValueError("edt_sq: mask has no source pixels")
    if BACKEND == "cython":
        return _impl.edt_sq(mask.astype(np.uint8))
    return _impl.edt_sq(mask)
