"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is not built, and as the reference the
compiled core is benchmarked against. All functions assume validated,
C-contiguous inputs; shape checking lives in the callers.
"""

import numpy as np

# Sentinel for "no site in this line"; its square must stay below int64 range.
_INF = np.int64(1) << 30


def im2col(x, kh, kw, stride, pad):
    """Unfold (C,H,W) into a (C*kh*kw, OH*OW) patch matrix with zero padding."""
    c, h, w = x.shape
    if pad > 0:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    oh, ow = windows.shape[1], windows.shape[2]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add patch columns back to a (C,H,W) grid."""
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * oh:stride, j:j + stride * ow:stride] += patches[:, i, j]
    return np.ascontiguousarray(out[:, pad:pad + h, pad:pad + w])


def edt_sq(mask):
    """Exact squared Euclidean distance to the nearest true pixel of `mask`.

    Two passes: per-column 1D distances along rows, then a brute-force
    min-combine along each row. O(H*W*W) but fully vectorized; exact in
    integer arithmetic, so tie comparisons downstream are reliable.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    dv = np.full((h, w), _INF, dtype=np.int64)
    dv[mask] = 0
    for y in range(1, h):
        np.minimum(dv[y], dv[y - 1] + 1, out=dv[y])
    for y in range(h - 2, -1, -1):
        np.minimum(dv[y], dv[y + 1] + 1, out=dv[y])
    xs = np.arange(w, dtype=np.int64)
    offs = (xs[:, None] - xs[None, :]) ** 2            # (x, x')
    dv2 = dv * dv                                       # (y, x')
    return (dv2[:, None, :] + offs[None, :, :]).min(axis=2)
