"""Dense layer operations with hand-written forward and backward passes.

Layout conventions: feature maps are (C, H, W), kernels are
(C_out, C_in, kh, kw), label maps are (H, W) integer grids, all row-major.
Every function is pure; for a fixed dtype and backend the results are
bitwise reproducible.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import LabelRangeError, ShapeError


@dataclass(frozen=True)
class ConvSpec:
    """Stride and symmetric zero-padding of a convolution."""
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ShapeError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be non-negative, got {self.padding}")

    def out_size(self, size, k):
        out = (size + 2 * self.padding - k) // self.stride + 1
        if out < 1:
            raise ShapeError(
                f"conv output extent {out} < 1 for input {size}, kernel {k}, "
                f"stride {self.stride}, padding {self.padding}"
            )
        return out


def _check_conv_shapes(x, kernel, bias, spec):
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be 3-D (C,H,W), got rank {x.ndim}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be 4-D, got rank {kernel.ndim}")
    c_out, c_in, kh, kw = kernel.shape
    if c_in != x.shape[0]:
        raise ShapeError(
            f"channel axis mismatch: input has {x.shape[0]} channels, "
            f"kernel expects {c_in}"
        )
    if bias.shape != (c_out,):
        raise ShapeError(
            f"bias axis mismatch: expected ({c_out},), got {bias.shape}"
        )
    oh = spec.out_size(x.shape[1], kh)
    ow = spec.out_size(x.shape[2], kw)
    return c_out, c_in, kh, kw, oh, ow


def conv2d(x, kernel, bias, spec=ConvSpec()):
    """Cross-correlation with zero padding. Returns (C_out, OH, OW)."""
    c_out, c_in, kh, kw, oh, ow = _check_conv_shapes(x, kernel, bias, spec)
    cols = kernels.im2col(x, kh, kw, spec.stride, spec.padding)
    out = kernel.reshape(c_out, c_in * kh * kw) @ cols
    out += bias[:, None]
    return out.reshape(c_out, oh, ow)


def conv2d_grads(x, kernel, bias, spec, upstream):
    """Exact analytic gradients of conv2d.

    Returns (grad_input, grad_kernel, grad_bias); grad_input has x's shape.
    """
    c_out, c_in, kh, kw, oh, ow = _check_conv_shapes(x, kernel, bias, spec)
    if upstream.shape != (c_out, oh, ow):
        raise ShapeError(
            f"upstream axis mismatch: expected {(c_out, oh, ow)}, got {upstream.shape}"
        )
    cols = kernels.im2col(x, kh, kw, spec.stride, spec.padding)
    up = upstream.reshape(c_out, oh * ow)
    grad_kernel = (up @ cols.T).reshape(kernel.shape)
    grad_bias = up.sum(axis=1)
    grad_cols = kernel.reshape(c_out, c_in * kh * kw).T @ up
    grad_input = kernels.col2im(
        grad_cols, c_in, x.shape[1], x.shape[2], kh, kw, spec.stride, spec.padding
    )
    return grad_input, grad_kernel, grad_bias


def relu(x):
    return np.maximum(x, 0)


def relu_grad(x, upstream):
    """Subgradient 0 at exactly 0: upstream passes only where x > 0."""
    if x.shape != upstream.shape:
        raise ShapeError(
            f"relu_grad shapes differ: {x.shape} vs {upstream.shape}"
        )
    return np.where(x > 0, upstream, 0).astype(upstream.dtype)


def _upsample_coords(n):
    # align-corners=false: output i samples source i/2 - 0.25, clamped.
    src = np.arange(2 * n) / 2.0 - 0.25
    src = np.clip(src, 0.0, n - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    w1 = src - i0
    return i0, i1, w1


def upsample2x(x):
    """Bilinear 2x upsampling, align-corners=false.

    Output pixel i samples source coordinate (i + 0.5)/2 - 0.5 clamped to
    the valid range, with linear weights along each axis independently.
    """
    if x.ndim != 3:
        raise ShapeError(f"upsample2x input must be 3-D, got rank {x.ndim}")
    c, h, w = x.shape
    r0, r1, wr = _upsample_coords(h)
    c0, c1, wc = _upsample_coords(w)
    wr = wr[None, :, None].astype(x.dtype)
    wc = wc[None, None, :].astype(x.dtype)
    rows = x[:, r0, :] * (1 - wr) + x[:, r1, :] * wr
    return rows[:, :, c0] * (1 - wc) + rows[:, :, c1] * wc


def upsample2x_grad(x, upstream):
    """Transpose of upsample2x: scatter-add the interpolation weights."""
    c, h, w = x.shape
    if upstream.shape != (c, 2 * h, 2 * w):
        raise ShapeError(
            f"upstream axis mismatch: expected {(c, 2 * h, 2 * w)}, got {upstream.shape}"
        )
    r0, r1, wr = _upsample_coords(h)
    c0, c1, wc = _upsample_coords(w)
    wc = wc[None, None, :].astype(upstream.dtype)
    cols = np.zeros((c, 2 * h, w), dtype=upstream.dtype)
    np.add.at(cols, (slice(None), slice(None), c0), upstream * (1 - wc))
    np.add.at(cols, (slice(None), slice(None), c1), upstream * wc)
    wr = wr[None, :, None].astype(upstream.dtype)
    grad = np.zeros((c, h, w), dtype=upstream.dtype)
    np.add.at(grad, (slice(None), r0, slice(None)), cols * (1 - wr))
    np.add.at(grad, (slice(None), r1, slice(None)), cols * wr)
    return grad


def softmax_cross_entropy(logits, target):
    """Mean per-pixel cross-entropy and its gradient w.r.t. the logits.

    Loss is averaged over all H*W pixels; stabilized by max subtraction.
    """
    if logits.ndim != 3:
        raise ShapeError(f"logits must be 3-D (K,H,W), got rank {logits.ndim}")
    k, h, w = logits.shape
    if target.shape != (h, w):
        raise ShapeError(
            f"target axis mismatch: expected {(h, w)}, got {target.shape}"
        )
    bad = (target < 0) | (target >= k)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise LabelRangeError(
            f"label {target[y, x]} at pixel ({y},{x}) outside [0,{k})"
        )
    shifted = logits - logits.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=0)
    log_p = shifted - np.log(denom)[None]
    rows, cols = np.indices((h, w))
    n = h * w
    loss = -log_p[target, rows, cols].sum() / n
    grad = exp / denom[None]
    grad[target, rows, cols] -= 1
    grad /= n
    return float(loss), grad.astype(logits.dtype)
