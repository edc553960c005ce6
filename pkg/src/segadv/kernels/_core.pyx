# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: im2col/col2im gather-scatter and the exact
Euclidean distance transform (lower-envelope algorithm, O(N))."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double

DEF EDT_INF = 1e18


def im2col(floating[:, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef int c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef int oh = (h + 2 * pad - kh) // stride + 1
    cdef int ow = (w + 2 * pad - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef int ci, i, j, oy, ox, iy, ix, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(oh):
                    iy = oy * stride + i - pad
                    if iy < 0 or iy >= h:
                        continue
                    for ox in range(ow):
                        ix = ox * stride + j - pad
                        if 0 <= ix < w:
                            out[row, oy * ow + ox] = x[ci, iy, ix]
    return out_arr


def col2im(floating[:, ::1] cols, int c, int h, int w,
           int kh, int kw, int stride, int pad):
    cdef int oh = (h + 2 * pad - kh) // stride + 1
    cdef int ow = (w + 2 * pad - kw) // stride + 1
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.zeros((c, h, w), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef int ci, i, j, oy, ox, iy, ix, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(oh):
                    iy = oy * stride + i - pad
                    if iy < 0 or iy >= h:
                        continue
                    for ox in range(ow):
                        ix = ox * stride + j - pad
                        if 0 <= ix < w:
                            out[ci, iy, ix] += cols[row, oy * ow + ox]
    return out_arr


cdef void _dt1d(double[::1] f, double[::1] d, int n,
                int[::1] v, double[::1] z) noexcept:
    # Lower envelope of parabolas rooted at (q, f[q]).
    cdef int k = 0, q
    cdef double s
    v[0] = 0
    z[0] = -EDT_INF
    z[1] = EDT_INF
    for q in range(1, n):
        while True:
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = EDT_INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def edt_sq(cnp.uint8_t[:, ::1] mask):
    """Exact squared Euclidean distance to the nearest nonzero pixel."""
    cdef int h = mask.shape[0], w = mask.shape[1]
    cdef int n = h if h > w else w
    work_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    f_arr = np.empty(n, dtype=np.float64)
    d_arr = np.empty(n, dtype=np.float64)
    v_arr = np.empty(n, dtype=np.int32)
    z_arr = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] f = f_arr, d = d_arr, z = z_arr
    cdef int[::1] v = v_arr
    cdef int y, x
    # Columns first.
    for x in range(w):
        for y in range(h):
            f[y] = 0.0 if mask[y, x] else EDT_INF
        _dt1d(f, d, h, v, z)
        for y in range(h):
            work[y, x] = d[y]
    # Then rows.
    for y in range(h):
        for x in range(w):
            f[x] = work[y, x]
        _dt1d(f, d, w, v, z)
        for x in range(w):
            work[y, x] = d[x]
    out = np.empty((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    for y in range(h):
        for x in range(w):
            o[y, x] = <cnp.int64_t> (work[y, x] + 0.5) if work[y, x] < EDT_INF / 2 else (<cnp.int64_t> 1) << 30
    return out
