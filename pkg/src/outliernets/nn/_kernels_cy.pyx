# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels (native backend).

Same call signatures and semantics as the pure-numpy backend: NCHW float32
or float64 arrays, cross-correlation convs, dtype preserved. The inner loops
are written so the innermost index walks contiguous memory wherever
possible, which lets the C compiler vectorize them; bias addition and
reductions such as the bias gradient stay in numpy.

Replicator (nearest-neighbor upsample) ops are re-exported from the numpy
backend: they are pure memory movement, and numpy's repeat/sum already runs
them at memory bandwidth.

The two backends are numerically equivalent but not bit-identical: matmul
and loop accumulation visit elements in different orders, so float rounding
differs at the last ulp. Reproducibility guarantees therefore hold per
backend.
"""

import numpy as np

from ._kernels_py import replicator_backward, replicator_forward

__all__ = [
    "BACKEND_NAME",
    "conv2d_forward", "conv2d_backward",
    "depthwise_forward", "depthwise_backward",
    "pointwise_forward", "pointwise_backward",
    "replicator_forward", "replicator_backward",
]

BACKEND_NAME = "native"

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo_bound(Py_ssize_t pad, Py_ssize_t k, Py_ssize_t stride) nogil:
    # Smallest out index whose tap k lands inside the unpadded input.
    cdef Py_ssize_t shift = pad - k
    if shift <= 0:
        return 0
    return (shift + stride - 1) // stride


cdef inline Py_ssize_t _hi_bound(Py_ssize_t size, Py_ssize_t pad, Py_ssize_t k,
                                 Py_ssize_t stride, Py_ssize_t out_size) nogil:
    # One past the largest valid out index for tap k.
    cdef Py_ssize_t top = size - 1 + pad - k
    if top < 0:
        return 0
    top = top // stride + 1
    if top > out_size:
        return out_size
    return top


def _conv2d_fwd_add(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                    real[:, :, :, ::1] y, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = x.shape[0], ic = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = y.shape[2], ow = y.shape[3]
    cdef Py_ssize_t b, o, c, i, j, r, q, ih, iw0, r0, r1, q0, q1
    cdef real wv
    with nogil:
        for b in range(nb):
            for o in range(oc):
                for c in range(ic):
                    for i in range(kh):
                        r0 = _lo_bound(pad, i, stride)
                        r1 = _hi_bound(h, pad, i, stride, oh)
                        for j in range(kw):
                            wv = w[o, c, i, j]
                            q0 = _lo_bound(pad, j, stride)
                            q1 = _hi_bound(wd, pad, j, stride, ow)
                            for r in range(r0, r1):
                                ih = r * stride + i - pad
                                iw0 = j - pad
                                for q in range(q0, q1):
                                    y[b, o, r, q] += wv * x[b, c, ih, q * stride + iw0]


def _conv2d_bwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                real[:, :, :, ::1] gy, real[:, :, :, ::1] gx,
                real[:, :, :, ::1] gw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = x.shape[0], ic = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t b, o, c, i, j, r, q, ih, iw0, r0, r1, q0, q1
    cdef real wv, acc, g
    with nogil:
        for b in range(nb):
            for o in range(oc):
                for c in range(ic):
                    for i in range(kh):
                        r0 = _lo_bound(pad, i, stride)
                        r1 = _hi_bound(h, pad, i, stride, oh)
                        for j in range(kw):
                            wv = w[o, c, i, j]
                            acc = 0
                            q0 = _lo_bound(pad, j, stride)
                            q1 = _hi_bound(wd, pad, j, stride, ow)
                            iw0 = j - pad
                            for r in range(r0, r1):
                                ih = r * stride + i - pad
                                for q in range(q0, q1):
                                    g = gy[b, o, r, q]
                                    acc += g * x[b, c, ih, q * stride + iw0]
                                    gx[b, c, ih, q * stride + iw0] += wv * g
                            gw[o, c, i, j] += acc


def _depthwise_fwd_add(real[:, :, :, ::1] x, real[:, :, ::1] w,
                       real[:, :, :, ::1] y, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = y.shape[2], ow = y.shape[3]
    cdef Py_ssize_t b, c, i, j, r, q, ih, iw0, r0, r1, q0, q1
    cdef real wv
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for i in range(kh):
                    r0 = _lo_bound(pad, i, stride)
                    r1 = _hi_bound(h, pad, i, stride, oh)
                    for j in range(kw):
                        wv = w[c, i, j]
                        q0 = _lo_bound(pad, j, stride)
                        q1 = _hi_bound(wd, pad, j, stride, ow)
                        iw0 = j - pad
                        for r in range(r0, r1):
                            ih = r * stride + i - pad
                            for q in range(q0, q1):
                                y[b, c, r, q] += wv * x[b, c, ih, q * stride + iw0]


def _depthwise_bwd(real[:, :, :, ::1] x, real[:, :, ::1] w,
                   real[:, :, :, ::1] gy, real[:, :, :, ::1] gx,
                   real[:, :, ::1] gw, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t b, c, i, j, r, q, ih, iw0, r0, r1, q0, q1
    cdef real wv, acc, g
    with nogil:
        for b in range(nb):
            for c in range(nc):
                for i in range(kh):
                    r0 = _lo_bound(pad, i, stride)
                    r1 = _hi_bound(h, pad, i, stride, oh)
                    for j in range(kw):
                        wv = w[c, i, j]
                        acc = 0
                        q0 = _lo_bound(pad, j, stride)
                        q1 = _hi_bound(wd, pad, j, stride, ow)
                        iw0 = j - pad
                        for r in range(r0, r1):
                            ih = r * stride + i - pad
                            for q in range(q0, q1):
                                g = gy[b, c, r, q]
                                acc += g * x[b, c, ih, q * stride + iw0]
                                gx[b, c, ih, q * stride + iw0] += wv * g
                        gw[c, i, j] += acc


def _pointwise_fwd_add(real[:, :, ::1] x, real[:, ::1] w, real[:, :, ::1] y):
    # x (B, C, L), w (O, C), y (B, O, L) pre-filled with bias.
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], ln = x.shape[2]
    cdef Py_ssize_t oc = w.shape[0]
    cdef Py_ssize_t b, o, c, l
    cdef real wv
    with nogil:
        for b in range(nb):
            for o in range(oc):
                for c in range(nc):
                    wv = w[o, c]
                    for l in range(ln):
                        y[b, o, l] += wv * x[b, c, l]


def _pointwise_bwd(real[:, :, ::1] x, real[:, ::1] w, real[:, :, ::1] gy,
                   real[:, :, ::1] gx, real[:, ::1] gw):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], ln = x.shape[2]
    cdef Py_ssize_t oc = w.shape[0]
    cdef Py_ssize_t b, o, c, l
    cdef real wv, acc, g
    with nogil:
        for b in range(nb):
            for o in range(oc):
                for c in range(nc):
                    wv = w[o, c]
                    acc = 0
                    for l in range(ln):
                        g = gy[b, o, l]
                        acc += g * x[b, c, l]
                        gx[b, c, l] += wv * g
                    gw[o, c] += acc


def conv2d_forward(x, w, b, stride, pad):
    """Standard conv: x (B,C,H,W), w (O,C,kh,kw), b (O,) -> (B,O,out_h,out_w)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    nb, _, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    y = np.empty((nb, oc, oh, ow), dtype=x.dtype)
    y[:] = np.asarray(b, dtype=x.dtype).reshape(1, oc, 1, 1)
    _conv2d_fwd_add(x, w, y, stride, pad)
    return y


def conv2d_backward(x, w, b, stride, pad, gy):
    """Gradients of conv2d_forward: returns (gx, gw, gb)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    gy = np.ascontiguousarray(gy)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = gy.sum(axis=(0, 2, 3))
    _conv2d_bwd(x, w, gy, gx, gw, stride, pad)
    return gx, gw, gb


def depthwise_forward(x, w, b, stride, pad):
    """Depthwise conv: x (B,C,H,W), w (C,kh,kw), b (C,) -> (B,C,out_h,out_w)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    nb, nc, h, wd = x.shape
    kh, kw = w.shape[1], w.shape[2]
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    y = np.empty((nb, nc, oh, ow), dtype=x.dtype)
    y[:] = np.asarray(b, dtype=x.dtype).reshape(1, nc, 1, 1)
    _depthwise_fwd_add(x, w, y, stride, pad)
    return y


def depthwise_backward(x, w, b, stride, pad, gy):
    """Gradients of depthwise_forward: returns (gx, gw, gb)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    gy = np.ascontiguousarray(gy)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = gy.sum(axis=(0, 2, 3))
    _depthwise_bwd(x, w, gy, gx, gw, stride, pad)
    return gx, gw, gb


def pointwise_forward(x, w, b):
    """1x1 conv: x (B,C,H,W), w (O,C), b (O,) -> (B,O,H,W)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    nb, nc, h, wd = x.shape
    oc = w.shape[0]
    y = np.empty((nb, oc, h * wd), dtype=x.dtype)
    y[:] = np.asarray(b, dtype=x.dtype).reshape(1, oc, 1)
    _pointwise_fwd_add(x.reshape(nb, nc, h * wd), w, y)
    return y.reshape(nb, oc, h, wd)


def pointwise_backward(x, w, b, gy):
    """Gradients of pointwise_forward: returns (gx, gw, gb)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    gy = np.ascontiguousarray(gy)
    nb, nc, h, wd = x.shape
    oc = w.shape[0]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = gy.sum(axis=(0, 2, 3))
    _pointwise_bwd(
        x.reshape(nb, nc, h * wd), w, gy.reshape(nb, oc, h * wd),
        gx.reshape(nb, nc, h * wd), gw,
    )
    return gx, gw, gb
