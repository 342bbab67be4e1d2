"""Pure-numpy convolution kernels (fallback backend).

All functions operate on NCHW float32 or float64 arrays and preserve the
input dtype. Convolutions are cross-correlations (no kernel flip). The
standard conv uses im2col + matmul; the depthwise conv uses 3x3 = 9
shift-and-add passes over strided views, which avoids materializing columns
for the channel-diagonal case.

Backward-pass shape bookkeeping for a forward conv with stride ``s``,
padding ``p``, kernel ``k`` on input size ``H``:

    out     = (H + 2p - k) // s + 1
    extra   = (H + 2p - k) % s          # input rows the forward never read
    grad_in = gradient w.r.t. output, zero-dilated by s, padded by
              (k - 1 - p) on the leading edge and (k - 1 - p + extra) on the
              trailing edge, cross-correlated at stride 1 with the
              spatially-flipped, channel-transposed kernel.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, Hp, Wp) padded input -> (B, C*kh*kw, out_h*out_w) columns."""
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (B, C, out_h, out_w, kh, kw)
    b, c, oh, ow = view.shape[:4]
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, w, b, stride: int, pad: int):
    """Standard conv: x (B,C,H,W), w (O,C,kh,kw), b (O,) -> (B,O,out_h,out_w)."""
    batch, _, h, wdt = x.shape
    oc, _, kh, kw = w.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (wdt + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride)
    y = np.matmul(w.reshape(oc, -1), cols)
    y += b.reshape(1, oc, 1)
    return y.reshape(batch, oc, out_h, out_w)


def conv2d_backward(x, w, b, stride: int, pad: int, gy):
    """Gradients of conv2d_forward: returns (gx, gw, gb)."""
    batch, ic, h, wdt = x.shape
    oc, _, kh, kw = w.shape
    out_h, out_w = gy.shape[2], gy.shape[3]

    gb = gy.sum(axis=(0, 2, 3))

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride)
    gy_flat = gy.reshape(batch, oc, out_h * out_w)
    gw = np.matmul(gy_flat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)

    # grad wrt input: dilate gy by the stride, pad, correlate with the
    # flipped kernel transposed to map out-channels back to in-channels.
    extra_h = (h + 2 * pad - kh) % stride
    extra_w = (wdt + 2 * pad - kw) % stride
    dil_h = (out_h - 1) * stride + 1
    dil_w = (out_w - 1) * stride + 1
    gyd = np.zeros((batch, oc, dil_h, dil_w), dtype=gy.dtype)
    gyd[:, :, ::stride, ::stride] = gy
    lead = kh - 1 - pad
    gyp = np.pad(
        gyd,
        ((0, 0), (0, 0), (lead, lead + extra_h), (lead, lead + extra_w)),
    )
    w_flip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (C, O, kh, kw)
    cols_g = _im2col(gyp, kh, kw, 1)
    gx = np.matmul(w_flip.reshape(ic, -1), cols_g).reshape(batch, ic, h, wdt)
    return gx, gw, gb


def depthwise_forward(x, w, b, stride: int, pad: int):
    """Depthwise conv: x (B,C,H,W), w (C,kh,kw), b (C,) -> (B,C,out_h,out_w)."""
    batch, c, h, wdt = x.shape
    kh, kw = w.shape[1], w.shape[2]
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (wdt + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    y = np.zeros((batch, c, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[
                :, :,
                i : i + stride * (out_h - 1) + 1 : stride,
                j : j + stride * (out_w - 1) + 1 : stride,
            ]
            y += w[:, i, j].reshape(1, c, 1, 1) * patch
    y += b.reshape(1, c, 1, 1)
    return y


def depthwise_backward(x, w, b, stride: int, pad: int, gy):
    """Gradients of depthwise_forward: returns (gx, gw, gb)."""
    batch, c, h, wdt = x.shape
    kh, kw = w.shape[1], w.shape[2]
    out_h, out_w = gy.shape[2], gy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x

    gb = gy.sum(axis=(0, 2, 3))
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + stride * (out_h - 1) + 1, stride)
            cols = slice(j, j + stride * (out_w - 1) + 1, stride)
            gw[:, i, j] = np.einsum("bchw,bchw->c", gy, xp[:, :, rows, cols])
            gxp[:, :, rows, cols] += w[:, i, j].reshape(1, c, 1, 1) * gy
    gx = gxp[:, :, pad : pad + h, pad : pad + wdt] if pad else gxp
    return np.ascontiguousarray(gx), gw, gb


def pointwise_forward(x, w, b):
    """1x1 conv: x (B,C,H,W), w (O,C), b (O,) -> (B,O,H,W)."""
    batch, c, h, wdt = x.shape
    oc = w.shape[0]
    y = np.matmul(w, x.reshape(batch, c, h * wdt))
    y += b.reshape(1, oc, 1)
    return y.reshape(batch, oc, h, wdt)


def pointwise_backward(x, w, b, gy):
    """Gradients of pointwise_forward: returns (gx, gw, gb)."""
    batch, c, h, wdt = x.shape
    oc = w.shape[0]
    x3 = x.reshape(batch, c, h * wdt)
    gy3 = gy.reshape(batch, oc, h * wdt)
    gb = gy.sum(axis=(0, 2, 3))
    gw = np.matmul(gy3, x3.transpose(0, 2, 1)).sum(axis=0)
    gx = np.matmul(w.T, gy3).reshape(batch, c, h, wdt)
    return np.ascontiguousarray(gx), gw, gb


def replicator_forward(x, factor: int):
    """Nearest-neighbor upsample: each pixel becomes a factor x factor block."""
    return np.ascontiguousarray(x.repeat(factor, axis=2).repeat(factor, axis=3))


def replicator_backward(gy, factor: int):
    """Adjoint of replicator_forward: sum each factor x factor block."""
    batch, c, h, wdt = gy.shape
    blocks = gy.reshape(batch, c, h // factor, factor, wdt // factor, factor)
    return np.ascontiguousarray(blocks.sum(axis=(3, 5)))
