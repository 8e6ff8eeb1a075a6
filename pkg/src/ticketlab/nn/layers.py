"""Layer primitives: forward/backward pairs as pure functions.

Conventions
-----------
- Image tensors are (batch, channels, height, width); flat tensors are
  (batch, features). All arrays are C-order.
- Functions are dtype-generic over float32/float64 and never change the
  dtype of their inputs. Training runs float32; the gradient checker
  runs the same code in float64.
- Every forward returns (output, ctx); the matching backward consumes
  ctx and the upstream gradient and returns (d_input, d_params...).
  Backward routing is deterministic: max-pool ties resolve to the first
  maximal element of the window.
"""

from __future__ import annotations

import numpy as np

from ticketlab.errors import ShapeError


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x @ w + b with x (B, in), w (in, out), b (out,)."""
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"dense expects (batch, {w.shape[0]}) input, got {x.shape}"
        )
    out = x @ w + b
    return out, (x, w)


def dense_backward(ctx, dout: np.ndarray):
    x, w = ctx
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Unfold same-padded kxk patches into (B, H*W, C*k*k)."""
    b, c, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, k, k, h, w),
        strides=(s0, s1, s2, s3, s2, s3),
        writeable=False,
    )
    # cols[n, y*W + x, c*k*k + i*k + j] == padded[n, c, y+i, x+j]
    return win.transpose(0, 4, 5, 1, 2, 3).reshape(b, h * w, c * k * k)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Stride-1 same-padding convolution.

    x: (B, Cin, H, W); w: (Cout, Cin, k, k) with k odd; b: (Cout,).
    Output spatial size equals input spatial size.
    """
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d expects (batch, {w.shape[1]}, H, W) input, got {x.shape}"
        )
    bsz, _, h, wd = x.shape
    cout, cin, k, _ = w.shape
    cols = _im2col(x, k)
    wmat = w.reshape(cout, cin * k * k)
    out = cols @ wmat.T
    out = out.transpose(0, 2, 1).reshape(bsz, cout, h, wd)
    out = out + b[None, :, None, None]
    return out, (cols, w, x.shape)


def conv2d_backward(ctx, dout: np.ndarray):
    cols, w, x_shape = ctx
    bsz, cin, h, wd = x_shape
    cout, _, k, _ = w.shape
    pad = k // 2
    wmat = w.reshape(cout, cin * k * k)

    dmat = dout.reshape(bsz, cout, h * wd).transpose(0, 2, 1)
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dmat, cols, axes=([0, 1], [0, 1])).reshape(w.shape)

    dcols = dmat @ wmat
    dc = dcols.reshape(bsz, h, wd, cin, k, k)
    dxp = np.zeros((bsz, cin, h + 2 * pad, wd + 2 * pad), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + wd] += dc[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    dx = dxp[:, :, pad : pad + h, pad : pad + wd].copy()
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x


def relu_backward(ctx, dout: np.ndarray):
    # subgradient 0 at the kink
    return dout * (ctx > 0)


def maxpool2x2_forward(x: np.ndarray):
    """2x2 max pooling with stride 2; height and width must be even."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2x2 needs even (B,C,H,W), got {x.shape}")
    b, c, h, w = x.shape
    win = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    idx = win.argmax(axis=-1)  # first max wins ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2x2_backward(ctx, dout: np.ndarray):
    idx, x_shape = ctx
    b, c, h, w = x_shape
    dwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dx = (
        dwin.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )
    return dx


def flatten_forward(x: np.ndarray):
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(ctx, dout: np.ndarray):
    return dout.reshape(ctx)
