"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and layouts: activations are channels-last ``(B, T, C)``,
conv weights are ``(K, C_in, F)``, convolution uses "same" zero padding
with ``(K - 1) // 2`` samples on the left.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x, k):
    left = (k - 1) // 2
    return np.pad(x, ((0, 0), (left, k - 1 - left), (0, 0)))


def _patches(x, k):
    # (B, T, K, C) view of the padded input
    return sliding_window_view(_pad(x, k), k, axis=1).transpose(0, 1, 3, 2)


def conv1d_forward(x, w, bias):
    k, c, f = w.shape
    cols = _patches(x, k).reshape(x.shape[0] * x.shape[1], k * c)
    out = cols @ w.reshape(k * c, f)
    out += bias
    return out.reshape(x.shape[0], x.shape[1], f)


def conv1d_backward(x, w, dout, need_dx=True):
    k, c, f = w.shape
    b, t, _ = x.shape
    cols = _patches(x, k).reshape(b * t, k * c)
    g = dout.reshape(b * t, f)
    dw = (cols.T @ g).reshape(k, c, f)
    db = g.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (g @ w.reshape(k * c, f).T).reshape(b, t, k, c)
    left = (k - 1) // 2
    dxp = np.zeros((b, t + k - 1, c), dtype=x.dtype)
    for j in range(k):
        dxp[:, j:j + t, :] += dcols[:, :, j, :]
    return dxp[:, left:left + t, :], dw, db


def maxpool2_forward(x):
    t = x.shape[1] // 2
    return np.maximum(x[:, 0:2 * t:2, :], x[:, 1:2 * t:2, :])


def maxpool2_backward(x, dout):
    t = x.shape[1] // 2
    first = x[:, 0:2 * t:2, :] >= x[:, 1:2 * t:2, :]
    dx = np.zeros_like(x)
    dx[:, 0:2 * t:2, :] = np.where(first, dout, 0)
    dx[:, 1:2 * t:2, :] = np.where(first, 0, dout)
    return dx
