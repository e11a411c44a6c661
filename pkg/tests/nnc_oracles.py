"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def adam_reference(grad_fn, w0, steps, lr=0.0005, b1=0.9, b2=0.999, eps=1e-7):
    """Plain-Python element-wise Adam; returns the trajectory including w0."""
    w = [float(v) for v in np.atleast_1d(w0)]
    m = [0.0] * len(w)
    v = [0.0] * len(w)
    traj = [list(w)]
    for t in range(1, steps + 1):
        g = [float(x) for x in np.atleast_1d(grad_fn(np.array(w)))]
        for i in range(len(w)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            w[i] = w[i] - lr * mhat / (math.sqrt(vhat) + eps)
        traj.append(list(w))
    return np.array(traj)


def conv1d_direct(x, w, b):
    """Same-padded stride-1 conv by explicit loops over (batch, time, tap)."""
    B, T, C = x.shape
    K, _, F = w.shape
    left = (K - 1) // 2
    y = np.zeros((B, T, F))
    for n in range(B):
        for t in range(T):
            for k in range(K):
                src = t + k - left
                if 0 <= src < T:
                    y[n, t] += x[n, src] @ w[k]
    return y + b


def maxpool2_direct(x):
    B, T, C = x.shape
    out = np.empty((B, T // 2, C))
    for t in range(T // 2):
        out[:, t] = np.maximum(x[:, 2 * t], x[:, 2 * t + 1])
    return out


def central_difference(f, x, idx, h=1e-4):
    orig = x[idx]
    x[idx] = orig + h
    fp = f()
    x[idx] = orig - h
    fm = f()
    x[idx] = orig
    return (fp - fm) / (2 * h)


def rel_error(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-7)
