"""Straight-line reference implementations used as test oracles.

Deliberately naive: explicit loops, no shared code with the package.
"""

import math

import numpy as np


def dense_laplacian_matrix(h, w, coeffs):
    """(h*w, h*w) matrix of the zero-padded stencil, built entry by entry."""
    n = h * w
    A = np.zeros((n, n))
    for i in range(h):
        for j in range(w):
            for a in range(3):
                for b in range(3):
                    ii, jj = i + a - 1, j + b - 1
                    if 0 <= ii < h and 0 <= jj < w:
                        A[i * w + j, ii * w + jj] = coeffs[a][b]
    return A


def correlate2d(x, k):
    """Zero-padded 'same' correlation; taps summed row-major starting from 0.0."""
    h, w = x.shape
    n = len(k)
    r = n // 2
    xp = np.zeros((h + 2 * r, w + 2 * r))
    xp[r:r + h, r:r + w] = x
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for a in range(n):
                for b in range(n):
                    s += k[a][b] * xp[i + a, j + b]
            out[i, j] = s
    return out


def down(x):
    h, w = x.shape
    out = np.zeros(((h + 1) // 2, (w + 1) // 2))
    for i in range(0, h, 2):
        for j in range(0, w, 2):
            out[i // 2, j // 2] = x[i, j]
    return out


def up(x, shape):
    out = np.zeros(shape)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            out[2 * i, 2 * j] = x[i, j]
    return out


def network_forward(H, G, K, L, n_levels):
    """Single-channel pyramid recurrence written out by hand."""
    levels = [np.asarray(L, dtype=np.float64)]
    for _ in range(n_levels - 1):
        levels.append(down(correlate2d(levels[-1], H)))
    U = correlate2d(levels[-1], G)
    for i in range(n_levels - 2, -1, -1):
        U = correlate2d(up(U, levels[i].shape), K) + correlate2d(levels[i], G)
    return U


def half_mse(U, GT):
    U = np.asarray(U).reshape(-1, U.shape[-2], U.shape[-1])
    GT = np.asarray(GT).reshape(U.shape)
    total = 0.0
    for c in range(U.shape[0]):
        s = 0.0
        for i in range(U.shape[1]):
            for j in range(U.shape[2]):
                s += (U[c, i, j] - GT[c, i, j]) ** 2
        total += s / (2 * U.shape[1] * U.shape[2])
    return total / U.shape[0]


def histogram_counts(values, bins, lo, hi):
    counts = [0] * bins
    width = (hi - lo) / bins
    for v in np.ravel(values):
        b = int(math.floor((v - lo) / width))
        counts[min(max(b, 0), bins - 1)] += 1
    return counts


def adam_trace(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam applied to a sequence of gradients."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        p = p - lr * mh / (math.sqrt(vh) + eps)
    return p


def network_forward_split(H, G_levels, K, L, n_levels):
    """As :func:`network_forward` but with a separate G at every level."""
    levels = [np.asarray(L, dtype=np.float64)]
    for _ in range(n_levels - 1):
        levels.append(down(correlate2d(levels[-1], H)))
    U = correlate2d(levels[-1], G_levels[-1])
    for i in range(n_levels - 2, -1, -1):
        U = correlate2d(up(U, levels[i].shape), K) + correlate2d(levels[i], G_levels[i])
    return U
