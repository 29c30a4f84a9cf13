"""Slow, loop-based reference implementations.

These share no code with the vectorised operations they check, so an
agreement between the two is evidence for both.
"""

import math

import numpy as np


def matmul_loops(a, b):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = math.fsum(a[i, t] * b[t, j] for t in range(k))
    return out


def conv2d_loops(x, w, b=None, stride=1, padding=0):
    """Direct cross-correlation with zero padding, one output value at a time."""
    x = np.asarray(x, np.float64)
    w = np.asarray(w, np.float64)
    n, c, h, wd = x.shape
    f, c2, kh, kw = w.shape
    assert c == c2
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for i in range(n):
        for o in range(f):
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[i, ch, r * stride + u, s * stride + v] * w[o, ch, u, v]
                    out[i, o, r, s] = acc + (0.0 if b is None else float(b[o]))
    return out


def sample_blocks(image, matrix, block_size):
    """Measurements [n_B, h_B, w_B] from Phi @ vec(block) for each block in turn."""
    image = np.asarray(image, np.float64)
    matrix = np.asarray(matrix, np.float64)
    b = block_size
    hb, wb = image.shape[0] // b, image.shape[1] // b
    out = np.zeros((matrix.shape[0], hb, wb))
    for i in range(hb):
        for j in range(wb):
            block = image[i * b : (i + 1) * b, j * b : (j + 1) * b]
            out[:, i, j] = matrix @ block.reshape(-1)
    return out


def softmax_precise(row):
    """Softmax of one row using exact-sum accumulation."""
    row = [float(v) for v in row]
    top = max(row)
    e = [math.exp(v - top) for v in row]
    total = math.fsum(e)
    return np.array([v / total for v in e])


def nonlocal_loops(query, key, value):
    """Embedded-Gaussian attention over positions, one query at a time.

    ``query`` is [C, N] and ``key``/``value`` are [C, M]; returns the
    aggregated values [C, N] and the weight matrix [N, M].
    """
    query = np.asarray(query, np.float64)
    key = np.asarray(key, np.float64)
    value = np.asarray(value, np.float64)
    c, n = query.shape
    m = key.shape[1]
    weights = np.zeros((n, m))
    out = np.zeros((c, n))
    for i in range(n):
        logits = [math.fsum(query[:, i] * key[:, j]) for j in range(m)]
        weights[i] = softmax_precise(logits)
        for ch in range(c):
            out[ch, i] = math.fsum(weights[i, j] * value[ch, j] for j in range(m))
    return out, weights


def pointwise_conv(x, w):
    """1x1 convolution [C_in, ...] -> [C_out, ...] as an explicit channel sum."""
    x = np.asarray(x, np.float64)
    w = np.asarray(w, np.float64).reshape(w.shape[0], w.shape[1])
    out = np.zeros((w.shape[0],) + x.shape[1:])
    for o in range(w.shape[0]):
        for i in range(w.shape[1]):
            out[o] += w[o, i] * x[i]
    return out


def avg_pool_loops(x, k):
    """Mean over non-overlapping k x k cells of a [C, H, W] array."""
    x = np.asarray(x, np.float64)
    c, h, w = x.shape
    out = np.zeros((c, h // k, w // k))
    for ch in range(c):
        for i in range(h // k):
            for j in range(w // k):
                out[ch, i, j] = x[ch, i * k : (i + 1) * k, j * k : (j + 1) * k].mean()
    return out


def pixel_shuffle_loops(x, s):
    """Depth-to-space: channel c*s*s + i*s + j goes to pixel (h*s + i, w*s + j) of channel c."""
    x = np.asarray(x)
    n, cs, h, w = x.shape
    c = cs // (s * s)
    out = np.zeros((n, c, h * s, w * s), dtype=x.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(s):
                for j in range(s):
                    out[b, ch, i::s, j::s] = x[b, ch * s * s + i * s + j]
    return out
