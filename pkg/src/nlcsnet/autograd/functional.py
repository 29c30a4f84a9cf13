"""Differentiable operations on :class:`Tensor`.

All image-like tensors are NCHW. Batched matrix ops treat the last two axes
as the matrix and broadcast over the leading ones.
"""

import numpy as np

from .tensor import DimensionError, Tensor, as_tensor, make_result


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return make_result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make_result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(ad * bd, (a, b), backward)


def scalar_mul(a, c):
    c = float(c)
    return make_result(a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,))


def relu(x):
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def exp(x):
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def sum(x, axis=None, keepdims=False):
    shape = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(x.dtype),)

    return make_result(out, (x,), backward)


def mean(x, axis=None, keepdims=False):
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return scalar_mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def frobenius_sq(a):
    """Squared Frobenius norm, summed over every element."""
    ad = a.data
    return make_result(
        np.asarray(np.sum(ad * ad), dtype=a.dtype), (a,), lambda g: (2.0 * g * ad,)
    )


# ---------------------------------------------------------------------------
# rearrangements
# ---------------------------------------------------------------------------

def reshape(x, shape):
    shape = tuple(shape)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {old} into {shape}")
    return make_result(out, (x,), lambda g: (g.reshape(old),))


def transpose2d(x):
    """Swap the last two axes (plain transpose for a 2-D tensor)."""
    if x.ndim < 2:
        raise DimensionError(f"transpose2d needs at least 2 dims, got {x.shape}")
    out = np.swapaxes(x.data, -1, -2)
    return make_result(out, (x,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(tensors, axis=1):
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def concat_channels(tensors):
    return concat(tensors, axis=1)


def pixel_shuffle(x, s):
    """Depth-to-space: [N, C*s*s, H, W] -> [N, C, H*s, W*s]."""
    n, c, h, w = x.shape
    if c % (s * s):
        raise DimensionError(f"pixel_shuffle: {c} channels not divisible by {s}^2")
    co = c // (s * s)
    out = x.data.reshape(n, co, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * s, w * s)

    def backward(g):
        g = g.reshape(n, co, h, s, w, s).transpose(0, 1, 3, 5, 2, 4).reshape(n, c, h, w)
        return (g,)

    return make_result(out, (x,), backward)


def space_to_depth(x, s):
    """Inverse of :func:`pixel_shuffle`: [N, C, H*s, W*s] -> [N, C*s*s, H, W]."""
    n, c, hs, ws = x.shape
    if hs % s or ws % s:
        raise DimensionError(f"space_to_depth: spatial dims {(hs, ws)} not divisible by {s}")
    h, w = hs // s, ws // s
    out = x.data.reshape(n, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * s * s, h, w)

    def backward(g):
        g = g.reshape(n, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, hs, ws)
        return (g,)

    return make_result(out, (x,), backward)


def _pad_indices(size, extra):
    return np.pad(np.arange(size), (0, extra), mode="reflect") if extra else np.arange(size)


def reflect_pad(x, pad_h, pad_w):
    """Reflection-pad the bottom and right edges of an NCHW tensor."""
    if pad_h == 0 and pad_w == 0:
        return x
    n, c, h, w = x.shape
    if (pad_h and h < 2) or (pad_w and w < 2):
        ri = np.pad(np.arange(h), (0, pad_h), mode="symmetric")
        ci = np.pad(np.arange(w), (0, pad_w), mode="symmetric")
    else:
        ri, ci = _pad_indices(h, pad_h), _pad_indices(w, pad_w)
    out = x.data[:, :, ri[:, None], ci[None, :]]

    def backward(g):
        rows = np.zeros((h, h + pad_h), dtype=g.dtype)
        rows[ri, np.arange(len(ri))] = 1
        cols = np.zeros((w + pad_w, w), dtype=g.dtype)
        cols[np.arange(len(ci)), ci] = 1
        # duplicate indices are summed by the 0/1 selection matrices
        return (rows @ g @ cols,)

    return make_result(out, (x,), backward)


def crop(x, h, w):
    """Keep the top-left ``h`` x ``w`` window of an NCHW tensor."""
    full = x.shape
    if h > full[2] or w > full[3]:
        raise DimensionError(f"crop {(h, w)} larger than input {full[2:]}")
    if (h, w) == full[2:]:
        return x

    def backward(g):
        gx = np.zeros(full, dtype=g.dtype)
        gx[:, :, :h, :w] = g
        return (gx,)

    return make_result(x.data[:, :, :h, :w], (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_result(ad @ bd, (a, b), backward)


def softmax_rows(logits):
    """Softmax along the last axis, stabilised by subtracting the row max."""
    x = logits.data
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("softmax_rows received non-finite logits")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (logits,), backward)


# ---------------------------------------------------------------------------
# convolution and pooling
# ---------------------------------------------------------------------------

def _conv_out(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation via patch gather + matrix product.

    ``x`` is [N, C, H, W], ``weight`` is [F, C, kH, kW], ``bias`` is [F].
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if c != cw:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {cw}")
    if stride < 1:
        raise ValueError("conv2d stride must be >= 1")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"conv2d kernel {(kh, kw)} larger than padded input {(h, w)}")
    ho, wo = _conv_out(h, kh, stride, padding), _conv_out(w, kw, stride, padding)
    xd, wd = x.data, weight.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    if kh == kw == 1 and stride == 1 and padding == 0:
        w2 = wd.reshape(f, c)
        xm = xd.reshape(n, c, h * w)
        out = (w2 @ xm).reshape(n, f, h, w)
        if bias is not None:
            out = out + bias.data.reshape(1, f, 1, 1)

        def backward_1x1(g):
            gm = g.reshape(n, f, h * w)
            gx = (w2.T @ gm).reshape(n, c, h, w) if x.requires_grad else None
            gw = np.einsum("nfp,ncp->fc", gm, xm).reshape(f, c, 1, 1) if weight.requires_grad else None
            gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
            return gx, gw, gb

        return make_result(out, parents, backward_1x1)

    if padding:
        xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=xd.dtype)
        xp[:, :, padding : padding + h, padding : padding + w] = xd
    else:
        xp = xd
    tiled = stride == kh and stride == kw
    # patch matrix laid out as [N, kH, kW, C, H', W'] so products come out NCHW
    if tiled:
        cols = xp[:, :, : ho * kh, : wo * kw].reshape(n, c, ho, kh, wo, kw).transpose(0, 3, 5, 1, 2, 4)
        cols = np.ascontiguousarray(cols)
    else:
        cols = np.empty((n, kh, kw, c, ho, wo), dtype=xd.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols = cols.reshape(n, kh * kw * c, ho * wo)
    wmat = wd.transpose(0, 2, 3, 1).reshape(f, kh * kw * c)
    out = (wmat @ cols).reshape(n, f, ho, wo)
    if bias is not None:
        out += bias.data.reshape(1, f, 1, 1)

    def backward(g):
        gm = g.reshape(n, f, ho * wo)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = (gm @ cols.transpose(0, 2, 1)).sum(axis=0)
            gw = gw.reshape(f, kh, kw, c).transpose(0, 3, 1, 2)
        if bias is not None:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            dcols = (wmat.T @ gm).reshape(n, kh, kw, c, ho, wo)
            gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
            if tiled:
                blocks = dcols.transpose(0, 3, 4, 1, 5, 2).reshape(n, c, ho * kh, wo * kw)
                gxp[:, :, : ho * kh, : wo * kw] = blocks
            else:
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return gx, gw, gb

    return make_result(out, parents, backward)


def avg_pool2d(x, k):
    """Non-overlapping k x k mean pooling; spatial dims must divide by k."""
    n, c, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(f"avg_pool2d: spatial dims {(h, w)} not divisible by {k}")
    if k == 1:
        return x
    out = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))
    scale = x.dtype.type(1.0 / (k * k))

    def backward(g):
        gx = np.broadcast_to(g[:, :, :, None, :, None] * scale, (n, c, h // k, k, w // k, k))
        return (gx.reshape(n, c, h, w),)

    return make_result(out, (x,), backward)
