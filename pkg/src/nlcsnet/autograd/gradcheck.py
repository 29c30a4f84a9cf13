"""Central finite-difference gradient checking in double precision."""

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric, floor=1e-2):
    """Largest elementwise ``|a - n| / max(|a|, |n|, s)``.

    ``s`` is ``floor`` times the largest numeric magnitude, so components
    that are negligible next to the rest of the gradient are judged on an
    absolute scale instead of blowing up the ratio.
    """
    analytic = np.asarray(analytic, np.float64)
    numeric = np.asarray(numeric, np.float64)
    scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-12) * floor
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def numeric_gradient(fn, arrays, index, h=1e-3, positions=None):
    """Central differences of scalar ``fn(*tensors)`` w.r.t. ``arrays[index]``.

    Only ``positions`` (flat indices) are probed when given.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    flat = target.reshape(-1)
    if positions is None:
        positions = np.arange(flat.size)
    out = np.zeros(len(positions))
    for k, pos in enumerate(positions):
        orig = flat[pos]
        flat[pos] = orig + h
        plus = _scalar(fn(*[Tensor(a) for a in base]))
        flat[pos] = orig - h
        minus = _scalar(fn(*[Tensor(a) for a in base]))
        flat[pos] = orig
        out[k] = (plus - minus) / (2.0 * h)
    return out


def analytic_gradients(fn, arrays):
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def check_gradients(fn, arrays, h=1e-3):
    """Return the max relative error per input of ``fn`` (a scalar-valued op)."""
    grads = analytic_gradients(fn, arrays)
    errors = []
    for i, g in enumerate(grads):
        numeric = numeric_gradient(fn, arrays, i, h=h)
        errors.append(relative_error(g.reshape(-1), numeric))
    return errors


def _scalar(t):
    return float(np.asarray(t.data, dtype=np.float64).reshape(-1)[0])
