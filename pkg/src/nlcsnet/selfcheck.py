"""Built-in verification suite behind the ``selfcheck`` command.

Every check looks operations up on the ``functional`` module at call time,
so a patched (or broken) operation is what actually gets tested.
"""

from dataclasses import dataclass

import numpy as np

from . import oracles
from .autograd import functional as F
from .autograd.gradcheck import check_gradients
from .autograd.tensor import Tensor
from .measurement import embedded_gaussian_attention
from .sampling import SamplingOperator, sample_image

GRAD_TOL = 1e-3
FORWARD_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def line(self):
        status = "ok  " if self.passed else "FAIL"
        return f"{status} {self.name:<28} max_err={self.max_error:.3e}  tol={self.tolerance:.0e}"


def _grad(name, fn, arrays):
    try:
        err = max(check_gradients(fn, arrays))
    except Exception:  # a crashing op is a failed check, not a crashed suite
        err = float("inf")
    return CheckResult(f"grad:{name}", err, GRAD_TOL)


def gradient_checks(rng):
    r = lambda *s: rng.standard_normal(s)
    w3 = rng.standard_normal((3, 2, 3, 3))
    probe = Tensor(r(2, 3, 5, 5))
    p_soft, p_shuf, p_pad = Tensor(r(3, 5)), Tensor(r(1, 2, 6, 6)), Tensor(r(1, 1, 6, 7))
    return [
        _grad("conv2d", lambda x, w, b: F.sum(F.mul(F.conv2d(x, w, b, 1, 1), probe)), [r(2, 2, 5, 5), w3, r(3)]),
        _grad("conv2d_stride2", lambda x, w: F.frobenius_sq(F.conv2d(x, w, None, 2, 1)), [r(1, 2, 6, 6), w3]),
        _grad("matmul", lambda a, b: F.frobenius_sq(F.matmul(a, b)), [r(2, 3, 4), r(2, 4, 5)]),
        _grad("softmax_rows", lambda a: F.sum(F.mul(F.softmax_rows(a), p_soft)), [r(3, 5)]),
        _grad("pixel_shuffle", lambda a: F.sum(F.mul(F.pixel_shuffle(a, 2), p_shuf)), [r(1, 8, 3, 3)]),
        _grad("avg_pool2d", lambda a: F.frobenius_sq(F.avg_pool2d(a, 2)), [r(1, 2, 4, 6)]),
        _grad("reflect_pad", lambda a: F.sum(F.mul(F.reflect_pad(a, 2, 3), p_pad)), [r(1, 1, 4, 4)]),
        _grad("relu_mul_add", lambda a, b: F.sum(F.mul(F.relu(a), F.add(a, b))), [r(3, 4), r(1, 4)]),
        _grad("exp_mean", lambda a: F.mean(F.exp(a), axis=(0, 2)).sum(), [r(2, 3, 4)]),
        _grad("concat_crop", lambda a, b: F.frobenius_sq(F.crop(F.concat_channels([a, b]), 2, 3)),
              [r(1, 1, 4, 4), r(1, 2, 4, 4)]),
    ]


def forward_checks(rng):
    results = []

    x = rng.standard_normal((1, 2, 5, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    got = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    results.append(CheckResult("conv2d_vs_loops", _max_abs(got, oracles.conv2d_loops(x, w, b, 2, 1)), FORWARD_TOL))

    a, c = rng.standard_normal((4, 6)), rng.standard_normal((6, 3))
    results.append(CheckResult("matmul_vs_loops", _max_abs(F.matmul(Tensor(a), Tensor(c)).data,
                                                          oracles.matmul_loops(a, c)), FORWARD_TOL))

    op = SamplingOperator(8, 0.25, seed=int(rng.integers(1 << 30)))
    errs = []
    for _ in range(5):
        img = rng.random((16, 24)).astype(np.float32)
        got = sample_image(img, op).data[0]
        errs.append(_max_abs(got, oracles.sample_blocks(img, op.matrix, 8)))
    results.append(CheckResult("sampling_conv_vs_matmul", max(errs), FORWARD_TOL))

    logits = rng.standard_normal((3, 7)) * 5
    soft = F.softmax_rows(Tensor(logits)).data
    want = np.stack([oracles.softmax_precise(row) for row in logits])
    err = max(_max_abs(soft, want), float(np.abs(soft.sum(-1) - 1).max()))
    results.append(CheckResult("softmax_rows", err, 1e-12))

    t = rng.standard_normal((2, 12, 3, 2))
    shuffled = F.pixel_shuffle(Tensor(t), 2).data
    err = max(_max_abs(shuffled, oracles.pixel_shuffle_loops(t, 2)),
              _max_abs(F.space_to_depth(Tensor(shuffled), 2).data, t))
    results.append(CheckResult("pixel_shuffle_roundtrip", err, 1e-12))

    q, k, v = rng.standard_normal((3, 4, 9)), rng.standard_normal((3, 4, 9)), rng.standard_normal((3, 4, 9))
    agg, _, weights = embedded_gaussian_attention(Tensor(q[None, 0]), Tensor(k[None, 0]), Tensor(v[None, 0]))
    want_agg, want_w = oracles.nonlocal_loops(q[0], k[0], v[0])
    err = max(_max_abs(agg.data[0], want_agg), _max_abs(weights.data[0], want_w))
    results.append(CheckResult("nonlocal_vs_loops", err, FORWARD_TOL))
    return results


def _max_abs(a, b):
    return float(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64)).max())


def run_selfcheck(seed=0):
    """Run every check; returns the list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    return gradient_checks(rng) + forward_checks(rng)
