"""Non-local refinement of block measurements and the initial reconstruction."""

import numpy as np

from .affinity import AffinityMatrix
from .autograd import functional as F
from .autograd.nn import Conv2d, Module, Parameter
from .autograd.tensor import DimensionError


def embedded_gaussian_attention(query, key, value):
    """Softmax(query^T key) applied to ``value``.

    ``query`` is [K, C, N], ``key`` and ``value`` are [K, C, M]. Returns the
    aggregated values [K, C, N] plus the logits and weights, both [K, N, M].
    """
    logits = F.matmul(F.transpose2d(query), key)
    weights = F.softmax_rows(logits)
    out = F.matmul(value, F.transpose2d(weights))
    return out, logits, weights


class MeasurementNonLocal(Module):
    """Interblock attention over the h_B x w_B grid of measurement vectors.

    The three embeddings are bias-free 1x1 convolutions with n_B channels in
    and out. The value embedding starts at zero, so an untrained block is the
    identity on its input.
    """

    def __init__(self, n_b, rng):
        self.n_b = n_b
        self.theta = Conv2d(n_b, n_b, 1, rng, bias=False)
        self.phi = Conv2d(n_b, n_b, 1, rng, bias=False)
        self.g = Conv2d(n_b, n_b, 1, rng, bias=False, zero=True)

    def forward(self, y):
        k, c, hb, wb = y.shape
        if c != self.n_b:
            raise DimensionError(f"measurements have {c} channels, block expects {self.n_b}")
        n = hb * wb
        q = F.reshape(self.theta(y), (k, c, n))
        key = F.reshape(self.phi(y), (k, c, n))
        val = F.reshape(self.g(y), (k, c, n))
        agg, logits, weights = embedded_gaussian_attention(q, key, val)
        y_tilde = F.add(y, F.reshape(agg, (k, c, hb, wb)))
        return y_tilde, AffinityMatrix(logits, weights, (hb, wb), 1)


class MeasurementStage(Module):
    """Optional measurement-domain non-local block followed by the learned lift.

    ``upsample`` is the [B^2, n_B, 1, 1] kernel of the lifting convolution;
    each grid cell's B^2 output vector is reshaped into a BxB block.
    """

    def __init__(self, n_b, block_size, rng, use_nonlocal=True, init_matrix=None):
        self.n_b = n_b
        self.block_size = block_size
        self.nonlocal_block = MeasurementNonLocal(n_b, rng) if use_nonlocal else None
        if init_matrix is None:
            lift = rng.uniform(-1, 1, (block_size**2, n_b)) / np.sqrt(n_b)
        else:
            lift = np.asarray(init_matrix, np.float64).T
        self.upsample = Parameter(lift.reshape(block_size**2, n_b, 1, 1).astype(np.float32))

    def forward(self, y):
        affinity = None
        if self.nonlocal_block is not None:
            y, affinity = self.nonlocal_block(y)
        return initial_reconstruct(y, self.upsample, self.block_size), affinity


def initial_reconstruct(y_tilde, upsample, block_size):
    """Lift each measurement vector to a BxB block and tile blocks in raster order."""
    return F.pixel_shuffle(F.conv2d(y_tilde, upsample), block_size)
