"""Block-based compressed sampling expressed as a strided convolution."""

import math
from dataclasses import dataclass

import numpy as np

from .autograd import functional as F
from .autograd.nn import Module, Parameter
from .autograd.tensor import DimensionError, Tensor

FIXED = "fixed"
LEARNED = "learned"


def measurement_count(rate, block_size):
    """Measurements per block, ``floor(rate * B^2)`` but never below one."""
    if not 0 < rate <= 1:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    return max(1, int(math.floor(rate * block_size * block_size + 1e-9)))


def orthogonal_gaussian_matrix(n_rows, n_cols, seed):
    """Gaussian matrix with orthonormal rows (QR with a sign-fixed R)."""
    if n_rows > n_cols:
        raise ValueError(f"cannot have {n_rows} orthonormal rows in dimension {n_cols}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_rows, n_cols))
    q, r = np.linalg.qr(g.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T


class SamplingOperator(Module):
    """Shared per-block sampling matrix stored as a [n_B, 1, B, B] kernel.

    In ``fixed`` mode the kernel is excluded from gradient computation; in
    ``learned`` mode it is optimised jointly with the reconstruction.
    """

    def __init__(self, block_size, rate, mode=FIXED, seed=0, matrix=None):
        if mode not in (FIXED, LEARNED):
            raise ValueError(f"sampling mode must be '{FIXED}' or '{LEARNED}', got {mode!r}")
        self.block_size = block_size
        self.rate = rate
        self.n_b = measurement_count(rate, block_size)
        self.mode = mode
        self.seed = seed
        if matrix is None:
            matrix = orthogonal_gaussian_matrix(self.n_b, block_size * block_size, seed)
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.shape != (self.n_b, block_size * block_size):
            raise DimensionError(
                f"sampling matrix must be {(self.n_b, block_size**2)}, got {matrix.shape}"
            )
        self.phi = Parameter(matrix.reshape(self.n_b, 1, block_size, block_size), trainable=mode == LEARNED)

    @property
    def matrix(self):
        """The n_B x B^2 matrix view of the kernel."""
        return self.phi.data.reshape(self.n_b, -1)

    def forward(self, image):
        return sample_image(image, self)


def make_orthogonal_gaussian(n_b, block_size, seed):
    """Fixed-mode operator whose rows are an orthonormalised Gaussian draw."""
    if n_b > block_size * block_size:
        raise ValueError(f"n_B={n_b} exceeds B^2={block_size * block_size}")
    return SamplingOperator(block_size, n_b / (block_size * block_size), mode=FIXED, seed=seed)


@dataclass(frozen=True)
class ImageGrid:
    w: int
    h: int
    block_size: int
    original_w: int
    original_h: int

    @property
    def w_b(self):
        return self.w // self.block_size

    @property
    def h_b(self):
        return self.h // self.block_size

    @property
    def num_blocks(self):
        return self.w_b * self.h_b

    def crop(self, image):
        if isinstance(image, Tensor):
            return F.crop(image, self.original_h, self.original_w)
        return np.asarray(image)[..., : self.original_h, : self.original_w]


def pad_to_block_grid(image, block_size):
    """Reflection-pad right/bottom edges up to the next multiple of ``block_size``."""
    if not isinstance(image, Tensor):
        image = Tensor(_as_nchw(image))
    h, w = image.shape[-2:]
    ph = (-h) % block_size
    pw = (-w) % block_size
    padded = F.reflect_pad(image, ph, pw)
    return padded, ImageGrid(w=w + pw, h=h + ph, block_size=block_size, original_w=w, original_h=h)


def sample_image(image, op):
    """Measurements [N, n_B, h_B, w_B]; cell (i, j) holds Phi @ vec(block(i, j))."""
    if not isinstance(image, Tensor):
        image = Tensor(_as_nchw(image))
    elif image.ndim == 2:
        image = F.reshape(image, (1, 1) + image.shape)
    h, w = image.shape[-2:]
    b = op.block_size
    if h % b or w % b:
        raise DimensionError(f"image {(h, w)} is not divisible into {b}x{b} blocks")
    return F.conv2d(image, op.phi, stride=b, padding=0)


def block_adjoint(y, op):
    """Apply Phi^T per block and tile the blocks back into an image."""
    phi_t = Tensor(op.matrix.T.reshape(op.block_size**2, op.n_b, 1, 1))
    return F.pixel_shuffle(F.conv2d(y, phi_t), op.block_size)


def _as_nchw(image):
    arr = np.asarray(image)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4:
        raise DimensionError(f"expected an image or image batch, got shape {np.shape(image)}")
    return arr
