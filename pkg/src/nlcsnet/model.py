"""The end-to-end network: sampling, measurement-domain refinement, deep reconstruction."""

from dataclasses import dataclass

import numpy as np

from .autograd import functional as F
from .autograd.nn import Module
from .autograd.tensor import Tensor
from .config import ModelConfig
from .measurement import MeasurementStage
from .msnl import FeatureAffinitySet, MSNLNet
from .sampling import SamplingOperator, pad_to_block_grid, sample_image


@dataclass
class Reconstruction:
    image: Tensor
    initial: Tensor
    measurements: Tensor
    measurement_affinity: object  # AffinityMatrix or None
    feature_affinities: FeatureAffinitySet


class NLCSNet(Module):
    """Sampling operator plus both reconstruction phases.

    The lifting kernel starts as the transpose of the sampling matrix and the
    network tail starts at zero, so a fresh model reconstructs with the plain
    block adjoint.
    """

    def __init__(self, config=None, seed=0):
        self.config = config = config or ModelConfig()
        # separate streams, so dropping the measurement-domain block leaves the deep network's init unchanged
        stage_rng, net_rng = (np.random.default_rng([seed, i]) for i in range(2))
        self.sampling = SamplingOperator(config.block_size, config.rate, config.matrix, config.matrix_seed)
        self.measurement = MeasurementStage(
            self.sampling.n_b,
            config.block_size,
            stage_rng,
            use_nonlocal=config.enable_nlm,
            init_matrix=self.sampling.matrix,
        )
        self.msnl = MSNLNet(config, net_rng)

    @property
    def n_b(self):
        return self.sampling.n_b

    def forward(self, x):
        """Run a block-divisible batch [K, 1, h, w] through the whole pipeline."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        dtype = self.sampling.phi.dtype
        if x.dtype != dtype:
            x = Tensor(x.data.astype(dtype), requires_grad=x.requires_grad)
        y = sample_image(x, self.sampling)
        return self.reconstruct_measurements(y)

    def reconstruct_measurements(self, y):
        if not isinstance(y, Tensor):
            y = Tensor(np.asarray(y, dtype=self.sampling.phi.dtype))
        x0, r = self.measurement(y)
        image, feats = self.msnl(x0)
        return Reconstruction(image, x0, y, r, feats)

    def reconstruct(self, image):
        """Reconstruct one 2-D image of any size; returns (array, Reconstruction)."""
        arr = np.asarray(image, dtype=self.sampling.phi.dtype)
        padded, grid = pad_to_block_grid(Tensor(arr[None, None]), self.config.block_size)
        out = self.forward(padded)
        return grid.crop(out.image.data)[0, 0], out
