"""scikit-learn style wrapper around training and reconstruction."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import DESK_MODEL, ModelConfig, TrainConfig
from .metrics import capped_psnr
from .sampling import pad_to_block_grid, sample_image
from .training import model_from_checkpoint, train
from .validation import check_images, check_rate


class CSReconstructor(BaseEstimator, TransformerMixin):
    """Learn a sampling matrix and reconstruction network from grayscale images.

    ``transform`` returns block measurements, ``inverse_transform`` maps them
    back to images, and ``predict`` does both (sample then reconstruct).
    Images are 2-D arrays in [0, 1] (uint8 is rescaled).
    """

    def __init__(
        self,
        rate=0.1,
        block_size=32,
        matrix="learned",
        desk=True,
        epochs=1,
        iterations_per_epoch=100,
        batch_size=4,
        patch_size=64,
        learning_rate=1e-4,
        coupling_weight=0.001,
        enable_coupling=True,
        enable_nlm=True,
        enable_msn=True,
        enable_nlf=True,
        augment=True,
        random_state=0,
    ):
        self.rate = rate
        self.block_size = block_size
        self.matrix = matrix
        self.desk = desk
        self.epochs = epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.learning_rate = learning_rate
        self.coupling_weight = coupling_weight
        self.enable_coupling = enable_coupling
        self.enable_nlm = enable_nlm
        self.enable_msn = enable_msn
        self.enable_nlf = enable_nlf
        self.augment = augment
        self.random_state = random_state

    def _train_config(self):
        model = dict(DESK_MODEL) if self.desk else {}
        model.update(
            block_size=self.block_size,
            rate=check_rate(self.rate),
            matrix=self.matrix,
            coupling_weight=self.coupling_weight,
            enable_coupling=self.enable_coupling,
            enable_nlm=self.enable_nlm,
            enable_msn=self.enable_msn,
            enable_nlf=self.enable_nlf,
        )
        return TrainConfig(
            patch_size=self.patch_size,
            batch_size=self.batch_size,
            epochs=self.epochs,
            iterations_per_epoch=self.iterations_per_epoch,
            base_lr=self.learning_rate,
            augment=self.augment,
            seed=self.random_state,
            model=ModelConfig(**model),
        )

    def fit(self, X, y=None):
        images = check_images(X)
        result = train(self._train_config(), images=images)
        self.model_ = result.model
        self.checkpoint_ = result.checkpoint
        self.loss_log_ = result.losses
        self.n_measurements_ = result.model.n_b
        return self

    @classmethod
    def from_checkpoint(cls, ckpt):
        """Rebuild a fitted estimator from a loaded checkpoint."""
        cfg = TrainConfig(**ckpt.config)
        m = cfg.model
        est = cls(
            rate=m.rate, block_size=m.block_size, matrix=m.matrix, desk=m.channels == DESK_MODEL["channels"],
            epochs=cfg.epochs, iterations_per_epoch=cfg.iterations_per_epoch, batch_size=cfg.batch_size,
            patch_size=cfg.patch_size, learning_rate=cfg.base_lr, coupling_weight=m.coupling_weight,
            enable_coupling=m.enable_coupling, enable_nlm=m.enable_nlm, enable_msn=m.enable_msn,
            enable_nlf=m.enable_nlf, augment=cfg.augment, random_state=cfg.seed,
        )
        est.model_ = model_from_checkpoint(ckpt)
        est.checkpoint_ = ckpt
        est.loss_log_ = []
        est.n_measurements_ = est.model_.n_b
        return est

    def transform(self, X):
        """Per-image measurement grids [n_B, h_B, w_B] (edges reflection-padded to whole blocks)."""
        check_is_fitted(self, "model_")
        out = []
        for img in check_images(X):
            padded, _ = pad_to_block_grid(img, self.model_.config.block_size)
            out.append(sample_image(padded, self.model_.sampling).data[0])
        return out

    def inverse_transform(self, Y):
        """Images from measurement grids, at the padded (block-multiple) size."""
        check_is_fitted(self, "model_")
        images = []
        for y in Y:
            y = np.asarray(y, dtype=np.float32)
            if y.ndim != 3 or y.shape[0] != self.n_measurements_:
                raise ValueError(f"expected [{self.n_measurements_}, h_B, w_B] measurements, got {y.shape}")
            rec = self.model_.reconstruct_measurements(y[None])
            images.append(rec.image.data[0, 0])
        return images

    def predict(self, X):
        """Sample and reconstruct each image, cropped back to its own size."""
        check_is_fitted(self, "model_")
        return [self.model_.reconstruct(img)[0] for img in check_images(X)]

    def score(self, X, y=None):
        """Mean PSNR (dB, capped) of the reconstructions against the inputs."""
        images = check_images(X)
        recs = self.predict(images)
        return float(np.mean([capped_psnr(np.clip(r, 0, 1), x) for r, x in zip(recs, images)]))
