"""Patch sampling, augmentation and the Adam training loop."""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd.optim import AdamState, adam_step
from .autograd.tensor import DimensionError
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig, TrainConfig, format_config
from .losses import total_loss
from .model import NLCSNet
from .pgm import PGMError, read_pgm

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "epoch", "lr", "L", "L_r", "L_u", "L_v")


class TrainingDivergedError(FloatingPointError):
    """Raised when the loss or a gradient goes non-finite; carries the batch."""

    def __init__(self, message, batch=None, dump_path=None):
        super().__init__(message)
        self.batch = batch
        self.dump_path = dump_path


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"dataset directory {directory} does not exist")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")


def augment(patch, rng):
    """Random rotation by a multiple of 90 degrees, then a horizontal flip with p=0.5."""
    patch = np.asarray(patch)
    k = int(rng.integers(4))
    if k % 2 and patch.shape[-1] != patch.shape[-2]:
        raise DimensionError(f"cannot rotate non-square patch {patch.shape} by {90 * k} degrees")
    patch = np.rot90(patch, k, axes=(-2, -1))
    if rng.random() < 0.5:
        patch = patch[..., ::-1]
    return np.ascontiguousarray(patch)


class PatchStream:
    """Endless stream of random square crops, reproducible from ``seed``.

    The generator state can be captured and restored, which is what lets a
    resumed run draw the same batches an uninterrupted one would.
    """

    def __init__(self, images, patch_size, seed=0, augment=True):
        self.patch_size = patch_size
        self.augment = augment
        self.images = []
        for i, img in enumerate(images):
            img = np.asarray(img, dtype=np.float32)
            if img.ndim != 2:
                raise DimensionError(f"image {i} must be 2-D grayscale, got shape {img.shape}")
            if min(img.shape) < patch_size:
                warnings.warn(f"image {i} of size {img.shape} is smaller than the {patch_size}px patch; skipped")
                continue
            self.images.append(img)
        if not self.images:
            raise ConfigError(f"no usable training images of size >= {patch_size}")
        self.rng = np.random.default_rng(seed)

    def next_patch(self):
        img = self.images[int(self.rng.integers(len(self.images)))]
        p = self.patch_size
        top = int(self.rng.integers(img.shape[0] - p + 1))
        left = int(self.rng.integers(img.shape[1] - p + 1))
        patch = img[top : top + p, left : left + p]
        return augment(patch, self.rng) if self.augment else patch.copy()

    def __iter__(self):
        while True:
            yield self.next_patch()

    def batch(self, k):
        return np.stack([self.next_patch() for _ in range(k)])[:, None]

    def get_state(self):
        return self.rng.bit_generator.state

    def set_state(self, state):
        self.rng.bit_generator.state = state


def load_patches(directory, patch_size, seed=0, augment=True):
    """PatchStream over every readable PGM in ``directory``."""
    paths = list_images(directory)
    if not paths:
        raise ConfigError(f"no .pgm images found in {directory}")
    images = []
    for path in paths:
        try:
            images.append(read_pgm(path))
        except PGMError as exc:
            warnings.warn(f"skipping unreadable image: {exc}")
    if not images:
        raise ConfigError(f"no readable .pgm images in {directory}")
    return PatchStream(images, patch_size, seed, augment)


def model_from_checkpoint(ckpt):
    model = NLCSNet(ModelConfig(**ckpt.config["model"]), seed=ckpt.config.get("seed", 0))
    model.load_state_dict(ckpt.params)
    return model


@dataclass
class TrainResult:
    model: NLCSNet
    checkpoint: Checkpoint
    losses: list = field(default_factory=list)


class Trainer:
    """Owns the model, optimizer state and patch stream for one run."""

    def __init__(self, config, stream, model=None):
        self.config = config
        self.stream = stream
        self.model = model or NLCSNet(config.model, seed=config.seed)
        self.optimizer = AdamState(
            learning_rate=config.base_lr,
            beta1=config.beta1,
            beta2=config.beta2,
            epsilon=config.epsilon,
            weight_decay=config.weight_decay,
        )
        self.epoch = 0

    @classmethod
    def resume(cls, ckpt, stream):
        config = TrainConfig(**ckpt.config)
        trainer = cls(config, stream, model_from_checkpoint(ckpt))
        trainer.epoch = ckpt.epoch
        trainer.optimizer.step_count = ckpt.step_count
        trainer.optimizer.first_moment = {k: v.copy() for k, v in ckpt.first_moment.items()}
        trainer.optimizer.second_moment = {k: v.copy() for k, v in ckpt.second_moment.items()}
        if ckpt.rng_state is not None:
            stream.set_state(ckpt.rng_state)
        return trainer

    def step(self, dump_dir=None):
        """One Adam step on a fresh batch; returns the loss-log row."""
        batch = self.stream.batch(self.config.batch_size)
        self.model.zero_grad()
        out = self.model(batch)
        report = total_loss(out, batch, self.config.model)
        if not math.isfinite(float(report.total.data)):
            self._diverged(f"loss became {float(report.total.data)}", batch, dump_dir)
        report.total.backward()
        try:
            adam_step(self.model.trainable_parameters(), self.optimizer)
        except FloatingPointError as exc:
            self._diverged(str(exc), batch, dump_dir)
        row = {"iteration": self.optimizer.step_count, "epoch": self.epoch, "lr": self.optimizer.learning_rate}
        row.update(report.as_row())
        return row

    def _diverged(self, reason, batch, dump_dir):
        dump_path = None
        if dump_dir is not None:
            dump_path = Path(dump_dir) / f"diverged_batch_step{self.optimizer.step_count + 1}.npy"
            np.save(dump_path, batch)
        where = f"; batch saved to {dump_path}" if dump_path else ""
        raise TrainingDivergedError(
            f"training aborted at step {self.optimizer.step_count + 1} (epoch {self.epoch}): {reason}{where}",
            batch=batch,
            dump_path=dump_path,
        )

    def run_epoch(self, dump_dir=None):
        self.optimizer.learning_rate = self.config.lr_at(self.epoch)
        rows = [self.step(dump_dir) for _ in range(self.config.iterations_per_epoch)]
        self.epoch += 1
        return rows

    def checkpoint(self):
        return Checkpoint(
            config=self.config.to_dict(),
            params=self.model.state_dict(),
            epoch=self.epoch,
            step_count=self.optimizer.step_count,
            first_moment=dict(self.optimizer.first_moment),
            second_moment=dict(self.optimizer.second_moment),
            rng_state=self.stream.get_state(),
        )


def _stream_for(config, images):
    if images is None:
        if not config.data_dir:
            raise ConfigError("no training images: set data_dir or pass images")
        return load_patches(config.data_dir, config.patch_size, config.seed, config.augment)
    return PatchStream(images, config.patch_size, config.seed, config.augment)


def train(config, images=None, out_dir=None, resume=None, on_epoch=None):
    """Train for ``config.epochs`` epochs (counting any already done in ``resume``).

    With ``out_dir`` set, writes ``config.txt``, ``loss.csv`` and one
    ``epoch_XXXX.nlcs`` checkpoint per finished epoch (epoch 0 is the
    initialisation). ``resume`` is a checkpoint path or object; the
    stored config wins over ``config`` except for the epoch count.
    """
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        stored = TrainConfig(**ckpt.config)
        trainer = Trainer.resume(ckpt, _stream_for(stored, images))
        trainer.config.epochs = config.epochs
    else:
        trainer = Trainer(config, _stream_for(config, images))
    target_epochs = trainer.config.epochs

    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(trainer.config))
        log_path = out / "loss.csv"
        append = resume is not None and log_path.exists()
        fh = open(log_path, "a" if append else "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        if not append:
            writer.writeheader()
        if resume is None:
            save_checkpoint(trainer.checkpoint(), out / "epoch_0000.nlcs")

    losses = []
    try:
        while trainer.epoch < target_epochs:
            rows = trainer.run_epoch(dump_dir=out)
            losses.extend(rows)
            last = rows[-1] if rows else None
            if last:
                log.info("epoch %d  lr %.3g  L %.6g  L_r %.6g", trainer.epoch, last["lr"], last["L"], last["L_r"])
            if writer is not None:
                writer.writerows(rows)
                fh.flush()
                save_checkpoint(trainer.checkpoint(), out / f"epoch_{trainer.epoch:04d}.nlcs")
            if on_epoch is not None:
                on_epoch(trainer, rows)
    finally:
        if writer is not None:
            fh.close()
    return TrainResult(trainer.model, trainer.checkpoint(), losses)


def read_loss_log(path):
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("iteration", "epoch") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
