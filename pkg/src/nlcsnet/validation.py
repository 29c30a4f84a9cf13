"""Input checks shared by the estimator and the command line."""

import numpy as np

from .autograd.tensor import DimensionError


def check_image(image, name="image"):
    """Return ``image`` as a finite 2-D float32 array with values in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D grayscale array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    arr = arr.astype(np.float32)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1], got [{arr.min():.3g}, {arr.max():.3g}]")
    return arr


def check_images(images):
    """Accept one 2-D image, a [n, h, w] stack or a sequence of 2-D images; return a list."""
    if isinstance(images, np.ndarray):
        if images.ndim == 2:
            images = [images]
        elif images.ndim != 3:
            raise DimensionError(f"expected [n, h, w] images, got shape {images.shape}")
    images = [check_image(img, f"image {i}") for i, img in enumerate(images)]
    if not images:
        raise ValueError("no images given")
    return images


def check_rate(rate):
    rate = float(rate)
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    return rate
