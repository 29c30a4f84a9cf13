"""Affinity matrices produced by non-local blocks, plus CSV/PGM export."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import functional as F
from .autograd.tensor import Tensor
from .pgm import write_pgm


@dataclass
class AffinityMatrix:
    """Row-normalised attention weights with their pre-softmax logits.

    ``weights`` and ``logits`` are [K, N, M]: one matrix per batch element,
    N query positions on a ``query_shape`` grid, M key positions. ``pool`` is
    the key-grid subsampling factor (M == N when it is 1).
    """

    logits: Tensor
    weights: Tensor
    query_shape: tuple
    pool: int = 1

    @property
    def n(self):
        return self.weights.shape[-2]

    @property
    def is_square(self):
        return self.weights.shape[-2] == self.weights.shape[-1]

    def square_weights(self):
        """Weights averaged over each key cell's queries, giving a [K, M, M] matrix.

        Rows stay stochastic. For unpooled affinities this is the matrix itself.
        """
        if self.pool == 1:
            return self.weights
        k, _, m = self.weights.shape
        h, w = self.query_shape
        p = self.pool
        grid = F.reshape(self.weights, (k, h // p, p, w // p, p, m))
        pooled = F.mean(grid, axis=(2, 4))
        return F.reshape(pooled, (k, (h // p) * (w // p), m))


def _csv_value(x):
    return repr(float(f"{x:.6g}"))


def _as_matrix(r, index=0):
    if isinstance(r, AffinityMatrix):
        r = r.weights
    if isinstance(r, Tensor):
        r = r.data
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 3:
        r = r[index]
    if r.ndim != 2:
        raise ValueError(f"affinity export expects a matrix, got shape {r.shape}")
    return r


def export_affinity(r, path, index=0):
    """Write ``<path>.csv`` (6 significant digits) and a row-max normalised ``<path>.pgm``.

    Returns the two paths written.
    """
    mat = _as_matrix(r, index)
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".pgm") else path
    csv_path = stem.with_name(stem.name + ".csv")
    pgm_path = stem.with_name(stem.name + ".pgm")
    lines = [",".join(_csv_value(v) for v in row) for row in mat]
    try:
        csv_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write affinity CSV to {csv_path}: {exc}") from exc
    row_max = mat.max(axis=1, keepdims=True)
    row_max[row_max <= 0] = 1.0
    heat = np.clip(np.rint(255.0 * mat / row_max), 0, 255).astype(np.uint8)
    write_pgm(pgm_path, heat)
    return csv_path, pgm_path


def read_affinity_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)
