"""Training objective: reconstruction error plus affinity-coupling penalties."""

from dataclasses import dataclass

from .affinity import AffinityMatrix
from .autograd import functional as F
from .autograd.tensor import DimensionError, Tensor
from .msnl import FeatureAffinitySet


@dataclass
class LossReport:
    total: Tensor
    reconstruction: float
    coupling_measurement: float
    coupling_feature: float
    gamma: float
    gamma_u: float
    gamma_v: float

    def as_row(self):
        return {
            "L": float(self.total.data),
            "L_r": self.reconstruction,
            "L_u": self.coupling_measurement,
            "L_v": self.coupling_feature,
        }


def reconstruction_loss(x_tilde, x):
    """(1 / 2K) * sum_i ||x_tilde_i - x_i||_F^2 over a batch of K images."""
    if x_tilde.shape != x.shape:
        raise DimensionError(f"reconstruction {x_tilde.shape} vs target {x.shape}")
    k = x.shape[0]
    return F.scalar_mul(F.frobenius_sq(F.sub(x_tilde, x)), 1.0 / (2 * k))


def _asymmetry(r):
    if r.shape[-1] != r.shape[-2]:
        raise DimensionError(f"coupling penalty needs square affinities, got {r.shape}")
    return F.frobenius_sq(F.sub(r, F.transpose2d(r)))


def coupling_loss_measurement(r, k=None):
    """(1 / 2K) * sum_i ||r_i - r_i^T||_F^2 on the row-normalised affinities."""
    weights = r.weights if isinstance(r, AffinityMatrix) else r
    if k is None:
        k = weights.shape[0] if weights.ndim == 3 else 1
    return F.scalar_mul(_asymmetry(weights), 1.0 / (2 * k))


def coupling_loss_feature(affinities, k):
    """Sum of the per-submodule penalties; pooled affinities are squared up first.

    An empty set (feature-domain attention disabled) gives an exact zero.
    """
    if isinstance(affinities, FeatureAffinitySet):
        matrices = affinities.matrices()
    else:
        matrices = list(affinities)
    if not matrices:
        return Tensor(0.0)
    total = None
    for r in matrices:
        term = _asymmetry(r.square_weights() if isinstance(r, AffinityMatrix) else r)
        total = term if total is None else F.add(total, term)
    return F.scalar_mul(total, 1.0 / (2 * k))


def total_loss(reconstruction, target, config):
    """Assemble ``L = L_r + gamma * (gamma_u * L_u + gamma_v * L_v)``.

    When coupling is disabled (toggle off or ``gamma == 0``) the coupling
    terms are not built and are reported as exact zeros.
    """
    if not isinstance(target, Tensor):
        target = Tensor(target)
    k = target.shape[0]
    l_r = reconstruction_loss(reconstruction.image, target)
    gamma = config.coupling_weight if config.enable_coupling else 0.0
    gu, gv = config.measurement_coupling_weight, config.feature_coupling_weight
    l_u = l_v = None
    total = l_r
    if gamma > 0:
        if reconstruction.measurement_affinity is not None:
            l_u = coupling_loss_measurement(reconstruction.measurement_affinity, k)
        if len(reconstruction.feature_affinities):
            l_v = coupling_loss_feature(reconstruction.feature_affinities, k)
        coupling = None
        for weight, term in ((gu, l_u), (gv, l_v)):
            if term is None:
                continue
            part = F.scalar_mul(term, weight)
            coupling = part if coupling is None else F.add(coupling, part)
        if coupling is not None:
            total = F.add(l_r, F.scalar_mul(coupling, gamma))
    return LossReport(
        total=total,
        reconstruction=float(l_r.data),
        coupling_measurement=float(l_u.data) if l_u is not None else 0.0,
        coupling_feature=float(l_v.data) if l_v is not None else 0.0,
        gamma=gamma,
        gamma_u=gu,
        gamma_v=gv,
    )


def combine_losses(l_r, l_u, l_v, gamma, gamma_u=1.0, gamma_v=1.0):
    """Plain-number version of the total for already-computed components."""
    return l_r + gamma * (gamma_u * l_u + gamma_v * l_v)
