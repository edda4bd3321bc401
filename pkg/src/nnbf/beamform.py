"""Linear receive beamformers and the analytic SINR / sum-rate metrics.

Conventions: a channel matrix ``H`` is ``M x N`` (column ``i`` is UE ``i``'s
channel) and a beamformer ``W`` is ``N x M`` (row ``k`` recovers UE ``k``).
The filter is applied with a plain transpose, ``w_k^T y``, so the effective
UE-to-stream gains are the entries of the ordinary product ``W H``.
"""

from dataclasses import dataclass

import numpy as np

from .channel import SystemDims
from .linalg import (
    ShapeError,
    SingularMatrixError,
    regularized_left_pinv_masked,
)


class UndefinedSinrError(ValueError):
    """A UE has no signal, interference or noise power to form a ratio."""


class DegenerateWeightsError(ValueError):
    """A receive antenna carries no beamforming weight at all."""


def uniform_rate_weights(n_ues):
    """The default rate weights, ``1/N`` for every UE."""
    return np.full(n_ues, 1.0 / n_ues)


def _check_stack(h):
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim < 2:
        raise ShapeError(f"expected a channel matrix, got shape {h.shape}")
    return h


def zfbf_masked(h):
    """Zero-forcing weights for a stack of channels plus a full-rank mask."""
    return regularized_left_pinv_masked(_check_stack(h))


def mmse_masked(h, sigma2):
    """MMSE weights for a stack of channels plus a nonsingular mask.

    ``sigma2`` is a scalar or an array broadcastable to the stack shape.
    """
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(sigma2 < 0):
        raise ValueError("noise variance must be non-negative")
    return regularized_left_pinv_masked(_check_stack(h), sigma2)


def zfbf(h):
    """``W = (H^H H)^{-1} H^H``; rows null every other UE."""
    h = _check_stack(h)
    if h.shape[-2] < h.shape[-1]:
        raise ShapeError(f"zero forcing needs M >= N, got H of shape {h.shape}")
    w, ok = zfbf_masked(h)
    if not np.all(ok):
        raise SingularMatrixError("channel is not full column rank")
    return w


def mmse(h, sigma2):
    """``W = (H^H H + sigma2 I)^{-1} H^H``."""
    w, ok = mmse_masked(h, sigma2)
    if not np.all(ok):
        raise SingularMatrixError("H^H H + sigma2 I is singular")
    return w


def sinr_per_ue(w, h, sigma2):
    """Per-UE SINR of beamformer ``w`` (``..., N, M``) on channel ``h`` (``..., M, N``).

    ``gamma_k = |[WH]_kk|^2 / (sum_{i != k} |[WH]_ki|^2 + sigma2 ||w_k||^2)``.
    ``sigma2`` broadcasts against the leading stack axes.
    """
    w = np.asarray(w, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if w.shape[-1] != h.shape[-2] or w.shape[-2] != h.shape[-1]:
        raise ShapeError(f"beamformer {w.shape} does not match channel {h.shape}")
    gains = np.abs(w @ h) ** 2
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    interference = gains.sum(axis=-1) - signal
    sigma2 = np.asarray(sigma2, dtype=np.float64)[..., None]
    noise = sigma2 * np.sum(np.abs(w) ** 2, axis=-1)
    denom = interference + noise
    if np.any(denom <= 0):
        raise UndefinedSinrError("zero interference-plus-noise power for some UE")
    return signal / denom


def sum_rate(gamma, alpha=None):
    """Weighted sum-rate ``sum_i alpha_i log2(1 + gamma_i)`` over the last axis."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if alpha is None:
        alpha = uniform_rate_weights(gamma.shape[-1])
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[-1] != gamma.shape[-1]:
        raise ShapeError(f"{alpha.shape[-1]} weights for {gamma.shape[-1]} UEs")
    return np.sum(alpha * np.log2(1.0 + gamma), axis=-1)


def normalize_columns(w):
    """Scale each column of ``w`` (``..., N, M``) to unit norm, so ``tr(W^H W) = M``."""
    w = np.asarray(w, dtype=np.complex128)
    norms = np.sqrt(np.sum(np.abs(w) ** 2, axis=-2, keepdims=True))
    if np.any(norms == 0):
        raise DegenerateWeightsError("receive antenna with all-zero weights")
    return w / norms


@dataclass
class BeamformerSet:
    """Per-subcarrier weights, ``data[b, n, m, k]`` is ``W[n, m]`` on subcarrier ``k``."""

    dims: SystemDims
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != self.dims.shape:
            raise ValueError(f"data shape {self.data.shape} != dims {self.dims.shape}")

    def matrices(self):
        """Beamformer matrices of shape ``(B, K, N, M)``."""
        return np.transpose(self.data, (0, 3, 1, 2))

    @classmethod
    def from_matrices(cls, dims, w):
        return cls(dims, np.transpose(w, (0, 2, 3, 1)))

    def trace_power(self):
        """``tr(W^H W)`` per batch item and subcarrier, shape ``(B, K)``."""
        return np.sum(np.abs(self.data) ** 2, axis=(1, 2))


def normalize_receive_power(w):
    """Per-antenna power normalization of a ``BeamformerSet``."""
    return BeamformerSet(w.dims, normalize_columns(w.data.transpose(0, 3, 1, 2))
                         .transpose(0, 2, 3, 1))


def batch_sum_rate(w, h, sigma2, alpha=None):
    """Sum-rate per batch item and subcarrier, shape ``(B, K)``.

    ``w`` is a ``BeamformerSet``, ``h`` a ``ChannelBatch``; ``sigma2`` is a
    scalar or one value per batch item.
    """
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if sigma2.ndim == 1:
        sigma2 = sigma2[:, None]
    gamma = sinr_per_ue(w.matrices(), h.matrices(), sigma2)
    return sum_rate(gamma, alpha)
