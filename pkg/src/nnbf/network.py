"""The NNBF network: per-antenna-pair conv stack, two FC layers, power normalization.

Input channels ``H`` (``B, N, M, K``) are split into IQ pairs and reshaped to
``(B*N*M, 2, K)`` so that the 1-D convolutions run along frequency for every
UE/antenna pair. Two basic blocks (conv stride 2, batch norm, GELU) take the
depth 2 -> 16 -> 32 and the length K -> K/2 -> K/4, so the flattened feature
width per batch item is ``N*M*32*K/4 = 8NMK``.
"""

import numpy as np

from .autodiff import GELU, BatchNorm1d, Conv1d, Linear, Module, Tensor, concat, gelu, no_grad
from .beamform import BeamformerSet, uniform_rate_weights
from .channel import ChannelBatch, ConfigurationError, SystemDims


class BasicBlock(Module):
    """Conv1d(kernel 3, stride 2, padding 1) -> BatchNorm1d -> GELU."""

    def __init__(self, in_channels, out_channels, rng, approximate_gelu=False):
        self.conv = Conv1d(in_channels, out_channels, 3, rng, stride=2, padding=1)
        self.bn = BatchNorm1d(out_channels)
        self.act = GELU(approximate_gelu)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class NnbfNetwork(Module):
    def __init__(self, dims, hidden_width=1024, rng=None, snr_input=False,
                 approximate_gelu=False):
        if dims.k_subcarriers % 4:
            raise ConfigurationError(
                f"K must be divisible by 4 for two stride-2 blocks, got {dims.k_subcarriers}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.dims = dims
        self.hidden_width = hidden_width
        self.snr_input = bool(snr_input)
        self.approximate_gelu = approximate_gelu
        n, m, k = dims.n_ues, dims.m_rx, dims.k_subcarriers
        self.block1 = BasicBlock(2, 16, rng, approximate_gelu)
        self.block2 = BasicBlock(16, 32, rng, approximate_gelu)
        self.flat_width = n * m * 32 * (k // 4)
        self.fc1 = Linear(self.flat_width + self.snr_input, hidden_width, rng)
        self.fc2 = Linear(hidden_width, 2 * n * m * k, rng)

    @property
    def arch(self):
        d = self.dims
        return (d.n_ues, d.m_rx, d.k_subcarriers, self.hidden_width, int(self.snr_input))

    def _check(self, h):
        data = h.data if isinstance(h, ChannelBatch) else np.asarray(h)
        if data.ndim != 4 or data.shape[1:] != self.dims.shape[1:]:
            raise ValueError(
                f"channel shape {data.shape} does not match network dims "
                f"(B, {self.dims.n_ues}, {self.dims.m_rx}, {self.dims.k_subcarriers})")
        return data

    def features(self, h):
        """IQ input tensor of shape ``(B*N*M, 2, K)``."""
        data = self._check(h)
        b, n, m, k = data.shape
        iq = np.stack([data.real, data.imag], axis=3)
        return Tensor(iq.reshape(b * n * m, 2, k))

    def forward(self, h, snr_db=None):
        """Normalized weights as a pair of real tensors ``(W_re, W_im)``, each (B, N, M, K)."""
        data = self._check(h)
        b = data.shape[0]
        n, m, k = self.dims.n_ues, self.dims.m_rx, self.dims.k_subcarriers
        z = self.block2(self.block1(self.features(data)))
        z = z.reshape(b, self.flat_width)
        if self.snr_input:
            if snr_db is None:
                raise ValueError("this network takes the SNR as an extra input")
            snr = np.broadcast_to(np.asarray(snr_db, dtype=np.float64), (b,))
            z = concat([z, Tensor(snr[:, None] / 10.0)], axis=1)
        out = self.fc2(gelu(self.fc1(z), self.approximate_gelu))
        out = out.reshape(b, 2, n, m, k)
        return normalize_receive_power_tensor(out[:, 0], out[:, 1])


def normalize_receive_power_tensor(wr, wi):
    """Differentiable per-antenna normalization: unit column norm on every subcarrier."""
    power = (wr * wr + wi * wi).sum(axis=1, keepdims=True)
    norm = power.sqrt()
    return wr / norm, wi / norm


def build_network(dims, hidden_width=1024, rng=None, seed=None, **kwargs):
    """Construct an ``NnbfNetwork``; ``seed`` is a shortcut for ``rng``."""
    if rng is None:
        rng = np.random.default_rng(0 if seed is None else seed)
    return NnbfNetwork(dims, hidden_width, rng, **kwargs)


def forward_beamformer(net, h, snr_db=None):
    """Evaluate ``net`` without recording a graph and return a ``BeamformerSet``."""
    with no_grad():
        wr, wi = net(h, snr_db)
    data = wr.data + 1j * wi.data
    dims = SystemDims(net.dims.n_ues, net.dims.m_rx, net.dims.k_subcarriers, data.shape[0])
    return BeamformerSet(dims, data)


def nnbf_loss(w, h, sigma2, alpha=None):
    """Negative weighted sum-rate averaged over batch items and subcarriers.

    ``w`` is either a ``(W_re, W_im)`` pair of tensors or a ``BeamformerSet``;
    ``h`` a ``ChannelBatch`` or complex array (B, N, M, K); ``sigma2`` a scalar
    or one value per batch item. Rates are in bits/s/Hz.
    """
    if isinstance(w, BeamformerSet):
        wr, wi = Tensor(w.data.real), Tensor(w.data.imag)
    else:
        wr, wi = w
    data = h.data if isinstance(h, ChannelBatch) else np.asarray(h)
    b, n, m, k = data.shape
    if alpha is None:
        alpha = uniform_rate_weights(n)
    hr = data.real[:, None]                                 # (B, 1, N, M, K)
    hi = data.imag[:, None]
    wr5 = wr.reshape(b, n, 1, m, k)
    wi5 = wi.reshape(b, n, 1, m, k)
    # G[b, k, i, f] = sum_m W[b, k, m, f] H[b, i, m, f]
    gr = (wr5 * hr - wi5 * hi).sum(axis=3)
    gi = (wr5 * hi + wi5 * hr).sum(axis=3)
    power = gr * gr + gi * gi                               # (B, N, N, K)
    eye = np.eye(n)[None, :, :, None]
    signal = (power * eye).sum(axis=2)
    interference = power.sum(axis=2) - signal
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (b,))
    noise = (wr * wr + wi * wi).sum(axis=2) * sigma2[:, None, None]
    gamma = signal / (interference + noise)
    rates = (gamma + 1.0).log2()                            # (B, N, K)
    weighted = (rates * np.asarray(alpha, dtype=np.float64)[None, :, None]).sum(axis=1)
    return -weighted.mean()
