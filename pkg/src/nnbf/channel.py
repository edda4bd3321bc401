"""Synthetic frequency-domain MU-SIMO channels from a tapped-delay-line profile.

Each (batch item, UE, receive antenna) link gets its own Rayleigh tap
realization, which is then Fourier transformed onto ``K`` subcarriers. There is
no time axis: the channel is held constant over a sample.
"""

from dataclasses import dataclass, field
import os
import struct
import tempfile

import numpy as np

SUBCARRIERS_PER_RB = 12

# 3GPP TR 38.901 Table 7.7.2-1, TDL-A (normalized delay, power in dB),
# listed in table order; DelayProfile sorts by delay.
TDL_A_TAPS = (
    (0.0000, -13.4), (0.3819, 0.0), (0.4025, -2.2), (0.5868, -4.0),
    (0.4610, -6.0), (0.5375, -8.2), (0.6708, -9.9), (0.5750, -10.5),
    (0.7618, -7.5), (1.5375, -15.9), (1.8978, -6.6), (2.2242, -16.7),
    (2.1718, -12.4), (2.4942, -15.2), (2.5119, -10.8), (3.0582, -11.3),
    (4.0810, -12.7), (4.4579, -16.2), (4.5695, -18.3), (4.7966, -18.9),
    (5.0066, -16.6), (5.3043, -19.9), (9.6586, -29.7),
)

TOY_TAPS = ((0.0, 0.0), (1.0, -3.0), (2.5, -6.0))

# system parameters; doppler, TTI and modulation are metadata only
DELAY_SPREAD_S = 30e-9
SUBCARRIER_SPACING_HZ = 30e3
MAX_DOPPLER_HZ = 10.0
TTI_S = 500e-6
MODULATION = "QPSK"


class ConfigurationError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SystemDims:
    """Problem size: ``N`` UEs, ``M`` receive antennas, ``K`` subcarriers, ``B`` batch.

    Experiments build ``K`` from a resource-block count via ``from_rb``; any
    positive ``K`` is accepted so unit tests can use tiny bands.
    """

    n_ues: int
    m_rx: int
    k_subcarriers: int
    batch: int = 8

    def __post_init__(self):
        for name in ("n_ues", "m_rx", "k_subcarriers", "batch"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")

    @classmethod
    def from_rb(cls, n_ues, m_rx, resource_blocks=4, batch=8):
        return cls(n_ues, m_rx, SUBCARRIERS_PER_RB * resource_blocks, batch)

    @property
    def shape(self):
        return (self.batch, self.n_ues, self.m_rx, self.k_subcarriers)


@dataclass(frozen=True)
class DelayProfile:
    """Normalized tap delays and powers, scaled by a delay spread.

    Taps are sorted by delay and their linear powers are normalized to sum
    to one.
    """

    taps: tuple
    delay_spread_s: float = DELAY_SPREAD_S
    subcarrier_spacing_hz: float = SUBCARRIER_SPACING_HZ
    name: str = "custom"
    delays: np.ndarray = field(init=False, repr=False, compare=False)
    powers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.taps) == 0:
            raise ConfigurationError("delay profile needs at least one tap")
        taps = sorted((float(d), float(p)) for d, p in self.taps)
        delays = np.array([d for d, _ in taps])
        if np.any(delays < 0):
            raise ConfigurationError("tap delays must be non-negative")
        lin = 10.0 ** (np.array([p for _, p in taps]) / 10.0)
        object.__setattr__(self, "taps", tuple(taps))
        object.__setattr__(self, "delays", delays * self.delay_spread_s)
        object.__setattr__(self, "powers", lin / lin.sum())

    @property
    def num_taps(self):
        return len(self.taps)


def tdl_a(delay_spread_s=DELAY_SPREAD_S, subcarrier_spacing_hz=SUBCARRIER_SPACING_HZ):
    return DelayProfile(TDL_A_TAPS, delay_spread_s, subcarrier_spacing_hz, "tdl-a")


def toy_profile(delay_spread_s=DELAY_SPREAD_S, subcarrier_spacing_hz=SUBCARRIER_SPACING_HZ):
    return DelayProfile(TOY_TAPS, delay_spread_s, subcarrier_spacing_hz, "toy")


PROFILES = {"tdl-a": tdl_a, "toy": toy_profile}


def get_profile(name, **kwargs):
    try:
        return PROFILES[name](**kwargs)
    except KeyError:
        raise ConfigurationError(
            f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def _complex_normal(rng, shape, variance):
    std = np.sqrt(np.asarray(variance) / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def tap_realization(profile, rng, size=()):
    """Draw Rayleigh tap gains for ``profile``.

    Returns ``(delays_s, gains)`` where ``gains`` has shape ``size + (L,)`` and
    tap ``l`` is circularly-symmetric complex Gaussian with variance equal to
    its normalized linear power.
    """
    if profile.num_taps == 0:
        raise ConfigurationError("delay profile needs at least one tap")
    size = (size,) if isinstance(size, int) else tuple(size)
    gains = _complex_normal(rng, size + (profile.num_taps,), profile.powers)
    return profile.delays.copy(), gains


def frequency_response(delays_s, gains, k, spacing_hz):
    """Sample ``sum_l g_l exp(-j 2 pi kappa spacing tau_l)`` at ``kappa = 0..k-1``.

    ``gains`` may carry leading batch axes; the tap axis is last.
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    delays_s = np.asarray(delays_s, dtype=np.float64)
    freqs = np.arange(k) * spacing_hz
    phase = np.exp(-2j * np.pi * np.outer(delays_s, freqs))
    return np.asarray(gains, dtype=np.complex128) @ phase


@dataclass
class ChannelBatch:
    """Frequency-domain channels, ``data[b, n, m, k]`` links UE ``n`` to antenna ``m``."""

    dims: SystemDims
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != self.dims.shape:
            raise ValueError(f"data shape {self.data.shape} != dims {self.dims.shape}")

    def matrices(self):
        """Per-subcarrier channel matrices ``H`` of shape ``(B, K, M, N)``."""
        return np.transpose(self.data, (0, 3, 2, 1))


def generate_batch(dims, profile, rng):
    """One batch of independent Rayleigh TDL channels, unit average power per entry."""
    delays, gains = tap_realization(
        profile, rng, (dims.batch, dims.n_ues, dims.m_rx))
    h = frequency_response(delays, gains, dims.k_subcarriers,
                           profile.subcarrier_spacing_hz)
    return ChannelBatch(dims, h)


def batch_rng(seed, stream, index):
    """Independent generator for batch ``index`` of ``stream`` under ``seed``.

    Streams keep train/validation/test data disjoint; the result does not
    depend on generation order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def generate_dataset(dims, profile, n_batches, seed, stream=0):
    return [generate_batch(dims, profile, batch_rng(seed, stream, i))
            for i in range(n_batches)]


def noise_variance(snr_db):
    """Linear noise variance for unit signal power at ``snr_db``."""
    return 10.0 ** (-np.asarray(snr_db, dtype=np.float64) / 10.0)


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float

    @property
    def sigma2(self):
        return float(noise_variance(self.snr_db))


# ---------------------------------------------------------------------------
# dataset file
# ---------------------------------------------------------------------------

DATASET_MAGIC = b"NNBF"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")
_MAX_DIM = 1 << 20


def atomic_write_bytes(path, payload):
    """Write ``payload`` to ``path`` through a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_dataset(batches):
    if not batches:
        raise ValueError("cannot save an empty dataset")
    dims = batches[0].dims
    if any(b.dims != dims for b in batches):
        raise ValueError("all batches in a dataset must share dims")
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, dims.batch, dims.n_ues,
                          dims.m_rx, dims.k_subcarriers, len(batches))
    data = np.stack([b.data for b in batches])
    pairs = np.empty(data.shape + (2,), dtype="<f4")
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    return header + pairs.tobytes()


def decode_dataset(payload):
    if len(payload) < _HEADER.size:
        raise DatasetFormatError("truncated header")
    magic, version, b, n, m, k, count = _HEADER.unpack_from(payload)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    if min(b, n, m, k, count) < 1 or max(b, n, m, k, count) > _MAX_DIM:
        raise DatasetFormatError("dimension out of range")
    expected = count * b * n * m * k * 2 * 4
    body = memoryview(payload)[_HEADER.size:]
    if len(body) != expected:
        raise DatasetFormatError(
            f"expected {expected} payload bytes, found {len(body)}")
    try:
        dims = SystemDims(n, m, k, b)
    except ConfigurationError as exc:
        raise DatasetFormatError(str(exc)) from None
    pairs = np.frombuffer(body, dtype="<f4").reshape((count,) + dims.shape + (2,))
    data = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    return [ChannelBatch(dims, data[i]) for i in range(count)]


def save_dataset(batches, path):
    atomic_write_bytes(path, encode_dataset(batches))


def load_dataset(path):
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())
