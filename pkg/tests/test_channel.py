import numpy as np
import pytest
from scipy import stats

from nnbf.channel import (
    ConfigurationError,
    DatasetFormatError,
    DelayProfile,
    SystemDims,
    TDL_A_TAPS,
    batch_rng,
    decode_dataset,
    encode_dataset,
    frequency_response,
    generate_batch,
    generate_dataset,
    load_dataset,
    noise_variance,
    save_dataset,
    tap_realization,
    tdl_a,
    toy_profile,
)


def test_tdl_a_profile():
    prof = tdl_a()
    assert prof.num_taps == 23 == len(TDL_A_TAPS)
    assert np.isclose(prof.powers.sum(), 1.0)
    assert np.all(np.diff(prof.delays) >= 0)
    assert np.isclose(prof.delays.max(), 9.6586 * 30e-9)


def test_empty_profile_rejected():
    with pytest.raises(ConfigurationError):
        DelayProfile(())


def test_single_tap_power():
    prof = DelayProfile(((0.0, 0.0),))
    delays, g = tap_realization(prof, np.random.default_rng(0), 100_000)
    assert delays.tolist() == [0.0]
    assert abs(np.mean(np.abs(g) ** 2) - 1.0) < 0.02


def test_total_tap_power_normalized():
    _, g = tap_realization(tdl_a(), np.random.default_rng(1), 100_000)
    assert abs(np.mean(np.sum(np.abs(g) ** 2, axis=-1)) - 1.0) < 0.02


def test_tap_magnitude_is_rayleigh():
    prof = tdl_a()
    _, g = tap_realization(prof, np.random.default_rng(2), 100_000)
    tap = 1                                 # strongest tap after sorting
    power = prof.powers[tap]
    cdf = lambda r: 1.0 - np.exp(-r ** 2 / power)
    ks = stats.kstest(np.abs(g[:, tap]), cdf).statistic
    assert ks < 0.01


def test_frequency_response_zero_delay():
    np.testing.assert_allclose(frequency_response([0.0], [1.0], 12, 30e3), np.ones(12))


def test_frequency_response_full_rotation():
    k, df = 12, 30e3
    h = frequency_response([1.0 / (k * df)], [1.0], k, df)
    expected = np.array([np.exp(-2j * np.pi * kappa / k) for kappa in range(k)])
    np.testing.assert_allclose(h, expected, atol=1e-12)


def test_frequency_response_unit_modulus():
    g = 0.3 - 0.7j
    h = frequency_response([123e-9], [g], 48, 30e3)
    np.testing.assert_allclose(np.abs(h), abs(g), atol=1e-12)


def test_generate_batch_shape_and_determinism():
    dims = SystemDims.from_rb(4, 8, resource_blocks=4, batch=8)
    a = generate_batch(dims, tdl_a(), batch_rng(5, 0, 0))
    b = generate_batch(dims, tdl_a(), batch_rng(5, 0, 0))
    assert a.data.shape == (8, 4, 8, 48)
    np.testing.assert_array_equal(a.data, b.data)
    c = generate_batch(dims, tdl_a(), batch_rng(5, 0, 1))
    assert not np.array_equal(a.data, c.data)


def test_dataset_independent_of_generation_order():
    dims = SystemDims(2, 2, 12, 2)
    full = generate_dataset(dims, toy_profile(), 4, seed=3)
    third = generate_batch(dims, toy_profile(), batch_rng(3, 0, 2))
    np.testing.assert_array_equal(full[2].data, third.data)


def test_channel_second_moment():
    # subcarriers of one link are strongly correlated; count independent links
    dims = SystemDims(4, 8, 12, 3200)
    h = generate_batch(dims, tdl_a(), np.random.default_rng(7)).data
    assert h[..., 0].size >= 100_000
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.02


def test_frequency_coherence():
    dims = SystemDims(4, 8, 48, 200)
    h = generate_batch(dims, tdl_a(), np.random.default_rng(8)).data
    near = abs(np.mean(h[..., 0] * np.conj(h[..., 1])))
    far = abs(np.mean(h[..., 0] * np.conj(h[..., 24])))
    assert near > far


def test_noise_variance():
    assert noise_variance(0) == 1.0
    assert np.isclose(noise_variance(10), 0.1)
    assert abs(noise_variance(-15) - 31.6228) < 1e-4


def test_dataset_round_trip(tmp_path):
    dims = SystemDims(4, 8, 48, 8)
    data = generate_dataset(dims, tdl_a(), 3, seed=0)
    path = tmp_path / "d.nnbf"
    save_dataset(data, path)
    back = load_dataset(path)
    assert len(back) == 3
    for a, b in zip(data, back):
        assert b.dims == dims
        np.testing.assert_array_equal(b.data, a.data.astype(np.complex64))
    # second round trip is bitwise exact
    save_dataset(back, tmp_path / "e.nnbf")
    assert (tmp_path / "d.nnbf").read_bytes() == (tmp_path / "e.nnbf").read_bytes()


def test_dataset_header_layout():
    dims = SystemDims(2, 3, 12, 4)
    payload = encode_dataset(generate_dataset(dims, toy_profile(), 2, seed=0))
    assert payload[:4] == b"NNBF"
    header = np.frombuffer(payload[4:28], dtype="<u4")
    assert header.tolist() == [1, 4, 2, 3, 12, 2]
    assert len(payload) == 28 + 2 * 4 * 2 * 3 * 12 * 8


def test_dataset_bad_magic(tmp_path):
    payload = bytearray(encode_dataset(generate_dataset(SystemDims(1, 1, 12, 1), toy_profile(), 1, 0)))
    payload[:4] = b"XXXX"
    with pytest.raises(DatasetFormatError):
        decode_dataset(bytes(payload))


def test_dataset_truncated_and_bad_dims():
    payload = encode_dataset(generate_dataset(SystemDims(1, 1, 12, 1), toy_profile(), 1, 0))
    with pytest.raises(DatasetFormatError):
        decode_dataset(payload[:-3])
    with pytest.raises(DatasetFormatError):
        decode_dataset(payload[:10])
    huge = bytearray(payload)
    huge[8:12] = (2**31).to_bytes(4, "little")
    with pytest.raises(DatasetFormatError):
        decode_dataset(bytes(huge))


def test_hundred_batch_training_set(tmp_path):
    dims = SystemDims(4, 8, 48, 8)
    path = tmp_path / "train.nnbf"
    save_dataset(generate_dataset(dims, tdl_a(), 100, seed=0), path)
    assert len(load_dataset(path)) == 100
