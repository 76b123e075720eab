import numpy as np
import pytest
from scipy import stats
from scipy.special import j0

from cumsig.channel import (
    CHANNEL_TAGS,
    ChannelRealization,
    add_awgn,
    apply_channel,
    draw_channel,
    draw_doppler_track,
    draw_flat_block,
    draw_turin_taps,
)
from cumsig.modem import SAMPLE_RATE, SampleBlock


@pytest.fixture(scope="module")
def flat_gains():
    rng = np.random.default_rng(11)
    return np.array([draw_flat_block(rng).values[0] for _ in range(100_000)])


def test_flat_block_unit_power(flat_gains):
    assert 0.98 <= np.mean(np.abs(flat_gains) ** 2) <= 1.02


def test_flat_block_rayleigh_envelope(flat_gains):
    ks = stats.kstest(np.abs(flat_gains), stats.rayleigh(scale=np.sqrt(0.5)).cdf)
    assert ks.statistic < 0.01


def test_flat_block_uniform_phase(flat_gains):
    assert abs(np.mean(flat_gains / np.abs(flat_gains))) < 0.02


def test_turin_tap_count_and_unit_energy():
    rng = np.random.default_rng(5)
    draws = [draw_turin_taps(rng) for _ in range(2000)]
    L = np.array([d.L for d in draws])
    assert 8 <= L.mean() <= 12
    assert all(abs(np.sum(np.abs(d.values) ** 2) - 1) < 1e-12 for d in draws)
    assert all(d.kind == "taps" and d.values[0] != 0 and d.values[-1] != 0 for d in draws)


def test_turin_single_path_without_threshold_is_one_tap():
    h = draw_turin_taps(np.random.default_rng(0), arrivals=0.0, ripple_floor=0.0)
    assert h.L == 1
    assert abs(h.values[0]) == pytest.approx(1.0, abs=1e-15)


def test_turin_reproducible():
    a = draw_turin_taps(np.random.default_rng(9)).values
    b = draw_turin_taps(np.random.default_rng(9)).values
    assert np.array_equal(a, b)


def test_doppler_zero_is_constant():
    h = draw_doppler_track(np.random.default_rng(1), 0.0, 500).values
    assert np.all(h == h[0])


def test_doppler_autocorrelation_matches_bessel():
    rng = np.random.default_rng(2)
    n, fd, reps = 1920, 200.0, 1000
    lags = np.arange(0, 120, 6)
    acc = np.zeros(len(lags), dtype=complex)
    for _ in range(reps):
        h = draw_doppler_track(rng, fd, n, SAMPLE_RATE).values
        acc += [np.mean(h[k:] * np.conj(h[: n - k])) for k in lags]
    acc /= reps
    expected = j0(2 * np.pi * fd * lags / SAMPLE_RATE)
    assert np.max(np.abs(acc.real - expected)) < 0.05
    half_period = int(round(SAMPLE_RATE / (2 * fd)))  # 48 samples
    assert acc[lags == half_period][0].real < 0.6


def test_doppler_per_sample_power():
    rng = np.random.default_rng(3)
    p = np.mean([np.abs(draw_doppler_track(rng, 70.0, 64).values) ** 2 for _ in range(10_000)], axis=0)
    assert np.all((p > 0.95) & (p < 1.05))
    assert 0.98 <= p.mean() <= 1.02


def test_doppler_rejects_bad_args():
    with pytest.raises(ValueError):
        draw_doppler_track(np.random.default_rng(0), -1.0, 10)
    with pytest.raises(ValueError):
        draw_doppler_track(np.random.default_rng(0), 5.0, 0)


@pytest.mark.parametrize("tag", CHANNEL_TAGS)
def test_draw_channel_kinds(tag):
    ch = draw_channel(tag, np.random.default_rng(0), 30)
    kind = {"ideal": "scalar", "awgn": "scalar", "clarke": "scalar", "turin": "taps"}.get(tag, "track")
    assert ch.kind == kind
    if kind == "track":
        assert ch.L == 30


def test_draw_channel_unknown():
    with pytest.raises(ValueError, match="valid"):
        draw_channel("rician", np.random.default_rng(0), 10)


def test_apply_channel_examples():
    x = np.arange(1, 6) + 0j
    assert np.array_equal(apply_channel(x, ChannelRealization.identity()).samples, x)
    assert np.array_equal(apply_channel(x, ChannelRealization("taps", np.array([1.0 + 0j]))).samples, x)
    imp = np.zeros(5, dtype=complex)
    imp[0] = 1
    out = apply_channel(imp, ChannelRealization("taps", np.array([0, 1], dtype=complex))).samples
    assert np.array_equal(out, [0, 1, 0, 0, 0])
    with pytest.raises(ValueError):
        apply_channel(x, ChannelRealization("track", np.ones(4, dtype=complex)))


@pytest.mark.parametrize("tag", ["clarke", "turin", "clarke200"])
def test_apply_channel_linear(tag):
    rng = np.random.default_rng(4)
    ch = draw_channel(tag, rng, 64)
    x, y = rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64))
    a, b = 0.3 - 2j, 1.7 + 0.1j
    lhs = apply_channel(a * x + b * y, ch).samples
    rhs = a * apply_channel(x, ch).samples + b * apply_channel(y, ch).samples
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_awgn_infinite_snr_is_identity():
    x = SampleBlock(np.ones(9, dtype=complex))
    y, noise = add_awgn(x, np.inf, np.random.default_rng(0))
    assert y is x and noise.sigma_n_sq == 0


def test_awgn_zero_db_sample_reference():
    x = SampleBlock(np.full(1_000_000, 2.0 + 0j))
    y, noise = add_awgn(x, 0.0, np.random.default_rng(1), reference="sample")
    assert noise.sigma_n_sq == pytest.approx(4.0)
    n = y.samples - x.samples
    assert 0.995 * 4 <= np.mean(np.abs(n) ** 2) <= 1.005 * 4
    assert np.var(n.real) == pytest.approx(2.0, rel=0.01)
    assert np.var(n.imag) == pytest.approx(2.0, rel=0.01)


def test_awgn_symbol_reference_scales_by_sps():
    x = SampleBlock(np.ones(300, dtype=complex), samples_per_symbol=3)
    _, per_symbol = add_awgn(x, 10.0, np.random.default_rng(0))
    _, per_sample = add_awgn(x, 10.0, np.random.default_rng(0), reference="sample")
    assert per_symbol.sigma_n_sq == pytest.approx(3 * per_sample.sigma_n_sq)
    assert per_sample.sigma_n_sq == pytest.approx(0.1)
    with pytest.raises(ValueError):
        add_awgn(x, 10.0, np.random.default_rng(0), reference="bit")
