"""Fading channel draws (flat/block, Turin multipath, Clarke Doppler) and AWGN."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .modem import SAMPLE_PERIOD, SAMPLE_RATE, SampleBlock

N_COMPONENTS = 200

# Turin multipath defaults
TURIN_ARRIVALS = 3.55
TURIN_WINDOW = 63e-6
TURIN_RAYLEIGH_SIGMA2 = 0.05
TURIN_RIPPLE_FLOOR = 0.01

CHANNEL_TAGS = ("ideal", "awgn", "clarke", "turin", "clarke5", "clarke70", "clarke200")


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw.

    ``kind`` is ``"scalar"`` (``values`` has one entry), ``"taps"`` (impulse
    response ``h[0..L-1]``) or ``"track"`` (one gain per sample).
    """

    kind: str
    values: np.ndarray
    redraws: int = 0

    @property
    def L(self) -> int:
        return len(self.values)

    @classmethod
    def identity(cls) -> ChannelRealization:
        return cls("scalar", np.ones(1, dtype=complex))


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    sigma_n_sq: float


def _cn(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex normal draws with total variance ``var``."""
    scale = math.sqrt(var / 2)
    return rng.normal(0.0, scale, size) + 1j * rng.normal(0.0, scale, size)


def draw_flat_block(rng: np.random.Generator, components: int = N_COMPONENTS) -> ChannelRealization:
    """Scalar Rayleigh gain from a sum of ``components`` unit CN draws, scaled to unit power."""
    h = _cn(rng, components).sum() / math.sqrt(components)
    return ChannelRealization("scalar", np.array([h]))


def _turin_once(
    rng: np.random.Generator,
    sample_period: float,
    arrivals: float,
    window: float,
    sigma2: float,
    floor: float,
) -> np.ndarray:
    count = rng.poisson(arrivals)
    delays = np.concatenate(([0.0], np.sort(rng.uniform(0.0, window, count))))
    amps = rng.rayleigh(math.sqrt(sigma2), delays.size) * np.exp(2j * np.pi * rng.uniform(size=delays.size))
    lag = delays / sample_period
    # sinc envelope |a|/(pi x) drops under the floor past x = |a|/(pi floor)
    reach = int(np.ceil(lag.max() + np.abs(amps).max() / (math.pi * floor))) + 2 if floor > 0 else int(np.ceil(lag.max())) + 1
    nu = np.arange(reach)
    contrib = amps[:, None] * np.sinc(nu[None, :] - lag[:, None])
    if floor > 0:
        contrib[np.abs(contrib) < floor] = 0
    return contrib.sum(axis=0)


def draw_turin_taps(
    rng: np.random.Generator,
    sample_period: float = SAMPLE_PERIOD,
    *,
    arrivals: float = TURIN_ARRIVALS,
    window: float = TURIN_WINDOW,
    sigma2: float = TURIN_RAYLEIGH_SIGMA2,
    ripple_floor: float = TURIN_RIPPLE_FLOOR,
) -> ChannelRealization:
    """Frequency-selective taps from Poisson path arrivals, sinc-interpolated to the sample grid.

    A path at delay 0 is always present; ``Poisson(arrivals)`` more arrive
    uniformly over ``[0, window]``. Path gains are Rayleigh(``sigma2``) with
    uniform phase. Each path adds ``a * sinc(nu - delay/Ts)`` at taps
    ``nu >= 0``; single contributions below ``ripple_floor`` in magnitude are
    dropped. The tap vector is trimmed to its nonzero support and scaled to
    unit energy. An all-zero draw is redrawn.
    """
    redraws = 0
    while True:
        h = _turin_once(rng, sample_period, arrivals, window, sigma2, ripple_floor)
        nz = np.flatnonzero(h)
        if nz.size:
            break
        redraws += 1
    h = h[nz[0] : nz[-1] + 1]
    h = h / math.sqrt(np.sum(np.abs(h) ** 2))
    return ChannelRealization("taps", h, redraws)


def draw_doppler_track(
    rng: np.random.Generator,
    max_doppler_hz: float,
    n_samples: int,
    sample_rate_hz: float = SAMPLE_RATE,
    components: int = N_COMPONENTS,
) -> ChannelRealization:
    """Clarke sum-of-sinusoids gain track ``h[nu]`` with unit mean power."""
    if max_doppler_hz < 0:
        raise ValueError("max_doppler_hz must be >= 0")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    alpha = rng.uniform(0.0, 2 * np.pi, components)
    phi = rng.uniform(0.0, 2 * np.pi, components)
    t = np.arange(n_samples) / sample_rate_hz
    if max_doppler_hz == 0:
        h = np.full(n_samples, np.exp(1j * phi).sum() / math.sqrt(components))
    else:
        w = 2 * np.pi * max_doppler_hz * np.cos(alpha)
        h = np.exp(1j * (np.outer(t, w) + phi)).sum(axis=1) / math.sqrt(components)
    return ChannelRealization("track", h)


def draw_channel(tag: str, rng: np.random.Generator, n_samples: int) -> ChannelRealization:
    """Draw one realization of the channel named by ``tag`` (see ``CHANNEL_TAGS``)."""
    if tag in ("ideal", "awgn"):
        return ChannelRealization.identity()
    if tag == "clarke":
        return draw_flat_block(rng)
    if tag == "turin":
        return draw_turin_taps(rng)
    if tag.startswith("clarke") and tag[6:].isdigit():
        return draw_doppler_track(rng, float(tag[6:]), n_samples)
    raise ValueError(f"unknown channel {tag!r}; valid: {', '.join(CHANNEL_TAGS)}")


def apply_channel(samples: SampleBlock | np.ndarray, ch: ChannelRealization) -> SampleBlock:
    """Pass samples through a realization (noise-free); works along the last axis."""
    block = samples if isinstance(samples, SampleBlock) else SampleBlock(np.asarray(samples, dtype=complex))
    x = block.samples
    if ch.kind == "scalar":
        y = ch.values[0] * x
    elif ch.kind == "taps":
        # causal convolution truncated to the input length
        y = lfilter(ch.values, [1.0], x, axis=-1)
    elif ch.kind == "track":
        if ch.values.shape[-1] != x.shape[-1]:
            raise ValueError(f"track length {ch.values.shape[-1]} != block length {x.shape[-1]}")
        y = ch.values * x
    else:
        raise ValueError(f"unknown realization kind {ch.kind!r}")
    return SampleBlock(np.asarray(y, dtype=complex), block.samples_per_symbol, block.sample_period)


def add_awgn(
    samples: SampleBlock | np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    reference: str = "symbol",
) -> tuple[SampleBlock, NoiseSpec]:
    """Add circularly-symmetric CN(0, sigma^2) noise at the given SNR.

    ``P_s`` is the mean sample power of the block itself, so the SNR holds
    per realization. With ``reference="symbol"`` the SNR is E_s/N_0: the
    symbol energy is ``sps * P_s`` and ``sigma^2 = sps * P_s * 10**(-snr/10)``.
    With ``reference="sample"`` it is the per-sample ratio
    ``sigma^2 = P_s * 10**(-snr/10)``. ``snr_db = inf`` adds nothing.
    """
    block = samples if isinstance(samples, SampleBlock) else SampleBlock(np.asarray(samples, dtype=complex), 1)
    if reference not in ("symbol", "sample"):
        raise ValueError("reference must be 'symbol' or 'sample'")
    if math.isinf(snr_db) and snr_db > 0:
        return block, NoiseSpec(snr_db, 0.0)
    x = block.samples
    p_s = float(np.mean(np.abs(x) ** 2))
    if reference == "symbol":
        p_s *= block.samples_per_symbol
    sigma_n_sq = p_s * 10.0 ** (-snr_db / 10.0)
    y = x + _cn(rng, x.shape, sigma_n_sq)
    return SampleBlock(y, block.samples_per_symbol, block.sample_period), NoiseSpec(snr_db, sigma_n_sq)
