"""Unit-power symbol alphabets, i.i.d. symbol sources and rectangular pulse shaping."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SYMBOL_PERIOD = 156.25e-6
SAMPLES_PER_SYMBOL = 3
SAMPLE_PERIOD = SYMBOL_PERIOD / SAMPLES_PER_SYMBOL
SAMPLE_RATE = 1.0 / SAMPLE_PERIOD  # 19.2 kHz
SYMBOLS_PER_BLOCK = 640


class ModulationScheme(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "8PSK"
    PSK16 = "16PSK"
    PAM4 = "4PAM"
    PAM8 = "8PAM"
    PAM16 = "16PAM"
    QAM4 = "4QAM"
    QAM8 = "8QAM"
    QAM16 = "16QAM"
    QAM32 = "32QAM"
    QAM64 = "64QAM"
    QAM128 = "128QAM"
    QAM256 = "256QAM"

    def __str__(self) -> str:
        return self.value

    @property
    def order(self) -> int:
        return len(constellation(self).points)


ALL_SCHEMES: tuple[ModulationScheme, ...] = tuple(ModulationScheme)


def parse_scheme(label: str | ModulationScheme) -> ModulationScheme:
    """Look up a scheme by its serialized label (case-insensitive)."""
    if isinstance(label, ModulationScheme):
        return label
    try:
        return ModulationScheme(label.strip().upper())
    except ValueError:
        valid = ", ".join(s.value for s in ALL_SCHEMES)
        raise ValueError(f"unknown modulation {label!r}; valid labels: {valid}") from None


@dataclass(frozen=True)
class ConstellationSet:
    scheme: ModulationScheme
    points: np.ndarray

    def moment(self, n: int, q: int) -> complex:
        """Exact expectation of x**(n-q) * conj(x)**q under uniform symbols."""
        p = self.points
        return complex(np.mean(p ** (n - q) * np.conj(p) ** q))


@dataclass(frozen=True)
class SymbolBlock:
    scheme: ModulationScheme
    symbols: np.ndarray
    seed: int | None = None


@dataclass(frozen=True)
class SampleBlock:
    samples: np.ndarray
    samples_per_symbol: int = SAMPLES_PER_SYMBOL
    sample_period: float = SAMPLE_PERIOD

    def __len__(self) -> int:
        return self.samples.shape[-1]


def _grid(levels_i: int, levels_q: int) -> np.ndarray:
    i = np.arange(-(levels_i - 1), levels_i, 2, dtype=float)
    q = np.arange(-(levels_q - 1), levels_q, 2, dtype=float)
    ii, qq = np.meshgrid(i, q, indexing="ij")
    return (ii + 1j * qq).ravel()


def _cross(side: int, corner: int) -> np.ndarray:
    # square grid with a corner x corner block removed from each corner
    pts = _grid(side, side)
    edge = side - 2 * corner
    keep = (np.abs(pts.real) <= edge) | (np.abs(pts.imag) <= edge)
    return pts[keep]


def _raw_points(scheme: ModulationScheme) -> np.ndarray:
    S = ModulationScheme
    if scheme in (S.BPSK, S.PSK8, S.PSK16):
        m = {S.BPSK: 2, S.PSK8: 8, S.PSK16: 16}[scheme]
        return np.exp(2j * np.pi * np.arange(m) / m)
    if scheme in (S.QPSK, S.QAM4):
        return _grid(2, 2)
    if scheme in (S.PAM4, S.PAM8, S.PAM16):
        m = int(scheme.value[:-3])
        return np.arange(-(m - 1), m, 2, dtype=float).astype(complex)
    if scheme is S.QAM8:
        return _grid(4, 2)
    if scheme is S.QAM32:
        return _cross(6, 1)
    if scheme is S.QAM128:
        return _cross(12, 2)
    side = {S.QAM16: 4, S.QAM64: 8, S.QAM256: 16}[scheme]
    return _grid(side, side)


@lru_cache(maxsize=None)
def constellation(scheme: ModulationScheme | str) -> ConstellationSet:
    """Canonical point set of ``scheme`` scaled to unit average power.

    PSK points sit on the unit circle starting at angle 0, except QPSK which
    uses the square (+-1 +-j)/sqrt(2) layout shared with 4QAM. PAM lies on
    the real axis. 8QAM is a 4x2 rectangle; 32QAM and 128QAM are cross
    constellations.
    """
    scheme = parse_scheme(scheme)
    pts = _raw_points(scheme)
    # snap sin/cos round-off so the negation symmetry is exact
    pts = np.round(pts.real, 15) + 1j * np.round(pts.imag, 15)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.flags.writeable = False
    return ConstellationSet(scheme, pts)


def generate_symbols(scheme: ModulationScheme | str, count: int, seed: int | np.random.Generator) -> SymbolBlock:
    """Draw ``count`` i.i.d. uniform symbols from the unit-power alphabet."""
    if count < 1:
        raise ValueError("count must be >= 1")
    scheme = parse_scheme(scheme)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = constellation(scheme).points
    idx = rng.integers(0, len(pts), size=count)
    return SymbolBlock(scheme, pts[idx], None if isinstance(seed, np.random.Generator) else int(seed))


def pulse_shape(block: SymbolBlock | np.ndarray, sps: int = SAMPLES_PER_SYMBOL) -> SampleBlock:
    """Rectangular pulse: each symbol becomes ``sps`` samples of ``x / sqrt(sps)``."""
    if sps < 1:
        raise ValueError("sps must be >= 1")
    symbols = block.symbols if isinstance(block, SymbolBlock) else np.asarray(block)
    samples = np.repeat(np.asarray(symbols, dtype=complex) / np.sqrt(sps), sps, axis=-1)
    return SampleBlock(samples, sps, SYMBOL_PERIOD / sps)
