"""Waveform signatures, labeled signature databases, PCA reduction and L1 nearest-centroid classification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .channel import CHANNEL_TAGS, add_awgn, apply_channel, draw_channel
from .cumulants import WS_PAIRS, DegenerateEnergyError, estimate_moments, normalized_cumulants
from .modem import SAMPLES_PER_SYMBOL, SYMBOLS_PER_BLOCK, ModulationScheme, generate_symbols, parse_scheme, pulse_shape

log = logging.getLogger(__name__)

WS_DIM = len(WS_PAIRS)
WS_LABELS = tuple(f"k{n}_{q}" for n, q in WS_PAIRS)

DEFAULT_DB_COUNT = 2000
DEFAULT_DB_SNR = 20.0


def compute_ws(samples, sigma_n_sq=0.0, on_degenerate: str = "raise") -> np.ndarray:
    """Twenty-entry normalized cumulant signature of a block (or of each row of a 2-D batch).

    ``sigma_n_sq`` is the known per-sample noise variance (scalar or one per
    row). With ``on_degenerate="zero"`` a block whose measured power does not
    exceed the noise power yields an all-zero signature instead of raising
    :class:`DegenerateEnergyError`.
    """
    r = np.asarray(getattr(samples, "samples", samples), dtype=complex)
    if r.shape[-1] < 2:
        raise ValueError("a signature needs at least 2 samples")
    moments = estimate_moments(r, even_only=True)
    if on_degenerate == "raise":
        return normalized_cumulants(moments, sigma_n_sq)
    if on_degenerate != "zero":
        raise ValueError("on_degenerate must be 'raise' or 'zero'")
    sig = np.broadcast_to(np.asarray(sigma_n_sq, dtype=float), np.shape(moments[2, 1]))
    bad = np.real(moments[2, 1]) <= sig
    if not np.any(bad):
        return normalized_cumulants(moments, sigma_n_sq)
    log.info("degenerate signal energy in %d block(s); signature set to zero", int(np.sum(bad)))
    if np.ndim(bad) == 0:
        return np.zeros(WS_DIM)
    # push the bad rows' noise estimate out of the way, then blank them
    safe_sigma = np.where(bad, 0.0, sig)
    safe = {k: np.where(bad, 1.0, v) if k == (2, 1) else v for k, v in moments.entries.items()}
    out = normalized_cumulants(type(moments)(safe, moments.sample_count), safe_sigma)
    out[bad] = 0.0
    return out


@dataclass
class SignatureDatabase:
    """Signatures of ``count`` independent blocks of one modulation on one channel."""

    modulation: ModulationScheme
    channel_tag: str
    rows: np.ndarray
    build_snr_db: float = DEFAULT_DB_SNR
    seed: int = 0

    def __post_init__(self) -> None:
        self.modulation = parse_scheme(self.modulation)
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, WS_DIM)

    def __len__(self) -> int:
        return self.rows.shape[0]


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(row,)))


def simulate_block(
    scheme: ModulationScheme,
    channel_tag: str,
    snr_db: float,
    rng: np.random.Generator,
    n_symbols: int = SYMBOLS_PER_BLOCK,
    sps: int = SAMPLES_PER_SYMBOL,
    snr_reference: str = "symbol",
):
    """One received block: symbols, rectangular pulse, channel, AWGN. Returns ``(samples, sigma_n_sq)``."""
    x = pulse_shape(generate_symbols(scheme, n_symbols, rng), sps)
    ch = draw_channel(channel_tag, rng, len(x))
    y = apply_channel(x, ch)
    if channel_tag == "ideal":
        return y.samples, 0.0
    y, noise = add_awgn(y, snr_db, rng, snr_reference)
    return y.samples, noise.sigma_n_sq


def build_database(
    scheme: ModulationScheme | str,
    channel_tag: str,
    count: int = DEFAULT_DB_COUNT,
    snr_db: float = DEFAULT_DB_SNR,
    seed: int = 0,
    n_symbols: int = SYMBOLS_PER_BLOCK,
    chunk: int = 250,
    snr_reference: str = "symbol",
) -> SignatureDatabase:
    """Simulate ``count`` blocks and stack their signatures.

    ``"ideal"`` means unit channel and no noise whatever ``snr_db`` says.
    Row ``i`` uses its own generator derived from ``(seed, i)``, so any
    prefix of a database is reproducible on its own.
    """
    scheme = parse_scheme(scheme)
    if channel_tag not in CHANNEL_TAGS:
        raise ValueError(f"unknown channel {channel_tag!r}; valid: {', '.join(CHANNEL_TAGS)}")
    if channel_tag == "ideal":
        snr_db = math.inf
    rows = np.empty((count, WS_DIM))
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        blocks, sigmas = zip(*(simulate_block(scheme, channel_tag, snr_db, row_rng(seed, i), n_symbols, snr_reference=snr_reference) for i in range(start, stop)))
        rows[start:stop] = compute_ws(np.stack(blocks), np.array(sigmas), on_degenerate="zero")
    return SignatureDatabase(scheme, channel_tag, rows, snr_db, seed)


def centroid(db: SignatureDatabase | np.ndarray) -> np.ndarray:
    rows = db.rows if isinstance(db, SignatureDatabase) else np.asarray(db, dtype=float)
    if rows.shape[0] == 0:
        raise ValueError("centroid of an empty database")
    return rows.mean(axis=0)


# ---------------------------------------------------------------------------
# PCA reduction


class RankError(ValueError):
    def __init__(self, rank: int, rho: int):
        super().__init__(f"data has rank {rank}, cannot extract {rho} loading vectors")
        self.rank = rank
        self.rho = rho


@dataclass(frozen=True)
class ReductionMatrix:
    loadings: np.ndarray  # dim x rho, orthonormal columns
    source_tag: str = ""
    explained: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rho(self) -> int:
        return self.loadings.shape[1]

    @property
    def dim(self) -> int:
        return self.loadings.shape[0]


def pca_fit(stacked: np.ndarray, rho: int, source_tag: str = "", rtol: float = 1e-10) -> ReductionMatrix:
    """Top-``rho`` principal directions of the row-stacked signatures.

    Columns are mean-centered first; loadings come from the SVD of the
    centered matrix, ordered by singular value, each flipped so that its
    largest-magnitude entry is positive. ``explained`` holds the variance
    fraction of each kept direction.
    """
    X = np.asarray(stacked, dtype=float)
    n, dim = X.shape
    if not 1 <= rho <= dim:
        raise ValueError(f"rho must be in 1..{dim}, got {rho}")
    if n < 2:
        raise RankError(0, rho)
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    if rank < rho:
        raise RankError(rank, rho)
    W = vt[:rho].T.copy()
    flip = np.sign(W[np.argmax(np.abs(W), axis=0), np.arange(rho)])
    W *= flip
    var = s**2
    return ReductionMatrix(W, source_tag, var[:rho] / var.sum())


def reduce(ws: np.ndarray, w: ReductionMatrix | np.ndarray) -> np.ndarray:
    """Project raw signatures (no centering) onto the loading columns: ``ws @ W``."""
    W = w.loadings if isinstance(w, ReductionMatrix) else np.asarray(w)
    ws = np.asarray(ws, dtype=float)
    if ws.shape[-1] != W.shape[0]:
        raise ValueError(f"signature length {ws.shape[-1]} does not match reduction input {W.shape[0]}")
    return ws @ W


# ---------------------------------------------------------------------------
# nearest-centroid classification


class Decision(NamedTuple):
    label: ModulationScheme
    distances: dict
    tie: bool


@dataclass(frozen=True)
class ClassifierModel:
    """Centroids per modulation, optionally living in a PCA-reduced space.

    With a ``reduction`` set, ``centroids`` are the means of the projected
    database rows and incoming signatures are projected before matching.
    """

    labels: tuple[ModulationScheme, ...]
    centroids: np.ndarray
    reduction: ReductionMatrix | None = None

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        if c.shape[0] != len(self.labels):
            raise ValueError("one centroid per label required")
        expected = self.reduction.rho if self.reduction is not None else c.shape[1]
        if c.shape[1] != expected:
            raise ValueError(f"centroid dimension {c.shape[1]} inconsistent with reduction rank {expected}")
        object.__setattr__(self, "centroids", c)

    @classmethod
    def from_databases(cls, dbs: Sequence[SignatureDatabase], reduction: ReductionMatrix | None = None) -> ClassifierModel:
        labels = tuple(db.modulation for db in dbs)
        if reduction is None:
            cents = np.stack([centroid(db) for db in dbs])
        else:
            cents = np.stack([centroid(reduce(db.rows, reduction)) for db in dbs])
        return cls(labels, cents, reduction)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _nearest(point: np.ndarray, labels, centroids: np.ndarray) -> Decision:
    point = np.asarray(point, dtype=float)
    if point.shape[-1] != centroids.shape[1]:
        raise ValueError(f"signature dimension {point.shape[-1]} != model dimension {centroids.shape[1]}")
    d = np.abs(centroids - point).sum(axis=1)
    best = int(np.argmin(d))  # first index wins ties
    tie = int(np.sum(d == d[best])) > 1
    return Decision(labels[best], dict(zip(labels, d.tolist())), tie)


def classify_l1(ws: np.ndarray, model: ClassifierModel) -> Decision:
    """Label of the centroid nearest to ``ws`` in L1 distance, in the model's own space."""
    if model.reduction is not None:
        return classify_reduced(ws, model)
    return _nearest(ws, model.labels, model.centroids)


def classify_reduced(ws: np.ndarray, model: ClassifierModel) -> Decision:
    """Project a full signature with the model's reduction, then L1 nearest centroid."""
    if model.reduction is None:
        raise ValueError("model has no reduction matrix")
    return _nearest(reduce(ws, model.reduction), model.labels, model.centroids)
