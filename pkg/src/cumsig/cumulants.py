"""Sample moments, joint cumulants and their energy/phase normalization.

Moments are indexed ``(n, q)``: ``m[n, q] = E[r**(n-q) * conj(r)**q]``. Only
``q <= n // 2`` is stored; the remaining ones are conjugates,
``m[n, n-q] = conj(m[n, q])``.

Two cumulant evaluators are provided. :func:`cumulant_partition` is the
general moment-to-cumulant formula summed over every set partition of the
``n`` indices and is used as the reference. :func:`cumulant_closed` evaluates
hand-expanded polynomials for the twenty signature cumulants, valid when the
mean and every odd-order moment vanish.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_ORDER = 10

#: the twenty (n, q) pairs of a waveform signature, in feature order
WS_PAIRS: tuple[tuple[int, int], ...] = tuple((n, q) for n in range(2, MAX_ORDER + 1, 2) for q in range(n // 2 + 1))


class DegenerateEnergyError(ArithmeticError):
    """Raised when ``kappa21 - sigma_n_sq`` is not positive."""


def moment_pairs(max_order: int = MAX_ORDER, even_only: bool = False) -> list[tuple[int, int]]:
    step = 2 if even_only else 1
    start = 2 if even_only else 1
    return [(n, q) for n in range(start, max_order + 1, step) for q in range(n // 2 + 1)]


@dataclass
class MomentTable(Mapping):
    """Estimated moments ``m[n, q]``; values are scalars or arrays over a batch of blocks.

    Indexing with ``q > n // 2`` returns the conjugate of the stored
    ``(n, n - q)`` entry. Missing orders raise ``KeyError``.
    """

    entries: dict[tuple[int, int], np.ndarray | complex]
    sample_count: int = 0

    def __getitem__(self, key: tuple[int, int]):
        n, q = key
        if 2 * q <= n:
            return self.entries[(n, q)]
        return np.conj(self.entries[(n, n - q)])

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def with_zero_odd(self) -> MomentTable:
        """Copy in which every odd-order moment, including the mean, is zero."""
        zeroed = {k: (v if k[0] % 2 == 0 else v * 0) for k, v in self.entries.items()}
        return MomentTable(zeroed, self.sample_count)

    @classmethod
    def from_constellation(cls, points: np.ndarray, max_order: int = MAX_ORDER) -> MomentTable:
        """Exact moments of a uniform discrete alphabet."""
        p = np.asarray(points, dtype=complex)
        entries = {(n, q): complex(np.mean(p ** (n - q) * np.conj(p) ** q)) for n, q in moment_pairs(max_order)}
        return cls(entries, len(p))


def estimate_moments(samples, max_order: int = MAX_ORDER, even_only: bool = False) -> MomentTable:
    """Sample moments ``(1/N) sum r**(n-q) conj(r)**q`` for every ``n <= max_order``.

    ``samples`` may be 1-D (one block) or 2-D (one block per row); in the
    batched case every table entry is an array over rows. Sums are carried in
    extended precision (``clongdouble``) since tenth-order products span many
    decades.
    """
    r = np.asarray(getattr(samples, "samples", samples), dtype=complex)
    if r.shape[-1] == 0:
        raise ValueError("cannot estimate moments of an empty block")
    if max_order < 1 or max_order > MAX_ORDER:
        raise ValueError(f"max_order must be in 1..{MAX_ORDER}")

    # r**k and |r|**(2j), built incrementally
    pow_r = [np.ones_like(r), r]
    for _ in range(2, max_order + 1):
        pow_r.append(pow_r[-1] * r)
    mag2 = (r.real * r.real + r.imag * r.imag).astype(complex)
    pow_m = [np.ones_like(r), mag2]
    for _ in range(2, max_order // 2 + 1):
        pow_m.append(pow_m[-1] * mag2)

    n_samples = r.shape[-1]
    entries = {}
    for n, q in moment_pairs(max_order, even_only):
        prod = pow_r[n - 2 * q] * pow_m[q]
        acc = np.sum(prod, axis=-1, dtype=np.clongdouble) / n_samples
        val = acc.astype(complex)
        entries[(n, q)] = complex(val) if np.ndim(val) == 0 else val
    return MomentTable(entries, n_samples)


# ---------------------------------------------------------------------------
# set-partition oracle


@lru_cache(maxsize=None)
def _restricted_growth_strings(n: int) -> np.ndarray:
    """All set partitions of ``range(n)`` as block-label rows (Bell(n) x n)."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], top: int) -> None:
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for b in range(top + 2):
            prefix.append(b)
            rec(prefix, max(top, b))
            prefix.pop()

    rec([], -1)
    return np.array(out, dtype=np.int8).reshape(len(out), n)


Monomial = tuple[tuple[int, int], ...]


@lru_cache(maxsize=None)
def partition_coefficients(n: int, q: int) -> dict[Monomial, int]:
    """Integer coefficients of the moment polynomial for ``kappa[n, q]``.

    Keys are sorted tuples of ``(order, conjugates)`` moment factors; a
    factor with more conjugates than half its order stands for the conjugate
    of a stored moment. Set partitions that yield the same product of
    moments are merged, so ``(3, 0)`` gives
    ``{((3,0),): 1, ((1,0),(2,0)): -3, ((1,0),(1,0),(1,0)): 2}``.
    """
    if n < 1 or n > MAX_ORDER:
        raise NotImplementedError(f"cumulant order {n} unsupported (1..{MAX_ORDER})")
    if q < 0 or 2 * q > n:
        raise ValueError(f"q must satisfy 0 <= q <= n//2, got n={n}, q={q}")

    rgs = _restricted_growth_strings(n).astype(np.int64)
    conj = np.arange(n) >= n - q
    onehot = rgs[:, :, None] == np.arange(n)[None, None, :]  # partition, index, block
    sizes = onehot.sum(axis=1)
    conjs = (onehot & conj[None, :, None]).sum(axis=1)
    # encode each block as one integer; empty blocks encode to 0 and sort first
    codes = np.sort(sizes * (MAX_ORDER + 1) + conjs, axis=1)
    nblocks = (sizes > 0).sum(axis=1)
    keys, inverse = np.unique(codes, axis=0, return_inverse=True)
    weights = np.array([0] + [(-1) ** (k - 1) * math.factorial(k - 1) for k in range(1, n + 1)], dtype=np.int64)
    totals = np.zeros(len(keys), dtype=np.int64)
    np.add.at(totals, inverse.ravel(), weights[nblocks])

    table: dict[Monomial, int] = {}
    for key, coeff in zip(keys, totals):
        if coeff == 0:
            continue
        mono = tuple(sorted((int(c) // (MAX_ORDER + 1), int(c) % (MAX_ORDER + 1)) for c in key if c))
        table[mono] = table.get(mono, 0) + int(coeff)
    return table


def cumulant_partition(moments: Mapping, n: int, q: int, zero_odd: bool = False):
    """Joint cumulant ``kappa[n, q]`` summed over all set partitions of the indices.

    ``moments`` must hold every order up to ``n`` (odd ones included) unless
    ``zero_odd`` is set, in which case terms containing an odd-order factor
    are dropped.
    """
    total = 0
    for mono, coeff in partition_coefficients(n, q).items():
        if zero_odd and any(k % 2 for k, _ in mono):
            continue
        term = coeff
        for factor in mono:
            term = term * moments[factor]
        total = total + term
    return total


# ---------------------------------------------------------------------------
# closed forms for the signature cumulants (zero mean, zero odd moments)


def closed_form_cumulants(m: Mapping) -> dict[tuple[int, int], object]:
    """All twenty signature cumulants from even-order moments, keyed by ``(n, q)``.

    Terms are grouped by partition size with the Moebius weights 1, -1, 2, -6, 24
    pulled out front.
    """
    c = np.conj
    m20, m21 = m[2, 0], m[2, 1]
    m40, m41, m42 = m[4, 0], m[4, 1], m[4, 2]
    m60, m61, m62, m63 = m[6, 0], m[6, 1], m[6, 2], m[6, 3]
    m80, m81, m82, m83, m84 = (m[8, q] for q in range(5))
    m100, m101, m102, m103, m104, m105 = (m[10, q] for q in range(6))
    a20 = abs(m20) ** 2  # |m20|^2
    k: dict[tuple[int, int], object] = {}

    k[2, 0] = m20
    k[2, 1] = m21
    k[4, 0] = m40 - 3 * m20**2
    k[4, 1] = m41 - 3 * m20 * m21
    k[4, 2] = m42 - (a20 + 2 * m21**2)

    k[6, 0] = m60 - 15 * m20 * m40 + 2 * (15 * m20**3)
    k[6, 1] = m61 - (10 * m20 * m41 + 5 * m21 * m40) + 2 * (15 * m20**2 * m21)
    k[6, 2] = (
        m62
        - (6 * m20 * m42 + 8 * m21 * m41 + c(m20) * m40)
        + 2 * (3 * a20 * m20 + 12 * m21**2 * m20)
    )
    k[6, 3] = (
        m63
        - (3 * m20 * c(m41) + 3 * c(m20) * m41 + 9 * m21 * m42)
        + 2 * (9 * a20 * m21 + 6 * m21**3)
    )

    k[8, 0] = m80 - (28 * m20 * m60 + 35 * m40**2) + 2 * (210 * m20**2 * m40) - 6 * (105 * m20**4)
    k[8, 1] = (
        m81
        - (21 * m20 * m61 + 7 * m21 * m60 + 35 * m40 * m41)
        + 2 * (105 * m20**2 * m41 + 105 * m20 * m21 * m40)
        - 6 * (105 * m20**3 * m21)
    )
    k[8, 2] = (
        m82
        - (15 * m20 * m62 + 12 * m21 * m61 + c(m20) * m60 + 15 * m40 * m42 + 20 * m41**2)
        + 2 * (45 * m20**2 * m42 + 120 * m20 * m21 * m41 + 15 * a20 * m40 + 30 * m21**2 * m40)
        - 6 * (15 * m20**2 * a20 + 90 * m20**2 * m21**2)
    )
    k[8, 3] = (
        m83
        - (10 * m20 * m63 + 15 * m21 * m62 + 3 * c(m20) * m61 + 5 * m40 * c(m41) + 30 * m41 * m42)
        + 2 * (
            15 * m20**2 * c(m41) + 90 * m20 * m21 * m42 + 30 * a20 * m41
            + 15 * c(m20) * m21 * m40 + 60 * m21**2 * m41
        )
        - 6 * (45 * a20 * m20 * m21 + 60 * m20 * m21**3)
    )
    k[8, 4] = (
        m84
        - (
            6 * m20 * c(m62) + 16 * m21 * m63 + 6 * c(m20) * m62
            + abs(m40) ** 2 + 16 * abs(m41) ** 2 + 18 * m42**2
        )
        + 2 * (
            3 * m20**2 * c(m40) + 48 * m20 * m21 * c(m41) + 36 * a20 * m42
            + 72 * m21**2 * m42 + 48 * c(m20) * m21 * m41 + 3 * c(m20) ** 2 * m40
        )
        - 6 * (9 * a20**2 + 72 * a20 * m21**2 + 24 * m21**4)
    )

    k[10, 0] = (
        m100
        - (45 * m20 * m80 + 210 * m40 * m60)
        + 2 * (630 * m20**2 * m60 + 1575 * m20 * m40**2)
        - 6 * (3150 * m20**3 * m40)
        + 24 * (945 * m20**5)
    )
    k[10, 1] = (
        m101
        - (36 * m20 * m81 + 9 * m21 * m80 + 126 * m40 * m61 + 84 * m41 * m60)
        + 2 * (378 * m20**2 * m61 + 252 * m20 * m21 * m60 + 1260 * m20 * m40 * m41 + 315 * m21 * m40**2)
        - 6 * (1260 * m20**3 * m41 + 1890 * m20**2 * m21 * m40)
        + 24 * (945 * m20**4 * m21)
    )
    k[10, 2] = (
        m102
        - (
            28 * m20 * m82 + 70 * m40 * m62 + 16 * m21 * m81
            + 112 * m41 * m61 + c(m20) * m80 + 28 * m42 * m60
        )
        + 2 * (
            210 * m20**2 * m62 + 420 * m20 * m40 * m42 + 28 * a20 * m60
            + 35 * c(m20) * m40**2 + 560 * m21 * m40 * m41 + 56 * m21**2 * m60
            + 336 * m20 * m21 * m61 + 560 * m20 * m41**2
        )
        - 6 * (
            1680 * m20**2 * m21 * m41 + 210 * m20 * a20 * m40
            + 420 * m20**3 * m42 + 840 * m20 * m21**2 * m40
        )
        + 24 * (105 * m20**3 * a20 + 840 * m20**3 * m21**2)
    )
    k[10, 3] = (
        m103
        - (
            21 * m20 * m83 + 35 * m40 * m63 + 7 * c(m41) * m60 + 3 * c(m20) * m81
            + 63 * m42 * m61 + 21 * m21 * m82 + 105 * m41 * m62
        )
        + 2 * (
            105 * m20**2 * m63 + 315 * m20 * m21 * m62 + 63 * a20 * m61
            + 126 * m21**2 * m61 + 21 * c(m20) * m21 * m60 + 105 * m20 * m40 * c(m41)
            + 630 * m20 * m41 * m42 + 315 * m21 * m40 * m42 + 420 * m21 * m41**2
            + 105 * c(m20) * m40 * m41
        )
        - 6 * (
            105 * m20**3 * c(m41) + 945 * m20**2 * m21 * m42 + 315 * m20 * a20 * m41
            + 1260 * m20 * m21**2 * m41 + 315 * a20 * m21 * m40 + 210 * m21**3 * m40
        )
        + 24 * (315 * m20**2 * a20 * m21 + 630 * m20**2 * m21**3)
    )
    k[10, 4] = (
        m104
        - (
            15 * m20 * m84 + 15 * m40 * c(m62) + 24 * m21 * m83 + 80 * m41 * m63
            + 6 * c(m20) * m82 + 90 * m42 * m62 + 24 * c(m41) * m61 + c(m40) * m60
        )
        + 2 * (
            3 * c(m20) ** 2 * m60 + 72 * c(m20) * m21 * m61 + 180 * m21**2 * m62
            + 90 * a20 * m62 + 240 * m20 * m21 * m63 + 45 * m20**2 * c(m62)
            + 90 * c(m20) * m40 * m42 + 120 * c(m20) * m41**2 + 120 * m21 * m40 * c(m41)
            + 720 * m21 * m41 * m42 + 240 * m20 * abs(m41) ** 2 + 15 * m20 * abs(m40) ** 2
            + 270 * m20 * m42**2
        )
        - 6 * (
            15 * m20**3 * c(m40) + 360 * m20**2 * m21 * c(m41) + 270 * m20 * a20 * m42
            + 720 * a20 * m21 * m41 + 480 * m21**3 * m41 + 180 * c(m20) * m21**2 * m40
            + 45 * a20 * c(m20) * m40 + 1080 * m20 * m21**2 * m42
        )
        + 24 * (45 * m20 * a20**2 + 540 * m20 * a20 * m21**2 + 360 * m20 * m21**4)
    )
    k[10, 5] = (
        m105
        - (
            10 * m20 * c(m83) + 10 * c(m20) * m83 + 25 * m21 * m84
            + 5 * m40 * c(m61) + 5 * c(m40) * m61 + 50 * m41 * c(m62)
            + 50 * c(m41) * m62 + 100 * m42 * m63
        )
        + 2 * (
            15 * m20**2 * c(m61) + 15 * c(m20) ** 2 * m61 + 100 * a20 * m63
            + 150 * m20 * m21 * c(m62) + 150 * c(m20) * m21 * m62 + 200 * m21**2 * m63
            + 50 * m20 * c(m40) * m41 + 50 * c(m20) * m40 * c(m41)
            + 300 * m20 * c(m41) * m42 + 300 * c(m20) * m41 * m42
            + 25 * m21 * abs(m40) ** 2 + 400 * m21 * abs(m41) ** 2 + 450 * m21 * m42**2
        )
        - 6 * (
            75 * c(m20) ** 2 * m21 * m40 + 75 * m20**2 * m21 * c(m40)
            + 150 * m20 * a20 * c(m41) + 150 * c(m20) * a20 * m41
            + 900 * a20 * m21 * m42 + 600 * m20 * m21**2 * c(m41)
            + 600 * c(m20) * m21**2 * m41 + 600 * m21**3 * m42
        )
        + 24 * (120 * m21**5 + 600 * a20 * m21**3 + 225 * a20**2 * m21)
    )
    return k


def cumulant_closed(moments: Mapping, n: int, q: int):
    """Closed-form ``kappa[n, q]`` for one of the twenty signature pairs."""
    if (n, q) not in WS_PAIRS:
        raise ValueError(f"({n}, {q}) is not a signature cumulant; valid pairs: {WS_PAIRS}")
    return closed_form_cumulants(moments)[n, q]


def normalize(raw, kappa21, sigma_n_sq: float, n: int):
    """``|raw / (kappa21 - sigma_n_sq) ** (n / 2)|``.

    Works elementwise on arrays. Raises :class:`DegenerateEnergyError` when
    any signal-energy estimate ``kappa21 - sigma_n_sq`` is not positive.
    """
    energy = np.real(kappa21) - sigma_n_sq
    if np.any(energy <= 0):
        raise DegenerateEnergyError(
            f"kappa21 - sigma_n^2 = {np.min(energy):.4g} <= 0; noise power exceeds the measured power"
        )
    out = np.abs(raw) / energy ** (n / 2)
    return float(out) if np.ndim(out) == 0 else out


def normalized_cumulants(moments: Mapping, sigma_n_sq: float = 0.0) -> np.ndarray:
    """Twenty normalized cumulant magnitudes in signature order (last axis)."""
    k = closed_form_cumulants(moments)
    kappa21 = k[2, 1]
    return np.stack([np.asarray(normalize(k[n, q], kappa21, sigma_n_sq, n)) for n, q in WS_PAIRS], axis=-1)


def theoretical_ws(scheme) -> np.ndarray:
    """Exact noise-free signature of a modulation from its constellation moments."""
    from .modem import constellation

    moments = MomentTable.from_constellation(constellation(scheme).points)
    return normalized_cumulants(moments.with_zero_odd(), 0.0)
