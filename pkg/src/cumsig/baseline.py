"""Single-feature sixth-order cumulant classifier with blind relative channel estimation.

This is the comparison method: a phase-insensitive sixth-order cumulant,
corrected by a multipath factor computed from fourth-order lagged moments,
matched against each candidate's ideal value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .cumulants import DegenerateEnergyError, MomentTable, estimate_moments
from .modem import ModulationScheme, constellation, parse_scheme

METHOD_NAME = "od63"
DEFAULT_LR = 10
UNSTABLE_REFERENCE = 1e-12


class UnstableReferenceError(ArithmeticError):
    """The lag-``f`` self moment is too small to divide by."""


class ClassificationFailure(RuntimeError):
    """No reference lag produced a usable channel estimate."""


def _energy(m: MomentTable, sigma_n_sq: float) -> float:
    e = float(np.real(m[2, 1])) - sigma_n_sq
    if e <= 0:
        raise DegenerateEnergyError(f"kappa21 - sigma_n^2 = {e:.4g} <= 0")
    return e


def modified_k63(moments: MomentTable, sigma_n_sq: float = 0.0) -> float:
    """Sixth-order cumulant with the phase-dependent ``Re{m20 m41*}`` term removed, energy normalized."""
    m20, m21, m42, m63 = moments[2, 0], np.real(moments[2, 1]), np.real(moments[4, 2]), np.real(moments[6, 3])
    num = m63 - 9 * m42 * m21 + 12 * abs(m20) ** 2 * m21 + 12 * m21**3
    return float(num) / _energy(moments, sigma_n_sq) ** 3


def true_k63(moments: MomentTable, sigma_n_sq: float = 0.0) -> float:
    """Energy-normalized sixth-order cumulant with all terms, for comparison with :func:`modified_k63`."""
    m20, m21, m41, m42, m63 = moments[2, 0], np.real(moments[2, 1]), moments[4, 1], np.real(moments[4, 2]), np.real(moments[6, 3])
    num = m63 - 6 * np.real(m20 * np.conj(m41)) - 9 * m42 * m21 + 18 * abs(m20) ** 2 * m21 + 12 * m21**3
    return float(num) / _energy(moments, sigma_n_sq) ** 3


@lru_cache(maxsize=None)
def ideal_k63(scheme: ModulationScheme | str) -> float:
    """Reference value of :func:`modified_k63` from exact constellation moments."""
    pts = constellation(parse_scheme(scheme)).points
    return modified_k63(MomentTable.from_constellation(pts, 6))


@dataclass(frozen=True)
class ChannelTapEstimate:
    taps: np.ndarray
    reference: int

    @property
    def L_R(self) -> int:
        return len(self.taps)


LAGGED_FORMS = ("m42", "m40")


def lagged_m40(samples, L_R: int, form: str = "m42") -> np.ndarray:
    """Fourth-order lagged moment matrix ``M[k, f]`` for lags ``0..L_R-1``.

    ``form="m40"`` is ``mean r[nu-k] * r[nu-f]**3``; ``form="m42"`` (default)
    is ``mean conj(r[nu-k]) * r[nu-f]**2 * conj(r[nu-f])``, which does not
    vanish for constellations with zero ``m40`` and is insensitive to the
    carrier phase. Only ``nu`` with every lag in range is used (no wraparound).
    """
    if form not in LAGGED_FORMS:
        raise ValueError(f"form must be one of {LAGGED_FORMS}, got {form!r}")
    r = np.asarray(getattr(samples, "samples", samples), dtype=complex)
    n = r.shape[-1]
    if L_R < 1:
        raise ValueError("L_R must be >= 1")
    if n <= L_R:
        raise ValueError(f"block length {n} must exceed L_R={L_R}")
    width = n - L_R + 1
    lagged = np.stack([r[L_R - 1 - k : L_R - 1 - k + width] for k in range(L_R)])
    if form == "m40":
        return lagged @ (lagged**3).T / width
    return np.conj(lagged) @ (lagged**2 * np.conj(lagged)).T / width


def _estimate_from(M: np.ndarray, f: int) -> ChannelTapEstimate:
    ref = M[f, f]
    if abs(ref) < UNSTABLE_REFERENCE:
        raise UnstableReferenceError(f"|m40(f,f,f,f)| = {abs(ref):.3g} at f={f}")
    return ChannelTapEstimate(M[:, f] / ref, f)


def estimate_channel(samples, L_R: int, f: int, form: str = "m42") -> ChannelTapEstimate:
    """Relative taps ``h(k) = M[k, f] / M[f, f]`` for ``k = 0..L_R-1``."""
    if not 0 <= f < L_R:
        raise ValueError(f"reference lag f={f} outside 0..{L_R - 1}")
    return _estimate_from(lagged_m40(samples, L_R, form), f)


def beta63(taps) -> float:
    """Multipath factor ``sum |h|^6 / (sum |h|^2)^3``; 1 for a single tap."""
    p = np.abs(np.asarray(taps, dtype=complex)) ** 2
    total = p.sum()
    if total == 0:
        raise ValueError("beta63 of an all-zero tap vector")
    return float((p**3).sum() / total**3)


class OdDecision(NamedTuple):
    label: ModulationScheme
    residuals: np.ndarray  # |modulations| x L_R, NaN where the reference lag was unstable
    reference: int
    k63: float


def classify_od(
    samples,
    L_R: int = DEFAULT_LR,
    mod_set: Sequence[ModulationScheme | str] = (),
    sigma_n_sq: float = 0.0,
    n_estimates: int = 1,
    form: str = "m42",
) -> OdDecision:
    """Pick the modulation whose ideal value best matches the multipath-corrected cumulant.

    For each reference lag ``f`` the taps are estimated, ``beta63`` computed
    and the modified cumulant divided by it; the global minimum of
    ``|corrected - ideal|`` over modulations and lags decides. ``form``
    selects the lagged moment (see :func:`lagged_m40`).
    """
    if n_estimates != 1:
        raise NotImplementedError("only a single estimate per reference lag (n_estimates=1) is supported")
    labels = tuple(parse_scheme(s) for s in mod_set)
    if not labels:
        raise ValueError("mod_set is empty")
    r = np.asarray(getattr(samples, "samples", samples), dtype=complex)
    k63 = modified_k63(estimate_moments(r, 6), sigma_n_sq)
    ideals = np.array([ideal_k63(s) for s in labels])
    M = lagged_m40(r, L_R, form)
    resid = np.full((len(labels), L_R), np.nan)
    for f in range(L_R):
        try:
            est = _estimate_from(M, f)
        except UnstableReferenceError:
            continue
        resid[:, f] = np.abs(k63 / beta63(est.taps) - ideals)
    if np.all(np.isnan(resid)):
        raise ClassificationFailure("every reference lag was unstable")
    i, f = np.unravel_index(np.nanargmin(resid), resid.shape)
    return OdDecision(labels[i], resid, int(f), k63)
