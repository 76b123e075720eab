import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cumsig.cumulants import (
    WS_PAIRS,
    DegenerateEnergyError,
    MomentTable,
    _restricted_growth_strings,
    closed_form_cumulants,
    cumulant_closed,
    cumulant_partition,
    estimate_moments,
    moment_pairs,
    normalize,
    normalized_cumulants,
    partition_coefficients,
    theoretical_ws,
)
from cumsig.modem import ALL_SCHEMES, constellation

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975]


def _noncircular_block(rng, n=256):
    # non-circular, non-Gaussian so that every moment is informative
    x = rng.normal(size=n) + 0.4j * rng.normal(size=n) + 0.3 * rng.choice([-1, 1], n)
    return x * np.exp(1j * rng.uniform(0, 2 * np.pi))


def test_ws_pairs_order():
    assert WS_PAIRS == (
        (2, 0), (2, 1), (4, 0), (4, 1), (4, 2), (6, 0), (6, 1), (6, 2), (6, 3),
        (8, 0), (8, 1), (8, 2), (8, 3), (8, 4), (10, 0), (10, 1), (10, 2), (10, 3), (10, 4), (10, 5),
    )


@pytest.mark.parametrize("n", range(1, 11))
def test_set_partition_counts_are_bell_numbers(n):
    assert len(_restricted_growth_strings(n)) == BELL[n]


def test_kappa30_coefficients():
    assert partition_coefficients(3, 0) == {((3, 0),): 1, ((1, 0), (2, 0)): -3, ((1, 0), (1, 0), (1, 0)): 2}


def test_kappa42_coefficients_zero_mean():
    coeffs = {k: v for k, v in partition_coefficients(4, 2).items() if all(o % 2 == 0 for o, _ in k)}
    assert coeffs == {((4, 2),): 1, ((2, 0), (2, 2)): -1, ((2, 1), (2, 1)): -2}


def test_partition_coefficients_bad_args():
    with pytest.raises(NotImplementedError):
        partition_coefficients(11, 0)
    with pytest.raises(ValueError):
        partition_coefficients(4, 3)


def test_moment_pairs():
    assert moment_pairs(4, even_only=True) == [(2, 0), (2, 1), (4, 0), (4, 1), (4, 2)]
    assert (3, 1) in moment_pairs(4)


def test_moment_table_conjugate_lookup():
    m = estimate_moments(_noncircular_block(np.random.default_rng(0)), 6)
    assert m[6, 5] == np.conj(m[6, 1])
    assert m[4, 4] == np.conj(m[4, 0])


def test_estimate_moments_matches_direct_mean():
    r = _noncircular_block(np.random.default_rng(1))
    m = estimate_moments(r)
    assert m[6, 2] == pytest.approx(np.mean(r**4 * np.conj(r) ** 2), rel=1e-12)
    assert m[10, 5] == pytest.approx(np.mean(np.abs(r) ** 10), rel=1e-12)


def test_estimate_moments_batch_equals_rows():
    rng = np.random.default_rng(2)
    rows = np.stack([_noncircular_block(rng, 64) for _ in range(5)])
    batch = estimate_moments(rows)
    for i in range(5):
        single = estimate_moments(rows[i])
        for key in single:
            assert batch[key][i] == pytest.approx(single[key], rel=1e-13, abs=1e-15)


def test_estimate_moments_errors():
    with pytest.raises(ValueError):
        estimate_moments(np.zeros(0, dtype=complex))
    with pytest.raises(ValueError):
        estimate_moments(np.ones(4), max_order=12)


@pytest.mark.parametrize("scheme", ALL_SCHEMES, ids=str)
def test_closed_forms_match_oracle_on_constellations(scheme):
    m = MomentTable.from_constellation(constellation(scheme).points).with_zero_odd()
    closed = closed_form_cumulants(m)
    for n, q in WS_PAIRS:
        ref = cumulant_partition(m, n, q, zero_odd=True)
        assert abs(closed[n, q] - ref) <= 1e-9 * max(1.0, abs(ref))


def test_partition_oracle_with_odd_moments_matches_direct_formula():
    r = _noncircular_block(np.random.default_rng(3)) + 0.5
    m = estimate_moments(r, 4)
    k41 = cumulant_partition(m, 4, 1)
    # centered fourth-order joint cumulant computed directly
    c = r - r.mean()
    c20, c21 = np.mean(c * c), np.mean(c * np.conj(c))
    direct = np.mean(c**3 * np.conj(c)) - 3 * c20 * c21
    assert k41 == pytest.approx(direct, rel=1e-9)


def test_gaussian_higher_cumulants_vanish():
    rng = np.random.default_rng(4)
    r = (rng.normal(size=400_000) + 1j * rng.normal(size=400_000)) / np.sqrt(2)
    k = closed_form_cumulants(estimate_moments(r))
    assert abs(k[2, 1]) == pytest.approx(1, abs=0.01)
    for key in [(4, 2), (6, 3), (8, 4)]:
        assert abs(k[key]) < 0.2


def test_cumulant_closed_rejects_non_signature_pair():
    m = estimate_moments(np.ones(4))
    with pytest.raises(ValueError):
        cumulant_closed(m, 3, 0)


def test_normalize_examples():
    assert normalize(-8.0, 2.0, 0.0, 4) == pytest.approx(2.0)
    assert normalize(4.0, 2.0, 1.0, 6) == pytest.approx(4.0)
    with pytest.raises(DegenerateEnergyError):
        normalize(1.0, 1.0, 1.0, 2)
    out = normalize(np.array([1.0, -2.0]), np.array([1.0, 2.0]), 0.0, 2)
    assert np.allclose(out, [1.0, 1.0])


@pytest.mark.parametrize(
    "scheme, k42, k63",
    [("BPSK", 2.0, 16.0), ("QPSK", 1.0, 4.0), ("16QAM", 0.68, None)],
)
def test_theoretical_signatures(scheme, k42, k63):
    ws = theoretical_ws(scheme)
    assert ws[WS_PAIRS.index((4, 2))] == pytest.approx(k42, abs=1e-9)
    if k63 is not None:
        assert ws[WS_PAIRS.index((6, 3))] == pytest.approx(k63, abs=1e-9)
    assert ws[WS_PAIRS.index((2, 1))] == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.floats(0, 2 * np.pi), st.integers(0, 2**31))
def test_normalized_cumulants_scale_invariant(mag, phase, seed):
    r = _noncircular_block(np.random.default_rng(seed), 128)
    a = mag * np.exp(1j * phase)
    w1 = normalized_cumulants(estimate_moments(r, even_only=True))
    w2 = normalized_cumulants(estimate_moments(a * r, even_only=True))
    assert np.allclose(w1, w2, rtol=1e-9, atol=1e-12)
