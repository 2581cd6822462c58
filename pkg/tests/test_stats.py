from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillfence.errors import EmptyStratum
from skillfence.stats import StratifiedSample, as_percent, compute_stratified_validity


def _direct(sample: StratifiedSample, z: float = 1.96) -> dict:
    """Independent unrounded evaluation, written straight from the formulas."""
    total = sample.N_I + sample.N_C
    w_i, w_c = sample.N_I / total, sample.N_C / total
    p_i = sample.h_I / sample.n_I if sample.n_I else 0.0
    p_c = sample.h_C / sample.n_C if sample.n_C else 0.0
    p = w_i * p_i + w_c * p_c
    se = math.sqrt(
        (w_i ** 2) * p_i * (1 - p_i) / sample.n_I
        + ((w_c ** 2) * p_c * (1 - p_c) / sample.n_C if sample.n_C else 0.0)
    )
    return {"p_hat": p, "se": se, "ci_low": p - z * se, "ci_high": p + z * se}


ROWS = [
    (StratifiedSample(5541, 1498, 200, 100, 189, 93), 94.18, 91.48, 96.89),
    (StratifiedSample(9846, 3171, 150, 50, 140, 46), 93.01, 89.48, 96.54),
    (StratifiedSample(6075, 1642, 150, 50, 141, 46), 93.57, 90.18, 96.97),
]


@pytest.mark.parametrize("sample,p,lo,hi", ROWS)
def test_three_audit_rows_exact(sample, p, lo, hi):
    result = compute_stratified_validity(sample, 1.96)
    assert as_percent(result["p_hat"]) == p
    assert as_percent(result["ci_low"]) == lo
    assert as_percent(result["ci_high"]) == hi


@pytest.mark.parametrize("sample,p,lo,hi", ROWS)
def test_matches_direct_evaluation_tightly(sample, p, lo, hi):
    result = compute_stratified_validity(sample)
    direct = _direct(sample)
    for key in ("p_hat", "se", "ci_low", "ci_high"):
        assert result[key] == pytest.approx(direct[key], rel=1e-12)


def test_single_stratum_full_validity():
    result = compute_stratified_validity(StratifiedSample(100, 0, 10, 0, 10, 0))
    assert result["p_hat"] == 1.0
    assert result["se"] == 0.0
    assert result["ci_low"] == result["ci_high"] == 1.0


def test_empty_stratum_rejected():
    with pytest.raises(EmptyStratum):
        compute_stratified_validity(StratifiedSample(10, 10, 5, 0, 5, 0))


def test_invalid_counts_rejected():
    with pytest.raises(ValueError):
        StratifiedSample(10, 10, 5, 5, 6, 5)  # h > n
    with pytest.raises(ValueError):
        StratifiedSample(4, 10, 5, 5, 3, 5)  # n > N
    with pytest.raises(ValueError):
        compute_stratified_validity(StratifiedSample(10, 10, 5, 5, 5, 5), z=0)


@given(
    N_I=st.integers(1, 10_000),
    N_C=st.integers(1, 10_000),
    n_I=st.integers(1, 400),
    n_C=st.integers(1, 400),
    data=st.data(),
)
@settings(max_examples=200, deadline=None)
def test_properties_of_weighted_rate(N_I, N_C, n_I, n_C, data):
    n_I = min(n_I, N_I)
    n_C = min(n_C, N_C)
    h_I = data.draw(st.integers(0, n_I))
    h_C = data.draw(st.integers(0, n_C))
    sample = StratifiedSample(N_I, N_C, n_I, n_C, h_I, h_C)
    result = compute_stratified_validity(sample)
    p_i, p_c = h_I / n_I, h_C / n_C
    assert min(p_i, p_c) - 1e-12 <= result["p_hat"] <= max(p_i, p_c) + 1e-12
    assert result["se"] >= 0
    assert result["ci_low"] <= result["p_hat"] <= result["ci_high"]
    wider = compute_stratified_validity(sample, z=2.58)
    assert wider["ci_low"] <= result["ci_low"]
    assert wider["ci_high"] >= result["ci_high"]
