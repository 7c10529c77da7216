import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmheal.analytics import (
    BloomParams,
    SlotModel,
    brute_force_slot_counts,
    brute_force_transmitters,
    expected_transmitters,
    monte_carlo_bloom_download,
    single_transmitter_prob,
    slot_pmf,
)
from swarmheal.bloom import expected_download_chunks, false_positive_rate, prob_full_download


def test_slot_pmf_small_cases():
    assert slot_pmf(2, 1, 1) == Fraction(1, 2)
    assert slot_pmf(2, 1, 2) == Fraction(1, 4)
    assert slot_pmf(3, 2, 3) == Fraction(1, 27)


def test_slot_pmf_domain():
    with pytest.raises(ValueError):
        slot_pmf(2, 0, 1)
    with pytest.raises(ValueError):
        slot_pmf(2, 2, 1)  # j must be < m
    with pytest.raises(ValueError):
        slot_pmf(3, 1, 0)
    with pytest.raises(ValueError):
        slot_pmf(3, 1, 4)


def test_slot_pmf_matches_enumeration_counts_exactly():
    for m in range(2, 7):
        counts = brute_force_slot_counts(m)
        denom = m ** m
        for j in range(1, m):
            for k in range(1, m + 1):
                assert slot_pmf(m, j, k) == Fraction(counts.get((j, k), 0), denom)


def test_expected_transmitters_exact_values():
    # frozen from the enumeration oracle
    assert expected_transmitters(1) == 1
    assert expected_transmitters(2) == Fraction(3, 2)
    assert expected_transmitters(3) == Fraction(14, 9)
    assert expected_transmitters(4) == Fraction(25, 16)
    assert expected_transmitters(5) == Fraction(979, 625)
    assert expected_transmitters(6) == Fraction(4067, 2592)


def test_formula_equals_brute_force():
    for m in range(1, 7):
        assert expected_transmitters(m) == brute_force_transmitters(m)


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_transmitters(9)
    with pytest.raises(ValueError):
        brute_force_transmitters(0)


def test_performance_table_rounding():
    table = {m: float(expected_transmitters(m)) for m in (2, 5, 10, 20)}
    assert round(table[2], 2) == 1.50
    assert round(table[5], 2) == 1.57
    assert round(table[10], 2) == 1.57
    assert round(table[20], 2) == 1.58


def test_single_transmitter_prob_values():
    assert single_transmitter_prob(2) == Fraction(1, 2)
    assert single_transmitter_prob(3) == Fraction(5, 9)
    assert single_transmitter_prob(4) == Fraction(9, 16)
    with pytest.raises(ValueError):
        single_transmitter_prob(1)


def test_single_transmitter_prob_matches_enumeration():
    for m in range(2, 7):
        counts = brute_force_slot_counts(m)
        ones = sum(c for (j, k), c in counts.items() if k == 1)
        assert single_transmitter_prob(m) == Fraction(ones, m ** m)


def test_single_transmitter_prob_levels_off():
    # rises early, then decreases monotonically toward 1/(e-1)
    vals = [float(single_transmitter_prob(m)) for m in range(2, 51)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 1 / (math.e - 1)) < 0.01


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 6))
def test_joint_law_total_mass_is_one(m):
    # the one assignment class the j<m events miss: everyone in the last slot
    total = Fraction(1, m ** m)
    for j in range(1, m):
        for k in range(1, m + 1):
            total += slot_pmf(m, j, k)
    assert total == 1


def test_slot_model_type():
    sm = SlotModel(4)
    assert sm.epoch_length_slots == 4
    with pytest.raises(ValueError):
        SlotModel(0)


def test_monte_carlo_kappa_zero():
    rate, chunks = monte_carlo_bloom_download(BloomParams(kappa=0), 50, random.Random(0))
    assert rate == 0.0
    assert chunks == 0.0


def test_monte_carlo_agrees_with_closed_forms_small():
    # the acceptance suite runs the full 1e5-trial version; this is a fast
    # regression check at looser tolerance
    params = BloomParams()
    rate, chunks = monte_carlo_bloom_download(params, 6000, random.Random(42))
    p = false_positive_rate(params.num_keys, params.mu)
    assert abs(rate - prob_full_download(p, params.kappa)) < 0.015
    assert abs(chunks - expected_download_chunks(params.chunk_count, p, params.kappa)) < 1.2


def test_monte_carlo_deterministic_given_seed():
    params = BloomParams()
    a = monte_carlo_bloom_download(params, 300, random.Random(9))
    b = monte_carlo_bloom_download(params, 300, random.Random(9))
    assert a == b
