"""Closed-form results for the backoff slot model, with brute-force oracles.

When a blank device asks m same-version neighbors for code, each neighbor
independently picks one of m slots uniformly at random and the ones in the
earliest occupied slot are the ones that actually transmit.  This module
evaluates that model exactly: the joint law of (earliest slot, transmitter
count), the expected transmitter count, and the probability the handshake
costs exactly one transmission.  Everything is computed in exact rational
arithmetic; callers convert to float at the presentation boundary.

brute_force_transmitters and monte_carlo_bloom_download are deliberately
independent recomputations (full enumeration, live filter simulation) used
by the test suite to validate the closed forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Tuple

from .bloom import BloomParams, KeyedBloomFilter


@dataclass(frozen=True)
class SlotModel:
    """An epoch of m slots contested by m same-version neighbors."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def epoch_length_slots(self) -> int:
        return self.m


def slot_pmf(m: int, j: int, k: int) -> Fraction:
    """Pr[earliest occupied slot is j and exactly k devices sit in it].

    Counts assignments with k of the m devices in slot j and the remaining
    m-k in slots strictly after j, over the m^m equally likely assignments.
    For fixed j these joint probabilities do not sum to 1 over k; they are
    events of the joint law, not a conditional pmf.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 1 <= j <= m - 1:
        raise ValueError("j must lie in [1, m-1]")
    if not 1 <= k <= m:
        raise ValueError("k must lie in [1, m]")
    return Fraction(math.comb(m, k) * (m - j) ** (m - k), m ** m)


def expected_transmitters(m: int) -> Fraction:
    """Expected number of devices in the earliest occupied slot.

    Sum of k over the joint law for j < m, plus the all-in-last-slot corner
    where every device transmits: m/m^m.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    total = Fraction(0)
    for j in range(1, m):
        for k in range(1, m + 1):
            total += k * slot_pmf(m, j, k)
    return total + Fraction(m, m ** m)


def single_transmitter_prob(m: int) -> Fraction:
    """Probability exactly one device transmits: sum of (1-j/m)^(m-1)."""
    if m < 2:
        raise ValueError("m must be at least 2")
    return sum(
        (Fraction(m - j, m)) ** (m - 1) for j in range(1, m)
    )


BRUTE_FORCE_LIMIT = 8


def brute_force_transmitters(m: int) -> Fraction:
    """Exact mean transmitter count by enumerating all m^m assignments."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > BRUTE_FORCE_LIMIT:
        raise ValueError("enumeration limited to m <= %d" % BRUTE_FORCE_LIMIT)
    total = 0
    for assignment in itertools.product(range(m), repeat=m):
        earliest = min(assignment)
        total += assignment.count(earliest)
    return Fraction(total, m ** m)


def brute_force_slot_counts(m: int) -> Dict[Tuple[int, int], int]:
    """Raw enumeration counts of (earliest slot j, transmitter count k).

    Slots are numbered 1..m to match slot_pmf; values are assignment counts
    out of m^m.
    """
    if m > BRUTE_FORCE_LIMIT:
        raise ValueError("enumeration limited to m <= %d" % BRUTE_FORCE_LIMIT)
    counts: Dict[Tuple[int, int], int] = {}
    for assignment in itertools.product(range(1, m + 1), repeat=m):
        j = min(assignment)
        k = assignment.count(j)
        counts[(j, k)] = counts.get((j, k), 0) + 1
    return counts


def monte_carlo_bloom_download(
    params: BloomParams, trials: int, rng
) -> Tuple[float, float]:
    """Empirical (full-download rate, mean chunks downloaded).

    Per trial: draw fresh filter keys, build the filter over the chunk
    population, modify kappa random chunks, and probe them.  Any modified
    chunk the filter still claims to contain forces a full download of
    chunk_count chunks; otherwise the device fetches exactly the kappa
    suspects.  Uses the live KeyedBloomFilter so the estimate exercises the
    actual probe arithmetic, not a rederivation of the formula.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    n = params.chunk_count
    n_bits = params.mu * n
    kappa = params.kappa
    # fixed chunk population; false-positive behavior depends only on the
    # keyed probe positions, which are redrawn with the keys every trial
    base_items = [b"c|%d|" % i + rng.getrandbits(128).to_bytes(16, "big") for i in range(n)]
    full = 0
    chunks_acc = 0
    getrandbits = rng.getrandbits
    sample = rng.sample
    for _ in range(trials):
        keys = [getrandbits(128).to_bytes(16, "big") for _ in range(params.num_keys)]
        filt = KeyedBloomFilter(keys, n_bits)
        insert = filt.insert
        for item in base_items:
            insert(item)
        evaded = False
        if kappa:
            for i in sample(range(n), kappa):
                bad_item = b"c|%d|" % i + getrandbits(128).to_bytes(16, "big")
                if filt.contains(bad_item):
                    evaded = True
                    break
        if evaded:
            full += 1
            chunks_acc += n
        else:
            chunks_acc += kappa
    return full / trials, chunks_acc / trials


__all__ = [
    "SlotModel",
    "slot_pmf",
    "expected_transmitters",
    "single_transmitter_prob",
    "brute_force_transmitters",
    "brute_force_slot_counts",
    "monte_carlo_bloom_download",
    "BRUTE_FORCE_LIMIT",
]
