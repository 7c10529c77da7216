"""Secret-keyed bloom filter for locating tampered chunks.

After attestation fails, a device wants to know which chunks are damaged so
it can request just those instead of its whole image.  It keeps a bloom
filter in secure memory, built over its own chunk records under a handful of
device-private keys.  Intact chunks are always found in the filter; a
modified chunk escapes all probes with probability
p = (1 - e^{-L/mu})^L for L keys and mu filter bits per chunk, which is what
makes the filter safe to rely on: misses only ever make the repair bigger,
never wrong, since every transferred chunk is verified against the stream
chain anyway.

The keys matter.  With unkeyed hashes an adversary who knows the chunk
contents could search offline for a modification that lands on already-set
bits; the probe positions here are unpredictable without the device secrets.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from hashlib import sha256
from typing import List, Sequence, Tuple

from .image import StreamSignedImage, ChunkRecord


def chunk_item(app_id: str, version: int, rec: ChunkRecord) -> bytes:
    """Canonical byte string a chunk record occupies the filter under."""
    return b"%s|%d|%d|" % (app_id.encode(), version, rec.index) + rec.payload + b"|" + rec.succ


class KeyedBloomFilter:
    """Bloom filter whose probe positions are keyed digests.

    One probe per key.  The bit array lives in a single int; exact membership
    of previously inserted byte strings is also tracked so lookups of intact
    content skip the hashing entirely (the filter has no false negatives for
    inserted items, so the shortcut never changes an answer).
    """

    __slots__ = ("keys", "n_bits", "_bits", "_inserted")

    def __init__(self, keys: Sequence[bytes], n_bits: int):
        if n_bits <= 0:
            raise ValueError("n_bits must be positive")
        if not keys:
            raise ValueError("need at least one key")
        self.keys: Tuple[bytes, ...] = tuple(keys)
        self.n_bits = n_bits
        self._bits = 0
        self._inserted = set()

    def positions(self, item: bytes) -> List[int]:
        n = self.n_bits
        return [
            int.from_bytes(sha256(k + item).digest()[:8], "big") % n
            for k in self.keys
        ]

    def insert(self, item: bytes) -> None:
        for pos in self.positions(item):
            self._bits |= 1 << pos
        self._inserted.add(item)

    def contains(self, item: bytes) -> bool:
        if item in self._inserted:
            return True
        bits = self._bits
        n = self.n_bits
        for k in self.keys:
            if not (bits >> (int.from_bytes(sha256(k + item).digest()[:8], "big") % n)) & 1:
                return False
        return True

    def fill_count(self) -> int:
        """Number of set bits (diagnostic)."""
        return bin(self._bits).count("1")


def build_filter(
    keys: Sequence[bytes], image: StreamSignedImage, bits_per_chunk: int
) -> KeyedBloomFilter:
    """Filter over all chunk records of `image`, mu bits per chunk."""
    filt = KeyedBloomFilter(keys, bits_per_chunk * image.chunk_count)
    app, z = image.app_id, image.version
    for rec in image.records:
        filt.insert(chunk_item(app, z, rec))
    return filt


def localize(filt: KeyedBloomFilter, image: StreamSignedImage) -> List[int]:
    """Indices of chunks the filter disowns.

    Every returned index is genuinely tampered; a tampered chunk is absent
    from the result only when it false-positives past all probes.
    """
    app, z = image.app_id, image.version
    return [
        rec.index
        for rec in image.records
        if not filt.contains(chunk_item(app, z, rec))
    ]


@dataclass(frozen=True)
class BloomParams:
    """Filter sizing plus the adversary's modification count kappa.

    kappa may be zero (nothing modified); the remaining fields must be
    strictly positive.
    """

    mu: int = 8
    num_keys: int = 4
    chunk_count: int = 64
    kappa: int = 4

    def __post_init__(self):
        if self.mu <= 0 or self.num_keys <= 0 or self.chunk_count <= 0:
            raise ValueError("mu, num_keys, chunk_count must be positive")
        if not 0 <= self.kappa <= self.chunk_count:
            raise ValueError("kappa must lie in [0, chunk_count]")


def false_positive_rate(num_keys: int, mu: int) -> float:
    """p = (1 - e^{-|L|/mu})^|L|: a modified chunk evades all probes."""
    if num_keys <= 0 or mu <= 0:
        raise ValueError("num_keys and mu must be positive")
    return (1.0 - math.exp(-num_keys / mu)) ** num_keys


def prob_full_download(p: float, kappa: int) -> float:
    """Probability at least one of kappa modified chunks evades: 1-(1-p)^k."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return 1.0 - (1.0 - p) ** kappa


def expected_download_chunks(chunk_count: int, p: float, kappa: int) -> float:
    """Mean chunks a blank device pulls: full image on any evasion, else kappa."""
    miss_all = (1.0 - p) ** kappa
    return chunk_count * (1.0 - miss_all) + kappa * miss_all


def secram_bits(
    pk_bits: int,
    ell: int,
    cert_bits: int,
    num_keys: int,
    mu: int,
    chunk_count: int,
    lambda_bits: int,
    key_bits: int,
    num_neighbors: int,
) -> int:
    """Total secure-memory budget of one device.

    Three public keys, the attest key + reference + filter keys ((4+|L|)
    ell-bit secrets), three certificates, the filter itself, three stored
    rates, and two shared values per neighbor.
    """
    args = (pk_bits, ell, cert_bits, num_keys, mu, chunk_count, lambda_bits,
            key_bits, num_neighbors)
    if any(a < 0 for a in args):
        raise ValueError("all sizes must be nonnegative")
    return (
        3 * pk_bits
        + (4 + num_keys) * ell
        + 3 * cert_bits
        + mu * chunk_count
        + 3 * lambda_bits
        + 2 * key_bits * num_neighbors
    )


def bloom_extra_bits(ell: int, num_keys: int, mu: int, chunk_count: int) -> int:
    """Localization storage on top of the base scheme: keys plus filter."""
    return ell * num_keys + mu * chunk_count


def naive_table_bits(ell: int, chunk_count: int) -> int:
    """Storage for the obvious alternative: one ell-bit digest per chunk."""
    return ell * chunk_count


_FILTER_MAGIC = b"SHBF1"


def serialize_filter(filt: KeyedBloomFilter) -> bytes:
    """Bit array with a length prefix and the key count.

    Keys are secrets and are never serialized; pair the blob with the key
    material from secure storage to reconstruct a queryable filter.
    """
    body = filt._bits.to_bytes((filt.n_bits + 7) // 8, "little")
    return _FILTER_MAGIC + struct.pack(">IH", filt.n_bits, len(filt.keys)) + body


def deserialize_filter(blob: bytes, keys: Sequence[bytes]) -> KeyedBloomFilter:
    """Inverse of serialize_filter; the caller supplies the secret keys."""
    if blob[:5] != _FILTER_MAGIC:
        raise ValueError("not a serialized filter")
    n_bits, n_keys = struct.unpack(">IH", blob[5:11])
    if len(keys) != n_keys:
        raise ValueError("expected %d keys, got %d" % (n_keys, len(keys)))
    body = blob[11:]
    if len(body) != (n_bits + 7) // 8:
        raise ValueError("bit array length mismatch")
    filt = KeyedBloomFilter(keys, n_bits)
    filt._bits = int.from_bytes(body, "little")
    return filt
