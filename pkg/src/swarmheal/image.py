"""Certified application images and the stream-signed chunk format.

An application image is split into fixed-size chunks.  Each chunk is wrapped
in a record that embeds the digest of its successor, so a receiver can verify
a transfer one record at a time: the head of the chain is bound to the
operator by a certificate, and every later record is accepted iff its keyed
digest matches the value embedded in the record before it.  Secrets never
leave this module as anything but opaque byte strings.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple

# 128-bit secrets and digests throughout.  Digests are truncated SHA-256;
# the key is prepended to the message, which is safe here because all inputs
# are fixed-layout (no extension games apply to truncated output anyway).
KEY_BYTES = 16
DIGEST_BYTES = 16


def keyed_digest(key: bytes, data: bytes, size: int = DIGEST_BYTES) -> bytes:
    """Digest of `data` under `key`, truncated to `size` bytes."""
    return hashlib.sha256(key + data).digest()[:size]


def new_secret(rng) -> bytes:
    """Fresh random key drawn from `rng` (random.Random or SystemRandom)."""
    return rng.getrandbits(8 * KEY_BYTES).to_bytes(KEY_BYTES, "big")


class ChunkRecord(NamedTuple):
    """One transfer unit: chunk payload plus the digest of the next record.

    `succ` is empty for the final record of an image.
    """

    index: int
    payload: bytes
    succ: bytes


@dataclass(frozen=True)
class Certificate:
    """Operator signature over an arbitrary subject string.

    Modeled as a keyed digest under the operator's private key; devices hold
    a verifier capability rather than the key itself.
    """

    subject: bytes
    tag: bytes


class Operator:
    """Holds the signing key for certificates.

    The simulator instantiates exactly one of these; adversaries never get a
    reference to it, which is what makes certificates unforgeable here.
    """

    def __init__(self, key: Optional[bytes] = None):
        self._key = key if key is not None else os.urandom(KEY_BYTES)

    def sign(self, subject: bytes) -> Certificate:
        return Certificate(subject, keyed_digest(self._key, subject))

    def verifier(self) -> "CertVerifier":
        return CertVerifier(self._key)


class CertVerifier:
    """Verification-only view of the operator key."""

    def __init__(self, key: bytes):
        self._key = key

    def verify(self, cert: Certificate) -> bool:
        return cert.tag == keyed_digest(self._key, cert.subject)


def record_digest(app_id: str, version: int, rec: ChunkRecord) -> bytes:
    """Chain digest D_i over (app, version, index, payload, successor digest)."""
    head = "%s|%d|%d|" % (app_id, version, rec.index)
    return hashlib.sha256(head.encode() + rec.payload + b"|" + rec.succ).digest()[
        :DIGEST_BYTES
    ]


def head_subject(
    app_id: str, version: int, chunk_count: int, chunk_size: int, d0: bytes
) -> bytes:
    """Certificate subject binding image metadata to the first chain digest."""
    return b"img|%s|%d|%d|%d|%s" % (
        app_id.encode(),
        version,
        chunk_count,
        chunk_size,
        d0.hex().encode(),
    )


@dataclass(frozen=True)
class StreamSignedImage:
    """A chunked image with its digest chain and operator head certificate."""

    app_id: str
    version: int
    chunk_size: int
    records: Tuple[ChunkRecord, ...]
    head_cert: Certificate

    @property
    def chunk_count(self) -> int:
        return len(self.records)

    @property
    def total_bytes(self) -> int:
        return self.chunk_size * len(self.records)

    def payload_bytes(self) -> bytes:
        return b"".join(r.payload for r in self.records)


def build_stream_chain(
    app_id: str,
    version: int,
    payload: bytes,
    chunk_size: int,
    operator: Operator,
) -> StreamSignedImage:
    """Chunk `payload`, build the backward digest chain, sign the head.

    The chain is computed back to front: record i embeds D_{i+1}, the last
    record embeds nothing, and the certificate covers D_0 together with the
    image metadata so a receiver can trust the whole chain from one check.
    """
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    if len(payload) == 0 or len(payload) % chunk_size != 0:
        raise ValueError(
            "payload length %d is not a positive multiple of chunk size %d"
            % (len(payload), chunk_size)
        )
    count = len(payload) // chunk_size
    records: list = [None] * count
    succ = b""
    for i in range(count - 1, -1, -1):
        rec = ChunkRecord(i, payload[i * chunk_size : (i + 1) * chunk_size], succ)
        records[i] = rec
        succ = record_digest(app_id, version, rec)
    cert = operator.sign(head_subject(app_id, version, count, chunk_size, succ))
    return StreamSignedImage(app_id, version, chunk_size, tuple(records), cert)


def verify_stream_prefix(
    records: Sequence[ChunkRecord],
    app_id: str,
    version: int,
    chunk_count: int,
    chunk_size: int,
    head_cert: Optional[Certificate] = None,
    verifier: Optional[CertVerifier] = None,
    expected_digest: Optional[bytes] = None,
) -> Tuple[int, Optional[bytes]]:
    """Accept the longest valid prefix of `records`.

    Starts either from the head of the chain (`head_cert` + `verifier`) or
    mid-chain from a known digest (`expected_digest`).  Returns the number of
    records accepted and the digest the next record must hash to, or None when
    the accepted prefix ended with the final record of the image.

    Nothing after the first bad record is looked at; a caller streaming chunks
    can call this once per arrival with a single-record sequence.
    """
    if (expected_digest is None) == (head_cert is None):
        raise ValueError("pass exactly one of head_cert or expected_digest")
    if not records:
        return 0, expected_digest
    expected = expected_digest
    if expected is None:
        assert head_cert is not None
        if verifier is None:
            raise ValueError("head_cert requires a verifier")
        first = records[0]
        if first.index != 0:
            return 0, None
        d0 = record_digest(app_id, version, first)
        subject = head_subject(app_id, version, chunk_count, chunk_size, d0)
        if head_cert.subject != subject or not verifier.verify(head_cert):
            return 0, None
        expected = d0
    accepted = 0
    for rec in records:
        if record_digest(app_id, version, rec) != expected:
            break
        accepted += 1
        if rec.index == chunk_count - 1:
            if rec.succ != b"":
                accepted -= 1
            expected = b""
            break
        expected = rec.succ
        if expected == b"":
            break
    return accepted, (expected if expected != b"" else None)


def attest(key: bytes, image: StreamSignedImage) -> bytes:
    """Keyed attestation digest over the full image contents.

    Covers metadata, every payload, and every chain link, so any bit flip in
    code memory changes the result.
    """
    h = hashlib.sha256()
    h.update(key)
    h.update(
        b"att|%s|%d|%d|%d|" % (image.app_id.encode(), image.version, image.chunk_count, image.chunk_size)
    )
    for rec in image.records:
        h.update(rec.payload)
        h.update(rec.succ)
    return h.digest()[:DIGEST_BYTES]


def corrupt_chunks(
    image: StreamSignedImage, indices: Iterable[int], rng
) -> StreamSignedImage:
    """Return a copy of `image` with the given chunks overwritten by noise.

    Both the payload and the embedded successor digest are randomized, the
    way arbitrary code-memory tampering would hit whatever happens to live at
    those offsets.  The head certificate is not touched: it lives in secure
    storage, not code memory.
    """
    idx = sorted(set(indices))
    if idx and (idx[0] < 0 or idx[-1] >= image.chunk_count):
        raise ValueError("chunk index out of range")
    records = list(image.records)
    for i in idx:
        payload = rng.getrandbits(8 * image.chunk_size).to_bytes(image.chunk_size, "big")
        succ = b"" if i == image.chunk_count - 1 else rng.getrandbits(
            8 * DIGEST_BYTES
        ).to_bytes(DIGEST_BYTES, "big")
        records[i] = ChunkRecord(i, payload, succ)
    return StreamSignedImage(
        image.app_id, image.version, image.chunk_size, tuple(records), image.head_cert
    )


def write_image(image: StreamSignedImage, bin_path: str, manifest_path: str) -> None:
    """Write payload bytes and a key=value sidecar manifest."""
    with open(bin_path, "wb") as f:
        f.write(image.payload_bytes())
    lines = [
        "app_id=%s" % image.app_id,
        "version=%d" % image.version,
        "chunk_size=%d" % image.chunk_size,
        "total_bytes=%d" % image.total_bytes,
        "head_subject=%s" % image.head_cert.subject.hex(),
        "head_tag=%s" % image.head_cert.tag.hex(),
    ]
    for rec in image.records:
        lines.append("succ_%d=%s" % (rec.index, rec.succ.hex()))
    with open(manifest_path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_image(bin_path: str, manifest_path: str) -> StreamSignedImage:
    """Inverse of write_image.  Raises ValueError on a malformed manifest."""
    kv = {}
    with open(manifest_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("manifest line without '=': %r" % line)
            k, v = line.split("=", 1)
            kv[k] = v
    try:
        app_id = kv["app_id"]
        version = int(kv["version"])
        chunk_size = int(kv["chunk_size"])
        total = int(kv["total_bytes"])
        cert = Certificate(bytes.fromhex(kv["head_subject"]), bytes.fromhex(kv["head_tag"]))
    except KeyError as e:
        raise ValueError("manifest missing key %s" % e) from None
    with open(bin_path, "rb") as f:
        payload = f.read()
    if len(payload) != total:
        raise ValueError(
            "payload is %d bytes, manifest says %d" % (len(payload), total)
        )
    if chunk_size <= 0 or total % chunk_size != 0:
        raise ValueError("total_bytes not a multiple of chunk_size")
    count = total // chunk_size
    records = []
    for i in range(count):
        key = "succ_%d" % i
        if key not in kv:
            raise ValueError("manifest missing %s" % key)
        records.append(
            ChunkRecord(i, payload[i * chunk_size : (i + 1) * chunk_size], bytes.fromhex(kv[key]))
        )
    return StreamSignedImage(app_id, version, chunk_size, tuple(records), cert)
