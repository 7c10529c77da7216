"""Per-device protocol state machine.

Lifecycle of one device: periodic keyed self-checks at an adaptive rate;
on a failed check the device goes Blank (code disabled), localizes damage
with its bloom filter, and broadcasts a request for the suspect chunks.
Neighbors holding a same-or-newer image answer after a version-prioritized
slotted backoff; the requester acknowledges exactly one responder, verifies
every chunk against the stream-signature chain before installing it, and
re-attests before declaring itself healthy again.  Recovered devices
announce themselves so blank neighbors can skip their timers and so
lower-version neighbors pull updates, which is also how operator updates
propagate as a growing virtual tree.

A device never trusts message content: certificates bind images to the
operator, chain digests bind chunks to certified heads, and anything that
fails verification is dropped where it stands.  The only trust shortcuts
are physical-layer ones the simulator enforces (sender identity on tagged
messages, slot timing anchored at the request's broadcast instant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .bloom import KeyedBloomFilter, build_filter, localize
from .image import (
    Certificate,
    CertVerifier,
    ChunkRecord,
    StreamSignedImage,
    attest,
    head_subject,
    record_digest,
    verify_stream_prefix,
)

HONEST = "honest"
CORRUPT = "corrupt"
BLANK = "blank"

LR_CLASS = "LR"
HR_CLASS = "HR"

# message kinds
HELLO = "hello"
REQ = "req"
WARN = "warn"
CHUNK_FIRST = "chunk_first"
CHUNK_ACK = "chunk_ack"
CHUNK_REST = "chunk_rest"
DONE = "done"
CORRECTED = "corrected"
UPDATE_ANNOUNCE = "update_announce"


@dataclass
class Message:
    kind: str
    sender: int
    seq: int
    body: dict
    sent_at: float = 0.0  # stamped by the engine at transmission


@dataclass
class ProtocolParams:
    ttl: int = 1
    delta_cap: int = 1
    theta: float = 1.0
    lam_init: float = 1 / 100
    lam_min: float = 1 / 400
    lam_max: float = 1 / 100
    selfcheck_cap: Optional[float] = None  # thresholded variant: min{Exp, cap}
    bloom_mu: int = 8
    bloom_num_keys: int = 4
    ack_timeout: Optional[float] = None  # default theta/2
    full_image_after_failures: int = 3

    def __post_init__(self):
        if self.ttl < 0:
            raise ValueError("ttl must be nonnegative")
        if not 0 < self.lam_min <= self.lam_init <= self.lam_max:
            raise ValueError("need 0 < lam_min <= lam_init <= lam_max")
        if self.theta <= 0 or self.delta_cap < 0:
            raise ValueError("theta must be positive, delta_cap nonnegative")
        if self.selfcheck_cap is not None and self.selfcheck_cap <= 0:
            raise ValueError("selfcheck_cap must be positive when set")
        if self.ack_timeout is None:
            self.ack_timeout = self.theta / 2


def compute_backoff(
    delta_cap: int,
    theta: float,
    requester_degree: int,
    z_local: int,
    z_request: int,
    rng,
) -> float:
    """Version-prioritized slotted backoff.

    Epoch index max{delta_cap - (z_local - z_request), 0} orders responders
    so newer-version holders answer first; within the epoch the slot is
    uniform over requester_degree slots of width theta.
    """
    if z_local < z_request:
        raise ValueError("responders behind the requested version hold no timer")
    epoch = max(delta_cap - (z_local - z_request), 0)
    slot = math.floor(rng.random() * requester_degree)
    return epoch * requester_degree * theta + slot * theta


def warned_rate(lam: float, lam_max: float) -> float:
    """Rate after a live warning: doubled, capped at lam_max."""
    return min(2 * lam, lam_max)


def decayed_rate(lam: float, lam_min: float) -> float:
    """Rate after a clean self-check: expected wait grows by one second."""
    return max(lam_min, lam / (1 + lam))


def cert_matches(
    cert: Certificate,
    verifier: CertVerifier,
    app_id: str,
    version: int,
    chunk_count: int,
    chunk_size: int,
) -> bool:
    """Check an image head certificate against claimed metadata.

    The chain digest inside the subject is taken on faith here; it gets
    checked record by record once chunks arrive.
    """
    if not verifier.verify(cert):
        return False
    parts = cert.subject.split(b"|")
    if len(parts) != 6 or parts[0] != b"img":
        return False
    try:
        return (
            parts[1].decode() == app_id
            and int(parts[2]) == version
            and int(parts[3]) == chunk_count
            and int(parts[4]) == chunk_size
        )
    except (UnicodeDecodeError, ValueError):
        return False


@dataclass
class Offer:
    """Responder-side pending answer to one request cycle."""

    gen: int
    requester: int
    cycle: int
    req_version: int
    pi: Tuple[int, ...]
    sent_first: bool = False
    bogus: bool = False


@dataclass
class Staging:
    """Requester-side buffer for a full-image stream (recovery or update)."""

    source: int
    version: int
    chunk_count: int
    chunk_size: int
    head_cert: Certificate
    records: List[ChunkRecord] = field(default_factory=list)
    next_expected: bytes = b""


class Device:
    """One protocol participant, driven entirely by engine callbacks."""

    def __init__(
        self,
        dev_id: int,
        klass: str,
        image: StreamSignedImage,
        attest_key: bytes,
        bloom_keys: Sequence[bytes],
        params: ProtocolParams,
        engine,
        rng,
    ):
        self.id = dev_id
        self.klass = klass
        self.p = params
        self.eng = engine
        self.rng = rng
        self.image = image
        self.attest_key = attest_key
        self.reference = attest(attest_key, image)
        self.bloom_keys = tuple(bloom_keys)
        self.filter: Optional[KeyedBloomFilter] = None
        self.lam = params.lam_init
        self.seq = 0
        self.status = HONEST
        self.neighbors: List[int] = []
        self.peer_key: Dict[int, bytes] = {}
        self.seen: Dict[int, Set[int]] = {}
        self.warn_seen: Set[Tuple[int, int]] = set()
        self.misbehavior: Dict[int, int] = {}
        # blank-side recovery
        self.pi: Optional[Set[int]] = None
        self.cycle: Optional[int] = None
        self.acked_responder: Optional[int] = None
        self.staging: Optional[Staging] = None
        self.req_token = 0
        self.failed_cycles = 0
        self.installed_this_cycle = 0
        # responder side
        self.offers: Dict[Tuple[int, int], Offer] = {}
        self.offer_gen = 0
        # updates
        self.announced: Set[int] = set()
        self.pull: Optional[Staging] = None
        self.pull_cycle: Optional[int] = None
        self.pull_token = 0
        self.known_newer: Optional[Tuple[int, int]] = None  # (version, source)
        # timers
        self.selfcheck_gen = 0

    # -- identity ----------------------------------------------------------

    @property
    def version(self) -> int:
        return self.image.version

    @property
    def app_id(self) -> str:
        return self.image.app_id

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def holds(self, app_id: str) -> bool:
        return self.image.app_id == app_id

    # -- provisioning ------------------------------------------------------

    def ensure_filter(self) -> None:
        """Build the localization filter over the current (pristine) image.

        Called by the engine immediately before tampering and by localize
        time; building lazily keeps untouched devices cheap.
        """
        if self.filter is None:
            self.filter = build_filter(self.bloom_keys, self.image, self.p.bloom_mu)

    def install_image(self, image: StreamSignedImage) -> None:
        """Adopt a fully verified image and refresh secure-memory state."""
        old = self.image.version
        self.image = image
        self.reference = attest(self.attest_key, image)
        self.filter = None
        if image.version != old:
            self.eng.on_version_change(self, old, image.version)

    # -- self-check (Algorithm 1) -------------------------------------------

    def schedule_selfcheck(self) -> None:
        self.selfcheck_gen += 1
        delay = self.eng.sample_exponential(self.lam, self.rng)
        if self.p.selfcheck_cap is not None:
            delay = min(delay, self.p.selfcheck_cap)
        self.eng.schedule(delay, self.on_selfcheck_interrupt, self.selfcheck_gen)

    def on_selfcheck_interrupt(self, gen: int) -> None:
        if gen != self.selfcheck_gen or self.status == BLANK:
            return
        if attest(self.attest_key, self.image) == self.reference:
            self.lam = decayed_rate(self.lam, self.p.lam_min)
            if self.known_newer is not None and self.known_newer[0] > self.version:
                ver, src = self.known_newer
                self.start_pull(src, ver)
            self.schedule_selfcheck()
        else:
            self.become_blank()

    def become_blank(self) -> None:
        prev = self.status
        self.status = BLANK
        self.eng.on_status_change(self, prev, BLANK)
        self.lam = self.p.lam_max
        self.selfcheck_gen += 1  # suspend periodic checks while blank
        self.pull = None
        self.ensure_filter()
        suspects = set(localize(self.filter, self.image))
        if not suspects:
            # every tampered chunk evaded the filter: only a full image helps
            suspects = set(range(self.image.chunk_count))
        self.pi = suspects
        self.failed_cycles = 0
        self.start_request_cycle()

    # -- requester side ------------------------------------------------------

    def start_request_cycle(self, direct_to: Optional[int] = None) -> None:
        assert self.status == BLANK and self.pi
        self.cycle = self.next_seq()
        self.acked_responder = None
        self.staging = None
        self.installed_this_cycle = 0
        body = {
            "ttl": self.p.ttl,
            "q": self.cycle,
            "deg": len(self.neighbors),
            "version": self.version,
            "app": self.app_id,
            "pi": tuple(sorted(self.pi)),
        }
        msg = Message(REQ, self.id, self.cycle, body)
        if direct_to is None:
            self.eng.broadcast(self, msg)
        else:
            self.eng.unicast(self, direct_to, msg)
        self.req_token += 1
        deg = max(len(self.neighbors), 1)
        timeout = (self.p.delta_cap + 1) * deg * self.p.theta
        self.eng.schedule(timeout, self.on_request_timeout, self.req_token)

    def on_request_timeout(self, token: int) -> None:
        if token != self.req_token or self.status != BLANK:
            return
        if self.installed_this_cycle == 0:
            self.failed_cycles += 1
        else:
            self.failed_cycles = 0
        if self.failed_cycles >= self.p.full_image_after_failures:
            # repeated dead cycles: damaged chunks the filter missed can make
            # requested chunks unverifiable, so fall back to the whole image
            self.pi = set(range(self.image.chunk_count))
            self.failed_cycles = 0
        delay = self.eng.sample_exponential(self.lam, self.rng)
        self.req_token += 1
        self.eng.schedule(delay, self.on_rerequest_due, self.req_token)

    def on_rerequest_due(self, token: int) -> None:
        if token != self.req_token or self.status != BLANK:
            return
        self.start_request_cycle()

    def _anchor_for(self, index: int) -> Tuple[Optional[Certificate], Optional[bytes]]:
        """Verification anchor for a same-version chunk at `index`."""
        if index == 0:
            return self.image.head_cert, None
        return None, self.image.records[index - 1].succ

    def _verify_and_install_patch(self, rec: ChunkRecord) -> bool:
        if rec.index < 0 or rec.index >= self.image.chunk_count:
            return False
        cert, expected = self._anchor_for(rec.index)
        n, _ = verify_stream_prefix(
            [rec],
            self.app_id,
            self.version,
            self.image.chunk_count,
            self.image.chunk_size,
            head_cert=cert,
            verifier=self.eng.operator_verifier if cert is not None else None,
            expected_digest=expected,
        )
        if n != 1:
            return False
        records = list(self.image.records)
        records[rec.index] = rec
        self.image = replace(self.image, records=tuple(records))
        self.eng.on_record_installed(self, self.version, rec)
        if self.pi is not None:
            self.pi.discard(rec.index)
        self.installed_this_cycle += 1
        return True

    def _start_staging(self, msg: Message, body: dict) -> bool:
        """Validate a full-stream head (recovery upgrade or honest pull)."""
        rec: ChunkRecord = body["record"]
        cert: Certificate = body["head_cert"]
        version = body["version"]
        count = body["chunk_count"]
        size = body["chunk_size"]
        if count < 1 or size < 1 or rec.index != 0:
            return False
        if not cert_matches(cert, self.eng.operator_verifier, self.app_id, version, count, size):
            return False
        n, nxt = verify_stream_prefix(
            [rec], self.app_id, version, count, size,
            head_cert=cert, verifier=self.eng.operator_verifier,
        )
        if n != 1:
            return False
        st = Staging(msg.sender, version, count, size, cert, [rec], nxt or b"")
        if self.status == BLANK:
            self.staging = st
        else:
            self.pull = st
        self.eng.on_record_installed(self, version, rec)
        return True

    def _continue_staging(self, st: Staging, records: Sequence[ChunkRecord]) -> bool:
        """Append in-order verified records; False on the first bad one."""
        for rec in records:
            if rec.index != len(st.records):
                return False
            n, nxt = verify_stream_prefix(
                [rec], self.app_id, st.version, st.chunk_count, st.chunk_size,
                expected_digest=st.next_expected,
            )
            if n != 1:
                return False
            st.records.append(rec)
            st.next_expected = nxt or b""
            self.eng.on_record_installed(self, st.version, rec)
        return True

    def _staging_complete(self, st: Staging) -> bool:
        return len(st.records) == st.chunk_count

    def _adopt_staging(self, st: Staging) -> None:
        self.install_image(
            StreamSignedImage(
                self.app_id, st.version, st.chunk_size, tuple(st.records), st.head_cert
            )
        )

    def handle_code_response_first(self, msg: Message) -> None:
        if self.status != BLANK or msg.body.get("cycle") != self.cycle:
            return
        if self.acked_responder is not None:
            return
        body = msg.body
        ok = False
        if body["version"] == self.version:
            rec = body["record"]
            if self.pi and rec.index in self.pi:
                ok = self._verify_and_install_patch(rec)
        elif body["version"] > self.version:
            ok = self._start_staging(msg, body)
        if not ok:
            self.misbehavior[msg.sender] = self.misbehavior.get(msg.sender, 0) + 1
            self.eng.count("bogus_first_rejected")
            return
        self.acked_responder = msg.sender
        ack = Message(CHUNK_ACK, self.id, self.next_seq(), {"responder": msg.sender, "cycle": self.cycle})
        self.eng.broadcast(self, ack)
        self._check_recovery_progress()

    def handle_code_response_rest(self, msg: Message) -> None:
        if self.status != BLANK or msg.body.get("cycle") != self.cycle:
            return
        if msg.sender != self.acked_responder:
            return
        records = msg.body["records"]
        if self.staging is not None:
            if not self._continue_staging(self.staging, records):
                self.misbehavior[msg.sender] = self.misbehavior.get(msg.sender, 0) + 1
                self.eng.count("bogus_rest_rejected")
        else:
            for rec in records:
                if self.pi is not None and rec.index not in self.pi:
                    continue
                if not self._verify_and_install_patch(rec):
                    self.misbehavior[msg.sender] = self.misbehavior.get(msg.sender, 0) + 1
                    self.eng.count("bogus_rest_rejected")
                    break
        self._check_recovery_progress()

    def _check_recovery_progress(self) -> None:
        if self.status != BLANK:
            return
        if self.staging is not None:
            if self._staging_complete(self.staging):
                self._adopt_staging(self.staging)
                self.staging = None
                self.on_corrected()
            return
        if self.pi is not None and not self.pi:
            # re-attestation gate: a filter false positive leaves damage the
            # patch never touched, in which case only a full image helps
            if attest(self.attest_key, self.image) == self.reference:
                self.on_corrected()
            else:
                self.eng.count("reattest_failed_full_image")
                self.pi = set(range(self.image.chunk_count))
                self.failed_cycles = 0
                self.start_request_cycle()

    def on_corrected(self) -> None:
        prev = self.status
        self.status = HONEST
        self.eng.on_status_change(self, prev, HONEST)
        self.lam = self.p.lam_max
        self.pi = None
        self.staging = None
        finished_cycle = self.cycle
        self.cycle = None
        self.acked_responder = None
        self.req_token += 1
        self.schedule_selfcheck()
        self.eng.broadcast(self, Message(DONE, self.id, self.next_seq(), {"cycle": finished_cycle}))
        self.announce_version(CORRECTED)

    def announce_version(self, kind: str) -> None:
        img = self.image
        body = {
            "app": img.app_id,
            "version": img.version,
            "chunk_count": img.chunk_count,
            "chunk_size": img.chunk_size,
            "head_cert": img.head_cert,
        }
        self.eng.broadcast(self, Message(kind, self.id, self.next_seq(), body))

    # -- responder side (Algorithm 2) ----------------------------------------

    def handle_code_request(self, msg: Message) -> None:
        body = msg.body
        self._apply_warning(msg.sender, body["q"], body["ttl"])
        if self.status != HONEST:
            return
        if not self.holds(body["app"]) or self.version < body["version"]:
            return
        key = (msg.sender, body["q"])
        if key in self.offers:
            return
        tau = compute_backoff(
            self.p.delta_cap, self.p.theta, body["deg"], self.version, body["version"], self.rng
        )
        self.offer_gen += 1
        self.offers[key] = Offer(self.offer_gen, msg.sender, body["q"], body["version"], tuple(body["pi"]))
        fire_delay = max(0.0, msg.sent_at + tau - self.eng.now)
        self.eng.schedule(fire_delay, self.transmit_chunks, key, self.offer_gen)

    def _plan_for(self, offer: Offer) -> List[int]:
        if offer.req_version == self.version:
            count = self.image.chunk_count
            return [i for i in offer.pi if 0 <= i < count]
        return list(range(self.image.chunk_count))

    def transmit_chunks(self, key: Tuple[int, int], gen: int) -> None:
        offer = self.offers.get(key)
        if offer is None or offer.gen != gen or offer.sent_first:
            return
        if self.status != HONEST:
            self.offers.pop(key, None)
            return
        plan = self._plan_for(offer)
        if not plan:
            self.offers.pop(key, None)
            return
        img = self.image
        body = {
            "cycle": offer.cycle,
            "version": img.version,
            "chunk_count": img.chunk_count,
            "chunk_size": img.chunk_size,
            "head_cert": img.head_cert,
            "record": img.records[plan[0]],
            "planned": len(plan),
        }
        offer.sent_first = True
        self.eng.count_transmitter(offer.requester, offer.cycle, self.id)
        self.eng.unicast(self, offer.requester, Message(CHUNK_FIRST, self.id, self.next_seq(), body))
        self.eng.schedule(self.p.ack_timeout, self.on_ack_timeout, key, gen)

    def on_ack_timeout(self, key: Tuple[int, int], gen: int) -> None:
        offer = self.offers.get(key)
        if offer is not None and offer.gen == gen:
            # another responder was acknowledged; free the slot
            self.offers.pop(key, None)

    def handle_chunk_ack(self, msg: Message) -> None:
        key = (msg.sender, msg.body["cycle"])
        offer = self.offers.get(key)
        if offer is None:
            return
        if msg.body["responder"] != self.id:
            self.offers.pop(key, None)
            return
        if not offer.sent_first or self.status != HONEST:
            self.offers.pop(key, None)
            return
        plan = self._plan_for(offer)
        rest = [self.image.records[i] for i in plan[1:]]
        self.offers.pop(key, None)
        if rest:
            body = {"cycle": offer.cycle, "records": tuple(rest)}
            self.eng.unicast(self, offer.requester, Message(CHUNK_REST, self.id, self.next_seq(), body))

    def handle_done(self, msg: Message) -> None:
        self.offers.pop((msg.sender, msg.body["cycle"]), None)

    # -- warnings (Eq 1) ------------------------------------------------------

    def _apply_warning(self, origin: int, origin_seq: int, ttl: int) -> None:
        if self.status != HONEST:
            return
        key = (origin, origin_seq)
        if key in self.warn_seen:
            return
        self.warn_seen.add(key)
        if ttl <= 0:
            return
        new = warned_rate(self.lam, self.p.lam_max)
        if new != self.lam:
            self.lam = new
            # memorylessness does not survive a rate change; redraw the timer
            self.schedule_selfcheck()
        if ttl - 1 > 0:
            body = {"ttl": ttl - 1, "origin": origin, "origin_seq": origin_seq}
            self.eng.broadcast(self, Message(WARN, self.id, self.next_seq(), body))

    def handle_warn(self, msg: Message) -> None:
        body = msg.body
        self._apply_warning(body["origin"], body["origin_seq"], body["ttl"])

    # -- announcements and updates (fast correction / new-root regrowth) ------

    def handle_announce(self, msg: Message) -> None:
        body = msg.body
        if self.status == BLANK:
            if msg.kind == CORRECTED and self.pi and self.acked_responder is None:
                # fast correction: ask the recovered neighbor right away,
                # unless a transfer is already in flight
                self.req_token += 1
                self.start_request_cycle(direct_to=msg.sender)
            return
        if self.status != HONEST:
            return
        if not self.holds(body["app"]) or body["version"] <= self.version:
            return
        if not cert_matches(
            body["head_cert"], self.eng.operator_verifier,
            body["app"], body["version"], body["chunk_count"], body["chunk_size"],
        ):
            return
        self.known_newer = (body["version"], msg.sender)
        if self.pull is None or self.pull.version < body["version"]:
            self.start_pull(msg.sender, body["version"])

    def start_pull(self, source: int, version: int) -> None:
        """Request a newer image from an announcing neighbor."""
        if self.status != HONEST or version <= self.version:
            return
        self.pull = None
        cycle = self.next_seq()
        body = {
            "ttl": 0,
            "q": cycle,
            "deg": len(self.neighbors),
            "version": self.version,
            "app": self.app_id,
            "pi": (),
        }
        self.eng.unicast(self, source, Message(REQ, self.id, cycle, body))
        self.pull_cycle = cycle
        self.pull_token += 1
        deg = max(len(self.neighbors), 1)
        timeout = (self.p.delta_cap + 1) * deg * self.p.theta + 2 * self.p.theta
        self.eng.schedule(timeout, self.on_pull_timeout, self.pull_token)

    def on_pull_timeout(self, token: int) -> None:
        if token != self.pull_token or self.status != HONEST:
            return
        if self.pull is not None and not self._staging_complete(self.pull):
            # stalled; drop the buffer and retry at the next clean self-check
            self.pull = None

    def handle_pull_first(self, msg: Message) -> bool:
        """Honest-side ChunkFirst: accept only a newer full stream."""
        if self.status != HONEST or self.pull is not None:
            return False
        if msg.body.get("cycle") != self.pull_cycle:
            return False
        if msg.body["version"] <= self.version:
            return False
        if not self._start_staging(msg, msg.body):
            self.misbehavior[msg.sender] = self.misbehavior.get(msg.sender, 0) + 1
            self.eng.count("bogus_first_rejected")
            return False
        ack = Message(CHUNK_ACK, self.id, self.next_seq(), {"responder": msg.sender, "cycle": msg.body["cycle"]})
        self.eng.broadcast(self, ack)
        self._check_pull_progress()
        return True

    def handle_pull_rest(self, msg: Message) -> None:
        if self.status != HONEST or self.pull is None:
            return
        if msg.sender != self.pull.source or msg.body.get("cycle") != self.pull_cycle:
            return
        if not self._continue_staging(self.pull, msg.body["records"]):
            self.misbehavior[msg.sender] = self.misbehavior.get(msg.sender, 0) + 1
            self.eng.count("bogus_rest_rejected")
        self._check_pull_progress()

    def _check_pull_progress(self) -> None:
        st = self.pull
        if st is not None and self._staging_complete(st):
            self._adopt_staging(st)
            self.pull = None
            self.pull_token += 1
            if self.version not in self.announced:
                self.announced.add(self.version)
                self.announce_version(UPDATE_ANNOUNCE)
            if self.known_newer is not None and self.known_newer[0] <= self.version:
                self.known_newer = None

    def operator_install(self, image: StreamSignedImage) -> None:
        """Direct certified install from the operator's maintenance link."""
        was_blank = self.status == BLANK
        self.install_image(image)
        self.pull = None
        if was_blank:
            self.on_corrected()
        elif self.version not in self.announced:
            self.announced.add(self.version)
            self.announce_version(UPDATE_ANNOUNCE)

    # -- dispatch -------------------------------------------------------------

    def on_message(self, msg: Message) -> None:
        seen = self.seen.setdefault(msg.sender, set())
        if msg.seq in seen:
            return
        seen.add(msg.seq)
        if self.status == CORRUPT:
            self.eng.on_corrupt_message(self, msg)
            return
        kind = msg.kind
        if kind == REQ:
            self.handle_code_request(msg)
        elif kind == WARN:
            self.handle_warn(msg)
        elif kind == CHUNK_FIRST:
            if self.status == BLANK:
                self.handle_code_response_first(msg)
            else:
                self.handle_pull_first(msg)
        elif kind == CHUNK_REST:
            if self.status == BLANK:
                self.handle_code_response_rest(msg)
            else:
                self.handle_pull_rest(msg)
        elif kind == CHUNK_ACK:
            self.handle_chunk_ack(msg)
        elif kind == DONE:
            self.handle_done(msg)
        elif kind in (CORRECTED, UPDATE_ANNOUNCE):
            self.handle_announce(msg)
        # HELLO is consumed by rendezvous during setup


def rendezvous(a: Device, b: Device, pair_key: bytes, a_cert_ok: bool = True, b_cert_ok: bool = True) -> bool:
    """Mutual neighbor-table setup over an abstract authenticated exchange.

    Idempotent; returns False (and changes nothing) if either identity
    certificate fails.
    """
    if not (a_cert_ok and b_cert_ok):
        return False
    if b.id not in a.peer_key:
        a.peer_key[b.id] = pair_key
        a.neighbors.append(b.id)
    if a.id not in b.peer_key:
        b.peer_key[a.id] = pair_key
        b.neighbors.append(a.id)
    return True
