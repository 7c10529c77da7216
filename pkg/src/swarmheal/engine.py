"""Deterministic discrete-event simulator for a self-healing device swarm.

Everything random flows from named streams derived off one integer seed, and
simultaneous events run in scheduling order, so a scenario replays to
byte-identical output.  The engine owns the physical layer (per-delivery
exponential link delays, sender identity, pairwise message tags), device
provisioning, the corruption mechanics, operator updates, and the metrics
timeline; protocol behavior lives entirely in `protocol.Device`.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .adversary import Adversary, AdversaryConfig
from .image import Operator, StreamSignedImage, build_stream_chain, corrupt_chunks, keyed_digest
from .protocol import (
    BLANK,
    CORRUPT,
    HONEST,
    LR_CLASS,
    Device,
    Message,
    ProtocolParams,
    rendezvous,
)
from .topology import Topology

CSV_HEADER = "time,frac_corrupt_undetected,frac_blank,frac_correct,frac_updated"

# fixed operator identity; device secrets vary per seed, this does not
OPERATOR_KEY = b"swarm-operator-1"


def stream(seed: int, label: str) -> random.Random:
    """Named deterministic RNG stream for one seed."""
    h = hashlib.sha256(("%d|%s" % (seed, label)).encode()).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def sample_exponential(rate: float, rng: random.Random) -> float:
    if rate <= 0:
        raise ValueError("exponential rate must be positive, got %r" % (rate,))
    return rng.expovariate(rate)


@dataclass(frozen=True)
class ImageSpec:
    """Geometry of the application image every device runs."""

    app_id: str = "app"
    version: int = 1
    chunk_size: int = 256  # bytes per chunk
    chunk_count: int = 64

    def __post_init__(self):
        if self.chunk_size < 1 or self.chunk_count < 1 or self.version < 0:
            raise ValueError("image geometry must be positive")

    @property
    def total_bytes(self) -> int:
        return self.chunk_size * self.chunk_count


def certified_payload(app_id: str, version: int, total_bytes: int) -> bytes:
    """Deterministic image content; independent of the simulation seed."""
    out = bytearray()
    counter = 0
    while len(out) < total_bytes:
        out += hashlib.sha256(b"payload|%s|%d|%d" % (app_id.encode(), version, counter)).digest()
        counter += 1
    return bytes(out[:total_bytes])


def build_certified_image(spec: ImageSpec, version: int, operator: Operator) -> StreamSignedImage:
    payload = certified_payload(spec.app_id, version, spec.total_bytes)
    return build_stream_chain(spec.app_id, version, payload, spec.chunk_size, operator)


@dataclass(frozen=True)
class UpdateConfig:
    """Operator-side update release: when, what version, retry cadence."""

    at: float
    new_version: Optional[int] = None
    retry_interval: float = 10.0

    def __post_init__(self):
        if self.at < 0 or self.retry_interval <= 0:
            raise ValueError("update times must be nonnegative, retry positive")


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    params: ProtocolParams = field(default_factory=ProtocolParams)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    update: Optional[UpdateConfig] = None
    image: ImageSpec = field(default_factory=ImageSpec)
    duration: float = 1000.0
    mean_link_delay: Optional[float] = None  # None: use the topology's value

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")


class MetricSample(Tuple[float, float, float, float, float]):
    """One row of the output timeline."""

    __slots__ = ()

    def __new__(cls, time, frac_corrupt, frac_blank, frac_correct, frac_updated):
        return super().__new__(cls, (time, frac_corrupt, frac_blank, frac_correct, frac_updated))

    time = property(lambda s: s[0])
    frac_corrupt_undetected = property(lambda s: s[1])
    frac_blank = property(lambda s: s[2])
    frac_correct = property(lambda s: s[3])
    frac_updated = property(lambda s: s[4])


def _fmt_time(t: float) -> str:
    return "%d" % int(t) if float(t).is_integer() else "%.6f" % t


def samples_to_csv(samples: Sequence[MetricSample]) -> str:
    lines = [CSV_HEADER]
    for s in samples:
        lines.append(
            "%s,%.9f,%.9f,%.9f,%.9f"
            % (_fmt_time(s.time), s[1], s[2], s[3], s[4])
        )
    return "\n".join(lines) + "\n"


def mean_samples(batches: Sequence[Sequence[MetricSample]]) -> List[MetricSample]:
    """Pointwise mean of timelines sampled on the same grid."""
    if not batches:
        return []
    times = [s.time for s in batches[0]]
    for b in batches[1:]:
        if [s.time for s in b] != times:
            raise ValueError("timelines sampled on different grids")
    n = len(batches)
    out = []
    for rows in zip(*batches):
        t = rows[0].time
        sums = [sum(r[i] for r in rows) / n for i in range(1, 5)]
        out.append(MetricSample(t, *sums))
    return out


@dataclass
class MetricsTimeline:
    """Everything one run reports back."""

    seed: int
    samples: List[MetricSample]
    stats: Counter
    transitions: List[Tuple[float, int, str, str]]
    transmitters: Dict[Tuple[int, int], List[int]]
    update_trials: List[Tuple[float, int, str]]
    last_corruption_time: Optional[float]

    def time_to_reach(self, what: str, frac: float) -> Optional[float]:
        idx = {"frac_corrupt_undetected": 1, "frac_blank": 2, "frac_correct": 3, "frac_updated": 4}[what]
        for s in self.samples:
            if s[idx] >= frac:
                return s.time
        return None

    @property
    def final(self) -> MetricSample:
        return self.samples[-1]

    def to_csv(self) -> str:
        return samples_to_csv(self.samples)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


class Engine:
    """One simulation run, bound to a scenario and a seed."""

    def __init__(self, scenario: Scenario, seed: int):
        topo = scenario.topology
        for k in topo.klass:
            if k != LR_CLASS:
                raise ValueError(
                    "simulation supports device-class LR only; relay-class layouts "
                    "are covered by the recoverability graph analysis"
                )
        self.scenario = scenario
        self.topology = topo
        self.seed = seed
        self.params = scenario.params
        self.duration = scenario.duration
        self.mean_link_delay = (
            scenario.mean_link_delay if scenario.mean_link_delay is not None else topo.mean_link_delay
        )
        if self.mean_link_delay <= 0:
            raise ValueError("mean link delay must be positive")
        self._link_rate = 1.0 / self.mean_link_delay

        self._now = 0.0
        self._heap: List[tuple] = []
        self._eseq = 0

        self.phy_rng = stream(seed, "phy")
        self.adv_rng = stream(seed, "adversary")
        self.upd_rng = stream(seed, "update")

        self.operator = Operator(key=OPERATOR_KEY)
        self.operator_verifier = self.operator.verifier()
        spec = scenario.image
        self.certified: Dict[int, StreamSignedImage] = {
            spec.version: build_certified_image(spec, spec.version, self.operator)
        }
        self.update_version: Optional[int] = None
        if scenario.update is not None:
            self.update_version = (
                scenario.update.new_version
                if scenario.update.new_version is not None
                else spec.version + 1
            )
            if self.update_version <= spec.version:
                raise ValueError("update must increase the version")
            self.certified[self.update_version] = build_certified_image(
                spec, self.update_version, self.operator
            )

        base = self.certified[spec.version]
        self.devices: List[Device] = []
        for i in range(topo.n):
            dev_rng = stream(seed, "dev|%d" % i)
            attest_key = hashlib.sha256(b"attest|%d|%d" % (seed, i)).digest()[:16]
            bloom_keys = tuple(
                hashlib.sha256(b"bloom|%d|%d|%d" % (seed, i, k)).digest()[:16]
                for k in range(self.params.bloom_num_keys)
            )
            self.devices.append(
                Device(i, topo.klass[i], base, attest_key, bloom_keys, self.params, self, dev_rng)
            )
        for i in range(topo.n):
            for j in topo.adj[i]:
                if j > i:
                    pk = hashlib.sha256(b"pair|%d|%d|%d" % (seed, i, j)).digest()[:16]
                    rendezvous(self.devices[i], self.devices[j], pk)

        # metrics state
        self.n = topo.n
        self.counts = {HONEST: topo.n, CORRUPT: 0, BLANK: 0}
        self.n_updated = 0
        self.ever_corrupted: set = set()
        self.stats: Counter = Counter()
        self.transitions: List[Tuple[float, int, str, str]] = []
        self.transmitters: Dict[Tuple[int, int], List[int]] = {}
        self.update_trials: List[Tuple[float, int, str]] = []
        self.last_corruption_time: Optional[float] = None
        self.samples: List[MetricSample] = []

        self.adversary = Adversary(scenario.adversary, self, self.adv_rng)

        # bootstrap; adversary and update go first so equal-time samples see them
        self.adversary.start()
        if scenario.update is not None:
            self.schedule_at(scenario.update.at, self._operator_update_attempt)
        for dev in self.devices:
            dev.schedule_selfcheck()
        t = 0
        while t <= self.duration:
            self.schedule_at(float(t), self._take_sample)
            t += 1
        if self.duration != int(self.duration):
            self.schedule_at(self.duration, self._take_sample)

    # -- event loop -----------------------------------------------------------

    @property
    def now(self) -> float:
        return self._now

    def schedule(self, delay: float, fn: Callable, *args) -> None:
        self.schedule_at(self._now + delay, fn, *args)

    def schedule_at(self, t: float, fn: Callable, *args) -> None:
        if t < self._now:
            raise ValueError("cannot schedule into the past")
        self._eseq += 1
        heapq.heappush(self._heap, (t, self._eseq, fn, args))

    def run(self) -> MetricsTimeline:
        heap = self._heap
        while heap and heap[0][0] <= self.duration:
            t, _, fn, args = heapq.heappop(heap)
            self._now = t
            fn(*args)
        self._now = self.duration
        return MetricsTimeline(
            seed=self.seed,
            samples=self.samples,
            stats=self.stats,
            transitions=self.transitions,
            transmitters=self.transmitters,
            update_trials=self.update_trials,
            last_corruption_time=self.last_corruption_time,
        )

    def sample_exponential(self, rate: float, rng: random.Random) -> float:
        return sample_exponential(rate, rng)

    # -- physical layer ---------------------------------------------------------

    def broadcast(self, dev: Device, msg: Message) -> None:
        msg.sent_at = self._now
        self.stats["messages_sent"] += 1
        for nid in dev.neighbors:
            self._send_one(dev, nid, msg)

    def unicast(self, dev: Device, dst: int, msg: Message) -> None:
        msg.sent_at = self._now
        self.stats["messages_sent"] += 1
        self._send_one(dev, dst, msg)

    def _send_one(self, dev: Device, dst: int, msg: Message) -> None:
        key = dev.peer_key.get(dst)
        if key is None:
            self.stats["no_pair_key_dropped"] += 1
            return
        tag = keyed_digest(key, b"m|%s|%d|%d" % (msg.kind.encode(), msg.sender, msg.seq))
        delay = sample_exponential(self._link_rate, self.phy_rng)
        self.schedule(delay, self._deliver, dst, msg, tag)

    def _deliver(self, dst: int, msg: Message, tag: bytes) -> None:
        recipient = self.devices[dst]
        key = recipient.peer_key.get(msg.sender)
        if key is None or keyed_digest(key, b"m|%s|%d|%d" % (msg.kind.encode(), msg.sender, msg.seq)) != tag:
            self.stats["bad_tag_dropped"] += 1
            return
        self.stats["messages_delivered"] += 1
        recipient.on_message(msg)

    # -- corruption ---------------------------------------------------------------

    def corrupt_device(self, dev: Device) -> bool:
        if dev.status != HONEST:
            return False
        dev.ensure_filter()  # localization filter reflects the pre-tamper image
        count = dev.image.chunk_count
        kappa = min(self.scenario.adversary.kappa, count)
        indices = sorted(self.adv_rng.sample(range(count), kappa))
        dev.image = corrupt_chunks(dev.image, indices, self.adv_rng)
        dev.status = CORRUPT
        self.on_status_change(dev, HONEST, CORRUPT)
        self.ever_corrupted.add(dev.id)
        self.last_corruption_time = self._now
        self.stats["corruptions"] += 1
        self.adversary.on_corrupted(dev)
        return True

    def on_corrupt_message(self, dev: Device, msg: Message) -> None:
        self.adversary.handle_corrupt_message(dev, msg)

    # -- bookkeeping hooks ---------------------------------------------------------

    def on_status_change(self, dev: Device, old: str, new: str) -> None:
        self.counts[old] -= 1
        self.counts[new] += 1
        if self.update_version is not None and dev.version == self.update_version:
            if old == HONEST:
                self.n_updated -= 1
            if new == HONEST:
                self.n_updated += 1
        self.transitions.append((self._now, dev.id, old, new))

    def on_version_change(self, dev: Device, old: int, new: int) -> None:
        if self.update_version is not None and dev.status == HONEST:
            if old == self.update_version:
                self.n_updated -= 1
            if new == self.update_version:
                self.n_updated += 1

    def on_record_installed(self, dev: Device, version: int, rec) -> None:
        certified = self.certified.get(version)
        if certified is None or not 0 <= rec.index < certified.chunk_count:
            self.stats["tampered_install"] += 1
        elif rec != certified.records[rec.index]:
            self.stats["tampered_install"] += 1
        else:
            self.stats["records_installed"] += 1

    def count(self, key: str) -> None:
        self.stats[key] += 1

    def count_transmitter(self, requester: int, cycle: int, responder: int) -> None:
        self.transmitters.setdefault((requester, cycle), []).append(responder)

    # -- operator update -------------------------------------------------------------

    def _operator_update_attempt(self) -> None:
        upd = self.scenario.update
        pick = self.devices[self.upd_rng.randrange(self.n)]
        self.update_trials.append((self._now, pick.id, pick.status))
        if pick.status == CORRUPT:
            # the operator cannot root an update in a tampered device; retry
            self.schedule(upd.retry_interval, self._operator_update_attempt)
            return
        pick.operator_install(self.certified[self.update_version])

    # -- metrics ------------------------------------------------------------------------

    def _take_sample(self) -> None:
        n = self.n
        self.samples.append(
            MetricSample(
                self._now,
                self.counts[CORRUPT] / n,
                self.counts[BLANK] / n,
                self.counts[HONEST] / n,
                self.n_updated / n,
            )
        )


def run_scenario(scenario: Scenario, seed: int) -> MetricsTimeline:
    return Engine(scenario, seed).run()


def run_batch(scenario: Scenario, seeds: Sequence[int]) -> List[MetricsTimeline]:
    return [run_scenario(scenario, s) for s in seeds]
