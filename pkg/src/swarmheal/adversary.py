"""Corruption models driving a simulation run.

Two attacker shapes, matching the scenarios the simulator reports on:

* internal: some fraction of devices starts corrupted (uniformly placed or
  as one contiguous island) and each corrupt device tries to corrupt a
  uniform neighbor at an exponential rate until it is detected and wiped.
* external: every device faces a one-shot corruption clock at a fixed rate
  until the attacker is disconnected; a device is hit at most once.

Corrupt devices normally stay silent.  With ``bogus_responders`` they
instead answer code requests like a repair peer would, serving records
from their own tampered image or outright random ones, which exercises
the requester's verification path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .protocol import CHUNK_ACK, CHUNK_FIRST, CHUNK_REST, CORRUPT, HONEST, REQ, Message, compute_backoff
from .topology import Topology

UNIFORM = "uniform"
ISLAND = "island"

INTERNAL = "internal"
EXTERNAL = "external"
NONE = "none"


@dataclass(frozen=True)
class AdversaryConfig:
    mode: str = NONE
    frac_initial: float = 0.0
    placement: str = UNIFORM
    t0: float = 0.0
    lam_internal: Optional[float] = None
    lam_external: Optional[float] = None
    kappa: int = 4
    halt_spread_at: Optional[float] = None
    disconnect_at: Optional[float] = None
    bogus_responders: bool = False
    initial_corrupt_ids: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.mode not in (INTERNAL, EXTERNAL, NONE):
            raise ValueError("unknown adversary mode %r" % (self.mode,))
        if self.placement not in (UNIFORM, ISLAND):
            raise ValueError("unknown placement %r" % (self.placement,))
        if not 0.0 <= self.frac_initial <= 1.0:
            raise ValueError("frac_initial must lie in [0, 1]")
        if self.kappa < 1:
            raise ValueError("kappa must be positive")
        if self.mode == INTERNAL and self.lam_internal is None and self.frac_initial == 0 and not self.initial_corrupt_ids:
            raise ValueError("internal mode needs an initial set or a spread rate")
        if self.mode == EXTERNAL and self.lam_external is None:
            raise ValueError("external mode needs lam_external")
        if self.mode == EXTERNAL and self.placement == ISLAND:
            raise ValueError(
                "island placement is an initial-configuration concept; the "
                "external adversary starts from an all-honest network"
            )


def initial_corrupt_set(topo: Topology, cfg: AdversaryConfig, rng) -> List[int]:
    """Pick the devices corrupted at t0, sorted for deterministic replay."""
    if cfg.initial_corrupt_ids is not None:
        bad = [i for i in cfg.initial_corrupt_ids if not 0 <= i < topo.n]
        if bad:
            raise ValueError("initial corrupt ids out of range: %r" % (bad,))
        return sorted(set(cfg.initial_corrupt_ids))
    count = round(cfg.frac_initial * topo.n)
    if count == 0:
        return []
    if cfg.placement == UNIFORM:
        return sorted(rng.sample(range(topo.n), count))
    # island: breadth-first ball around a random seed node
    start = rng.randrange(topo.n)
    chosen = [start]
    seen = {start}
    frontier = [start]
    while frontier and len(chosen) < count:
        nxt = []
        for node in frontier:
            for nb in topo.adj[node]:
                if nb not in seen:
                    seen.add(nb)
                    chosen.append(nb)
                    nxt.append(nb)
                    if len(chosen) == count:
                        return sorted(chosen)
        frontier = nxt
    if len(chosen) < count:
        raise ValueError(
            "island of %d devices does not fit in the component around node %d" % (count, start)
        )
    return sorted(chosen)


class Adversary:
    """Drives corruption events against a running engine."""

    def __init__(self, cfg: AdversaryConfig, engine, rng):
        self.cfg = cfg
        self.eng = engine
        self.rng = rng
        # internal-spread state: per-device infection episode counter and the
        # neighbor id that episode latched onto as its fixed target
        self._episode: Dict[int, int] = {}
        self._target: Dict[int, int] = {}
        # bogus-responder state: strategy per corrupt device, offers in flight
        self._strategy: Dict[int, str] = {}
        self._pending: Dict[Tuple[int, int, int], List[int]] = {}

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        cfg = self.cfg
        if cfg.mode == NONE:
            return
        initial = initial_corrupt_set(self.eng.topology, cfg, self.rng)
        if initial:
            self.eng.schedule_at(cfg.t0, self._corrupt_initial, tuple(initial))
        if cfg.mode == EXTERNAL:
            for dev in self.eng.devices:
                t = cfg.t0 + self.eng.sample_exponential(cfg.lam_external, self.rng)
                if cfg.disconnect_at is None or t < cfg.disconnect_at:
                    self.eng.schedule_at(t, self._external_attempt, dev.id)

    def _corrupt_initial(self, ids: Tuple[int, ...]) -> None:
        for dev_id in ids:
            self.eng.corrupt_device(self.eng.devices[dev_id])

    def on_corrupted(self, dev) -> None:
        """Engine callback: a device just flipped to corrupt.

        Each corruption episode fixes its spread target once, up front: the
        malware instance latches onto one uniformly chosen neighbor and keeps
        attempting that same neighbor until the host is wiped.  Leaf devices
        therefore hammer their lone (often already-corrupt) neighbor, and two
        attackers may waste effort on a shared target — which is what keeps
        the effective spread rate below the self-check rate and lets the
        network drain the infection.
        """
        cfg = self.cfg
        if cfg.mode != INTERNAL or cfg.lam_internal is None:
            return
        if cfg.halt_spread_at is not None and self.eng.now >= cfg.halt_spread_at:
            return
        episode = self._episode.get(dev.id, 0) + 1
        self._episode[dev.id] = episode
        if not dev.neighbors:
            return  # isolated attacker: nothing to aim at
        self._target[dev.id] = dev.neighbors[self.rng.randrange(len(dev.neighbors))]
        self._schedule_attempt(dev.id, episode)

    def _schedule_attempt(self, dev_id: int, episode: int) -> None:
        delay = self.eng.sample_exponential(self.cfg.lam_internal, self.rng)
        self.eng.schedule(delay, self._internal_attempt, dev_id, episode)

    def _internal_attempt(self, dev_id: int, episode: int) -> None:
        dev = self.eng.devices[dev_id]
        if dev.status != CORRUPT or self._episode.get(dev_id) != episode:
            return  # detected and wiped (or a fresh infection took over)
        cfg = self.cfg
        if cfg.halt_spread_at is not None and self.eng.now >= cfg.halt_spread_at:
            return
        target = self.eng.devices[self._target[dev_id]]
        if target.status == HONEST:
            self.eng.corrupt_device(target)
        self._schedule_attempt(dev_id, episode)

    def _external_attempt(self, dev_id: int) -> None:
        dev = self.eng.devices[dev_id]
        # one-shot: a device already hit once (even if healed) is not re-hit
        if dev.status == HONEST and dev_id not in self.eng.ever_corrupted:
            self.eng.corrupt_device(dev)

    # -- bogus responses ------------------------------------------------------

    def handle_corrupt_message(self, dev, msg: Message) -> None:
        """Traffic arriving at a corrupt device; silence unless configured."""
        if not self.cfg.bogus_responders:
            self.eng.count("dropped_by_corrupt")
            return
        if msg.kind == REQ:
            self._bogus_offer(dev, msg)
        elif msg.kind == CHUNK_ACK and msg.body.get("responder") == dev.id:
            self._bogus_rest(dev, msg.sender, msg.body["cycle"])
        else:
            self.eng.count("dropped_by_corrupt")

    def _strategy_for(self, dev) -> str:
        st = self._strategy.get(dev.id)
        if st is None:
            st = "self" if dev.rng.random() < 0.5 else "random"
            self._strategy[dev.id] = st
        return st

    def _bogus_offer(self, dev, msg: Message) -> None:
        body = msg.body
        if body["app"] != dev.app_id:
            return
        # keep up appearances: obey the same backoff discipline
        tau = compute_backoff(
            dev.p.delta_cap, dev.p.theta, body["deg"], max(dev.version, body["version"]),
            body["version"], dev.rng,
        )
        fire = max(0.0, msg.sent_at + tau - self.eng.now)
        self.eng.schedule(fire, self._bogus_first, dev.id, msg.sender, body["q"], tuple(body["pi"]))

    def _fake_record(self, dev, index: int):
        from .image import ChunkRecord

        payload = dev.rng.randbytes(dev.image.chunk_size)
        succ = b"" if index == dev.image.chunk_count - 1 else dev.rng.randbytes(16)
        return ChunkRecord(index, payload, succ)

    def _bogus_first(self, dev_id: int, requester: int, cycle: int, pi: Tuple[int, ...]) -> None:
        dev = self.eng.devices[dev_id]
        if dev.status != CORRUPT:
            return
        img = dev.image
        plan = [i for i in pi if 0 <= i < img.chunk_count] or list(range(img.chunk_count))
        strategy = self._strategy_for(dev)
        first = img.records[plan[0]] if strategy == "self" else self._fake_record(dev, plan[0])
        body = {
            "cycle": cycle,
            "version": img.version,
            "chunk_count": img.chunk_count,
            "chunk_size": img.chunk_size,
            "head_cert": img.head_cert,
            "record": first,
            "planned": len(plan),
        }
        self._pending[(dev_id, requester, cycle)] = plan
        self.eng.count("bogus_first_sent")
        self.eng.unicast(dev, requester, Message(CHUNK_FIRST, dev.id, dev.next_seq(), body))

    def _bogus_rest(self, dev, requester: int, cycle: int) -> None:
        if dev.status != CORRUPT:
            return
        plan = self._pending.pop((dev.id, requester, cycle), None)
        if plan is None or len(plan) <= 1:
            return
        strategy = self._strategy_for(dev)
        if strategy == "self":
            rest = [dev.image.records[i] for i in plan[1:]]
        else:
            rest = [self._fake_record(dev, i) for i in plan[1:]]
        self.eng.count("bogus_rest_sent")
        body = {"cycle": cycle, "records": tuple(rest)}
        self.eng.unicast(dev, requester, Message(CHUNK_REST, dev.id, dev.next_seq(), body))
