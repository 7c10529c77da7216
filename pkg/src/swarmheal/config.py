"""Experiment configuration: flat key=value files with flag overrides.

An empty config reproduces the headline experiment out of the box: a
1024-device mesh, 30% initially corrupt spread uniformly, internal
propagation at the self-check rate, an operator update at 500 s, ten
seeds, 1000 simulated seconds.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

from .adversary import EXTERNAL, INTERNAL, ISLAND, NONE, UNIFORM, AdversaryConfig
from .engine import ImageSpec, Scenario, UpdateConfig
from .protocol import ProtocolParams
from .topology import Topology, gen_mesh, gen_tree

MESH, BTREE, TTREE = "mesh", "btree", "ttree"

# paper-scale mesh: 1024 devices over a 4 km x 4 km square
_REF_NODES = 1024
_REF_SIDE_M = 4000.0


class ConfigError(ValueError):
    """A config key is unknown, malformed, or contradictory."""


def _fail(key: str, problem: str) -> None:
    raise ConfigError(f"{key}: {problem}")


def _parse_number(key: str, raw: str) -> float:
    """Floats, plus convenience fractions like 1/400."""
    try:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    except (ValueError, ZeroDivisionError):
        _fail(key, f"expected a number, got {raw!r}")


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        _fail(key, f"expected an integer, got {raw!r}")


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    _fail(key, f"expected a boolean, got {raw!r}")


def _parse_optional_number(key: str, raw: str) -> Optional[float]:
    if raw.lower() in ("none", "off"):
        return None
    return _parse_number(key, raw)


def parse_seeds(key: str, raw: str) -> Tuple[int, ...]:
    """Comma lists ("0,1,5") or inclusive ranges ("0..9")."""
    raw = raw.strip()
    if ".." in raw:
        lo_s, hi_s = raw.split("..", 1)
        lo, hi = _parse_int(key, lo_s), _parse_int(key, hi_s)
        if hi < lo:
            _fail(key, f"range {raw!r} is empty")
        return tuple(range(lo, hi + 1))
    seeds = tuple(_parse_int(key, part) for part in raw.split(","))
    if len(set(seeds)) != len(seeds):
        _fail(key, "seeds must be distinct")
    return seeds


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved experiment description."""

    topology: str = MESH
    nodes: int = 1024
    topology_seed: int = 42
    area_side_m: Optional[float] = None  # None: scale with density of the reference mesh
    range_m: float = 200.0
    link_delay_ms: Optional[float] = None  # None: topology default (20 ms)

    adversary: str = INTERNAL
    f: Optional[float] = None  # None: 0.30 internal, 0 otherwise
    configuration: str = "C0"
    lam_int: Optional[float] = None  # None: 1/100 when internal
    lam_ext: Optional[float] = None  # None: 1/100 when external
    t0: float = 0.0
    halt_spread_at: Optional[float] = None
    disconnect_at: Optional[float] = None  # None: 300 s when external
    bogus_responders: bool = False
    kappa: int = 4

    ttl: int = 1
    lam: float = 1 / 100
    lam_min: float = 1 / 400
    lam_max: float = 1 / 100
    delta_cap: int = 1
    theta: float = 1.0
    threshold_selfcheck: Optional[float] = None

    update: bool = True
    update_at: Optional[float] = None  # None: 500 s internal, 700 s external
    new_version: Optional[int] = None
    retry_interval: float = 10.0

    chunk_count: int = 64
    chunk_size: int = 256

    duration: float = 1000.0
    seeds: Tuple[int, ...] = tuple(range(10))
    out_dir: str = "runs"

    # -- resolved views ------------------------------------------------------

    @property
    def frac_initial(self) -> float:
        if self.f is not None:
            return self.f
        return 0.30 if self.adversary == INTERNAL else 0.0

    @property
    def internal_rate(self) -> Optional[float]:
        if self.adversary != INTERNAL:
            return None
        return self.lam_int if self.lam_int is not None else 1 / 100

    @property
    def external_rate(self) -> Optional[float]:
        if self.adversary != EXTERNAL:
            return None
        return self.lam_ext if self.lam_ext is not None else 1 / 100

    @property
    def external_disconnect(self) -> Optional[float]:
        if self.adversary != EXTERNAL:
            return None
        return self.disconnect_at if self.disconnect_at is not None else 300.0

    @property
    def update_time(self) -> Optional[float]:
        if not self.update:
            return None
        if self.update_at is not None:
            return self.update_at
        if self.adversary == INTERNAL:
            default = 500.0
        elif self.adversary == EXTERNAL:
            default = 700.0
        else:
            return None  # quiet network: no default update
        # a defaulted update quietly drops out of runs too short to hold it
        return default if default <= self.duration else None

    @property
    def mesh_side_m(self) -> float:
        if self.area_side_m is not None:
            return self.area_side_m
        return _REF_SIDE_M * math.sqrt(self.nodes / _REF_NODES)

    def validate(self) -> "ScenarioConfig":
        if self.topology not in (MESH, BTREE, TTREE):
            _fail("topology", f"must be one of mesh|btree|ttree, got {self.topology!r}")
        if self.nodes < 1:
            _fail("nodes", "must be at least 1")
        if self.adversary not in (INTERNAL, EXTERNAL, NONE):
            _fail("adversary", f"must be internal|external|none, got {self.adversary!r}")
        if self.configuration not in ("C0", "C1"):
            _fail("configuration", f"must be C0 or C1, got {self.configuration!r}")
        if self.f is not None and not 0.0 <= self.f <= 1.0:
            _fail("f", "must lie in [0, 1]")
        if self.adversary == EXTERNAL and self.f not in (None, 0.0):
            _fail("f", "the external adversary starts from an all-honest network")
        if self.adversary == EXTERNAL and self.configuration == "C1":
            _fail("configuration", "C1 describes initial corruption; contradictory with adversary=external")
        if self.ttl < 0:
            _fail("ttl", "must be nonnegative")
        if not 0 < self.lam_min <= self.lam <= self.lam_max:
            _fail("lambda", "need 0 < lambda_min <= lambda <= lambda_max")
        if self.delta_cap < 1:
            _fail("delta_cap", "must be at least 1")
        if self.theta <= 0:
            _fail("theta", "must be positive")
        if self.threshold_selfcheck is not None and self.threshold_selfcheck <= 0:
            _fail("threshold_selfcheck", "must be positive")
        if self.duration <= 0:
            _fail("duration", "must be positive")
        if self.update_time is not None and self.update_time > self.duration:
            _fail("update_at", "update is scheduled after the simulation ends")
        if self.retry_interval <= 0:
            _fail("retry_interval", "must be positive")
        if self.kappa < 1:
            _fail("kappa", "must be at least 1")
        if self.chunk_count < 1 or self.chunk_size < 1:
            _fail("chunk_count", "image geometry must be positive")
        if not self.seeds:
            _fail("seeds", "need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            _fail("seeds", "seeds must be distinct")
        return self


# key -> (attribute, parser)
_PARSERS = {
    "topology": ("topology", lambda k, v: v.strip()),
    "nodes": ("nodes", _parse_int),
    "topology_seed": ("topology_seed", _parse_int),
    "area_side_m": ("area_side_m", _parse_optional_number),
    "range_m": ("range_m", _parse_number),
    "link_delay_ms": ("link_delay_ms", _parse_optional_number),
    "adversary": ("adversary", lambda k, v: v.strip().lower()),
    "f": ("f", _parse_number),
    "configuration": ("configuration", lambda k, v: v.strip().upper()),
    "lam_int": ("lam_int", _parse_number),
    "lam_ext": ("lam_ext", _parse_number),
    "t0": ("t0", _parse_number),
    "halt_spread_at": ("halt_spread_at", _parse_optional_number),
    "disconnect_at": ("disconnect_at", _parse_optional_number),
    "bogus_responders": ("bogus_responders", _parse_bool),
    "kappa": ("kappa", _parse_int),
    "ttl": ("ttl", _parse_int),
    "lambda": ("lam", _parse_number),
    "lambda_min": ("lam_min", _parse_number),
    "lambda_max": ("lam_max", _parse_number),
    "delta_cap": ("delta_cap", _parse_int),
    "theta": ("theta", _parse_number),
    "threshold_selfcheck": ("threshold_selfcheck", _parse_optional_number),
    "update": ("update", _parse_bool),
    "update_at": ("update_at", _parse_optional_number),
    "new_version": ("new_version", _parse_int),
    "retry_interval": ("retry_interval", _parse_number),
    "chunk_count": ("chunk_count", _parse_int),
    "chunk_size": ("chunk_size", _parse_int),
    "duration": ("duration", _parse_number),
    "seeds": ("seeds", parse_seeds),
    "out_dir": ("out_dir", lambda k, v: v.strip()),
}


def _parse_pairs(pairs: Sequence[Tuple[str, str]]) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for key, raw in pairs:
        key = key.strip()
        if key not in _PARSERS:
            _fail(key, "unknown config key")
        attr, parser = _PARSERS[key]
        values[attr] = parser(key, raw.strip())
    return values


def read_config_lines(lines: Sequence[str], source: str = "<config>") -> List[Tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(lines, 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, raw = stripped.split("=", 1)
        pairs.append((key, raw))
    return pairs


def parse_config(path: Optional[str] = None,
                 overrides: Sequence[str] = ()) -> ScenarioConfig:
    """Load `key = value` lines from `path`, then apply `key=value` overrides.

    Later sources win: overrides beat the file, the file beats defaults.
    """
    pairs: List[Tuple[str, str]] = []
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            pairs.extend(read_config_lines(fh.read().splitlines(), source=str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        pairs.append((key, raw))
    cfg = ScenarioConfig(**_parse_pairs(pairs))
    return cfg.validate()


def build_topology(cfg: ScenarioConfig) -> Topology:
    if cfg.topology == MESH:
        return gen_mesh(cfg.nodes, cfg.mesh_side_m, cfg.range_m,
                        random.Random(cfg.topology_seed))
    arity = 2 if cfg.topology == BTREE else 3
    return gen_tree(cfg.nodes, arity)


def build_scenario(cfg: ScenarioConfig, topo: Optional[Topology] = None) -> Scenario:
    cfg.validate()
    if topo is None:
        topo = build_topology(cfg)
    params = ProtocolParams(
        ttl=cfg.ttl,
        delta_cap=cfg.delta_cap,
        theta=cfg.theta,
        lam_init=cfg.lam,
        lam_min=cfg.lam_min,
        lam_max=cfg.lam_max,
        selfcheck_cap=cfg.threshold_selfcheck,
    )
    adv = AdversaryConfig(
        mode=cfg.adversary,
        frac_initial=cfg.frac_initial,
        placement=ISLAND if cfg.configuration == "C1" else UNIFORM,
        t0=cfg.t0,
        lam_internal=cfg.internal_rate,
        lam_external=cfg.external_rate,
        kappa=cfg.kappa,
        halt_spread_at=cfg.halt_spread_at,
        disconnect_at=cfg.external_disconnect,
        bogus_responders=cfg.bogus_responders,
    )
    update = None
    if cfg.update_time is not None:
        update = UpdateConfig(at=cfg.update_time, new_version=cfg.new_version,
                              retry_interval=cfg.retry_interval)
    image = ImageSpec(chunk_count=cfg.chunk_count, chunk_size=cfg.chunk_size)
    delay = None if cfg.link_delay_ms is None else cfg.link_delay_ms / 1000.0
    return Scenario(
        topology=topo,
        params=params,
        adversary=adv,
        update=update,
        image=image,
        duration=cfg.duration,
        mean_link_delay=delay,
    )


def describe(cfg: ScenarioConfig) -> str:
    """One-line-per-key rendering of the resolved configuration."""
    rows = []
    for fld in fields(cfg):
        rows.append(f"{fld.name} = {getattr(cfg, fld.name)!r}")
    rows.append(f"resolved frac_initial = {cfg.frac_initial}")
    rows.append(f"resolved update_time = {cfg.update_time}")
    rows.append(f"resolved mesh_side_m = {cfg.mesh_side_m if cfg.topology == MESH else None}")
    return "\n".join(rows)
