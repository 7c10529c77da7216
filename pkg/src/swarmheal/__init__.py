"""Protocol library and deterministic simulator for self-healing device swarms.

Devices detect firmware tampering with keyed attestation, localize damaged
chunks through a secret-keyed bloom filter, and rebuild their image from
neighbors over a stream-signed chunk transfer.  A discrete-event engine runs
whole networks of such devices under configurable adversaries, and the
analytics module reproduces the closed-form results the design rests on.
"""

from .adversary import AdversaryConfig
from .config import ScenarioConfig, build_scenario, build_topology, parse_config
from .engine import (
    CSV_HEADER,
    Engine,
    ImageSpec,
    MetricsTimeline,
    Scenario,
    UpdateConfig,
    run_batch,
    run_scenario,
)
from .protocol import ProtocolParams
from .topology import Topology, gen_mesh, gen_tree

__version__ = "0.1.0"

__all__ = [
    "AdversaryConfig",
    "CSV_HEADER",
    "Engine",
    "ImageSpec",
    "MetricsTimeline",
    "ProtocolParams",
    "Scenario",
    "ScenarioConfig",
    "Topology",
    "UpdateConfig",
    "build_scenario",
    "build_topology",
    "gen_mesh",
    "gen_tree",
    "parse_config",
    "run_batch",
    "run_scenario",
    "__version__",
]
