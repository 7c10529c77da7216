"""Network topologies: random geometric meshes, complete trees, and the
induced application subgraph that decides whether recovery is possible.

Positions are in meters.  Mesh edges connect every pair within radio range;
generation resamples the whole layout until it is connected, since the
healing guarantees are stated for connected networks.  Link delay is a mean,
not a constant: the engine draws a fresh exponential delay per delivery.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_MEAN_LINK_DELAY = 0.020  # seconds

LR = "LR"
HR = "HR"


@dataclass(frozen=True)
class Topology:
    """Undirected device graph with positions and device classes.

    `ids` holds the device labels (original ids survive subgraph
    extraction); `adj` is indexed by local position in `ids`.
    """

    ids: Tuple[int, ...]
    pos: Tuple[Tuple[float, float], ...]
    klass: Tuple[str, ...]
    adj: Tuple[Tuple[int, ...], ...]
    mean_link_delay: float = DEFAULT_MEAN_LINK_DELAY

    def __post_init__(self):
        n = len(self.ids)
        if not (len(self.pos) == len(self.klass) == len(self.adj) == n):
            raise ValueError("field lengths disagree")
        for i, nbrs in enumerate(self.adj):
            for j in nbrs:
                if j == i:
                    raise ValueError("self-loop at %d" % i)
                if i not in self.adj[j]:
                    raise ValueError("asymmetric edge %d-%d" % (i, j))

    @property
    def n(self) -> int:
        return len(self.ids)

    def degree(self, i: int) -> int:
        return len(self.adj[i])

    def mean_degree(self) -> float:
        if self.n == 0:
            return 0.0
        return sum(len(a) for a in self.adj) / self.n

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        return len(_component(self.adj, 0)) == self.n

    def with_klass(self, hr_ids: Iterable[int]) -> "Topology":
        """Copy with the listed device ids marked HR, all others LR."""
        hr = set(hr_ids)
        klass = tuple(HR if d in hr else LR for d in self.ids)
        return Topology(self.ids, self.pos, klass, self.adj, self.mean_link_delay)


def _component(adj: Sequence[Sequence[int]], start: int) -> Set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return seen


def _largest_component_size(adj: Sequence[Sequence[int]]) -> int:
    remaining = set(range(len(adj)))
    best = 0
    while remaining:
        comp = _component(adj, next(iter(remaining)))
        best = max(best, len(comp))
        remaining -= comp
    return best


MESH_RETRY_LIMIT = 1000


def gen_mesh(n: int, area_side_m: float, range_m: float, rng: random.Random) -> Topology:
    """Uniform points in a square, edges within radio range, connected.

    Resamples the entire layout until connected; raises after
    MESH_RETRY_LIMIT failures, reporting the best component seen so that the
    caller learns how far off the parameters are.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    best = 0
    for _ in range(MESH_RETRY_LIMIT):
        pts = [(rng.uniform(0.0, area_side_m), rng.uniform(0.0, area_side_m)) for _ in range(n)]
        adj: List[List[int]] = [[] for _ in range(n)]
        if n > 1:
            tree = cKDTree(np.asarray(pts))
            for i, j in tree.query_pairs(range_m):
                adj[i].append(j)
                adj[j].append(i)
        size = _largest_component_size(adj) if n > 1 else 1
        if size == n:
            return Topology(
                ids=tuple(range(n)),
                pos=tuple(pts),
                klass=(LR,) * n,
                adj=tuple(tuple(sorted(a)) for a in adj),
            )
        best = max(best, size)
    raise RuntimeError(
        "no connected layout in %d attempts (largest component %d of %d); "
        "increase range or density" % (MESH_RETRY_LIMIT, best, n)
    )


def gen_tree(n: int, arity: int) -> Topology:
    """Complete-as-possible rooted tree, children of i at arity*i+1.. .

    Positions spread each level across a fixed width for plotting; they play
    no role in connectivity.
    """
    if arity not in (2, 3):
        raise ValueError("arity must be 2 or 3")
    if n < 1:
        raise ValueError("n must be at least 1")
    adj: List[List[int]] = [[] for _ in range(n)]
    for child in range(1, n):
        parent = (child - 1) // arity
        adj[parent].append(child)
        adj[child].append(parent)
    # level-order layout
    width = 1000.0
    pos: List[Tuple[float, float]] = []
    level_start, level_size, depth = 0, 1, 0
    for i in range(n):
        if i >= level_start + level_size:
            level_start += level_size
            level_size *= arity
            depth += 1
        k = i - level_start
        count = min(level_size, n - level_start)
        pos.append((width * (k + 0.5) / count, 100.0 * depth))
    return Topology(
        ids=tuple(range(n)),
        pos=tuple(pos),
        klass=(LR,) * n,
        adj=tuple(tuple(sorted(a)) for a in adj),
    )


def induced_app_graph(topo: Topology, holders: Iterable[int], hr_set: Iterable[int]) -> Topology:
    """The subgraph over which one application can heal.

    Vertices: every holder of the application, plus every HR device that
    reaches some holder through HR-only intermediate hops (HR devices relay,
    LR devices do not).  Edges are induced from the full graph.
    """
    id_to_local = {d: i for i, d in enumerate(topo.ids)}
    holder_locals = {id_to_local[d] for d in holders}
    hr_locals = {id_to_local[d] for d in hr_set}
    if not holder_locals <= set(range(topo.n)):
        raise ValueError("holders must be nodes of the topology")
    # search the relay graph: holders and HR devices only
    allowed = holder_locals | hr_locals
    keep = set(holder_locals)
    frontier = list(holder_locals)
    seen = set(holder_locals)
    while frontier:
        nxt = []
        for v in frontier:
            for w in topo.adj[v]:
                if w in allowed and w not in seen:
                    seen.add(w)
                    nxt.append(w)
                    keep.add(w)
        frontier = nxt
    ordered = sorted(keep)
    remap = {v: i for i, v in enumerate(ordered)}
    return Topology(
        ids=tuple(topo.ids[v] for v in ordered),
        pos=tuple(topo.pos[v] for v in ordered),
        klass=tuple(topo.klass[v] for v in ordered),
        adj=tuple(
            tuple(remap[w] for w in topo.adj[v] if w in keep) for v in ordered
        ),
        mean_link_delay=topo.mean_link_delay,
    )


def recoverability_check(g_b: Topology, honest_holders: Iterable[int]) -> bool:
    """True iff the app subgraph is connected and an honest holder exists."""
    if g_b.n == 0:
        return False
    if not g_b.is_connected():
        return False
    return bool(set(honest_holders) & set(g_b.ids))


def write_topology(topo: Topology, path: str) -> None:
    """Plain-text edge list with a node header, round-trippable."""
    lines = ["# swarmheal topology", "n=%d mean_link_delay=%r" % (topo.n, topo.mean_link_delay)]
    for i in range(topo.n):
        x, y = topo.pos[i]
        lines.append("node %d %r %r %s" % (topo.ids[i], x, y, topo.klass[i]))
    for i in range(topo.n):
        for j in topo.adj[i]:
            if i < j:
                lines.append("edge %d %d" % (topo.ids[i], topo.ids[j]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_topology(path: str) -> Topology:
    ids: List[int] = []
    pos: List[Tuple[float, float]] = []
    klass: List[str] = []
    edges: List[Tuple[int, int]] = []
    n_declared = None
    delay = DEFAULT_MEAN_LINK_DELAY
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("n="):
                parts = dict(p.split("=", 1) for p in line.split())
                n_declared = int(parts["n"])
                delay = float(parts.get("mean_link_delay", delay))
            elif line.startswith("node "):
                _, d, x, y, kl = line.split()
                if kl not in (LR, HR):
                    raise ValueError("bad device class %r" % kl)
                ids.append(int(d))
                pos.append((float(x), float(y)))
                klass.append(kl)
            elif line.startswith("edge "):
                _, a, b = line.split()
                edges.append((int(a), int(b)))
            else:
                raise ValueError("unrecognized line %r" % line)
    if n_declared is not None and n_declared != len(ids):
        raise ValueError("header says n=%d, found %d nodes" % (n_declared, len(ids)))
    local = {d: i for i, d in enumerate(ids)}
    adj: List[List[int]] = [[] for _ in ids]
    for a, b in edges:
        if a not in local or b not in local:
            raise ValueError("edge references unknown node %d-%d" % (a, b))
        adj[local[a]].append(local[b])
        adj[local[b]].append(local[a])
    return Topology(
        ids=tuple(ids),
        pos=tuple(pos),
        klass=tuple(klass),
        adj=tuple(tuple(sorted(a)) for a in adj),
        mean_link_delay=delay,
    )
