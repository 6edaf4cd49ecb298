"""Contact-connection-constraint (CCC) graph and graph-guided chromosome seeding.

A sequence chromosome is a plain list of part ids where index 0 holds the
part removed *last*; the removal order is the reversed list.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

from .exceptions import InitializationStalled
from .model import DIRECTIONS, AssemblyModel

RETRY_BUDGET = 20


@dataclass(frozen=True)
class CccGraph:
    nodes: frozenset[int]
    contact: frozenset[frozenset[int]]
    connection: frozenset[frozenset[int]]
    constraint: frozenset[tuple[int, int]]
    base: int
    fasteners: frozenset[int]

    @property
    def links(self) -> list[tuple[str, tuple[int, int]]]:
        """All typed links as ``(tag, (u, v))``; undirected pairs have ``u < v``."""
        out = [("contact", tuple(sorted(e))) for e in self.contact]
        out += [("connection", tuple(sorted(e))) for e in self.connection]
        out += [("constraint", e) for e in self.constraint]
        return sorted(out, key=lambda t: (t[0], t[1]))

    def neighbours(self, node: int) -> set[int]:
        """Adjacent nodes in the undirected contact/connection skeleton."""
        out = set()
        for e in self.contact | self.connection:
            if node in e:
                out |= e - {node}
        return out

    def attached_fasteners(self, node: int) -> set[int]:
        return {
            other
            for e in self.connection
            if node in e
            for other in e - {node}
            if other in self.fasteners
        }

    def without(self, node: int) -> "CccGraph":
        return replace(
            self,
            nodes=self.nodes - {node},
            contact=frozenset(e for e in self.contact if node not in e),
            connection=frozenset(e for e in self.connection if node not in e),
            constraint=frozenset(e for e in self.constraint if node not in e),
            fasteners=self.fasteners - {node},
        )


def build_graph(model: AssemblyModel) -> CccGraph:
    rel = model.relations

    def undirected(m: np.ndarray) -> frozenset[frozenset[int]]:
        return frozenset(
            frozenset((int(u) + 1, int(v) + 1)) for u, v in zip(*np.nonzero(np.triu(m)))
        )

    return CccGraph(
        nodes=frozenset(range(1, model.eta + 1)),
        contact=undirected(rel.contact),
        connection=undirected(rel.connection),
        constraint=frozenset(
            (int(u) + 1, int(v) + 1) for u, v in zip(*np.nonzero(rel.constraint))
        ),
        base=model.base_id,
        fasteners=frozenset(model.fastener_ids),
    )


def distances_from_base(graph: CccGraph) -> dict[int, int]:
    """BFS hop counts over contact and connection links only."""
    adj: dict[int, set[int]] = {n: set() for n in graph.nodes}
    for e in graph.contact | graph.connection:
        u, v = tuple(e)
        adj[u].add(v)
        adj[v].add(u)
    dist = {graph.base: 0}
    queue = deque([graph.base])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def distance_layers(graph: CccGraph) -> list[frozenset[int]]:
    """Candidate layers: unreachable nodes first, then reachable ones far to near."""
    dist = distances_from_base(graph)
    unreachable = frozenset(graph.nodes - dist.keys())
    by_hops: dict[int, set[int]] = {}
    for node, d in dist.items():
        if node != graph.base:
            by_hops.setdefault(d, set()).add(node)
    layers = [unreachable] if unreachable else []
    layers += [frozenset(by_hops[d]) for d in sorted(by_hops, reverse=True)]
    return layers


def constraint_free(graph: CccGraph) -> set[int]:
    blocked = {v for _, v in graph.constraint}
    return set(graph.nodes - blocked - {graph.base})


def collision_free(layer: Iterable[int], graph: CccGraph, model: AssemblyModel) -> set[int]:
    """Members of ``layer`` with at least one unobstructed removal direction."""
    remaining = np.zeros(model.eta, dtype=bool)
    remaining[[n - 1 for n in graph.nodes]] = True
    out = set()
    for u in layer:
        rows = model.relations.interference[u - 1]
        others = remaining.copy()
        others[u - 1] = False
        for d in model.part(u).geometry.removal_directions:
            if not (rows[:, DIRECTIONS.index(d)] & others).any():
                out.add(u)
                break
    return out


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _build_one(model: AssemblyModel, rng: np.random.Generator) -> list[int] | None:
    # Bitmask twin of distance_layers / constraint_free / collision_free;
    # tests pin it to the set-based functions above.
    m = model.masks
    remaining = m.all_bits
    order: list[int] = []
    while remaining & ~m.base_bit:
        visited = m.base_bit
        frontier = m.base_bit
        hops = []
        while frontier:
            nxt = 0
            for u in _bits(frontier):
                nxt |= m.skeleton[u]
            nxt &= remaining & ~visited
            if nxt:
                hops.append(nxt)
            visited |= nxt
            frontier = nxt
        unreachable = remaining & ~visited
        layers = ([unreachable] if unreachable else []) + hops[::-1]

        pick = None
        for layer in layers:
            candidates = []
            for u in _bits(layer):
                if m.predecessors[u] & remaining:
                    continue
                others = remaining & ~(1 << u)
                if any(m.blockers[u][d] & others == 0 for d in m.removal_dir_index[u]):
                    candidates.append(u)
            if not candidates:
                continue
            pool = [u for u in candidates if m.fastener_bits >> u & 1]
            if not pool:
                pool = [
                    u
                    for u in candidates
                    if m.regular_bits >> u & 1 and not m.connection[u] & remaining
                ]
            if pool:
                pick = int(rng.choice(pool))
                if not m.fastener_bits >> pick & 1:
                    attached = list(_bits(m.connection[pick] & remaining & m.fastener_bits))
                    if attached:
                        pick = int(rng.choice(attached))
                break
        if pick is None:
            return None
        order.insert(0, pick + 1)
        remaining &= ~(1 << pick)
    return order


def initialize_population(model: AssemblyModel, n_genes: int, rng_seed: int) -> list[list[int]]:
    """Grow ``n_genes`` chromosomes with the graph-guided picking rule.

    Chromosome ``l`` draws from its own RNG stream keyed on ``(rng_seed, l,
    attempt)``, so populations are reproducible and independent of
    ``n_genes``. A build that runs out of admissible nodes is retried up to
    ``RETRY_BUDGET`` times before :class:`InitializationStalled` is raised.
    """
    if n_genes < 0:
        raise ValueError("n_genes must be non-negative")
    population = []
    for index in range(n_genes):
        for attempt in range(RETRY_BUDGET + 1):
            seq = np.random.SeedSequence(entropy=rng_seed, spawn_key=(index, attempt))
            chromosome = _build_one(model, np.random.default_rng(seq))
            if chromosome is not None:
                population.append(chromosome)
                break
        else:
            raise InitializationStalled(
                f"chromosome {index}: no admissible part after {RETRY_BUDGET} retries"
            )
    return population


def random_population(model: AssemblyModel, n_genes: int, rng_seed: int) -> list[list[int]]:
    """Uniform random permutations of the removable parts (baseline initializer)."""
    rng = np.random.default_rng(rng_seed)
    ids = np.array(model.removable_ids)
    return [[int(x) for x in rng.permutation(ids)] for _ in range(n_genes)]


def to_networkx(graph: CccGraph, model: AssemblyModel | None = None) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    for n in sorted(graph.nodes):
        kind = model.part(n).label.kind if model is not None else (
            "base" if n == graph.base else "fastener" if n in graph.fasteners else "regular"
        )
        g.add_node(n, kind=kind)
    for tag, (u, v) in graph.links:
        g.add_edge(u, v, tag=tag)
    return g


def write_graph(graph: CccGraph, path: str | Path, model: AssemblyModel | None = None) -> None:
    """Dump the graph as GraphML (node attribute ``kind``, edge attribute ``tag``)."""
    nx.write_graphml(to_networkx(graph, model), str(path))
