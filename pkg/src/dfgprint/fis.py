"""n-fragment inclusion score.

The score of ``h`` in ``g`` is the fraction of random connected n-edge
fragments of ``h`` that embed in ``g`` (injective on vertices, labels equal,
edge directions kept, extra edges in ``g`` allowed).

Fragments are grown one edge at a time: a uniformly random seed edge, then
repeatedly a uniformly random unchosen edge touching the chosen vertices.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from dfgprint import kernels
from dfgprint.graph import DataFlowGraph, GraphError


@dataclass(frozen=True)
class FisParams:
    n: int = 5
    k: int = 500
    seed: int = 0
    max_restarts: int = 50

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be >= 1")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")


@dataclass(frozen=True)
class FisScore:
    value: float
    hits: int
    trials: int
    effective_n: int

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "hits": self.hits,
            "trials": self.trials,
            "effective_n": self.effective_n,
        }


class FragmentSampler:
    """Draws connected edge-grown fragments from a fixed graph."""

    def __init__(self, h: DataFlowGraph):
        if h.num_edges == 0:
            raise GraphError("cannot sample fragments from a graph without edges")
        self.h = h
        self.edges = h.sorted_edges()
        incident: dict[int, list[int]] = {v: [] for v in h.vertices}
        for i, (a, b) in enumerate(self.edges):
            incident[a].append(i)
            incident[b].append(i)
        self.incident = incident

    def grow(self, n: int, rng: random.Random) -> list[int]:
        """One growth attempt; may return fewer than ``n`` edge indices."""
        first = rng.randrange(len(self.edges))
        chosen = [first]
        taken = {first}
        a, b = self.edges[first]
        verts = {a, b}
        frontier = [i for v in sorted(verts) for i in self.incident[v] if i not in taken]
        frontier = sorted(set(frontier))
        while len(chosen) < n and frontier:
            e = frontier[rng.randrange(len(frontier))]
            chosen.append(e)
            taken.add(e)
            fresh = [v for v in self.edges[e] if v not in verts]
            verts.update(fresh)
            pool = set(frontier)
            pool.discard(e)
            for v in fresh:
                pool.update(i for i in self.incident[v] if i not in taken)
            frontier = sorted(pool)
        return chosen

    def sample(self, n: int, rng: random.Random, max_restarts: int = 50) -> DataFlowGraph:
        best: list[int] = []
        for _ in range(max_restarts + 1):
            chosen = self.grow(n, rng)
            if len(chosen) == n:
                return self._fragment(chosen)
            if len(chosen) > len(best):
                best = chosen
        return self._fragment(best)

    def _fragment(self, idx: list[int]) -> DataFlowGraph:
        edges = [self.edges[i] for i in idx]
        verts = {v for e in edges for v in e}
        return DataFlowGraph({v: self.h.label(v) for v in verts}, edges, check=False)


def sample_fragment(
    h: DataFlowGraph, n: int, rng: random.Random, max_restarts: int = 50
) -> DataFlowGraph:
    """A random weakly connected fragment of ``h`` with ``n`` edges.

    If every attempt gets stuck (no component has ``n`` edges) the largest
    fragment seen is returned; check ``num_edges`` for the size actually used.
    """
    return FragmentSampler(h).sample(n, rng, max_restarts)


def is_subgraph(frag: DataFlowGraph, g: DataFlowGraph | kernels.PackedGraph, backend=None) -> bool:
    """Whether ``frag`` has a label- and direction-preserving monomorphism into ``g``."""
    packed = g if isinstance(g, kernels.PackedGraph) else kernels.pack(g)
    return kernels.match(frag, packed, backend)


def nfis(
    h: DataFlowGraph,
    g: DataFlowGraph,
    params: FisParams | None = None,
    backend: str | None = None,
) -> FisScore:
    """Monte Carlo n-FIS of ``h`` in ``g``.

    The fragment sequence depends only on ``h`` and ``params.seed``, so for a
    fixed seed the score is monotone in ``g``.
    """
    params = params or FisParams()
    sampler = FragmentSampler(h)
    packed = kernels.pack(g)
    rng = random.Random(params.seed)
    hits = 0
    eff = params.n
    cache: dict[frozenset, bool] = {}
    for _ in range(params.k):
        frag = sampler.sample(params.n, rng, params.max_restarts)
        eff = min(eff, frag.num_edges)
        key = frag.edges
        if key not in cache:
            cache[key] = kernels.match(frag, packed, backend)
        hits += cache[key]
    return FisScore(hits / params.k, hits, params.k, eff)
