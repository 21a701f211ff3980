"""Labeled DAG primitives for instruction-level data-flow graphs.

Edges run from a consuming instruction execution to each of its operand
origins, so the maximal rooted subgraph of a vertex is its provenance cone.
Graphs are immutable once built; every traversal that can influence output
order walks vertex ids in sorted order.
"""

from __future__ import annotations

import heapq
import sys
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

DIRECTION = "consumer-to-operand"
ISO_SIZE_CAP = 200


class GraphError(ValueError):
    """Structural problem with a data-flow graph (cycle, bad vertex, ...)."""


class SizeGuardError(GraphError):
    """An exact (exponential) routine was asked to run on too large an input."""


class DataFlowGraph:
    """Immutable labeled directed acyclic graph without multi-edges.

    ``labels`` maps every vertex id to its opcode label; ``edges`` is an
    iterable of ``(src, dst)`` pairs. Pass ``check=False`` to build a graph
    that may violate the invariants (used by :func:`validate`).
    """

    __slots__ = ("_labels", "_edges", "_succ", "_pred", "_vertices", "_hash")

    def __init__(
        self,
        labels: Mapping[int, str],
        edges: Iterable[tuple[int, int]] = (),
        *,
        check: bool = True,
    ):
        self._labels = {int(v): str(lab) for v, lab in labels.items()}
        self._edges = frozenset((int(a), int(b)) for a, b in edges)
        self._vertices = tuple(sorted(self._labels))
        succ: dict[int, list[int]] = defaultdict(list)
        pred: dict[int, list[int]] = defaultdict(list)
        for a, b in self._edges:
            succ[a].append(b)
            pred[b].append(a)
        self._succ = {v: tuple(sorted(ns)) for v, ns in succ.items()}
        self._pred = {v: tuple(sorted(ns)) for v, ns in pred.items()}
        self._hash = None
        if check:
            problems = validate(self)
            if problems:
                raise GraphError("; ".join(problems))

    # -- accessors ---------------------------------------------------------
    @property
    def vertices(self) -> tuple[int, ...]:
        return self._vertices

    @property
    def labels(self) -> Mapping[int, str]:
        return self._labels

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return self._edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self._edges)

    def label(self, v: int) -> str:
        return self._labels[v]

    def succ(self, v: int) -> tuple[int, ...]:
        """Out-neighbors (operand origins) of ``v``."""
        return self._succ.get(v, ())

    def pred(self, v: int) -> tuple[int, ...]:
        """In-neighbors (consumers) of ``v``."""
        return self._pred.get(v, ())

    def in_degree(self, v: int) -> int:
        return len(self._pred.get(v, ()))

    def out_degree(self, v: int) -> int:
        return len(self._succ.get(v, ()))

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self._edges

    def __contains__(self, v: object) -> bool:
        return v in self._labels

    def __len__(self) -> int:
        return len(self._vertices)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def sources(self) -> list[int]:
        """Vertices without incoming edges, where backward walks stop."""
        return [v for v in self._vertices if v not in self._pred]

    def sinks(self) -> list[int]:
        return [v for v in self._vertices if v not in self._succ]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataFlowGraph):
            return NotImplemented
        return self._labels == other._labels and self._edges == other._edges

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((frozenset(self._labels.items()), self._edges))
        return self._hash

    def __repr__(self) -> str:
        return f"DataFlowGraph(|V|={len(self)}, |E|={self.num_edges})"

    # -- derived graphs ----------------------------------------------------
    def subgraph(self, members: Iterable[int]) -> DataFlowGraph:
        """Induced subgraph on ``members``."""
        keep = set(members)
        return DataFlowGraph(
            {v: self._labels[v] for v in keep},
            ((a, b) for a, b in self._edges if a in keep and b in keep),
            check=False,
        )

    def relabel(self, mapping: Mapping[int, int]) -> DataFlowGraph:
        """Rename vertex ids through an injective ``mapping``."""
        return DataFlowGraph(
            {mapping[v]: lab for v, lab in self._labels.items()},
            ((mapping[a], mapping[b]) for a, b in self._edges),
            check=False,
        )

    def compact(self) -> DataFlowGraph:
        """Renumber vertices 0..|V|-1 preserving sorted-id order."""
        return self.relabel({v: i for i, v in enumerate(self._vertices)})

    def canonical_text(self) -> str:
        lines = [f"V {v} {self._labels[v]}" for v in self._vertices]
        lines += [f"E {a} {b}" for a, b in self.sorted_edges()]
        return "".join(line + "\n" for line in lines)


@dataclass(frozen=True)
class RootedSubgraph:
    root: int
    members: frozenset[int]
    edges: frozenset[tuple[int, int]]
    labels: Mapping[int, str]

    def __len__(self) -> int:
        return len(self.members)

    def as_graph(self) -> DataFlowGraph:
        return DataFlowGraph(self.labels, self.edges, check=False)


# -- validation / ordering -------------------------------------------------


def _find_back_edge(vertices, succ) -> tuple[int, int] | None:
    """Iterative DFS; returns one edge closing a cycle, or None."""
    color = dict.fromkeys(vertices, 0)
    for start in vertices:
        if color[start]:
            continue
        color[start] = 1
        stack = [(start, iter(succ.get(start, ())))]
        while stack:
            v, it = stack[-1]
            for w in it:
                if w not in color:
                    continue
                if color[w] == 1:
                    return (v, w)
                if color[w] == 0:
                    color[w] = 1
                    stack.append((w, iter(succ.get(w, ()))))
                    break
            else:
                color[v] = 2
                stack.pop()
    return None


def validate(g: DataFlowGraph) -> list[str]:
    """Return a list of invariant violations; empty when ``g`` is valid."""
    problems = []
    labels = g.labels
    for v in g.vertices:
        if not labels[v]:
            problems.append(f"empty label at {v}")
    loops = set()
    for a, b in g.sorted_edges():
        if a not in labels:
            problems.append(f"edge {a}->{b} has undeclared source {a}")
        if b not in labels:
            problems.append(f"edge {a}->{b} has undeclared target {b}")
        if a == b:
            loops.add(a)
            problems.append(f"self-loop at {a}")
    succ = {
        v: [w for w in g.succ(v) if w != v and w in labels] for v in g.vertices
    }
    back = _find_back_edge(g.vertices, succ)
    if back is not None:
        problems.append(f"cycle through edge {back[0]}->{back[1]}")
    return problems


def topological_order(g: DataFlowGraph) -> list[int]:
    """Kahn's algorithm, smallest ready id first. Raises on cycles."""
    indeg = {v: g.in_degree(v) for v in g.vertices}
    ready = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in g.succ(v):
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(order) != len(g):
        succ = {v: list(g.succ(v)) for v in g.vertices}
        back = _find_back_edge(g.vertices, succ)
        raise GraphError(f"cycle detected at edge {back[0]}->{back[1]}")
    return order


def compute_depths(g: DataFlowGraph) -> dict[int, int]:
    """Longest-path depth (in edges) of every vertex, measured from sources."""
    depth = {}
    for v in topological_order(g):
        preds = g.pred(v)
        depth[v] = max(depth[p] for p in preds) + 1 if preds else 0
    return depth


def maximal_rooted_subgraph(g: DataFlowGraph, v: int) -> RootedSubgraph:
    """Everything reachable from ``v`` together with the edges among it."""
    if v not in g:
        raise GraphError(f"unknown vertex {v}")
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in g.succ(u):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    members = frozenset(seen)
    # all out-edges of members stay inside the cone
    edges = frozenset((a, b) for a in members for b in g.succ(a))
    return RootedSubgraph(v, members, edges, {u: g.label(u) for u in members})


# -- isomorphism ----------------------------------------------------------


def _cone_signatures(sub: RootedSubgraph, succ) -> dict[int, int]:
    """Bottom-up structural hash of every member's cone (an iso invariant)."""
    sig: dict[int, int] = {}
    stack = [sub.root]
    while stack:
        v = stack[-1]
        pending = [w for w in succ[v] if w not in sig]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        if v not in sig:
            sig[v] = hash((sub.labels[v], tuple(sorted(sig[w] for w in succ[v]))))
    return sig


def cone_signatures(g: DataFlowGraph) -> dict[int, int]:
    """Structural hash of every vertex's maximal rooted subgraph.

    Equal cones hash equally; unequal hashes prove non-isomorphism. The
    converse does not hold (shared sub-cones are not distinguished), so
    equal hashes still need :func:`rooted_isomorphic`.
    """
    sig: dict[int, int] = {}
    for v in reversed(topological_order(g)):
        sig[v] = hash((g.label(v), tuple(sorted(sig[w] for w in g.succ(v)))))
    return sig


def _local_adjacency(sub: RootedSubgraph):
    succ: dict[int, list[int]] = {v: [] for v in sub.members}
    pred: dict[int, list[int]] = {v: [] for v in sub.members}
    for a, b in sub.edges:
        succ[a].append(b)
        pred[b].append(a)
    for v in sub.members:
        succ[v].sort()
        pred[v].sort()
    return succ, pred


def rooted_isomorphic(
    s1: RootedSubgraph,
    s2: RootedSubgraph,
    match_indegree_in: DataFlowGraph | None = None,
    max_vertices: int = ISO_SIZE_CAP,
) -> bool:
    """Exact test for a root-preserving, label-preserving isomorphism.

    When ``match_indegree_in`` is given, paired vertices must also have the
    same in-degree in that ambient graph.
    """
    for s in (s1, s2):
        if len(s) > max_vertices:
            raise SizeGuardError(
                f"rooted subgraph with {len(s)} vertices exceeds cap {max_vertices}"
            )
    if len(s1) != len(s2) or len(s1.edges) != len(s2.edges):
        return False
    if s1.labels[s1.root] != s2.labels[s2.root]:
        return False

    succ1, pred1 = _local_adjacency(s1)
    succ2, pred2 = _local_adjacency(s2)
    sig1 = _cone_signatures(s1, succ1)
    sig2 = _cone_signatures(s2, succ2)

    def key(v, sig, succ, pred):
        amb = match_indegree_in.in_degree(v) if match_indegree_in is not None else 0
        return (sig[v], len(succ[v]), len(pred[v]), amb)

    k1 = {v: key(v, sig1, succ1, pred1) for v in s1.members}
    k2 = {v: key(v, sig2, succ2, pred2) for v in s2.members}
    if k1[s1.root] != k2[s2.root]:
        return False
    if sorted(k1.values()) != sorted(k2.values()):
        return False

    # Map vertices in BFS order from the root: each later vertex has an
    # already-mapped consumer, whose image restricts its candidates.
    order = [s1.root]
    parent = {s1.root: None}
    for v in order:
        for w in succ1[v]:
            if w not in parent:
                parent[w] = v
                order.append(w)

    fwd: dict[int, int] = {}
    used: set[int] = set()

    def consistent(u, x):
        for w in succ1[u]:
            if w in fwd and fwd[w] not in succ2[x]:
                return False
        for w in pred1[u]:
            if w in fwd and fwd[w] not in pred2[x]:
                return False
        return True

    def extend(i):
        if i == len(order):
            return True
        u = order[i]
        p = parent[u]
        cands = (s2.root,) if p is None else succ2[fwd[p]]
        for x in cands:
            if x in used or k2[x] != k1[u] or not consistent(u, x):
                continue
            fwd[u] = x
            used.add(x)
            if extend(i + 1):
                return True
            del fwd[u]
            used.discard(x)
        return False

    if sys.getrecursionlimit() < len(order) + 100:
        sys.setrecursionlimit(len(order) + 100)
    return extend(0)


# -- mutation (returns new graphs) -----------------------------------------


def graphs_isomorphic(g1: DataFlowGraph, g2: DataFlowGraph, max_vertices: int = ISO_SIZE_CAP) -> bool:
    """Label-preserving isomorphism of whole graphs.

    Both graphs get a virtual root pointing at all their sources, which
    reduces the question to :func:`rooted_isomorphic`.
    """
    if len(g1) != len(g2) or g1.num_edges != g2.num_edges:
        return False
    if len(g1) == 0:
        return True
    cones = []
    for g in (g1, g2):
        top = max(g.vertices) + 1
        labels = dict(g.labels)
        labels[top] = "\0root"
        edges = set(g.edges) | {(top, s) for s in g.sources()}
        cones.append(maximal_rooted_subgraph(DataFlowGraph(labels, edges, check=False), top))
    return rooted_isomorphic(cones[0], cones[1], max_vertices=max_vertices + 1)


def merge_vertices(g: DataFlowGraph, groups: Iterable[Iterable[int]]) -> DataFlowGraph:
    """Collapse each group to its smallest id, redirecting and deduping edges."""
    rep: dict[int, int] = {}
    for group in groups:
        members = sorted(set(group))
        if not members:
            raise GraphError("empty merge group")
        for v in members:
            if v not in g:
                raise GraphError(f"unknown vertex {v}")
            if v in rep:
                raise GraphError(f"vertex {v} appears in two merge groups")
        labs = {g.label(v) for v in members}
        if len(labs) > 1:
            raise GraphError(f"mixed labels {sorted(labs)} in merge group {members}")
        mset = set(members)
        for v in members:
            for w in g.succ(v):
                if w in mset:
                    raise GraphError(f"intra-group edge {v}->{w}")
        for v in members:
            rep[v] = members[0]
    if not rep:
        return g
    labels = {v: lab for v, lab in g.labels.items() if rep.get(v, v) == v}
    edges = {(rep.get(a, a), rep.get(b, b)) for a, b in g.edges}
    merged = DataFlowGraph(labels, edges, check=False)
    problems = validate(merged)
    if problems:
        raise GraphError("merge produced invalid graph: " + "; ".join(problems))
    return merged
