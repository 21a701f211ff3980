"""Fingerprint generation by merging repeated structure at equal depth.

Two routes are provided. :func:`approx_simplify` scores every vertex by the
probability that a backward random walk visits it, clusters those scores
per depth, and merges same-label vertices inside a cluster.
:func:`exact_simplify` merges roots of isomorphic maximal rooted subgraphs
until nothing changes; it is exponential and meant as an oracle for small
graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from dfgprint import kernels
from dfgprint.graph import (
    ISO_SIZE_CAP,
    DataFlowGraph,
    cone_signatures,
    SizeGuardError,
    compute_depths,
    maximal_rooted_subgraph,
    merge_vertices,
    rooted_isomorphic,
    topological_order,
)

EXACT_TOL = 1e-12
_BLOCK_FLOATS = 1 << 21


@dataclass
class VisitStats:
    walks_performed: int
    visits: dict[int, int]
    frequency: dict[int, float]
    exact_p: dict[int, float] | None = None


@dataclass
class SimplifyParams:
    """Knobs for :func:`approx_simplify`.

    ``walks=None`` means ``max(10000, 100 * |V|)``. ``bandwidth`` is either
    ``"auto"`` or a positive float.
    """

    walks: int | None = None
    bandwidth: str | float = "auto"
    use_exact_p: bool = False
    seed: int = 0
    fixpoint: bool = False

    def __post_init__(self):
        if self.bandwidth != "auto":
            if not isinstance(self.bandwidth, (int, float)) or self.bandwidth <= 0:
                raise ValueError(f"bandwidth must be 'auto' or > 0, got {self.bandwidth!r}")
        if self.walks is not None and self.walks < 1:
            raise ValueError("walks must be positive")

    def walks_for(self, g: DataFlowGraph) -> int:
        return self.walks if self.walks is not None else max(10000, 100 * len(g))

    def as_dict(self) -> dict:
        return {
            "walks": self.walks,
            "bandwidth": self.bandwidth,
            "use_exact_p": self.use_exact_p,
            "seed": self.seed,
            "fixpoint": self.fixpoint,
        }


def exact_visit_probability(g: DataFlowGraph) -> dict[int, float]:
    """Visit probability of every vertex under a uniform backward walk.

    P(v) = 1/|V| + sum over children c of P(c) / indeg(c), evaluated with
    children before parents.
    """
    n = len(g)
    p: dict[int, float] = {}
    for v in reversed(topological_order(g)):
        total = 1.0 / n
        for c in g.succ(v):
            total += p[c] / g.in_degree(c)
        p[v] = total
    return p


def monte_carlo_visits(
    g: DataFlowGraph, walks: int, seed: int, backend: str | None = None
) -> VisitStats:
    """Estimate visit probabilities with ``walks`` independent backward walks.

    Random numbers are drawn block by block from one PCG64 stream, so the
    result depends only on (graph, walks, seed), not on the kernel backend.
    """
    if walks < 1:
        raise ValueError("walks must be >= 1")
    topological_order(g)  # structural check
    packed = kernels.pack(g)
    n = len(g)
    counts = np.zeros(n, dtype=np.int64)
    if n:
        depths = compute_depths(g)
        steps = max(depths.values())
        rng = np.random.default_rng(seed)
        block = max(1, min(walks, _BLOCK_FLOATS // max(steps, 1)))
        done = 0
        while done < walks:
            b = min(block, walks - done)
            starts = rng.integers(0, n, size=b)
            uniforms = rng.random((b, steps))
            kernels.walk_block(packed, starts, uniforms, counts, backend)
            done += b
    visits = {v: int(counts[i]) for i, v in enumerate(packed.ids)}
    return VisitStats(walks, visits, {v: c / walks for v, c in visits.items()})


def cluster_1d(values, bandwidth: float, tol: float = 1e-9, max_iter: int = 500) -> list[int]:
    """Flat-kernel mean shift on the real line.

    Each value seeds a window that is moved to the mean of the values within
    ``bandwidth`` until it moves less than ``tol``. Modes closer than
    ``bandwidth / 2`` are merged, every value joins the cluster of the mode
    its own seed reached, and clusters are cut so that no cluster spans more
    than ``2 * bandwidth``. Cluster ids increase with value.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return []
    xs = np.sort(x)
    csum = np.concatenate(([0.0], np.cumsum(xs)))
    uniq, inverse = np.unique(x, return_inverse=True)
    modes = uniq.copy()
    moving = np.ones(len(modes), dtype=bool)
    for _ in range(max_iter):
        if not moving.any():
            break
        m = modes[moving]
        lo = np.searchsorted(xs, m - bandwidth, side="left")
        hi = np.searchsorted(xs, m + bandwidth, side="right")
        new = (csum[hi] - csum[lo]) / (hi - lo)
        step = np.abs(new - m)
        modes[moving] = new
        idx = np.flatnonzero(moving)
        moving[idx[step < tol]] = False

    # merge nearby modes, walking in increasing order
    order = np.argsort(modes, kind="stable")
    mode_cluster = np.empty(len(modes), dtype=np.int64)
    cid = -1
    anchor = -math.inf
    for i in order:
        if modes[i] - anchor >= bandwidth / 2:
            cid += 1
            anchor = modes[i]
        mode_cluster[i] = cid
    prelim = mode_cluster[inverse]

    # split any cluster whose span exceeds 2 * bandwidth
    final = np.empty_like(prelim)
    next_id = 0
    for c in range(cid + 1):
        members = np.flatnonzero(prelim == c)
        if members.size == 0:
            continue
        members = members[np.argsort(x[members], kind="stable")]
        start = x[members[0]]
        for i in members:
            if x[i] - start > 2 * bandwidth:
                next_id += 1
                start = x[i]
            final[i] = next_id
        next_id += 1
    # renumber by smallest member value
    first = {}
    for i in np.argsort(x, kind="stable"):
        first.setdefault(int(final[i]), len(first))
    return [first[int(c)] for c in final]


def auto_bandwidth(freqs, walks: int) -> float:
    """3 binomial standard errors of the noisiest frequency, at least 1/N."""
    f = np.asarray(freqs, dtype=np.float64)
    sd = np.sqrt(np.clip(f * (1 - f), 0, None) / walks).max() if f.size else 0.0
    return max(3 * float(sd), 1.0 / walks)


def visit_scores(g: DataFlowGraph, params: SimplifyParams, backend: str | None = None):
    """Per-vertex scores used for clustering plus the walk count (None if exact)."""
    if params.use_exact_p:
        return exact_visit_probability(g), None
    walks = params.walks_for(g)
    stats = monte_carlo_visits(g, walks, params.seed, backend)
    return stats.frequency, walks


def merge_groups(
    g: DataFlowGraph,
    params: SimplifyParams,
    backend: str | None = None,
    depths: dict[int, int] | None = None,
):
    """The vertex groups one approximate pass would merge.

    ``depths`` overrides the longest-path depths used to partition vertices.
    """
    scores, walks = visit_scores(g, params, backend)
    depths = depths if depths is not None else compute_depths(g)
    by_depth: dict[int, list[int]] = {}
    for v in g.vertices:
        by_depth.setdefault(depths[v], []).append(v)
    groups = []
    for d in sorted(by_depth):
        layer = by_depth[d]
        if len(layer) < 2:
            continue
        vals = [scores[v] for v in layer]
        if params.bandwidth != "auto":
            bw = float(params.bandwidth)
        elif walks is None:
            bw = EXACT_TOL
        else:
            bw = auto_bandwidth(vals, walks)
        clusters = cluster_1d(vals, bw)
        buckets: dict[tuple[int, str], list[int]] = {}
        for v, c in zip(layer, clusters):
            buckets.setdefault((c, g.label(v)), []).append(v)
        groups.extend(sorted(b) for _, b in sorted(buckets.items()) if len(b) > 1)
    return groups


def approx_simplify(
    g: DataFlowGraph, params: SimplifyParams | None = None, backend: str | None = None
) -> DataFlowGraph:
    """Single pass over depths merging same-label vertices with close scores.

    Scores and depths are computed once on the input. With
    ``params.fixpoint`` the pass is repeated until the vertex count stops
    shrinking.
    """
    params = params or SimplifyParams()
    while True:
        groups = merge_groups(g, params, backend)
        out = merge_vertices(g, groups)
        if not params.fixpoint or len(out) == len(g):
            return out
        g = out


def exact_simplify(
    g: DataFlowGraph, strict: bool = False, max_vertices: int = ISO_SIZE_CAP
) -> DataFlowGraph:
    """Merge same-depth roots of isomorphic maximal rooted subgraphs to a fixed point.

    Pairs are tried smallest (u, v) first. ``strict`` additionally requires
    paired vertices to have equal in-degree in the current graph.
    """
    if len(g) > max_vertices:
        raise SizeGuardError(f"graph with {len(g)} vertices exceeds cap {max_vertices}")
    while True:
        pair = _first_isomorphic_pair(g, strict, max_vertices)
        if pair is None:
            return g
        g = merge_vertices(g, [pair])


def _first_isomorphic_pair(g, strict, cap):
    depths = compute_depths(g)
    sig = cone_signatures(g)
    cones = {}

    def cone(v):
        if v not in cones:
            cones[v] = maximal_rooted_subgraph(g, v)
        return cones[v]

    for u, v in combinations(g.vertices, 2):
        if depths[u] != depths[v] or sig[u] != sig[v]:
            continue
        if rooted_isomorphic(cone(u), cone(v), g if strict else None, cap):
            return (u, v)
    return None
