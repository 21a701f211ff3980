"""How close approximate simplification gets to exact simplification on small graphs.

``G_N`` is the layered graph whose layer ``S_i`` holds one vertex per subset
of the vertices in lower layers (the subset being its children); every
simplified graph of maximum depth ``N`` embeds in it. ``G_3`` is small
enough to build outright (layer sizes 1, 2, 8, 2048); for depth 4 we sample
bounded members instead.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from itertools import combinations

from dfgprint.graph import (
    ISO_SIZE_CAP,
    DataFlowGraph,
    SizeGuardError,
    compute_depths,
    cone_signatures,
    maximal_rooted_subgraph,
    rooted_isomorphic,
)
from dfgprint.simplify import EXACT_TOL, SimplifyParams, merge_groups

LABEL = "v"


class InfeasibleError(ValueError):
    pass


@dataclass
class LayeredGraph:
    """Layers of children sets; vertex ids run layer by layer from 0."""

    layers: list[list[frozenset[int]]]

    @property
    def sizes(self) -> list[int]:
        return [len(layer) for layer in self.layers]

    def offsets(self) -> list[int]:
        out, total = [], 0
        for layer in self.layers:
            out.append(total)
            total += len(layer)
        return out

    def layer_of(self) -> dict[int, int]:
        return {
            off + j: i
            for i, (off, layer) in enumerate(zip(self.offsets(), self.layers))
            for j in range(len(layer))
        }

    def to_graph(self, label: str = LABEL) -> DataFlowGraph:
        labels, edges = {}, []
        for off, layer in zip(self.offsets(), self.layers):
            for j, children in enumerate(layer):
                labels[off + j] = label
                edges.extend((off + j, c) for c in children)
        return DataFlowGraph(labels, edges, check=False)


def build_gn(n: int) -> LayeredGraph:
    """Fully materialize ``G_n`` for ``n <= 3``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 3:
        raise InfeasibleError(f"G_{n} is too large to build (|S_4| = 2^2059)")
    layers = [[frozenset()]]
    below = 1
    for _ in range(n):
        layer = [
            frozenset(b for b in range(below) if mask >> b & 1) for mask in range(1 << below)
        ]
        layers.append(layer)
        below += len(layer)
    return LayeredGraph(layers)


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling law for bounded members of ``G_depth``.

    Layer ``i`` gets a size drawn uniformly from ``1..cap`` where ``cap`` is
    the smaller of ``max_layer``, the number of distinct children sets
    available, and the vertex budget left after reserving one vertex for
    each later layer. Children are independent fair-coin subsets of all
    lower vertices, redrawn until distinct within the layer.
    """

    depth: int = 4
    max_vertices: int = 80
    max_layer: int = 80
    child_prob: float = 0.5


def sample_layered(rng: random.Random, cfg: SamplerConfig = SamplerConfig()) -> LayeredGraph:
    layers: list[list[frozenset[int]]] = [[frozenset()]]
    below = 1
    for i in range(1, cfg.depth + 1):
        reserve = cfg.depth - i
        budget = cfg.max_vertices - below - reserve
        cap = min(cfg.max_layer, budget, 2**below if below < 63 else budget)
        if cap < 1:
            raise InfeasibleError("vertex budget too small for the requested depth")
        size = rng.randint(1, cap)
        seen: set[frozenset[int]] = set()
        layer = []
        while len(layer) < size:
            children = frozenset(b for b in range(below) if rng.random() < cfg.child_prob)
            if children not in seen:
                seen.add(children)
                layer.append(children)
        layers.append(layer)
        below += size
    return LayeredGraph(layers)


def sample_bounded_subgraph(
    depth: int = 4, max_vertices: int = 80, rng: random.Random | None = None, **kw
) -> DataFlowGraph:
    """One member of the bounded depth-``depth`` family, single-labeled."""
    rng = rng or random.Random()
    cfg = SamplerConfig(depth=depth, max_vertices=max_vertices, **kw)
    return sample_layered(rng, cfg).to_graph()


def is_approx_fixed_point(
    h: DataFlowGraph,
    max_vertices: int = ISO_SIZE_CAP,
    depths: dict[int, int] | None = None,
) -> bool:
    """True when exact-probability approximate simplification merges nothing.

    ``depths`` replaces longest-path depth as the grouping key (the study
    passes construction layers).
    """
    if len(h) > max_vertices:
        raise SizeGuardError(f"graph with {len(h)} vertices exceeds cap {max_vertices}")
    params = SimplifyParams(use_exact_p=True, bandwidth=EXACT_TOL)
    return not merge_groups(h, params, depths=depths)


def count_rooted_iso_pairs(
    h: DataFlowGraph,
    max_vertices: int = ISO_SIZE_CAP,
    depths: dict[int, int] | None = None,
) -> int:
    """Unordered same-depth vertex pairs whose maximal rooted subgraphs are isomorphic."""
    if len(h) > max_vertices:
        raise SizeGuardError(f"graph with {len(h)} vertices exceeds cap {max_vertices}")
    depths = depths if depths is not None else compute_depths(h)
    sig = cone_signatures(h)
    buckets: dict[tuple[int, int], list[int]] = {}
    for v in h.vertices:
        buckets.setdefault((depths[v], sig[v]), []).append(v)
    count = 0
    for members in buckets.values():
        if len(members) < 2:
            continue
        cones = {v: maximal_rooted_subgraph(h, v) for v in members}
        for u, v in combinations(members, 2):
            if rooted_isomorphic(cones[u], cones[v], max_vertices=max_vertices):
                count += 1
    return count


@dataclass
class QualityReport:
    samples: int
    fixed_point_fraction: float
    mean_iso_pairs: float
    seed: int
    sampler: dict = field(default_factory=dict)
    mean_vertices: float = 0.0
    depth_key: str = "layer"

    def as_dict(self) -> dict:
        return asdict(self)


def run_quality_study(
    samples: int, seed: int = 0, cfg: SamplerConfig = SamplerConfig()
) -> QualityReport:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = random.Random(seed)
    fixed = 0
    pairs = 0
    verts = 0
    for _ in range(samples):
        lg = sample_layered(rng, cfg)
        h = lg.to_graph()
        layer = lg.layer_of()
        fixed += is_approx_fixed_point(h, depths=layer)
        pairs += count_rooted_iso_pairs(h, depths=layer)
        verts += len(h)
    return QualityReport(
        samples=samples,
        fixed_point_fraction=fixed / samples,
        mean_iso_pairs=pairs / samples,
        seed=seed,
        sampler=asdict(cfg),
        mean_vertices=verts / samples,
    )
