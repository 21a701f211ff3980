"""Backend selection and array packing for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy/pure-Python ``_pykernels`` module is used. Set ``DFGPRINT_PURE=1`` to
force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from dfgprint import _pykernels
from dfgprint.graph import DataFlowGraph

try:
    if os.environ.get("DFGPRINT_PURE"):
        raise ImportError("fallback forced")
    from dfgprint import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels
BACKEND = "cython" if _ckernels is not None else "python"


def get_backend(name: str | None = None):
    return BACKENDS[name or BACKEND]


def _csr(n, pairs):
    """CSR arrays for adjacency given (row, col) index pairs; rows sorted."""
    ptr = np.zeros(n + 1, dtype=np.int64)
    if not pairs:
        return ptr, np.zeros(0, dtype=np.int64)
    arr = np.array(sorted(pairs), dtype=np.int64)
    np.add.at(ptr, arr[:, 0] + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, np.ascontiguousarray(arr[:, 1])


@dataclass(frozen=True)
class PackedGraph:
    """Index-space arrays for a graph; index i is the i-th smallest vertex id."""

    ids: tuple[int, ...]
    index: dict
    label_codes: dict
    labels: np.ndarray
    succ_ptr: np.ndarray
    succ_idx: np.ndarray
    pred_ptr: np.ndarray
    pred_idx: np.ndarray
    lab_ptr: np.ndarray
    lab_idx: np.ndarray

    @property
    def target(self):
        return (
            self.labels,
            self.succ_ptr,
            self.succ_idx,
            self.pred_ptr,
            self.pred_idx,
            self.lab_ptr,
            self.lab_idx,
        )


def pack(g: DataFlowGraph) -> PackedGraph:
    ids = g.vertices
    index = {v: i for i, v in enumerate(ids)}
    codes: dict[str, int] = {}
    for lab in sorted(set(g.labels.values())):
        codes[lab] = len(codes)
    labels = np.array([codes[g.label(v)] for v in ids], dtype=np.int64)
    pairs = [(index[a], index[b]) for a, b in g.edges]
    succ_ptr, succ_idx = _csr(len(ids), pairs)
    pred_ptr, pred_idx = _csr(len(ids), [(b, a) for a, b in pairs])
    lab_ptr, lab_idx = _csr(len(codes), [(int(c), i) for i, c in enumerate(labels)])
    return PackedGraph(
        ids, index, codes, labels, succ_ptr, succ_idx, pred_ptr, pred_idx, lab_ptr, lab_idx
    )


def plan_pattern(frag: DataFlowGraph, packed: PackedGraph):
    """Matching order and constraint arrays for ``frag`` against ``packed``.

    Returns None when some fragment label does not occur in the target at
    all, which already decides the match.
    """
    codes = packed.label_codes
    if any(lab not in codes for lab in frag.labels.values()):
        return None
    verts = list(frag.vertices)
    if not verts:
        return tuple(np.zeros(0, dtype=np.int64) for _ in range(8))
    # rarest label first, then highest degree
    count = np.diff(packed.lab_ptr)

    def rank(v):
        deg = frag.in_degree(v) + frag.out_degree(v)
        return (int(count[codes[frag.label(v)]]), -deg, v)

    order: list[int] = []
    placed: set[int] = set()
    while len(order) < len(verts):
        frontier = [
            v
            for v in verts
            if v not in placed and any(w in placed for w in frag.succ(v) + frag.pred(v))
        ]
        pool = frontier or [v for v in verts if v not in placed]
        nxt = min(pool, key=rank)
        order.append(nxt)
        placed.add(nxt)
    pos = {v: i for i, v in enumerate(order)}

    plab, apos, adir, pout, pin = [], [], [], [], []
    cptr, cpos, cdir = [0], [], []
    for i, v in enumerate(order):
        plab.append(codes[frag.label(v)])
        pout.append(frag.out_degree(v))
        pin.append(frag.in_degree(v))
        anchor, direction = -1, 0
        for w in frag.pred(v):  # w -> v: v is a successor of map(w)
            if pos[w] < i and anchor < 0:
                anchor, direction = pos[w], 0
        for w in frag.succ(v):  # v -> w: v is a predecessor of map(w)
            if pos[w] < i and anchor < 0:
                anchor, direction = pos[w], 1
        apos.append(anchor)
        adir.append(direction)
        for w in frag.pred(v):
            if pos[w] < i:
                cpos.append(pos[w])
                cdir.append(0)
        for w in frag.succ(v):
            if pos[w] < i:
                cpos.append(pos[w])
                cdir.append(1)
        cptr.append(len(cpos))
    as_arr = lambda xs: np.array(xs, dtype=np.int64)  # noqa: E731
    return tuple(as_arr(x) for x in (plab, apos, adir, cptr, cpos, cdir, pout, pin))


def match(frag: DataFlowGraph, packed: PackedGraph, backend: str | None = None) -> bool:
    plan = plan_pattern(frag, packed)
    if plan is None:
        return False
    return bool(get_backend(backend).match_pattern(plan, packed.target))


def walk_block(packed: PackedGraph, starts, uniforms, counts, backend: str | None = None):
    get_backend(backend).walk_counts(
        packed.pred_ptr,
        packed.pred_idx,
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
        counts,
    )
