"""Synthetic raw traces for miner-like and benign workloads, plus trace-level obfuscations.

Workloads are written as straight-line statements over expression trees
(``set``, ``store``, ``drop``) and emitted as stack-machine events. The
ground-truth graph is computed from the trees themselves: an operand read
from a local resolves to whatever expression was last stored there. It
never looks at the operand stack, so it serves as an oracle for
:func:`dfgprint.traceio.ingest_raw`.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from dfgprint.graph import DataFlowGraph
from dfgprint.traceio import DEFAULT_LABELS, RawStackEvent, SlotEffect

WORKLOAD_KINDS = (
    "miner-sha2like",
    "miner-mixrounds",
    "benign-convolution",
    "benign-checksum",
    "benign-random",
)
OBFUSCATION_STRATEGIES = ("substitute", "split", "flatten-noise", "interleave")
MEMORY_READS = frozenset({"load"})
MEMORY_WRITES = frozenset({"store"})


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    rounds: int = 1
    seed: int = 0
    noise_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 <= self.noise_rate < 1:
            raise ValueError("noise_rate must be in [0, 1)")

    @property
    def is_miner(self) -> bool:
        return self.kind.startswith("miner-")


@dataclass(frozen=True)
class ObfuscationSpec:
    strategy: str
    seed: int = 0
    rate: float = 0.1

    def __post_init__(self):
        if self.strategy not in OBFUSCATION_STRATEGIES:
            raise ValueError(f"unknown obfuscation strategy {self.strategy!r}")
        if not 0 <= self.rate <= 1:
            raise ValueError("rate must be in [0, 1]")


# -- expression trees -------------------------------------------------------
# ("const",) | ("get", idx) | ("load", addr) | ("op", opcode, (children...))


def C():
    return ("const",)


def G(i):
    return ("get", i)


def L(addr=None):
    return ("load", addr or C())


def op(name, *children):
    return ("op", name, tuple(children))


class _Emitter:
    def __init__(self, labels=DEFAULT_LABELS):
        self.instrumented = labels
        self.events: list[RawStackEvent] = []
        self.origin: dict[int, tuple[int, str]] = {}
        self.truth_labels: dict[int, str] = {}
        self.truth_edges: set[tuple[int, int]] = set()

    def _push(self, ev: RawStackEvent) -> int:
        self.events.append(ev)
        return len(self.events)

    def expr(self, e) -> tuple[int, str]:
        kind = e[0]
        if kind == "const":
            return self._push(RawStackEvent("const", 0, 1)), "const"
        if kind == "get":
            if e[1] not in self.origin:
                raise ValueError(f"local {e[1]} read before written")
            self._push(RawStackEvent("local.get", 0, 1, SlotEffect("local", e[1], "read")))
            return self.origin[e[1]]
        if kind == "load":
            self.expr(e[1])
            return self._push(RawStackEvent("load", 1, 1)), "load"
        _, name, children = e
        origins = [self.expr(c) for c in children]
        vid = self._push(RawStackEvent(name, len(children), 1))
        if name in self.instrumented:
            self.truth_labels[vid] = name
            for oid, olab in origins:
                self.truth_labels.setdefault(oid, olab)
                self.truth_edges.add((vid, oid))
        return vid, name

    def set(self, i, e) -> None:
        o = self.expr(e)
        self._push(RawStackEvent("local.set", 1, 0, SlotEffect("local", i, "write")))
        self.origin[i] = o

    def store(self, value, addr=None) -> None:
        self.expr(addr or C())
        self.expr(value)
        self._push(RawStackEvent("store", 2, 0))

    def drop(self, e) -> None:
        self.expr(e)
        self._push(RawStackEvent("drop", 1, 0))

    def truth(self) -> DataFlowGraph:
        return DataFlowGraph(self.truth_labels, self.truth_edges)


def _rotr(x, k):
    return op("rotr", x, C())


def _sha2_attempt(em: _Emitter) -> None:
    a, b, c, d, e, f, g, h = range(8)
    w = list(range(8, 16))
    for i in range(16):
        em.set(i, L())
    for i in range(4):
        x, y = G(w[i + 1]), G(w[i + 6 - 4])
        s0 = op("xor", op("xor", _rotr(x, 7), _rotr(x, 18)), op("shr", x, C()))
        s1 = op("xor", op("xor", _rotr(y, 17), _rotr(y, 19)), op("shr", y, C()))
        em.set(w[i], op("add", op("add", G(w[i]), s0), s1))
    for j in range(4):
        big1 = op("xor", op("xor", _rotr(G(e), 6), _rotr(G(e), 11)), _rotr(G(e), 25))
        ch = op("xor", op("and", G(e), G(f)), op("and", op("xor", G(e), C()), G(g)))
        em.set(16, op("add", op("add", G(h), big1), op("add", ch, G(w[j]))))
        big0 = op("xor", op("xor", _rotr(G(a), 2), _rotr(G(a), 13)), _rotr(G(a), 22))
        maj = op("xor", op("xor", op("and", G(a), G(b)), op("and", G(a), G(c))), op("and", G(b), G(c)))
        em.set(17, op("add", big0, maj))
        em.set(h, G(g))
        em.set(g, G(f))
        em.set(f, G(e))
        em.set(e, op("add", G(d), G(16)))
        em.set(d, G(c))
        em.set(c, G(b))
        em.set(b, G(a))
        em.set(a, op("add", G(16), G(17)))
    em.store(G(a))
    em.store(G(e))


def _mix_attempt(em: _Emitter) -> None:
    x = list(range(4))
    for i in x:
        em.set(i, L())
    for _ in range(3):
        em.set(0, op("add", G(0), G(1)))
        em.set(3, op("rotl", op("xor", G(3), G(0)), C()))
        em.set(2, op("add", G(2), G(3)))
        em.set(1, op("rotl", op("xor", G(1), G(2)), C()))
        em.set(0, op("xor", G(0), op("shr", G(1), C())))
        em.set(2, op("xor", G(2), op("and", G(3), G(1))))
    em.store(op("add", G(0), G(2)))


def _convolution(em: _Emitter, rounds: int) -> None:
    for _ in range(rounds):
        em.set(0, C())
        for _ in range(3):
            term = op("shr", op("mul", L(), L()), C())
            em.set(0, op("add", G(0), term))
        em.store(op("and", G(0), C()))


def _checksum(em: _Emitter, rounds: int) -> None:
    em.set(0, C())
    for _ in range(rounds):
        em.set(0, op("xor", G(0), L()))
        for _ in range(8):
            mask = op("sub", C(), op("and", G(0), C()))
            em.set(0, op("xor", op("shr", G(0), C()), op("and", C(), mask)))
    em.store(G(0))


_RANDOM_OPS = ("add", "sub", "mul", "or", "shl", "rotl", "rotr", "and", "xor", "shr")
_RANDOM_WEIGHTS = (6, 3, 3, 2, 2, 1, 1, 1, 1, 1)


def _random_workload(em: _Emitter, rounds: int, rng: random.Random) -> None:
    nloc = 6
    for i in range(nloc):
        em.set(i, L())
    for _ in range(rounds * 8):
        name = rng.choices(_RANDOM_OPS, _RANDOM_WEIGHTS)[0]
        left = G(rng.randrange(nloc))
        right = G(rng.randrange(nloc)) if rng.random() < 0.5 else (L() if rng.random() < 0.5 else C())
        if rng.random() < 0.1:
            em.store(op(name, left, right))
        else:
            em.set(rng.randrange(nloc), op(name, left, right))


def _noise(em: _Emitter, rng: random.Random, rate: float) -> None:
    if rate and em.origin and rng.random() < rate:
        locs = sorted(em.origin)
        name = rng.choice(sorted(em.instrumented))
        em.drop(op(name, G(rng.choice(locs)), G(rng.choice(locs))))


class _NoisyEmitter(_Emitter):
    def __init__(self, rng, rate):
        super().__init__()
        self._rng = rng
        self._rate = rate

    def set(self, i, e):
        super().set(i, e)
        _noise(self, self._rng, self._rate)

    def store(self, value, addr=None):
        super().store(value, addr)
        _noise(self, self._rng, self._rate)


def gen_trace(spec: WorkloadSpec) -> tuple[list[RawStackEvent], DataFlowGraph]:
    """Raw event stream for ``spec`` and its ground-truth data-flow graph.

    Miner kinds repeat one self-contained attempt ``spec.rounds`` times, each
    starting from freshly loaded inputs, so their graphs are disjoint copies
    of one attempt's graph.
    """
    rng = random.Random(f"synth:{spec.kind}:{spec.seed}")
    em = _NoisyEmitter(rng, spec.noise_rate)
    if spec.kind == "miner-sha2like":
        for _ in range(spec.rounds):
            _sha2_attempt(em)
    elif spec.kind == "miner-mixrounds":
        for _ in range(spec.rounds):
            _mix_attempt(em)
    elif spec.kind == "benign-convolution":
        _convolution(em, spec.rounds)
    elif spec.kind == "benign-checksum":
        _checksum(em, spec.rounds)
    else:
        _random_workload(em, spec.rounds, rng)
    return em.events, em.truth()


# -- obfuscation ------------------------------------------------------------


def _is_plain(ev: RawStackEvent) -> bool:
    return ev.slot is None


def _locals_used(trace) -> int:
    return max((ev.slot.index for ev in trace if ev.slot and ev.slot.kind == "local"), default=-1)


def _lset(i):
    return RawStackEvent("local.set", 1, 0, SlotEffect("local", i, "write"))


def _lget(i):
    return RawStackEvent("local.get", 0, 1, SlotEffect("local", i, "read"))


def _substitute(trace):
    t0 = _locals_used(trace) + 1
    t1 = t0 + 1
    out = []
    for ev in trace:
        if ev.opcode == "xor" and _is_plain(ev) and ev.pops == 2 and ev.pushes == 1:
            # a ^ b == (a | b) & ((-1) - (a & b))
            out += [
                _lset(t1), _lset(t0),
                _lget(t0), _lget(t1), RawStackEvent("or", 2, 1),
                RawStackEvent("const", 0, 1),
                _lget(t0), _lget(t1), RawStackEvent("and", 2, 1),
                RawStackEvent("sub", 2, 1),
                RawStackEvent("and", 2, 1),
            ]
        else:
            out.append(ev)
    return out


def _split(trace, rng, rate, labels):
    out = []
    for ev in trace:
        if ev.opcode in labels and _is_plain(ev) and ev.pops >= 1 and rng.random() < rate:
            out += [RawStackEvent("const", 0, 1), RawStackEvent("and", 2, 1)]
        out.append(ev)
    return out


def _segments(trace) -> list[list[RawStackEvent]]:
    """Split into maximal stack-neutral statements."""
    segs, cur, depth = [], [], 0
    for k, ev in enumerate(trace):
        depth -= ev.pops
        if depth < 0:
            raise ValueError(f"trace is not stack-consistent at event {k}")
        depth += ev.pushes
        cur.append(ev)
        if depth == 0:
            segs.append(cur)
            cur = []
    if cur:
        segs.append(cur)
    return segs


def _flatten_noise(trace, rng, rate):
    out = []
    written: list[int] = []
    seen = set()
    for seg in _segments(trace):
        out += seg
        for ev in seg:
            if ev.slot and ev.slot.kind == "local" and ev.slot.access == "write" and ev.slot.index not in seen:
                seen.add(ev.slot.index)
                written.append(ev.slot.index)
        if written and rng.random() < rate:
            out += [
                _lget(rng.choice(written)),
                RawStackEvent("const", 0, 1),
                RawStackEvent("xor", 2, 1),
                RawStackEvent("drop", 1, 0),
            ]
    return out


def _resources(seg):
    reads, writes = set(), set()
    for ev in seg:
        if ev.slot is not None:
            key = (ev.slot.kind, ev.slot.index)
            (writes if ev.slot.access == "write" else reads).add(key)
        elif ev.opcode in MEMORY_WRITES:
            writes.add(("memory", 0))
        elif ev.opcode in MEMORY_READS:
            reads.add(("memory", 0))
    return reads, writes


def interleave_order(trace, seed: int = 0) -> list[int]:
    """A random dependency-respecting order of the trace's events (old indices).

    Statements (stack-neutral runs) are the unit of reordering; two
    statements stay ordered when they touch the same local, global or memory
    and at least one of them writes it.
    """
    segs = _segments(trace)
    starts, pos = [], 0
    for s in segs:
        starts.append(pos)
        pos += len(s)
    deps: list[set[int]] = [set() for _ in segs]
    last_writer: dict = {}
    readers: dict = {}
    for i, seg in enumerate(segs):
        reads, writes = _resources(seg)
        for r in reads:
            if r in last_writer:
                deps[i].add(last_writer[r])
        for r in writes:
            if r in last_writer:
                deps[i].add(last_writer[r])
            deps[i].update(readers.get(r, ()))
        for r in reads:
            readers.setdefault(r, set()).add(i)
        for r in writes:
            last_writer[r] = i
            readers[r] = set()
        deps[i].discard(i)
    users: list[list[int]] = [[] for _ in segs]
    pending = [len(d) for d in deps]
    for i, d in enumerate(deps):
        for j in d:
            users[j].append(i)
    rng = random.Random(seed)
    ready = [i for i, p in enumerate(pending) if p == 0]
    order: list[int] = []
    while ready:
        i = ready.pop(rng.randrange(len(ready)))
        order.extend(range(starts[i], starts[i] + len(segs[i])))
        for j in users[i]:
            pending[j] -= 1
            if pending[j] == 0:
                ready.append(j)
    if len(order) != len(trace):
        raise RuntimeError("interleave dependency cycle")
    return order


def obfuscate_trace(trace, spec: ObfuscationSpec, labels=DEFAULT_LABELS) -> list[RawStackEvent]:
    trace = list(trace)
    rng = random.Random(f"obfuscate:{spec.strategy}:{spec.seed}")
    if spec.strategy == "substitute":
        return _substitute(trace)
    if spec.strategy == "split":
        return _split(trace, rng, spec.rate, labels)
    if spec.strategy == "flatten-noise":
        return _flatten_noise(trace, rng, spec.rate)
    return [trace[k] for k in interleave_order(trace, spec.seed)]
