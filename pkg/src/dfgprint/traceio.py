"""Trace ingestion, fingerprint files and DOT export.

Two line-oriented trace encodings are understood::

    #dfgtrace v1 resolved dir=consumer-to-operand
    EVENT <id> <opcode> [origin ids...]

    #dfgtrace v1 raw
    OP <opcode> pops=<k> pushes=<k> [local|global <idx> read|write]

Resolved events already name their operand origins. Raw events only carry
stack effects; :func:`ingest_raw` recovers origins with a shadow operand
stack and per-slot generations (each write starts a new generation).
Linear memory is not tracked: a load is just another producing event.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from dfgprint.graph import DIRECTION, DataFlowGraph, GraphError, validate

TRACE_VERSION = "v1"
FINGERPRINT_MAGIC = "#dfgprint fingerprint v1"
DEFAULT_LABELS = frozenset({"and", "xor", "shr"})
UNKNOWN_LABEL = "other"
# ids for values read from never-written slots; far above any event id
FRESH_ORIGIN_BASE = 1 << 48


class FormatError(ValueError):
    pass


class VersionError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class StackUnderflow(ValueError):
    def __init__(self, index: int, opcode: str):
        super().__init__(f"stack underflow at event {index} ({opcode})")
        self.index = index


@dataclass(frozen=True)
class ResolvedEvent:
    event_id: int
    opcode: str
    operand_origins: tuple[int, ...] = ()


@dataclass(frozen=True)
class SlotEffect:
    kind: str  # "local" | "global"
    index: int
    access: str  # "read" | "write"


@dataclass(frozen=True)
class RawStackEvent:
    opcode: str
    pops: int = 0
    pushes: int = 0
    slot: SlotEffect | None = None

    def to_line(self) -> str:
        line = f"OP {self.opcode} pops={self.pops} pushes={self.pushes}"
        if self.slot is not None:
            line += f" {self.slot.kind} {self.slot.index} {self.slot.access}"
        return line


@dataclass
class IngestConfig:
    instrumented_labels: frozenset[str] = DEFAULT_LABELS
    max_edges: int = 2002
    direction: str = DIRECTION

    def __post_init__(self):
        self.instrumented_labels = frozenset(self.instrumented_labels)
        if not self.instrumented_labels:
            raise ValueError("instrumented_labels must be non-empty")
        if self.max_edges < 1:
            raise ValueError("max_edges must be >= 1")
        if self.direction != DIRECTION:
            raise ValueError(f"unsupported edge direction {self.direction!r}")


class _GraphBuilder:
    """Accumulates vertices/edges until the edge cap is reached."""

    def __init__(self, cfg: IngestConfig):
        self.cfg = cfg
        self.labels: dict[int, str] = {}
        self.edges: set[tuple[int, int]] = set()

    @property
    def full(self) -> bool:
        return len(self.edges) >= self.cfg.max_edges

    def consume(self, vid: int, opcode: str, origins: Iterable[tuple[int, str]]) -> None:
        self.labels[vid] = opcode
        for oid, olabel in origins:
            if self.full:
                return
            self.labels.setdefault(oid, olabel)
            self.edges.add((vid, oid))

    def graph(self) -> DataFlowGraph:
        return DataFlowGraph(self.labels, self.edges)


def ingest_resolved(events: Iterable[ResolvedEvent], cfg: IngestConfig | None = None) -> DataFlowGraph:
    """Build the data-flow graph of the instrumented events in a resolved trace."""
    cfg = cfg or IngestConfig()
    b = _GraphBuilder(cfg)
    seen: dict[int, str] = {}
    last = None
    for ev in events:
        if last is not None and ev.event_id <= last:
            raise FormatError(f"event ids not increasing at {ev.event_id}")
        last = ev.event_id
        for o in ev.operand_origins:
            if o >= ev.event_id:
                raise FormatError(f"event {ev.event_id} names later origin {o}")
        if b.full:
            break
        seen[ev.event_id] = ev.opcode
        if ev.opcode in cfg.instrumented_labels:
            b.consume(
                ev.event_id,
                ev.opcode,
                ((o, seen.get(o, UNKNOWN_LABEL)) for o in ev.operand_origins),
            )
    return b.graph()


def ingest_raw(events: Iterable[RawStackEvent], cfg: IngestConfig | None = None) -> DataFlowGraph:
    """Recover operand origins of a raw stack trace and build its graph.

    Event ``k`` (0-based) gets vertex id ``k + 1``. A slot read pushes the
    origin stored by the slot's current generation; a slot write pops one
    value and starts a new generation holding that value's origin (and
    pushes it back when the event also pushes, as ``local.tee`` does).
    """
    cfg = cfg or IngestConfig()
    b = _GraphBuilder(cfg)
    stack: list[tuple[int, str]] = []
    slots: dict[tuple[str, int], tuple[int, str]] = {}
    generation: dict[tuple[str, int], int] = {}
    fresh = FRESH_ORIGIN_BASE
    for k, ev in enumerate(events):
        if b.full:
            break
        vid = k + 1
        if ev.pops > len(stack):
            raise StackUnderflow(k, ev.opcode)
        popped = stack[len(stack) - ev.pops:] if ev.pops else []
        del stack[len(stack) - ev.pops:]
        slot = ev.slot
        if slot is not None:
            key = (slot.kind, slot.index)
            if slot.access == "write":
                if not popped:
                    raise FormatError(f"slot write without operand at event {k}")
                slots[key] = popped[-1]
                generation[key] = generation.get(key, 0) + 1
                stack.extend([popped[-1]] * ev.pushes)
            else:
                if key not in slots:
                    slots[key] = (fresh, UNKNOWN_LABEL)
                    generation[key] = 0
                    fresh += 1
                stack.extend([slots[key]] * ev.pushes)
            continue
        if ev.opcode in cfg.instrumented_labels:
            b.consume(vid, ev.opcode, popped)
        stack.extend([(vid, ev.opcode)] * ev.pushes)
    return b.graph()


# -- trace files ------------------------------------------------------------


def _parse_header(line: str) -> tuple[str, dict]:
    parts = line[1:].split()
    if len(parts) < 3 or parts[0] != "dfgtrace":
        raise FormatError(f"not a dfgtrace header: {line!r}")
    if parts[1] != TRACE_VERSION:
        raise VersionError(f"unsupported trace version {parts[1]}")
    if parts[2] not in ("resolved", "raw"):
        raise FormatError(f"unknown trace kind {parts[2]!r}")
    meta = dict(p.split("=", 1) for p in parts[3:] if "=" in p)
    if meta.get("dir", DIRECTION) != DIRECTION:
        raise FormatError(f"unsupported edge direction {meta['dir']!r}")
    return parts[2], meta


def parse_resolved_line(line: str, lineno: int = 0) -> ResolvedEvent:
    parts = line.split()
    if len(parts) < 3 or parts[0] != "EVENT":
        raise FormatError(f"line {lineno}: malformed resolved event {line!r}")
    try:
        return ResolvedEvent(int(parts[1]), parts[2], tuple(int(p) for p in parts[3:]))
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None


def parse_raw_line(line: str, lineno: int = 0) -> RawStackEvent:
    parts = line.split()
    try:
        if parts[0] != "OP" or not parts[2].startswith("pops=") or not parts[3].startswith("pushes="):
            raise ValueError("expected OP <opcode> pops=<k> pushes=<k>")
        pops, pushes = int(parts[2][5:]), int(parts[3][7:])
        if pops < 0 or pushes < 0:
            raise ValueError("negative stack effect")
        slot = None
        if len(parts) > 4:
            kind, idx, access = parts[4:7]
            if kind not in ("local", "global") or access not in ("read", "write") or len(parts) != 7:
                raise ValueError("bad slot effect")
            slot = SlotEffect(kind, int(idx), access)
        return RawStackEvent(parts[1], pops, pushes, slot)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"line {lineno}: malformed raw event {line!r}: {exc}") from None


def iter_trace(path) -> tuple[str, Iterator]:
    """Open a trace file; returns its kind and a lazy event iterator."""
    fh = open(path, encoding="utf-8")
    first = fh.readline().strip()
    try:
        kind, _ = _parse_header(first)
    except FormatError:
        fh.close()
        raise
    parse = parse_resolved_line if kind == "resolved" else parse_raw_line

    def events():
        with fh:
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                yield parse(line, lineno)

    return kind, events()


def ingest_file(path, cfg: IngestConfig | None = None) -> DataFlowGraph:
    kind, events = iter_trace(path)
    if kind == "resolved":
        return ingest_resolved(events, cfg)
    return ingest_raw(events, cfg)


def write_raw_trace(events: Iterable[RawStackEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dfgtrace {TRACE_VERSION} raw\n")
        for ev in events:
            fh.write(ev.to_line() + "\n")


def write_resolved_trace(events: Iterable[ResolvedEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dfgtrace {TRACE_VERSION} resolved dir={DIRECTION}\n")
        for ev in events:
            fh.write(" ".join(["EVENT", str(ev.event_id), ev.opcode, *map(str, ev.operand_origins)]) + "\n")


# -- fingerprints -----------------------------------------------------------


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class FingerprintRecord:
    graph: DataFlowGraph
    name: str
    source: str = ""
    direction: str = DIRECTION
    params: dict = field(default_factory=dict)
    created: str = field(default_factory=_timestamp)

    def meta(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "direction": self.direction,
            "params": self.params,
            "created": self.created,
        }


def dumps_fingerprint(rec: FingerprintRecord) -> str:
    g = rec.graph
    for v in g.vertices:
        lab = g.label(v)
        if not lab or any(c.isspace() for c in lab):
            raise FormatError(f"label {lab!r} at vertex {v} cannot be serialized")
    body = FINGERPRINT_MAGIC + "\n"
    body += "#meta " + json.dumps(rec.meta(), sort_keys=True, separators=(",", ":")) + "\n"
    body += g.canonical_text()
    crc = zlib.crc32(body.encode("utf-8")) & 0xFFFFFFFF
    return body + f"#crc32 {crc:08x}\n"


def loads_fingerprint(text: str) -> FingerprintRecord:
    lines = text.splitlines(keepends=True)
    if not lines or not lines[0].startswith("#dfgprint fingerprint"):
        raise FormatError("not a fingerprint file")
    if lines[0].rstrip("\n") != FINGERPRINT_MAGIC:
        raise VersionError(f"unsupported fingerprint version: {lines[0].strip()!r}")
    if not lines[-1].startswith("#crc32 "):
        raise FormatError("missing checksum line")
    body = "".join(lines[:-1])
    want = lines[-1].split()[1]
    got = f"{zlib.crc32(body.encode('utf-8')) & 0xFFFFFFFF:08x}"
    if want != got:
        raise ChecksumError(f"checksum mismatch: file says {want}, content is {got}")
    meta = None
    labels: dict[int, str] = {}
    edges = []
    for lineno, line in enumerate(lines[1:-1], start=2):
        if line.startswith("#meta "):
            meta = json.loads(line[6:])
            continue
        parts = line.split()
        try:
            if parts[0] == "V" and len(parts) == 3:
                labels[int(parts[1])] = parts[2]
            elif parts[0] == "E" and len(parts) == 3:
                edges.append((int(parts[1]), int(parts[2])))
            else:
                raise ValueError(line.strip())
        except (IndexError, ValueError):
            raise FormatError(f"line {lineno}: malformed record {line.strip()!r}") from None
    if meta is None:
        raise FormatError("missing #meta line")
    g = DataFlowGraph(labels, edges, check=False)
    problems = validate(g)
    if problems:
        raise GraphError("invalid graph in fingerprint: " + "; ".join(problems))
    return FingerprintRecord(
        g,
        meta["name"],
        meta.get("source", ""),
        meta.get("direction", DIRECTION),
        meta.get("params", {}),
        meta.get("created", ""),
    )


def write_fingerprint(rec: FingerprintRecord, path) -> None:
    Path(path).write_text(dumps_fingerprint(rec), encoding="utf-8")


def read_fingerprint(path) -> FingerprintRecord:
    return loads_fingerprint(Path(path).read_text(encoding="utf-8"))


# -- DOT --------------------------------------------------------------------

DOT_COLORS = {"and": "red", "xor": "green", "shr": "blue"}


def to_dot(g: DataFlowGraph, name: str = "dfg") -> str:
    out = [f"digraph {name} {{"]
    for v in g.vertices:
        lab = g.label(v)
        attrs = f'label="{lab}"'
        if lab in DOT_COLORS:
            attrs += f", style=filled, fillcolor={DOT_COLORS[lab]}"
        out.append(f"  n{v} [{attrs}];")
    for a, b in g.sorted_edges():
        out.append(f"  n{a} -> n{b};")
    out.append("}")
    return "\n".join(out) + "\n"


def export_dot(g: DataFlowGraph, path) -> None:
    Path(path).write_text(to_dot(g), encoding="utf-8")
