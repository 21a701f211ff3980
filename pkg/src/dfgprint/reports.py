"""Report records and their JSON / aligned-table renderings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from dfgprint.fis import FisScore
from dfgprint.graph import DataFlowGraph

DEFAULT_THRESHOLD = 0.65


@dataclass
class DetectionVerdict:
    sample: str
    scores: dict[str, FisScore]
    threshold: float = DEFAULT_THRESHOLD
    thresholds: dict[str, float] = field(default_factory=dict)

    @property
    def max_score(self) -> float:
        return max((s.value for s in self.scores.values()), default=0.0)

    def threshold_for(self, name: str) -> float:
        return self.thresholds.get(name, self.threshold)

    @property
    def malicious(self) -> bool:
        return any(s.value >= self.threshold_for(n) for n, s in self.scores.items())

    @property
    def verdict(self) -> str:
        return "malicious" if self.malicious else "benign"

    def as_dict(self) -> dict:
        return {
            "sample": self.sample,
            "scores": {n: self.scores[n].as_dict() for n in sorted(self.scores)},
            "max_score": self.max_score,
            "threshold": self.threshold,
            "thresholds": dict(sorted(self.thresholds.items())),
            "verdict": self.verdict,
        }

    def rows(self):
        return [
            [n, _fmt(self.scores[n].value), self.scores[n].effective_n, _fmt(self.threshold_for(n))]
            for n in sorted(self.scores)
        ]


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_pairs(cls, pairs) -> "MetricsReport":
        """``pairs`` of (predicted_malicious, actually_malicious)."""
        tp = fp = tn = fn = 0
        for pred, actual in pairs:
            if pred and actual:
                tp += 1
            elif pred:
                fp += 1
            elif actual:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)

    @property
    def accuracy(self):
        return _ratio(self.tp + self.tn, self.tp + self.fp + self.tn + self.fn)

    @property
    def sensitivity(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self):
        return _ratio(self.tn, self.tn + self.fp)

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def f1(self):
        p, s = self.precision, self.sensitivity
        if p is None or s is None or p + s == 0:
            return None
        return 2 * p * s / (p + s)

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "precision": self.precision,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class ReductionRow:
    name: str
    vertices: int
    edges: int
    vertices_after: int
    edges_after: int

    @classmethod
    def of(cls, name: str, before: DataFlowGraph, after: DataFlowGraph) -> "ReductionRow":
        return cls(name, len(before), before.num_edges, len(after), after.num_edges)

    @property
    def vertex_reduction(self):
        return None if self.vertices == 0 else 1 - self.vertices_after / self.vertices

    @property
    def edge_reduction(self):
        return None if self.edges == 0 else 1 - self.edges_after / self.edges

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "V": self.vertices,
            "E": self.edges,
            "V_after": self.vertices_after,
            "E_after": self.edges_after,
            "dV": self.vertex_reduction,
            "dE": self.edge_reduction,
        }


def _fmt(x, pct=False) -> str:
    if x is None:
        return "N/A"
    if isinstance(x, float):
        return f"{100 * x:.1f}%" if pct else f"{x:.4f}"
    return str(x)


def table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_fmt(c) if not isinstance(c, str) else c for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def render_verdict(v: DetectionVerdict, fmt: str) -> str:
    if fmt == "json":
        return to_json(v.as_dict())
    out = table(["fingerprint", "score", "n", "threshold"], v.rows())
    return out + f"sample {v.sample}: max {v.max_score:.4f} -> {v.verdict}\n"


def render_matrix(names: list[str], scores: dict[tuple[str, str], float], fmt: str) -> str:
    if fmt == "json":
        return to_json({"names": names, "scores": [[scores[a, b] for b in names] for a in names]})
    return table(["h \\ g"] + names, [[a] + [scores[a, b] for b in names] for a in names])


def render_metrics(m: MetricsReport, fmt: str) -> str:
    if fmt == "json":
        return to_json(m.as_dict())
    d = m.as_dict()
    return table(["metric", "value"], [[k, d[k]] for k in ("tp", "fp", "tn", "fn", "accuracy",
                                                          "sensitivity", "specificity", "precision", "f1")])


def render_reduction(rows: list[ReductionRow], fmt: str) -> str:
    rows = sorted(rows, key=lambda r: r.name)
    if fmt == "json":
        return to_json([r.as_dict() for r in rows])
    return table(
        ["sample", "|V|", "|E|", "|V'|", "|E'|", "dV", "dE"],
        [
            [r.name, r.vertices, r.edges, r.vertices_after, r.edges_after,
             _fmt(r.vertex_reduction, pct=True), _fmt(r.edge_reduction, pct=True)]
            for r in rows
        ],
    )


def render_mapping(d: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(d)
    return table(["key", "value"], [[k, v if isinstance(v, (int, float, str)) or v is None else json.dumps(v, sort_keys=True)]
                                    for k, v in sorted(d.items())])
