"""Command line interface: ``dfgprint <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 malicious verdict (``score``).
Settings come from built-in defaults, then ``--config FILE`` (``key=value``
lines), then flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from dfgprint import __version__
from dfgprint.db import DbError, FingerprintDb
from dfgprint.fis import FisParams, FisScore, nfis
from dfgprint.graph import GraphError
from dfgprint.quality import SamplerConfig, run_quality_study
from dfgprint.reports import (
    DEFAULT_THRESHOLD,
    DetectionVerdict,
    MetricsReport,
    ReductionRow,
    render_mapping,
    render_matrix,
    render_metrics,
    render_reduction,
    render_verdict,
    table,
    to_json,
)
from dfgprint.simplify import SimplifyParams, approx_simplify, exact_simplify
from dfgprint.synth import (
    OBFUSCATION_STRATEGIES,
    WORKLOAD_KINDS,
    ObfuscationSpec,
    WorkloadSpec,
    gen_trace,
    obfuscate_trace,
)
from dfgprint.traceio import (
    FingerprintRecord,
    FormatError,
    IngestConfig,
    StackUnderflow,
    export_dot,
    ingest_file,
    ingest_raw,
    read_fingerprint,
    write_fingerprint,
    write_raw_trace,
)

EXIT_OK, EXIT_INVALID, EXIT_MALICIOUS = 0, 1, 2

DEFAULTS = {
    "threshold": DEFAULT_THRESHOLD,
    "n": 5,
    "k": 500,
    "walks": None,
    "bandwidth": "auto",
    "seed": 0,
    "exact_p": False,
    "fixpoint": False,
    "max_edges": 2002,
    "format": "table",
    "jobs": 1,
}
_CASTS = {
    "threshold": float,
    "n": int,
    "k": int,
    "walks": int,
    "seed": int,
    "max_edges": int,
    "jobs": int,
}


class CliError(Exception):
    pass


def derive_seed(master: int, *names: str) -> int:
    """Independent, reproducible seed for a named stage of the pipeline."""
    digest = hashlib.sha256(":".join([str(master), *names]).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path) -> dict:
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            if key in ("exact_p", "fixpoint"):
                cfg[key] = _parse_bool(value)
            elif key == "bandwidth":
                cfg[key] = value if value == "auto" else float(value)
            elif key == "format":
                if value not in ("json", "table"):
                    raise ValueError("format must be json or table")
                cfg[key] = value
            else:
                cfg[key] = _CASTS[key](value)
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: {exc}") from None
    return cfg


class Settings:
    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._cfg = load_config(args.config) if getattr(args, "config", None) else {}

    def __getattr__(self, key):
        flag = getattr(self._args, key, None)
        if flag is not None:
            return flag
        return self._cfg.get(key, DEFAULTS[key])

    def simplify_params(self, seed: int | None = None) -> SimplifyParams:
        return SimplifyParams(
            walks=self.walks,
            bandwidth=self.bandwidth,
            use_exact_p=self.exact_p,
            seed=derive_seed(self.seed, "walk") if seed is None else seed,
            fixpoint=self.fixpoint,
        )

    def fis_params(self) -> FisParams:
        return FisParams(n=self.n, k=self.k, seed=derive_seed(self.seed, "fragment"))


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_graph(path) -> FingerprintRecord:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{path}: no such file")
    return read_fingerprint(p)


def _score_all(samples, refs, fis_params, thresholds, threshold, jobs) -> list[DetectionVerdict]:
    """Score every (sample, reference) pair; results ordered by name."""
    pairs = [(s, r) for s in sorted(samples) for r in sorted(refs)]

    def run(pair):
        s, r = pair
        return nfis(refs[r], samples[s], fis_params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(p) for p in pairs]
    scores: dict[str, dict[str, FisScore]] = {s: {} for s in samples}
    for (s, r), sc in zip(pairs, results):
        scores[s][r] = sc
    return [DetectionVerdict(s, scores[s], threshold, thresholds) for s in sorted(samples)]


# -- commands ---------------------------------------------------------------


def cmd_ingest(args, st: Settings) -> int:
    cfg = IngestConfig(max_edges=st.max_edges)
    g = ingest_file(args.trace, cfg)
    name = args.name or Path(args.trace).stem
    rec = FingerprintRecord(g, name, source=str(args.trace), params={"stage": "ingest", "max_edges": st.max_edges})
    write_fingerprint(rec, args.output)
    if args.dot:
        export_dot(g, args.dot)
    _emit(render_mapping({"name": name, "vertices": len(g), "edges": g.num_edges}, st.format), None)
    return EXIT_OK


def cmd_simplify(args, st: Settings) -> int:
    rec = _read_graph(args.graph)
    if args.exact:
        out = exact_simplify(rec.graph, strict=args.strict)
        params = {"stage": "exact", "strict": args.strict}
    else:
        sp = st.simplify_params()
        out = approx_simplify(rec.graph, sp)
        params = {"stage": "approx", **sp.as_dict()}
    name = args.name or rec.name
    write_fingerprint(FingerprintRecord(out, name, source=str(args.graph), params=params), args.output)
    if args.dot:
        export_dot(out, args.dot)
    row = ReductionRow.of(name, rec.graph, out)
    _emit(render_reduction([row], st.format), None)
    return EXIT_OK


def cmd_db(args, st: Settings) -> int:
    if args.db_cmd == "add":
        db = FingerprintDb.create(args.db)
        rec = _read_graph(args.fingerprint)
        if args.name:
            rec.name = args.name
        db.add(rec, threshold=args.fp_threshold, replace=args.replace)
        _emit(f"added {rec.name}\n", None)
    elif args.db_cmd == "remove":
        db = _open_db(args.db)
        db.remove(args.name)
        _emit(f"removed {args.name}\n", None)
    elif args.db_cmd == "list":
        db = _open_db(args.db)
        listing = {n: db.entries[n] for n in db.names()}
        if st.format == "json":
            _emit(to_json(listing), None)
        else:
            rows = [[n, e["vertices"], e["edges"], "default" if e["threshold"] is None else e["threshold"]]
                    for n, e in listing.items()]
            _emit(table(["name", "|V|", "|E|", "threshold"], rows), None)
    else:
        db = _open_db(args.db)
        problems = db.check()
        _emit("".join(p + "\n" for p in problems) or "ok\n", None)
        return EXIT_INVALID if problems else EXIT_OK
    return EXIT_OK


def _open_db(path) -> FingerprintDb:
    if not (Path(path) / "index.json").exists():
        raise CliError(f"{path}: not a fingerprint database (no index.json); create one with 'db add'")
    return FingerprintDb(path)


def cmd_score(args, st: Settings) -> int:
    sample = _read_graph(args.sample)
    db = _open_db(args.db)
    refs = {n: db.load(n).graph for n in db.names()}
    if not refs:
        raise CliError(f"{args.db}: database is empty")
    thresholds = {n: db.threshold(n) for n in refs if db.threshold(n) is not None}
    [verdict] = _score_all({sample.name: sample.graph}, refs, st.fis_params(), thresholds, st.threshold, st.jobs)
    _emit(render_verdict(verdict, st.format), args.output)
    return EXIT_MALICIOUS if verdict.malicious else EXIT_OK


def cmd_matrix(args, st: Settings) -> int:
    recs = {}
    for p in args.fingerprints:
        r = _read_graph(p)
        if r.name in recs:
            raise CliError(f"duplicate fingerprint name {r.name!r}")
        recs[r.name] = r.graph
    names = sorted(recs)
    fp = st.fis_params()
    scores = {(a, b): nfis(recs[a], recs[b], fp).value for a in names for b in names}
    _emit(render_matrix(names, scores, st.format), args.output)
    return EXIT_OK


def _load_labels(path) -> dict[str, bool]:
    labels = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("malicious", "benign"):
            raise CliError(f"{path}:{lineno}: expected '<name> malicious|benign'")
        labels[parts[0]] = parts[1] == "malicious"
    return labels


def cmd_eval(args, st: Settings) -> int:
    labels = _load_labels(args.labels)
    predicted = {}
    for p in args.verdicts:
        data = json.loads(Path(p).read_text(encoding="utf-8"))
        for v in data if isinstance(data, list) else [data]:
            predicted[v["sample"]] = v["verdict"] == "malicious"
    missing = sorted(set(predicted) - set(labels))
    if missing:
        raise CliError(f"no label for: {', '.join(missing)}")
    m = MetricsReport.from_pairs((predicted[s], labels[s]) for s in sorted(predicted))
    _emit(render_metrics(m, st.format), args.output)
    return EXIT_OK


def cmd_quality(args, st: Settings) -> int:
    cfg = SamplerConfig(depth=args.depth, max_vertices=args.max_vertices)
    rep = run_quality_study(args.samples, seed=st.seed, cfg=cfg)
    _emit(render_mapping(rep.as_dict(), st.format), args.output)
    return EXIT_OK


def cmd_synth(args, st: Settings) -> int:
    spec = WorkloadSpec(args.kind, args.rounds, derive_seed(st.seed, "synth"), args.noise_rate)
    events, _ = gen_trace(spec)
    if args.obfuscate:
        events = obfuscate_trace(events, ObfuscationSpec(args.obfuscate, derive_seed(st.seed, "obfuscate"), args.rate))
    write_raw_trace(events, args.output)
    _emit(render_mapping({"kind": args.kind, "rounds": args.rounds, "events": len(events),
                          "obfuscation": args.obfuscate}, st.format), None)
    return EXIT_OK


def cmd_reduction(args, st: Settings) -> int:
    rows = []
    for before, after in args.pair:
        b, a = _read_graph(before), _read_graph(after)
        rows.append(ReductionRow.of(a.name, b.graph, a.graph))
    _emit(render_reduction(rows, st.format), args.output)
    return EXIT_OK


# -- the whole synthetic pipeline -------------------------------------------

MINER_KINDS = tuple(k for k in WORKLOAD_KINDS if k.startswith("miner-"))
BENIGN_KINDS = tuple(k for k in WORKLOAD_KINDS if k.startswith("benign-"))


def synthetic_corpus(seed: int, rounds: int, noise: float = 0.1):
    """(name, events, malicious) for the desk-scale corpus, ordered by name."""
    corpus = []
    for kind in MINER_KINDS:
        base, _ = gen_trace(WorkloadSpec(kind, rounds, derive_seed(seed, "synth", kind, "sample")))
        corpus.append((f"{kind}.plain", base, True))
        for strat in OBFUSCATION_STRATEGIES:
            spec = ObfuscationSpec(strat, derive_seed(seed, "obfuscate", kind, strat))
            corpus.append((f"{kind}.{strat}", obfuscate_trace(base, spec), True))
    for kind in BENIGN_KINDS:
        for i in range(2):
            ev, _ = gen_trace(WorkloadSpec(kind, rounds, derive_seed(seed, "synth", kind, str(i)), noise))
            corpus.append((f"{kind}.{i}", ev, False))
    return sorted(corpus, key=lambda c: c[0])


def cmd_pipeline(args, st: Settings) -> int:
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "graphs").mkdir(exist_ok=True)
    (out / "fingerprints").mkdir(exist_ok=True)
    reports = out / "reports"
    reports.mkdir(exist_ok=True)
    cfg = IngestConfig(max_edges=st.max_edges)

    def fingerprint(name, events):
        write_raw_trace(events, out / "traces" / f"{name}.trace")
        g = ingest_raw(events, cfg)
        write_fingerprint(FingerprintRecord(g, name, params={"stage": "ingest"}, created=""),
                          out / "graphs" / f"{name}.fp")
        sp = st.simplify_params(derive_seed(st.seed, "walk", name))
        fp = approx_simplify(g, sp)
        write_fingerprint(FingerprintRecord(fp, name, params=sp.as_dict(), created=""),
                          out / "fingerprints" / f"{name}.fp")
        return g, fp

    db = FingerprintDb.create(out / "db")
    refs = {}
    for kind in MINER_KINDS:
        ev, _ = gen_trace(WorkloadSpec(kind, args.rounds, derive_seed(st.seed, "synth", kind, "reference")))
        _, fp = fingerprint(kind, ev)
        db.add(FingerprintRecord(fp, kind, source="synthetic reference", created=""), replace=True)
        refs[kind] = fp

    samples, labels, rows = {}, {}, []
    for name, ev, malicious in synthetic_corpus(st.seed, args.rounds):
        g, fp = fingerprint(name, ev)
        samples[name] = fp
        labels[name] = malicious
        rows.append(ReductionRow.of(name, g, fp))

    verdicts = _score_all(samples, refs, st.fis_params(), {}, st.threshold, st.jobs)
    metrics = MetricsReport.from_pairs((v.malicious, labels[v.sample]) for v in verdicts)
    names = sorted(refs)
    fp_params = st.fis_params()
    matrix = {(a, b): nfis(refs[a], refs[b], fp_params).value for a in names for b in names}

    for fmt, ext in (("json", "json"), ("table", "txt")):
        (reports / f"verdicts.{ext}").write_text(
            to_json([v.as_dict() for v in verdicts]) if fmt == "json"
            else "".join(render_verdict(v, fmt) + "\n" for v in verdicts),
            encoding="utf-8",
        )
        (reports / f"metrics.{ext}").write_text(render_metrics(metrics, fmt), encoding="utf-8")
        (reports / f"matrix.{ext}").write_text(render_matrix(names, matrix, fmt), encoding="utf-8")
        (reports / f"reduction.{ext}").write_text(render_reduction(rows, fmt), encoding="utf-8")
    (out / "labels.txt").write_text(
        "".join(f"{n} {'malicious' if labels[n] else 'benign'}\n" for n in sorted(labels)), encoding="utf-8"
    )
    _emit(render_metrics(metrics, st.format), None)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file (flags override it)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--format", choices=("json", "table"))


def _fis_flags(p):
    p.add_argument("--n", type=int, help="fragment size in edges (default 5)")
    p.add_argument("--k", type=int, help="fragments per score (default 500)")
    p.add_argument("--threshold", type=float, help="detection threshold (default 0.65)")
    p.add_argument("--jobs", type=int, help="parallel scoring threads")


def _simplify_flags(p):
    p.add_argument("--walks", type=int, help="random walks (default max(10000, 100|V|))")
    p.add_argument("--bandwidth", type=lambda s: s if s == "auto" else float(s))
    p.add_argument("--exact-p", dest="exact_p", action="store_true", default=None,
                   help="use exact visit probabilities instead of walks")
    p.add_argument("--fixpoint", action="store_true", default=None, help="repeat until no merge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfgprint", description="Data-flow fingerprinting of execution traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="trace file -> graph file")
    _common(p)
    p.add_argument("trace")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--name")
    p.add_argument("--dot", help="also write Graphviz DOT here")
    p.add_argument("--max-edges", dest="max_edges", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simplify", help="graph file -> fingerprint file")
    _common(p)
    _simplify_flags(p)
    p.add_argument("graph")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--name")
    p.add_argument("--dot")
    p.add_argument("--exact", action="store_true", help="exact isomorphism-based simplification (small graphs)")
    p.add_argument("--strict", action="store_true", help="with --exact, also require equal in-degrees")
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("db", help="manage a fingerprint database")
    dsub = p.add_subparsers(dest="db_cmd", required=True)
    q = dsub.add_parser("add")
    _common(q)
    q.add_argument("db")
    q.add_argument("fingerprint")
    q.add_argument("--name")
    q.add_argument("--threshold", dest="fp_threshold", type=float, help="per-fingerprint threshold")
    q.add_argument("--replace", action="store_true")
    q = dsub.add_parser("remove")
    _common(q)
    q.add_argument("db")
    q.add_argument("name")
    q = dsub.add_parser("list")
    _common(q)
    q.add_argument("db")
    q = dsub.add_parser("check")
    _common(q)
    q.add_argument("db")
    p.set_defaults(func=cmd_db)

    p = sub.add_parser("score", help="score a sample fingerprint against a database")
    _common(p)
    _fis_flags(p)
    p.add_argument("sample")
    p.add_argument("--db", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("matrix", help="pairwise scores between fingerprints")
    _common(p)
    _fis_flags(p)
    p.add_argument("fingerprints", nargs="+")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("eval", help="metrics from verdict files and labels")
    _common(p)
    p.add_argument("verdicts", nargs="+", help="JSON verdict files from 'score --format json'")
    p.add_argument("--labels", required=True, help="lines of '<name> malicious|benign'")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quality", help="approximation quality study on sampled layered graphs")
    _common(p)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--max-vertices", dest="max_vertices", type=int, default=80)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("synth", help="write a synthetic raw trace")
    _common(p)
    p.add_argument("kind", choices=WORKLOAD_KINDS)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--noise-rate", dest="noise_rate", type=float, default=0.0)
    p.add_argument("--obfuscate", choices=OBFUSCATION_STRATEGIES)
    p.add_argument("--rate", type=float, default=0.1, help="obfuscation rate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reduction", help="graph size before/after simplification")
    _common(p)
    p.add_argument("--pair", nargs=2, action="append", required=True, metavar=("BEFORE", "AFTER"))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_reduction)

    p = sub.add_parser("pipeline", help="synthetic corpus end to end; writes reports under --out")
    _common(p)
    _fis_flags(p)
    _simplify_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--max-edges", dest="max_edges", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, Settings(args))
    except (CliError, DbError, FormatError, GraphError, StackUnderflow, ValueError, OSError) as exc:
        print(f"dfgprint: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
