"""Acceptance criteria 1-10, each printing one PASS/FAIL line."""

import filecmp
import math
import random
import time

from conftest import ACCEPTANCE_LINES
from dfgprint.cli import main as cli_main
from dfgprint.fis import FisParams, nfis
from dfgprint.graph import DataFlowGraph, graphs_isomorphic, maximal_rooted_subgraph, rooted_isomorphic
from dfgprint.quality import build_gn, run_quality_study
from dfgprint.simplify import SimplifyParams, approx_simplify, exact_visit_probability, monte_carlo_visits
from dfgprint.synth import WORKLOAD_KINDS, ObfuscationSpec, WorkloadSpec, gen_trace, obfuscate_trace
from dfgprint.traceio import IngestConfig, ingest_raw
from oracles import exact_nfis, random_dag

UNCAPPED = IngestConfig(max_edges=10**9)


def report(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _random_dags(count, seed, max_n=50):
    rng = random.Random(seed)
    return [random_dag(rng, rng.randint(2, max_n), rng.uniform(0.02, 0.3)) for _ in range(count)]


def test_criterion_1_monte_carlo_matches_exact():
    t0 = time.perf_counter()
    n_walks = 10000
    inside = total = 0
    for i, g in enumerate(_random_dags(100, seed=1)):
        p = exact_visit_probability(g)
        f = monte_carlo_visits(g, n_walks, seed=i).frequency
        for v in g.vertices:
            tol = 4 * math.sqrt(p[v] * (1 - p[v]) / n_walks)
            inside += abs(f[v] - p[v]) <= tol + 1e-12
            total += 1
    elapsed = time.perf_counter() - t0
    frac = inside / total
    report(1, frac >= 0.99 and elapsed < 30, f"{frac:.4f} of {total} vertices within 4 sigma, {elapsed:.1f}s")


def test_criterion_2_source_mass_conservation():
    graphs = _random_dags(100, seed=2) + [DataFlowGraph({1: "x"}, []), random_dag(random.Random(0), 200, 0.05)]
    worst = 0.0
    exact_counts = True
    for i, g in enumerate(graphs):
        p = exact_visit_probability(g)
        worst = max(worst, abs(math.fsum(p[v] for v in g.sources()) - 1))
        stats = monte_carlo_visits(g, 5000, seed=i)
        exact_counts &= sum(stats.visits[v] for v in g.sources()) == stats.walks_performed
    report(2, worst <= 1e-12 and exact_counts,
           f"max |sum P - 1| = {worst:.1e}; walk counts at sources sum to N on all {len(graphs)} graphs")


def _twin_cone_graph(rng: random.Random):
    """Two copies of a random cone plus ambient parents with mirrored in-degrees."""
    n = rng.randint(2, 10)
    cone = random_dag(rng, n, 0.4)
    top = n - 1
    edges = set(cone.edges)
    for v in range(n - 1):  # make every vertex reachable from the root n-1
        if not any(a > v and (a, v) in edges for a in range(n)):
            edges.add((rng.randint(v + 1, n - 1), v))
    labels, all_edges = {}, set()
    offsets = (0, 100)
    for off in offsets:
        labels.update({v + off: cone.label(v) for v in range(n)})
        all_edges |= {(a + off, b + off) for a, b in edges}
    # ambient parents: the same number of extra in-edges on each twin vertex
    nxt = 1000
    for v in range(n):
        for _ in range(rng.randint(0, 2)):
            for off in offsets:
                labels[nxt] = rng.choice(["and", "xor", "other"])
                all_edges.add((nxt, v + off))
                nxt += 1
    # some unrelated vertices feeding both copies' roots and the rest of the graph
    for _ in range(rng.randint(0, 3)):
        labels[nxt] = "other"
        all_edges |= {(nxt, top), (nxt, top + 100)}
        nxt += 1
    return DataFlowGraph(labels, all_edges), top, top + 100


def test_criterion_3_twin_cones_have_equal_probability():
    rng = random.Random(3)
    worst = 0.0
    cases = 0
    excluded = 0
    for _ in range(200):
        g, r1, r2 = _twin_cone_graph(rng)
        s1, s2 = maximal_rooted_subgraph(g, r1), maximal_rooted_subgraph(g, r2)
        assert rooted_isomorphic(s1, s2, match_indegree_in=g)
        p = exact_visit_probability(g)
        worst = max(worst, abs(p[r1] - p[r2]))
        cases += 1
        # one extra parent on a non-root twin breaks the precondition; such graphs are excluded
        inner = [v for v in s1.members if v != r1]
        if inner:
            bumped = DataFlowGraph({**g.labels, 5000: "other"}, set(g.edges) | {(5000, inner[0])})
            b1, b2 = maximal_rooted_subgraph(bumped, r1), maximal_rooted_subgraph(bumped, r2)
            excluded += not rooted_isomorphic(b1, b2, match_indegree_in=bumped)
    report(3, worst <= 1e-12, f"{cases} twin-cone graphs, max |P(r1) - P(r2)| = {worst:.1e}; "
                              f"{excluded} perturbed variants fail the precondition and are excluded")


def test_criterion_4_g3_layer_sizes():
    t0 = time.perf_counter()
    sizes = build_gn(3).sizes
    elapsed = time.perf_counter() - t0
    report(4, sizes == [1, 2, 8, 2048] and elapsed < 5, f"layer sizes {sizes}, {elapsed:.2f}s")


def test_criterion_5_quality_study():
    t0 = time.perf_counter()
    rep = run_quality_study(5000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = 0.80 <= rep.fixed_point_fraction <= 0.98 and 4 <= rep.mean_iso_pairs <= 10 and elapsed < 300
    report(5, ok, f"fixed-point fraction {rep.fixed_point_fraction:.3f} (target [0.80, 0.98]), "
                  f"mean iso pairs {rep.mean_iso_pairs:.2f} (target [4, 10]), {elapsed:.1f}s")


def test_criterion_6_repetition_collapse():
    ok = True
    notes = []
    for kind in ("miner-sha2like", "miner-mixrounds"):
        prints = {}
        for rounds in (10, 25, 50, 100):
            events, _ = gen_trace(WorkloadSpec(kind, rounds))
            g = ingest_raw(events, UNCAPPED)
            prints[rounds] = (g, approx_simplify(g, SimplifyParams(use_exact_p=True)))
        sizes = {r: len(fp) for r, (_, fp) in prints.items()}
        iso = all(graphs_isomorphic(prints[10][1], prints[r][1]) for r in (25, 50, 100))
        g100, fp100 = prints[100]
        reduction = 1 - len(fp100) / len(g100)
        ok &= iso and len(set(sizes.values())) == 1 and reduction >= 0.90
        notes.append(f"{kind}: |V'| {sorted(set(sizes.values()))}, isomorphic={iso}, reduction@100={reduction:.3f}")
    report(6, ok, "; ".join(notes))


def _connected_small(rng, lo=5, hi=12):
    while True:
        g = random_dag(rng, rng.randint(4, 9), 0.45)
        if not lo <= g.num_edges <= hi:
            continue
        seen = {g.vertices[0]}
        stack = [g.vertices[0]]
        while stack:
            v = stack.pop()
            for u in g.succ(v) + g.pred(v):
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        if len(seen) == len(g):
            return g


def _perturb(rng, h):
    labels = dict(h.labels)
    for v in labels:
        if rng.random() < 0.2:
            labels[v] = rng.choice(["and", "xor", "shr"])
    edges = [e for e in h.edges if rng.random() > 0.2]
    return DataFlowGraph(labels, edges)


def test_criterion_7_fis_against_brute_force():
    rng = random.Random(7)
    worst = 0.0
    for i in range(12):
        h = _connected_small(rng)
        g = _perturb(rng, h)
        want = float(exact_nfis(h, g, 5))
        got = nfis(h, g, FisParams(n=5, k=20000, seed=i)).value
        worst = max(worst, abs(got - want))
    self_ok = sound = mono = True
    for i in range(100):
        g = random_dag(rng, rng.randint(3, 14), 0.3)
        if g.num_edges == 0:
            continue
        params = FisParams(n=rng.randint(1, 5), k=60, seed=i)
        self_ok &= nfis(g, g, params).value == 1.0
        h = g.subgraph([v for v in g.vertices if rng.random() < 0.8])
        if h.num_edges:
            sound &= nfis(h, g, params).value == 1.0
        bigger = DataFlowGraph(
            {**g.labels, **{100 + j: rng.choice(["and", "xor", "shr"]) for j in range(4)}},
            set(g.edges) | {(100 + j, v) for j in range(4) for v in g.vertices if rng.random() < 0.3},
        )
        other = random_dag(rng, rng.randint(3, 10), 0.4)
        if other.num_edges:
            mono &= nfis(other, g, params).value <= nfis(other, bigger, params).value
    ok = worst <= 0.03 and self_ok and sound and mono
    report(7, ok, f"max |MC - exact| = {worst:.4f} over 12 pairs; self-score 1.0: {self_ok}; "
                  f"subset soundness: {sound}; superset monotonicity: {mono}")


def _fingerprint(events, seed=0):
    return approx_simplify(ingest_raw(events), SimplifyParams(seed=seed))


def test_criterion_8_synthetic_detection():
    t0 = time.perf_counter()
    params = FisParams(n=5, k=500, seed=8)
    theta = 0.65
    miners = ("miner-sha2like", "miner-mixrounds")
    family = {k: _fingerprint(gen_trace(WorkloadSpec(k, 50, seed=1000))[0]) for k in miners}
    low_miner = 1.0
    for kind in miners:
        for seed in range(3):
            events, _ = gen_trace(WorkloadSpec(kind, 50, seed=seed))
            for strategy in ("split", "interleave"):
                obf = obfuscate_trace(events, ObfuscationSpec(strategy, seed=seed))
                low_miner = min(low_miner, nfis(family[kind], _fingerprint(obf, seed), params).value)
    high_benign = 0.0
    for kind in WORKLOAD_KINDS:
        if kind.startswith("miner-"):
            continue
        for seed in range(3):
            fp = _fingerprint(gen_trace(WorkloadSpec(kind, 50, seed=seed, noise_rate=0.1))[0], seed)
            for m in miners:
                high_benign = max(high_benign, nfis(family[m], fp, params).value)
    elapsed = time.perf_counter() - t0
    ok = low_miner >= theta and high_benign < theta and elapsed < 300
    report(8, ok, f"lowest obfuscated-miner score {low_miner:.3f}, highest benign score {high_benign:.3f} "
                  f"at threshold {theta}, {elapsed:.1f}s")


def _tree_files(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def test_criterion_9_pipeline_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["pipeline", "--out", str(a), "--seed", "42", "--rounds", "20"]) == 0
    assert cli_main(["pipeline", "--out", str(b), "--seed", "42", "--rounds", "20"]) == 0
    capsys.readouterr()
    files = _tree_files(a)
    same = files == _tree_files(b) and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)
    reports = [f for f in files if f.parts[0] == "reports"]
    report(9, same and len(reports) == 8, f"{len(files)} files ({len(reports)} reports) byte-identical: {same}")


def test_criterion_10_shadow_stack_reconstruction():
    checked = 0
    ok = True
    for kind in WORKLOAD_KINDS:
        for seed in range(3):
            for noise in (0.0, 0.25):
                for rounds in (1, 7):
                    events, truth = gen_trace(WorkloadSpec(kind, rounds, seed=seed, noise_rate=noise))
                    g = ingest_raw(events, UNCAPPED)
                    ok &= g.edges == truth.edges and g == truth
                    checked += 1
    report(10, ok, f"{checked} synthetic traces reconstructed exactly")
