"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import random
import time

from dfgprint import kernels
from dfgprint.fis import FragmentSampler
from dfgprint.simplify import monte_carlo_visits
from dfgprint.synth import WorkloadSpec, gen_trace
from dfgprint.traceio import ingest_raw


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_walks(g, walks, backend, repeat):
    return _best(lambda: monte_carlo_visits(g, walks, seed=0, backend=backend), repeat)


def bench_match(h, g, count, backend, repeat):
    rng = random.Random(0)
    sampler = FragmentSampler(h)
    frags = [sampler.sample(5, rng) for _ in range(count)]
    packed = kernels.pack(g)
    return _best(lambda: [kernels.match(f, packed, backend) for f in frags], repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    g = ingest_raw(gen_trace(WorkloadSpec("miner-sha2like", 20))[0])
    h = ingest_raw(gen_trace(WorkloadSpec("miner-sha2like", 1, seed=1))[0])
    print(f"graph: |V|={len(g)} |E|={g.num_edges}; backends: {sorted(kernels.BACKENDS)}")
    rows = []
    for backend in sorted(kernels.BACKENDS):
        walk_t = bench_walks(g, 20000, backend, args.repeat)
        match_t = bench_match(h, g, 500, backend, args.repeat)
        rows.append((backend, walk_t, match_t))
        print(f"{backend:8s} walks(20000): {walk_t * 1e3:9.1f} ms   match(500 fragments): {match_t * 1e3:9.1f} ms")
    if len(rows) == 2:
        (_, cw, cm), (_, pw, pm) = rows
        print(f"speedup: walks x{pw / cw:.1f}, match x{pm / cm:.1f}")


if __name__ == "__main__":
    main()
