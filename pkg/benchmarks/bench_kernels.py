"""Numba vs pure-numpy timings of the two hot kernels.

    python benchmarks/bench_kernels.py [--sweeps 2000] [--repeat 3]

Both backends are importable in one process (the env flag only picks the
default), so each call passes ``backend=`` explicitly.  The first numba call
is timed separately as compile/cache-load time.
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from bbgky_qem.hierarchy import connection_edges
from bbgky_qem.kernels import connected_labels
from bbgky_qem.mitigation import AnnealSchedule, mitigate
from bbgky_qem.pipeline import ModelSpec, noisy_table, simulate_model


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_chain(sweeps, repeat):
    sim = simulate_model(ModelSpec())
    table = noisy_table(sim, 1)
    sched = AnnealSchedule(sweeps, sweeps // 4, 30, proposal_scale=0.02, seed=5)
    rows = []
    for r in (1, 3):
        run = {}
        for backend in ("numba", "numpy"):
            warm = replace(sched, sweeps=8, thermalization=2, samples=2)
            t0 = time.perf_counter()
            mitigate(table, sim.graph, sim.hamiltonian, r, warm, backend=backend)
            first = time.perf_counter() - t0
            best, res = best_of(
                lambda: mitigate(table, sim.graph, sim.hamiltonian, r, sched, backend=backend), repeat
            )
            run[backend] = (first, best, res.chi)
        same = np.array_equal(run["numba"][2], run["numpy"][2])
        rows.append((f"anneal r={r}", run, same))
    return rows


def bench_partition(repeat):
    rows = []
    for n in (6, 8):
        h = ModelSpec(nqubits=n).hamiltonian()
        src, dst = connection_edges(h)
        run = {}
        for backend in ("numba", "numpy"):
            t0 = time.perf_counter()
            connected_labels(4**n, src, dst, backend=backend)
            first = time.perf_counter() - t0
            best, labels = best_of(lambda: connected_labels(4**n, src, dst, backend=backend), repeat)
            run[backend] = (first, best, labels)
        same = np.array_equal(run["numba"][2], run["numpy"][2])
        rows.append((f"components N={n} ({len(src)} edges)", run, same))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rows = bench_chain(args.sweeps, args.repeat) + bench_partition(args.repeat)
    print(f"{'kernel':34s} {'numba 1st':>10s} {'numba':>9s} {'numpy':>9s} {'speedup':>8s}  identical")
    for name, run, same in rows:
        nb, npy = run["numba"], run["numpy"]
        print(f"{name:34s} {nb[0]:10.3f} {nb[1]:9.3f} {npy[1]:9.3f} {npy[1] / nb[1]:8.1f}  {same}")


if __name__ == "__main__":
    main()
