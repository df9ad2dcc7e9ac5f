"""Time the edge-sweep kernels of each available backend.

Usage::

    python benchmarks/bench_kernels.py [--nodes 50 200] [--p-edge 0.3] [--repeat 5]

Prints one line per (kernel, size, backend) with the best per-call time, and
the speed-up of the compiled backend over the NumPy one.
"""

import argparse
import timeit

import numpy as np

from relmix import kernels
from relmix.noisegen import MixtureNoise, generate_er_graph, generate_state, sample_measurements, \
    trial_streams


def make_problem(n, p_edge, seed=0):
    st = trial_streams(seed, 0)
    g = generate_er_graph(n, p_edge, st["graph"])
    x = generate_state(n, st["state"])
    ms = sample_measurements(g, x, MixtureNoise(0.05, 0.25, 0.1), st["measurements"])
    tails = np.ascontiguousarray(g.tails, dtype=np.intp)
    heads = np.ascontiguousarray(g.heads, dtype=np.intp)
    rng = np.random.default_rng(seed)
    return {
        "tails": tails, "heads": heads, "b": ms.b,
        "x": rng.normal(scale=0.1, size=n), "pi": rng.uniform(size=g.n_edges),
        "m": g.n_edges, "n": n,
    }


def calls(ns, prob):
    """Zero-argument closures exercising each kernel of namespace ``ns``."""
    n, m = prob["n"], prob["m"]
    x_out, grad, pi_out, r_out = np.empty(n), np.empty(n), np.empty(m), np.empty(m)
    t, h, b, x, pi = prob["tails"], prob["heads"], prob["b"], prob["x"], prob["pi"]
    return {
        "posterior_into": lambda: ns.posterior_into(b, 0.05, 0.25, 0.1, r_out),
        "dist_em_step": lambda: ns.dist_em_step(t, h, b, x, pi, 0.05, 0.25, 0.1, 1e-4,
                                                x_out, pi_out, grad),
        "lae_subgrad_step": lambda: ns.lae_subgrad_step(t, h, b, x, 1e-3, x_out),
    }


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def run(nodes, p_edge, repeat, number):
    rows = []
    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    for n in nodes:
        prob = make_problem(n, p_edge)
        per = {name: calls(ns, prob) for name, ns in backends.items()}
        for kernel in per["python"]:
            times = {name: best_time(per[name][kernel], repeat, number) for name in backends}
            rows.append({"kernel": kernel, "nodes": n, "edges": prob["m"], **times})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[50, 200, 1000])
    ap.add_argument("--p-edge", type=float, default=0.3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)
    if "cython" not in kernels.available_backends():
        print("compiled backend not built; timing the NumPy backend only")
    print(f"{'kernel':<18s} {'nodes':>6s} {'edges':>7s} {'python us':>10s} "
          f"{'cython us':>10s} {'speed-up':>9s}")
    for row in run(args.nodes, args.p_edge, args.repeat, args.number):
        py = row["python"] * 1e6
        cy = row.get("cython")
        cy_s = f"{cy * 1e6:10.2f}" if cy is not None else f"{'-':>10s}"
        sp = f"{row['python'] / cy:8.1f}x" if cy is not None else f"{'-':>9s}"
        print(f"{row['kernel']:<18s} {row['nodes']:>6d} {row['edges']:>7d} {py:10.2f} {cy_s} {sp}")


if __name__ == "__main__":
    main()
