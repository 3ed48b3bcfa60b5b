"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--skip-training]

Kernel timings call both implementations directly, so one process covers
both.  The end-to-end numbers train a desk-scale DDQN in two child
processes, one of them with ``NETDEFRL_DISABLE_NUMBA=1``.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from netdefrl import kernels
from netdefrl.topology import GeneratorSpec, generate_topology

TRAIN_SNIPPET = """
import json, time
from netdefrl._accel import USE_NUMBA
from netdefrl.agents.ddqn import DdqnConfig
from netdefrl.agents.training import Schedule, train
from netdefrl.environment import EnvConfig
from netdefrl.harness.experiment import resolve_topology
topo = resolve_topology({"builtin": "desk12"})
cfg = DdqnConfig(hidden=(64, 64), lr=1e-3, epsilon_decay_steps=1000, target_sync=200)
train("ddqn", topo, EnvConfig(t_max=12), cfg, Schedule(200, 1000), seed=0)   # warm-up and compile
start = time.perf_counter()
train("ddqn", topo, EnvConfig(t_max=12), cfg, Schedule(%d, 1000), seed=0)
print(json.dumps({"numba": USE_NUMBA, "seconds": time.perf_counter() - start}))
"""


def kernel_inputs(rng):
    topo = generate_topology(GeneratorSpec(100, 172, 1, 1, 1, 0.34, seed=0))
    link_ok = rng.random(topo.n_links) < 0.9
    node_ok = rng.random(topo.n_nodes) < 0.9
    node_ok[0] = True
    comp = rng.random(topo.n_nodes) < 0.2
    iso = (rng.random(topo.n_nodes) < 0.05) & ~comp
    scores = rng.normal(size=100)
    eligible = rng.random(100) < 0.5
    n = 50_000
    size = 1 << (n - 1).bit_length()
    prio = rng.random(n) + 1e-3
    tree = np.zeros(2 * size)
    kernels.NUMBA_IMPL["sumtree_set"](tree, np.arange(n, dtype=np.int64), prio)
    u = rng.random(32) * prio.sum()
    p = rng.normal(size=25_000)
    g = rng.normal(size=25_000)
    return {
        "bfs_distances": (topo.indptr, topo.nbr, topo.nbr_link, topo.src, topo.dst, link_ok, node_ok, 0),
        "frontier": (topo.src, topo.dst, link_ok, comp, iso),
        "topk": (scores, eligible, 2, False),
        "adam_update": (p, g, np.zeros_like(p), np.zeros_like(p), 1e-3, 0.9, 0.999, 1e-8),
        "proportional sample (32 of 50k)": (tree, prio, u, n),
    }


def bench(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name, args in kernel_inputs(rng).items():
        if name.startswith("proportional"):
            tree, prio, u, n = args
            fast = lambda: kernels.NUMBA_IMPL["sumtree_find"](tree, u, n)
            slow = lambda: kernels.proportional_find_numpy(prio, u, n)
        else:
            fast = lambda f=kernels.NUMBA_IMPL[name], a=args: f(*a)
            slow = lambda f=kernels.NUMPY_IMPL[name], a=args: f(*a)
        fast()                                     # compile outside the timing
        t_fast = min(timeit.repeat(fast, number=repeat, repeat=3)) / repeat
        t_slow = min(timeit.repeat(slow, number=repeat, repeat=3)) / repeat
        rows.append((name, t_fast, t_slow))
    return rows


def training(steps):
    out = {}
    for disabled in ("0", "1"):
        env = dict(os.environ, NETDEFRL_DISABLE_NUMBA=disabled)
        proc = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET % steps], env=env, capture_output=True,
                              text=True, check=True)
        doc = json.loads(proc.stdout.strip().splitlines()[-1])
        out["numba" if doc["numba"] else "numpy"] = doc["seconds"]
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=3000, help="DDQN steps for the end-to-end timing")
    ap.add_argument("--skip-training", action="store_true")
    args = ap.parse_args(argv)
    print(f"{'kernel':34s} {'numba':>12s} {'numpy':>12s} {'speed-up':>9s}")
    for name, fast, slow in bench(args.repeat):
        print(f"{name:34s} {fast * 1e6:10.2f}us {slow * 1e6:10.2f}us {slow / fast:8.1f}x")
    if not args.skip_training:
        t = training(args.steps)
        print(f"\nDDQN desk training, {args.steps} steps:")
        for k, v in t.items():
            print(f"  {k:6s} {v:7.2f}s  ({v / args.steps * 1e3:.2f} ms/step)")


if __name__ == "__main__":
    main()
