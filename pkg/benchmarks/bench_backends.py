"""Time the numba kernels against the interpreted fallback.

Each backend runs in its own subprocess (the backend is fixed at import time
by ``GWTREE_NO_NUMBA``).  The numba timings exclude compilation: every
workload is run once to warm up before timing.

    python3 benchmarks/bench_backends.py [--scale 1.0] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time


def workloads(scale):
    from gwtree import mcmc, oracle, phase, recursion
    from gwtree.model import two_class_params

    P = (0.4, 0.3, 0.3)
    b_c = phase.beta_c(0.4, 0.3).b_c
    prm = two_class_params(P, 2.0, 2, 2)
    n_rec = int(100_000 * scale)
    n_chain = int(100_000 * scale)
    return {
        f"recursion leaves, {n_rec} steps": lambda: recursion.run(P, b_c, n_rec, ("leaves",), every=n_rec),
        f"log recursion all blocks, {n_rec // 100} steps":
            lambda: recursion.run([0.0, 0.9, 0.1], 1.1, n_rec // 100, recursion.BLOCKS, logspace=True),
        "stream partition, depth 3": lambda: oracle.stream_partition_function(
            two_class_params(P, 1.7, 2, 3), 0.9, 1.1),
        f"local chain, {n_chain} steps": lambda: mcmc.sample_chain(
            mcmc.ChainConfig(prm, steps=n_chain, seed=1, thin=100)),
        f"global chain, {n_chain} steps": lambda: mcmc.sample_chain(
            mcmc.ChainConfig(prm, kind="global", steps=n_chain, seed=1, thin=100)),
    }


def child(scale, repeat):
    from gwtree import BACKEND
    out = {"backend": BACKEND, "times": {}}
    for name, fn in workloads(scale).items():
        fn()
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply workload sizes")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.scale, args.repeat)
        return
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, GWTREE_NO_NUMBA=flag)
        r = subprocess.run([sys.executable, __file__, "--child", "--scale", str(args.scale),
                            "--repeat", str(args.repeat)], env=env, capture_output=True,
                           text=True, check=True)
        res = json.loads(r.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res["times"]
    names = list(next(iter(results.values())))
    width = max(len(n) for n in names)
    print(f"{'workload':<{width}}  {'numba [s]':>10}  {'python [s]':>10}  {'speedup':>8}")
    for n in names:
        a = results.get("numba", {}).get(n, float("nan"))
        b = results.get("python", {}).get(n, float("nan"))
        print(f"{n:<{width}}  {a:>10.4f}  {b:>10.4f}  {b / a:>8.1f}")


if __name__ == "__main__":
    main()
