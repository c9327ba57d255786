"""Time the compiled kernel extension against the numpy fallback.

Runs every shared kernel on identical seeded inputs for both backends,
reports best-of-N microseconds per call and the speedup, and checks the
outputs agree while it is at it. Exits nonzero if the compiled extension
is unavailable, since that is the comparison being measured.

Usage: python3 benchmarks/bench_kernels.py [--rows 16 256 4096] [--cols 10]
"""

import argparse
import sys
import time

import numpy as np

from odakit._kernels import available_backends, get_backend


def _best_seconds(fn, args, number, repeats):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - started) / number)
    return best


def _inputs(rng, rows, cols):
    logits = rng.normal(scale=2.0, size=(rows, cols))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    targets = rng.dirichlet(np.ones(cols), size=rows)
    log_probs = np.log(probs)
    return {
        "softmax_rows": (logits, 0.01),
        "log_softmax_rows": (logits, 0.01),
        "entropy_rows": (probs,),
        "entropy_grad_rows": (probs,),
        "soft_ce_rows": (targets, log_probs),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, nargs="+", default=[16, 256, 4096])
    parser.add_argument("--cols", type=int, default=10)
    parser.add_argument("--number", type=int, default=50, help="calls per timing sample")
    parser.add_argument("--repeats", type=int, default=5, help="samples; best is kept")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    if "compiled" not in available_backends():
        print("compiled kernel extension is not built; nothing to compare", file=sys.stderr)
        return 1
    compiled = get_backend("compiled")
    pure = get_backend("pure")

    rng = np.random.default_rng(args.seed)
    header = f"{'kernel':<18} {'rows':>6} {'cols':>5} {'pure us':>9} {'compiled us':>12} {'speedup':>8} {'max diff':>9}"
    print(header)
    print("-" * len(header))
    for rows in args.rows:
        batch = _inputs(rng, rows, args.cols)
        for name, call_args in batch.items():
            fn_pure = getattr(pure, name)
            fn_comp = getattr(compiled, name)
            diff = np.abs(
                np.asarray(fn_pure(*call_args)) - np.asarray(fn_comp(*call_args))
            ).max()
            t_pure = _best_seconds(fn_pure, call_args, args.number, args.repeats)
            t_comp = _best_seconds(fn_comp, call_args, args.number, args.repeats)
            print(
                f"{name:<18} {rows:>6} {args.cols:>5} "
                f"{t_pure * 1e6:>9.1f} {t_comp * 1e6:>12.1f} "
                f"{t_pure / t_comp:>7.2f}x {diff:>9.1e}"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
