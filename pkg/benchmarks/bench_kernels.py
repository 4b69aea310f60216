"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints one row per kernel with the best-of-N time of each backend and the
speed-up. Outputs are checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from patchgraph.kernels import BACKENDS


def cases(scale: float, rng: np.random.Generator) -> dict:
    n_edges = int(200_000 * scale)
    n_nodes = int(20_000 * scale)
    n_slides = int(20_000 * scale)
    index = np.sort(rng.integers(0, n_nodes, n_edges)).astype(np.int64)
    values = rng.normal(size=(n_edges, 8))
    logits = rng.normal(size=n_edges)
    grad = rng.normal(size=n_edges)
    scores = np.round(rng.random(n_slides), 3)
    positive = rng.random(n_slides) < 0.3
    y_true = rng.integers(0, 5, n_slides).astype(np.int64)
    y_pred = rng.integers(0, 5, n_slides).astype(np.int64)
    state = np.array([1, 2, 3, 4], dtype=np.uint64)
    n_draws = int(1_000_000 * scale)

    def softmax_grad(k):
        alpha = k.segment_softmax(logits, index, n_nodes)
        return lambda: k.segment_softmax_grad(alpha, grad, index, n_nodes)

    return {
        "xoshiro_fill": lambda k: (lambda: k.xoshiro_fill(state.copy(), n_draws)),
        "segment_sum": lambda k: (lambda: k.segment_sum(values, index, n_nodes)),
        "segment_softmax": lambda k: (lambda: k.segment_softmax(logits, index, n_nodes)),
        "segment_softmax_grad": softmax_grad,
        "confusion_matrix": lambda k: (lambda: k.confusion_matrix(y_true, y_pred, 5)),
        "auroc_binary": lambda k: (lambda: k.auroc_binary(scores, positive)),
    }


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), rtol=1e-12, atol=1e-12)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--scale", type=float, default=1.0, help="multiplies every problem size")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if "cython" not in BACKENDS:
        print("compiled kernels are not built; only the numpy fallback is available")
    names = [b for b in ("python", "cython") if b in BACKENDS]
    table = cases(args.scale, np.random.default_rng(args.seed))
    print(f"{'kernel':<22}" + "".join(f"{n + ' (ms)':>14}" for n in names) + f"{'speed-up':>10}")
    for kernel, make in table.items():
        fns = {n: make(BACKENDS[n]) for n in names}
        outs = {n: fn() for n, fn in fns.items()}
        if len(names) == 2 and not _agree(outs["python"], outs["cython"]):
            raise SystemExit(f"{kernel}: backends disagree")
        ms = {n: 1e3 * min(timeit.repeat(fn, number=1, repeat=args.repeat)) for n, fn in fns.items()}
        row = f"{kernel:<22}" + "".join(f"{ms[n]:>14.2f}" for n in names)
        if len(names) == 2:
            row += f"{ms['python'] / ms['cython']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
