"""Time the batch codec kernels of every importable backend.

    python3 benchmarks/bench_kernels.py [-n WORDS] [--repeat R] [--seed S]

Prints the best-of-R time per kernel and backend, and the speed-up of the
compiled backend over the pure-Python one when both are available.
"""
import argparse
import random
import timeit

import numpy as np

from dfibridge._kernels import available_backends


def make_words(n: int, seed: int) -> np.ndarray:
    rng = random.Random(seed)
    # valid words only, so first_invalid scans the whole batch
    return np.array([rng.getrandbits(40) & ~(1 << 15) for _ in range(n)], dtype=np.uint64)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=200_000, help="words per batch (default 200000)")
    ap.add_argument("--repeat", type=int, default=3, help="take the best of R runs (default 3)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    words = make_words(args.n, args.seed)
    backends = available_backends()
    fields, _ = backends["python"].decode_words(words)
    cols = [fields[:, i].copy() for i in range(7)]

    cases = {
        "first_invalid": lambda k: k.first_invalid(words),
        "decode_words": lambda k: k.decode_words(words),
        "encode_fields": lambda k: k.encode_fields(*cols),
    }
    times: dict[tuple[str, str], float] = {}
    for name, kern in sorted(backends.items()):
        for case, fn in cases.items():
            times[case, name] = min(timeit.repeat(lambda: fn(kern), number=1, repeat=args.repeat))

    print(f"{args.n} words, best of {args.repeat}")
    print(f"{'kernel':<15}" + "".join(f"{b:>12}" for b in sorted(backends)) + "     speed-up")
    for case in cases:
        row = f"{case:<15}" + "".join(f"{times[case, b] * 1e3:>10.1f}ms" for b in sorted(backends))
        if "cython" in backends:
            row += f"  {times[case, 'python'] / times[case, 'cython']:>10.0f}x"
        print(row)


if __name__ == "__main__":
    main()
