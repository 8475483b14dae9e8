"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported side by side from ``playlist_titlegen.kernels``; the
``py_*`` functions are the fallbacks used when the extension is absent.
"""
import argparse
import timeit

import numpy as np

from playlist_titlegen import kernels as K


def scatter_case(rng, n_rows=20000, vocab=5000, d=128):
    idx = rng.integers(0, vocab, size=n_rows)
    rows = rng.normal(size=(n_rows, d)).astype(np.float32)
    return idx, rows, (vocab, d)


def meteor_case(rng, n_pairs=2000):
    pairs = []
    for _ in range(n_pairs):
        ref = rng.integers(0, 6, size=int(rng.integers(3, 10)))
        cand = rng.integers(0, 6, size=int(rng.integers(3, 10)))
        pairs.append((ref.tolist(), cand.tolist()))
    return pairs


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if K._ext is None:
        raise SystemExit("compiled kernels are not built (or PLAYLIST_TITLEGEN_PURE is set); nothing to compare")
    rng = np.random.default_rng(args.seed)

    idx, rows, shape = scatter_case(rng)
    out_c = np.zeros(shape, np.float32)
    out_p = np.zeros(shape, np.float32)
    K.scatter_add_rows(out_c, idx, rows)
    K.py_scatter_add_rows(out_p, idx, rows)
    assert np.array_equal(out_c, out_p)
    t_c = best_of(lambda: K.scatter_add_rows(np.zeros(shape, np.float32), idx, rows), args.repeat)
    t_p = best_of(lambda: K.py_scatter_add_rows(np.zeros(shape, np.float32), idx, rows), args.repeat)
    print(f"scatter_add_rows  {len(idx)} rows x {shape[1]}: cython {t_c * 1e3:8.2f} ms  "
          f"python {t_p * 1e3:8.2f} ms  speedup {t_p / t_c:5.1f}x")

    pairs = meteor_case(rng)
    assert [K.meteor_alignment(r, c) for r, c in pairs] == [K.py_meteor_alignment(r, c) for r, c in pairs]
    t_c = best_of(lambda: [K.meteor_alignment(r, c) for r, c in pairs], args.repeat)
    t_p = best_of(lambda: [K.py_meteor_alignment(r, c) for r, c in pairs], args.repeat)
    print(f"meteor_alignment  {len(pairs)} pairs:          cython {t_c * 1e3:8.2f} ms  "
          f"python {t_p * 1e3:8.2f} ms  speedup {t_p / t_c:5.1f}x")


if __name__ == "__main__":
    main()
