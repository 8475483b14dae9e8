"""Hot kernels with a compiled backend and a pure-Python fallback.

The backend is chosen once at import. Set ``PLAYLIST_TITLEGEN_PURE=1`` to force
the fallback (the benchmark and the backend-equivalence tests use both).
"""
import os
from collections import Counter

import numpy as np

try:
    from . import _kernels as _ext
except ImportError:  # extension not built
    _ext = None

if os.environ.get("PLAYLIST_TITLEGEN_PURE"):
    _ext = None

BACKEND = "cython" if _ext is not None else "python"


def py_scatter_add_rows(out, idx, rows):
    """out[idx[i]] += rows[i] for every i, in index order."""
    np.add.at(out, idx, rows)


def py_meteor_alignment(ref, cand):
    """Maximum exact unigram alignment with the fewest chunks.

    Returns ``(matches, chunks)``. A chunk is a run of aligned pairs that are
    adjacent in both sequences. Depth-first search over candidate positions,
    pruned on the running chunk count.
    """
    ref = [int(t) for t in ref]
    cand = [int(t) for t in cand]
    if not ref or not cand:
        return 0, 0
    ref_counts = Counter(ref)
    cand_counts = Counter(cand)
    quota = {t: min(c, ref_counts[t]) for t, c in cand_counts.items() if t in ref_counts}
    m = sum(quota.values())
    if m == 0:
        return 0, 0
    ref_pos = {t: [j for j, r in enumerate(ref) if r == t] for t in quota}
    seen = Counter()
    rem_after = []
    for t in cand:
        seen[t] += 1
        rem_after.append(cand_counts[t] - seen[t])
    used = [False] * len(ref)
    n = len(cand)
    best = m + 1

    def dfs(i, last_r, chunks):
        nonlocal best
        if chunks >= best:
            return
        if i == n:
            best = chunks
            return
        t = cand[i]
        q = quota.get(t, 0)
        if q > 0:
            for j in ref_pos[t]:
                if not used[j]:
                    used[j] = True
                    quota[t] = q - 1
                    dfs(i + 1, j, chunks if (last_r >= 0 and j == last_r + 1) else chunks + 1)
                    used[j] = False
                    quota[t] = q
        if q <= rem_after[i]:
            dfs(i + 1, -2, chunks)

    dfs(0, -2, 0)
    return m, best


if _ext is not None:

    def scatter_add_rows(out, idx, rows):
        idx = np.ascontiguousarray(idx, dtype=np.int_)
        rows = np.ascontiguousarray(rows, dtype=out.dtype)
        if out.flags.c_contiguous and out.dtype in (np.float32, np.float64):
            _ext.scatter_add_rows(out, idx, rows)
        else:
            py_scatter_add_rows(out, idx, rows)

    def meteor_alignment(ref, cand):
        return _ext.meteor_alignment(
            np.ascontiguousarray(ref, dtype=np.int_),
            np.ascontiguousarray(cand, dtype=np.int_),
        )

else:
    scatter_add_rows = py_scatter_add_rows
    meteor_alignment = py_meteor_alignment
