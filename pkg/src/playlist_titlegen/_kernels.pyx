# cython: language_level=3
"""Compiled versions of the two Python-level hot loops.

Both functions mirror the pure-Python fallbacks in ``kernels.py`` operation for
operation, so results are bitwise identical between backends.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef fused real_t:
    float
    double


def scatter_add_rows(real_t[:, ::1] out, const long[::1] idx, const real_t[:, ::1] rows):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    cdef Py_ssize_t i, k
    cdef long r
    if rows.shape[0] != n or out.shape[1] != d:
        raise ValueError("shape mismatch in scatter_add_rows")
    for i in range(n):
        r = idx[i]
        if r < 0 or r >= out.shape[0]:
            raise IndexError("row index out of range")
        for k in range(d):
            out[r, k] += rows[i, k]


cdef struct Search:
    int n_cand
    int n_ref
    const long* cand
    const long* ref
    int* used
    int* need          # indexed by cand position: remaining quota of that position's type
    int* type_slot     # cand position -> slot into quota array
    int* quota
    int* rem_after     # occurrences of cand[i]'s type strictly after i
    int best


cdef void _dfs(Search* s, int i, int last_r, int chunks) noexcept nogil:
    cdef int j, slot, new_chunks
    cdef long t
    if chunks >= s.best:
        return
    if i == s.n_cand:
        s.best = chunks
        return
    t = s.cand[i]
    slot = s.type_slot[i]
    if slot >= 0 and s.quota[slot] > 0:
        for j in range(s.n_ref):
            if s.ref[j] == t and not s.used[j]:
                s.used[j] = 1
                s.quota[slot] -= 1
                if last_r >= 0 and j == last_r + 1:
                    new_chunks = chunks
                else:
                    new_chunks = chunks + 1
                _dfs(s, i + 1, j, new_chunks)
                s.used[j] = 0
                s.quota[slot] += 1
    if slot < 0 or s.quota[slot] <= s.rem_after[i]:
        _dfs(s, i + 1, -2, chunks)


def meteor_alignment(const long[::1] ref, const long[::1] cand):
    """Return (matches, min_chunks) over maximum exact unigram alignments."""
    cdef Py_ssize_t n_ref = ref.shape[0], n_cand = cand.shape[0]
    cdef Py_ssize_t i, j
    cdef int m = 0
    cdef dict slots = {}
    cdef list quotas = []
    cdef Search s
    if n_ref == 0 or n_cand == 0:
        return 0, 0
    type_slot = np.full(n_cand, -1, dtype=np.intc)
    rem_after = np.zeros(n_cand, dtype=np.intc)
    ref_counts = {}
    for j in range(n_ref):
        ref_counts[ref[j]] = ref_counts.get(ref[j], 0) + 1
    cand_counts = {}
    for i in range(n_cand):
        cand_counts[cand[i]] = cand_counts.get(cand[i], 0) + 1
    seen = {}
    for i in range(n_cand):
        t = cand[i]
        seen[t] = seen.get(t, 0) + 1
        rem_after[i] = cand_counts[t] - seen[t]
        if t in ref_counts:
            if t not in slots:
                slots[t] = len(quotas)
                quotas.append(min(ref_counts[t], cand_counts[t]))
            type_slot[i] = slots[t]
    for q in quotas:
        m += q
    if m == 0:
        return 0, 0
    quota = np.asarray(quotas, dtype=np.intc)
    used = np.zeros(n_ref, dtype=np.intc)
    cdef int[::1] ts_v = type_slot
    cdef int[::1] ra_v = rem_after
    cdef int[::1] q_v = quota
    cdef int[::1] u_v = used
    s.n_cand = <int>n_cand
    s.n_ref = <int>n_ref
    s.cand = &cand[0]
    s.ref = &ref[0]
    s.used = &u_v[0]
    s.type_slot = &ts_v[0]
    s.quota = &q_v[0]
    s.rem_after = &ra_v[0]
    s.best = m + 1
    with nogil:
        _dfs(&s, 0, -2, 0)
    return m, s.best
