# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled similarity kernels (hot inner loops of the cleaning pipeline).

Must stay semantically identical to ``_core_py``: float32 inputs, float64
accumulation, same DBSCAN traversal order. ``_core_py`` is the reference
for behaviour; this module exists for speed.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline double _dot_ptr(const float* a, const float* b, Py_ssize_t d) noexcept nogil:
    # four independent accumulators so the compiler can vectorize the
    # float32 -> float64 widening reduction
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t k = 0
    while k + 4 <= d:
        s0 += (<double> a[k]) * (<double> b[k])
        s1 += (<double> a[k + 1]) * (<double> b[k + 1])
        s2 += (<double> a[k + 2]) * (<double> b[k + 2])
        s3 += (<double> a[k + 3]) * (<double> b[k + 3])
        k += 4
    while k < d:
        s0 += (<double> a[k]) * (<double> b[k])
        k += 1
    return (s0 + s1) + (s2 + s3)


cdef inline double _dot(const float[:, ::1] x, Py_ssize_t i, Py_ssize_t j, Py_ssize_t d) noexcept nogil:
    return _dot_ptr(&x[i, 0], &x[j, 0], d)


def cosine_gram(const float[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] g = out
    cdef Py_ssize_t i, j
    cdef double s
    with nogil:
        for i in range(n):
            for j in range(i, n):
                s = _dot(x, i, j, d)
                g[i, j] = s
                g[j, i] = s
    return out


cdef Py_ssize_t _region_query(const float[:, ::1] x, Py_ssize_t p, double sim_thr,
                              long long[::1] buf) noexcept nogil:
    """Indices with similarity >= sim_thr against row p (ascending, incl. p)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t j, m = 0
    for j in range(n):
        if _dot(x, p, j, d) >= sim_thr:
            buf[m] = j
            m += 1
    return m


def dbscan_labels(const float[:, ::1] x, double eps, Py_ssize_t min_pts):
    cdef Py_ssize_t n = x.shape[0]
    cdef double sim_thr = 1.0 - eps
    labels_arr = np.full(n, -2, dtype=np.int64)
    core_arr = np.zeros(n, dtype=np.uint8)
    cdef long long[::1] labels = labels_arr
    cdef unsigned char[::1] core = core_arr

    neigh_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] neigh = neigh_arr
    queue_arr = np.empty(max(4 * n, 16), dtype=np.int64)
    cdef long long[::1] queue = queue_arr

    cdef Py_ssize_t p, q, k, m, i, qlen, cid = 0
    for p in range(n):
        if labels[p] != -2:
            continue
        with nogil:
            m = _region_query(x, p, sim_thr, neigh)
        if m < min_pts:
            labels[p] = -1
            continue
        labels[p] = cid
        core[p] = 1
        if m > queue.shape[0]:
            queue_arr = np.empty(2 * m, dtype=np.int64)
            queue = queue_arr
        for i in range(m):
            queue[i] = neigh[i]
        qlen = m
        k = 0
        while k < qlen:
            q = queue[k]
            k += 1
            if labels[q] == -1:
                labels[q] = cid
            if labels[q] != -2:
                continue
            labels[q] = cid
            with nogil:
                m = _region_query(x, q, sim_thr, neigh)
            if m >= min_pts:
                core[q] = 1
                if qlen + m > queue.shape[0]:
                    queue_arr = np.resize(queue_arr, max(2 * queue_arr.shape[0], qlen + m))
                    queue = queue_arr
                for i in range(m):
                    queue[qlen + i] = neigh[i]
                qlen += m
        cid += 1
    return labels_arr, core_arr


def pairs_above(const float[:, ::1] x, double threshold, bint strict):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t cap = max(4 * n, 16)
    ii_arr = np.empty(cap, dtype=np.int64)
    jj_arr = np.empty(cap, dtype=np.int64)
    ss_arr = np.empty(cap, dtype=np.float64)
    cdef long long[::1] ii = ii_arr
    cdef long long[::1] jj = jj_arr
    cdef double[::1] ss = ss_arr

    cdef Py_ssize_t i, j, m = 0
    cdef double s
    for i in range(n):
        for j in range(i + 1, n):
            s = _dot(x, i, j, d)
            if (s > threshold) if strict else (s >= threshold):
                if m == cap:
                    cap *= 2
                    ii_arr = np.resize(ii_arr, cap)
                    jj_arr = np.resize(jj_arr, cap)
                    ss_arr = np.resize(ss_arr, cap)
                    ii = ii_arr
                    jj = jj_arr
                    ss = ss_arr
                ii[m] = i
                jj[m] = j
                ss[m] = s
                m += 1
    return ii_arr[:m].copy(), jj_arr[:m].copy(), ss_arr[:m].copy()


def max_cross_sim(const float[:, ::1] a, const float[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    out_arr = np.empty(na, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double s, best
    with nogil:
        for i in range(na):
            best = -2.0
            for j in range(nb):
                s = 0.0
                for k in range(d):
                    s += (<double> a[i, k]) * (<double> b[j, k])
                if s > best:
                    best = s
            out[i] = best
    return out_arr
