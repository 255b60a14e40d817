# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` bit for bit."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int32_t
from libc.stdlib cimport calloc, free, malloc

cnp.import_array()

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t WEYL = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline int64_t _cell(uint64_t key, int64_t k, int64_t r, const double[::1] prob,
                          const int64_t[::1] alias, bint use_alias) noexcept nogil:
    cdef uint64_t u = _mix64(key + <uint64_t>(k + 1) * WEYL)
    cdef double x = (<double>(u >> 11) * TWO_M53) * <double>r
    cdef int64_t c = <int64_t>x
    if c > r - 1:
        c = r - 1
    if use_alias:
        if x - <double>c >= prob[c]:
            c = alias[c]
    return c


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] flat = np.ascontiguousarray(z.ravel())
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _mix64(flat[i])
    return out.reshape(z.shape)


def seed_mix(seed):
    return int(_mix64(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)))


def uniforms(seed, uint64_t rep, Py_ssize_t n):
    cdef uint64_t smix = seed_mix(seed)
    cdef uint64_t key = _mix64(smix + (rep + 1) * GOLDEN)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t k
    for k in range(n):
        out[k] = <double>(_mix64(key + <uint64_t>(k + 1) * WEYL) >> 11) * TWO_M53
    return out


def draw_cells(seed, uint64_t rep, Py_ssize_t n, int64_t r, const double[::1] prob, const int64_t[::1] alias):
    cdef uint64_t smix = seed_mix(seed)
    cdef uint64_t key = _mix64(smix + (rep + 1) * GOLDEN)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef bint use_alias = prob.shape[0] > 0
    cdef Py_ssize_t k
    for k in range(n):
        out[k] = _cell(key, k, r, prob, alias, use_alias)
    return out


def build_alias(q_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = np.array(q_in, dtype=np.float64)
    cdef Py_ssize_t r = q.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prob = np.ones(r, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] alias = np.arange(r, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] small = np.empty(r, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] large = np.empty(r, dtype=np.int64)
    cdef Py_ssize_t ns = 0, nl = 0, i
    cdef int64_t s, l
    for i in range(r):
        if q[i] < 1.0:
            small[ns] = i
            ns += 1
    for i in range(r):
        if q[i] >= 1.0:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        l = large[nl]
        prob[s] = q[s]
        alias[s] = l
        q[l] = (q[l] + q[s]) - 1.0
        if q[l] < 1.0:
            small[ns] = l
            ns += 1
        else:
            large[nl] = l
            nl += 1
    return prob, alias


def compensated_sum(x_in):
    """Neumaier-compensated sum."""
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double s = 0.0, c = 0.0, t, v
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            v = x[i]
            t = s + v
            if (s if s >= 0 else -s) >= (v if v >= 0 else -v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
    return s + c


def simulate_block(seed, uint64_t rep_start, Py_ssize_t nrep, Py_ssize_t n, int64_t r,
                   const double[::1] prob, const int64_t[::1] alias,
                   const double[::1] wcell, const double[::1] scell,
                   const double[::1] gk, int64_t level):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wsum_a = np.zeros(nrep, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ssum_a = np.zeros(nrep, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] occ_a = np.zeros(nrep, dtype=np.int64)
    if nrep == 0 or n == 0:
        return wsum_a, ssum_a, occ_a
    cdef double[::1] wsum = wsum_a
    cdef double[::1] ssum = ssum_a
    cdef int64_t[::1] occ = occ_a
    cdef uint64_t smix = seed_mix(seed)
    cdef bint use_alias = prob.shape[0] > 0
    cdef bint weighted = wcell.shape[0] > 0
    cdef int32_t* counts = <int32_t*> calloc(r, sizeof(int32_t))
    cdef int64_t* cells = <int64_t*> malloc(n * sizeof(int64_t))
    if counts == NULL or cells == NULL:
        free(counts)
        free(cells)
        raise MemoryError()
    cdef Py_ssize_t i, k
    cdef uint64_t key
    cdef int64_t c
    cdef int32_t cnt
    cdef double wacc, sacc
    cdef int64_t oacc
    with nogil:
        for i in range(nrep):
            key = _mix64(smix + (rep_start + <uint64_t>i + 1) * GOLDEN)
            for k in range(n):
                c = _cell(key, k, r, prob, alias, use_alias)
                cells[k] = c
                counts[c] += 1
            wacc = 0.0
            sacc = 0.0
            oacc = 0
            for k in range(n):
                c = cells[k]
                cnt = counts[c]
                if cnt == 0:
                    continue
                counts[c] = 0
                if weighted:
                    wacc = wacc + wcell[c] * gk[cnt]
                    sacc = sacc + <double>cnt * scell[c]
                else:
                    wacc = wacc + gk[cnt]
                if cnt == level:
                    oacc += 1
            wsum[i] = wacc
            ssum[i] = sacc
            occ[i] = oacc
    free(counts)
    free(cells)
    return wsum_a, ssum_a, occ_a
