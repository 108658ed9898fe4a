# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels; bit-identical to ``_fallback``.

All loops run without the GIL so batches can be split across threads.
"""

import numpy as np

from libc.math cimport NAN, floor, log10
from libc.stdint cimport int32_t, int64_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t MUL1 = 0xBF58476D1CE4E5B9
cdef uint64_t MUL2 = 0x94D049BB133111EB
cdef double INV53 = 1.0 / 9007199254740992.0
cdef double RHO_MAX = 1.0 - 1.0 / 9007199254740992.0

cdef enum:
    TICKET = 1
    GROUP = 2
    PICK = 3
    REP = 4
    TAU = 5
    RHO = 6
    COIN = 7
    BASE = 8


cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * MUL1
    z = (z ^ (z >> 27)) * MUL2
    return z ^ (z >> 31)


cdef inline uint64_t draw(uint64_t prefix, uint64_t it, uint64_t i, uint64_t j, uint64_t purpose) noexcept nogil:
    return mix(mix(prefix ^ ((it << 48) | (i << 32) | (j << 8) | purpose)))


cdef inline double unit(uint64_t h) noexcept nogil:
    return <double>(h >> 11) * INV53


cdef inline double open_unit(uint64_t h) noexcept nogil:
    return <double>((h >> 12) * 2 + 1) * INV53


cdef inline int64_t index(uint64_t h, uint64_t count) noexcept nogil:
    return <int64_t>(((h >> 11) * count) >> 53)


cdef uint64_t trial_prefix(uint64_t seed, uint64_t trial) noexcept nogil:
    return mix(mix(seed) ^ trial)


cdef int resolve_one(
    const double[:, ::1] x,
    const int64_t* lab,
    const double[:, :, ::1] cdf,
    uint64_t prefix,
    int max_iters,
    bint independent,
    int32_t* assign,
    int32_t* iters,
    int32_t* tickets1,
    char* rec,
    char* seen,
    int64_t* real,
) noexcept nogil:
    """Returns the number of jobs still unassigned after ``max_iters``."""
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], K = cdf.shape[2]
    cdef Py_ssize_t i, j, jj, k
    cdef int it
    cdef int remaining = <int>n
    cdef int64_t g, total, r, acc
    cdef double u, cum
    for j in range(n):
        assign[j] = -1
        iters[j] = 0
        tickets1[j] = 0
    for it in range(1, max_iters + 1):
        if remaining == 0:
            break
        memset(rec, 0, m * n)
        for i in range(m):
            if independent:
                for j in range(n):
                    if assign[j] < 0 and x[i, j] > 0:
                        if unit(draw(prefix, it, i, j, GROUP)) < x[i, j]:
                            rec[i * n + j] = 1
                continue
            memset(seen, 0, n)
            for j in range(n):
                if assign[j] >= 0:
                    continue
                g = lab[i * n + j]
                if seen[g]:
                    continue
                seen[g] = 1
                u = unit(draw(prefix, it, i, g, GROUP))
                cum = 0.0
                for jj in range(j, n):
                    if assign[jj] >= 0 or lab[i * n + jj] != g:
                        continue
                    cum = cum + x[i, jj]
                    if u < cum:
                        if x[i, jj] > 0:
                            rec[i * n + jj] = 1
                        break
        for j in range(n):
            if assign[j] >= 0:
                continue
            total = 0
            for i in range(m):
                real[i] = 0
                if rec[i * n + j]:
                    u = unit(draw(prefix, it, i, j, TICKET))
                    k = 0
                    while k < K - 1 and u >= cdf[i, j, k]:
                        k += 1
                    real[i] = k
                    total += k
            if it == 1:
                tickets1[j] = <int32_t>total
            if total > 0:
                r = index(draw(prefix, it, 0, j, PICK), <uint64_t>total)
                acc = 0
                for i in range(m):
                    acc += real[i]
                    if acc > r:
                        assign[j] = <int32_t>i
                        iters[j] = it
                        remaining -= 1
                        break
    return remaining


def resolve_batch(
    const double[:, ::1] x,
    const int64_t[:, ::1] labels,
    const double[:, :, ::1] cdf,
    uint64_t seed,
    int64_t trial_start,
    int64_t trials,
    int max_iters,
    bint independent,
):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    assign_np = np.empty((trials, n), dtype=np.int32)
    iters_np = np.empty((trials, n), dtype=np.int32)
    tickets_np = np.empty((trials, n), dtype=np.int32)
    cdef int32_t[:, ::1] assign = assign_np
    cdef int32_t[:, ::1] iters = iters_np
    cdef int32_t[:, ::1] tickets = tickets_np
    cdef char* rec = <char*>malloc(m * n + n + 1)
    cdef char* seen = rec + m * n
    cdef int64_t* real = <int64_t*>malloc(m * sizeof(int64_t) + 8)
    cdef int64_t t
    if rec == NULL or real == NULL:
        free(rec)
        free(real)
        raise MemoryError()
    try:
        with nogil:
            for t in range(trials):
                resolve_one(
                    x, &labels[0, 0], cdf, trial_prefix(seed, <uint64_t>(trial_start + t)),
                    max_iters, independent, &assign[t, 0], &iters[t, 0], &tickets[t, 0],
                    rec, seen, real,
                )
    finally:
        free(rec)
        free(real)
    return assign_np, iters_np, tickets_np


cdef inline int64_t grid_index(double theta, double rho, const double[::1] pow10, int64_t kmin) noexcept nogil:
    cdef int64_t top = pow10.shape[0] - 2
    cdef int64_t k = <int64_t>floor(log10(theta) - log10(rho))
    cdef int guard
    if k < kmin:
        k = kmin
    if k > kmin + top:
        k = kmin + top
    for guard in range(64):
        if rho * pow10[k - kmin] >= theta:
            k -= 1
        elif rho * pow10[k - kmin + 1] < theta:
            k += 1
        else:
            break
    return k


cdef double objective(
    Py_ssize_t n, const int32_t* assign, const double* theta_a, const double* p_a, const double[::1] w
) noexcept nogil:
    cdef Py_ssize_t j, jj
    cdef double c, obj = 0.0
    for j in range(n):
        c = p_a[j]
        for jj in range(n):
            if jj == j or assign[jj] != assign[j]:
                continue
            if theta_a[jj] < theta_a[j] or (jj < j and theta_a[jj] == theta_a[j]):
                c = c + p_a[jj]
        obj = obj + w[j] * c
    return obj


def sched_batch(tb, uint64_t seed, int64_t trial_start, int64_t trials, bint baseline, int max_iters):
    cdef const double[:, ::1] x = tb.x
    cdef const double[:, ::1] p = tb.p
    cdef const double[::1] w = tb.w
    cdef const double[:, :, ::1] cdf = tb.cdf
    cdef const double[:, :, ::1] rep_cdf = tb.rep_cdf
    cdef const double[:, :, ::1] rep_s = tb.rep_s
    cdef const int64_t[:, ::1] rep_cnt = tb.rep_cnt
    cdef const double[:, ::1] base_cdf = tb.base_cdf
    cdef const int64_t[:, ::1] base_i = tb.base_i
    cdef const double[:, ::1] base_s = tb.base_s
    cdef const int64_t[::1] base_cnt = tb.base_cnt
    cdef const double[::1] pow10 = tb.pow10
    cdef int64_t kmin = tb.kmin
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    obj_np = np.empty(trials, dtype=np.float64)
    it_np = np.zeros(trials, dtype=np.int32)
    cdef double[::1] obj = obj_np
    cdef int32_t[::1] maxit = it_np

    cdef size_t mn = m * n
    cdef double* theta = <double*>malloc(mn * sizeof(double) + 8)
    cdef int64_t* kk = <int64_t*>malloc(mn * sizeof(int64_t) + 8)
    cdef int64_t* lab = <int64_t*>malloc(mn * sizeof(int64_t) + 8)
    cdef char* assoc = <char*>malloc(mn + 1)
    cdef char* rec = <char*>malloc(mn + n + 1)
    cdef int64_t* real = <int64_t*>malloc(m * sizeof(int64_t) + 8)
    cdef int32_t* assign = <int32_t*>malloc(n * sizeof(int32_t) + 8)
    cdef int32_t* iters = <int32_t*>malloc(n * sizeof(int32_t) + 8)
    cdef int32_t* tick = <int32_t*>malloc(n * sizeof(int32_t) + 8)
    cdef double* theta_a = <double*>malloc(n * sizeof(double) + 8)
    cdef double* p_a = <double*>malloc(n * sizeof(double) + 8)

    cdef int64_t t, r, q, lead, mi
    cdef Py_ssize_t i, j, jj
    cdef uint64_t prefix
    cdef double rho, u, s, tau, shift, total, xv, pv
    cdef int left, best
    try:
        with nogil:
            for t in range(trials):
                prefix = trial_prefix(seed, <uint64_t>(trial_start + t))
                if baseline:
                    for j in range(n):
                        u = unit(draw(prefix, 0, 0, j, BASE))
                        q = 0
                        while q < base_cnt[j] - 1 and u >= base_cdf[j, q]:
                            q += 1
                        mi = base_i[j, q]
                        pv = p[mi, j]
                        tau = pv * open_unit(draw(prefix, 0, mi, j, TAU))
                        assign[j] = <int32_t>mi
                        theta_a[j] = base_s[j, q] + tau
                        p_a[j] = pv
                    obj[t] = objective(n, assign, theta_a, p_a, w)
                    continue

                rho = 0.1 + 0.9 * open_unit(draw(prefix, 0, 0, 0, RHO))
                if rho > RHO_MAX:
                    rho = RHO_MAX
                for i in range(m):
                    for j in range(n):
                        assoc[i * n + j] = 0
                        theta[i * n + j] = 0.0
                        lab[i * n + j] = j
                        xv = x[i, j]
                        if xv <= 0:
                            continue
                        pv = p[i, j]
                        u = unit(draw(prefix, 0, i, j, REP))
                        r = 0
                        while r < rep_cnt[i, j] - 1 and u >= rep_cdf[i, j, r]:
                            r += 1
                        s = rep_s[i, j, r]
                        tau = pv * open_unit(draw(prefix, 0, i, j, TAU))
                        if xv >= 0.09:
                            shift = 0.34 * (s + xv * pv)
                        else:
                            shift = 0.34 * s
                        theta[i * n + j] = (s + shift) + tau
                        if 10.0 * s < pv and xv < 0.09:
                            if unit(draw(prefix, 0, i, j, COIN)) < 0.5:
                                assoc[i * n + j] = 1
                                kk[i * n + j] = grid_index(theta[i * n + j], rho, pow10, kmin)
                for i in range(m):
                    for j in range(n):
                        if not assoc[i * n + j]:
                            continue
                        total = 0.0
                        lead = n
                        for jj in range(n):
                            if assoc[i * n + jj] and kk[i * n + jj] == kk[i * n + j]:
                                total = total + x[i, jj]
                                if lead == n:
                                    lead = jj
                        if total <= 1.0:
                            lab[i * n + j] = lead
                left = resolve_one(x, lab, cdf, prefix, max_iters, False, assign, iters, tick, rec, rec + mn, real)
                if left:
                    obj[t] = NAN
                    maxit[t] = -1
                    continue
                best = 0
                for j in range(n):
                    theta_a[j] = theta[assign[j] * n + j]
                    p_a[j] = p[assign[j], j]
                    if iters[j] > best:
                        best = iters[j]
                maxit[t] = best
                obj[t] = objective(n, assign, theta_a, p_a, w)
    finally:
        free(theta)
        free(kk)
        free(lab)
        free(assoc)
        free(rec)
        free(real)
        free(assign)
        free(iters)
        free(tick)
        free(theta_a)
        free(p_a)
    return obj_np, it_np
