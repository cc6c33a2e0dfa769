# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mini-slot contention kernel.

Kept in lockstep with the numpy fallback in ``_kernel_py``: identical
stream consumption (one contention draw per station per mini-slot, one
gain draw per win for the memoryless channel kinds) and identical
comparison rules, so both backends walk the same event sequence for a
given seed.  Transmit/give-up decisions compare precomputed thresholds
(in uniform space for the memoryless kinds), never values produced by
libm, so they cannot drift between backends.
"""

from libc.math cimport cos, log1p, log2, sin

ctypedef unsigned long long u64

cdef u64 GAMMA = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0

cdef int KIND_IID = 0
cdef int KIND_JAKES = 1
cdef int KIND_DISCRETE = 2


cdef inline u64 mix64(u64 z) noexcept nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z *= 0x94D049BB133111EBULL
    z ^= z >> 31
    return z


cdef inline double u01(u64 key, u64 n) noexcept nogil:
    return <double>(mix64(key + GAMMA * n) >> 11) * INV53


def run_interval(long long t_total, long long t_tx, long long start_time,
                 double[::1] p, int[::1] kind, double[::1] w, double[::1] rho,
                 double[::1] u_giveup, double[::1] gain_giveup, double[::1] thr_rate,
                 double[:, ::1] table_rates, double[:, ::1] u_edges, long long[::1] table_len,
                 double[:, ::1] jakes_omega, double[:, ::1] jakes_phase,
                 u64[::1] contend_key, u64[::1] contend_ctr,
                 u64[::1] gain_key, u64[::1] gain_ctr,
                 long long[::1] n_succ, long long[::1] hold_sum,
                 double[::1] bits, long long[::1] tx_count):
    """Run one controller interval; returns (elapsed, idle, collisions)."""
    cdef long long time = 0, idle = 0, coll = 0, hold
    cdef long long hold_tx = t_tx + 1
    cdef int n = p.shape[0]
    cdef int n_osc = jakes_omega.shape[1]
    cdef int i, m, cnt, winner
    cdef long long k
    cdef double u, ug, g, rate, re, im, a, t_abs
    cdef bint transmit

    with nogil:
        while time < t_total:
            cnt = 0
            winner = -1
            for i in range(n):
                contend_ctr[i] += 1
                u = u01(contend_key[i], contend_ctr[i])
                if u < p[i]:
                    cnt += 1
                    winner = i
            if cnt != 1:
                time += 1
                if cnt == 0:
                    idle += 1
                else:
                    coll += 1
                continue

            i = winner
            n_succ[i] += 1
            rate = 0.0
            if kind[i] == KIND_JAKES:
                t_abs = <double>(start_time + time)
                re = 0.0
                im = 0.0
                for m in range(n_osc):
                    a = jakes_omega[i, m] * t_abs + jakes_phase[i, m]
                    re += cos(a)
                    im += sin(a)
                g = (re * re + im * im) / n_osc
                transmit = g >= gain_giveup[i]
                if transmit:
                    rate = w[i] * log2(1.0 + rho[i] * g)
            else:
                gain_ctr[i] += 1
                ug = u01(gain_key[i], gain_ctr[i])
                if kind[i] == KIND_DISCRETE:
                    for k in range(table_len[i] - 1, -1, -1):
                        if ug > u_edges[i, k]:
                            rate = table_rates[i, k]
                            break
                    transmit = rate >= thr_rate[i]
                else:
                    transmit = ug >= u_giveup[i]
                    if transmit:
                        g = -log1p(-ug)
                        rate = w[i] * log2(1.0 + rho[i] * g)

            if transmit:
                hold = hold_tx
                bits[i] += rate * t_tx
                tx_count[i] += 1
            else:
                hold = 1
            hold_sum[i] += hold
            time += hold

    return time, idle, coll
