# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled E-step kernel.

One pass over every (target, parent) pair inside every conversation:
accumulates the log left-limit intensities and the per-channel response
mass and response-weighted delays needed by the M-step.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def em_pass(const double[::1] times,
            const signed char[::1] senders,
            const double[::1] log_g,
            const double[::1] f_target,
            const cnp.int64_t[::1] conv_ptr,
            const cnp.int64_t[:, ::1] chmap,
            const double[::1] log_alpha,
            const double[::1] beta,
            double[::1] loglam_out,
            double[:, ::1] mass_out,
            double[:, ::1] delay_out,
            cnp.int64_t[::1] orphan_out):
    cdef Py_ssize_t n_conv = conv_ptr.shape[0] - 1
    cdef Py_ssize_t m, k, j, jend, start, stop, ch
    cdef Py_ssize_t max_len = 0
    cdef double tk, fk, lf, mx, s, lc, p, dt, acc
    cdef int x
    for m in range(n_conv):
        if conv_ptr[m + 1] - conv_ptr[m] > max_len:
            max_len = conv_ptr[m + 1] - conv_ptr[m]
    cdef double[::1] buf = np.empty(max(max_len, 1), dtype=np.float64)

    for m in range(n_conv):
        start = conv_ptr[m]
        stop = conv_ptr[m + 1]
        acc = 0.0
        for k in range(start + 1, stop):
            tk = times[k]
            x = senders[k]
            fk = f_target[k]
            lf = log(fk)
            mx = -INFINITY
            j = start
            while j < k and times[j] < tk:
                ch = chmap[x, senders[j]]
                lc = log_alpha[ch] + lf + log_g[j] - beta[ch] * fk * (tk - times[j])
                buf[j - start] = lc
                if lc > mx:
                    mx = lc
                j += 1
            if j == start:
                # no strictly earlier message: zero left-limit intensity
                orphan_out[m] += 1
                acc = -INFINITY
                continue
            jend = j
            s = 0.0
            for j in range(start, jend):
                p = exp(buf[j - start] - mx)
                buf[j - start] = p
                s += p
            acc += mx + log(s)
            for j in range(start, jend):
                ch = chmap[x, senders[j]]
                p = buf[j - start] / s
                dt = tk - times[j]
                mass_out[m, ch] += p
                delay_out[m, ch] += p * fk * dt
        loglam_out[m] = acc
