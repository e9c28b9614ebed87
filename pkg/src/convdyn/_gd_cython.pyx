# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled gradient-descent kernel.

Mirrors ``_gd_python.gd_loop`` operation for operation; see that module's
docstring for the normative iteration sequence, recording rule, and stop
reasons. Scalar reductions run as sequential C loops, so results can differ
from the NumPy fallback in the last ulp.
"""

from libc.math cimport atan2, cos, fabs, sin, sqrt

import numpy as np

DEF TWO_PI = 6.283185307179586
DEF PI = 3.141592653589793


def gd_loop(
    object v0,
    object a0,
    object w_star,
    object a_star,
    object a_spur,
    double eta,
    long max_iters,
    double grad_tol_abs,
    long stride,
    double cert_phi_tol,
    double cert_dist_tol,
    double[:, ::1] out,
):
    """Run gradient descent; returns (v, a, iters_run, stop_reason, n_records)."""
    v_arr = np.array(v0, dtype=np.float64)
    a_arr = np.array(a0, dtype=np.float64)
    w_arr = np.ascontiguousarray(w_star, dtype=np.float64)
    t_arr = np.ascontiguousarray(a_star, dtype=np.float64)
    s_arr = np.ascontiguousarray(a_spur, dtype=np.float64)

    cdef double[::1] v = v_arr
    cdef double[::1] a = a_arr
    cdef const double[::1] w = w_arr
    cdef const double[::1] ts = t_arr
    cdef const double[::1] sp = s_arr
    q_arr = np.empty(v.shape[0], dtype=np.float64)
    ga_arr = np.empty(a.shape[0], dtype=np.float64)
    cdef double[::1] q = q_arr
    cdef double[::1] ga = ga_arr

    cdef Py_ssize_t p = v.shape[0]
    cdef Py_ssize_t k = a.shape[0]
    cdef Py_ssize_t i
    cdef long t = 0
    cdef long n_rec = 0
    cdef int recorded, reason
    cdef double w_norm2 = 0.0, t_sum = 0.0
    cdef double r2, r, s_dot, qn2, qn, phi, cos_phi, sin_phi, g
    cdef double d, sum_a, dist2, dist, gap, coef_v, gvn, gan2, gan, loss, pg
    cdef double w_norm, acc, step

    for i in range(p):
        w_norm2 += w[i] * w[i]
    w_norm = sqrt(w_norm2)
    for i in range(k):
        t_sum += ts[i]

    while True:
        r2 = 0.0
        s_dot = 0.0
        for i in range(p):
            r2 += v[i] * v[i]
            s_dot += v[i] * w[i]
        r = sqrt(r2)
        qn2 = 0.0
        for i in range(p):
            q[i] = w[i] - (s_dot / r2) * v[i]
            qn2 += q[i] * q[i]
        qn = sqrt(qn2)
        phi = atan2(qn * r, s_dot)
        cos_phi = s_dot / (r * w_norm)
        sin_phi = qn / w_norm
        g = (PI - phi) * cos_phi + sin_phi

        d = 0.0
        sum_a = 0.0
        dist2 = 0.0
        for i in range(k):
            d += a[i] * ts[i]
            sum_a += a[i]
            acc = a[i] - w_norm * ts[i]
            dist2 += acc * acc
        dist = sqrt(dist2)
        gap = sum_a - w_norm * t_sum

        coef_v = d * (PI - phi) / (TWO_PI * r)
        gvn = fabs(coef_v) * qn
        gan2 = 0.0
        for i in range(k):
            ga[i] = (gap + (PI - 1.0) * a[i] - (g - 1.0) * w_norm * ts[i]) / TWO_PI
            gan2 += ga[i] * ga[i]
        gan = sqrt(gan2)
        # g <= pi analytically; rounding of the algebraic cosine can push it
        # a few ulp past, so the cross term is clamped to keep loss >= 0
        pg = PI - g
        if pg < 0.0:
            pg = 0.0
        loss = ((PI - 1.0) * dist2 + gap * gap + 2.0 * pg * w_norm * d) / (2.0 * TWO_PI)

        recorded = 0
        if t % stride == 0:
            out[n_rec, 0] = t
            out[n_rec, 1] = phi
            out[n_rec, 2] = d
            out[n_rec, 3] = sum_a
            out[n_rec, 4] = r
            out[n_rec, 5] = loss
            out[n_rec, 6] = gvn
            out[n_rec, 7] = gan
            out[n_rec, 8] = dist
            out[n_rec, 9] = fabs(gap)
            n_rec += 1
            recorded = 1

        reason = -1
        if gvn + gan <= grad_tol_abs:
            reason = 0
        elif cert_phi_tol > 0.0:
            if phi <= cert_phi_tol and d > 0.0 and dist <= cert_dist_tol:
                reason = 2
            elif PI - phi <= cert_phi_tol and d < 0.0:
                acc = 0.0
                for i in range(k):
                    step = a[i] - sp[i]
                    acc += step * step
                if sqrt(acc) <= cert_dist_tol:
                    reason = 3
        if reason < 0 and t == max_iters:
            reason = 1
        if reason >= 0:
            if not recorded:
                out[n_rec, 0] = t
                out[n_rec, 1] = phi
                out[n_rec, 2] = d
                out[n_rec, 3] = sum_a
                out[n_rec, 4] = r
                out[n_rec, 5] = loss
                out[n_rec, 6] = gvn
                out[n_rec, 7] = gan
                out[n_rec, 8] = dist
                out[n_rec, 9] = fabs(gap)
                n_rec += 1
            return v_arr, a_arr, t, reason, n_rec

        for i in range(p):
            v[i] = v[i] + (eta * coef_v) * q[i]
        for i in range(k):
            a[i] = a[i] - eta * ga[i]
        t += 1
