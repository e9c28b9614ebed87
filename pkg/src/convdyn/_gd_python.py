"""Pure-NumPy gradient-descent kernel (reference implementation).

This module defines the normative iteration sequence; the compiled kernel in
``_gd_cython.pyx`` mirrors it operation for operation (floating-point results
may differ in the last ulp because NumPy reduces dot products pairwise while
the C loops accumulate sequentially).

Per iteration, at the incoming state (v, a):

    r^2   = v.v                     s_dot = v.w*
    q     = w* - (s_dot/r^2) v      (rejection of w* from v)
    phi   = atan2(||q|| ||v||, s_dot)
    g     = (pi - phi) cos(phi) + sin(phi)
    grad_v = -(a.a*) (pi - phi) / (2 pi ||v||) * q
    grad_a = [ (1.a - W 1.a*) + (pi-1) a - (g-1) W a* ] / (2 pi)

then record / test stopping / apply the simultaneous update
v -= eta grad_v, a -= eta grad_a. The state is recorded at iteration 0, every
``stride`` iterations, and at the stopping iteration.

Stopping:

    reason 0: ||grad_v|| + ||grad_a|| <= grad_tol_abs
    reason 1: max_iters update steps applied
    reason 2: certified global   (phi <= cert_phi_tol, a.a* > 0,
                                  ||a - W a*|| <= cert_dist_tol)
    reason 3: certified spurious (pi - phi <= cert_phi_tol, a.a* < 0,
                                  ||a - a_spur|| <= cert_dist_tol)

Certificates are disabled when cert_phi_tol <= 0; the caller is responsible
for only enabling them with a step size under the a-map contraction limit.
"""

from __future__ import annotations

import math

import numpy as np

_TWO_PI = 2.0 * math.pi

#: columns of the record buffer, in storage order
RECORD_FIELDS = (
    "iteration",
    "phi",
    "a_dot_astar",
    "sum_a",
    "v_norm",
    "loss",
    "grad_v_norm",
    "grad_a_norm",
    "dist_a",
    "sum_gap",
)


def record_capacity(max_iters: int, stride: int) -> int:
    """Rows needed for a run of at most ``max_iters`` steps at ``stride``."""
    return max_iters // stride + 2


def gd_loop(
    v0: np.ndarray,
    a0: np.ndarray,
    w_star: np.ndarray,
    a_star: np.ndarray,
    a_spur: np.ndarray,
    eta: float,
    max_iters: int,
    grad_tol_abs: float,
    stride: int,
    cert_phi_tol: float,
    cert_dist_tol: float,
    out: np.ndarray,
):
    """Run gradient descent; returns (v, a, iters_run, stop_reason, n_records).

    ``out`` must be a float64 array of shape (record_capacity(...), 10);
    rows [0, n_records) are filled in iteration order.
    """
    v = np.array(v0, dtype=np.float64)
    a = np.array(a0, dtype=np.float64)
    w = np.asarray(w_star, dtype=np.float64)
    ts = np.asarray(a_star, dtype=np.float64)
    sp = np.asarray(a_spur, dtype=np.float64)

    w_norm = math.sqrt(float(w @ w))
    t_sum = float(np.sum(ts))
    n_rec = 0
    t = 0
    while True:
        r2 = float(v @ v)
        r = math.sqrt(r2)
        s_dot = float(v @ w)
        q = w - (s_dot / r2) * v
        qn = math.sqrt(float(q @ q))
        phi = math.atan2(qn * r, s_dot)
        cos_phi = s_dot / (r * w_norm)
        sin_phi = qn / w_norm
        g = (math.pi - phi) * cos_phi + sin_phi

        d = float(a @ ts)
        sum_a = float(np.sum(a))
        diff = a - w_norm * ts
        dist2 = float(diff @ diff)
        dist = math.sqrt(dist2)
        gap = sum_a - w_norm * t_sum

        coef_v = d * (math.pi - phi) / (_TWO_PI * r)
        gvn = abs(coef_v) * qn
        ga = ((gap) + (math.pi - 1.0) * a - (g - 1.0) * w_norm * ts) / _TWO_PI
        gan = math.sqrt(float(ga @ ga))
        # g <= pi analytically; rounding of the algebraic cosine can push it
        # a few ulp past, so the cross term is clamped to keep loss >= 0
        pg = max(0.0, math.pi - g)
        loss = ((math.pi - 1.0) * dist2 + gap * gap + 2.0 * pg * w_norm * d) / (2.0 * _TWO_PI)

        recorded = False
        if t % stride == 0:
            out[n_rec] = (t, phi, d, sum_a, r, loss, gvn, gan, dist, abs(gap))
            n_rec += 1
            recorded = True

        reason = -1
        if gvn + gan <= grad_tol_abs:
            reason = 0
        elif cert_phi_tol > 0.0:
            if phi <= cert_phi_tol and d > 0.0 and dist <= cert_dist_tol:
                reason = 2
            elif math.pi - phi <= cert_phi_tol and d < 0.0:
                dsp = a - sp
                if math.sqrt(float(dsp @ dsp)) <= cert_dist_tol:
                    reason = 3
        if reason < 0 and t == max_iters:
            reason = 1
        if reason >= 0:
            if not recorded:
                out[n_rec] = (t, phi, d, sum_a, r, loss, gvn, gan, dist, abs(gap))
                n_rec += 1
            return v, a, t, reason, n_rec

        v = v + (eta * coef_v) * q
        a = a - eta * ga
        t += 1
