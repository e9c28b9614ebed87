"""Closed-form population loss and gradients for Gaussian patches.

Averaging the squared prediction error over standard Gaussian patches reduces
the population loss to a function of a few scalars. Writing ``w = v/||v||``
for the student filter, ``phi`` for the angle between ``w`` and ``w*``, and

    g(phi) = (pi - phi) cos(phi) + sin(phi),

the pairwise ReLU correlations assemble into k x k Gram matrices

    A(w)     = (||w||^2 / 2 pi) (J + (pi - 1) I)
    B(w, w*) = (||w|| ||w*|| / 2 pi) (J + (g(phi) - 1) I)      J = ones(k, k)

and the population loss is the quadratic form

    loss = 1/2 [ a*^T A(w*) a* + a^T A(w) a - 2 a^T B(w, w*) a* ].

:func:`population_loss` evaluates the algebraically identical factored form

    loss = [ (pi-1) ||a - W a*||^2 + (1.a - W 1.a*)^2
             + 2 (pi - g(phi)) W (a . a*) ] / (4 pi),         W = ||w*||,

which is exact at the global minimum (every term vanishes identically in
floating point) instead of leaving the ~1e-16 cancellation residue of the
quadratic-form evaluation. :func:`population_loss_gram` keeps the literal
Gram-matrix route for cross-checking.

Gradients under weight normalization:

    d loss / d v = -(a . a*) (pi - phi) / (2 pi ||v||) * (I - vv^T/||v||^2) w*
    d loss / d a = A(w) a - B(w, w*) a*        with ||w|| = 1,

so the v-gradient is always orthogonal to ``v`` and vanishes at phi in
{0, pi}, and the a-gradient is affine in ``a``.

Stationary points come in two families: the global minima
(v parallel to w*, a = W a*) and a spurious family at phi = pi whose output
weights :func:`spurious_a` returns in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import StudentParams, TeacherParams, angle

__all__ = [
    "GramPair",
    "g_phi",
    "gram_matrices",
    "population_loss",
    "population_loss_gram",
    "grad_v",
    "grad_a",
    "spurious_a",
]

_TWO_PI = 2.0 * math.pi


def g_phi(phi: float) -> float:
    """ReLU correlation kernel ``g(phi) = (pi - phi) cos(phi) + sin(phi)``.

    Strictly decreasing on [0, pi] with g(0) = pi, g(pi/2) = 1, g(pi) = 0.
    """
    if not (0.0 <= phi <= math.pi):
        raise ValueError(f"phi must be in [0, pi], got {phi}")
    return (math.pi - phi) * math.cos(phi) + math.sin(phi)


@dataclass(frozen=True)
class GramPair:
    """Student Gram matrix ``A(w)`` and cross Gram matrix ``B(w, w*)``."""

    a_gram: np.ndarray
    b_gram: np.ndarray

    def __post_init__(self) -> None:
        for name in ("a_gram", "b_gram"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if self.a_gram.shape != self.b_gram.shape:
            raise ValueError("a_gram and b_gram must share one shape")


def gram_matrices(w: np.ndarray, w_star: np.ndarray, k: int) -> GramPair:
    """Gram matrices of the ReLU features for filters ``w`` and ``w*``.

    ``w`` is used as given (no normalization); pass the normalized student
    filter for weight-normalized students. Requires nonzero filters of equal
    dimension and k >= 1.
    """
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    nw = float(np.linalg.norm(w))
    nws = float(np.linalg.norm(w_star))
    if nw == 0.0 or nws == 0.0:
        raise ValueError("gram_matrices requires nonzero filters")
    phi = angle(w, w_star)
    ones = np.ones((k, k))
    eye = np.eye(k)
    a_gram = (nw * nw / _TWO_PI) * (ones + (math.pi - 1.0) * eye)
    b_gram = (nw * nws / _TWO_PI) * (ones + (g_phi(phi) - 1.0) * eye)
    return GramPair(a_gram, b_gram)


def _loss_scalars(s: StudentParams, t: TeacherParams):
    if s.p != t.p or s.k != t.k:
        raise ValueError("student and teacher dimensions must agree")
    phi = angle(s.v, t.w_star)
    w_norm = t.w_norm
    diff = s.a - w_norm * t.a_star
    dist2 = float(diff @ diff)
    gap = float(np.sum(s.a)) - w_norm * t.a_sum
    d = float(s.a @ t.a_star)
    return phi, w_norm, dist2, gap, d


def population_loss(s: StudentParams, t: TeacherParams) -> float:
    """Population loss of the weight-normalized student against the teacher.

    Nonnegative; exactly zero at the global minima (v parallel to w*,
    a = ||w*|| a*). Invariant under positive rescaling of ``v``.
    """
    phi, w_norm, dist2, gap, d = _loss_scalars(s, t)
    return (
        (math.pi - 1.0) * dist2 + gap * gap + 2.0 * (math.pi - g_phi(phi)) * w_norm * d
    ) / (2.0 * _TWO_PI)


def population_loss_gram(s: StudentParams, t: TeacherParams) -> float:
    """Population loss evaluated literally through the Gram quadratic form.

    Agrees with :func:`population_loss` to machine precision relative to the
    problem scale; kept as an independent evaluation route.
    """
    if s.p != t.p or s.k != t.k:
        raise ValueError("student and teacher dimensions must agree")
    k = s.k
    w = s.filter()
    student = gram_matrices(w, t.w_star, k)
    teacher = gram_matrices(t.w_star, t.w_star, k)
    a, a_star = s.a, t.a_star
    return 0.5 * float(
        a_star @ teacher.a_gram @ a_star
        + a @ student.a_gram @ a
        - 2.0 * (a @ student.b_gram @ a_star)
    )


def grad_v(s: StudentParams, t: TeacherParams) -> np.ndarray:
    """Gradient of the population loss in ``v`` (orthogonal to ``v``)."""
    if s.p != t.p or s.k != t.k:
        raise ValueError("student and teacher dimensions must agree")
    v = s.v
    r2 = float(v @ v)
    r = math.sqrt(r2)
    proj = t.w_star - (float(v @ t.w_star) / r2) * v
    phi = angle(v, t.w_star)
    d = float(s.a @ t.a_star)
    return (-d * (math.pi - phi) / (_TWO_PI * r)) * proj


def grad_a(s: StudentParams, t: TeacherParams) -> np.ndarray:
    """Gradient of the population loss in the output weights ``a``."""
    if s.p != t.p or s.k != t.k:
        raise ValueError("student and teacher dimensions must agree")
    phi = angle(s.v, t.w_star)
    g = g_phi(phi)
    w_norm = t.w_norm
    sum_a = float(np.sum(s.a))
    return (
        (sum_a - w_norm * t.a_sum)
        + (math.pi - 1.0) * s.a
        - (g - 1.0) * w_norm * t.a_star
    ) / _TWO_PI


def spurious_a(t: TeacherParams) -> np.ndarray:
    """Output weights of the spurious stationary family at phi = pi.

    Solves ``(J + (pi-1) I) a = (J - I) ||w*|| a*`` (the a-stationarity
    condition at phi = pi, where g = 0); by the rank-one inverse
    ``(J + (pi-1) I)^{-1} = ((I - J/(k+pi-1)) / (pi-1)`` this is

        a = ||w*|| / (pi-1) * [ pi (1.a*) / (k+pi-1) * ones - a* ].

    For k = 1 the right side vanishes and the result is the zero vector;
    for zero-sum teachers it reduces to ``-||w*|| a* / (pi-1)``.
    """
    k = t.k
    coef = math.pi * t.a_sum / (k + math.pi - 1.0)
    return (t.w_norm / (math.pi - 1.0)) * (coef * np.ones(k) - t.a_star)
