"""Shared helpers for the test suite.

Random configurations are drawn through the factories below so every test
file conditions points the same way: angles bounded away from {0, pi} and
second-layer alignment bounded away from zero, the regime where relative
gradient tolerances are meaningful.
"""

from __future__ import annotations

import numpy as np

from convdyn import StudentParams, TeacherParams, angle


def random_teacher(
    rng: np.random.Generator,
    p: int,
    k: int,
    w_norm: float = 1.0,
    a_norm: float = 1.0,
) -> TeacherParams:
    w = rng.standard_normal(p)
    w *= w_norm / np.linalg.norm(w)
    a = rng.standard_normal(k)
    a *= a_norm / np.linalg.norm(a)
    return TeacherParams(w_star=w, a_star=a)


def random_student(rng: np.random.Generator, p: int, k: int) -> StudentParams:
    v = rng.standard_normal(p)
    a = rng.standard_normal(k)
    return StudentParams(v=v, a=a)


def conditioned_pair(
    rng: np.random.Generator,
    p: int,
    k: int,
    phi_margin: float = 0.05,
    align_min: float = 0.1,
) -> tuple[StudentParams, TeacherParams]:
    """Random (student, teacher) with phi in (margin, pi - margin) and
    |a . a*| >= align_min * ||a|| ||a*||."""
    while True:
        t = random_teacher(rng, p, k)
        s = random_student(rng, p, k)
        phi = angle(s.v, t.w_star)
        align = abs(float(s.a @ t.a_star))
        if phi_margin < phi < np.pi - phi_margin and align >= align_min * float(
            np.linalg.norm(s.a) * np.linalg.norm(t.a_star)
        ):
            return s, t
