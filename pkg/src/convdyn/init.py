"""Random initialization and sign-variant selection.

The initialization scheme draws the filter uniformly on the unit sphere and
the output weights uniformly in a small ball, then considers the four sign
flips of the pair. One flip always lands in the attraction basin of the
global minimum; when the teacher's output weights nearly cancel
((1 . a*)^2 small against ||a*||^2), the opposite flip lands in the basin of
the spurious family. The selectors pick those variants; grid experiments use
the raw draw so success counts measure basin mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .analytic import g_phi
from .model import StudentParams, TeacherParams, angle

__all__ = [
    "ball_radius",
    "sample_init",
    "SignVariants",
    "sign_variants",
    "select_good_variant",
    "select_bad_variant",
]

# below this fraction of the signal scale, 1 . a* is treated as zero and the
# fallback ball radius applies
_SUM_ZERO_REL = 1e-12


def ball_radius(t: TeacherParams) -> float:
    """Radius of the output-weight initialization ball.

    ``|1 . a*| ||w*|| / sqrt(k)``, falling back to ``||a*|| ||w*|| / sqrt(k)``
    when the teacher sum vanishes (otherwise the ball would be degenerate and
    every trial would start at a = 0, a tie for the sign selectors).
    """
    root_k = math.sqrt(t.k)
    if abs(t.a_sum) <= _SUM_ZERO_REL * root_k * t.a_norm:
        return t.signal_scale / root_k
    return abs(t.a_sum) * t.w_norm / root_k


def _unit_gaussian(n: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        x = rng.standard_normal(n)
        norm = float(np.linalg.norm(x))
        if norm > 1e-12 * math.sqrt(n):
            return x / norm


def sample_init(p: int, k: int, t: TeacherParams, rng: np.random.Generator) -> StudentParams:
    """Draw one random initialization.

    ``v`` is uniform on the unit sphere in R^p (normalized Gaussian); ``a`` is
    uniform in the ball of :func:`ball_radius`, realized as a random unit
    direction scaled by ``radius * U^(1/k)`` for U uniform on [0, 1]. The
    generator is consumed in the fixed order (v, a-direction, U) so draws are
    reproducible across backends and worker counts.
    """
    if p < 1 or k < 1:
        raise ValueError(f"p and k must be >= 1, got p={p}, k={k}")
    if t.p != p or t.k != k:
        raise ValueError("teacher dimensions must match (p, k)")
    v = _unit_gaussian(p, rng)
    direction = _unit_gaussian(k, rng)
    u = float(rng.uniform())
    a = direction * (ball_radius(t) * u ** (1.0 / k))
    return StudentParams(v=v, a=a)


@dataclass(frozen=True)
class SignVariants:
    """The four sign flips of one draw, in the canonical order
    (v, a), (v, -a), (-v, a), (-v, -a)."""

    variants: Tuple[StudentParams, StudentParams, StudentParams, StudentParams]

    def __iter__(self):
        return iter(self.variants)

    def __getitem__(self, index: int) -> StudentParams:
        return self.variants[index]

    def __len__(self) -> int:
        return 4


def sign_variants(s: StudentParams) -> SignVariants:
    """All four sign combinations of (v, a), first variant the input itself."""
    return SignVariants(
        variants=(
            StudentParams(v=s.v, a=s.a),
            StudentParams(v=s.v, a=-s.a),
            StudentParams(v=-s.v, a=s.a),
            StudentParams(v=-s.v, a=-s.a),
        )
    )


def select_good_variant(sv: SignVariants, t: TeacherParams) -> Optional[StudentParams]:
    """Variant in the global minimum's basin, or None on a measure-zero tie.

    Selects the variant with ``a . a* > 0``, ``phi < pi/2``, and the sum bound
    ``|1 . a| <= sqrt(k) * ball_radius(t)`` (automatic for sampled draws, a
    real constraint only for hand-built pairs). Exactly one variant qualifies
    unless ``a . a* = 0`` or ``phi = pi/2`` exactly.
    """
    sum_cap = math.sqrt(t.k) * ball_radius(t) * (1.0 + 1e-12)
    for s in sv:
        d = float(s.a @ t.a_star)
        if d <= 0.0:
            continue
        if angle(s.v, t.w_star) >= math.pi / 2.0:
            continue
        if abs(float(np.sum(s.a))) > sum_cap:
            continue
        return s
    return None


def select_bad_variant(sv: SignVariants, t: TeacherParams) -> Optional[StudentParams]:
    """Variant in the spurious family's basin, or None when none qualifies.

    Selects the variant with ``a . a* < 0`` and
    ``g(phi) <= 1 - 2 (1 . a*)^2 / ||a*||^2``. The threshold is below g's
    range for teachers with large sum, so the selector is meant for small
    ratios; None means the draw's angle fails the g condition for both signs
    of v (or a . a* = 0 exactly).
    """
    threshold = 1.0 - 2.0 * t.a_sum**2 / t.a_norm**2
    for s in sv:
        d = float(s.a @ t.a_star)
        if d >= 0.0:
            continue
        if g_phi(angle(s.v, t.w_star)) <= threshold:
            return s
    return None
