"""Sample-based oracle for the closed-form population quantities.

Everything the analytic module computes in closed form is an expectation
over standard Gaussian patches. This module estimates those expectations by
direct sampling: the empirical loss and gradients converge to their
population counterparts, and the four Gaussian identities the closed forms
rest on are checked entrywise with z-scores. Agreement here is the evidence
that the analytic formulas are implemented correctly.

The network is f(Z, v, a) = sum_i a_i relu(Z_i . v / ||v||) for the student;
teacher labels use w* directly, f*(Z) = sum_i a*_i relu(Z_i . w*), so the
global minimum sits at v parallel to w* with a = ||w*|| a*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .model import StudentParams, TeacherParams, angle

__all__ = [
    "PatchBatch",
    "sample_patches",
    "empirical_loss",
    "empirical_grad",
    "IdentityCheckReport",
    "check_identity",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

# samples per accumulation chunk; estimates are reduced chunk by chunk in
# index order so results do not depend on how work is scheduled
_CHUNK = 100_000


@dataclass(frozen=True)
class PatchBatch:
    """A batch of Gaussian inputs, ``data[j, i]`` the i-th patch of sample j."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise ValueError(f"data must be n x k x p, got shape {data.shape}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    @property
    def p(self) -> int:
        return self.data.shape[2]


def sample_patches(n: int, k: int, p: int, rng: np.random.Generator) -> PatchBatch:
    """Draw ``n`` samples of ``k`` patches with i.i.d. N(0, 1) entries."""
    if n < 1 or k < 1 or p < 1:
        raise ValueError(f"n, k, p must be >= 1, got n={n}, k={k}, p={p}")
    return PatchBatch(data=rng.standard_normal((n, k, p)))


def _check_dims(batch: PatchBatch, s: StudentParams, t: TeacherParams) -> None:
    if s.p != batch.p or t.p != batch.p or s.k != batch.k or t.k != batch.k:
        raise ValueError(
            f"dimension mismatch: batch is (k={batch.k}, p={batch.p}), "
            f"student (k={s.k}, p={s.p}), teacher (k={t.k}, p={t.p})"
        )


def _residuals(
    batch: PatchBatch, s: StudentParams, t: TeacherParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample residual f - f* and the student activations relu(Z w)."""
    w = s.v / np.linalg.norm(s.v)
    act_s = np.maximum(batch.data @ w, 0.0)
    act_t = np.maximum(batch.data @ t.w_star, 0.0)
    return act_s @ s.a - act_t @ t.a_star, act_s


def empirical_loss(batch: PatchBatch, s: StudentParams, t: TeacherParams) -> float:
    """Mean squared-error loss over the batch, (1/n) sum 1/2 (f - f*)^2."""
    _check_dims(batch, s, t)
    residual, _ = _residuals(batch, s, t)
    return 0.5 * float(residual @ residual) / batch.n


def empirical_grad(
    batch: PatchBatch, s: StudentParams, t: TeacherParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Batch-averaged gradients of the empirical loss in (v, a).

    The a-gradient averages (f - f*) relu(Z w) per sample. The v-gradient
    averages the w-gradient (f - f*) sum_i a_i 1{Z_i . w > 0} Z_i and then
    applies the weight-normalization projection (I - vv^T/||v||^2)/||v||,
    making it orthogonal to v. The ReLU derivative at exactly zero
    pre-activation is taken as 0.
    """
    _check_dims(batch, s, t)
    v_norm = float(np.linalg.norm(s.v))
    w = s.v / v_norm
    pre = batch.data @ w
    act_s = np.maximum(pre, 0.0)
    act_t = np.maximum(batch.data @ t.w_star, 0.0)
    residual = act_s @ s.a - act_t @ t.a_star
    ga = (residual @ act_s) / batch.n
    weights = (pre > 0.0) * s.a * residual[:, None]
    gw = np.einsum("nk,nkp->p", weights, batch.data) / batch.n
    gv = (gw - w * float(w @ gw)) / v_norm
    return gv, ga


@dataclass(frozen=True)
class IdentityCheckReport:
    """Monte-Carlo check of one closed-form Gaussian identity.

    ``estimate`` and ``closed_form`` share a shape (a length-p vector for
    identities 1-3, a scalar array for identity 4); ``max_abs_z_score`` is
    the largest entrywise |estimate - closed_form| / standard error, with the
    standard error estimated from the same samples.
    """

    identity_id: int
    estimate: np.ndarray
    closed_form: np.ndarray
    max_abs_z_score: float

    def __post_init__(self) -> None:
        if self.estimate.shape != self.closed_form.shape:
            raise ValueError("estimate and closed_form shapes must agree")


def _identity_samples(
    identity_id: int, z: np.ndarray, w: np.ndarray, w_star: np.ndarray
) -> np.ndarray:
    """Per-sample values whose mean estimates the identity's left side."""
    if identity_id == 1:
        return z * ((z @ w) * (z @ w >= 0.0))[:, None]
    if identity_id == 2:
        return z * (z @ w >= 0.0)[:, None]
    if identity_id == 3:
        both = (z @ w >= 0.0) & (z @ w_star >= 0.0)
        return z * ((z @ w_star) * both)[:, None]
    return (np.maximum(z @ w, 0.0) * np.maximum(z @ w_star, 0.0))[:, None]


def _identity_closed_form(
    identity_id: int, w: np.ndarray, w_star: np.ndarray
) -> np.ndarray:
    phi = angle(w, w_star)
    if identity_id == 1:
        return w / 2.0
    if identity_id == 2:
        return w / (float(np.linalg.norm(w)) * _SQRT_2PI)
    if identity_id == 3:
        ratio = float(np.linalg.norm(w_star)) / float(np.linalg.norm(w))
        return ((math.pi - phi) / _TWO_PI) * w_star + (math.sin(phi) / _TWO_PI) * ratio * w
    value = (
        (math.cos(phi) * (math.pi - phi) + math.sin(phi))
        * float(np.linalg.norm(w))
        * float(np.linalg.norm(w_star))
        / _TWO_PI
    )
    return np.array([value])


def check_identity(
    identity_id: int,
    w: np.ndarray,
    w_star: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> IdentityCheckReport:
    """Estimate one Gaussian identity over ``n`` samples and report z-scores.

    The identities, for z standard normal in R^p and phi = angle(w, w*):

    1. E[z z^T 1{z.w >= 0}] w           = w / 2
    2. E[z 1{z.w >= 0}]                 = (1/sqrt(2 pi)) w / ||w||
    3. E[z z^T 1{z.w >= 0, z.w* >= 0}] w*
         = ((pi - phi)/(2 pi)) w* + (sin(phi)/(2 pi)) (||w*||/||w||) w
    4. E[relu(z.w) relu(z.w*)]          = (cos(phi)(pi - phi) + sin(phi))
                                          ||w|| ||w*|| / (2 pi)

    Sampling is chunked and reduced in a fixed order; identical generators
    produce identical reports. Intended sample sizes are n >= 10^4 so the
    normal approximation behind the z-scores is accurate.
    """
    if identity_id not in (1, 2, 3, 4):
        raise ValueError(f"identity_id must be in 1..4, got {identity_id}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w.ndim != 1 or w_star.ndim != 1 or w.shape != w_star.shape:
        raise ValueError("w and w_star must be 1-D vectors of equal length")
    if np.linalg.norm(w) == 0.0 or np.linalg.norm(w_star) == 0.0:
        raise ValueError("w and w_star must be nonzero")

    p = w.shape[0]
    dim = p if identity_id != 4 else 1
    total = np.zeros(dim)
    total_sq = np.zeros(dim)
    remaining = n
    while remaining > 0:
        m = min(_CHUNK, remaining)
        z = rng.standard_normal((m, p))
        samples = _identity_samples(identity_id, z, w, w_star)
        total += samples.sum(axis=0)
        total_sq += (samples * samples).sum(axis=0)
        remaining -= m

    estimate = total / n
    variance = np.maximum(total_sq / n - estimate**2, 0.0) * (n / (n - 1))
    std_err = np.sqrt(variance / n)
    closed = _identity_closed_form(identity_id, w, w_star)
    diff = np.abs(estimate - closed)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_scores = np.where(std_err > 0.0, diff / std_err, np.where(diff > 0.0, np.inf, 0.0))
    return IdentityCheckReport(
        identity_id=identity_id,
        estimate=estimate,
        closed_form=closed,
        max_abs_z_score=float(np.max(z_scores)),
    )
