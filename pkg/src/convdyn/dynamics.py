"""Gradient-descent dynamics: step sizes, runs, classification, monitors.

A run iterates simultaneous gradient-descent updates

    v_{t+1} = v_t - eta * d loss / d v   (at v_t, a_t)
    a_{t+1} = a_t - eta * d loss / d a   (at v_t, a_t)

until the combined gradient norm falls below ``grad_tol * ||a*|| ||w*||``, the
iteration cap is reached, or (when enabled) the iterate is certified inside a
stationary family's classification neighborhood. The per-iteration state
summaries form a :class:`~convdyn.model.Trajectory`; monitors replay recorded
trajectories against one-step inequalities that the dynamics provably satisfy
under their hypotheses, so any violation indicates an implementation bug
rather than an unlucky draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import _backend
from .analytic import g_phi, grad_a, grad_v, spurious_a
from .model import (
    AutoStep,
    ExperimentConfig,
    FixedStep,
    StationaryClass,
    StudentParams,
    TeacherParams,
    Trajectory,
    angle,
)
from ._gd_python import RECORD_FIELDS, record_capacity

__all__ = [
    "StepSizeBound",
    "step_size_auto",
    "fixed_step_size",
    "gd_step",
    "RunResult",
    "run",
    "classify_stationary",
    "monitor_invariants",
    "detect_phases",
    "MONITOR_NAMES",
]

_TWO_PI = 2.0 * math.pi

#: invariant-monitor check names, in reporting order; the first six are the
#: theorem-backed one-step checks, the last is the descent sanity check
MONITOR_NAMES = (
    "angle_monotone",
    "signal_stays_positive",
    "sum_a_bounded",
    "sin2_contraction",
    "v_norm_bounded",
    "sum_a_recurrence",
    "loss_nonincreasing",
)


@dataclass(frozen=True)
class StepSizeBound:
    """Step size from :func:`step_size_auto` plus the term that bound it.

    ``binding_term`` is one of ``signal_inner_product`` (a0 . a* cos(phi0) / D),
    ``kernel_margin`` ((g(phi0) - 1) ||a*||^2 cos(phi0) / D), ``angle_cosine``
    (cos(phi0) / D), or ``filter_count`` (1/k), with
    D = (||a*||^2 + (1 . a*)^2) ||w*||^2. ``terms`` holds all four values.
    """

    eta: float
    binding_term: str
    terms: dict


def step_size_auto(s0: StudentParams, t: TeacherParams, scale: float = 0.5) -> StepSizeBound:
    """Convergence-guaranteeing step size for a well-aligned initialization.

    Requires ``a0 . a* > 0`` and ``phi0 < pi/2`` (the conditions under which
    the four-way bound guarantees monotone angle convergence), and
    ``0 < scale <= 1``. Returns ``scale`` times the minimum of the four terms
    described on :class:`StepSizeBound`.
    """
    if not (0.0 < scale <= 1.0):
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    phi0 = angle(s0.v, t.w_star)
    d0 = float(s0.a @ t.a_star)
    if d0 <= 0.0:
        raise ValueError(f"step_size_auto requires a0 . a* > 0, got {d0}")
    if not (phi0 < math.pi / 2.0):
        raise ValueError(f"step_size_auto requires phi0 < pi/2, got {phi0}")
    a2 = t.a_norm**2
    big_d = (a2 + t.a_sum**2) * t.w_norm**2
    cos0 = math.cos(phi0)
    terms = {
        "signal_inner_product": d0 * cos0 / big_d,
        "kernel_margin": (g_phi(phi0) - 1.0) * a2 * cos0 / big_d,
        "angle_cosine": cos0 / big_d,
        "filter_count": 1.0 / t.k,
    }
    binding = min(terms, key=terms.get)
    return StepSizeBound(eta=scale * terms[binding], binding_term=binding, terms=terms)


def fixed_step_size(t: TeacherParams, scale: float = 0.5) -> float:
    """Initialization-independent stable step size.

    ``scale * min{2 pi / (k + pi - 1), 1 / ((||a*||^2 + (1 . a*)^2) ||w*||^2)}``:
    the first term is the contraction limit of the affine a-update (its
    stiffest mode, along the all-ones direction, has multiplier
    1 - eta (k + pi - 1) / 2 pi), the second bounds the angle update through
    the largest attainable a . a*. Usable for any initialization, including
    ones that violate :func:`step_size_auto`'s preconditions.
    """
    if not (0.0 < scale <= 1.0):
        raise ValueError(f"scale must be in (0, 1], got {scale}")
    big_d = (t.a_norm**2 + t.a_sum**2) * t.w_norm**2
    return scale * min(_TWO_PI / (t.k + math.pi - 1.0), 1.0 / big_d)


def gd_step(s: StudentParams, t: TeacherParams, eta: float) -> StudentParams:
    """One simultaneous gradient-descent update of (v, a)."""
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    return StudentParams(
        v=s.v - eta * grad_v(s, t),
        a=s.a - eta * grad_a(s, t),
    )


@dataclass(frozen=True)
class RunResult:
    """Outcome of a gradient-descent run.

    ``stop_reason`` is one of ``grad_tol``, ``max_iters``,
    ``certified_global``, ``certified_spurious``. ``phase1_end`` is the first
    recorded iteration where both phase thresholds hold (None if never).
    ``invariant_violations`` is populated only for stride-1 trajectories.
    """

    trajectory: Trajectory
    final: StudentParams
    stationary_class: StationaryClass
    iters_run: int
    phase1_end: Optional[int]
    invariant_violations: List[Tuple[int, str]]
    eta: float
    stop_reason: str


_STOP_REASONS = {0: "grad_tol", 1: "max_iters", 2: "certified_global", 3: "certified_spurious"}


def resolve_step_size(s0: StudentParams, t: TeacherParams, cfg: ExperimentConfig) -> float:
    """Step size implied by the config's policy for this initialization."""
    if isinstance(cfg.step_size_policy, FixedStep):
        return cfg.step_size_policy.eta
    return step_size_auto(s0, t, cfg.step_size_policy.scale).eta


def run(s0: StudentParams, t: TeacherParams, cfg: ExperimentConfig) -> RunResult:
    """Run gradient descent from ``s0`` against teacher ``t``.

    Dimensions must match the config. The trajectory records the state at
    iteration 0, every ``cfg.stride`` iterations, and the stopping iterate;
    the final point is classified with ``cfg.class_tol``. With
    ``cfg.stop_when_classified`` the run may also stop once certified inside
    half the classification tolerance of a family (only when ``eta`` is under
    the a-update contraction limit, which every default policy satisfies).
    """
    if s0.p != cfg.p or s0.k != cfg.k or t.p != cfg.p or t.k != cfg.k:
        raise ValueError("student/teacher dimensions must match the config")
    eta = resolve_step_size(s0, t, cfg)
    scale = t.signal_scale
    cert_phi = 0.0
    cert_dist = 0.0
    if cfg.stop_when_classified and eta <= _TWO_PI / (cfg.k + math.pi - 1.0):
        cert_phi = 0.5 * cfg.class_tol
        cert_dist = 0.5 * cfg.class_tol * scale
    out = np.empty((record_capacity(cfg.max_iters, cfg.stride), len(RECORD_FIELDS)))
    v, a, iters_run, reason, n_rec = _backend.gd_loop(
        s0.v,
        s0.a,
        t.w_star,
        t.a_star,
        spurious_a(t),
        eta,
        cfg.max_iters,
        cfg.grad_tol * scale,
        cfg.stride,
        cert_phi,
        cert_dist,
        out,
    )
    trajectory = Trajectory(
        {name: out[:n_rec, j] for j, name in enumerate(RECORD_FIELDS)}
    )
    final = StudentParams(v=v, a=a)
    return RunResult(
        trajectory=trajectory,
        final=final,
        stationary_class=classify_stationary(final, t, cfg.class_tol),
        iters_run=int(iters_run),
        phase1_end=detect_phases(
            trajectory,
            t,
            cos_threshold=cfg.phase_cos_threshold,
            signal_threshold=cfg.phase_signal_threshold,
        ),
        invariant_violations=(
            monitor_invariants(trajectory, t, eta) if cfg.stride == 1 else []
        ),
        eta=eta,
        stop_reason=_STOP_REASONS[reason],
    )


def classify_stationary(
    s: StudentParams, t: TeacherParams, class_tol: float = 1e-2
) -> StationaryClass:
    """Classify an iterate against the two stationary families.

    GLOBAL: angle(v, w*) <= tol and ||a - ||w*|| a*|| <= tol ||a*|| ||w*||.
    SPURIOUS_LOCAL: |angle - pi| <= tol and the same distance bound to the
    closed-form spurious output weights. Anything else is UNDETERMINED.
    """
    if not (0.0 < class_tol < math.pi / 2.0):
        raise ValueError(f"class_tol must be in (0, pi/2), got {class_tol}")
    phi = angle(s.v, t.w_star)
    scale = t.signal_scale
    if phi <= class_tol:
        if float(np.linalg.norm(s.a - t.w_norm * t.a_star)) <= class_tol * scale:
            return StationaryClass.GLOBAL
    elif math.pi - phi <= class_tol:
        if float(np.linalg.norm(s.a - spurious_a(t))) <= class_tol * scale:
            return StationaryClass.SPURIOUS_LOCAL
    return StationaryClass.UNDETERMINED


def _g_of(phi: np.ndarray) -> np.ndarray:
    return (math.pi - phi) * np.cos(phi) + np.sin(phi)


def monitor_invariants(
    trajectory: Trajectory, t: TeacherParams, eta: float
) -> List[Tuple[int, str]]:
    """Check the recorded trajectory against the one-step invariants.

    Requires a stride-1 trajectory (consecutive iteration numbers). Each
    check applies only where its hypotheses hold at the earlier iterate of a
    consecutive pair; tolerances are the documented absolutes scaled by the
    problem magnitude, so unit-scale teachers get them verbatim. Returns
    ``(iteration, name)`` pairs, where ``iteration`` is the iterate at which
    the inequality failed and ``name`` is from :data:`MONITOR_NAMES`:

    angle_monotone        a.a* > 0 implies the angle does not increase
    signal_stays_positive a.a* stays positive under the alignment hypotheses
    sum_a_bounded         S* (1.a) stays below S*^2 ||w*|| once below it
    sin2_contraction      one-step geometric decay of sin^2(phi)
    v_norm_bounded        ||v|| <= 2 from ||v0|| = 1 under the joint bound
    sum_a_recurrence      exact affine recurrence of 1.a (to 1e-10 relative)
    loss_nonincreasing    population loss does not increase
    """
    it = trajectory.column("iteration")
    if len(trajectory) < 2:
        return []
    if not np.all(np.diff(it) == 1.0):
        raise ValueError("monitor_invariants requires a stride-1 trajectory")
    phi = trajectory.column("phi")
    d = trajectory.column("a_dot_astar")
    sum_a = trajectory.column("sum_a")
    vn = trajectory.column("v_norm")
    loss = trajectory.column("loss")

    k = t.k
    w_norm = t.w_norm
    a2 = t.a_norm**2
    s_star = t.a_sum
    big_d = (a2 + s_star**2) * w_norm**2
    g = _g_of(phi)
    out: List[Tuple[int, str]] = []

    def emit(mask: np.ndarray, name: str, iters: np.ndarray) -> None:
        for i in np.nonzero(mask)[0]:
            out.append((int(iters[i]), name))

    prev = slice(None, -1)
    nxt = slice(1, None)
    it_next = it[nxt]

    # (I) angle monotone while the signal is positive
    gate = d[prev] > 0.0
    bad = gate & (phi[nxt] > phi[prev] + 1e-12)
    emit(bad, "angle_monotone", it_next)

    # (II) positive signal propagates one step; the sum hypothesis must stay
    # under min(1, ||w*||) S*^2 for the one-step argument to hold at any norm
    tol_sum = 1e-12 * max(1.0, abs(s_star) ** 2 * w_norm)
    aligned = (s_star * sum_a[prev] >= -tol_sum) & (
        s_star * sum_a[prev] <= s_star**2 * min(1.0, w_norm) + tol_sum
    )
    gate = (d[prev] > 0.0) & aligned & (phi[prev] > 0.0) & (phi[prev] < math.pi / 2.0)
    if eta < 2.0:
        bad = gate & ~(d[nxt] > 0.0)
        emit(bad, "signal_stays_positive", it_next)

    # (III) aligned sum stays bounded once bounded
    if eta < _TWO_PI / (k + math.pi - 1.0):
        gate = s_star * sum_a[prev] <= s_star**2 * w_norm + tol_sum
        bad = gate & (s_star * sum_a[nxt] > s_star**2 * w_norm + tol_sum)
        emit(bad, "sum_a_bounded", it_next)

    # (IV) one-step sin^2 contraction at rate eta cos(phi) lambda
    lam = w_norm * (math.pi - phi[prev]) * d[prev] / (_TWO_PI * vn[prev] ** 2)
    cosp = np.cos(phi[prev])
    with np.errstate(divide="ignore", invalid="ignore"):
        step_ok = eta <= np.where(lam > 0.0, cosp / np.where(lam > 0.0, lam, 1.0), np.inf)
    gate = (d[prev] > 0.0) & (phi[prev] < math.pi / 2.0) & step_ok
    s2_prev = np.sin(phi[prev]) ** 2
    s2_next = np.sin(phi[nxt]) ** 2
    bad = gate & (s2_next > (1.0 - eta * cosp * lam) * s2_prev + 1e-12)
    emit(bad, "sin2_contraction", it_next)

    # (V) filter norm bounded by 2 under the joint induction step bound
    if abs(vn[0] - 1.0) <= 1e-9 and phi[0] < math.pi / 2.0 and d[0] > 0.0:
        beta0 = min(d[0], (g[0] - 1.0) * a2) * w_norm**2
        cos0 = math.cos(phi[0])
        bound = min(
            beta0 * cos0 / (8.0 * big_d),
            cos0 / big_d,
            _TWO_PI / (k + math.pi - 1.0),
        )
        if beta0 > 0.0 and eta <= bound:
            bad = vn > 2.0 + 1e-12
            emit(bad, "v_norm_bounded", it)

    # (VI) exact affine recurrence of the output-weight sum
    predicted = (1.0 - eta * (k + math.pi - 1.0) / _TWO_PI) * sum_a[prev] + (
        eta * (k + g[prev] - 1.0) / _TWO_PI
    ) * w_norm * s_star
    rec_scale = np.maximum(
        1.0, np.maximum(math.sqrt(k) * t.signal_scale, np.abs(sum_a[prev]))
    )
    bad = np.abs(sum_a[nxt] - predicted) > 1e-10 * rec_scale
    emit(bad, "sum_a_recurrence", it_next)

    # descent sanity: loss should not increase at conservative step sizes
    bad = loss[nxt] > loss[prev] + 1e-12 * max(1.0, a2 * w_norm**2)
    emit(bad, "loss_nonincreasing", it_next)

    out.sort(key=lambda pair: (pair[0], MONITOR_NAMES.index(pair[1])))
    return out


def detect_phases(
    trajectory: Trajectory,
    t: TeacherParams,
    cos_threshold: float = 0.5,
    signal_threshold: float = 0.25,
) -> Optional[int]:
    """First recorded iteration where the run has left its slow phase.

    The slow phase ends when the filter is angularly aligned
    (cos(phi) >= cos_threshold) and the output weights carry a constant
    fraction of the teacher signal
    (a . a* ||w*|| >= signal_threshold ||a*||^2 ||w*||^2). Returns None if no
    recorded iterate satisfies both.
    """
    cos_phi = np.cos(trajectory.column("phi"))
    signal = trajectory.column("a_dot_astar") * t.w_norm
    threshold = signal_threshold * t.a_norm**2 * t.w_norm**2
    hits = np.nonzero((cos_phi >= cos_threshold) & (signal >= threshold))[0]
    if hits.size == 0:
        return None
    return int(trajectory.column("iteration")[hits[0]])
