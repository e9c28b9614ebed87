"""Core value types for the convolutional teacher-student model.

The model: an input is split into ``k`` non-overlapping patches
``Z = (Z_1, ..., Z_k)``, each ``Z_i`` a standard Gaussian vector in R^p.
A one-hidden-layer network with a single shared ReLU filter ``w`` and output
weights ``a`` predicts

    f(Z, w, a) = sum_i a_i * relu(w . Z_i).

A student parameterizes the filter through weight normalization,
``w = v / ||v||``, and is trained against labels produced by a fixed teacher
``(w*, a*)``. Everything downstream (closed-form losses, gradients, the
gradient-descent dynamics) is expressed in terms of the types defined here.

All containers are immutable value objects: arrays are copied on construction
and marked read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

__all__ = [
    "StudentParams",
    "TeacherParams",
    "StationaryClass",
    "TrajectoryRecord",
    "Trajectory",
    "AutoStep",
    "FixedStep",
    "StepSizePolicy",
    "ExperimentConfig",
    "angle",
    "make_target_a",
]


def _frozen_vector(x, name: str, min_len: int = 1) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise ValueError(f"{name} must have length >= {min_len}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StudentParams:
    """Student parameters: unnormalized filter ``v`` and output weights ``a``.

    The effective filter is ``v / ||v||``; ``v`` itself must be nonzero.
    """

    v: np.ndarray
    a: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", _frozen_vector(self.v, "v"))
        object.__setattr__(self, "a", _frozen_vector(self.a, "a"))
        if float(np.linalg.norm(self.v)) == 0.0:
            raise ValueError("v must be nonzero")

    @property
    def p(self) -> int:
        return self.v.shape[0]

    @property
    def k(self) -> int:
        return self.a.shape[0]

    def filter(self) -> np.ndarray:
        """Normalized filter ``v / ||v||``."""
        return self.v / np.linalg.norm(self.v)


@dataclass(frozen=True)
class TeacherParams:
    """Teacher parameters ``(w*, a*)``; both must be nonzero."""

    w_star: np.ndarray
    a_star: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_star", _frozen_vector(self.w_star, "w_star"))
        object.__setattr__(self, "a_star", _frozen_vector(self.a_star, "a_star"))
        if float(np.linalg.norm(self.w_star)) == 0.0:
            raise ValueError("w_star must be nonzero")
        if float(np.linalg.norm(self.a_star)) == 0.0:
            raise ValueError("a_star must be nonzero")

    @property
    def p(self) -> int:
        return self.w_star.shape[0]

    @property
    def k(self) -> int:
        return self.a_star.shape[0]

    @property
    def w_norm(self) -> float:
        return float(np.linalg.norm(self.w_star))

    @property
    def a_norm(self) -> float:
        return float(np.linalg.norm(self.a_star))

    @property
    def a_sum(self) -> float:
        return float(np.sum(self.a_star))

    @property
    def signal_scale(self) -> float:
        """Natural magnitude of the recovered output weights, ``||a*|| ||w*||``."""
        return self.a_norm * self.w_norm


class StationaryClass(enum.Enum):
    """Outcome classification for a gradient-descent limit point."""

    GLOBAL = "global"
    SPURIOUS_LOCAL = "spurious_local"
    UNDETERMINED = "undetermined"


_TRAJECTORY_FIELDS = (
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


@dataclass(frozen=True)
class TrajectoryRecord:
    """State summary at one gradient-descent iteration.

    phi            angle between v and w*
    a_dot_astar    a . a*
    sum_a          1 . a
    v_norm         ||v||
    loss           population loss at this iterate
    grad_v_norm    ||d loss / d v||
    grad_a_norm    ||d loss / d a||
    dist_a         ||a - ||w*|| a*||
    sum_gap        |1 . a - ||w*|| 1 . a*|
    """

    iteration: int
    phi: float
    a_dot_astar: float
    sum_a: float
    v_norm: float
    loss: float
    grad_v_norm: float
    grad_a_norm: float
    dist_a: float
    sum_gap: float


class Trajectory(Sequence[TrajectoryRecord]):
    """Column-oriented sequence of :class:`TrajectoryRecord`.

    Stores one float64 array per field (read-only); indexing materializes
    records on demand. Built by the gradient-descent kernels, which record
    the state at iteration 0, every ``stride`` iterations, and the final
    iterate.
    """

    __slots__ = ("_columns",)

    def __init__(self, columns: dict) -> None:
        n = None
        cols = {}
        for name in _TRAJECTORY_FIELDS:
            arr = np.asarray(columns[name], dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"column {name} must be one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValueError("trajectory columns must share one length")
            arr = arr.copy()
            arr.setflags(write=False)
            cols[name] = arr
        self._columns = cols

    def __len__(self) -> int:
        return self._columns["iteration"].shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return Trajectory({k: v[index] for k, v in self._columns.items()})
        row = {k: v[index] for k, v in self._columns.items()}
        row["iteration"] = int(row["iteration"])
        return TrajectoryRecord(**row)

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        for i in range(len(self)):
            yield self[i]

    def column(self, name: str) -> np.ndarray:
        """Read-only column array for ``name`` (one of the record fields)."""
        return self._columns[name]

    @property
    def iterations(self) -> np.ndarray:
        return self._columns["iteration"]


@dataclass(frozen=True)
class AutoStep:
    """Step size derived from the initial iterate's convergence bound.

    ``scale`` multiplies the four-way minimum computed by
    :func:`convdyn.dynamics.step_size_auto`; must lie in (0, 1].
    """

    scale: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")


@dataclass(frozen=True)
class FixedStep:
    """Explicit constant step size ``eta > 0``."""

    eta: float

    def __post_init__(self) -> None:
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")


StepSizePolicy = Union[AutoStep, FixedStep]


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration for runs, grids, and the CLI.

    ``ratio`` is the teacher alignment ``(1 . a*)^2 / ||a*||^2`` in [0, k];
    it controls how much of ``a*`` lies along the all-ones direction.
    ``stride`` is the trajectory recording interval (1 = every iteration,
    required by the invariant monitors). ``stop_when_classified`` permits a
    run to stop once its iterate is certified inside half the classification
    tolerance of a stationary family (used by the success grid; the
    contract stopping rule is the gradient-norm threshold / iteration cap).
    """

    p: int
    k: int
    ratio: float
    w_star_norm: float = 1.0
    a_star_norm: float = 1.0
    step_size_policy: StepSizePolicy = field(default_factory=AutoStep)
    max_iters: int = 1_000_000
    grad_tol: float = 1e-10
    class_tol: float = 1e-2
    trials: int = 2000
    seed: int = 0
    stride: int = 1
    stop_when_classified: bool = False
    phase_cos_threshold: float = 0.5
    phase_signal_threshold: float = 0.25

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (0.0 <= self.ratio <= self.k):
            raise ValueError(f"ratio must be in [0, k], got {self.ratio}")
        if not (self.w_star_norm > 0.0 and math.isfinite(self.w_star_norm)):
            raise ValueError("w_star_norm must be positive and finite")
        if not (self.a_star_norm > 0.0 and math.isfinite(self.a_star_norm)):
            raise ValueError("a_star_norm must be positive and finite")
        if not isinstance(self.step_size_policy, (AutoStep, FixedStep)):
            raise ValueError("step_size_policy must be AutoStep or FixedStep")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.grad_tol > 0.0):
            raise ValueError("grad_tol must be positive")
        if not (0.0 < self.class_tol < math.pi / 2):
            raise ValueError("class_tol must be in (0, pi/2)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not (0.0 < self.phase_cos_threshold < 1.0):
            raise ValueError("phase_cos_threshold must be in (0, 1)")
        if not (0.0 < self.phase_signal_threshold < 1.0):
            raise ValueError("phase_signal_threshold must be in (0, 1)")


def angle(x: np.ndarray, y: np.ndarray) -> float:
    """Angle in [0, pi] between nonzero vectors ``x`` and ``y``.

    Equals arccos(x.y / (||x|| ||y||)), evaluated through the half-angle
    identity 2*atan2(||x_hat - y_hat||, ||x_hat + y_hat||) on the normalized
    vectors, which stays accurate to machine precision for nearly parallel
    and nearly antiparallel inputs where the arccos form loses ~sqrt(eps).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("angle expects two one-dimensional vectors of equal length")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0 or not (np.isfinite(nx) and np.isfinite(ny)):
        raise ValueError("angle expects nonzero finite vectors")
    xh = x / nx
    yh = y / ny
    return 2.0 * math.atan2(float(np.linalg.norm(xh - yh)), float(np.linalg.norm(xh + yh)))


def make_target_a(k: int, ratio: float, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Draw teacher output weights with prescribed norm and ones-alignment.

    Returns ``a*`` with ``||a*|| = norm`` and ``(1 . a*)^2 = ratio * norm^2``:

        a* = norm*sqrt(ratio/k) * (1/sqrt(k)) * ones + norm*sqrt(1 - ratio/k) * u,

    where ``u`` is a uniform random unit vector orthogonal to the all-ones
    vector. ``ratio`` must lie in [0, k]; ratio = k gives the fully aligned
    ``a* = (norm/sqrt(k)) * ones`` and ratio = 0 a zero-sum vector. For k = 1
    only ratio = 1 is feasible ((1 . a)^2 = ||a||^2 identically).

    The orthogonal complement direction is drawn even when its coefficient
    vanishes (ratio = k), so the generator stream advances identically for
    every ratio.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (0.0 <= ratio <= k):
        raise ValueError(f"ratio must be in [0, k], got {ratio}")
    if not (norm > 0.0 and math.isfinite(norm)):
        raise ValueError(f"norm must be positive and finite, got {norm}")
    if k == 1:
        if not math.isclose(ratio, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError("k = 1 forces ratio = 1: (1 . a)^2 = ||a||^2 for scalars")
        rng.standard_normal(1)  # keep the stream aligned with k > 1 draws
        return np.array([norm])

    while True:
        x = rng.standard_normal(k)
        u = x - x.mean()
        # second projection pass scrubs the O(eps) residue of the first
        u = u - u.mean()
        nu = float(np.linalg.norm(u))
        if nu > 1e-12 * max(1.0, float(np.linalg.norm(x))):
            break
    u /= nu

    along = norm * math.sqrt(ratio / k)
    across = norm * math.sqrt(max(0.0, 1.0 - ratio / k))
    return along / math.sqrt(k) * np.ones(k) + across * u
