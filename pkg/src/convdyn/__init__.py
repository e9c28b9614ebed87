"""Exact population-loss gradient-descent dynamics for a one-hidden-layer
non-overlapping CNN with ReLU activation and weight normalization.

The input is k non-overlapping standard Gaussian patches of dimension p; the
network computes sum_i a_i relu(Z_i . v / ||v||). Against a fixed teacher
(w*, a*) the population squared-error loss and its gradients have closed
forms, so gradient descent on the expected loss can be simulated exactly.
The package provides those closed forms (`analytic`), Monte-Carlo
verification of every formula (`montecarlo`), the descent loop with
invariant monitors and stationary-point classification (`dynamics`), the
sign-variant initialization scheme (`init`), and reproducible experiment
drivers with CSV/JSON output (`experiments`, `cli`).

A compiled extension accelerates the inner descent loop when available; the
pure NumPy implementation is used otherwise. Set ``CONVDYN_BACKEND`` to
``compiled`` or ``python`` to force one, and see
:func:`convdyn.backend_name` for the active choice.
"""

from ._backend import backend_name
from .analytic import (
    GramPair,
    g_phi,
    grad_a,
    grad_v,
    gram_matrices,
    population_loss,
    population_loss_gram,
    spurious_a,
)
from .dynamics import (
    MONITOR_NAMES,
    RunResult,
    StepSizeBound,
    classify_stationary,
    detect_phases,
    fixed_step_size,
    gd_step,
    monitor_invariants,
    run,
    step_size_auto,
)
from .experiments import (
    GridCell,
    GridResult,
    TrajectoryDump,
    sin2_decay_rates,
    success_grid,
    trajectory_experiment,
    write_grid_csv,
    write_grid_json,
    write_trajectory_csv,
    write_trajectory_json,
)
from .init import (
    SignVariants,
    ball_radius,
    sample_init,
    select_bad_variant,
    select_good_variant,
    sign_variants,
)
from .model import (
    AutoStep,
    ExperimentConfig,
    FixedStep,
    StationaryClass,
    StudentParams,
    TeacherParams,
    Trajectory,
    TrajectoryRecord,
    angle,
    make_target_a,
)
from .montecarlo import (
    IdentityCheckReport,
    PatchBatch,
    check_identity,
    empirical_grad,
    empirical_loss,
    sample_patches,
)

__version__ = "0.1.0"

__all__ = [
    "AutoStep",
    "ExperimentConfig",
    "FixedStep",
    "GramPair",
    "GridCell",
    "GridResult",
    "IdentityCheckReport",
    "PatchBatch",
    "MONITOR_NAMES",
    "RunResult",
    "SignVariants",
    "StationaryClass",
    "StepSizeBound",
    "StudentParams",
    "TeacherParams",
    "Trajectory",
    "TrajectoryDump",
    "sin2_decay_rates",
    "TrajectoryRecord",
    "angle",
    "backend_name",
    "ball_radius",
    "check_identity",
    "classify_stationary",
    "detect_phases",
    "empirical_grad",
    "empirical_loss",
    "fixed_step_size",
    "g_phi",
    "gd_step",
    "grad_a",
    "grad_v",
    "gram_matrices",
    "make_target_a",
    "monitor_invariants",
    "population_loss",
    "population_loss_gram",
    "run",
    "sample_init",
    "sample_patches",
    "select_bad_variant",
    "select_good_variant",
    "sign_variants",
    "spurious_a",
    "step_size_auto",
    "success_grid",
    "trajectory_experiment",
    "write_grid_csv",
    "write_grid_json",
    "write_trajectory_csv",
    "write_trajectory_json",
    "__version__",
]
