"""Experiment drivers: success-probability grids and trajectory studies.

Two reproducible experiment families:

* :func:`success_grid` sweeps (k, ratio) cells, draws one teacher per cell
  and many raw random initializations, runs each to a classified stationary
  point, and reports the fraction reaching the global minimum.
* :func:`trajectory_experiment` runs a single initialization (good-basin,
  bad-basin, or raw) at full recording resolution for convergence-curve and
  phase-structure analysis.

Every random draw derives from ``(seed, k, ratio-bits, stream, trial)`` via
``SeedSequence`` spawn keys, so results are independent of scheduling,
worker count, and backend. Writers emit CSV (with ``#`` meta lines) and JSON
with a stable field order, making identical configurations byte-identical
on disk.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import RunResult, fixed_step_size, run, step_size_auto
from .init import sample_init, select_bad_variant, select_good_variant, sign_variants
from .model import (
    AutoStep,
    ExperimentConfig,
    FixedStep,
    StationaryClass,
    StudentParams,
    TeacherParams,
    Trajectory,
    make_target_a,
)

__all__ = [
    "GridCell",
    "GridResult",
    "TrajectoryDump",
    "success_grid",
    "trajectory_experiment",
    "sin2_decay_rates",
    "config_to_dict",
    "write_grid_csv",
    "write_grid_json",
    "write_trajectory_csv",
    "write_trajectory_json",
    "INIT_MODES",
]

GRID_SCHEMA = "grid.v1"
TRAJECTORY_SCHEMA = "trajectory.v1"

INIT_MODES = ("good", "bad", "raw")

#: sin^2(phi) values below this are floating-point floor noise and excluded
#: from decay-rate estimates
_SIN2_FLOOR = 1e-22


@dataclass(frozen=True)
class GridCell:
    """One (k, ratio) cell of a success grid.

    ``success_probability`` is exactly ``successes / trials``; ``mean_iters``
    averages iterations over all trials of the cell, and trials that hit the
    iteration cap without classifying are counted in ``undetermined_count``
    (they are failures for the success count).
    """

    k: int
    ratio: float
    trials: int
    successes: int
    success_probability: float
    mean_iters: float
    undetermined_count: int


@dataclass(frozen=True)
class GridResult:
    """All grid cells plus the fully resolved provenance metadata."""

    rows: Tuple[GridCell, ...]
    meta: Dict[str, object]


@dataclass(frozen=True)
class TrajectoryDump:
    """One recorded run: the trajectory, phase index, class, and metadata."""

    records: Trajectory
    phase1_end: Optional[int]
    stationary_class: StationaryClass
    meta: Dict[str, object]


def _ratio_words(ratio: float) -> Tuple[int, int]:
    """The ratio's IEEE-754 bits as two 32-bit words, for spawn keys."""
    bits = int(np.float64(ratio).view(np.uint64))
    return bits & 0xFFFFFFFF, bits >> 32


def _stream_rng(seed: int, k: int, ratio: float, stream: int, *extra: int) -> np.random.Generator:
    lo, hi = _ratio_words(ratio)
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(k, lo, hi, stream, *extra))
    )


_TEACHER_STREAM = 0
_TRIAL_STREAM = 1


def _make_teacher(cfg: ExperimentConfig, k: int, ratio: float) -> TeacherParams:
    """Cell teacher: w* along the first axis, a* drawn for the cell's ratio."""
    rng = _stream_rng(cfg.seed, k, ratio, _TEACHER_STREAM)
    w_star = np.zeros(cfg.p)
    w_star[0] = cfg.w_star_norm
    a_star = make_target_a(k, ratio, cfg.a_star_norm, rng)
    return TeacherParams(w_star=w_star, a_star=a_star)


def _resolve_eta(
    s0: StudentParams, t: TeacherParams, policy: Union[AutoStep, FixedStep]
) -> float:
    """Step size for one trial; auto policy falls back to the fixed bound
    when the draw violates its alignment preconditions."""
    if isinstance(policy, FixedStep):
        return policy.eta
    try:
        return step_size_auto(s0, t, policy.scale).eta
    except ValueError:
        return fixed_step_size(t, policy.scale)


def _cell_eta(t: TeacherParams, policy: Union[AutoStep, FixedStep]) -> float:
    """Uniform step size for a grid cell.

    Grid cells use one initialization-independent step size for every trial
    (the contraction-limit bound of :func:`~convdyn.dynamics.fixed_step_size`
    at the policy's scale) so that per-trial convergence speed, not the
    probability estimate, is the only thing the draw affects. An explicit
    Fixed policy overrides it.
    """
    if isinstance(policy, FixedStep):
        return policy.eta
    return fixed_step_size(t, policy.scale)


def _grid_cell(cfg: ExperimentConfig, k: int, ratio: float) -> GridCell:
    t = _make_teacher(cfg, k, ratio)
    eta = _cell_eta(t, cfg.step_size_policy)
    run_cfg = dataclasses.replace(
        cfg,
        k=k,
        ratio=ratio,
        step_size_policy=FixedStep(eta),
        stride=cfg.max_iters,
        stop_when_classified=True,
    )
    successes = 0
    undetermined = 0
    total_iters = 0
    for trial in range(cfg.trials):
        rng = _stream_rng(cfg.seed, k, ratio, _TRIAL_STREAM, trial)
        s0 = sample_init(cfg.p, k, t, rng)
        result = run(s0, t, run_cfg)
        total_iters += result.iters_run
        if result.stationary_class is StationaryClass.GLOBAL:
            successes += 1
        elif result.stationary_class is StationaryClass.UNDETERMINED:
            undetermined += 1
    return GridCell(
        k=k,
        ratio=float(ratio),
        trials=cfg.trials,
        successes=successes,
        success_probability=successes / cfg.trials,
        mean_iters=total_iters / cfg.trials,
        undetermined_count=undetermined,
    )


def _grid_cell_task(args: Tuple[ExperimentConfig, int, float]) -> GridCell:
    return _grid_cell(*args)


def success_grid(
    cfg: ExperimentConfig,
    k_values: Sequence[int],
    ratio_values: Sequence[float],
    workers: int = 1,
) -> GridResult:
    """Success probability of raw random initialization over a (k, ratio) grid.

    For each cell: one teacher (a* redrawn per cell at the cell's ratio),
    ``cfg.trials`` raw initializations with no sign selection, each run to a
    classified stationary point. A trial succeeds when it reaches the global
    minimum. Cells force endpoint-only recording and certified early
    stopping; ``cfg.p``, tolerances, the iteration cap, and the seed apply as
    given. Rows are ordered k-major, ratio-minor. Results are identical for
    any ``workers``.
    """
    if not k_values or not ratio_values:
        raise ValueError("k_values and ratio_values must be nonempty")
    for k in k_values:
        for ratio in ratio_values:
            if ratio > k:
                raise ValueError(
                    f"cell (k={k}, ratio={ratio}) is infeasible: ratio must be <= k"
                )
    cells = [(cfg, int(k), float(ratio)) for k in k_values for ratio in ratio_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(_grid_cell_task, cells, chunksize=1))
    else:
        rows = tuple(_grid_cell_task(args) for args in cells)
    meta: Dict[str, object] = {
        "schema": GRID_SCHEMA,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "k_values": [int(k) for k in k_values],
        "ratio_values": [float(r) for r in ratio_values],
        "step_size_protocol": (
            "fixed" if isinstance(cfg.step_size_policy, FixedStep) else "cell_fixed"
        ),
        "eta_by_cell": {
            f"{row.k}:{row.ratio}": _cell_eta(
                _make_teacher(cfg, row.k, row.ratio), cfg.step_size_policy
            )
            for row in rows
        },
    }
    meta["config_hash"] = _hash_meta(meta)
    return GridResult(rows=rows, meta=meta)


def trajectory_experiment(cfg: ExperimentConfig, init: str = "good") -> TrajectoryDump:
    """One fully recorded run from a selected initialization.

    ``init`` picks among the four sign variants of a single random draw:
    ``good`` selects the global-basin variant, ``bad`` the spurious-basin
    variant (raising if the draw admits none), ``raw`` uses the draw as
    sampled. The auto step-size policy falls back to the fixed bound when the
    chosen variant violates its preconditions (always the case for ``bad``).
    """
    if init not in INIT_MODES:
        raise ValueError(f"init must be one of {INIT_MODES}, got {init!r}")
    t = _make_teacher(cfg, cfg.k, cfg.ratio)
    rng = _stream_rng(cfg.seed, cfg.k, cfg.ratio, _TRIAL_STREAM, 0)
    raw = sample_init(cfg.p, cfg.k, t, rng)
    if init == "raw":
        s0: Optional[StudentParams] = raw
    elif init == "good":
        s0 = select_good_variant(sign_variants(raw), t)
    else:
        s0 = select_bad_variant(sign_variants(raw), t)
    if s0 is None:
        raise ValueError(
            f"no sign variant of the seed-{cfg.seed} draw satisfies the "
            f"{init}-basin conditions; try another seed"
        )
    eta = _resolve_eta(s0, t, cfg.step_size_policy)
    result = run(s0, t, dataclasses.replace(cfg, step_size_policy=FixedStep(eta)))
    meta = _trajectory_meta(cfg, init, eta, result)
    return TrajectoryDump(
        records=result.trajectory,
        phase1_end=result.phase1_end,
        stationary_class=result.stationary_class,
        meta=meta,
    )


def _trajectory_meta(
    cfg: ExperimentConfig, init: str, eta: float, result: RunResult
) -> Dict[str, object]:
    final = result.trajectory[-1]
    meta: Dict[str, object] = {
        "schema": TRAJECTORY_SCHEMA,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "init": init,
        "eta": eta,
        "iters_run": result.iters_run,
        "stop_reason": result.stop_reason,
        "class": result.stationary_class.value,
        "phase1_end": result.phase1_end,
        "invariant_violations": len(result.invariant_violations),
        "final_phi": final.phi,
        "final_loss": final.loss,
        "final_dist_a": final.dist_a,
    }
    meta["config_hash"] = _hash_meta(meta)
    return meta


def sin2_decay_rates(
    trajectory: Trajectory, split_iteration: int
) -> Tuple[Optional[float], Optional[float]]:
    """Median per-iteration geometric decay rate of sin^2(phi), before and
    at-or-after ``split_iteration``.

    The rate between consecutive records is -ln(sin^2 next / sin^2 prev)
    divided by the iteration gap; pairs whose sin^2 has fallen below the
    floating-point floor are excluded. Either median is None when its window
    holds no usable pair.
    """
    it = trajectory.column("iteration")
    sin2 = np.sin(trajectory.column("phi")) ** 2
    usable = (sin2[:-1] > _SIN2_FLOOR) & (sin2[1:] > _SIN2_FLOOR)
    with np.errstate(divide="ignore"):
        rates = -np.log(sin2[1:] / sin2[:-1]) / np.diff(it)
    pre = rates[usable & (it[1:] <= split_iteration)]
    post = rates[usable & (it[:-1] >= split_iteration)]
    return (
        float(np.median(pre)) if pre.size else None,
        float(np.median(post)) if post.size else None,
    )


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, object]:
    """JSON-ready echo of every config field."""
    policy = cfg.step_size_policy
    if isinstance(policy, FixedStep):
        policy_dict: Dict[str, object] = {"kind": "fixed", "eta": policy.eta}
    else:
        policy_dict = {"kind": "auto", "scale": policy.scale}
    out = dataclasses.asdict(cfg)
    out["step_size_policy"] = policy_dict
    return out


def _hash_meta(meta: Dict[str, object]) -> str:
    payload = json.dumps(meta, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def _meta_lines(meta: Dict[str, object]) -> List[str]:
    return [
        f"# {key}={json.dumps(meta[key], sort_keys=True)}" for key in sorted(meta)
    ]


def write_grid_csv(result: GridResult, path: str) -> None:
    """Grid rows as CSV, one line per cell, metadata in leading # lines."""
    lines = _meta_lines(result.meta)
    lines.append("k,ratio,trials,successes,probability,mean_iters,undetermined_count")
    for row in result.rows:
        lines.append(
            f"{row.k},{row.ratio!r},{row.trials},{row.successes},"
            f"{row.success_probability!r},{row.mean_iters!r},{row.undetermined_count}"
        )
    _write_text(path, lines)


def write_grid_json(result: GridResult, path: str) -> None:
    payload = {
        "meta": result.meta,
        "rows": [dataclasses.asdict(row) for row in result.rows],
    }
    _write_json(path, payload)


_TRAJECTORY_CSV_COLUMNS = (
    "iter",
    "phi",
    "sin2phi",
    "a_dot_astar",
    "sum_a",
    "v_norm",
    "loss",
    "dist_a",
    "sum_gap",
)


def _trajectory_table(dump: TrajectoryDump) -> Dict[str, np.ndarray]:
    records = dump.records
    table = {"iter": records.column("iteration").astype(int)}
    for name in ("phi", "a_dot_astar", "sum_a", "v_norm", "loss", "dist_a", "sum_gap"):
        table[name] = records.column(name)
    table["sin2phi"] = np.sin(records.column("phi")) ** 2
    return table


def write_trajectory_csv(dump: TrajectoryDump, path: str) -> None:
    """Trajectory records as CSV, one line per record, # meta lines first."""
    table = _trajectory_table(dump)
    lines = _meta_lines(dump.meta)
    lines.append(",".join(_TRAJECTORY_CSV_COLUMNS))
    for i in range(len(dump.records)):
        lines.append(
            ",".join(
                str(table[name][i])
                if name == "iter"
                else repr(float(table[name][i]))
                for name in _TRAJECTORY_CSV_COLUMNS
            )
        )
    _write_text(path, lines)


def write_trajectory_json(dump: TrajectoryDump, path: str) -> None:
    table = _trajectory_table(dump)
    payload = {
        "meta": dump.meta,
        "phase1_end": dump.phase1_end,
        "class": dump.stationary_class.value,
        "records": {
            name: [int(x) for x in table[name]]
            if name == "iter"
            else [float(x) for x in table[name]]
            for name in _TRAJECTORY_CSV_COLUMNS
        },
    }
    _write_json(path, payload)


def _write_text(path: str, lines: List[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _write_json(path: str, payload: Dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")
