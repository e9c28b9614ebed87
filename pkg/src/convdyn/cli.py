"""Command-line entry point.

Four subcommands:

* ``run``    — one recorded gradient-descent trajectory, written to disk.
* ``grid``   — the (k, ratio) success-probability sweep.
* ``verify`` — the statistical verification suite: closed-form identity
  checks, finite-difference gradient checks, and the Monte-Carlo oracle
  comparison against the analytic formulas.
* ``phases`` — phase-transition analysis of one trajectory.

Exit codes: 0 success (for ``run``: converged to the global minimum),
1 verification failure, 2 invalid configuration or usage, 3 converged to the
spurious family, 4 unclassified at the iteration cap.

Options may come from flags or from a flat ``key=value`` config file
(``--config``); flags win, unknown file keys are an error. ``CONVDYN_SEED``
supplies the seed when neither source does.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import montecarlo
from .analytic import grad_a, grad_v, population_loss
from .model import AutoStep, ExperimentConfig, FixedStep, StationaryClass, StudentParams, TeacherParams, angle
from .experiments import (
    sin2_decay_rates,
    success_grid,
    trajectory_experiment,
    write_grid_csv,
    write_grid_json,
    write_trajectory_csv,
    write_trajectory_json,
)

__all__ = ["main"]

_EXIT_BY_CLASS = {
    StationaryClass.GLOBAL: 0,
    StationaryClass.SPURIOUS_LOCAL: 3,
    StationaryClass.UNDETERMINED: 4,
}

# verification-suite shape and thresholds
_VERIFY_PAIRS = 10
_VERIFY_Z_MAX = 5.0
_FD_POINTS = 100
_FD_STEP = 1e-6
_FD_REL_MAX = 1e-5
_ORACLE_CONFIGS = 20
_ORACLE_SAMPLES = 100_000
_ORACLE_Z_MAX = 4.0


def _cast_int(text: str) -> int:
    return int(float(text))


def _cast_float(text: str) -> float:
    return float(text)


def _cast_str(text: str) -> str:
    return text


# every option a subcommand may accept: flag, value caster, help
_OPTIONS: Dict[str, Tuple[Callable[[str], object], str]] = {
    "p": (_cast_int, "patch dimension"),
    "k": (_cast_str, "number of patches (grid: comma-separated list)"),
    "ratio": (_cast_str, "target (1.a*)^2/||a*||^2 (grid: comma-separated list)"),
    "trials": (_cast_int, "trials per grid cell"),
    "seed": (_cast_int, "base RNG seed"),
    "eta": (_cast_float, "fixed step size (excludes --eta-scale)"),
    "eta_scale": (_cast_float, "auto step-size safety factor in (0, 1]"),
    "max_iters": (_cast_int, "iteration cap per run"),
    "grad_tol": (_cast_float, "relative gradient-norm stopping tolerance"),
    "class_tol": (_cast_float, "stationary-class tolerance (radians/relative)"),
    "init": (_cast_str, "initialization variant: good, bad, or raw"),
    "workers": (_cast_int, "worker processes for grid cells"),
    "out": (_cast_str, "output file path"),
    "format": (_cast_str, "output format: csv or json"),
    "stride": (_cast_int, "record every this many iterations"),
    "n_samples": (_cast_int, "Monte-Carlo samples per identity check"),
}

_SUBCOMMAND_OPTIONS = {
    "run": (
        "p", "k", "ratio", "trials", "seed", "eta", "eta_scale", "max_iters",
        "grad_tol", "class_tol", "init", "out", "format", "stride",
    ),
    "grid": (
        "p", "k", "ratio", "trials", "seed", "eta", "eta_scale", "max_iters",
        "grad_tol", "class_tol", "workers", "out", "format", "stride",
    ),
    "verify": ("p", "seed", "n_samples"),
    "phases": (
        "p", "k", "ratio", "trials", "seed", "eta", "eta_scale", "max_iters",
        "grad_tol", "class_tol", "init", "out", "format", "stride",
    ),
}

_RUN_DEFAULTS = {
    "p": 25, "k": "20", "ratio": "4", "trials": 1, "eta": None, "eta_scale": None,
    "max_iters": 1_000_000, "grad_tol": 1e-10, "class_tol": 1e-2, "init": "good",
    "out": "trajectory.csv", "format": "csv", "stride": 1,
}

_DEFAULTS: Dict[str, Dict[str, object]] = {
    "run": dict(_RUN_DEFAULTS),
    "phases": {**_RUN_DEFAULTS, "out": None},
    "grid": {
        "p": 6, "k": "25,36,49,64,81,100", "ratio": "0,1,4,9,16,25",
        "trials": 2000, "eta": None, "eta_scale": None, "max_iters": 1_000_000,
        "grad_tol": 1e-10, "class_tol": 1e-2, "workers": os.cpu_count() or 1,
        "out": "grid.csv", "format": "csv", "stride": 1,
    },
    "verify": {"p": 6, "n_samples": 1_000_000},
}


class _UsageError(Exception):
    """Invalid configuration; maps to exit code 2."""


def _fail(message: str) -> "_UsageError":
    return _UsageError(message)


def _load_config_file(path: str, known: Sequence[str]) -> Dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw_lines = handle.readlines()
    except OSError as exc:
        raise _fail(f"cannot read config file {path}: {exc}")
    values: Dict[str, str] = {}
    for lineno, line in enumerate(raw_lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise _fail(f"{path}:{lineno}: expected key=value, got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip().replace("-", "_")
        if key not in known:
            raise _fail(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _resolve_options(args: argparse.Namespace, subcommand: str) -> Dict[str, object]:
    """Merge flag values, config-file values, env seed, and defaults."""
    known = _SUBCOMMAND_OPTIONS[subcommand]
    file_values = (
        _load_config_file(args.config, known) if getattr(args, "config", None) else {}
    )
    resolved: Dict[str, object] = {}
    for name in known:
        caster, _ = _OPTIONS[name]
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            resolved[name] = flag_value
        elif name in file_values:
            try:
                resolved[name] = caster(file_values[name])
            except ValueError:
                raise _fail(f"config key {name}: cannot parse {file_values[name]!r}")
        else:
            resolved[name] = _DEFAULTS[subcommand].get(name)
    if resolved.get("seed") is None:
        env_seed = os.environ.get("CONVDYN_SEED")
        if env_seed is not None:
            try:
                resolved["seed"] = int(env_seed)
            except ValueError:
                raise _fail(f"CONVDYN_SEED is not an integer: {env_seed!r}")
        else:
            resolved["seed"] = 0
    if resolved.get("eta") is not None and resolved.get("eta_scale") is not None:
        raise _fail("--eta and --eta-scale are mutually exclusive")
    if "format" in resolved and resolved["format"] not in ("csv", "json"):
        raise _fail(f"format must be csv or json, got {resolved['format']!r}")
    if "init" in resolved and resolved["init"] not in ("good", "bad", "raw"):
        raise _fail(f"init must be good, bad, or raw, got {resolved['init']!r}")
    return resolved


def _parse_number_list(text: str, caster: Callable[[str], object], label: str) -> List:
    try:
        return [caster(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError:
        raise _fail(f"cannot parse {label} list from {text!r}")


def _build_config(opts: Dict[str, object], k: int, ratio: float) -> ExperimentConfig:
    try:
        if opts.get("eta") is not None:
            policy = FixedStep(eta=float(opts["eta"]))
        else:
            policy = AutoStep(scale=float(opts.get("eta_scale") or 0.5))
        return ExperimentConfig(
            p=int(opts["p"]),
            k=k,
            ratio=ratio,
            step_size_policy=policy,
            max_iters=int(opts["max_iters"]),
            grad_tol=float(opts["grad_tol"]),
            class_tol=float(opts["class_tol"]),
            trials=int(opts["trials"]),
            seed=int(opts["seed"]),
            stride=int(opts["stride"]),
        )
    except ValueError as exc:
        raise _fail(str(exc))


def _single_k_ratio(opts: Dict[str, object]) -> Tuple[int, float]:
    ks = _parse_number_list(opts["k"], _cast_int, "k")
    ratios = _parse_number_list(opts["ratio"], _cast_float, "ratio")
    if len(ks) != 1 or len(ratios) != 1:
        raise _fail("this subcommand takes a single --k and --ratio")
    return ks[0], ratios[0]


def _cmd_run(args: argparse.Namespace) -> int:
    opts = _resolve_options(args, "run")
    k, ratio = _single_k_ratio(opts)
    cfg = _build_config(opts, k, ratio)
    try:
        dump = trajectory_experiment(cfg, init=str(opts["init"]))
    except ValueError as exc:
        raise _fail(str(exc))
    out = str(opts["out"])
    if opts["format"] == "json":
        write_trajectory_json(dump, out)
    else:
        write_trajectory_csv(dump, out)
    meta = dump.meta
    print(
        f"class={dump.stationary_class.value} iters={meta['iters_run']} "
        f"stop={meta['stop_reason']} final_loss={float(meta['final_loss'])!r} out={out}"
    )
    return _EXIT_BY_CLASS[dump.stationary_class]


def _cmd_grid(args: argparse.Namespace) -> int:
    opts = _resolve_options(args, "grid")
    ks = _parse_number_list(opts["k"], _cast_int, "k")
    ratios = _parse_number_list(opts["ratio"], _cast_float, "ratio")
    if not ks or not ratios:
        raise _fail("grid needs at least one k and one ratio")
    for k in ks:
        for ratio in ratios:
            if ratio > k:
                raise _fail(f"cell (k={k}, ratio={ratio}) is infeasible: ratio must be <= k")
    cfg = _build_config(opts, ks[0], ratios[0])
    result = success_grid(cfg, ks, ratios, workers=int(opts["workers"]))
    out = str(opts["out"])
    if opts["format"] == "json":
        write_grid_json(result, out)
    else:
        write_grid_csv(result, out)
    for row in result.rows:
        print(
            f"k={row.k} ratio={row.ratio!r} probability={row.success_probability!r} "
            f"undetermined={row.undetermined_count}"
        )
    print(f"out={out}")
    return 0


def _cmd_phases(args: argparse.Namespace) -> int:
    opts = _resolve_options(args, "phases")
    k, ratio = _single_k_ratio(opts)
    cfg = _build_config(opts, k, ratio)
    try:
        dump = trajectory_experiment(cfg, init=str(opts["init"]))
    except ValueError as exc:
        raise _fail(str(exc))
    if opts.get("out"):
        out = str(opts["out"])
        if opts["format"] == "json":
            write_trajectory_json(dump, out)
        else:
            write_trajectory_csv(dump, out)
    print(f"class={dump.stationary_class.value}")
    if dump.phase1_end is None:
        print("no phase transition")
        return 0
    idx = dump.phase1_end
    pre, post = sin2_decay_rates(dump.records, idx)
    iterations = dump.records.column("iteration")
    at = int(np.searchsorted(iterations, idx))
    cos_phi = math.cos(dump.records.column("phi")[at])
    signal = dump.records.column("a_dot_astar")[at] * cfg.w_star_norm
    signal_fraction = signal / (cfg.a_star_norm**2 * cfg.w_star_norm**2)
    print(f"phase1_end={idx}")
    print(f"cos_phi_at_transition={cos_phi!r}")
    print(f"signal_fraction_at_transition={float(signal_fraction)!r}")
    print(f"pre_rate={pre!r}")
    print(f"post_rate={post!r}")
    if pre and post and pre > 0.0:
        print(f"rate_ratio={post / pre!r}")
    return 0


def _verify_pairs(rng: np.random.Generator, p: int, count: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for _ in range(count):
        w = rng.standard_normal(p)
        w_star = rng.standard_normal(p) * math.exp(rng.uniform(-1.0, 1.0))
        pairs.append((w, w_star))
    return pairs


def _random_point(
    rng: np.random.Generator, phi_margin: float = 0.05
) -> Tuple[StudentParams, TeacherParams]:
    """Random (student, teacher) with phi away from 0/pi and a . a* away
    from zero, so relative gradient errors are well-conditioned."""
    while True:
        p = int(rng.integers(2, 9))
        k = int(rng.integers(1, 11))
        v = rng.standard_normal(p)
        w_star = rng.standard_normal(p) * math.exp(rng.uniform(-0.5, 0.5))
        a = rng.standard_normal(k)
        a_star = rng.standard_normal(k)
        if np.linalg.norm(v) < 1e-6 or np.linalg.norm(w_star) < 1e-6:
            continue
        if np.linalg.norm(a_star) < 1e-6:
            continue
        phi = angle(v, w_star)
        if not (phi_margin < phi < math.pi - phi_margin):
            continue
        d = float(a @ a_star)
        if abs(d) < 0.1 * np.linalg.norm(a) * np.linalg.norm(a_star):
            continue
        return StudentParams(v=v, a=a), TeacherParams(w_star=w_star, a_star=a_star)


def _fd_gradients(
    s: StudentParams, t: TeacherParams, h: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the population loss in v and a."""

    def loss_at(v: np.ndarray, a: np.ndarray) -> float:
        return population_loss(StudentParams(v=v, a=a), t)

    fd_v = np.empty(s.p)
    for i in range(s.p):
        step = np.zeros(s.p)
        step[i] = h
        fd_v[i] = (loss_at(s.v + step, s.a) - loss_at(s.v - step, s.a)) / (2.0 * h)
    fd_a = np.empty(s.k)
    for j in range(s.k):
        step = np.zeros(s.k)
        step[j] = h
        fd_a[j] = (loss_at(s.v, s.a + step) - loss_at(s.v, s.a - step)) / (2.0 * h)
    return fd_v, fd_a


def _rel_error(approx: np.ndarray, exact: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(exact)), float(np.linalg.norm(approx)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / denom


def _check_identities(rng: np.random.Generator, p: int, n: int) -> Tuple[bool, List[str]]:
    lines = []
    worst = 0.0
    ok = True
    for pair_index, (w, w_star) in enumerate(_verify_pairs(rng, p, _VERIFY_PAIRS)):
        for identity_id in (1, 2, 3, 4):
            report = montecarlo.check_identity(identity_id, w, w_star, n, rng)
            worst = max(worst, report.max_abs_z_score)
            if report.max_abs_z_score > _VERIFY_Z_MAX:
                ok = False
                lines.append(
                    f"FAIL identity {identity_id} pair {pair_index}: "
                    f"max|z|={report.max_abs_z_score:.2f} > {_VERIFY_Z_MAX}"
                )
    lines.append(
        f"identities: {_VERIFY_PAIRS * 4} checks at n={n}, "
        f"max|z|={worst:.2f} {'ok' if ok else 'FAILED'}"
    )
    return ok, lines


def _check_finite_differences(rng: np.random.Generator) -> Tuple[bool, List[str]]:
    lines = []
    worst = 0.0
    ok = True
    for index in range(_FD_POINTS):
        s, t = _random_point(rng)
        fd_v, fd_a = _fd_gradients(s, t, _FD_STEP)
        err_v = _rel_error(fd_v, grad_v(s, t))
        err_a = _rel_error(fd_a, grad_a(s, t))
        worst = max(worst, err_v, err_a)
        if err_v > _FD_REL_MAX or err_a > _FD_REL_MAX:
            ok = False
            lines.append(
                f"FAIL finite-difference point {index}: "
                f"rel err v={err_v:.2e} a={err_a:.2e} > {_FD_REL_MAX}"
            )
    lines.append(
        f"finite differences: {_FD_POINTS} points, "
        f"max rel err={worst:.2e} {'ok' if ok else 'FAILED'}"
    )
    return ok, lines


def _oracle_z_scores(
    s: StudentParams, t: TeacherParams, n: int, rng: np.random.Generator
) -> float:
    """Largest |empirical - analytic| / standard error over the loss and
    every gradient coordinate, with standard errors from the same batch."""
    batch = montecarlo.sample_patches(n, t.k, t.p, rng)
    v_norm = float(np.linalg.norm(s.v))
    w = s.v / v_norm
    pre = batch.data @ w
    act_s = np.maximum(pre, 0.0)
    act_t = np.maximum(batch.data @ t.w_star, 0.0)
    residual = act_s @ s.a - act_t @ t.a_star

    per_loss = 0.5 * residual**2
    per_ga = act_s * residual[:, None]
    per_gw = np.einsum("nk,nkp->np", (pre > 0.0) * s.a * residual[:, None], batch.data)
    per_gv = (per_gw - np.outer(per_gw @ w, w)) / v_norm

    worst = 0.0
    for sample, exact in (
        (per_loss[:, None], np.array([population_loss(s, t)])),
        (per_gv, grad_v(s, t)),
        (per_ga, grad_a(s, t)),
    ):
        mean = sample.mean(axis=0)
        std_err = sample.std(axis=0, ddof=1) / math.sqrt(n)
        diff = np.abs(mean - exact)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(std_err > 0.0, diff / std_err, np.where(diff > 0.0, np.inf, 0.0))
        worst = max(worst, float(np.max(z)))
    return worst


def _check_oracle(rng: np.random.Generator) -> Tuple[bool, List[str]]:
    lines = []
    worst = 0.0
    ok = True
    for index in range(_ORACLE_CONFIGS):
        s, t = _random_point(rng)
        z = _oracle_z_scores(s, t, _ORACLE_SAMPLES, rng)
        worst = max(worst, z)
        if z > _ORACLE_Z_MAX:
            ok = False
            lines.append(f"FAIL oracle config {index}: max|z|={z:.2f} > {_ORACLE_Z_MAX}")
    lines.append(
        f"oracle: {_ORACLE_CONFIGS} configs at n={_ORACLE_SAMPLES}, "
        f"max|z|={worst:.2f} {'ok' if ok else 'FAILED'}"
    )
    return ok, lines


def _cmd_verify(args: argparse.Namespace) -> int:
    opts = _resolve_options(args, "verify")
    rng = np.random.default_rng(int(opts["seed"]))
    all_ok = True
    for check in (
        lambda: _check_identities(rng, int(opts["p"]), int(opts["n_samples"])),
        lambda: _check_finite_differences(rng),
        lambda: _check_oracle(rng),
    ):
        ok, lines = check()
        all_ok = all_ok and ok
        for line in lines:
            print(line)
    print("PASS" if all_ok else "FAIL")
    return 0 if all_ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convdyn",
        description="Population gradient-descent dynamics for a one-hidden-layer CNN",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    handlers = {
        "run": _cmd_run,
        "grid": _cmd_grid,
        "verify": _cmd_verify,
        "phases": _cmd_phases,
    }
    descriptions = {
        "run": "run one trajectory and write it to disk",
        "grid": "sweep the (k, ratio) success-probability grid",
        "verify": "run the statistical verification suite",
        "phases": "analyze the two-phase structure of one trajectory",
    }
    for name, handler in handlers.items():
        sub = subparsers.add_parser(name, help=descriptions[name])
        sub.add_argument("--config", default=None, help="flat key=value config file")
        for option in _SUBCOMMAND_OPTIONS[name]:
            _, help_text = _OPTIONS[option]
            flag = "--" + option.replace("_", "-")
            sub.add_argument(flag, default=None, help=help_text)
        sub.set_defaults(handler=handler)
    return parser


def _coerce_flags(args: argparse.Namespace, subcommand: str) -> None:
    """Cast raw flag strings with each option's caster, in place."""
    for name in _SUBCOMMAND_OPTIONS[subcommand]:
        value = getattr(args, name, None)
        if value is None:
            continue
        caster, _ = _OPTIONS[name]
        try:
            setattr(args, name, caster(value))
        except ValueError:
            raise _fail(f"cannot parse --{name.replace('_', '-')} value {value!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _coerce_flags(args, args.subcommand)
        return args.handler(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
