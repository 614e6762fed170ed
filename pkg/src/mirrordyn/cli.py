"""Command-line entry point: ``mirrordyn {run,mc,complexity,validate}``.

Exit codes: 0 success, 1 a verdict or validation check failed, 2 a
configuration or usage error, 3 a domain error raised by the numerics.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import sample_complexity, tail_experiment_convex, tail_experiment_nonconvex
from .config import RunConfig, builtin_config
from .errors import ConfigError, MirrordynError
from .geometry import bregman_divergence, mirror_map
from .optimizer import StepSchedule, run_smd, write_trajectory_csv
from .problems import ProblemSpec, problem_from_params
from .validate import format_table, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


# -- assembling objects from a config ---------------------------------------------

def build_problem(cfg: RunConfig) -> ProblemSpec:
    return problem_from_params(cfg.problem_params())


def build_schedule(cfg: RunConfig) -> StepSchedule:
    sc = cfg.schedule
    if sc.kind == "invsqrt":
        return StepSchedule.inv_sqrt(sc.a)
    if sc.kind == "constant":
        return StepSchedule.constant(sc.a)
    try:
        return StepSchedule.custom(sc.values)
    except ValueError as exc:
        raise ConfigError(f"schedule.values: {exc}") from None


def _schedule_scale(cfg: RunConfig) -> float:
    return cfg.schedule.a if cfg.schedule.kind == "invsqrt" else 1.0


def _load(args) -> RunConfig:
    if getattr(args, "config", None) is None:
        raise ConfigError("--config PATH is required")
    cfg = RunConfig.load(args.config)
    return cfg.with_overrides(args.set or (), seed=args.seed)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    if not out.is_absolute() and not args.out and cfg.base_dir is not None:
        out = Path(cfg.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


# -- subcommands -----------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args)
    prob = build_problem(cfg)
    sched = build_schedule(cfg)
    mmap = mirror_map(cfg.geometry.map)
    t0 = time.perf_counter()
    traj = run_smd(prob, mmap, sched, cfg.run.n_iters, seed=cfg.run.base_seed,
                   stride=cfg.run.checkpoint_stride, order=cfg.run.order, fingerprint=cfg.fingerprint)
    wall = time.perf_counter() - t0
    out = _out_dir(args, cfg)
    formats = cfg.output.formats
    if "csv" in formats:
        write_trajectory_csv(traj, out / "trajectory.csv")
    summary = {
        "config_fingerprint": cfg.fingerprint,
        "seed": cfg.run.base_seed,
        "n_iters": cfg.run.n_iters,
        "rows": int(len(traj.recorded_n)),
        "final_f_gap": _finite_or_none(traj.f_gap[-1]),
        "final_gap": _finite_or_none(traj.gap[-1]),
        "min_gap": _finite_or_none(traj.gap_running_min[-1]),
        "min_coordinate": traj.min_coordinate,
        "max_step_ratio": traj.max_step_ratio,
        "wall_time_s": wall,
    }
    if "json" in formats:
        _dump_json(summary, out / "summary.json")
    print(f"run: {cfg.run.n_iters} iterations, final f-gap {summary['final_f_gap']}, "
          f"final Gap {summary['final_gap']}, wrote {out}")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = _load(args)
    prob = build_problem(cfg)
    sched = build_schedule(cfg)
    mmap = mirror_map(cfg.geometry.map)
    N, M = cfg.run.n_iters, cfg.run.n_runs
    eps = cfg.experiment.eps_grid
    t0 = time.perf_counter()
    if prob.x_star is not None and cfg.problem.kind != "nonconvex":
        estimates = {"convex": tail_experiment_convex(prob, mmap, sched, N, M, eps, cfg.run.base_seed,
                                                      jobs=args.jobs, order=cfg.run.order)}
    else:
        estimates = tail_experiment_nonconvex(prob, mmap, sched, N, M, eps, cfg.run.base_seed,
                                              jobs=args.jobs, order=cfg.run.order)
    wall = time.perf_counter() - t0
    out = _out_dir(args, cfg)
    verdicts = {}
    for kind, est in estimates.items():
        est.fingerprint = cfg.fingerprint
        if "csv" in cfg.output.formats:
            est.write_csv(out / f"tails_{kind}.csv")
        verdicts[kind] = est.summary()
    overall = "pass" if all(v["verdict"] == "pass" for v in verdicts.values()) else "fail"
    if "json" in cfg.output.formats:
        _dump_json({"config_fingerprint": cfg.fingerprint, "verdict": overall, "n_runs": M, "n_iters": N,
                    "estimates": verdicts}, out / "verdict.json")
    for kind, v in verdicts.items():
        print(f"mc[{kind}]: {v['cells_checked']}/{v['cells']} cells checked, verdict {v['verdict']}")
    print(f"mc: overall verdict {overall} ({wall:.1f} s), wrote {out}")
    return EXIT_OK if overall == "pass" else EXIT_FAIL


def cmd_complexity(args) -> int:
    cfg = _load(args)
    prob = build_problem(cfg)
    mmap = mirror_map(cfg.geometry.map)
    eps = args.eps if args.eps is not None else cfg.experiment.eps
    if eps is None:
        raise ConfigError("complexity needs --eps or experiment.eps")
    p = args.p if args.p is not None else cfg.experiment.p
    if not 0.0 < p < 1.0 or not eps > 0:
        raise ConfigError("need eps > 0 and p in (0, 1)")
    consts = prob.constants.for_map(mmap, prob.d)
    # Bregman radius of the uniform start; ln d is its analytic bound
    D1 = math.log(prob.d)
    res = sample_complexity(eps, p, consts, D1, a=_schedule_scale(cfg))
    payload = dict(res.as_dict(), config_fingerprint=cfg.fingerprint, D1=D1, a=_schedule_scale(cfg),
                   constants=consts.as_dict())
    if prob.x_star is not None:
        payload["D_R_xstar_x1"] = float(bregman_divergence(mmap, prob.x_star, [1.0 / prob.d] * prob.d))
    if args.out or "json" in cfg.output.formats:
        _dump_json(payload, _out_dir(args, cfg) / "complexity.json")
    print(f"N = {res.N}  (binding clause: {res.binding}; O-tilde scale {res.o_tilde:.6g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.builtin:
        problems = [build_problem(builtin_config("convex")), build_problem(builtin_config("nonconvex"))]
        seed = 0 if args.seed is None else args.seed
    else:
        cfg = _load(args)
        problems = [build_problem(cfg)]
        seed = cfg.run.base_seed
    results = run_suite(problems, seed=seed)
    print(format_table(results))
    ok = all(r.passed for r in results)
    print("validate: all checks passed" if ok else "validate: FAILED")
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ---------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, metavar="N", help="base seed (overrides MIRRORDYN_SEED and the file)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for replications")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config key; repeatable")

    parser = _Parser(prog="mirrordyn", description="Stochastic mirror descent under decision-dependent Markov noise.")
    parser.add_argument("--version", action="version", version=f"mirrordyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("run", parents=[common], help="one trajectory to CSV plus a JSON summary")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("mc", parents=[common], help="Monte-Carlo tail estimates and verdict")
    p.set_defaults(func=cmd_mc)
    p = sub.add_parser("complexity", parents=[common], help="sample-complexity iteration count")
    p.add_argument("--eps", type=float, help="target accuracy (overrides experiment.eps)")
    p.add_argument("--p", type=float, help="failure probability (overrides experiment.p)")
    p.set_defaults(func=cmd_complexity)
    p = sub.add_parser("validate", parents=[common], help="property suite")
    p.add_argument("--builtin", action="store_true", help="use the built-in reference problems")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = make_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MirrordynError, ValueError, IndexError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
