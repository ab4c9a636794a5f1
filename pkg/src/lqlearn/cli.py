"""Command-line harness: solve, check, train, sweep, lemmas, report.

Exit codes: 0 success, 2 validation failure, 3 training divergence,
4 oracle non-convergence, 5 identity-check violation.
"""

import argparse
import concurrent.futures
import dataclasses
import itertools
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import agents, kalman, lemmas
from .linalg import DefinitenessError, DivergenceError, frobenius, psd_order_geq
from .model import LqgProblem, stability_margin
from .problem_io import (
    ProblemFormatError,
    ValidationError,
    config_digest,
    config_from_dict,
    load_config,
    load_problem,
)
from .riccati import recover_pi, solve_pi_star

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_ORACLE = 4
EXIT_LEMMA = 5

BASE_COLUMNS = ("t", "episode", "stopped", "delta", "alpha", "state_norm", "pi_error", "u_norm")
KF_COLUMNS = BASE_COLUMNS + ("est_error_norm", "sigma_trace")

OUT_DIR_ENV = "LQLEARN_OUT_DIR"


def default_out_dir():
    return Path(os.environ.get(OUT_DIR_ENV, "."))


@dataclasses.dataclass(frozen=True)
class RunSummary:
    final_pi_error: float
    initial_pi_error: float
    episodes: int
    max_state_norm: float
    mean_abs_delta_tail: float
    wall_clock: float
    seed: int
    config_hash: str

    def index_entry(self):
        # wall-clock excluded: persisted outputs must be seed-deterministic
        entry = dataclasses.asdict(self)
        entry.pop("wall_clock")
        return entry


def _record_row(rec, kf):
    row = [
        str(rec.t),
        str(rec.episode),
        str(int(rec.stopped)),
        repr(rec.delta),
        repr(rec.alpha),
        repr(rec.state_norm),
        "" if math.isnan(rec.pi_error) else repr(rec.pi_error),
        repr(float(np.linalg.norm(rec.u))),
    ]
    if kf:
        row.append(repr(float(np.linalg.norm(rec.est_error))))
        row.append(repr(rec.sigma_trace))
    return row


def _base_problem(problem):
    return problem.base if isinstance(problem, LqgProblem) else problem


def make_run(problem, config, oracle, seed=None):
    """Training stream plus a flag for the extended record columns."""
    base = _base_problem(problem)
    if config.algorithm == "td0":
        return agents.run_td0(base, config, oracle, seed), False
    if config.algorithm == "sarsa0":
        return agents.run_sarsa0(base, config, oracle, seed), False
    if config.algorithm == "kf-td0":
        if not isinstance(problem, LqgProblem):
            raise ValidationError(["kf-td0 requires a problem with an observation map H"])
        return kalman.run_kf_td0(problem, config, oracle, seed), True
    raise ValidationError([f"unknown algorithm {config.algorithm!r}"])


def initial_pi_error(problem, config, oracle):
    if oracle is None:
        return float("nan")
    base = _base_problem(problem)
    if config.algorithm == "sarsa0":
        theta0 = agents.initial_q_matrix(base, config, oracle)
        return frobenius(recover_pi(theta0, base.n) - oracle.pi_star)
    pi0 = agents.initial_value_matrix(base, config, oracle)
    return frobenius(pi0 - oracle.pi_star)


def train_run(problem, config, out_csv, oracle=None, config_hash=""):
    """Execute one training run, streaming records to CSV at the metrics stride.

    The CSV is flushed as it grows so a diverging run still leaves its prefix
    behind.  Returns the run summary.
    """
    records, kf = make_run(problem, config, oracle)
    columns = KF_COLUMNS if kf else BASE_COLUMNS
    init_err = initial_pi_error(problem, config, oracle)
    deltas = []
    episodes = 0
    max_norm = 0.0
    final_err = float("nan")
    started = time.perf_counter()
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        try:
            for rec in records:
                if rec.t % config.metrics_stride == 0:
                    fh.write(",".join(_record_row(rec, kf)) + "\n")
                deltas.append(rec.delta)
                episodes += int(rec.stopped)
                if rec.state_norm > max_norm:
                    max_norm = rec.state_norm
                final_err = rec.pi_error
        finally:
            fh.flush()
    tail = deltas[-max(1, len(deltas) // 10) :]
    return RunSummary(
        final_pi_error=final_err,
        initial_pi_error=init_err,
        episodes=episodes,
        max_state_norm=max_norm,
        mean_abs_delta_tail=float(np.mean(np.abs(tail))) if tail else float("nan"),
        wall_clock=time.perf_counter() - started,
        seed=config.seed,
        config_hash=config_hash,
    )


def _print_summary(summary, out_csv):
    print(f"csv: {out_csv}")
    for key, value in dataclasses.asdict(summary).items():
        print(f"{key}: {value}")


def _fmt_matrix(name, mat):
    body = np.array2string(np.asarray(mat), precision=12, suppress_small=False)
    return f"{name} =\n{body}"


def cmd_solve(args):
    problem = load_problem(args.problem)
    base = _base_problem(problem)
    solution = solve_pi_star(base, tol=args.tol)
    margin = stability_margin(base, solution.gain_star)
    print(_fmt_matrix("pi_star", solution.pi_star))
    print(_fmt_matrix("gain_star", solution.gain_star.L))
    print(f"closed_loop_norm: {margin.norm!r}")
    print(f"q: {margin.q!r}")
    print(f"residual: {solution.residual!r}")
    print(f"iterations: {solution.iterations}")
    if not margin.satisfies:
        print("stability: FAILED (closed-loop norm exceeds q)", file=sys.stderr)
        return EXIT_VALIDATION
    print("stability: ok")
    return EXIT_OK


def cmd_check(args):
    problem = load_problem(args.problem)
    base = _base_problem(problem)
    config = load_config(args.config) if args.config else config_from_dict({})
    solution = solve_pi_star(base, tol=args.tol)
    top = float(np.linalg.eigvalsh(solution.pi_star)[-1])
    kappa = config.pi0_scale if config.pi0_scale is not None else 10.0 * top
    dominated = psd_order_geq(kappa * np.eye(base.n), solution.pi_star, tol=1e-10)
    margin = stability_margin(base, solution.gain_star)
    print(f"pi0_scale: {kappa!r}")
    print(f"initial_fit_dominates_optimum: {dominated}")
    print(f"closed_loop_norm: {margin.norm!r}")
    print(f"q: {margin.q!r}")
    print(f"stability_budget_satisfied: {margin.satisfies}")
    print(f"suggested_min_pi0_scale: {math.ceil(top)}")
    return EXIT_OK


def _resolve_oracle(problem, config, args):
    base = _base_problem(problem)
    need = args.compare or config.pi0_scale is None
    if not need:
        return None
    return solve_pi_star(base, tol=args.tol)


def cmd_train(args):
    problem = load_problem(args.problem)
    overrides = {"seed": args.seed}
    config = (
        load_config(args.config, **overrides)
        if args.config
        else config_from_dict({}, **overrides)
    )
    oracle = _resolve_oracle(problem, config, args)
    digest = config_digest(args.problem, config)
    out_csv = Path(args.out) if args.out else default_out_dir() / f"run_{digest}.csv"
    try:
        summary = train_run(problem, config, out_csv, oracle, digest)
    except (DivergenceError, DefinitenessError) as exc:
        print(f"training aborted: {exc} (partial csv at {out_csv})", file=sys.stderr)
        return EXIT_DIVERGENCE
    _print_summary(summary, out_csv)
    return EXIT_OK


def _load_sweep_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "grid" not in data:
        raise ProblemFormatError(f"{path}: sweep file needs a 'grid' object")
    base = data.get("base", {})
    grid = data["grid"]
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ProblemFormatError(f"{path}: grid values must be lists")
    return base, grid


def sweep_cells(base, grid):
    """Deterministic cartesian expansion of the grid over the base config."""
    keys = sorted(grid)
    combos = itertools.product(*(grid[key] for key in keys))
    return [dict(base, **dict(zip(keys, combo))) for combo in combos]


def _sweep_cell(problem_path, cell, out_dir, tol):
    """One sweep cell; returns an index entry (runs in worker processes)."""
    problem = load_problem(problem_path)
    config = config_from_dict(cell)
    digest = config_digest(problem_path, config)
    csv_path = Path(out_dir) / f"run_{digest}.csv"
    entry = {"config_hash": digest, "csv": csv_path.name, "config": cell}
    try:
        oracle = solve_pi_star(_base_problem(problem), tol=tol)
        summary = train_run(problem, config, csv_path, oracle, digest)
    except (DivergenceError, DefinitenessError) as exc:
        entry.update(status="failed", error=str(exc), exit_code=EXIT_DIVERGENCE)
        return entry
    entry.update(status="ok", summary=summary.index_entry())
    return entry


def cmd_sweep(args):
    load_problem(args.problem)  # fail fast on a bad file
    base, grid = _load_sweep_spec(args.config)
    cells = sweep_cells(base, grid)
    for cell in cells:  # validate every cell before any work starts
        config_from_dict(cell)
    out_dir = Path(args.out) if args.out else default_out_dir() / "sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.parallel) as pool:
            entries = list(
                pool.map(
                    _sweep_cell,
                    itertools.repeat(args.problem),
                    cells,
                    itertools.repeat(str(out_dir)),
                    itertools.repeat(args.tol),
                )
            )
    else:
        entries = [_sweep_cell(args.problem, cell, str(out_dir), args.tol) for cell in cells]
    entries.sort(key=lambda e: e["config_hash"])
    index_path = out_dir / "index.json"
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    failed = [e for e in entries if e["status"] != "ok"]
    print(f"sweep: {len(entries)} cells, {len(failed)} failed, index at {index_path}")
    if failed:
        return max(e.get("exit_code", EXIT_DIVERGENCE) for e in failed)
    return EXIT_OK


def cmd_lemmas(args):
    reports = lemmas.run_all(args.seed, args.trials)
    for rep in reports:
        status = "ok" if rep.ok else "VIOLATED"
        print(
            f"{rep.name}: trials={rep.trials} violations={rep.violations} "
            f"worst_margin={rep.worst_margin:.3e} [{status}]"
        )
    if not reports:
        print("no trials requested; nothing to check")
    if any(not rep.ok for rep in reports):
        return EXIT_LEMMA
    return EXIT_OK


def cmd_report(args):
    from . import report as report_mod

    out_dir = Path(args.out) if args.out else None
    for csv_path in args.csvs:
        png = report_mod.render_run_report(csv_path, out_dir=out_dir)
        print(f"figure: {png}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lqlearn",
        description="Learning control of randomly-stopped linear-quadratic systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, problem=True, config=False, tol=False):
        if problem:
            p.add_argument("--problem", required=True, help="problem JSON file")
        if config:
            p.add_argument("--config", help="trainer config JSON file")
        if tol:
            p.add_argument("--tol", type=float, default=1e-12, help="oracle fixed-point tolerance")

    p_solve = sub.add_parser("solve", help="exact value matrix and optimal gain")
    add_common(p_solve, tol=True)
    p_solve.set_defaults(func=cmd_solve)

    p_check = sub.add_parser("check", help="verify the convergence hypotheses")
    add_common(p_check, config=True, tol=True)
    p_check.set_defaults(func=cmd_check)

    p_train = sub.add_parser("train", help="run one seeded training session")
    add_common(p_train, config=True, tol=True)
    p_train.add_argument("--out", help="output CSV path")
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.add_argument(
        "--compare", action="store_true", help="solve the oracle and track the parameter error"
    )
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="run a config grid and index the results")
    add_common(p_sweep, config=False, tol=True)
    p_sweep.add_argument("--config", required=True, help="sweep JSON: {base: {...}, grid: {...}}")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--parallel", type=int, default=1, help="worker processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_lemmas = sub.add_parser("lemmas", help="randomized matrix-identity checks")
    p_lemmas.add_argument("--seed", type=int, default=0)
    p_lemmas.add_argument("--trials", type=int, default=1000)
    p_lemmas.set_defaults(func=cmd_lemmas)

    p_report = sub.add_parser("report", help="render figures from run CSVs")
    p_report.add_argument("csvs", nargs="+", help="run CSV files")
    p_report.add_argument("--out", help="directory for the figures")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except DefinitenessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
