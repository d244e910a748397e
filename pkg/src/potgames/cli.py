"""Command-line surface.

Subcommands:

* ``run``      one algorithm on one scenario -> trajectory CSVs + figures
* ``certify``  brute-force certification -> certification.json + figure
* ``compare``  several algorithms from one start -> joined error table
* ``steer``    incentive steering of the energy scenario -> trace CSV

Exit codes: 0 success / converged, 1 validation or run failure, 2 iteration
cap reached (run did not converge, steering target not reached), 3 requested
certification checks failed, 4 evaluation budget exceeded.

The default output directory is ``$POTGAMES_OUT`` or ``./potgames_runs``.
Figures are rendered next to the CSV tables unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plots
from .certify import DEFAULT_BUDGET, certify_point, grid_potential_argmax
from .errors import BudgetExceededError, PotgamesError, ValidationError
from .fileio import (
    load_scenario,
    write_json,
    write_run_output,
    write_table_csv,
)
from .scenarios import (
    BUILTIN_BUILDERS,
    ScenarioDef,
    SteeringConfig,
    get_scenario,
    steer_collective,
)
from .solvers import ALGORITHMS, SolverConfig, Trajectory, run_algorithm

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_MAX_ITER = 2
EXIT_CHECKS_FAILED = 3
EXIT_BUDGET = 4


def _default_out() -> Path:
    return Path(os.environ.get("POTGAMES_OUT", "potgames_runs"))


def _resolve_scenario(arg: str) -> ScenarioDef:
    if arg in BUILTIN_BUILDERS:
        return get_scenario(arg)
    path = Path(arg)
    if path.exists():
        return load_scenario(path)
    raise ValidationError(
        f"scenario {arg!r} is neither a built-in name nor a readable file; "
        f"built-ins: {', '.join(sorted(BUILTIN_BUILDERS))}"
    )


def _parse_x0(text: str, scenario: ScenarioDef) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise ValidationError(f"--x0: cannot parse {text!r} as comma-separated numbers") from None
    dim = scenario.game.space.total_dim
    if len(vals) != dim:
        raise ValidationError(f"--x0: expected {dim} coordinates, got {len(vals)}")
    if not scenario.game.space.contains(vals):
        raise ValidationError(f"--x0: point {vals.tolist()} is not feasible for the strategy space")
    return vals


def _apply_overrides(cfg: SolverConfig, args) -> SolverConfig:
    fields = {}
    if args.max_iter is not None:
        fields["max_iter"] = args.max_iter
    if args.tol is not None:
        fields["tol"] = args.tol
    if args.step is not None:
        fields["step_size"] = args.step
    if args.prox_weight is not None:
        fields["prox_weight"] = args.prox_weight
    if args.paths is not None:
        fields["n_paths"] = args.paths
    if args.seed is not None:
        fields["seed"] = args.seed
    if getattr(args, "start_agent", None) is not None:
        fields["ibr_start_agent"] = args.start_agent
    return replace(cfg, **fields) if fields else cfg


def _emit_contours(outdir: Path, scenario: ScenarioDef, resolution: int, do_plot: bool) -> None:
    game = scenario.game
    if game.space.total_dim != 2:
        print("contour export skipped: game does not have exactly two coordinates")
        return
    xs = np.linspace(float(game.space.lo[0]), float(game.space.hi[0]), resolution)
    ys = np.linspace(float(game.space.lo[1]), float(game.space.hi[1]), resolution)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    zz = game.potential_batch(pts)
    rows = [[float(a), float(b), float(c)] for (a, b), c in zip(pts, zz)]
    write_table_csv(outdir / "contours.csv", ["x1", "x2", "potential"], rows)
    print(f"wrote {outdir / 'contours.csv'}")
    if do_plot:
        p = plots.plot_contours(outdir / "contours.png", game, resolution)
        print(f"wrote {p}")


def _run_figures(outdir: Path, scenario: ScenarioDef, algo: str, traj: Trajectory) -> None:
    game = scenario.game
    try:
        if game.space.total_dim == 2:
            star = scenario.targets.get("argmax")
            p = plots.plot_trajectory_2d(outdir / "trajectory.png", game, {algo: traj}, star=star)
        elif all(b.dim == 2 for b in game.space.blocks):
            p = plots.plot_agent_paths(outdir / "trajectory.png", game, traj)
        else:
            p = plots.plot_potential_curve(outdir / "trajectory.png", {algo: traj})
        print(f"wrote {p}")
    except Exception as exc:  # plotting must never fail a run
        print(f"figure rendering skipped: {exc}", file=sys.stderr)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    if args.algo not in ALGORITHMS:
        raise ValidationError(f"--algo: unknown algorithm {args.algo!r}; options: {ALGORITHMS}")
    cfg = _apply_overrides(scenario.solver_config(args.algo), args)
    x0 = _parse_x0(args.x0, scenario) if args.x0 else scenario.default_x0
    outdir = Path(args.out) if args.out else _default_out() / f"{scenario.name}_{args.algo}"
    traj = run_algorithm(scenario.game, args.algo, x0, cfg)
    files = write_run_output(outdir, scenario, args.algo, cfg, traj)
    for f in sorted(set(files.values())):
        print(f"wrote {f}")
    if args.emit_contours:
        _emit_contours(outdir, scenario, args.contour_resolution, args.plot)
    if args.plot:
        _run_figures(outdir, scenario, args.algo, traj)
    final = ", ".join(f"{v:.6g}" for v in traj.final_x)
    print(
        f"{scenario.name}/{args.algo}: status={traj.status} iterations={traj.n_iterations} "
        f"final=({final}) potential={traj.points[-1].potential:.9g}"
    )
    if traj.message:
        print(traj.message)
    if traj.status == "converged":
        return EXIT_OK
    if traj.status == "max_iter":
        return EXIT_MAX_ITER
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    game = scenario.game
    resolution = args.resolution or scenario.certification.get("resolution", 101)
    budget = args.budget or scenario.certification.get("budget", DEFAULT_BUDGET)
    outdir = Path(args.out) if args.out else _default_out() / f"{scenario.name}_certify"
    try:
        if args.point:
            point = _parse_x0(args.point, scenario)
        else:
            point = grid_potential_argmax(game, resolution, budget).point
        report = certify_point(game, point, resolution, budget, eps_threshold=args.eps)
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    outdir.mkdir(parents=True, exist_ok=True)
    write_json(outdir / "certification.json", report.to_dict())
    print(f"wrote {outdir / 'certification.json'}")
    print(f"point: {[round(float(v), 9) for v in report.point]}")
    print(f"per-agent best-response gaps: {[f'{g:.3e}' for g in report.gaps]} (eps = {report.eps:.3e})")
    print(
        f"grid argmax: {[round(float(v), 9) for v in report.argmax.point]} "
        f"value {report.argmax.value:.9g} ({len(report.argmax.ties)} tie cell(s))"
    )
    ok = True
    for c in report.checks:
        flag = "PASS" if c.satisfied else "FAIL"
        print(f"  [{flag}] {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} slack={c.slack:.2e}")
        ok = ok and c.satisfied
    if args.plot and game.space.total_dim == 2:
        p = plots.plot_certification(outdir / "certification.png", game, report.point, report.argmax.point)
        print(f"wrote {p}")
    return EXIT_OK if ok else EXIT_CHECKS_FAILED


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def build_comparison(
    scenario: ScenarioDef,
    algos: list[str],
    x0: np.ndarray,
    seed: int | None = None,
    resolution: int | None = None,
    budget: int | None = None,
) -> tuple[dict[str, Trajectory], list[str], list[list], np.ndarray | None]:
    """Run each algorithm from the same start and join their per-iteration
    errors (distance to the certified maximizer) into one table.

    When the grid certification exceeds its budget (high-dimensional lattice
    scenarios) the error columns are dropped; potential and, for multi-agent
    planar games, max pairwise L1 distance columns are always present.
    """
    game = scenario.game
    resolution = resolution or scenario.certification.get("resolution", 101)
    budget = budget or scenario.certification.get("budget", DEFAULT_BUDGET)
    star = None
    try:
        # refine to convergence: the error columns need a tight reference point
        star = grid_potential_argmax(game, resolution, budget, refine_passes=60).point
    except BudgetExceededError:
        star = None

    trajs: dict[str, Trajectory] = {}
    for algo in algos:
        cfg = scenario.solver_config(algo)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        trajs[algo] = run_algorithm(game, algo, x0, cfg)

    planar = game.n_agents >= 2 and all(b.dim == 2 for b in game.space.blocks)
    header = ["iter"]
    for algo in algos:
        if star is not None:
            header.append(f"err_{algo}")
        header.append(f"potential_{algo}")
        if planar:
            header.append(f"maxpair_{algo}")
    longest = max(len(t.points) for t in trajs.values())
    rows = []
    for k in range(longest):
        row: list = [k]
        for algo in algos:
            pts = trajs[algo].points
            p = pts[min(k, len(pts) - 1)]
            if star is not None:
                row.append(float(np.linalg.norm(p.x - star)))
            row.append(p.potential)
            if planar:
                row.append(max_pairwise_l1(game, p.x))
        rows.append(row)
    return trajs, header, rows, star


def max_pairwise_l1(game, x: np.ndarray) -> float:
    worst = 0.0
    for i in range(game.n_agents):
        bi = x[game.space.block_slice(i)]
        for j in range(i):
            bj = x[game.space.block_slice(j)]
            worst = max(worst, float(np.abs(bi - bj).sum()))
    return worst


def cmd_compare(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ValidationError(f"--algos: unknown algorithm {algo!r}")
    x0 = _parse_x0(args.x0, scenario) if args.x0 else scenario.default_x0
    outdir = Path(args.out) if args.out else _default_out() / f"{scenario.name}_compare"
    trajs, header, rows, star = build_comparison(
        scenario, algos, x0, seed=args.seed, resolution=args.resolution
    )
    outdir.mkdir(parents=True, exist_ok=True)
    from .fileio import trajectory_csv_text, _atomic_write  # local import to keep surface small

    labels = scenario.game.space.coord_labels()
    for algo, traj in trajs.items():
        f = outdir / f"trajectory_{algo}.csv"
        _atomic_write(f, trajectory_csv_text(traj, labels))
        print(f"wrote {f}")
    write_table_csv(outdir / "compare.csv", header, rows)
    print(f"wrote {outdir / 'compare.csv'}")
    if args.plot:
        if star is not None:
            errors = {}
            for algo, traj in trajs.items():
                pts = traj.points
                errors[algo] = [float(np.linalg.norm(p.x - star)) for p in pts]
            p = plots.plot_error_curves(outdir / "compare_error.png", errors)
        else:
            p = plots.plot_potential_curve(outdir / "compare_potential.png", trajs)
        print(f"wrote {p}")
        if all(b.dim == 2 for b in scenario.game.space.blocks):
            for algo, traj in trajs.items():
                p = plots.plot_agent_paths(outdir / f"paths_{algo}.png", scenario.game, traj)
                print(f"wrote {p}")
    for algo, traj in trajs.items():
        print(f"{algo}: status={traj.status} iterations={traj.n_iterations}")
    if any(t.status == "error" for t in trajs.values()):
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# steer
# ---------------------------------------------------------------------------

def cmd_steer(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    steer = SteeringConfig(
        tau=args.tau,
        eta=args.eta,
        delta=args.delta,
        lam_min=args.lam_min,
        lam_max=args.lam_max,
        max_outer=args.max_outer,
        tolerance=args.steer_tol,
    )
    cfg = scenario.solver_config("imm")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    x0 = _parse_x0(args.x0, scenario) if args.x0 else None
    trace = steer_collective(scenario, steer, cfg, x0=x0)
    outdir = Path(args.out) if args.out else _default_out() / f"{scenario.name}_steer"
    labels = scenario.game.space.coord_labels()
    n_inc = len(trace.rows[0].incentives)
    header = ["k", *[f"lambda{i + 1}" for i in range(n_inc)], *labels, "J", "err"]
    rows = [
        [r.k, *r.incentives, *r.x, r.collective, r.err]
        for r in trace.rows
    ]
    write_table_csv(outdir / "steering_trace.csv", header, rows)
    print(f"wrote {outdir / 'steering_trace.csv'}")
    if args.plot:
        p = plots.plot_steering(outdir / "steering.png", trace, args.tau)
        print(f"wrote {p}")
    last = trace.rows[-1]
    print(
        f"steering status={trace.status} steps={last.k} final J={last.collective:.6g} "
        f"|J - tau|={last.err:.4g} incentives={[round(v, 6) for v in last.incentives]}"
    )
    if trace.message:
        print(trace.message)
    return EXIT_OK if trace.status == "reached" else EXIT_MAX_ITER


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="built-in scenario name or path to a scenario JSON file")
    p.add_argument("--out", help="output directory (default: $POTGAMES_OUT/<scenario>_<command>)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument(
        "--plot",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render figures next to the CSV output (default on)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potgames",
        description="Solve, certify, compare, and steer coordination games with distorted rewards.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one algorithm on a scenario")
    _add_common(p)
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--x0", help="comma-separated initial joint strategy")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--step", type=float, default=None, help="gradient step size")
    p.add_argument("--prox-weight", type=float, default=None)
    p.add_argument("--paths", type=int, default=None, help="number of averaged sample paths")
    p.add_argument("--start-agent", type=int, default=None, help="first responder for ibr")
    p.add_argument("--emit-contours", action="store_true", help="sample the potential to contours.csv")
    p.add_argument("--contour-resolution", type=int, default=101)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="brute-force certification of a point and the potential argmax")
    _add_common(p)
    p.add_argument("--point", help="comma-separated joint strategy to certify (default: grid argmax)")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-6, help="best-response gap threshold")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("compare", help="run several algorithms from one start and join their errors")
    _add_common(p)
    p.add_argument("--algos", required=True, help="comma-separated algorithm list")
    p.add_argument("--x0", help="comma-separated initial joint strategy")
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("steer", help="steer the collective benefit to a target via incentives")
    _add_common(p)
    p.add_argument("--tau", type=float, required=True, help="collective benefit target")
    p.add_argument("--eta", type=float, default=0.05, help="incentive update step")
    p.add_argument("--delta", type=float, default=1e-3, help="sensitivity finite-difference increment")
    p.add_argument("--lam-min", type=float, default=-10.0)
    p.add_argument("--lam-max", type=float, default=10.0)
    p.add_argument("--max-outer", type=int, default=2000)
    p.add_argument("--steer-tol", type=float, default=0.02, help="|J - tau| stopping tolerance")
    p.add_argument("--x0", help="comma-separated initial joint strategy")
    p.set_defaults(func=cmd_steer)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PotgamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
