"""Scenario file schema and run-output persistence.

Scenario files are JSON documents validated strictly: unknown keys are
rejected and every error message carries the dotted path of the offending
field.  Serialization is canonical (sorted keys, two-space indent, shortest
exact float representation), so export(import(file)) is byte-identical for
files produced by the exporter, and the manifest hash pins the exact game.

Trajectory tables are CSV with deterministic contents; wall-clock timings go
to a separate file so repeated runs with the same seed produce byte-identical
trajectories.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ValidationError
from .game_model import (
    AgentSpec,
    Block,
    CollectiveUtility,
    ConstantTerm,
    GameSpec,
    IndividualTerm,
    Lattice,
    LinearIncentive,
    NegAbsSum,
    NegPairwiseL1,
    NegQuadToTarget,
    NegSqDeviation,
    Regularizer,
    RewardFunction,
    StrategySpace,
    WeightedSqNorm,
)
from .pt_core import OutcomeDistribution, Piece, ValueFunction, WeightingFunction
from .scenarios import ScenarioDef
from .solvers import SolverConfig, Trajectory

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# strict dict validation helpers
# ---------------------------------------------------------------------------

def _require(d: dict, path: str, required: dict[str, type | tuple], optional: dict[str, type | tuple] | None = None) -> None:
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: expected an object, got {type(d).__name__}")
    optional = optional or {}
    allowed = set(required) | set(optional)
    for key in d:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}: unknown key")
    for key, typ in required.items():
        if key not in d:
            raise ValidationError(f"{path}.{key}: missing required key")
        if typ is not None and not isinstance(d[key], typ):
            raise ValidationError(f"{path}.{key}: wrong type {type(d[key]).__name__}")
    for key, typ in optional.items():
        if key in d and typ is not None and not isinstance(d[key], typ):
            raise ValidationError(f"{path}.{key}: wrong type {type(d[key]).__name__}")


def _floats(seq, path: str) -> tuple[float, ...]:
    if not isinstance(seq, list):
        raise ValidationError(f"{path}: expected a list of numbers")
    out = []
    for j, v in enumerate(seq):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ValidationError(f"{path}[{j}]: expected a number")
        out.append(float(v))
    return tuple(out)


def _ints(seq, path: str) -> tuple[int, ...]:
    if not isinstance(seq, list):
        raise ValidationError(f"{path}: expected a list of integers")
    out = []
    for j, v in enumerate(seq):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValidationError(f"{path}[{j}]: expected an integer")
        out.append(v)
    return tuple(out)


_NUM = (int, float)


# ---------------------------------------------------------------------------
# component <-> dict
# ---------------------------------------------------------------------------

def _weighting_from(d: dict, path: str) -> WeightingFunction:
    _require(d, path, {"kind": str}, {"alpha": _NUM, "knots": list})
    kind = d["kind"]
    try:
        if kind == "identity":
            return WeightingFunction.identity()
        if kind == "prelec":
            if "alpha" not in d:
                raise ValidationError(f"{path}.alpha: missing required key")
            return WeightingFunction.prelec(float(d["alpha"]))
        if kind == "tabulated":
            if "knots" not in d:
                raise ValidationError(f"{path}.knots: missing required key")
            knots = [tuple(_floats(k, f"{path}.knots[{j}]")) for j, k in enumerate(d["knots"])]
            return WeightingFunction.tabulated(knots)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    raise ValidationError(f"{path}.kind: unknown kind {kind!r}")


def _weighting_to(w: WeightingFunction) -> dict:
    if w.kind == "identity":
        return {"kind": "identity"}
    if w.kind == "prelec":
        return {"kind": "prelec", "alpha": float(w.alpha)}
    return {"kind": "tabulated", "knots": [[float(p), float(v)] for p, v in w.knots]}


def _value_fn_from(d: dict, path: str) -> ValueFunction:
    _require(
        d, path, {"kind": str},
        {"slope": _NUM, "scale": _NUM, "rate": _NUM, "breakpoints": list, "pieces": list},
    )
    kind = d["kind"]
    try:
        if kind == "identity":
            return ValueFunction.identity()
        if kind == "linear":
            return ValueFunction.linear(float(d.get("slope", 1.0)))
        if kind == "log_gain_linear_loss":
            return ValueFunction.log_gain_linear_loss()
        if kind == "exp_saturating":
            return ValueFunction.exp_saturating(float(d.get("scale", 1.0)), float(d.get("rate", 1.0)))
        if kind == "piecewise":
            pieces = []
            for j, p in enumerate(d.get("pieces", [])):
                _require(p, f"{path}.pieces[{j}]", {"kind": str}, {"a": _NUM, "b": _NUM, "c": _NUM})
                pieces.append(
                    Piece(p["kind"], float(p.get("a", 0.0)), float(p.get("b", 1.0)), float(p.get("c", 1.0)))
                )
            return ValueFunction.piecewise(_floats(d.get("breakpoints", []), f"{path}.breakpoints"), pieces)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    raise ValidationError(f"{path}.kind: unknown kind {kind!r}")


def _value_fn_to(v: ValueFunction) -> dict:
    if v.kind == "identity":
        return {"kind": "identity"}
    if v.kind == "linear":
        return {"kind": "linear", "slope": float(v.slope)}
    if v.kind == "log_gain_linear_loss":
        return {"kind": "log_gain_linear_loss"}
    if v.kind == "exp_saturating":
        return {"kind": "exp_saturating", "scale": float(v.scale), "rate": float(v.rate)}
    return {
        "kind": "piecewise",
        "breakpoints": [float(b) for b in v.breakpoints],
        "pieces": [{"kind": p.kind, "a": float(p.a), "b": float(p.b), "c": float(p.c)} for p in v.pieces],
    }


def _reward_fn_from(d: dict, path: str) -> RewardFunction:
    _require(d, path, {"kind": str}, {"d": _NUM, "k": _NUM, "c": _NUM})
    try:
        return RewardFunction(
            kind=d["kind"], d=float(d.get("d", 0.0)), k=float(d.get("k", 1.0)), c=float(d.get("c", 1.0))
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _reward_fn_to(r: RewardFunction) -> dict:
    out: dict[str, Any] = {"kind": r.kind}
    if r.kind in ("affine_scaled", "scale_shift"):
        out["d"] = float(r.d)
    elif r.kind in ("exp_of_product", "exp_plain"):
        out["k"] = float(r.k)
    else:
        out["c"] = float(r.c)
    return out


_COLLECTIVE_FROM: dict[str, Callable[[dict, str], Any]] = {}
_COLLECTIVE_FROM["constant"] = lambda d, p: (
    _require(d, p, {"kind": str, "c": _NUM}) or ConstantTerm(float(d["c"]))
)
_COLLECTIVE_FROM["neg_quad_to_target"] = lambda d, p: (
    _require(d, p, {"kind": str, "coef": _NUM, "target": _NUM, "coords": list})
    or NegQuadToTarget(float(d["coef"]), float(d["target"]), _ints(d["coords"], f"{p}.coords"))
)
_COLLECTIVE_FROM["neg_sq_deviation"] = lambda d, p: (
    _require(d, p, {"kind": str, "center": _NUM, "coords": list})
    or NegSqDeviation(float(d["center"]), _ints(d["coords"], f"{p}.coords"))
)
_COLLECTIVE_FROM["neg_abs_sum"] = lambda d, p: (
    _require(d, p, {"kind": str, "coords": list}) or NegAbsSum(_ints(d["coords"], f"{p}.coords"))
)
_COLLECTIVE_FROM["neg_pairwise_l1"] = lambda d, p: (
    _require(d, p, {"kind": str, "agent_coords": list})
    or NegPairwiseL1(tuple(_ints(c, f"{p}.agent_coords[{j}]") for j, c in enumerate(d["agent_coords"])))
)


def _collective_from(terms: list, path: str) -> CollectiveUtility:
    out = []
    for j, d in enumerate(terms):
        p = f"{path}[{j}]"
        if not isinstance(d, dict) or "kind" not in d:
            raise ValidationError(f"{p}: expected an object with a 'kind' key")
        maker = _COLLECTIVE_FROM.get(d["kind"])
        if maker is None:
            raise ValidationError(f"{p}.kind: unknown kind {d['kind']!r}")
        out.append(maker(d, p))
    return CollectiveUtility(terms=tuple(out))


def _collective_to(c: CollectiveUtility) -> list:
    out = []
    for t in c.terms:
        if isinstance(t, ConstantTerm):
            out.append({"kind": "constant", "c": float(t.c)})
        elif isinstance(t, NegQuadToTarget):
            out.append({"kind": "neg_quad_to_target", "coef": float(t.coef),
                        "target": float(t.target), "coords": list(t.coords)})
        elif isinstance(t, NegSqDeviation):
            out.append({"kind": "neg_sq_deviation", "center": float(t.center), "coords": list(t.coords)})
        elif isinstance(t, NegAbsSum):
            out.append({"kind": "neg_abs_sum", "coords": list(t.coords)})
        else:
            out.append({"kind": "neg_pairwise_l1", "agent_coords": [list(c_) for c_ in t.agent_coords]})
    return out


def _regularizer_from(terms: list, path: str) -> Regularizer:
    out = []
    for j, d in enumerate(terms):
        p = f"{path}[{j}]"
        if not isinstance(d, dict) or "kind" not in d:
            raise ValidationError(f"{p}: expected an object with a 'kind' key")
        if d["kind"] == "weighted_sq_norm":
            _require(d, p, {"kind": str, "coords": list, "centers": list, "weights": list})
            out.append(
                WeightedSqNorm(
                    _ints(d["coords"], f"{p}.coords"),
                    _floats(d["centers"], f"{p}.centers"),
                    _floats(d["weights"], f"{p}.weights"),
                )
            )
        elif d["kind"] == "linear_incentive":
            _require(d, p, {"kind": str, "coords": list, "coeffs": list})
            out.append(LinearIncentive(_ints(d["coords"], f"{p}.coords"), _floats(d["coeffs"], f"{p}.coeffs")))
        else:
            raise ValidationError(f"{p}.kind: unknown kind {d['kind']!r}")
    return Regularizer(terms=tuple(out))


def _regularizer_to(r: Regularizer) -> list:
    out = []
    for t in r.terms:
        if isinstance(t, WeightedSqNorm):
            out.append({"kind": "weighted_sq_norm", "coords": list(t.coords),
                        "centers": [float(v) for v in t.centers], "weights": [float(v) for v in t.weights]})
        else:
            out.append({"kind": "linear_incentive", "coords": list(t.coords),
                        "coeffs": [float(v) for v in t.coeffs]})
    return out


def _solver_config_from(d: dict, path: str) -> SolverConfig:
    _require(
        d, path, {},
        {
            "max_iter": int, "tol": _NUM, "step_size": _NUM, "step_schedule": str,
            "accelerate": bool, "prox_weight": _NUM, "inner_tol": _NUM, "max_inner": int,
            "n_paths": int, "seed": int, "ibr_start_agent": int,
        },
    )
    try:
        return SolverConfig(**{k: (float(v) if isinstance(v, float) else v) for k, v in d.items()})
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def solver_config_to_dict(cfg: SolverConfig) -> dict:
    return {
        "max_iter": cfg.max_iter,
        "tol": float(cfg.tol),
        "step_size": float(cfg.step_size),
        "step_schedule": cfg.step_schedule,
        "accelerate": cfg.accelerate,
        "prox_weight": float(cfg.prox_weight),
        "inner_tol": float(cfg.inner_tol),
        "max_inner": cfg.max_inner,
        "n_paths": cfg.n_paths,
        "seed": cfg.seed,
        "ibr_start_agent": cfg.ibr_start_agent,
    }


# ---------------------------------------------------------------------------
# scenario <-> dict
# ---------------------------------------------------------------------------

def scenario_from_dict(data: dict) -> ScenarioDef:
    _require(
        data, "scenario",
        {
            "schema_version": int, "meta": dict, "distribution": dict, "weighting": dict,
            "lambda": _NUM, "agents": list, "collective": list, "regularizer": list,
        },
        {
            "solver_defaults": dict, "certification": dict, "x0_defaults": list,
            "targets": dict, "params": dict,
        },
    )
    if data["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(
            f"scenario.schema_version: expected {SCHEMA_VERSION}, got {data['schema_version']}"
        )
    _require(data["meta"], "meta", {"name": str}, {"description": str})
    _require(data["distribution"], "distribution", {"support": list, "probs": list})
    try:
        dist = OutcomeDistribution(
            support=_floats(data["distribution"]["support"], "distribution.support"),
            probs=_floats(data["distribution"]["probs"], "distribution.probs"),
        )
    except ValidationError as exc:
        # keep the field path produced by the domain type
        raise ValidationError(str(exc)) from None
    weighting = _weighting_from(data["weighting"], "weighting")

    agents, blocks = [], []
    for j, a in enumerate(data["agents"]):
        p = f"agents[{j}]"
        _require(
            a, p, {"weight": _NUM, "box": list},
            {"lattice": dict, "constant": _NUM, "individual_terms": list},
        )
        bounds = []
        for bj, pair in enumerate(a["box"]):
            vals = _floats(pair, f"{p}.box[{bj}]")
            if len(vals) != 2:
                raise ValidationError(f"{p}.box[{bj}]: expected [lo, hi]")
            bounds.append((vals[0], vals[1]))
        lattice = None
        if "lattice" in a:
            _require(a["lattice"], f"{p}.lattice", {"origin": _NUM, "step": _NUM})
            lattice = Lattice(float(a["lattice"]["origin"]), float(a["lattice"]["step"]))
        terms = []
        for tj, t in enumerate(a.get("individual_terms", [])):
            tp = f"{p}.individual_terms[{tj}]"
            _require(t, tp, {"sign": int, "value_fn": dict, "reward_fn": dict}, {"coordinate": int})
            terms.append(
                IndividualTerm(
                    sign=t["sign"],
                    value_fn=_value_fn_from(t["value_fn"], f"{tp}.value_fn"),
                    reward_fn=_reward_fn_from(t["reward_fn"], f"{tp}.reward_fn"),
                    coord=t.get("coordinate", 0),
                )
            )
        try:
            blocks.append(Block(bounds=tuple(bounds), lattice=lattice))
            agents.append(
                AgentSpec(weight=float(a["weight"]), terms=tuple(terms), constant=float(a.get("constant", 0.0)))
            )
        except ValidationError as exc:
            raise ValidationError(f"{p}: {exc}") from None

    game = GameSpec(
        space=StrategySpace(blocks=tuple(blocks)),
        agents=tuple(agents),
        collective=_collective_from(data["collective"], "collective"),
        regularizer=_regularizer_from(data["regularizer"], "regularizer"),
        reg_weight=float(data["lambda"]),
        dist=dist,
        weighting=weighting,
    )
    solver_defaults = {
        algo: _solver_config_from(cfg, f"solver_defaults.{algo}")
        for algo, cfg in data.get("solver_defaults", {}).items()
    }
    x0_defaults = tuple(
        _floats(x, f"x0_defaults[{j}]") for j, x in enumerate(data.get("x0_defaults", []))
    ) or ((0.0,) * game.space.total_dim,)
    certification = data.get("certification", {"resolution": 101, "budget": 10_000_000})
    _require(certification, "certification", {"resolution": int, "budget": int})
    return ScenarioDef(
        name=data["meta"]["name"],
        description=data["meta"].get("description", ""),
        game=game,
        x0_defaults=x0_defaults,
        solver_defaults=solver_defaults,
        certification=dict(certification),
        targets=data.get("targets", {}),
        params=data.get("params", {}),
    )


def scenario_to_dict(s: ScenarioDef) -> dict:
    game = s.game
    agents = []
    for i, a in enumerate(game.agents):
        blk = game.space.blocks[i]
        entry: dict[str, Any] = {
            "weight": float(a.weight),
            "box": [[float(lo), float(hi)] for lo, hi in blk.bounds],
            "individual_terms": [
                {
                    "sign": t.sign,
                    "coordinate": t.coord,
                    "value_fn": _value_fn_to(t.value_fn),
                    "reward_fn": _reward_fn_to(t.reward_fn),
                }
                for t in a.terms
            ],
        }
        if blk.lattice is not None:
            entry["lattice"] = {"origin": float(blk.lattice.origin), "step": float(blk.lattice.step)}
        if a.constant != 0.0:
            entry["constant"] = float(a.constant)
        agents.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "meta": {"name": s.name, "description": s.description},
        "distribution": {
            "support": [float(v) for v in game.dist.support],
            "probs": [float(v) for v in game.dist.probs],
        },
        "weighting": _weighting_to(game.weighting),
        "lambda": float(game.reg_weight),
        "agents": agents,
        "collective": _collective_to(game.collective),
        "regularizer": _regularizer_to(game.regularizer),
        "solver_defaults": {
            algo: solver_config_to_dict(cfg) for algo, cfg in sorted(s.solver_defaults.items())
        },
        "certification": dict(s.certification),
        "x0_defaults": [[float(v) for v in x] for x in s.x0_defaults],
        "targets": _jsonable(s.targets),
        "params": _jsonable(s.params),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def canonical_json(data: dict) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def scenario_hash(s: ScenarioDef) -> str:
    return hashlib.sha256(canonical_json(scenario_to_dict(s)).encode()).hexdigest()


def load_scenario(path: str | Path) -> ScenarioDef:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read scenario file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON (line {exc.lineno}: {exc.msg})") from None
    return scenario_from_dict(data)


def save_scenario(s: ScenarioDef, path: str | Path) -> None:
    _atomic_write(Path(path), canonical_json(scenario_to_dict(s)))


# ---------------------------------------------------------------------------
# run outputs
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return repr(float(v))


def trajectory_csv_text(traj: Trajectory, labels: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n_agents = len(traj.points[0].utilities)
    writer.writerow(["iter", *labels, "potential", *[f"u{i + 1}" for i in range(n_agents)], "displacement"])
    for p in traj.points:
        writer.writerow(
            [p.iteration, *[_fmt(v) for v in p.x], _fmt(p.potential),
             *[_fmt(u) for u in p.utilities], _fmt(p.displacement)]
        )
    return buf.getvalue()


def timings_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "wall_ms"])
    for p in traj.points:
        writer.writerow([p.iteration, f"{p.wall_ms:.3f}"])
    return buf.getvalue()


def relay_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    width = max(len(e.block) for e in traj.relay_events)
    writer.writerow(["cycle", "agent", *[f"v{j}" for j in range(width)]])
    for e in traj.relay_events:
        row = [e.cycle, e.agent, *[_fmt(v) for v in e.block]]
        row += [""] * (width - len(e.block))
        writer.writerow(row)
    return buf.getvalue()


def write_run_output(
    outdir: str | Path,
    scenario: ScenarioDef,
    algo: str,
    cfg: SolverConfig,
    traj: Trajectory,
) -> dict[str, Path]:
    """Persist one run: canonical scenario, manifest, trajectory and timing
    tables, per-path tables for averaged runs, and the relay log if present."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    labels = scenario.game.space.coord_labels()
    files: dict[str, Path] = {}

    files["scenario"] = outdir / "scenario.json"
    save_scenario(scenario, files["scenario"])

    files["trajectory"] = outdir / "trajectory.csv"
    _atomic_write(files["trajectory"], trajectory_csv_text(traj, labels))
    files["timings"] = outdir / "timings.csv"
    _atomic_write(files["timings"], timings_csv_text(traj))

    if traj.sample_paths:
        for j, p in enumerate(traj.sample_paths):
            f = outdir / f"trajectory_path{j:03d}.csv"
            _atomic_write(f, trajectory_csv_text(p, labels))
        files["paths"] = outdir
    if traj.relay_events:
        files["relay_log"] = outdir / "relay_log.csv"
        _atomic_write(files["relay_log"], relay_csv_text(traj))

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "scenario": scenario.name,
        "scenario_sha256": scenario_hash(scenario),
        "algorithm": algo,
        "config": solver_config_to_dict(cfg),
        "seed": cfg.seed,
        "status": traj.status,
        "message": traj.message,
        "iterations": traj.n_iterations,
        "final_x": [float(v) for v in traj.final_x],
        "final_potential": float(traj.points[-1].potential),
        "total_wall_ms": float(sum(p.wall_ms for p in traj.points)),
    }
    files["manifest"] = outdir / "manifest.json"
    _atomic_write(files["manifest"], canonical_json(manifest))
    return files


def write_table_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [cell if isinstance(cell, (int, str)) else _fmt(cell) for cell in row]
        )
    _atomic_write(Path(path), buf.getvalue())


def write_json(path: str | Path, data: dict) -> None:
    _atomic_write(Path(path), canonical_json(data))
