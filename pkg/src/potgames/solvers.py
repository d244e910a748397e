"""Learning dynamics producing trajectories over a shared game.

Three families:

* ``solve_gradient``  projected (sub)gradient ascent, optionally with Nesterov
  acceleration (restart on potential decrease) or multi-seed path averaging.
* ``solve_ibr``       cyclic best response, one trajectory entry per sweep.
* ``solve_imm``       proximal minorize-maximize: each step exactly maximizes
  potential(x) - prox_weight * ||x - x_n||^2 over the joint space.
* ``solve_immd``      distributed variant: agents cyclically maximize the
  proximal surrogate over their own block, relayed by an in-process
  coordinator that logs every hand-off.

All dynamics are deterministic given the config seed.  On lattice spaces the
agents move in unit steps along single axes; continuous inner maximization
uses golden-section searches seeded by coarse grid scans, augmented with line
searches along the kink directions of the collective utility (plain
coordinate ascent can stall on a nonsmooth ridge short of the maximizer).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InnerSolveError, ValidationError
from .game_model import GameSpec

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_ERROR = "error"


@dataclass
class SolverConfig:
    """Shared knobs for all dynamics; solvers ignore fields they do not use."""

    max_iter: int = 1000
    tol: float = 1e-8                 # stop when iterate displacement (inf-norm) drops below
    step_size: float = 0.1
    step_schedule: str = "constant"   # "constant" | "diminishing" (step / sqrt(k))
    accelerate: bool = False
    prox_weight: float = 0.1
    inner_tol: float = 1e-9
    max_inner: int = 200
    n_paths: int = 1                  # > 1: averaged multi-seed subgradient runs
    seed: int = 0
    ibr_start_agent: int = 0          # first responder; cyclic ascending order after it

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("solver.max_iter must be >= 1")
        for name in ("tol", "step_size", "prox_weight", "inner_tol"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"solver.{name} must be > 0")
        if self.step_schedule not in ("constant", "diminishing"):
            raise ValidationError(f"solver.step_schedule: unknown schedule {self.step_schedule!r}")
        if self.max_inner < 1:
            raise ValidationError("solver.max_inner must be >= 1")
        if self.n_paths < 1:
            raise ValidationError("solver.n_paths must be >= 1")
        if self.ibr_start_agent < 0:
            raise ValidationError("solver.ibr_start_agent must be >= 0")


@dataclass
class TrajectoryPoint:
    iteration: int
    x: np.ndarray
    potential: float
    utilities: tuple[float, ...]
    displacement: float
    wall_ms: float


@dataclass
class RelayEvent:
    """One coordinator hand-off: agent pushed its updated block downstream."""

    cycle: int
    agent: int
    block: tuple[float, ...]


@dataclass
class Trajectory:
    points: list[TrajectoryPoint]
    status: str
    message: str = ""
    algorithm: str = ""
    config: SolverConfig | None = None
    sample_paths: list["Trajectory"] | None = None
    relay_events: list[RelayEvent] | None = None

    @property
    def final_x(self) -> np.ndarray:
        return self.points[-1].x

    @property
    def n_iterations(self) -> int:
        return self.points[-1].iteration

    def potentials(self) -> np.ndarray:
        return np.array([p.potential for p in self.points])

    def iterates(self) -> np.ndarray:
        return np.array([p.x for p in self.points])


def _evaluate_point(game: GameSpec, x: np.ndarray) -> tuple[float, tuple[float, ...]]:
    shared = game.collective.value(x) - game.reg_weight * game.regularizer.value(x)
    inds = [game.individual_value(j, x) for j in range(game.n_agents)]
    utilities = tuple(a.weight * shared + v for a, v in zip(game.agents, inds))
    potential = shared + sum(v / a.weight for a, v in zip(game.agents, inds))
    return potential, utilities


def _record(game, points, iteration, x, displacement, wall_ms):
    potential, utilities = _evaluate_point(game, x)
    points.append(
        TrajectoryPoint(iteration, x.copy(), potential, utilities, displacement, wall_ms)
    )


# ---------------------------------------------------------------------------
# one-dimensional maximization
# ---------------------------------------------------------------------------

def golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int = 200
) -> tuple[float, float]:
    """Golden-section search for the max of a unimodal f on [lo, hi].

    Finishes with one guarded parabolic vertex step: comparison-based search
    alone cannot localize a smooth maximum below ~sqrt(eps) because the
    function is flat there, while a three-point quadratic fit is exact on
    quadratic pieces.  The vertex is only accepted when its value matches the
    incumbent up to float noise, so kinked objectives are unaffected.
    """
    lo0, hi0 = (lo, hi) if lo <= hi else (hi, lo)
    lo, hi = lo0, hi0
    if hi - lo <= tol:
        mid = 0.5 * (lo + hi)
        return mid, f(mid)
    c = hi - INVPHI * (hi - lo)
    d = lo + INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol and it < max_iter:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INVPHI * (hi - lo)
            fd = f(d)
        it += 1
    xg, fg = (c, fc) if fc >= fd else (d, fd)

    h = max(tol, 1e-5 * (hi0 - lo0), 1e-9)
    x1, x3 = max(xg - h, lo0), min(xg + h, hi0)
    if x1 < xg < x3:
        f1, f3 = f(x1), f(x3)
        denom = (xg - x1) * (fg - f3) - (xg - x3) * (fg - f1)
        if denom != 0.0:
            vx = xg - 0.5 * ((xg - x1) ** 2 * (fg - f3) - (xg - x3) ** 2 * (fg - f1)) / denom
            if x1 <= vx <= x3:
                fv = f(vx)
                if fv >= fg - 4e-16 * (1.0 + abs(fg)):
                    return vx, fv
    return xg, fg


def _scan_then_golden(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    current: float,
    tol: float,
    n_scan: int = 64,
) -> tuple[float, float]:
    """Coarse grid scan then golden-section refinement inside the best cell.

    Grid ties are broken toward the point nearest ``current``, then toward the
    smaller abscissa.
    """
    if hi <= lo:
        return lo, f(lo)
    grid = np.linspace(lo, hi, n_scan)
    vals = [f(float(t)) for t in grid]
    best = max(vals)
    tied = [j for j, v in enumerate(vals) if v >= best - 1e-12]
    j = min(tied, key=lambda jj: (abs(grid[jj] - current), grid[jj]))
    a = float(grid[max(j - 1, 0)])
    b = float(grid[min(j + 1, n_scan - 1)])
    return golden_section_max(f, a, b, tol)


def _direction_range(space, x: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """Feasible parameter interval for x + t*d inside the box."""
    tmin, tmax = -math.inf, math.inf
    for k in range(len(x)):
        dk = d[k]
        if dk == 0.0:
            continue
        a = (space.lo[k] - x[k]) / dk
        b = (space.hi[k] - x[k]) / dk
        lo_k, hi_k = (a, b) if a <= b else (b, a)
        tmin = max(tmin, lo_k)
        tmax = min(tmax, hi_k)
    if not math.isfinite(tmin) or not math.isfinite(tmax):
        return 0.0, 0.0
    return min(tmin, 0.0), max(tmax, 0.0)


# ---------------------------------------------------------------------------
# block best response
# ---------------------------------------------------------------------------

def _lattice_candidates(space, i: int, block: np.ndarray) -> list[np.ndarray]:
    """Stay plus one unit step along each axis, clipped to the box."""
    blk = space.blocks[i]
    step = blk.lattice.step
    cands = [block.copy()]
    for a in range(blk.dim):
        lo, hi = blk.bounds[a]
        for s in (step, -step):
            c = block.copy()
            c[a] += s
            if lo - 1e-9 <= c[a] <= hi + 1e-9:
                cands.append(c)
    return cands


def argmax_block(
    game: GameSpec,
    i: int,
    x: np.ndarray,
    cfg: SolverConfig,
    objective: Callable[[np.ndarray], float] | None = None,
) -> np.ndarray:
    """Maximize an objective over agent i's block, other coordinates fixed.

    ``objective`` takes the full joint vector; by default it is agent i's own
    utility.  Continuous blocks use cyclic per-coordinate scans with
    golden-section refinement; lattice blocks evaluate the unit-step candidate
    set exhaustively.  Ties prefer the candidate nearest the current block,
    then the lexicographically smallest.
    """
    if objective is None:
        objective = lambda v: game.utility(i, v)  # noqa: E731
    sl = game.space.block_slice(i)
    work = np.asarray(x, dtype=float).copy()
    block = work[sl].copy()

    if game.space.blocks[i].lattice is not None:
        best_block, best_val, best_key = None, -math.inf, None
        for cand in _lattice_candidates(game.space, i, block):
            work[sl] = cand
            val = objective(work)
            key = (float(np.linalg.norm(cand - block)), tuple(cand))
            if val > best_val + 1e-12 or (val > best_val - 1e-12 and key < best_key):
                best_block, best_val, best_key = cand, max(val, best_val), key
        return best_block

    bounds = game.space.blocks[i].bounds
    for _ in range(cfg.max_inner):
        moved = 0.0
        for a in range(len(block)):
            lo, hi = bounds[a]
            cur = float(block[a])

            def f1(t: float, a=a) -> float:
                block[a] = t
                work[sl] = block
                return objective(work)

            t_star, v_star = _scan_then_golden(f1, lo, hi, cur, cfg.inner_tol)
            v_cur = f1(cur)
            if v_star > v_cur:
                block[a] = t_star
                moved = max(moved, abs(t_star - cur))
            else:
                block[a] = cur
            work[sl] = block
        if moved <= cfg.inner_tol:
            break
    return block


# ---------------------------------------------------------------------------
# joint surrogate maximization (inner problem of the proximal scheme)
# ---------------------------------------------------------------------------

def _maximize_joint(
    game: GameSpec,
    start: np.ndarray,
    cfg: SolverConfig,
    objective: Callable[[np.ndarray], float],
) -> np.ndarray:
    """Maximize a strictly concave objective over the whole joint space.

    Cyclic passes of block maximization plus golden-section line searches
    along the collective kink tangents.  The tangent sweeps are what lets the
    iterate slide along a nonsmooth ridge to the true maximizer instead of
    stalling where it first touches the ridge.
    """
    if game.space.has_lattice:
        return _maximize_joint_lattice(game, start, cfg, objective)
    x = start.copy()
    tangents = game.kink_tangent_directions()
    for _ in range(cfg.max_inner):
        moved = 0.0
        for i in range(game.n_agents):
            sl = game.space.block_slice(i)
            new_block = argmax_block(game, i, x, cfg, objective)
            moved = max(moved, float(np.max(np.abs(new_block - x[sl]))) if len(new_block) else 0.0)
            x[sl] = new_block
        for d in tangents:
            tmin, tmax = _direction_range(game.space, x, d)
            if tmax - tmin <= cfg.inner_tol:
                continue

            def g(t: float, d=d) -> float:
                return objective(x + t * d)

            t_star, v_star = golden_section_max(g, tmin, tmax, cfg.inner_tol)
            if v_star > g(0.0):
                x = x + t_star * d
                moved = max(moved, abs(t_star) * float(np.max(np.abs(d))))
        if moved <= cfg.inner_tol:
            return x
    raise InnerSolveError(
        f"joint surrogate maximization did not reach tolerance {cfg.inner_tol} "
        f"within {cfg.max_inner} passes (last pass moved {moved:.3e})"
    )


def _maximize_joint_lattice(
    game: GameSpec,
    start: np.ndarray,
    cfg: SolverConfig,
    objective: Callable[[np.ndarray], float],
) -> np.ndarray:
    x = start.copy()
    for _ in range(cfg.max_inner):
        moved = False
        for i in range(game.n_agents):
            sl = game.space.block_slice(i)
            new_block = argmax_block(game, i, x, cfg, objective)
            if np.any(new_block != x[sl]):
                moved = True
            x[sl] = new_block
        if not moved:
            return x
    raise InnerSolveError(
        f"lattice surrogate maximization still moving after {cfg.max_inner} passes"
    )


# ---------------------------------------------------------------------------
# gradient ascent
# ---------------------------------------------------------------------------

def _lattice_unit_step(space, x: np.ndarray, proposal: np.ndarray) -> np.ndarray:
    """Restrict a proposed move to one unit lattice step per agent.

    Each agent moves along the axis with the largest proposed displacement,
    and only when that displacement exceeds half a lattice step (nearest
    rounding would otherwise keep it in place).
    """
    out = x.copy()
    for i, blk in enumerate(space.blocks):
        sl = space.block_slice(i)
        if blk.lattice is None:
            out[sl] = np.minimum(np.maximum(proposal[sl], space.lo[sl]), space.hi[sl])
            continue
        d = proposal[sl] - x[sl]
        a = int(np.argmax(np.abs(d)))
        step = blk.lattice.step
        if abs(d[a]) < 0.5 * step:
            continue
        lo, hi = blk.bounds[a]
        target = x[sl.start + a] + math.copysign(step, d[a])
        if lo - 1e-9 <= target <= hi + 1e-9:
            out[sl.start + a] = target
    return out


def _gradient_path(
    game: GameSpec, x0: np.ndarray, cfg: SolverConfig, rng: np.random.Generator
) -> Trajectory:
    points: list[TrajectoryPoint] = []
    x = game.space.project(x0)
    _record(game, points, 0, x, 0.0, 0.0)
    weights = np.concatenate(
        [np.full(game.space.blocks[i].dim, game.agents[i].weight) for i in range(game.n_agents)]
    )
    lattice = game.space.has_lattice
    t_momentum = 1.0
    y = x.copy()
    phi_prev = points[0].potential
    status, message = STATUS_MAX_ITER, ""
    for k in range(1, cfg.max_iter + 1):
        tic = time.perf_counter()
        step = cfg.step_size if cfg.step_schedule == "constant" else cfg.step_size / math.sqrt(k)
        base = y if cfg.accelerate else x
        try:
            g = game.subgrad_potential(base, rng)
            if not np.all(np.isfinite(g)):
                status, message = (
                    STATUS_ERROR,
                    f"non-finite gradient at iteration {k}, iterate {base.tolist()}",
                )
                break
            proposal = base + step * weights * g
            x_new = (
                _lattice_unit_step(game.space, x, proposal) if lattice else game.space.project(proposal)
            )
            if cfg.accelerate:
                phi_new = game.potential(x_new)
                if phi_new < phi_prev:
                    t_momentum = 1.0
                    y = x_new.copy()
                else:
                    t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_momentum * t_momentum))
                    y = game.space.project(x_new + ((t_momentum - 1.0) / t_next) * (x_new - x))
                    t_momentum = t_next
                phi_prev = phi_new
            disp = float(np.max(np.abs(x_new - x)))
            x = x_new
            _record(game, points, k, x, disp, (time.perf_counter() - tic) * 1e3)
        except DomainError as exc:
            status, message = STATUS_ERROR, f"evaluation failed at iteration {k}: {exc}"
            break
        if disp <= cfg.tol:
            status = STATUS_CONVERGED
            break
    return Trajectory(points, status, message, algorithm="gradient", config=cfg)


def _mean_trajectory(game: GameSpec, paths: list[Trajectory], cfg: SolverConfig) -> Trajectory:
    longest = max(len(p.points) for p in paths)
    points: list[TrajectoryPoint] = []
    prev = None
    for k in range(longest):
        stack = np.array([p.points[min(k, len(p.points) - 1)].x for p in paths])
        mean_x = stack.mean(axis=0)
        walls = [p.points[k].wall_ms for p in paths if k < len(p.points)]
        disp = 0.0 if prev is None else float(np.max(np.abs(mean_x - prev)))
        potential, utilities = _evaluate_point(game, mean_x)
        points.append(
            TrajectoryPoint(k, mean_x, potential, utilities, disp, float(np.mean(walls)))
        )
        prev = mean_x
    if any(p.status == STATUS_ERROR for p in paths):
        status = STATUS_ERROR
    elif all(p.status == STATUS_CONVERGED for p in paths):
        status = STATUS_CONVERGED
    else:
        status = STATUS_MAX_ITER
    message = "; ".join(sorted({p.message for p in paths if p.message}))
    return Trajectory(
        points, status, message, algorithm="gradient", config=cfg, sample_paths=paths
    )


def solve_gradient(game: GameSpec, x0: Sequence[float], cfg: SolverConfig) -> Trajectory:
    """Simultaneous projected (sub)gradient ascent on all agents.

    With ``cfg.accelerate`` the update uses Nesterov's two-sequence momentum
    with a restart whenever the potential decreases.  With ``cfg.n_paths > 1``
    that many seeded paths run and the returned trajectory is their pointwise
    mean per iteration index (individual paths attached as ``sample_paths``);
    paths that stop early are held at their final iterate.
    """
    x0 = np.asarray(x0, dtype=float)
    if cfg.n_paths == 1:
        return _gradient_path(game, x0, cfg, np.random.default_rng(cfg.seed))
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_paths)
    paths = []
    for s in seeds:
        paths.append(_gradient_path(game, x0, cfg, np.random.default_rng(s)))
    return _mean_trajectory(game, paths, cfg)


# ---------------------------------------------------------------------------
# iterative best response
# ---------------------------------------------------------------------------

def solve_ibr(game: GameSpec, x0: Sequence[float], cfg: SolverConfig) -> Trajectory:
    """Cyclic exact best response; one trajectory entry per full sweep.

    Agents update in ascending cyclic order starting from
    ``cfg.ibr_start_agent``.  The potential is nondecreasing across sweeps.
    """
    points: list[TrajectoryPoint] = []
    x = game.space.project(np.asarray(x0, dtype=float))
    _record(game, points, 0, x, 0.0, 0.0)
    n = game.n_agents
    order = [(cfg.ibr_start_agent + k) % n for k in range(n)]
    status, message = STATUS_MAX_ITER, ""
    for sweep in range(1, cfg.max_iter + 1):
        tic = time.perf_counter()
        x_prev = x.copy()
        try:
            for i in order:
                x[game.space.block_slice(i)] = argmax_block(game, i, x, cfg)
            disp = float(np.max(np.abs(x - x_prev)))
            _record(game, points, sweep, x, disp, (time.perf_counter() - tic) * 1e3)
        except DomainError as exc:
            status, message = STATUS_ERROR, f"best response failed in sweep {sweep}: {exc}"
            break
        if disp <= cfg.tol:
            status = STATUS_CONVERGED
            break
    return Trajectory(points, status, message, algorithm="ibr", config=cfg)


# ---------------------------------------------------------------------------
# proximal minorize-maximize
# ---------------------------------------------------------------------------

def proximal_step(game: GameSpec, x: Sequence[float], cfg: SolverConfig) -> np.ndarray:
    """One exact proximal maximization from x:
    argmax_v  potential(v) - prox_weight * ||v - x||^2."""
    center = np.asarray(x, dtype=float).copy()

    def surrogate(v: np.ndarray) -> float:
        dvec = v - center
        return game.potential(v) - cfg.prox_weight * float(dvec @ dvec)

    return _maximize_joint(game, center, cfg, surrogate)


def solve_imm(game: GameSpec, x0: Sequence[float], cfg: SolverConfig) -> Trajectory:
    """Proximal point iteration on the potential.

    Each step maximizes  potential(v) - prox_weight * ||v - x_n||^2  exactly
    (to the inner tolerance); the potential sequence is nondecreasing.
    """
    points: list[TrajectoryPoint] = []
    x = game.space.project(np.asarray(x0, dtype=float))
    _record(game, points, 0, x, 0.0, 0.0)
    status, message = STATUS_MAX_ITER, ""
    for n in range(1, cfg.max_iter + 1):
        tic = time.perf_counter()
        try:
            x_new = proximal_step(game, x, cfg)
            disp = float(np.max(np.abs(x_new - x)))
            x = x_new
            _record(game, points, n, x, disp, (time.perf_counter() - tic) * 1e3)
        except (InnerSolveError, DomainError) as exc:
            status, message = STATUS_ERROR, f"inner maximization failed at step {n}: {exc}"
            break
        if disp <= cfg.tol:
            status = STATUS_CONVERGED
            break
    return Trajectory(points, status, message, algorithm="imm", config=cfg)


def solve_immd(game: GameSpec, x0: Sequence[float], cfg: SolverConfig) -> Trajectory:
    """Distributed proximal scheme: agents cycle, each maximizing the
    surrogate over its own block given the latest relayed state of the others.

    On lattice blocks the candidate set per update is stay or one unit step
    along a single axis.  Every hand-off is logged as a relay event.
    """
    points: list[TrajectoryPoint] = []
    relay: list[RelayEvent] = []
    x = game.space.project(np.asarray(x0, dtype=float))
    _record(game, points, 0, x, 0.0, 0.0)
    status, message = STATUS_MAX_ITER, ""
    for cycle in range(1, cfg.max_iter + 1):
        tic = time.perf_counter()
        x_prev = x.copy()
        try:
            for i in range(game.n_agents):
                sl = game.space.block_slice(i)
                center = x[sl].copy()

                def surrogate(v: np.ndarray, sl=sl, center=center) -> float:
                    dvec = v[sl] - center
                    return game.potential(v) - cfg.prox_weight * float(dvec @ dvec)

                x[sl] = argmax_block(game, i, x, cfg, surrogate)
                relay.append(RelayEvent(cycle, i, tuple(float(v) for v in x[sl])))
            disp = float(np.max(np.abs(x - x_prev)))
            _record(game, points, cycle, x, disp, (time.perf_counter() - tic) * 1e3)
        except (InnerSolveError, DomainError) as exc:
            status, message = STATUS_ERROR, f"block surrogate failed in cycle {cycle}: {exc}"
            break
        if disp <= cfg.tol:
            status = STATUS_CONVERGED
            break
    return Trajectory(
        points, status, message, algorithm="immd", config=cfg, relay_events=relay
    )


# ---------------------------------------------------------------------------
# dispatch used by the CLI and the comparison table
# ---------------------------------------------------------------------------

ALGORITHMS = ("ga", "aga", "sga", "ibr", "imm", "immd")


def run_algorithm(game: GameSpec, algo: str, x0: Sequence[float], cfg: SolverConfig) -> Trajectory:
    """Run one named dynamic; ``ga``/``aga``/``sga`` share the gradient core."""
    if algo not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algo!r}; pick one of {ALGORITHMS}")
    if algo in ("ga", "aga") and game.space.has_lattice:
        raise ValidationError(f"algorithm {algo!r} is not supported on lattice scenarios")
    if algo == "ga":
        cfg = replace(cfg, accelerate=False, n_paths=1)
    elif algo == "aga":
        cfg = replace(cfg, accelerate=True, n_paths=1)
    elif algo == "sga":
        cfg = replace(cfg, accelerate=False)
    if algo in ("ga", "aga", "sga"):
        traj = solve_gradient(game, x0, cfg)
    elif algo == "ibr":
        traj = solve_ibr(game, x0, cfg)
    elif algo == "imm":
        traj = solve_imm(game, x0, cfg)
    else:
        traj = solve_immd(game, x0, cfg)
    traj.algorithm = algo
    return traj
