"""Brute-force certification oracles.

Everything here is deliberately independent of the learning dynamics: grids
plus one golden-section refinement pass, nothing iterative to convince.  All
sweeps respect an evaluation budget (default 1e7 points) and raise
``BudgetExceededError`` beyond it, since exhaustive search is exponential in
the total dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .game_model import GameSpec, Regularizer
from .solvers import Trajectory, golden_section_max

DEFAULT_BUDGET = 10_000_000
_CHUNK = 262_144
TIE_TOL = 1e-9
_MAX_TIES = 100_000  # flat objectives would otherwise hoard the whole grid


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "satisfied": bool(self.satisfied),
            "slack": float(self.slack),
        }


def _grid_axes(game: GameSpec, resolution: int) -> list[np.ndarray]:
    """One evaluation axis per coordinate; lattice coordinates enumerate their
    feasible lattice points instead of a uniform grid."""
    if resolution < 2:
        raise ValidationError("certification resolution must be >= 2")
    axes = []
    for blk in game.space.blocks:
        for lo, hi in blk.bounds:
            if blk.lattice is not None:
                kmin, kmax = blk._k_range(lo, hi)
                axes.append(blk.lattice.origin + blk.lattice.step * np.arange(kmin, kmax + 1))
            elif hi > lo:
                axes.append(np.linspace(lo, hi, resolution))
            else:
                axes.append(np.array([lo]))
    return axes


def _sweep_max(
    evaluate, axes: list[np.ndarray], budget: int, tie_tol: float
) -> tuple[np.ndarray, float, list[np.ndarray]]:
    """Exhaustive max of a batch-evaluable function over a product grid.

    Returns (best point, best value, tie points within tie_tol of the max).
    """
    shape = tuple(len(ax) for ax in axes)
    total = math.prod(shape)
    if total > budget:
        raise BudgetExceededError(
            f"grid of {total} points exceeds the budget of {budget}; "
            "lower the resolution or certify fewer/lower-dimensional agents"
        )
    best_val = -math.inf
    best_point = None
    ties: list[tuple[float, np.ndarray]] = []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        coords = np.unravel_index(idx, shape)
        X = np.column_stack([axes[d][coords[d]] for d in range(len(axes))])
        vals = np.asarray(evaluate(X), dtype=float)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        chunk_best = float(vals.max())
        if chunk_best > best_val:
            best_val = chunk_best
            best_point = X[int(vals.argmax())].copy()
            ties = [t for t in ties if t[0] >= best_val - tie_tol]
        if len(ties) < _MAX_TIES:
            keep = np.nonzero(vals >= best_val - tie_tol)[0]
            ties.extend((float(vals[j]), X[j].copy()) for j in keep[: _MAX_TIES - len(ties)])
    tie_points = [p for v, p in ties if v >= best_val - tie_tol]
    return best_point, best_val, tie_points


def _refine_coordinates(
    f,
    point: np.ndarray,
    axes: list[np.ndarray],
    refine_mask: list[bool],
    tol: float = 1e-9,
    passes: int = 1,
) -> tuple[np.ndarray, float]:
    """Cyclic golden-section passes around a grid point, one cell each way."""
    x = point.copy()
    best = f(x)
    for _ in range(passes):
        moved = 0.0
        for d, ax in enumerate(axes):
            if not refine_mask[d] or len(ax) < 2:
                continue
            j = int(np.argmin(np.abs(ax - x[d])))
            lo = float(ax[max(j - 1, 0)])
            hi = float(ax[min(j + 1, len(ax) - 1)])

            def g(t: float, d=d) -> float:
                old = x[d]
                x[d] = t
                v = f(x)
                x[d] = old
                return v

            t_star, v_star = golden_section_max(g, lo, hi, tol)
            if v_star > best:
                moved = max(moved, abs(t_star - x[d]))
                x[d] = t_star
                best = v_star
        if moved <= tol:
            break
    return x, best


@dataclass
class GridArgmax:
    """Result of an exhaustive potential sweep with one refinement pass."""

    point: np.ndarray
    value: float
    grid_point: np.ndarray
    grid_value: float
    ties: list[np.ndarray]
    resolution: int
    cell_widths: np.ndarray

    @property
    def refinement_delta(self) -> float:
        return self.value - self.grid_value

    def to_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "value": float(self.value),
            "grid_point": [float(v) for v in self.grid_point],
            "grid_value": float(self.grid_value),
            "n_ties": len(self.ties),
            "ties": [[float(v) for v in p] for p in self.ties],
            "resolution": self.resolution,
            "cell_widths": [float(v) for v in self.cell_widths],
        }


def grid_potential_argmax(
    game: GameSpec,
    resolution: int,
    budget: int = DEFAULT_BUDGET,
    tie_tol: float = TIE_TOL,
    refine_passes: int = 1,
) -> GridArgmax:
    """Exhaustive potential maximization on the product grid.

    Ties within ``tie_tol`` of the grid maximum are all reported, which is how
    a non-singleton maximizer set shows up at grid scale.  ``refine_passes``
    controls how many cyclic golden-section polish passes run around the best
    cell (one by default; more tightens coupled smooth maximizers).
    """
    axes = _grid_axes(game, resolution)
    grid_point, grid_value, ties = _sweep_max(game.potential_batch, axes, budget, tie_tol)
    refine_mask = [blk.lattice is None for blk in game.space.blocks for _ in range(blk.dim)]
    point, value = _refine_coordinates(
        game.potential, grid_point, axes, refine_mask, passes=refine_passes
    )
    widths = np.array([float(ax[1] - ax[0]) if len(ax) > 1 else 0.0 for ax in axes])
    return GridArgmax(point, value, grid_point, grid_value, ties, resolution, widths)


def br_gap(
    game: GameSpec,
    x,
    resolution: int,
    budget: int = DEFAULT_BUDGET,
) -> np.ndarray:
    """Per-agent best-response gaps at x, by exhaustive block sweeps.

    gap_i = max_y J_i(y, x_-i) - J_i(x), clipped below at zero.  Continuous
    blocks get one golden-section refinement pass around the grid argmax
    (block concavity makes the grid maximum bracket the true best response).
    """
    x = np.asarray(x, dtype=float)
    all_axes = _grid_axes(game, resolution)
    gaps = np.zeros(game.n_agents)
    for i in range(game.n_agents):
        sl = game.space.block_slice(i)
        axes = all_axes[sl.start : sl.stop]
        shape = tuple(len(ax) for ax in axes)
        total = math.prod(shape)
        if total > budget:
            raise BudgetExceededError(
                f"agent {i} block grid of {total} points exceeds the budget of {budget}"
            )
        base = np.tile(x, (min(total, _CHUNK), 1))
        best_val = -math.inf
        best_block = None
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total))
            coords = np.unravel_index(idx, shape)
            B = np.column_stack([axes[d][coords[d]] for d in range(len(axes))])
            X = base[: len(idx)].copy()
            X[:, sl] = B
            vals = np.asarray(game.utility_batch(i, X), dtype=float)
            vals = np.where(np.isnan(vals), -np.inf, vals)
            j = int(vals.argmax())
            if float(vals[j]) > best_val:
                best_val = float(vals[j])
                best_block = B[j].copy()
        if game.space.blocks[i].lattice is None:

            def f(blk_vec: np.ndarray, i=i, sl=sl) -> float:
                v = x.copy()
                v[sl] = blk_vec
                return game.utility(i, v)

            _, best_val = _refine_coordinates(
                f, best_block, axes, [True] * len(axes)
            )
        gaps[i] = max(best_val - game.utility(i, x), 0.0)
    return gaps


@dataclass
class RegularizationBoundReport:
    """Regularization bound audit: selected point, certified eps, and the
    potential sandwich plus the best-response gap comparison."""

    x_dagger: np.ndarray
    h_dagger: float
    eps: float
    x_reg: np.ndarray
    phi0_dagger: float
    phi0_reg: float
    gaps_in_base_game: np.ndarray
    checks: list[BoundCheck]
    resolution: int
    slack: float

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "x_dagger": [float(v) for v in self.x_dagger],
            "h_dagger": float(self.h_dagger),
            "eps": float(self.eps),
            "x_reg": [float(v) for v in self.x_reg],
            "phi0_dagger": float(self.phi0_dagger),
            "phi0_reg": float(self.phi0_reg),
            "gaps_in_base_game": [float(g) for g in self.gaps_in_base_game],
            "checks": [c.to_dict() for c in self.checks],
            "resolution": self.resolution,
            "slack": float(self.slack),
        }


def regularization_bound_check(
    game0: GameSpec,
    regularizer: Regularizer,
    lam: float,
    resolution: int,
    budget: int = DEFAULT_BUDGET,
    tie_tol: float = 1e-6,
    slack: float | None = None,
) -> RegularizationBoundReport:
    """Audit the equilibrium-selection bound of adding ``lam * regularizer``.

    Approximates the unregularized maximizer set by grid cells within
    ``tie_tol`` of the grid max, picks the member minimizing the regularizer
    (one golden-section polish along the tie direction), certifies
    eps = lam * a_max * H(x_dagger), and verifies both the potential sandwich
    and that the regularized selection is an eps-best-response point of the
    unregularized game, all within a grid-discretization slack.
    """
    if game0.reg_weight != 0.0:
        raise ValidationError("regularization_bound_check: game0 must have reg_weight == 0")
    if not lam > 0.0:
        raise ValidationError("regularization_bound_check: lam must be > 0")

    sweep0 = grid_potential_argmax(game0, resolution, budget, tie_tol=tie_tol)
    ties = sweep0.ties if sweep0.ties else [sweep0.grid_point]
    h_vals = [regularizer.value(p) for p in ties]
    j = int(np.argmin(h_vals))
    x_dagger = ties[j].copy()
    if len(ties) > 1:
        far = max(ties, key=lambda p: float(np.linalg.norm(p - x_dagger)))
        direction = far - x_dagger
        norm = float(np.linalg.norm(direction))
        if norm > 0.0:
            direction /= norm
            span = float(np.max(sweep0.cell_widths))
            grid_max = sweep0.grid_value

            def neg_h(t: float) -> float:
                p = x_dagger + t * direction
                if game0.potential(p) < grid_max - tie_tol:
                    return -math.inf
                return -regularizer.value(p)

            t_star, neg = golden_section_max(neg_h, -span, span, 1e-9)
            if math.isfinite(neg) and -neg < regularizer.value(x_dagger):
                x_dagger = x_dagger + t_star * direction

    h_dagger = float(regularizer.value(x_dagger))
    a_max = max(game0.weights)
    eps = lam * a_max * h_dagger

    game_reg = replace(game0, regularizer=regularizer, reg_weight=lam)
    sweep_reg = grid_potential_argmax(game_reg, resolution, budget)
    x_reg = sweep_reg.point

    phi0_dagger = float(game0.potential(x_dagger))
    phi0_reg = float(game0.potential(x_reg))
    if slack is None:
        slack = tie_tol + abs(sweep0.refinement_delta) + abs(sweep_reg.refinement_delta) + 1e-9
    gaps = br_gap(game0, x_reg, resolution, budget)
    checks = [
        BoundCheck(
            "phi0(x_dagger) >= phi0(x_reg)",
            phi0_dagger,
            phi0_reg,
            phi0_dagger >= phi0_reg - slack,
            slack,
        ),
        BoundCheck(
            "phi0(x_reg) >= phi0(x_dagger) - lam*H(x_dagger)",
            phi0_reg,
            phi0_dagger - lam * h_dagger,
            phi0_reg >= phi0_dagger - lam * h_dagger - slack,
            slack,
        ),
        BoundCheck(
            "max br gap of x_reg in base game <= eps",
            float(gaps.max()),
            eps,
            float(gaps.max()) <= eps + slack,
            slack,
        ),
    ]
    return RegularizationBoundReport(
        x_dagger, h_dagger, eps, x_reg, phi0_dagger, phi0_reg, gaps, checks, resolution, slack
    )


@dataclass
class RateRow:
    n: int
    suboptimality: float
    bound_dist: float
    bound_sq_dist: float
    ok_dist: bool
    ok_sq_dist: bool
    padded: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "suboptimality": self.suboptimality,
            "bound_dist": self.bound_dist,
            "bound_sq_dist": self.bound_sq_dist,
            "ok_dist": self.ok_dist,
            "ok_sq_dist": self.ok_sq_dist,
            "padded": self.padded,
        }


@dataclass
class RateCertificate:
    rows: list[RateRow]
    phi_star: float
    dist: float
    prox_weight: float

    @property
    def all_sq_satisfied(self) -> bool:
        return all(r.ok_sq_dist for r in self.rows)

    @property
    def all_dist_satisfied(self) -> bool:
        return all(r.ok_dist for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "phi_star": self.phi_star,
            "dist": self.dist,
            "prox_weight": self.prox_weight,
            "rows": [r.to_dict() for r in self.rows],
        }


def imm_rate_certificate(
    traj: Trajectory,
    game: GameSpec,
    resolution: int,
    budget: int = DEFAULT_BUDGET,
    n_max: int | None = None,
    slack: float = 1e-9,
) -> RateCertificate:
    """Per-iteration suboptimality versus the proximal decay bounds.

    Emits both the plain-distance bound  prox * D / (2n)  and the
    squared-distance bound  prox * D^2 / (2n)  from the cited proximal-point
    rate, where D is the distance from the initial iterate to the
    grid-approximated maximizer set.  Rows past the end of the trajectory are
    padded with the final iterate and flagged.
    """
    if traj.config is None:
        raise ValidationError("imm_rate_certificate: trajectory carries no solver config")
    prox = traj.config.prox_weight
    sweep = grid_potential_argmax(game, resolution, budget)
    phi_star = sweep.value
    x0 = traj.points[0].x
    candidates = [sweep.point] + sweep.ties
    dist = min(float(np.linalg.norm(x0 - p)) for p in candidates)
    last_n = traj.points[-1].iteration
    n_top = max(n_max or 0, last_n)
    by_iter = {p.iteration: p for p in traj.points}
    rows = []
    for n in range(1, n_top + 1):
        padded = n not in by_iter
        point = by_iter.get(n, traj.points[-1])
        sub = phi_star - point.potential
        b1 = prox * dist / (2.0 * n)
        b2 = prox * dist * dist / (2.0 * n)
        rows.append(RateRow(n, sub, b1, b2, sub <= b1 + slack, sub <= b2 + slack, padded))
    return RateCertificate(rows, phi_star, dist, prox)


@dataclass
class CertificationReport:
    """Point certificate: per-agent gaps, the grid argmax, and bound checks."""

    point: np.ndarray
    gaps: np.ndarray
    eps: float
    potential_at_point: float
    argmax: GridArgmax
    checks: list[BoundCheck] = field(default_factory=list)
    reg_bound: RegularizationBoundReport | None = None
    resolution: int = 0

    def to_dict(self) -> dict:
        out = {
            "point": [float(v) for v in self.point],
            "gaps": [float(g) for g in self.gaps],
            "eps": float(self.eps),
            "potential_at_point": float(self.potential_at_point),
            "argmax": self.argmax.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
            "resolution": self.resolution,
        }
        if self.reg_bound is not None:
            out["regularization_bound"] = self.reg_bound.to_dict()
        return out


def certify_point(
    game: GameSpec,
    point,
    resolution: int,
    budget: int = DEFAULT_BUDGET,
    eps_threshold: float = 1e-6,
) -> CertificationReport:
    """Full certificate for one joint strategy.

    Runs the best-response gaps at the point, the potential grid argmax, and,
    when the game is regularized, the selection bound audit against its own
    unregularized version.
    """
    point = np.asarray(point, dtype=float)
    gaps = br_gap(game, point, resolution, budget)
    eps = float(gaps.max())
    argmax = grid_potential_argmax(game, resolution, budget)
    checks = [
        BoundCheck(
            f"max br gap at point <= {eps_threshold}",
            eps,
            eps_threshold,
            eps <= eps_threshold,
            0.0,
        )
    ]
    reg_bound = None
    if game.reg_weight > 0.0 and game.regularizer.terms:
        game0 = replace(game, reg_weight=0.0)
        reg_bound = regularization_bound_check(
            game0, game.regularizer, game.reg_weight, resolution, budget
        )
        checks.extend(reg_bound.checks)
    return CertificationReport(
        point=point,
        gaps=gaps,
        eps=eps,
        potential_at_point=float(game.potential(point)),
        argmax=argmax,
        checks=checks,
        reg_bound=reg_bound,
        resolution=resolution,
    )
