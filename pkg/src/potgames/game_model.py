"""Coordination games with a weighted potential.

A game couples N agents.  Agent i draws its strategy block from a compact box
(optionally restricted to a lattice) and receives

    J_i(x) = a_i * (C(x) - lam * H(x)) + I_i(x_i)

where C is a collective utility common to all agents, H a regularizer scaled
by lam >= 0, a_i > 0 the agent weight, and I_i a sum of distortion-aware
expected rewards of agent i's own coordinates.  Every unilateral deviation
satisfies  J_i(x) - J_i(x') = a_i * (P(x) - P(x'))  for the potential

    P(x) = C(x) - lam * H(x) + sum_j I_j(x_j) / a_j,

which is what the solvers climb and the certification oracles sweep.

Collective utilities and regularizers are built from a closed catalog of
terms so concavity and kink locations are known exactly.  Joint strategies
are plain float vectors; the strategy space owns the agent -> coordinate
block mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .pt_core import (
    OutcomeDistribution,
    ValueFunction,
    WeightingFunction,
    pt_expected_reward,
    pt_expected_reward_batch,
    pt_expected_reward_deriv,
)

CONCAVITY_SAMPLE_TOL = 1e-8


# ---------------------------------------------------------------------------
# strategy space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    """Grid restriction of a block: coordinates of the form origin + k*step."""

    origin: float = 0.0
    step: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "step", float(self.step))
        if not self.step > 0.0:
            raise ValidationError("lattice.step must be > 0")


@dataclass(frozen=True)
class Block:
    """One agent's strategy block: per-coordinate closed intervals."""

    bounds: tuple[tuple[float, float], ...]
    lattice: Lattice | None = None

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) < 1:
            raise ValidationError("block: dimension must be >= 1")
        for lo, hi in bounds:
            if not lo <= hi:
                raise ValidationError(f"block bounds: lo {lo} > hi {hi}")
            if self.lattice is not None:
                if self._k_range(lo, hi)[0] > self._k_range(lo, hi)[1]:
                    raise ValidationError(
                        f"block lattice: no feasible lattice point inside [{lo}, {hi}]"
                    )

    def _k_range(self, lo: float, hi: float) -> tuple[int, int]:
        lat = self.lattice
        kmin = math.ceil((lo - lat.origin) / lat.step - 1e-9)
        kmax = math.floor((hi - lat.origin) / lat.step + 1e-9)
        return kmin, kmax

    @property
    def dim(self) -> int:
        return len(self.bounds)


def box_block(lo: float, hi: float, dim: int = 1, lattice: Lattice | None = None) -> Block:
    """Block with the same interval on every coordinate."""
    return Block(bounds=tuple((lo, hi) for _ in range(dim)), lattice=lattice)


@dataclass(frozen=True)
class StrategySpace:
    """Per-agent blocks concatenated into one flat coordinate vector."""

    blocks: tuple[Block, ...]

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ValidationError("strategy space: need at least one block")

    @property
    def n_agents(self) -> int:
        return len(self.blocks)

    @cached_property
    def total_dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @cached_property
    def block_starts(self) -> tuple[int, ...]:
        starts, acc = [], 0
        for b in self.blocks:
            starts.append(acc)
            acc += b.dim
        return tuple(starts)

    def block_slice(self, i: int) -> slice:
        start = self.block_starts[i]
        return slice(start, start + self.blocks[i].dim)

    @cached_property
    def lo(self) -> np.ndarray:
        return np.array([lo for b in self.blocks for lo, _ in b.bounds])

    @cached_property
    def hi(self) -> np.ndarray:
        return np.array([hi for b in self.blocks for _, hi in b.bounds])

    @property
    def has_lattice(self) -> bool:
        return any(b.lattice is not None for b in self.blocks)

    def coord_labels(self) -> list[str]:
        labels = []
        for i, b in enumerate(self.blocks, start=1):
            if b.dim == 1:
                labels.append(f"x{i}")
            elif b.dim == 2:
                labels.extend([f"x{i}", f"y{i}"])
            else:
                labels.extend([f"x{i}_{j + 1}" for j in range(b.dim)])
        return labels

    def project(self, x: Sequence[float]) -> np.ndarray:
        """Clamp to the box; on lattice blocks round to the nearest feasible
        lattice point with half-way ties toward the lower bound."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_dim,):
            raise ValidationError(
                f"project: expected vector of dimension {self.total_dim}, got shape {x.shape}"
            )
        out = np.minimum(np.maximum(x, self.lo), self.hi)
        for i, b in enumerate(self.blocks):
            if b.lattice is None:
                continue
            sl = self.block_slice(i)
            lat = b.lattice
            for j, c in enumerate(range(sl.start, sl.stop)):
                v = (out[c] - lat.origin) / lat.step
                k = math.ceil(v - 0.5)  # ties round down, toward lo
                kmin, kmax = b._k_range(*b.bounds[j])
                k = min(max(k, kmin), kmax)
                out[c] = lat.origin + k * lat.step
        return out

    def contains(self, x: Sequence[float], tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_dim,):
            return False
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        return bool(np.all(np.abs(self.project(x) - x) <= tol))

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def block_sample_uniform(self, i: int, rng: np.random.Generator) -> np.ndarray:
        sl = self.block_slice(i)
        return rng.uniform(self.lo[sl], self.hi[sl])


# ---------------------------------------------------------------------------
# collective utility terms (closed catalog, concave by construction)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantTerm:
    c: float

    def value(self, x) -> float:
        return self.c

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.c)

    def add_subgrad(self, x, out, rng) -> None:
        pass

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        return []


@dataclass(frozen=True)
class NegQuadToTarget:
    """-coef * (sum of selected coordinates - target)^2"""

    coef: float
    target: float
    coords: tuple[int, ...]

    def __post_init__(self):
        if not self.coef >= 0.0:
            raise ValidationError("neg_quad_to_target: coef must be >= 0 for concavity")

    def value(self, x) -> float:
        s = 0.0
        for k in self.coords:
            s += x[k]
        d = s - self.target
        return -self.coef * d * d

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        d = X[:, self.coords].sum(axis=1) - self.target
        return -self.coef * d * d

    def add_subgrad(self, x, out, rng) -> None:
        s = 0.0
        for k in self.coords:
            s += x[k]
        g = -2.0 * self.coef * (s - self.target)
        for k in self.coords:
            out[k] += g

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        return []


@dataclass(frozen=True)
class NegSqDeviation:
    """-sum_k (x_k - center)^2 over the selected coordinates"""

    center: float
    coords: tuple[int, ...]

    def value(self, x) -> float:
        s = 0.0
        for k in self.coords:
            d = x[k] - self.center
            s -= d * d
        return s

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        d = X[:, self.coords] - self.center
        return -(d * d).sum(axis=1)

    def add_subgrad(self, x, out, rng) -> None:
        for k in self.coords:
            out[k] += -2.0 * (x[k] - self.center)

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        return []


@dataclass(frozen=True)
class NegAbsSum:
    """-|sum of selected coordinates|"""

    coords: tuple[int, ...]

    def value(self, x) -> float:
        s = 0.0
        for k in self.coords:
            s += x[k]
        return -abs(s)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return -np.abs(X[:, self.coords].sum(axis=1))

    def add_subgrad(self, x, out, rng) -> None:
        s = 0.0
        for k in self.coords:
            s += x[k]
        if s > 0.0:
            g = -1.0
        elif s < 0.0:
            g = 1.0
        else:
            # exactly at the kink: one shared draw from the subdifferential
            g = rng.uniform(-1.0, 1.0)
        for k in self.coords:
            out[k] += g

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        dirs = []
        first = self.coords[0]
        for k in self.coords[1:]:
            d = np.zeros(dim)
            d[first] = 1.0
            d[k] = -1.0
            dirs.append(d)
        return dirs


@dataclass(frozen=True)
class NegPairwiseL1:
    """-sum_{i<j} sum_axes |x_i[a] - x_j[a]| over agent coordinate tuples."""

    agent_coords: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        dims = {len(c) for c in self.agent_coords}
        if len(self.agent_coords) < 2 or len(dims) != 1:
            raise ValidationError("neg_pairwise_l1: need >= 2 agents with equal block dims")

    def value(self, x) -> float:
        s = 0.0
        n = len(self.agent_coords)
        for i in range(n):
            ci = self.agent_coords[i]
            for j in range(i):
                cj = self.agent_coords[j]
                for a in range(len(ci)):
                    s -= abs(x[ci[a]] - x[cj[a]])
        return s

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        s = np.zeros(X.shape[0])
        n = len(self.agent_coords)
        for i in range(n):
            ci = self.agent_coords[i]
            for j in range(i):
                cj = self.agent_coords[j]
                for a in range(len(ci)):
                    s -= np.abs(X[:, ci[a]] - X[:, cj[a]])
        return s

    def add_subgrad(self, x, out, rng) -> None:
        n = len(self.agent_coords)
        for i in range(n):
            ci = self.agent_coords[i]
            for j in range(i):
                cj = self.agent_coords[j]
                for a in range(len(ci)):
                    d = x[ci[a]] - x[cj[a]]
                    if d > 0.0:
                        g = -1.0
                    elif d < 0.0:
                        g = 1.0
                    else:
                        g = rng.uniform(-1.0, 1.0)
                    out[ci[a]] += g
                    out[cj[a]] -= g

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        dirs = []
        n = len(self.agent_coords)
        n_axes = len(self.agent_coords[0])
        for a in range(n_axes):
            for i in range(n):
                for j in range(i):
                    d = np.zeros(dim)
                    d[self.agent_coords[i][a]] = 1.0
                    d[self.agent_coords[j][a]] = 1.0
                    dirs.append(d)
            if n >= 3:
                d = np.zeros(dim)
                for i in range(n):
                    d[self.agent_coords[i][a]] = 1.0
                dirs.append(d)
        return dirs


CollectiveTerm = ConstantTerm | NegQuadToTarget | NegSqDeviation | NegAbsSum | NegPairwiseL1


@dataclass(frozen=True)
class CollectiveUtility:
    """Sum of catalog terms; concave in x by construction."""

    terms: tuple[CollectiveTerm, ...]

    def value(self, x) -> float:
        return sum(t.value(x) for t in self.terms)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for t in self.terms:
            out += t.value_batch(X)
        return out

    def add_subgrad(self, x, out, rng) -> None:
        for t in self.terms:
            t.add_subgrad(x, out, rng)

    def kink_tangents(self, dim: int) -> list[np.ndarray]:
        dirs = []
        for t in self.terms:
            dirs.extend(t.kink_tangents(dim))
        return dirs

    def max_coord(self) -> int:
        top = -1
        for t in self.terms:
            if isinstance(t, NegPairwiseL1):
                top = max(top, max(max(c) for c in t.agent_coords))
            elif not isinstance(t, ConstantTerm):
                top = max(top, max(t.coords))
        return top


# ---------------------------------------------------------------------------
# regularizer terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedSqNorm:
    """sum_k weights[k] * (x[coords[k]] - centers[k])^2, all weights > 0."""

    coords: tuple[int, ...]
    centers: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not (len(self.coords) == len(self.centers) == len(self.weights)):
            raise ValidationError("weighted_sq_norm: coords/centers/weights lengths differ")
        if any(not w > 0.0 for w in self.weights):
            raise ValidationError("weighted_sq_norm: weights must all be > 0")

    def value(self, x) -> float:
        s = 0.0
        for k, c, w in zip(self.coords, self.centers, self.weights):
            d = x[k] - c
            s += w * d * d
        return s

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        d = X[:, self.coords] - np.array(self.centers)
        return (d * d) @ np.array(self.weights)

    def add_grad(self, x, out, scale: float) -> None:
        for k, c, w in zip(self.coords, self.centers, self.weights):
            out[k] += scale * 2.0 * w * (x[k] - c)


@dataclass(frozen=True)
class LinearIncentive:
    """sum_k coeffs[k] * x[coords[k]]; not strictly convex, may go negative."""

    coords: tuple[int, ...]
    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coords) != len(self.coeffs):
            raise ValidationError("linear_incentive: coords and coeffs lengths differ")

    def value(self, x) -> float:
        s = 0.0
        for k, c in zip(self.coords, self.coeffs):
            s += c * x[k]
        return s

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return X[:, self.coords] @ np.array(self.coeffs)

    def add_grad(self, x, out, scale: float) -> None:
        for k, c in zip(self.coords, self.coeffs):
            out[k] += scale * c


RegularizerTerm = WeightedSqNorm | LinearIncentive


@dataclass(frozen=True)
class Regularizer:
    terms: tuple[RegularizerTerm, ...] = ()

    def value(self, x) -> float:
        return sum(t.value(x) for t in self.terms)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for t in self.terms:
            out += t.value_batch(X)
        return out

    def add_grad(self, x, out, scale: float) -> None:
        for t in self.terms:
            t.add_grad(x, out, scale)

    def covers_strictly(self, dim: int) -> bool:
        """True when every coordinate carries a positive quadratic weight."""
        covered = set()
        for t in self.terms:
            if isinstance(t, WeightedSqNorm):
                covered.update(t.coords)
        return covered >= set(range(dim))

    def max_coord(self) -> int:
        top = -1
        for t in self.terms:
            if t.coords:
                top = max(top, max(t.coords))
        return top


# ---------------------------------------------------------------------------
# individual reward structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardFunction:
    """Closed catalog of reward maps r(x, xi).

    Kinds:
      * ``affine_scaled``     (x - d) * xi
      * ``scale_shift``       x * xi - d
      * ``exp_of_product``    exp(-k * x * xi)
      * ``exp_plain``         exp(-k * x)          (outcome independent)
      * ``linear``            c * x                (outcome independent)
    """

    kind: str
    d: float = 0.0
    k: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("affine_scaled", "scale_shift", "exp_of_product", "exp_plain", "linear"):
            raise ValidationError(f"reward_fn.kind: unknown kind {self.kind!r}")
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "c", float(self.c))

    def __call__(self, x: float, xi: float) -> float:
        if self.kind == "affine_scaled":
            return (x - self.d) * xi
        if self.kind == "scale_shift":
            return x * xi - self.d
        try:
            if self.kind == "exp_of_product":
                return math.exp(-self.k * x * xi)
            if self.kind == "exp_plain":
                return math.exp(-self.k * x)
        except OverflowError:
            return math.inf
        return self.c * x

    def dx(self, x: float, xi: float) -> float:
        if self.kind == "affine_scaled":
            return xi
        if self.kind == "scale_shift":
            return xi
        try:
            if self.kind == "exp_of_product":
                return -self.k * xi * math.exp(-self.k * x * xi)
            if self.kind == "exp_plain":
                return -self.k * math.exp(-self.k * x)
        except OverflowError:
            return -math.inf if self.k > 0 else math.inf
        return self.c

    def apply(self, xs: np.ndarray, xis: np.ndarray) -> np.ndarray:
        if self.kind == "affine_scaled":
            return (xs - self.d) * xis
        if self.kind == "scale_shift":
            return xs * xis - self.d
        with np.errstate(over="ignore"):
            if self.kind == "exp_of_product":
                return np.exp(-self.k * xs * xis)
            if self.kind == "exp_plain":
                return np.exp(-self.k * xs) * np.ones_like(xis)
        return self.c * xs * np.ones_like(xis)


@dataclass(frozen=True)
class IndividualTerm:
    """One signed distortion-aware expectation on a block-local coordinate."""

    sign: int
    value_fn: ValueFunction
    reward_fn: RewardFunction
    coord: int = 0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValidationError("individual term: sign must be +1 or -1")
        if self.coord < 0:
            raise ValidationError("individual term: coordinate must be >= 0")


@dataclass(frozen=True)
class AgentSpec:
    """Weight and individual reward structure of one agent."""

    weight: float
    terms: tuple[IndividualTerm, ...] = ()
    constant: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "constant", float(self.constant))
        if not self.weight > 0.0:
            raise ValidationError("agent.weight must be > 0")


# ---------------------------------------------------------------------------
# the assembled game
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameSpec:
    """The full game: space, agents, collective utility, regularizer, shared
    outcome distribution and weighting, and the regularization strength."""

    space: StrategySpace
    agents: tuple[AgentSpec, ...]
    collective: CollectiveUtility
    regularizer: Regularizer
    reg_weight: float
    dist: OutcomeDistribution
    weighting: WeightingFunction

    def __post_init__(self):
        object.__setattr__(self, "reg_weight", float(self.reg_weight))
        if len(self.agents) != self.space.n_agents:
            raise ValidationError("game: number of agents differs from number of blocks")
        if self.reg_weight < 0.0:
            raise ValidationError("game.reg_weight must be >= 0")
        dim = self.space.total_dim
        if self.collective.max_coord() >= dim:
            raise ValidationError("collective term references a coordinate outside the space")
        if self.regularizer.max_coord() >= dim:
            raise ValidationError("regularizer term references a coordinate outside the space")
        for i, agent in enumerate(self.agents):
            for t in agent.terms:
                if t.coord >= self.space.blocks[i].dim:
                    raise ValidationError(
                        f"agents[{i}]: individual term coordinate {t.coord} outside block of dim "
                        f"{self.space.blocks[i].dim}"
                    )

    # -- structure -----------------------------------------------------------
    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @cached_property
    def weights(self) -> tuple[float, ...]:
        return tuple(a.weight for a in self.agents)

    def validate(self) -> list[str]:
        """Soft checks; returns human-readable warnings (never raises)."""
        warnings: list[str] = []
        for i in range(self.n_agents - 1):
            if self.agents[i + 1].weight > self.agents[i].weight + 1e-12:
                warnings.append(
                    f"agent weights are not nonincreasing (a[{i + 1}] > a[{i}]); "
                    "no shipped result depends on the ordering"
                )
                break
        if self.regularizer.terms and not self.regularizer.covers_strictly(self.space.total_dim):
            if not self._collective_strictly_concave():
                warnings.append(
                    "regularizer is not strictly convex on every coordinate and the collective "
                    "utility is not strictly concave; uniqueness of the potential maximizer is "
                    "not guaranteed"
                )
        if any(isinstance(t, LinearIncentive) for t in self.regularizer.terms):
            if np.any(self.space.lo < 0.0):
                warnings.append(
                    "linear incentive regularizer on a box with negative coordinates; "
                    "the regularizer may be negative there"
                )
        warnings.extend(self._concavity_warnings())
        return warnings

    def _collective_strictly_concave(self) -> bool:
        covered = set()
        for t in self.collective.terms:
            if isinstance(t, NegSqDeviation):
                covered.update(t.coords)
        return covered >= set(range(self.space.total_dim))

    def _concavity_warnings(self) -> list[str]:
        out = []
        for i, agent in enumerate(self.agents):
            sl = self.space.block_slice(i)
            for ti, term in enumerate(agent.terms):
                lo = float(self.space.lo[sl.start + term.coord])
                hi = float(self.space.hi[sl.start + term.coord])
                grid = np.linspace(lo, hi, 33)
                try:
                    vals = [
                        term.sign
                        * pt_expected_reward(term.value_fn, term.reward_fn, float(g), self.dist, self.weighting)
                        for g in grid
                    ]
                except DomainError as exc:
                    out.append(f"agents[{i}].terms[{ti}]: evaluation failed on sample grid: {exc}")
                    continue
                if not all(math.isfinite(v) for v in vals):
                    out.append(f"agents[{i}].terms[{ti}]: non-finite values on the strategy interval")
                    continue
                worst = 0.0
                for a in range(len(grid) - 2):
                    mid = vals[a + 1]
                    chord = 0.5 * (vals[a] + vals[a + 2])
                    worst = max(worst, chord - mid)
                if worst > CONCAVITY_SAMPLE_TOL:
                    label = "concave" if term.sign == 1 else "convex"
                    out.append(
                        f"agents[{i}].terms[{ti}]: signed term is not {label} on its coordinate "
                        f"(midpoint violation {worst:.3e})"
                    )
        return out

    # -- scalar evaluation ----------------------------------------------------
    def collective_value(self, x) -> float:
        return self.collective.value(x)

    def regularizer_value(self, x) -> float:
        return self.regularizer.value(x)

    def individual_value(self, i: int, x) -> float:
        agent = self.agents[i]
        total = agent.constant
        base = self.space.block_starts[i]
        for t in agent.terms:
            total += t.sign * pt_expected_reward(
                t.value_fn, t.reward_fn, float(x[base + t.coord]), self.dist, self.weighting
            )
        return total

    def utility(self, i: int, x) -> float:
        if not 0 <= i < self.n_agents:
            raise ValidationError(f"agent index {i} out of range")
        shared = self.collective.value(x) - self.reg_weight * self.regularizer.value(x)
        return self.agents[i].weight * shared + self.individual_value(i, x)

    def utilities(self, x) -> tuple[float, ...]:
        shared = self.collective.value(x) - self.reg_weight * self.regularizer.value(x)
        return tuple(
            a.weight * shared + self.individual_value(i, x) for i, a in enumerate(self.agents)
        )

    def potential(self, x) -> float:
        total = self.collective.value(x) - self.reg_weight * self.regularizer.value(x)
        for j, agent in enumerate(self.agents):
            total += self.individual_value(j, x) / agent.weight
        return total

    # -- batch evaluation (used by the grid oracles) --------------------------
    def _individual_batch(self, i: int, X: np.ndarray) -> np.ndarray:
        agent = self.agents[i]
        out = np.full(X.shape[0], agent.constant)
        base = self.space.block_starts[i]
        for t in agent.terms:
            xs = X[:, base + t.coord]
            out += t.sign * pt_expected_reward_batch(
                t.value_fn, t.reward_fn.apply, xs, self.dist, self.weighting
            )
        return out

    def potential_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = self.collective.value_batch(X) - self.reg_weight * self.regularizer.value_batch(X)
        for j, agent in enumerate(self.agents):
            out += self._individual_batch(j, X) / agent.weight
        return out

    def utility_batch(self, i: int, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        shared = self.collective.value_batch(X) - self.reg_weight * self.regularizer.value_batch(X)
        return self.agents[i].weight * shared + self._individual_batch(i, X)

    # -- subgradients ----------------------------------------------------------
    def subgrad_potential(self, x, rng: np.random.Generator) -> np.ndarray:
        """One element of the superdifferential of the potential at x.

        Smooth contributions are analytic; each absolute-value kink that is
        active exactly at its breakpoint consumes one uniform draw from
        [-1, 1].  Away from kinks the result does not touch ``rng``.
        """
        out = np.zeros(self.space.total_dim)
        self.collective.add_subgrad(x, out, rng)
        if self.reg_weight != 0.0:
            self.regularizer.add_grad(x, out, scale=-self.reg_weight)
        for j, agent in enumerate(self.agents):
            base = self.space.block_starts[j]
            inv_a = 1.0 / agent.weight
            for t in agent.terms:
                g = pt_expected_reward_deriv(
                    t.value_fn,
                    t.reward_fn,
                    t.reward_fn.dx,
                    float(x[base + t.coord]),
                    self.dist,
                    self.weighting,
                )
                out[base + t.coord] += inv_a * t.sign * g
        return out

    def subgrad_utility(self, i: int, x, rng: np.random.Generator) -> np.ndarray:
        """Subgradient of J_i restricted to agent i's block.

        Coincides with a_i times the matching block of ``subgrad_potential``
        (same kink draws), which is the scaling identity the dynamics rely on.
        """
        if not 0 <= i < self.n_agents:
            raise ValidationError(f"agent index {i} out of range")
        full = self.subgrad_potential(x, rng)
        return self.agents[i].weight * full[self.space.block_slice(i)]

    def kink_tangent_directions(self) -> list[np.ndarray]:
        """Directions along which the collective kinks stay constant; used to
        augment coordinate searches on the nonsmooth potential."""
        seen = set()
        dirs = []
        for d in self.collective.kink_tangents(self.space.total_dim):
            key = tuple(d)
            if key not in seen:
                seen.add(key)
                dirs.append(d)
        return dirs


def verify_weighted_potential(
    game: GameSpec, samples: int = 1000, rng: np.random.Generator | None = None
) -> float:
    """Max residual of |dJ_i - a_i * dP| over random unilateral deviations."""
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for _ in range(samples):
        x = game.space.sample_uniform(rng)
        i = int(rng.integers(game.n_agents))
        x_alt = x.copy()
        x_alt[game.space.block_slice(i)] = game.space.block_sample_uniform(i, rng)
        dj = game.utility(i, x) - game.utility(i, x_alt)
        dp = game.potential(x) - game.potential(x_alt)
        worst = max(worst, abs(dj - game.agents[i].weight * dp))
    return worst
