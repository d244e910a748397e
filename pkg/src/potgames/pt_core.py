"""Prospect-theoretic reward valuation.

A prospect is a finite list of (reward, probability) pairs with rewards in
nondecreasing order.  Its perceived value is

    sum_j  qd_j * V(R_j)

where V is a monotone value function and the distorted weights qd are built
from cumulative probabilities through a weighting function w on [0, 1]:

    qd_1 = w(q_1),   qd_j = w(q_1 + ... + q_j) - w(q_1 + ... + q_{j-1}).

Because w(0) = 0 and w(1) = 1 are enforced, the qd telescope to a probability
vector.  All objects here are immutable and all functions are pure.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ValidationError

PROB_SUM_TOL = 1e-12
ENDPOINT_TOL = 1e-9
CONTINUITY_TOL = 1e-9


def _as_float_tuple(values: Sequence[float], what: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: expected a sequence of numbers") from exc
    for v in out:
        if not math.isfinite(v):
            raise ValidationError(f"{what}: non-finite entry {v!r}")
    return out


@dataclass(frozen=True)
class OutcomeDistribution:
    """Finite support of the outcome variable with its probabilities.

    The support must be strictly increasing.  Positivity of the outcomes is a
    per-scenario concern and is not enforced here.
    """

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "support", _as_float_tuple(self.support, "distribution.support"))
        object.__setattr__(self, "probs", _as_float_tuple(self.probs, "distribution.probs"))
        if len(self.support) < 1:
            raise ValidationError("distribution.support: need at least one outcome")
        if len(self.support) != len(self.probs):
            raise ValidationError("distribution: support and probs lengths differ")
        for a, b in zip(self.support, self.support[1:]):
            if not a < b:
                raise ValidationError("distribution.support: must be strictly increasing")
        for p in self.probs:
            if p < 0.0 or p > 1.0:
                raise ValidationError(f"distribution.probs: probability {p} outside [0, 1]")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"distribution.probs: sum {sum(self.probs)!r} differs from 1 by more than {PROB_SUM_TOL}"
            )

    @property
    def size(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class WeightingFunction:
    """Monotone distortion of cumulative probabilities on [0, 1].

    Kinds:
      * ``identity``             w(p) = p
      * ``prelec``               w(p) = exp(-(-ln p)^alpha), alpha > 0
      * ``tabulated``            linear interpolation through (p, w) knots

    Endpoints are pinned: w(0) = 0 and w(1) = 1 (within ``ENDPOINT_TOL`` at
    construction, then snapped exactly), otherwise the distorted weights would
    not form a probability vector.
    """

    kind: str
    alpha: float | None = None
    knots: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind == "identity":
            pass
        elif self.kind == "prelec":
            if self.alpha is None or not (float(self.alpha) > 0.0):
                raise ValidationError("weighting.prelec: alpha must be > 0")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.kind == "tabulated":
            if not self.knots:
                raise ValidationError("weighting.tabulated: knots required")
            knots = tuple((float(p), float(v)) for p, v in self.knots)
            ps = [p for p, _ in knots]
            vs = [v for _, v in knots]
            if any(not (a < b) for a, b in zip(ps, ps[1:])):
                raise ValidationError("weighting.tabulated: knot abscissae must be strictly increasing")
            if abs(ps[0]) > ENDPOINT_TOL or abs(ps[-1] - 1.0) > ENDPOINT_TOL:
                raise ValidationError("weighting.tabulated: knots must span [0, 1]")
            if abs(vs[0]) > ENDPOINT_TOL or abs(vs[-1] - 1.0) > ENDPOINT_TOL:
                raise ValidationError("weighting.tabulated: endpoint values must be w(0)=0 and w(1)=1")
            if any(b < a - 1e-15 for a, b in zip(vs, vs[1:])):
                raise ValidationError("weighting.tabulated: values must be nondecreasing")
            if any(v < -ENDPOINT_TOL or v > 1.0 + ENDPOINT_TOL for v in vs):
                raise ValidationError("weighting.tabulated: values must lie in [0, 1]")
            # snap endpoints so telescoping sums are exact
            snapped = ((0.0, 0.0),) + knots[1:-1] + ((1.0, 1.0),)
            object.__setattr__(self, "knots", snapped)
        else:
            raise ValidationError(f"weighting.kind: unknown kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "WeightingFunction":
        return cls(kind="identity")

    @classmethod
    def prelec(cls, alpha: float) -> "WeightingFunction":
        return cls(kind="prelec", alpha=alpha)

    @classmethod
    def tabulated(cls, knots: Sequence[tuple[float, float]]) -> "WeightingFunction":
        return cls(kind="tabulated", knots=tuple(knots))

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def __call__(self, p: float) -> float:
        if self.kind == "identity":
            return p
        if self.kind == "prelec":
            if p <= 0.0:
                return 0.0
            if p >= 1.0:
                return 1.0
            return math.exp(-((-math.log(p)) ** self.alpha))
        # tabulated
        ps = [k[0] for k in self.knots]
        i = bisect.bisect_right(ps, p)
        if i <= 0:
            return self.knots[0][1]
        if i >= len(ps):
            return self.knots[-1][1]
        p0, v0 = self.knots[i - 1]
        p1, v1 = self.knots[i]
        t = (p - p0) / (p1 - p0)
        return v0 + t * (v1 - v0)

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on an array of cumulative probabilities."""
        p = np.asarray(p, dtype=float)
        if self.kind == "identity":
            return p
        if self.kind == "prelec":
            out = np.empty_like(p)
            lo = p <= 0.0
            hi = p >= 1.0
            mid = ~(lo | hi)
            out[lo] = 0.0
            out[hi] = 1.0
            out[mid] = np.exp(-((-np.log(p[mid])) ** self.alpha))
            return out
        ps = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        return np.interp(p, ps, vs)


@dataclass(frozen=True)
class Piece:
    """One closed-form segment of a piecewise value function.

    ``affine``  ->  a + b * x
    ``log1p``   ->  a + b * ln(1 + x)      (defined for x > -1)
    ``exp``     ->  a + b * exp(c * x)
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("affine", "log1p", "exp"):
            raise ValidationError(f"value_fn.piece: unknown kind {self.kind!r}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "c", float(self.c))

    def value(self, x: float) -> float:
        if self.kind == "affine":
            return self.a + self.b * x
        if self.kind == "log1p":
            if x <= -1.0:
                raise DomainError(f"log1p piece undefined at x={x} (needs x > -1)")
            return self.a + self.b * math.log1p(x)
        return self.a + self.b * math.exp(self.c * x)

    def deriv(self, x: float) -> float:
        if self.kind == "affine":
            return self.b
        if self.kind == "log1p":
            if x <= -1.0:
                raise DomainError(f"log1p piece undefined at x={x} (needs x > -1)")
            return self.b / (1.0 + x)
        return self.b * self.c * math.exp(self.c * x)


@dataclass(frozen=True)
class ValueFunction:
    """Monotone increasing transform of rewards into perceived rewards.

    Kinds:
      * ``identity``
      * ``linear``                V(x) = slope * x, slope > 0
      * ``log_gain_linear_loss``  V(x) = ln(1 + x) for x >= 0, x for x < 0
      * ``exp_saturating``        V(x) = scale * (1 - exp(-rate * x))
      * ``piecewise``             breakpoints + per-piece closed forms
    """

    kind: str
    slope: float = 1.0
    scale: float = 1.0
    rate: float = 1.0
    breakpoints: tuple[float, ...] = ()
    pieces: tuple[Piece, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "slope", float(self.slope))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rate", float(self.rate))
        if self.kind in ("identity", "log_gain_linear_loss"):
            pass
        elif self.kind == "linear":
            if not self.slope > 0.0:
                raise ValidationError("value_fn.linear: slope must be > 0")
        elif self.kind == "exp_saturating":
            if not self.scale * self.rate > 0.0:
                raise ValidationError("value_fn.exp_saturating: needs scale * rate > 0 to be increasing")
        elif self.kind == "piecewise":
            bps = _as_float_tuple(self.breakpoints, "value_fn.breakpoints")
            object.__setattr__(self, "breakpoints", bps)
            if not self.pieces:
                raise ValidationError("value_fn.piecewise: pieces required")
            if len(self.pieces) != len(bps) + 1:
                raise ValidationError("value_fn.piecewise: need len(pieces) == len(breakpoints) + 1")
            for a, b in zip(bps, bps[1:]):
                if not a < b:
                    raise ValidationError("value_fn.breakpoints: must be strictly increasing")
            self._validate_piecewise()
        else:
            raise ValidationError(f"value_fn.kind: unknown kind {self.kind!r}")

    # -- constructors -------------------------------------------------------
    @classmethod
    def identity(cls) -> "ValueFunction":
        return cls(kind="identity")

    @classmethod
    def linear(cls, slope: float) -> "ValueFunction":
        return cls(kind="linear", slope=slope)

    @classmethod
    def log_gain_linear_loss(cls) -> "ValueFunction":
        return cls(kind="log_gain_linear_loss")

    @classmethod
    def exp_saturating(cls, scale: float, rate: float) -> "ValueFunction":
        return cls(kind="exp_saturating", scale=scale, rate=rate)

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], pieces: Sequence[Piece]) -> "ValueFunction":
        return cls(kind="piecewise", breakpoints=tuple(breakpoints), pieces=tuple(pieces))

    # -- validation helpers --------------------------------------------------
    def _segment_bounds(self, i: int) -> tuple[float, float]:
        lo = self.breakpoints[i - 1] if i > 0 else -1e3
        hi = self.breakpoints[i] if i < len(self.breakpoints) else 1e3
        return lo, hi

    def _validate_piecewise(self):
        # continuity at every breakpoint, left and right limits within tolerance
        for j, bp in enumerate(self.breakpoints):
            left = self.pieces[j].value(bp)
            right = self.pieces[j + 1].value(bp)
            if abs(left - right) > CONTINUITY_TOL:
                raise ValidationError(
                    f"value_fn.piecewise: discontinuity {abs(left - right):.3e} at breakpoint {bp}"
                )
        # a log1p piece whose segment starts at or below -1 is undefined there;
        # the lowest (open-ended) piece only raises at evaluation time
        for i, piece in enumerate(self.pieces):
            if piece.kind == "log1p" and i > 0 and self.breakpoints[i - 1] <= -1.0:
                raise ValidationError("value_fn.piecewise: log1p piece reaches x <= -1")
        # monotonicity by sampling each segment
        prev = None
        for i, piece in enumerate(self.pieces):
            lo, hi = self._segment_bounds(i)
            if piece.kind == "log1p":
                lo = max(lo, -1.0 + 1e-9)
            for t in np.linspace(lo, hi, 17):
                v = piece.value(float(t))
                if prev is not None and v < prev - 1e-12:
                    raise ValidationError("value_fn.piecewise: not monotone nondecreasing")
                prev = v

    # -- evaluation ----------------------------------------------------------
    def __call__(self, r: float) -> float:
        if self.kind == "identity":
            return r
        if self.kind == "linear":
            return self.slope * r
        if self.kind == "log_gain_linear_loss":
            return math.log1p(r) if r >= 0.0 else r
        if self.kind == "exp_saturating":
            return self.scale * (1.0 - math.exp(-self.rate * r))
        i = bisect.bisect_right(self.breakpoints, r)
        return self.pieces[i].value(r)

    def deriv(self, r: float) -> float:
        """Pointwise derivative; uses the right-hand piece at a breakpoint."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "linear":
            return self.slope
        if self.kind == "log_gain_linear_loss":
            return 1.0 / (1.0 + r) if r >= 0.0 else 1.0
        if self.kind == "exp_saturating":
            return self.scale * self.rate * math.exp(-self.rate * r)
        i = bisect.bisect_right(self.breakpoints, r)
        return self.pieces[i].deriv(r)

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Vectorized evaluation."""
        r = np.asarray(r, dtype=float)
        if self.kind == "identity":
            return r
        if self.kind == "linear":
            return self.slope * r
        if self.kind == "log_gain_linear_loss":
            return np.where(r >= 0.0, np.log1p(np.maximum(r, 0.0)), r)
        if self.kind == "exp_saturating":
            return self.scale * (1.0 - np.exp(-self.rate * r))
        out = np.empty_like(r)
        flat = r.ravel()
        res = out.ravel()
        for j, v in enumerate(flat):
            res[j] = self(float(v))
        return out


@dataclass(frozen=True)
class Prospect:
    """Rewards in nondecreasing order paired with an outcome distribution."""

    rewards: tuple[float, ...]
    dist: OutcomeDistribution

    def __post_init__(self):
        object.__setattr__(self, "rewards", _as_float_tuple(self.rewards, "prospect.rewards"))
        if len(self.rewards) != self.dist.size:
            raise ValidationError("prospect: rewards and distribution must have the same length")
        for a, b in zip(self.rewards, self.rewards[1:]):
            if b < a:
                raise ValidationError("prospect.rewards: must be nondecreasing")


def _distort_sorted(probs: Sequence[float], w: WeightingFunction) -> list[float]:
    """Distorted weights for probabilities already in reward-sorted order.

    The final cumulative is snapped to 1.0 so the telescoped weights always sum
    to w(1) = 1 even when the input sum carries float error up to PROB_SUM_TOL.
    """
    if w.is_identity:
        return [float(p) for p in probs]
    out = []
    cum = 0.0
    prev = 0.0
    last = len(probs) - 1
    for j, p in enumerate(probs):
        cum = 1.0 if j == last else min(cum + p, 1.0)
        cur = w(cum)
        out.append(max(cur - prev, 0.0))
        prev = cur
    return out


def distort_probabilities(dist: OutcomeDistribution, w: WeightingFunction) -> np.ndarray:
    """Distorted probability vector for outcomes ordered as in ``dist``.

    Nonnegative and summing to 1 (exactly up to telescoping float error).
    """
    return np.array(_distort_sorted(dist.probs, w))


def pt_value(p: Prospect, v: ValueFunction, w: WeightingFunction) -> float:
    """Perceived value of a prospect: sum_j qd_j * V(R_j)."""
    qd = _distort_sorted(p.dist.probs, w)
    return float(sum(q * v(r) for q, r in zip(qd, p.rewards)))


RewardCallable = Callable[[float, float], float]


def _induced_rewards(reward: RewardCallable, x: float, dist: OutcomeDistribution) -> list[float]:
    rewards = []
    for j, xi in enumerate(dist.support):
        try:
            r = float(reward(x, xi))
        except DomainError as exc:
            raise DomainError(f"reward undefined at outcome {j} (xi={xi}, x={x}): {exc}") from exc
        if not math.isfinite(r):
            raise DomainError(f"reward non-finite at outcome {j} (xi={xi}, x={x}): got {r!r}")
        rewards.append(r)
    return rewards


def _sorted_pairs(rewards: Sequence[float], probs: Sequence[float]) -> tuple[list[float], list[float]]:
    """Sort (reward, prob) pairs by reward, stable in the original outcome order."""
    order = sorted(range(len(rewards)), key=lambda j: rewards[j])
    return [rewards[j] for j in order], [probs[j] for j in order]


def pt_value_of_pairs(
    rewards: Sequence[float],
    probs: Sequence[float],
    v: ValueFunction,
    w: WeightingFunction,
) -> float:
    """Perceived value of unordered (reward, prob) pairs.

    Pairs are sorted by reward (stable on ties) before cumulative weighting;
    equal rewards make the result invariant to their relative order.
    """
    if w.is_identity:
        # identity weighting never reorders mass, skip the sort
        total = 0.0
        for r, q in zip(rewards, probs):
            total += q * v(r)
        return total
    rs, qs = _sorted_pairs(rewards, probs)
    qd = _distort_sorted(qs, w)
    return float(sum(q * v(r) for q, r in zip(qd, rs)))


def pt_expected_reward(
    v: ValueFunction,
    reward: RewardCallable,
    x: float,
    dist: OutcomeDistribution,
    w: WeightingFunction,
) -> float:
    """Distortion-aware expectation of ``v(reward(x, xi))`` over the outcomes.

    The induced rewards are sorted jointly with their probabilities before
    cumulative weighting, regardless of the outcome order in ``dist``.
    """
    rewards = _induced_rewards(reward, x, dist)
    try:
        return pt_value_of_pairs(rewards, dist.probs, v, w)
    except DomainError as exc:
        bad = [j for j, r in enumerate(rewards) if r <= -1.0]
        hint = f" (offending outcomes: {bad})" if bad else ""
        raise DomainError(f"value function undefined on induced rewards{hint}: {exc}") from exc


def pt_expected_reward_deriv(
    v: ValueFunction,
    reward: RewardCallable,
    reward_dx: RewardCallable,
    x: float,
    dist: OutcomeDistribution,
    w: WeightingFunction,
) -> float:
    """Derivative in ``x`` of ``pt_expected_reward``.

    Uses the locally valid smooth formula: the reward ordering (hence the
    distorted weights) is held fixed at ``x`` and the chain rule is applied
    per outcome.  At reward crossings this returns a one-sided derivative.
    """
    rewards = _induced_rewards(reward, x, dist)
    if w.is_identity:
        total = 0.0
        for j, (r, q) in enumerate(zip(rewards, dist.probs)):
            total += q * v.deriv(r) * reward_dx(x, dist.support[j])
        return total
    order = sorted(range(len(rewards)), key=lambda j: rewards[j])
    qs = [dist.probs[j] for j in order]
    qd = _distort_sorted(qs, w)
    total = 0.0
    for q, j in zip(qd, order):
        total += q * v.deriv(rewards[j]) * reward_dx(x, dist.support[j])
    return total


def pt_expected_reward_batch(
    v: ValueFunction,
    reward_batch: Callable[[np.ndarray, np.ndarray], np.ndarray],
    xs: np.ndarray,
    dist: OutcomeDistribution,
    w: WeightingFunction,
) -> np.ndarray:
    """Vectorized ``pt_expected_reward`` over an array of coordinates."""
    xs = np.asarray(xs, dtype=float)
    support = np.array(dist.support)
    probs = np.array(dist.probs)
    rewards = reward_batch(xs[:, None], support[None, :])  # (K, M)
    values = v.apply(rewards)
    if w.is_identity:
        return values @ probs
    order = np.argsort(rewards, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(values, order, axis=1)
    sorted_probs = probs[order]
    cum = np.cumsum(sorted_probs, axis=1)
    cum[:, -1] = 1.0
    wc = w.apply(np.minimum(cum, 1.0))
    qd = np.diff(wc, axis=1, prepend=0.0)
    np.maximum(qd, 0.0, out=qd)
    return np.sum(sorted_vals * qd, axis=1)
