import numpy as np
import pytest

import potgames as pg
from _oracles import central_diff
from potgames.game_model import (
    AgentSpec,
    Block,
    CollectiveUtility,
    ConstantTerm,
    GameSpec,
    IndividualTerm,
    Lattice,
    LinearIncentive,
    NegAbsSum,
    NegSqDeviation,
    Regularizer,
    RewardFunction,
    StrategySpace,
    WeightedSqNorm,
    box_block,
)
from potgames.errors import ValidationError
from potgames.pt_core import OutcomeDistribution, ValueFunction, WeightingFunction


def _degenerate_dist():
    return OutcomeDistribution((1.0,), (1.0,))


def _team_variant(lam):
    return GameSpec(
        space=StrategySpace(blocks=(box_block(-100, 100), box_block(-100, 100))),
        agents=(AgentSpec(weight=1.0), AgentSpec(weight=1.0)),
        collective=CollectiveUtility(terms=(ConstantTerm(5.0), NegAbsSum(coords=(0, 1)))),
        regularizer=Regularizer(terms=(WeightedSqNorm((0, 1), (0.0, 0.0), (1.0, 1.0)),)),
        reg_weight=lam,
        dist=_degenerate_dist(),
        weighting=WeightingFunction.identity(),
    )


class TestEvaluation:
    def test_team_utility_values(self, team):
        g = team.game
        assert g.utility(0, np.array([0.0, 0.0])) == pytest.approx(5.0, abs=1e-12)
        assert g.utility(1, np.array([4.0, -4.0])) == pytest.approx(1.8, abs=1e-12)

    def test_team_potential_values(self, team):
        g = team.game
        assert g.potential(np.array([0.0, 0.0])) == pytest.approx(5.0, abs=1e-12)
        assert g.potential(np.array([1.0, -1.0])) == pytest.approx(4.8, abs=1e-12)

    def test_collapsed_team_game_utility_is_collective(self):
        g = _team_variant(0.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = g.space.sample_uniform(rng)
            for i in range(2):
                assert g.utility(i, x) == pytest.approx(g.collective.value(x), abs=1e-12)

    def test_empty_game_potential_zero(self):
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(-1, 1),)),
            agents=(AgentSpec(weight=2.0),),
            collective=CollectiveUtility(terms=()),
            regularizer=Regularizer(),
            reg_weight=0.0,
            dist=_degenerate_dist(),
            weighting=WeightingFunction.identity(),
        )
        assert g.potential(np.array([0.5])) == 0.0

    def test_agent_index_out_of_range(self, team):
        with pytest.raises(ValidationError):
            team.game.utility(5, np.array([0.0, 0.0]))

    def test_lambda_zero_consistency(self, team):
        g = team.game
        g0 = _team_variant(0.0)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = g.space.sample_uniform(rng)
            lhs = g.potential(x)
            rhs = g0.potential(x) - g.reg_weight * g.regularizer.value(x)
            assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_batch_matches_scalar(self, team, smooth, energy, rendezvous):
        rng = np.random.default_rng(2)
        for scen in (team, smooth, energy, rendezvous):
            g = scen.game
            X = np.array([g.space.sample_uniform(rng) for _ in range(40)])
            np.testing.assert_allclose(
                g.potential_batch(X), [g.potential(x) for x in X], rtol=1e-12, atol=1e-12
            )
            for i in range(g.n_agents):
                np.testing.assert_allclose(
                    g.utility_batch(i, X), [g.utility(i, x) for x in X], rtol=1e-12, atol=1e-12
                )


class TestSubgradients:
    def test_kink_subgradient_example(self, team):
        g = team.game
        got = g.subgrad_potential(np.array([1.0, 1.0]), np.random.default_rng(0))
        np.testing.assert_allclose(got, [-1.2, -1.2], atol=1e-15)

    def test_smooth_matches_finite_differences(self, smooth):
        g = smooth.game
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = g.space.sample_uniform(rng)
            # stay away from the value-function breakpoints of agent 1
            if min(abs(2 * x[0] - 1), abs(10 * x[0] - 1)) < 1e-2:
                continue
            got = g.subgrad_potential(x, np.random.default_rng(0))
            fd = central_diff(g.potential, x)
            np.testing.assert_allclose(got, fd, rtol=1e-6, atol=1e-6)

    def test_smooth_point_seed_independent(self, team):
        g = team.game
        x = np.array([3.0, 1.0])
        a = g.subgrad_potential(x, np.random.default_rng(0))
        b = g.subgrad_potential(x, np.random.default_rng(999))
        np.testing.assert_array_equal(a, b)

    def test_kink_draw_depends_on_seed_and_is_bounded(self, team):
        g = team.game
        x = np.array([2.0, -2.0])  # on the ridge x1 + x2 = 0
        vals = {tuple(g.subgrad_potential(x, np.random.default_rng(s))) for s in range(8)}
        assert len(vals) > 1
        for v in vals:
            # component = sigma - 0.2 * x_k with sigma in [-1, 1]
            assert -1.0 - 0.4 - 1e-12 <= v[0] <= 1.0 - 0.4 + 1e-12

    def test_same_seed_same_draw(self, team):
        g = team.game
        x = np.array([2.0, -2.0])
        a = g.subgrad_potential(x, np.random.default_rng(5))
        b = g.subgrad_potential(x, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_subgrad_utility_scaling_identity(self, team, smooth):
        for scen in (team, smooth):
            g = scen.game
            rng = np.random.default_rng(4)
            for _ in range(10):
                x = g.space.sample_uniform(rng)
                full = g.subgrad_potential(x, np.random.default_rng(7))
                for i in range(g.n_agents):
                    blk = g.subgrad_utility(i, x, np.random.default_rng(7))
                    np.testing.assert_allclose(
                        blk, g.agents[i].weight * full[g.space.block_slice(i)], atol=1e-15
                    )

    def test_utility_gradient_matches_finite_differences(self, smooth):
        g = smooth.game
        x = np.array([1.3, -2.1])
        for i in range(2):
            got = g.subgrad_utility(i, x, np.random.default_rng(0))
            fd = central_diff(lambda v: g.utility(i, v), x)
            sl = g.space.block_slice(i)
            np.testing.assert_allclose(got, fd[sl], rtol=1e-6, atol=1e-6)

    def test_linear_individual_term_exact(self):
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(-5, 5),)),
            agents=(
                AgentSpec(
                    weight=1.0,
                    terms=(
                        IndividualTerm(
                            sign=1,
                            value_fn=ValueFunction.identity(),
                            reward_fn=RewardFunction(kind="linear", c=2.75),
                        ),
                    ),
                ),
            ),
            collective=CollectiveUtility(terms=()),
            regularizer=Regularizer(),
            reg_weight=0.0,
            dist=_degenerate_dist(),
            weighting=WeightingFunction.identity(),
        )
        got = g.subgrad_utility(0, np.array([0.7]), np.random.default_rng(0))
        assert got[0] == pytest.approx(2.75, abs=1e-15)


class TestProject:
    def test_clamp(self):
        space = StrategySpace(blocks=(box_block(-100, 100, dim=2),))
        np.testing.assert_allclose(space.project(np.array([150.0, -7.0])), [100.0, -7.0])

    def test_lattice_rounding(self):
        space = StrategySpace(blocks=(box_block(0, 10, dim=2, lattice=Lattice(0.0, 1.0)),))
        np.testing.assert_allclose(space.project(np.array([2.4, 3.6])), [2.0, 4.0])

    def test_lattice_tie_rounds_down(self):
        space = StrategySpace(blocks=(box_block(0, 10, lattice=Lattice(0.0, 1.0)),))
        assert space.project(np.array([2.5]))[0] == 2.0

    def test_feasible_unchanged(self, rendezvous):
        x = rendezvous.default_x0
        np.testing.assert_array_equal(rendezvous.game.space.project(x), x)

    def test_dimension_mismatch(self, team):
        with pytest.raises(ValidationError):
            team.game.space.project(np.array([1.0]))

    def test_lattice_infeasible_block_rejected(self):
        with pytest.raises(ValidationError):
            Block(bounds=((0.3, 0.7),), lattice=Lattice(0.0, 1.0))


class TestIdentityAndConcavity:
    def test_weighted_potential_identity(self, team, smooth):
        for scen in (team, smooth):
            res = pg.verify_weighted_potential(scen.game, 1000, np.random.default_rng(0))
            assert res <= 1e-9

    def test_single_agent_identity(self, quad_1d):
        assert pg.verify_weighted_potential(quad_1d, 200, np.random.default_rng(1)) <= 1e-12

    def test_potential_concavity_on_segments(self, team, smooth, energy):
        rng = np.random.default_rng(5)
        for scen in (team, smooth, energy):
            g = scen.game
            for _ in range(200):
                a = g.space.sample_uniform(rng)
                b = g.space.sample_uniform(rng)
                mid = 0.5 * (a + b)
                assert g.potential(mid) >= 0.5 * (g.potential(a) + g.potential(b)) - 1e-9


class TestValidation:
    def test_weight_ordering_warning(self):
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(0, 1), box_block(0, 1))),
            agents=(AgentSpec(weight=1.0), AgentSpec(weight=2.0)),
            collective=CollectiveUtility(terms=()),
            regularizer=Regularizer(),
            reg_weight=0.0,
            dist=_degenerate_dist(),
            weighting=WeightingFunction.identity(),
        )
        assert any("nonincreasing" in w for w in g.validate())

    def test_rendezvous_concavity_warnings(self, rendezvous):
        warnings = rendezvous.game.validate()
        assert sum("not concave" in w for w in warnings) == 4

    def test_nonpositive_sq_weight_rejected(self):
        with pytest.raises(ValidationError):
            WeightedSqNorm((0,), (0.0,), (0.0,))

    def test_coordinate_out_of_range(self):
        with pytest.raises(ValidationError):
            GameSpec(
                space=StrategySpace(blocks=(box_block(0, 1),)),
                agents=(AgentSpec(weight=1.0),),
                collective=CollectiveUtility(terms=(NegSqDeviation(0.0, coords=(3,)),)),
                regularizer=Regularizer(),
                reg_weight=0.0,
                dist=_degenerate_dist(),
                weighting=WeightingFunction.identity(),
            )

    def test_negative_reg_weight_rejected(self, team):
        from dataclasses import replace
        with pytest.raises(ValidationError):
            replace(team.game, reg_weight=-0.1)

    def test_linear_incentive_negative_box_warning(self):
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(-1, 1),)),
            agents=(AgentSpec(weight=1.0),),
            collective=CollectiveUtility(terms=(NegSqDeviation(0.0, coords=(0,)),)),
            regularizer=Regularizer(terms=(LinearIncentive((0,), (1.0,)),)),
            reg_weight=1.0,
            dist=_degenerate_dist(),
            weighting=WeightingFunction.identity(),
        )
        assert any("negative coordinates" in w for w in g.validate())
