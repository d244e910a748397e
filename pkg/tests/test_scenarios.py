import numpy as np
import pytest

import potgames as pg
from potgames.fileio import canonical_json, scenario_to_dict


class TestBuilders:
    def test_registry_names(self):
        assert set(pg.CANONICAL_SCENARIOS) <= set(pg.BUILTIN_BUILDERS)
        with pytest.raises(pg.ValidationError):
            pg.get_scenario("no_such_scenario")

    def test_builders_deterministic(self):
        for name in pg.BUILTIN_BUILDERS:
            a, b = pg.get_scenario(name), pg.get_scenario(name)
            assert a.game == b.game
            assert canonical_json(scenario_to_dict(a)) == canonical_json(scenario_to_dict(b))

    def test_every_canonical_scenario_validates(self):
        for name in pg.CANONICAL_SCENARIOS:
            scen = pg.get_scenario(name)
            scen.game.validate()  # must not raise
            assert scen.game.space.contains(scen.default_x0)

    def test_identity_residual_all_canonical(self):
        for name in pg.CANONICAL_SCENARIOS:
            game = pg.get_scenario(name).game
            res = pg.verify_weighted_potential(game, 300, np.random.default_rng(0))
            assert res <= 1e-9, name


class TestSmoothTwoPlayer:
    def test_zero_threshold_utility(self):
        scen = pg.build_smooth_two_player(d1=0.0, d2=0.0)
        assert scen.game.utility(1, np.array([0.0, 0.0])) == pytest.approx(6.0, abs=1e-12)

    def test_identity_residual(self, smooth):
        assert pg.verify_weighted_potential(smooth.game, 1000, np.random.default_rng(1)) <= 1e-9

    def test_lambda_zero_differs_by_regularizer(self, smooth):
        from dataclasses import replace
        g = smooth.game
        g0 = replace(g, reg_weight=0.0)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = g.space.sample_uniform(rng)
            diff = g0.potential(x) - g.potential(x)
            assert diff == pytest.approx(0.1 * (x[0] ** 2 + x[1] ** 2), abs=1e-9)

    def test_threshold_parameters_recorded(self, smooth):
        assert smooth.params == {"d1": 1.0, "d2": 2.0}


class TestTeamNonsmooth:
    def test_target_metadata(self, team):
        g = team.game
        assert g.potential(np.array(team.targets["argmax"])) == pytest.approx(team.targets["max_value"])
        assert g.potential(np.array([4.0, -4.0])) == pytest.approx(1.8, abs=1e-12)
        gaps = pg.br_gap(g, np.array(team.targets["alt_equilibrium"]), 201)
        assert gaps.max() <= 1e-6

    def test_five_default_starts(self, team):
        assert len(team.x0_defaults) == 5
        assert (2.0, 4.0) in team.x0_defaults


class TestEnergyCommunity:
    def test_collective_values(self, energy):
        g = energy.game
        assert g.collective.value(np.array([4.0, 4.0])) == 0.0
        assert g.collective.value(np.array([1.0, 1.0])) == -18.0

    def test_consumer_gradient_at_target(self, energy):
        got = energy.game.subgrad_utility(1, np.array([4.0, 4.0]), np.random.default_rng(0))
        assert got[0] == pytest.approx(4.2, abs=1e-12)

    def test_nonnegative_box(self, energy):
        assert float(energy.game.space.lo.min()) == 0.0


class TestGridRendezvous:
    def test_collective_at_colocated(self, rendezvous):
        assert rendezvous.game.collective.value(np.zeros(6)) == 0.0

    def test_collective_at_initial_states(self, rendezvous):
        assert rendezvous.game.collective.value(rendezvous.default_x0) == -40.0

    def test_linear_position_cost(self, rendezvous):
        # agent 1 cost c1 * (x + y) enters the utility negated: 4 * 10 = 40
        assert rendezvous.game.individual_value(0, rendezvous.default_x0) == pytest.approx(-40.0)

    def test_both_exponent_variants_ship(self):
        corrected = pg.build_grid_rendezvous()
        printed = pg.build_grid_rendezvous(positive_y_exponent=True)
        k_corr = corrected.game.agents[1].terms[1].reward_fn.k
        k_print = printed.game.agents[1].terms[1].reward_fn.k
        assert k_corr == 0.3 and k_print == -0.3
        assert "grid_rendezvous_printed" in pg.BUILTIN_BUILDERS
        assert "grid_rendezvous_printed" not in pg.CANONICAL_SCENARIOS

    def test_unit_lattice(self, rendezvous):
        for blk in rendezvous.game.space.blocks:
            assert blk.lattice is not None and blk.lattice.step == 1.0


class TestSteering:
    def test_reaches_target(self, energy):
        steer = pg.SteeringConfig(tau=-4.5)
        trace = pg.steer_collective(energy, steer, energy.solver_config("imm"))
        assert trace.status == "reached"
        assert trace.final_err <= steer.tolerance

    def test_zero_eta_keeps_incentives(self, energy):
        steer = pg.SteeringConfig(tau=-4.4306664589677185, eta=0.0, tolerance=0.01, max_outer=200)
        trace = pg.steer_collective(energy, steer, energy.solver_config("imm"))
        for row in trace.rows:
            assert row.incentives == trace.rows[0].incentives
        assert trace.status == "reached"  # tau equals the unincentivized equilibrium value

    def test_target_at_equilibrium_converges_with_small_incentives(self, energy):
        # tau = collective value of the unincentivized equilibrium
        eq = pg.solve_imm(energy.game, energy.default_x0, energy.solver_config("imm"))
        tau = float(energy.game.collective.value(eq.final_x))
        trace = pg.steer_collective(energy, pg.SteeringConfig(tau=tau), energy.solver_config("imm"))
        assert trace.status == "reached"
        assert trace.final_err <= 0.02
        assert max(abs(v) for v in trace.final_incentives) <= 1.0

    def test_target_at_equilibrium_from_equilibrium_is_immediate(self, energy):
        eq = pg.solve_imm(energy.game, energy.default_x0, energy.solver_config("imm"))
        tau = float(energy.game.collective.value(eq.final_x))
        trace = pg.steer_collective(
            energy, pg.SteeringConfig(tau=tau), energy.solver_config("imm"), x0=eq.final_x
        )
        assert trace.status == "reached"
        assert trace.rows[-1].k == 1
        assert max(abs(v) for v in trace.final_incentives) <= 1e-9

    def test_unreachable_target_saturates(self, energy):
        # far below the reachable range: both incentives pin to their bounds
        steer = pg.SteeringConfig(tau=-1000.0, lam_min=-0.5, lam_max=0.5, saturation_limit=10, max_outer=300)
        trace = pg.steer_collective(energy, steer, energy.solver_config("imm"))
        assert trace.status == "unreachable"
        assert "unreachable" in trace.message

    def test_target_beyond_one_sided_saturation_hits_cap(self, energy):
        # above the range only one incentive saturates, so the loop runs to its cap
        steer = pg.SteeringConfig(tau=100.0, lam_min=-0.5, lam_max=0.5, saturation_limit=10, max_outer=40)
        trace = pg.steer_collective(energy, steer, energy.solver_config("imm"))
        assert trace.status == "cap"

    def test_error_window_nonincreasing_late(self, energy):
        steer = pg.SteeringConfig(tau=-5.0, tolerance=0.005, max_outer=400)
        trace = pg.steer_collective(energy, steer, energy.solver_config("imm"))
        errs = [r.err for r in trace.rows]
        half = len(errs) // 2
        window = [max(errs[k : k + 10]) for k in range(half, len(errs) - 10)]
        assert all(b <= a + 1e-12 for a, b in zip(window, window[1:]))

    def test_requires_linear_incentives(self, team):
        with pytest.raises(pg.ValidationError):
            pg.steer_collective(team, pg.SteeringConfig(tau=0.0), team.solver_config("imm"))

    def test_config_validation(self):
        with pytest.raises(pg.ValidationError):
            pg.SteeringConfig(tau=0.0, eta=-1.0)
        with pytest.raises(pg.ValidationError):
            pg.SteeringConfig(tau=0.0, lam_min=1.0, lam_max=-1.0)
        with pytest.raises(pg.ValidationError):
            pg.SteeringConfig(tau=0.0, tolerance=0.0)
