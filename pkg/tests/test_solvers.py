import numpy as np
import pytest

import potgames as pg
from _oracles import lattice_potential_argmax
from potgames.errors import ValidationError
from potgames.game_model import (
    AgentSpec,
    CollectiveUtility,
    GameSpec,
    Lattice,
    NegSqDeviation,
    Regularizer,
    StrategySpace,
    box_block,
)
from potgames.pt_core import OutcomeDistribution, WeightingFunction
from potgames.solvers import golden_section_max


class TestGoldenSection:
    def test_quadratic(self):
        x, fx = golden_section_max(lambda t: -(t - 1.7) ** 2, -5.0, 5.0, 1e-10)
        assert x == pytest.approx(1.7, abs=1e-9)

    def test_kink(self):
        x, _ = golden_section_max(lambda t: -abs(t - 0.3), -2.0, 2.0, 1e-9)
        assert x == pytest.approx(0.3, abs=1e-7)

    def test_degenerate_interval(self):
        x, fx = golden_section_max(lambda t: t, 2.0, 2.0, 1e-9)
        assert x == 2.0


class TestArgmaxBlock:
    def test_kink_best_response(self, team):
        # agent 2 against x1 = 4: optimum sits on the kink at -4
        blk = pg.argmax_block(team.game, 1, np.array([4.0, 0.0]), pg.SolverConfig(inner_tol=1e-10))
        assert blk[0] == pytest.approx(-4.0, abs=1e-6)

    def test_quadratic_block(self, quad_1d):
        blk = pg.argmax_block(quad_1d, 0, np.array([9.0]), pg.SolverConfig(inner_tol=1e-10))
        assert blk[0] == pytest.approx(3.0, abs=1e-8)

    def test_lattice_candidates_exhaustive(self, rendezvous):
        g = rendezvous.game
        x = rendezvous.default_x0
        cfg = pg.SolverConfig()
        blk = pg.argmax_block(g, 0, x, cfg)
        # oracle: evaluate the five candidates directly
        best, best_v = None, -np.inf
        for dx, dy in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
            cand = x.copy()
            cand[0] += dx
            cand[1] += dy
            if 0 <= cand[0] <= 30 and 0 <= cand[1] <= 30:
                v = g.utility(0, cand)
                if v > best_v:
                    best, best_v = cand[:2].copy(), v
        np.testing.assert_allclose(blk, best)

    def test_lattice_tie_prefers_stay(self):
        # constant utility: every candidate ties; stay must win
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(0, 4, dim=2, lattice=Lattice(0.0, 1.0)),)),
            agents=(AgentSpec(weight=1.0),),
            collective=CollectiveUtility(terms=()),
            regularizer=Regularizer(),
            reg_weight=0.0,
            dist=OutcomeDistribution((1.0,), (1.0,)),
            weighting=WeightingFunction.identity(),
        )
        blk = pg.argmax_block(g, 0, np.array([2.0, 2.0]), pg.SolverConfig())
        np.testing.assert_array_equal(blk, [2.0, 2.0])


class TestGradient:
    def test_scalar_quadratic_converges(self, quad_1d):
        traj = pg.solve_gradient(quad_1d, np.array([0.0]), pg.SolverConfig(max_iter=200, tol=1e-8, step_size=0.4))
        assert traj.status == "converged"
        assert traj.final_x[0] == pytest.approx(3.0, abs=1e-6)

    def test_start_at_maximizer(self, quad_1d):
        traj = pg.solve_gradient(quad_1d, np.array([3.0]), pg.SolverConfig(max_iter=50, tol=1e-8, step_size=0.4))
        assert traj.status == "converged"
        assert traj.n_iterations == 1

    def test_team_subgradient_reaches_origin_region(self, team):
        cfg = pg.SolverConfig(max_iter=2000, tol=1e-12, step_size=0.1, seed=0)
        traj = pg.solve_gradient(team.game, np.array([2.0, 4.0]), cfg)
        assert np.max(np.abs(traj.final_x)) <= 0.15

    def test_mean_path_attached(self, team):
        cfg = pg.SolverConfig(max_iter=300, tol=1e-12, step_size=0.1, seed=0, n_paths=5)
        traj = pg.solve_gradient(team.game, np.array([2.0, 4.0]), cfg)
        assert traj.sample_paths is not None and len(traj.sample_paths) == 5
        stack = np.array([p.points[-1].x for p in traj.sample_paths])
        np.testing.assert_allclose(traj.final_x, stack.mean(axis=0), atol=1e-12)

    def test_bit_identical_with_same_seed(self, team):
        cfg = pg.SolverConfig(max_iter=400, tol=1e-12, step_size=0.1, seed=123)
        a = pg.solve_gradient(team.game, np.array([1.0, -1.0]), cfg)
        b = pg.solve_gradient(team.game, np.array([1.0, -1.0]), cfg)
        np.testing.assert_array_equal(a.iterates(), b.iterates())

    def test_seed_changes_kink_path(self, team):
        mk = lambda s: pg.solve_gradient(
            team.game, np.array([1.0, -1.0]),
            pg.SolverConfig(max_iter=50, tol=1e-12, step_size=0.1, seed=s),
        )
        assert not np.array_equal(mk(0).iterates(), mk(1).iterates())

    def test_matches_manual_potential_ascent(self, team):
        # team game with unit weights: the dynamic is projected ascent on the potential
        g = team.game
        cfg = pg.SolverConfig(max_iter=60, tol=1e-12, step_size=0.1, seed=9)
        traj = pg.solve_gradient(g, np.array([2.0, 4.0]), cfg)
        rng = np.random.default_rng(9)
        x = np.array([2.0, 4.0])
        manual = [x.copy()]
        for _ in range(60):
            x = g.space.project(x + 0.1 * g.subgrad_potential(x, rng))
            manual.append(x.copy())
        np.testing.assert_array_equal(traj.iterates(), np.array(manual)[: len(traj.points)])

    def test_acceleration_restart_converges(self, smooth):
        cfg = pg.SolverConfig(max_iter=3000, tol=1e-10, step_size=0.1, accelerate=True)
        traj = pg.solve_gradient(smooth.game, smooth.default_x0, cfg)
        assert traj.status == "converged"

    def test_error_status_on_overflowing_game(self):
        scen = pg.build_grid_rendezvous(positive_y_exponent=True)
        x0 = np.array([10.0, 0.0, 0.0, 22.0, 10.0, 10.0])
        cfg = pg.SolverConfig(max_iter=50, tol=1e-12, step_size=0.3, seed=0)
        traj = pg.solve_gradient(scen.game, x0, cfg)
        assert traj.status == "error"
        assert "iteration" in traj.message

    def test_diminishing_schedule(self, quad_1d):
        cfg = pg.SolverConfig(max_iter=5000, tol=1e-10, step_size=0.5, step_schedule="diminishing")
        traj = pg.solve_gradient(quad_1d, np.array([0.0]), cfg)
        assert traj.final_x[0] == pytest.approx(3.0, abs=1e-3)


class TestIBR:
    def test_ridge_trap(self, team):
        traj = pg.solve_ibr(team.game, np.array([4.0, 0.0]), team.solver_config("ibr"))
        assert traj.status == "converged"
        np.testing.assert_allclose(traj.final_x, [4.0, -4.0], atol=1e-6)

    def test_agent_one_first_reaches_ridge(self, team):
        cfg = pg.SolverConfig(max_iter=50, tol=1e-8, inner_tol=1e-10, ibr_start_agent=0)
        traj = pg.solve_ibr(team.game, np.array([2.0, 4.0]), cfg)
        assert traj.status == "converged"
        assert abs(traj.final_x.sum()) <= 1e-6  # lands on the ridge x1 + x2 = 0

    def test_sweep_potential_monotone(self, team, smooth):
        for scen, x0 in ((team, np.array([2.0, 4.0])), (smooth, smooth.default_x0)):
            traj = pg.solve_ibr(scen.game, x0, scen.solver_config("ibr"))
            pots = traj.potentials()
            assert np.all(np.diff(pots) >= -1e-9)

    def test_smooth_limit_matches_grid_argmax(self, smooth):
        traj = pg.solve_ibr(smooth.game, smooth.default_x0, smooth.solver_config("ibr"))
        am = pg.grid_potential_argmax(smooth.game, 201, refine_passes=60)
        assert np.linalg.norm(traj.final_x - am.point) <= 0.1  # within grid resolution

    def test_single_agent_one_sweep(self, quad_1d):
        traj = pg.solve_ibr(quad_1d, np.array([9.0]), pg.SolverConfig(max_iter=10, tol=1e-8, inner_tol=1e-10))
        assert traj.status == "converged"
        assert traj.final_x[0] == pytest.approx(3.0, abs=1e-7)
        assert traj.n_iterations <= 2  # sweep 2 only confirms the fixed point


class TestIMM:
    def test_five_starts_reach_selected_optimum(self, team):
        cfg = team.solver_config("imm")
        for x0 in team.x0_defaults:
            traj = pg.solve_imm(team.game, np.array(x0), cfg)
            assert traj.status == "converged"
            assert traj.n_iterations <= 500
            assert np.max(np.abs(traj.final_x)) <= 1e-3

    def test_closed_form_halving(self, prox_1d):
        cfg = pg.SolverConfig(max_iter=20, tol=1e-14, prox_weight=1.0, inner_tol=1e-12)
        traj = pg.solve_imm(prox_1d, np.array([1.0]), cfg)
        for p in traj.points:
            assert p.x[0] == pytest.approx(2.0 ** (-p.iteration), abs=1e-9)

    def test_fixed_point_at_maximizer(self, quad_1d):
        cfg = pg.SolverConfig(max_iter=50, tol=1e-6, prox_weight=1.0, inner_tol=1e-10)
        traj = pg.solve_imm(quad_1d, np.array([3.0]), cfg)
        assert traj.status == "converged"
        assert traj.n_iterations == 1

    def test_proximal_step_fixed_at_certified_argmax(self, team):
        am = pg.grid_potential_argmax(team.game, 201)
        cfg = pg.SolverConfig(prox_weight=0.1, inner_tol=1e-10)
        stepped = pg.proximal_step(team.game, am.point, cfg)
        assert float(np.max(np.abs(stepped - am.point))) <= 1e-6

    def test_potential_monotone(self, team, smooth, energy):
        for scen in (team, smooth, energy):
            traj = pg.solve_imm(scen.game, scen.default_x0, scen.solver_config("imm"))
            assert np.all(np.diff(traj.potentials()) >= -1e-9)

    def test_inner_failure_reports_error(self, team):
        cfg = pg.SolverConfig(max_iter=5, tol=1e-8, prox_weight=0.1, inner_tol=1e-12, max_inner=1)
        traj = pg.solve_imm(team.game, np.array([2.0, 4.0]), cfg)
        assert traj.status == "error"
        assert "inner maximization" in traj.message


class TestIMMd:
    def test_rendezvous_meets(self, rendezvous):
        traj = pg.solve_immd(rendezvous.game, rendezvous.default_x0, rendezvous.solver_config("immd"))
        assert traj.status == "converged"
        pots = traj.potentials()
        assert np.all(np.diff(pots) >= -1e-9)
        from potgames.cli import max_pairwise_l1
        assert max_pairwise_l1(rendezvous.game, traj.final_x) <= 2.0

    def test_relay_log_covers_every_update(self, rendezvous):
        traj = pg.solve_immd(rendezvous.game, rendezvous.default_x0, rendezvous.solver_config("immd"))
        assert traj.relay_events is not None
        assert len(traj.relay_events) == traj.n_iterations * rendezvous.game.n_agents
        first = traj.relay_events[0]
        assert (first.cycle, first.agent) == (1, 0)

    def test_single_agent_lattice_greedy_reaches_argmax(self):
        g = GameSpec(
            space=StrategySpace(blocks=(box_block(0, 12, dim=2, lattice=Lattice(0.0, 1.0)),)),
            agents=(AgentSpec(weight=1.0),),
            collective=CollectiveUtility(terms=(NegSqDeviation(center=7.0, coords=(0, 1)),)),
            regularizer=Regularizer(),
            reg_weight=0.0,
            dist=OutcomeDistribution((1.0,), (1.0,)),
            weighting=WeightingFunction.identity(),
        )
        cfg = pg.SolverConfig(max_iter=60, tol=1e-9, prox_weight=0.25)
        traj = pg.solve_immd(g, np.array([0.0, 12.0]), cfg)
        star, _ = lattice_potential_argmax(g)
        assert traj.status == "converged"
        np.testing.assert_array_equal(traj.final_x, star)

    def test_colocated_at_argmax_stays(self, rendezvous):
        x0 = np.zeros(6)
        traj = pg.solve_immd(rendezvous.game, x0, rendezvous.solver_config("immd"))
        assert traj.status == "converged"
        assert traj.n_iterations == 1
        np.testing.assert_array_equal(traj.final_x, x0)


class TestDispatch:
    def test_unknown_algorithm(self, team):
        with pytest.raises(ValidationError):
            pg.run_algorithm(team.game, "nope", team.default_x0, pg.SolverConfig())

    def test_lattice_rejects_plain_gradient(self, rendezvous):
        for algo in ("ga", "aga"):
            with pytest.raises(ValidationError):
                pg.run_algorithm(rendezvous.game, algo, rendezvous.default_x0, pg.SolverConfig())

    def test_max_iter_status(self, team):
        cfg = pg.SolverConfig(max_iter=3, tol=1e-12, step_size=0.1)
        traj = pg.run_algorithm(team.game, "ga", np.array([2.0, 4.0]), cfg)
        assert traj.status == "max_iter"
        assert traj.algorithm == "ga"

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            pg.SolverConfig(tol=0.0)
        with pytest.raises(ValidationError):
            pg.SolverConfig(step_schedule="linear")
        with pytest.raises(ValidationError):
            pg.SolverConfig(n_paths=0)
