import pytest

import potgames as pg


@pytest.fixture(scope="session")
def team():
    return pg.get_scenario("team_nonsmooth")


@pytest.fixture(scope="session")
def smooth():
    return pg.get_scenario("smooth_two_player")


@pytest.fixture(scope="session")
def energy():
    return pg.get_scenario("energy_community")


@pytest.fixture(scope="session")
def rendezvous():
    return pg.get_scenario("grid_rendezvous")


@pytest.fixture(scope="session")
def quad_1d():
    """Single-agent game with potential -(x - 3)^2 on [0, 10]."""
    from potgames.game_model import (
        AgentSpec, CollectiveUtility, GameSpec, NegSqDeviation, Regularizer,
        StrategySpace, box_block,
    )
    from potgames.pt_core import OutcomeDistribution, WeightingFunction

    return GameSpec(
        space=StrategySpace(blocks=(box_block(0.0, 10.0),)),
        agents=(AgentSpec(weight=1.0),),
        collective=CollectiveUtility(terms=(NegSqDeviation(center=3.0, coords=(0,)),)),
        regularizer=Regularizer(),
        reg_weight=0.0,
        dist=OutcomeDistribution((1.0,), (1.0,)),
        weighting=WeightingFunction.identity(),
    )


@pytest.fixture(scope="session")
def prox_1d():
    """Single-agent game with potential -x^2 on [-1, 1]."""
    from potgames.game_model import (
        AgentSpec, CollectiveUtility, GameSpec, NegSqDeviation, Regularizer,
        StrategySpace, box_block,
    )
    from potgames.pt_core import OutcomeDistribution, WeightingFunction

    return GameSpec(
        space=StrategySpace(blocks=(box_block(-1.0, 1.0),)),
        agents=(AgentSpec(weight=1.0),),
        collective=CollectiveUtility(terms=(NegSqDeviation(center=0.0, coords=(0,)),)),
        regularizer=Regularizer(),
        reg_weight=0.0,
        dist=OutcomeDistribution((1.0,), (1.0,)),
        weighting=WeightingFunction.identity(),
    )
