"""potgames: solvers and certification oracles for coordination games whose
agents weigh a shared collective benefit against prospect-theoretically
distorted individual rewards."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceededError,
    DomainError,
    InnerSolveError,
    PotgamesError,
    ValidationError,
)
from .pt_core import (
    OutcomeDistribution,
    Piece,
    Prospect,
    ValueFunction,
    WeightingFunction,
    distort_probabilities,
    pt_expected_reward,
    pt_value,
)
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
    box_block,
    verify_weighted_potential,
)
from .solvers import (
    ALGORITHMS,
    SolverConfig,
    Trajectory,
    argmax_block,
    proximal_step,
    run_algorithm,
    solve_gradient,
    solve_ibr,
    solve_imm,
    solve_immd,
)
from .certify import (
    CertificationReport,
    GridArgmax,
    RegularizationBoundReport,
    RateCertificate,
    br_gap,
    certify_point,
    grid_potential_argmax,
    imm_rate_certificate,
    regularization_bound_check,
)
from .scenarios import (
    BUILTIN_BUILDERS,
    CANONICAL_SCENARIOS,
    ScenarioDef,
    SteeringConfig,
    SteeringTrace,
    build_energy_community,
    build_grid_rendezvous,
    build_smooth_two_player,
    build_team_nonsmooth,
    get_scenario,
    steer_collective,
)
from .fileio import (
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_hash,
    scenario_to_dict,
    write_run_output,
)
