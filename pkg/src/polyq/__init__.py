"""Q-learning dynamics in polymatrix games under partial observability.

Agents repeatedly play a network of two-player games, observe only some
opponents' actions, and learn with a two-part payoff estimator: a
belief-based part over what they see and a payoff-based part over what they
do not.  The package provides the simulation engine (compiled kernel with a
pure-Python fallback), smoothed-equilibrium solvers and convergence metrics,
the mean-field flow with numerical Lyapunov descent checks, and a batch
experiment driver with a CLI.
"""

from ._backend import backend_name
from .analysis import (
    EmpiricalTracker,
    QreResult,
    entropy,
    estimate_residual,
    expected_payoff,
    expected_potential,
    lyapunov_potential,
    lyapunov_zero_sum,
    lyapunov_zero_sum_terms,
    q_diff,
    qre_gap,
    smooth_value,
    solve_qre,
)
from .dynamics import (
    AgentState,
    DriftEstimate,
    Engine,
    PowerSchedule,
    StageOutcome,
    belief_update,
    monte_carlo_drift,
    normalized_step,
    observed_payoff_vector,
    q_check_update,
    q_hat_update,
    residual_payoff,
    sample_action,
    smoothed_best_response,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    TrialFailure,
    TrialRecord,
    checkpoint_stages,
    run_experiment,
    run_trial,
    trial_seed_sequence,
    write_lyapunov_csv,
    write_outputs,
    write_summary_csv,
    write_trials_csv,
)
from .games import (
    PolymatrixGame,
    check_kind,
    check_potential,
    check_zero_sum,
    expected_payoff_vector,
    generate_potential,
    generate_zero_sum,
    pairwise_payoff_vector,
    payoff,
    potential_value,
)
from .graphs import (
    DirectedGraph,
    complete_graph,
    empty_graph,
    erdos_renyi,
    from_edge_list,
    observes,
    out_neighbors,
)
from .ode import (
    DescentReport,
    FlowState,
    Trajectory,
    check_descent,
    integrate,
    lyapunov_along,
    pack_state,
    random_state,
    residuals_along,
    save_lyapunov_csv,
    uniform_state,
    vector_field,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "DescentReport",
    "DirectedGraph",
    "DriftEstimate",
    "EmpiricalTracker",
    "Engine",
    "ExperimentConfig",
    "ExperimentResult",
    "FlowState",
    "PolymatrixGame",
    "PowerSchedule",
    "QreResult",
    "StageOutcome",
    "Trajectory",
    "TrialFailure",
    "TrialRecord",
    "backend_name",
    "belief_update",
    "check_descent",
    "check_kind",
    "check_potential",
    "check_zero_sum",
    "checkpoint_stages",
    "complete_graph",
    "empty_graph",
    "entropy",
    "erdos_renyi",
    "estimate_residual",
    "expected_payoff",
    "expected_payoff_vector",
    "expected_potential",
    "from_edge_list",
    "generate_potential",
    "generate_zero_sum",
    "integrate",
    "lyapunov_along",
    "lyapunov_potential",
    "lyapunov_zero_sum",
    "lyapunov_zero_sum_terms",
    "monte_carlo_drift",
    "normalized_step",
    "observed_payoff_vector",
    "observes",
    "out_neighbors",
    "pack_state",
    "pairwise_payoff_vector",
    "payoff",
    "potential_value",
    "q_check_update",
    "q_diff",
    "q_hat_update",
    "qre_gap",
    "random_state",
    "residual_payoff",
    "residuals_along",
    "run_experiment",
    "run_trial",
    "sample_action",
    "save_lyapunov_csv",
    "smooth_value",
    "smoothed_best_response",
    "solve_qre",
    "trial_seed_sequence",
    "uniform_state",
    "vector_field",
    "write_lyapunov_csv",
    "write_outputs",
    "write_summary_csv",
    "write_trials_csv",
]
