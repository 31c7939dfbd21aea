"""Covariance-adaptive sequential black-box optimization.

Minimizes a cumulative objective ``sum_k f_k(x_1, ..., x_k)`` where each
step score depends on the whole trajectory prefix through hidden transition
dynamics, using a chain of full-covariance Gaussian search distributions
updated from normalized batch scores.
"""

from .linalg import EIG_FLOOR, eig_clamp, min_eigenvalue, sym_inv, sym_sqrt
from .optimizers import (
    BdtgOptimizer,
    CasboOptimizer,
    CasboSchedules,
    EvolutionStrategyOptimizer,
    RunTrace,
    TraceRecord,
    bdtg_iterate,
    bdtg_update_mean,
    bdtg_update_precision,
    build_optimizer,
    casbo_iterate,
    es_iterate,
    project_preconditioner,
    run_optimizer,
)
from .policy import (
    GaussianStepParam,
    PolicyChain,
    TrajectoryBatch,
    init_chain,
    load_chain,
    mean_trajectory,
    sample_batch,
    save_chain,
)
from .problems import (
    PROBLEM_REGISTRY,
    RolloutState,
    SequentialProblem,
    ToyDiffusionModel,
    default_toy_diffusion_model,
    l1_ellipsoid,
    levy,
    make_problem,
    make_rotation_problem,
    make_toy_diffusion_problem,
    rastrigin10,
    rollout_batch,
    rollout_trajectory,
)
from .scores import (
    ScoreTable,
    build_preconditioner,
    cumulative_scores,
    estimate_mean_gradient,
    normalize_scores,
    sum_step_gradients,
)

__version__ = "0.1.0"

__all__ = [
    "EIG_FLOOR",
    "sym_sqrt",
    "sym_inv",
    "eig_clamp",
    "min_eigenvalue",
    "GaussianStepParam",
    "PolicyChain",
    "TrajectoryBatch",
    "init_chain",
    "sample_batch",
    "mean_trajectory",
    "save_chain",
    "load_chain",
    "rastrigin10",
    "l1_ellipsoid",
    "levy",
    "SequentialProblem",
    "RolloutState",
    "ToyDiffusionModel",
    "make_rotation_problem",
    "make_toy_diffusion_problem",
    "default_toy_diffusion_model",
    "rollout_batch",
    "rollout_trajectory",
    "make_problem",
    "PROBLEM_REGISTRY",
    "ScoreTable",
    "cumulative_scores",
    "normalize_scores",
    "build_preconditioner",
    "estimate_mean_gradient",
    "sum_step_gradients",
    "BdtgOptimizer",
    "CasboOptimizer",
    "EvolutionStrategyOptimizer",
    "CasboSchedules",
    "RunTrace",
    "TraceRecord",
    "bdtg_update_mean",
    "bdtg_update_precision",
    "bdtg_iterate",
    "casbo_iterate",
    "es_iterate",
    "project_preconditioner",
    "build_optimizer",
    "run_optimizer",
]
