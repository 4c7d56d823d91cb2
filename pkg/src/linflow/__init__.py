"""Gradient flows of deep linear networks on whitened regression data.

The package simulates both the per-layer gradient flow and the equivalent
preconditioned flow of the end-to-end matrix, and verifies landscape,
stable-set, and convergence-rate predictions numerically. See the CLI
(``linflow --help``) for the experiment harness.
"""

__version__ = "0.1.0"

from .dataset import (
    Dataset,
    InstanceSpec,
    WhiteningError,
    compute_target,
    generate_instance,
    load_instance_csv,
    save_instance_csv,
    whiten,
)
from .flows import (
    DivergenceError,
    IntegratorConfig,
    Trajectory,
    check_product_consistency,
    check_singular_value_ode,
    check_singular_vector_ode,
    integrate_factor_flow,
    integrate_induced_flow,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .induced import (
    OperatorContext,
    induced_rhs,
    precondition_by_definition,
    precondition_by_svd,
    quadratic_form,
)
from .landscape import (
    StationarityReport,
    classify_stationarity,
    collapse_to_pq,
    global_min_value,
    lazy_feasibility_check,
    pca_global_min,
    second_order_form,
)
from .network import (
    InfeasibleFactorization,
    LinearNetwork,
    balance_residual,
    balanced_factorization,
    end_to_end,
    gradient,
    loss,
    min_width,
    rank_of_product,
)
from .rates import (
    BoundCurve,
    DominationReport,
    RateParams,
    check_bound_domination,
    detect_tau,
    discretization_slack,
    loss_evolution_rhs,
    make_bound_curve,
    rate_exponents,
    time_to_accuracy,
)
from .spectral import TargetSpectrum, ThinSVD, best_rank_r, target_spectrum, thin_svd
from .stability import (
    StableSetExitReport,
    StableSetParams,
    in_stable_set_ab,
    in_stable_set_factor,
    monitor_stable_set,
)
from .sweeps import BatchTrajectory, integrate_induced_batch
from .verify import CHECK_NAMES, CheckResult, run_all, run_check

__all__ = [
    "__version__",
    "Dataset",
    "InstanceSpec",
    "WhiteningError",
    "compute_target",
    "generate_instance",
    "load_instance_csv",
    "save_instance_csv",
    "whiten",
    "DivergenceError",
    "IntegratorConfig",
    "Trajectory",
    "check_product_consistency",
    "check_singular_value_ode",
    "check_singular_vector_ode",
    "integrate_factor_flow",
    "integrate_induced_flow",
    "read_trajectory_csv",
    "write_trajectory_csv",
    "OperatorContext",
    "induced_rhs",
    "precondition_by_definition",
    "precondition_by_svd",
    "quadratic_form",
    "StationarityReport",
    "classify_stationarity",
    "collapse_to_pq",
    "global_min_value",
    "lazy_feasibility_check",
    "pca_global_min",
    "second_order_form",
    "InfeasibleFactorization",
    "LinearNetwork",
    "balance_residual",
    "balanced_factorization",
    "end_to_end",
    "gradient",
    "loss",
    "min_width",
    "rank_of_product",
    "BoundCurve",
    "DominationReport",
    "RateParams",
    "check_bound_domination",
    "detect_tau",
    "discretization_slack",
    "loss_evolution_rhs",
    "make_bound_curve",
    "rate_exponents",
    "time_to_accuracy",
    "TargetSpectrum",
    "ThinSVD",
    "best_rank_r",
    "target_spectrum",
    "thin_svd",
    "StableSetExitReport",
    "StableSetParams",
    "in_stable_set_ab",
    "in_stable_set_factor",
    "monitor_stable_set",
    "BatchTrajectory",
    "integrate_induced_batch",
    "CHECK_NAMES",
    "CheckResult",
    "run_all",
    "run_check",
]
