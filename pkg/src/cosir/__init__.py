"""Numerical laboratory for a two-strain coinfection SIR model with
logistic density dependence: simulation, steady states, stability
classification, Lyapunov descent monitoring and carrying-capacity sweeps."""

__version__ = "0.1.0"

from .model import (
    Admissibility,
    DegenerateParametersError,
    DerivedQuantities,
    FullModelParameters,
    InadmissibleError,
    ModelParameters,
    ParameterError,
    State,
    UsageError,
    check_admissible,
    derive,
    jacobian_sub,
    load_parameters,
    rhs_full,
    rhs_sub,
)
from .integrators import (
    BoundMonitorReport,
    IntegratorConfig,
    StiffnessError,
    Trajectory,
    check_bounds,
    integrate,
    write_trajectory_csv,
)
from .equilibria import (
    BalanceError,
    BalanceReport,
    Equilibrium,
    balance_checks,
    closed_form_equilibria,
    equilibria_to_json,
    find_G5,
    newton_root,
    residual,
)
from .stability import (
    BlockCriteria,
    GlobalConditions,
    StabilityReport,
    block_criteria,
    classify_local,
    delta_poly,
    eigenvalues_4x4,
    global_conditions,
    lambda_threshold,
    report_to_dict,
)
from .lyapunov import (
    DescentReport,
    DomainError,
    LyapunovEvaluation,
    monitor_descent,
    per_capita_rates,
    v_dot,
    v_value,
    write_descent_csv,
)
from .bifurcation import (
    BifurcationExpansion,
    BifurcationVerification,
    BracketError,
    SweepRecord,
    SweepResult,
    expansion_near_sigma_hat,
    sweep_K,
    tune_capacity,
    verification_to_json,
    verify_bifurcation,
    write_sweep_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
