"""Fairness-aware learning of subgroup-blind linear dynamical systems via
moment relaxations of operator-valued polynomial optimization."""

from .datagen import (
    BiasConfig,
    SystemMatrices,
    TrajectorySet,
    apply_bias,
    generate_benchmark_dataset,
    simulate_lds,
)
from .evalio import (
    CompasFilter,
    DegenerateDataError,
    EvalReport,
    annuity_premium,
    compas_extract,
    estimate_noise_covariances,
    evaluate,
    load_trajectories_csv,
    nrmse,
    save_trajectories_csv,
)
from .fairlds import (
    FairLDS,
    FairnessModelSpec,
    FairSolveReport,
    OperatorLayout,
    build_model,
    forecast_next,
    solve_fair,
)
from .ncpoly import (
    MomentIndex,
    Polynomial,
    VariableSet,
    Word,
    canonicalize,
    enumerate_words,
    make_variables,
)
from .relaxation import (
    NCPOPProblem,
    assemble_sdp,
    extract_first_order,
    flatness_check,
    localizing_matrix,
    moment_count,
    moment_matrix,
)
from .sdp import (
    SDPBlock,
    SDPProblem,
    SDPSolution,
    SolverConfig,
    export_sparse_sdpa,
    import_sparse_sdpa,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "BiasConfig",
    "SystemMatrices",
    "TrajectorySet",
    "apply_bias",
    "generate_benchmark_dataset",
    "simulate_lds",
    "CompasFilter",
    "DegenerateDataError",
    "EvalReport",
    "annuity_premium",
    "compas_extract",
    "estimate_noise_covariances",
    "evaluate",
    "load_trajectories_csv",
    "nrmse",
    "save_trajectories_csv",
    "FairLDS",
    "FairnessModelSpec",
    "FairSolveReport",
    "OperatorLayout",
    "build_model",
    "forecast_next",
    "solve_fair",
    "MomentIndex",
    "Polynomial",
    "VariableSet",
    "Word",
    "canonicalize",
    "enumerate_words",
    "make_variables",
    "NCPOPProblem",
    "assemble_sdp",
    "extract_first_order",
    "flatness_check",
    "localizing_matrix",
    "moment_count",
    "moment_matrix",
    "SDPBlock",
    "SDPProblem",
    "SDPSolution",
    "SolverConfig",
    "export_sparse_sdpa",
    "import_sparse_sdpa",
    "solve",
    "__version__",
]
