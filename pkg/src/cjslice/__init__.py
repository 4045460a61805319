"""Interval eigensolvers for sparse Hermitian matrices built on Chebyshev-Jackson moment subspaces."""

from .bench import (
    DiagnosticsRow,
    ExperimentSpec,
    ProblemSpec,
    run_experiment,
    subspace_deviation,
)
from .filters import (
    FilterPlan,
    MomentBlock,
    Window,
    WindowError,
    build_moments,
    chebyshev_coefficients,
    degree_heuristic,
    estimate_eigencount,
    jackson_factors,
    map_window,
    scalar_filter_eval,
)
from .linalg import (
    DimensionError,
    NotHermitianError,
    SparseHermitian,
    SpectralBounds,
    block_matvec,
    dense_qr,
    dense_svd,
    estimate_bounds,
    hermitian_eig,
)
from .mmio import MatrixMarketError, load_matrix_market, write_matrix_market
from .projection import (
    RefinedSet,
    RitzSet,
    build_reduced_pencil,
    rayleigh_ritz,
    refine_set,
    refined_vector,
    refined_vector_direct,
    select_potential,
)
from .removal import (
    ClusterPartition,
    RemovalReport,
    cluster_refined,
    gap_estimates,
    refined_removal,
    residual_removal,
    tsvd_removal,
)
from .solver import (
    SolveReport,
    SolverConfig,
    convergence_test,
    restart_matrix,
    run_cjssrr,
    run_cjssrrr,
    solve,
)
from .synthetic import SyntheticProblem, make_spectrum, synthetic_spectrum

__version__ = "0.1.0"
