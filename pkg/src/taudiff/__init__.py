"""taudiff: two-sample equality tests for high-dimensional rank-correlation
matrices, with exact U-statistic machinery and a seeded simulation harness."""

__version__ = "0.1.0"

from .errors import (
    DataValidationError,
    DegenerateStatisticError,
    InsufficientSamplesError,
    KernelComplexityError,
    TauDiffError,
)
from .ustat import (
    REGION_FULL,
    REGION_UPPER,
    DataMatrix,
    KernelSpec,
    UMatrix,
    VarianceField,
    jackknife_components,
    jackknife_variance,
    jackknife_variance_field,
    kendall_kernel,
    spearman_kernel,
    symmetrize_kernel,
    u_and_jackknife_matrices,
    u_matrix,
    u_statistic,
)
from .kendall import (
    ConcordanceProfile,
    TauMatrixResult,
    TauPairEstimates,
    concordance_profile,
    jackknife_variance_tau,
    kruskal_variance,
    pair_estimates,
    plugin_variance_tau,
    pseudo_variance,
    sine_latent_correlation,
    tau_matrix_with_variances,
    tau_pair,
)
from .evt import (
    DifferentialEntry,
    EntryStats,
    TestConfig,
    TestOutcome,
    critical_value_full,
    critical_value_row,
    differential_entries,
    entry_statistics,
    limit_cdf,
    marginal_p_value,
    p_value_full,
    p_value_row,
    run_full_test,
    run_kendall_tests,
    run_row_test,
)
from .simulate import (
    CovariancePair,
    RepRecord,
    SimSpec,
    SimulationResult,
    StructureSpec,
    apply_D,
    build_R,
    empirical_rejection_rate,
    empirical_rejection_rates,
    perturb,
    resolve_workers,
    sample,
)

__all__ = [
    "__version__",
    # errors
    "TauDiffError",
    "DataValidationError",
    "InsufficientSamplesError",
    "KernelComplexityError",
    "DegenerateStatisticError",
    # generic engine
    "REGION_FULL",
    "REGION_UPPER",
    "DataMatrix",
    "KernelSpec",
    "UMatrix",
    "VarianceField",
    "kendall_kernel",
    "spearman_kernel",
    "symmetrize_kernel",
    "u_statistic",
    "u_matrix",
    "u_and_jackknife_matrices",
    "jackknife_components",
    "jackknife_variance",
    "jackknife_variance_field",
    # rank-correlation fast paths
    "ConcordanceProfile",
    "TauPairEstimates",
    "TauMatrixResult",
    "tau_pair",
    "concordance_profile",
    "jackknife_variance_tau",
    "plugin_variance_tau",
    "kruskal_variance",
    "pseudo_variance",
    "sine_latent_correlation",
    "pair_estimates",
    "tau_matrix_with_variances",
    # tests
    "TestConfig",
    "TestOutcome",
    "EntryStats",
    "DifferentialEntry",
    "critical_value_full",
    "critical_value_row",
    "p_value_full",
    "p_value_row",
    "limit_cdf",
    "marginal_p_value",
    "entry_statistics",
    "run_full_test",
    "run_row_test",
    "run_kendall_tests",
    "differential_entries",
    # simulation
    "StructureSpec",
    "SimSpec",
    "CovariancePair",
    "RepRecord",
    "SimulationResult",
    "build_R",
    "apply_D",
    "perturb",
    "sample",
    "empirical_rejection_rate",
    "empirical_rejection_rates",
    "resolve_workers",
]
