"""Max-type equality tests with extreme-value Type I calibration.

The test statistic is the maximum over variable pairs of

    M_ij = (u1_ij - u2_ij)^2 / (var1_ij + var2_ij),

compared against a closed-form threshold: the centered maximum converges to
a Gumbel-type law with CDF exp(-exp(-x/2)/sqrt(8 pi)) for the full-matrix
test and exp(-exp(-x/2)/sqrt(pi)) for a single-row test.  Critical values
and p-values are exact algebraic inverses of each other, so the decision
trinity  reject <=> M >= critical value <=> p <= alpha  holds identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kendall as _kendall
from . import ustat as _ustat
from .errors import (
    DataValidationError,
    DegenerateStatisticError,
    InsufficientSamplesError,
)
from .kendall import KENDALL_METHODS, METHOD_PS
from .ustat import (
    DataMatrix,
    KernelSpec,
    REGION_FULL,
    REGION_UPPER,
    UMatrix,
    VarianceField,
    _as_data,
)

VARIANT_FULL = "full"
VARIANT_ROW = "row"

METHOD_GENERIC_JACK = "generic-jack"
ALL_METHODS = KENDALL_METHODS + (METHOD_GENERIC_JACK,)

#: Variance contributions below this floor are lifted to it (the plug-in
#: estimator can go negative in small samples); entries whose raw denominator
#: is exactly zero carry no signal and are excluded from the max instead.
DENOMINATOR_FLOOR = 1e-12

_SQRT_8PI = math.sqrt(8.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DataValidationError(
            f"alpha must lie strictly between 0 and 1, got {alpha}"
        )


def _check_dim(q: int) -> None:
    if q < 3:
        raise DataValidationError(
            f"the threshold formulas need dimension >= 3, got {q}"
        )


def _centering(q: int, variant: str) -> float:
    if variant == VARIANT_FULL:
        return 4.0 * math.log(q) - math.log(math.log(q))
    return 2.0 * math.log(q) - math.log(math.log(q))


def _tail_norm(variant: str) -> float:
    return _SQRT_8PI if variant == VARIANT_FULL else _SQRT_PI


def critical_value_full(alpha: float, q: int) -> float:
    """Rejection threshold for the full-matrix max statistic.

    Evaluates G(alpha) + 4 log q - log log q with
    G(alpha) = -log(8 pi) - 2 log(-log(1 - alpha)); q is the matrix
    dimension (number of variables), q >= 3.
    """
    _check_alpha(alpha)
    _check_dim(q)
    g = -math.log(8.0 * math.pi) - 2.0 * math.log(-math.log(1.0 - alpha))
    return g + _centering(q, VARIANT_FULL)


def critical_value_row(alpha: float, q: int) -> float:
    """Rejection threshold for a single-row max statistic.

    Evaluates G'(alpha) + 2 log q - log log q with
    G'(alpha) = -log(pi) - 2 log(-log(1 - alpha)).
    """
    _check_alpha(alpha)
    _check_dim(q)
    g = -math.log(math.pi) - 2.0 * math.log(-math.log(1.0 - alpha))
    return g + _centering(q, VARIANT_ROW)


def _tail_exp(x: float) -> float:
    """exp(-x/2), saturating to inf instead of raising for deep left tails."""
    try:
        return math.exp(-x / 2.0)
    except OverflowError:
        return math.inf


def limit_cdf(x: float, variant: str = VARIANT_FULL) -> float:
    """Limiting CDF of the centered maximum: exp(-exp(-x/2)/norm)."""
    return math.exp(-_tail_exp(x) / _tail_norm(variant))


def p_value_full(statistic: float, q: int) -> float:
    """p-value of the full-matrix statistic via the limiting law.

    Computes 1 - F(x) at x = statistic - 4 log q + log log q using expm1,
    so tail p-values keep full relative precision.
    """
    _check_dim(q)
    x = statistic - _centering(q, VARIANT_FULL)
    inner = _tail_exp(x)
    return 1.0 if math.isinf(inner) else -math.expm1(-inner / _SQRT_8PI)


def p_value_row(statistic: float, q: int) -> float:
    """p-value of a row statistic (centering 2 log q, constant 1/sqrt(pi))."""
    _check_dim(q)
    x = statistic - _centering(q, VARIANT_ROW)
    inner = _tail_exp(x)
    return 1.0 if math.isinf(inner) else -math.expm1(-inner / _SQRT_PI)


def marginal_p_value(m_ij: float) -> float:
    """Single-entry tail probability (chi-square with 1 df), no
    multiplicity adjustment."""
    return math.erfc(math.sqrt(max(m_ij, 0.0) / 2.0))


@dataclass(frozen=True)
class TestConfig:
    """Settings shared by the full and row tests."""

    __test__ = False  # not a test case, despite the name pytest looks for

    method: str = METHOD_PS
    alpha: float = 0.05
    pseudo_asymptotic: bool = False
    #: kernel for the generic engine: a KernelSpec, "kendall", "spearman",
    #: or None (kendall).  Ignored by the rank-correlation fast paths.
    kernel: KernelSpec | str | None = None
    workers: int = 1

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.method not in ALL_METHODS:
            raise DataValidationError(
                f"unknown method {self.method!r}; expected one of {ALL_METHODS}"
            )


@dataclass(frozen=True)
class EntryStats:
    """Entry grid M_ij with the denominator bookkeeping."""

    grid: np.ndarray
    region: str
    clamped: list[tuple[int, int]]
    degenerate: list[tuple[int, int]]


@dataclass(frozen=True)
class TestOutcome:
    """Everything a test run produces.

    ``reject`` is defined as ``p_value <= alpha``; because the p-value and
    the critical value come from the same centered quantity, it coincides
    exactly with ``statistic >= critical_value``.  Indices are 0-based.
    """

    __test__ = False  # not a test case, despite the name pytest looks for

    method: str
    variant: str
    row: int | None
    alpha: float
    dim: int
    n1: int
    n2: int
    statistic: float
    x_centered: float
    critical_value: float
    p_value: float
    reject: bool
    argmax: tuple[int, int]
    entry_grid: np.ndarray
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        """JSON-ready summary (indices stay 0-based here)."""
        return {
            "method": self.method,
            "variant": self.variant,
            "row": self.row,
            "alpha": self.alpha,
            "dim": self.dim,
            "n1": self.n1,
            "n2": self.n2,
            "statistic": self.statistic,
            "x_centered": self.x_centered,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "argmax": list(self.argmax),
            "warnings": list(self.warnings),
        }


def _entry_grid(
    diff: np.ndarray,
    var1: np.ndarray,
    var2: np.ndarray,
    mask: np.ndarray,
    region: str,
) -> EntryStats:
    """Combine numerators and variance contributions over ``mask``.

    Each variance contribution is floored at DENOMINATOR_FLOOR when it falls
    below it but is not exactly zero-with-zero-partner; entries whose raw
    denominator is exactly zero are degenerate and leave the grid as NaN.
    """
    grid = np.full(diff.shape, np.nan)
    raw_den = var1 + var2
    v1 = np.maximum(var1, DENOMINATOR_FLOOR)
    v2 = np.maximum(var2, DENOMINATOR_FLOOR)
    degenerate_mask = mask & (raw_den == 0.0)
    live = mask & ~degenerate_mask
    grid[live] = (diff[live] ** 2) / (v1[live] + v2[live])
    clamp_mask = live & ((var1 < DENOMINATOR_FLOOR) | (var2 < DENOMINATOR_FLOOR))
    clamped = [tuple(ix) for ix in np.argwhere(clamp_mask)]
    degenerate = [tuple(ix) for ix in np.argwhere(degenerate_mask)]
    return EntryStats(
        grid=grid, region=region, clamped=clamped, degenerate=degenerate
    )


def entry_statistics(
    u1: UMatrix, u2: UMatrix, v1: VarianceField, v2: VarianceField
) -> EntryStats:
    """Per-entry statistics M_ij over the common declared region.

    Symmetric in the two populations: the numerator is a squared difference
    and the denominator a sum.
    """
    if u1.values.shape != u2.values.shape:
        raise DataValidationError(
            f"U-matrix dimensions differ: {u1.values.shape} vs {u2.values.shape}"
        )
    shapes = {u1.values.shape, v1.values.shape, v2.values.shape}
    if len(shapes) != 1:
        raise DataValidationError("variance fields must match the U-matrices")
    regions = {u1.region, u2.region, v1.region, v2.region}
    if len(regions) != 1:
        raise DataValidationError(
            f"all inputs must share one region, got {sorted(regions)}"
        )
    region = u1.region
    d = u1.values.shape[0]
    if region == REGION_UPPER:
        mask = np.triu(np.ones((d, d), dtype=bool), 1)
    else:
        mask = np.ones((d, d), dtype=bool)
    stats = _entry_grid(
        u1.values - u2.values, v1.values, v2.values, mask, region
    )
    if len(stats.degenerate) == int(mask.sum()):
        raise DegenerateStatisticError(
            "every entry has a zero variance denominator; "
            "no testable signal in the data"
        )
    return stats


def _grid_max(grid: np.ndarray) -> tuple[float, tuple[int, int]]:
    # NaN marks out-of-region/degenerate entries; ties resolve to the
    # row-major (lexicographically smallest) index.
    flat = np.where(np.isnan(grid), -np.inf, grid)
    k = int(np.argmax(flat))
    i, j = divmod(k, grid.shape[1])
    return float(flat[i, j]), (i, j)


def _degenerate_warning(stats: EntryStats) -> list[str]:
    notes = []
    if stats.degenerate:
        shown = ", ".join(
            f"({i + 1}, {j + 1})" for i, j in stats.degenerate[:10]
        )
        more = (
            f" and {len(stats.degenerate) - 10} more"
            if len(stats.degenerate) > 10
            else ""
        )
        notes.append(
            f"{len(stats.degenerate)} entr{'y' if len(stats.degenerate) == 1 else 'ies'} "
            f"with zero variance denominator excluded from the max: {shown}{more}"
        )
    if stats.clamped:
        notes.append(
            f"variance denominator floored at {DENOMINATOR_FLOOR:g} for "
            f"{len(stats.clamped)} entr{'y' if len(stats.clamped) == 1 else 'ies'}"
        )
    return notes


def _assemble(
    method: str,
    variant: str,
    row: int | None,
    alpha: float,
    dim: int,
    n1: int,
    n2: int,
    stats: EntryStats,
    warnings: list[str],
) -> TestOutcome:
    statistic, argmax = _grid_max(stats.grid)
    x = statistic - _centering(dim, variant)
    if variant == VARIANT_FULL:
        cv = critical_value_full(alpha, dim)
        p = p_value_full(statistic, dim)
    else:
        cv = critical_value_row(alpha, dim)
        p = p_value_row(statistic, dim)
    return TestOutcome(
        method=method,
        variant=variant,
        row=row,
        alpha=alpha,
        dim=dim,
        n1=n1,
        n2=n2,
        statistic=statistic,
        x_centered=x,
        critical_value=cv,
        p_value=p,
        reject=p <= alpha,
        argmax=argmax,
        entry_grid=stats.grid,
        warnings=tuple(warnings + _degenerate_warning(stats)),
    )


def _check_same_d(dx: DataMatrix, dy: DataMatrix) -> int:
    if dx.d != dy.d:
        raise DataValidationError(
            f"populations have different variable counts: {dx.d} vs {dy.d}"
        )
    return dx.d


def _tie_warning(tie_pairs: int, population: str) -> list[str]:
    if tie_pairs == 0:
        return []
    return [
        f"{population}: {tie_pairs} tied pair(s) found; the closed-form "
        "pseudo variance assumes continuous (tie-free) data"
    ]


def _column_tie_warning(dm: DataMatrix, population: str) -> list[str]:
    """Tie warning for the generic engine: count within-column tied sample
    pairs (sign kernels score a tied pair 0, which the limit theory's
    continuity assumption rules out)."""
    total = 0
    for k in range(dm.d):
        _, counts = np.unique(dm.values[:, k], return_counts=True)
        total += int((counts * (counts - 1) // 2).sum())
    if total == 0:
        return []
    return [
        f"{population}: {total} within-column tied pair(s) found; "
        "sign-based kernels score tied pairs 0"
    ]


def run_kendall_tests(
    data_x,
    data_y,
    methods: Sequence[str] = (METHOD_PS,),
    alpha: float = 0.05,
    row: int | None = None,
    pseudo_asymptotic: bool = False,
    workers: int = 1,
) -> dict[str, TestOutcome]:
    """Run the rank-correlation test for several methods in one pass.

    The concordance counts are computed once per population and shared by
    every requested method, which is what makes multi-method simulation
    sweeps affordable.
    """
    dx = _as_data(data_x)
    dy = _as_data(data_y)
    d = _check_same_d(dx, dy)
    _check_alpha(alpha)
    methods = _kendall._check_methods(methods)
    _check_dim(d)
    if row is not None and not 0 <= row < d:
        raise DataValidationError(
            f"row index {row} out of range for d = {d}"
        )

    if row is None:
        idx_i, idx_j = np.triu_indices(d, 1)
        variant = VARIANT_FULL
    else:
        others = np.array(
            [j for j in range(d) if j != row], dtype=np.int64
        )
        idx_i = np.full(others.size, row, dtype=np.int64)
        idx_j = others
        variant = VARIANT_ROW

    tabs = {}
    warnings: list[str] = []
    for name, dm in (("first population", dx), ("second population", dy)):
        if dm.n < 3:
            raise InsufficientSamplesError(
                f"{name} needs at least 3 samples, got {dm.n}"
            )
        # Pairs are listed with min index first so each (i, j) and (j, i)
        # hit the same counting path; tau and all counts are symmetric.
        pi = np.minimum(idx_i, idx_j)
        pj = np.maximum(idx_i, idx_j)
        table = _kendall._pair_stats_table(dm.values, pi, pj, workers=workers)
        tabs[name] = table
        warnings += _tie_warning(int(table.stats[:, 4].sum()) // 2, name)

    tx, ty = tabs["first population"], tabs["second population"]
    tau_x = tx.stats[:, 0] / (tx.n * (tx.n - 1))
    tau_y = ty.stats[:, 0] / (ty.n * (ty.n - 1))
    var_x = _kendall._variances_from_stats(tx, methods, pseudo_asymptotic)
    var_y = _kendall._variances_from_stats(ty, methods, pseudo_asymptotic)

    outcomes: dict[str, TestOutcome] = {}
    for method in methods:
        diff = np.full((d, d), np.nan)
        v1 = np.full((d, d), np.nan)
        v2 = np.full((d, d), np.nan)
        mask = np.zeros((d, d), dtype=bool)
        diff[idx_i, idx_j] = tau_x - tau_y
        v1[idx_i, idx_j] = var_x[method]
        v2[idx_i, idx_j] = var_y[method]
        mask[idx_i, idx_j] = True
        stats = _entry_grid(diff, v1, v2, mask, REGION_UPPER)
        if len(stats.degenerate) == idx_i.size:
            raise DegenerateStatisticError(
                "every entry has a zero variance denominator; "
                "no testable signal in the data"
            )
        outcomes[method] = _assemble(
            method, variant, row, alpha, d, dx.n, dy.n, stats, list(warnings)
        )
    return outcomes


def _resolve_kernel(kernel) -> KernelSpec:
    """Accept a KernelSpec or a kernel name; always return a symmetric spec."""
    if kernel is None or kernel == "kendall":
        return _ustat.kendall_kernel()
    if kernel == "spearman":
        return _ustat.symmetrize_kernel(_ustat.spearman_kernel())
    if isinstance(kernel, KernelSpec):
        return kernel if kernel.symmetric else _ustat.symmetrize_kernel(kernel)
    raise DataValidationError(
        f"kernel must be 'kendall', 'spearman', or a KernelSpec, got {kernel!r}"
    )


def _run_generic(
    data_x, data_y, config: TestConfig, row: int | None
) -> TestOutcome:
    dx = _as_data(data_x)
    dy = _as_data(data_y)
    d = _check_same_d(dx, dy)
    _check_dim(d)
    kernel = _resolve_kernel(config.kernel)
    warnings = _column_tie_warning(dx, "first population")
    warnings += _column_tie_warning(dy, "second population")
    u1, v1 = _ustat.u_and_jackknife_matrices(dx, kernel, region=REGION_FULL)
    u2, v2 = _ustat.u_and_jackknife_matrices(dy, kernel, region=REGION_FULL)
    stats = entry_statistics(u1, u2, v1, v2)
    if row is not None:
        if not 0 <= row < d:
            raise DataValidationError(
                f"row index {row} out of range for d = {d}"
            )
        keep = np.full(stats.grid.shape, np.nan)
        keep[row, :] = stats.grid[row, :]
        row_degenerate = [ij for ij in stats.degenerate if ij[0] == row]
        if np.all(np.isnan(keep[row, :])):
            raise DegenerateStatisticError(
                f"every entry in row {row + 1} is degenerate"
            )
        stats = EntryStats(
            grid=keep,
            region=stats.region,
            clamped=[ij for ij in stats.clamped if ij[0] == row],
            degenerate=row_degenerate,
        )
        variant = VARIANT_ROW
    else:
        variant = VARIANT_FULL
    return _assemble(
        config.method,
        variant,
        row,
        config.alpha,
        d,
        dx.n,
        dy.n,
        stats,
        warnings,
    )


def run_full_test(data_x, data_y, config: TestConfig | None = None) -> TestOutcome:
    """Test equality of the two populations' correlation matrices.

    The statistic is the max of M_ij over the upper triangle (i < j) for the
    rank-correlation methods, or over the full d x d kernel grid for the
    generic engine ("generic-jack").
    """
    config = config or TestConfig()
    if config.method == METHOD_GENERIC_JACK:
        return _run_generic(data_x, data_y, config, row=None)
    return run_kendall_tests(
        data_x,
        data_y,
        methods=(config.method,),
        alpha=config.alpha,
        pseudo_asymptotic=config.pseudo_asymptotic,
        workers=config.workers,
    )[config.method]


def run_row_test(
    data_x, data_y, row: int, config: TestConfig | None = None
) -> TestOutcome:
    """Test equality of one variable's correlations with all others.

    ``row`` is 0-based; the tested entries are (row, j) for j != row, with
    the row-specific centering and tail constant.
    """
    config = config or TestConfig()
    if config.method == METHOD_GENERIC_JACK:
        return _run_generic(data_x, data_y, config, row=row)
    return run_kendall_tests(
        data_x,
        data_y,
        methods=(config.method,),
        alpha=config.alpha,
        row=row,
        pseudo_asymptotic=config.pseudo_asymptotic,
        workers=config.workers,
    )[config.method]


@dataclass(frozen=True)
class DifferentialEntry:
    """One entry of the grid, reported with its marginal tail probability."""

    i: int
    j: int
    m_ij: float
    p_marginal: float


def differential_entries(
    outcome: TestOutcome, threshold: float = 0.0
) -> list[DifferentialEntry]:
    """Region entries with M_ij >= threshold, sorted by descending M_ij.

    Ties in M_ij order lexicographically by (i, j); marginal p-values carry
    no multiplicity adjustment and are descriptive only.
    """
    grid = outcome.entry_grid
    found = []
    for i, j in np.argwhere(~np.isnan(grid)):
        m = float(grid[i, j])
        if m >= threshold:
            found.append(
                DifferentialEntry(
                    i=int(i), j=int(j), m_ij=m, p_marginal=marginal_p_value(m)
                )
            )
    found.sort(key=lambda e: (-e.m_ij, e.i, e.j))
    return found
