"""Generic U-statistic machinery.

Exact kernel averages over all size-m row subsets, leave-one-out components,
and the Jackknife variance estimator, for any bounded symmetric kernel acting
on a pair of variables.  This is the slow, definitional path: the specialized
rank-correlation module has O(n log n) equivalents and is validated against
the functions here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DataValidationError,
    InsufficientSamplesError,
    KernelComplexityError,
)

REGION_FULL = "full"
REGION_UPPER = "upper"
_REGIONS = (REGION_FULL, REGION_UPPER)

#: Exact enumeration is refused beyond these limits; higher orders have no
#: fast path and no use in the supported tests.
MAX_KERNEL_ORDER = 3
MAX_SUBSETS = 10_000_000


@dataclass(frozen=True)
class DataMatrix:
    """Validated sample matrix: n rows (samples) by d columns (variables).

    All entries must be finite; construction rejects NaN/Inf with the
    offending location (1-based in the message).
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DataValidationError(
                f"data must be a 2-D matrix, got {arr.ndim} dimension(s)"
            )
        n, d = arr.shape
        if n < 2:
            raise InsufficientSamplesError(
                f"need at least 2 sample rows, got {n}"
            )
        if d < 2:
            raise DataValidationError(
                f"need at least 2 variable columns, got {d}"
            )
        if not np.isfinite(arr).all():
            r, c = np.argwhere(~np.isfinite(arr))[0]
            raise DataValidationError(
                f"non-finite value at row {r + 1}, column {c + 1}"
            )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class KernelSpec:
    """A bounded kernel of fixed order m on a variable pair.

    ``evaluate(rows, i, j)`` receives an (m, d) array of sample rows and the
    column pair; it must depend on columns i and j only, satisfy
    ``evaluate(rows, i, j) == evaluate(rows, j, i)`` and ``|value| <= bound``.
    ``symmetric`` declares invariance under permutation of the m rows.
    """

    name: str
    order: int
    evaluate: Callable[[np.ndarray, int, int], float]
    bound: float
    symmetric: bool

    def __post_init__(self):
        if self.order < 2:
            raise DataValidationError(
                f"kernel order must be >= 2, got {self.order}"
            )
        if not (self.bound > 0 and math.isfinite(self.bound)):
            raise DataValidationError("kernel bound must be finite and positive")


@dataclass(frozen=True)
class UMatrix:
    """Per-pair U-statistic grid with its declared index region."""

    values: np.ndarray
    region: str

    @property
    def d(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class VarianceField:
    """Per-pair variance estimates aligned with a UMatrix.

    Entries are on the scale of Var(u-hat) — the variance of the statistic
    itself, not of a single kernel evaluation — so test denominators are the
    plain elementwise sum of two fields.  NaN marks entries outside the
    declared region.
    """

    values: np.ndarray
    method: str
    region: str


def kendall_kernel() -> KernelSpec:
    """Order-2 sign-product kernel (rank-correlation concordance)."""

    def evaluate(rows: np.ndarray, i: int, j: int) -> float:
        dx = rows[0, i] - rows[1, i]
        dy = rows[0, j] - rows[1, j]
        sx = int(dx > 0.0) - int(dx < 0.0)
        sy = int(dy > 0.0) - int(dy < 0.0)
        return float(sx * sy)

    return KernelSpec(
        name="kendall", order=2, evaluate=evaluate, bound=1.0, symmetric=True
    )


def spearman_kernel() -> KernelSpec:
    """Asymmetric order-3 generator of the Spearman rho-type kernel.

    The factor 3 makes its symmetrization equal the average of
    sign(x_a[i]-x_b[i])*sign(x_a[j]-x_c[j]) over ordered triples scaled so a
    fully concordant triple scores 1; symmetrize with
    :func:`symmetrize_kernel` before handing it to the engine.
    """

    def evaluate(rows: np.ndarray, i: int, j: int) -> float:
        dx = rows[0, i] - rows[1, i]
        dy = rows[0, j] - rows[2, j]
        sx = int(dx > 0.0) - int(dx < 0.0)
        sy = int(dy > 0.0) - int(dy < 0.0)
        return 3.0 * sx * sy

    return KernelSpec(
        name="spearman-asym", order=3, evaluate=evaluate, bound=3.0, symmetric=False
    )


def symmetrize_kernel(kernel: KernelSpec) -> KernelSpec:
    """Average a kernel over all m! orderings of its sample rows.

    Already-symmetric kernels pass through unchanged.
    """
    if kernel.symmetric:
        return kernel
    perms = [list(p) for p in itertools.permutations(range(kernel.order))]
    base = kernel.evaluate
    scale = 1.0 / len(perms)

    def evaluate(rows: np.ndarray, i: int, j: int) -> float:
        return math.fsum(base(rows[p], i, j) for p in perms) * scale

    return KernelSpec(
        name=f"sym-{kernel.name}",
        order=kernel.order,
        evaluate=evaluate,
        bound=kernel.bound,
        symmetric=True,
    )


def _as_data(data) -> DataMatrix:
    if isinstance(data, DataMatrix):
        return data
    return DataMatrix(np.asarray(data))


def _check_kernel_use(kernel: KernelSpec, n: int) -> None:
    if not kernel.symmetric:
        raise DataValidationError(
            f"kernel '{kernel.name}' is not symmetric; wrap it with "
            "symmetrize_kernel first"
        )
    if kernel.order > MAX_KERNEL_ORDER:
        raise KernelComplexityError(
            f"kernel order {kernel.order} exceeds the exact-evaluation "
            f"limit of {MAX_KERNEL_ORDER}"
        )
    if math.comb(n, kernel.order) > MAX_SUBSETS:
        raise KernelComplexityError(
            f"C({n}, {kernel.order}) = {math.comb(n, kernel.order)} subsets "
            f"exceed the exact-evaluation limit of {MAX_SUBSETS}"
        )


def _check_pair(pair: Sequence[int], d: int) -> tuple[int, int]:
    i, j = pair
    for k in (i, j):
        if not 0 <= k < d:
            raise DataValidationError(
                f"variable index {k} out of range for d = {d}"
            )
    return int(i), int(j)


def u_statistic(data, kernel: KernelSpec, pair: Sequence[int]) -> float:
    """Exact average of the kernel over all C(n, m) unordered row subsets.

    Parameters
    ----------
    data : DataMatrix or array-like, shape (n, d)
    kernel : KernelSpec
        Must be symmetric (see :func:`symmetrize_kernel`).
    pair : (i, j)
        0-based column indices.

    Returns
    -------
    float in [-bound, bound], accumulated with compensated summation.
    """
    dm = _as_data(data)
    m = kernel.order
    _check_kernel_use(kernel, dm.n)
    if dm.n < m:
        raise InsufficientSamplesError(
            f"order-{m} kernel needs at least {m} samples, got {dm.n}"
        )
    i, j = _check_pair(pair, dm.d)
    cols = dm.values[:, (i, j)]
    evaluate = kernel.evaluate
    total = math.fsum(
        evaluate(cols[list(sub)], 0, 1)
        for sub in itertools.combinations(range(dm.n), m)
    )
    return total / math.comb(dm.n, m)


def jackknife_components(data, kernel: KernelSpec, pair: Sequence[int]) -> np.ndarray:
    """Leave-one-in components: q_a = average of the kernel over all
    m-subsets that contain row a.

    Their mean equals the U-statistic (each subset is counted m times across
    components); that identity is the engine's main self-check.
    """
    dm = _as_data(data)
    m = kernel.order
    _check_kernel_use(kernel, dm.n)
    n = dm.n
    if n < m + 1:
        raise InsufficientSamplesError(
            f"leave-one-out components need at least {m + 1} samples, got {n}"
        )
    i, j = _check_pair(pair, dm.d)
    cols = dm.values[:, (i, j)]
    evaluate = kernel.evaluate
    # Neumaier-compensated per-row accumulators: the same subset value feeds
    # m different components, and the 1e-12 agreement contract has to hold
    # at the largest enumerations the guardrail admits.
    sums = np.zeros(n)
    comps = np.zeros(n)
    for sub in itertools.combinations(range(n), m):
        v = evaluate(cols[list(sub)], 0, 1)
        for a in sub:
            t = sums[a] + v
            if abs(sums[a]) >= abs(v):
                comps[a] += (sums[a] - t) + v
            else:
                comps[a] += (v - t) + sums[a]
            sums[a] = t
    return (sums + comps) / math.comb(n - 1, m - 1)


def jackknife_variance(q: np.ndarray, u_hat: float, n: int, m: int) -> float:
    """Jackknife variance of a U-statistic from its components.

    Evaluates m^2 (n-1) / (n (n-m)^2) * sum_a (q_a - u_hat)^2.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (n,):
        raise DataValidationError(
            f"component vector has shape {q.shape}, expected ({n},)"
        )
    if n <= m:
        raise InsufficientSamplesError(
            f"jackknife variance needs n > m, got n = {n}, m = {m}"
        )
    dev = q - u_hat
    total = math.fsum(float(v) * float(v) for v in dev)
    return (m * m) * (n - 1) / (n * (n - m) ** 2) * total


def _region_pairs(d: int, region: str):
    if region == REGION_FULL:
        return ((i, j) for i in range(d) for j in range(d))
    return ((i, j) for i in range(d) for j in range(i + 1, d))


def _check_region(region: str) -> None:
    if region not in _REGIONS:
        raise DataValidationError(
            f"unknown region {region!r}; expected one of {_REGIONS}"
        )


def u_matrix(data, kernel: KernelSpec, region: str = REGION_FULL) -> UMatrix:
    """U-statistic value for every pair in the region.

    The full region evaluates every (i, j) cell independently; the upper
    region evaluates i < j and mirrors (diagonal left NaN).
    """
    dm = _as_data(data)
    _check_region(region)
    d = dm.d
    out = np.full((d, d), np.nan)
    for i, j in _region_pairs(d, region):
        out[i, j] = u_statistic(dm, kernel, (i, j))
        if region == REGION_UPPER:
            out[j, i] = out[i, j]
    return UMatrix(values=out, region=region)


def _u_and_jack_cell(dm: DataMatrix, kernel: KernelSpec, pair) -> tuple[float, float]:
    """One subset enumeration yielding both the U-statistic and its
    jackknife variance (the per-row component pass already sees every
    kernel value, so the global average comes for free)."""
    m = kernel.order
    _check_kernel_use(kernel, dm.n)
    n = dm.n
    if n < m + 1:
        raise InsufficientSamplesError(
            f"leave-one-out components need at least {m + 1} samples, got {n}"
        )
    i, j = _check_pair(pair, dm.d)
    cols = dm.values[:, (i, j)]
    evaluate = kernel.evaluate
    sums = np.zeros(n)
    comps = np.zeros(n)
    values = []
    for sub in itertools.combinations(range(n), m):
        v = evaluate(cols[list(sub)], 0, 1)
        values.append(v)
        for a in sub:
            t = sums[a] + v
            if abs(sums[a]) >= abs(v):
                comps[a] += (sums[a] - t) + v
            else:
                comps[a] += (v - t) + sums[a]
            sums[a] = t
    u_hat = math.fsum(values) / math.comb(n, m)
    q = (sums + comps) / math.comb(n - 1, m - 1)
    return u_hat, jackknife_variance(q, u_hat, n, m)


def jackknife_variance_field(
    data, kernel: KernelSpec, region: str = REGION_FULL
) -> VarianceField:
    """Jackknife variance estimate for every pair in the region."""
    dm = _as_data(data)
    _check_region(region)
    d = dm.d
    out = np.full((d, d), np.nan)
    for i, j in _region_pairs(d, region):
        _, out[i, j] = _u_and_jack_cell(dm, kernel, (i, j))
        if region == REGION_UPPER:
            out[j, i] = out[i, j]
    return VarianceField(values=out, method="generic-jack", region=region)


def u_and_jackknife_matrices(
    data, kernel: KernelSpec, region: str = REGION_FULL
) -> tuple[UMatrix, VarianceField]:
    """U-statistic grid and jackknife variance field from a single subset
    enumeration per cell (half the work of calling :func:`u_matrix` and
    :func:`jackknife_variance_field` separately)."""
    dm = _as_data(data)
    _check_region(region)
    d = dm.d
    u_out = np.full((d, d), np.nan)
    v_out = np.full((d, d), np.nan)
    for i, j in _region_pairs(d, region):
        u_out[i, j], v_out[i, j] = _u_and_jack_cell(dm, kernel, (i, j))
        if region == REGION_UPPER:
            u_out[j, i] = u_out[i, j]
            v_out[j, i] = v_out[i, j]
    return (
        UMatrix(values=u_out, region=region),
        VarianceField(values=v_out, method="generic-jack", region=region),
    )
