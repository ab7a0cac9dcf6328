"""Fast rank-correlation statistics.

Pair and matrix Kendall-tau estimates with three variance estimators:

* ``jack`` — Jackknife (order-2 specialization, computed from per-sample
  concordance counts),
* ``plug`` — plug-in estimator built from the concordance probabilities
  Pi_c and Pi_cc,
* ``ps`` — the closed-form null variance of tau under a continuous
  Gaussian-copula model ("pseudo" method).

Every estimate is derived from exact integer concordance counts, so results
are bit-identical across runs and across any parallel pair schedule, and
depend on the data only through column orderings (rank invariance).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _fast
from .errors import DataValidationError, InsufficientSamplesError
from .ustat import DataMatrix, UMatrix, VarianceField, REGION_UPPER, _as_data

METHOD_JACK = "jack"
METHOD_PLUG = "plug"
METHOD_PS = "ps"
KENDALL_METHODS = (METHOD_JACK, METHOD_PLUG, METHOD_PS)

#: Above this sample count the int64 Jackknife reduction could overflow;
#: the per-pair combination switches to exact Python integers.
_INT64_SAFE_N = 40_000


@dataclass(frozen=True)
class ConcordanceProfile:
    """Per-sample concordance counts for one variable pair.

    ``c[a]`` / ``d[a]`` count the samples l != a whose sign product with a
    is +1 / -1; ``ties`` is the number of unordered pairs with a zero sign
    product.
    """

    c: np.ndarray
    d: np.ndarray
    ties: int
    n: int

    @property
    def tau(self) -> float:
        """Tau-a estimate implied by the counts (no tie correction)."""
        s = int(self.c.sum()) - int(self.d.sum())
        return s / (self.n * (self.n - 1))

    @property
    def components(self) -> np.ndarray:
        """Leave-one-out components q_a = (c_a - d_a) / (n - 1)."""
        return (self.c - self.d) / (self.n - 1)


@dataclass(frozen=True)
class TauPairEstimates:
    """Scalar bundle: tau with both data-driven variance estimates."""

    tau_hat: float
    var_jack: float
    var_plug: float
    pi_c_hat: float
    pi_cc_hat: float


def _check_pair_vectors(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DataValidationError(
            f"vectors have different lengths: {x.size} and {y.size}"
        )
    if x.size < 2:
        raise InsufficientSamplesError(
            f"need at least 2 observations, got {x.size}"
        )
    for name, v in (("x", x), ("y", y)):
        if not np.isfinite(v).all():
            k = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DataValidationError(
                f"non-finite value in {name} at position {k + 1}"
            )
    return x, y


def _tie_pair_count(sorted_vals: np.ndarray) -> int:
    """Number of unordered tied pairs in a sorted vector."""
    bounds = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1])
    lengths = np.diff(np.concatenate(([0], bounds + 1, [sorted_vals.size])))
    return int(sum(int(t) * (int(t) - 1) // 2 for t in lengths))


def tau_pair(x, y) -> float:
    """Kendall's tau between two vectors in O(n log n).

    Sort-and-merge evaluation: concordant-minus-discordant counts come from
    a strict inversion count of y after sorting by (x, y), with tie runs
    accounted exactly, so the result matches the definitional O(n^2) sign
    sum bit for bit.
    """
    x, y = _check_pair_vectors(x, y)
    n = x.size
    order = np.lexsort((y, x))
    ys = y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(x[order])
    xb = x[order][1:] != x[order][:-1]
    joint_bounds = np.flatnonzero(xb | (ys[1:] != ys[:-1]))
    joint_lengths = np.diff(
        np.concatenate(([0], joint_bounds + 1, [n]))
    )
    n3 = int(sum(int(t) * (int(t) - 1) // 2 for t in joint_lengths))
    n2 = _tie_pair_count(np.sort(y))
    buf = np.empty(n, dtype=np.float64)
    disc = int(_fast.count_inversions(ys.copy(), buf))
    conc = n0 - n1 - n2 + n3 - disc
    return 2.0 * (conc - disc) / (n * (n - 1))


def tau_pair_naive(x, y) -> float:
    """Definitional O(n^2) tau: the oracle for :func:`tau_pair`."""
    x, y = _check_pair_vectors(x, y)
    n = x.size
    s = 0
    for k in range(n):
        for l in range(k + 1, n):
            dx = x[k] - x[l]
            dy = y[k] - y[l]
            s += (int(dx > 0) - int(dx < 0)) * (int(dy > 0) - int(dy < 0))
    return 2.0 * s / (n * (n - 1))


def concordance_profile(x, y) -> ConcordanceProfile:
    """Per-sample concordant/discordant counts in O(n log n)."""
    x, y = _check_pair_vectors(x, y)
    n = x.size
    orders, ranks, starts, _ = _fast.prepare_columns(
        np.column_stack((x, y))
    )
    conc, disc = _fast.profile_counts(orders[0], starts[0], ranks[1])
    ties = n * (n - 1) // 2 - (int(conc.sum()) + int(disc.sum())) // 2
    return ConcordanceProfile(c=conc, d=disc, ties=ties, n=n)


def concordance_profile_naive(x, y) -> ConcordanceProfile:
    """O(n^2) oracle for :func:`concordance_profile`."""
    x, y = _check_pair_vectors(x, y)
    n = x.size
    conc = np.zeros(n, dtype=np.int64)
    disc = np.zeros(n, dtype=np.int64)
    ties = 0
    for k in range(n):
        for l in range(k + 1, n):
            dx = x[k] - x[l]
            dy = y[k] - y[l]
            s = (int(dx > 0) - int(dx < 0)) * (int(dy > 0) - int(dy < 0))
            if s > 0:
                conc[k] += 1
                conc[l] += 1
            elif s < 0:
                disc[k] += 1
                disc[l] += 1
            else:
                ties += 1
    return ConcordanceProfile(c=conc, d=disc, ties=ties, n=n)


def _require_n(profile: ConcordanceProfile, minimum: int, what: str) -> None:
    if profile.n < minimum:
        raise InsufficientSamplesError(
            f"{what} needs at least {minimum} samples, got {profile.n}"
        )


def jackknife_variance_tau(profile: ConcordanceProfile) -> float:
    """Jackknife variance of tau from a concordance profile.

    Order-2 specialization 4(n-1)/(n(n-2)^2) * sum_a (q_a - tau)^2, reduced
    to exact integer arithmetic: 4 (n * sum s_a^2 - S^2) with s_a = c_a - d_a
    and S = sum s_a, divided by n^2 (n-1) (n-2)^2.
    """
    _require_n(profile, 3, "jackknife variance")
    n = profile.n
    s = profile.c - profile.d
    s_sum = int(s.sum())
    s_sq = int((s * s).sum())
    num = n * s_sq - s_sum * s_sum
    den = float(n) * n * (n - 1) * (n - 2) * (n - 2)
    return 4.0 * num / den


def plugin_variance_tau(
    profile: ConcordanceProfile,
) -> tuple[float, float, float]:
    """Plug-in variance of tau: (16/n)(Pi_cc - Pi_c^2), with the estimates.

    Pi_c-hat = sum_a c_a / (n(n-1)) (concordance probability) and
    Pi_cc-hat = sum_a c_a (c_a - 1) / (n(n-1)(n-2)), the exact third-order
    U-statistic of the shared-sample concordance indicator evaluated through
    the count identity.  Returns (var_plug, pi_c_hat, pi_cc_hat); var_plug
    can be negative in small samples — test denominators apply a floor.
    """
    _require_n(profile, 3, "plug-in variance")
    n = profile.n
    c_sum = int(profile.c.sum())
    c_pair = int((profile.c * (profile.c - 1)).sum())
    pi_c = c_sum / (n * (n - 1))
    pi_cc = c_pair / (n * (n - 1) * (n - 2))
    var_plug = 16.0 / n * (pi_cc - pi_c * pi_c)
    return var_plug, pi_c, pi_cc


def pi_cc_naive(x, y) -> float:
    """O(n^3) oracle for Pi_cc-hat: enumerate ordered distinct triples
    (a, b, g) and average 1{(a,b) concordant} * 1{(a,g) concordant}."""
    x, y = _check_pair_vectors(x, y)
    n = x.size
    if n < 3:
        raise InsufficientSamplesError(
            f"Pi_cc needs at least 3 samples, got {n}"
        )

    def conc(k, l):
        dx = x[k] - x[l]
        dy = y[k] - y[l]
        return (int(dx > 0) - int(dx < 0)) * (int(dy > 0) - int(dy < 0)) > 0

    count = 0
    for a in range(n):
        for b in range(n):
            if b == a:
                continue
            for g in range(n):
                if g == a or g == b:
                    continue
                if conc(a, b) and conc(a, g):
                    count += 1
    return count / (n * (n - 1) * (n - 2))


def kruskal_variance(pi_c: float, pi_cc: float, n: int) -> float:
    """Exact finite-sample variance of tau from concordance probabilities.

    Evaluates 8/(n(n-1)) Pi_c (1-Pi_c) + 16 (1/n)((n-2)/(n-1))(Pi_cc - Pi_c^2)
    (Kruskal's classical formula).  Diagnostic only: the test denominators use
    the plug-in form, whose n -> infinity scaling this formula corroborates.
    """
    if n < 2:
        raise InsufficientSamplesError(f"need n >= 2, got {n}")
    for name, v in (("pi_c", pi_c), ("pi_cc", pi_cc)):
        if not 0.0 <= v <= 1.0:
            raise DataValidationError(f"{name} must lie in [0, 1], got {v}")
    lead = 8.0 * pi_c * (1.0 - pi_c) / (n * (n - 1))
    tail = 16.0 * (n - 2) / (n * (n - 1)) * (pi_cc - pi_c * pi_c)
    return lead + tail


def pseudo_variance(n: int, asymptotic: bool = False) -> float:
    """Null variance of sqrt(n)-scaled tau under a continuous model.

    Returns 4/9 in asymptotic mode, else the finite-sample Gaussian-copula
    value 2(2n+5)/(9(n-1)), which decreases to 4/9 as n grows.
    """
    if asymptotic:
        return 4.0 / 9.0
    if n < 2:
        raise InsufficientSamplesError(f"need n >= 2, got {n}")
    return 2.0 * (2 * n + 5) / (9.0 * (n - 1))


def sine_latent_correlation(tau: float) -> float:
    """Latent Gaussian-copula correlation implied by tau: sin(pi tau / 2)."""
    if not -1.0 <= tau <= 1.0:
        raise DataValidationError(f"tau must lie in [-1, 1], got {tau}")
    return math.sin(math.pi * tau / 2.0)


def pair_estimates(x, y) -> TauPairEstimates:
    """Tau plus both data-driven variance estimates for one pair."""
    profile = concordance_profile(x, y)
    _require_n(profile, 3, "variance estimation")
    var_plug, pi_c, pi_cc = plugin_variance_tau(profile)
    return TauPairEstimates(
        tau_hat=profile.tau,
        var_jack=jackknife_variance_tau(profile),
        var_plug=var_plug,
        pi_c_hat=pi_c,
        pi_cc_hat=pi_cc,
    )


@dataclass(frozen=True)
class PairStatsTable:
    """Raw per-pair reductions for a list of variable pairs.

    Columns of ``stats``: S = sum (c_a - d_a), S2 = sum (c_a - d_a)^2,
    C = sum c_a, C2 = sum c_a (c_a - 1), T = sum per-sample tie counts
    (2x the tied pair count).  Exact int64.
    """

    idx_i: np.ndarray
    idx_j: np.ndarray
    stats: np.ndarray
    n: int


def _pair_stats_table(values: np.ndarray, idx_i, idx_j, workers: int = 1) -> PairStatsTable:
    n = values.shape[0]
    orders, ranks, starts, has_ties = _fast.prepare_columns(values)
    idx_i = np.ascontiguousarray(idx_i, dtype=np.int64)
    idx_j = np.ascontiguousarray(idx_j, dtype=np.int64)
    out = np.empty((idx_i.size, 5), dtype=np.int64)
    if workers <= 1 or idx_i.size < 64:
        _fast.pair_stats(orders, ranks, starts, has_ties, idx_i, idx_j, out)
    else:
        # The compiled kernel releases the GIL; chunks write disjoint slices,
        # so the result is identical to the serial pass.
        bounds = np.linspace(0, idx_i.size, workers + 1, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _fast.pair_stats,
                    orders,
                    ranks,
                    starts,
                    has_ties,
                    idx_i[lo:hi],
                    idx_j[lo:hi],
                    out[lo:hi],
                )
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for f in futures:
                f.result()
    return PairStatsTable(idx_i=idx_i, idx_j=idx_j, stats=out, n=n)


def _variances_from_stats(
    table: PairStatsTable, methods, pseudo_asymptotic: bool
) -> dict[str, np.ndarray]:
    n = table.n
    stats = table.stats
    out: dict[str, np.ndarray] = {}
    if METHOD_JACK in methods:
        if n <= _INT64_SAFE_N:
            num = n * stats[:, 1] - stats[:, 0] * stats[:, 0]
            num = num.astype(np.float64)
        else:
            num = np.array(
                [
                    n * int(s2) - int(s) * int(s)
                    for s, s2 in zip(stats[:, 0], stats[:, 1])
                ],
                dtype=np.float64,
            )
        den = float(n) * n * (n - 1) * (n - 2) * (n - 2)
        out[METHOD_JACK] = 4.0 * num / den
    if METHOD_PLUG in methods:
        pi_c = stats[:, 2] / (n * (n - 1))
        pi_cc = stats[:, 3] / (n * (n - 1) * (n - 2))
        out[METHOD_PLUG] = 16.0 / n * (pi_cc - pi_c * pi_c)
    if METHOD_PS in methods:
        const = pseudo_variance(n, asymptotic=pseudo_asymptotic) / n
        out[METHOD_PS] = np.full(stats.shape[0], const)
    return out


@dataclass(frozen=True)
class TauMatrixResult:
    """Tau matrix with per-method variance fields and tie diagnostics."""

    tau: UMatrix
    variances: dict[str, VarianceField]
    tie_pairs: int
    n: int


def _check_methods(methods) -> tuple[str, ...]:
    methods = tuple(methods)
    if not methods:
        raise DataValidationError("at least one method is required")
    for m in methods:
        if m not in KENDALL_METHODS:
            raise DataValidationError(
                f"unknown method {m!r}; expected one of {KENDALL_METHODS}"
            )
    return methods


def tau_matrix_with_variances(
    data,
    methods=KENDALL_METHODS,
    pseudo_asymptotic: bool = False,
    workers: int = 1,
) -> TauMatrixResult:
    """Tau matrix over the upper triangle with per-method variance fields.

    Parameters
    ----------
    data : DataMatrix or array-like, shape (n, d), n >= 3, d >= 3
    methods : iterable from {"jack", "plug", "ps"}
    pseudo_asymptotic : bool
        Use the 4/9 limit instead of the finite-sample pseudo constant.
    workers : int
        Thread count for the pair sweep (any value yields identical output).

    Returns
    -------
    TauMatrixResult
        Tau is symmetric with unit diagonal; variance fields are symmetric
        with NaN on the (never tested) diagonal, on the Var(tau-hat) scale.
    """
    dm = _as_data(data)
    methods = _check_methods(methods)
    n, d = dm.n, dm.d
    if n < 3:
        raise InsufficientSamplesError(f"need at least 3 samples, got {n}")
    if d < 3:
        raise DataValidationError(f"need at least 3 variables, got {d}")
    idx_i, idx_j = np.triu_indices(d, 1)
    table = _pair_stats_table(dm.values, idx_i, idx_j, workers=workers)

    tau_flat = table.stats[:, 0] / (n * (n - 1))
    tau = np.eye(d)
    tau[idx_i, idx_j] = tau_flat
    tau[idx_j, idx_i] = tau_flat

    fields: dict[str, VarianceField] = {}
    for method, flat in _variances_from_stats(
        table, methods, pseudo_asymptotic
    ).items():
        grid = np.full((d, d), np.nan)
        grid[idx_i, idx_j] = flat
        grid[idx_j, idx_i] = flat
        fields[method] = VarianceField(
            values=grid, method=method, region=REGION_UPPER
        )
    tie_pairs = int(table.stats[:, 4].sum()) // 2
    return TauMatrixResult(
        tau=UMatrix(values=tau, region=REGION_UPPER),
        variances=fields,
        tie_pairs=tie_pairs,
        n=n,
    )
