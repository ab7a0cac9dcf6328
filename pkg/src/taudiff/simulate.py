"""Seeded Monte-Carlo harness: data models, covariance structures, sparse
alternatives, and empirical size/power estimation.

Covariance construction per replication: a structured correlation matrix R
(block / tridiagonal / multidiagonal), scaled to Sigma = D R D with i.i.d.
Uniform(0.5, 1.5) diagonal D.  Under the alternative, a symmetric sparse
perturbation Delta with 8 nonzero entries is added and both matrices are
shifted by delta * I to restore positive definiteness; under the null the
samples are drawn from Sigma directly.

Every replication owns an independent, deterministically derived RNG stream
(a counter-based generator spawned from the master seed), so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import evt as _evt
from .errors import DataValidationError, TauDiffError
from .kendall import KENDALL_METHODS

STRUCTURE_BLOCK = "block"
STRUCTURE_TRIDIAGONAL = "tridiagonal"
STRUCTURE_MULTIDIAGONAL = "multidiagonal"
STRUCTURES = (
    STRUCTURE_BLOCK,
    STRUCTURE_TRIDIAGONAL,
    STRUCTURE_MULTIDIAGONAL,
)

MODEL_NORMAL = "normal"
MODEL_T = "t"
MODEL_CAUCHY = "cauchy"
MODELS = (MODEL_NORMAL, MODEL_T, MODEL_CAUCHY)
_MODEL_ALIASES = {
    1: MODEL_NORMAL,
    2: MODEL_T,
    3: MODEL_CAUCHY,
    "1": MODEL_NORMAL,
    "2": MODEL_T,
    "3": MODEL_CAUCHY,
}

#: Degrees of freedom of the heavy-tailed elliptical model.
T_DF = 3.0

#: Environment variable with the default worker count.
THREADS_ENV_VAR = "TAUDIFF_THREADS"


def canonical_model(model) -> str:
    model = _MODEL_ALIASES.get(model, model)
    if model not in MODELS:
        raise DataValidationError(
            f"unknown model {model!r}; expected 1/2/3 or one of {MODELS}"
        )
    return model


@dataclass(frozen=True)
class StructureSpec:
    """Correlation structure: kind plus dimension."""

    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in STRUCTURES:
            raise DataValidationError(
                f"unknown structure {self.kind!r}; expected one of {STRUCTURES}"
            )
        minimum = 5 if self.kind == STRUCTURE_BLOCK else 2
        if self.d < minimum:
            raise DataValidationError(
                f"structure {self.kind!r} needs d >= {minimum}, got {self.d}"
            )


@dataclass(frozen=True)
class SimSpec:
    """One Monte-Carlo cell: model, structure, sizes, perturbation, test."""

    model: str
    structure: StructureSpec
    n1: int
    n2: int
    zeta: float = 0.0
    method: str = "ps"
    alpha: float = 0.05
    reps: int = 100
    seed: int = 0
    pseudo_asymptotic: bool = False
    duplicate_null: bool = False  # diagnostic: Y is a copy of X per rep

    def __post_init__(self):
        object.__setattr__(self, "model", canonical_model(self.model))
        if self.method not in KENDALL_METHODS:
            raise DataValidationError(
                f"unknown method {self.method!r}; expected one of "
                f"{KENDALL_METHODS}"
            )
        if self.structure.d < 3:
            raise DataValidationError(
                f"the test needs d >= 3 variables, got {self.structure.d}"
            )
        if self.n1 < 3 or self.n2 < 3:
            raise DataValidationError(
                f"need n1, n2 >= 3, got n1 = {self.n1}, n2 = {self.n2}"
            )
        if self.zeta < 0:
            raise DataValidationError(f"zeta must be >= 0, got {self.zeta}")
        if self.reps < 1:
            raise DataValidationError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise DataValidationError(
                f"alpha must lie strictly between 0 and 1, got {self.alpha}"
            )

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "structure": self.structure.kind,
            "d": self.structure.d,
            "n1": self.n1,
            "n2": self.n2,
            "zeta": self.zeta,
            "method": self.method,
            "alpha": self.alpha,
            "reps": self.reps,
            "seed": self.seed,
            "pseudo_asymptotic": self.pseudo_asymptotic,
        }


@dataclass(frozen=True)
class CovariancePair:
    """Population covariances for one replication: Sigma2 - Sigma1 = Delta."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    delta: np.ndarray
    shift: float


def build_R(spec: StructureSpec) -> np.ndarray:
    """Structured correlation matrix.

    block: 0.6 off-diagonals inside consecutive 5-blocks, trailing d mod 5
    variables uncorrelated; tridiagonal: 0.5 on the first off-diagonal;
    multidiagonal: 0.8^|i-j|.
    """
    d = spec.d
    if spec.kind == STRUCTURE_BLOCK:
        R = np.eye(d)
        for k in range(d // 5):
            lo = 5 * k
            R[lo : lo + 5, lo : lo + 5] = 0.6
            R[range(lo, lo + 5), range(lo, lo + 5)] = 1.0
        return R
    if spec.kind == STRUCTURE_TRIDIAGONAL:
        R = np.eye(d)
        off = np.arange(d - 1)
        R[off, off + 1] = 0.5
        R[off + 1, off] = 0.5
        return R
    idx = np.arange(d)
    return 0.8 ** np.abs(idx[:, None] - idx[None, :])


def apply_D(R: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Scale a correlation matrix to a covariance: Sigma = D R D with
    D diagonal, entries i.i.d. Uniform(0.5, 1.5)."""
    d = R.shape[0]
    scales = rng.uniform(0.5, 1.5, size=d)
    return R * np.outer(scales, scales)


def perturb(
    sigma: np.ndarray, zeta: float, rng: np.random.Generator
) -> CovariancePair:
    """Sparse symmetric perturbation with positive-definiteness shift.

    With zeta = 0 the pair is (Sigma, Sigma) unchanged.  Otherwise 4
    distinct strictly-upper positions get magnitudes drawn independently
    from Uniform(0, zeta * max diag), mirrored to 8 nonzeros, and both
    matrices are shifted by (|min eigenvalue| + 0.05) * I.  Draw order:
    positions first, then magnitudes.
    """
    d = sigma.shape[0]
    if zeta < 0:
        raise DataValidationError(f"zeta must be >= 0, got {zeta}")
    if zeta == 0:
        zero = np.zeros_like(sigma)
        return CovariancePair(
            sigma1=sigma, sigma2=sigma, delta=zero, shift=0.0
        )
    iu, ju = np.triu_indices(d, 1)
    if iu.size < 4:
        raise DataValidationError(
            f"need at least 4 strictly-upper entries to perturb, "
            f"d = {d} has {iu.size}"
        )
    chosen = rng.choice(iu.size, size=4, replace=False)
    magnitudes = rng.uniform(0.0, zeta * float(sigma.diagonal().max()), size=4)
    delta = np.zeros_like(sigma)
    delta[iu[chosen], ju[chosen]] = magnitudes
    delta = delta + delta.T
    lam = min(
        float(np.linalg.eigvalsh(sigma + delta)[0]),
        float(np.linalg.eigvalsh(sigma)[0]),
    )
    shift = abs(lam) + 0.05
    eye = shift * np.eye(d)
    return CovariancePair(
        sigma1=sigma + eye,
        sigma2=sigma + delta + eye,
        delta=delta,
        shift=shift,
    )


def sample(
    model, sigma: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n rows from the model with covariance parameter Sigma.

    normal: N(0, Sigma).  t: elliptical t with 3 degrees of freedom,
    Z / sqrt(W/3) with one chi-square W per row.  cauchy: the normal draw
    with each coordinate standardized by its true marginal SD and pushed
    through the standard-normal CDF and the Cauchy quantile — a strictly
    increasing marginal map, so rank statistics match the normal draw.
    """
    model = canonical_model(model)
    if n < 1:
        raise DataValidationError(f"need n >= 1, got {n}")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise DataValidationError(
            "covariance matrix is not positive definite"
        ) from exc
    z = rng.standard_normal((n, sigma.shape[0])) @ chol.T
    if model == MODEL_NORMAL:
        return z
    if model == MODEL_T:
        w = rng.chisquare(T_DF, size=n)
        return z / np.sqrt(w / T_DF)[:, None]
    u = ndtr(z / np.sqrt(sigma.diagonal())[None, :])
    return np.tan(np.pi * (u - 0.5))


@dataclass(frozen=True)
class RepRecord:
    """Per-replication, per-method test summary."""

    rep: int
    method: str
    reject: bool
    statistic: float
    p_value: float


@dataclass(frozen=True)
class SimulationResult:
    """Rates with binomial standard errors plus the per-rep decisions."""

    spec: SimSpec
    methods: tuple[str, ...]
    rates: dict[str, float]
    stderr: dict[str, float]
    rejections: dict[str, np.ndarray]
    records: list[RepRecord]
    reps_completed: int
    failures: list[tuple[int, str]]
    runtime_seconds: float
    warnings: tuple[str, ...] = ()


def _replicate(spec: SimSpec, methods, rng: np.random.Generator):
    """One replication: fresh Sigma, fresh Delta, fresh samples, all tests."""
    R = build_R(spec.structure)
    sigma = apply_D(R, rng)
    pair = perturb(sigma, spec.zeta, rng)
    x = sample(spec.model, pair.sigma1, spec.n1, rng)
    if spec.duplicate_null:
        y = x.copy()
    else:
        y = sample(spec.model, pair.sigma2, spec.n2, rng)
    return _evt.run_kendall_tests(
        x,
        y,
        methods=methods,
        alpha=spec.alpha,
        pseudo_asymptotic=spec.pseudo_asymptotic,
    )


def resolve_workers(workers: int | None) -> int:
    """Worker count: explicit argument, else TAUDIFF_THREADS, else 1."""
    if workers is not None:
        if workers < 1:
            raise DataValidationError(f"workers must be >= 1, got {workers}")
        return workers
    env = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env:
        try:
            parsed = int(env)
        except ValueError as exc:
            raise DataValidationError(
                f"{THREADS_ENV_VAR} must be an integer, got {env!r}"
            ) from exc
        if parsed < 1:
            raise DataValidationError(
                f"{THREADS_ENV_VAR} must be >= 1, got {parsed}"
            )
        return parsed
    return 1


def empirical_rejection_rates(
    spec: SimSpec,
    methods=None,
    workers: int | None = None,
) -> SimulationResult:
    """Monte-Carlo rejection rate for one or more methods on shared draws.

    Replication r uses the r-th spawned child of the master seed, so the
    per-rep decisions do not depend on the worker count or completion
    order.  Failed replications are recorded, excluded from the rate, and
    surfaced as a warning.
    """
    methods = tuple(methods) if methods is not None else (spec.method,)
    for m in methods:
        if m not in KENDALL_METHODS:
            raise DataValidationError(
                f"unknown method {m!r}; expected one of {KENDALL_METHODS}"
            )
    workers = resolve_workers(workers)
    t0 = time.perf_counter()
    streams = np.random.SeedSequence(spec.seed).spawn(spec.reps)

    def one(rep: int):
        rng = np.random.Generator(np.random.Philox(streams[rep]))
        try:
            return rep, _replicate(spec, methods, rng), None
        except TauDiffError as exc:
            return rep, None, str(exc)

    if workers == 1:
        raw = [one(r) for r in range(spec.reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(one, range(spec.reps)))
    raw.sort(key=lambda item: item[0])

    rejections = {m: [] for m in methods}
    records: list[RepRecord] = []
    failures: list[tuple[int, str]] = []
    for rep, outcomes, error in raw:
        if error is not None:
            failures.append((rep, error))
            continue
        for m in methods:
            o = outcomes[m]
            rejections[m].append(o.reject)
            records.append(
                RepRecord(
                    rep=rep,
                    method=m,
                    reject=o.reject,
                    statistic=o.statistic,
                    p_value=o.p_value,
                )
            )
    completed = spec.reps - len(failures)
    if completed == 0:
        raise TauDiffError(
            f"all {spec.reps} replications failed; first error: "
            f"{failures[0][1]}"
        )
    rates = {}
    stderr = {}
    flags = {}
    for m in methods:
        arr = np.asarray(rejections[m], dtype=bool)
        flags[m] = arr
        rate = float(arr.mean())
        rates[m] = rate
        stderr[m] = math.sqrt(rate * (1.0 - rate) / completed)
    warn = ()
    if failures:
        warn = (
            f"{len(failures)} of {spec.reps} replications failed and were "
            f"excluded (first: rep {failures[0][0]}: {failures[0][1]})",
        )
    return SimulationResult(
        spec=spec,
        methods=methods,
        rates=rates,
        stderr=stderr,
        rejections=flags,
        records=records,
        reps_completed=completed,
        failures=failures,
        runtime_seconds=time.perf_counter() - t0,
        warnings=warn,
    )


def empirical_rejection_rate(
    spec: SimSpec, workers: int | None = None
) -> SimulationResult:
    """Single-method wrapper around :func:`empirical_rejection_rates`."""
    return empirical_rejection_rates(spec, methods=(spec.method,), workers=workers)
