"""Covariance construction, data models, and the Monte-Carlo harness."""

import math

import numpy as np
import pytest
from scipy import stats

import taudiff.simulate as sim
from taudiff import (
    DataValidationError,
    SimSpec,
    StructureSpec,
    TauDiffError,
    apply_D,
    build_R,
    empirical_rejection_rate,
    empirical_rejection_rates,
    perturb,
    resolve_workers,
    sample,
    tau_matrix_with_variances,
)


class TestStructures:
    def test_block_d5_is_single_block(self):
        R = build_R(StructureSpec("block", 5))
        want = np.full((5, 5), 0.6)
        np.fill_diagonal(want, 1.0)
        assert np.array_equal(R, want)

    def test_block_trailing_variables_uncorrelated(self):
        R = build_R(StructureSpec("block", 7))
        assert R[0, 1] == 0.6
        assert R[4, 5] == 0.0  # across the block boundary
        assert R[5, 6] == 0.0  # d mod 5 leftovers stay independent
        assert R[5, 5] == 1.0 and R[6, 6] == 1.0

    def test_block_two_blocks_are_disjoint(self):
        R = build_R(StructureSpec("block", 10))
        assert R[2, 3] == 0.6 and R[7, 8] == 0.6
        assert np.all(R[:5, 5:] == 0.0)

    def test_tridiagonal(self):
        R = build_R(StructureSpec("tridiagonal", 4))
        assert R[0, 1] == 0.5 and R[1, 2] == 0.5 and R[2, 3] == 0.5
        assert R[0, 2] == 0.0 and R[0, 3] == 0.0
        assert np.array_equal(R, R.T)
        assert np.array_equal(np.diag(R), np.ones(4))

    def test_multidiagonal_geometric_decay(self):
        R = build_R(StructureSpec("multidiagonal", 6))
        assert R[0, 1] == pytest.approx(0.8)
        assert R[0, 2] == pytest.approx(0.64)
        assert R[1, 4] == pytest.approx(0.8**3)
        assert np.array_equal(R, R.T)

    @pytest.mark.parametrize("kind,d", [
        ("block", 12), ("tridiagonal", 9), ("multidiagonal", 9),
    ])
    def test_positive_definite(self, kind, d):
        R = build_R(StructureSpec(kind, d))
        assert np.linalg.eigvalsh(R)[0] > 0.0

    def test_structure_validation(self):
        with pytest.raises(DataValidationError, match="unknown structure"):
            StructureSpec("banded", 5)
        with pytest.raises(DataValidationError, match="d >= 5"):
            StructureSpec("block", 4)
        with pytest.raises(DataValidationError, match="d >= 2"):
            StructureSpec("tridiagonal", 1)


class _UnitScales:
    """rng stub whose uniform draws are all 1, so D becomes the identity."""

    def uniform(self, lo, hi, size):
        return np.ones(size)


class TestScaling:
    def test_diagonal_range_and_correlation_preserved(self):
        rng = np.random.default_rng(5)
        R = build_R(StructureSpec("multidiagonal", 8))
        for _ in range(25):
            sigma = apply_D(R, rng)
            diag = sigma.diagonal()
            assert np.all(diag > 0.25) and np.all(diag < 2.25)
            sd = np.sqrt(diag)
            corr = sigma / np.outer(sd, sd)
            assert np.allclose(corr, R, rtol=0, atol=1e-12)

    def test_unit_scales_reproduce_R(self):
        R = build_R(StructureSpec("tridiagonal", 6))
        sigma = apply_D(R, _UnitScales())
        assert np.array_equal(sigma, R)


class TestPerturbation:
    def test_zeta_zero_is_identity(self):
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(1))
        pair = perturb(sigma, 0.0, np.random.default_rng(2))
        assert pair.sigma1 is sigma and pair.sigma2 is sigma
        assert not pair.delta.any()
        assert pair.shift == 0.0

    def test_sparse_symmetric_eight_nonzeros(self):
        sigma = apply_D(build_R(StructureSpec("block", 10)),
                        np.random.default_rng(3))
        for seed in range(10):
            pair = perturb(sigma, 0.5, np.random.default_rng(seed))
            assert np.count_nonzero(pair.delta) == 8
            assert np.array_equal(pair.delta, pair.delta.T)
            assert np.all(pair.delta.diagonal() == 0.0)
            assert pair.delta.max() <= 0.5 * sigma.diagonal().max()
            assert pair.delta.min() >= 0.0

    def test_difference_is_delta_and_shift_shared(self):
        sigma = apply_D(build_R(StructureSpec("multidiagonal", 7)),
                        np.random.default_rng(4))
        pair = perturb(sigma, 1.0, np.random.default_rng(5))
        assert np.allclose(pair.sigma2 - pair.sigma1, pair.delta,
                           rtol=0, atol=1e-12)
        # both matrices received the same ridge
        assert np.array_equal(pair.sigma1, sigma + pair.shift * np.eye(7))
        assert np.array_equal(
            pair.sigma2, sigma + pair.delta + pair.shift * np.eye(7)
        )

    def test_minimum_eigenvalue_floor(self):
        rng = np.random.default_rng(6)
        sigma = apply_D(build_R(StructureSpec("tridiagonal", 8)), rng)
        for zeta in (0.25, 1.0, 3.0):
            pair = perturb(sigma, zeta, rng)
            assert np.linalg.eigvalsh(pair.sigma1)[0] >= 0.05 - 1e-9
            assert np.linalg.eigvalsh(pair.sigma2)[0] >= 0.05 - 1e-9

    def test_deterministic_given_stream(self):
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(7))
        a = perturb(sigma, 0.4, np.random.default_rng(11))
        b = perturb(sigma, 0.4, np.random.default_rng(11))
        assert np.array_equal(a.delta, b.delta) and a.shift == b.shift

    def test_validation(self):
        with pytest.raises(DataValidationError, match="zeta"):
            perturb(np.eye(5), -0.1, np.random.default_rng(0))
        with pytest.raises(DataValidationError, match="at least 4"):
            perturb(np.eye(2), 0.5, np.random.default_rng(0))


class TestSampling:
    @pytest.mark.parametrize("model", ["normal", "t", "cauchy"])
    def test_shape_and_finiteness(self, model):
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(8))
        x = sample(model, sigma, 40, np.random.default_rng(9))
        assert x.shape == (40, 5)
        assert np.all(np.isfinite(x))

    def test_numeric_model_aliases(self):
        sigma = np.eye(3)
        for alias, name in [(1, "normal"), (2, "t"), (3, "cauchy"),
                            ("1", "normal"), ("2", "t"), ("3", "cauchy")]:
            a = sample(alias, sigma, 10, np.random.default_rng(10))
            b = sample(name, sigma, 10, np.random.default_rng(10))
            assert np.array_equal(a, b)

    def test_normal_covariance_recovered(self):
        sigma = apply_D(build_R(StructureSpec("multidiagonal", 4)),
                        np.random.default_rng(11))
        x = sample("normal", sigma, 200_000, np.random.default_rng(12))
        assert np.allclose(np.cov(x, rowvar=False), sigma, atol=0.02)

    def test_t_model_is_normal_over_shared_row_mixers(self):
        # documented construction: Z / sqrt(W/3), one chi-square per row,
        # drawn after the normal block from the same stream
        sigma = apply_D(build_R(StructureSpec("tridiagonal", 5)),
                        np.random.default_rng(13))
        seed = 14
        t_draw = sample("t", sigma, 50, np.random.default_rng(seed))
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((50, 5)) @ np.linalg.cholesky(sigma).T
        w = rng.chisquare(3.0, size=50)
        assert np.array_equal(t_draw, z / np.sqrt(w / 3.0)[:, None])

    def test_t_marginal_quartile_scaling(self):
        # the 75th percentile of column j is t_3's quartile times sqrt(S_jj)
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(15))
        x = sample("t", sigma, 100_000, np.random.default_rng(16))
        q75 = np.quantile(x, 0.75, axis=0) / np.sqrt(sigma.diagonal())
        assert np.allclose(q75, stats.t(3).ppf(0.75), atol=0.03)

    def test_cauchy_shares_ranks_with_normal(self):
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(17))
        seed = 18
        zn = sample("normal", sigma, 80, np.random.default_rng(seed))
        zc = sample("cauchy", sigma, 80, np.random.default_rng(seed))
        assert np.array_equal(np.argsort(zn, axis=0), np.argsort(zc, axis=0))
        tn = tau_matrix_with_variances(zn, methods=("ps",)).tau.values
        tc = tau_matrix_with_variances(zc, methods=("ps",)).tau.values
        iu = np.triu_indices(5, 1)
        assert np.array_equal(tn[iu], tc[iu])

    def test_cauchy_marginals_standard(self):
        # the quantile map strips the scale: quartiles land at +/- 1
        sigma = apply_D(build_R(StructureSpec("block", 5)),
                        np.random.default_rng(19))
        x = sample("cauchy", sigma, 100_000, np.random.default_rng(20))
        assert np.allclose(np.quantile(x, 0.75, axis=0), 1.0, atol=0.03)
        assert np.allclose(np.quantile(x, 0.25, axis=0), -1.0, atol=0.03)

    def test_validation(self):
        with pytest.raises(DataValidationError, match="positive definite"):
            sample("normal", np.array([[1.0, 2.0], [2.0, 1.0]]), 5,
                   np.random.default_rng(0))
        with pytest.raises(DataValidationError, match="n >= 1"):
            sample("normal", np.eye(3), 0, np.random.default_rng(0))
        with pytest.raises(DataValidationError, match="unknown model"):
            sample("laplace", np.eye(3), 5, np.random.default_rng(0))


class TestSimSpec:
    def test_model_alias_canonicalized(self):
        spec = SimSpec(model=3, structure=StructureSpec("block", 5),
                       n1=10, n2=10)
        assert spec.model == "cauchy"

    def test_to_dict_round_trips_scalars(self):
        spec = SimSpec(model="t", structure=StructureSpec("tridiagonal", 6),
                       n1=30, n2=40, zeta=0.2, method="jack", alpha=0.1,
                       reps=7, seed=123)
        d = spec.to_dict()
        assert d["model"] == "t" and d["structure"] == "tridiagonal"
        assert d["d"] == 6 and d["n1"] == 30 and d["n2"] == 40
        assert d["zeta"] == 0.2 and d["method"] == "jack"
        assert d["alpha"] == 0.1 and d["reps"] == 7 and d["seed"] == 123

    @pytest.mark.parametrize("kwargs,fragment", [
        (dict(model="poisson"), "unknown model"),
        (dict(method="bootstrap"), "unknown method"),
        (dict(n1=2), "n1, n2 >= 3"),
        (dict(n2=0), "n1, n2 >= 3"),
        (dict(zeta=-0.5), "zeta"),
        (dict(reps=0), "reps"),
        (dict(alpha=0.0), "alpha"),
        (dict(alpha=1.0), "alpha"),
    ])
    def test_validation(self, kwargs, fragment):
        base = dict(model="normal", structure=StructureSpec("block", 5),
                    n1=10, n2=10)
        base.update(kwargs)
        with pytest.raises(DataValidationError, match=fragment):
            SimSpec(**base)

    def test_dimension_minimum_for_testing(self):
        with pytest.raises(DataValidationError, match="d >= 3"):
            SimSpec(model="normal", structure=StructureSpec("tridiagonal", 2),
                    n1=10, n2=10)


class TestResolveWorkers:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv(sim.THREADS_ENV_VAR, "8")
        assert resolve_workers(2) == 2

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv(sim.THREADS_ENV_VAR, "6")
        assert resolve_workers(None) == 6

    def test_default_one(self, monkeypatch):
        monkeypatch.delenv(sim.THREADS_ENV_VAR, raising=False)
        assert resolve_workers(None) == 1

    def test_invalid_values(self, monkeypatch):
        with pytest.raises(DataValidationError):
            resolve_workers(0)
        monkeypatch.setenv(sim.THREADS_ENV_VAR, "two")
        with pytest.raises(DataValidationError, match="integer"):
            resolve_workers(None)
        monkeypatch.setenv(sim.THREADS_ENV_VAR, "-3")
        with pytest.raises(DataValidationError, match=">= 1"):
            resolve_workers(None)


def _small_spec(**overrides):
    kwargs = dict(
        model="normal",
        structure=StructureSpec("tridiagonal", 4),
        n1=30,
        n2=30,
        zeta=0.0,
        method="ps",
        alpha=0.05,
        reps=12,
        seed=424242,
    )
    kwargs.update(overrides)
    return SimSpec(**kwargs)


class TestHarness:
    def test_duplicate_null_never_rejects(self):
        res = empirical_rejection_rate(_small_spec(duplicate_null=True))
        assert res.rates["ps"] == 0.0
        assert all(r.statistic == 0.0 and not r.reject for r in res.records)

    def test_rerun_is_bit_identical(self):
        a = empirical_rejection_rate(_small_spec())
        b = empirical_rejection_rate(_small_spec())
        assert a.rates == b.rates
        assert [r.statistic for r in a.records] == [
            r.statistic for r in b.records
        ]
        assert [r.p_value for r in a.records] == [
            r.p_value for r in b.records
        ]

    def test_worker_count_does_not_change_decisions(self):
        a = empirical_rejection_rates(_small_spec(), methods=("ps", "jack"),
                                      workers=1)
        b = empirical_rejection_rates(_small_spec(), methods=("ps", "jack"),
                                      workers=4)
        for m in ("ps", "jack"):
            assert np.array_equal(a.rejections[m], b.rejections[m])
        assert [(r.rep, r.method, r.statistic) for r in a.records] == [
            (r.rep, r.method, r.statistic) for r in b.records
        ]

    def test_different_seeds_give_different_draws(self):
        a = empirical_rejection_rate(_small_spec(seed=1))
        b = empirical_rejection_rate(_small_spec(seed=2))
        assert [r.statistic for r in a.records] != [
            r.statistic for r in b.records
        ]

    def test_rates_match_records(self):
        res = empirical_rejection_rates(
            _small_spec(zeta=0.6, reps=20), methods=("ps", "plug")
        )
        assert res.methods == ("ps", "plug")
        assert len(res.records) == 2 * 20
        assert res.reps_completed == 20 and not res.failures
        for m in res.methods:
            flags = [r.reject for r in res.records if r.method == m]
            assert res.rates[m] == pytest.approx(np.mean(flags), abs=0)
            assert np.array_equal(res.rejections[m], np.asarray(flags))
            assert res.stderr[m] == pytest.approx(
                math.sqrt(res.rates[m] * (1 - res.rates[m]) / 20), abs=0
            )
        assert res.runtime_seconds > 0.0

    def test_record_pvalues_consistent_with_decisions(self):
        res = empirical_rejection_rate(_small_spec(reps=8, zeta=0.8))
        for r in res.records:
            assert r.reject == (r.p_value <= 0.05)

    def test_failed_replications_are_excluded(self, monkeypatch):
        real = sim._replicate
        calls = []

        def flaky(spec, methods, rng):
            calls.append(None)
            if len(calls) == 3:
                raise TauDiffError("synthetic failure")
            return real(spec, methods, rng)

        monkeypatch.setattr(sim, "_replicate", flaky)
        res = empirical_rejection_rate(_small_spec(reps=6))
        assert res.failures == [(2, "synthetic failure")]
        assert res.reps_completed == 5
        assert len(res.records) == 5
        assert {r.rep for r in res.records} == {0, 1, 3, 4, 5}
        assert any("excluded" in w for w in res.warnings)

    def test_all_failures_raise(self, monkeypatch):
        def broken(spec, methods, rng):
            raise TauDiffError("nothing works")

        monkeypatch.setattr(sim, "_replicate", broken)
        with pytest.raises(TauDiffError, match="all 12 replications failed"):
            empirical_rejection_rate(_small_spec())

    def test_unknown_method_rejected(self):
        with pytest.raises(DataValidationError, match="unknown method"):
            empirical_rejection_rates(_small_spec(), methods=("ps", "magic"))

    def test_alternative_rejects_more_than_null(self):
        null = empirical_rejection_rate(
            _small_spec(n1=60, n2=60, reps=25, seed=77)
        )
        alt = empirical_rejection_rate(
            _small_spec(n1=60, n2=60, reps=25, seed=77, zeta=2.0)
        )
        assert alt.rates["ps"] > null.rates["ps"]
