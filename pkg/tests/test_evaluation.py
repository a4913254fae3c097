"""Tests for the NES/NEES statistics, chi-square bounds and ensemble RMSE."""

import dataclasses
import math

import numpy as np
import pytest

from rcmkf.conversion import ConversionMethod, mc_moment_oracle, _cart
from rcmkf.errors import DegenerateCovarianceError
from rcmkf.evaluation import chi_square_bounds, consistency_sweep, nees, nes, rmse
from rcmkf.montecarlo import RunRecord
from rcmkf.scenario import NoiseSpec, SphericalMeasurement, _noise_matrix

GEOMETRY = SphericalMeasurement(r=10000.0, theta=math.radians(45.0), rdot=100.0, dim=2)
SWEEP_NOISE = NoiseSpec(sigma_r=100.0, sigma_theta=0.0, sigma_rdot=5.0, rho=0.0)


def test_nes_perfect_compensation():
    errors = np.tile([1.0, 2.0, 3.0], (10, 1))
    assert nes(errors, np.array([1.0, 2.0, 3.0]), np.eye(3)) == 0.0


def test_nes_gaussian_mean_is_dimension():
    rng = np.random.default_rng(14)
    cov = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])
    mu = np.array([1.0, -2.0, 0.5])
    draws = rng.multivariate_normal(mu, cov, size=1_000_000)
    assert nes(draws, mu, cov) == pytest.approx(3.0, abs=0.01)
    # doubling the hypothesized covariance halves the statistic
    assert nes(draws, mu, 2 * cov) == pytest.approx(1.5, abs=0.005)


def test_nes_congruence_invariance():
    rng = np.random.default_rng(15)
    errors = rng.standard_normal((500, 3))
    mu = rng.standard_normal(3)
    cov = np.cov(errors.T) + np.eye(3)
    t = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    direct = nes(errors, mu, cov)
    transformed = nes((errors - mu) @ t.T + (t @ mu), t @ mu, t @ cov @ t.T)
    assert transformed == pytest.approx(direct, rel=1e-9)


def test_nes_singular_covariance():
    with pytest.raises(DegenerateCovarianceError):
        nes(np.ones((5, 2)), np.zeros(2), np.zeros((2, 2)))


def test_chi_square_bounds_reference_interval():
    lo, hi = chi_square_bounds(3, 1000, 0.001)
    assert lo == pytest.approx(2.76, abs=0.01)
    assert hi == pytest.approx(3.24, abs=0.01)


def test_chi_square_bounds_shrink_with_samples():
    lo, hi = chi_square_bounds(3, 1_000_000, 0.001)
    assert 2.99 < lo < 3.0 < hi < 3.01


def test_chi_square_bounds_brackets_one_sample():
    lo, hi = chi_square_bounds(1, 1, 0.01)
    assert lo < 1.0 < hi


def test_chi_square_bounds_validation():
    with pytest.raises(ValueError):
        chi_square_bounds(3, 1000, 0.7)
    with pytest.raises(ValueError):
        chi_square_bounds(0, 0, 0.001)


def test_consistency_sweep_small_noise_both_inside():
    grid = np.array([0.1])
    for method in ConversionMethod:
        rng = np.random.default_rng(np.random.SeedSequence(42))
        rep = consistency_sweep(method, GEOMETRY, SWEEP_NOISE, grid, 1000, rng)
        assert bool(rep.inside[0])


def test_consistency_sweep_nested_exits_at_large_noise():
    grid = np.array([25.0])
    rng = np.random.default_rng(np.random.SeedSequence(42))
    rep = consistency_sweep(ConversionMethod.NESTED_CONDITIONING, GEOMETRY, SWEEP_NOISE, grid, 1000, rng)
    assert not bool(rep.inside[0])
    assert rep.avg_nes[0] > rep.upper


def test_consistency_sweep_empty_grid():
    with pytest.raises(ValueError):
        consistency_sweep(
            ConversionMethod.MEASUREMENT_CONDITIONED,
            GEOMETRY,
            SWEEP_NOISE,
            np.array([]),
            100,
            np.random.default_rng(0),
        )


def test_harness_self_consistency_with_oracle_stats():
    # scoring draws from the oracle's own reconstruction model against the
    # oracle's estimated moments must land inside the acceptance interval;
    # the bounds assume near-Gaussian errors, so this runs at moderate noise
    noise = dataclasses.replace(SWEEP_NOISE, sigma_theta=math.radians(5.0))
    est = mc_moment_oracle(GEOMETRY, noise, 1_000_000, np.random.default_rng(20))
    n = 1000
    draws = _noise_matrix(noise, n, np.random.default_rng(21))
    conv = _cart(GEOMETRY.r, GEOMETRY.theta, 0.0, GEOMETRY.rdot)
    idx = np.array([0, 1, 3])
    errs = (conv[:, None] - _cart(
        GEOMETRY.r - draws[0], GEOMETRY.theta - draws[1], -draws[2], GEOMETRY.rdot - draws[3]
    ))[idx].T
    stat = nes(errs, est.mean, est.cov)
    lo, hi = chi_square_bounds(3, n, 0.001)
    assert lo <= stat <= hi


def make_record(idx, truth, estimates, covs=None):
    est_start = truth.shape[0] - next(iter(estimates.values())).shape[0]
    return RunRecord(
        run_index=idx,
        scenario="test",
        truth=truth,
        measurements=np.zeros((truth.shape[0], 4)),
        estimates=estimates,
        covariances=covs or {},
        position_errors={},
        skipped={},
        est_start=est_start,
    )


def test_rmse_zero_for_exact_estimates():
    truth = np.cumsum(np.ones((10, 4)), axis=0)
    rec = make_record(0, truth, {"V": truth[2:].copy()})
    rep = rmse([rec])
    np.testing.assert_array_equal(rep.rmse["V"], 0.0)
    assert rep.steps[0] == 2 and len(rep.steps) == 8


def test_rmse_constant_offset():
    truth = np.zeros((6, 4))
    offset = np.array([3.0, 4.0, 0.0, 0.0])
    rec = make_record(0, truth, {"V": truth[2:] + offset})
    rep = rmse([rec])
    np.testing.assert_allclose(rep.rmse["V"], 5.0)


def test_rmse_permutation_invariant_and_monotone():
    rng = np.random.default_rng(16)
    truth = rng.standard_normal((8, 4))
    recs = [
        make_record(i, truth, {"V": truth[2:] + rng.standard_normal((6, 4))}) for i in range(5)
    ]
    base = rmse(recs).rmse["V"]
    shuffled = rmse(recs[::-1]).rmse["V"]
    np.testing.assert_allclose(base, shuffled, rtol=1e-12)  # summation-order slack

    inflated = [
        make_record(r.run_index, r.truth, {"V": r.truth[2:] + 2 * (r.estimates["V"] - r.truth[2:])})
        for r in recs
    ]
    np.testing.assert_array_less(base, rmse(inflated).rmse["V"] + 1e-15)


def test_rmse_length_mismatch():
    truth = np.zeros((6, 4))
    recs = [
        make_record(0, truth, {"V": truth[2:]}),
        make_record(1, truth, {"V": truth[3:]}),
    ]
    with pytest.raises(ValueError):
        rmse(recs)


def test_case1_rmse_trace_decreases_then_flattens():
    import rcmkf

    scenario = dataclasses.replace(rcmkf.generate_case(1), runs=50)
    records = rcmkf.run_ensemble(scenario, (rcmkf.FilterVariant.RCMKF_U,), seed=6)
    curve = rmse(records).rmse["RCMKF_U"]
    early = curve[3:13].mean()
    late = curve[-20:].mean()
    assert late < early
    # flat tail: the last two decades differ far less than the initial drop
    prev = curve[-40:-20].mean()
    assert abs(prev - late) < 0.5 * (early - late)


def test_nees_consistent_synthetic_filter():
    rng = np.random.default_rng(17)
    steps, runs, n = 12, 200, 4
    cov = np.diag([4.0, 4.0, 1.0, 1.0])
    chol = np.linalg.cholesky(cov)
    recs = []
    for i in range(runs):
        truth = np.zeros((steps, n))
        err = (chol @ rng.standard_normal((n, steps - 2))).T
        recs.append(
            make_record(
                i,
                truth,
                {"V": truth[2:] + err},
                covs={"V": np.broadcast_to(cov, (steps - 2, n, n)).copy()},
            )
        )
    rep = nees(recs, tail=0.001)
    assert rep.lower < 4.0 < rep.upper
    assert np.all(rep.nees["V"] > rep.lower) and np.all(rep.nees["V"] < rep.upper)
