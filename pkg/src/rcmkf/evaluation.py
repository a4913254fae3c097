"""Statistical evaluation: NES/NEES consistency tests and ensemble RMSE.

The normalized-error-squared (NES) statistic averages the quadratic form of
errors in their hypothesized covariance; if the hypothesized first two
moments match the actual ones, the per-sample statistic behaves like a
chi-square variable with one degree of freedom per error component, and the
sample average over N realizations falls inside a chi-square acceptance
interval. The consistency sweep applies this to conversion errors with the
hypothesized (mu, R) evaluated at each realization's measured values,
sweeping the bearing noise level.

NEES applies the same construction to filter state-estimate errors against
the filter's own covariance. It is an extra diagnostic of this library, not
part of the benchmark comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

from .conversion import ConversionMethod, _cart, _stats_batch
from .errors import DegenerateCovarianceError
from .montecarlo import RunRecord
from .scenario import NoiseSpec, SphericalMeasurement, _noise_matrix

__all__ = [
    "NeesReport",
    "NesReport",
    "RmseReport",
    "chi_square_bounds",
    "consistency_sweep",
    "nees",
    "nes",
    "rmse",
]


def nes(errors, mu: np.ndarray, cov: np.ndarray) -> float:
    """Average normalized error squared under one hypothesized (mu, cov).

    ``errors`` is an (N, d) array or a sequence of d-vectors; the result is
    the mean of ``(e - mu)^T cov^{-1} (e - mu)``.
    """
    e = np.atleast_2d(np.asarray(errors, dtype=float)) - np.asarray(mu, dtype=float)
    try:
        sol = np.linalg.solve(cov, e.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("hypothesized covariance is singular") from exc
    return float(np.mean(np.einsum("nd,dn->n", e, sol)))


def _nes_samples(errors: np.ndarray, mus: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Per-sample NES with per-sample hypothesized moments (batched)."""
    e = errors - mus
    try:
        sol = np.linalg.solve(covs, e[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("a per-sample covariance is singular") from exc
    return np.einsum("nd,nd->n", e, sol)


def chi_square_bounds(dof_per_sample: int, samples: int, tail: float) -> tuple[float, float]:
    """Acceptance interval for the average NES of ``samples`` realizations.

    The scaled average ``N * NES`` of jointly Gaussian, well-modeled errors
    is chi-square with ``d * N`` degrees of freedom, so the average lies in
    ``[chi2_{dN}(tail), chi2_{dN}(1 - tail)] / N`` with probability
    ``1 - 2 * tail``.
    """
    dof = dof_per_sample * samples
    if dof < 1:
        raise ValueError("need at least one degree of freedom")
    if not 0.0 < tail < 0.5:
        raise ValueError("tail probability must lie in (0, 0.5)")
    return (
        float(chi2.ppf(tail, dof) / samples),
        float(chi2.ppf(1.0 - tail, dof) / samples),
    )


@dataclass(eq=False)
class NesReport:
    """Consistency sweep result for one conversion method."""

    method: ConversionMethod
    sigma_theta_deg: np.ndarray
    avg_nes: np.ndarray
    lower: float
    upper: float
    inside: np.ndarray
    samples: int


def consistency_sweep(
    method: ConversionMethod,
    geometry: SphericalMeasurement,
    noise_base: NoiseSpec,
    sigma_theta_deg: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    tail: float = 0.001,
) -> NesReport:
    """Average NES of conversion errors across a bearing-noise sweep.

    ``geometry`` is the fixed true spherical point. For each grid value the
    bearing noise is set accordingly, ``samples`` noisy measurements are
    drawn, converted, and scored against the method's hypothesized moments
    evaluated at the measured values. The error vector stacks the converted
    position components and the pseudo-measurement (d = 3 for a 2D radar).
    """
    grid = np.asarray(sigma_theta_deg, dtype=float)
    if grid.size == 0:
        raise ValueError("sweep grid must not be empty")
    dim = geometry.dim
    idx = np.array([0, 1, 3]) if dim == 2 else np.arange(4)
    phi0 = geometry.phi if dim == 3 else 0.0
    truth = _cart(geometry.r, geometry.theta, phi0, geometry.rdot)[idx]
    lower, upper = chi_square_bounds(dim + 1, samples, tail)

    averages = np.empty(grid.size)
    for i, sig_deg in enumerate(grid):
        noise = replace(noise_base, sigma_theta=np.deg2rad(sig_deg))
        draws = _noise_matrix(noise, samples, rng)
        rm = geometry.r + draws[0]
        thm = geometry.theta + draws[1]
        phm = phi0 + draws[2]
        rdm = geometry.rdot + draws[3]
        errors = _cart(rm, thm, phm, rdm)[idx].T - truth
        mus, covs = _stats_batch(method, rm, thm, phm, rdm, noise, dim)
        averages[i] = _nes_samples(errors, mus, covs).mean()

    inside = (averages >= lower) & (averages <= upper)
    return NesReport(
        method=method,
        sigma_theta_deg=grid,
        avg_nes=averages,
        lower=lower,
        upper=upper,
        inside=inside,
        samples=samples,
    )


@dataclass(eq=False)
class RmseReport:
    """Per-step position RMSE for each filter variant over an ensemble."""

    steps: np.ndarray
    rmse: dict[str, np.ndarray]
    runs: int
    scenario: str


def rmse(records: list[RunRecord], truth: np.ndarray | None = None) -> RmseReport:
    """Ensemble position RMSE per step.

    Uses each realization's own truth trajectory unless a shared ``truth``
    is supplied. Estimates start after the two scans consumed by two-point
    differencing initialization.
    """
    if not records:
        raise ValueError("need at least one run record")
    first = records[0]
    steps = np.arange(first.est_start, first.truth.shape[0])
    p = first.truth.shape[1] // 2
    out: dict[str, np.ndarray] = {}
    for name in first.estimates:
        acc = np.zeros(len(steps))
        for rec in records:
            ref = rec.truth if truth is None else np.asarray(truth)
            if rec.est_start != first.est_start or len(rec.estimates[name]) != len(steps):
                raise ValueError("run records do not share the scenario layout")
            if len(ref) != rec.truth.shape[0]:
                raise ValueError("truth length does not match the records")
            err = rec.estimates[name][:, :p] - ref[first.est_start :, :p]
            acc += np.sum(err**2, axis=1)
        out[name] = np.sqrt(acc / len(records))
    return RmseReport(steps=steps, rmse=out, runs=len(records), scenario=first.scenario)


@dataclass(eq=False)
class NeesReport:
    """Average state-estimate NEES per step (library diagnostic)."""

    steps: np.ndarray
    nees: dict[str, np.ndarray]
    lower: float
    upper: float
    runs: int
    scenario: str


def nees(records: list[RunRecord], tail: float = 0.001) -> NeesReport:
    """Average normalized state-estimate error squared per step.

    Scores each run's full state error against the filter's reported
    covariance; a consistent filter stays inside the chi-square interval for
    ``n`` degrees of freedom per run.
    """
    if not records:
        raise ValueError("need at least one run record")
    first = records[0]
    n = first.truth.shape[1]
    steps = np.arange(first.est_start, first.truth.shape[0])
    lower, upper = chi_square_bounds(n, len(records), tail)
    out: dict[str, np.ndarray] = {}
    for name in first.estimates:
        acc = np.zeros(len(steps))
        for rec in records:
            err = rec.estimates[name] - rec.truth[first.est_start :]
            sol = np.linalg.solve(rec.covariances[name], err[..., None])[..., 0]
            acc += np.einsum("kd,kd->k", err, sol)
        out[name] = acc / len(records)
    return NeesReport(
        steps=steps, nees=out, lower=lower, upper=upper, runs=len(records), scenario=first.scenario
    )
