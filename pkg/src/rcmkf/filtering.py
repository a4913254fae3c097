"""Sequential filtering on converted measurements.

Each scan is processed in two stages. The converted position is linear in
the state and goes through a standard Kalman update. The pseudo-measurement
``eta = r * rdot`` is quadratic in the state; its error is first decorrelated
from the position errors (a Schur-complement / Cholesky step), then applied
through a second-order extended Kalman update linearized about the
position-updated estimate. Processing position first keeps the
linearization point as accurate as possible.

Covariance updates use the Joseph-stabilized form, which is algebraically
identical to ``(I - K H) P`` at the optimal gain but keeps the result
symmetric positive semidefinite under rounding. Every covariance-producing
operation symmetrizes its output.

The two pipeline variants differ only in where their conversion statistics
come from: RCMKF-U uses the measurement-conditioned moments, RCMKF-D the
nested-conditioning ones. The filter code path is shared.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .conversion import ConversionMethod, ConvertedMeasurement, convert
from .errors import DegenerateCovarianceError
from .scenario import DynamicModel, NoiseSpec, SphericalMeasurement

__all__ = [
    "DecorrelatedMeasurement",
    "FilterRun",
    "FilterVariant",
    "GaussianBelief",
    "decorrelate",
    "ekf_update_pseudo",
    "initialize_belief",
    "kf_predict",
    "kf_update_position",
    "pseudo_jacobian",
    "quadratic_correction",
    "run_filter",
]


class FilterVariant(enum.Enum):
    """Pipeline selector; the value names the conversion-statistics source."""

    RCMKF_U = ConversionMethod.MEASUREMENT_CONDITIONED
    RCMKF_D = ConversionMethod.NESTED_CONDITIONING

    @property
    def method(self) -> ConversionMethod:
        return self.value


@dataclass(eq=False)
class GaussianBelief:
    """State estimate as mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = len(self.mean)
        if self.cov.shape != (n, n):
            raise ValueError("covariance shape does not match the state length")

    @property
    def dim(self) -> int:
        return len(self.mean) // 2


@dataclass(frozen=True, eq=False)
class DecorrelatedMeasurement:
    """Position part plus a pseudo-measurement made uncorrelated with it.

    ``l_row`` is the decorrelation row: ``eps = l_row @ position + eta``,
    with mean ``mu_eps`` and variance ``var_eps`` equal to the Schur
    complement of the position block in the joint error covariance.
    """

    position: np.ndarray
    mu_pos: np.ndarray
    cov_pos: np.ndarray
    pseudo: float
    mu_pseudo: float
    var_pseudo: float
    l_row: np.ndarray
    dim: int
    step: int = 0


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def decorrelate(z: ConvertedMeasurement) -> DecorrelatedMeasurement:
    """Remove the position/pseudo error correlation from a conversion.

    With the joint covariance split into position block ``R_pp``, cross row
    ``R_ep`` and scalar ``R_ee``, the row ``L = -R_ep @ inv(R_pp)`` makes the
    transformed pseudo error ``L @ pos_err + eta_err`` uncorrelated with the
    position errors; its variance is ``R_ee - R_ep inv(R_pp) R_ep^T``.
    """
    p = z.dim
    r_pp = z.cov[:p, :p]
    r_ep = z.cov[p, :p]
    r_ee = float(z.cov[p, p])
    if not np.any(r_ep):
        l_row = np.zeros(p)
    else:
        try:
            l_row = -np.linalg.solve(r_pp, r_ep)
        except np.linalg.LinAlgError as exc:
            raise DegenerateCovarianceError("position error covariance is singular") from exc
    var_eps = r_ee + float(l_row @ r_ep)
    if var_eps < 0:
        if var_eps > -1e-9 * max(r_ee, 1.0):
            var_eps = 0.0
        else:
            raise DegenerateCovarianceError("negative residual pseudo-measurement variance")
    return DecorrelatedMeasurement(
        position=z.position,
        mu_pos=z.mu[:p],
        cov_pos=r_pp,
        pseudo=float(l_row @ z.position) + z.pseudo,
        mu_pseudo=float(l_row @ z.mu[:p]) + float(z.mu[p]),
        var_pseudo=var_eps,
        l_row=l_row,
        dim=p,
        step=z.step,
    )


def kf_predict(
    belief: GaussianBelief, model: DynamicModel, accel: np.ndarray | None = None
) -> GaussianBelief:
    """Time update through the dynamic model (zero input unless given)."""
    n = len(belief.mean)
    if n != model.n:
        raise ValueError("belief size does not match the model")
    mean = model.phi @ belief.mean
    if accel is not None:
        mean = mean + model.g @ np.asarray(accel, dtype=float)
    cov = _symmetrize(model.phi @ belief.cov @ model.phi.T + model.process_noise_cov())
    return GaussianBelief(mean, cov)


def kf_update_position(belief: GaussianBelief, d: DecorrelatedMeasurement) -> GaussianBelief:
    """Linear measurement update with the converted position.

    The innovation is compensated for the hypothesized conversion bias:
    ``z - mu - H x``. Joseph form keeps the covariance PSD.
    """
    n = len(belief.mean)
    p = d.dim
    if n != 2 * p:
        raise ValueError("measurement dimension does not match the belief")
    s = belief.cov[:p, :p] + d.cov_pos
    try:
        gain = np.linalg.solve(s, belief.cov[:p, :]).T  # (n, p)
    except np.linalg.LinAlgError:
        # exactly singular s happens in degenerate (noise-free) runs where the
        # covariance has collapsed; the minimum-norm gain P H^T s^+ is the
        # correct limit there
        gain = np.linalg.lstsq(s, belief.cov[:p, :], rcond=None)[0].T
    if not np.all(np.isfinite(gain)):
        raise DegenerateCovarianceError("position innovation covariance is singular")
    innovation = d.position - d.mu_pos - belief.mean[:p]
    mean = belief.mean + gain @ innovation
    i_kh = np.eye(n)
    i_kh[:, :p] -= gain
    cov = _symmetrize(i_kh @ belief.cov @ i_kh.T + gain @ d.cov_pos @ gain.T)
    return GaussianBelief(mean, cov)


def pseudo_jacobian(state: np.ndarray, l_row: np.ndarray) -> np.ndarray:
    """Gradient of ``h(x) = l_row @ pos + pos @ vel`` at a state vector."""
    p = len(l_row)
    return np.concatenate([l_row + state[p:], state[:p]])


def quadratic_correction(cov: np.ndarray) -> tuple[float, float]:
    """Second-order terms of the pseudo-measurement function.

    For ``h`` containing the quadratic form ``pos @ vel`` and a Gaussian
    state with covariance ``P`` split into position/velocity blocks,
    ``E[h] - h(mean) = tr(P_pv)`` (returned doubled as ``delta2`` so the
    mean correction is ``delta2 / 2``) and the variance beyond the
    linearized ``H P H^T`` term is ``tr(P_pv P_pv) + tr(P_pp P_vv)``.
    Both identities are exact for quadratic ``h``.
    """
    p = cov.shape[0] // 2
    p_pv = cov[:p, p:]
    delta2 = 2.0 * float(np.trace(p_pv))
    a_k = float(np.trace(p_pv @ p_pv)) + float(np.trace(cov[:p, :p] @ cov[p:, p:]))
    return delta2, a_k


def ekf_update_pseudo(belief: GaussianBelief, d: DecorrelatedMeasurement) -> GaussianBelief:
    """Second-order extended update with the decorrelated pseudo-measurement.

    Linearizes about the position-updated estimate; the innovation subtracts
    the hypothesized bias and the second-order mean correction, and the gain
    denominator carries the quadratic variance inflation on top of the
    residual measurement variance.
    """
    x = belief.mean
    cov = belief.cov
    n = len(x)
    p = d.dim
    if n != 2 * p:
        raise ValueError("measurement dimension does not match the belief")
    h_row = pseudo_jacobian(x, d.l_row)
    delta2, a_k = quadratic_correction(cov)
    s = float(h_row @ cov @ h_row) + d.var_pseudo + a_k
    h_val = float(d.l_row @ x[:p]) + float(x[:p] @ x[p:])
    innovation = d.pseudo - d.mu_pseudo - h_val - 0.5 * delta2
    if s <= 0:
        # the true variance is nonnegative for PSD inputs, so s <= 0 is a
        # collapsed (deterministic) measurement: a no-op when the innovation
        # is consistent, a genuine degeneracy otherwise
        if abs(innovation) <= 1e-9 * max(abs(d.pseudo), abs(h_val), 1.0):
            return GaussianBelief(x.copy(), cov.copy())
        raise DegenerateCovarianceError("pseudo-measurement innovation variance is not positive")
    gain = cov @ h_row / s
    mean = x + gain * innovation
    i_kh = np.eye(n) - np.outer(gain, h_row)
    new_cov = _symmetrize(i_kh @ cov @ i_kh.T + (d.var_pseudo + a_k) * np.outer(gain, gain))
    return GaussianBelief(mean, new_cov)


def initialize_belief(
    z1: ConvertedMeasurement, z2: ConvertedMeasurement, t: float
) -> GaussianBelief:
    """Two-point differencing start from consecutive converted positions.

    Position comes from the second (bias-compensated) measurement, velocity
    from the difference quotient; the covariance follows from propagating the
    two independent position error covariances through the differencing map.
    """
    if t <= 0:
        raise ValueError("sampling interval must be positive")
    if z1.dim != z2.dim:
        raise ValueError("measurements must share dimensionality")
    p = z1.dim
    pos1 = z1.position - z1.mu[:p]
    pos2 = z2.position - z2.mu[:p]
    mean = np.concatenate([pos2, (pos2 - pos1) / t])
    r1 = z1.cov[:p, :p]
    r2 = z2.cov[:p, :p]
    cov = np.block([[r2, r2 / t], [r2 / t, (r1 + r2) / t**2]])
    return GaussianBelief(mean, _symmetrize(cov))


@dataclass(eq=False)
class FilterRun:
    """Per-step posterior beliefs plus any skipped (predict-only) steps."""

    beliefs: list[GaussianBelief] = field(default_factory=list)
    skipped_steps: list[int] = field(default_factory=list)


def run_filter(
    variant: FilterVariant,
    measurements: Iterable[SphericalMeasurement],
    noise: NoiseSpec,
    model: DynamicModel,
    init: GaussianBelief,
) -> FilterRun:
    """Run one pipeline over a measurement stream.

    Per scan: predict, convert with the variant's statistics, decorrelate,
    position update, pseudo update; the post-pseudo belief is emitted. A
    degenerate conversion (indefinite statistics or singular position block)
    skips that scan's updates and records the step; other failures propagate
    with the step index attached. Filters never receive maneuver inputs.
    """
    result = FilterRun()
    belief = init
    count = 0
    for m in measurements:
        count += 1
        belief = kf_predict(belief, model)
        try:
            d = decorrelate(convert(m, noise, variant.method))
        except DegenerateCovarianceError:
            result.skipped_steps.append(m.step)
            result.beliefs.append(belief)
            continue
        try:
            belief = kf_update_position(belief, d)
            belief = ekf_update_pseudo(belief, d)
        except (DegenerateCovarianceError, ValueError) as exc:
            raise type(exc)(f"step {m.step}: {exc}") from exc
        result.beliefs.append(belief)
    if count == 0:
        raise ValueError("run_filter needs at least one measurement")
    return result
