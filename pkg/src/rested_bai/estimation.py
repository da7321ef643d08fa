"""
Split-sample estimators of an arm's (alpha, beta), their Bernstein confidence
half-widths and the projected-loss predictor.

An arm pulled 2*tau times yields two independent half means: x_hat over pulls
1..tau and x_tilde over pulls tau+1..2*tau. Their difference isolates the decaying
part of the loss curve.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Sequence, Union

import numpy as np

from rested_bai.exceptions import InsufficientDataError

_MIN_TABLE = 1024


@lru_cache(maxsize=64)
def _harmonic_table(rho: float, size: int) -> np.ndarray:
    table = np.empty(size + 1)
    table[0] = 0.0
    np.cumsum(np.arange(1, size + 1, dtype=float) ** -rho, out=table[1:])
    table.setflags(write=False)
    return table


def _table_for(rho: float, tau: int) -> np.ndarray:
    size = _MIN_TABLE
    while size < tau:
        size *= 2
    return _harmonic_table(float(rho), size)


def harmonic_sum(tau: int, rho: float) -> float:
    """
    S(tau, rho) = sum_{s=1}^{tau} s**(-rho), read from a cached prefix table.

    Raises:
        ValueError: If tau < 1
    """
    if tau < 1:
        raise ValueError(f"tau must be at least 1, got {tau}")
    return float(_table_for(rho, tau)[tau])


def harmonic_sums(taus: np.ndarray, rho: float) -> np.ndarray:
    """Vectorized harmonic_sum for an array of positive integers."""
    taus = np.asarray(taus, dtype=np.int64)
    if taus.size == 0:
        return np.empty(0)
    if taus.min() < 1:
        raise ValueError("tau must be at least 1")
    return _table_for(rho, int(taus.max()))[taus]


def split_denominator(tau: int, rho: float) -> float:
    """S(tau) - (S(2 tau) - S(tau)): positive for every rho in (0, 1)."""
    return 2.0 * harmonic_sum(tau, rho) - harmonic_sum(2 * tau, rho)


class ArmSamples:
    """
    Losses observed on one arm, in pull order. Append-only; keeps running sums so
    that any prefix mean costs O(1).
    """

    def __init__(self, losses: Iterable[float] = ()):
        self._losses: List[float] = []
        self._prefix: List[float] = [0.0]
        self.extend(losses)

    def append(self, loss: float) -> None:
        self._losses.append(float(loss))
        self._prefix.append(self._prefix[-1] + float(loss))

    def extend(self, losses: Iterable[float]) -> None:
        for loss in losses:
            self.append(loss)

    def __len__(self) -> int:
        return len(self._losses)

    @property
    def losses(self) -> List[float]:
        return list(self._losses)

    def range_sum(self, start: int, stop: int) -> float:
        """Sum of losses with 0-based indices in [start, stop)."""
        return self._prefix[stop] - self._prefix[start]


@dataclass(frozen=True)
class SplitEstimate:
    """Half means of the first 2*tau samples of an arm."""

    tau: int
    x_hat: float
    x_tilde: float

    @property
    def dx(self) -> float:
        return self.x_hat - self.x_tilde


def split_means(
    samples: Union[ArmSamples, Sequence[float], np.ndarray]
) -> SplitEstimate:
    """
    Split the samples into two halves of size tau = n // 2. An odd newest sample is
    ignored.

    Raises:
        InsufficientDataError: If fewer than 2 samples are available
    """
    n = len(samples)
    if n < 2:
        raise InsufficientDataError(
            f"Need at least 2 samples for a split estimate, got {n}"
        )
    tau = n // 2
    if isinstance(samples, ArmSamples):
        first = samples.range_sum(0, tau)
        second = samples.range_sum(tau, 2 * tau)
        return SplitEstimate(tau=tau, x_hat=first / tau, x_tilde=second / tau)
    values = np.asarray(samples, dtype=float)
    return SplitEstimate(
        tau=tau,
        x_hat=float(values[:tau].mean()),
        x_tilde=float(values[tau : 2 * tau].mean()),
    )


def alpha_hat(split: SplitEstimate, rho: float) -> float:
    """tau * dx / (S(tau) - (S(2 tau) - S(tau))); unclipped, may be negative."""
    return split.tau * split.dx / split_denominator(split.tau, rho)


def beta_hat(split: SplitEstimate, alpha: float, rho: float) -> float:
    """x_hat - (alpha / tau) * S(tau)."""
    return split.x_hat - alpha / split.tau * harmonic_sum(split.tau, rho)


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _bracket(log_term: float, tau: int) -> float:
    ratio = log_term / tau
    return ratio + math.sqrt(ratio)


def alpha_cb(tau: int, rho: float, upper: float, delta: float) -> float:
    """Half-width of the alpha estimate after 2*tau pulls."""
    _check_delta(delta)
    prefactor = 5.0 * tau**rho * (math.sqrt(upper) + 1.0) ** 2 / rho
    return prefactor * _bracket(math.log(1.0 / delta), tau)


def beta_cb(tau: int, rho: float, upper: float, delta: float) -> float:
    """Half-width of the beta estimate after 2*tau pulls."""
    _check_delta(delta)
    prefactor = 5.0 * (math.sqrt(upper) + 1.0) ** 2 / ((1.0 - rho) * rho)
    return prefactor * _bracket(math.log(1.0 / delta), tau)


def cb_mu(
    tau: int, rho: float, upper: float, delta: float, num_arms: int, horizon: int
) -> float:
    """
    Width of the projected-loss confidence band, union-bounded jointly over arms,
    split sizes and target pull counts.
    """
    _check_delta(delta)
    prefactor = 10.0 * (math.sqrt(upper) + 1.0) ** 2 / ((1.0 - rho) * rho)
    return prefactor * _bracket(math.log(tau * num_arms * horizon / delta), tau)


def raw_mean_cb(tau: int, upper: float, delta: float) -> float:
    """Half-width for either half mean x_hat or x_tilde."""
    _check_delta(delta)
    log_term = math.log(1.0 / delta)
    return (math.sqrt(upper) + 1.0) ** 2 * math.sqrt(2.0 * log_term / tau) + (
        upper + 1.0
    ) * log_term / tau


def raw_mean_cb_tight(tau: int, rho: float, upper: float, delta: float) -> float:
    """
    Bernstein half-width for x_hat using the variance proxy (U+1)*mu summed over
    the first tau pulls.
    """
    _check_delta(delta)
    log_term = math.log(1.0 / delta)
    spread = math.sqrt(upper * harmonic_sum(tau, rho)) / tau + math.sqrt(1.0 / tau)
    return spread * math.sqrt(2.0 * (upper + 1.0) * log_term) + 2.0 * (
        upper + 1.0
    ) * log_term / (3.0 * tau)


def alpha_cb_tight(tau: int, rho: float, upper: float, delta: float) -> float:
    scale = tau / split_denominator(tau, rho)
    return scale * 2.0 * raw_mean_cb_tight(tau, rho, upper, delta)


def beta_cb_tight(tau: int, rho: float, upper: float, delta: float) -> float:
    return harmonic_sum(tau, rho) / tau * alpha_cb_tight(
        tau, rho, upper, delta
    ) + raw_mean_cb_tight(tau, rho, upper, delta)


def cb_mu_tight(
    tau: int, rho: float, upper: float, delta: float, num_arms: int, horizon: int
) -> float:
    """Tight-constant counterpart of cb_mu, valid for target pull counts >= tau."""
    _check_delta(delta)
    joint = delta / (tau * num_arms * horizon)
    return alpha_cb_tight(tau, rho, upper, joint) / tau**rho + beta_cb_tight(
        tau, rho, upper, joint
    )


def confidence_width(
    tau: int,
    rho: float,
    upper: float,
    delta: float,
    num_arms: int,
    horizon: int,
    tight: bool = False,
) -> float:
    """cb_mu or cb_mu_tight depending on the constants switch."""
    if tight:
        return cb_mu_tight(tau, rho, upper, delta, num_arms, horizon)
    return cb_mu(tau, rho, upper, delta, num_arms, horizon)


@dataclass(frozen=True)
class ParamEstimate:
    """
    Estimated curve of one arm.

    alpha_hat is kept unclipped; predictions clip it into [0, upper] because alpha
    is known to lie there.
    """

    alpha_hat: float
    beta_hat: float
    cb_alpha: float
    cb_beta: float
    tau: int
    delta: float
    upper: float

    @property
    def alpha_clipped(self) -> float:
        return min(max(self.alpha_hat, 0.0), self.upper)


def estimate_params(
    samples: Union[ArmSamples, Sequence[float], np.ndarray, SplitEstimate],
    rho: float,
    upper: float,
    delta: float,
    tight: bool = False,
) -> ParamEstimate:
    """
    Estimate (alpha, beta) of an arm together with their half-widths.

    Args:
        samples: Observed losses in pull order, or a ready split
        rho: Decay exponent
        upper: Bound U on alpha
        delta: Confidence parameter in (0, 1)
        tight: Use the tight Bernstein constants for the half-widths

    Returns:
        ParamEstimate: Estimates and widths at split size tau = n // 2
    """
    split = samples if isinstance(samples, SplitEstimate) else split_means(samples)
    alpha = alpha_hat(split, rho)
    if tight:
        widths = (
            alpha_cb_tight(split.tau, rho, upper, delta),
            beta_cb_tight(split.tau, rho, upper, delta),
        )
    else:
        widths = (
            alpha_cb(split.tau, rho, upper, delta),
            beta_cb(split.tau, rho, upper, delta),
        )
    return ParamEstimate(
        alpha_hat=alpha,
        beta_hat=beta_hat(split, alpha, rho),
        cb_alpha=widths[0],
        cb_beta=widths[1],
        tau=split.tau,
        delta=delta,
        upper=upper,
    )


def predict_loss(estimate: ParamEstimate, tau_out: int, rho: float) -> float:
    """
    Projected expected loss of the arm at pull count tau_out.

    Raises:
        ValueError: If tau_out < 1
    """
    if tau_out < 1:
        raise ValueError(f"tau_out must be at least 1, got {tau_out}")
    return estimate.alpha_clipped / float(tau_out) ** rho + estimate.beta_hat
