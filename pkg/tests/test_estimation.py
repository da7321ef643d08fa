"""
Unit tests for the split-sample estimators and their confidence widths.
"""
import sys
import os

# Add the src directory to the path so we can import the rested_bai package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../src')))

import math

import numpy as np
import pytest

from rested_bai.estimation import (
    ArmSamples,
    ParamEstimate,
    SplitEstimate,
    alpha_cb,
    alpha_hat,
    beta_cb,
    beta_hat,
    cb_mu,
    cb_mu_tight,
    confidence_width,
    estimate_params,
    harmonic_sum,
    harmonic_sums,
    predict_loss,
    raw_mean_cb,
    split_denominator,
    split_means,
)
from rested_bai.env import ScaledBernoulli
from rested_bai.exceptions import InsufficientDataError


def noiseless_losses(alpha, beta, rho, count):
    """Expected losses of pulls 1..count."""
    return alpha * np.arange(1, count + 1, dtype=float) ** -rho + beta


@pytest.fixture
def estimate():
    """A hand-built estimate with alpha inside [0, U]."""
    return ParamEstimate(
        alpha_hat=0.8,
        beta_hat=0.2,
        cb_alpha=0.1,
        cb_beta=0.1,
        tau=10,
        delta=0.1,
        upper=1.0,
    )


class TestHarmonicSums:
    """Test cases for the cached harmonic sums."""

    def test_small_values(self):
        """Test S(tau, rho) against direct sums."""
        assert harmonic_sum(1, 0.5) == 1.0
        assert harmonic_sum(4, 0.5) == pytest.approx(1 + 2 ** -0.5 + 3 ** -0.5 + 0.5)

    def test_large_tau_grows_table(self):
        """Test a tau beyond the initial table size."""
        expected = float(np.sum(np.arange(1, 5001, dtype=float) ** -0.3))
        assert harmonic_sum(5000, 0.3) == pytest.approx(expected, rel=1e-12)

    def test_vectorized(self):
        """Test that harmonic_sums agrees with harmonic_sum."""
        taus = np.array([1, 5, 17, 2000])
        values = harmonic_sums(taus, 0.7)
        assert list(values) == [harmonic_sum(int(t), 0.7) for t in taus]

    def test_tau_zero_rejected(self):
        """Test that tau < 1 raises ValueError."""
        with pytest.raises(ValueError, match="at least 1"):
            harmonic_sum(0, 0.5)

    @pytest.mark.parametrize("rho", [0.05, 0.5, 0.95])
    def test_split_denominator_lower_bound(self, rho):
        """Test 2S(tau) - S(2 tau) >= tau (2**rho - 1) / (2 tau)**rho up to 10**5."""
        taus = np.arange(1, 10**5 + 1)
        denominators = 2.0 * harmonic_sums(taus, rho) - harmonic_sums(2 * taus, rho)
        floor = taus * (2.0**rho - 1.0) / (2.0 * taus) ** rho
        # equality at tau = 1
        assert np.all(denominators >= floor * (1.0 - 1e-12))
        assert split_denominator(1, rho) == pytest.approx(1.0 - 2.0**-rho, rel=1e-12)

    @pytest.mark.parametrize("rho", [0.05, 0.2, 0.5, 0.8, 0.95])
    def test_split_denominator_positive(self, rho):
        """Test that the alpha estimator's denominator never vanishes."""
        for tau in (1, 2, 10, 100, 5000):
            assert split_denominator(tau, rho) > 0


class TestSplitMeans:
    """Test cases for the half-sample means."""

    def test_halves(self):
        """Test the two half means of an even-length sequence."""
        split = split_means([1.0, 3.0, 0.0, 2.0])
        assert split == SplitEstimate(tau=2, x_hat=2.0, x_tilde=1.0)
        assert split.dx == 1.0

    def test_odd_newest_sample_ignored(self):
        """Test that the last sample of an odd sequence is dropped."""
        even = [1.0, 3.0, 0.0, 2.0]
        assert split_means(even + [100.0]) == split_means(even)

    def test_arm_samples_and_array_agree(self):
        """Test that prefix-sum and array paths give the same split."""
        losses = list(np.random.default_rng(0).random(31))
        from_samples = split_means(ArmSamples(losses))
        from_array = split_means(np.array(losses))
        assert from_samples.tau == from_array.tau == 15
        assert from_samples.x_hat == pytest.approx(from_array.x_hat, rel=1e-12)
        assert from_samples.x_tilde == pytest.approx(from_array.x_tilde, rel=1e-12)

    def test_needs_two_samples(self):
        """Test that fewer than two samples raise InsufficientDataError."""
        with pytest.raises(InsufficientDataError):
            split_means([0.5])
        with pytest.raises(InsufficientDataError):
            split_means(ArmSamples())

    def test_halves_are_disjoint(self):
        """Test that each sample feeds exactly one half, except an odd last one."""
        tau = 6
        for position in range(2 * tau + 1):
            indicator = np.zeros(2 * tau + 1)
            indicator[position] = 1.0
            split = split_means(ArmSamples(indicator))
            first, second = split.x_hat * tau, split.x_tilde * tau
            if position < tau:
                assert (first, second) == (1.0, 0.0)
            elif position < 2 * tau:
                assert (first, second) == (0.0, 1.0)
            else:
                assert (first, second) == (0.0, 0.0)

    @pytest.mark.parametrize("rho", [0.2, 0.5, 0.8])
    def test_first_half_expected_higher(self, rho):
        """Test E[x_hat] > E[x_tilde] when alpha > 0 and equality when alpha = 0."""
        for tau in (1, 10, 1000):
            decaying = split_means(noiseless_losses(0.3, 0.2, rho, 2 * tau))
            flat = split_means(noiseless_losses(0.0, 0.2, rho, 2 * tau))
            assert decaying.x_hat > decaying.x_tilde
            assert flat.x_hat == flat.x_tilde

    def test_arm_samples_range_sum(self):
        """Test prefix-sum range queries."""
        samples = ArmSamples([1.0, 2.0, 3.0])
        samples.append(4.0)
        assert len(samples) == 4
        assert samples.range_sum(1, 3) == 5.0
        assert samples.losses == [1.0, 2.0, 3.0, 4.0]


class TestEstimators:
    """Test cases for alpha_hat, beta_hat and predict_loss."""

    def test_noiseless_identifiability(self):
        """Test exact recovery of (alpha, beta) from noiseless losses."""
        rng = np.random.default_rng(2024)
        for rho in (0.2, 0.5, 0.8):
            for tau in (10, 100, 1000):
                for _ in range(20):
                    alpha, beta = rng.uniform(0.1, 2.0), rng.uniform(0.05, 1.0)
                    losses = noiseless_losses(alpha, beta, rho, 2 * tau)
                    result = estimate_params(losses, rho, upper=2.0, delta=0.1)
                    assert result.tau == tau
                    assert abs(result.alpha_hat - alpha) <= 1e-9 * alpha
                    assert abs(result.beta_hat - beta) <= 1e-9 * beta

    def test_beta_hat_given_alpha(self):
        """Test beta_hat subtracts the decaying part of the first half mean."""
        split = split_means(noiseless_losses(1.0, 0.25, 0.5, 20))
        assert beta_hat(split, 1.0, 0.5) == pytest.approx(0.25, rel=1e-12)
        assert alpha_hat(split, 0.5) == pytest.approx(1.0, rel=1e-12)

    def test_estimate_from_split(self):
        """Test that a ready split gives the same estimate as its samples."""
        losses = noiseless_losses(0.7, 0.1, 0.5, 40)
        from_losses = estimate_params(losses, 0.5, 1.0, 0.05)
        from_split = estimate_params(split_means(losses), 0.5, 1.0, 0.05)
        assert from_losses == from_split

    def test_predict_loss(self, estimate):
        """Test the projection alpha / tau**rho + beta."""
        assert predict_loss(estimate, 4, 0.5) == pytest.approx(0.8 / 2 + 0.2)

    def test_predict_loss_clips_alpha(self, estimate):
        """Test that negative or oversized alpha_hat is clipped into [0, U]."""
        negative = ParamEstimate(-0.5, 0.3, 0.1, 0.1, 10, 0.1, 1.0)
        large = ParamEstimate(3.0, 0.3, 0.1, 0.1, 10, 0.1, 1.0)
        assert predict_loss(negative, 100, 0.5) == 0.3
        assert predict_loss(large, 100, 0.5) == pytest.approx(1.0 / 10 + 0.3)

    def test_predict_loss_needs_positive_tau(self, estimate):
        """Test that tau_out < 1 raises ValueError."""
        with pytest.raises(ValueError, match="at least 1"):
            predict_loss(estimate, 0, 0.5)


class TestConfidenceWidths:
    """Test cases for the Bernstein half-widths."""

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
    def test_delta_outside_unit_interval(self, delta):
        """Test that delta outside (0, 1) raises ValueError."""
        with pytest.raises(ValueError, match="delta"):
            cb_mu(10, 0.5, 1.0, delta, 2, 100)
        with pytest.raises(ValueError, match="delta"):
            alpha_cb(10, 0.5, 1.0, delta)

    def test_cb_mu_shrinks(self):
        """Test cb_mu(4 tau) < cb_mu(tau) for tau >= 8 over a grid."""
        for rho in (0.2, 0.5, 0.8):
            for upper in (0.0, 1.0, 4.0):
                for tau in (8, 9, 50, 333, 10**4):
                    assert cb_mu(4 * tau, rho, upper, 0.01, 3, 10**5) < cb_mu(
                        tau, rho, upper, 0.01, 3, 10**5
                    )

    def test_known_value(self):
        """Test cb_mu against its closed form."""
        log_term = math.log(100 * 2 * 1000 / 0.01)
        expected = 10 * 4 / 0.25 * (log_term / 100 + math.sqrt(log_term / 100))
        assert cb_mu(100, 0.5, 1.0, 0.01, 2, 1000) == pytest.approx(expected)

    def test_closed_form_values(self):
        """Test the simplified widths at hand-computed points."""
        assert alpha_cb(100, 0.5, 1.0, 0.01) == pytest.approx(104.26, abs=5e-3)
        assert beta_cb(100, 0.5, 1.0, 0.01) == pytest.approx(20.85, abs=5e-3)
        assert raw_mean_cb(8, 0.0, math.exp(-1.0)) == pytest.approx(0.625, rel=1e-12)

    def test_width_scales_with_support(self):
        """Test that doubling (sqrt(U) + 1)**2 doubles cb_mu and the other widths."""
        doubled = (math.sqrt(2.0) - 1.0) ** 2
        for tau in (8, 100, 5000):
            assert cb_mu(tau, 0.5, doubled, 0.01, 3, 10**4) == pytest.approx(
                2.0 * cb_mu(tau, 0.5, 0.0, 0.01, 3, 10**4), rel=1e-9
            )
            assert alpha_cb(tau, 0.3, doubled, 0.01) == pytest.approx(
                2.0 * alpha_cb(tau, 0.3, 0.0, 0.01), rel=1e-9
            )
            assert beta_cb(tau, 0.3, doubled, 0.01) == pytest.approx(
                2.0 * beta_cb(tau, 0.3, 0.0, 0.01), rel=1e-9
            )

    def test_parameter_widths_positive(self):
        """Test that every width is positive and beta's does not grow with tau."""
        assert alpha_cb(10, 0.5, 1.0, 0.1) > 0
        assert beta_cb(100, 0.5, 1.0, 0.1) < beta_cb(10, 0.5, 1.0, 0.1)
        assert raw_mean_cb(100, 1.0, 0.1) < raw_mean_cb(10, 1.0, 0.1)

    def test_tight_constants_are_smaller(self):
        """Test that the tight width is far below the simplified one at moderate tau."""
        loose = cb_mu(1000, 0.5, 1.0, 0.01, 2, 10**5)
        tight = cb_mu_tight(1000, 0.5, 1.0, 0.01, 2, 10**5)
        assert 0 < tight < loose / 5

    def test_confidence_width_dispatch(self):
        """Test that the constants switch selects the right width."""
        args = (200, 0.4, 1.0, 0.01, 3, 5000)
        assert confidence_width(*args) == cb_mu(*args)
        assert confidence_width(*args, tight=True) == cb_mu_tight(*args)

    def test_estimate_carries_widths(self):
        """Test that estimate_params reports the widths for its split size."""
        losses = noiseless_losses(0.5, 0.3, 0.5, 60)
        loose = estimate_params(losses, 0.5, 1.0, 0.05)
        tight = estimate_params(losses, 0.5, 1.0, 0.05, tight=True)
        assert loose.cb_alpha == alpha_cb(30, 0.5, 1.0, 0.05)
        assert loose.cb_beta == beta_cb(30, 0.5, 1.0, 0.05)
        assert tight.cb_alpha < loose.cb_alpha

    def test_projection_coverage(self):
        """Test that |predict_loss - mu(tau_out)| <= cb_mu in at least 95% of runs."""
        rng = np.random.default_rng(12345)
        alpha, beta, rho, upper, delta = 0.5, 0.3, 0.5, 1.0, 0.05
        num_runs, num_arms, horizon = 1000, 2, 10**4
        covered = total = 0
        for tau in (250, 500):
            means = noiseless_losses(alpha, beta, rho, 2 * tau)
            hits = rng.random((num_runs, 2 * tau)) < means / (upper + 1.0)
            draws = (upper + 1.0) * hits
            width = cb_mu(tau, rho, upper, delta, num_arms, horizon)
            for row in draws:
                result = estimate_params(row, rho, upper, delta)
                for tau_out in (10**3, 10**4):
                    truth = alpha / tau_out**rho + beta
                    covered += abs(predict_loss(result, tau_out, rho) - truth) <= width
                    total += 1
        assert covered / total >= 0.95


@pytest.mark.slow
class TestCoverage:
    """Coverage of the half means and parameter estimates under Bernoulli noise."""

    @staticmethod
    def draw(rng, alpha, beta, rho, upper, count, num_runs):
        """num_runs independent ScaledBernoulli loss sequences of length count."""
        means = np.tile(noiseless_losses(alpha, beta, rho, count), (num_runs, 1))
        return ScaledBernoulli().sample(rng, means, upper + 1.0)

    def test_half_mean_coverage(self):
        """Test that one raw_mean_cb width covers x_hat and x_tilde alike."""
        rng = np.random.default_rng(7)
        alpha, beta, rho, upper, delta, tau = 0.8, 0.3, 0.5, 1.0, 0.05, 1000
        truth = split_means(noiseless_losses(alpha, beta, rho, 2 * tau))
        width = raw_mean_cb(tau, upper, delta)
        draws = self.draw(rng, alpha, beta, rho, upper, 2 * tau, 1000)
        first = np.abs(draws[:, :tau].mean(axis=1) - truth.x_hat) <= width
        second = np.abs(draws[:, tau:].mean(axis=1) - truth.x_tilde) <= width
        assert first.mean() >= 1.0 - delta
        assert second.mean() >= 1.0 - delta

    def test_parameter_coverage(self):
        """Test that cb_alpha and cb_beta cover alpha and beta in 1 - delta of runs."""
        rng = np.random.default_rng(11)
        alpha, beta, rho, upper, delta, tau = 0.6, 0.2, 0.5, 1.0, 0.05, 10**4
        draws = self.draw(rng, alpha, beta, rho, upper, 2 * tau, 200)
        alpha_covered = beta_covered = 0
        for row in draws:
            result = estimate_params(row, rho, upper, delta)
            alpha_covered += abs(result.alpha_hat - alpha) <= result.cb_alpha
            beta_covered += abs(result.beta_hat - beta) <= result.cb_beta
        assert alpha_covered / len(draws) >= 1.0 - delta
        assert beta_covered / len(draws) >= 1.0 - delta
