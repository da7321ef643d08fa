"""
Rested bandit environment: problem instances, noise models and pull-count indexed
loss streams.

Ground-truth queries (expected_loss, gap, mu_star, optimal_arm) live here for the
evaluator and the theory oracles. Policies only ever see a PullHandle.
"""
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from rested_bai.exceptions import BudgetExhaustedError, ConfigError

logger = logging.getLogger(__name__)

# Samples generated per refill of an arm's buffer. Part of the stream definition:
# changing it changes TruncGaussian sequences for a given seed.
SAMPLE_BLOCK = 1024


class NoiseModel(ABC):
    """Maps expected losses to random loss samples supported on [0, U+1]."""

    kind: str = ""

    @abstractmethod
    def sample(
        self, rng: np.random.Generator, means: np.ndarray, high: float
    ) -> np.ndarray:
        """
        Draw one sample per entry of means.

        Args:
            rng: Generator owning the arm's stream
            means: Expected losses, each in [0, high]
            high: Upper end of the support, U + 1

        Returns:
            np.ndarray: Samples with the same shape as means
        """

    def expected_sample_mean(self, mean: float, high: float) -> float:
        """Exact mean of a sample drawn with expected loss mean."""
        return mean

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NoiseModel) and self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.to_dict().items())))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


class Deterministic(NoiseModel):
    """Every sample equals its mean."""

    kind = "deterministic"

    def sample(
        self, rng: np.random.Generator, means: np.ndarray, high: float
    ) -> np.ndarray:
        return np.array(means, dtype=float)


class ScaledBernoulli(NoiseModel):
    """Sample is (U+1)·B with B ~ Bernoulli(mean / (U+1))."""

    kind = "scaled_bernoulli"

    def sample(
        self, rng: np.random.Generator, means: np.ndarray, high: float
    ) -> np.ndarray:
        hits = rng.random(np.shape(means)) < np.asarray(means) / high
        return high * hits.astype(float)


class TruncGaussian(NoiseModel):
    """Gaussian around the mean, rejection-resampled into [0, U+1]."""

    kind = "trunc_gaussian"

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def sample(
        self, rng: np.random.Generator, means: np.ndarray, high: float
    ) -> np.ndarray:
        means = np.asarray(means, dtype=float)
        draws = rng.normal(means, self.sigma)
        rejected = (draws < 0.0) | (draws > high)
        while rejected.any():
            draws[rejected] = rng.normal(means[rejected], self.sigma)
            rejected = (draws < 0.0) | (draws > high)
        return draws

    def expected_sample_mean(self, mean: float, high: float) -> float:
        """
        Mean of the truncated distribution, which differs from the requested mean
        near the ends of the support.
        """
        lower = (0.0 - mean) / self.sigma
        upper = (high - mean) / self.sigma
        return float(stats.truncnorm.mean(lower, upper, loc=mean, scale=self.sigma))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "sigma": self.sigma}


def noise_from_dict(data: Optional[Dict[str, Any]]) -> NoiseModel:
    """
    Build a noise model from its JSON form. A missing object means ScaledBernoulli.

    Raises:
        ValueError: If the kind is unknown or its parameters are invalid
    """
    if data is None:
        return ScaledBernoulli()
    kind = data.get("kind")
    if kind == Deterministic.kind:
        return Deterministic()
    if kind == ScaledBernoulli.kind:
        return ScaledBernoulli()
    if kind == TruncGaussian.kind:
        if "sigma" not in data:
            raise ValueError("trunc_gaussian noise requires 'sigma'")
        return TruncGaussian(float(data["sigma"]))
    raise ValueError(f"Unknown noise kind: {kind!r}")


@dataclass(frozen=True)
class ArmSpec:
    """Loss curve alpha / tau**rho + beta of one arm."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class BanditInstance:
    """
    Ground-truth rested bandit problem.

    Attributes:
        arms: Arm curves, in arm index order
        rho: Decay exponent, strictly inside (0, 1)
        horizon: Number of rounds T
        upper: Upper bound U on every alpha; losses live in [0, U+1]
        noise: Sample generator
    """

    arms: Tuple[ArmSpec, ...]
    rho: float
    horizon: int
    upper: float
    noise: NoiseModel = field(default_factory=ScaledBernoulli)

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        if len(self.arms) < 2:
            raise ValueError(f"An instance needs at least 2 arms, got {len(self.arms)}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie strictly inside (0, 1), got {self.rho}")
        if self.upper < 0:
            raise ValueError(f"U must be non-negative, got {self.upper}")
        if self.horizon < len(self.arms):
            raise ValueError(
                f"Horizon T={self.horizon} is smaller than "
                f"the number of arms {len(self.arms)}"
            )
        for index, arm in enumerate(self.arms):
            if not 0.0 <= arm.alpha <= self.upper:
                raise ValueError(
                    f"Arm {index}: alpha={arm.alpha} outside [0, U={self.upper}]"
                )
            if not 0.0 <= arm.beta <= 1.0:
                raise ValueError(f"Arm {index}: beta={arm.beta} outside [0, 1]")

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def loss_high(self) -> float:
        """Upper end U + 1 of the loss support."""
        return self.upper + 1.0

    def replace(self, **changes: Any) -> "BanditInstance":
        """Copy of this instance with some fields changed (validated again)."""
        values = {
            "arms": self.arms,
            "rho": self.rho,
            "horizon": self.horizon,
            "upper": self.upper,
            "noise": self.noise,
        }
        values.update(changes)
        return BanditInstance(**values)


def _check_arm(instance: BanditInstance, arm: int) -> ArmSpec:
    if not 0 <= arm < instance.num_arms:
        raise ValueError(f"Arm index {arm} out of range for K={instance.num_arms}")
    return instance.arms[arm]


def expected_loss(instance: BanditInstance, arm: int, tau: int) -> float:
    """
    Expected loss of an arm on its tau-th pull.

    Args:
        instance: Problem instance
        arm: Arm index (0-based)
        tau: Pull count, starting at 1

    Returns:
        float: alpha / tau**rho + beta

    Raises:
        ValueError: If the arm index is out of range or tau < 1
    """
    curve = _check_arm(instance, arm)
    if tau < 1:
        raise ValueError(f"Pull count must be at least 1, got {tau}")
    return curve.alpha / float(tau) ** instance.rho + curve.beta


def expected_losses(instance: BanditInstance, arm: int, taus: np.ndarray) -> np.ndarray:
    """Vectorized expected_loss over an array of pull counts."""
    curve = _check_arm(instance, arm)
    taus = np.asarray(taus, dtype=float)
    if taus.size and taus.min() < 1:
        raise ValueError("Pull counts must be at least 1")
    return curve.alpha / np.power(taus, instance.rho) + curve.beta


def optimal_arm(instance: BanditInstance) -> Tuple[int, float]:
    """
    Arm with the smallest expected loss after all T pulls.

    Returns:
        Tuple[int, float]: Index of i*_T (lowest index on ties) and its value
    """
    values = [
        expected_loss(instance, arm, instance.horizon)
        for arm in range(instance.num_arms)
    ]
    best = min(range(len(values)), key=lambda arm: (values[arm], arm))
    return best, values[best]


def gap(instance: BanditInstance, i: int, j: int, tau: int) -> float:
    """Delta_{i,j}(tau) = mu_i(tau) - mu_j(tau)."""
    return expected_loss(instance, i, tau) - expected_loss(instance, j, tau)


def mu_star(instance: BanditInstance, tau: int) -> float:
    """Smallest expected loss over all arms at pull count tau."""
    return min(expected_loss(instance, arm, tau) for arm in range(instance.num_arms))


def draw_at(
    instance: BanditInstance, arm: int, tau: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Draw size independent samples of an arm with its pull count frozen at tau.

    Only used by statistical checks of the noise models; a live environment always
    advances the pull count.
    """
    mean = expected_loss(instance, arm, tau)
    return instance.noise.sample(rng, np.full(size, mean), instance.loss_high)


def instance_to_dict(instance: BanditInstance) -> Dict[str, Any]:
    """JSON form of an instance; arm order is arm index order."""
    return {
        "rho": instance.rho,
        "T": instance.horizon,
        "U": instance.upper,
        "noise": instance.noise.to_dict(),
        "arms": [{"alpha": arm.alpha, "beta": arm.beta} for arm in instance.arms],
    }


def instance_from_dict(data: Dict[str, Any]) -> BanditInstance:
    """
    Build an instance from its JSON form.

    Raises:
        ConfigError: If a key is missing or a value violates an instance invariant
    """
    try:
        arms = [
            ArmSpec(float(arm["alpha"]), float(arm["beta"])) for arm in data["arms"]
        ]
        horizon = data["T"]
        # 1e5 is accepted, 1000.5 and true are not
        if isinstance(horizon, bool) or float(horizon) != int(horizon):
            raise ConfigError(f"Instance horizon T must be an integer, got {horizon!r}")
        return BanditInstance(
            arms=tuple(arms),
            rho=float(data["rho"]),
            horizon=int(horizon),
            upper=float(data["U"]),
            noise=noise_from_dict(data.get("noise")),
        )
    except KeyError as e:
        raise ConfigError(f"Instance is missing key {e}") from e
    except (TypeError, ValueError, OverflowError) as e:
        raise ConfigError(f"Invalid instance: {e}") from e


def load_instance(path: Union[str, Path]) -> BanditInstance:
    """
    Read an instance JSON file.

    Raises:
        ConfigError: If the file cannot be read or parsed
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        logger.error("Error reading instance file %s: %s", path, e)
        raise ConfigError(f"Cannot read instance file {path}: {e}") from e
    instance = instance_from_dict(data)
    logger.info("Loaded %d-arm instance from %s", instance.num_arms, path)
    return instance


def save_instance(instance: BanditInstance, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(instance_to_dict(instance), handle, indent=2)


class _ArmStream:
    """Loss samples of one arm in pull order, generated in fixed-size blocks."""

    def __init__(
        self, instance: BanditInstance, arm: int, seed_seq: np.random.SeedSequence
    ):
        self._instance = instance
        self._arm = arm
        self._rng = np.random.Generator(np.random.Philox(seed_seq))
        self._buffer = np.empty(0)
        self._position = 0
        self._next_tau = 1

    def _refill(self) -> None:
        taus = np.arange(self._next_tau, self._next_tau + SAMPLE_BLOCK, dtype=float)
        means = expected_losses(self._instance, self._arm, taus)
        self._buffer = self._instance.noise.sample(
            self._rng, means, self._instance.loss_high
        )
        self._position = 0
        self._next_tau += SAMPLE_BLOCK

    def take(self) -> float:
        if self._position == len(self._buffer):
            self._refill()
        value = float(self._buffer[self._position])
        self._position += 1
        return value

    def take_many(self, count: int) -> np.ndarray:
        chunks: List[np.ndarray] = []
        while count > 0:
            if self._position == len(self._buffer):
                self._refill()
            stop = min(len(self._buffer), self._position + count)
            chunks.append(self._buffer[self._position : stop])
            count -= stop - self._position
            self._position = stop
        return np.concatenate(chunks) if chunks else np.empty(0)


class RestedBanditEnv:
    """
    Live environment for one run: pull counts, the round counter and one
    independent sample stream per arm.

    Each arm's stream is keyed on (seed, arm) only, so two policies driven with the
    same seed see identical per-arm loss sequences however they interleave pulls.
    """

    def __init__(self, instance: BanditInstance, seed: int):
        """
        Initialize the environment.

        Args:
            instance: Problem instance
            seed: Non-negative run seed from which every arm stream is derived
        """
        self.instance = instance
        self.seed = int(seed)
        self._counts = [0] * instance.num_arms
        self._round = 0
        self._streams = [
            _ArmStream(
                instance, arm, np.random.SeedSequence(self.seed, spawn_key=(arm,))
            )
            for arm in range(instance.num_arms)
        ]

    @property
    def round(self) -> int:
        return self._round

    @property
    def pull_counts(self) -> Tuple[int, ...]:
        return tuple(self._counts)

    @property
    def rounds_left(self) -> int:
        return self.instance.horizon - self._round

    def pull(self, arm: int) -> float:
        """
        Pull an arm once.

        Args:
            arm: Arm index

        Returns:
            float: Loss sample with mean mu_arm(previous count + 1)

        Raises:
            BudgetExhaustedError: If all T rounds have been played
        """
        _check_arm(self.instance, arm)
        if self._round >= self.instance.horizon:
            raise BudgetExhaustedError(
                f"Horizon T={self.instance.horizon} exhausted; cannot pull arm {arm}"
            )
        self._counts[arm] += 1
        self._round += 1
        return self._streams[arm].take()

    def pull_repeat(self, arm: int, count: int) -> np.ndarray:
        """
        Pull the same arm count times in a row.

        Raises:
            BudgetExhaustedError: If fewer than count rounds remain
        """
        _check_arm(self.instance, arm)
        if count < 0:
            raise ValueError(f"count must be non-negative, got {count}")
        if count > self.rounds_left:
            raise BudgetExhaustedError(
                f"Requested {count} pulls but only {self.rounds_left} rounds remain"
            )
        self._counts[arm] += count
        self._round += count
        return self._streams[arm].take_many(count)

    def handle(self) -> "PullHandle":
        return PullHandle(self)


class PullHandle:
    """
    What a policy is allowed to know: the public problem parameters and the pull
    operations. The instance's arm curves stay hidden.
    """

    def __init__(self, env: RestedBanditEnv):
        self._env = env
        self.num_arms = env.instance.num_arms
        self.horizon = env.instance.horizon
        self.rho = env.instance.rho
        self.upper = env.instance.upper

    @property
    def round(self) -> int:
        return self._env.round

    @property
    def rounds_left(self) -> int:
        return self._env.rounds_left

    def pull(self, arm: int) -> float:
        return self._env.pull(arm)

    def pull_repeat(self, arm: int, count: int) -> np.ndarray:
        return self._env.pull_repeat(arm, count)


def make_instance(
    curves: Sequence[Tuple[float, float]],
    rho: float,
    horizon: int,
    upper: float,
    noise: Optional[NoiseModel] = None,
) -> BanditInstance:
    """Shorthand for building an instance from (alpha, beta) pairs."""
    return BanditInstance(
        arms=tuple(ArmSpec(float(a), float(b)) for a, b in curves),
        rho=rho,
        horizon=horizon,
        upper=upper,
        noise=noise if noise is not None else ScaledBernoulli(),
    )
