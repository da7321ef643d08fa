"""
Evaluation and experiment running: pseudo-regret, seeded Monte Carlo runs over
several policies, aggregation and parameter sweeps.
"""
import logging
import numbers
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from rested_bai.env import (
    ArmSpec,
    BanditInstance,
    RestedBanditEnv,
    expected_loss,
    optimal_arm,
)
from rested_bai.exceptions import ConfigError, EvaluationError
from rested_bai.policies import POLICIES, PolicyOptions, run_policy

logger = logging.getLogger(__name__)

REGRET_TOLERANCE = 1e-12
SWEEP_PARAMETERS = ("delta_gap", "T", "rho")


def _require_int(name: str, value: object) -> None:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")


def _require_real(name: str, value: object) -> None:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a number, got {value!r}")


class Scorable(Protocol):
    i_out: int
    tau_out: int


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to reproduce a Monte Carlo experiment.

    Attributes:
        instance: Ground-truth problem
        policies: Policy names, see policies.POLICIES
        num_runs: Independent runs per policy
        base_seed: Root of every run and arm seed
        delta: Confidence parameter handed to the policies, 1/T when None
        output_dir: Where result files go
        n_jobs: joblib parallelism (-1 for all cores)
        width_scale: Multiplier on cb_mu inside ETC and REST-SURE
        tight_constants: Use the tight Bernstein widths
        fixed_sweeps: Exploration length of the etc_fixed baseline
        regret_bound: Threshold for the fraction-exceeding statistic
    """

    instance: BanditInstance
    policies: Tuple[str, ...]
    num_runs: int
    base_seed: int = 0
    delta: Optional[float] = None
    output_dir: Path = Path("results")
    n_jobs: int = 1
    width_scale: float = 1.0
    tight_constants: bool = False
    fixed_sweeps: Optional[int] = None
    regret_bound: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        for name in ("num_runs", "base_seed", "n_jobs"):
            _require_int(name, getattr(self, name))
        for name in ("delta", "width_scale", "regret_bound"):
            if getattr(self, name) is not None:
                _require_real(name, getattr(self, name))
        if self.fixed_sweeps is not None:
            _require_int("fixed_sweeps", self.fixed_sweeps)
        if not isinstance(self.tight_constants, bool):
            raise ConfigError(
                f"tight_constants must be true or false, got {self.tight_constants!r}"
            )
        if self.num_runs < 1:
            raise ConfigError(f"num_runs must be at least 1, got {self.num_runs}")
        if not self.policies:
            raise ConfigError("At least one policy is required")
        unknown = [name for name in self.policies if name not in POLICIES]
        if unknown:
            raise ConfigError(
                f"Unknown policies {unknown}; expected names from {sorted(POLICIES)}"
            )
        if "etc_fixed" in self.policies and not self.fixed_sweeps:
            raise ConfigError("Policy 'etc_fixed' requires a positive fixed_sweeps")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError(
                f"base_seed must be a 64-bit unsigned integer, got {self.base_seed}"
            )
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.width_scale <= 0:
            raise ConfigError(f"width_scale must be positive, got {self.width_scale}")

    @property
    def resolved_delta(self) -> float:
        return self.delta if self.delta is not None else 1.0 / self.instance.horizon

    def policy_options(self) -> PolicyOptions:
        return PolicyOptions(
            width_scale=self.width_scale,
            tight_constants=self.tight_constants,
            fixed_sweeps=self.fixed_sweeps,
        )

    def replace(self, **changes: object) -> "ExperimentConfig":
        values = dict(self.__dict__)
        values.update(changes)
        return ExperimentConfig(**values)  # type: ignore[arg-type]


@dataclass(frozen=True)
class RunRecord:
    """One (run, policy) result; regret is recomputed from ground truth."""

    policy: str
    run_id: int
    seed: int
    i_out: int
    tau_out: int
    regret: float
    commit_round: Optional[int]
    commit_reason: Optional[str]


@dataclass(frozen=True)
class PolicyStats:
    """Summary of one policy's runs."""

    policy: str
    num_runs: int
    mean_regret: float
    std_regret: float
    q50: float
    q90: float
    q99: float
    frac_exceeding: Optional[float]
    mean_tau_out: float


@dataclass
class AggregateStats:
    """Per-policy summaries, in configuration order."""

    policies: Dict[str, PolicyStats] = field(default_factory=dict)
    bound: Optional[float] = None

    def rows(self) -> List[PolicyStats]:
        return list(self.policies.values())


@dataclass(frozen=True)
class SweepRow:
    """Summary of one policy at one grid value of a swept parameter."""

    param: str
    value: float
    stats: PolicyStats


def regret(instance: BanditInstance, outcome: Scorable) -> float:
    """
    Pseudo-regret mu_{i_out}(tau_out) - mu_{i*_T}(T).

    Raises:
        EvaluationError: If tau_out is not in [1, T] or the regret is negative
            beyond rounding
    """
    if not 1 <= outcome.tau_out <= instance.horizon:
        raise EvaluationError(
            f"tau_out={outcome.tau_out} outside [1, T={instance.horizon}] "
            f"for arm {outcome.i_out}"
        )
    _, best = optimal_arm(instance)
    value = expected_loss(instance, outcome.i_out, outcome.tau_out) - best
    if value < 0:
        # mu_i(tau_out) >= mu_i(T) >= mu*(T) for every tau_out <= T
        if value < -REGRET_TOLERANCE:
            raise EvaluationError(f"Negative regret {value} for arm {outcome.i_out}")
        return 0.0
    return value


@dataclass(frozen=True)
class _Profile:
    i_out: int
    tau_out: int


def permutation_regret_check(
    instance: BanditInstance, pulls_per_arm: Sequence[int], i_out: int
) -> float:
    """
    Regret computed from the unordered pull-count profile only. Any two
    trajectories with the same profile and output arm score the same.

    Raises:
        EvaluationError: If the profile uses more than T pulls
    """
    if sum(pulls_per_arm) > instance.horizon:
        raise EvaluationError(
            f"Profile uses {sum(pulls_per_arm)} pulls, more than T={instance.horizon}"
        )
    return regret(instance, _Profile(i_out=i_out, tau_out=int(pulls_per_arm[i_out])))


def pull_profile(trajectory: Iterable[int], num_arms: int) -> Tuple[int, ...]:
    """Pull count of every arm in a chronological sequence of arm choices."""
    counts = Counter(trajectory)
    return tuple(counts.get(arm, 0) for arm in range(num_arms))


def derive_run_seed(base_seed: int, run_id: int) -> int:
    """64-bit seed of one run; identical for every policy in the run."""
    state = np.random.SeedSequence(base_seed, spawn_key=(run_id,)).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def execute_run(config: ExperimentConfig, run_id: int) -> List[RunRecord]:
    """Run every configured policy on its own environment with the run's seed."""
    seed = derive_run_seed(config.base_seed, run_id)
    options = config.policy_options()
    records = []
    for name in config.policies:
        env = RestedBanditEnv(config.instance, seed)
        outcome = run_policy(name, env.handle(), config.resolved_delta, options)
        if sum(outcome.pulls) != config.instance.horizon:
            raise EvaluationError(
                f"Policy {name} used {sum(outcome.pulls)} pulls "
                f"instead of T={config.instance.horizon}"
            )
        reason = outcome.commit_reason
        records.append(
            RunRecord(
                policy=name,
                run_id=run_id,
                seed=seed,
                i_out=outcome.i_out,
                tau_out=outcome.tau_out,
                regret=regret(config.instance, outcome),
                commit_round=outcome.commit_round,
                commit_reason=reason.value if reason else None,
            )
        )
    return records


def aggregate(
    records: Sequence[RunRecord],
    policies: Optional[Sequence[str]] = None,
    bound: Optional[float] = None,
) -> AggregateStats:
    """
    Summarize records per policy.

    Args:
        records: Run records of any number of policies
        policies: Output order; order of first appearance when omitted
        bound: Regret threshold for frac_exceeding

    Returns:
        AggregateStats: One PolicyStats per policy that has records
    """
    grouped: Dict[str, List[RunRecord]] = {}
    for record in records:
        grouped.setdefault(record.policy, []).append(record)
    order = list(policies) if policies is not None else list(grouped)
    stats = AggregateStats(bound=bound)
    for name in order:
        group = grouped.get(name)
        if not group:
            continue
        regrets = np.array([record.regret for record in group])
        q50, q90, q99 = np.quantile(regrets, [0.5, 0.9, 0.99])
        stats.policies[name] = PolicyStats(
            policy=name,
            num_runs=len(group),
            mean_regret=float(regrets.mean()),
            std_regret=float(regrets.std()),
            q50=float(q50),
            q90=float(q90),
            q99=float(q99),
            frac_exceeding=(
                float(np.mean(regrets > bound)) if bound is not None else None
            ),
            mean_tau_out=float(np.mean([record.tau_out for record in group])),
        )
    return stats


def monte_carlo(
    config: ExperimentConfig, n_jobs: Optional[int] = None
) -> Tuple[AggregateStats, List[RunRecord]]:
    """
    Run config.num_runs paired runs of every policy.

    Runs may execute in parallel; records come back in run_id order (then policy
    order) whatever the scheduling, so output files are byte-identical across
    parallelism settings.

    Args:
        config: Experiment configuration
        n_jobs: Overrides config.n_jobs

    Returns:
        Tuple[AggregateStats, List[RunRecord]]: Summary and all records
    """
    jobs = config.n_jobs if n_jobs is None else n_jobs
    logger.info(
        "Running %d runs of %s on %d arms (T=%d, n_jobs=%d)",
        config.num_runs,
        ", ".join(config.policies),
        config.instance.num_arms,
        config.instance.horizon,
        jobs,
    )
    batches = Parallel(n_jobs=jobs)(
        delayed(execute_run)(config, run_id) for run_id in range(config.num_runs)
    )
    records = [record for batch in batches for record in batch]
    stats = aggregate(records, config.policies, config.regret_bound)
    logger.info("Finished %d records", len(records))
    return stats, records


def instance_for(instance: BanditInstance, param: str, value: float) -> BanditInstance:
    """
    Instance with one parameter changed.

    delta_gap applies to two-arm instances only: arm 2 copies arm 1's alpha and
    sits value above arm 1's beta.

    Raises:
        ConfigError: If the parameter is unknown or the change is invalid
    """
    try:
        if param == "T":
            return instance.replace(horizon=int(value))
        if param == "rho":
            return instance.replace(rho=float(value))
        if param == "delta_gap":
            if instance.num_arms != 2:
                raise ConfigError("delta_gap sweeps need a two-arm instance")
            first = instance.arms[0]
            second = ArmSpec(first.alpha, first.beta + float(value))
            return instance.replace(arms=(first, second))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid {param}={value}: {e}") from e
    raise ConfigError(
        f"Unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMETERS}"
    )


def sweep(
    config: ExperimentConfig,
    param: str,
    grid: Sequence[float],
    n_jobs: Optional[int] = None,
) -> List[SweepRow]:
    """Monte Carlo summary for every value of one instance parameter."""
    rows = []
    for value in grid:
        stats, _ = monte_carlo(
            config.replace(instance=instance_for(config.instance, param, value)), n_jobs
        )
        rows.extend(SweepRow(param, float(value), entry) for entry in stats.rows())
    return rows
