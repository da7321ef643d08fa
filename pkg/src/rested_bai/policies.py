"""
Learning policies for rested best-arm identification.

Policies talk to the environment only through a PullHandle. Each one returns a
PolicyOutcome naming the arm it committed to and how many times that arm was
pulled by the horizon.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from rested_bai.env import PullHandle
from rested_bai.estimation import (
    ArmSamples,
    ParamEstimate,
    confidence_width,
    estimate_params,
    predict_loss,
)

logger = logging.getLogger(__name__)


class CommitReason(str, Enum):
    GAP_IDENTIFIED = "gap_identified"
    EXPLORATION_UNPROFITABLE = "exploration_unprofitable"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class PolicyOutcome:
    """
    Result of one policy run.

    Attributes:
        i_out: Arm committed to
        tau_out: Pulls of i_out at the horizon
        pulls: Final pull count of every arm
        commit_round: Rounds played when the commitment was made, None for policies
            that never commit
        commit_reason: Which rule produced i_out
        sweeps: Round-robin exploration sweeps performed
        eliminations: (arm, sweep) for every arm removed from the active set
    """

    i_out: int
    tau_out: int
    pulls: Tuple[int, ...]
    commit_round: Optional[int]
    commit_reason: Optional[CommitReason]
    sweeps: int = 0
    eliminations: Tuple[Tuple[int, int], ...] = ()


@dataclass
class ActiveSet:
    """Arms still explored by REST-SURE, with their latest estimates."""

    arms: List[int]
    estimates: Dict[int, ParamEstimate] = field(default_factory=dict)
    sweep: int = 0


@dataclass(frozen=True)
class PolicyOptions:
    """
    Knobs shared by the confidence-based policies.

    Attributes:
        width_scale: Multiplier on cb_mu in every comparison; 1.0 is the stated rule
        tight_constants: Use the tight Bernstein widths instead of the simplified ones
        fixed_sweeps: Exploration length of the fixed-sweep ETC baseline
    """

    width_scale: float = 1.0
    tight_constants: bool = False
    fixed_sweeps: Optional[int] = None


def _argmin(values: Dict[int, float]) -> int:
    return min(values, key=lambda arm: (values[arm], arm))


def _clear_winner(predictions: Dict[int, float], cb: float) -> Optional[int]:
    """Arm whose prediction beats every other one by more than 2*cb, if any."""
    best = _argmin(predictions)
    others = [value for arm, value in predictions.items() if arm != best]
    if not others:
        return best
    if predictions[best] < min(others) - 2.0 * cb:
        return best
    return None


class _Explorer:
    """Sample bookkeeping and the commit phase shared by all policies."""

    def __init__(
        self,
        handle: PullHandle,
        delta: Optional[float],
        options: Optional[PolicyOptions],
        name: str,
    ):
        self.handle = handle
        self.name = name
        self.delta = delta if delta is not None else 1.0 / handle.horizon
        self.options = options or PolicyOptions()
        self.samples = [ArmSamples() for _ in range(handle.num_arms)]
        self.pulls = [0] * handle.num_arms

    def pull(self, arm: int) -> None:
        self.samples[arm].append(self.handle.pull(arm))
        self.pulls[arm] += 1

    def sweep(self, arms: Sequence[int]) -> None:
        for arm in arms:
            self.pull(arm)

    def estimate(self, arm: int) -> ParamEstimate:
        return estimate_params(
            self.samples[arm],
            self.handle.rho,
            self.handle.upper,
            self.delta,
            tight=self.options.tight_constants,
        )

    def estimates(self, arms: Sequence[int]) -> Dict[int, ParamEstimate]:
        return {arm: self.estimate(arm) for arm in arms}

    def width(self, sweeps: int) -> float:
        """Scaled cb_mu for estimates built from `sweeps` pulls per arm."""
        return self.options.width_scale * confidence_width(
            sweeps // 2,
            self.handle.rho,
            self.handle.upper,
            self.delta,
            self.handle.num_arms,
            self.handle.horizon,
            tight=self.options.tight_constants,
        )

    def best_projection(self, arms: Sequence[int], tau_out: int) -> int:
        """
        Arm with the lowest projected loss at tau_out. Arms with a single sample
        cannot be projected, so the raw sample means decide in that case.
        """
        if all(len(self.samples[arm]) >= 2 for arm in arms):
            rho = self.handle.rho
            return _argmin(
                {arm: predict_loss(self.estimate(arm), tau_out, rho) for arm in arms}
            )
        means = {
            arm: self.samples[arm].range_sum(0, len(self.samples[arm]))
            / max(len(self.samples[arm]), 1)
            for arm in arms
        }
        return _argmin(means)

    def commit(
        self,
        arm: int,
        reason: CommitReason,
        sweeps: int,
        eliminations: Tuple[Tuple[int, int], ...] = (),
    ) -> PolicyOutcome:
        commit_round = self.handle.round
        remaining = self.handle.rounds_left
        self.handle.pull_repeat(arm, remaining)
        self.pulls[arm] += remaining
        logger.debug(
            "%s committed to arm %d at round %d (%s)",
            self.name,
            arm,
            commit_round,
            reason.value,
        )
        return PolicyOutcome(
            i_out=arm,
            tau_out=self.pulls[arm],
            pulls=tuple(self.pulls),
            commit_round=commit_round,
            commit_reason=reason,
            sweeps=sweeps,
            eliminations=eliminations,
        )


def run_etc(
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """
    Adaptive explore-then-commit.

    Sweeps over all arms until one arm's projected loss at the reachable pull count
    T - n(K-1) beats every other arm's by more than 2*cb_mu, then plays that arm to
    the horizon.

    Args:
        handle: Pull handle of a fresh environment
        delta: Confidence parameter, 1/T when omitted
        options: Width scale and constants switch

    Returns:
        PolicyOutcome: The committed arm and final pull counts
    """
    explorer = _Explorer(handle, delta, options, "etc")
    num_arms, horizon, rho = handle.num_arms, handle.horizon, handle.rho
    arms = list(range(num_arms))
    max_sweeps = horizon // num_arms
    tau_out = horizon - max_sweeps * (num_arms - 1)
    for n in range(1, max_sweeps + 1):
        explorer.sweep(arms)
        if n < 2:
            continue
        tau_out = horizon - n * (num_arms - 1)
        estimates = explorer.estimates(arms)
        cb = explorer.width(n)
        predictions = {arm: predict_loss(estimates[arm], tau_out, rho) for arm in arms}
        winner = _clear_winner(predictions, cb)
        if winner is not None:
            return explorer.commit(winner, CommitReason.GAP_IDENTIFIED, sweeps=n)
    final = explorer.best_projection(arms, tau_out)
    return explorer.commit(final, CommitReason.BUDGET_EXHAUSTED, sweeps=max_sweeps)


def run_etc_fixed(
    handle: PullHandle,
    sweeps: int,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """Explore a fixed number of sweeps, then commit to the best projection."""
    if sweeps < 1:
        raise ValueError(f"sweeps must be at least 1, got {sweeps}")
    explorer = _Explorer(handle, delta, options, "etc_fixed")
    arms = list(range(handle.num_arms))
    sweeps = min(sweeps, handle.horizon // handle.num_arms)
    for _ in range(sweeps):
        explorer.sweep(arms)
    tau_out = handle.horizon - sweeps * (handle.num_arms - 1)
    final = explorer.best_projection(arms, tau_out)
    return explorer.commit(final, CommitReason.BUDGET_EXHAUSTED, sweeps=sweeps)


def dominance_interval(
    i: int,
    j: int,
    estimates: Dict[int, ParamEstimate],
    cb: float,
    m_lo: int,
    m_hi: int,
    rho: float,
) -> Optional[Tuple[int, int]]:
    """
    Pull counts m in [m_lo, m_hi] at which arm i is predicted worse than arm j by
    more than 2*cb.

    The predicted difference is monotone in m, so the set is one contiguous run of
    integers; its end is located by bisection.

    Returns:
        Optional[Tuple[int, int]]: Inclusive (first, last) or None if empty
    """
    if m_lo > m_hi:
        raise ValueError(f"Empty range [{m_lo}, {m_hi}]")
    first, second = estimates[i], estimates[j]

    def dominated(m: int) -> bool:
        return predict_loss(first, m, rho) - predict_loss(second, m, rho) > 2.0 * cb

    slope = first.alpha_clipped - second.alpha_clipped
    if slope == 0:
        return (m_lo, m_hi) if dominated(m_lo) else None
    if slope > 0:
        # difference shrinks with m: a prefix of the range
        if not dominated(m_lo):
            return None
        lo, hi = m_lo, m_hi
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if dominated(mid):
                lo = mid
            else:
                hi = mid - 1
        return m_lo, lo
    if not dominated(m_hi):
        return None
    lo, hi = m_lo, m_hi
    while lo < hi:
        mid = (lo + hi) // 2
        if dominated(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo, m_hi


def _covers(intervals: List[Tuple[int, int]], lo: int, hi: int) -> bool:
    reach = lo - 1
    for start, stop in sorted(intervals):
        if start > reach + 1:
            break
        reach = max(reach, stop)
        if reach >= hi:
            return True
    return reach >= hi


def eliminate(
    active_set: ActiveSet,
    estimates: Dict[int, ParamEstimate],
    cb: float,
    n: int,
    tau_out: int,
    rho: float,
) -> ActiveSet:
    """
    Drop every active arm that is dominated by some other active arm at each
    reachable pull count in [n, tau_out]. All arms are judged against the same
    snapshot.

    Returns:
        ActiveSet: Survivors in their original order, same sweep counter
    """
    arms = active_set.arms
    at_start = {arm: predict_loss(estimates[arm], n, rho) for arm in arms}
    at_end = {arm: predict_loss(estimates[arm], tau_out, rho) for arm in arms}
    survivors: List[int] = []
    for i in arms:
        others = [j for j in arms if j != i]
        # coverage needs both end points dominated
        if not any(at_start[i] - at_start[j] > 2.0 * cb for j in others) or not any(
            at_end[i] - at_end[j] > 2.0 * cb for j in others
        ):
            survivors.append(i)
            continue
        intervals = []
        for j in others:
            interval = dominance_interval(i, j, estimates, cb, n, tau_out, rho)
            if interval is not None:
                intervals.append(interval)
        if not _covers(intervals, n, tau_out):
            survivors.append(i)
    return ActiveSet(
        arms=survivors,
        estimates={arm: estimates[arm] for arm in survivors},
        sweep=active_set.sweep,
    )


def run_rest_sure(
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """
    Round-robin over a shrinking active set with two stopping rules.

    Before every sweep n, with tau_out = T - t + n the pull count an active arm
    would reach if committed now:

    - commit to an arm whose projected loss at tau_out beats all other active arms
      by more than 2*cb_mu;
    - commit to the best projection at tau_out when even the best projection one
      sweep later cannot improve on it by 2*cb_mu;
    - otherwise eliminate arms dominated at every pull count in [n, tau_out] and
      pull each survivor once.

    Args:
        handle: Pull handle of a fresh environment
        delta: Confidence parameter, 1/T when omitted
        options: Width scale and constants switch

    Returns:
        PolicyOutcome: The committed arm, final pull counts and elimination log
    """
    explorer = _Explorer(handle, delta, options, "rest_sure")
    horizon, rho = handle.horizon, handle.rho
    active = ActiveSet(arms=list(range(handle.num_arms)))
    eliminations: List[Tuple[int, int]] = []
    while True:
        n = active.sweep
        tau_out = horizon - handle.round + n
        size = len(active.arms)
        if size == 1:
            return explorer.commit(
                active.arms[0], CommitReason.GAP_IDENTIFIED, n, tuple(eliminations)
            )
        if n >= 2:
            estimates = explorer.estimates(active.arms)
            active.estimates = estimates
            cb = explorer.width(n)
            predictions = {
                arm: predict_loss(estimates[arm], tau_out, rho) for arm in active.arms
            }
            winner = _clear_winner(predictions, cb)
            if winner is not None:
                return explorer.commit(
                    winner, CommitReason.GAP_IDENTIFIED, n, tuple(eliminations)
                )
            ahead = max(tau_out - size + 1, 1)
            best_ahead = min(
                predict_loss(estimates[arm], ahead, rho) for arm in active.arms
            )
            if best_ahead - 2.0 * cb > min(predictions.values()):
                return explorer.commit(
                    _argmin(predictions),
                    CommitReason.EXPLORATION_UNPROFITABLE,
                    n,
                    tuple(eliminations),
                )
            survivors = eliminate(active, estimates, cb, n, tau_out, rho)
            for arm in active.arms:
                if arm not in survivors.arms:
                    eliminations.append((arm, n))
                    logger.debug("rest_sure eliminated arm %d after sweep %d", arm, n)
            active = survivors
        if handle.rounds_left < len(active.arms):
            final = explorer.best_projection(active.arms, tau_out)
            return explorer.commit(
                final, CommitReason.BUDGET_EXHAUSTED, n, tuple(eliminations)
            )
        explorer.sweep(active.arms)
        active.sweep += 1


def run_uniform(
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """
    Round-robin for all T rounds, then output the best projection at T // K.
    Leftover rounds go to the lowest-indexed arms.
    """
    explorer = _Explorer(handle, delta, options, "uniform")
    num_arms = handle.num_arms
    for t in range(handle.horizon):
        explorer.pull(t % num_arms)
    per_arm = handle.horizon // num_arms
    i_out = explorer.best_projection(list(range(num_arms)), per_arm)
    return PolicyOutcome(
        i_out=i_out,
        tau_out=explorer.pulls[i_out],
        pulls=tuple(explorer.pulls),
        commit_round=None,
        commit_reason=CommitReason.BUDGET_EXHAUSTED,
        sweeps=per_arm,
    )


def run_greedy(
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """
    Two initialization sweeps, then always pull the arm whose projected loss at its
    own next pull count is lowest. Outputs the most pulled arm.
    """
    explorer = _Explorer(handle, delta, options, "greedy")
    arms = list(range(handle.num_arms))
    for _ in range(2):
        if handle.rounds_left >= len(arms):
            explorer.sweep(arms)
    if all(count >= 2 for count in explorer.pulls):
        current = explorer.estimates(arms)
        while handle.rounds_left > 0:
            scores = {
                arm: predict_loss(current[arm], explorer.pulls[arm] + 1, handle.rho)
                for arm in arms
            }
            chosen = _argmin(scores)
            explorer.pull(chosen)
            current[chosen] = explorer.estimate(chosen)
    else:
        while handle.rounds_left > 0:
            explorer.pull(handle.round % len(arms))
    i_out = max(arms, key=lambda arm: (explorer.pulls[arm], -arm))
    return PolicyOutcome(
        i_out=i_out,
        tau_out=explorer.pulls[i_out],
        pulls=tuple(explorer.pulls),
        commit_round=None,
        commit_reason=CommitReason.BUDGET_EXHAUSTED,
        sweeps=2,
    )


PolicyFunction = Callable[
    [PullHandle, Optional[float], Optional[PolicyOptions]], PolicyOutcome
]


def _fixed_etc_entry(
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    options = options or PolicyOptions()
    if options.fixed_sweeps is None:
        raise ValueError("Policy 'etc_fixed' requires fixed_sweeps")
    return run_etc_fixed(handle, options.fixed_sweeps, delta, options)


POLICIES: Dict[str, PolicyFunction] = {
    "etc": run_etc,
    "rest_sure": run_rest_sure,
    "uniform": run_uniform,
    "greedy": run_greedy,
    "etc_fixed": _fixed_etc_entry,
}


def run_policy(
    name: str,
    handle: PullHandle,
    delta: Optional[float] = None,
    options: Optional[PolicyOptions] = None,
) -> PolicyOutcome:
    """
    Run a policy by its configuration name.

    Raises:
        ValueError: If the name is unknown
    """
    if name not in POLICIES:
        raise ValueError(f"Unknown policy {name!r}; expected one of {sorted(POLICIES)}")
    return POLICIES[name](handle, delta, options)
