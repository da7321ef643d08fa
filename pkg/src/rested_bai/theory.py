"""
Exploration-length bounds for rested best-arm identification.

Every quantity here is the smallest integer satisfying an inequality whose right
side may depend on the integer itself. Solutions are found by an ascending scan
over blocks of candidates; a bisection solver on the same predicate is available
as a cross-check wherever the predicate is monotone.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from rested_bai.env import BanditInstance, expected_loss, optimal_arm

logger = logging.getLogger(__name__)

DEFAULT_KL_CONSTANT = 0.5

WITNESS_DELTA = "delta"
WITNESS_DECAY = "decay"
WITNESS_HALF = "half_horizon"
WITNESS_CAP = "cap"
WITNESS_BUDGET = "budget"
WITNESS_ELIMINATION = "elimination"
WITNESS_COMMIT = "commit"
WITNESS_STOP = "stop"

_FIRST_BLOCK = 1024
_MAX_BLOCK = 1 << 17

Terms = Callable[[np.ndarray], Dict[str, np.ndarray]]
Predicate = Callable[[np.ndarray], np.ndarray]


class BoundKind(str, Enum):
    TAU_SUB = "tau_sub"
    TAU_SUB_EXACT = "tau_sub_exact"
    COR1_TAU_SUB = "cor1_tau_sub"
    ETC_N0 = "etc_n0"
    COR2_N0 = "cor2_n0"
    REST_SURE_NBAR = "nbar"


@dataclass(frozen=True)
class StageDetail:
    """One elimination stage of the REST-SURE exploration bound."""

    stage: int
    arm: int
    n: int
    witness: str
    tau_out: int


@dataclass(frozen=True)
class BoundReport:
    """
    A computed bound.

    Attributes:
        kind: Which bound
        value: The integer solution, in [1, T]
        regret_bound: Regret implied by value
        witness: Name of the term attaining the minimum at value
        inputs: Parameters the bound was computed from
        residual: Additive lower-order term reported next to regret_bound
        stages: Per-stage detail (REST-SURE only)
        i_out: Arm the bound's regret is evaluated on (REST-SURE only)
    """

    kind: BoundKind
    value: int
    regret_bound: float
    witness: str
    inputs: Dict[str, float] = field(default_factory=dict)
    residual: float = 0.0
    stages: Tuple[StageDetail, ...] = ()
    i_out: Optional[int] = None

    @property
    def order(self) -> Tuple[int, ...]:
        return tuple(stage.arm for stage in self.stages)


def _blocks(lo: int, hi: int) -> List[Tuple[int, int]]:
    spans = []
    block = _FIRST_BLOCK
    start = lo
    while start <= hi:
        stop = min(hi, start + block - 1)
        spans.append((start, stop))
        start = stop + 1
        block = min(block * 2, _MAX_BLOCK)
    return spans


def scan_first(predicate: Predicate, lo: int, hi: int) -> Optional[int]:
    """Smallest integer in [lo, hi] where the predicate holds, scanning upward."""
    for start, stop in _blocks(lo, hi):
        candidates = np.arange(start, stop + 1, dtype=np.int64)
        hits = np.flatnonzero(predicate(candidates))
        if hits.size:
            return int(candidates[hits[0]])
    return None


def bisect_first(predicate: Predicate, lo: int, hi: int) -> Optional[int]:
    """Same answer as scan_first for predicates that switch from false to true once."""
    if lo > hi or not predicate(np.array([hi], dtype=np.int64))[0]:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if predicate(np.array([mid], dtype=np.int64))[0]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _predicate(terms: Terms, strict: bool) -> Predicate:
    def holds(xs: np.ndarray) -> np.ndarray:
        bound = np.min(np.vstack(list(terms(xs).values())), axis=0)
        values = xs.astype(float)
        return values > bound if strict else values >= bound

    return holds


def _witness(terms: Terms, value: int) -> str:
    at_value = {name: float(term[0]) for name, term in terms(np.array([value])).items()}
    return min(at_value, key=lambda name: at_value[name])


def _solve(
    terms: Terms, strict: bool, lo: int, hi: int, solver: str
) -> Optional[Tuple[int, str]]:
    predicate = _predicate(terms, strict)
    if solver == "scan":
        value = scan_first(predicate, lo, hi)
    elif solver == "bisect":
        value = bisect_first(predicate, lo, hi)
    else:
        raise ValueError(f"Unknown solver {solver!r}; expected 'scan' or 'bisect'")
    if value is None:
        return None
    return value, _witness(terms, value)


def _full(xs: np.ndarray, value: float) -> np.ndarray:
    return np.full(xs.shape, value, dtype=float)


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie strictly inside (0, 1), got {rho}")


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise ValueError(f"T must be at least 1, got {horizon}")


def _decay_regret(alpha: float, rho: float, horizon: int, spent: int) -> float:
    """alpha * ((T - spent)**-rho - T**-rho), with T - spent floored at 1."""
    left = max(horizon - spent, 1)
    return alpha * (1.0 / left**rho - 1.0 / horizon**rho)


def lower_bound_regret(alpha: float, rho: float, horizon: int, tau_sub: int) -> float:
    """
    Regret forced on any policy that spends tau_sub rounds off the output arm.

    Raises:
        ValueError: If tau_sub is negative or not smaller than T
    """
    if not 0 <= tau_sub < horizon:
        raise ValueError(f"tau_sub must lie in [0, T), got {tau_sub} with T={horizon}")
    return alpha * (1.0 / (horizon - tau_sub) ** rho - 1.0 / horizon**rho)


def _tau_sub_terms(
    alpha: float,
    delta_gap: float,
    rho: float,
    kl_constant: float,
    horizon: int,
    ceil_gap: bool,
) -> Terms:
    log_t = math.log(horizon)
    gap_term = log_t / (kl_constant * delta_gap**2) if delta_gap > 0 else math.inf
    if ceil_gap and math.isfinite(gap_term):
        gap_term = float(math.ceil(gap_term))
    decay_scale = log_t / (kl_constant * alpha**2) if alpha > 0 else math.inf

    def terms(taus: np.ndarray) -> Dict[str, np.ndarray]:
        if math.isfinite(decay_scale):
            remaining = np.maximum(horizon - taus.astype(float) - 1.0, 0.0)
            decay = decay_scale * np.power(remaining, 2.0 * rho + 2.0)
        else:
            decay = _full(taus, math.inf)
        return {
            WITNESS_DELTA: _full(taus, gap_term),
            WITNESS_DECAY: decay,
            WITNESS_HALF: _full(taus, horizon / 2.0),
        }

    return terms


def _validate_tau_sub(
    alpha: float, delta_gap: float, kl_constant: float, horizon: int
) -> None:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    if delta_gap < 0:
        raise ValueError(f"Delta must be non-negative, got {delta_gap}")
    if kl_constant <= 0:
        raise ValueError(f"C must be positive, got {kl_constant}")
    _check_horizon(horizon)


def _tau_sub_report(
    kind: BoundKind,
    alpha: float,
    delta_gap: float,
    rho: float,
    kl_constant: float,
    horizon: int,
    solution: Optional[Tuple[int, str]],
) -> BoundReport:
    # tau = T - 1 always clears the decay term, so only T = 1 can fall through
    value, witness = solution if solution is not None else (horizon, WITNESS_CAP)
    regret = lower_bound_regret(alpha, rho, horizon, value) if value < horizon else 0.0
    return BoundReport(
        kind=kind,
        value=value,
        regret_bound=regret,
        witness=witness,
        inputs={
            "alpha": alpha,
            "delta_gap": delta_gap,
            "rho": rho,
            "C": kl_constant,
            "T": horizon,
        },
    )


def tau_sub(
    alpha: float,
    delta_gap: float,
    rho: float,
    horizon: int,
    kl_constant: float = DEFAULT_KL_CONSTANT,
    solver: str = "scan",
) -> BoundReport:
    """
    Smallest tau in [1, T] strictly larger than
    min{T/2, log T / (C Delta^2), log T / (C alpha^2) * (T - tau - 1)^(2 rho + 2)}.

    The left side grows with tau while the last term shrinks, so the inequality
    switches from false to true exactly once.

    Args:
        alpha: Decay scale of the two-arm lower-bound instance (0 drops the last term)
        delta_gap: Constant gap between the two arms (0 drops the middle term)
        rho: Decay exponent
        horizon: T
        kl_constant: C with KL(P_mu, P_mu') = C (mu - mu')^2
        solver: "scan" or "bisect"

    Returns:
        BoundReport: tau_sub and the regret lower bound it implies
    """
    _validate_tau_sub(alpha, delta_gap, kl_constant, horizon)
    _check_rho(rho)
    terms = _tau_sub_terms(alpha, delta_gap, rho, kl_constant, horizon, ceil_gap=False)
    solution = _solve(terms, True, 1, horizon, solver)
    return _tau_sub_report(
        BoundKind.TAU_SUB, alpha, delta_gap, rho, kl_constant, horizon, solution
    )


def cor1_tau_sub(
    alpha: float,
    delta_gap: float,
    horizon: int,
    kl_constant: float = DEFAULT_KL_CONSTANT,
    solver: str = "scan",
) -> BoundReport:
    """tau_sub at rho = 1/2 with the middle term rounded up to an integer."""
    _validate_tau_sub(alpha, delta_gap, kl_constant, horizon)
    terms = _tau_sub_terms(alpha, delta_gap, 0.5, kl_constant, horizon, ceil_gap=True)
    solution = _solve(terms, True, 1, horizon, solver)
    return _tau_sub_report(
        BoundKind.COR1_TAU_SUB, alpha, delta_gap, 0.5, kl_constant, horizon, solution
    )


def decay_gap(alpha: float, rho: float, horizon: int, taus: np.ndarray) -> np.ndarray:
    """
    alpha * ((T - tau - 1)^-rho - (T - tau)^-rho): how much one extra pull of the
    output arm is worth at the end. Zero where T - tau - 1 < 1.
    """
    taus = np.asarray(taus, dtype=float)
    valid = horizon - taus - 1.0 >= 1.0
    near = np.where(valid, horizon - taus - 1.0, 1.0)
    far = np.where(valid, horizon - taus, 1.0)
    return np.where(valid, alpha * (np.power(near, -rho) - np.power(far, -rho)), 0.0)


def _log_ratio_term(
    gaps: np.ndarray, taus: np.ndarray, kl_constant: float
) -> np.ndarray:
    scaled = kl_constant * np.square(gaps)
    argument = scaled * taus / 4.0
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(argument) / (8.0 * scaled)
    # only a positive logarithm is a constraint
    return np.where(argument > 1.0, value, math.inf)


def tau_sub_exact(
    alpha: float,
    delta_gap: float,
    rho: float,
    horizon: int,
    kl_constant: float = DEFAULT_KL_CONSTANT,
) -> BoundReport:
    """
    Smallest tau in [1, T/2] with
    tau >= min{log(C d~^2 tau / 4) / (8 C d~^2), log(C Delta^2 tau / 4) / (8 C Delta^2)}
    where d~ is decay_gap at tau. Falls back to floor(T/2) when no tau qualifies.
    """
    _validate_tau_sub(alpha, delta_gap, kl_constant, horizon)
    _check_rho(rho)

    def terms(taus: np.ndarray) -> Dict[str, np.ndarray]:
        values = taus.astype(float)
        return {
            WITNESS_DELTA: _log_ratio_term(_full(taus, delta_gap), values, kl_constant),
            WITNESS_DECAY: _log_ratio_term(
                decay_gap(alpha, rho, horizon, values), values, kl_constant
            ),
        }

    limit = max(horizon // 2, 1)
    solution = scan_first(_predicate(terms, False), 1, limit)
    if solution is None:
        value, witness = limit, WITNESS_CAP
    else:
        value, witness = solution, _witness(terms, solution)
    regret = lower_bound_regret(alpha, rho, horizon, value) if value < horizon else 0.0
    return BoundReport(
        kind=BoundKind.TAU_SUB_EXACT,
        value=value,
        regret_bound=regret,
        witness=witness,
        inputs={
            "alpha": alpha,
            "delta_gap": delta_gap,
            "rho": rho,
            "C": kl_constant,
            "T": horizon,
        },
    )


def etc_constant(rho: float, upper: float, exponent: int = 4) -> float:
    """1600 (sqrt(U) + 1)^exponent / (rho^2 (1 - rho)^2), without the log factor."""
    return 1600.0 * (math.sqrt(upper) + 1.0) ** exponent / (rho**2 * (1.0 - rho) ** 2)


def etc_n0(
    delta_gap: float,
    rho: float,
    upper: float,
    horizon: int,
    alpha: float = 1.0,
    residual_constant: float = 1.0,
    solver: str = "scan",
) -> BoundReport:
    """
    Exploration sweeps after which ETC commits with high probability: the smallest
    n with n >= c_rho log(4 n T^2) / Delta^2, capped at ceil(T/2).

    n - c log(4 n T^2)/Delta^2 is negative at n = 1, decreases up to n = c/Delta^2
    and increases afterwards, so it changes sign once.

    Args:
        delta_gap: Constant gap between the two arms
        rho: Decay exponent
        upper: U
        horizon: T
        alpha: Common decay scale used in the regret bound
        residual_constant: kappa in the reported kappa / sqrt(T) residual
        solver: "scan" or "bisect"

    Returns:
        BoundReport: n0 and alpha((T - n0)^-rho - T^-rho)
    """
    _check_rho(rho)
    _check_horizon(horizon)
    if delta_gap < 0:
        raise ValueError(f"Delta must be non-negative, got {delta_gap}")
    constant = etc_constant(rho, upper)
    cap = math.ceil(horizon / 2)

    def terms(ns: np.ndarray) -> Dict[str, np.ndarray]:
        if delta_gap == 0:
            return {WITNESS_DELTA: _full(ns, math.inf)}
        logs = np.log(4.0 * ns.astype(float) * float(horizon) ** 2)
        return {WITNESS_DELTA: constant * logs / delta_gap**2}

    solution = _solve(terms, False, 1, cap, solver)
    value, witness = solution if solution is not None else (cap, WITNESS_HALF)
    return BoundReport(
        kind=BoundKind.ETC_N0,
        value=value,
        regret_bound=_decay_regret(alpha, rho, horizon, value),
        witness=witness,
        inputs={
            "alpha": alpha,
            "delta_gap": delta_gap,
            "rho": rho,
            "U": upper,
            "T": horizon,
            "K": 2,
        },
        residual=residual_constant / math.sqrt(horizon),
    )


def cor2_n0(
    alpha: float, delta_gap: float, upper: float, horizon: int, solver: str = "scan"
) -> BoundReport:
    """
    Two-arm REST-SURE exploration length at rho = 1/2: smallest n in [1, T] greater
    than min{c(n) / Delta^2, c(n) (T - n)^3 / alpha^2} with
    c(n) = 25600 (sqrt(U) + 1)^4 log(4 n T^2).

    Each branch on its own switches once, so their union does too.
    """
    _check_horizon(horizon)
    if alpha < 0 or delta_gap < 0:
        raise ValueError("alpha and Delta must be non-negative")
    scale = 25600.0 * (math.sqrt(upper) + 1.0) ** 4

    def terms(ns: np.ndarray) -> Dict[str, np.ndarray]:
        values = ns.astype(float)
        log_factor = scale * np.log(4.0 * values * float(horizon) ** 2)
        gap_branch = log_factor / delta_gap**2 if delta_gap > 0 else _full(ns, math.inf)
        if alpha > 0:
            decay_branch = log_factor * np.power(horizon - values, 3.0) / alpha**2
        else:
            decay_branch = _full(ns, math.inf)
        return {WITNESS_DELTA: gap_branch, WITNESS_DECAY: decay_branch}

    solution = _solve(terms, True, 1, horizon, solver)
    if solution is None:
        value, witness = math.ceil(horizon / 2), WITNESS_CAP
    else:
        value, witness = solution
    return BoundReport(
        kind=BoundKind.COR2_N0,
        value=value,
        regret_bound=_decay_regret(alpha, 0.5, horizon, value),
        witness=witness,
        inputs={
            "alpha": alpha,
            "delta_gap": delta_gap,
            "rho": 0.5,
            "U": upper,
            "T": horizon,
            "K": 2,
        },
    )


def _breakpoints(slopes: np.ndarray, offsets: np.ndarray, rho: float) -> List[float]:
    """Pull counts where two of the lines slope * m^-rho + offset cross."""
    points: List[float] = []
    for a in range(len(slopes)):
        for b in range(a + 1, len(slopes)):
            if slopes[a] == slopes[b]:
                continue
            x = (offsets[b] - offsets[a]) / (slopes[a] - slopes[b])
            if x <= 0:
                continue
            m = x ** (-1.0 / rho)
            if 1.0 <= m < 1e15:
                points.extend([math.floor(m), math.ceil(m)])
    return points


class _StageScan:
    """
    Candidate-n evaluation for one stage of the REST-SURE bound, vectorized over a
    block of n values for all remaining arms at once.
    """

    def __init__(
        self,
        instance: BanditInstance,
        remaining: List[int],
        spent: int,
        constant: float,
    ):
        self.rho = instance.rho
        self.horizon = instance.horizon
        self.num_arms = instance.num_arms
        self.remaining = remaining
        self.spent = spent
        self.constant = constant
        self.alphas = np.array([instance.arms[arm].alpha for arm in remaining])
        self.betas = np.array([instance.arms[arm].beta for arm in remaining])
        self.crossings = []
        for index in range(len(remaining)):
            others = [o for o in range(len(remaining)) if o != index]
            slopes = self.alphas[index] - self.alphas[others]
            offsets = self.betas[index] - self.betas[others]
            self.crossings.append(np.array(_breakpoints(slopes, offsets, self.rho)))

    def _losses(self, taus: np.ndarray) -> np.ndarray:
        """Expected losses of the remaining arms, shape (arms,) + taus.shape."""
        grid = np.power(np.maximum(taus, 1.0), -self.rho)
        shape = (-1,) + (1,) * taus.ndim
        return self.alphas.reshape(shape) * grid + self.betas.reshape(shape)

    def _term(self, gaps: np.ndarray, logs: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            value = self.constant * logs / np.square(gaps)
        return np.where(gaps > 0, value, math.inf)

    def terms(self, ns: np.ndarray) -> List[Dict[str, np.ndarray]]:
        """Per remaining arm: the elimination, commit and stop terms at each n."""
        size = len(self.remaining)
        values = ns.astype(float)
        tau_out = self.horizon - self.spent - (size - 1) * values
        logs = np.log(values * float(self.num_arms) ** 2 * float(self.horizon) ** 2)

        at_out = self._losses(tau_out)
        ahead = tau_out - (size - 1)
        best_ahead = self._losses(ahead).min(axis=0)
        stop_gap = np.where(ahead >= 1.0, best_ahead - at_out.min(axis=0), 0.0)
        stop = self._term(stop_gap, logs)

        result = []
        for index in range(size):
            others = [o for o in range(size) if o != index]
            commit_gap = (at_out[others] - at_out[index]).min(axis=0)
            fixed = self.crossings[index]
            grid = np.column_stack(
                [values, tau_out] + [np.full_like(values, point) for point in fixed]
            )
            inside = (grid >= values[:, None]) & (grid <= tau_out[:, None])
            losses = self._losses(grid)
            worst_gap = (losses[index][None] - losses[others]).max(axis=0)
            elimination_gap = np.where(inside, worst_gap, math.inf).min(axis=1)
            result.append(
                {
                    WITNESS_ELIMINATION: self._term(elimination_gap, logs),
                    WITNESS_COMMIT: self._term(commit_gap, logs),
                    WITNESS_STOP: stop,
                }
            )
        return result

    def first_hit(self, lo: int, hi: int) -> Optional[Tuple[int, int, str]]:
        """(arm, n, witness) for the smallest qualifying n; lowest arm on ties."""
        for start, stop in _blocks(lo, hi):
            ns = np.arange(start, stop + 1, dtype=np.int64)
            per_arm = self.terms(ns)
            firsts = []
            for index, terms in enumerate(per_arm):
                bound = np.min(np.vstack(list(terms.values())), axis=0)
                hits = np.flatnonzero(ns.astype(float) > bound)
                if hits.size:
                    firsts.append((int(hits[0]), index))
            if firsts:
                position, index = min(firsts)
                at_hit = {
                    name: float(term[position])
                    for name, term in per_arm[index].items()
                }
                witness = min(at_hit, key=lambda name: at_hit[name])
                return self.remaining[index], int(ns[position]), witness
        return None


def rest_sure_nbar(instance: BanditInstance, exponent: int = 4) -> BoundReport:
    """
    Total pulls REST-SURE spends on arms other than its output, stage by stage.

    At each stage every remaining arm gets a candidate n: the smallest n above the
    minimum of its elimination, commit and stop terms (each c_rho log(n K^2 T^2)
    over a squared gap), capped by the stage budget (T - spent) / |remaining|. The
    arm with the smallest candidate leaves the stage. Eliminated arms keep their n
    pulls; a commit or stop witness (or the budget) ends exploration with every
    other remaining arm holding n pulls.

    Args:
        instance: Ground-truth instance
        exponent: Power of (sqrt(U) + 1) in c_rho, 4 (default) or 2

    Returns:
        BoundReport: n-bar, the stage ordering and the regret at T - n-bar
    """
    if exponent not in (2, 4):
        raise ValueError(f"exponent must be 2 or 4, got {exponent}")
    constant = etc_constant(instance.rho, instance.upper, exponent)
    horizon = instance.horizon
    remaining = list(range(instance.num_arms))
    spent = 0
    floor_n = 1
    stages: List[StageDetail] = []
    i_out: Optional[int] = None
    for stage in range(1, instance.num_arms):
        size = len(remaining)
        cap = max((horizon - spent) // size, floor_n)
        hit = _StageScan(instance, remaining, spent, constant).first_hit(floor_n, cap)
        if hit is None:
            hit = (remaining[0], cap, WITNESS_BUDGET)
        arm, n, witness = hit
        tau_out = horizon - spent - (size - 1) * n
        stages.append(StageDetail(stage, arm, n, witness, tau_out))
        logger.debug(
            "nbar stage %d: arm %d leaves at n=%d (%s)", stage, arm, n, witness
        )
        if witness == WITNESS_ELIMINATION:
            remaining.remove(arm)
            spent += n
            floor_n = n
            continue
        spent += (size - 1) * n
        if witness == WITNESS_COMMIT:
            i_out = arm
        else:
            losses = {arm: expected_loss(instance, arm, tau_out) for arm in remaining}
            i_out = min(remaining, key=lambda a: (losses[a], a))
        break
    if i_out is None:
        i_out = remaining[0]
    _, best_value = optimal_arm(instance)
    regret = max(expected_loss(instance, i_out, horizon - spent) - best_value, 0.0)
    return BoundReport(
        kind=BoundKind.REST_SURE_NBAR,
        value=spent,
        regret_bound=regret,
        witness=stages[-1].witness,
        inputs={
            "T": horizon,
            "K": instance.num_arms,
            "rho": instance.rho,
            "U": instance.upper,
        },
        stages=tuple(stages),
        i_out=i_out,
    )
