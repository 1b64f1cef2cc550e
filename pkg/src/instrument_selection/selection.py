"""Sequential instrument selection.

Each round picks the unused instrument subset with the best
``score = gain - cost``, where the gain rewards dissimilarity within the
candidate set and to the instruments already used, runs the experiment,
estimates the projection, folds it into the running combined estimate and
stops once the combined norm matches the ``||beta||_2`` estimate.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Collection, Dict, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .combination import RunningEstimate
from .errors import (
    EmptyCandidatesError,
    InstrumentSelectionError,
    InvalidInstrumentSetError,
    OverlapError,
    RoundError,
)
from .estimation import DEFAULT_RANK_TOL, estimate_projection
from .norm import NormEstimate
from .rng import Stream, make_rng
from .scenario import Scenario, SimilarityMatrix
from .simulator import run_experiment
from .tracker import RunTracker

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


class CostKind(str, Enum):
    LOG = "log"
    LINEAR = "linear"
    CONSTANT = "constant"


class Strategy(str, Enum):
    SIS = "sis"
    RANDOM = "random"
    IDEAL = "ideal"


class SelectionConfig(BaseModel):
    """Budget, cost and tolerances of a sequential run."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_max: int = Field(6, ge=1)
    max_per_round: int = Field(3, ge=1)
    cost_kind: CostKind = CostKind.LOG
    cost_unit: float = Field(1.0, ge=0)
    epsilon: float = Field(0.05, ge=0)
    epsilon_relative: bool = True
    delta: float = Field(0.3, gt=0, le=1)
    n_per_experiment: int = Field(1000, ge=1)
    rank_tol: float = Field(DEFAULT_RANK_TOL, gt=0)
    enumeration_budget: int = Field(1_000_000, ge=1)

    def stopping_tolerance(self, norm_estimate: NormEstimate) -> float:
        return self.epsilon * norm_estimate.value if self.epsilon_relative else self.epsilon


def _indices(values: Collection[int], n_iv: int, what: str) -> Tuple[int, ...]:
    indices = tuple(sorted(int(v) for v in values))
    if len(set(indices)) != len(indices):
        raise InvalidInstrumentSetError(f"{what} indices {list(indices)} contain duplicates")
    bad = [i for i in indices if not 0 <= i < n_iv]
    if bad:
        raise InvalidInstrumentSetError(f"{what} indices {bad} outside [0, {n_iv})")
    return indices


def gain(candidate: Collection[int], used: Collection[int], sim: SimilarityMatrix) -> float:
    """Mean dissimilarity of the candidate to itself and to the used instruments."""
    chosen = _indices(candidate, sim.n_iv, "candidate")
    previous = _indices(used, sim.n_iv, "used")
    if not chosen:
        raise InvalidInstrumentSetError("candidate set is empty")
    overlap = set(chosen) & set(previous)
    if overlap:
        raise OverlapError(f"candidate overlaps used instruments {sorted(overlap)}")
    denominator = len(chosen) + len(previous) - 1
    if denominator == 0:
        # single instrument, nothing used: the only summand is 1 - sim[i][i] = 0
        return 0.0
    block = sim.sim[list(chosen)][:, list(chosen + previous)]
    return float((1.0 - block).sum() / denominator)


def cost(d: int, config: SelectionConfig) -> float:
    """Cost of randomizing ``d`` instruments at once; ``inf`` above the cap."""
    if d < 1:
        raise ValueError(f"experiment size must be positive, got {d}")
    if d > config.max_per_round:
        return math.inf
    if config.cost_kind is CostKind.LOG:
        return math.log(d)
    if config.cost_kind is CostKind.LINEAR:
        return d * config.cost_unit
    return 0.0


def score(candidate: Collection[int], used: Collection[int], sim: SimilarityMatrix,
          config: SelectionConfig) -> float:
    experiment_cost = cost(len(candidate), config)
    candidate_gain = gain(candidate, used, sim)
    if math.isinf(experiment_cost):
        return -math.inf
    return candidate_gain - experiment_cost


def _better(value: float, subset: Tuple[int, ...], best_value: float, best: Optional[Tuple[int, ...]]) -> bool:
    if best is None:
        return True
    if value > best_value + TIE_TOL:
        return True
    return abs(value - best_value) <= TIE_TOL and subset < best


def _greedy_subset(pool: Sequence[int], used: Collection[int], sim: SimilarityMatrix,
                   config: SelectionConfig, max_size: int) -> Tuple[Optional[Tuple[int, ...]], float]:
    current: Tuple[int, ...] = ()
    best, best_value = None, -math.inf
    for _ in range(max_size):
        step, step_value = None, -math.inf
        for instrument in pool:
            if instrument in current:
                continue
            candidate = tuple(sorted(current + (instrument,)))
            value = score(candidate, used, sim, config)
            if not math.isinf(value) and _better(value, candidate, step_value, step):
                step, step_value = candidate, value
        if step is None:
            break
        current = step
        if _better(step_value, step, best_value, best):
            best, best_value = step, step_value
    return best, best_value


def select_next(remaining: Collection[int], used: Collection[int], sim: SimilarityMatrix,
                config: SelectionConfig) -> Tuple[int, ...]:
    """Score-maximizing subset of ``remaining``; ties go to the lexicographically smallest."""
    pool = tuple(sorted(set(int(i) for i in remaining)))
    if not pool:
        raise EmptyCandidatesError("no remaining instruments to select from")
    overlap = set(pool) & set(int(j) for j in used)
    if overlap:
        raise OverlapError(f"remaining and used instruments overlap at {sorted(overlap)}")

    max_size = min(config.max_per_round, len(pool))
    n_candidates = sum(math.comb(len(pool), k) for k in range(1, max_size + 1))
    if n_candidates > config.enumeration_budget:
        logger.warning("[SIS] %d candidate subsets exceed the budget of %d, growing greedily",
                       n_candidates, config.enumeration_budget)
        best, best_value = _greedy_subset(pool, used, sim, config, max_size)
    else:
        best, best_value = None, -math.inf
        for size in range(1, max_size + 1):
            for candidate in itertools.combinations(pool, size):
                value = score(candidate, used, sim, config)
                if not math.isinf(value) and _better(value, candidate, best_value, best):
                    best, best_value = candidate, value

    if best is None:
        return (pool[0],)
    logger.debug("[SIS] best subset %s with score %.6g", list(best), best_value)
    return best


@dataclass(frozen=True, eq=False)
class SisTrajectory:
    """Full record of one sequential run."""
    strategy: Strategy
    seed: int
    chosen_sets: Tuple[Tuple[int, ...], ...]
    running: Tuple[RunningEstimate, ...]
    norms: Tuple[float, ...]
    scores: Tuple[Optional[float], ...]
    stopped_early: bool
    stop_round: Optional[int]
    norm_estimate: Optional[NormEstimate]

    @property
    def n_rounds(self) -> int:
        return len(self.norms)

    @property
    def final(self) -> RunningEstimate:
        return self.running[-1]

    @property
    def used_instruments(self) -> Tuple[int, ...]:
        return tuple(sorted(itertools.chain.from_iterable(self.chosen_sets)))

    def to_dict(self) -> Dict[str, Any]:
        beta_norm = None if self.norm_estimate is None else self.norm_estimate.value
        rounds = []
        for index, state in enumerate(self.running):
            entry = state.to_round_dict(index + 1, beta_norm)
            entry["score"] = self.scores[index]
            rounds.append(entry)
        return {
            "strategy": self.strategy.value,
            "seed": self.seed,
            "chosen_sets": [list(s) for s in self.chosen_sets],
            "norms": list(self.norms),
            "stopped_early": self.stopped_early,
            "stop_round": self.stop_round,
            "norm_estimate": None if self.norm_estimate is None else self.norm_estimate.to_dict(),
            "rounds": rounds,
        }


Chooser = Callable[[Tuple[int, ...], Tuple[int, ...]], Tuple[Tuple[int, ...], Optional[float]]]


def _run_rounds(strategy: Strategy, scenario: Scenario, config: SelectionConfig, seed: int, chooser: Chooser,
                t_max: int, norm_est: Optional[NormEstimate], tracker: Optional[RunTracker]) -> SisTrajectory:
    if tracker is not None:
        tracker.start_run(strategy.value, seed, config.model_dump(mode="json"))
    tolerance = None if norm_est is None else config.stopping_tolerance(norm_est)
    used: Tuple[int, ...] = ()
    chosen_sets, states, norms, scores = [], [], [], []
    stop_round = None

    for round_number in range(1, t_max + 1):
        remaining = tuple(i for i in range(scenario.n_iv) if i not in set(used))
        if not remaining:
            logger.info("[SIS] %s: all instruments used after %d round(s)", strategy.value, round_number - 1)
            break
        chosen, chosen_score = chooser(remaining, used)
        if tracker is not None:
            tracker.log_subset_selected(round_number, chosen, chosen_score)
        try:
            dataset = run_experiment(scenario, chosen, config.n_per_experiment, seed, stream_key=round_number)
            estimate = estimate_projection(dataset, config.rank_tol)
        except InstrumentSelectionError as exc:
            if tracker is not None:
                tracker.log_error(str(exc), type(exc).__name__, round_number)
            raise RoundError(strategy.value, round_number, chosen, exc) from exc
        if tracker is not None:
            tracker.log_experiment(round_number, chosen, dataset.n)
            tracker.log_estimate(round_number, estimate.rank, float(estimate.beta_hat @ estimate.beta_hat) ** 0.5)

        state = (RunningEstimate.from_estimates([estimate], config.delta) if not states
                 else states[-1].extend(estimate))
        combined_norm = state.combined_norm
        gap = None if norm_est is None else abs(norm_est.value - combined_norm)
        stop = gap is not None and gap < tolerance
        if stop:
            state = state.mark_fully_identified()
        if tracker is not None:
            tracker.log_combined(round_number, combined_norm, state.identified_fraction)
            tracker.log_stopping_check(round_number, gap, tolerance, stop)

        logger.info("[SIS] %s round %d: instruments=%s size=%d score=%s |combined|=%.6g identified=%.3f%s",
                    strategy.value, round_number, list(chosen), len(chosen),
                    "n/a" if chosen_score is None else f"{chosen_score:.6g}", combined_norm,
                    state.identified_fraction, " STOP" if stop else "")
        chosen_sets.append(chosen)
        states.append(state)
        norms.append(combined_norm)
        scores.append(chosen_score)
        used = tuple(sorted(used + chosen))
        if stop:
            stop_round = round_number
            break

    if tracker is not None:
        tracker.finish_run(len(states), stop_round is not None)
    return SisTrajectory(
        strategy=strategy,
        seed=seed,
        chosen_sets=tuple(chosen_sets),
        running=tuple(states),
        norms=tuple(norms),
        scores=tuple(scores),
        stopped_early=stop_round is not None,
        stop_round=stop_round,
        norm_estimate=norm_est,
    )


def run_sis(scenario: Scenario, sim: SimilarityMatrix, norm_est: NormEstimate, config: SelectionConfig,
            seed: int, tracker: Optional[RunTracker] = None) -> SisTrajectory:
    """Sequential selection driven by the similarity score, with the norm stopping rule."""
    if sim.n_iv != scenario.n_iv:
        raise InvalidInstrumentSetError(f"similarities cover {sim.n_iv} instruments, scenario has {scenario.n_iv}")

    def choose(remaining, used):
        chosen = select_next(remaining, used, sim, config)
        return chosen, score(chosen, used, sim, config)

    return _run_rounds(Strategy.SIS, scenario, config, seed, choose, config.t_max, norm_est, tracker)


def run_random_baseline(scenario: Scenario, config: SelectionConfig, seed: int,
                        norm_est: Optional[NormEstimate] = None,
                        tracker: Optional[RunTracker] = None) -> SisTrajectory:
    """Uniformly random subsets of the maximal allowed size; cost is ignored."""
    rng = make_rng(seed, Stream.RANDOM_SELECTION)

    def choose(remaining, used):
        size = min(config.max_per_round, len(remaining))
        picked = rng.choice(len(remaining), size=size, replace=False)
        return tuple(sorted(remaining[i] for i in picked)), None

    return _run_rounds(Strategy.RANDOM, scenario, config, seed, choose, config.t_max, norm_est, tracker)


def run_ideal(scenario: Scenario, config: SelectionConfig, seed: int,
              norm_est: Optional[NormEstimate] = None,
              tracker: Optional[RunTracker] = None) -> SisTrajectory:
    """A single experiment randomizing every instrument at once."""

    def choose(remaining, used):
        return tuple(remaining), None

    return _run_rounds(Strategy.IDEAL, scenario, config, seed, choose, 1, norm_est, tracker)

