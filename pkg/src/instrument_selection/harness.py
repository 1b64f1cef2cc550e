"""Replicated studies: strategy sweeps and the finite-sample comparison.

Replicates are independent; with ``workers > 1`` they run in a process
pool and are sorted by (strategy, seed, round) before anything is written,
so the output files do not depend on scheduling.
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .combination import RunningEstimate
from .config import RunConfig
from .errors import InstrumentSelectionError, InvalidDimensionsError
from .estimation import estimate_projection
from .norm import NormEstimate, resolve_norm_estimate
from .report import (
    ReportRow,
    aggregate,
    component_rows,
    components_frame,
    rounds_frame,
    summary_frame,
    trajectory_rows,
    write_csv,
)
from .rng import Stream, make_rng
from .scenario import Scenario, SimilarityMatrix, compute_similarities, generate_scenario
from .selection import SisTrajectory, Strategy, run_ideal, run_random_baseline, run_sis
from .simulator import run_experiment
from .tracker import RunTracker

logger = logging.getLogger(__name__)

FAILURE_THRESHOLD = 0.01
FINITE_SAMPLE_DESIGNS = ("all_at_once", "split_two", "singletons")
FINITE_SAMPLE_SEED = 253
FINITE_SAMPLE_COLUMNS = ["estimator", "component", "count", "mean", "median", "q1", "q3", "p10", "p90",
                         "truth", "std_error"]


@dataclass(frozen=True)
class ReplicateFailure:
    seed: int
    strategy: str
    error_type: str
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    seed: int
    trajectories: Tuple[SisTrajectory, ...]
    rounds: Tuple[Dict[str, Any], ...]
    components: Tuple[Dict[str, Any], ...]
    failures: Tuple[ReplicateFailure, ...]


@dataclass(eq=False)
class SweepResult:
    config: RunConfig
    trajectories: List[SisTrajectory]
    rounds: pd.DataFrame
    components: pd.DataFrame
    report: List[ReportRow]
    failures: List[ReplicateFailure] = field(default_factory=list)

    @property
    def n_attempted(self) -> int:
        return self.config.n_runs * len(self.config.strategies)

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.n_attempted

    @property
    def ok(self) -> bool:
        return not self.failures


def replicate_inputs(config: RunConfig, seed: int) -> Tuple[Scenario, SimilarityMatrix, NormEstimate]:
    params = config.scenario
    scenario = generate_scenario(params.n_iv, params.d_x, params.d_id, seed)
    if config.noiseless:
        scenario = scenario.without_confounding()
    sim = compute_similarities(scenario, config.similarity_noise_sd, seed)
    return scenario, sim, resolve_norm_estimate(config.norm_provider, scenario, seed)


def run_strategy(strategy: Strategy, scenario: Scenario, sim: SimilarityMatrix, norm_est: NormEstimate,
                 config: RunConfig, seed: int, tracker: Optional[RunTracker] = None) -> SisTrajectory:
    """Run one strategy; only SIS applies the norm stopping rule."""
    strategy = Strategy(strategy)
    if strategy is Strategy.SIS:
        return run_sis(scenario, sim, norm_est, config.selection, seed, tracker=tracker)
    if strategy is Strategy.RANDOM:
        return run_random_baseline(scenario, config.selection, seed, tracker=tracker)
    return run_ideal(scenario, config.selection, seed, tracker=tracker)


def horizon(strategy: Strategy, config: RunConfig) -> int:
    return 1 if strategy is Strategy.IDEAL else config.selection.t_max


def run_replicate(config: RunConfig, replicate: int) -> ReplicateResult:
    """All requested strategies on replicate ``replicate``; failures are recorded, not raised."""
    seed = config.base_seed + replicate
    try:
        scenario, sim, norm_est = replicate_inputs(config, seed)
    except (InstrumentSelectionError, np.linalg.LinAlgError) as exc:
        logger.warning("[HARNESS] seed=%d setup failed: %s", seed, exc)
        failures = tuple(ReplicateFailure(seed, s.value, type(exc).__name__, str(exc)) for s in config.strategies)
        return ReplicateResult(seed, (), (), (), failures)

    trajectories, rounds, components, failures = [], [], [], []
    for strategy in config.strategies:
        try:
            trajectory = run_strategy(strategy, scenario, sim, norm_est, config, seed)
        except (InstrumentSelectionError, np.linalg.LinAlgError) as exc:
            logger.warning("[HARNESS] seed=%d strategy=%s failed: %s", seed, strategy.value, exc)
            failures.append(ReplicateFailure(seed, strategy.value, type(exc).__name__, str(exc)))
            continue
        trajectories.append(trajectory)
        rounds.extend(trajectory_rows(trajectory, scenario, horizon(strategy, config), norm_est.value))
        components.extend(component_rows(trajectory, scenario))
    return ReplicateResult(seed, tuple(trajectories), tuple(rounds), tuple(components), tuple(failures))


def _collect(config: RunConfig) -> List[ReplicateResult]:
    if config.workers <= 1 or config.n_runs == 1:
        return [run_replicate(config, r) for r in range(config.n_runs)]
    results = []
    with ProcessPoolExecutor(max_workers=config.workers) as executor:
        futures = [executor.submit(run_replicate, config, r) for r in range(config.n_runs)]
        for future in as_completed(futures):
            results.append(future.result())
    return results


def run_sweep(config: RunConfig, write: bool = True) -> SweepResult:
    """Run every replicate of ``config`` and, by default, write the output files."""
    logger.info("[HARNESS] Sweep: %d replicate(s) x %s, workers=%d", config.n_runs,
                [s.value for s in config.strategies], config.workers)
    results = sorted(_collect(config), key=lambda r: r.seed)
    trajectories = sorted((t for r in results for t in r.trajectories), key=lambda t: (t.strategy.value, t.seed))
    rounds = rounds_frame([row for r in results for row in r.rounds])
    components = components_frame([row for r in results for row in r.components])
    failures = [f for r in results for f in r.failures]
    result = SweepResult(
        config=config,
        trajectories=trajectories,
        rounds=rounds,
        components=components,
        report=aggregate(rounds) if len(rounds) else [],
        failures=failures,
    )

    if failures:
        level = logging.ERROR if result.failure_rate > FAILURE_THRESHOLD else logging.WARNING
        logger.log(level, "[HARNESS] %d of %d replicate run(s) failed (%.1f%%)", len(failures),
                   result.n_attempted, 100 * result.failure_rate)
    if write:
        write_outputs(result, config.output_dir)
    return result


def _write_json(data: Any, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return path


def write_outputs(result: SweepResult, output_dir: Union[str, Path]) -> List[Path]:
    output_dir = Path(output_dir)
    return [
        write_csv(result.rounds, output_dir / "rounds.csv"),
        write_csv(summary_frame(result.report), output_dir / "summary.csv"),
        write_csv(result.components, output_dir / "components.csv"),
        _write_json([t.to_dict() for t in result.trajectories], output_dir / "trajectories.json"),
        _write_json([f.to_dict() for f in result.failures], output_dir / "failures.json"),
    ]


def design_subsets(design: str, d_z: int) -> List[Tuple[int, ...]]:
    """Instrument sets of one finite-sample design over instruments ``0..d_z-1``."""
    if design == "all_at_once":
        return [tuple(range(d_z))]
    if design == "split_two":
        return [tuple(range(d_z - 1)), (d_z - 1,)]
    if design == "singletons":
        return [(i,) for i in range(d_z)]
    raise ValueError(f"unknown design {design!r}; choose from {list(FINITE_SAMPLE_DESIGNS)}")


@dataclass(frozen=True)
class FiniteSampleRow:
    """Distribution of one extended component (0 is the offset) under one design."""
    estimator: str
    component: int
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    p10: float
    p90: float
    truth: float
    std_error: float


@dataclass(eq=False)
class FiniteSampleResult:
    scenario: Scenario
    n: int
    estimates: Dict[str, np.ndarray]
    std_errors: np.ndarray
    rows: List[FiniteSampleRow]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=FINITE_SAMPLE_COLUMNS)

    def row(self, estimator: str, component: int) -> FiniteSampleRow:
        return next(r for r in self.rows if r.estimator == estimator and r.component == component)


def finite_sample_study(d_x: int, d_z: int, n: int, n_runs: int, seed: int, noiseless: bool = False,
                        designs: Sequence[str] = FINITE_SAMPLE_DESIGNS) -> FiniteSampleResult:
    """Compare one joint experiment against combined split experiments.

    The scenario is fixed by ``seed``; each run draws fresh data for every
    experiment. ``std_error`` averages the joint experiment's standard
    errors over runs.
    """
    if d_z > d_x:
        raise InvalidDimensionsError(f"finite-sample study needs d_z <= d_x, got d_z={d_z}, d_x={d_x}")
    if d_z < 2:
        raise InvalidDimensionsError(f"finite-sample study needs d_z >= 2 to split instruments, got {d_z}")
    if n_runs < 1:
        raise ValueError(f"n_runs must be positive, got {n_runs}")

    scenario = generate_scenario(d_z, d_x, d_z, seed)
    if noiseless:
        scenario = scenario.without_confounding()
    run_seeds = make_rng(seed, Stream.FINITE_SAMPLE).integers(0, 2**32, size=n_runs)
    truth = np.concatenate(([0.0], scenario.beta))
    estimates = {design: np.empty((n_runs, d_x + 1)) for design in designs}
    std_errors = np.empty((n_runs, d_x + 1))

    for r, run_seed in enumerate(run_seeds.tolist()):
        for k, design in enumerate(designs):
            rounds = []
            for j, subset in enumerate(design_subsets(design, d_z)):
                dataset = run_experiment(scenario, subset, n, run_seed, stream_key=k * d_z + j)
                rounds.append(estimate_projection(dataset))
            estimates[design][r] = RunningEstimate.from_estimates(rounds).with_offset()
            if design == "all_at_once":
                joint = rounds[0]
                std_errors[r] = np.concatenate(([math.sqrt(joint.var_eps_y / joint.n)], joint.standard_errors()))
        if (r + 1) % 100 == 0:
            logger.info("[HARNESS] finite-sample run %d/%d", r + 1, n_runs)

    mean_se = std_errors.mean(axis=0) if "all_at_once" in designs else np.full(d_x + 1, np.nan)
    rows = []
    for design in designs:
        for component in range(d_x + 1):
            stats = ReportRow.from_values(design, 0, f"component_{component}", estimates[design][:, component])
            rows.append(FiniteSampleRow(
                estimator=design,
                component=component,
                count=stats.count,
                mean=stats.mean,
                median=stats.median,
                q1=stats.q1,
                q3=stats.q3,
                p10=stats.p10,
                p90=stats.p90,
                truth=float(truth[component]),
                std_error=float(mean_se[component]),
            ))
    return FiniteSampleResult(scenario=scenario, n=n, estimates=estimates, std_errors=std_errors, rows=rows)
