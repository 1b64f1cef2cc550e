"""Per-round metrics, aggregation and CSV emission for sweeps."""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .combination import error_bound
from .errors import ResultsFileError
from .scenario import Scenario
from .selection import SisTrajectory

logger = logging.getLogger(__name__)

ROUND_COLUMNS = [
    "run_seed",
    "strategy",
    "round",
    "chosen_instruments",
    "combined_norm",
    "norm_estimate",
    "mse_nonzero",
    "identified_fraction",
    "error_bound",
    "stopped",
    "mse_full",
    "subset_size",
]
SUMMARY_COLUMNS = ["strategy", "round", "metric", "count", "mean", "median", "q1", "q3", "p10", "p90"]
COMPONENT_COLUMNS = ["run_seed", "strategy", "component", "estimate", "truth", "cdist"]
SUMMARY_METRICS = ["mse_nonzero", "mse_full", "identified_fraction", "combined_norm", "error_bound"]
SORT_KEYS = ["strategy", "run_seed", "round"]


@dataclass(frozen=True)
class ReportRow:
    """Distribution of one metric over replicates."""
    strategy: str
    round: int
    metric: str
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    p10: float
    p90: float

    @classmethod
    def from_values(cls, strategy: str, round_number: int, metric: str, values: Iterable[float]) -> "ReportRow":
        data = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=np.float64)
        if data.size == 0:
            nan = float("nan")
            return cls(strategy, round_number, metric, 0, nan, nan, nan, nan, nan, nan)
        p10, q1, median, q3, p90 = np.percentile(data, [10, 25, 50, 75, 90])
        return cls(strategy, round_number, metric, int(data.size), float(data.mean()), float(median),
                   float(q1), float(q3), float(p10), float(p90))


def _mse(estimate: np.ndarray, truth: np.ndarray) -> float:
    if truth.size == 0:
        return 0.0
    return float(np.mean((estimate - truth) ** 2))


def trajectory_rows(trajectory: SisTrajectory, scenario: Scenario, horizon: Optional[int] = None,
                    norm_value: Optional[float] = None) -> List[Dict[str, Any]]:
    """Rounds ``1..horizon`` of a trajectory, forward-filled past its last round.

    ``norm_value`` overrides the trajectory's own norm estimate for the
    ``norm_estimate`` and ``error_bound`` columns.
    """
    if norm_value is None and trajectory.norm_estimate is not None:
        norm_value = trajectory.norm_estimate.value
    horizon = trajectory.n_rounds if horizon is None else max(horizon, trajectory.n_rounds)
    support = scenario.support
    rows = []
    for round_number in range(1, horizon + 1):
        filled = round_number > trajectory.n_rounds
        state = trajectory.running[min(round_number, trajectory.n_rounds) - 1]
        chosen = () if filled else trajectory.chosen_sets[round_number - 1]
        stopped = trajectory.stop_round is not None and round_number >= trajectory.stop_round
        rows.append({
            "run_seed": trajectory.seed,
            "strategy": trajectory.strategy.value,
            "round": round_number,
            "chosen_instruments": ";".join(str(i) for i in chosen),
            "combined_norm": state.combined_norm,
            "norm_estimate": float("nan") if norm_value is None else norm_value,
            "mse_nonzero": _mse(state.combined[support], scenario.beta[support]),
            "identified_fraction": state.identified_fraction,
            "error_bound": float("nan") if norm_value is None else error_bound(norm_value, state.combined),
            "stopped": stopped,
            "mse_full": _mse(state.combined, scenario.beta),
            "subset_size": len(chosen),
        })
    return rows


def component_rows(trajectory: SisTrajectory, scenario: Scenario) -> List[Dict[str, Any]]:
    """Final-round estimates of the nonzero components of ``beta``."""
    final = trajectory.final
    return [
        {
            "run_seed": trajectory.seed,
            "strategy": trajectory.strategy.value,
            "component": int(i),
            "estimate": float(final.combined[i]),
            "truth": float(scenario.beta[i]),
            "cdist": float(final.per_coordinate_cdist[i]),
        }
        for i in scenario.support
    ]


def rounds_frame(rows: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=ROUND_COLUMNS)
    return frame.sort_values(SORT_KEYS, kind="mergesort", ignore_index=True)


def components_frame(rows: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=COMPONENT_COLUMNS)
    return frame.sort_values(["strategy", "run_seed", "component"], kind="mergesort", ignore_index=True)


def aggregate(rounds: pd.DataFrame, metrics: Sequence[str] = SUMMARY_METRICS) -> List[ReportRow]:
    """One ``ReportRow`` per (strategy, round, metric)."""
    report = []
    for (strategy, round_number), group in rounds.groupby(["strategy", "round"], sort=True):
        for metric in metrics:
            report.append(ReportRow.from_values(str(strategy), int(round_number), metric,
                                                group[metric].astype(float).tolist()))
    return report


def summary_frame(report: Sequence[ReportRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in report], columns=SUMMARY_COLUMNS)


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    logger.info("[HARNESS] Wrote %d row(s) to %s", len(frame), path)
    return path


def read_rounds(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype={"chosen_instruments": str}, keep_default_na=False,
                            na_values=[""])
    except OSError as exc:
        raise OSError(f"failed to read {path}: {exc}") from exc
    except ValueError as exc:
        raise ResultsFileError(f"{path} is not a readable CSV: {exc}") from exc
    missing = [c for c in ROUND_COLUMNS if c not in frame.columns]
    if missing:
        raise ResultsFileError(f"{path} lacks columns {missing}")
    return frame[ROUND_COLUMNS].fillna({"chosen_instruments": ""})
