"""Combining projected estimates across experiments.

The combined estimate is the minimum-norm vector whose projection onto every
experiment's instrumented subspace reproduces that experiment's estimate,
i.e. the least-squares solution ``A^+ b`` of the stacked system of projectors.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import CoordinateOutOfRangeError, DimensionMismatchError
from .estimation import ProjectedEstimate

logger = logging.getLogger(__name__)

BASIS_TOL = 1e-10
ZERO_PROJECTION_TOL = 1e-12
DEFAULT_DELTA = 0.3


def combine(estimates: Sequence[ProjectedEstimate]) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(combined, combined_basis)`` for a nonempty list of estimates."""
    if not estimates:
        raise DimensionMismatchError("cannot combine an empty list of estimates")
    d_x = estimates[0].d_x
    mismatched = [i for i, est in enumerate(estimates) if est.d_x != d_x]
    if mismatched:
        raise DimensionMismatchError(f"estimates {mismatched} do not have d_x={d_x}")

    stacked = np.vstack([est.projector() for est in estimates])
    targets = np.concatenate([est.beta_hat for est in estimates])
    combined, _, rank, _ = scipy.linalg.lstsq(stacked, targets, cond=BASIS_TOL)
    combined_basis = scipy.linalg.orth(np.hstack([est.basis for est in estimates]), rcond=BASIS_TOL)
    logger.debug("[COMBINE] %d estimate(s), union rank %d, stacked rank %d", len(estimates),
                 combined_basis.shape[1], rank)
    return combined, combined_basis


def coordinate_distances(combined_basis: np.ndarray) -> np.ndarray:
    """``identification_distance`` for every coordinate at once."""
    combined_basis = np.asarray(combined_basis, dtype=np.float64)
    projected = combined_basis @ combined_basis.T  # column i is V V^T e_i
    norms = np.linalg.norm(projected, axis=0)
    distances = np.ones(projected.shape[0])
    visible = norms >= ZERO_PROJECTION_TOL
    distances[visible] = 1.0 - np.abs(np.diag(projected)[visible]) / norms[visible]
    return np.clip(distances, 0.0, 1.0)


def identification_distance(combined_basis: np.ndarray, coordinate: int) -> float:
    """``1 - |cos|`` between ``e_i`` and its projection onto the union subspace."""
    combined_basis = np.asarray(combined_basis, dtype=np.float64)
    d_x = combined_basis.shape[0]
    if not 0 <= coordinate < d_x:
        raise CoordinateOutOfRangeError(f"coordinate {coordinate} outside [0, {d_x})")
    projected = combined_basis @ combined_basis[coordinate]
    norm = np.linalg.norm(projected)
    if norm < ZERO_PROJECTION_TOL:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - abs(projected[coordinate]) / norm)))


def identified_fraction(combined_basis: np.ndarray, delta: float) -> float:
    """Share of coordinates whose identification distance is below ``delta``."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return float(np.mean(coordinate_distances(combined_basis) < delta))


def error_bound(beta_norm_estimate: float, combined: np.ndarray) -> float:
    """Uniform bound on every unidentified component, clamped at zero."""
    radicand = beta_norm_estimate ** 2 - float(np.dot(combined, combined))
    return math.sqrt(max(0.0, radicand))


@dataclass(frozen=True, eq=False)
class RunningEstimate:
    """Accumulated state after some rounds; replaced, never mutated."""
    rounds: Tuple[ProjectedEstimate, ...]
    combined: np.ndarray
    combined_basis: np.ndarray
    per_coordinate_cdist: np.ndarray
    delta: float = DEFAULT_DELTA
    offset: float = 0.0
    fully_identified: bool = False

    @classmethod
    def from_estimates(cls, estimates: Sequence[ProjectedEstimate], delta: float = DEFAULT_DELTA) -> "RunningEstimate":
        combined, combined_basis = combine(estimates)
        weights = np.array([est.n for est in estimates], dtype=np.float64)
        intercepts = np.array([est.intercept for est in estimates])
        return cls(
            rounds=tuple(estimates),
            combined=combined,
            combined_basis=combined_basis,
            per_coordinate_cdist=coordinate_distances(combined_basis),
            delta=delta,
            offset=float(weights @ intercepts / weights.sum()),
        )

    def extend(self, estimate: ProjectedEstimate) -> "RunningEstimate":
        return RunningEstimate.from_estimates(self.rounds + (estimate,), self.delta)

    def mark_fully_identified(self) -> "RunningEstimate":
        return replace(self, fully_identified=True)

    @property
    def d_x(self) -> int:
        return self.combined.shape[0]

    @property
    def combined_norm(self) -> float:
        return float(np.linalg.norm(self.combined))

    @property
    def identified(self) -> FrozenSet[int]:
        if self.fully_identified:
            return frozenset(range(self.d_x))
        return frozenset(np.flatnonzero(self.per_coordinate_cdist < self.delta).tolist())

    @property
    def identified_fraction(self) -> float:
        return len(self.identified) / self.d_x

    def with_offset(self) -> np.ndarray:
        return np.concatenate(([self.offset], self.combined))

    def to_round_dict(self, round_number: int, beta_norm_estimate: Optional[float] = None) -> Dict[str, Any]:
        return {
            "round": round_number,
            "instrument_set": list(self.rounds[-1].instrument_set),
            "combined": self.combined.tolist(),
            "combined_norm": self.combined_norm,
            "identified_indices": sorted(self.identified),
            "per_coordinate_cdist": self.per_coordinate_cdist.tolist(),
            "error_bound": None if beta_norm_estimate is None else error_bound(beta_norm_estimate, self.combined),
            "offset": self.offset,
        }
