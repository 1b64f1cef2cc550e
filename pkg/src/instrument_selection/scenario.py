"""Synthetic ground-truth scenarios and instrument similarities.

A scenario is the simulated world: instrument effects ``alpha`` (one row per
instrument), a sparse causal effect ``beta`` that lies in the span of the
first ``d_id`` instruments, and the confounder mixing ``M`` / direction ``v``
through which a shared latent noise enters both treatments and outcome.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import InvalidDimensionsError, InvalidInstrumentSetError, ZeroRowError
from .rng import Stream, make_rng

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
SPAN_TOL = 1e-8
UNIT_NORM_TOL = 1e-12
ZERO_ROW_TOL = 1e-12
MAX_RETRIES = 100
EFFECT_BOUND = 5.0


def _frozen(array: Any, ndim: int) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    if out.ndim != ndim:
        raise InvalidDimensionsError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.flags.writeable = False
    return out


def project_onto_rows(rows: np.ndarray, vector: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projection of ``vector`` onto the row span of ``rows``."""
    if rows.size == 0:
        return np.zeros_like(vector)
    basis = scipy.linalg.orth(rows.T, rcond=tol)
    return basis @ (basis.T @ vector)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Ground-truth structural parameters of one simulated world."""
    n_iv: int
    d_x: int
    d_id: int
    alpha: np.ndarray
    beta: np.ndarray
    mixing: np.ndarray
    conf_dir: np.ndarray
    seed: int
    cluster_centers: Tuple[int, ...] = ()
    cluster_assignment: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen(self.alpha, 2))
        object.__setattr__(self, "beta", _frozen(self.beta, 1))
        object.__setattr__(self, "mixing", _frozen(self.mixing, 2))
        object.__setattr__(self, "conf_dir", _frozen(self.conf_dir, 1))
        object.__setattr__(self, "cluster_centers", tuple(int(c) for c in self.cluster_centers))
        object.__setattr__(self, "cluster_assignment", tuple(int(c) for c in self.cluster_assignment))
        if self.alpha.shape != (self.n_iv, self.d_x):
            raise InvalidDimensionsError(f"alpha has shape {self.alpha.shape}, expected {(self.n_iv, self.d_x)}")
        if self.beta.shape != (self.d_x,) or self.conf_dir.shape != (self.d_x,):
            raise InvalidDimensionsError("beta and conf_dir must have length d_x")
        if self.mixing.shape != (self.d_x, self.d_x):
            raise InvalidDimensionsError(f"mixing has shape {self.mixing.shape}, expected {(self.d_x, self.d_x)}")

    @property
    def support(self) -> np.ndarray:
        """Coordinates where beta is nonzero."""
        return np.flatnonzero(self.beta)

    @property
    def is_noiseless(self) -> bool:
        return not np.any(self.mixing) and not np.any(self.conf_dir)

    def instrument_rows(self, instrument_set: Sequence[int]) -> np.ndarray:
        indices = validate_instrument_set(instrument_set, self.n_iv)
        return self.alpha[list(indices)]

    def true_projection(self, instrument_set: Sequence[int]) -> np.ndarray:
        """``P_{alpha_S} beta`` for the instruments in ``instrument_set``."""
        return project_onto_rows(self.instrument_rows(instrument_set), self.beta)

    def without_confounding(self) -> "Scenario":
        """Noiseless variant with ``M = 0`` and ``v = 0``."""
        return replace(self, mixing=np.zeros_like(self.mixing), conf_dir=np.zeros_like(self.conf_dir))

    def check_invariants(self) -> None:
        """Raise ``InvalidDimensionsError`` when a scenario invariant fails."""
        if not 1 <= self.d_id <= min(self.n_iv, self.d_x):
            raise InvalidDimensionsError(f"d_id={self.d_id} outside [1, min(n_iv, d_x)]")
        residual = self.beta - project_onto_rows(self.alpha[: self.d_id], self.beta)
        if np.linalg.norm(residual) >= SPAN_TOL:
            raise InvalidDimensionsError(f"beta not in span of the first d_id rows (residual {np.linalg.norm(residual):.3e})")
        dir_norm = np.linalg.norm(self.conf_dir)
        if abs(dir_norm - 1.0) > UNIT_NORM_TOL and not (dir_norm == 0.0 and self.is_noiseless):
            raise InvalidDimensionsError(f"conf_dir has norm {dir_norm!r}, expected 1")
        if np.count_nonzero(self.beta) != self.d_id:
            raise InvalidDimensionsError("beta must have exactly d_id nonzero coordinates")
        off_support = np.ones(self.d_x, dtype=bool)
        off_support[self.support] = False
        if np.any(self.alpha[: self.d_id][:, off_support]):
            raise InvalidDimensionsError("identifying instruments must be supported on beta's support")
        rank = np.linalg.matrix_rank(self.alpha, tol=RANK_TOL)
        if rank != min(self.n_iv, self.d_x):
            raise InvalidDimensionsError(f"rank(alpha)={rank}, expected {min(self.n_iv, self.d_x)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_iv": self.n_iv,
            "d_x": self.d_x,
            "d_id": self.d_id,
            "seed": self.seed,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "mixing": self.mixing.tolist(),
            "conf_dir": self.conf_dir.tolist(),
            "cluster_centers": list(self.cluster_centers),
            "cluster_assignment": list(self.cluster_assignment),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        try:
            return cls(
                n_iv=int(data["n_iv"]),
                d_x=int(data["d_x"]),
                d_id=int(data["d_id"]),
                alpha=data["alpha"],
                beta=data["beta"],
                mixing=data["mixing"],
                conf_dir=data["conf_dir"],
                seed=int(data["seed"]),
                cluster_centers=tuple(data.get("cluster_centers", ())),
                cluster_assignment=tuple(data.get("cluster_assignment", ())),
            )
        except KeyError as exc:
            raise InvalidDimensionsError(f"scenario document is missing field {exc}") from exc

    def to_json(self, indent: Optional[int] = None) -> str:
        # json writes floats with repr, which round-trips binary64 exactly
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Symmetric, unit-diagonal pairwise instrument similarities in [0, 1]."""
    sim: np.ndarray

    def __post_init__(self):
        sim = _frozen(self.sim, 2)
        if sim.shape[0] != sim.shape[1]:
            raise InvalidDimensionsError(f"similarity matrix must be square, got {sim.shape}")
        if not np.array_equal(sim, sim.T):
            raise InvalidDimensionsError("similarity matrix must be exactly symmetric")
        if not np.all(np.diag(sim) == 1.0):
            raise InvalidDimensionsError("similarity matrix must have a unit diagonal")
        if np.any(sim < 0.0) or np.any(sim > 1.0):
            raise InvalidDimensionsError("similarities must lie in [0, 1]")
        object.__setattr__(self, "sim", sim)

    @property
    def n_iv(self) -> int:
        return self.sim.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"sim": self.sim.tolist()}


def validate_instrument_set(instrument_set: Sequence[int], n_iv: int) -> Tuple[int, ...]:
    indices = tuple(int(i) for i in instrument_set)
    if not indices:
        raise InvalidInstrumentSetError("instrument set is empty")
    if len(set(indices)) != len(indices):
        raise InvalidInstrumentSetError(f"instrument set {list(indices)} has duplicates")
    bad = [i for i in indices if not 0 <= i < n_iv]
    if bad:
        raise InvalidInstrumentSetError(f"instrument indices {bad} outside [0, {n_iv})")
    return indices


def generate_scenario(n_iv: int, d_x: int, d_id: int, seed: int) -> Scenario:
    """Sample a scenario whose ``beta`` is identified by the first ``d_id`` instruments.

    Extra instruments are noisy copies of one of two cluster centers drawn
    from the identifying ones. Draws are rejected until ``alpha`` has full
    rank.
    """
    if min(n_iv, d_x, d_id) < 1:
        raise InvalidDimensionsError(f"dimensions must be positive, got n_iv={n_iv}, d_x={d_x}, d_id={d_id}")
    if d_id > min(n_iv, d_x):
        raise InvalidDimensionsError(f"d_id={d_id} exceeds min(n_iv, d_x)={min(n_iv, d_x)}")
    if d_id < 2:
        raise InvalidDimensionsError("d_id must be at least 2 to pick two cluster centers")
    if seed < 0:
        raise InvalidDimensionsError(f"seed must be non-negative, got {seed}")

    rng = make_rng(seed, Stream.SCENARIO)
    target_rank = min(n_iv, d_x)
    n_extra = n_iv - d_id
    for attempt in range(MAX_RETRIES):
        beta = np.zeros(d_x)
        beta[:d_id] = rng.uniform(-EFFECT_BOUND, EFFECT_BOUND, size=d_id)
        alpha = np.zeros((n_iv, d_x))
        alpha[:d_id, :d_id] = rng.uniform(-EFFECT_BOUND, EFFECT_BOUND, size=(d_id, d_id))
        centers = rng.choice(d_id, size=2, replace=False)
        assignment = centers[rng.integers(0, 2, size=n_extra)]
        alpha[d_id:] = alpha[assignment] + rng.standard_normal((n_extra, d_x))
        mixing = rng.standard_normal((d_x, d_x))
        direction = rng.standard_normal(d_x)
        conf_dir = direction / np.linalg.norm(direction)

        full_rank = np.linalg.matrix_rank(alpha, tol=RANK_TOL) == target_rank
        identifying = np.linalg.matrix_rank(alpha[:d_id], tol=RANK_TOL) == d_id
        if full_rank and identifying and np.all(beta[:d_id] != 0.0):
            logger.debug("[SCENARIO] seed=%d accepted after %d attempt(s)", seed, attempt + 1)
            return Scenario(
                n_iv=n_iv,
                d_x=d_x,
                d_id=d_id,
                alpha=alpha,
                beta=beta,
                mixing=mixing,
                conf_dir=conf_dir,
                seed=seed,
                cluster_centers=tuple(centers.tolist()),
                cluster_assignment=tuple(assignment.tolist()),
            )
        logger.warning("[SCENARIO] seed=%d attempt %d rank deficient, redrawing", seed, attempt + 1)
    raise InvalidDimensionsError(f"no full-rank scenario after {MAX_RETRIES} draws (seed={seed})")


def similarities_from_features(features: np.ndarray) -> SimilarityMatrix:
    """Absolute cosine similarity between the rows of ``features``."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms < ZERO_ROW_TOL):
        raise ZeroRowError(f"rows {np.flatnonzero(norms < ZERO_ROW_TOL).tolist()} have zero norm")
    unit = features / norms[:, None]
    cosine = np.clip(np.abs(unit @ unit.T), 0.0, 1.0)
    # each unordered pair is read once from the upper triangle
    upper = np.triu(cosine, k=1)
    sim = upper + upper.T
    np.fill_diagonal(sim, 1.0)
    return SimilarityMatrix(sim)


def compute_similarities(scenario: Scenario, noise_sd: float, seed: int) -> SimilarityMatrix:
    """Similarities computed on ``alpha`` perturbed by ``noise_sd`` Gaussian noise."""
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be non-negative, got {noise_sd}")
    if noise_sd == 0:
        return similarities_from_features(scenario.alpha)
    for attempt in range(MAX_RETRIES):
        rng = make_rng(seed, Stream.SIMILARITY, attempt)
        noisy = scenario.alpha + noise_sd * rng.standard_normal(scenario.alpha.shape)
        try:
            return similarities_from_features(noisy)
        except ZeroRowError:
            logger.warning("[SCENARIO] noisy similarity features had a zero row, redrawing (attempt %d)", attempt + 1)
    raise ZeroRowError(f"noisy features kept producing zero rows after {MAX_RETRIES} draws")
