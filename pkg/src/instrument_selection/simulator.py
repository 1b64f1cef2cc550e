"""Randomized and observational experiments against a scenario.

Samples follow ``X = Z alpha_S + e M`` and ``Y = X beta + e v`` with
Rademacher instruments ``Z`` and a standard Gaussian latent confounder ``e``.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import InsufficientSamplesError, InvalidDimensionsError
from .rng import Stream, make_rng
from .scenario import Scenario, validate_instrument_set

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sample matrices of one experiment."""
    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    instrument_set: Tuple[int, ...]
    latent: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("z", "x", "y"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.flags.writeable = False
            object.__setattr__(self, name, array)
        object.__setattr__(self, "instrument_set", tuple(int(i) for i in self.instrument_set))
        if self.z.ndim != 2 or self.x.ndim != 2 or self.y.ndim != 1:
            raise InvalidDimensionsError("z and x must be matrices and y a vector")
        if not (self.z.shape[0] == self.x.shape[0] == self.y.shape[0]):
            raise InvalidDimensionsError(
                f"row counts disagree: z={self.z.shape[0]}, x={self.x.shape[0]}, y={self.y.shape[0]}"
            )
        if self.z.shape[1] != len(self.instrument_set):
            raise InvalidDimensionsError("z must have one column per instrument")
        if self.instrument_set and not np.all(np.abs(self.z) == 1.0):
            raise InvalidDimensionsError("randomized instruments must take values in {-1, +1}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_z(self) -> int:
        return self.z.shape[1]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def is_observational(self) -> bool:
        return not self.instrument_set

    def to_frame(self) -> pd.DataFrame:
        columns = {f"z_{j + 1}": self.z[:, j] for j in range(self.d_z)}
        columns.update({f"x_{k + 1}": self.x[:, k] for k in range(self.d_x)})
        columns["y"] = self.y
        return pd.DataFrame(columns)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, encoding="utf-8")
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instrument_set": list(self.instrument_set),
            "z": self.z.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
        }


def run_experiment(
    scenario: Scenario,
    instrument_set: Sequence[int],
    n: int,
    seed: int,
    *,
    stream_key: int = 0,
    return_latent: bool = False,
) -> Dataset:
    """Randomize ``instrument_set`` over ``n`` samples.

    ``stream_key`` separates experiments that share a seed (e.g. rounds of
    one sequential run). ``return_latent`` exposes ``e`` for exogeneity tests.
    """
    indices = validate_instrument_set(instrument_set, scenario.n_iv)
    if n < len(indices) + 2:
        raise InsufficientSamplesError(f"n={n} too small for {len(indices)} instruments (need >= {len(indices) + 2})")
    rng = make_rng(seed, Stream.EXPERIMENT, stream_key)
    z = 2.0 * rng.integers(0, 2, size=(n, len(indices))) - 1.0
    latent = rng.standard_normal((n, scenario.d_x))
    x = z @ scenario.alpha[list(indices)] + latent @ scenario.mixing
    y = x @ scenario.beta + latent @ scenario.conf_dir
    logger.debug("[SIMULATOR] experiment with instruments %s, n=%d", list(indices), n)
    return Dataset(z=z, x=x, y=y, instrument_set=indices, latent=latent if return_latent else None)


def observational_data(
    scenario: Scenario,
    n: int,
    seed: int,
    *,
    return_latent: bool = False,
) -> Dataset:
    """Passive samples with every instrument held at zero."""
    if n < 2:
        raise InsufficientSamplesError(f"observational data needs n >= 2, got {n}")
    rng = make_rng(seed, Stream.OBSERVATIONAL)
    latent = rng.standard_normal((n, scenario.d_x))
    x = latent @ scenario.mixing
    y = x @ scenario.beta + latent @ scenario.conf_dir
    return Dataset(z=np.zeros((n, 0)), x=x, y=y, instrument_set=(), latent=latent if return_latent else None)
