"""Single-experiment estimators.

``estimate_projection`` is two-stage least squares with a pseudoinverse in
the second stage. With fewer instruments than treatments it consistently
estimates the orthogonal projection of ``beta`` onto the instrumented
subspace ``im(alpha_S^T)``, and returns an orthonormal basis of that
subspace together with an asymptotic covariance.

Both stages fit an intercept. The second stage is solved on centered data,
which is the same fit by Frisch-Waugh, and the intercept is recovered from
the means.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    InvalidInstrumentSetError,
    RankZeroError,
    SingularMatrixError,
)
from .simulator import Dataset

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-8
FULL_ROW_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProjectedEstimate:
    """Output of one experiment's projection estimator."""
    beta_hat: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    cov: np.ndarray
    instrument_set: Tuple[int, ...]
    n: int
    intercept: float = 0.0
    var_eps_y: float = 0.0

    def __post_init__(self):
        for name in ("beta_hat", "basis", "singular_values", "cov"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.flags.writeable = False
            object.__setattr__(self, name, array)
        object.__setattr__(self, "instrument_set", tuple(int(i) for i in self.instrument_set))
        d_x = self.beta_hat.shape[0]
        if self.basis.ndim != 2 or self.basis.shape[0] != d_x:
            raise DimensionMismatchError(f"basis has shape {self.basis.shape}, expected ({d_x}, r)")
        if self.singular_values.shape != (self.basis.shape[1],):
            raise DimensionMismatchError("one singular value per basis column is required")
        if self.cov.shape != (d_x, d_x):
            raise DimensionMismatchError(f"cov has shape {self.cov.shape}, expected {(d_x, d_x)}")

    @property
    def d_x(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def with_offset(self) -> np.ndarray:
        """``[intercept, beta_hat...]``; component 0 is the offset."""
        return np.concatenate(([self.intercept], self.beta_hat))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta_hat": self.beta_hat.tolist(),
            # column-major: one list per basis vector
            "basis": self.basis.T.tolist(),
            "singular_values": self.singular_values.tolist(),
            "cov": self.cov.tolist(),
            "instrument_set": list(self.instrument_set),
            "n": self.n,
            "intercept": self.intercept,
            "var_eps_y": self.var_eps_y,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProjectedEstimate":
        d_x = len(data["beta_hat"])
        basis = np.array(data["basis"], dtype=np.float64).reshape(-1, d_x).T
        return cls(
            beta_hat=data["beta_hat"],
            basis=basis,
            singular_values=data["singular_values"],
            cov=data["cov"],
            instrument_set=tuple(data["instrument_set"]),
            n=int(data["n"]),
            intercept=float(data.get("intercept", 0.0)),
            var_eps_y=float(data.get("var_eps_y", 0.0)),
        )


def _with_intercept(matrix: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((matrix.shape[0], 1)), matrix])


def estimate_covariance(alpha_hat: np.ndarray, n: int, var_eps_y: float, z_cov: np.ndarray) -> np.ndarray:
    """Asymptotic covariance ``(1/n) alpha^+ z_cov^{-1} (alpha^T)^+ Var[eps_Y]``."""
    alpha_hat = np.atleast_2d(np.asarray(alpha_hat, dtype=np.float64))
    z_cov = np.atleast_2d(np.asarray(z_cov, dtype=np.float64))
    d_z = alpha_hat.shape[0]
    if z_cov.shape != (d_z, d_z):
        raise DimensionMismatchError(f"z_cov has shape {z_cov.shape}, expected {(d_z, d_z)}")
    if n < 1:
        raise InsufficientSamplesError(f"n must be positive, got {n}")
    if var_eps_y < 0:
        raise ValueError(f"var_eps_y must be non-negative, got {var_eps_y}")
    singular = scipy.linalg.svdvals(alpha_hat)
    if d_z > alpha_hat.shape[1] or singular.size < d_z or singular[-1] <= FULL_ROW_RANK_TOL * max(singular[0], 1.0):
        raise SingularMatrixError("alpha_hat must have full row rank")
    if not np.allclose(z_cov, z_cov.T):
        raise SingularMatrixError("z_cov must be symmetric")
    try:
        factor = scipy.linalg.cho_factor(z_cov)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("z_cov is not positive definite") from exc
    pinv = scipy.linalg.pinv(alpha_hat)
    cov = (pinv @ scipy.linalg.cho_solve(factor, pinv.T)) * (var_eps_y / n)
    return 0.5 * (cov + cov.T)


def estimate_projection(dataset: Dataset, rank_tol: float = DEFAULT_RANK_TOL) -> ProjectedEstimate:
    """Projection of ``beta`` onto the instrumented subspace of one experiment.

    At ``n = d_z + 1`` the first stage interpolates and no residual degrees of
    freedom remain: ``var_eps_y`` and ``cov`` are then NaN while ``beta_hat``
    is still returned.
    """
    if dataset.is_observational:
        raise InvalidInstrumentSetError("projection estimation needs at least one randomized instrument")
    n, d_z = dataset.n, dataset.d_z
    if n <= d_z:
        raise InsufficientSamplesError(f"n={n} too small for {d_z} instruments, need n > {d_z}")

    design = _with_intercept(dataset.z)
    coef, _, design_rank, _ = scipy.linalg.lstsq(design, dataset.x)
    x_hat = design @ coef
    alpha_hat = coef[1:]

    x_mean = x_hat.mean(axis=0)
    y_mean = dataset.y.mean()
    u, s, vt = scipy.linalg.svd(x_hat - x_mean, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise RankZeroError(f"first stage of instruments {list(dataset.instrument_set)} is identically zero")
    rank = int(np.count_nonzero(s > rank_tol * s[0]))
    if rank == 0:
        raise RankZeroError(f"no singular value of the first stage exceeds {rank_tol} relative tolerance")

    basis = vt[:rank].T
    beta_hat = basis @ ((u[:, :rank].T @ (dataset.y - y_mean)) / s[:rank])
    intercept = float(y_mean - x_mean @ beta_hat)

    residual = dataset.y - intercept - x_hat @ beta_hat
    dof = n - d_z - 1
    var_eps_y = float(residual @ residual) / dof if dof > 0 else math.nan

    if dof == 0:
        cov = np.full((dataset.d_x, dataset.d_x), math.nan)
    elif rank == d_z and design_rank == d_z + 1:
        z_centered = dataset.z - dataset.z.mean(axis=0)
        cov = estimate_covariance(alpha_hat, n, var_eps_y, z_centered.T @ z_centered / n)
    else:
        # (X_hat^T X_hat)^+ restricted to rank r, via the SVD already at hand
        cov = (basis / s[:rank] ** 2) @ basis.T * var_eps_y

    logger.debug("[ESTIMATION] instruments=%s rank=%d |beta_hat|=%.6g", list(dataset.instrument_set), rank,
                 np.linalg.norm(beta_hat))
    return ProjectedEstimate(
        beta_hat=beta_hat,
        basis=basis,
        singular_values=s[:rank],
        cov=cov,
        instrument_set=dataset.instrument_set,
        n=n,
        intercept=intercept,
        var_eps_y=var_eps_y,
    )


def estimate_ols(dataset: Dataset) -> np.ndarray:
    """OLS slopes of ``y`` on ``x`` with an intercept; biased under confounding."""
    if dataset.n <= dataset.d_x:
        raise InsufficientSamplesError(f"n={dataset.n} too small for {dataset.d_x} regressors, need n > {dataset.d_x}")
    design = _with_intercept(dataset.x)
    coef, _, rank, _ = scipy.linalg.lstsq(design, dataset.y)
    if rank < design.shape[1]:
        raise SingularMatrixError(f"OLS Gram matrix is singular (rank {rank} < {design.shape[1]})")
    return coef[1:]


def two_stage_least_squares(dataset: Dataset) -> Tuple[float, np.ndarray]:
    """Classical 2SLS ``(X^T P_Z X)^{-1} X^T P_Z y`` with intercepts.

    Returns ``(intercept, slopes)``. Needs at least as many instruments as
    treatments.
    """
    if dataset.d_z < dataset.d_x:
        raise SingularMatrixError(f"classical 2SLS needs d_z >= d_x, got d_z={dataset.d_z}, d_x={dataset.d_x}")
    instruments = _with_intercept(dataset.z)
    regressors = _with_intercept(dataset.x)
    coef, _, _, _ = scipy.linalg.lstsq(instruments, regressors)
    fitted = instruments @ coef
    gram = fitted.T @ fitted
    try:
        solution = scipy.linalg.solve(gram, fitted.T @ dataset.y, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("X^T P_Z X is singular") from exc
    return float(solution[0]), solution[1:]
