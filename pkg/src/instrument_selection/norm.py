"""Providers of the ``||beta||_2`` estimate used by the stopping rule.

The observational confounding-strength estimator is out of scope; an
externally computed value can be injected, and the oracle providers stand in
for it in simulation (optionally with a multiplicative bias).
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, NegativeNormError
from .rng import Stream, make_rng
from .scenario import Scenario


class NormProvider(str, Enum):
    ORACLE = "oracle"
    ORACLE_NOISY = "oracle_noisy"
    EXTERNAL = "external"


@dataclass(frozen=True)
class NormEstimate:
    value: float
    provider: NormProvider

    def __post_init__(self):
        if math.isnan(self.value) or self.value < 0:
            raise NegativeNormError(f"norm estimate must be non-negative, got {self.value}")
        object.__setattr__(self, "provider", NormProvider(self.provider))

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "provider": self.provider.value}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormEstimate":
        return cls(value=float(data["value"]), provider=NormProvider(data["provider"]))


def oracle_norm(scenario: Scenario, relative_bias: float, seed: int) -> NormEstimate:
    """True norm scaled by ``1 + b`` with ``b ~ U[-relative_bias, relative_bias]``."""
    if not abs(relative_bias) < 1:
        raise ValueError(f"|relative_bias| must be below 1, got {relative_bias}")
    true_norm = float(np.linalg.norm(scenario.beta))
    if relative_bias == 0:
        return NormEstimate(true_norm, NormProvider.ORACLE)
    bound = abs(relative_bias)
    b = make_rng(seed, Stream.NORM).uniform(-bound, bound)
    return NormEstimate(true_norm * (1.0 + b), NormProvider.ORACLE_NOISY)


def external_norm(value: float) -> NormEstimate:
    """Wrap a caller-supplied estimate, e.g. from an observational estimator."""
    return NormEstimate(float(value), NormProvider.EXTERNAL)


def parse_norm_provider(text: str) -> Tuple[NormProvider, Optional[str]]:
    """Split ``oracle``, ``oracle_noisy:<bias>`` or ``external:<value|path>``."""
    name, _, argument = text.strip().partition(":")
    try:
        provider = NormProvider(name)
    except ValueError as exc:
        raise ConfigError(f"unknown norm_provider {text!r}") from exc
    if provider is NormProvider.ORACLE and argument:
        raise ConfigError("norm_provider 'oracle' takes no argument")
    if provider is not NormProvider.ORACLE and not argument:
        raise ConfigError(f"norm_provider {name!r} needs an argument, e.g. {name}:0.1")
    if provider is NormProvider.ORACLE_NOISY:
        try:
            bias = float(argument)
        except ValueError as exc:
            raise ConfigError(f"oracle_noisy bias {argument!r} is not a number") from exc
        if not abs(bias) < 1:
            raise ConfigError(f"oracle_noisy bias must satisfy |bias| < 1, got {bias}")
    return provider, argument or None


def _read_external_value(argument: str) -> float:
    try:
        return float(argument)
    except ValueError:
        pass
    path = Path(argument)
    try:
        text = path.read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise ConfigError(f"cannot read external norm from {path}: {exc}") from exc
    try:
        if text.startswith("{"):
            return float(json.loads(text)["value"])
        return float(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f'{path} does not hold a norm estimate, a number or {{"value": ...}}: {exc!r}') from exc


def resolve_norm_estimate(text: str, scenario: Scenario, seed: int) -> NormEstimate:
    """Build the estimate named by a ``norm_provider`` config value."""
    provider, argument = parse_norm_provider(text)
    if provider is NormProvider.ORACLE:
        return oracle_norm(scenario, 0.0, seed)
    if provider is NormProvider.ORACLE_NOISY:
        return oracle_norm(scenario, float(argument), seed)
    return external_norm(_read_external_value(argument))
