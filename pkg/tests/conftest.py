import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from instrument_selection.scenario import Scenario, generate_scenario


def make_scenario(alpha, beta, mixing=None, conf_dir=None, d_id=None, seed=0) -> Scenario:
    """Hand-built scenario; noiseless unless ``mixing`` / ``conf_dir`` are given."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    beta = np.asarray(beta, dtype=float)
    n_iv, d_x = alpha.shape
    return Scenario(
        n_iv=n_iv,
        d_x=d_x,
        d_id=d_id if d_id is not None else min(n_iv, d_x),
        alpha=alpha,
        beta=beta,
        mixing=np.zeros((d_x, d_x)) if mixing is None else mixing,
        conf_dir=np.zeros(d_x) if conf_dir is None else conf_dir,
        seed=seed,
    )


@pytest.fixture
def small_scenario() -> Scenario:
    return generate_scenario(n_iv=6, d_x=8, d_id=3, seed=11)


@pytest.fixture
def noiseless_scenario(small_scenario) -> Scenario:
    return small_scenario.without_confounding()


@pytest.fixture
def axis_scenario() -> Scenario:
    """beta = (2, 2, 4) with one instrument along e_1 and one along e_0."""
    return make_scenario(alpha=[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]], beta=[2.0, 2.0, 4.0], d_id=2)


@pytest.fixture
def confounded_axis_scenario() -> Scenario:
    conf_dir = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
    return make_scenario(
        alpha=[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
        beta=[2.0, 2.0, 4.0],
        mixing=0.2 * np.ones((3, 3)),
        conf_dir=conf_dir,
        d_id=2,
    )
