import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scenario
from instrument_selection.errors import (
    InsufficientSamplesError,
    InvalidInstrumentSetError,
    RankZeroError,
    SingularMatrixError,
)
from instrument_selection.estimation import (
    ProjectedEstimate,
    estimate_covariance,
    estimate_ols,
    estimate_projection,
    two_stage_least_squares,
)
from instrument_selection.scenario import generate_scenario
from instrument_selection.simulator import Dataset, observational_data, run_experiment


@st.composite
def noiseless_case(draw):
    d_id = draw(st.integers(min_value=2, max_value=5))
    n_iv = draw(st.integers(min_value=d_id, max_value=10))
    d_x = draw(st.integers(min_value=d_id, max_value=10))
    seed = draw(st.integers(min_value=0, max_value=10_000))
    subset = draw(st.lists(st.integers(min_value=0, max_value=n_iv - 1), min_size=1, max_size=n_iv, unique=True))
    return generate_scenario(n_iv, d_x, d_id, seed).without_confounding(), tuple(subset), seed


@settings(deadline=None, max_examples=50)
@given(case=noiseless_case())
def test_noiseless_estimate_is_exact_projection(case):
    scenario, subset, seed = case
    estimate = estimate_projection(run_experiment(scenario, subset, n=200, seed=seed))
    np.testing.assert_allclose(estimate.beta_hat, scenario.true_projection(subset), atol=1e-8)
    assert np.linalg.norm(estimate.beta_hat) <= np.linalg.norm(scenario.beta) + 1e-10
    assert estimate.rank == np.linalg.matrix_rank(scenario.alpha[list(subset)])


def test_estimate_invariants(small_scenario):
    estimate = estimate_projection(run_experiment(small_scenario, [0, 3, 4], n=1000, seed=2))
    assert estimate.rank == 3
    np.testing.assert_allclose(estimate.basis.T @ estimate.basis, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(estimate.projector() @ estimate.beta_hat, estimate.beta_hat, atol=1e-10)
    np.testing.assert_allclose(estimate.cov, estimate.cov.T, atol=1e-10)
    assert np.min(np.linalg.eigvalsh(estimate.cov)) > -1e-10
    assert np.all(np.diff(estimate.singular_values) <= 0)
    assert np.all(estimate.singular_values > 0)
    assert np.all(estimate.standard_errors() >= 0)


@pytest.mark.parametrize("instrument, expected", [(0, [0.0, 2.0, 0.0]), (1, [2.0, 0.0, 0.0])])
def test_single_axis_instruments_project_beta(axis_scenario, instrument, expected):
    estimate = estimate_projection(run_experiment(axis_scenario, [instrument], n=100, seed=0))
    np.testing.assert_allclose(estimate.beta_hat, expected, atol=1e-10)
    assert estimate.intercept == pytest.approx(0.0, abs=1e-10)
    assert estimate.var_eps_y == pytest.approx(0.0, abs=1e-12)


def test_single_axis_instrument_with_confounding(confounded_axis_scenario):
    estimate = estimate_projection(run_experiment(confounded_axis_scenario, [0], n=100_000, seed=1))
    np.testing.assert_allclose(estimate.beta_hat, [0.0, 2.0, 0.0], atol=0.05)


def test_noiseless_just_identified_recovers_beta():
    scenario = generate_scenario(3, 3, 3, seed=4).without_confounding()
    estimate = estimate_projection(run_experiment(scenario, [0, 1, 2], n=100, seed=4))
    np.testing.assert_allclose(estimate.beta_hat, scenario.beta, atol=1e-10)


def test_just_identified_matches_classical_two_stage_least_squares():
    scenario = generate_scenario(3, 3, 3, seed=7)
    data = run_experiment(scenario, [0, 1, 2], n=2000, seed=7)
    estimate = estimate_projection(data)
    intercept, slopes = two_stage_least_squares(data)
    np.testing.assert_allclose(estimate.beta_hat, slopes, atol=1e-8)
    assert estimate.intercept == pytest.approx(intercept, abs=1e-8)
    np.testing.assert_allclose(estimate.with_offset(), np.concatenate(([intercept], slopes)), atol=1e-8)


def test_overidentified_matches_classical_two_stage_least_squares():
    scenario = generate_scenario(6, 4, 3, seed=12)
    data = run_experiment(scenario, range(6), n=3000, seed=12)
    _, slopes = two_stage_least_squares(data)
    np.testing.assert_allclose(estimate_projection(data).beta_hat, slopes, atol=1e-8)


def test_classical_two_stage_least_squares_needs_enough_instruments(small_scenario):
    with pytest.raises(SingularMatrixError):
        two_stage_least_squares(run_experiment(small_scenario, [0, 1], n=100, seed=0))


def test_rank_follows_the_first_stage(small_scenario):
    for seed in range(5):
        estimate = estimate_projection(run_experiment(small_scenario, [1, 2, 5], n=100, seed=seed))
        assert estimate.rank == 3


def test_estimate_errors(small_scenario):
    with pytest.raises(InvalidInstrumentSetError):
        estimate_projection(observational_data(small_scenario, n=50, seed=0))
    data = run_experiment(small_scenario, [0, 1], n=4, seed=0)
    trimmed = Dataset(z=data.z[:2], x=data.x[:2], y=data.y[:2], instrument_set=data.instrument_set)
    with pytest.raises(InsufficientSamplesError):
        estimate_projection(trimmed)


def test_estimate_with_one_sample_more_than_instruments():
    # intercept column plus z is a 4x4 Hadamard matrix
    z = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    x = np.hstack([z, np.zeros((4, 1))])
    y = x @ np.array([1.0, 2.0, 3.0, 4.0])
    estimate = estimate_projection(Dataset(z=z, x=x, y=y, instrument_set=(0, 1, 2)))
    np.testing.assert_allclose(estimate.beta_hat, [1.0, 2.0, 3.0, 0.0], atol=1e-10)
    assert estimate.rank == 3
    assert np.isnan(estimate.var_eps_y)
    assert np.all(np.isnan(estimate.cov))

    with pytest.raises(InsufficientSamplesError):
        estimate_projection(Dataset(z=z[:3], x=x[:3], y=y[:3], instrument_set=(0, 1, 2)))


def test_instrument_without_effect_has_rank_zero():
    scenario = make_scenario(alpha=[[0.0, 0.0]], beta=[1.0, 0.0], d_id=1)
    with pytest.raises(RankZeroError):
        estimate_projection(run_experiment(scenario, [0], n=50, seed=0))


def test_estimate_document_restores_fields(small_scenario):
    estimate = estimate_projection(run_experiment(small_scenario, [2, 4], n=300, seed=6))
    document = estimate.to_dict()
    assert len(document["basis"]) == estimate.rank
    assert len(document["basis"][0]) == estimate.d_x
    restored = ProjectedEstimate.from_dict(document)
    np.testing.assert_array_equal(restored.basis, estimate.basis)
    np.testing.assert_array_equal(restored.beta_hat, estimate.beta_hat)
    assert restored.instrument_set == estimate.instrument_set


def test_covariance_of_identity_first_stage():
    cov = estimate_covariance(np.eye(3), n=100, var_eps_y=1.0, z_cov=np.eye(3))
    np.testing.assert_allclose(cov, np.eye(3) / 100, atol=1e-15)


def test_covariance_of_rank_one_first_stage():
    cov = estimate_covariance(np.array([[2.0, 0.0, 0.0]]), n=1, var_eps_y=1.0, z_cov=np.array([[1.0]]))
    expected = np.zeros((3, 3))
    expected[0, 0] = 0.25
    np.testing.assert_allclose(cov, expected, atol=1e-15)


def test_covariance_scales_with_one_over_n():
    rng = np.random.default_rng(0)
    alpha_hat = rng.normal(size=(2, 5))
    z_cov = np.array([[1.0, 0.2], [0.2, 1.0]])
    base = estimate_covariance(alpha_hat, n=10, var_eps_y=2.0, z_cov=z_cov)
    scaled = estimate_covariance(alpha_hat, n=40, var_eps_y=2.0, z_cov=z_cov)
    np.testing.assert_allclose(scaled, base / 4, rtol=1e-12)


@pytest.mark.parametrize("alpha_hat, z_cov", [
    (np.array([[1.0, 0.0], [2.0, 0.0]]), np.eye(2)),
    (np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]])),
    (np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]])),
])
def test_covariance_preconditions(alpha_hat, z_cov):
    with pytest.raises(SingularMatrixError):
        estimate_covariance(alpha_hat, n=10, var_eps_y=1.0, z_cov=z_cov)


def test_ols_is_exact_without_confounding():
    scenario = generate_scenario(4, 4, 3, seed=1)
    unconfounded = make_scenario(scenario.alpha, scenario.beta, mixing=np.array(scenario.mixing), d_id=3)
    data = observational_data(unconfounded, n=500, seed=1)
    np.testing.assert_allclose(estimate_ols(data), scenario.beta, atol=1e-8)


def test_ols_with_one_sample_more_than_regressors():
    scenario = generate_scenario(4, 4, 3, seed=1)
    unconfounded = make_scenario(scenario.alpha, scenario.beta, mixing=np.array(scenario.mixing), d_id=3)
    data = observational_data(unconfounded, n=5, seed=3)
    np.testing.assert_allclose(estimate_ols(data), scenario.beta, atol=1e-6)

    short = Dataset(z=np.zeros((4, 0)), x=data.x[:4], y=data.y[:4], instrument_set=())
    with pytest.raises(InsufficientSamplesError):
        estimate_ols(short)


def test_ols_matches_population_coefficient_under_confounding(small_scenario):
    data = observational_data(small_scenario, n=100_000, seed=5)
    mixing = small_scenario.mixing
    population = small_scenario.beta + np.linalg.solve(mixing.T @ mixing, mixing.T @ small_scenario.conf_dir)
    np.testing.assert_allclose(estimate_ols(data), population, atol=0.05)
    assert np.linalg.norm(population - small_scenario.beta) > 0.05


def test_ols_ignores_row_duplication(small_scenario):
    data = observational_data(small_scenario, n=400, seed=2)
    doubled = Dataset(z=np.vstack([data.z, data.z]), x=np.vstack([data.x, data.x]),
                      y=np.concatenate([data.y, data.y]), instrument_set=())
    np.testing.assert_allclose(estimate_ols(doubled), estimate_ols(data), atol=1e-10)


def test_ols_on_singular_design():
    data = Dataset(z=np.zeros((10, 0)), x=np.ones((10, 2)), y=np.arange(10.0), instrument_set=())
    with pytest.raises(SingularMatrixError):
        estimate_ols(data)
