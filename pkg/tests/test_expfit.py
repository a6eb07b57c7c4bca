import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pseudomode.correlation import matsubara_coefficients, matsubara_sum, pole_expansion_eval
from pseudomode.exceptions import FitWarning, InputError
from pseudomode.expfit import (
    ExponentialFit,
    ExponentialSumRegressor,
    fit_matsubara_tail,
    fit_real_exponentials,
    fit_to_series,
    prony_initial_guess,
)

TAU = np.linspace(0.0, 5.0, 200)


def test_prony_single_rate():
    assert prony_initial_guess(TAU, np.exp(-2 * TAU), 1) == pytest.approx([2.0], abs=1e-8)


def test_prony_two_rates():
    rates = prony_initial_guess(TAU, np.exp(-TAU) + np.exp(-5 * TAU), 2)
    assert np.sort(rates) == pytest.approx([1.0, 5.0], abs=1e-6)


def test_prony_rank_deficient_falls_back():
    with pytest.warns(FitWarning):
        rates, info = prony_initial_guess(TAU, np.zeros_like(TAU), 2, return_info=True)
    assert info["fallback"]
    assert np.all(rates > 0) and rates.size == 2


def test_prony_needs_enough_samples():
    with pytest.raises(InputError):
        prony_initial_guess(TAU[:3], np.exp(-TAU[:3]), 2)


def test_prony_on_matsubara_tail(sd_b):
    tau = np.linspace(0, 10, 500)
    rates = prony_initial_guess(tau, matsubara_sum(matsubara_coefficients(sd_b), tau), 2)
    assert rates.size == 2 and np.all(rates > 0)


def test_exact_recovery():
    y = np.exp(-TAU) - 0.3 * np.exp(-5 * TAU)
    fit = fit_real_exponentials(TAU, y, 2)
    assert fit.residual_norm < 1e-10 * np.abs(y).max()
    order = np.argsort(fit.rates)
    assert fit.rates[order] == pytest.approx([1.0, 5.0], rel=1e-8)
    assert fit.weights[order] == pytest.approx([1.0, -0.3], rel=1e-8)


def test_nested_models_improve():
    y = np.exp(-0.5 * TAU) + 0.8 * np.exp(-4 * TAU)
    one = fit_real_exponentials(TAU, y, 1)
    two = fit_real_exponentials(TAU, y, 2, warm_start=one)
    assert two.residual_norm < one.residual_norm


def test_residual_norm_is_max_error():
    y = np.exp(-0.5 * TAU) + 0.8 * np.exp(-4 * TAU) + 0.1 * np.exp(-9 * TAU)
    fit = fit_real_exponentials(TAU, y, 2)
    assert fit.residual_norm == pytest.approx(np.max(np.abs(y - fit(TAU))), rel=1e-12)
    assert np.all(fit.rates > 0)


def test_weights_are_least_squares_optimal():
    y = np.exp(-0.5 * TAU) + 0.8 * np.exp(-4 * TAU) + 0.1 * np.exp(-9 * TAU)
    fit = fit_real_exponentials(TAU, y, 2)
    A = np.exp(-np.outer(TAU, fit.rates))
    kkt = A.T @ (A @ fit.weights - y)
    assert np.max(np.abs(kkt)) < 1e-10 * np.linalg.norm(A.T @ y)


def test_non_finite_samples_rejected():
    with pytest.raises(InputError):
        fit_real_exponentials(TAU, np.full_like(TAU, np.nan), 1)


def test_fit_is_deterministic_for_seed():
    y = np.exp(-0.5 * TAU) + 0.8 * np.exp(-4 * TAU) + 0.1 * np.exp(-9 * TAU)
    a = fit_real_exponentials(TAU, y, 2, random_state=3)
    b = fit_real_exponentials(TAU, y, 2, random_state=3)
    assert np.array_equal(a.rates, b.rates) and np.array_equal(a.weights, b.weights)


def test_matsubara_tail_fit_quality(sd_b):
    spec = matsubara_coefficients(sd_b, 1500)
    fit = fit_matsubara_tail(spec, k=2, t_max=10.0, n_points=500)
    assert fit.k == 2 and np.all(fit.rates > 0)
    assert fit.residual_norm / abs(matsubara_sum(spec, 0.0)) < 1e-3
    # reported residual is checked on the uniform grid, whichever grid the fit used
    tau = np.linspace(0, 10, 500)
    assert np.max(np.abs(matsubara_sum(spec, tau) - fit(tau))) <= fit.residual_norm * (1 + 1e-9)


def test_fit_to_series_mapping():
    fit = ExponentialFit(np.array([1.0, -0.3]), np.array([2.0, 0.7]), 0.0, TAU)
    series = fit_to_series(fit)
    assert series.terms[0].amplitude == 1.0 and series.terms[0].z == -2j
    assert series.terms[1].residue == pytest.approx(-0.3j)
    assert np.all(series.poles.real == 0) and np.all(series.residues.real == 0)
    assert np.max(np.abs(pole_expansion_eval(series, TAU) - fit(TAU))) < 1e-15


def test_regressor_api():
    y = np.exp(-TAU) - 0.3 * np.exp(-5 * TAU)
    est = ExponentialSumRegressor(n_exponents=2)
    with pytest.raises(NotFittedError):
        est.predict(TAU)
    assert est.fit(TAU[:, None], y) is est
    assert est.predict(TAU) == pytest.approx(y, abs=1e-10)
    assert est.score(TAU[:, None], y) == pytest.approx(1.0)
    assert np.sort(est.rates_) == pytest.approx([1.0, 5.0], rel=1e-8)
    assert len(est.to_series()) == 2
    twin = clone(est)
    assert twin.get_params() == est.get_params() and not hasattr(twin, "fit_")


def test_regressor_rejects_multiple_columns():
    with pytest.raises(InputError):
        ExponentialSumRegressor().fit(np.ones((10, 2)), np.ones(10))
