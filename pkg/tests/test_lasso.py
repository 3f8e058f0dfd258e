import numpy as np
import pytest

from dtt.errors import InputError
from dtt.lasso import fit_path, fit_penalized, lambda_max


def _orthonormal_design(n=100):
    """Three mutually orthogonal +-1 columns with mean 0 and unit (population) sd."""
    i = np.arange(n)
    x1 = np.where(i % 2 == 0, 1.0, -1.0)
    x2 = np.where(i % 4 < 2, 1.0, -1.0)
    return np.column_stack([x1, x2, x1 * x2])


def _soft(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


@pytest.mark.parametrize("lam", [0.05, 0.3, 0.8])
def test_orthonormal_gaussian_soft_thresholding(lam):
    X = _orthonormal_design()
    gen = np.random.default_rng(0)
    y = 2.0 + X @ np.array([1.0, -0.5, 0.1]) + 0.3 * gen.standard_normal(100)
    ols = X.T @ (y - y.mean()) / 100
    path = fit_path(X, y, "gaussian", lambdas=[lam])
    assert np.allclose(path.coefficients[0], _soft(ols, lam), atol=1e-4)
    assert path.intercepts[0] == pytest.approx(y.mean(), abs=1e-4)


@pytest.mark.parametrize("family", ["gaussian", "logistic"])
def test_lambda_max_gives_intercept_only(family):
    gen = np.random.default_rng(1)
    X = gen.integers(0, 3, size=(200, 15))
    y = (gen.random(200) < 0.3).astype(float)
    lmax = lambda_max(X, y, family)
    path = fit_path(X, y, family, lambdas=[lmax * 1.0001, lmax * 2])
    assert np.all(path.coefficients == 0)
    expected = np.log(y.mean() / (1 - y.mean())) if family == "logistic" else y.mean()
    assert np.allclose(path.intercepts, expected, atol=1e-8)
    below = fit_path(X, y, family, lambdas=[lmax * 0.9])
    assert np.count_nonzero(below.coefficients) >= 1


@pytest.mark.parametrize("family", ["gaussian", "logistic"])
def test_path_objective_monotone_and_kkt(family):
    gen = np.random.default_rng(2)
    n, p = 300, 40
    X = gen.integers(0, 3, size=(n, p))
    eta = X[:, :3] @ np.array([0.8, -0.6, 0.5]) - 1.0
    y = (gen.random(n) < 1 / (1 + np.exp(-eta))).astype(float) if family == "logistic" else eta + gen.standard_normal(n)
    path = fit_path(X, y, family, n_lambda=20, record=True)
    assert np.all(path.kkt <= 1e-6)
    for trace in path.objective_traces:
        assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))


def test_cv_fit_kkt_and_determinism():
    gen = np.random.default_rng(3)
    n, p = 400, 60
    X = gen.integers(0, 3, size=(n, p))
    eta = 1.2 * X[:, 5] - 1.5
    y = (gen.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    a = fit_penalized(X, y, "logistic", n_lambda=30, cv_folds=5, rng=11)
    b = fit_penalized(X, y, "logistic", n_lambda=30, cv_folds=5, rng=11)
    assert a.kkt <= 1e-6
    assert np.array_equal(a.coefficients, b.coefficients) and a.lam == b.lam
    assert a.coefficients[5] > 0
    assert a.cv_score == pytest.approx(np.min(a.cv_curve))
    assert len(a.cv_curve) == len(a.lambdas)


@pytest.mark.slow
def test_strong_signal_selected_in_most_seeds():
    hits = 0
    seeds = 40
    for s in range(seeds):
        gen = np.random.default_rng(100 + s)
        X = gen.integers(0, 3, size=(300, 30))
        eta = 1.5 * (X[:, 7] - 1.0)
        y = (gen.random(300) < 1 / (1 + np.exp(-eta))).astype(float)
        fit = fit_penalized(X, y, "logistic", n_lambda=40, cv_folds=5, rng=s)
        hits += fit.coefficients[7] != 0
    assert hits >= 0.95 * seeds


def test_fit_errors():
    X = np.ones((10, 2))
    with pytest.raises(InputError):
        fit_penalized(X, np.zeros(10), "gaussian")
    y = np.r_[np.zeros(5), np.ones(5)]
    with pytest.raises(InputError):
        fit_penalized(X, y, "logistic", cv_folds=11)
    with pytest.raises(InputError):
        fit_penalized(X, y, "logistic", lambdas=[])
    with pytest.raises(InputError):
        fit_penalized(X, y * 0.5 + 0.2, "logistic")
    with pytest.raises(InputError):
        fit_penalized(X, y, "poisson")
