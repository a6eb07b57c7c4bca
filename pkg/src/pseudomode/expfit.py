"""Real exponential-sum fitting (used for the Matsubara tail of the correlation function).

The model is ``f(tau) = sum_k W_k exp(-gamma_k tau)`` with ``gamma_k > 0``. Rates are
initialised by a matrix-pencil (Prony-type) solve and refined by variable projection:
for fixed rates the weights are the exact linear least-squares solution, and only the
log-rates are optimised nonlinearly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import hankel
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .correlation import ExponentialSeries, MatsubaraSpec, PoleTerm, matsubara_sum
from .exceptions import FitWarning, InputError

__all__ = [
    "ExponentialFit",
    "prony_initial_guess",
    "fit_real_exponentials",
    "fit_to_series",
    "fit_matsubara_tail",
    "ExponentialSumRegressor",
]


@dataclass(frozen=True)
class ExponentialFit:
    weights: np.ndarray
    rates: np.ndarray
    residual_norm: float
    grid: np.ndarray
    converged: bool = True
    message: str = ""
    info: dict = field(default_factory=dict, compare=False)

    @property
    def k(self) -> int:
        return int(self.rates.size)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.exp(-np.multiply.outer(tau, self.rates)) @ self.weights


def _validate_samples(tau, values):
    tau = np.asarray(tau, dtype=float).reshape(-1)
    values = np.asarray(values)
    if np.iscomplexobj(values):
        if np.any(values.imag != 0):
            raise InputError("samples must be real-valued")
        values = values.real
    values = np.asarray(values, dtype=float).reshape(-1)
    if tau.shape != values.shape:
        raise InputError("tau and values must have the same length")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(values))):
        raise InputError("samples contain non-finite values")
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    return tau, values


def _default_rates(tau, k):
    span = max(tau.max() - tau.min(), np.finfo(float).tiny)
    dt = span / max(tau.size - 1, 1)
    return np.geomspace(2.0 / span, 0.5 / dt, k) if k > 1 else np.array([2.0 / span])


def prony_initial_guess(tau, values, k: int, return_info: bool = False):
    """Decay rates from a rank-``k`` matrix-pencil solve on uniformly spaced samples.

    Complex roots are mapped to the real part of their rate; non-decaying roots are
    replaced by log-spaced defaults. A rank-deficient sample matrix falls back to the
    defaults entirely and emits a :class:`FitWarning`.
    """
    tau, values = _validate_samples(tau, values)
    k = int(k)
    if k < 1:
        raise InputError("k must be >= 1")
    n = tau.size
    if n < 2 * k:
        raise InputError(f"need at least {2 * k} samples for k={k}")
    order = np.argsort(tau)
    tau, values = tau[order], values[order]
    dt = np.diff(tau)
    if not np.allclose(dt, dt[0], rtol=1e-8, atol=0):
        raise InputError("prony_initial_guess requires a uniform grid")
    dt = dt[0]
    defaults = _default_rates(tau, k)
    info = {"fallback": False, "replaced": 0}

    L = n // 2
    Y = hankel(values[: n - L], values[n - L - 1:])
    _, s, vh = np.linalg.svd(Y, full_matrices=False)
    if s.size < k or s[0] == 0 or s[k - 1] <= 1e-13 * s[0]:
        info["fallback"] = True
        warnings.warn("rank-deficient sample matrix; using default rates", FitWarning, stacklevel=2)
        return (defaults, info) if return_info else defaults
    V = vh[:k].conj().T
    mu = np.linalg.eigvals(np.linalg.pinv(V[:-1]) @ V[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = (-np.log(mu.astype(complex)) / dt).real
    good = np.isfinite(rates) & (rates > 0)
    info["replaced"] = int(np.count_nonzero(~good))
    rates = np.sort(rates[good])
    if rates.size < k:
        spare = [d for d in defaults if not np.any(np.isclose(d, rates, rtol=1e-3))]
        rates = np.sort(np.concatenate([rates, spare[: k - rates.size]]))
    return (rates, info) if return_info else rates


def _design(tau, rates):
    return np.exp(-np.multiply.outer(tau, rates))


def _solve_weights(tau, values, rates):
    A = _design(tau, rates)
    w, *_ = np.linalg.lstsq(A, values, rcond=None)
    return w


def fit_real_exponentials(
    tau,
    values,
    k: int,
    init=None,
    n_starts: int = 8,
    random_state=0,
    max_nfev: int = 4000,
    warm_start: Optional[ExponentialFit] = None,
) -> ExponentialFit:
    """Fit ``sum_k W_k exp(-gamma_k tau)`` to real samples.

    L2 objective, best-of-multistart chosen by max-norm residual. ``warm_start`` takes a
    fit with ``k - 1`` terms whose rates seed one start.
    """
    tau, values = _validate_samples(tau, values)
    k = int(k)
    if k < 1:
        raise InputError("k must be >= 1")
    if tau.size < k + 1:
        raise InputError("need more samples than exponentials")
    scale = np.max(np.abs(values))
    if scale == 0:
        return ExponentialFit(np.zeros(k), _default_rates(tau, k), 0.0, tau.copy(), True, "zero target")
    y = values / scale
    rng = np.random.default_rng(random_state)

    if init is None:
        order = np.argsort(tau)
        dts = np.diff(tau[order])
        if tau.size >= 2 * k and np.allclose(dts, dts[0], rtol=1e-8, atol=0):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                init = prony_initial_guess(tau, values, k)
        else:
            init = _default_rates(tau, k)
    init = np.sort(np.asarray(init, dtype=float).reshape(-1))
    if init.size != k or np.any(init <= 0):
        raise InputError(f"init must contain {k} positive rates")

    starts = [init]
    if warm_start is not None and warm_start.k == k - 1:
        extra = max(warm_start.rates.max() * 4.0, init.max())
        starts.append(np.sort(np.append(warm_start.rates, extra)))
    while len(starts) < max(n_starts, 1):
        starts.append(init * np.exp(rng.uniform(np.log(0.25), np.log(4.0), size=k)))

    span = tau.max() - tau.min()
    dt = span / max(tau.size - 1, 1)
    lo = np.log(1e-6 / max(span, 1e-300))
    hi = np.log(1e6 / max(dt, 1e-300))

    def residual(theta):
        rates = np.exp(theta)
        A = _design(tau, rates)
        w, *_ = np.linalg.lstsq(A, y, rcond=None)
        return A @ w - y

    best = None
    for x0 in starts:
        theta0 = np.clip(np.log(x0), lo + 1e-9, hi - 1e-9)
        try:
            res = least_squares(residual, theta0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=max_nfev)
        except (np.linalg.LinAlgError, ValueError) as exc:  # degenerate start
            warnings.warn(f"multistart failed: {exc}", FitWarning, stacklevel=2)
            continue
        rates = np.exp(res.x)
        order = np.argsort(rates)
        rates = rates[order]
        w = _solve_weights(tau, values, rates)
        linf = float(np.max(np.abs(_design(tau, rates) @ w - values)))
        cand = (linf, rates, w, res.status > 0, res.message)
        if best is None or linf < best[0]:
            best = cand
    if best is None:
        raise InputError("all multistart fits failed")
    linf, rates, w, ok, msg = best
    if not ok:
        warnings.warn(f"exponential fit did not converge: {msg}", FitWarning, stacklevel=2)
    return ExponentialFit(w, rates, linf, tau.copy(), bool(ok), str(msg), {"n_starts": len(starts)})


def fit_to_series(fit: ExponentialFit) -> ExponentialSeries:
    """Map each ``W exp(-gamma tau)`` to the pole term ``(a=W, z=-i gamma)``."""
    return ExponentialSeries(PoleTerm(w, -1j * g) for w, g in zip(fit.weights, fit.rates))


def fit_matsubara_tail(
    spec: MatsubaraSpec,
    k: int = 2,
    t_max: float = 10.0,
    n_points: int = 500,
    log_grid: bool = True,
    log_start: float = 1e-5,
    **kwargs,
) -> ExponentialFit:
    """Fit the Matsubara sum with ``k`` real exponentials.

    The residual is always measured on the uniform grid ``linspace(0, t_max, n_points)``.
    When ``log_grid`` is set a second fit on ``[0] + geomspace(log_start * t_max, t_max)``
    is also tried and kept if its uniform-grid residual is lower.
    """
    uniform = np.linspace(0.0, t_max, n_points)
    target = matsubara_sum(spec, uniform)
    fit = fit_real_exponentials(uniform, target, k, **kwargs)
    fit = _with_info(fit, grid_kind="uniform")
    if log_grid and np.any(target != 0):
        lg = np.concatenate([[0.0], np.geomspace(log_start * t_max, t_max, n_points - 1)])
        alt = fit_real_exponentials(lg, matsubara_sum(spec, lg), k, init=fit.rates, **kwargs)
        alt_res = float(np.max(np.abs(alt(uniform) - target)))
        if alt_res < fit.residual_norm:
            fit = ExponentialFit(alt.weights, alt.rates, alt_res, uniform, alt.converged, alt.message,
                                 dict(alt.info, grid_kind="log"))
    return fit


def _with_info(fit, **info):
    return ExponentialFit(fit.weights, fit.rates, fit.residual_norm, fit.grid, fit.converged, fit.message,
                          dict(fit.info, **info))


class ExponentialSumRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_real_exponentials`.

    ``X`` holds the delay times (one column), ``y`` the real correlation samples.

    Parameters
    ----------
    n_exponents : int
        Number of exponentials ``k``.
    init_rates : array-like or None
        Initial decay rates; a matrix-pencil estimate is used when omitted.
    n_starts : int
        Multi-start count.
    random_state : int
        Seed for the multi-start perturbations.
    max_nfev : int
        Function-evaluation budget per start.
    """

    def __init__(self, n_exponents=2, init_rates=None, n_starts=8, random_state=0, max_nfev=4000):
        self.n_exponents = n_exponents
        self.init_rates = init_rates
        self.n_starts = n_starts
        self.random_state = random_state
        self.max_nfev = max_nfev

    @staticmethod
    def _tau(X):
        X = np.asarray(X, dtype=float)
        return X.reshape(-1, 1) if X.ndim == 1 else X

    def fit(self, X, y):
        X, y = check_X_y(self._tau(X), y, y_numeric=True)
        if X.shape[1] != 1:
            raise InputError("X must contain a single column of delay times")
        fit = fit_real_exponentials(X[:, 0], y, self.n_exponents, init=self.init_rates,
                                    n_starts=self.n_starts, random_state=self.random_state,
                                    max_nfev=self.max_nfev)
        self.fit_ = fit
        self.weights_ = fit.weights
        self.rates_ = fit.rates
        self.residual_norm_ = fit.residual_norm
        self.converged_ = fit.converged
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(self._tau(X))
        return self.fit_(X[:, 0])

    def to_series(self) -> ExponentialSeries:
        check_is_fitted(self, "fit_")
        return fit_to_series(self.fit_)
