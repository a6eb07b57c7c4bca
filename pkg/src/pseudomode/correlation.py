"""Bath correlation functions of the underdamped Brownian spectral density.

Three routes to the same ``C(tau)`` are provided:

* the closed-form resonant part :func:`analytic_c0` plus the Matsubara series
  (:func:`matsubara_coefficients`, :func:`matsubara_sum`),
* the generic pole expansion ``C(tau) = sum_l a_l exp(-i z_l tau)`` stored as an
  :class:`ExponentialSeries`,
* direct numerical quadrature over the spectral density
  (:func:`correlation_quadrature`), used as an independent oracle.

Energies are in units of the tunnelling splitting, times in its inverse.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate

from .exceptions import DomainError, InputError, NumericalError

__all__ = [
    "SpectralDensityModel",
    "PoleTerm",
    "ExponentialSeries",
    "MatsubaraSpec",
    "analytic_c0",
    "matsubara_coefficients",
    "matsubara_sum",
    "matsubara_series",
    "correlation_quadrature",
    "integrate_spectral",
    "pole_expansion_eval",
    "c0_to_poles",
    "effective_sd",
    "DEFAULT_MATSUBARA_TERMS",
]

DEFAULT_MATSUBARA_TERMS = 1500


def _coth(z):
    return 1.0 / np.tanh(z)


def _x_coth_x(x):
    """``x * coth(x)`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    out = xs / np.tanh(xs)
    x2 = x * x
    return np.where(small, 1.0 + x2 / 3.0 - x2 * x2 / 45.0, out)


@dataclass(frozen=True)
class SpectralDensityModel:
    """Underdamped Brownian oscillator spectral density at inverse temperature ``beta``.

    ``J(w) = alpha * omega0**2 * gamma_width * w / ((omega0**2 - w**2)**2 + gamma_width**2 * w**2)``
    """

    alpha: float
    omega0: float
    gamma_width: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "omega0", "gamma_width", "beta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InputError(f"{name} must be finite, got {value!r}")
        if self.alpha < 0:
            raise InputError(f"alpha must be non-negative, got {self.alpha}")
        for name in ("omega0", "gamma_width", "beta"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def underdamped(self) -> bool:
        return self.omega0 > self.gamma_width / 2

    @property
    def Omega(self) -> float:
        """Damped resonance frequency ``sqrt(omega0**2 - (gamma_width/2)**2)``."""
        if not self.underdamped:
            raise DomainError(
                f"overdamped bath (omega0={self.omega0} <= gamma_width/2="
                f"{self.gamma_width / 2}); only the underdamped regime is supported"
            )
        return float(np.sqrt(self.omega0**2 - (self.gamma_width / 2) ** 2))

    def J(self, omega):
        """Evaluate the one-sided spectral density (odd continuation for ``omega < 0``)."""
        w = np.asarray(omega, dtype=float)
        w02 = self.omega0**2
        return self.alpha * w02 * self.gamma_width * w / ((w02 - w * w) ** 2 + (self.gamma_width * w) ** 2)

    def J_coth(self, omega):
        """``J(w) coth(beta w / 2)``, finite at ``w = 0``."""
        w = np.asarray(omega, dtype=float)
        w02 = self.omega0**2
        lorentz = self.alpha * w02 * self.gamma_width / ((w02 - w * w) ** 2 + (self.gamma_width * w) ** 2)
        return lorentz * (2.0 / self.beta) * _x_coth_x(self.beta * w / 2.0)

    def thermal(self, omega):
        """Two-sided thermal spectrum ``J(w) [coth(beta w / 2) + 1]``, the Fourier transform of ``C``."""
        return self.J_coth(omega) + self.J(omega)

    def with_params(self, **changes) -> "SpectralDensityModel":
        params = dict(alpha=self.alpha, omega0=self.omega0, gamma_width=self.gamma_width, beta=self.beta)
        params.update(changes)
        return SpectralDensityModel(**params)


@dataclass(frozen=True)
class PoleTerm:
    """One exponential ``amplitude * exp(-i z tau)`` with ``z = xi - i lam``, ``lam > 0``.

    The residue of the corresponding spectral-density pole is ``r = i * amplitude``.
    """

    amplitude: complex
    z: complex

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "z", complex(self.z))
        if not (np.isfinite(self.amplitude) and np.isfinite(self.z)):
            raise InputError("pole term must be finite")
        if not self.z.imag < 0:
            raise DomainError(f"pole must lie in the lower half plane (Im z < 0), got z={self.z}")

    @property
    def residue(self) -> complex:
        return 1j * self.amplitude

    @property
    def xi(self) -> float:
        return self.z.real

    @property
    def lam(self) -> float:
        return -self.z.imag

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.amplitude * np.exp(-1j * self.z * tau)


class ExponentialSeries:
    """Finite sum of decaying complex exponentials representing ``C(tau)``, ``tau >= 0``."""

    def __init__(self, terms: Iterable[PoleTerm] = ()):
        terms = tuple(terms)
        for t in terms:
            if not isinstance(t, PoleTerm):
                raise InputError(f"expected PoleTerm, got {type(t).__name__}")
        self._terms = terms

    @classmethod
    def from_arrays(cls, amplitudes, poles) -> "ExponentialSeries":
        amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
        poles = np.atleast_1d(np.asarray(poles, dtype=complex))
        if amplitudes.shape != poles.shape:
            raise InputError("amplitudes and poles must have the same length")
        return cls(PoleTerm(a, z) for a, z in zip(amplitudes, poles))

    @property
    def terms(self) -> tuple:
        return self._terms

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self._terms], dtype=complex)

    @property
    def poles(self) -> np.ndarray:
        return np.array([t.z for t in self._terms], dtype=complex)

    @property
    def residues(self) -> np.ndarray:
        return 1j * self.amplitudes

    def residue_real_sum(self) -> float:
        """``sum_l Re(r_l)``; zero for any series representing a physical ``C(tau)``."""
        return float(np.sum(self.residues.real))

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __getitem__(self, item):
        return self._terms[item]

    def __add__(self, other: "ExponentialSeries") -> "ExponentialSeries":
        if not isinstance(other, ExponentialSeries):
            return NotImplemented
        return ExponentialSeries(self._terms + other._terms)

    def __call__(self, tau):
        return pole_expansion_eval(self, tau)

    def __repr__(self):
        body = ", ".join(f"({t.amplitude:.6g}, {t.z:.6g})" for t in self._terms)
        return f"ExponentialSeries([{body}])"


@dataclass(frozen=True)
class MatsubaraSpec:
    """Real Matsubara coefficients ``c_n`` and frequencies ``nu_n = 2 pi n / beta``."""

    coefficients: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        nu = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if c.shape != nu.shape:
            raise InputError("coefficients and frequencies must have equal length")
        if nu.size > 1 and np.any(np.diff(nu) <= 0):
            raise InputError("Matsubara frequencies must be strictly increasing")
        c.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "frequencies", nu)

    @property
    def n_terms(self) -> int:
        return int(self.coefficients.size)


def analytic_c0(sd: SpectralDensityModel, tau):
    """Resonant (pole) part of the thermal correlation function.

    The term multiplying ``exp(-i Omega tau)`` carries ``coth(beta (Omega - i Gamma/2) / 2)``
    and the ``exp(+i Omega tau)`` term its complex conjugate; the second bracket is the
    temperature-independent imaginary part.
    """
    Om = sd.Omega
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    pref = sd.alpha * sd.omega0**2 / (4.0 * Om)
    ct = _coth(sd.beta * (Om - 0.5j * sd.gamma_width) / 2.0)
    decay = np.exp(-sd.gamma_width * tau / 2.0)
    e_minus = np.exp(-1j * Om * tau)
    e_plus = np.exp(1j * Om * tau)
    thermal = ct * e_minus + np.conj(ct) * e_plus
    return pref * decay * (thermal + (e_minus - e_plus))


def c0_to_poles(sd: SpectralDensityModel) -> ExponentialSeries:
    """Two-pole form of :func:`analytic_c0`: ``z = -Omega - i Gamma/2`` and ``z = +Omega - i Gamma/2``."""
    Om = sd.Omega
    pref = sd.alpha * sd.omega0**2 / (4.0 * Om)
    ct = _coth(sd.beta * (Om - 0.5j * sd.gamma_width) / 2.0)
    half = 0.5 * sd.gamma_width
    return ExponentialSeries(
        [
            PoleTerm(pref * (np.conj(ct) - 1.0), -Om - 1j * half),
            PoleTerm(pref * (ct + 1.0), Om - 1j * half),
        ]
    )


def matsubara_coefficients(sd: SpectralDensityModel, n_terms: int = DEFAULT_MATSUBARA_TERMS) -> MatsubaraSpec:
    """Matsubara amplitudes ``c_n`` and rates ``nu_n`` for ``n = 1..n_terms``."""
    n_terms = int(n_terms)
    if n_terms < 1:
        raise InputError("n_terms must be >= 1")
    Om = sd.Omega
    nu = 2.0 * np.pi * np.arange(1, n_terms + 1) / sd.beta
    # the two denominator factors are complex conjugates: their product is |.|^2
    denom = np.abs(nu**2 + (Om + 0.5j * sd.gamma_width) ** 2) ** 2
    c = -2.0 * sd.alpha * sd.gamma_width * sd.omega0**2 * nu / (sd.beta * denom)
    return MatsubaraSpec(c, nu)


def matsubara_sum(spec: MatsubaraSpec, tau):
    """Partial Matsubara sum ``M(tau) = sum_n c_n exp(-nu_n tau)`` (real)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    if spec.n_terms == 0:
        return np.zeros_like(tau) if tau.ndim else 0.0
    out = np.exp(-np.multiply.outer(tau, spec.frequencies)) @ spec.coefficients
    return out if tau.ndim else float(out)


def matsubara_series(spec: MatsubaraSpec) -> ExponentialSeries:
    return ExponentialSeries.from_arrays(spec.coefficients, -1j * spec.frequencies)


def pole_expansion_eval(series: ExponentialSeries, tau):
    """Evaluate ``sum_l a_l exp(-i z_l tau)``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    if len(series) == 0:
        return np.zeros(tau.shape, dtype=complex) if tau.ndim else 0j
    out = np.exp(-1j * np.multiply.outer(tau, series.poles)) @ series.amplitudes
    return out if tau.ndim else complex(out)


def effective_sd(series: ExponentialSeries, omega):
    """Spectral density generated by a pole series (weighted, possibly skewed Lorentzians)."""
    if len(series) == 0:
        raise InputError("series must be non-empty")
    w = np.asarray(omega, dtype=float)
    r = series.residues
    z = series.poles
    dw = np.subtract.outer(w, z.real)
    lam = -z.imag
    num = r.real * dw + r.imag * lam
    out = 2.0 * np.sum(num / (dw**2 + lam**2), axis=-1)
    return out if w.ndim else float(out)


def _default_breakpoints(sd: SpectralDensityModel) -> list:
    w0, g = sd.omega0, sd.gamma_width
    pts = {0.0, w0, 2.0 * w0, 4.0 * w0}
    for k in (1.0, 4.0, 16.0):
        pts.add(max(w0 - k * g, 0.0))
        pts.add(w0 + k * g)
    return sorted(pts)


def integrate_spectral(
    f: Callable,
    sd: SpectralDensityModel,
    tail_bound: Callable[[float], float],
    tol: float = 1e-10,
    weight: Optional[str] = None,
    wvar: Optional[float] = None,
    omega_max: Optional[float] = None,
    max_panels: int = 200,
):
    """Integrate ``f`` over ``[0, omega_max]`` on Gauss-Kronrod panels.

    Panels are refined around the spectral-density peak and then doubled in width until
    ``tail_bound(omega)`` (an upper bound on ``|int_omega^inf f|``) drops below ``tol / 2``.
    With an explicit ``omega_max`` no extension is done.

    Returns ``(value, error_estimate, omega_max)``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    edges = _default_breakpoints(sd)
    if omega_max is not None:
        if omega_max <= 0:
            raise InputError("omega_max must be positive")
        edges = [e for e in edges if e < omega_max] + [float(omega_max)]
    panel_tol = tol / 64.0
    quad_kw = dict(epsabs=panel_tol, epsrel=0.0, limit=2000)
    if weight is not None:
        quad_kw.update(weight=weight, wvar=wvar)

    total, err = 0.0, 0.0
    diagnostics = {"panels": 0}

    def panel(a, b):
        nonlocal total, err
        value, e = integrate.quad(f, a, b, **quad_kw)
        total += value
        err += e
        diagnostics["panels"] += 1

    with np.errstate(all="ignore"):
        for a, b in zip(edges[:-1], edges[1:]):
            panel(a, b)
        upper = edges[-1]
        if omega_max is None:
            while tail_bound(upper) >= tol / 2.0:
                if diagnostics["panels"] >= max_panels:
                    diagnostics.update(omega_max=upper, tail_bound=tail_bound(upper), error=err)
                    raise NumericalError("spectral quadrature did not reach the requested tail tolerance", diagnostics)
                panel(upper, 2.0 * upper)
                upper *= 2.0
            err += tail_bound(upper)
    if not np.isfinite(total) or err > tol:
        diagnostics.update(omega_max=upper, error=err)
        raise NumericalError(f"spectral quadrature error estimate {err:.3g} exceeds tol {tol:.3g}", diagnostics)
    return total, err, upper


def _lorentz_tail(sd: SpectralDensityModel, omega: float) -> float:
    """Upper bound of ``int_omega^inf J(w) dw`` valid for ``omega > omega0``."""
    if omega <= sd.omega0 * 1.01:
        return np.inf
    return sd.alpha * sd.omega0**2 * sd.gamma_width / (2.0 * (omega**2 - sd.omega0**2))


def correlation_quadrature(
    sd: SpectralDensityModel,
    tau,
    omega_max: Optional[float] = None,
    tol: float = 1e-10,
):
    """Thermal correlation function by direct integration over the spectral density.

    ``C(tau) = (1/pi) int_0^inf J(w) [coth(beta w/2) cos(w tau) - i sin(w tau)] dw``.
    Independent of the pole representation; used to validate it.
    """
    taus = np.asarray(tau, dtype=float)
    if np.any(taus < 0):
        raise InputError("tau must be non-negative")
    out = np.empty(taus.shape, dtype=complex)
    coth_tail = lambda w: _lorentz_tail(sd, w) / np.tanh(sd.beta * w / 2.0) / np.pi
    plain_tail = lambda w: _lorentz_tail(sd, w) / np.pi
    f_re = lambda w: sd.J_coth(w) / np.pi
    f_im = lambda w: sd.J(w) / np.pi
    for idx, t in np.ndenumerate(taus):
        if sd.alpha == 0:
            out[idx] = 0j
            continue
        if t == 0:
            re, _, _ = integrate_spectral(f_re, sd, coth_tail, tol=tol, omega_max=omega_max)
            im = 0.0
        else:
            re, _, _ = integrate_spectral(f_re, sd, coth_tail, tol=tol, weight="cos", wvar=t, omega_max=omega_max)
            im, _, _ = integrate_spectral(f_im, sd, plain_tail, tol=tol, weight="sin", wvar=t, omega_max=omega_max)
        out[idx] = re - 1j * im
    return out if taus.ndim else complex(out)
