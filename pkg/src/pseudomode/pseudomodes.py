"""Pseudomode parameters derived from an exponential decomposition of ``C(tau)``.

Each term ``a exp(-i z tau)`` with ``z = xi - i lam`` becomes one damped mode with
frequency ``xi``, damping ``lam`` (dissipation rate ``2 lam``) and coupling
``g = sqrt(a)`` on the principal branch. Complex ``g`` gives a non-Hermitian
system-mode Hamiltonian.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .correlation import (
    DEFAULT_MATSUBARA_TERMS,
    ExponentialSeries,
    PoleTerm,
    SpectralDensityModel,
    c0_to_poles,
    matsubara_coefficients,
)
from .exceptions import DomainError, InputError

__all__ = [
    "Pseudomode",
    "PseudomodeSet",
    "series_to_pseudomodes",
    "terminator_split",
    "spin_boson_pipeline",
    "DEFAULT_RESONANT_DIM",
    "DEFAULT_AUX_DIM",
]

DEFAULT_RESONANT_DIM = 10
DEFAULT_AUX_DIM = 3
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Pseudomode:
    xi: float
    lam: float
    g: complex
    fock_dim: int = DEFAULT_RESONANT_DIM
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "xi", float(self.xi))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "g", complex(self.g))
        object.__setattr__(self, "fock_dim", int(self.fock_dim))
        if not self.lam > 0:
            raise DomainError(f"pseudomode damping must be positive, got {self.lam}")
        if self.fock_dim < 2:
            raise InputError(f"fock_dim must be >= 2, got {self.fock_dim}")

    @property
    def amplitude(self) -> complex:
        return self.g * self.g

    @property
    def z(self) -> complex:
        return complex(self.xi, -self.lam)


@dataclass(frozen=True)
class PseudomodeSet:
    """Pseudomodes plus an optional flat dephasing rate acting on the system."""

    modes: tuple
    dephasing_rate: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "dephasing_rate", float(self.dephasing_rate))
        if not np.isfinite(self.dephasing_rate):
            raise InputError("dephasing_rate must be finite")

    def __len__(self):
        return len(self.modes)

    @property
    def dims(self) -> tuple:
        return tuple(m.fock_dim for m in self.modes)

    @property
    def couplings(self) -> np.ndarray:
        return np.array([m.g for m in self.modes], dtype=complex)

    def is_hermitian(self, atol: float = 0.0) -> bool:
        """True when every coupling is real, i.e. the enlarged Hamiltonian is Hermitian."""
        return bool(np.all(np.abs(self.couplings.imag) <= atol))

    def to_series(self) -> ExponentialSeries:
        return ExponentialSeries(PoleTerm(m.amplitude, m.z) for m in self.modes)

    def correlation(self, tau):
        """Reconstructed ``C'(tau) = sum_l g_l^2 exp(-i xi_l tau - lam_l tau)``."""
        tau = np.asarray(tau, dtype=float)
        if not self.modes:
            return np.zeros(tau.shape, dtype=complex) if tau.ndim else 0j
        g2 = np.array([m.amplitude for m in self.modes])
        z = np.array([m.z for m in self.modes])
        out = np.exp(-1j * np.multiply.outer(tau, z)) @ g2
        return out if tau.ndim else complex(out)

    def with_dims(self, dims) -> "PseudomodeSet":
        dims = list(dims)
        if len(dims) != len(self.modes):
            raise InputError(f"expected {len(self.modes)} Fock dimensions, got {len(dims)}")
        return replace(self, modes=tuple(replace(m, fock_dim=d) for m, d in zip(self.modes, dims)))

    def with_resonant_dim(self, dim: int) -> "PseudomodeSet":
        """Set the Fock dimension of every mode labelled ``resonant``."""
        return self.with_dims([dim if m.label == "resonant" else m.fock_dim for m in self.modes])

    def flip_coupling(self, index: int) -> "PseudomodeSet":
        modes = list(self.modes)
        modes[index] = replace(modes[index], g=-modes[index].g)
        return replace(self, modes=tuple(modes))

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "pseudomode-set",
            "version": FORMAT_VERSION,
            "dephasing_rate": self.dephasing_rate,
            "modes": [
                {"xi": m.xi, "lambda": m.lam, "g_re": m.g.real, "g_im": m.g.imag,
                 "fock_dim": m.fock_dim, "label": m.label}
                for m in self.modes
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PseudomodeSet":
        if data.get("format") != "pseudomode-set":
            raise InputError("not a pseudomode-set document")
        try:
            modes = [
                Pseudomode(m["xi"], m["lambda"], complex(m["g_re"], m["g_im"]), m["fock_dim"], m.get("label", ""))
                for m in data["modes"]
            ]
            return cls(tuple(modes), data.get("dephasing_rate", 0.0), data.get("metadata", {}))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed pseudomode-set document: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PseudomodeSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def series_to_pseudomodes(series: ExponentialSeries, fock_dims: Sequence[int], labels=None,
                          dephasing_rate: float = 0.0) -> PseudomodeSet:
    fock_dims = list(fock_dims)
    if len(fock_dims) != len(series):
        raise InputError(f"need one Fock dimension per term ({len(series)}), got {len(fock_dims)}")
    labels = list(labels) if labels is not None else [""] * len(series)
    modes = []
    for term, dim, label in zip(series, fock_dims, labels):
        if not term.lam > 0:
            raise DomainError(f"non-decaying term z={term.z}")
        modes.append(Pseudomode(term.xi, term.lam, np.sqrt(complex(term.amplitude)), dim, label))
    pm = PseudomodeSet(tuple(modes), dephasing_rate)
    return pm


def terminator_split(sd: SpectralDensityModel, n_total: int = DEFAULT_MATSUBARA_TERMS):
    """Keep the first Matsubara term; fold ``n = 2..n_total`` into ``gamma_D = sum c_n / nu_n``."""
    n_total = int(n_total)
    if n_total < 2:
        raise InputError("n_total must be >= 2")
    spec = matsubara_coefficients(sd, n_total)
    kept = ExponentialSeries([PoleTerm(spec.coefficients[0], -1j * spec.frequencies[0])])
    # sum smallest terms first
    gamma_d = float(np.sum((spec.coefficients[1:] / spec.frequencies[1:])[::-1]))
    return kept, gamma_d


def spin_boson_pipeline(
    sd: SpectralDensityModel,
    mode: str = "full_fit",
    k_fit: int = 2,
    n_matsubara: int = DEFAULT_MATSUBARA_TERMS,
    resonant_dim: int = DEFAULT_RESONANT_DIM,
    aux_dim: Optional[int] = DEFAULT_AUX_DIM,
    fit_kwargs: Optional[dict] = None,
) -> PseudomodeSet:
    """Pseudomodes for the underdamped spin-boson bath.

    ``full_fit``: the two resonant poles plus ``k_fit`` exponentials fitted to the
    Matsubara sum. ``terminator``: the two resonant poles, the first Matsubara term as
    one mode and the remaining terms as a dephasing rate.
    ``aux_dim=None`` gives the Matsubara modes ``max(2, resonant_dim - 2)`` levels.
    """
    from .expfit import fit_matsubara_tail, fit_to_series

    meta = {"mode": mode, "n_matsubara": int(n_matsubara), "sd": {
        "alpha": sd.alpha, "omega0": sd.omega0, "gamma_width": sd.gamma_width, "beta": sd.beta}}
    if mode not in ("full_fit", "terminator"):
        raise InputError(f"unknown pipeline mode {mode!r} (expected 'full_fit' or 'terminator')")
    if sd.alpha == 0:
        # uncoupled bath: no modes at all
        return PseudomodeSet((), 0.0, dict(meta, non_hermitian=False))
    poles = c0_to_poles(sd)
    if mode == "full_fit":
        spec = matsubara_coefficients(sd, n_matsubara)
        fit = fit_matsubara_tail(spec, int(k_fit), **(fit_kwargs or {}))
        series = poles + fit_to_series(fit)
        gamma_d = 0.0
        meta["fit"] = {"weights": fit.weights.tolist(), "rates": fit.rates.tolist(),
                       "residual_norm": fit.residual_norm, "converged": fit.converged}
        n_aux = fit.k
    elif mode == "terminator":
        kept, gamma_d = terminator_split(sd, n_matsubara)
        series = poles + kept
        n_aux = 1
    if aux_dim is None:
        aux_dim = max(2, int(resonant_dim) - 2)
    dims = [resonant_dim, resonant_dim] + [aux_dim] * n_aux
    labels = ["resonant", "resonant"] + ["matsubara"] * n_aux
    pm = series_to_pseudomodes(series, dims, labels, dephasing_rate=gamma_d)
    meta["non_hermitian"] = not pm.is_hermitian()
    return replace(pm, metadata=meta)
