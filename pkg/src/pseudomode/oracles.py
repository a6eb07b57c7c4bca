"""Reference solutions independent of the pseudomode propagator.

* :func:`pure_dephasing_exact` - the exactly solvable ``Delta = 0`` limit.
* :func:`heom_solve` - a compact bosonic hierarchy (HEOM) for one coupling operator.

The hierarchy uses its own state layout (auxiliary density operators stacked
ADO-major, each 2x2 block vectorised row-major) and its own propagator
(chunked sparse ``expm_multiply``); it shares no propagation code with
:mod:`pseudomode.dynamics`.
"""
from __future__ import annotations

import itertools
import math
import time as _time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .correlation import (
    DEFAULT_MATSUBARA_TERMS,
    ExponentialSeries,
    SpectralDensityModel,
    c0_to_poles,
    integrate_spectral,
    matsubara_coefficients,
)
from .dynamics import SIGMA_Z, SystemSpec, Trajectory
from .exceptions import ConvergenceError, InputError

__all__ = [
    "HeomConfig",
    "heom_config",
    "heom_solve",
    "dephasing_exponent",
    "dephasing_exponent_series",
    "pure_dephasing_exact",
]


@dataclass(frozen=True)
class HeomConfig:
    """Exponential decomposition ``C(tau) = sum_k c_k exp(-nu_k tau)`` plus hierarchy options.

    ``right_coefficients`` are the coefficients ``cbar_k`` of the kernel acting from the
    right, ``C(tau)^* = sum_k cbar_k exp(-nu_k tau)``. When omitted they are derived by
    pairing each ``nu_k`` with its complex conjugate in the list.
    """

    exponents: tuple
    depth: int
    use_terminator: bool = False
    terminator_rate: float = 0.0
    scaled_ados: bool = True
    right_coefficients: Optional[tuple] = None
    max_levels: Optional[tuple] = None

    def __post_init__(self):
        exps = tuple((complex(c), complex(nu)) for c, nu in self.exponents)
        object.__setattr__(self, "exponents", exps)
        if int(self.depth) < 1:
            raise InputError("depth must be >= 1")
        object.__setattr__(self, "depth", int(self.depth))
        for _, nu in exps:
            if not nu.real > 0:
                raise InputError(f"exponent rates need Re(nu) > 0, got {nu}")
        if self.right_coefficients is not None:
            rc = tuple(complex(c) for c in self.right_coefficients)
            if len(rc) != len(exps):
                raise InputError("right_coefficients must match exponents")
            object.__setattr__(self, "right_coefficients", rc)
        if self.max_levels is not None:
            ml = tuple(int(m) for m in self.max_levels)
            if len(ml) != len(exps) or min(ml, default=0) < 0:
                raise InputError("max_levels must give one non-negative cap per exponent")
            object.__setattr__(self, "max_levels", ml)

    @property
    def ck(self) -> np.ndarray:
        return np.array([c for c, _ in self.exponents], dtype=complex)

    @property
    def nuk(self) -> np.ndarray:
        return np.array([nu for _, nu in self.exponents], dtype=complex)

    def cbar(self) -> np.ndarray:
        if self.right_coefficients is not None:
            return np.array(self.right_coefficients, dtype=complex)
        ck, nuk = self.ck, self.nuk
        out = np.empty_like(ck)
        for k, nu in enumerate(nuk):
            match = np.flatnonzero(np.isclose(nuk, np.conj(nu), rtol=1e-12, atol=1e-14))
            if match.size == 0:
                raise InputError(f"exponent {nu} has no complex-conjugate partner")
            out[k] = np.conj(ck[match[0]])
        return out

    def unconjugated_right_kernel(self) -> "HeomConfig":
        """Same exponents with ``cbar_k = c_k'`` (no complex conjugation), ``nu_k' = conj(nu_k)``.

        This is the right-branch kernel ``sum_l a_l exp(i xi_l tau - lam_l tau)`` that a
        pseudomode set with couplings ``g_l = sqrt(a_l)`` generates when the enlarged
        Hamiltonian multiplies from the right without adjoint. It coincides with the
        physical kernel only when every amplitude is real.
        """
        if self.right_coefficients is not None:
            raise InputError("right_coefficients already set")
        return replace(self, right_coefficients=tuple(np.conj(self.cbar())))

    def with_depth(self, depth: int) -> "HeomConfig":
        return replace(self, depth=depth)

    def correlation(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.exp(-np.multiply.outer(tau, self.nuk)) @ self.ck


def _series_exponents(series: ExponentialSeries):
    # a exp(-i z tau) = c exp(-nu tau) with nu = i z
    return [(t.amplitude, 1j * t.z) for t in series]


def heom_config(
    sd: SpectralDensityModel,
    depth: int,
    n_matsubara: int = 2,
    use_terminator: bool = True,
    n_total: int = DEFAULT_MATSUBARA_TERMS,
    scaled_ados: bool = True,
    matsubara_depth: Optional[int] = None,
) -> HeomConfig:
    """Resonant pole pair plus ``n_matsubara`` explicit Matsubara exponents.

    With ``use_terminator`` the remaining terms up to ``n_total`` enter as the Markovian
    closure ``-delta [Q, [Q, rho]]`` with ``delta = sum c_n / nu_n``. ``matsubara_depth``
    caps the level of each Matsubara exponent separately; they are weakly weighted so
    a few levels suffice.
    """
    exps = _series_exponents(c0_to_poles(sd))
    spec = matsubara_coefficients(sd, max(n_total, n_matsubara, 1))
    for c, nu in zip(spec.coefficients[:n_matsubara], spec.frequencies[:n_matsubara]):
        exps.append((c, nu))
    delta = 0.0
    if use_terminator and spec.n_terms > n_matsubara:
        delta = float(np.sum((spec.coefficients[n_matsubara:] / spec.frequencies[n_matsubara:])[::-1]))
    caps = None
    if matsubara_depth is not None:
        caps = (depth, depth) + (int(matsubara_depth),) * n_matsubara
    return HeomConfig(tuple(exps), depth, use_terminator, delta, scaled_ados, None, caps)


def _ado_indices(n_exp: int, depth: int, caps=None):
    """Multi-indices with total level <= depth (and n_k <= caps[k]), ordered by level."""
    labels = []
    for level in range(depth + 1):
        for combo in itertools.combinations_with_replacement(range(n_exp), level):
            n = [0] * n_exp
            for k in combo:
                n[k] += 1
            if caps is None or all(a <= b for a, b in zip(n, caps)):
                labels.append(tuple(n))
    return labels


def _heom_generator(sys: SystemSpec, cfg: HeomConfig):
    H = np.asarray(sys.hamiltonian, dtype=complex)
    Q = np.asarray(sys.coupling, dtype=complex)
    I2 = np.eye(2, dtype=complex)
    # row-major vectorisation: vec(A X B) = (A (x) B^T) vec(X)
    left = lambda A: np.kron(A, I2)
    right = lambda B: np.kron(I2, B.T)
    liou_s = -1j * (left(H) - right(H))
    if cfg.use_terminator and cfg.terminator_rate != 0.0:
        QQ = Q @ Q
        liou_s = liou_s - cfg.terminator_rate * (left(QQ) + right(QQ) - 2.0 * left(Q) @ right(Q))
    commQ = left(Q) - right(Q)

    ck, nuk, cbar = cfg.ck, cfg.nuk, cfg.cbar()
    K = ck.size
    if cfg.scaled_ados:
        scale = np.sqrt(np.maximum(np.abs(ck), np.abs(cbar)))
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(K)
    labels = _ado_indices(K, cfg.depth if K else 0, cfg.max_levels)
    index = {n: i for i, n in enumerate(labels)}

    rows, cols, vals = [], [], []

    def add(i, j, block):
        r, c = np.nonzero(block)
        rows.extend(4 * i + r)
        cols.extend(4 * j + c)
        vals.extend(block[r, c])

    I4 = np.eye(4, dtype=complex)
    for i, n in enumerate(labels):
        damp = sum(n[k] * nuk[k] for k in range(K))
        add(i, i, liou_s - damp * I4)
        for k in range(K):
            up = n[:k] + (n[k] + 1,) + n[k + 1:]
            j = index.get(up)
            if j is not None:
                if cfg.scaled_ados:
                    coef = scale[k] * math.sqrt(n[k] + 1)
                else:
                    coef = 1.0
                add(i, j, -1j * coef * commQ)
            if n[k] > 0:
                down = n[:k] + (n[k] - 1,) + n[k + 1:]
                j = index[down]
                if cfg.scaled_ados:
                    coef = math.sqrt(n[k]) / scale[k]
                else:
                    coef = n[k]
                add(i, j, -1j * coef * (ck[k] * left(Q) - cbar[k] * right(Q)))
    dim = 4 * len(labels)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    return G, labels


def _propagate_rho0(G, v0, times, chunk: int = 16):
    """Propagate and keep only the physical (level-0) block at each output time."""
    out = np.empty((times.size, 4), dtype=complex)
    v = v0
    t_prev = 0.0
    k = 0
    while k < times.size:
        block = times[k:k + chunk]
        if block[0] > t_prev:
            v = expm_multiply(G * (block[0] - t_prev), v)
        if block.size == 1:
            out[k] = v[:4]
        else:
            steps = np.diff(block)
            if np.allclose(steps, steps[0], rtol=1e-10, atol=0):
                vs = expm_multiply(G, v, start=0.0, stop=block[-1] - block[0], num=block.size, endpoint=True)
                out[k:k + block.size] = vs[:, :4]
                v = vs[-1]
            else:
                out[k] = v[:4]
                for m in range(1, block.size):
                    v = expm_multiply(G * steps[m - 1], v)
                    out[k + m] = v[:4]
        t_prev = block[-1]
        k += block.size
    return out


def heom_solve(
    sys: SystemSpec,
    cfg: HeomConfig,
    rho0,
    times,
    depth_check: bool = False,
    depth_tol: float = 1e-4,
    raise_on_nonconvergence: bool = False,
) -> Trajectory:
    """Reduced dynamics from the bosonic hierarchy truncated at ``cfg.depth``.

    With ``depth_check`` the hierarchy is also run at ``depth - 1``; the maximum
    ``<sigma_z>`` difference is stored in ``info["depth_difference"]`` and flagged when
    above ``depth_tol``.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InputError("times must be non-negative and strictly increasing")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (2, 2):
        raise InputError("rho0 must be a 2x2 density matrix")
    start = _time.perf_counter()
    G, labels = _heom_generator(sys, cfg)
    v0 = np.zeros(G.shape[0], dtype=complex)
    v0[:4] = rho0.reshape(-1)
    vals = _propagate_rho0(G, v0, times)
    states = vals.reshape(-1, 2, 2)
    if times[0] == 0:
        states[0] = rho0
    info = {"solver": "heom", "depth": cfg.depth, "n_ados": len(labels), "n_exponents": len(cfg.exponents),
            "terminator_rate": cfg.terminator_rate if cfg.use_terminator else 0.0,
            "wall_time": _time.perf_counter() - start}
    traj = Trajectory(times, states, None, info)
    if depth_check and cfg.depth > 1:
        lower = heom_solve(sys, cfg.with_depth(cfg.depth - 1), rho0, times)
        diff = float(np.max(np.abs(traj.sz - lower.sz)))
        info["depth_difference"] = diff
        info["depth_converged"] = diff < depth_tol
        if diff >= depth_tol and raise_on_nonconvergence:
            raise ConvergenceError(f"HEOM depth {cfg.depth} not converged (difference {diff:.3g})",
                                   {"depth": cfg.depth, "difference": diff})
    return traj


def _dephasing_tail(sd: SpectralDensityModel, w: float, t: float) -> float:
    # |2 sin^2(wt/2)/w^2| <= 2/w^2 and J coth <= coth(b w/2) * a w0^2 G / w^3 for w >> w0
    if w <= 2.0 * sd.omega0:
        return np.inf
    bound_j = sd.alpha * sd.omega0**2 * sd.gamma_width / (w**2 - sd.omega0**2) ** 2 * w
    return (4.0 / np.pi) * 2.0 * bound_j / np.tanh(sd.beta * w / 2.0) / (4.0 * w**3) * w


def dephasing_exponent(sd: SpectralDensityModel, t, tol: float = 1e-10):
    """``Gamma_d(t) = (4/pi) int_0^inf J(w) coth(beta w/2) (1 - cos w t) / w^2 dw``.

    Equivalently ``4 int_0^t ds int_0^s du Re C(u)``.
    """
    ts = np.asarray(t, dtype=float)
    out = np.empty(ts.shape)
    for idx, tv in np.ndenumerate(ts):
        if tv == 0 or sd.alpha == 0:
            out[idx] = 0.0
            continue

        def f(w, tv=tv):
            w = np.asarray(w, dtype=float)
            half = 0.5 * w * tv
            # (1 - cos w t)/w^2 = 2 sin^2(wt/2)/w^2, -> t^2/2 at w = 0
            small = np.abs(half) < 1e-8
            ratio = np.where(small, 0.5 * tv * tv, 2.0 * np.sin(half) ** 2 / np.where(small, 1.0, w * w))
            return (4.0 / np.pi) * sd.J_coth(w) * ratio

        val, _, _ = integrate_spectral(f, sd, lambda w: _dephasing_tail(sd, w, tv), tol=tol)
        out[idx] = val
    return out if ts.ndim else float(out)


def dephasing_exponent_series(series: ExponentialSeries, t):
    """Same exponent from a pole expansion of ``C``: ``4 Re sum_l a_l int_0^t int_0^s exp(-i z_l u)``."""
    t = np.asarray(t, dtype=float)
    k = 1j * series.poles
    a = series.amplitudes
    tt = np.multiply.outer(t, np.ones_like(k))
    val = a * (tt / k - (1.0 - np.exp(-k * tt)) / k**2)
    return 4.0 * np.real(val.sum(axis=-1))


def pure_dephasing_exact(sd: SpectralDensityModel, epsilon: float, times, rho0=None, tol: float = 1e-10) -> Trajectory:
    """Exact reduced dynamics for ``Delta = 0``: populations fixed, coherence decays as ``exp(-Gamma_d)``."""
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InputError("times must be non-negative and strictly increasing")
    if rho0 is None:
        rho0 = 0.5 * np.ones((2, 2), dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex)
    gd = dephasing_exponent(sd, times, tol=tol)
    states = np.empty((times.size, 2, 2), dtype=complex)
    states[:, 0, 0] = rho0[0, 0]
    states[:, 1, 1] = rho0[1, 1]
    coh = rho0[0, 1] * np.exp(-1j * epsilon * times) * np.exp(-gd)
    states[:, 0, 1] = coh
    states[:, 1, 0] = np.conj(coh) if np.isclose(rho0[1, 0], np.conj(rho0[0, 1])) else \
        rho0[1, 0] * np.exp(1j * epsilon * times) * np.exp(-gd)
    return Trajectory(times, states, None, {"solver": "pure_dephasing_exact", "decoherence_exponent": gd.tolist()})
