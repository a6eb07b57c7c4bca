"""Enlarged system + pseudomode master equation.

State layout: Hilbert space ``C^2 (x) Fock_{d_1} (x) ... (x) Fock_{d_N}`` with the two-level
system in slot 0 (basis order ``|e>, |g>`` so that ``sigma_z = diag(1, -1)``). Density
matrices are vectorised by column stacking, ``vec(A X B) = (B^T (x) A) vec(X)``.

The Hamiltonian may be non-Hermitian. Right multiplication uses ``H0`` itself, not its
adjoint, so the generator is ``-i (H0 rho - rho H0) + D rho`` and preserves the trace
but not the Hermiticity of the enlarged state.
"""
from __future__ import annotations

import csv
import math
import time as _time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import BDF, DOP853, RK45
from scipy.sparse.linalg import expm_multiply

from ._kernels import apply_split, apply_stencil, stencil_tables
from .exceptions import DimensionCapError, InputError, NumericalError, TruncationWarning
from .pseudomodes import PseudomodeSet

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SystemSpec",
    "EnlargedOperator",
    "Liouvillian",
    "PseudomodeLiouvillian",
    "EXCITED",
    "Trajectory",
    "SweepReport",
    "annihilation",
    "kron_embed",
    "assemble_h0",
    "assemble_liouvillian",
    "vacuum_state",
    "propagate",
    "partial_trace_modes",
    "qrt_correlation",
    "convergence_sweep",
    "lindblad_superoperator",
    "check_physicality",
    "DEFAULT_MAX_LIOUVILLE_DIM",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
EXCITED = np.array([[1, 0], [0, 0]], dtype=complex)

DEFAULT_MAX_LIOUVILLE_DIM = 2**24
DEFAULT_MAX_SPARSE_DIM = 2**21
DENSE_EXPM_MAX_DIM = 400


@dataclass(frozen=True)
class SystemSpec:
    """Biased two-level system ``H_S = (eps/2) sigma_z + (delta_x/2) sigma_x`` coupled through ``sigma_z``."""

    epsilon: float = 0.5
    delta_x: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta_x)):
            raise InputError("system parameters must be finite")

    @property
    def hamiltonian(self) -> np.ndarray:
        return 0.5 * self.epsilon * SIGMA_Z + 0.5 * self.delta_x * SIGMA_X

    @property
    def coupling(self) -> np.ndarray:
        return SIGMA_Z.copy()


@dataclass
class EnlargedOperator:
    matrix: sp.csr_matrix
    dims: tuple
    non_hermitian: Optional[bool] = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.matrix = sp.csr_matrix(self.matrix, dtype=complex)
        n = math.prod(self.dims)
        if self.matrix.shape != (n, n):
            raise InputError(f"matrix shape {self.matrix.shape} inconsistent with dims {self.dims}")

    @property
    def shape(self):
        return self.matrix.shape

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def is_hermitian(self, atol: float = 0.0) -> bool:
        return self.hermiticity_defect() <= atol


def annihilation(d: int) -> sp.csr_matrix:
    """Truncated bosonic lowering operator on ``d`` Fock levels."""
    return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, shape=(d, d), format="csr", dtype=complex)


def kron_embed(local, slot: int, dims: Sequence[int]) -> EnlargedOperator:
    """Place ``local`` on tensor factor ``slot``; identities elsewhere."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= slot < len(dims):
        raise InputError(f"slot {slot} out of range for {len(dims)} factors")
    local = sp.csr_matrix(local, dtype=complex)
    if local.shape != (dims[slot], dims[slot]):
        raise InputError(f"local operator shape {local.shape} does not match dims[{slot}]={dims[slot]}")
    left = math.prod(dims[:slot])
    right = math.prod(dims[slot + 1:])
    op = sp.kron(sp.kron(sp.identity(left, dtype=complex, format="csr"), local, format="csr"),
                 sp.identity(right, dtype=complex, format="csr"), format="csr")
    return EnlargedOperator(op, dims)


def _full_dims(pm: PseudomodeSet) -> tuple:
    return (2,) + pm.dims


def assemble_h0(sys: SystemSpec, pm: PseudomodeSet) -> EnlargedOperator:
    """``H0 = H_S + sum_l xi_l b_l^dag b_l + A (x) sum_l g_l (b_l + b_l^dag)``."""
    dims = _full_dims(pm)
    n = math.prod(dims)
    h = kron_embed(sys.hamiltonian, 0, dims).matrix
    if len(pm):
        A = kron_embed(sys.coupling, 0, dims).matrix
        bprime = sp.csr_matrix((n, n), dtype=complex)
        for slot, mode in enumerate(pm.modes, start=1):
            b = annihilation(mode.fock_dim)
            h = h + mode.xi * kron_embed(b.T @ b, slot, dims).matrix
            bprime = bprime + mode.g * kron_embed(b + b.T, slot, dims).matrix
        h = h + A @ bprime
    h = sp.csr_matrix(h)
    h.eliminate_zeros()
    return EnlargedOperator(h, dims, non_hermitian=not pm.is_hermitian())


class Liouvillian:
    """Linear generator ``L rho = -i(H rho - rho H) + sum_k r_k (c_k rho c_k^dag - {c_k^dag c_k, rho}/2)``.

    Acts matrix-free on dense density matrices; :meth:`to_sparse` materialises the
    column-stacking superoperator when small enough.
    """

    def __init__(self, hamiltonian, jumps, dims, max_sparse_dim: int = DEFAULT_MAX_SPARSE_DIM):
        self.dims = tuple(int(d) for d in dims)
        self.n = math.prod(self.dims)
        self.hamiltonian = sp.csr_matrix(hamiltonian, dtype=complex)
        self.jumps = [(float(rate), sp.csr_matrix(op, dtype=complex)) for rate, op in jumps if rate != 0.0]
        self.max_sparse_dim = int(max_sparse_dim)
        ncn = sp.csr_matrix((self.n, self.n), dtype=complex)
        for rate, c in self.jumps:
            ncn = ncn + rate * (c.conj().T @ c)
        # rho -> -i K_left rho + i rho K_right
        self._k_left = sp.csr_matrix(self.hamiltonian - 0.5j * ncn)
        self._k_right_t = sp.csr_matrix((self.hamiltonian + 0.5j * ncn).T)
        self._jumps_conj = [(rate, c, sp.csr_matrix(c.conj())) for rate, c in self.jumps]
        self._sparse = None

    @property
    def dim(self) -> int:
        """Dimension of the vectorised (Liouville) space."""
        return self.n * self.n

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self._k_left @ rho)
        out += 1j * (self._k_right_t @ rho.T).T
        for rate, c, cc in self._jumps_conj:
            out += rate * (cc @ (c @ rho).T).T
        return out

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        rho = vec.reshape(self.n, self.n, order="F")
        return self.apply(rho).reshape(-1, order="F")

    def to_sparse(self) -> sp.csr_matrix:
        if self.dim > self.max_sparse_dim:
            raise DimensionCapError(
                f"sparse superoperator of dimension {self.dim} exceeds cap {self.max_sparse_dim}; "
                "use the matrix-free integrator or reduce Fock dimensions"
            )
        if self._sparse is None:
            eye = sp.identity(self.n, dtype=complex, format="csr")
            # vec(rho K) = (K^T (x) I) vec(rho); _k_right_t already stores K^T
            L = -1j * sp.kron(eye, self._k_left) + 1j * sp.kron(self._k_right_t, eye)
            for rate, c, cc in self._jumps_conj:
                L = L + rate * sp.kron(cc, c)
            self._sparse = sp.csr_matrix(L)
        return self._sparse

    def dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


class PseudomodeLiouvillian(Liouvillian):
    """Pseudomode generator with a compiled stencil ``matvec``.

    The parent class still provides the explicit sparse superoperator, which the
    test-suite uses to cross-check the stencil.
    """

    structured = True

    def __init__(self, hamiltonian, jumps, dims, tables, max_sparse_dim: int = DEFAULT_MAX_SPARSE_DIM):
        super().__init__(hamiltonian, jumps, dims, max_sparse_dim=max_sparse_dim)
        self._tables = tables

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        return apply_stencil(self._tables, np.asarray(vec, dtype=complex))

    def matvec_split(self, y: np.ndarray) -> np.ndarray:
        """Action on ``[Re vec(rho), Im vec(rho)]``; the layout used for time stepping."""
        return apply_split(self._tables, y)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return self.matvec(np.asarray(rho, dtype=complex).reshape(-1, order="F")).reshape(self.n, self.n, order="F")


def assemble_liouvillian(sys: SystemSpec, pm: PseudomodeSet, max_dim: int = DEFAULT_MAX_LIOUVILLE_DIM,
                         max_sparse_dim: int = DEFAULT_MAX_SPARSE_DIM) -> Liouvillian:
    """Pseudomode master equation generator, including ``2 gamma_D (s_z rho s_z - rho)`` when set."""
    dims = _full_dims(pm)
    n = math.prod(dims)
    if n * n > max_dim:
        raise DimensionCapError(
            f"Liouville dimension {n * n} (Hilbert {n}, dims {dims}) exceeds cap {max_dim}; "
            "reduce the Fock dimensions"
        )
    h0 = assemble_h0(sys, pm)
    jumps = []
    for slot, mode in enumerate(pm.modes, start=1):
        jumps.append((2.0 * mode.lam, kron_embed(annihilation(mode.fock_dim), slot, dims).matrix))
    if pm.dephasing_rate != 0.0:
        # sigma_z^2 = 1: 2 g (s rho s - rho) is a Lindblad term with rate 2 g
        jumps.append((2.0 * pm.dephasing_rate, kron_embed(sys.coupling, 0, dims).matrix))
    tables = stencil_tables(sys.hamiltonian, pm.couplings, [m.xi for m in pm.modes], [m.lam for m in pm.modes],
                            pm.dims, pm.dephasing_rate)
    L = PseudomodeLiouvillian(h0.matrix, jumps, dims, tables, max_sparse_dim=max_sparse_dim)
    L.non_hermitian = h0.non_hermitian
    return L


def vacuum_state(rho_s, dims: Sequence[int]) -> np.ndarray:
    """``rho_S (x) |0><0|`` on all pseudomode slots."""
    rho_s = np.asarray(rho_s, dtype=complex)
    rest = math.prod(dims[1:])
    vac = np.zeros((rest, rest), dtype=complex)
    vac[0, 0] = 1.0
    return np.kron(rho_s, vac)


def partial_trace_modes(rho, dims: Optional[Sequence[int]] = None) -> np.ndarray:
    """Trace out every pseudomode slot, leaving the 2x2 system block."""
    if isinstance(rho, EnlargedOperator):
        dims = rho.dims
        rho = rho.dense()
    if dims is None:
        raise InputError("dims are required for a bare matrix")
    rho = np.asarray(rho)
    d0 = dims[0]
    rest = math.prod(dims[1:])
    if rho.shape != (d0 * rest, d0 * rest):
        raise InputError(f"matrix shape {rho.shape} inconsistent with dims {tuple(dims)}")
    return np.einsum("ikjk->ij", rho.reshape(d0, rest, d0, rest))


def _top_level_populations(rho: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    diag = np.real(np.diagonal(rho)).reshape(dims)
    pops = []
    for axis in range(1, len(dims)):
        other = tuple(a for a in range(len(dims)) if a != axis)
        pops.append(abs(diag.sum(axis=other)[-1]))
    return np.array(pops)


@dataclass
class Trajectory:
    times: np.ndarray
    reduced_states: np.ndarray
    top_populations: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.reduced_states = np.asarray(self.reduced_states, dtype=complex)
        if self.reduced_states.shape != (self.times.size, 2, 2):
            raise InputError("reduced_states must have shape (n_times, 2, 2)")

    def expect(self, op) -> np.ndarray:
        return np.einsum("tij,ji->t", self.reduced_states, np.asarray(op, dtype=complex))

    @property
    def observables(self) -> dict:
        return {
            "sx": self.expect(SIGMA_X).real,
            "sy": self.expect(SIGMA_Y).real,
            "sz": self.expect(SIGMA_Z).real,
        }

    @property
    def sz(self) -> np.ndarray:
        return self.expect(SIGMA_Z).real

    @property
    def coherence(self) -> np.ndarray:
        """``rho_eg(t) = <e|rho_S|g>``."""
        return self.reduced_states[:, 0, 1]

    # -- CSV ---------------------------------------------------------
    _RHO_COLS = [f"rho_{i}{j}_{part}" for i in range(2) for j in range(2) for part in ("re", "im")]

    def to_csv(self, path) -> None:
        n_top = 0 if self.top_populations is None else self.top_populations.shape[1]
        header = ["t"] + self._RHO_COLS + ["sx", "sy", "sz"] + [f"top_pop_{k}" for k in range(n_top)]
        obs = self.observables
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [t]
                for i in range(2):
                    for j in range(2):
                        row += [self.reduced_states[k, i, j].real, self.reduced_states[k, i, j].imag]
                row += [obs["sx"][k], obs["sy"][k], obs["sz"][k]]
                if n_top:
                    row += list(self.top_populations[k])
                w.writerow([format(float(v), ".17g") for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float).reshape(-1, len(header))
        col = {name: i for i, name in enumerate(header)}
        missing = [c for c in ["t"] + cls._RHO_COLS if c not in col]
        if missing:
            raise InputError(f"trajectory CSV missing columns {missing}")
        states = np.empty((rows.shape[0], 2, 2), dtype=complex)
        for i in range(2):
            for j in range(2):
                states[:, i, j] = rows[:, col[f"rho_{i}{j}_re"]] + 1j * rows[:, col[f"rho_{i}{j}_im"]]
        tops = [c for c in header if c.startswith("top_pop_")]
        top = rows[:, [col[c] for c in tops]] if tops else None
        return cls(rows[:, col["t"]], states, top, {"source": str(path)})


def check_physicality(traj: Trajectory) -> dict:
    """Worst-case trace defect, Hermiticity defect and minimum eigenvalue of ``rho_S(t)``."""
    rs = traj.reduced_states
    trace = np.abs(np.trace(rs, axis1=1, axis2=2) - 1.0)
    herm = np.abs(rs - np.conj(np.swapaxes(rs, 1, 2))).max(axis=(1, 2))
    hpart = 0.5 * (rs + np.conj(np.swapaxes(rs, 1, 2)))
    mins = np.linalg.eigvalsh(hpart)[:, 0]
    return {
        "trace_defect": float(trace.max()),
        "hermiticity_defect": float(herm.max()),
        "min_eigenvalue": float(mins.min()),
    }


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0:
        raise InputError("times must be non-empty")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InputError("times must be non-negative and strictly increasing")
    return times


def _is_uniform(times) -> bool:
    if times.size < 3:
        return True
    d = np.diff(times)
    return bool(np.allclose(d, d[0], rtol=1e-10, atol=0))


def propagate(
    L: Liouvillian,
    rho0,
    times,
    rtol: float = 1e-10,
    atol: Optional[float] = None,
    method: str = "auto",
    top_threshold: float = 1e-3,
) -> Trajectory:
    """Integrate ``d rho / dt = L rho`` from ``t = 0`` and return reduced states at ``times``.

    ``method``: ``"auto"`` (dense matrix exponential up to Liouville dimension 400,
    then ``"rk45"`` for pseudomode generators and ``"rk"`` otherwise), ``"expm"``,
    ``"rk"`` / ``"rk45"`` (adaptive DOP853 / Dormand-Prince 5(4); compiled stencil for
    pseudomode generators, sparse superoperator otherwise),
    ``"bdf"`` (implicit, sparse Jacobian) or ``"krylov"`` (sparse ``expm_multiply``).
    A 2x2 ``rho0`` is extended with the pseudomode vacuum.
    """
    times = _check_times(times)
    dims = L.dims
    if isinstance(rho0, EnlargedOperator):
        rho0 = rho0.dense()
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape == (2, 2) and L.n != 2:
        rho0 = vacuum_state(rho0, dims)
    if rho0.shape != (L.n, L.n):
        raise InputError(f"initial state shape {rho0.shape} does not match Hilbert dimension {L.n}")
    if atol is None:
        atol = 1e-2 * rtol
    if method == "auto":
        if L.dim <= DENSE_EXPM_MAX_DIM:
            method = "expm"
        else:
            method = "rk45" if getattr(L, "structured", False) else "rk"

    v0 = rho0.reshape(-1, order="F")
    t_start = _time.perf_counter()
    info = {"method": method, "rtol": rtol, "atol": atol, "dims": list(dims)}
    n = L.n
    reduced = np.empty((times.size, 2, 2), dtype=complex)
    top = np.empty((times.size, len(dims) - 1))

    def record(k, v):
        rho = v.reshape(n, n, order="F")
        reduced[k] = partial_trace_modes(rho, dims)
        top[k] = _top_level_populations(rho, dims)

    if method == "expm":
        for k, v in enumerate(_propagate_expm(L.dense(), v0, times)):
            record(k, v)
    elif method == "krylov":
        for k, v in enumerate(_propagate_krylov(L.to_sparse(), v0, times)):
            record(k, v)
    elif method in ("rk", "rk45", "bdf"):
        rec = record
        if method in ("rk", "rk45"):
            if getattr(L, "structured", False):
                size = v0.size
                v0 = np.concatenate([v0.real, v0.imag])
                fun = lambda t, y: L.matvec_split(y)
                rec = lambda k, y: record(k, y[:size] + 1j * y[size:])
            elif L.dim <= L.max_sparse_dim:
                S = L.to_sparse()
                fun = lambda t, y: S @ y
            else:
                fun = lambda t, y: L.matvec(y)
            solver_cls, kw = (DOP853 if method == "rk" else RK45), {}
        else:
            S = L.to_sparse()
            fun = lambda t, y: S @ y
            solver_cls, kw = BDF, {"jac": S}
        info["nfev"] = _step_and_record(solver_cls, fun, v0, times, rtol, atol, rec, kw)
    else:
        raise InputError(f"unknown propagation method {method!r}")
    info["wall_time"] = _time.perf_counter() - t_start

    if times[0] == 0:
        reduced[0] = partial_trace_modes(rho0, dims)
    info["max_top_population"] = top.max(axis=0).tolist() if top.size else []
    if top.size and top.max() > top_threshold:
        warnings.warn(
            f"top Fock level population {top.max():.3g} exceeds {top_threshold:g}; increase fock_dim",
            TruncationWarning, stacklevel=2,
        )
        info["truncation_warning"] = True
    return Trajectory(times, reduced, top, info)


def _step_and_record(solver_cls, fun, v0, times, rtol, atol, record, kw):
    """Advance an adaptive solver step by step, recording only at the output times.

    Full enlarged states are never stored, only the reduced quantities ``record`` keeps.
    """
    k = 0
    while k < times.size and times[k] == 0:
        record(k, v0)
        k += 1
    if k == times.size:
        return 0
    solver = solver_cls(fun, 0.0, v0, times[-1], rtol=rtol, atol=atol, **kw)
    while k < times.size:
        msg = solver.step()
        if solver.status == "failed":
            raise NumericalError(f"integration failed: {msg}", {"t_reached": float(solver.t), "nfev": solver.nfev})
        if not np.all(np.isfinite(solver.y)):
            raise NumericalError("non-finite state during integration", {"t_reached": float(solver.t)})
        if k < times.size and times[k] <= solver.t:
            dense = solver.dense_output()
            while k < times.size and times[k] <= solver.t:
                record(k, solver.y if times[k] == solver.t else dense(times[k]))
                k += 1
    return int(solver.nfev)


def _propagate_expm(Ld: np.ndarray, v0, times):
    out = np.empty((times.size, v0.size), dtype=complex)
    uniform = _is_uniform(times)
    v = scipy.linalg.expm(Ld * times[0]) @ v0 if times[0] > 0 else v0.copy()
    out[0] = v
    step = None
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        if uniform:
            if step is None:
                step = scipy.linalg.expm(Ld * dt)
            v = step @ v
        else:
            v = scipy.linalg.expm(Ld * dt) @ v
        out[k] = v
    return out


def _propagate_krylov(S, v0, times):
    if _is_uniform(times) and times.size > 1:
        v = expm_multiply(S, v0, start=0.0, stop=times[0], num=2, endpoint=True)[-1] if times[0] > 0 else v0
        return expm_multiply(S, v, start=times[0], stop=times[-1], num=times.size, endpoint=True)
    out = np.empty((times.size, v0.size), dtype=complex)
    v, t_prev = v0, 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            v = expm_multiply(S * (t - t_prev), v)
        out[k] = v
        t_prev = t
    return out


def qrt_correlation(pm: PseudomodeSet, taus) -> np.ndarray:
    """``C'(tau) = Tr{B' exp(L_M tau)[B' rho_M(0)]}`` for the free, damped modes in vacuum."""
    taus = _check_times(taus)
    dims = pm.dims
    if not dims:
        return np.zeros(taus.size, dtype=complex)
    n = math.prod(dims)
    h = sp.csr_matrix((n, n), dtype=complex)
    bprime = sp.csr_matrix((n, n), dtype=complex)
    jumps = []
    for slot, mode in enumerate(pm.modes):
        b = annihilation(mode.fock_dim)
        bl = kron_embed(b, slot, dims).matrix
        h = h + mode.xi * (bl.T @ bl)
        bprime = bprime + mode.g * (bl + bl.T)
        jumps.append((2.0 * mode.lam, bl))
    LM = Liouvillian(h, jumps, dims)
    vac = np.zeros((n, n), dtype=complex)
    vac[0, 0] = 1.0
    x0 = (bprime @ vac).reshape(-1, order="F")
    states = _propagate_krylov(LM.to_sparse(), x0, taus)
    # Tr(B' X) = sum_ij B'_ji X_ij = vec(B'^T) . vec(X)
    weights = np.asarray(bprime.T.todense()).reshape(-1, order="F")
    return states @ weights


def lindblad_superoperator(H, c_ops) -> np.ndarray:
    """Dense textbook GKSL generator for Hermitian ``H`` and collapse operators ``c_ops``.

    Column stacking; used as an independent reference for the Hermitian limit.
    """
    H = np.asarray(H.toarray() if sp.issparse(H) else H, dtype=complex)
    n = H.shape[0]
    eye = np.eye(n, dtype=complex)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for c in c_ops:
        c = np.asarray(c.toarray() if sp.issparse(c) else c, dtype=complex)
        cdc = c.conj().T @ c
        L += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return L


@dataclass
class SweepReport:
    settings: list
    max_differences: list
    threshold: float
    converged: bool
    converged_at: Optional[object]
    trajectories: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "settings": [list(s) if isinstance(s, tuple) else s for s in self.settings],
            "max_differences": self.max_differences,
            "threshold": self.threshold,
            "converged": self.converged,
            "converged_at": list(self.converged_at) if isinstance(self.converged_at, tuple) else self.converged_at,
        }


def _sweep_one(args):
    sys, pm, times, rho_s0, kw = args
    L = assemble_liouvillian(sys, pm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return propagate(L, rho_s0, times, **kw)


def convergence_sweep(
    sys: SystemSpec,
    pm: PseudomodeSet,
    times,
    dims_schedule: Sequence,
    threshold: float = 1e-4,
    rho_s0=None,
    max_workers: int = 1,
    **propagate_kw,
) -> SweepReport:
    """Propagate at increasing Fock truncations and compare consecutive ``<sigma_z(t)>``.

    Integer entries set the dimension of modes labelled ``resonant``; tuple entries
    give every mode's dimension explicitly.
    """
    settings = list(dims_schedule)
    if not settings:
        raise InputError("dims_schedule must be non-empty")
    sets = []
    for s in settings:
        sets.append(pm.with_dims(s) if isinstance(s, (tuple, list)) else pm.with_resonant_dim(int(s)))
    sizes = [math.prod(p.dims) for p in sets]
    if any(b < a for a, b in zip(sizes, sizes[1:])):
        raise InputError("dims_schedule must be increasing")
    rho_s0 = EXCITED if rho_s0 is None else rho_s0
    jobs = [(sys, p, times, rho_s0, propagate_kw) for p in sets]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as ex:
            trajs = list(ex.map(_sweep_one, jobs))
    else:
        trajs = [_sweep_one(j) for j in jobs]
    diffs = [float(np.max(np.abs(b.sz - a.sz))) for a, b in zip(trajs, trajs[1:])]
    converged_at = None
    for k, d in enumerate(diffs):
        if d < threshold:
            converged_at = settings[k]
            break
    if len(settings) == 1:
        converged_at = None
    return SweepReport(settings, diffs, threshold, converged_at is not None, converged_at, trajs)
