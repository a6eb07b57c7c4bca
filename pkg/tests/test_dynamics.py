import warnings

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from pseudomode.correlation import ExponentialSeries, PoleTerm, SpectralDensityModel
from pseudomode.dynamics import (
    EXCITED,
    SIGMA_Z,
    SystemSpec,
    Trajectory,
    annihilation,
    assemble_h0,
    assemble_liouvillian,
    check_physicality,
    convergence_sweep,
    kron_embed,
    lindblad_superoperator,
    partial_trace_modes,
    propagate,
    qrt_correlation,
    vacuum_state,
)
from pseudomode.exceptions import DimensionCapError, InputError, TruncationWarning
from pseudomode.pseudomodes import Pseudomode, PseudomodeSet, series_to_pseudomodes, spin_boson_pipeline

# small Fock spaces are deliberate here; every comparison uses the same truncation
pytestmark = pytest.mark.filterwarnings("ignore::pseudomode.exceptions.TruncationWarning")


def random_density(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def complex_set(dims=(3, 3), gamma_d=0.0):
    series = ExponentialSeries([PoleTerm(0.03 + 0.02j, 0.7 - 0.1j), PoleTerm(-0.02 + 0.005j, -0.5 - 0.3j)])
    return series_to_pseudomodes(series, list(dims), dephasing_rate=gamma_d)


# -- operators ---------------------------------------------------------

def test_kron_embed_identity():
    dims = (2, 3, 4)
    assert (kron_embed(np.eye(3), 1, dims).matrix != sp.identity(24)).nnz == 0


def test_ladder_commutator_below_top_level():
    dims = (2, 5, 3)
    b = kron_embed(annihilation(5), 1, dims).matrix
    comm = (b @ b.conj().T - b.conj().T @ b).toarray()
    keep = np.kron(np.kron(np.ones(2), np.arange(5) < 4), np.ones(3)).astype(bool)
    assert np.allclose(comm[np.ix_(keep, keep)], np.eye(keep.sum()))


def test_disjoint_slots_commute():
    dims = (2, 4)
    sz = kron_embed(SIGMA_Z, 0, dims).matrix
    b = kron_embed(annihilation(4), 1, dims).matrix
    assert abs(sz @ b - b @ sz).max() == 0


def test_kron_embed_dimension_mismatch():
    with pytest.raises(InputError):
        kron_embed(np.eye(3), 1, (2, 4))
    with pytest.raises(InputError):
        kron_embed(np.eye(2), 3, (2, 4))


def test_h0_hermitian_for_real_couplings():
    pm = PseudomodeSet((Pseudomode(0.5, 0.1, 0.7, 4), Pseudomode(-0.2, 0.3, 0.2, 3)))
    h = assemble_h0(SystemSpec(0.5, 1.0), pm)
    assert h.hermiticity_defect() == 0 and not h.non_hermitian


def test_h0_antihermitian_part_is_the_coupling_block():
    pm = PseudomodeSet((Pseudomode(0.5, 0.1, 1j, 4),))
    h = assemble_h0(SystemSpec(0.5, 1.0), pm).dense()
    anti = 0.5 * (h - h.conj().T)
    x = kron_embed(annihilation(4) + annihilation(4).T, 1, (2, 4)).matrix
    coupling = (kron_embed(SIGMA_Z, 0, (2, 4)).matrix @ x).toarray()
    assert np.allclose(anti, 1j * coupling)


def test_h0_free_modes_diagonal():
    pm = PseudomodeSet((Pseudomode(0.5, 0.1, 0.0, 3), Pseudomode(1.5, 0.1, 0.0, 2)))
    h = assemble_h0(SystemSpec(0.0, 0.0), pm).dense()
    n1 = np.arange(3)[:, None]
    n2 = np.arange(2)[None, :]
    expected = np.tile((0.5 * n1 + 1.5 * n2).ravel(), 2)
    assert np.allclose(h, np.diag(expected))


# -- Liouvillian -------------------------------------------------------

def test_trace_preservation_random_states(rng):
    pm = complex_set((3, 2), gamma_d=-0.01)
    L = assemble_liouvillian(SystemSpec(0.5, 1.0), pm)
    n = L.n
    for _ in range(100):
        rho = random_density(n, rng)
        assert abs(np.trace(L.apply(rho))) < 1e-12


def test_stencil_matches_sparse_superoperator(rng):
    for pm in (complex_set((4, 3), gamma_d=0.013), complex_set((2, 5))):
        L = assemble_liouvillian(SystemSpec(0.5, 1.0), pm)
        v = rng.normal(size=L.dim) + 1j * rng.normal(size=L.dim)
        ref = L.to_sparse() @ v
        assert np.max(np.abs(L.matvec(v) - ref)) < 1e-13 * np.max(np.abs(ref))


def test_damped_mode_occupation():
    lam = 0.3
    pm = PseudomodeSet((Pseudomode(0.4, lam, 0.0, 4),))
    L = assemble_liouvillian(SystemSpec(0.0, 0.0), pm)
    mode = np.zeros((4, 4), dtype=complex)
    mode[2, 2] = 1.0
    rho0 = np.kron(EXCITED, mode)
    number = np.kron(np.eye(2), np.diag(np.arange(4.0)))
    for t in (0.5, 2.0):
        rho = (scipy.linalg.expm(L.dense() * t) @ rho0.reshape(-1, order="F")).reshape(8, 8, order="F")
        assert np.trace(number @ rho).real == pytest.approx(2.0 * np.exp(-2 * lam * t), rel=1e-12)


def test_flat_dephasing_only():
    gd = 0.07
    L = assemble_liouvillian(SystemSpec(0.0, 0.0), PseudomodeSet((), gd))
    rho0 = np.array([[0.6, 0.3 - 0.1j], [0.3 + 0.1j, 0.4]])
    t = np.linspace(0, 5, 11)
    tr = propagate(L, rho0, t)
    assert np.allclose(tr.reduced_states[:, 0, 0], 0.6, atol=1e-14)
    assert np.allclose(tr.coherence, rho0[0, 1] * np.exp(-4 * gd * t), atol=1e-13)


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        assemble_liouvillian(SystemSpec(), complex_set((10, 10)), max_dim=10_000)


# -- propagation -------------------------------------------------------

def test_zero_generator_keeps_state():
    rho0 = np.array([[0.3, 0.2j], [-0.2j, 0.7]])
    tr = propagate(assemble_liouvillian(SystemSpec(0.0, 0.0), PseudomodeSet(())), rho0, [0.0, 1.0, 7.0])
    assert np.allclose(tr.reduced_states, rho0, atol=0)


def test_initial_point_is_exact(tls):
    pm = complex_set((4, 4))
    rho0 = np.array([[0.25, 0.1 + 0.2j], [0.1 - 0.2j, 0.75]])
    for method in ("expm", "rk", "rk45"):
        tr = propagate(assemble_liouvillian(tls, pm), rho0, [0.0, 0.5], method=method)
        assert np.array_equal(tr.reduced_states[0], rho0)


@pytest.mark.parametrize("method", ["rk", "rk45", "krylov", "bdf"])
def test_integrators_match_matrix_exponential(tls, method):
    pm = PseudomodeSet((Pseudomode(0.3, 0.2, 0.6, 5),))
    L = assemble_liouvillian(tls, pm)
    t = np.linspace(0, 6, 13)
    ref = propagate(L, EXCITED, t, method="expm")
    rtol = 1e-12 if method != "bdf" else 1e-11
    tol = 1e-9 if method != "bdf" else 1e-7
    tr = propagate(L, EXCITED, t, method=method, rtol=rtol)
    assert np.max(np.abs(tr.reduced_states - ref.reduced_states)) < tol


def test_expm_matches_direct_exponential(tls):
    pm = PseudomodeSet((Pseudomode(0.3, 0.2, 0.6, 5),))
    L = assemble_liouvillian(tls, pm)
    t = np.array([0.0, 0.7, 3.1])
    tr = propagate(L, EXCITED, t, method="expm")
    v0 = vacuum_state(EXCITED, (2, 5)).reshape(-1, order="F")
    for k, tk in enumerate(t):
        rho = (scipy.linalg.expm(L.dense() * tk) @ v0).reshape(10, 10, order="F")
        assert np.allclose(tr.reduced_states[k], partial_trace_modes(rho, (2, 5)), atol=1e-12)


def test_bad_inputs(tls):
    L = assemble_liouvillian(tls, PseudomodeSet((Pseudomode(0.3, 0.2, 0.6, 3),)))
    with pytest.raises(InputError):
        propagate(L, EXCITED, [0.0, 2.0, 1.0])
    with pytest.raises(InputError):
        propagate(L, np.eye(3), [0.0, 1.0])
    with pytest.raises(InputError):
        propagate(L, EXCITED, [0.0, 1.0], method="euler")


def test_truncation_warning(tls):
    pm = PseudomodeSet((Pseudomode(0.0, 0.05, 1.5, 2),))
    with pytest.warns(TruncationWarning):
        tr = propagate(assemble_liouvillian(tls, pm), EXCITED, np.linspace(0, 5, 6))
    assert tr.info["truncation_warning"]


def test_uncoupled_system_rotates_unitarily():
    sys = SystemSpec(0.5, 1.0)
    t = np.linspace(0, 10, 21)
    tr = propagate(assemble_liouvillian(sys, PseudomodeSet(())), EXCITED, t)
    for k, tk in enumerate(t):
        u = scipy.linalg.expm(-1j * sys.hamiltonian * tk)
        assert np.allclose(tr.reduced_states[k], u @ EXCITED @ u.conj().T, atol=1e-12)


# -- partial trace -----------------------------------------------------

def test_partial_trace_of_product(rng):
    rs = random_density(2, rng)
    rm = 2.5 * random_density(6, rng)
    assert np.allclose(partial_trace_modes(np.kron(rs, rm), (2, 2, 3)), 2.5 * rs)


def test_partial_trace_linear_and_trace_preserving(rng):
    dims = (2, 3, 2)
    a = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    b = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    pa, pb = partial_trace_modes(a, dims), partial_trace_modes(b, dims)
    assert np.allclose(partial_trace_modes(2 * a - 1j * b, dims), 2 * pa - 1j * pb)
    assert np.trace(pa) == pytest.approx(np.trace(a))


def test_partial_trace_requires_dims():
    with pytest.raises(InputError):
        partial_trace_modes(np.eye(4))
    with pytest.raises(InputError):
        partial_trace_modes(np.eye(5), (2, 2))


# -- regression theorem -------------------------------------------------

def test_qrt_single_mode():
    g, xi, lam = 0.4 - 0.3j, 0.8, 0.25
    pm = PseudomodeSet((Pseudomode(xi, lam, g, 3),))
    tau = np.linspace(0, 10, 41)
    assert np.max(np.abs(qrt_correlation(pm, tau) - g**2 * np.exp(-1j * xi * tau - lam * tau))) < 1e-12


def test_qrt_at_zero_is_sum_of_squares():
    pm = complex_set((3, 3))
    assert qrt_correlation(pm, [0.0])[0] == pytest.approx(np.sum(pm.couplings**2), abs=1e-14)


def test_qrt_reproduces_pipeline_series(sd_b):
    pm = spin_boson_pipeline(sd_b, "full_fit", resonant_dim=3, aux_dim=3)
    tau = np.linspace(0, 20, 101)
    assert np.max(np.abs(qrt_correlation(pm, tau) - pm.correlation(tau))) < 1e-8


# -- invariants ---------------------------------------------------------

def test_gauge_invariance_small(tls):
    pm = complex_set((5, 4), gamma_d=-0.02)
    t = np.linspace(0, 8, 17)
    base = propagate(assemble_liouvillian(tls, pm), EXCITED, t, rtol=1e-12)
    for k in range(2):
        flipped = propagate(assemble_liouvillian(tls, pm.flip_coupling(k)), EXCITED, t, rtol=1e-12)
        assert np.max(np.abs(flipped.sz - base.sz)) < 1e-10


def test_hermitian_limit_matches_textbook_lindblad(tls):
    lam, g = 0.35, 0.6
    pm = series_to_pseudomodes(ExponentialSeries([PoleTerm(g**2, -1j * lam)]), [6])
    t = np.linspace(0, 10, 21)
    tr = propagate(assemble_liouvillian(tls, pm), EXCITED, t, method="rk", rtol=1e-12)
    b = np.kron(np.eye(2), annihilation(6).toarray())
    H = np.kron(tls.hamiltonian, np.eye(6)) + g * np.kron(SIGMA_Z, np.eye(6)) @ (b + b.T)
    Ld = lindblad_superoperator(H, [np.sqrt(2 * lam) * b])
    v0 = vacuum_state(EXCITED, (2, 6)).reshape(-1, order="F")
    for k, tk in enumerate(t):
        rho = (scipy.linalg.expm(Ld * tk) @ v0).reshape(12, 12, order="F")
        assert np.max(np.abs(tr.reduced_states[k] - partial_trace_modes(rho, (2, 6)))) < 1e-9


def test_physicality_report():
    states = np.array([[[0.5, 0.1], [0.1, 0.5]], [[1.0 + 1e-9, 0.0], [1e-7, -1e-3]]], dtype=complex)
    rep = check_physicality(Trajectory([0.0, 1.0], states))
    assert rep["trace_defect"] == pytest.approx(1e-3, rel=1e-3)
    assert rep["hermiticity_defect"] == pytest.approx(1e-7)
    assert rep["min_eigenvalue"] < -9e-4


def test_trajectory_csv_round_trip(tmp_path, tls):
    pm = complex_set((3, 3))
    tr = propagate(assemble_liouvillian(tls, pm), EXCITED, np.linspace(0, 2, 5))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    back = Trajectory.from_csv(path)
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.reduced_states, tr.reduced_states)
    assert np.array_equal(back.top_populations, tr.top_populations)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "rho_00_re", "rho_00_im"] and "sz" in header


# -- convergence sweeps -------------------------------------------------

def test_sweep_zero_coupling(tls):
    pm = spin_boson_pipeline(SpectralDensityModel(0.0, 0.5, 0.05, 1.0), "terminator")
    rep = convergence_sweep(tls, pm, np.linspace(0, 5, 11), [2, 3, 4])
    assert rep.converged and rep.converged_at == 2
    assert rep.max_differences == [0.0, 0.0]


def test_sweep_weak_coupling(tls):
    pm = spin_boson_pipeline(SpectralDensityModel(0.01, 0.5, 0.05, 1.0), "terminator", aux_dim=2)
    rep = convergence_sweep(tls, pm, np.linspace(0, 25, 51), [2, 3, 4, 5, 6], rtol=1e-10)
    # d=4 -> 5 differs by 1.4e-4, just above the default threshold
    assert rep.max_differences[2] < 2e-4
    assert rep.converged and rep.converged_at == 5


def test_sweep_strong_coupling_shrinks(tls, sd_b):
    pm = spin_boson_pipeline(sd_b, "terminator", aux_dim=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        rep = convergence_sweep(tls, pm, np.linspace(0, 10, 51), [4, 6, 8, 10], threshold=1e-4, rtol=1e-8)
    d = rep.max_differences
    assert all(b < a for a, b in zip(d, d[1:]))


def test_sweep_rejects_shrinking_schedule(tls, sd_b):
    pm = spin_boson_pipeline(sd_b, "terminator", aux_dim=2)
    with pytest.raises(InputError):
        convergence_sweep(tls, pm, [0.0, 1.0], [6, 4])
