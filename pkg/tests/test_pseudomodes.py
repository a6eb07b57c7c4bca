import numpy as np
import pytest

from pseudomode.correlation import (
    ExponentialSeries,
    PoleTerm,
    SpectralDensityModel,
    analytic_c0,
    c0_to_poles,
    correlation_quadrature,
    pole_expansion_eval,
)
from pseudomode.exceptions import DomainError, InputError
from pseudomode.pseudomodes import (
    Pseudomode,
    PseudomodeSet,
    series_to_pseudomodes,
    spin_boson_pipeline,
    terminator_split,
)


def test_positive_amplitude_gives_real_coupling():
    (m,) = series_to_pseudomodes(ExponentialSeries([PoleTerm(4.0, -1j)]), [3]).modes
    assert (m.xi, m.lam, m.g) == (0.0, 1.0, 2.0)


def test_negative_amplitude_gives_imaginary_coupling():
    pm = series_to_pseudomodes(ExponentialSeries([PoleTerm(-1.0, -1j)]), [3])
    assert pm.modes[0].g == pytest.approx(1j)
    assert not pm.is_hermitian()


def test_principal_branch_squares_back():
    amps = np.array([1 + 2j, -0.5 - 0.1j, 0.3j, -2.0])
    pm = series_to_pseudomodes(ExponentialSeries(PoleTerm(a, 0.2 - 1j) for a in amps), [2] * 4)
    g = pm.couplings
    assert g**2 == pytest.approx(amps, rel=1e-15)
    assert np.all(g.real >= 0)


def test_dimension_checks():
    series = ExponentialSeries([PoleTerm(1.0, -1j)])
    with pytest.raises(InputError):
        series_to_pseudomodes(series, [1])
    with pytest.raises(InputError):
        series_to_pseudomodes(series, [3, 3])
    with pytest.raises(DomainError):
        Pseudomode(xi=0.0, lam=0.0, g=1.0)


def test_c0_round_trip(sd_b):
    pm = series_to_pseudomodes(c0_to_poles(sd_b), [4, 4])
    assert [m.lam for m in pm.modes] == pytest.approx([sd_b.gamma_width / 2] * 2)
    assert [m.xi for m in pm.modes] == pytest.approx([-sd_b.Omega, sd_b.Omega])
    tau = np.linspace(0, 20, 200)
    assert np.max(np.abs(pm.correlation(tau) - analytic_c0(sd_b, tau))) < 1e-12


def test_terminator_split_values(sd_b, golden):
    kept, gamma_d = terminator_split(sd_b, 1500)
    (term,) = kept.terms
    assert term.amplitude == pytest.approx(golden["c1"]["re"], rel=1e-13)
    assert term.z == pytest.approx(-1j * golden["nu1"], rel=1e-15)
    assert gamma_d == pytest.approx(golden["gamma_d_1500"]["re"], rel=1e-12)
    assert gamma_d < 0


def test_terminator_rate_converged_in_depth(sd_b):
    g1 = terminator_split(sd_b, 1500)[1]
    g2 = terminator_split(sd_b, 3000)[1]
    assert abs(g1 - g2) < 1e-8 * abs(g1)


def test_terminator_zero_coupling():
    kept, gamma_d = terminator_split(SpectralDensityModel(0.0, 0.5, 0.05, 1.0), 1500)
    assert kept.terms[0].amplitude == 0 and gamma_d == 0


def test_full_fit_pipeline(sd_b):
    pm = spin_boson_pipeline(sd_b, "full_fit", k_fit=2, resonant_dim=6, aux_dim=3)
    assert len(pm.modes) == 4 and pm.dephasing_rate == 0.0
    assert pm.dims == (6, 6, 3, 3)
    assert pm.metadata["non_hermitian"]
    tau = np.linspace(0, 10, 101)
    ref = correlation_quadrature(sd_b, tau)
    assert np.max(np.abs(pm.correlation(tau) - ref)) < 1e-3 * abs(ref[0])


def test_terminator_pipeline(sd_b):
    pm = spin_boson_pipeline(sd_b, "terminator", resonant_dim=6, aux_dim=2)
    assert len(pm.modes) == 3 and pm.dephasing_rate < 0
    assert pm.dims == (6, 6, 2)


def test_default_aux_rule(sd_b):
    assert spin_boson_pipeline(sd_b, "terminator", resonant_dim=7, aux_dim=None).dims == (7, 7, 5)


def test_pipeline_rejects_unknown_mode(sd_b):
    with pytest.raises(InputError):
        spin_boson_pipeline(sd_b, "magic")


def test_reconstruction_is_the_source_series(sd_b):
    pm = spin_boson_pipeline(sd_b, "full_fit", resonant_dim=4, aux_dim=2)
    tau = np.linspace(0, 15, 151)
    assert np.max(np.abs(pm.correlation(tau) - pole_expansion_eval(pm.to_series(), tau))) < 1e-15


def test_real_couplings_are_hermitian():
    pm = series_to_pseudomodes(ExponentialSeries([PoleTerm(0.5, 0.3 - 1j), PoleTerm(2.0, -0.4j)]), [2, 2])
    assert pm.is_hermitian()


def test_flip_and_dims_helpers(sd_b):
    pm = spin_boson_pipeline(sd_b, "terminator", resonant_dim=4, aux_dim=2)
    flipped = pm.flip_coupling(1)
    assert flipped.modes[1].g == -pm.modes[1].g and flipped.modes[0] == pm.modes[0]
    assert pm.with_resonant_dim(8).dims == (8, 8, 2)


def test_serialisation_round_trip(tmp_path, sd_b):
    pm = spin_boson_pipeline(sd_b, "terminator", resonant_dim=5, aux_dim=2)
    path = tmp_path / "pm.json"
    pm.save(path)
    back = PseudomodeSet.load(path)
    assert back.modes == pm.modes and back.dephasing_rate == pm.dephasing_rate


def test_load_rejects_other_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(InputError):
        PseudomodeSet.load(path)
