import numpy as np
import pytest

from emtomo import Grid
from emtomo.fields import linear_gauge, quadratic_gauge
from emtomo.states import (DensityMatrix, ParticleEnsemble, WaveFunction,
                           density_from_wavefunction, expectation_momentum,
                           expectation_position, gauge_phase_transform,
                           gaussian_packet, harmonic_eigenstate, mixed_density,
                           sample_ensemble_from_wigner, state_fidelity,
                           thermal_density)
from emtomo.wigner import gaussian_phase_density, wigner_transform


def test_gaussian_packet_moments(grid128):
    psi = gaussian_packet(grid128, 0.4, -0.8, 1.1)
    assert abs(psi.norm() - 1.0) < 1e-10
    assert abs(expectation_position(psi)[0] - 0.4) < 1e-9
    # finite-difference expectation oracle for the momentum
    p_fd = expectation_momentum(psi, method="fd")[0]
    assert abs(p_fd + 0.8) < 1e-4
    assert abs(expectation_momentum(psi)[0] + 0.8) < 1e-8


def test_gaussian_packet_support_check(grid128):
    with pytest.raises(ValueError):
        gaussian_packet(grid128, 11.0, 0.0, 1.0)


def test_boundary_amplitude_small(packet):
    assert packet.boundary_amplitude() < 1e-8


def test_density_from_wavefunction_properties(packet):
    rho = density_from_wavefunction(packet)
    assert abs(rho.purity() - 1.0) < 1e-8
    assert rho.hermiticity_defect() < 1e-15
    diag = rho.diagonal().ravel()
    assert np.max(np.abs(diag - np.abs(packet.psi) ** 2)) < 1e-12
    rho.validate()


def test_phase_transform_preserves_density(packet):
    chi = quadratic_gauge(0.8, 1)
    out = gauge_phase_transform(packet, chi)
    assert np.max(np.abs(np.abs(out.psi) ** 2 - np.abs(packet.psi) ** 2)) < 1e-15


def test_constant_chi_is_global_phase(packet_density):
    from emtomo.fields import time_gauge
    chi = time_gauge(lambda t: 2.7, lambda t: 0.0, dim=1)
    out = gauge_phase_transform(packet_density, chi)
    assert np.max(np.abs(out.rho - packet_density.rho)) < 1e-14


def test_linear_chi_shifts_momentum(packet):
    # chi = a q shifts <P> by +e a / c
    a = 0.9
    out = gauge_phase_transform(packet, linear_gauge([a]))
    p0 = expectation_momentum(packet)[0]
    p1 = expectation_momentum(out)[0]
    assert abs(p1 - p0 - a) < 1e-7


def test_phase_transform_group_property(packet):
    chi1 = linear_gauge([0.4])
    chi2 = quadratic_gauge(0.3, 1)
    once = gauge_phase_transform(gauge_phase_transform(packet, chi1), chi2)
    q = packet.grid.axis_points(0)
    combined = packet.psi * np.exp(1j * (0.4 * q + 0.3 * q ** 2))
    assert np.max(np.abs(once.psi - combined)) < 1e-14


def test_phase_transform_preserves_spectrum(packet):
    rho = density_from_wavefunction(packet)
    mixed = mixed_density([(0.7, packet),
                           (0.3, gaussian_packet(packet.grid, -1.0, 0.2, 1.3))])
    chi = quadratic_gauge(0.5, 1)
    for state in (rho, mixed):
        out = gauge_phase_transform(state, chi)
        w = np.sqrt(state.weights_flat)
        ev0 = np.linalg.eigvalsh(w[:, None] * state.rho * w[None, :])
        ev1 = np.linalg.eigvalsh(w[:, None] * out.rho * w[None, :])
        assert np.max(np.abs(np.sort(ev0) - np.sort(ev1))) < 1e-9
        assert abs(out.trace() - state.trace()) < 1e-12


def test_phase_transform_commutes_with_density(packet):
    chi = quadratic_gauge(0.45, 1)
    a = density_from_wavefunction(gauge_phase_transform(packet, chi))
    b = gauge_phase_transform(density_from_wavefunction(packet), chi)
    assert np.max(np.abs(a.rho - b.rho)) < 1e-14


def test_harmonic_eigenstates(grid128):
    psi0 = harmonic_eigenstate(grid128, 0)
    psi1 = harmonic_eigenstate(grid128, 1)
    w = grid128.trapz_weights()
    overlap = abs(np.sum(psi0.psi.conj() * psi1.psi * w))
    assert overlap < 1e-12
    with pytest.raises(ValueError):
        harmonic_eigenstate(grid128, 2)


def test_thermal_density_moments(grid128):
    nbar = 0.7
    rho = thermal_density(grid128, nbar)
    rho.validate()
    q = grid128.axis_points(0)
    w = grid128.trapz_weights()
    var = float(np.sum(np.diag(rho.rho).real * w * q ** 2))
    assert abs(var - (2 * nbar + 1) / 2.0) < 1e-8
    assert abs(rho.purity() - 1.0 / (2 * nbar + 1)) < 1e-8


def test_ensemble_validation():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros((3, 1)), np.zeros((3, 1)), np.array([0.5, 0.2, 0.2]))
    ens = ParticleEnsemble(np.zeros((2, 1)), np.ones((2, 1)),
                           np.array([0.5, 0.5]))
    assert ens.dim == 1


def test_sample_ensemble_statistics():
    q_ax = np.linspace(-6, 6, 97)
    p_ax = np.linspace(-6, 6, 97)
    psf = gaussian_phase_density((q_ax,), (p_ax,), 0.8, -0.5, 1.0, 0.7)
    n = 40000
    ens = sample_ensemble_from_wigner(psf, n, seed=7)
    assert abs(ens.weights.sum() - 1.0) < 1e-12
    # statistical oracle: mean within 3 sigma / sqrt(n)
    assert abs(ens.mean_position()[0] - 0.8) < 3 * 1.0 / np.sqrt(n) * 1.5
    assert abs(ens.mean_momentum()[0] + 0.5) < 3 * 0.7 / np.sqrt(n) * 1.5
    again = sample_ensemble_from_wigner(psf, n, seed=7)
    assert np.array_equal(ens.positions, again.positions)


def test_sample_ensemble_rejects_negative_mass(grid128):
    psi1 = harmonic_eigenstate(grid128, 1)
    w = wigner_transform(psi1)
    with pytest.raises(ValueError):
        sample_ensemble_from_wigner(w, 100, seed=0)


def test_state_fidelity_pure(packet):
    rho = density_from_wavefunction(packet)
    assert state_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)
    other = density_from_wavefunction(
        gaussian_packet(packet.grid, -2.0, 0.0, 1.0))
    assert state_fidelity(rho, other) < 0.5
