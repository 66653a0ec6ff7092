import numpy as np
import pytest

from emtomo import Grid
from emtomo.fields import (constant_magnetic, gauge_transform_potentials,
                           linear_gauge, polynomial_potentials, quadratic_gauge,
                           time_gauge)
from emtomo.states import (density_from_wavefunction, gauge_phase_transform,
                           gaussian_packet, harmonic_eigenstate, state_fidelity)
from emtomo.wigner import (PhaseSpaceFunction, gauge_independent_wigner,
                           inverse_wigner, kinetic_momentum_view,
                           psf_distance_max, shift_along_p, wigner_transform)


def direct_quadrature_wigner_origin(psi):
    """W(0, 0) by direct trapezoid quadrature of the offset integral."""
    q = psi.grid.axis_points(0)
    h = psi.grid.spacings[0]
    # psi(-u/2) psi*(u/2) du: sample u on the doubled lattice via interpolation-free
    # pairing q_i = -u/2 -> u = -2 q_i
    vals = psi.psi * psi.psi[::-1].conj()
    # with q symmetric, psi[::-1][i] = psi(-q_i): vals_i = psi(q_i) psi*(-q_i)
    # u = -2 q_i, du = 2h
    return float(np.sum(vals).real * 2 * h / (2 * np.pi))


def test_wigner_normalization(packet):
    w = wigner_transform(packet)
    assert abs(w.integral() - 1.0) < 1e-6
    assert w.momentum_kind == "generalized"


def test_ground_state_origin_value(grid128):
    psi0 = harmonic_eigenstate(grid128, 0)
    w = wigner_transform(psi0)
    oracle = direct_quadrature_wigner_origin(psi0)
    assert abs(oracle - 1.0 / np.pi) / (1.0 / np.pi) < 1e-6
    assert abs(w.value_at(0.0, 0.0) - 1.0 / np.pi) * np.pi < 1e-4


def test_first_excited_negativity_witness(grid128):
    psi1 = harmonic_eigenstate(grid128, 1)
    w = wigner_transform(psi1)
    assert abs(w.value_at(0.0, 0.0) + 1.0 / np.pi) * np.pi < 1e-3


def test_marginal_matches_density(packet, packet_density):
    w = wigner_transform(packet)
    _, marg = w.marginal_position()
    diag = packet_density.diagonal().ravel()
    # even centers coincide with the original lattice
    assert np.max(np.abs(marg[::2] - diag)) < 1e-8


def test_inverse_roundtrip(packet, packet_density):
    w = wigner_transform(packet)
    back = inverse_wigner(w)
    assert state_fidelity(packet_density, back) > 1 - 1e-8
    assert abs(back.trace().real - 1.0) < 1e-8


def test_gauge_independent_reduces_to_ordinary(packet):
    pot0 = polynomial_potentials(1, {}, [{(0,): 0.0}])
    w = wigner_transform(packet)
    wg = gauge_independent_wigner(packet, pot0, 0.0)
    assert np.max(np.abs(w.values - wg.values)) < 1e-12
    assert wg.momentum_kind == "kinetic"


def test_gauge_independent_invariance_linear_and_quadratic(packet):
    pot = polynomial_potentials(1, {}, [{(1,): 0.5}])
    wg = gauge_independent_wigner(packet, pot, 0.0)
    for chi, tol in ((linear_gauge([0.8]), 1e-8),
                     (quadratic_gauge(0.7, 1), 1e-7),
                     (time_gauge(lambda t: 1.3, lambda t: 0.0, dim=1), 1e-12)):
        pot_c = gauge_transform_potentials(pot, chi)
        psi_c = gauge_phase_transform(packet, chi)
        wg_c = gauge_independent_wigner(psi_c, pot_c, 0.0)
        assert psf_distance_max(wg, wg_c) < tol


def test_gauge_independent_marginal(packet, packet_density):
    pot = polynomial_potentials(1, {}, [{(1,): 0.5}])
    wg = gauge_independent_wigner(packet, pot, 0.0)
    _, marg = wg.marginal_position()
    diag = packet_density.diagonal().ravel()
    assert np.max(np.abs(marg[::2] - diag)) < 1e-8


def test_standard_wigner_not_gauge_invariant(packet):
    w = wigner_transform(packet)
    w_c = wigner_transform(gauge_phase_transform(packet, quadratic_gauge(3.0, 1)))
    assert psf_distance_max(w, w_c) > 0.1


def test_gauge_independent_roundtrip(packet, packet_density):
    pot = polynomial_potentials(1, {}, [{(1,): 0.5}])
    wg = gauge_independent_wigner(packet, pot, 0.0)
    back = inverse_wigner(wg, pot)
    assert state_fidelity(packet_density, back) > 1 - 1e-7
    with pytest.raises(ValueError):
        inverse_wigner(wg)          # kinetic inversion needs the potentials


def test_momentum_kind_mixing_rejected(packet):
    pot = polynomial_potentials(1, {}, [{(0,): 0.5}])
    w = wigner_transform(packet)
    wg = gauge_independent_wigner(packet, pot, 0.0)
    with pytest.raises(ValueError):
        psf_distance_max(w, wg)


def test_kinetic_view_constant_potential(packet):
    # A = const: W(q, p + e A / c) moves the momentum center by -A
    pot = polynomial_potentials(1, {}, [{(0,): 0.6}])
    w = wigner_transform(packet)
    wk = kinetic_momentum_view(w, pot)
    p = wk.p_axes[0]
    pm = float((wk.values.sum(axis=0) @ p) / wk.values.sum())
    assert abs(pm - (0.7 - 0.6)) < 1e-6
    assert wk.momentum_kind == "kinetic"


def test_shift_along_p_exactness(packet):
    w = wigner_transform(packet)
    shifted = shift_along_p(w, np.full(len(w.q_axes[0]), 0.37))
    back = shift_along_p(shifted, np.full(len(w.q_axes[0]), -0.37))
    assert np.max(np.abs(back.values - w.values)) < 1e-10


def test_two_dimensional_invariance():
    g2 = Grid.uniform(-6, 6, 32, dim=2)
    psi2 = gaussian_packet(g2, [0.0, 0.0], [0.5, 0.0], 1.0)
    pot = constant_magnetic(1.0, "symmetric")
    wg = gauge_independent_wigner(psi2, pot, 0.0)
    assert abs(wg.integral() - 1.0) < 1e-6
    chi = linear_gauge([0.5, -0.3])
    wg_c = gauge_independent_wigner(gauge_phase_transform(psi2, chi),
                                    gauge_transform_potentials(pot, chi), 0.0)
    assert psf_distance_max(wg, wg_c) < 1e-12
    chi2 = quadratic_gauge(0.4, 2)
    wg_c2 = gauge_independent_wigner(gauge_phase_transform(psi2, chi2),
                                     gauge_transform_potentials(pot, chi2), 0.0)
    assert psf_distance_max(wg, wg_c2) < 1e-12


def test_psf_validation():
    q = np.linspace(-1, 1, 8)
    with pytest.raises(ValueError):
        PhaseSpaceFunction((q,), (q,), np.zeros((8, 7)), "kinetic")
    with pytest.raises(ValueError):
        PhaseSpaceFunction((q,), (q,), np.zeros((8, 8)), "unknown")
