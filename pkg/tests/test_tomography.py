import numpy as np
import pytest

from emtomo import Grid
from emtomo.fields import (constant_magnetic, gauge_transform_potentials,
                           linear_gauge, polynomial_potentials, quadratic_gauge)
from emtomo.states import (density_from_wavefunction, gauge_phase_transform,
                           gaussian_packet, harmonic_eigenstate, state_fidelity,
                           thermal_density)
from emtomo.tomography import (TomographyParams, compute_tomogram,
                               compute_tomogram_family, default_x_axis,
                               dequantizer_matrix, pairing_superoperator,
                               quantizer_matrix, radon_slice,
                               reconstruct_density,
                               reconstruct_wigner_from_probability,
                               reconstruct_wigner_from_unit_sphere,
                               tomogram_l1_distance, tomogram_via_trace,
                               unit_sphere_direction)
from emtomo.wigner import gauge_independent_wigner, wigner_transform

A_HALF = polynomial_potentials(1, {}, [{(1,): 0.5}])   # A = q/2


def l1(x, a, b):
    return float(np.trapezoid(np.abs(a - b), x))


# ---------------------------------------------------------------------------
# parameters and the unit sphere
# ---------------------------------------------------------------------------

def test_unit_sphere_direction_all_right_angles():
    mu, nt = unit_sphere_direction([np.pi / 2] * 5)
    assert np.allclose(np.concatenate([mu, nt]), [1, 0, 0, 0, 0, 0], atol=1e-15)


def test_unit_sphere_norm_random(rng):
    for _ in range(100):
        xi = rng.uniform(0, 2 * np.pi, size=5)
        mu, nt = unit_sphere_direction(xi)
        assert abs(np.sum(mu ** 2) + np.sum(nt ** 2) - 1.0) < 1e-12


def test_unit_sphere_one_dimension_matches_optical(packet):
    # (sin xi, cos xi) realizes the optical direction at theta = pi/2 - xi
    xi = 0.4
    params_us = TomographyParams.unit_sphere([xi])
    params_opt = TomographyParams.optical([np.pi / 2 - xi])
    x = np.linspace(-14, 14, 257)
    t_us = compute_tomogram(packet, params_us, x=x)
    t_opt = compute_tomogram(packet, params_opt, x=x)
    assert tomogram_l1_distance(t_us, t_opt) < 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        TomographyParams.symplectic([1.0, 0.5], [0.3])
    with pytest.raises(ValueError):
        TomographyParams("weird")
    with pytest.raises(ValueError):
        TomographyParams.unit_sphere([0.1, 0.2])   # even length


# ---------------------------------------------------------------------------
# tomogram routes
# ---------------------------------------------------------------------------

def test_slice_vs_trace_routes(packet, packet_density):
    params = TomographyParams.symplectic(0.6, 0.8)
    x = default_x_axis(packet, *params.resolve()[:2])
    t_slice = compute_tomogram(packet, params, x=x)
    t_trace = tomogram_via_trace(packet_density, params, x)
    num = tomogram_l1_distance(t_slice, t_trace)
    den = float(np.trapezoid(np.abs(t_slice.values), x))
    assert num / den < 1e-4


def test_slice_vs_trace_gauge_independent(packet, packet_density):
    params = TomographyParams.symplectic(0.6, 0.8)
    x = default_x_axis(packet, *params.resolve()[:2])
    t_slice = compute_tomogram(packet, params, "gauge_independent", A_HALF, x=x)
    t_trace = tomogram_via_trace(packet_density, params, x, potentials=A_HALF)
    assert tomogram_l1_distance(t_slice, t_trace) < 1e-4


def test_position_marginal_limit(packet, grid128):
    # mu = 1, nu = 0 collapses to the position density
    params = TomographyParams.symplectic(1.0, 0.0)
    x = grid128.axis_points(0)
    tom = compute_tomogram(packet, params, x=x)
    dens = np.abs(packet.psi) ** 2
    assert l1(x, tom.values, dens) < 1e-8


def test_momentum_density_limit(packet):
    # free Gaussian at mu = 0, nu = 1: Gaussian of width hbar / (2 sigma)
    params = TomographyParams.symplectic(0.0, 1.0)
    x = np.linspace(-10, 10, 257)
    tom = compute_tomogram(packet, params, x=x)
    sp = 0.5
    expected = np.exp(-(x - 0.7) ** 2 / (2 * sp ** 2)) / np.sqrt(2 * np.pi * sp ** 2)
    assert l1(x, tom.values, expected) < 1e-5


def test_probability_scheme_equals_gi_symplectic_1d(packet):
    params_p = TomographyParams.probability(0.6, 0.8)
    params_s = TomographyParams.symplectic(0.6, 0.8)
    x = np.linspace(-16, 16, 257)
    t_p = compute_tomogram(packet, params_p, "gauge_independent", A_HALF, x=x)
    t_s = compute_tomogram(packet, params_s, "gauge_independent", A_HALF, x=x)
    assert tomogram_l1_distance(t_p, t_s) < 1e-10


def test_optical_substitution_identity(packet, rng):
    for theta in rng.uniform(0.1, np.pi - 0.1, size=4):
        p_opt = TomographyParams.optical([theta])
        p_sym = TomographyParams.symplectic(np.cos(theta), np.sin(theta))
        x = np.linspace(-14, 14, 257)
        t_opt = compute_tomogram(packet, p_opt, x=x)
        t_sym = compute_tomogram(packet, p_sym, x=x)
        assert tomogram_l1_distance(t_opt, t_sym) < 1e-12


def test_homogeneity_scaling(packet):
    params = TomographyParams.probability(0.6, 0.8)
    x = np.linspace(-16, 16, 257)
    base = compute_tomogram(packet, params, "gauge_independent", A_HALF, x=x)
    for r in (-2.0, 0.5, 3.0):
        scaled = TomographyParams.probability(r * 0.6, r * 0.8)
        xs = np.sort(r * x)
        t_s = compute_tomogram(packet, scaled, "gauge_independent", A_HALF, x=xs)
        ref = base.values / abs(r)
        if r < 0:
            ref = ref[::-1]
        rel = np.max(np.abs(t_s.values - ref)) / np.max(np.abs(ref))
        assert rel < 1e-6


def test_normalization_and_nonnegativity(packet, grid128):
    psi1 = harmonic_eigenstate(grid128, 1)
    for state in (packet, psi1):
        for mu, nu in ((1.0, 1.0), (0.3, -0.9), (1.0, 0.0)):
            tom = compute_tomogram(state, TomographyParams.symplectic(mu, nu))
            assert abs(1.0 / tom.normalization_correction - 1.0) < 1e-3
            assert tom.integral() == pytest.approx(1.0, abs=1e-9)
            assert tom.values.min() > -1e-9


def test_gauge_invariance_of_probability_scheme(packet):
    params = TomographyParams.probability(0.6, 0.8)
    x = np.linspace(-16, 16, 257)
    base = compute_tomogram(packet, params, "gauge_independent", A_HALF, x=x)
    for chi in (linear_gauge([1.0]), quadratic_gauge(0.5, 1)):
        pot_c = gauge_transform_potentials(A_HALF, chi)
        psi_c = gauge_phase_transform(packet, chi)
        other = compute_tomogram(psi_c, params, "gauge_independent", pot_c, x=x)
        assert tomogram_l1_distance(base, other) < 1e-7


def test_ordinary_tomogram_not_invariant(packet):
    params = TomographyParams.symplectic(1.0, 1.0)
    x = np.linspace(-16, 16, 257)
    base = compute_tomogram(packet, params, x=x)
    moved = compute_tomogram(gauge_phase_transform(packet, linear_gauge([1.0])),
                             params, x=x)
    assert tomogram_l1_distance(base, moved) > 0.05


def test_degenerate_parameters_rejected(packet, grid128):
    with pytest.raises(ValueError):
        compute_tomogram(packet, TomographyParams.symplectic(0.0, 0.0))
    with pytest.raises(ValueError):
        dequantizer_matrix(TomographyParams.symplectic(0.0, 0.0), grid128, 0.0)


def test_under_resolved_normalization_rejected(grid128):
    # a tomogram window far too small loses mass and must raise
    psi = gaussian_packet(grid128, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        compute_tomogram(psi, TomographyParams.symplectic(1.0, 1.0),
                         x=np.linspace(-0.5, 0.5, 65))


# ---------------------------------------------------------------------------
# kernel tables
# ---------------------------------------------------------------------------

def test_dequantizer_hermitian_and_ordinary_limit(grid128):
    params = TomographyParams.symplectic(0.7, 0.9)
    op = dequantizer_matrix(params, grid128, 0.45)
    assert op.hermiticity_defect() < 1e-12
    gi = dequantizer_matrix(params, grid128, 0.45,
                            potentials=polynomial_potentials(1, {}, [{(0,): 0.0}]))
    assert np.max(np.abs(gi.matrix - op.matrix)) < 1e-12
    gi2 = dequantizer_matrix(params, grid128, 0.45, potentials=A_HALF)
    assert gi2.hermiticity_defect() < 1e-12


def test_dequantizer_expectation_matches_tomogram(packet, packet_density):
    # the kernel-average route must agree with the antidiagonal trace route
    params = TomographyParams.symplectic(0.6, 0.8)
    x = np.array([0.0, 1.25, -2.5])
    trace_tom = tomogram_via_trace(packet_density, params, x, normalize=False)
    for i, xv in enumerate(x):
        op = dequantizer_matrix(params, packet.grid, xv)
        val = op.expectation(packet_density).real
        assert abs(val - trace_tom.values[i]) < 1e-10


def test_quantizer_zero_displacement_diagonal(grid128):
    params = TomographyParams.symplectic(0.8, 0.0)
    op = quantizer_matrix(params, grid128, 0.3)
    off_diag = op.matrix - np.diag(np.diag(op.matrix))
    assert np.max(np.abs(off_diag)) < 1e-12


def test_quantizer_displacement_outside_grid_rejected(grid128):
    params = TomographyParams.symplectic(0.0, 30.0)
    with pytest.raises(ValueError):
        quantizer_matrix(params, grid128, 0.0)


def test_quantizer_gauge_independent_reduces(grid128):
    params = TomographyParams.symplectic(0.5, 1.2)
    a0 = polynomial_potentials(1, {}, [{(0,): 0.0}])
    plain = quantizer_matrix(params, grid128, 0.2)
    gi = quantizer_matrix(params, grid128, 0.2, potentials=a0)
    assert np.max(np.abs(plain.matrix - gi.matrix)) < 1e-12


def test_scalar_observable_dequantizer_2d():
    # the lattice kernel is periodic in the observable with period
    # 2 pi |nu_pivot| hbar / h, so the check stays within one period
    g2 = Grid.uniform(-6, 6, 24, dim=2)
    psi2 = gaussian_packet(g2, [0.3, -0.2], [0.4, 0.1], 1.0)
    rho = density_from_wavefunction(psi2)
    params = TomographyParams.probability([0.5, 0.3], [0.6, -0.8])
    wg = wigner_transform(psi2)
    x = np.linspace(-3.5, 3.5, 29)
    ref = radon_slice(wg, *params.resolve()[:2], x)
    w = rho.weights_flat
    vals = []
    for xv in x[::4]:
        op = dequantizer_matrix(params, g2, xv)
        vals.append(float(np.sum((rho.rho * w[None, :] * w[:, None]).T
                                 * op.matrix).real))
    assert np.max(np.abs(np.array(vals) - ref[::4])) < 5e-3


# ---------------------------------------------------------------------------
# pairing and reconstruction
# ---------------------------------------------------------------------------

def test_pairing_identity_small():
    g = Grid.uniform(-8.0, 8.0, 16)
    s_op = pairing_superoperator(g)
    dev = np.linalg.norm(s_op - np.eye(16 * 16), 2)
    assert dev < 5e-2


def test_pairing_degrades_below_nyquist_window():
    g = Grid.uniform(-8.0, 8.0, 16)
    s_op = pairing_superoperator(g, mu_grid=np.linspace(-2, 2, 17))
    assert np.linalg.norm(s_op - np.eye(16 * 16), 2) > 0.5


def test_reconstruction_roundtrip_gauge_independent():
    g = Grid.uniform(-12, 12, 64)
    psi = gaussian_packet(g, 0.4, 0.3, np.sqrt(0.5))
    rho = density_from_wavefunction(psi)
    x = np.linspace(-24, 24, 257)
    mu_grid = np.linspace(-4, 4, 33)
    nu_grid = np.linspace(-4, 4, 33)
    fam = compute_tomogram_family(psi, mu_grid, nu_grid, x,
                                  gauge_kind="gauge_independent",
                                  potentials=A_HALF)
    rec, rep = reconstruct_density(fam, g, potentials=A_HALF, reference=rho)
    assert rep["fidelity"] >= 0.999
    assert abs(rep["trace_pre_normalization"] - 1.0) <= 1e-2

    # with A = 0 the reconstruction equals the ordinary one
    fam0 = compute_tomogram_family(psi, mu_grid, nu_grid, x, gauge_kind="ordinary")
    rec0, _ = reconstruct_density(fam0, g, reference=rho)
    a0 = polynomial_potentials(1, {}, [{(0,): 0.0}])
    fam0b = compute_tomogram_family(psi, mu_grid, nu_grid, x,
                                    gauge_kind="gauge_independent", potentials=a0)
    rec0b, _ = reconstruct_density(fam0b, g, potentials=a0, reference=rho)
    trace_dist = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(
        (rec0.rho - rec0b.rho) * g.trapz_weights().ravel()[None, :])))
    assert trace_dist < 1e-6


def test_reconstruction_low_fidelity_raises():
    g = Grid.uniform(-12, 12, 64)
    psi = gaussian_packet(g, 0.4, 0.3, np.sqrt(0.5))
    rho = density_from_wavefunction(psi)
    x = np.linspace(-24, 24, 257)
    # far too small a parameter window
    mu_grid = np.linspace(-0.4, 0.4, 9)
    nu_grid = np.linspace(-0.4, 0.4, 9)
    fam = compute_tomogram_family(psi, mu_grid, nu_grid, x, gauge_kind="ordinary")
    with pytest.raises(ValueError):
        reconstruct_density(fam, g, reference=rho)


def test_wigner_reconstruction_from_family():
    # A = q/4 keeps the kinetic-momentum covariance mild enough for the
    # Lambda = 4 parameter box; steeper gauges tilt the covariance until its
    # slow principal direction decays too slowly at the box edge
    g = Grid.uniform(-12, 12, 64)
    rho = thermal_density(g, 0.5)
    pot = polynomial_potentials(1, {}, [{(1,): 0.25}])
    x = np.linspace(-24, 24, 257)
    mu_grid = np.linspace(-4, 4, 33)
    nu_grid = np.linspace(-4, 4, 33)
    fam = compute_tomogram_family(rho, mu_grid, nu_grid, x,
                                  gauge_kind="gauge_independent", potentials=pot)
    wg = gauge_independent_wigner(rho, pot, 0.0)
    wrec = reconstruct_wigner_from_probability(fam, wg.q_axes[0], wg.p_axes[0])
    rel = np.sum(np.abs(wrec.values - wg.values)) / np.sum(np.abs(wg.values))
    assert rel < 1e-3
    assert abs(wrec.integral() - 1.0) < 1e-4


def test_unit_sphere_reconstruction_cross_method():
    g = Grid.uniform(-12, 12, 64)
    rho = thermal_density(g, 0.5)
    w = wigner_transform(rho)
    x = np.linspace(-24, 24, 257)
    nxi = 64
    xi_grid = np.linspace(0, 2 * np.pi, nxi, endpoint=False)
    vals = np.empty((nxi, len(x)))
    for i, xi in enumerate(xi_grid):
        mu, nt = unit_sphere_direction([xi])
        vals[i] = radon_slice(w, [mu[0]], [nt[0]], x)
    wrec_us = reconstruct_wigner_from_unit_sphere(xi_grid, x, vals,
                                                  w.q_axes[0], w.p_axes[0])
    mu_grid = np.linspace(-4, 4, 33)
    nu_grid = np.linspace(-4, 4, 33)
    fam = compute_tomogram_family(rho, mu_grid, nu_grid, x, gauge_kind="ordinary")
    wrec_cart = reconstruct_wigner_from_probability(fam, w.q_axes[0], w.p_axes[0])
    rel = np.sum(np.abs(wrec_us.values - wrec_cart.values)) * w.cell_volume() \
        / w.abs_integral()
    assert rel < 1e-3
