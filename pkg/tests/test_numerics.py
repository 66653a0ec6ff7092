import numpy as np
import pytest

from emtomo import Grid, GridFunction, LinearGridOperator
from emtomo.numerics import (Axis, averaged_potential, inverse_derivative,
                             inverse_derivative_array, legendre_rule_half,
                             spectral_antiderivative, spectral_derivative,
                             trapezoid_weights)
from emtomo.fields import linear_gauge, polynomial_potentials


def brute_force_step_kernel(values, x, order):
    """Literal discrete convolution with (x-x')^(n-1) Theta(x-x') / (n-1)!

    over truncated trapezoid weights; the O(N^2) oracle for the inverse
    derivative."""
    from math import factorial
    n = len(x)
    h = x[1] - x[0]
    out = np.zeros_like(values, dtype=float)
    for i in range(n):
        w = trapezoid_weights(i + 1, h) if i > 0 else np.zeros(1)
        acc = 0.0
        for j in range(i + 1):
            acc += w[j] * (x[i] - x[j]) ** (order - 1) * values[j]
        out[i] = acc / factorial(order - 1)
    return out


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.uniform(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        Axis(1.0, 0.0, 16)
    g = Grid.uniform(-1.0, 1.0, 16, dim=2)
    assert g.shape == (16, 16)
    assert abs(g.cell_volume - (2 / 15) ** 2) < 1e-15


def test_gridfunction_shape_and_finite():
    g = Grid.uniform(0.0, 1.0, 16)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(15))
    vals = np.zeros(16)
    vals[3] = np.inf
    with pytest.raises(ValueError):
        GridFunction(g, vals)


def test_inverse_derivative_of_constant():
    # integral of 1 from 0 to x is x
    g = Grid.uniform(0.0, 10.0, 128)
    f = GridFunction(g, np.ones(128))
    out = inverse_derivative(f)
    x = g.axis_points(0)
    assert np.max(np.abs(out.values - x)) <= g.spacings[0]


def test_inverse_derivative_inverts_derivative():
    # fundamental theorem, left anchored: D^-1 D f = f - f(x_min)
    g = Grid.uniform(-10.0, 10.0, 256)
    x = g.axis_points(0)
    f = GridFunction(g, np.exp(-((x - 1.0) ** 2) / 2.0))
    df = spectral_derivative(f)
    back = inverse_derivative(df)
    err = np.max(np.abs(back.values - (f.values - f.values[0])))
    assert err < 2e-3     # trapezoid kernel: O(h^2), tightened by refinement below


def test_inverse_derivative_refinement_order():
    # halving h reduces the round-trip error by at least 3.5x
    errs = []
    for n in (128, 256):
        g = Grid.uniform(-10.0, 10.0, n)
        x = g.axis_points(0)
        f = GridFunction(g, np.exp(-(x ** 2) / 2.0))
        back = inverse_derivative(spectral_derivative(f))
        errs.append(np.max(np.abs(back.values - (f.values - f.values[0]))))
    assert errs[0] / errs[1] >= 3.5


def test_inverse_derivative_second_order_matches_brute_force():
    g = Grid.uniform(-8.0, 8.0, 96)
    x = g.axis_points(0)
    vals = np.exp(-(x ** 2) / 2.0)
    expected = brute_force_step_kernel(vals, x, order=2)
    got = inverse_derivative_array(vals, g.spacings[0], x, order=2)
    assert np.max(np.abs(got - expected)) < 1e-10


def test_spectral_derivative_sin():
    n = 128
    x = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    g = Grid(axes=(Axis(x[0], x[-1], n),))
    f = GridFunction(g, np.sin(x))
    # the axis is endpoint-free so the FFT sees an exact period
    df = spectral_derivative(f)
    assert np.max(np.abs(df.values - np.cos(x))) < 1e-8


def test_derivative_of_constant_and_gaussian():
    g = Grid.uniform(-12.0, 12.0, 128)
    x = g.axis_points(0)
    const = spectral_derivative(GridFunction(g, np.ones(128)))
    assert np.max(np.abs(const.values)) < 1e-12
    sigma = 1.3
    f = GridFunction(g, np.exp(-x ** 2 / (2 * sigma ** 2)))
    df = spectral_derivative(f)
    exact = -(x / sigma ** 2) * np.exp(-x ** 2 / (2 * sigma ** 2))
    assert np.max(np.abs(df.values - exact)) < 1e-8
    df4 = spectral_derivative(f, method="fd4")
    assert np.max(np.abs(df4.values - exact)) < 1e-4


def test_derivative_order_rejected():
    g = Grid.uniform(-1.0, 1.0, 32)
    f = GridFunction(g, np.zeros(32))
    with pytest.raises(ValueError):
        spectral_derivative(f, order=3)
    with pytest.raises(ValueError):
        inverse_derivative(f, order=0)


def test_spectral_antiderivative_handles_nonzero_mean():
    g = Grid.uniform(-10.0, 10.0, 256)
    x = g.axis_points(0)
    f = GridFunction(g, np.exp(-x ** 2))        # nonzero integral
    out = spectral_antiderivative(f)
    from scipy.special import erf
    exact = np.sqrt(np.pi) / 2 * (erf(x) - erf(x[0]))
    assert np.max(np.abs(out.values - exact)) < 1e-8


def test_averaged_potential_examples():
    # constant vector potential comes back exactly
    pot_const = polynomial_potentials(1, {}, [{(0,): 1.7}])
    got = averaged_potential(pot_const, np.array([0.3]), np.array([2.0]))
    assert abs(got[0] - 1.7) < 1e-14

    # linear potential: odd part integrates away
    pot_lin = polynomial_potentials(1, {}, [{(1,): 2.0}])
    got = averaged_potential(pot_lin, np.array([0.7]), np.array([1.3]))
    assert abs(got[0] - 2.0 * 0.7) < 1e-14

    # quadratic: q^2 + u^2/12; high-order quadrature oracle
    pot_sq = polynomial_potentials(1, {}, [{(2,): 1.0}])
    q, u = 0.7, 0.5
    nodes, weights = np.polynomial.legendre.leggauss(40)
    oracle = float(np.sum(weights / 2 * ((q + nodes / 2 * u) ** 2)))
    assert abs(oracle - (q ** 2 + u ** 2 / 12.0)) < 1e-14
    got = averaged_potential(pot_sq, np.array([q]), np.array([u]))
    assert abs(got[0] - (q ** 2 + u ** 2 / 12.0)) < 1e-12


def test_averaged_potential_gauge_covariant_for_linear_chi():
    # averaging A + grad(chi) with chi = a.q adds exactly a
    pot = polynomial_potentials(1, {}, [{(2,): 0.4}])
    chi = linear_gauge([0.9])
    from emtomo.fields import gauge_transform_potentials
    pot_c = gauge_transform_potentials(pot, chi)
    q = np.array([0.5])
    u = np.array([1.1])
    base = averaged_potential(pot, q, u)
    shifted = averaged_potential(pot_c, q, u)
    assert abs(shifted[0] - base[0] - 0.9) < 1e-14


def test_quad_order_validation():
    pot = polynomial_potentials(1, {}, [{(0,): 1.0}])
    with pytest.raises(ValueError):
        averaged_potential(pot, np.array([0.0]), np.array([1.0]), quad_order=1)


def test_legendre_rule_symmetric():
    nodes, weights = legendre_rule_half(8)
    assert np.sum(weights) == pytest.approx(1.0, abs=1e-15)
    assert np.sum(weights * nodes) == 0.0          # exact odd-moment cancellation


def test_linear_operator_linearity(rng):
    g = Grid.uniform(-1.0, 1.0, 16)
    mat = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    op = LinearGridOperator(g, g, mat)
    assert op.linearity_defect(rng) < 1e-12


def test_linear_operator_shape_checks():
    g = Grid.uniform(-1.0, 1.0, 16)
    g2 = Grid.uniform(-1.0, 1.0, 32)
    with pytest.raises(ValueError):
        LinearGridOperator(g, g2, np.zeros((16, 16)))


def test_gridfunction_csv_roundtrip(tmp_path):
    g = Grid.uniform(-2.0, 2.0, 16, dim=2)
    x, y = g.meshgrid()
    f = GridFunction(g, np.exp(-(x ** 2 + y ** 2)) * (1 + 0.5j))
    f.save(tmp_path / "field")
    back = GridFunction.load(tmp_path / "field")
    assert back.grid == g
    assert np.max(np.abs(back.values - f.values)) < 1e-15
