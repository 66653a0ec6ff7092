import numpy as np
import pytest

from emtomo.fields import (constant_magnetic, cubic_gauge, field_strengths,
                           free_potentials, gauge_transform_potentials,
                           harmonic_potentials, linear_gauge,
                           polynomial_potentials, potentials_from_descriptor,
                           quadratic_gauge, separable_gauge, time_gauge,
                           uniform_electric, zero_gauge)
from emtomo.units import INTERNAL


def test_zero_gauge_is_identity():
    pot = uniform_electric(2, [0.5, -0.2])
    chi = zero_gauge(2)
    out = gauge_transform_potentials(pot, chi)
    q = np.array([[0.3, -1.2], [2.0, 0.4]])
    assert np.allclose(out.vector(q, 0.1), pot.vector(q, 0.1))
    assert np.allclose(out.scalar(q, 0.1), pot.scalar(q, 0.1))


def test_linear_gauge_shifts_vector_potential_only():
    pot = free_potentials(2)
    chi = linear_gauge([0.7, -0.3])
    out = gauge_transform_potentials(pot, chi)
    q = np.array([[0.1, 0.2], [-1.0, 3.0]])
    assert np.allclose(out.vector(q, 0.0), [[0.7, -0.3]] * 2)
    assert np.allclose(out.scalar(q, 0.0), 0.0)


def test_time_only_gauge_shifts_scalar_potential_only():
    pot = free_potentials(1)
    chi = time_gauge(lambda t: 0.5 * t ** 2, lambda t: t, dim=1)
    out = gauge_transform_potentials(pot, chi)
    q = np.array([[0.4], [1.0]])
    assert np.allclose(out.vector(q, 2.0), 0.0)
    # phi -> phi - (1/c) dchi/dt = -t at t=2
    assert np.allclose(out.scalar(q, 2.0), -2.0)


def test_field_strengths_uniform_e():
    pot = uniform_electric(2, [1.5, -0.25])
    fs = field_strengths(pot, np.array([[0.3, 0.7]]))
    assert np.allclose(fs.e, [[1.5, -0.25]], atol=1e-10)
    assert np.allclose(fs.b, 0.0, atol=1e-10)


def test_field_strengths_symmetric_gauge_curl():
    b0 = 1.7
    pot = constant_magnetic(b0, "symmetric")
    q = np.array([[0.4, -0.9], [1.2, 2.0]])
    fs = field_strengths(pot, q)
    assert np.allclose(fs.b, b0, atol=1e-8)       # analytic curl oracle
    assert np.allclose(fs.e, 0.0, atol=1e-10)
    pot_l = constant_magnetic(b0, "landau")
    fs_l = field_strengths(pot_l, q)
    assert np.allclose(fs_l.b, b0, atol=1e-8)


@pytest.mark.parametrize("make_chi", [
    lambda: linear_gauge([0.8, -0.4]),
    lambda: quadratic_gauge(0.6, 2),
    lambda: time_gauge(lambda t: np.sin(t), lambda t: np.cos(t), dim=2),
    lambda: separable_gauge([0.5, 0.2], lambda t: np.sin(t), lambda t: np.cos(t)),
])
def test_strengths_gauge_invariant(make_chi):
    # E and B agree before/after the gauge transformation on a 64^2 grid
    pot = constant_magnetic(1.0, "symmetric")
    chi = make_chi()
    pot_c = gauge_transform_potentials(pot, chi)
    xs = np.linspace(-6, 6, 64)
    q = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    for t in (0.0, 0.37):
        fs = field_strengths(pot, q, t)
        fs_c = field_strengths(pot_c, q, t)
        assert np.max(np.abs(fs.e - fs_c.e)) < 1e-6
        assert np.max(np.abs(np.asarray(fs.b) - np.asarray(fs_c.b))) < 1e-6


def test_gauge_self_check():
    chi = quadratic_gauge(0.7, 2)
    pts = np.array([[0.3, -0.5], [1.0, 2.0]])
    assert chi.self_check(pts) < 1e-6
    bad = cubic_gauge(0.5, 1)
    object.__setattr__(bad, "grad", lambda q, t: 2.0 * np.asarray(q))
    with pytest.raises(ValueError):
        bad.self_check(np.array([[1.0]]))


def test_polynomial_descriptor_roundtrip():
    pot = polynomial_potentials(2, {(2, 0): 0.5, (0, 1): -1.0},
                                [{(0, 1): 0.3}, {(1, 0): -0.3}])
    back = potentials_from_descriptor(pot.descriptor)
    q = np.array([[0.7, -1.1]])
    assert np.allclose(back.scalar(q, 0.0), pot.scalar(q, 0.0))
    assert np.allclose(back.vector(q, 0.0), pot.vector(q, 0.0))
    for desc in ({"type": "free", "dim": 1},
                 {"type": "uniform_e", "dim": 1, "E0": [0.5]},
                 {"type": "harmonic", "dim": 2, "omega0": 1.3},
                 {"type": "constant_B", "B0": 0.8, "gauge": "landau"}):
        assert potentials_from_descriptor(desc).descriptor["type"] == desc["type"]
    with pytest.raises(ValueError):
        potentials_from_descriptor({"type": "nope"})


def test_harmonic_electric_affine_metadata():
    pot = harmonic_potentials(1, 1.4)
    e0, g = pot.electric_affine()
    assert np.allclose(e0, 0.0)
    assert np.allclose(g, -1.4 ** 2)
    assert constant_magnetic(0.9).magnetic_constant() == pytest.approx(0.9)
