"""Electromagnetic potentials, gauge functions and derived field strengths."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .units import INTERNAL, UnitsContext

__all__ = [
    "Potentials",
    "GaugeFunction",
    "FieldStrengths",
    "gauge_transform_potentials",
    "field_strengths",
    "free_potentials",
    "uniform_electric",
    "harmonic_potentials",
    "anharmonic_potentials",
    "constant_magnetic",
    "polynomial_potentials",
    "potentials_from_descriptor",
    "zero_gauge",
    "linear_gauge",
    "quadratic_gauge",
    "cubic_gauge",
    "time_gauge",
    "separable_gauge",
]


@dataclass(frozen=True)
class Potentials:
    """Vector potential A(q, t) -> (..., dim) and scalar potential phi(q, t) -> (...)."""

    dim: int
    vector: Callable
    scalar: Callable
    tag_vector: str = "general"   # constant | linear | quadratic | general
    tag_scalar: str = "general"
    descriptor: dict = dc_field(default_factory=dict)

    def electric_affine(self, units: UnitsContext = INTERNAL):
        """(E0, G) with E(q) = E0 + G q when the field is affine, else None.

        Only potentials built by the library constructors carry the metadata.
        """
        d = self.descriptor
        if d.get("electric_affine") is None:
            return None
        e0, g = d["electric_affine"]
        return np.asarray(e0, dtype=float), np.asarray(g, dtype=float)

    def magnetic_constant(self):
        """Scalar out-of-plane B for dim = 2 when constant, else None."""
        return self.descriptor.get("magnetic_constant")


@dataclass(frozen=True)
class GaugeFunction:
    """chi(q, t) with its analytic gradient and time derivative."""

    dim: int
    chi: Callable
    grad: Callable
    dt: Callable
    descriptor: dict = dc_field(default_factory=dict)

    def self_check(self, points: np.ndarray, t: float = 0.0, step: float = 1e-5,
                   tol: float = 1e-6) -> float:
        """Max relative mismatch between `grad` and a central difference of `chi`."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.asarray(self.grad(points, t), dtype=float)
        num = np.zeros_like(g)
        for a in range(self.dim):
            dq = np.zeros(self.dim)
            dq[a] = step
            num[..., a] = (self.chi(points + dq, t) - self.chi(points - dq, t)) / (2 * step)
        scale = np.max(np.abs(g)) + 1.0
        defect = float(np.max(np.abs(num - g)) / scale)
        if defect > tol:
            raise ValueError(f"gauge gradient inconsistent with chi (defect {defect:.2e})")
        return defect


@dataclass(frozen=True)
class FieldStrengths:
    e: np.ndarray           # (..., dim)
    b: np.ndarray | float   # scalar for dim=2, (...,3) for dim=3, 0.0 for dim=1


def effective_quad_order(p: Potentials, requested: int) -> int:
    """Chord averages of constant/linear vector potentials are exact at order 2."""
    if p.tag_vector in ("constant", "linear"):
        return min(requested, 2)
    return requested


def gauge_transform_potentials(p: Potentials, chi: GaugeFunction,
                               units: UnitsContext = INTERNAL) -> Potentials:
    """A -> A + grad(chi),  phi -> phi - (1/c) d(chi)/dt."""
    if chi.dim != p.dim:
        raise ValueError("gauge function dimension mismatch")
    inv_c = 1.0 / units.c

    def vector(q, t):
        return np.asarray(p.vector(q, t)) + np.asarray(chi.grad(q, t))

    def scalar(q, t):
        return np.asarray(p.scalar(q, t)) - inv_c * np.asarray(chi.dt(q, t))

    return Potentials(p.dim, vector, scalar, tag_vector="general", tag_scalar="general",
                      descriptor={"transformed_from": p.descriptor,
                                  "gauge": chi.descriptor})


def field_strengths(p: Potentials, q: np.ndarray, t: float = 0.0,
                    units: UnitsContext = INTERNAL, step: float = 2.4e-3) -> FieldStrengths:
    """E = -grad(phi) - (1/c) dA/dt and B = curl A via central differences.

    `step` defaults to 1e-4 of the default 24-unit domain extent.
    """
    q = np.asarray(q, dtype=float)
    dim = p.dim
    if q.shape[-1] != dim:
        raise ValueError("evaluation point dimension mismatch")

    grad_phi = np.empty_like(q)
    dA = []
    for a in range(dim):
        dq = np.zeros(dim)
        dq[a] = step
        grad_phi[..., a] = (np.asarray(p.scalar(q + dq, t)) -
                            np.asarray(p.scalar(q - dq, t))) / (2 * step)
        dA.append((np.asarray(p.vector(q + dq, t)) -
                   np.asarray(p.vector(q - dq, t))) / (2 * step))
    dA_dt = (np.asarray(p.vector(q, t + step)) - np.asarray(p.vector(q, t - step))) / (2 * step)
    e = -grad_phi - dA_dt / units.c

    if dim == 1:
        b = 0.0
    elif dim == 2:
        # out-of-plane component: dAy/dx - dAx/dy
        b = dA[0][..., 1] - dA[1][..., 0]
    else:
        b = np.stack([
            dA[1][..., 2] - dA[2][..., 1],
            dA[2][..., 0] - dA[0][..., 2],
            dA[0][..., 1] - dA[1][..., 0],
        ], axis=-1)
    return FieldStrengths(e=e, b=b)


# ---------------------------------------------------------------------------
# standard potential library
# ---------------------------------------------------------------------------

def _zero_vector(dim):
    def vector(q, t):
        q = np.asarray(q, dtype=float)
        return np.zeros_like(q)
    return vector


def free_potentials(dim: int) -> Potentials:
    def scalar(q, t):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1])
    return Potentials(dim, _zero_vector(dim), scalar, "constant", "constant",
                      {"type": "free", "dim": dim,
                       "electric_affine": ([0.0] * dim, np.zeros((dim, dim)).tolist()),
                       "magnetic_constant": 0.0})


def uniform_electric(dim: int, e0, units: UnitsContext = INTERNAL) -> Potentials:
    """phi = -E0 . q, giving a uniform electric field E0."""
    e0 = np.broadcast_to(np.asarray(e0, dtype=float), (dim,)).copy()

    def scalar(q, t):
        q = np.asarray(q, dtype=float)
        return -np.tensordot(q, e0, axes=([-1], [0]))

    return Potentials(dim, _zero_vector(dim), scalar, "constant", "linear",
                      {"type": "uniform_e", "dim": dim, "E0": e0.tolist(),
                       "electric_affine": (e0.tolist(), np.zeros((dim, dim)).tolist()),
                       "magnetic_constant": 0.0})


def harmonic_potentials(dim: int, omega0: float, units: UnitsContext = INTERNAL) -> Potentials:
    """e*phi = m omega0^2 |q|^2 / 2, an isotropic harmonic well."""
    k = units.m * omega0 ** 2 / units.e

    def scalar(q, t):
        q = np.asarray(q, dtype=float)
        return 0.5 * k * np.sum(q * q, axis=-1)

    g = (-units.m * omega0 ** 2 / units.e * np.eye(dim)).tolist()
    return Potentials(dim, _zero_vector(dim), scalar, "constant", "quadratic",
                      {"type": "harmonic", "dim": dim, "omega0": omega0,
                       "electric_affine": ([0.0] * dim, g),
                       "magnetic_constant": 0.0})


def anharmonic_potentials(dim: int, omega0: float, quartic: float,
                          units: UnitsContext = INTERNAL) -> Potentials:
    """Harmonic well plus a quartic perturbation: e*phi = m w0^2 |q|^2/2 + quartic |q|^4."""
    k = units.m * omega0 ** 2 / units.e
    lam = quartic / units.e

    def scalar(q, t):
        q = np.asarray(q, dtype=float)
        r2 = np.sum(q * q, axis=-1)
        return 0.5 * k * r2 + lam * r2 * r2

    return Potentials(dim, _zero_vector(dim), scalar, "constant", "general",
                      {"type": "anharmonic", "dim": dim, "omega0": omega0,
                       "quartic": quartic})


def constant_magnetic(b0: float, gauge: str = "symmetric",
                      units: UnitsContext = INTERNAL) -> Potentials:
    """dim = 2, uniform out-of-plane B. Gauges: symmetric or landau."""
    if gauge == "symmetric":
        def vector(q, t):
            q = np.asarray(q, dtype=float)
            return np.stack([-0.5 * b0 * q[..., 1], 0.5 * b0 * q[..., 0]], axis=-1)
    elif gauge == "landau":
        def vector(q, t):
            q = np.asarray(q, dtype=float)
            return np.stack([-b0 * q[..., 1], np.zeros(q.shape[:-1])], axis=-1)
    else:
        raise ValueError(f"unknown gauge {gauge!r} for constant magnetic field")

    def scalar(q, t):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1])

    return Potentials(2, vector, scalar, "linear", "constant",
                      {"type": "constant_B", "B0": b0, "gauge": gauge,
                       "electric_affine": ([0.0, 0.0], np.zeros((2, 2)).tolist()),
                       "magnetic_constant": b0})


def polynomial_potentials(dim: int, phi_coeffs: dict | None = None,
                          a_coeffs: list | None = None) -> Potentials:
    """Arbitrary fields from polynomial coefficient tables.

    phi_coeffs maps exponent tuples (len dim) to coefficients.
    a_coeffs is a list of such maps, one per vector component.
    """
    phi_coeffs = {tuple(k): float(v) for k, v in (phi_coeffs or {}).items()}
    a_coeffs = [
        {tuple(k): float(v) for k, v in comp.items()} for comp in (a_coeffs or [{}] * dim)
    ]
    if len(a_coeffs) != dim:
        raise ValueError("need one coefficient table per vector component")

    def _poly(coeffs, q):
        out = np.zeros(q.shape[:-1])
        for expo, coef in coeffs.items():
            term = np.full(q.shape[:-1], coef)
            for a, p in enumerate(expo):
                if p:
                    term = term * q[..., a] ** p
            out = out + term
        return out

    def scalar(q, t):
        return _poly(phi_coeffs, np.asarray(q, dtype=float))

    def vector(q, t):
        q = np.asarray(q, dtype=float)
        return np.stack([_poly(c, q) for c in a_coeffs], axis=-1)

    desc = {"type": "polynomial", "dim": dim,
            "phi": {str(list(k)): v for k, v in phi_coeffs.items()},
            "A": [{str(list(k)): v for k, v in c.items()} for c in a_coeffs]}
    return Potentials(dim, vector, scalar, "general", "general", desc)


def potentials_from_descriptor(desc: dict, units: UnitsContext = INTERNAL) -> Potentials:
    kind = desc.get("type")
    if kind == "free":
        return free_potentials(int(desc["dim"]))
    if kind == "uniform_e":
        return uniform_electric(int(desc["dim"]), desc["E0"], units)
    if kind == "harmonic":
        return harmonic_potentials(int(desc["dim"]), float(desc["omega0"]), units)
    if kind == "anharmonic":
        return anharmonic_potentials(int(desc["dim"]), float(desc["omega0"]),
                                     float(desc["quartic"]), units)
    if kind == "constant_B":
        return constant_magnetic(float(desc["B0"]), desc.get("gauge", "symmetric"), units)
    if kind == "polynomial":
        phi = {tuple(eval(k)): v for k, v in desc.get("phi", {}).items()}
        avec = [{tuple(eval(k)): v for k, v in c.items()} for c in desc.get("A", [])]
        return polynomial_potentials(int(desc["dim"]), phi, avec or None)
    raise ValueError(f"unknown potentials descriptor type {kind!r}")


# ---------------------------------------------------------------------------
# gauge function library
# ---------------------------------------------------------------------------

def zero_gauge(dim: int) -> GaugeFunction:
    return GaugeFunction(
        dim,
        chi=lambda q, t: np.zeros(np.asarray(q).shape[:-1]),
        grad=lambda q, t: np.zeros_like(np.asarray(q, dtype=float)),
        dt=lambda q, t: np.zeros(np.asarray(q).shape[:-1]),
        descriptor={"type": "zero", "dim": dim},
    )


def linear_gauge(a) -> GaugeFunction:
    """chi = a . q (time independent)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    dim = a.size

    def chi(q, t):
        return np.tensordot(np.asarray(q, dtype=float), a, axes=([-1], [0]))

    def grad(q, t):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(a, q.shape).copy()

    return GaugeFunction(dim, chi, grad,
                         lambda q, t: np.zeros(np.asarray(q).shape[:-1]),
                         {"type": "linear", "a": a.tolist()})


def quadratic_gauge(b: float, dim: int = 1) -> GaugeFunction:
    """chi = b |q|^2."""
    def chi(q, t):
        q = np.asarray(q, dtype=float)
        return b * np.sum(q * q, axis=-1)

    def grad(q, t):
        return 2.0 * b * np.asarray(q, dtype=float)

    return GaugeFunction(dim, chi, grad,
                         lambda q, t: np.zeros(np.asarray(q).shape[:-1]),
                         {"type": "quadratic", "b": b, "dim": dim})


def cubic_gauge(kappa: float, dim: int = 1) -> GaugeFunction:
    """chi = kappa sum_s q_s^3; the lowest order at which the chord-averaged
    phase differs from the endpoint difference."""
    def chi(q, t):
        q = np.asarray(q, dtype=float)
        return kappa * np.sum(q ** 3, axis=-1)

    def grad(q, t):
        q = np.asarray(q, dtype=float)
        return 3.0 * kappa * q ** 2

    return GaugeFunction(dim, chi, grad,
                         lambda q, t: np.zeros(np.asarray(q).shape[:-1]),
                         {"type": "cubic", "kappa": kappa, "dim": dim})


def time_gauge(f: Callable, fdot: Callable, dim: int = 1) -> GaugeFunction:
    """chi = f(t), position independent."""
    def chi(q, t):
        return np.full(np.asarray(q).shape[:-1], f(t))

    def grad(q, t):
        return np.zeros_like(np.asarray(q, dtype=float))

    def dt(q, t):
        return np.full(np.asarray(q).shape[:-1], fdot(t))

    return GaugeFunction(dim, chi, grad, dt, {"type": "time_only", "dim": dim})


def separable_gauge(c, f: Callable, fdot: Callable) -> GaugeFunction:
    """chi = (c . q) f(t)."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    dim = c.size

    def chi(q, t):
        return np.tensordot(np.asarray(q, dtype=float), c, axes=([-1], [0])) * f(t)

    def grad(q, t):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(c, q.shape) * f(t)

    def dt(q, t):
        return np.tensordot(np.asarray(q, dtype=float), c, axes=([-1], [0])) * fdot(t)

    return GaugeFunction(dim, chi, grad, dt, {"type": "separable", "c": c.tolist()})
