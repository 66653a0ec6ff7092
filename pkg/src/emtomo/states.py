"""Quantum states on grids, classical ensembles, and the gauge action on states."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import GaugeFunction
from .numerics import Grid, GridFunction, spectral_derivative_array
from .units import INTERNAL, UnitsContext

__all__ = [
    "WaveFunction",
    "DensityMatrix",
    "ParticleEnsemble",
    "gaussian_packet",
    "harmonic_eigenstate",
    "gauge_phase_transform",
    "density_from_wavefunction",
    "mixed_density",
    "thermal_density",
    "expectation_position",
    "expectation_momentum",
    "state_fidelity",
    "sample_ensemble_from_wigner",
]


@dataclass
class WaveFunction:
    """Complex wavefunction samples over a position grid."""

    grid: Grid
    psi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != self.grid.shape:
            raise ValueError("psi shape does not match grid")
        if not np.all(np.isfinite(self.psi.view(float))):
            raise ValueError("psi contains non-finite samples")

    def norm(self) -> float:
        w = self.grid.trapz_weights()
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2 * w)))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.psi / self.norm(), self.time)

    def boundary_amplitude(self) -> float:
        """Largest |psi| sample on the grid boundary."""
        m = 0.0
        for a in range(self.grid.dim):
            sl_lo = [slice(None)] * self.grid.dim
            sl_lo[a] = 0
            sl_hi = [slice(None)] * self.grid.dim
            sl_hi[a] = -1
            m = max(m, float(np.max(np.abs(self.psi[tuple(sl_lo)]))),
                    float(np.max(np.abs(self.psi[tuple(sl_hi)]))))
        return m

    def density(self) -> GridFunction:
        return GridFunction(self.grid, np.abs(self.psi) ** 2)


@dataclass
class DensityMatrix:
    """rho(q, q') over grid x grid, flattened row-major."""

    grid: Grid
    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        n = self.grid.size
        if self.rho.shape != (n, n):
            raise ValueError("rho must be (grid.size, grid.size)")

    @property
    def weights_flat(self) -> np.ndarray:
        return self.grid.trapz_weights().ravel()

    def trace(self) -> complex:
        return complex(np.sum(np.diag(self.rho) * self.weights_flat))

    def hermiticity_defect(self) -> float:
        scale = np.max(np.abs(self.rho)) + 1e-300
        return float(np.max(np.abs(self.rho - self.rho.conj().T)) / scale)

    def purity(self) -> float:
        w = self.weights_flat
        m = self.rho * w[None, :]
        return float(np.trace(m @ m).real)

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of the weighted kernel (trace-normalized scale)."""
        w = np.sqrt(self.weights_flat)
        sym = (w[:, None] * self.rho * w[None, :])
        sym = 0.5 * (sym + sym.conj().T)
        return float(np.linalg.eigvalsh(sym)[0])

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8,
                 psd_tol: float = 1e-8):
        if self.hermiticity_defect() > herm_tol:
            raise ValueError("density matrix not Hermitian within tolerance")
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError("density matrix trace differs from one")
        if self.min_eigenvalue() < -psd_tol:
            raise ValueError("density matrix is not positive semidefinite")

    def diagonal(self) -> np.ndarray:
        return np.diag(self.rho).real.reshape(self.grid.shape)


@dataclass
class ParticleEnsemble:
    """Weighted classical particles with kinetic momentum."""

    positions: np.ndarray   # (n, dim)
    momenta: np.ndarray     # (n, dim)
    weights: np.ndarray     # (n,)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.momenta = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.positions.shape[0]
        if self.momenta.shape != self.positions.shape or self.weights.shape != (n,):
            raise ValueError("ensemble array shapes inconsistent")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.momenta))):
            raise ValueError("ensemble contains non-finite phase-space points")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble weights must sum to one")

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def mean_position(self) -> np.ndarray:
        return self.weights @ self.positions

    def mean_momentum(self) -> np.ndarray:
        return self.weights @ self.momenta


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def gaussian_packet(grid: Grid, q0, p0, sigma, units: UnitsContext = INTERNAL,
                    time: float = 0.0) -> WaveFunction:
    """Normalized Gaussian with position center q0, momentum center p0, width sigma.

    sigma is the position standard deviation (per axis)."""
    dim = grid.dim
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (dim,))
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (dim,))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (dim,))
    for a, ax in enumerate(grid.axes):
        if q0[a] - 5 * sigma[a] < ax.lo or q0[a] + 5 * sigma[a] > ax.hi:
            raise ValueError("packet support (q0 +- 5 sigma) exceeds the grid")
    mesh = grid.meshgrid()
    psi = np.ones(grid.shape, dtype=complex)
    for a in range(dim):
        dq = mesh[a] - q0[a]
        psi = psi * np.exp(-dq ** 2 / (4.0 * sigma[a] ** 2)
                           + 1j * p0[a] * mesh[a] / units.hbar)
    wf = WaveFunction(grid, psi, time)
    return wf.normalized()


def harmonic_eigenstate(grid: Grid, n: int, units: UnitsContext = INTERNAL,
                        omega0: float | None = None) -> WaveFunction:
    """1D oscillator eigenstate (n = 0 or 1) for the frequency omega0 (defaults to units.omega)."""
    if grid.dim != 1:
        raise ValueError("harmonic_eigenstate is one-dimensional")
    if n not in (0, 1):
        raise ValueError("only the ground and first excited states are provided")
    w0 = units.omega if omega0 is None else omega0
    alpha = units.m * w0 / units.hbar
    q = grid.axis_points(0)
    psi = np.exp(-alpha * q ** 2 / 2.0).astype(complex)
    if n == 1:
        psi = psi * q
    return WaveFunction(grid, psi).normalized()


def density_from_wavefunction(psi: WaveFunction) -> DensityMatrix:
    v = psi.psi.ravel()
    return DensityMatrix(psi.grid, np.outer(v, v.conj()), psi.time)


def mixed_density(components) -> DensityMatrix:
    """Convex mixture of pure states: components = [(weight, WaveFunction), ...]."""
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to one")
    grid = components[0][1].grid
    rho = np.zeros((grid.size, grid.size), dtype=complex)
    t = components[0][1].time
    for w, wf in components:
        if wf.grid != grid:
            raise ValueError("all mixture components must share one grid")
        v = wf.psi.ravel()
        rho += w * np.outer(v, v.conj())
    return DensityMatrix(grid, rho, t)


def thermal_density(grid: Grid, nbar: float, units: UnitsContext = INTERNAL,
                    omega0: float | None = None) -> DensityMatrix:
    """1D oscillator Gaussian state with mean occupation nbar (nbar = 0 is pure).

    Closed-form position kernel of the Gaussian thermal state; used where a
    faster-decaying characteristic function than any pure packet is needed.
    """
    if grid.dim != 1:
        raise ValueError("thermal_density is one-dimensional")
    w0 = units.omega if omega0 is None else omega0
    alpha = units.m * w0 / units.hbar
    s = 2.0 * nbar + 1.0
    q = grid.axis_points(0)
    qi = q[:, None]
    qj = q[None, :]
    # Var(q) = s/(2 alpha); off-diagonal decay rate (s^2-1)/s keeps purity 1/s
    a_coef = alpha * (s + 1.0 / s) / 4.0
    b_coef = alpha * (s - 1.0 / s) / 4.0
    rho = np.exp(-a_coef * (qi ** 2 + qj ** 2) + 2.0 * b_coef * qi * qj).astype(complex)
    h = grid.spacings[0]
    rho /= np.sum(np.diag(rho).real) * h
    return DensityMatrix(grid, rho)


# ---------------------------------------------------------------------------
# gauge action and expectations
# ---------------------------------------------------------------------------

def gauge_phase_transform(state, chi: GaugeFunction, t: float | None = None,
                          units: UnitsContext = INTERNAL):
    """Multiply by exp(i e chi / (c hbar)); conjugation for density matrices."""
    lam = units.e / (units.c * units.hbar)
    if isinstance(state, WaveFunction):
        tt = state.time if t is None else t
        pts = state.grid.flat_points().reshape(state.grid.shape + (state.grid.dim,))
        phase = np.exp(1j * lam * np.asarray(chi.chi(pts, tt)))
        return WaveFunction(state.grid, state.psi * phase, state.time)
    if isinstance(state, DensityMatrix):
        tt = state.time if t is None else t
        pts = state.grid.flat_points()
        ph = np.exp(1j * lam * np.asarray(chi.chi(pts, tt)))
        return DensityMatrix(state.grid, ph[:, None] * state.rho * ph.conj()[None, :],
                             state.time)
    raise TypeError("state must be a WaveFunction or DensityMatrix")


def expectation_position(psi: WaveFunction) -> np.ndarray:
    w = psi.grid.trapz_weights()
    dens = np.abs(psi.psi) ** 2 * w
    mesh = psi.grid.meshgrid()
    return np.array([float(np.sum(dens * m)) for m in mesh])


def expectation_momentum(psi: WaveFunction, units: UnitsContext = INTERNAL,
                         method: str = "spectral") -> np.ndarray:
    """<-i hbar d/dq> per axis."""
    w = psi.grid.trapz_weights()
    out = []
    for a in range(psi.grid.dim):
        if method == "spectral":
            dpsi = spectral_derivative_array(psi.psi, psi.grid.spacings[a], axis=a)
        else:
            from .numerics import finite_difference_derivative_array
            dpsi = finite_difference_derivative_array(psi.psi, psi.grid.spacings[a], axis=a)
        out.append(float(np.sum(psi.psi.conj() * (-1j * units.hbar) * dpsi * w).real))
    return np.array(out)


def state_fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Normalized overlap Tr(a b) / sqrt(Tr a^2 Tr b^2); equals |<psi|phi>|^2 for pure states."""
    wa = a.weights_flat
    ma = a.rho * wa[None, :]
    mb = b.rho * wa[None, :]
    overlap = np.trace(ma @ mb).real
    na = np.trace(ma @ ma).real
    nb = np.trace(mb @ mb).real
    return float(overlap / np.sqrt(na * nb))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_ensemble_from_wigner(psf, n_particles: int, seed: int = 0,
                                negative_mass_tol: float = 1e-3,
                                jitter: bool = True) -> ParticleEnsemble:
    """Importance-sample a particle ensemble from a non-negative phase-space function.

    Rejects inputs whose negative part carries more than `negative_mass_tol`
    of the total mass (signals a non-classical state).  Deterministic for a
    fixed seed.
    """
    vals = np.asarray(psf.values, dtype=float)
    neg = float(-np.sum(vals[vals < 0.0]))
    tot = float(np.sum(np.abs(vals)))
    if tot <= 0.0:
        raise ValueError("phase-space function has no mass")
    if neg / tot > negative_mass_tol:
        raise ValueError(
            f"negative quasi-probability mass {neg / tot:.2e} exceeds {negative_mass_tol:.1e}")
    clipped = np.clip(vals, 0.0, None).ravel()
    prob = clipped / clipped.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(prob.size, size=n_particles, p=prob)
    unraveled = np.unravel_index(idx, vals.shape)

    dim = len(psf.q_axes)
    coords = []
    steps = []
    for a in range(dim):
        coords.append(psf.q_axes[a][unraveled[a]])
        steps.append(psf.q_axes[a][1] - psf.q_axes[a][0])
    for a in range(dim):
        coords.append(psf.p_axes[a][unraveled[dim + a]])
        steps.append(psf.p_axes[a][1] - psf.p_axes[a][0])
    pts = np.stack(coords, axis=-1)
    if jitter:
        pts = pts + (rng.random(pts.shape) - 0.5) * np.asarray(steps)

    weights = np.full(n_particles, 1.0 / n_particles)
    return ParticleEnsemble(pts[:, :dim], pts[:, dim:], weights)
