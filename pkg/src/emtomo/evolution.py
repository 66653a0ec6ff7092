"""Quantum and classical propagation, tomographic evolution-equation residuals,
and the small-hbar limit study.

The tomographic equations are checked as residuals on propagated trajectories
(time derivative from a five-point stencil against the assembled right-hand
side), never integrated directly: their field terms are pseudo-differential
and well-conditioned only as checks.  Field classes are restricted to affine
electric and constant magnetic fields, for which every operator-valued field
argument truncates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Potentials, field_strengths
from .numerics import Grid, legendre_rule_half, trapezoid_weights
from .operators import (StencilSpec, TomOperator, identity_operator,
                        parameter_derivative, parameter_multiplier,
                        trig_multiplier, x_derivative, x_multiplier)
from .states import DensityMatrix, ParticleEnsemble, WaveFunction
from .tomography import (TomographyParams, _k_grid_for, radon_slice,
                         radon_slice_vector, _char_from_wavefunction)
from .units import INTERNAL, UnitsContext
from .wigner import PhaseSpaceFunction, gauge_independent_wigner, wigner_transform

__all__ = [
    "PropagatorConfig",
    "ResidualReport",
    "build_hamiltonian",
    "schrodinger_propagate",
    "liouville_propagate",
    "backward_characteristics_density",
    "AffineGaussianState",
    "affine_pusher_flow",
    "advect_gaussian",
    "classical_tomogram",
    "equation_rhs",
    "EQUATION_IDS",
    "tomographic_residual",
    "residual_refinement_study",
    "classical_limit_study",
]

EQUATION_IDS = (
    "liouville_optical",        # classical, optical parameters, vector observable
    "liouville_symplectic",     # classical, symplectic parameters, vector observable
    "symplectic_generalized",   # quantum, generalized-momentum tomograms
    "symplectic_kinetic",       # quantum, kinetic-momentum (gauge-independent) tomograms
    "scalar_kinetic",           # quantum, scalar-observable gauge-independent tomograms
    "liouville_scalar",         # classical, scalar observable
)


@dataclass
class PropagatorConfig:
    dt: float = 1e-3
    steps: int = 1
    method: str = "auto"            # auto | dense | sparse_fd4
    time_dependent: bool = False
    boundary_tol: float = 1e-6

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.method not in ("auto", "dense", "sparse_fd4"):
            raise ValueError(f"unknown propagator method {self.method!r}")


@dataclass
class ResidualReport:
    equation_id: str
    levels: list
    residuals: list
    order: float
    details: dict = dc_field(default_factory=dict)

    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.residuals, self.residuals[1:]))


# ---------------------------------------------------------------------------
# Hamiltonian assembly and Crank-Nicolson stepping
# ---------------------------------------------------------------------------

def _spectral_momentum_matrix(n: int, h: float, hbar: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0       # keeps the matrix Hermitian
    f = np.fft.fft(np.eye(n), axis=0)
    d1 = np.fft.ifft(1j * k[:, None] * f, axis=0)
    return -1j * hbar * d1


def _fd4_momentum_matrix(n: int, h: float, hbar: float) -> sp.csr_matrix:
    # truncated central stencil keeps the matrix skew-symmetric (Dirichlet-like)
    c1, c2 = 8.0 / (12 * h), -1.0 / (12 * h)
    d = sp.diags([c2, c1, -c1, -c2], [2, 1, -1, -2], shape=(n, n), format="csr")
    return (-1j * hbar) * d


def build_hamiltonian(grid: Grid, potentials: Potentials, t: float = 0.0,
                      units: UnitsContext = INTERNAL, style: str = "dense"):
    """H = (P - eA/c)^2 / 2m + e phi as a Hermitian matrix on the flat grid."""
    dim = grid.dim
    pts = grid.flat_points()
    npts = grid.size
    avals = np.asarray(potentials.vector(pts, t))
    phivals = np.asarray(potentials.scalar(pts, t))

    if style == "dense":
        h_mat = np.zeros((npts, npts), dtype=complex)
        for a in range(dim):
            p1 = _spectral_momentum_matrix(grid.shape[a], grid.spacings[a], units.hbar)
            full = np.array([[1.0]])
            for b in range(dim):
                blk = p1 if b == a else np.eye(grid.shape[b])
                full = np.kron(full, blk)
            shifted = full - np.diag(units.e * avals[:, a] / units.c)
            h_mat += shifted @ shifted / (2.0 * units.m)
        h_mat += np.diag(units.e * phivals)
        return 0.5 * (h_mat + h_mat.conj().T)

    if style == "sparse_fd4":
        h_mat = sp.csr_matrix((npts, npts), dtype=complex)
        for a in range(dim):
            p1 = _fd4_momentum_matrix(grid.shape[a], grid.spacings[a], units.hbar)
            full = None
            for b in range(dim):
                blk = p1 if b == a else sp.identity(grid.shape[b], format="csr")
                full = blk if full is None else sp.kron(full, blk, format="csr")
            shifted = full - sp.diags(units.e * avals[:, a] / units.c)
            h_mat = h_mat + shifted @ shifted / (2.0 * units.m)
        h_mat = h_mat + sp.diags(units.e * phivals)
        return (0.5 * (h_mat + h_mat.conj().T)).tocsc()

    raise ValueError(f"unknown Hamiltonian style {style!r}")


def _edge_probability(psi: WaveFunction) -> float:
    dens = np.abs(psi.psi) ** 2 * psi.grid.trapz_weights()
    total = 0.0
    for a in range(psi.grid.dim):
        sl = [slice(None)] * psi.grid.dim
        for edge in (0, -1):
            sl_a = list(sl)
            sl_a[a] = edge
            total += float(np.sum(dens[tuple(sl_a)]))
    return total


def schrodinger_propagate(psi: WaveFunction, potentials: Potentials,
                          config: PropagatorConfig, units: UnitsContext = INTERNAL,
                          sample_every: int | None = None):
    """Crank-Nicolson propagation; unitary per step up to solver round-off.

    Returns the final WaveFunction, or the list of sampled states (including
    the initial one) when sample_every is given.
    """
    grid = psi.grid
    style = config.method
    if style == "auto":
        style = "dense" if grid.size <= 2048 else "sparse_fd4"

    dt = config.dt
    hbar = units.hbar
    vec = psi.psi.ravel().astype(complex)
    samples = [WaveFunction(grid, vec.reshape(grid.shape).copy(), psi.time)]

    solve = None
    if not config.time_dependent:
        h_mat = build_hamiltonian(grid, potentials, psi.time, units, style)
        if style == "dense":
            m_plus = np.eye(grid.size) + 0.5j * dt / hbar * h_mat
            m_minus = np.eye(grid.size) - 0.5j * dt / hbar * h_mat
            lu = sla.lu_factor(m_plus)
            solve = lambda v: sla.lu_solve(lu, m_minus @ v)
        else:
            eye = sp.identity(grid.size, format="csc")
            m_plus = (eye + 0.5j * dt / hbar * h_mat).tocsc()
            m_minus = (eye - 0.5j * dt / hbar * h_mat).tocsr()
            fac = spla.splu(m_plus)
            solve = lambda v: fac.solve(m_minus @ v)

    t = psi.time
    for step in range(config.steps):
        if config.time_dependent:
            h_mat = build_hamiltonian(grid, potentials, t + dt / 2.0, units, style)
            if style == "dense":
                m_plus = np.eye(grid.size) + 0.5j * dt / hbar * h_mat
                m_minus = np.eye(grid.size) - 0.5j * dt / hbar * h_mat
                vec = sla.solve(m_plus, m_minus @ vec)
            else:
                eye = sp.identity(grid.size, format="csc")
                fac = spla.splu((eye + 0.5j * dt / hbar * h_mat).tocsc())
                vec = fac.solve((eye - 0.5j * dt / hbar * h_mat) @ vec)
        else:
            vec = solve(vec)
        t += dt
        current = WaveFunction(grid, vec.reshape(grid.shape), t)
        if _edge_probability(current) > config.boundary_tol:
            raise RuntimeError(
                f"boundary leakage at t={t:.4f}: edge probability "
                f"{_edge_probability(current):.2e} exceeds {config.boundary_tol:.1e}")
        if sample_every and (step + 1) % sample_every == 0:
            samples.append(current)
    if sample_every:
        return samples
    return WaveFunction(grid, vec.reshape(grid.shape), t)


# ---------------------------------------------------------------------------
# classical propagation
# ---------------------------------------------------------------------------

def _push_points(q: np.ndarray, p: np.ndarray, potentials: Potentials, t0: float,
                 dt: float, steps: int, units: UnitsContext) -> tuple:
    """Symmetric kick / magnetic-arc / kick integrator for charged particles.

    Exact for a uniform electric field and exactly |p|-conserving (exact
    cyclotron arc) for a constant magnetic field.
    """
    dim = q.shape[1]
    e_ch = units.e
    m = units.m
    c = units.c
    t = t0
    for _ in range(steps):
        fs = field_strengths(potentials, q, t)
        p = p + 0.5 * dt * e_ch * fs.e
        if dim == 2:
            bz = fs.b if np.ndim(fs.b) else np.full(q.shape[0], fs.b)
            omega_c = e_ch * bz / (m * c)
            phi = omega_c * dt
            cosphi = np.cos(phi)
            sinphi = np.sin(phi)
            px, py = p[:, 0].copy(), p[:, 1].copy()
            # dp/dt = omega_c (p_y, -p_x): clockwise rotation for omega_c > 0
            p_new = np.stack([px * cosphi + py * sinphi,
                              -px * sinphi + py * cosphi], axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                s_fac = np.where(np.abs(phi) > 1e-12, sinphi / np.where(phi == 0, 1, phi), 1.0)
                c_fac = np.where(np.abs(phi) > 1e-12,
                                 (1.0 - cosphi) / np.where(phi == 0, 1, phi), 0.0)
            dq1 = (dt / m) * (s_fac * px + c_fac * py)
            dq2 = (dt / m) * (-c_fac * px + s_fac * py)
            q = q + np.stack([dq1, dq2], axis=1)
            p = p_new
        else:
            q = q + dt * p / m
        fs = field_strengths(potentials, q, t + dt)
        p = p + 0.5 * dt * e_ch * fs.e
        t += dt
    return q, p


def liouville_propagate(ensemble: ParticleEnsemble, potentials: Potentials,
                        dt: float, steps: int, t0: float = 0.0,
                        units: UnitsContext = INTERNAL) -> ParticleEnsemble:
    """Advance weighted particles along the charged-particle characteristics."""
    q, p = _push_points(ensemble.positions.copy(), ensemble.momenta.copy(),
                        potentials, t0, dt, steps, units)
    return ParticleEnsemble(q, p, ensemble.weights.copy())


def backward_characteristics_density(initial_density, q_axes, p_axes,
                                     potentials: Potentials, t: float, dt: float,
                                     units: UnitsContext = INTERNAL) -> PhaseSpaceFunction:
    """Phase-space density at time t by pulling grid nodes back along the flow.

    initial_density(q, p) must accept (npts, dim) arrays.  Deterministic and
    noise-free, which residual refinement studies require.
    """
    dim = len(q_axes)
    mesh = np.meshgrid(*q_axes, *p_axes, indexing="ij")
    shape = mesh[0].shape
    q = np.stack([m.ravel() for m in mesh[:dim]], axis=1)
    p = np.stack([m.ravel() for m in mesh[dim:]], axis=1)
    if t > 0:
        steps = int(round(t / dt))
        if steps < 1 or abs(steps * dt - t) > 1e-12 * max(1.0, t):
            raise ValueError("t must be a multiple of dt")
        q, p = _push_points(q, p, potentials, t, -dt, steps, units)
    vals = initial_density(q, p).reshape(shape)
    return PhaseSpaceFunction(tuple(np.asarray(a) for a in q_axes),
                              tuple(np.asarray(a) for a in p_axes),
                              vals, "kinetic", t)


@dataclass
class AffineGaussianState:
    """Gaussian phase-space density advected by an affine flow map.

    For affine electric and constant magnetic fields every substep of the
    classical pusher is an affine map of (q, p), so the discrete flow is
    affine exactly; a Gaussian density then stays Gaussian and its tomograms
    are analytic.  Used by residual studies in place of a (prohibitively
    large) multi-dimensional phase-space array.
    """

    mean: np.ndarray      # (2 dim,) current phase-space mean
    cov: np.ndarray       # (2 dim, 2 dim)
    dim: int
    time: float = 0.0

    def tomogram_values(self, mu, nu, x_axes, scalar_x: bool) -> np.ndarray:
        dim = self.dim
        if scalar_x:
            a = np.concatenate([np.asarray(mu), np.asarray(nu)])
            m = float(a @ self.mean)
            v = float(a @ self.cov @ a)
            x = x_axes[0]
            return np.exp(-(x - m) ** 2 / (2 * v)) / np.sqrt(2 * np.pi * v)
        rows = []
        for s in range(dim):
            row = np.zeros(2 * dim)
            row[s] = mu[s]
            row[dim + s] = nu[s]
            rows.append(row)
        a = np.array(rows)
        m = a @ self.mean
        v = a @ self.cov @ a.T
        vinv = np.linalg.inv(v)
        det = np.linalg.det(v)
        mesh = np.meshgrid(*x_axes, indexing="ij")
        dx = np.stack([mm - m[i] for i, mm in enumerate(mesh)], axis=-1)
        quad = np.einsum("...i,ij,...j->...", dx, vinv, dx)
        return np.exp(-0.5 * quad) / ((2 * np.pi) ** (dim / 2) * np.sqrt(det))


def affine_pusher_flow(potentials: Potentials, t: float, dt: float, dim: int,
                       units: UnitsContext = INTERNAL, tol: float = 1e-9):
    """(M, b) with z(t) = M z(0) + b for the discrete pusher flow.

    Valid when the fields are affine; verified on a probe point and rejected
    otherwise."""
    steps = int(round(t / dt))
    if steps and abs(steps * dt - t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError("t must be a multiple of dt")

    def push(z0):
        q = z0[:, :dim].copy()
        p = z0[:, dim:].copy()
        if steps:
            q, p = _push_points(q, p, potentials, 0.0, dt, steps, units)
        return np.concatenate([q, p], axis=1)

    n2 = 2 * dim
    base = push(np.zeros((1, n2)))[0]
    basis = push(np.eye(n2)) - base[None, :]
    m_mat = basis.T
    probe = np.array([[0.37, -0.41, 0.23, 0.11][:n2]])
    got = push(probe)[0]
    lin = m_mat @ probe[0] + base
    if np.max(np.abs(got - lin)) > tol * max(1.0, float(np.max(np.abs(got)))):
        raise ValueError("pusher flow is not affine for these fields")
    return m_mat, base


def advect_gaussian(initial_mean, initial_cov, potentials: Potentials, t: float,
                    dt: float, dim: int, units: UnitsContext = INTERNAL) -> AffineGaussianState:
    m_mat, b = affine_pusher_flow(potentials, t, dt, dim, units)
    mean = m_mat @ np.asarray(initial_mean, dtype=float) + b
    cov = m_mat @ np.asarray(initial_cov, dtype=float) @ m_mat.T
    return AffineGaussianState(mean, cov, dim, t)


def classical_tomogram(ensemble: ParticleEnsemble, params: TomographyParams,
                       x: np.ndarray, bandwidth: float | None = None,
                       units: UnitsContext = INTERNAL):
    """Kernel-density estimate of the distribution of mu.q + nu.p."""
    from .tomography import Tomogram
    mu, nu, scalar_x = params.resolve(units)
    proj = ensemble.positions @ np.asarray(mu) + ensemble.momenta @ np.asarray(nu)
    if bandwidth is None:
        spread = np.sqrt(np.average((proj - np.average(proj, weights=ensemble.weights)) ** 2,
                                    weights=ensemble.weights))
        bandwidth = 1.06 * max(spread, 1e-6) * len(proj) ** (-0.2)
    x = np.asarray(x, dtype=float)
    vals = np.zeros(len(x))
    chunk = 4096
    for lo in range(0, len(proj), chunk):
        pr = proj[lo:lo + chunk]
        wt = ensemble.weights[lo:lo + chunk]
        vals += np.sum(wt[None, :] * np.exp(-(x[:, None] - pr[None, :]) ** 2
                                            / (2 * bandwidth ** 2)), axis=1)
    vals /= np.sqrt(2 * np.pi) * bandwidth
    return Tomogram(params, (x,), vals, "ordinary", 0.0)


# ---------------------------------------------------------------------------
# right-hand-side tables of the tomographic evolution equations
# ---------------------------------------------------------------------------

def _require_affine(potentials: Potentials, units: UnitsContext):
    aff = potentials.electric_affine(units)
    bconst = potentials.magnetic_constant()
    if aff is None or bconst is None:
        raise ValueError(
            "residual framework requires affine electric and constant magnetic "
            "fields (the regime where the operator-valued field arguments "
            "truncate exactly); richer fields are rejected")
    return aff, float(bconst)


def _field_operator(e0_j: float, g_row: np.ndarray, qops: list[TomOperator],
                    dim: int, n_x: int) -> TomOperator:
    """Affine scalar field evaluated at operator argument: E0 + sum G_k qop_k."""
    op = e0_j * identity_operator(dim, n_x)
    for k2, g in enumerate(g_row):
        if g != 0.0:
            op = op + g * qops[k2]
    return op


def _levi_civita_2d():
    # (alpha, beta, sign) for the out-of-plane component
    return [(0, 1, 1.0), (1, 0, -1.0)]


def equation_rhs(equation_id: str, potentials: Potentials, dim: int,
                 units: UnitsContext = INTERNAL, quad_order: int = 8) -> TomOperator:
    """Assembled right-hand-side operator table of a tomographic evolution equation."""
    if equation_id not in EQUATION_IDS:
        raise ValueError(f"unknown equation id {equation_id!r}")
    (e0, gmat), bconst = _require_affine(potentials, units)
    m = units.m
    e_ch = units.e
    c = units.c
    hbar = units.hbar
    mw = units.m * units.omega

    scalar_x = equation_id in ("scalar_kinetic", "liouville_scalar")
    n_x = 1 if scalar_x else dim

    def dmu(s):
        return parameter_derivative(dim, n_x, "mu", s)

    def dnu(s):
        return parameter_derivative(dim, n_x, "nu", s)

    def mul_mu(s):
        return parameter_multiplier(dim, n_x, "mu", s)

    def mul_nu(s):
        return parameter_multiplier(dim, n_x, "nu", s)

    def dx(s, power=1):
        return x_derivative(dim, n_x, 0 if scalar_x else s, power)

    rhs = TomOperator.zero(dim, n_x)

    if equation_id in ("liouville_symplectic", "liouville_scalar"):
        qops = [-1 * (dx(s, -1) * dmu(s)) for s in range(dim)]
        for s in range(dim):
            rhs = rhs + (1.0 / m) * (mul_mu(s) * dnu(s))
        for j in range(dim):
            e_op = _field_operator(e0[j], gmat[j], qops, dim, n_x)
            rhs = rhs - e_ch * (e_op * mul_nu(j) * dx(j))
        if dim == 2 and bconst != 0.0:
            for alpha, beta, sign in _levi_civita_2d():
                if equation_id == "liouville_symplectic":
                    term = dx(beta, -1) * dnu(beta) * mul_nu(alpha) * dx(alpha)
                else:
                    term = mul_nu(alpha) * dnu(beta)
                rhs = rhs + (sign * e_ch * bconst / (m * c)) * term
        return rhs.cleaned()

    if equation_id == "liouville_optical":
        if dim != 1:
            raise ValueError("the optical residual runs in one dimension")
        if bconst != 0.0:
            raise ValueError("optical residuals support zero magnetic field")
        omega = units.omega
        qops = [(trig_multiplier(dim, n_x, s, sin_power=1) * dx(s, -1)
                 * parameter_derivative(dim, n_x, "theta", s)
                 + x_multiplier(dim, n_x, s) * trig_multiplier(dim, n_x, s, cos_power=1))
                for s in range(dim)]
        for j in range(dim):
            rot = trig_multiplier(dim, n_x, j, cos_power=2) \
                * parameter_derivative(dim, n_x, "theta", j)
            stretch = trig_multiplier(dim, n_x, j, sin_power=1, cos_power=1) * (
                identity_operator(dim, n_x)
                + x_multiplier(dim, n_x, j) * dx(j))
            rhs = rhs + omega * (rot - stretch)
            e_op = _field_operator(e0[j], gmat[j], qops, dim, n_x)
            rhs = rhs - (e_ch / (m * omega)) * (
                e_op * trig_multiplier(dim, n_x, j, sin_power=1) * dx(j))
        return rhs.cleaned()

    if equation_id == "symplectic_generalized":
        # generalized-momentum tomograms; scalar potential only (A enters through
        # products that the affine restriction does not truncate for moving frames)
        qops = [(-1 * (dx(s, -1) * dmu(s))
                 + (0.5j * hbar) * (mul_nu(s) * dx(s))) for s in range(dim)]
        pops = [(-1 * (dx(s, -1) * dnu(s)))
                - (0.5j * hbar) * (mul_mu(s) * dx(s)) for s in range(dim)]
        for s in range(dim):
            rhs = rhs + (1.0 / m) * (mul_mu(s) * dnu(s))
        # (2e/hbar) Im phi(q_op): phi reconstructed from the affine E (phi = -int E)
        phi_op = _phi_operator(e0, gmat, qops, dim, n_x, units)
        rhs = rhs + (2.0 * e_ch / hbar) * phi_op.imag_part()
        avec = _linear_vector_potential(potentials, units)
        if avec is not None and np.any(avec != 0.0):
            a_ops = [_field_operator(0.0, avec[j], qops, dim, n_x) for j in range(dim)]
            asq = TomOperator.zero(dim, n_x)
            ap = TomOperator.zero(dim, n_x)
            for j in range(dim):
                asq = asq + a_ops[j] * a_ops[j]
                ap = ap + a_ops[j] * pops[j]
            rhs = rhs + (e_ch ** 2 / (m * c ** 2 * hbar)) * asq.imag_part()
            rhs = rhs - (2.0 * e_ch / (m * c * hbar)) * ap.imag_part()
            div_a = float(np.trace(np.asarray(avec)))
            rhs = rhs + (e_ch / (m * c) * div_a) * identity_operator(dim, n_x)
        return rhs.cleaned()

    if equation_id in ("symplectic_kinetic", "scalar_kinetic"):
        nodes, weights = legendre_rule_half(quad_order)
        base = [-1 * (dx(s, -1) * dmu(s)) for s in range(dim)]

        def q_tau(s, tau):
            return base[s] + (1j * hbar * tau) * (mul_nu(s) * dx(s))

        for s in range(dim):
            rhs = rhs + (1.0 / m) * (mul_mu(s) * dnu(s))

        # E tilde: tau-averaged affine field at operator argument
        for j in range(dim):
            e_tilde = TomOperator.zero(dim, n_x)
            for tau, w in zip(nodes, weights):
                qt = [q_tau(s, tau) for s in range(dim)]
                e_tilde = e_tilde + w * _field_operator(e0[j], gmat[j], qt, dim, n_x)
            rhs = rhs - e_ch * (e_tilde * mul_nu(j) * dx(j))

        if dim == 2 and bconst != 0.0:
            # constant B: B tilde = B, and the first-moment average of tau vanishes,
            # so the momentum-shift operator is exactly zero
            b_tilde = bconst * identity_operator(dim, n_x)
            dp_ops = _delta_p_operators(bconst, nodes, weights, dim, n_x,
                                        mul_nu, dx, units)
            for alpha, beta, sign in _levi_civita_2d():
                if equation_id == "symplectic_kinetic":
                    inner = dx(beta, -1) * dnu(beta) - dp_ops[beta]
                    term = b_tilde * inner * mul_nu(alpha) * dx(alpha)
                else:
                    inner = dnu(beta) - dp_ops[beta] * dx(0)
                    term = b_tilde * inner * mul_nu(alpha)
                rhs = rhs + (sign * e_ch / (m * c)) * term
            for alpha in range(dim):
                rhs = rhs - (1.0 / m) * (dp_ops[alpha] * mul_mu(alpha) * dx(alpha))
        return rhs.cleaned()

    raise ValueError(equation_id)


def _delta_p_operators(bconst, nodes, weights, dim, n_x, mul_nu, dx, units):
    """Momentum-shift operators; exactly zero for constant B (odd tau average)."""
    out = []
    for alpha in range(dim):
        op = TomOperator.zero(dim, n_x)
        for beta, gamma_sign in [(1 - alpha, 1.0 if alpha == 0 else -1.0)]:
            tau_avg = sum(w * tau for tau, w in zip(nodes, weights))
            coeff = -(units.e / units.c) * (units.hbar / 1j) * gamma_sign * bconst * tau_avg
            if coeff != 0.0:
                op = op + coeff * (mul_nu(beta) * dx(beta))
        out.append(op.cleaned())
    return out


def _phi_operator(e0, gmat, qops, dim, n_x, units):
    """phi(q_op) for the affine field: phi = -E0.q - q.G q/2 (constant dropped)."""
    op = TomOperator.zero(dim, n_x)
    for j in range(dim):
        op = op - e0[j] * qops[j]
        for k in range(dim):
            if gmat[j][k] != 0.0:
                op = op - 0.5 * gmat[j][k] * (qops[j] * qops[k])
    return op


def _linear_vector_potential(potentials: Potentials, units: UnitsContext):
    """Gradient matrix of a linear vector potential, or None."""
    d = potentials.descriptor
    if d.get("type") == "constant_B":
        b0 = d["B0"]
        if d.get("gauge") == "landau":
            return np.array([[0.0, -b0], [0.0, 0.0]])
        return np.array([[0.0, -b0 / 2.0], [b0 / 2.0, 0.0]])
    if d.get("type") in ("free", "uniform_e", "harmonic"):
        dim = d.get("dim", 1)
        return np.zeros((dim, dim))
    return None


# ---------------------------------------------------------------------------
# residual evaluation
# ---------------------------------------------------------------------------

def _tomogram_stencil_values(state, equation_id, mu_c, nu_c, theta_c, spec_dirs,
                             deltas, x_axes, potentials, units, engine="auto"):
    """Tomogram family over the stencil offsets; raw (un-renormalized) values."""
    scalar_x = equation_id in ("scalar_kinetic", "liouville_scalar")
    gauge_independent = equation_id in ("symplectic_kinetic", "scalar_kinetic",
                                        "liouville_scalar", "liouville_symplectic",
                                        "liouville_optical")
    sizes = [5] * len(spec_dirs)
    out = np.zeros(tuple(sizes) + tuple(len(a) for a in x_axes))

    if isinstance(state, AffineGaussianState):
        psf = None
    elif isinstance(state, PhaseSpaceFunction):
        psf = state
    elif gauge_independent and equation_id in ("symplectic_kinetic", "scalar_kinetic"):
        psf = None if engine == "direct" else gauge_independent_wigner(
            state, potentials, state.time, units=units)
    else:
        psf = None if engine == "direct" else wigner_transform(state, units=units)

    for idx in np.ndindex(*sizes):
        mu = np.array(mu_c, dtype=float)
        nu = np.array(nu_c, dtype=float)
        theta = None if theta_c is None else np.array(theta_c, dtype=float)
        for d_i, (kind, s) in enumerate(spec_dirs):
            off = (idx[d_i] - sizes[d_i] // 2) * deltas[d_i]
            if kind == "mu":
                mu[s] += off
            elif kind == "nu":
                nu[s] += off
            else:
                theta[s] += off
        if theta is not None:
            mu = np.cos(theta)
            nu = np.sin(theta) / (units.m * units.omega)
        if isinstance(state, AffineGaussianState):
            vals = state.tomogram_values(mu, nu, x_axes, scalar_x)
        elif psf is not None:
            if scalar_x:
                vals = radon_slice(psf, mu, nu, x_axes[0])
            else:
                vals = radon_slice_vector(psf, mu, nu, x_axes)
        else:
            vals = _direct_slice(state, mu, nu, x_axes, scalar_x,
                                 potentials if gauge_independent else None, units)
        out[idx] = vals
    return out


def _direct_slice(state: WaveFunction, mu, nu, x_axes, scalar_x, potentials, units):
    from .tomography import _char_rows_from_wavefunction
    if scalar_x:
        x = x_axes[0]
        k = _k_grid_for(x)
        f = _char_from_wavefunction(state, mu, nu, k, potentials, state.time, 8, units)
        dk = k[1] - k[0]
        return ((dk / (2 * np.pi)) * (np.exp(1j * np.outer(x, k)) @ f)).real
    if len(x_axes) != 2:
        raise ValueError("direct vector slices implemented for dim 2")
    from .tomography import _char_tensor_from_wavefunction
    k1 = _k_grid_for(x_axes[0])
    k2 = _k_grid_for(x_axes[1])
    f = _char_tensor_from_wavefunction(state, mu, nu, k1, k2, potentials,
                                       state.time, 8, units)
    dk1 = k1[1] - k1[0]
    dk2 = k2[1] - k2[0]
    e1 = np.exp(1j * np.outer(x_axes[0], k1))
    e2 = np.exp(1j * np.outer(x_axes[1], k2))
    vals = (dk1 * dk2 / (4 * np.pi ** 2)) * np.einsum(
        "xk,kl,yl->xy", e1, f, e2, optimize=True)
    return vals.real


def needed_directions(table: TomOperator, dim: int):
    da, db, dth = table.max_parameter_orders()
    dirs = []
    for s in range(dim):
        if da[s]:
            dirs.append(("mu", s))
    for s in range(dim):
        if db[s]:
            dirs.append(("nu", s))
    for s in range(dim):
        if dth[s]:
            dirs.append(("theta", s))
    return dirs


def tomographic_residual(trajectory: list, times: np.ndarray, equation_id: str,
                         potentials: Potentials, center, x_axes,
                         stencil_delta: float = 0.1,
                         units: UnitsContext = INTERNAL, engine: str = "auto") -> dict:
    """L2 residual of a tomographic evolution equation on a state trajectory.

    trajectory holds five states (quantum or classical phase-space functions)
    at uniformly spaced times; the time derivative uses the five-point stencil
    at the middle sample and the right-hand side is assembled from the
    equation's operator table at the supplied parameter center.
    """
    if len(trajectory) != 5:
        raise ValueError("residual evaluation needs exactly five time samples")
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-10):
        raise ValueError("trajectory samples must be uniformly spaced")
    dim = potentials.dim
    table = equation_rhs(equation_id, potentials, dim, units)
    dirs = needed_directions(table, dim)

    optical = equation_id == "liouville_optical"
    if optical:
        theta_c = np.atleast_1d(np.asarray(center, dtype=float))
        mu_c = np.cos(theta_c)
        nu_c = np.sin(theta_c) / (units.m * units.omega)
    else:
        mu_c = np.atleast_1d(np.asarray(center[0], dtype=float))
        nu_c = np.atleast_1d(np.asarray(center[1], dtype=float))
        theta_c = None

    deltas = [stencil_delta] * len(dirs)
    fams = [
        _tomogram_stencil_values(st, equation_id, mu_c, nu_c, theta_c, dirs,
                                 deltas, x_axes, potentials, units, engine)
        for st in trajectory
    ]
    dt_s = dts[0]
    dmdt = (fams[0] - 8 * fams[1] + 8 * fams[3] - fams[4]) / (12.0 * dt_s)
    center_idx = tuple([2] * len(dirs))
    dmdt_center = dmdt[center_idx]

    spec = StencilSpec(directions=dirs, deltas=deltas,
                       x_axes=[np.asarray(a) for a in x_axes],
                       mu_center=mu_c, nu_center=nu_c, theta_center=theta_c)
    rhs = table.apply(fams[2], spec)
    resid = dmdt_center - rhs.real

    w = _x_weights(x_axes)
    l2 = float(np.sqrt(np.sum(resid ** 2 * w)))
    ref = float(np.sqrt(np.sum(dmdt_center ** 2 * w)))
    return {"equation_id": equation_id, "l2": l2, "l2_reference": ref,
            "relative": l2 / max(ref, 1e-300)}


def _x_weights(x_axes):
    w = np.array(1.0)
    for a in x_axes:
        wa = trapezoid_weights(len(a), a[1] - a[0])
        w = np.multiply.outer(w, wa)
    return w


def residual_refinement_study(level_runner, equation_id: str, levels: int = 3) -> ResidualReport:
    """Run level_runner(level) -> residual dict at successive refinements and
    estimate the convergence order from successive ratios."""
    residuals = []
    details = {}
    for lev in range(levels):
        res = level_runner(lev)
        residuals.append(res["l2"])
        details[f"level_{lev}"] = res
    orders = [np.log2(a / b) for a, b in zip(residuals, residuals[1:])]
    order = float(np.mean(orders)) if orders else float("nan")
    return ResidualReport(equation_id, list(range(levels)), residuals, order, details)


# ---------------------------------------------------------------------------
# classical limit
# ---------------------------------------------------------------------------

def classical_limit_study(scenario: dict, hbar_list,
                          units: UnitsContext = INTERNAL) -> dict:
    """Quantum-vs-classical tomogram distance and the gauge sensitivity of the
    momentum-relabeled phase-space function across a descending hbar sequence.

    scenario keys: grid (Grid), potentials, chi (GaugeFunction), t_final, dt,
    q0, p0, directions (list of (mu, nu) tuples), x (observable grid).
    """
    from .fields import gauge_transform_potentials
    from .states import gauge_phase_transform, gaussian_packet
    from .wigner import kinetic_momentum_view, psf_distance_max

    potentials: Potentials = scenario["potentials"]
    chi = scenario.get("chi")
    t_final = scenario["t_final"]
    dt = scenario["dt"]
    n_grid = scenario.get("n_grid", 128)
    rows = []
    for hb in hbar_list:
        u = units.with_hbar(hb)
        sigma = np.sqrt(hb / (2.0 * u.m * scenario.get("omega_ref", 1.0)))
        sigma_p = hb / (2.0 * sigma)
        # the packet footprint shrinks with hbar; keep the position window
        # matched so the momentum window (whose width scales with hbar/h)
        # still covers the kinetic content
        q_reach = float(np.max(np.abs(np.atleast_1d(scenario["q0"])))) \
            + float(np.max(np.abs(np.atleast_1d(scenario["p0"]))) ) * (t_final + 1.0)
        half = max(6.0 * sigma + q_reach + 2.0, 8.0 * sigma + 1.0)
        grid = Grid.uniform(-half, half, n_grid)
        psi0 = gaussian_packet(grid, scenario["q0"], scenario["p0"], sigma, u)
        steps = int(round(t_final / dt))
        cfg = PropagatorConfig(dt=dt, steps=steps)
        psi_t = schrodinger_propagate(psi0, potentials, cfg, u)

        def w0(qp, pp, _s=sigma, _sp=sigma_p):
            out = np.ones(qp.shape[0])
            for a in range(qp.shape[1]):
                out *= np.exp(-(qp[:, a] - np.atleast_1d(scenario["q0"])[a]) ** 2
                              / (2 * _s ** 2)) / np.sqrt(2 * np.pi * _s ** 2)
                out *= np.exp(-(pp[:, a] - np.atleast_1d(scenario["p0"])[a]) ** 2
                              / (2 * _sp ** 2)) / np.sqrt(2 * np.pi * _sp ** 2)
            return out

        wq = wigner_transform(psi_t, units=u)
        cl = backward_characteristics_density(w0, wq.q_axes, wq.p_axes,
                                              potentials, t_final, dt, u)
        dist = 0.0
        q_max = float(np.max(np.abs(wq.q_axes[0])))
        p_max = float(np.max(np.abs(wq.p_axes[0])))
        for mu_v, nu_v in scenario["directions"]:
            x_half = 1.05 * (abs(mu_v) * q_max + abs(nu_v) * p_max)
            x = np.linspace(-x_half, x_half, scenario.get("n_x", 161))
            tq = radon_slice(wq, [mu_v], [nu_v], x)
            tc = radon_slice(cl, [mu_v], [nu_v], x)
            xw = trapezoid_weights(len(x), x[1] - x[0])
            dist += float(np.sum(np.abs(tq - tc) * xw))
        dist /= len(scenario["directions"])

        gauge_dev = np.nan
        if chi is not None:
            w_plain = kinetic_momentum_view(wigner_transform(psi_t, units=u),
                                            potentials, t_final, u)
            psi_c = gauge_phase_transform(psi_t, chi, t_final, u)
            pot_c = gauge_transform_potentials(potentials, chi, u)
            w_c = kinetic_momentum_view(wigner_transform(psi_c, units=u),
                                        pot_c, t_final, u)
            gauge_dev = psf_distance_max(w_plain, w_c) / float(np.max(np.abs(w_plain.values)))
        rows.append({"hbar": hb, "tomogram_distance": dist,
                     "gauge_sensitivity": gauge_dev})
    return {"rows": rows,
            "tomogram_monotone": all(b["tomogram_distance"] < a["tomogram_distance"]
                                     for a, b in zip(rows, rows[1:])),
            "gauge_monotone": all(b["gauge_sensitivity"] < a["gauge_sensitivity"]
                                  for a, b in zip(rows, rows[1:]))}
