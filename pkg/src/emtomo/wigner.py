"""Standard and gauge-independent Wigner transforms and their inverses.

The 1D transform keeps every antidiagonal of the density matrix: centers live
on the half-step lattice (2N-1 points) and the offset coordinate is resolved
per parity, so the inverse transform recovers rho exactly.  In 2D only the
even antidiagonals are kept (centers on the original lattice), which is what
the tomographic quadratures consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import Potentials
from .numerics import averaged_potential, trapezoid_weights
from .states import DensityMatrix, WaveFunction, density_from_wavefunction
from .units import INTERNAL, UnitsContext

__all__ = [
    "PhaseSpaceFunction",
    "wigner_transform",
    "gauge_independent_wigner",
    "inverse_wigner",
    "shift_along_p",
    "kinetic_momentum_view",
    "gaussian_phase_density",
    "psf_distance_max",
]

_MAX_VALUES = 40_000_000  # refuse to build phase-space arrays beyond this


@dataclass
class PhaseSpaceFunction:
    """Real function on a (q, p) product lattice.

    momentum_kind records whether the momentum axis is the generalized
    (canonical) or the kinetic momentum; routines that combine two functions
    refuse to mix the two kinds.
    """

    q_axes: tuple
    p_axes: tuple
    values: np.ndarray
    momentum_kind: str          # "generalized" | "kinetic"
    time: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.momentum_kind not in ("generalized", "kinetic"):
            raise ValueError("momentum_kind must be 'generalized' or 'kinetic'")
        shape = tuple(len(a) for a in self.q_axes) + tuple(len(a) for a in self.p_axes)
        if self.values.shape != shape:
            raise ValueError("phase-space values shape does not match axes")

    @property
    def dim(self) -> int:
        return len(self.q_axes)

    def cell_volume(self) -> float:
        v = 1.0
        for a in list(self.q_axes) + list(self.p_axes):
            v *= a[1] - a[0]
        return v

    def _weights(self) -> np.ndarray:
        w = np.array([1.0])
        for a in list(self.q_axes) + list(self.p_axes):
            w = np.multiply.outer(w, trapezoid_weights(len(a), a[1] - a[0]))
        return w.reshape(self.values.shape)

    def integral(self) -> float:
        return float(np.sum(self.values * self._weights()))

    def abs_integral(self) -> float:
        return float(np.sum(np.abs(self.values) * self._weights()))

    def marginal_position(self):
        """Integrate out momentum; returns (q_axes, array over position lattice)."""
        dim = self.dim
        out = self.values
        for a in range(dim):
            pax = self.p_axes[dim - 1 - a]
            w = trapezoid_weights(len(pax), pax[1] - pax[0])
            out = np.tensordot(out, w, axes=([-1], [0]))
        return self.q_axes, out

    def value_at(self, q: float, p: float) -> float:
        """Sample at the nearest lattice node (1D)."""
        iq = int(np.argmin(np.abs(self.q_axes[0] - q)))
        ip = int(np.argmin(np.abs(self.p_axes[0] - p)))
        return float(self.values[iq, ip])


def psf_distance_max(a: PhaseSpaceFunction, b: PhaseSpaceFunction) -> float:
    if a.momentum_kind != b.momentum_kind:
        raise ValueError(
            f"cannot compare {a.momentum_kind} and {b.momentum_kind} momentum functions")
    return float(np.max(np.abs(a.values - b.values)))


# ---------------------------------------------------------------------------
# forward transforms
# ---------------------------------------------------------------------------

def _as_density(state) -> DensityMatrix:
    if isinstance(state, WaveFunction):
        return density_from_wavefunction(state)
    if isinstance(state, DensityMatrix):
        return state
    raise TypeError("state must be a WaveFunction or DensityMatrix")


def _chord_phase(mid, chord, potentials, t, quad_order, units):
    """exp((i e / c hbar) * chord . avg_A(mid, chord))"""
    from .fields import effective_quad_order
    abar = averaged_potential(potentials, mid, chord, t,
                              quad_order=effective_quad_order(potentials, quad_order))
    arg = np.sum(np.asarray(chord) * abar, axis=-1)
    return np.exp(1j * units.e / (units.c * units.hbar) * arg)


def _wigner_1d(rho: DensityMatrix, potentials, t, pad, quad_order, units):
    grid = rho.grid
    n = grid.shape[0]
    h = grid.spacings[0]
    x = grid.axis_points(0)
    hbar = units.hbar

    m_fft = pad * 2 * n
    centers = x[0] + 0.5 * h * np.arange(2 * n - 1)

    i_idx, j_idx = np.indices((n, n))
    i_idx = i_idx.ravel()
    j_idx = j_idx.ravel()
    m = i_idx + j_idx
    d = j_idx - i_idx
    eps = m % 2
    k = (d - eps) // 2

    vals = rho.rho.ravel().copy()
    if potentials is not None:
        mid = 0.5 * (x[i_idx] + x[j_idx])[:, None]
        chord = (x[j_idx] - x[i_idx])[:, None]
        vals = vals * _chord_phase(mid, chord, potentials, t, quad_order, units)

    r = np.zeros((2 * n - 1, m_fft), dtype=complex)
    r[m, k % m_fft] = vals

    w = np.fft.ifft(r, axis=1) * m_fft
    w = np.fft.fftshift(w, axes=1)
    p = 2.0 * np.pi * hbar * np.fft.fftshift(np.fft.fftfreq(m_fft, d=2.0 * h))
    du = 2.0 * h
    w = w * (du / (2.0 * np.pi * hbar))
    w = w * np.exp(1j * (eps_row := (np.arange(2 * n - 1) % 2))[:, None] * h * p[None, :] / hbar)

    resid = np.max(np.abs(w.imag)) / (np.max(np.abs(w.real)) + 1e-300)
    if resid > 1e-8:
        raise ValueError(f"Wigner transform imaginary residue {resid:.2e}")
    meta = {"h": h, "m_fft": m_fft, "hbar": hbar, "x0": x[0], "layout": "half_lattice"}
    return centers, p, w.real, meta


def _wigner_2d(state, potentials, t, pad, quad_order, units):
    if isinstance(state, WaveFunction):
        grid = state.grid
    else:
        grid = state.grid
    n1, n2 = grid.shape
    if n1 != n2:
        raise ValueError("2D Wigner transform requires a square grid")
    n = n1
    h = grid.spacings[0]
    hbar = units.hbar
    x1 = grid.axis_points(0)
    x2 = grid.axis_points(1)

    kmax = n // 2 - 1
    koffs = np.arange(-kmax, kmax + 1)
    nk = len(koffs)
    m_fft = pad * n
    if (n * n) * m_fft * m_fft > _MAX_VALUES:
        raise MemoryError(
            f"2D Wigner array would need {(n * n) * m_fft * m_fft} samples; reduce the grid")

    r = np.zeros((n, n, m_fft, m_fft), dtype=complex)
    if isinstance(state, WaveFunction):
        psi = state.psi
        psi_pad = np.zeros((n + 2 * kmax, n + 2 * kmax), dtype=complex)
        psi_pad[kmax:kmax + n, kmax:kmax + n] = psi
        for a, k1 in enumerate(koffs):
            for b, k2 in enumerate(koffs):
                lo = psi_pad[kmax - k1:kmax - k1 + n, kmax - k2:kmax - k2 + n]
                hi = psi_pad[kmax + k1:kmax + k1 + n, kmax + k2:kmax + k2 + n]
                r[:, :, k1 % m_fft, k2 % m_fft] = lo * hi.conj()
    else:
        rho = state.rho
        ii1, ii2 = np.indices((n, n))
        for k1 in koffs:
            for k2 in koffs:
                v1 = ii1 - k1
                v2 = ii2 - k2
                w1 = ii1 + k1
                w2 = ii2 + k2
                ok = (v1 >= 0) & (v1 < n) & (v2 >= 0) & (v2 < n) & \
                     (w1 >= 0) & (w1 < n) & (w2 >= 0) & (w2 < n)
                flat_lo = (v1 * n + v2)[ok]
                flat_hi = (w1 * n + w2)[ok]
                tmp = np.zeros((n, n), dtype=complex)
                tmp[ok] = rho[flat_lo, flat_hi]
                r[:, :, k1 % m_fft, k2 % m_fft] = tmp

    if potentials is not None:
        qq = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
        for a, k1 in enumerate(koffs):
            for b, k2 in enumerate(koffs):
                chord = np.array([2.0 * h * k1, 2.0 * h * k2])
                if k1 == 0 and k2 == 0:
                    continue
                ph = _chord_phase(qq, np.broadcast_to(chord, qq.shape),
                                  potentials, t, quad_order, units)
                r[:, :, k1 % m_fft, k2 % m_fft] *= ph

    w = np.fft.ifft2(r, axes=(2, 3)) * (m_fft * m_fft)
    w = np.fft.fftshift(w, axes=(2, 3))
    p = 2.0 * np.pi * hbar * np.fft.fftshift(np.fft.fftfreq(m_fft, d=2.0 * h))
    du = 2.0 * h
    w = w * (du / (2.0 * np.pi * hbar)) ** 2

    resid = np.max(np.abs(w.imag)) / (np.max(np.abs(w.real)) + 1e-300)
    if resid > 1e-8:
        raise ValueError(f"Wigner transform imaginary residue {resid:.2e}")
    meta = {"h": h, "m_fft": m_fft, "hbar": hbar, "layout": "even_lattice"}
    return (x1, x2), (p, p), w.real, meta


def wigner_transform(state, pad: int = 2, units: UnitsContext = INTERNAL) -> PhaseSpaceFunction:
    """Phase-space function over (q, P) with the generalized momentum."""
    dim = state.grid.dim
    t = state.time
    if dim == 1:
        rho = _as_density(state)
        q, p, w, meta = _wigner_1d(rho, None, t, pad, 8, units)
        return PhaseSpaceFunction((q,), (p,), w, "generalized", t, meta)
    if dim == 2:
        q_axes, p_axes, w, meta = _wigner_2d(state, None, t, pad, 8, units)
        return PhaseSpaceFunction(q_axes, p_axes, w, "generalized", t, meta)
    raise ValueError("Wigner transform implemented for dim 1 and 2")


def gauge_independent_wigner(state, potentials: Potentials, t: float | None = None,
                             pad: int = 2, quad_order: int = 8,
                             units: UnitsContext = INTERNAL) -> PhaseSpaceFunction:
    """Phase-space function over (q, p) with the kinetic momentum.

    The offset coordinate carries the extra chord-averaged vector-potential
    phase, which makes the result invariant under simultaneous gauge changes
    of the state and the potentials.
    """
    dim = state.grid.dim
    tt = state.time if t is None else t
    if dim == 1:
        rho = _as_density(state)
        q, p, w, meta = _wigner_1d(rho, potentials, tt, pad, quad_order, units)
        return PhaseSpaceFunction((q,), (p,), w, "kinetic", tt, meta)
    if dim == 2:
        q_axes, p_axes, w, meta = _wigner_2d(state, potentials, tt, pad, quad_order, units)
        return PhaseSpaceFunction(q_axes, p_axes, w, "kinetic", tt, meta)
    raise ValueError("gauge-independent Wigner implemented for dim 1 and 2")


# ---------------------------------------------------------------------------
# inverse transform (1D)
# ---------------------------------------------------------------------------

def inverse_wigner(psf: PhaseSpaceFunction, potentials: Potentials | None = None,
                   t: float | None = None, quad_order: int = 8,
                   units: UnitsContext = INTERNAL) -> DensityMatrix:
    """Recover the position-representation density matrix (1D, half-lattice layout).

    For a kinetic-momentum function the conjugate chord phase is removed,
    which requires the same potentials that built the function.
    """
    if psf.dim != 1 or psf.meta.get("layout") != "half_lattice":
        raise ValueError("inverse transform needs the 1D half-lattice layout")
    if psf.momentum_kind == "kinetic" and potentials is None:
        raise ValueError("kinetic-momentum inversion needs the vector potential")
    tt = psf.time if t is None else t
    h = psf.meta["h"]
    hbar = psf.meta["hbar"]
    m_fft = psf.meta["m_fft"]
    x0 = psf.meta["x0"]
    centers = psf.q_axes[0]
    p = psf.p_axes[0]
    n = (len(centers) + 1) // 2
    du = 2.0 * h

    eps_row = (np.arange(2 * n - 1) % 2)[:, None]
    w = psf.values / np.exp(1j * eps_row * h * p[None, :] / hbar)
    w = w / (du / (2.0 * np.pi * hbar))
    w = np.fft.ifftshift(w, axes=1)
    r = np.fft.fft(w, axis=1) / m_fft

    i_idx, j_idx = np.indices((n, n))
    i_idx = i_idx.ravel()
    j_idx = j_idx.ravel()
    m = i_idx + j_idx
    d = j_idx - i_idx
    eps = m % 2
    k = (d - eps) // 2
    vals = r[m, k % m_fft]

    x = x0 + h * np.arange(n)
    if psf.momentum_kind == "kinetic":
        mid = 0.5 * (x[i_idx] + x[j_idx])[:, None]
        chord = (x[j_idx] - x[i_idx])[:, None]
        vals = vals / _chord_phase(mid, chord, potentials, tt, quad_order, units)

    rho = vals.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    from .numerics import Axis, Grid
    grid = Grid((Axis(x[0], x[-1], n),))
    return DensityMatrix(grid, rho, tt)


# ---------------------------------------------------------------------------
# momentum relabeling
# ---------------------------------------------------------------------------

def shift_along_p(psf: PhaseSpaceFunction, shift_per_q: np.ndarray,
                  new_kind: str | None = None) -> PhaseSpaceFunction:
    """Exact spectral resampling W(q, p) -> W(q, p + s(q)) row by row (1D)."""
    if psf.dim != 1:
        raise ValueError("shift_along_p is one-dimensional")
    p = psf.p_axes[0]
    mp = len(p)
    dp = p[1] - p[0]
    u = 2.0 * np.pi * np.fft.fftfreq(mp, d=dp)
    rows = np.fft.fft(np.fft.ifftshift(psf.values, axes=1), axis=1)
    shift = np.asarray(shift_per_q, dtype=float).reshape(-1, 1)
    rows = rows * np.exp(1j * u[None, :] * shift)
    out = np.fft.fftshift(np.fft.ifft(rows, axis=1), axes=1).real
    return PhaseSpaceFunction(psf.q_axes, psf.p_axes, out,
                              new_kind or psf.momentum_kind, psf.time, dict(psf.meta))


def kinetic_momentum_view(psf: PhaseSpaceFunction, potentials: Potentials,
                          t: float | None = None,
                          units: UnitsContext = INTERNAL) -> PhaseSpaceFunction:
    """Relabel a generalized-momentum function by p = P - eA(q)/c.

    W_kin(q, p) = W(q, p + eA(q)/c), evaluated by an exact per-row Fourier
    shift; the result is tagged kinetic.
    """
    if psf.momentum_kind != "generalized":
        raise ValueError("kinetic view expects a generalized-momentum function")
    tt = psf.time if t is None else t
    q = psf.q_axes[0][:, None]
    a_of_q = np.asarray(potentials.vector(q, tt))[..., 0]
    shift = units.e * a_of_q / units.c
    return shift_along_p(psf, shift.ravel(), new_kind="kinetic")


# ---------------------------------------------------------------------------
# classical densities
# ---------------------------------------------------------------------------

def gaussian_phase_density(q_axes, p_axes, q0, p0, sigma_q, sigma_p,
                           time: float = 0.0) -> PhaseSpaceFunction:
    """Normalized Gaussian phase-space density with kinetic momentum."""
    dim = len(q_axes)
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (dim,))
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (dim,))
    sq = np.broadcast_to(np.asarray(sigma_q, dtype=float), (dim,))
    sp = np.broadcast_to(np.asarray(sigma_p, dtype=float), (dim,))
    mesh = np.meshgrid(*q_axes, *p_axes, indexing="ij")
    out = np.ones(mesh[0].shape)
    for a in range(dim):
        out = out * np.exp(-(mesh[a] - q0[a]) ** 2 / (2 * sq[a] ** 2)) \
            / np.sqrt(2 * np.pi * sq[a] ** 2)
        out = out * np.exp(-(mesh[dim + a] - p0[a]) ** 2 / (2 * sp[a] ** 2)) \
            / np.sqrt(2 * np.pi * sp[a] ** 2)
    return PhaseSpaceFunction(tuple(q_axes), tuple(p_axes), out, "kinetic", time)
