"""Normal-ordered operator algebra acting on tomogram families.

Operators are finite sums of terms

    coeff * mu^pmu nu^pnu sin(theta)^psin cos(theta)^pcos x^px
          * d/dmu^da d/dnu^db d/dtheta^dth (d/dx)^m

with integer exponents per axis; m may be negative, denoting the anchored
antiderivative.  Composition normal-orders products with the exact Leibniz
expansions, so assembled equation tables can be compared symbolically.
Evaluation realizes x derivatives spectrally and parameter derivatives by
central differences on small stencils around the evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .numerics import (Grid, LinearGridOperator, spectral_antiderivative_array,
                       spectral_derivative_array, trapezoid_weights)
from .units import INTERNAL, UnitsContext

__all__ = [
    "TomOperator",
    "identity_operator",
    "parameter_derivative",
    "parameter_multiplier",
    "trig_multiplier",
    "x_multiplier",
    "x_derivative",
    "CorrespondenceOperator",
    "correspondence_operator",
    "StencilSpec",
    "fd_coefficients",
]

_CLEAN_TOL = 1e-13


def _zeros(n):
    return (0,) * n


@dataclass(frozen=True)
class _Key:
    pmu: tuple
    pnu: tuple
    psin: tuple
    pcos: tuple
    px: tuple
    da: tuple
    db: tuple
    dth: tuple
    m: tuple


class TomOperator:
    def __init__(self, dim: int, n_x: int, terms: dict | None = None):
        self.dim = dim
        self.n_x = n_x
        self.terms: dict[_Key, complex] = dict(terms or {})

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, dim, n_x):
        return cls(dim, n_x)

    @classmethod
    def one(cls, dim, n_x):
        d, x = dim, n_x
        key = _Key(_zeros(d), _zeros(d), _zeros(d), _zeros(d), _zeros(x),
                   _zeros(d), _zeros(d), _zeros(d), _zeros(x))
        return cls(dim, n_x, {key: 1.0 + 0.0j})

    def _add_term(self, key: _Key, coeff):
        if key in self.terms:
            self.terms[key] += coeff
        else:
            self.terms[key] = complex(coeff)

    def cleaned(self, tol: float = _CLEAN_TOL) -> "TomOperator":
        scale = max((abs(c) for c in self.terms.values()), default=1.0)
        keep = {k: c for k, c in self.terms.items() if abs(c) > tol * scale}
        return TomOperator(self.dim, self.n_x, keep)

    # -- linear algebra ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = other * TomOperator.one(self.dim, self.n_x)
        out = TomOperator(self.dim, self.n_x, dict(self.terms))
        for k, c in other.terms.items():
            out._add_term(k, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return TomOperator(self.dim, self.n_x, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, TomOperator) else -1 * other)

    def __rsub__(self, other):
        return (-self) + other

    def scaled(self, s):
        return TomOperator(self.dim, self.n_x, {k: s * c for k, c in self.terms.items()})

    def __rmul__(self, s):
        if isinstance(s, (int, float, complex)):
            return self.scaled(s)
        return NotImplemented

    def imag_part(self) -> "TomOperator":
        """Coefficient-wise imaginary part (the generators are real)."""
        return TomOperator(self.dim, self.n_x,
                           {k: complex(c.imag) for k, c in self.terms.items()}).cleaned()

    def real_part(self) -> "TomOperator":
        return TomOperator(self.dim, self.n_x,
                           {k: complex(c.real) for k, c in self.terms.items()}).cleaned()

    # -- composition -------------------------------------------------------

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scaled(other)
        if other.dim != self.dim or other.n_x != self.n_x:
            raise ValueError("operator shape mismatch")
        out = TomOperator(self.dim, self.n_x)
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                for key, c in _compose_terms(ka, kb, self.dim, self.n_x):
                    out._add_term(key, ca * cb * c)
        return out.cleaned(1e-16)

    def commutator(self, other):
        return self * other - other * self

    # -- comparison ----------------------------------------------------------

    def table(self) -> dict:
        return {k: c for k, c in self.cleaned().terms.items()}

    def max_table_difference(self, other) -> float:
        keys = set(self.cleaned().terms) | set(other.cleaned().terms)
        scale = max([abs(c) for c in self.terms.values()] +
                    [abs(c) for c in other.terms.values()] + [1e-300])
        diff = 0.0
        for k in keys:
            diff = max(diff, abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)))
        return diff / scale

    def max_parameter_orders(self):
        """Per-direction maxima of (da, db, dth) across terms."""
        da = [0] * self.dim
        db = [0] * self.dim
        dth = [0] * self.dim
        for k in self.terms:
            for s in range(self.dim):
                da[s] = max(da[s], k.da[s])
                db[s] = max(db[s], k.db[s])
                dth[s] = max(dth[s], k.dth[s])
        return da, db, dth

    # -- evaluation ----------------------------------------------------------

    def apply(self, values: np.ndarray, spec: "StencilSpec") -> np.ndarray:
        """Apply to a stencil family; returns an array over the x grid only.

        values has one leading axis per stencil direction in spec.directions
        order, then the x axes.
        """
        n_st = len(spec.directions)
        x_shapes = values.shape[n_st:]
        out = np.zeros(x_shapes, dtype=complex)
        present = set(spec.directions)
        for key, coeff in self.terms.items():
            for s_ in range(self.dim):
                if key.da[s_] and ("mu", s_) not in present:
                    raise ValueError(f"stencil lacks direction ('mu', {s_})")
                if key.db[s_] and ("nu", s_) not in present:
                    raise ValueError(f"stencil lacks direction ('nu', {s_})")
                if key.dth[s_] and ("theta", s_) not in present:
                    raise ValueError(f"stencil lacks direction ('theta', {s_})")
            v = values.astype(complex)
            # x-sector: derivative/antiderivative powers then coordinate powers
            for i in range(self.n_x):
                axis = n_st + i
                v = _apply_x_power(v, axis, key.m[i], spec.x_spacings[i])
            for i in range(self.n_x):
                if key.px[i]:
                    shape = [1] * v.ndim
                    shape[n_st + i] = len(spec.x_axes[i])
                    v = v * spec.x_axes[i].reshape(shape) ** key.px[i]
            # parameter stencils
            for d_idx in range(n_st - 1, -1, -1):
                kind, s = spec.directions[d_idx]
                order = {"mu": key.da, "nu": key.db, "theta": key.dth}[kind][s]
                cvec = fd_coefficients(values.shape[d_idx], spec.deltas[d_idx], order)
                v = np.tensordot(cvec, np.moveaxis(v, d_idx, 0), axes=([0], [0]))
            # center multipliers
            fac = coeff
            for s in range(self.dim):
                if key.pmu[s]:
                    fac = fac * spec.mu_center[s] ** key.pmu[s]
                if key.pnu[s]:
                    fac = fac * spec.nu_center[s] ** key.pnu[s]
                if key.psin[s]:
                    fac = fac * np.sin(spec.theta_center[s]) ** key.psin[s]
                if key.pcos[s]:
                    fac = fac * np.cos(spec.theta_center[s]) ** key.pcos[s]
            out = out + fac * v
        return out

    def realize(self, x_grids: list[np.ndarray], param_grids: list,
                units: UnitsContext = INTERNAL):
        """Sparse matrix over the tensor grid (params x position observables).

        param_grids: list of (kind, sigma, grid array) in leading-axis order.
        Intended for modest sizes; the stencil path is the production route.
        """
        import scipy.sparse as sp

        def x_deriv_matrix(x, power):
            n = len(x)
            h = x[1] - x[0]
            if power == 0:
                return sp.identity(n, format="csr", dtype=complex)
            if power > 0:
                f = np.fft.fft(np.eye(n), axis=0)
                k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
                if power % 2 == 1 and n % 2 == 0:
                    k = k.copy()
                    k[n // 2] = 0.0
                mat = np.fft.ifft((1j * k[:, None]) ** power * f, axis=0)
                return sp.csr_matrix(mat)
            # anchored antiderivative: trapezoid cumulative matrix
            t = np.zeros((n, n))
            for i in range(1, n):
                t[i, :i + 1] = h
                t[i, 0] = h / 2
                t[i, i] = h / 2
            t1 = sp.csr_matrix(t)
            out = sp.identity(n, format="csr")
            for _ in range(-power):
                out = out @ t1
            return out.astype(complex)

        def p_deriv_matrix(g, order):
            n = len(g)
            d = g[1] - g[0]
            if order == 0:
                return sp.identity(n, format="csr", dtype=complex)
            rows = []
            for i in range(n):
                lo = min(max(i - 2, 0), n - 5)
                offs = np.arange(lo, lo + 5)
                c = fd_coefficients(5, d, order, center=i - lo)
                row = np.zeros(n)
                row[offs] = c
                rows.append(row)
            return sp.csr_matrix(np.array(rows, dtype=complex))

        mats = []
        for key, coeff in self.terms.items():
            blocks = []
            for kind, s, g in param_grids:
                order = {"mu": key.da, "nu": key.db, "theta": key.dth}[kind][s]
                mat = p_deriv_matrix(np.asarray(g), order)
                mult = {"mu": key.pmu, "nu": key.pnu, "theta": (0,) * self.dim}[kind][s]
                diag = np.asarray(g, dtype=complex) ** mult
                if kind == "theta":
                    diag = (np.sin(g) ** key.psin[s]) * (np.cos(g) ** key.pcos[s])
                blocks.append(sp.diags(diag) @ mat)
            for i, x in enumerate(x_grids):
                mat = x_deriv_matrix(np.asarray(x), key.m[i])
                diag = np.asarray(x, dtype=complex) ** key.px[i]
                blocks.append(sp.diags(diag) @ mat)
            full = None
            for b in blocks:
                full = b if full is None else sp.kron(full, b, format="csr")
            mats.append(coeff * full)
        total = mats[0]
        for m_ in mats[1:]:
            total = total + m_
        return total


# ---------------------------------------------------------------------------
# term composition helpers
# ---------------------------------------------------------------------------

def _poly_commute(a: int, p: int):
    """d^a (mu^p .) -> [(coeff, p', a')] with the derivative moved right."""
    out = []
    for k in range(0, min(a, p) + 1):
        c = comb(a, k) * factorial(p) // factorial(p - k)
        out.append((c, p - k, a - k))
    return out


def _x_commute(m: int, p: int):
    """(d/dx)^m (x^p .) -> dict[(p', m')] -> coeff, valid for integer m."""
    if p == 0:
        return {(0, m): 1.0}
    out: dict = {}
    for (j, l), c in _x_commute(m, p - 1).items():
        out[(j + 1, l)] = out.get((j + 1, l), 0.0) + c
    if m != 0:
        for (j, l), c in _x_commute(m - 1, p - 1).items():
            out[(j, l)] = out.get((j, l), 0.0) + m * c
    return out


def _theta_commute(c_order: int, f: dict):
    """d_theta^c (F .) with F a sin/cos polynomial {(s,t): coeff}.

    Returns dict[(s, t, remaining_order)] -> coeff.
    """
    if c_order == 0:
        return {(s, t, 0): c for (s, t), c in f.items()}
    fp: dict = {}
    for (s, t), c in f.items():
        if s:
            fp[(s - 1, t + 1)] = fp.get((s - 1, t + 1), 0.0) + s * c
        if t:
            fp[(s + 1, t - 1)] = fp.get((s + 1, t - 1), 0.0) - t * c
    out: dict = {}
    for (s, t, r), c in _theta_commute(c_order - 1, fp).items():
        out[(s, t, r)] = out.get((s, t, r), 0.0) + c
    for (s, t, r), c in _theta_commute(c_order - 1, f).items():
        out[(s, t, r + 1)] = out.get((s, t, r + 1), 0.0) + c
    return out


def _compose_terms(ka: _Key, kb: _Key, dim: int, n_x: int):
    """Normal-order the product term_a . term_b; yields (key, coeff)."""
    # start: multiplier(a) [deriv(a)] multiplier(b) [deriv(b)]
    # move each of a's derivative factors through b's multipliers
    partials = [({}, 1.0)]  # list of (updates, coeff)

    updates0 = {"pmu": list(kb.pmu), "pnu": list(kb.pnu), "psin": list(kb.psin),
                "pcos": list(kb.pcos), "px": list(kb.px),
                "da": list(ka.da), "db": list(ka.db), "dth": list(ka.dth),
                "m": list(ka.m)}
    states = [(updates0, 1.0)]

    for s in range(dim):
        new_states = []
        for st, c in states:
            for cc, p_new, a_new in _poly_commute(st["da"][s], st["pmu"][s]):
                st2 = {k: list(v) for k, v in st.items()}
                st2["pmu"][s] = p_new
                st2["da"][s] = a_new
                new_states.append((st2, c * cc))
        states = new_states
    for s in range(dim):
        new_states = []
        for st, c in states:
            for cc, p_new, a_new in _poly_commute(st["db"][s], st["pnu"][s]):
                st2 = {k: list(v) for k, v in st.items()}
                st2["pnu"][s] = p_new
                st2["db"][s] = a_new
                new_states.append((st2, c * cc))
        states = new_states
    for s in range(dim):
        new_states = []
        for st, c in states:
            if st["dth"][s] == 0:
                new_states.append((st, c))
                continue
            f = {(st["psin"][s], st["pcos"][s]): 1.0}
            for (s_new, t_new, r), cc in _theta_commute(st["dth"][s], f).items():
                st2 = {k: list(v) for k, v in st.items()}
                st2["psin"][s] = s_new
                st2["pcos"][s] = t_new
                st2["dth"][s] = r
                new_states.append((st2, c * cc))
        states = new_states
    for i in range(n_x):
        new_states = []
        for st, c in states:
            for (p_new, m_new), cc in _x_commute(st["m"][i], st["px"][i]).items():
                st2 = {k: list(v) for k, v in st.items()}
                st2["px"][i] = p_new
                st2["m"][i] = m_new
                new_states.append((st2, c * cc))
        states = new_states

    for st, c in states:
        key = _Key(
            tuple(a + b for a, b in zip(ka.pmu, st["pmu"])),
            tuple(a + b for a, b in zip(ka.pnu, st["pnu"])),
            tuple(a + b for a, b in zip(ka.psin, st["psin"])),
            tuple(a + b for a, b in zip(ka.pcos, st["pcos"])),
            tuple(a + b for a, b in zip(ka.px, st["px"])),
            tuple(a + b for a, b in zip(st["da"], kb.da)),
            tuple(a + b for a, b in zip(st["db"], kb.db)),
            tuple(a + b for a, b in zip(st["dth"], kb.dth)),
            tuple(a + b for a, b in zip(st["m"], kb.m)),
        )
        yield key, c


# ---------------------------------------------------------------------------
# generator constructors
# ---------------------------------------------------------------------------

def _unit(n, i, val=1):
    t = [0] * n
    t[i] = val
    return tuple(t)


def identity_operator(dim, n_x):
    return TomOperator.one(dim, n_x)


def parameter_derivative(dim, n_x, kind: str, sigma: int, order: int = 1):
    d, x = dim, n_x
    da = _unit(d, sigma, order) if kind == "mu" else _zeros(d)
    db = _unit(d, sigma, order) if kind == "nu" else _zeros(d)
    dth = _unit(d, sigma, order) if kind == "theta" else _zeros(d)
    key = _Key(_zeros(d), _zeros(d), _zeros(d), _zeros(d), _zeros(x), da, db, dth, _zeros(x))
    return TomOperator(dim, n_x, {key: 1.0})


def parameter_multiplier(dim, n_x, kind: str, sigma: int, power: int = 1):
    d, x = dim, n_x
    pmu = _unit(d, sigma, power) if kind == "mu" else _zeros(d)
    pnu = _unit(d, sigma, power) if kind == "nu" else _zeros(d)
    key = _Key(pmu, pnu, _zeros(d), _zeros(d), _zeros(x),
               _zeros(d), _zeros(d), _zeros(d), _zeros(x))
    return TomOperator(dim, n_x, {key: 1.0})


def trig_multiplier(dim, n_x, sigma: int, sin_power: int = 0, cos_power: int = 0):
    d, x = dim, n_x
    key = _Key(_zeros(d), _zeros(d), _unit(d, sigma, sin_power),
               _unit(d, sigma, cos_power), _zeros(x),
               _zeros(d), _zeros(d), _zeros(d), _zeros(x))
    return TomOperator(dim, n_x, {key: 1.0})


def x_multiplier(dim, n_x, axis: int, power: int = 1):
    d, x = dim, n_x
    key = _Key(_zeros(d), _zeros(d), _zeros(d), _zeros(d), _unit(x, axis, power),
               _zeros(d), _zeros(d), _zeros(d), _zeros(x))
    return TomOperator(dim, n_x, {key: 1.0})


def x_derivative(dim, n_x, axis: int, power: int = 1):
    """(d/dx_axis)^power; negative power is the anchored antiderivative."""
    d, x = dim, n_x
    key = _Key(_zeros(d), _zeros(d), _zeros(d), _zeros(d), _zeros(x),
               _zeros(d), _zeros(d), _zeros(d), _unit(x, axis, power))
    return TomOperator(dim, n_x, {key: 1.0})


# ---------------------------------------------------------------------------
# evaluation support
# ---------------------------------------------------------------------------

@dataclass
class StencilSpec:
    """Layout of a tomogram stencil family for operator evaluation."""

    directions: list            # [(kind, sigma)] for each leading axis
    deltas: list                # stencil spacing per leading axis
    x_axes: list                # coordinate arrays for trailing axes
    mu_center: np.ndarray
    nu_center: np.ndarray
    theta_center: np.ndarray | None = None

    @property
    def x_spacings(self):
        return [float(a[1] - a[0]) for a in self.x_axes]


def fd_coefficients(npts: int, delta: float, order: int, center: int | None = None):
    """Finite-difference weights for the derivative of given order at the
    center of an npts stencil (exactly integrates polynomials up to npts-1)."""
    if center is None:
        center = npts // 2
    offs = (np.arange(npts) - center) * delta
    rhs = np.zeros(npts)
    if order >= npts:
        raise ValueError("stencil too small for requested derivative order")
    rhs[order] = factorial(order)
    vander = np.vander(offs, npts, increasing=True).T
    return np.linalg.solve(vander, rhs)


def _apply_x_power(v: np.ndarray, axis: int, m: int, dx: float) -> np.ndarray:
    if m == 0:
        return v
    if m > 0:
        n = v.shape[axis]
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
        if m % 2 == 1 and n % 2 == 0:
            k = k.copy()
            k[n // 2] = 0.0
        shape = [1] * v.ndim
        shape[axis] = n
        return np.fft.ifft(np.fft.fft(v, axis=axis) * (1j * k).reshape(shape) ** m,
                           axis=axis)
    out = v
    for _ in range(-m):
        out = spectral_antiderivative_array(out, dx, axis=axis)
    return out


# ---------------------------------------------------------------------------
# correspondence operators
# ---------------------------------------------------------------------------

@dataclass
class CorrespondenceOperator:
    symbol: str
    representation: str
    dim: int
    axis: int
    op: TomOperator

    def apply(self, values, spec: StencilSpec):
        return self.op.apply(values, spec)

    def realize(self, x_grids, param_grids, units: UnitsContext = INTERNAL):
        return self.op.realize(x_grids, param_grids, units)


def _sym_q(dim, n_x, sigma, units, quantum, scalar_x):
    xa = 0 if scalar_x else sigma
    op = -1 * (x_derivative(dim, n_x, xa, -1) * parameter_derivative(dim, n_x, "mu", sigma))
    if quantum:
        op = op + (0.5j * units.hbar) * (
            parameter_multiplier(dim, n_x, "nu", sigma) * x_derivative(dim, n_x, xa, 1))
    return op


def _sym_p(dim, n_x, sigma, units, quantum, scalar_x):
    xa = 0 if scalar_x else sigma
    op = -1 * (x_derivative(dim, n_x, xa, -1) * parameter_derivative(dim, n_x, "nu", sigma))
    if quantum:
        op = op - (0.5j * units.hbar) * (
            parameter_multiplier(dim, n_x, "mu", sigma) * x_derivative(dim, n_x, xa, 1))
    return op


def _opt_q(dim, n_x, sigma, units, quantum):
    op = trig_multiplier(dim, n_x, sigma, sin_power=1) * \
        x_derivative(dim, n_x, sigma, -1) * parameter_derivative(dim, n_x, "theta", sigma)
    op = op + x_multiplier(dim, n_x, sigma) * trig_multiplier(dim, n_x, sigma, cos_power=1)
    if quantum:
        op = op + (0.5j * units.hbar / (units.m * units.omega)) * (
            trig_multiplier(dim, n_x, sigma, sin_power=1) * x_derivative(dim, n_x, sigma, 1))
    return op


def _opt_p(dim, n_x, sigma, units, quantum):
    mw = units.m * units.omega
    op = (-1 * (trig_multiplier(dim, n_x, sigma, cos_power=1)
                * x_derivative(dim, n_x, sigma, -1)
                * parameter_derivative(dim, n_x, "theta", sigma))
          + x_multiplier(dim, n_x, sigma) * trig_multiplier(dim, n_x, sigma, sin_power=1))
    op = op.scaled(mw)
    if quantum:
        op = op - (0.5j * units.hbar) * (
            trig_multiplier(dim, n_x, sigma, cos_power=1) * x_derivative(dim, n_x, sigma, 1))
    return op


def correspondence_operator(symbol: str, representation: str, dim: int = 1,
                            axis: int = 0, units: UnitsContext = INTERNAL
                            ) -> CorrespondenceOperator:
    """Operator realizing phase-space multiplication/differentiation on tomograms.

    Classical symbols: q, p, d_dq, d_dp.  Quantum position/momentum:
    q_quantum_M, P_quantum_M (symplectic / probability), q_quantum_w,
    P_quantum_w (optical).
    """
    scalar_x = representation == "probability"
    n_x = 1 if scalar_x else dim
    if representation in ("symplectic", "probability"):
        table = {
            "q": lambda: _sym_q(dim, n_x, axis, units, False, scalar_x),
            "p": lambda: _sym_p(dim, n_x, axis, units, False, scalar_x),
            "d_dq": lambda: parameter_multiplier(dim, n_x, "mu", axis)
            * x_derivative(dim, n_x, 0 if scalar_x else axis, 1),
            "d_dp": lambda: parameter_multiplier(dim, n_x, "nu", axis)
            * x_derivative(dim, n_x, 0 if scalar_x else axis, 1),
            "q_quantum_M": lambda: _sym_q(dim, n_x, axis, units, True, scalar_x),
            "P_quantum_M": lambda: _sym_p(dim, n_x, axis, units, True, scalar_x),
        }
    elif representation == "optical":
        mw = units.m * units.omega
        table = {
            "q": lambda: _opt_q(dim, n_x, axis, units, False),
            "p": lambda: _opt_p(dim, n_x, axis, units, False),
            "d_dq": lambda: trig_multiplier(dim, n_x, axis, cos_power=1)
            * x_derivative(dim, n_x, axis, 1),
            "d_dp": lambda: (1.0 / mw) * (trig_multiplier(dim, n_x, axis, sin_power=1)
                                          * x_derivative(dim, n_x, axis, 1)),
            "q_quantum_w": lambda: _opt_q(dim, n_x, axis, units, True),
            "P_quantum_w": lambda: _opt_p(dim, n_x, axis, units, True),
        }
    else:
        raise ValueError(f"unknown representation {representation!r}")
    if symbol not in table:
        raise ValueError(f"symbol {symbol!r} not available in {representation!r}")
    return CorrespondenceOperator(symbol, representation, dim, axis, table[symbol]())
