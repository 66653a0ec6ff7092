"""Uniform grids, grid functions, quadrature and discrete derivative operators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Axis",
    "Grid",
    "GridFunction",
    "LinearGridOperator",
    "trapezoid_weights",
    "spectral_derivative",
    "spectral_derivative_array",
    "finite_difference_derivative_array",
    "spectral_antiderivative",
    "spectral_antiderivative_array",
    "inverse_derivative",
    "inverse_derivative_array",
    "legendre_rule_half",
    "averaged_potential",
    "FLOAT_FORMAT",
]

# Fixed scientific float format used by every CSV artifact (17 significant digits).
FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class Axis:
    """Closed uniform interval [lo, hi] sampled at n points."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("axis needs at least two points")
        if not self.hi > self.lo:
            raise ValueError("axis requires hi > lo")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @classmethod
    def centered(cls, half_width: float, n: int) -> "Axis":
        return cls(-half_width, half_width, n)


@dataclass(frozen=True)
class Grid:
    """Cartesian product of up to three uniform axes."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        for ax in self.axes:
            if ax.n < 8:
                raise ValueError("grid axes need n >= 8")

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, dim: int = 1) -> "Grid":
        return cls(tuple(Axis(lo, hi, n) for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(ax.spacing for ax in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis_points(self, i: int) -> np.ndarray:
        return self.axes[i].points

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(ax.points for ax in self.axes), indexing="ij"))

    def flat_points(self) -> np.ndarray:
        """All grid nodes as an (size, dim) array, row-major over axes."""
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def trapz_weights(self) -> np.ndarray:
        w = np.array([1.0])
        for ax in self.axes:
            w1 = trapezoid_weights(ax.n, ax.spacing)
            w = np.multiply.outer(w, w1)
        return w.reshape(self.shape)

    def extent(self, i: int = 0) -> float:
        return self.axes[i].hi - self.axes[i].lo


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


@dataclass
class GridFunction:
    """Samples of a scalar function on a Grid (row-major over axes)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values.view(float))):
            raise ValueError("grid function contains non-finite samples")

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def integral(self) -> complex:
        return complex(np.sum(self.values * self.grid.trapz_weights()))

    def norm_l2(self) -> float:
        w = self.grid.trapz_weights()
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * w).real))

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def save(self, path_base: str | Path):
        """Write <base>.csv (coordinates, real, imag) and <base>.json (axes)."""
        base = Path(path_base)
        pts = self.grid.flat_points()
        vals = self.values.ravel()
        cols = [pts[:, i] for i in range(self.grid.dim)]
        cols += [vals.real, vals.imag]
        data = np.column_stack(cols)
        np.savetxt(base.with_suffix(".csv"), data, fmt=FLOAT_FORMAT, delimiter=",")
        header = {
            "axes": [
                {"min": ax.lo, "max": ax.hi, "n": ax.n} for ax in self.grid.axes
            ],
            "dtype": str(self.values.dtype),
        }
        base.with_suffix(".json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, path_base: str | Path) -> "GridFunction":
        base = Path(path_base)
        header = json.loads(base.with_suffix(".json").read_text())
        axes = tuple(Axis(a["min"], a["max"], a["n"]) for a in header["axes"])
        grid = Grid(axes)
        data = np.loadtxt(base.with_suffix(".csv"), delimiter=",")
        vals = data[:, -2] + 1j * data[:, -1]
        if header["dtype"].startswith("float"):
            vals = vals.real
        return cls(grid, vals.reshape(grid.shape))


@dataclass
class LinearGridOperator:
    """Dense or sparse matrix mapping functions on `domain` to `codomain`."""

    domain: Grid
    codomain: Grid
    matrix: object  # (codomain.size, domain.size) ndarray or scipy sparse

    def __post_init__(self):
        if self.matrix.shape != (self.codomain.size, self.domain.size):
            raise ValueError("operator matrix shape inconsistent with grids")

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.domain:
            raise ValueError("operator applied to function on wrong grid")
        out = self.matrix @ f.values.ravel()
        return GridFunction(self.codomain, np.asarray(out).reshape(self.codomain.shape))

    def compose(self, other: "LinearGridOperator") -> "LinearGridOperator":
        if other.codomain != self.domain:
            raise ValueError("operator composition grid mismatch")
        return LinearGridOperator(other.domain, self.codomain, self.matrix @ other.matrix)

    def linearity_defect(self, rng: np.random.Generator) -> float:
        """Relative defect of op(a f + b g) - a op(f) - b op(g) on random inputs."""
        n = self.domain.size
        f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        a = complex(rng.standard_normal(), rng.standard_normal())
        b = complex(rng.standard_normal(), rng.standard_normal())
        lhs = self.matrix @ (a * f + b * g)
        rhs = a * (self.matrix @ f) + b * (self.matrix @ g)
        scale = np.linalg.norm(np.asarray(rhs).ravel()) + 1e-300
        return float(np.linalg.norm(np.asarray(lhs - rhs).ravel()) / scale)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _fft_wavenumbers(n: int, h: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(n, d=h)


def spectral_derivative_array(a: np.ndarray, h: float, axis: int = 0, order: int = 1) -> np.ndarray:
    """FFT derivative along one axis; Nyquist mode dropped for odd orders."""
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    n = a.shape[axis]
    k = _fft_wavenumbers(n, h)
    if order % 2 == 1 and n % 2 == 0:
        k = k.copy()
        k[n // 2] = 0.0  # keeps the first-derivative matrix skew-Hermitian
    mult = (1j * k) ** order
    shape = [1] * a.ndim
    shape[axis] = n
    fa = np.fft.fft(a, axis=axis)
    out = np.fft.ifft(fa * mult.reshape(shape), axis=axis)
    if not np.iscomplexobj(a):
        return out.real
    return out


def finite_difference_derivative_array(a: np.ndarray, h: float, axis: int = 0,
                                       order: int = 1) -> np.ndarray:
    """4th-order central differences with one-sided stencils at the ends."""
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    n = a.shape[0]
    if n < 7:
        raise ValueError("need at least 7 points for 4th-order differences")
    if order == 1:
        out[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * h)
        fwd = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
        for i in (0, 1):
            out[i] = sum(c * a[i + j] for j, c in enumerate(fwd))
            out[n - 1 - i] = -sum(c * a[n - 1 - i - j] for j, c in enumerate(fwd))
    else:
        out[2:-2] = (-a[:-4] + 16 * a[1:-3] - 30 * a[2:-2] + 16 * a[3:-1] - a[4:]) / (12 * h * h)
        fwd = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / (12 * h * h)
        for i in (0, 1):
            out[i] = sum(c * a[i + j] for j, c in enumerate(fwd))
            out[n - 1 - i] = sum(c * a[n - 1 - i - j] for j, c in enumerate(fwd))
    return np.moveaxis(out, 0, axis)


def spectral_derivative(f: GridFunction, axis: int = 0, order: int = 1,
                        method: str = "spectral") -> GridFunction:
    """Derivative of a grid function along one axis.

    method "spectral" assumes the samples decay (or are periodic) across the
    window; "fd4" uses 4th-order differences with one-sided boundary rows.
    """
    h = f.grid.spacings[axis]
    if method == "spectral":
        vals = spectral_derivative_array(f.values, h, axis=axis, order=order)
    elif method == "fd4":
        vals = finite_difference_derivative_array(f.values, h, axis=axis, order=order)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    return GridFunction(f.grid, vals)


def spectral_antiderivative_array(a: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Antiderivative anchored at the left end of the axis.

    The mean is integrated as an exact linear ramp; the zero-mean remainder is
    integrated spectrally, so smooth decaying inputs are resolved to near
    machine precision.
    """
    n = a.shape[axis]
    a = np.moveaxis(a, axis, 0)
    mean = a.mean(axis=0)
    fluct = a - mean
    k = _fft_wavenumbers(n, h)
    div = np.zeros(n, dtype=complex)
    div[1:] = 1.0 / (1j * k[1:])
    shape = [n] + [1] * (a.ndim - 1)
    g = np.fft.ifft(np.fft.fft(fluct, axis=0) * div.reshape(shape), axis=0)
    g = g - g[0]
    x = (np.arange(n) * h).reshape(shape)
    out = g + mean * x
    out = np.moveaxis(out, 0, axis)
    if not np.iscomplexobj(a):
        return out.real
    return out


def spectral_antiderivative(f: GridFunction, axis: int = 0) -> GridFunction:
    return GridFunction(f.grid, spectral_antiderivative_array(
        f.values, f.grid.spacings[axis], axis=axis))


def _cumtrapz(a: np.ndarray, h: float) -> np.ndarray:
    """Cumulative trapezoid along axis 0, anchored to zero at the first node."""
    out = np.zeros_like(a)
    out[1:] = np.cumsum((a[:-1] + a[1:]) * (h / 2.0), axis=0)
    return out


def inverse_derivative_array(a: np.ndarray, h: float, x: np.ndarray,
                             axis: int = 0, order: int = 1) -> np.ndarray:
    """Repeated step-kernel integration: convolution with
    (x - x')^(order-1) Theta(x - x') / (order-1)! under trapezoid weights,
    anchored at the axis minimum."""
    if order < 1:
        raise ValueError("inverse derivative order must be >= 1")
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    if x.shape != (n,):
        raise ValueError("coordinate array does not match axis length")
    xs = x.reshape([n] + [1] * (a.ndim - 1))
    p = order - 1
    out = np.zeros_like(a)
    # binomial expansion of (x - x')^p keeps the cost at order*n
    for j in range(p + 1):
        coeff = (-1.0) ** j * factorial(p) / (factorial(j) * factorial(p - j))
        out = out + coeff * xs ** (p - j) * _cumtrapz(xs ** j * a, h)
    out = out / factorial(p)
    return np.moveaxis(out, 0, axis)


def inverse_derivative(f: GridFunction, axis: int = 0, order: int = 1) -> GridFunction:
    if order < 1:
        raise ValueError("inverse derivative order must be >= 1")
    x = f.grid.axis_points(axis)
    h = f.grid.spacings[axis]
    return GridFunction(f.grid, inverse_derivative_array(f.values, h, x, axis=axis, order=order))


# ---------------------------------------------------------------------------
# segment-averaged vector potential
# ---------------------------------------------------------------------------

def legendre_rule_half(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1/2, 1/2].

    Nodes/weights are symmetrized bitwise so odd moments cancel exactly."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes / 2.0, weights / 2.0


def averaged_potential(potentials, q: np.ndarray, u: np.ndarray, t: float = 0.0,
                       quad_order: int = 8) -> np.ndarray:
    """Average of the vector potential over the chord q + tau*u, tau in [-1/2, 1/2].

    q, u broadcast against each other with a trailing component axis.
    Exact for potentials polynomial of degree <= 2*quad_order - 1.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    nodes, weights = legendre_rule_half(quad_order)
    out = None
    for tau, w in zip(nodes, weights):
        contrib = w * np.asarray(potentials.vector(q + tau * u, t))
        out = contrib if out is None else out + contrib
    return out
