"""Spatial discretizations, quadrature, Laplacians and lattice translations.

Two grids are supported:

* :class:`RadialGrid` -- cell-centred nodes ``r_i = (i + 1/2) dr`` for
  radially symmetric profiles in R^3.
* :class:`BoxGrid3` -- a periodic 3D box with a spectral Laplacian.

Both expose the same array-level methods (``integrate``, ``laplacian``,
``kinetic``, ``solve_shifted``) so the minimizer and the functionals can be
written once.  :class:`Field` pairs a grid with a read-only value array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
from scipy.linalg import solve_banded

# integral of 1/|x| over the unit cube centred at the origin
_CUBE_INV_R = 3.0 * np.log((np.sqrt(3.0) + 1.0) / (np.sqrt(3.0) - 1.0)) - np.pi / 2.0


class NonFiniteFieldError(ValueError):
    """Raised when a field contains NaN or inf; carries the flat index."""

    def __init__(self, index):
        super().__init__(f"non-finite value at flat index {index}")
        self.index = index


class GridMismatchError(ValueError):
    pass


class IncommensurateShiftError(ValueError):
    pass


def check_finite(values):
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if bad.any():
        raise NonFiniteFieldError(int(np.flatnonzero(bad.ravel())[0]))


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centred radial grid on ``(0, r_max)`` with ``u(r_max) = 0``."""

    n: int
    r_max: float

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("radial grid needs n >= 16")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")

    ndim = 1
    kind = "radial"

    @property
    def shape(self):
        return (self.n,)

    @property
    def size(self):
        return self.n

    @property
    def dr(self):
        return self.r_max / self.n

    @cached_property
    def r(self):
        return (np.arange(self.n) + 0.5) * self.dr

    @cached_property
    def weights(self):
        """Quadrature weights 4 pi r_i^2 dr."""
        return 4.0 * np.pi * self.r**2 * self.dr

    @cached_property
    def faces(self):
        """Shell boundaries whose exact volumes equal the quadrature weights.

        ``faces[0] = 0``; cell ``i`` is ``[faces[i], faces[i+1]]`` and
        contains node ``r_i``.
        """
        i = np.arange(self.n + 1, dtype=float)
        return self.dr * np.cbrt(i**3 - i / 4.0)

    @cached_property
    def _stencil(self):
        dr, r = self.dr, self.r
        lower = 1.0 / dr**2 - 1.0 / (r * dr)
        upper = 1.0 / dr**2 + 1.0 / (r * dr)
        diag = np.full(self.n, -2.0 / dr**2)
        diag[0] += lower[0]  # even reflection u(-r) = u(r)
        diag[-1] -= upper[-1]  # odd reflection about r_max
        lower = lower.copy()
        upper = upper.copy()
        lower[0] = 0.0
        upper[-1] = 0.0
        return lower, diag, upper

    def integrate(self, f):
        return float(np.dot(self.weights, f))

    def integrate_exact(self, f):
        return math.fsum(np.ravel(self.weights * f))

    def inner(self, a, b):
        return float(np.dot(self.weights, np.real(np.conj(a) * b)))

    def laplacian(self, u):
        lower, diag, upper = self._stencil
        out = diag * u
        out[1:] += lower[1:] * u[:-1]
        out[:-1] += upper[:-1] * u[1:]
        return out

    def kinetic(self, u):
        """1/2 int |grad u|^2 as the quadratic form -1/2 <u, Lap u>."""
        return -0.5 * self.inner(u, self.laplacian(u))

    def solve_shifted(self, alpha, g):
        """Solve ``(alpha - Lap) x = g``."""
        lower, diag, upper = self._stencil
        ab = np.zeros((3, self.n))
        ab[0, 1:] = -upper[:-1]
        ab[1] = alpha - diag
        ab[2, :-1] = -lower[1:]
        return solve_banded((1, 1), ab, g)

    def radius(self):
        return self.r

    def center_of(self, u):
        return None


@dataclass(frozen=True)
class BoxGrid3:
    """Periodic box ``[-L_i/2, L_i/2)`` with ``n_i`` nodes per axis."""

    n: tuple
    L: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in np.broadcast_to(self.n, 3))
        L = tuple(float(v) for v in np.broadcast_to(self.L, 3))
        for ni in n:
            if ni < 16 or ni & (ni - 1):
                raise ValueError("box axes need n >= 16 and a power of two")
        if min(L) <= 0:
            raise ValueError("box lengths must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", L)

    ndim = 3
    kind = "box"

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def h(self):
        return tuple(L / n for L, n in zip(self.L, self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.L))

    @cached_property
    def axes(self):
        return tuple(-L / 2 + h * np.arange(n) for L, h, n in zip(self.L, self.h, self.n))

    @cached_property
    def coords(self):
        return np.meshgrid(*self.axes, indexing="ij", sparse=True)

    def radius(self):
        x, y, z = self.coords
        return np.sqrt(x**2 + y**2 + z**2)

    @cached_property
    def wavenumbers(self):
        return tuple(2 * np.pi * scipy.fft.fftfreq(n, d=h) for n, h in zip(self.n, self.h))

    @cached_property
    def k2(self):
        """|k|^2 on the full complex FFT layout."""
        kx, ky, kz = np.meshgrid(*self.wavenumbers, indexing="ij", sparse=True)
        return kx**2 + ky**2 + kz**2

    @cached_property
    def k2_half(self):
        """|k|^2 on the rfftn layout."""
        kx, ky = self.wavenumbers[:2]
        kz = 2 * np.pi * scipy.fft.rfftfreq(self.n[2], d=self.h[2])
        kx, ky, kz = np.meshgrid(kx, ky, kz, indexing="ij", sparse=True)
        return kx**2 + ky**2 + kz**2

    def integrate(self, f):
        return float(np.sum(f)) * self.cell_volume

    def integrate_exact(self, f):
        """Correctly rounded sum, hence invariant under permutations."""
        return math.fsum(np.ravel(f)) * self.cell_volume

    def inner(self, a, b):
        return float(np.sum(np.real(np.conj(a) * b))) * self.cell_volume

    def laplacian(self, u):
        if np.iscomplexobj(u):
            return scipy.fft.ifftn(-self.k2 * scipy.fft.fftn(u))
        return scipy.fft.irfftn(-self.k2_half * scipy.fft.rfftn(u), s=self.n)

    def gradient(self, u):
        """Spectral gradient of a real field; Nyquist modes dropped."""
        uh = scipy.fft.rfftn(u)
        out = []
        kz = 2 * np.pi * scipy.fft.rfftfreq(self.n[2], d=self.h[2])
        ks = list(self.wavenumbers[:2]) + [kz]
        for axis, k in enumerate(ks):
            k = k.copy()
            if self.n[axis] % 2 == 0 and axis < 2:
                k[self.n[axis] // 2] = 0.0
            elif axis == 2 and self.n[2] % 2 == 0:
                k[-1] = 0.0
            shape = [1, 1, 1]
            shape[axis] = -1
            out.append(scipy.fft.irfftn(1j * k.reshape(shape) * uh, s=self.n))
        return np.stack(out)

    def divergence(self, vec):
        return sum(self.gradient(vec[i])[i] for i in range(3))

    def kinetic(self, u):
        return -0.5 * self.inner(u, self.laplacian(u))

    def solve_shifted(self, alpha, g):
        if np.iscomplexobj(g):
            return scipy.fft.ifftn(scipy.fft.fftn(g) / (alpha + self.k2))
        return scipy.fft.irfftn(scipy.fft.rfftn(g) / (alpha + self.k2_half), s=self.n)

    def center_of(self, density):
        """Circular centroid (in grid steps, per axis) of a nonnegative density."""
        out = []
        for axis, n in enumerate(self.n):
            other = tuple(a for a in range(3) if a != axis)
            marginal = density.sum(axis=other)
            theta = 2 * np.pi * np.arange(n) / n
            z = np.sum(marginal * np.exp(1j * theta))
            out.append((np.angle(z) % (2 * np.pi)) * n / (2 * np.pi))
        return np.array(out)


@dataclass(frozen=True)
class Field:
    """Immutable samples of a real or complex scalar on a grid."""

    grid: object
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        if values.shape != tuple(self.grid.shape):
            if values.size != self.grid.size:
                raise GridMismatchError(
                    f"{values.size} values for a grid of {self.grid.size} nodes")
            values = values.reshape(self.grid.shape)
        check_finite(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def with_values(self, values):
        return Field(self.grid, values)


@dataclass(frozen=True)
class FullState:
    """Electromagnetic state ``(u, Theta, E, H)`` on a box grid.

    ``Theta``, ``E`` and ``H`` are arrays of shape ``(3, *grid.shape)``.
    """

    u: Field
    Theta: np.ndarray
    E: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        grid = self.u.grid
        if grid.kind != "box":
            raise GridMismatchError("full states live on box grids")
        for name in ("Theta", "E", "H"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (3,) + tuple(grid.shape):
                raise GridMismatchError(f"{name} must have shape (3, *grid.shape)")
            check_finite(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def grid(self):
        return self.u.grid

    @classmethod
    def zero(cls, grid):
        z = np.zeros((3,) + tuple(grid.shape))
        return cls(Field(grid, np.zeros(grid.shape)), z, z, z)


def integrate(f: Field) -> float:
    """Integral of a real field over R^3 (radial) or over the box.

    The sum is correctly rounded, so the result does not depend on the
    order of the samples (translations leave it bit-identical).
    """
    check_finite(f.values)
    return f.grid.integrate_exact(np.real(f.values))


def laplacian(f: Field) -> Field:
    return Field(f.grid, f.grid.laplacian(np.asarray(f.values)))


def shift_steps(grid, z, periods=None):
    """Grid-step shift for lattice vector ``z`` under ``A = diag(periods)``."""
    z = np.asarray(z, dtype=int).reshape(3)
    if periods is None:
        return z.copy()
    steps = z * np.asarray(periods, dtype=float) / np.asarray(grid.h)
    rounded = np.rint(steps)
    if np.any(np.abs(steps - rounded) > 1e-9 * np.maximum(1.0, np.abs(steps))):
        raise IncommensurateShiftError(
            f"lattice shift {z.tolist()} with periods {list(periods)} is not a whole "
            f"number of grid steps {list(grid.h)}")
    return rounded.astype(int)


def translate_array(values, steps):
    """``(T_z u)(x) = u(x + A z)`` as a circular shift by ``steps``."""
    return np.roll(values, tuple(-int(s) for s in steps), axis=(0, 1, 2))


def translate(f: Field, z, periods=None) -> Field:
    """Lattice translation ``u(x) -> u(x + A z)`` on a box grid.

    ``periods`` are the diagonal entries of ``A``; by default ``A`` is the
    grid spacing so ``z`` counts grid steps.
    """
    if f.grid.kind != "box":
        raise GridMismatchError("translations need a box grid")
    return Field(f.grid, translate_array(f.values, shift_steps(f.grid, z, periods)))


def cell_self_kernel(h):
    """Cell average of 1/(4 pi |x|) over the cell ``h`` centred at 0."""
    hx, hy, hz = (float(v) for v in np.broadcast_to(h, 3))
    if hx == hy == hz:
        return _CUBE_INV_R / (4.0 * np.pi * hx)
    from scipy import integrate as _quad

    octant, _ = _quad.tplquad(lambda z, y, x: 1.0 / np.sqrt(x * x + y * y + z * z),
                              0, hx / 2, 0, hy / 2, 0, hz / 2)
    return 8.0 * octant / (hx * hy * hz) / (4.0 * np.pi)
