"""Free-space solvers for ``-Lap phi = q u^2`` on radial and box grids.

Radial solver
    ``rho = q u^2`` is taken piecewise constant on the shells
    ``[faces[i], faces[i+1]]`` of the grid, whose volumes equal the
    quadrature weights.  Enclosed charge, field, potential and field energy
    are then integrated in closed form, so a uniformly charged ball is
    reproduced to rounding error.  Beyond the last shell the exact monopole
    tail ``Q / (4 pi r)`` is used.  The stored ``phi`` is the shell average,
    which makes ``1/2 int rho phi`` (the field energy) have L2 gradient
    exactly ``2 q phi u``.

Box solver
    Hockney's method: the source is zero padded to twice the box size and
    convolved with ``1/(4 pi |x|)``.  The origin cell uses the cell average
    of the kernel plus the leading midpoint-rule correction, which lowers
    the error on smooth sources from about ``h^2/24`` to ``O(h^4)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import _fft
from .grid import Field, cell_self_kernel

LOCALIZATION_LIMIT = 1e-3


@dataclass(frozen=True)
class PoissonSolution:
    phi: Field
    field_energy: float
    total_charge: float
    field_strength: np.ndarray | None = None  # |grad phi| at radial nodes
    localized: bool = True
    boundary_fraction: float = 0.0


def _radial_parts(grid, rho):
    a = grid.faces[:-1]
    b = grid.faces[1:]
    vol = grid.weights
    cell_q = rho * vol
    q_inner = np.concatenate(([0.0], np.cumsum(cell_q)[:-1]))
    q_total = float(np.sum(cell_q))
    alpha = q_inner / (4 * np.pi) - rho * a**3 / 3.0

    inv_a = np.zeros_like(a)
    inv_a[1:] = 1.0 / a[1:]
    drop = np.where(a > 0, alpha * (inv_a - 1.0 / b), 0.0) + rho * (b**2 - a**2) / 6.0

    phi_out = q_total / (4 * np.pi * b[-1])
    # phi at outer faces: phi(b_i) = phi_out + sum of drops of cells outside i
    phi_b = phi_out + np.concatenate((np.cumsum(drop[::-1])[::-1][1:], [0.0]))

    const = phi_b - alpha / b + rho * b**2 / 6.0
    cell_int = 4 * np.pi * (const * (b**3 - a**3) / 3.0
                            + alpha * (b**2 - a**2) / 2.0
                            - rho * (b**5 - a**5) / 30.0)
    phi_avg = cell_int / vol

    r = grid.r
    strength = alpha / r**2 + rho * r / 3.0

    e_cells = np.where(a > 0, alpha**2 * (inv_a - 1.0 / b), 0.0) \
        + alpha * rho * (b**2 - a**2) / 3.0 + rho**2 * (b**5 - a**5) / 45.0
    energy = 0.5 * 4 * np.pi * float(np.sum(e_cells)) + q_total**2 / (8 * np.pi * b[-1])
    return phi_avg, strength, energy, q_total


def solve_radial(u, q, grid=None) -> PoissonSolution:
    """Radial solve; ``u`` may be a :class:`Field` or an array with ``grid``."""
    grid, values = _unpack(u, grid)
    rho = q * np.asarray(values, dtype=float) ** 2
    phi, strength, energy, total = _radial_parts(grid, rho)
    return PoissonSolution(Field(grid, phi), energy, total, strength)


class BoxPoisson:
    """Cached Hockney kernel for one box grid; reentrant."""

    def __init__(self, grid):
        self.grid = grid
        self._padded = padded = tuple(2 * n for n in grid.n)
        self.plan = _fft.RealPlan(padded)
        idx = [np.minimum(np.arange(m), m - np.arange(m)) * h
               for m, h in zip(padded, grid.h)]
        x, y, z = np.meshgrid(*idx, indexing="ij", sparse=True)
        r = np.sqrt(x**2 + y**2 + z**2)
        with np.errstate(divide="ignore"):
            kernel = 1.0 / (4 * np.pi * r)
        # cell average plus the O(h^2) midpoint-rule correction of the
        # singular cell, sum_i h_i^2 / 72 per unit density
        hx, hy, hz = grid.h
        kernel[0, 0, 0] = (cell_self_kernel(grid.h)
                           + (hx**2 + hy**2 + hz**2) / 72.0 / grid.cell_volume)
        self.kernel_hat = np.real(self.plan.forward(kernel)) * grid.cell_volume
        self._scaled = self.kernel_hat / float(np.prod(padded))
        self._convs = {}
        self._convs_lock = threading.Lock()

    def potential(self, rho, single=False, measure=False):
        """Potential of ``rho``.

        ``single`` trades ~1e-7 accuracy for speed; ``measure`` uses measured
        FFT plans, which are faster but not bit-reproducible across processes.
        """
        key = (bool(single), bool(measure))
        conv = self._convs.get(key)
        if conv is None:
            with self._convs_lock:
                conv = self._convs.get(key)
                if conv is None:
                    conv = self._convs[key] = _fft.PaddedConvolution(
                        self.grid.n, self._padded, self._scaled, single=single,
                        measure=measure)
        return conv(rho)


_box_solvers: dict = {}
_box_lock = threading.Lock()


def box_solver(grid) -> BoxPoisson:
    with _box_lock:
        solver = _box_solvers.get(grid)
        if solver is None:
            solver = _box_solvers[grid] = BoxPoisson(grid)
        return solver


def boundary_fraction(grid, density):
    """Share of ``density`` in the outer eighth of the box along any axis."""
    total = float(np.sum(density))
    if total <= 0:
        return 0.0
    inner = density
    for axis, n in enumerate(grid.n):
        w = max(1, n // 8)
        sl = [slice(None)] * 3
        sl[axis] = slice(w, n - w)
        inner = inner[tuple(sl)]
    return max(0.0, 1.0 - float(np.sum(inner)) / total)


def solve_box(u, q, grid=None) -> PoissonSolution:
    grid, values = _unpack(u, grid)
    dens = np.abs(values) ** 2
    rho = q * dens
    frac = boundary_fraction(grid, dens)
    if q == 0:
        phi = np.zeros(grid.shape)
    else:
        phi = box_solver(grid).potential(rho)
    energy = 0.5 * grid.integrate(rho * phi)
    return PoissonSolution(Field(grid, phi), energy, grid.integrate(rho),
                           localized=frac <= LOCALIZATION_LIMIT, boundary_fraction=frac)


def solve(u, q, grid=None) -> PoissonSolution:
    grid, _ = _unpack(u, grid)
    return solve_radial(u, q, grid) if grid.kind == "radial" else solve_box(u, q, grid)


def potential_array(grid, values, q):
    """phi and field energy for an array ``values``; the hot path."""
    if q == 0:
        return np.zeros(grid.shape), 0.0
    if grid.kind == "radial":
        phi, _, energy, _ = _radial_parts(grid, q * np.asarray(values) ** 2)
        return phi, energy
    rho = q * np.abs(values) ** 2
    phi = box_solver(grid).potential(rho)
    return phi, 0.5 * grid.integrate(rho * phi)


def charge_density(u: Field, q: float) -> Field:
    return Field(u.grid, q * np.abs(u.values) ** 2)


def current_density(u: Field, Theta, q: float) -> np.ndarray:
    """``j = q Theta u`` with ``Theta = (grad S - q A) u``; shape (3, ...)."""
    return q * np.asarray(Theta) * np.real(u.values)


def _unpack(u, grid):
    if isinstance(u, Field):
        return u.grid, u.values
    if grid is None:
        raise TypeError("a grid is required when passing a bare array")
    return grid, np.asarray(u)
