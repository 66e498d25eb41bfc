"""Quick invariant suite run by ``hylosol check``.

Each check returns ``(name, passed, detail)``.  Everything runs on small
grids so the whole suite takes a few seconds.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from . import poisson
from .dynamics import EvolutionConfig, evolve
from .functionals import (Evaluator, PhysicsConfig, coercivity_params, phi_functional)
from .grid import BoxGrid3, Field, RadialGrid
from .model import check_assumptions


def check_gradient(cfg: PhysicsConfig, seed=0):
    grid = BoxGrid3((16, 16, 16), (8.0, 8.0, 8.0))
    ev = Evaluator(grid, cfg.with_q(max(cfg.q, 0.1)))
    rng = np.random.default_rng(seed)
    r = grid.radius()
    u = np.exp(-r**2) * (1 + 0.1 * rng.standard_normal(grid.shape))
    v = np.exp(-r**2 / 2) * rng.standard_normal(grid.shape)
    eps = 1e-4
    fd = (ev.energy(u + eps * v)[0] - ev.energy(u - eps * v)[0]) / (2 * eps)
    an = grid.inner(ev.gradient(u), v)
    err = abs(fd - an) / abs(an)
    return "gradient (16^3, q>0)", err < 1e-5, f"rel err {err:.2e}"


def check_ball():
    grid = RadialGrid(2048, 4.0)
    R, s0, q = 2.0, 1.0, 1.0
    u = np.where(grid.r < R, s0, 0.0)
    # the ball edge falls on a shell face only approximately; compare inside
    sol = poisson.solve_radial(Field(grid, u), q)
    inner = grid.faces[1:] < 0.9 * R
    expect = q * s0**2 * grid.r[inner] / 3.0
    err = float(np.max(np.abs(sol.field_strength[inner] - expect) / expect))
    return "Poisson uniform ball (radial)", err < 1e-6, f"rel err {err:.2e}"


def check_box_gaussian():
    grid = BoxGrid3((32, 32, 32), (16.0, 16.0, 16.0))
    r = grid.radius()
    rho = np.exp(-r**2 / 2) / (2 * np.pi) ** 1.5
    phi = poisson.box_solver(grid).potential(rho)
    exact = np.where(r > 0, erf(r / np.sqrt(2)) / (4 * np.pi * np.maximum(r, 1e-300)),
                     np.sqrt(2 / np.pi) / (4 * np.pi))
    err = float(np.max(np.abs(phi - exact)) / np.max(exact))
    return "Poisson Gaussian (box)", err < 1e-2, f"rel err {err:.2e}"


def check_conservation(cfg: PhysicsConfig):
    grid = BoxGrid3((16, 16, 16), (12.0, 12.0, 12.0))
    r = grid.radius()
    psi = (np.exp(-r**2 / 2) * np.exp(0.3j * grid.coords[0])).astype(complex)
    trace, _ = evolve(Field(grid, psi), EvolutionConfig(1e-3, 0.1, grid, cfg, stride=50))
    drift = trace.relative_drift("C")
    return "charge conservation (100 steps)", drift < 1e-12, f"rel drift {drift:.1e}"


def check_coercivity(cfg: PhysicsConfig):
    try:
        cp = coercivity_params(cfg.model)
    except ValueError as exc:
        return "coercivity witness", True, f"skipped: {exc}"
    grid = RadialGrid(1024, 30.0)
    worst = np.inf
    for width in (0.3, 1.0, 3.0):
        for amp in (0.1, 1.0, 10.0):
            u = amp * np.exp(-grid.r**2 / (2 * width**2))
            rep = phi_functional(Field(grid, u), cp, PhysicsConfig(cfg.q, cfg.model))
            worst = min(worst, rep.witness / max(1.0, abs(rep.energy)))
    return "coercivity witness E + aC^s > 0", worst > 0, f"min scaled witness {worst:.3g}"


def check_model(cfg: PhysicsConfig):
    rep = check_assumptions(cfg.model, cfg.potential)
    return "assumptions", rep.ok, ", ".join(rep.failures()) or "all hold"


def run_checks(cfg: PhysicsConfig):
    return [check_model(cfg), check_gradient(cfg), check_ball(), check_box_gaussian(),
            check_conservation(cfg), check_coercivity(cfg)]
