"""Soliton family by constrained energy minimization.

Two modes:

``fixed-charge``
    normalized gradient flow for ``min E`` on ``{C = c}``: a descent step
    along the preconditioned gradient projected onto the tangent space of
    the charge sphere, then rescaling back to charge ``c`` and the
    projection ``u -> |u|``.  The step halves whenever the energy rises.
    Near convergence the projection is switched off: with a spectral
    Laplacian the discrete ground state may carry sign changes of
    rounding size in its far tail, which ``|u|`` would keep fighting.

``j-delta``
    unconstrained descent on ``J_delta = Lambda + delta Phi``.  After each
    gradient step the amplitude is optimized exactly along the ray
    ``t -> t u``, where ``J_delta`` is an explicit function of a few
    integrals of ``u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .functionals import (CoercivityParams, Evaluator, PhysicsConfig,
                          j_delta_value_and_gradient)
from .grid import Field, translate_array

log = logging.getLogger(__name__)


class MinimizerError(RuntimeError):
    """Base class; ``record`` holds the last iterate and diagnostics."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConvergenceError(MinimizerError):
    pass


class StepSizeError(MinimizerError):
    pass


class VanishingIterateError(MinimizerError):
    pass


@dataclass(frozen=True)
class MinimizerConfig:
    tau: float = 1.0
    max_iter: int = 20000
    tol_energy: float = 1e-11
    tol_residual: float = 1e-7
    mode: str = "fixed-charge"
    seed_width: float | None = None
    tau_min: float = 1e-10
    charge_floor: float = 1e-8
    recenter: bool = True
    project_nonnegative: bool = True
    projection_residual: float = 1e-3  # |u| projection only above this residual

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("step size tau must be positive")
        if not (self.tol_energy > 0 and self.tol_residual > 0):
            raise ValueError("tolerances must be positive")
        if self.mode not in ("fixed-charge", "j-delta"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class SolitonRecord:
    c: float
    delta: float | None
    e: float
    Lambda: float
    omega: float
    residual: float
    iterations: int
    u: Field = field(repr=False)
    phi: Field = field(repr=False)
    E0: float = 1.0
    J: float | None = None
    Phi: float | None = None
    witness: float | None = None  # E + a C^s
    converged: bool = True
    status: str = "ok"
    history: list = field(default_factory=list, repr=False)

    @property
    def hylomorphic(self):
        return self.Lambda < self.E0

    def row(self):
        return {
            "delta": "" if self.delta is None else self.delta,
            "c": self.c, "E": self.e, "Lambda": self.Lambda, "omega": self.omega,
            "residual": self.residual, "iterations": self.iterations,
            "Phi": "" if self.Phi is None else self.Phi,
            "E_plus_aCs": "" if self.witness is None else self.witness,
        }


# --- helpers ----------------------------------------------------------------

def gaussian_seed(grid, c, width=None):
    """Gaussian with charge ``c``; unit amplitude when the width is free."""
    r = grid.radius()
    if width is None:
        width = (c / np.pi**1.5) ** (1.0 / 3.0)
        extent = grid.r_max if grid.kind == "radial" else min(grid.L) / 2
        width = float(np.clip(width, 4 * _spacing(grid), extent / 6))
    u = np.exp(-r**2 / (2 * width**2))
    return u * np.sqrt(c / grid.integrate(u * u))


def _spacing(grid):
    return grid.dr if grid.kind == "radial" else max(grid.h)


def embed_radial(profile: Field, box) -> np.ndarray:
    """Sample a radial profile on a box grid (cubic spline, zero outside)."""
    g = profile.grid
    r = np.concatenate(([-g.r[0]], g.r, [g.r_max]))
    v = np.asarray(profile.values, dtype=float)
    spline = CubicSpline(r, np.concatenate(([v[0]], v, [0.0])))
    rr = box.radius()
    out = np.where(rr < g.r_max, spline(np.minimum(rr, g.r_max)), 0.0)
    return np.maximum(out, 0.0)


def recover_omega(u, phi, cfg: PhysicsConfig) -> float:
    """omega = -<LHS(u), u> / <u, u> for the stationary equation."""
    grid, uv, pv = _arrays(u, phi)
    ev = Evaluator(grid, cfg)
    return -grid.inner(ev.stationary_lhs(uv, pv), uv) / grid.inner(uv, uv)


def residual(u, phi, omega, cfg: PhysicsConfig) -> float:
    """||-1/2 Lap u + V u + 1/2 W'(u) + q phi u + omega u|| / ||u||."""
    grid, uv, pv = _arrays(u, phi)
    ev = Evaluator(grid, cfg)
    r = ev.stationary_lhs(uv, pv) + omega * uv
    return float(np.sqrt(grid.inner(r, r) / grid.inner(uv, uv)))


def _arrays(u, phi):
    grid = u.grid
    pv = phi.values if isinstance(phi, Field) else np.asarray(phi)
    return grid, np.asarray(u.values, dtype=float), np.asarray(pv, dtype=float)


def _stationarity(ev, u, phi):
    g = ev.gradient(u, phi)
    lam = ev.grid.inner(g, u) / (2.0 * ev.grid.inner(u, u))
    r = 0.5 * g - lam * u
    res = np.sqrt(ev.grid.inner(r, r) / ev.grid.inner(u, u))
    return g, lam, res


def _shift(ev, lam):
    """Preconditioner shift ~ 2 (E0 - lambda), floored."""
    E0 = ev.cfg.model.E0
    return max(2.0 * (E0 - lam), 0.05 * max(E0, 1e-3))


def _recenter(grid, u, cfg):
    if grid.kind != "box":
        return u
    steps = cfg.potential.lattice_steps(grid)
    if steps is None:
        return u
    centre = grid.center_of(u * u)
    target = np.asarray(grid.n) / 2.0
    shift = np.rint((centre - target) / steps).astype(int) * steps
    if not shift.any():
        return u
    return translate_array(u, shift)


def _record(ev, u, phi, e, iters, delta=None, cp=None, converged=True, status="ok",
            history=None):
    grid = ev.grid
    c = ev.charge(u)
    _, lam, res = _stationarity(ev, u, phi)
    rec = SolitonRecord(
        c=c, delta=delta, e=e, Lambda=e / abs(c), omega=-lam, residual=res,
        iterations=iters, u=Field(grid, u), phi=Field(grid, phi), E0=ev.cfg.model.E0,
        converged=converged, status=status, history=history or [])
    if cp is not None:
        rec.Phi = e + 2.0 * cp.a * c**cp.s
        rec.witness = e + cp.a * c**cp.s
        if delta is not None:
            rec.J = e / c + delta * rec.Phi
    return rec


# --- fixed charge -------------------------------------------------------------

def minimize_fixed_charge(c, grid, cfg: PhysicsConfig, mcfg: MinimizerConfig = MinimizerConfig(),
                          seed=None, cp: CoercivityParams | None = None,
                          check=True) -> SolitonRecord:
    """Minimize ``E`` on ``{C = c}`` by normalized gradient flow."""
    if not c > 0:
        raise ValueError("target charge must be positive")
    if check:
        from .model import check_assumptions

        rep = check_assumptions(cfg.model, cfg.potential, grid)
        if not rep.ok:
            raise ValueError(f"assumption check failed: {rep.failures()}")
    ev = Evaluator(grid, cfg)
    u = gaussian_seed(grid, c, mcfg.seed_width) if seed is None else np.abs(
        np.asarray(seed.values if isinstance(seed, Field) else seed, dtype=float))
    u = u * np.sqrt(c / ev.charge(u))
    e, phi = ev.energy(u)
    tau = mcfg.tau
    history = []
    rises = 0
    e_prev = None
    for it in range(mcfg.max_iter + 1):
        g, lam, res = _stationarity(ev, u, phi)
        if cp is not None and e + cp.a * c**cp.s <= 0:
            log.warning("coercivity witness E + aC^s <= 0 at iteration %d", it)
        history.append((e, res))
        if e_prev is not None and abs(e - e_prev) <= mcfg.tol_energy * abs(e) \
                and res < mcfg.tol_residual:
            break
        if it == mcfg.max_iter:
            rec = _record(ev, u, phi, e, it, cp=cp, converged=False,
                          status="not converged", history=history)
            raise ConvergenceError(
                f"no convergence in {mcfg.max_iter} iterations (residual {res:.3g})", rec)
        alpha = _shift(ev, lam)
        pg = grid.solve_shifted(alpha, g)
        pu = grid.solve_shifted(alpha, u)
        d = -(pg - grid.inner(pg, u) / grid.inner(pu, u) * pu)
        while True:
            trial = u + tau * d
            if mcfg.project_nonnegative and res > mcfg.projection_residual:
                trial = np.abs(trial)
            trial *= np.sqrt(c / ev.charge(trial))
            e_t, phi_t = ev.energy(trial)
            if e_t <= e + 1e-12 * abs(e):
                break
            tau *= 0.5
            if tau < mcfg.tau_min:
                rec = _record(ev, u, phi, e, it, cp=cp, converged=False,
                              status="step-size failure", history=history)
                raise StepSizeError("step size underflow: energy cannot be decreased", rec)
        rises = rises + 1 if e_t > e else 0
        if rises >= 10:
            rec = _record(ev, u, phi, e, it, cp=cp, converged=False,
                          status="step-size failure", history=history)
            raise StepSizeError("energy increased on 10 consecutive accepted steps", rec)
        e_prev, u, e, phi = e, trial, e_t, phi_t
    if mcfg.recenter:
        u = _recenter(grid, u, cfg)
        e, phi = ev.energy(u)
    return _record(ev, u, phi, e, it, cp=cp, history=history)


# --- J_delta --------------------------------------------------------------------

class _Ray:
    """J_delta(t u) in closed form for the builtin nonlinearity."""

    def __init__(self, ev, u, delta, cp):
        g, m = ev.grid, ev.cfg.model
        parts, _ = ev.parts(u)
        self.quad = parts["kinetic"] + parts["potential"] + parts["quadratic"]
        self.ip = g.integrate(np.abs(u) ** m.p) if m.mu else 0.0
        self.im = g.integrate(np.abs(u) ** m.m) if m.nu else 0.0
        self.field = parts["field"]
        self.c = ev.charge(u)
        self.m, self.delta, self.cp = m, delta, cp

    def energy(self, t):
        m = self.m
        return (t**2 * self.quad - m.mu * t**m.p * self.ip + m.nu * t**m.m * self.im
                + t**4 * self.field)

    def J(self, t):
        e = self.energy(t)
        c = t**2 * self.c
        return e / c + self.delta * (e + 2.0 * self.cp.a * c**self.cp.s)

    def best(self, floor):
        """Amplitude factor minimizing J along the ray; None if vanishing."""
        x = np.linspace(-6.0, 6.0, 241)
        vals = np.array([self.J(np.exp(v)) for v in x])
        i = int(np.argmin(vals))
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)]
        if i == 0 or np.exp(2 * x[i]) * self.c < floor:
            return None
        res = minimize_scalar(lambda v: self.J(np.exp(v)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return float(np.exp(res.x))


def minimize_j_delta(delta, grid, cfg: PhysicsConfig, cp: CoercivityParams,
                     mcfg: MinimizerConfig = MinimizerConfig(mode="j-delta"),
                     seed=None, seed_charge=None) -> SolitonRecord:
    """Minimize ``J_delta`` without constraint; ``c_delta = C(u_delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ev = Evaluator(grid, cfg)
    if seed is None:
        u = gaussian_seed(grid, seed_charge or 1.0, mcfg.seed_width)
    else:
        u = np.abs(np.asarray(seed.values if isinstance(seed, Field) else seed, dtype=float))
    tau = mcfg.tau
    history = []
    J_prev = None
    for it in range(mcfg.max_iter + 1):
        t = _Ray(ev, u, delta, cp).best(mcfg.charge_floor)
        if t is None:
            e, phi = ev.energy(u)
            rec = _record(ev, u, phi, e, it, delta, cp, False, "vanishing iterate", history)
            raise VanishingIterateError(
                f"iterate collapses to zero at delta={delta:g}; "
                "J_delta has no nonzero minimizer below the vanishing level", rec)
        u = u * t
        J, G, e, c, phi = j_delta_value_and_gradient(ev, u, delta, cp)
        _, lam, res = _stationarity(ev, u, phi)
        history.append((J, res))
        if J_prev is not None and abs(J - J_prev) <= mcfg.tol_energy * abs(J) \
                and res < mcfg.tol_residual:
            break
        if it == mcfg.max_iter:
            rec = _record(ev, u, phi, e, it, delta, cp, False, "not converged", history)
            raise ConvergenceError(
                f"J_delta descent did not converge in {mcfg.max_iter} iterations "
                f"(residual {res:.3g})", rec)
        # the charge direction is handled by the ray search; descend on shape
        alpha = _shift(ev, lam)
        pg = grid.solve_shifted(alpha, G * c)
        pu = grid.solve_shifted(alpha, u)
        d = -(pg - grid.inner(pg, u) / grid.inner(pu, u) * pu)
        while True:
            trial = u + tau * d
            if mcfg.project_nonnegative and res > mcfg.projection_residual:
                trial = np.abs(trial)
            trial *= np.sqrt(c / ev.charge(trial))
            J_t, *_ = j_delta_value_and_gradient(ev, trial, delta, cp)
            if J_t <= J + 1e-12 * abs(J):
                break
            tau *= 0.5
            if tau < mcfg.tau_min:
                rec = _record(ev, u, phi, e, it, delta, cp, False, "step-size failure", history)
                raise StepSizeError("step size underflow in J_delta descent", rec)
        J_prev, u = J, trial
    if mcfg.recenter:
        u = _recenter(grid, u, cfg)
    e, phi = ev.energy(u)
    rec = _record(ev, u, phi, e, it, delta, cp, history=history)
    if not rec.J < cfg.model.E0:
        # on a bounded grid a vanishing sequence stalls at a spread-out state
        # whose J_delta cannot get below E0 <= Lambda_0
        rec.converged, rec.status = False, "vanishing iterate"
        raise VanishingIterateError(
            f"J_delta = {rec.J:.8g} >= E0 at delta={delta:g} (C = {rec.c:.3g}); "
            "minimizing sequences vanish, delta is beyond the certified range", rec)
    return rec


# --- sweeps -------------------------------------------------------------------------

CHAINS_DELTA = {
    "J_increasing": ("J", +1),
    "Phi_decreasing": ("Phi", -1),
    "Lambda_increasing": ("Lambda", +1),
    "C_decreasing": ("c", -1),
    "E_plus_aCs_decreasing": ("witness", -1),
}

CHAINS_CHARGE = {
    "Lambda_decreasing": ("Lambda", -1),
    "Phi_increasing": ("Phi", +1),
    "E_plus_aCs_increasing": ("witness", +1),
}


def monotonicity_report(records, chains, slack=1e-10):
    """Strict monotonicity of each chain over consecutive converged records."""
    ok_recs = [r for r in records if r.converged]
    report = {}
    for name, (attr, sign) in chains.items():
        vals = [getattr(r, attr) for r in ok_recs]
        if any(v is None for v in vals):
            continue
        diffs = [sign * (b - a) for a, b in zip(vals, vals[1:])]
        bad = [i for i, d in enumerate(diffs) if not d > slack]
        report[name] = {"passed": not bad, "violations": bad,
                        "min_step": min(diffs) if diffs else None}
    return report


@dataclass
class SweepResult:
    records: list
    report: dict
    mode: str

    @property
    def all_converged(self):
        return all(r.converged for r in self.records)

    @property
    def monotone(self):
        return all(v["passed"] for v in self.report.values())


def sweep(values, grid, cfg: PhysicsConfig, mcfg: MinimizerConfig, cp=None,
          warm_start=True, seed_charge=None) -> SweepResult:
    """Family of solitons for an ascending list of deltas or charges."""
    values = list(values)
    if values != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    records = []
    seed = None
    for v in values:
        try:
            if mcfg.mode == "j-delta":
                rec = minimize_j_delta(v, grid, cfg, cp, mcfg, seed=seed,
                                       seed_charge=seed_charge)
            else:
                rec = minimize_fixed_charge(v, grid, cfg, mcfg, seed=seed, cp=cp)
        except MinimizerError as exc:
            rec = exc.record
            if rec is None:
                raise
            rec.status = rec.status if rec.status != "ok" else "failed"
            rec.converged = False
            log.warning("sweep entry %g failed: %s", v, exc)
        records.append(rec)
        if warm_start and rec.converged:
            seed = rec.u
    chains = CHAINS_DELTA if mcfg.mode == "j-delta" else CHAINS_CHARGE
    return SweepResult(records, monotonicity_report(records, chains), mcfg.mode)


def with_mode(mcfg, mode):
    return replace(mcfg, mode=mode)
