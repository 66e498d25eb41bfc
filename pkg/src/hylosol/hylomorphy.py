"""Checks of the hylomorphy condition ``inf Lambda < Lambda_0``.

The upper side uses the radial trapezoid test function ``u_R`` (plateau
``s0`` up to radius ``R``, linear ramp to zero at ``R + 1``).  Its charge,
kinetic and nonlinear terms are integrated in closed form or by adaptive
quadrature.  The electrostatic term comes from the radial Poisson solver.
The lower side ``Lambda_0 >= E0`` is probed by shrinking a profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import poisson
from .functionals import Evaluator, PhysicsConfig
from .grid import Field, RadialGrid
from .model import check_assumptions, find_s0

R_SWEEP = tuple(2.0**k for k in range(1, 9))  # 2, 4, ..., 256
MARGIN = 1e-6
RAMP_POINTS = 40  # grid nodes per unit length for the Poisson term


class HylomorphyError(ValueError):
    pass


@dataclass(frozen=True)
class TestProfile:
    s0: float
    R: float
    grid: RadialGrid

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not (self.s0 > 0 and self.R > 0):
            raise ValueError("s0 and R must be positive")
        if self.grid.r_max < self.R + 1:
            raise ValueError(f"grid radius {self.grid.r_max} < R + 1 = {self.R + 1}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.s0 * np.clip(self.R + 1.0 - r, 0.0, 1.0)

    @property
    def field(self):
        return Field(self.grid, self(self.grid.r))


def profile_grid(R, margin=1.0):
    r_max = R + 1.0 + margin
    n = max(64, int(np.ceil(r_max * RAMP_POINTS)))
    return RadialGrid(n, r_max)


def trapezoid_profile(s0, R, grid=None) -> Field:
    """Samples of ``u_R`` on a radial grid (default: resolved ramp)."""
    return TestProfile(s0, R, grid if grid is not None else profile_grid(R)).field


def _ramp_integral(fn, R):
    """4 pi int_R^{R+1} fn(R + 1 - r) r^2 dr."""
    val, _ = quad(lambda r: fn(R + 1.0 - r) * r * r, R, R + 1.0, epsabs=0, epsrel=1e-13)
    return 4 * np.pi * val


@dataclass
class TestEvaluation:
    R: float
    s0: float
    Lambda: float
    charge: float
    kinetic: float
    V_term: float
    N_term: float
    field_term: float
    quadratic: float

    def row(self, certified=None):
        out = {"R": self.R, "Lambda": self.Lambda, "kinetic": self.kinetic,
               "V_term": self.V_term, "N_term": self.N_term, "field_term": self.field_term}
        if certified is not None:
            out["certified"] = bool(certified)
        return out


def lambda_of_test(s0, R, cfg: PhysicsConfig) -> TestEvaluation:
    """Lambda(u_R) with each contribution divided by the charge.

    The lattice potential enters through its bound ``V0`` (``int V u^2 <=
    V0 C``), so ``Lambda`` is an upper bound whenever ``V0 > 0``.
    """
    model = cfg.model
    plateau = 4.0 * np.pi * R**3 / 3.0
    charge = s0**2 * (plateau + _ramp_integral(lambda x: x * x, R))
    kinetic = 0.5 * s0**2 * 4.0 * np.pi * ((R + 1.0) ** 3 - R**3) / 3.0
    nonlinear = float(model.N(s0)) * plateau + _ramp_integral(
        lambda x: float(model.N(s0 * x)), R)
    field_e = 0.0
    if cfg.q:
        grid = profile_grid(R)
        field_e = poisson.solve_radial(trapezoid_profile(s0, R, grid), cfg.q).field_energy
    V0 = cfg.potential.max_value
    terms = dict(kinetic=kinetic / charge, V_term=V0, N_term=nonlinear / charge,
                 field_term=field_e / charge, quadratic=model.E0)
    lam = sum(terms.values())
    return TestEvaluation(R=float(R), s0=float(s0), Lambda=lam, charge=charge, **terms)


@dataclass
class HylomorphyReport:
    certified: bool
    rows: list = field(default_factory=list)
    s0: float | None = None
    best_R: float | None = None
    lambda_best: float | None = None
    E0: float = 1.0
    q: float = 0.0
    message: str = ""
    q_threshold: float | None = None

    @property
    def hylomorphic(self):
        return self.certified

    def certificate(self):
        out = {"certified": self.certified, "best_R": self.best_R,
               "lambda_best": self.lambda_best, "s0": self.s0, "E0": self.E0, "q": self.q,
               "message": self.message}
        if self.q_threshold is not None:
            out["q_threshold"] = self.q_threshold
        return out

    def table(self):
        thr = self.E0 - MARGIN * self.E0
        return [r.row(r.Lambda < thr) for r in self.rows]


def check_hylomorphy(cfg: PhysicsConfig, radii=R_SWEEP, s0=None) -> HylomorphyReport:
    """Minimize ``Lambda(u_R)`` over ``radii``; certify if below ``E0 - margin``."""
    model = cfg.model
    E0 = model.E0
    rep = check_assumptions(model, cfg.potential)
    for name in ("family", "W-i", "V-i"):
        if not rep[name]:
            return HylomorphyReport(False, E0=E0, q=cfg.q,
                                    message=f"hylomorphy not certified (assumption {name} fails)")
    if s0 is None:
        s0 = find_s0(model, cfg.potential.max_value)
    if s0 is None:
        return HylomorphyReport(False, E0=E0, q=cfg.q,
                                message="hylomorphy not certified ((W1) fails)")
    rows = [lambda_of_test(s0, R, cfg) for R in radii]
    best = min(rows, key=lambda r: r.Lambda)
    ok = best.Lambda < E0 - MARGIN * E0
    msg = "inf Lambda < E0 <= Lambda_0" if ok else "test family does not reach below E0"
    return HylomorphyReport(ok, rows, s0, best.R, best.Lambda, E0, cfg.q, msg)


def q_threshold(cfg: PhysicsConfig, rel_tol=0.01, radii=R_SWEEP, s0=None) -> float:
    """Largest coupling certified by the test family, to ``rel_tol``."""
    base = cfg.with_q(0.0)
    if not check_hylomorphy(base, radii, s0).certified:
        raise HylomorphyError("not certified at q = 0; no threshold to search")
    lo, hi = 0.0, 1e-3
    while check_hylomorphy(base.with_q(hi), radii, s0).certified:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise HylomorphyError("certified for every tested coupling")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if check_hylomorphy(base.with_q(mid), radii, s0).certified:
            lo = mid
        else:
            hi = mid
    return lo


def fit_bound(rows, E0, V0, N_s0_over_s0sq, q, s0, fit_at=(0, -1)):
    """Fit ``c2, c7`` in ``E0 + V0 + n (R/(R+1))^3 + c2/R + c7 q^2 s0^2 R^2``.

    The constants are fitted at two rows (indices ``fit_at``); returns
    ``(c2, c7, bounds)`` with the bound evaluated at every row.
    """
    def base(R):
        return E0 + V0 + N_s0_over_s0sq * (R / (R + 1.0)) ** 3

    i, j = fit_at
    A = np.array([[1.0 / rows[k].R, q**2 * s0**2 * rows[k].R**2] for k in (i, j)])
    b = np.array([rows[k].Lambda - base(rows[k].R) for k in (i, j)])
    if q == 0:
        c2 = b[0] / A[0, 0]
        c2 = max(c2, b[1] / A[1, 0])
        c7 = 0.0
    else:
        c2, c7 = np.linalg.solve(A, b)
    bounds = [base(r.R) + c2 / r.R + c7 * q**2 * s0**2 * r.R**2 for r in rows]
    return c2, c7, bounds


def field_slope(s0, radii, cfg: PhysicsConfig):
    """Least-squares log-log slope of the field term against R."""
    vals = [lambda_of_test(s0, R, cfg).field_term for R in radii]
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


@dataclass
class ProbeRow:
    eps: float
    Lambda: float
    quadratic: float
    remainder: float
    seminorm: float

    def row(self):
        return self.__dict__.copy()


def small_amplitude_probe(u: Field, eps_list, cfg: PhysicsConfig, t=4.0):
    """``Lambda(eps u)`` against its quadratic part as ``eps -> 0``.

    ``quadratic = E0 + (1/2 int |grad u|^2 + int V u^2) / int u^2`` does not
    depend on ``eps``; ``remainder`` is what the nonlinear and field terms
    add, which vanishes as ``eps -> 0``.
    """
    if not 2.0 < t < 6.0:
        raise ValueError("seminorm exponent t must lie in (2, 6)")
    grid = u.grid
    uv = np.asarray(u.values, dtype=float)
    ev = Evaluator(grid, cfg)
    c = ev.charge(uv)
    if c <= 0:
        raise ValueError("profile must have positive charge")
    parts, _ = ev.parts(uv)
    quadratic = (parts["kinetic"] + parts["potential"] + parts["quadratic"]) / c
    rows = []
    for eps in eps_list:
        if eps == 0:
            raise ValueError("eps = 0 gives zero charge; Lambda undefined")
        w = eps * uv
        e, _ = ev.energy(w)
        lam = e / (eps**2 * c)
        semi = grid.integrate(np.abs(w) ** t) ** (1.0 / t)
        rows.append(ProbeRow(float(eps), lam, quadratic, lam - quadratic, semi))
    return rows
