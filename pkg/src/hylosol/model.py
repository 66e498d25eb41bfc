"""Nonlinearity ``W`` and lattice potential ``V`` with assumption checks.

The builtin nonlinearity is ``W(s) = E0 s^2 + N(s)`` with the two-power
correction ``N(s) = -mu |s|^p + nu |s|^m``.  The builtin potential is the
separable lattice ``V(x) = V0/3 * sum_i sin^2(pi x_i / L_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

P_UPPER = 2.0 + 4.0 / 3.0


@dataclass(frozen=True)
class NonlinearityModel:
    E0: float = 1.0
    mu: float = 1.0
    p: float = 3.0
    nu: float = 0.0
    m: float = 4.0

    def __post_init__(self):
        for name in ("E0", "mu", "p", "nu", "m"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    # scalar API (s >= 0) ---------------------------------------------------
    def N(self, s):
        s = np.abs(s)
        return -self.mu * s**self.p + self.nu * s**self.m

    def N_prime(self, s):
        """Derivative of the even extension of N."""
        a = np.abs(s)
        return np.sign(s) * (-self.mu * self.p * a ** (self.p - 1)
                             + self.nu * self.m * a ** (self.m - 1))

    def N_prime_over_s(self, s):
        """N'(s)/s for s >= 0, continuous at 0 with value 0."""
        a = np.abs(s)
        return -self.mu * self.p * a ** (self.p - 2) + self.nu * self.m * a ** (self.m - 2)

    def W(self, s):
        return self.E0 * s**2 + self.N(s)

    def W_prime(self, s):
        return 2.0 * self.E0 * s + self.N_prime(s)

    def flipped(self):
        """The same model with the sign of the focusing term reversed."""
        return NonlinearityModel(self.E0, -self.mu, self.p, self.nu, self.m)

    def as_dict(self):
        return {"E0": self.E0, "mu": self.mu, "p": self.p, "nu": self.nu, "m": self.m}


def _require_nonnegative(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("amplitude s must be nonnegative")
    return s


def w_eval(model: NonlinearityModel, s):
    s = _require_nonnegative(s)
    out = model.W(s)
    return float(out) if out.ndim == 0 else out


def w_prime(model: NonlinearityModel, s):
    s = _require_nonnegative(s)
    out = model.W_prime(s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LatticePotential:
    """``V(x) = V0/3 * sum sin^2(pi x_i / L_i)`` or the zero potential."""

    V0: float = 0.0
    periods: tuple = (1.0, 1.0, 1.0)
    form: str = "sin2"

    def __post_init__(self):
        object.__setattr__(self, "periods",
                           tuple(float(v) for v in np.broadcast_to(self.periods, 3)))
        if self.form not in ("sin2", "zero"):
            raise ValueError(f"unknown potential form {self.form!r}")

    @classmethod
    def zero(cls):
        return cls(0.0, (1.0, 1.0, 1.0), "zero")

    @property
    def is_zero(self):
        return self.form == "zero" or self.V0 == 0.0

    @property
    def max_value(self):
        return 0.0 if self.is_zero else self.V0

    def values(self, grid):
        if self.is_zero:
            return np.zeros(grid.shape)
        if grid.kind != "box":
            raise ValueError("a nonzero lattice potential needs a box grid")
        total = 0.0
        for x, L in zip(grid.coords, self.periods):
            total = total + np.sin(np.pi * x / L) ** 2
        return np.broadcast_to(self.V0 * total / 3.0, grid.shape).copy()

    def lattice_steps(self, grid):
        """Grid steps per lattice period, or None when incommensurate."""
        if self.is_zero:
            return np.ones(3, dtype=int)
        steps = np.asarray(self.periods) / np.asarray(grid.h)
        rounded = np.rint(steps)
        if np.any(np.abs(steps - rounded) > 1e-9 * steps) or np.any(rounded < 1):
            return None
        if np.any(np.asarray(grid.n) % rounded.astype(int) != 0):
            return None  # box must hold a whole number of periods
        return rounded.astype(int)

    def as_dict(self):
        return {"V0": self.V0, "periods": list(self.periods), "form": self.form}


_S0_GRID = np.logspace(-3, 3, 601)


def find_s0(model: NonlinearityModel, V0: float):
    """A witness ``s0 > 0`` with ``N(s0) < -V0 s0^2``, or None.

    Among the qualifying points of a log grid on [1e-3, 1e3] the one closest
    to 1 (in log scale) is returned, so the choice is deterministic.
    """
    s = _S0_GRID
    ok = model.N(s) < -V0 * s**2
    if not ok.any():
        return None
    cand = s[ok]
    return float(cand[np.argmin(np.abs(np.log(cand)))])


@dataclass
class AssumptionReport:
    checks: dict = field(default_factory=dict)

    def add(self, name, passed, detail):
        self.checks[name] = {"passed": bool(passed), "detail": detail}

    @property
    def ok(self):
        return all(c["passed"] for c in self.checks.values())

    def failures(self):
        return [k for k, c in self.checks.items() if not c["passed"]]

    def __getitem__(self, name):
        return self.checks[name]["passed"]

    def lines(self):
        return [f"{k:8s} {'pass' if c['passed'] else 'FAIL'}  {c['detail']}"
                for k, c in self.checks.items()]


def check_assumptions(model: NonlinearityModel, potential: LatticePotential,
                      grid=None) -> AssumptionReport:
    rep = AssumptionReport()
    mu_on, nu_on = model.mu != 0, model.nu != 0

    rep.add("family", model.mu >= 0 and model.nu >= 0,
            f"mu={model.mu:g} >= 0, nu={model.nu:g} >= 0")

    smooth = (not mu_on or model.p > 2) and (not nu_on or model.m > 2)
    rep.add("W-i", model.E0 > 0 and smooth,
            f"W''(0) = 2E0 = {2 * model.E0:g} > 0 and exponents > 2")

    V0 = potential.max_value
    s0 = find_s0(model, V0)
    rep.add("W-ii", s0 is not None,
            "no s0 with N(s0) < -V0 s0^2 on [1e-3, 1e3]" if s0 is None
            else f"s0={s0:g}: N(s0)={float(model.N(s0)):.4g} < -V0 s0^2={-V0 * s0**2:.4g}")

    growth = (not mu_on or 2 < model.p < 6) and (not nu_on or 2 < model.m < 6)
    rep.add("W-iii", growth, f"|N'| growth exponents p={model.p:g}, m={model.m:g} in (2, 6)")

    if model.mu <= 0:
        lower_ok, why = True, "N >= 0 for large s"
    elif nu_on and model.nu > 0 and model.m > model.p:
        lower_ok, why = True, "defocusing nu-term dominates for large s"
    else:
        lower_ok, why = 2 < model.p < P_UPPER, f"need 2 < p={model.p:g} < 10/3"
    rep.add("W-iv", lower_ok, why)

    rep.add("V-i", potential.is_zero or potential.V0 >= 0, f"V0={potential.V0:g} >= 0")

    periodic = potential.is_zero or min(potential.periods) > 0
    detail = f"A = diag{tuple(potential.periods)}"
    if periodic and grid is not None and grid.kind == "box":
        steps = potential.lattice_steps(grid)
        periodic = steps is not None
        detail += " commensurate with grid" if periodic else " NOT commensurate with grid"
    rep.add("V-ii", periodic, detail)
    return rep
