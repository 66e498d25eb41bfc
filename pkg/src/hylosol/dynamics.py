"""Electrostatic Schroedinger-Poisson evolution and stability diagnostics.

``i dpsi/dt = -1/2 Lap psi + V psi + 1/2 W'(|psi|) psi/|psi| + q phi psi``,
``-Lap phi = q |psi|^2``, integrated with Strang splitting on a periodic
box.  The potential half steps only rotate the phase, so ``|psi|`` and with
it ``phi`` are the same at the end of one step and the start of the next.
Consecutive half steps are therefore merged, giving one FFT pair and one
Poisson solve per step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fft, _kernels, poisson
from .functionals import Evaluator, PhysicsConfig
from .grid import BoxGrid3, Field, translate_array

log = logging.getLogger(__name__)


class EvolutionAborted(RuntimeError):
    """Blow-up guard tripped; ``trace`` holds the samples so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    T: float
    grid: BoxGrid3
    cfg: PhysicsConfig = field(default_factory=PhysicsConfig)
    stride: int = 100
    blowup_factor: float = 1e6
    single_precision_poisson: bool = True
    measure_plans: bool = False  # faster FFTs, not bit-reproducible across runs

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= 0:
            raise ValueError("T must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    @property
    def kinetic_cfl(self):
        """dt max|k|^2 / 2, the largest kinetic phase per step."""
        return self.dt * float(np.max(self.grid.k2)) / 2.0


@dataclass
class EvolutionTrace:
    t: list = field(default_factory=list)
    E: list = field(default_factory=list)
    C: list = field(default_factory=list)
    liapunov: list = field(default_factory=list)
    orbit_distance: list = field(default_factory=list)
    max_abs_psi: list = field(default_factory=list)
    phase: list = field(default_factory=list)  # arg <psi0, psi(t)>, unwrapped
    orbit_ceiling: list = field(default_factory=list)  # distance if orthogonal
    aborted: bool = False

    COLUMNS = ("t", "E", "C", "liapunov", "orbit_distance", "max_abs_psi")

    def rows(self):
        return [dict(zip(self.COLUMNS, vals)) for vals in
                zip(self.t, self.E, self.C, self.liapunov, self.orbit_distance,
                    self.max_abs_psi)]

    @property
    def phase_rate(self):
        """Least-squares slope of the global phase against time."""
        if len(self.t) < 2:
            return float("nan")
        return float(np.polyfit(self.t, self.phase, 1)[0])

    def relative_drift(self, name):
        v = np.asarray(getattr(self, name))
        return float(np.max(np.abs(v - v[0])) / abs(v[0])) if len(v) else 0.0


# --- diagnostics ---------------------------------------------------------------

def conserved(psi: Field, cfg: PhysicsConfig):
    """``(E, C)`` of a complex field."""
    grid = psi.grid
    return _conserved(grid, Evaluator(grid, cfg), np.asarray(psi.values))


def _conserved(grid, ev, psi):
    dens = (psi.real**2 + psi.imag**2)
    amp = np.sqrt(dens)
    C = grid.integrate(dens)
    kin = _kinetic_complex(grid, psi)
    model = ev.cfg.model
    e = kin + model.E0 * C + grid.integrate(model.N(amp))
    if ev.has_V:
        e += grid.integrate(ev.V * dens)
    if ev.cfg.q:
        _, fe = poisson.potential_array(grid, amp, ev.cfg.q)
        e += fe
    return e, C


def _kinetic_complex(grid, psi):
    spec = np.fft.fftn(psi)
    return 0.5 * float(np.sum(grid.k2 * np.abs(spec) ** 2)) * grid.cell_volume / psi.size


def liapunov(psi: Field, record, cfg: PhysicsConfig) -> float:
    """``(E(psi) - e)^2 + (C(psi) - c)^2`` for the soliton in ``record``."""
    e, c = conserved(psi, cfg)
    return (e - record.e) ** 2 + (c - record.c) ** 2


def _x_weight(grid, E0):
    return grid.k2 + 2.0 * E0


def orbit_distance(psi: Field, record, E0: float | None = None, steps=None) -> float:
    """Distance from ``psi`` to ``{e^{i theta} T_z u}``.

    The norm is ``int |grad f|^2 + 2 E0 |f|^2``.  For each shift the optimal
    phase is ``arg <T_z u, psi>``, so the squared distance is
    ``|psi|^2 + |u|^2 - 2 |<T_z u, psi>|``; the inner products for all
    shifts come from one FFT cross-correlation.  ``steps`` restricts the
    shifts to multiples of the lattice period (in grid steps).
    """
    return _orbit_parts(psi, record, E0, steps)[0]


def _orbit_parts(psi, record, E0=None, steps=None):
    """Distance and its ceiling ``sqrt(|psi|^2 + |u|^2)`` (orthogonal orbit)."""
    grid = psi.grid
    E0 = record.E0 if E0 is None else E0
    w = _x_weight(grid, E0)
    ph = np.fft.fftn(np.asarray(psi.values, dtype=complex))
    uh = np.fft.fftn(np.asarray(record.u.values, dtype=complex))
    scale = grid.cell_volume / psi.values.size
    npsi = float(np.sum(w * np.abs(ph) ** 2)) * scale
    nu = float(np.sum(w * np.abs(uh) ** 2)) * scale
    corr = np.abs(np.fft.ifftn(w * ph * np.conj(uh))) * grid.cell_volume
    if steps is not None and np.any(np.asarray(steps) > 1):
        sx, sy, sz = (int(s) for s in steps)
        corr = corr[::sx, ::sy, ::sz]
    return float(np.sqrt(max(npsi + nu - 2.0 * np.max(corr), 0.0))), float(np.sqrt(npsi + nu))


def orbit_distance_bruteforce(psi: Field, record, E0=None):
    """Reference implementation looping over every grid shift."""
    grid = psi.grid
    E0 = record.E0 if E0 is None else E0
    p = np.asarray(psi.values, dtype=complex)
    u = np.asarray(record.u.values, dtype=complex)
    # X inner product <f, g> = <(-Lap + 2 E0) f, g>; only the overlap moves
    Lp = -grid.laplacian(p) + 2.0 * E0 * p
    Lu = -grid.laplacian(u) + 2.0 * E0 * u
    npsi = grid.inner(p, Lp)
    nu = grid.inner(u, Lu)
    best = np.inf
    for idx in np.ndindex(*grid.n):
        ip = np.vdot(Lp, np.roll(u, idx, axis=(0, 1, 2))) * grid.cell_volume
        best = min(best, npsi + nu - 2.0 * abs(ip))
    return float(np.sqrt(max(best, 0.0)))


def stationarity_error(psi: Field, u: Field) -> float:
    """``|| |psi| - u || / ||u||`` in L2."""
    a = np.abs(psi.values) - np.asarray(u.values, dtype=float)
    grid = u.grid
    return float(np.sqrt(grid.inner(a, a) / grid.inner(u.values, u.values)))


# --- evolution ---------------------------------------------------------------------

class _Stepper:
    """Owns the field buffer; ``data`` is psi between substeps."""

    def __init__(self, ecfg: EvolutionConfig):
        self.grid = grid = ecfg.grid
        self.cfg = cfg = ecfg.cfg
        self.dt = ecfg.dt
        self.fft = _fft.InPlaceMultiplier(grid.n, measure=ecfg.measure_plans)
        self.data = self.fft.data
        self.kin = np.exp(-0.5j * ecfg.dt * grid.k2) / grid.size
        self.ev = Evaluator(grid, cfg)
        m = cfg.model
        self.static = np.ascontiguousarray(
            np.broadcast_to(self.ev.V + m.E0 if self.ev.has_V else m.E0, grid.shape),
            dtype=float)
        # 1/2 N'(a)/a = cp a^ep + cm a^em
        self.terms = (-0.5 * m.mu * m.p, float(m.p - 2), 0.5 * m.nu * m.m, float(m.m - 2))
        self.dens = np.empty(grid.shape)
        self.phi = np.zeros(grid.shape)
        self.single = ecfg.single_precision_poisson
        self.measure = ecfg.measure_plans

    def refresh(self):
        """Recompute phi from the current |psi|^2."""
        if self.cfg.q:
            _kernels.density(self.data, self.dens)
            self.dens *= self.cfg.q
            self.phi = poisson.box_solver(self.grid).potential(self.dens, single=self.single,
                                                                 measure=self.measure)

    def rotate(self, frac):
        cp, ep, cm, em = self.terms
        _kernels.rotate(self.data, self.static, self.phi, float(self.cfg.q),
                        cp, ep, cm, em, frac * self.dt)

    def kinetic(self):
        self.fft.apply(self.kin)


def evolve(psi0: Field, ecfg: EvolutionConfig, record=None, lattice_steps=None):
    """Integrate to ``T``; returns ``(trace, final Field)``.

    Samples are taken every ``stride`` steps and at the final time.  When a
    soliton ``record`` is given, the Liapunov value and the orbit distance
    are recorded too (NaN otherwise).
    """
    grid = ecfg.grid
    if psi0.grid != grid:
        raise ValueError("initial field is not on the evolution grid")
    psi = np.array(psi0.values, dtype=complex)
    if ecfg.cfg.q:
        frac = poisson.boundary_fraction(grid, np.abs(psi) ** 2)
        if frac > poisson.LOCALIZATION_LIMIT:
            raise ValueError(f"initial data not localized ({frac:.2e} of the charge "
                             "near the box boundary)")
    st = _Stepper(ecfg)
    trace = EvolutionTrace()
    ref = psi.copy()
    max0 = float(np.max(np.abs(psi)))
    limit = ecfg.blowup_factor * max0 if max0 > 0 else np.inf
    prev_phase = [0.0, 0.0]

    def sample(t, psi):
        e, c = _conserved(grid, st.ev, psi)
        trace.t.append(t)
        trace.E.append(e)
        trace.C.append(c)
        if record is not None:
            trace.liapunov.append((e - record.e) ** 2 + (c - record.c) ** 2)
            d, top = _orbit_parts(Field(grid, psi), record, ecfg.cfg.model.E0, lattice_steps)
            trace.orbit_distance.append(d)
            trace.orbit_ceiling.append(top)
        else:
            trace.liapunov.append(float("nan"))
            trace.orbit_distance.append(float("nan"))
            trace.orbit_ceiling.append(float("nan"))
        trace.max_abs_psi.append(float(np.max(np.abs(psi))))
        ov = np.vdot(ref, psi)
        ang = float(np.angle(ov)) if ov != 0 else 0.0
        d = (ang - prev_phase[0] + np.pi) % (2 * np.pi) - np.pi
        prev_phase[1] += d
        prev_phase[0] = ang
        trace.phase.append(prev_phase[1])

    sample(0.0, psi)
    n = ecfg.steps
    if n == 0:
        return trace, Field(grid, psi)
    st.data[...] = psi
    st.refresh()
    st.rotate(0.5)
    for k in range(1, n + 1):
        st.kinetic()
        st.refresh()
        if k % ecfg.stride == 0 or k == n:
            st.rotate(0.5)
            sample(k * ecfg.dt, st.data)
            if trace.max_abs_psi[-1] > limit or not np.isfinite(trace.max_abs_psi[-1]):
                trace.aborted = True
                raise EvolutionAborted(
                    f"max|psi| exceeded {ecfg.blowup_factor:g} x initial at t={k * ecfg.dt:g}",
                    trace)
            if k < n:
                st.rotate(0.5)
        else:
            st.rotate(1.0)
    psi = st.data.copy()
    return trace, Field(grid, psi)


# --- stability experiment ------------------------------------------------------------

def band_limited_noise(grid, seed, k_cut_fraction=0.25):
    """Seeded real noise with ``|k| <= k_cut_fraction * k_max``, max |.| = 1."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(grid.shape)
    k2 = grid.k2
    mask = k2 <= (k_cut_fraction**2) * float(np.max(k2))
    noise = np.real(np.fft.ifftn(np.fft.fftn(white) * mask))
    return noise / np.max(np.abs(noise))


def perturbed(record, eta, seed=0):
    """``u (1 + eta noise)`` rescaled to the soliton's charge, as complex."""
    grid = record.u.grid
    u = np.asarray(record.u.values, dtype=float)
    psi = u * (1.0 + eta * band_limited_noise(grid, seed)) if eta else u.copy()
    psi *= np.sqrt(record.c / grid.integrate(psi * psi))
    return Field(grid, psi.astype(complex))


@dataclass
class StabilityVerdict:
    stable: bool
    verdict: str
    max_liapunov: float
    max_distance: float
    liapunov_threshold: float
    distance_threshold: float
    control_dispersed: bool | None = None
    control_verdict: str | None = None
    control_final_distance: float | None = None  # normalized, 1 = orthogonal
    trace: EvolutionTrace | None = field(default=None, repr=False)
    control_trace: EvolutionTrace | None = field(default=None, repr=False)

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if not k.endswith("trace")}


def dispersal_check(trace, transient, saturation=0.95, floor=0.9, tol=1e-9):
    """Dispersal test on the normalized distance ``d / sqrt(|psi|^2 + |u|^2)``.

    After ``transient`` the normalized distance must grow monotonically
    (up to ``tol``) until it first exceeds ``saturation``, i.e. until the
    wave is nearly orthogonal to every translate of the soliton.  On a
    periodic box the dispersed wave wraps around, so beyond that point only
    ``floor`` is required.  Returns ``(passed, final normalized distance)``.
    """
    t = np.asarray(trace.t)
    x = np.asarray(trace.orbit_distance) / np.asarray(trace.orbit_ceiling)
    x = x[t >= transient]
    if len(x) < 2:
        return False, float(x[-1]) if len(x) else 0.0
    hit = np.nonzero(x >= saturation)[0]
    rise = x[: hit[0] + 1] if len(hit) else x
    monotone = bool(np.all(np.diff(rise) >= -tol))
    grew = len(hit) > 0 or rise[-1] > rise[0]
    held = bool(np.all(x[hit[0]:] >= floor)) if len(hit) else True
    return monotone and grew and held, float(x[-1])


def stability_experiment(record, eta, ecfg: EvolutionConfig, seed=0, factor=10.0,
                         control=True, transient=0.1, lattice_steps=None):
    """Perturb, evolve and compare the diagnostics with their initial values.

    Small initial values are floored so that unperturbed data is judged
    against integrator drift rather than rounding: the Liapunov value at
    ``(1e-6)^2 (e^2 + c^2)`` (a relative energy error of 1e-6) and the
    distance at ``1e-3`` times the soliton norm (the stationarity
    tolerance).  The control run evolves the same
    data with the focusing term reversed and passes when the orbit distance
    grows monotonically after ``transient * T``.
    """
    if not record.Lambda < record.E0:
        raise ValueError("soliton is not hylomorphic (Lambda >= E0)")
    psi0 = perturbed(record, eta, seed)
    trace, _ = evolve(psi0, ecfg, record, lattice_steps)
    unorm = orbit_distance(Field(record.u.grid, np.zeros(record.u.grid.shape, complex)), record)
    lia_floor = 1e-12 * (record.e**2 + record.c**2)
    dist_floor = 1e-3 * unorm
    lia_thr = factor * max(trace.liapunov[0], lia_floor)
    dist_thr = factor * max(trace.orbit_distance[0], dist_floor)
    max_l = float(np.max(trace.liapunov))
    max_d = float(np.max(trace.orbit_distance))
    stable = max_l <= lia_thr and max_d <= dist_thr
    out = StabilityVerdict(stable, "stable-at-desk-scale" if stable else "unstable",
                           max_l, max_d, lia_thr, dist_thr, trace=trace)
    if control:
        flipped = ecfg.cfg.with_model(ecfg.cfg.model.flipped())
        cfg_c = replace(ecfg, cfg=flipped)
        ctrace, _ = evolve(psi0, cfg_c, record, lattice_steps)
        grows, ratio = dispersal_check(ctrace, transient * ecfg.T)
        out.control_dispersed = grows
        out.control_verdict = "dispersal" if grows else "no-dispersal"
        out.control_final_distance = ratio
        out.control_trace = ctrace
    return out


def translated(record, steps):
    """The soliton moved by ``steps`` grid points (for invariance checks)."""
    return Field(record.u.grid, translate_array(np.asarray(record.u.values), steps))
