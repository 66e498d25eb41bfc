"""Fused elementwise loops for the split-step integrator.

The potential step needs ``|psi|^2``, the local potential and a phase
rotation on every node.  Done with numpy each is a separate pass over the
array; compiled with numba they become two passes.  A numpy fallback keeps
the package usable without numba.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _power(a, e):
    if e == 1.0:
        return a
    if e == 2.0:
        return a * a
    if e == 0.0:
        return 1.0
    return a**e


def _density_py(psi, out):
    np.multiply(psi.real, psi.real, out=out)
    out += psi.imag * psi.imag


def _rotate_py(psi, static, phi, q, cp, ep, cm, em, angle):
    """psi *= exp(-i angle (static + cp a^ep + cm a^em + q phi)), a = |psi|."""
    amp = np.abs(psi)
    pot = static + q * phi
    if cp:
        pot = pot + cp * amp**ep
    if cm:
        pot = pot + cm * amp**em
    ang = angle * pot
    psi *= np.cos(ang) - 1j * np.sin(ang)


if njit is not None:
    _power_nb = njit(cache=True, inline="always")(_power)

    @njit(cache=True)
    def _density_nb(psi, out):
        p = psi.ravel()
        o = out.ravel()
        for i in range(p.size):
            z = p[i]
            o[i] = z.real * z.real + z.imag * z.imag

    @njit(cache=True, fastmath=True)
    def _rotate_nb(psi, static, phi, q, cp, ep, cm, em, angle):
        p = psi.ravel()
        st = static.ravel()
        ph = phi.ravel()
        for i in range(p.size):
            z = p[i]
            a = np.sqrt(z.real * z.real + z.imag * z.imag)
            pot = st[i] + q * ph[i]
            if cp != 0.0:
                pot += cp * _power_nb(a, ep)
            if cm != 0.0:
                pot += cm * _power_nb(a, em)
            t = angle * pot
            c = np.cos(t)
            s = np.sin(t)
            p[i] = complex(z.real * c + z.imag * s, z.imag * c - z.real * s)

    density = _density_nb
    rotate = _rotate_nb
else:  # pragma: no cover
    density = _density_py
    rotate = _rotate_py


def have_numba():
    return njit is not None
