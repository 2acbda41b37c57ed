"""Closed-form references that never call the code under test.

Derivations (kept here so the frozen formulas can be re-checked by hand):

Free particle. With ``k = sqrt(lam)`` the solutions with ``(u', u)(0)`` equal
to ``(1, 0)`` and ``(0, 1)`` are ``sin(kt)/k`` and ``cos(kt)``, hence

    M(lam) = [[cos k, -k sin k], [sin k / k, cos k]].

All four entries are entire functions of ``lam``; near zero the series
``cos k = sum (-lam)^j/(2j)!`` and ``sin k/k = sum (-lam)^j/(2j+1)!`` are used.

Kronig-Penney lattice ``sum_n alpha delta(t - n a)``. In ``(u', u)``
coordinates one cell is free propagation ``F(a)`` followed by the jump
``u'(a+) = u'(a-) + alpha u(a)``, i.e. ``J F(a)`` with ``J = [[1, alpha],
[0, 1]]``. Its trace is

    tr J F(a) = 2 cos(ka) + alpha sin(ka) / k,

which tends to ``2 + alpha a`` as ``lam -> 0``. The quasi-derivative path uses
the sawtooth ``sigma`` equal to ``alpha/2 - alpha t/a`` on ``[0, a)``, with
``sigma(0+) = alpha/2``. Since ``u^[1] = u' - sigma u``, the change of
coordinates at the cell start is ``P = [[1, sigma(0+)], [0, 1]]`` and the
quasi-derivative monodromy is ``P^{-1} J F(a) P``.
"""

from __future__ import annotations

import cmath
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .pw_calculus import DistributionW1, TestFunction

_SERIES_RADIUS = 1e-4


@dataclass(frozen=True)
class KPModel:
    alpha: float = 1.0
    a: float = 1.0


def _cos_sinc(lam: complex) -> tuple[complex, complex]:
    """``(cos sqrt(lam), sin sqrt(lam) / sqrt(lam))``."""
    if abs(lam) < _SERIES_RADIUS:
        c = s = 0.0
        term_c, term_s = 1.0, 1.0
        for j in range(8):
            c += term_c
            s += term_s
            term_c *= -lam / ((2 * j + 1) * (2 * j + 2))
            term_s *= -lam / ((2 * j + 2) * (2 * j + 3))
        return complex(c), complex(s)
    k = cmath.sqrt(lam)
    return cmath.cos(k), cmath.sin(k) / k


def free_propagator(lam: complex, length: float = 1.0) -> np.ndarray:
    """Free propagation over ``length`` in ``(u', u)`` coordinates."""
    c, s = _cos_sinc(complex(lam) * length * length)
    return np.array([[c, -lam * length * s], [length * s, c]], dtype=complex)


def free_monodromy(lam: complex) -> np.ndarray:
    return free_propagator(lam, 1.0)


def kp_transfer_matrix(m: KPModel, lam: complex) -> np.ndarray:
    """One-cell transfer matrix ``J F(a)`` in ``(u', u)`` coordinates."""
    J = np.array([[1.0, m.alpha], [0.0, 1.0]], dtype=complex)
    return J @ free_propagator(lam, m.a)


def kp_quasi_monodromy(m: KPModel, lam: complex) -> np.ndarray:
    """``kp_transfer_matrix`` conjugated into ``(u^[1], u)`` coordinates."""
    P = np.array([[1.0, m.alpha / 2.0], [0.0, 1.0]], dtype=complex)
    Pinv = np.array([[1.0, -m.alpha / 2.0], [0.0, 1.0]], dtype=complex)
    return Pinv @ kp_transfer_matrix(m, lam) @ P


def kp_trace(m: KPModel, lam: float) -> float:
    """``2 cos(ka) + alpha sin(ka)/k`` written with the entire branch."""
    c, s = _cos_sinc(complex(lam) * m.a * m.a)
    return float((2.0 * c + m.alpha * m.a * s).real)


def kp_band_edges(m: KPModel, lam_lo: float, lam_hi: float, n_grid: int = 20000) -> list[float]:
    """Roots of ``|kp_trace| = 2`` in ``[lam_lo, lam_hi]`` by dense scan plus Brent.

    Tangential touches of ``+-2`` (closed gaps) are not crossings and are
    reported separately by the caller; for ``alpha != 0`` they do not occur.
    """
    grid = np.linspace(lam_lo, lam_hi, n_grid + 1)
    roots = []
    for target in (2.0, -2.0):
        f = np.array([kp_trace(m, x) - target for x in grid])
        for i in np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]:
            roots.append(brentq(lambda x: kp_trace(m, x) - target, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15))
        roots.extend(grid[np.nonzero(f == 0.0)[0]])
    return sorted(roots)


def quad_pair(f: DistributionW1, psi: TestFunction, tol: float = 1e-12) -> float:
    """Adaptive-quadrature value of ``<f, psi>`` (independent of exact integration)."""
    a, b = psi.support
    if b <= a:
        return 0.0
    dpsi = psi.derivative()
    pts = sorted(set(np.concatenate([
        psi.underlying.edges,
        f.g.unroll(a, b).edges if f.is_periodic else f.g.edges,
        f.h.unroll(a, b).edges if f.is_periodic else f.h.edges,
    ])))
    pts = [x for x in pts if a <= x <= b]
    pts = sorted(set([a] + pts + [b]))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0:
            continue
        mid_shift = 1e-15 * (1 + abs(lo))
        for fun in (lambda t: -f.g.evaluate(t) * dpsi.evaluate(t), lambda t: f.h.evaluate(t) * psi(t)):
            with warnings.catch_warnings():
                # roundoff near the requested tolerance is judged by the check below
                warnings.simplefilter("ignore", IntegrationWarning)
                val, err = quad(fun, lo + mid_shift, hi - mid_shift, epsabs=tol * 1e-2, epsrel=tol, limit=200)
            if err > max(tol, 1e-9 * abs(val)):
                raise RuntimeError(f"quadrature tolerance not reached on [{lo}, {hi}]: err={err:.2e}")
            total += val
    for x, c in f.atoms_in(a, b):
        total += c * float(psi(x))
    return float(total)
