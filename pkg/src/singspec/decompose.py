"""Window-by-window decomposition ``f = sigma' + tau``.

Each window ``n`` localizes ``f`` with the bump ``phi_n``, removes the mean
``a_n`` as a step on ``[n - 1/2, n + 1/2)`` and integrates what is left; the
result is supported in ``[n - 1, n + 1]``. Summing the windows gives ``sigma``
and the steps give ``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pw_calculus import DistributionW1, PiecewiseFunction, sup_abs

SUPPORT_TOL = 1e-10

# phi in global coordinates on [-1, -1/2), [-1/2, 1/2), [1/2, 1]
_PHI_BREAKS = (-1.0, -0.5, 0.5, 1.0)
_PHI_POLYS = ((2.0, 4.0, 2.0), (1.0, 0.0, -2.0), (2.0, -4.0, 2.0))


class DecompositionError(RuntimeError):
    """Internal consistency failure of the window construction."""


def bump() -> PiecewiseFunction:
    """The quadratic bump ``phi`` supported on ``[-1, 1]``."""
    return PiecewiseFunction.from_global(_PHI_BREAKS, _PHI_POLYS)


_PHI = bump()


def bump_phi(t):
    return _PHI.evaluate(t)


def bump_n(n: int) -> PiecewiseFunction:
    return _PHI.shift(float(n))


@dataclass(frozen=True)
class WindowPiece:
    n: int
    a_n: float
    sigma_n: PiecewiseFunction


@dataclass(frozen=True)
class SigmaTau:
    sigma: PiecewiseFunction
    tau: PiecewiseFunction
    provenance: tuple[tuple[int, float], ...] = field(default=())

    def as_distribution(self) -> DistributionW1:
        period = self.sigma.period
        return DistributionW1(g=self.sigma, h=self.tau, period=period)


def localize(f: DistributionW1, n: int) -> DistributionW1:
    """``f * phi_n`` written again as ``g' + h + atoms``.

    Uses ``(g phi)' - g phi' + h phi`` for the regular parts and
    ``c_k phi_n(x_k)`` for the atoms.
    """
    lo, hi = n - 1.0, n + 1.0
    phi = bump_n(n)
    g = f.g.unroll(lo, hi) if f.is_periodic else f.g.restrict(lo, hi)
    h = f.h.unroll(lo, hi) if f.is_periodic else f.h.restrict(lo, hi)
    new_g = g * phi
    new_h = h * phi - g * phi.derivative()
    atoms = []
    for x, c in f.atoms_in(lo, hi):
        w = c * float(phi.evaluate(x))
        if w != 0.0:
            atoms.append((x, w))
    return DistributionW1(new_g, new_h, tuple(atoms))


def window_coefficient(f: DistributionW1, n: int) -> float:
    """``a_n = <f phi_n, 1>``."""
    loc = localize(f, n)
    # the g' part pairs to zero against a plateau
    return loc.h.integral() + sum(c for _, c in loc.atoms)


def local_sigma(f: DistributionW1, n: int) -> WindowPiece:
    """Antiderivative of ``f phi_n - a_n chi_[n-1/2, n+1/2)`` supported in ``[n-1, n+1]``."""
    loc = localize(f, n)
    a_n = loc.h.integral() + sum(c for _, c in loc.atoms)
    h = loc.h - PiecewiseFunction.indicator(n - 0.5, n + 0.5, a_n)
    sigma = loc.g + h.antiderivative()
    for x, c in loc.atoms:
        sigma = sigma + PiecewiseFunction.heaviside(x, c)
    scale = 1.0 + abs(a_n) + sup_abs(sigma.restrict(n - 1.0, n + 1.0))
    end = sigma.evaluate(n + 1.0)
    if abs(end) > SUPPORT_TOL * scale or abs(sigma.left_limit(n - 1.0)) > SUPPORT_TOL * scale:
        raise DecompositionError(
            f"window {n}: local antiderivative does not vanish at the window ends "
            f"(value {end:.3e} at n+1); the pairing and the mean disagree"
        )
    sigma = sigma.restrict(n - 1.0, n + 1.0).simplify()
    return WindowPiece(n, float(a_n), sigma)


def decompose(f: DistributionW1, n_min: int, n_max: int) -> SigmaTau:
    """Decompose an aperiodic ``f`` supported in ``[n_min, n_max]``."""
    if f.is_periodic:
        raise ValueError("periodic input: use decompose_periodic")
    if n_min > n_max:
        raise ValueError("empty window range")
    hull = f.support_hull()
    if hull is not None and (hull[0] < n_min or hull[1] > n_max):
        lost = []
        for lo, hi in ((hull[0], n_min), (n_max, hull[1])):
            if hi > lo:
                lost.append(f"[{lo:g}, {hi:g}]")
        raise ValueError(
            f"support [{hull[0]:g}, {hull[1]:g}] not covered by windows "
            f"{n_min}..{n_max}; uncovered: {', '.join(lost)}"
        )
    sigma = PiecewiseFunction.zero()
    tau = PiecewiseFunction.zero()
    prov = []
    for n in range(n_min, n_max + 1):
        piece = local_sigma(f, n)
        prov.append((n, piece.a_n))
        sigma = sigma + piece.sigma_n
        if piece.a_n != 0.0:
            tau = tau + PiecewiseFunction.indicator(n - 0.5, n + 0.5, piece.a_n)
    return SigmaTau(sigma.simplify(), tau.simplify(), tuple(prov))


def decompose_periodic(f: DistributionW1, T: float | None = None) -> SigmaTau:
    """Periodic ``sigma`` (zero mean over a cell) and constant ``tau``.

    The period-``T`` case is reduced to period one via ``f_hat(t) = f(T t)``
    and ``sigma(t) = T sigma_hat(t / T)``.
    """
    if not f.is_periodic:
        raise ValueError("decompose_periodic needs a periodic distribution")
    T = f.period if T is None else float(T)
    if abs(T - f.period) > 1e-12 * T:
        raise ValueError(f"declared period {T} differs from the distribution's period {f.period}")
    fh = f.rescale(T) if T != 1.0 else f
    piece = local_sigma(fh, 0)
    s0 = piece.sigma_n
    cell = (s0 + s0.shift(1.0)).restrict(0.0, 1.0)
    sig = cell.periodize(0.0, 1.0)
    sig = sig - sig.cell_integral()
    tau = PiecewiseFunction.constant(piece.a_n, period=1.0)
    if T != 1.0:
        sig = sig.rescale(1.0 / T).scale(T)
        tau = tau.rescale(1.0 / T)
    return SigmaTau(sig.simplify(1e-14), tau.simplify(), ((0, piece.a_n),))


def partition_of_unity_defect(n_lo: int = -2, n_hi: int = 3) -> float:
    """``max |sum_n phi_n - 1|`` on ``[0, 1]`` computed on the exact pieces."""
    total = PiecewiseFunction.zero()
    for n in range(n_lo, n_hi + 1):
        total = total + bump_n(n)
    diff = (total - 1.0).restrict(0.0, 1.0)
    return float(np.max(np.abs(diff.coef))) if diff.coef.size else 0.0


def tau_bound_ratio(st: SigmaTau, w_norm: float) -> float:
    """``sup|tau| / (3 w_norm)``; at most one per the structure bound."""
    if w_norm == 0.0:
        return 0.0 if sup_abs(st.tau) == 0.0 else math.inf
    return sup_abs(st.tau) / (3.0 * w_norm)
