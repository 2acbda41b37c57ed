"""Band-gap analysis of the unit-period operator.

Band ``k`` always lies between the Dirichlet eigenvalues ``mu_{k-1}`` and
``mu_k`` of the period cell (``mu_0 = -inf``), and on it the discriminant
``D = tr M(1, lam)`` runs monotonically from ``2 (-1)^{k-1}`` to ``2 (-1)^k``.
The Dirichlet eigenvalues come from Pruefer rotation counts, so every band
edge is found inside a guaranteed bracket, closed gaps included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .galerkin import gamma_bound
from .pw_calculus import PiecewiseFunction
from .quasi_ode import (
    DEFAULT_TOL,
    Coefficients,
    dirichlet_solutions,
    monodromy_many,
    pruefer_many,
    segments,
)

BISECT_TOL = 1e-10
TANGENCY_TOL = 1e-8
PROBE = 1e-6  # relative offset for the two-sided probe at a Dirichlet eigenvalue
THETA_GRID = 64


class BandSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Band:
    k: int
    lo: float
    hi: float
    gap_after: float = math.nan
    closed_gap_after: bool = False


@dataclass(frozen=True)
class DispersionBranch:
    k: int
    samples: tuple[tuple[float, float], ...]

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


@dataclass(frozen=True)
class MonotonicityReport:
    ok: bool
    direction_lower: int  # sign of d lambda / d theta on (0, pi)
    direction_upper: int  # same on (pi, 2 pi)
    violations: tuple[tuple[float, float], ...] = ()


# ---------------------------------------------------------------------------


def discriminant_many(sigma, tau, lams, tol=DEFAULT_TOL) -> np.ndarray:
    M = monodromy_many(sigma, tau, lams, tol)
    return (M[:, 0, 0] + M[:, 1, 1]).real


def discriminant(c: Coefficients, tol: float = DEFAULT_TOL) -> float:
    lam = complex(c.lam)
    if lam.imag != 0.0:
        raise ValueError("discriminant needs real lambda")
    return float(discriminant_many(c.sigma, c.tau, [lam.real], tol)[0])


class _Monodromy:
    """Memoized scalar monodromy evaluations for root polishing."""

    def __init__(self, sigma, tau, tol):
        self.sigma, self.tau, self.tol = sigma, tau, tol
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, lam: float) -> np.ndarray:
        lam = float(lam)
        M = self._cache.get(lam)
        if M is None:
            M = monodromy_many(self.sigma, self.tau, [lam], self.tol)[0].real
            self._cache[lam] = M
        return M

    def D(self, lam: float) -> float:
        M = self(lam)
        return float(M[0, 0] + M[1, 1])

    def u_end(self, lam: float) -> float:
        """``u(1)`` of the solution with ``u(0) = 0``, ``u^[1](0) = 1``."""
        return float(self(lam)[1, 0])


def dirichlet_eigenvalues(sigma, tau, lam_lo: float, lam_hi: float, tol=DEFAULT_TOL,
                          extra: int = 1, max_refine: int = 12, mono: _Monodromy | None = None) -> np.ndarray:
    """Dirichlet eigenvalues of the cell above ``lam_lo`` up to ``lam_hi``, plus ``extra`` more.

    Pruefer rotation counts on a sweep bracket each eigenvalue in its own
    cell; the root is then polished as a sign change of ``u(1)``.
    """
    mono = mono or _Monodromy(sigma, tau, tol)

    def count(x):
        th = pruefer_many(sigma, tau, np.asarray(x, dtype=float), 0.0, tol)
        return np.floor(th / math.pi).astype(int)

    hi = lam_hi
    target = int(count([hi])[0]) + extra
    for _ in range(60):
        if count([hi])[0] >= target:
            break
        hi = hi + max(1.0, abs(hi - lam_lo))
    else:
        raise BandSearchError("could not bracket the Dirichlet eigenvalues")
    grid = np.linspace(lam_lo, hi, 33)
    c = count(grid)
    for _ in range(max_refine):
        bad = np.nonzero(np.diff(c) > 1)[0]
        if bad.size == 0:
            break
        # refine only where the rotation count moved by more than one
        grid = np.sort(np.concatenate([grid, 0.5 * (grid[bad] + grid[bad + 1])]))
        c = count(grid)
    else:
        raise BandSearchError("rotation count still jumps by more than one after refinement")
    mus = []
    for i in np.nonzero(np.diff(c) == 1)[0]:
        mus.append(_root(mono.u_end, grid[i], grid[i + 1], xtol=1e-13))
    return np.array(mus)


def _root(f, a, b, fa=None, fb=None, xtol=BISECT_TOL * 1e-2):
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise BandSearchError(f"root not bracketed on [{a}, {b}] ({fa:.3e}, {fb:.3e})")
    return brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)


def _edge_kind(mono: _Monodromy, mu: float) -> str:
    """Where a Dirichlet eigenvalue sits relative to the band edges.

    ``|D(mu)| >= 2`` always; strictly inside a gap gives ``"gap"``. When
    ``|D(mu)| = 2`` the two sides are probed: both in a band means a closed
    gap, otherwise ``mu`` is the ``"upper"`` edge of the band below it or the
    ``"lower"`` edge of the band above.
    """
    if abs(mono.D(mu)) - 2.0 > TANGENCY_TOL:
        return "gap"
    d = PROBE * max(1.0, abs(mu))
    below = abs(mono.D(mu - d)) <= 2.0 + TANGENCY_TOL
    above = abs(mono.D(mu + d)) <= 2.0 + TANGENCY_TOL
    if below and above:
        return "closed"
    if below:
        return "upper"
    if above:
        return "lower"
    return "gap"


def band_edges(c: Coefficients, lambda_min: float, lambda_max: float,
               tol: float = DEFAULT_TOL) -> list[Band]:
    """Bands of the unit-period operator meeting ``[lambda_min, lambda_max]``.

    Bands are reported in full even when they stick out of the range.
    """
    if not lambda_min < lambda_max:
        raise ValueError("empty lambda range")
    mono = _Monodromy(c.sigma, c.tau, tol)
    floor = min(lambda_min, gamma_bound(c) - 1.0)
    if mono.D(floor) <= 2.0:
        raise BandSearchError(f"lambda={floor} is not below the spectrum")
    if lambda_max < floor:
        return []
    mus = dirichlet_eigenvalues(c.sigma, c.tau, floor, lambda_max, tol, extra=2, mono=mono)
    brackets = [floor] + list(mus)
    kinds = ["gap"] + [_edge_kind(mono, mu) for mu in mus]
    lows, highs = [], []
    for k in range(1, len(brackets)):
        a, b = brackets[k - 1], brackets[k]
        s = 1.0 if k % 2 == 1 else -1.0
        mid = _root(mono.D, a, b)
        da = PROBE * max(1.0, abs(a))
        db = PROBE * max(1.0, abs(b))
        if kinds[k - 1] in ("closed", "lower"):
            lo = a
        else:
            a0 = a + da if kinds[k - 1] == "upper" else a
            lo = _root(lambda x: mono.D(x) - 2 * s, a0, mid)
        if kinds[k] in ("closed", "upper"):
            hi = b
        else:
            b0 = b - db if kinds[k] == "lower" else b
            hi = _root(lambda x: mono.D(x) + 2 * s, mid, b0)
        lows.append(lo)
        highs.append(hi)
        if lo > lambda_max:
            break
    bands = []
    for k in range(len(lows) - 1):
        lo, hi = lows[k], highs[k]
        if lo > lambda_max or hi < lambda_min:
            continue
        closed = kinds[k + 1] == "closed"
        bands.append(Band(k + 1, float(lo), float(hi), 0.0 if closed else float(lows[k + 1] - hi), closed))
    return bands


def dispersion(c: Coefficients, k: int, thetas, band: Band | None = None,
               tol: float = DEFAULT_TOL) -> DispersionBranch:
    """``lambda_k(theta)`` solving ``D(lambda) = 2 cos theta`` inside band ``k``."""
    thetas = np.asarray(thetas, dtype=float)
    if band is None:
        band = _band_k(c, k, tol)
    lams = _solve_in_band(c.sigma, c.tau, band, 2.0 * np.cos(thetas), tol)
    return DispersionBranch(k, tuple(zip(thetas.tolist(), lams.tolist())))


def _band_k(c: Coefficients, k: int, tol: float) -> Band:
    floor = gamma_bound(c) - 1.0
    hi = floor + 1.0
    for _ in range(60):
        bands = band_edges(c, floor, hi, tol)
        if len(bands) >= k:
            return bands[k - 1]
        hi = hi + max(10.0, abs(hi))
    raise BandSearchError(f"band {k} not found")


def _solve_in_band(sigma, tau, band: Band, targets: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized bisection of ``D(lam) = target`` on one band."""
    s = 1.0 if band.k % 2 == 1 else -1.0
    if np.any(np.abs(targets) > 2.0 + 1e-12):
        raise BandSearchError("target outside [-2, 2]: root not bracketed")
    lo = np.full(targets.size, band.lo)
    hi = np.full(targets.size, band.hi)
    width = band.hi - band.lo
    if width <= 0.0:
        return lo
    n_iter = int(math.ceil(math.log2(width / (BISECT_TOL * 1e-1)))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        g = s * (discriminant_many(sigma, tau, mid, tol) - targets)
        right = g > 0.0
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    return 0.5 * (lo + hi)


def theta_eigenvalues_many(c: Coefficients, thetas, lambda_max: float, tol: float = DEFAULT_TOL,
                           bands: list[Band] | None = None) -> list[list[float]]:
    """``theta_eigenvalues`` for many angles, bisecting all of them at once per band."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if bands is None:
        bands = band_edges(c, gamma_bound(c) - 1.0, lambda_max, tol)
    targets = 2.0 * np.cos(thetas)
    per_band = [_solve_in_band(c.sigma, c.tau, b, targets, tol) for b in bands if b.lo <= lambda_max]
    out = []
    for j in range(thetas.size):
        vals: list[float] = []
        for lams in per_band:
            lam = float(lams[j])
            # a closed gap gives the same value from both neighbouring bands
            if lam <= lambda_max and not (vals and abs(lam - vals[-1]) <= 1e-8 * max(1.0, abs(lam))):
                vals.append(lam)
        out.append(sorted(vals))
    return out


def theta_eigenvalues(c: Coefficients, theta: float, lambda_max: float,
                      tol: float = DEFAULT_TOL, bands: list[Band] | None = None) -> list[float]:
    """Eigenvalues of the quasi-periodic cell problem up to ``lambda_max``.

    One per band; values that coincide at a closed gap are reported once.
    """
    return theta_eigenvalues_many(c, [theta], lambda_max, tol, bands)[0]


def verify_monotonicity(branch: DispersionBranch) -> MonotonicityReport:
    """Strict monotonicity of a branch on ``(0, pi)`` and ``(pi, 2 pi)`` separately."""
    th, lam = branch.thetas, branch.lambdas
    order = np.argsort(th)
    th, lam = th[order], lam[order]
    violations = []
    dirs = []
    for lo, hi in ((0.0, math.pi), (math.pi, 2 * math.pi)):
        sel = (th > lo) & (th < hi)
        t, v = th[sel], lam[sel]
        if t.size < 2:
            dirs.append(0)
            continue
        d = np.diff(v)
        sign = int(np.sign(np.sum(np.sign(d)))) or 1
        dirs.append(sign)
        for i in np.nonzero(sign * d <= 0.0)[0]:
            violations.append((float(t[i]), float(t[i + 1])))
    ok = not violations and dirs[0] * dirs[1] <= 0
    return MonotonicityReport(ok, dirs[0], dirs[1], tuple(violations))


# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass
class FiberResolvent:
    """``(S_theta - lam)^{-1} f`` assembled from the Dirichlet resolvent.

    ``w = w_D + alpha1 u1 + alpha2 u2`` with ``w_D`` the Dirichlet part and
    the coefficients fixed by ``w(1) = e^{i theta} w(0)`` and the same for
    the quasi-derivative.
    """

    c: Coefficients
    f: object
    theta: complex
    tol: float = DEFAULT_TOL
    panel: float = 1.0 / 32

    def __post_init__(self):
        self.pair = dirichlet_solutions(self.c, self.tol)
        segs = _segments_01(self.c.sigma, self.c.tau)
        edges = []
        for a, b in segs:
            n = max(1, int(math.ceil((b - a) / self.panel)))
            edges.extend(np.linspace(a, b, n + 1)[:-1])
        edges.append(1.0)
        self._edges = np.array(edges)
        self._I1 = self._cumulative(self.pair.u1.value)   # int_0^{edge} u1 f
        self._I2 = self._cumulative(self.pair.u2.value)
        self.I1 = self._I1[-1]
        self.I2 = self._I2[-1]
        self.alpha1, self.alpha2, self.d_theta = self.alphas(self.theta)

    def _gl(self, g, a, b):
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        x = 0.5 * (b - a)[:, None] * _GL_X[None, :] + 0.5 * (a + b)[:, None]
        vals = (g(x.ravel()) * np.asarray(self.f(x.ravel()))).reshape(x.shape)
        return 0.5 * (b - a) * (vals @ _GL_W)

    def _cumulative(self, g):
        e = self._edges
        return np.concatenate([[0.0], np.cumsum(self._gl(g, e[:-1], e[1:]))])

    def _partial(self, g, cum, t):
        idx = np.clip(np.searchsorted(self._edges, t, side="right") - 1, 0, self._edges.size - 2)
        return cum[idx] + self._gl(g, self._edges[idx], t)

    def alphas(self, theta: complex):
        p = self.pair
        e = np.exp(1j * theta)
        A = np.array([
            [p.u1_at_1, -e * p.u2_at_0],
            [p.u1q_at_1 - e * p.u1q_at_0, p.u2q_at_1 - e * p.u2q_at_0],
        ], dtype=complex)
        d = complex(np.linalg.det(A))
        if abs(d) < 1e-12:
            raise ZeroDivisionError("fiber resolvent singular: d(theta) vanishes")
        # w_D^[1](0) = -u1^[1](0) I2, w_D^[1](1) = -u2^[1](1) I1
        rhs = np.array([0.0, -e * p.u1q_at_0 * self.I2 + p.u2q_at_1 * self.I1], dtype=complex)
        a1, a2 = np.linalg.solve(A, rhs)
        return complex(a1), complex(a2), d

    def _dirichlet_parts(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        p = self.pair
        i1 = self._partial(p.u1.value, self._I1, t)          # int_0^t u1 f
        i2 = self.I2 - self._partial(p.u2.value, self._I2, t)  # int_t^1 u2 f
        return t, i1, i2

    def w(self, t) -> np.ndarray:
        t, i1, i2 = self._dirichlet_parts(t)
        p = self.pair
        u1, u2 = p.u1.value(t), p.u2.value(t)
        return -(u1 * i2 + u2 * i1) + self.alpha1 * u1 + self.alpha2 * u2

    def w_quasi(self, t) -> np.ndarray:
        t, i1, i2 = self._dirichlet_parts(t)
        p = self.pair
        q1, q2 = p.u1.quasi(t), p.u2.quasi(t)
        return -(q1 * i2 + q2 * i1) + self.alpha1 * q1 + self.alpha2 * q2

    def residual(self, t, h: float = 1e-4) -> np.ndarray:
        """``l(w) - lam w - f`` with a central difference for ``(w^[1])'``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        dq = (self.w_quasi(t + h) - self.w_quasi(t - h)) / (2 * h)
        s = self.c.sigma.evaluate(t)
        q = self.c.tau.evaluate(t)
        w, wq = self.w(t), self.w_quasi(t)
        lw = -dq - s * wq - s * s * w + q * w
        return lw - self.c.lam * w - np.asarray(self.f(t))


def _segments_01(sigma, tau):
    return [(a, b) for a, b, _, _ in segments(sigma, tau, 0.0, 1.0)]


def fiber_resolvent(c: Coefficients, theta: float, lam: complex, f, tol: float = DEFAULT_TOL) -> FiberResolvent:
    """Resolvent of the fiber operator applied to the callable ``f``."""
    return FiberResolvent(c.with_lambda(complex(lam)), f, theta, tol)


# ---------------------------------------------------------------------------


def unit_cell(sigma: PiecewiseFunction, tau: PiecewiseFunction):
    """Rescale period-``a`` coefficients to period one.

    Returns ``(sigma1, tau1, a)`` with ``sigma1(s) = a sigma(a s)``,
    ``tau1(s) = a^2 tau(a s)``; spectral values scale as ``lam1 = a^2 lam``.
    """
    a = sigma.period or tau.period or 1.0
    if a == 1.0:
        return sigma, tau, 1.0
    return sigma.rescale(a).scale(a), tau.rescale(a).scale(a * a), a
