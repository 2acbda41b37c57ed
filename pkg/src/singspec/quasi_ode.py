"""Quasi-derivative first-order system and Pruefer angle.

A solution of ``l(u) = lam u`` is carried as the pair ``(u^[1], u)`` with
``u^[1] = u' - sigma u``; the pair solves

    d/dt (u^[1], u) = [[-sigma, -sigma^2 + tau - lam], [1, sigma]] (u^[1], u)

and stays continuous where ``sigma`` jumps. Integration restarts at every
breakpoint of ``sigma`` and ``tau`` so the adaptive steps never straddle one.
All routines accept a batch of spectral parameters and integrate them in a
single solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .pw_calculus import PiecewiseFunction, _merge_points

DEFAULT_TOL = 1e-10
MIN_STEP = 1e-14


class IntegrationError(RuntimeError):
    pass


class DirichletEigenvalueError(ValueError):
    pass


@dataclass(frozen=True)
class Coefficients:
    sigma: PiecewiseFunction
    tau: PiecewiseFunction
    lam: complex = 0.0

    def with_lambda(self, lam) -> "Coefficients":
        return replace(self, lam=lam)

    @classmethod
    def free(cls, lam=0.0) -> "Coefficients":
        z = PiecewiseFunction.zero(1.0)
        return cls(z, z, lam)


@dataclass(frozen=True)
class QuasiState:
    u1q: complex
    u: complex


@dataclass(frozen=True)
class Monodromy:
    """``M = [[v1^[1], v2^[1]], [v1, v2]]`` at the end of the cell."""

    m11: complex
    m12: complex
    m21: complex
    m22: complex

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def trace(self) -> complex:
        return self.m11 + self.m22

    @property
    def det(self) -> complex:
        return self.m11 * self.m22 - self.m12 * self.m21


@dataclass(frozen=True)
class PrueferTrajectory:
    theta0: float
    theta1: float
    t: np.ndarray | None = None
    theta: np.ndarray | None = None


# ---------------------------------------------------------------------------


def segments(sigma: PiecewiseFunction, tau: PiecewiseFunction, t0: float, t1: float):
    """Breakpoint-free pieces of ``[t0, t1]`` with the local coefficient rows."""
    s = sigma.unroll(t0, t1) if sigma.is_periodic else sigma.restrict(t0, t1)
    q = tau.unroll(t0, t1) if tau.is_periodic else tau.restrict(t0, t1)
    grid = _merge_points([t0, t1], s.edges[(s.edges > t0) & (s.edges < t1)],
                         q.edges[(q.edges > t0) & (q.edges < t1)])
    srows, _, _ = s._on_grid(grid)
    qrows, _, _ = q._on_grid(grid)
    return [(grid[i], grid[i + 1], srows[i], qrows[i]) for i in range(grid.size - 1)]


def _polyval(row: np.ndarray, s: float) -> float:
    v = 0.0
    for c in row[::-1]:
        v = v * s + c
    return v


def _solve(rhs, a, b, y0, tol, dense):
    sol = solve_ivp(rhs, (a, b), y0, method="DOP853", rtol=tol, atol=tol * 1e-3,
                    dense_output=dense, first_step=None)
    if sol.status != 0:
        raise IntegrationError(f"integration failed on [{a:.6g}, {b:.6g}]: {sol.message}")
    if sol.t.size > 1 and np.min(np.diff(sol.t)) < MIN_STEP:
        raise IntegrationError(f"step underflow below {MIN_STEP:g} on [{a:.6g}, {b:.6g}]")
    return sol


def propagate(sigma, tau, lams, t0, t1, X0, tol=DEFAULT_TOL, dense=False):
    """Advance ``X0`` (shape ``(2, k, B)``) from ``t0`` to ``t1`` for ``B`` lambdas.

    Returns the final state and, with ``dense=True``, the list of
    ``(a, b, OdeSolution)`` per segment.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    X = np.asarray(X0, dtype=complex)
    shape = X.shape
    pieces = []
    for a, b, srow, qrow in segments(sigma, tau, t0, t1):

        def rhs(t, y, a=a, srow=srow, qrow=qrow):
            s = _polyval(srow, t - a)
            q = _polyval(qrow, t - a)
            Y = y.reshape(shape)
            out = np.empty_like(Y)
            out[0] = -s * Y[0] + (q - s * s - lams) * Y[1]
            out[1] = Y[0] + s * Y[1]
            return out.ravel()

        sol = _solve(rhs, a, b, X.ravel(), tol, dense)
        X = sol.y[:, -1].reshape(shape)
        if dense:
            pieces.append((a, b, sol.sol))
    return (X, pieces) if dense else X


def integrate_system(c: Coefficients, t0: float, t1: float, x0: QuasiState,
                     tol: float = DEFAULT_TOL) -> QuasiState:
    X0 = np.array([x0.u1q, x0.u], dtype=complex).reshape(2, 1, 1)
    X = propagate(c.sigma, c.tau, [c.lam], t0, t1, X0, tol)
    return QuasiState(complex(X[0, 0, 0]), complex(X[1, 0, 0]))


def monodromy_many(sigma, tau, lams, tol=DEFAULT_TOL) -> np.ndarray:
    """Monodromy matrices over ``[0, 1]``; shape ``(B, 2, 2)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    X0 = np.zeros((2, 2, lams.size), dtype=complex)
    X0[0, 0] = 1.0
    X0[1, 1] = 1.0
    X = propagate(sigma, tau, lams, 0.0, 1.0, X0, tol)
    return np.moveaxis(X, 2, 0)


def monodromy(c: Coefficients, tol: float = DEFAULT_TOL) -> Monodromy:
    M = monodromy_many(c.sigma, c.tau, [c.lam], tol)[0]
    return Monodromy(complex(M[0, 0]), complex(M[0, 1]), complex(M[1, 0]), complex(M[1, 1]))


# ---------------------------------------------------------------------------


class DenseSolution:
    """Dense trajectory of the fundamental matrix over ``[0, 1]``."""

    def __init__(self, pieces):
        self._a = np.array([p[0] for p in pieces])
        self._b = np.array([p[1] for p in pieces])
        self._sols = [p[2] for p in pieces]

    def __call__(self, t) -> np.ndarray:
        """Fundamental matrix at ``t``; shape ``(len(t), 2, 2)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self._a, t, side="right") - 1, 0, len(self._sols) - 1)
        out = np.empty((t.size, 2, 2), dtype=complex)
        for i in np.unique(idx):
            sel = idx == i
            y = self._sols[i](t[sel])  # (4, m)
            out[sel] = y.T.reshape(-1, 2, 2)
        return out


def fundamental_dense(c: Coefficients, tol: float = DEFAULT_TOL) -> DenseSolution:
    X0 = np.zeros((2, 2, 1), dtype=complex)
    X0[0, 0] = 1.0
    X0[1, 1] = 1.0
    _, pieces = propagate(c.sigma, c.tau, [c.lam], 0.0, 1.0, X0, tol, dense=True)
    return DenseSolution(pieces)


@dataclass(frozen=True)
class Solution:
    """A solution of ``l(u) = lam u`` as a combination of the fundamental pair."""

    coef: np.ndarray  # (x1, x2): u = x1 v1 + x2 v2
    fundamental: DenseSolution

    def quasi(self, t) -> np.ndarray:
        M = self.fundamental(t)
        return M[:, 0, 0] * self.coef[0] + M[:, 0, 1] * self.coef[1]

    def value(self, t) -> np.ndarray:
        M = self.fundamental(t)
        return M[:, 1, 0] * self.coef[0] + M[:, 1, 1] * self.coef[1]


@dataclass(frozen=True)
class DirichletPair:
    u1: Solution
    u2: Solution
    u1_at_1: complex
    u2_at_0: complex
    u1q_at_0: complex
    u2q_at_1: complex
    u1q_at_1: complex
    u2q_at_0: complex

    def wronskian(self, t) -> np.ndarray:
        return self.u1.value(t) * self.u2.quasi(t) - self.u1.quasi(t) * self.u2.value(t)


DIRICHLET_TOL = 1e-10


def dirichlet_solutions(c: Coefficients, tol: float = DEFAULT_TOL) -> DirichletPair:
    """``u1(0) = 0``, ``u2(1) = 0``, Wronskian ``u1 u2^[1] - u1^[1] u2 = 1``."""
    F = fundamental_dense(c, tol)
    M = F(1.0)[0]
    m11, m12, m21, m22 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    if abs(m21) < DIRICHLET_TOL:
        raise DirichletEigenvalueError(
            f"lambda={c.lam} is (numerically) a Dirichlet eigenvalue of the cell: |u1(1)| = {abs(m21):.3e}"
        )
    # u2 = (m22/m21) v1 - v2 vanishes at 1 and gives W = 1
    x = np.array([m22 / m21, -1.0], dtype=complex)
    u1 = Solution(np.array([1.0, 0.0], dtype=complex), F)
    u2 = Solution(x, F)
    return DirichletPair(
        u1=u1, u2=u2,
        u1_at_1=complex(m21), u2_at_0=complex(-1.0),
        u1q_at_0=complex(1.0), u2q_at_1=complex(x[0] * m11 - m12),
        u1q_at_1=complex(m11), u2q_at_0=complex(x[0]),
    )


# ---------------------------------------------------------------------------


def pruefer_many(sigma, tau, lams, theta0=0.0, tol=DEFAULT_TOL, t1=1.0) -> np.ndarray:
    """``theta(t1, lam)`` for a batch of real lambdas."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    th = np.full(lams.size, float(theta0))
    for a, b, srow, qrow in segments(sigma, tau, 0.0, t1):

        def rhs(t, y, a=a, srow=srow, qrow=qrow):
            s = _polyval(srow, t - a)
            q = _polyval(qrow, t - a)
            sn, cs = np.sin(y), np.cos(y)
            return (lams - q) * sn * sn + (cs + s * sn) ** 2

        th = _solve(rhs, a, b, th, tol, False).y[:, -1]
    return th


def pruefer_advance(c: Coefficients, theta0: float, tol: float = DEFAULT_TOL,
                    samples: int = 0) -> PrueferTrajectory:
    """Integrate ``theta' = (lam - tau) sin^2 + (cos + sigma sin)^2`` over ``[0, 1]``."""
    lam = complex(c.lam)
    if lam.imag != 0.0:
        raise ValueError("Pruefer angle needs real lambda")
    if samples:
        ts = np.linspace(0.0, 1.0, samples + 1)
        vals = [float(theta0)]
        th = float(theta0)
        for t in ts[1:]:
            th = float(_pruefer_between(c.sigma, c.tau, lam.real, th, t - (ts[1] - ts[0]), t, tol))
            vals.append(th)
        return PrueferTrajectory(float(theta0), vals[-1], ts, np.array(vals))
    th1 = float(pruefer_many(c.sigma, c.tau, [lam.real], theta0, tol)[0])
    return PrueferTrajectory(float(theta0), th1)


def _pruefer_between(sigma, tau, lam, th, a0, b0, tol):
    for a, b, srow, qrow in segments(sigma, tau, a0, b0):

        def rhs(t, y, a=a, srow=srow, qrow=qrow):
            s = _polyval(srow, t - a)
            q = _polyval(qrow, t - a)
            sn, cs = np.sin(y), np.cos(y)
            return (lam - q) * sn * sn + (cs + s * sn) ** 2

        th = _solve(rhs, a, b, np.atleast_1d(th), tol, False).y[0, -1]
    return th


def dirichlet_count(sigma, tau, lams, tol=DEFAULT_TOL) -> np.ndarray:
    """Number of Dirichlet eigenvalues of the cell strictly below each lambda.

    Tracks ``v1`` (``theta0 = 0``); ``theta(1)`` crosses ``k pi`` exactly at
    the ``k``-th eigenvalue and increases with lambda.
    """
    th = pruefer_many(sigma, tau, lams, 0.0, tol)
    return np.maximum(np.ceil(th / math.pi - 1e-12) - 1, 0).astype(int)
