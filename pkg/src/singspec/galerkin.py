"""P1 Galerkin realization of the form ``t(u) = |u'|^2 - 2 Re(sigma u', u) + (tau u, u)``.

Hats with zero boundary values on a truncated interval; every element
integral is a polynomial integral, so assembly is exact. The module also
holds the semiboundedness constant, the negative-Sobolev dual-norm estimate,
the triangular mollifier and the resolvent-convergence experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .decompose import SigmaTau, decompose, decompose_periodic, localize
from .pw_calculus import (
    DistributionW1,
    PiecewiseFunction,
    _real_roots,
    diff_rows,
    element_moments,
    norm_L1_unif,
    norm_L2_unif,
)

NODE_TOL = 1e-12
DEFAULT_SEED = 0x5EED
DEFAULT_L = 16.0
DEFAULT_H = 1.0 / 64


class MeshError(ValueError):
    pass


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
            raise MeshError("mesh nodes must be strictly increasing, at least three")
        object.__setattr__(self, "nodes", x)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def dim(self) -> int:
        return self.nodes.size - 2

    @classmethod
    def uniform(cls, a: float, b: float, h: float, extra=()) -> "Mesh":
        n = max(2, int(round((b - a) / h)))
        x = np.linspace(a, b, n + 1)
        extra = [e for e in extra if a < e < b]
        if extra:
            x = np.unique(np.concatenate([x, extra]))
            keep = np.concatenate([[True], np.diff(x) > NODE_TOL * max(1.0, abs(b))])
            x = x[keep]
        return cls(x)

    def check_breakpoints(self, *funcs: PiecewiseFunction) -> None:
        for f in funcs:
            e = f.unroll(self.a, self.b).edges if f.is_periodic else f.edges
            inner = e[(e > self.a + NODE_TOL) & (e < self.b - NODE_TOL)]
            if inner.size == 0:
                continue
            idx = np.clip(np.searchsorted(self.nodes, inner), 1, self.nodes.size - 1)
            dist = np.minimum(np.abs(self.nodes[idx] - inner), np.abs(self.nodes[idx - 1] - inner))
            missing = inner[dist > NODE_TOL * (1.0 + np.abs(inner))]
            if missing.size:
                raise MeshError(f"mesh is missing potential breakpoint t={missing[0]:.17g}")


@dataclass
class FormMatrices:
    """Tridiagonal form matrix ``A`` and mass matrix ``B`` on interior hats."""

    mesh: Mesh
    A: sp.csr_matrix
    B: sp.csr_matrix
    gamma: float

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def banded(self, M: sp.spmatrix) -> np.ndarray:
        """Upper banded storage ``[[0, super], [diag]]`` for the LAPACK routines."""
        ab = np.zeros((2, M.shape[0]))
        ab[0, 1:] = M.diagonal(1)
        ab[1] = M.diagonal()
        return ab

    def shifted(self, c: float) -> "FormMatrices":
        return FormMatrices(self.mesh, (self.A + c * self.B).tocsr(), self.B, self.gamma + c)


def gamma_bound(st) -> float:
    """Lower bound ``-(2 (4 |sigma|_{2,unif})^4 + 16 |tau|_{1,unif}^2 + 6)``.

    Accepts anything with ``sigma`` and ``tau`` attributes.
    """
    s = norm_L2_unif(st.sigma)
    q = norm_L1_unif(st.tau)
    return -(2.0 * (4.0 * s) ** 4 + 16.0 * q * q + 6.0)


def lbound_constants(J: float = 1.0) -> tuple[float, float]:
    """``(a, b)`` with ``-gamma <= (a w + b)^4`` whenever ``|sigma| <= 8 J w`` and ``|tau| <= 3 w``.

    From ``2 (32 J w)^4 + 144 w^2 + 6 <= a^4 w^4 + 6 a^2 b^2 w^2 + b^4``.
    """
    a = 2.0 ** 0.25 * 32.0 * J
    b = max(6.0 ** 0.25, math.sqrt(24.0) / a)
    return a, b


def assemble(st, mesh: Mesh) -> FormMatrices:
    """Element-exact assembly of the form and the mass matrix."""
    sigma, tau = st.sigma, st.tau
    mesh.check_breakpoints(sigma, tau)
    x = mesh.nodes
    h = np.diff(x)
    Ms = element_moments(sigma, x, 1)
    Mt = element_moments(tau, x, 2)
    # integrals of sigma against the two local hats
    p_left = Ms[:, 0] - Ms[:, 1] / h
    p_right = Ms[:, 1] / h
    # tau against products of local hats: (1-s/h)^2, (1-s/h) s/h, (s/h)^2
    q_ll = Mt[:, 0] - 2 * Mt[:, 1] / h + Mt[:, 2] / h**2
    q_lr = Mt[:, 1] / h - Mt[:, 2] / h**2
    q_rr = Mt[:, 2] / h**2
    e_ll = 1.0 / h + 2 * p_left / h + q_ll
    e_rr = 1.0 / h - 2 * p_right / h + q_rr
    e_lr = -1.0 / h + (p_right - p_left) / h + q_lr
    n = x.size
    diag = np.zeros(n)
    diag[:-1] += e_ll
    diag[1:] += e_rr
    mdiag = np.zeros(n)
    mdiag[:-1] += h / 3
    mdiag[1:] += h / 3
    # drop the boundary nodes (Dirichlet truncation)
    A = sp.diags([e_lr[1:-1], diag[1:-1], e_lr[1:-1]], [-1, 0, 1], format="csr")
    B = sp.diags([h[1:-1] / 6, mdiag[1:-1], h[1:-1] / 6], [-1, 0, 1], format="csr")
    return FormMatrices(mesh, A, B, gamma_bound(st))


def eigen(fm: FormMatrices, count: int, dense_limit: int = 800) -> np.ndarray:
    """Lowest ``count`` generalized eigenvalues of ``(A, B)``, ascending."""
    n = fm.dim
    if count > n:
        raise ValueError(f"asked for {count} eigenvalues of a {n}-dimensional problem")
    if n <= dense_limit:
        w = sla.eigh(fm.A.toarray(), fm.B.toarray(), eigvals_only=True, subset_by_index=[0, count - 1])
        return np.sort(w)
    shift = fm.gamma - 1.0
    v0 = np.ones(n) / math.sqrt(n)
    try:
        w = eigsh(fm.A, k=count, M=fm.B, sigma=shift, which="LM", v0=v0, tol=1e-12, maxiter=5000,
                  return_eigenvectors=False)
    except Exception as exc:  # ArpackNoConvergence and friends
        raise EigenError(f"shift-invert eigensolver failed: {exc}") from exc
    return np.sort(w)


def _chol(ab: np.ndarray, what: str) -> np.ndarray:
    try:
        return sla.cholesky_banded(ab)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} is not positive definite") from exc


def resolvent_gap(fm1: FormMatrices, fm2: FormMatrices, lam: float, tol: float = 1e-12) -> float:
    """``|(A1 - lam B)^{-1} B - (A2 - lam B)^{-1} B|`` in the ``B``-weighted 2-norm."""
    if fm1.mesh.nodes.shape != fm2.mesh.nodes.shape or np.any(fm1.mesh.nodes != fm2.mesh.nodes):
        raise MeshError("resolvent_gap needs both forms on the same mesh")
    if lam >= min(fm1.gamma, fm2.gamma) - 1.0:
        raise ValueError(f"lambda={lam} is not below both lower bounds minus one")
    if (fm1.A != fm2.A).nnz == 0:
        return 0.0
    U = _chol(fm1.banded(fm1.B), "mass matrix")
    f1 = _chol(fm1.banded(fm1.A - lam * fm1.B), "A1 - lambda B (lambda not below the spectrum)")
    f2 = _chol(fm2.banded(fm2.A - lam * fm2.B), "A2 - lambda B (lambda not below the spectrum)")
    n = fm1.dim

    def up(y):  # U y for upper bidiagonal U
        out = U[1] * y
        out[:-1] += U[0, 1:] * y[1:]
        return out

    def upT(y):
        out = U[1] * y
        out[1:] += U[0, 1:] * y[:-1]
        return out

    def matvec(y):
        z = upT(np.ravel(y))
        return up(sla.cho_solve_banded((f1, False), z) - sla.cho_solve_banded((f2, False), z))

    if n <= 2:
        D = np.column_stack([matvec(e) for e in np.eye(n)])
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T)))))
    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.ones(n) / math.sqrt(n)
    w = eigsh(op, k=1, which="LM", v0=v0, tol=tol, maxiter=10000, return_eigenvectors=False)
    return float(abs(w[0]))


# ---------------------------------------------------------------------------


def _box(f: PiecewiseFunction, n: int) -> PiecewiseFunction:
    """Average of ``f`` over ``[t - 1/2n, t + 1/2n]``."""
    d = 0.5 / n
    if f.is_periodic:
        m = f.cell_integral() / f.period
        F = (f - m).antiderivative()
        return (F.shift(-d) - F.shift(d)).scale(float(n)) + m
    F = f.antiderivative()
    return (F.shift(-d) - F.shift(d)).scale(float(n)).simplify()


def mollify(q: DistributionW1, n: int) -> DistributionW1:
    """Convolution with the triangular kernel of half-width ``1/n`` and height ``n``.

    The kernel is a box of width ``1/n`` convolved with itself: the first box
    turns ``g'`` into a difference quotient and atoms into steps, the second
    smooths the result into a continuous function.
    """
    if n < 1:
        raise ValueError("mollifier level must be positive")
    d = 0.5 / n
    first = _box(q.h, n) + (q.g.shift(-d) - q.g.shift(d)).scale(float(n))
    if q.atoms:
        steps = PiecewiseFunction.zero()
        for x, c in q.atoms:
            steps = steps + PiecewiseFunction.indicator(x - d, x + d, c * n)
        if q.is_periodic:
            P = q.period
            reps = int(math.ceil(d / P)) + 1
            total = PiecewiseFunction.zero()
            for j in range(-reps, reps + 1):
                total = total + steps.shift(j * P)
            b0 = float(first.edges[0])
            steps = total.restrict(b0, b0 + P).periodize(b0, P)
        first = first + steps
    return DistributionW1(h=_box(first, n).simplify(1e-14), period=q.period)


def _hat_pairings(f: DistributionW1, mesh: Mesh) -> np.ndarray:
    """``<f, hat_i>`` for the interior hats of ``mesh``; ``f`` aperiodic."""
    x = mesh.nodes
    h = np.diff(x)
    Mg = element_moments(f.g, x, 0)[:, 0]
    Mh = element_moments(f.h, x, 1)
    b = np.zeros(x.size)
    # -int g hat' : hat' is 1/h on the left element, -1/h on the right one
    b[1:] -= Mg / h
    b[:-1] += Mg / h
    b[:-1] += Mh[:, 0] - Mh[:, 1] / h
    b[1:] += Mh[:, 1] / h
    for xa, c in f.atoms:
        if xa <= x[0] or xa >= x[-1]:
            continue
        j = min(np.searchsorted(x, xa, side="right") - 1, x.size - 2)
        s = (xa - x[j]) / h[j]
        b[j] += c * (1.0 - s)
        b[j + 1] += c * s
    return b[1:-1]


def w12_gram(mesh: Mesh) -> sp.csr_matrix:
    h = np.diff(mesh.nodes)
    diag = (1.0 / h + h / 3)[:-1] + (1.0 / h + h / 3)[1:]
    off = (-1.0 / h + h / 6)[1:-1]
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def wminus_norm_estimate(f: DistributionW1, n: int, mesh: Mesh | None = None, h: float = DEFAULT_H) -> float:
    """Dual norm of ``f phi_n`` over the hats of ``mesh`` (a lower bound to the true norm)."""
    if mesh is None:
        mesh = Mesh.uniform(n - 2.0, n + 2.0, h)
    if mesh.a > n - 1.0 or mesh.b < n + 1.0:
        raise MeshError("mesh does not cover the window support")
    loc = localize(f, n)
    b = _hat_pairings(loc, mesh)
    if not np.any(b):
        return 0.0
    G = w12_gram(mesh)
    ab = np.zeros((2, G.shape[0]))
    ab[0, 1:] = G.diagonal(1)
    ab[1] = G.diagonal()
    try:
        c = sla.cholesky_banded(ab)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular Gram matrix for the W^1_2 basis") from exc
    y = sla.cho_solve_banded((c, False), b)
    return float(math.sqrt(max(0.0, b @ y)))


def window_range(f: DistributionW1) -> range:
    """Windows whose bump meets the support of ``f`` (one period for periodic ``f``)."""
    if f.is_periodic:
        return range(0, int(math.ceil(f.period)))
    hull = f.support_hull()
    if hull is None:
        return range(0)
    return range(int(math.floor(hull[0])) - 1, int(math.ceil(hull[1])) + 2)


def wminus_unif_estimate(f: DistributionW1, h: float = DEFAULT_H) -> float:
    """``sup_n`` of the windowed dual-norm estimates."""
    vals = [wminus_norm_estimate(f, n, h=h) for n in window_range(f)]
    return max(vals, default=0.0)


# ---------------------------------------------------------------------------


def split(q: DistributionW1) -> SigmaTau:
    if q.is_periodic:
        return decompose_periodic(q)
    r = window_range(q)
    if len(r) == 0:
        return SigmaTau(PiecewiseFunction.zero(), PiecewiseFunction.zero())
    return decompose(q, r.start, r.stop - 1)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    w_norm_gap: float
    resolvent_gap: float

    @property
    def ratio(self) -> float:
        return self.resolvent_gap / self.w_norm_gap if self.w_norm_gap > 0 else math.inf


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    h: float
    L: float
    lam: float
    seed: int = DEFAULT_SEED
    note: str = "discrete B-weighted 2-norm on the truncated interval, not the operator norm on the line"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def nonincreasing(self, name: str, factor: float = 1.2) -> bool:
        c = self.column(name)
        return bool(np.all(c[1:] <= factor * c[:-1]))


def mesh_for(st_list, L: float, h: float) -> Mesh:
    extra = []
    for st in st_list:
        for f in (st.sigma, st.tau):
            e = f.unroll(-L, L).edges if f.is_periodic else f.edges
            extra.extend(e[(e > -L) & (e < L)])
    return Mesh.uniform(-L, L, h, extra)


def convergence_experiment(q: DistributionW1, lam: float | None, n_list, L: float = DEFAULT_L,
                           h: float = DEFAULT_H, wminus_h: float | None = None) -> ConvergenceReport:
    """Mollify ``q`` at each level, compare forms and dual norms against ``q``.

    With ``lam=None`` the shift sits one unit below the smallest lower bound.
    """
    base = split(q)
    levels = [(n, mollify(q, n)) for n in n_list]
    splits = [split(qn) for _, qn in levels]
    gammas = [gamma_bound(base)] + [gamma_bound(s) for s in splits]
    if lam is None:
        lam = min(gammas) - 2.0
    mesh = mesh_for([base] + splits, L, h)
    fm = assemble(base, mesh)
    rows = []
    for (n, qn), st in zip(levels, splits):
        w = wminus_unif_estimate(qn - q, wminus_h or h)
        r = resolvent_gap(assemble(st, mesh), fm, lam)
        rows.append(ConvergenceRow(n, w, r))
    return ConvergenceReport(tuple(rows), h, L, float(lam))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaCheck:
    sup_sq: float
    grad_sq: float
    l2_sq: float
    prod_l2: float

    def max_bound(self, eps: float) -> float:
        return eps * self.grad_sq + 8.0 / eps * self.l2_sq

    def prod_bound(self, eps: float) -> float:
        return eps * self.grad_sq + 4.0 / eps**3 * self.l2_sq


def lemma_quantities(f: PiecewiseFunction) -> LemmaCheck:
    """Exact ``max|f|^2``, ``int|f'|^2``, ``int|f|^2`` and ``(int|f' f|^2)^{1/2}`` on ``[0, 1]``."""
    g = f.restrict(0.0, 1.0)
    d = g.derivative()
    fp = d * g
    sup = max(abs(float(v)) for v in np.concatenate([g.evaluate(g.edges), g.left_limit(g.edges)]))
    crit = []
    for i in range(g.coef.shape[0]):
        # interior extrema of higher-degree pieces
        for r in _real_roots(diff_rows(g.coef[i])[0], 0.0, g.edges[i + 1] - g.edges[i]):
            crit.append(abs(float(g.evaluate(g.edges[i] + r))))
    sup = max([sup] + crit)
    return LemmaCheck(sup * sup, (d * d).integral(), (g * g).integral(), math.sqrt((fp * fp).integral()))
