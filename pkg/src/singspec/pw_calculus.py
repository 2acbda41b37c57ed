"""Exact calculus for piecewise polynomials with jumps and delta atoms.

A :class:`PiecewiseFunction` stores one polynomial per interval between
consecutive breakpoints. Every piece is written in the *local* coordinate
``s = t - b_i`` of its left breakpoint, which keeps products and integrals well
conditioned far from the origin. The unbounded end intervals carry tail
polynomials in ``t - b_0`` (left) and ``t - b_last`` (right). A periodic
function stores a single cell ``[b_0, b_0 + period)`` and has zero tails.

Values at a breakpoint are right limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_DEGREE = 16
COEF_TOL = 1e-12
_MERGE_TOL = 1e-12


class DegreeError(ValueError):
    """Raised when a product would exceed :data:`MAX_DEGREE`."""


# ---------------------------------------------------------------------------
# coefficient-array helpers (rows are ascending-degree coefficient vectors)


def _pad(c: np.ndarray, width: int) -> np.ndarray:
    c = np.atleast_2d(c)
    if c.shape[1] >= width:
        return c
    out = np.zeros((c.shape[0], width))
    out[:, : c.shape[1]] = c
    return out


def _trim_width(*arrays: np.ndarray) -> int:
    """Smallest column count that keeps every nonzero coefficient."""
    width = 1
    for a in arrays:
        a = np.atleast_2d(a)
        if a.size == 0:
            continue
        nz = np.nonzero(np.any(a != 0.0, axis=0))[0]
        if nz.size:
            width = max(width, int(nz[-1]) + 1)
    return width


def shift_rows(coef: np.ndarray, d) -> np.ndarray:
    """Taylor shift: row ``p`` becomes the coefficients of ``p(s + d)``."""
    c = np.array(np.atleast_2d(coef), dtype=float, copy=True)
    d = np.broadcast_to(np.asarray(d, dtype=float), (c.shape[0],))
    k = c.shape[1]
    for i in range(k - 1):
        for j in range(k - 2, i - 1, -1):
            c[:, j] += d * c[:, j + 1]
    return c


def eval_rows(coef: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Evaluate row ``i`` of ``coef`` at ``s[i]`` (Horner)."""
    coef = np.atleast_2d(coef)
    out = np.zeros(np.shape(s), dtype=np.result_type(coef, s))
    for j in range(coef.shape[1] - 1, -1, -1):
        out = out * s + coef[:, j]
    return out


def integrate_rows(coef: np.ndarray) -> np.ndarray:
    """Antiderivative rows vanishing at ``s = 0``."""
    coef = np.atleast_2d(coef)
    out = np.zeros((coef.shape[0], coef.shape[1] + 1))
    out[:, 1:] = coef / np.arange(1, coef.shape[1] + 1)
    return out


def definite_rows(coef: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``int_0^h p(s) ds`` for each row."""
    return eval_rows(integrate_rows(coef), np.asarray(h, dtype=float))


def diff_rows(coef: np.ndarray) -> np.ndarray:
    coef = np.atleast_2d(coef)
    if coef.shape[1] == 1:
        return np.zeros_like(coef)
    return coef[:, 1:] * np.arange(1, coef.shape[1])


def mul_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    wa, wb = _trim_width(a), _trim_width(b)
    a, b = a[:, :wa], b[:, :wb]
    if wa + wb - 2 > MAX_DEGREE:
        raise DegreeError(
            f"product degree {wa + wb - 2} exceeds the cap {MAX_DEGREE}"
        )
    out = np.zeros((a.shape[0], wa + wb - 1))
    for i in range(wa):
        out[:, i : i + wb] += a[:, i : i + 1] * b
    return out


def _merge_points(*arrays: Iterable[float]) -> np.ndarray:
    pts = np.unique(np.concatenate([np.asarray(list(a) if not isinstance(a, np.ndarray) else a, dtype=float).ravel() for a in arrays]))
    if pts.size < 2:
        return pts
    keep = [0]
    for i in range(1, pts.size):
        if pts[i] - pts[keep[-1]] > _MERGE_TOL * (1.0 + abs(pts[i])):
            keep.append(i)
    return pts[keep]


def _real_roots(row: np.ndarray, lo: float, hi: float) -> list[float]:
    """Real roots of one polynomial strictly inside ``(lo, hi)``."""
    row = np.asarray(row, dtype=float)
    w = _trim_width(row)
    row = row[:w]
    if w <= 1:
        return []
    scale = np.max(np.abs(row))
    if scale == 0.0:
        return []
    r = np.roots(row[::-1] / scale)
    out = []
    for z in r:
        if abs(z.imag) <= 1e-9 * (1.0 + abs(z.real)) and lo < z.real < hi:
            out.append(float(z.real))
    return sorted(out)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Poly:
    """Polynomial with ascending coefficients, stored in canonical form."""

    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        c = [float(x) for x in self.coefficients]
        while c and c[-1] == 0.0:
            c.pop()
        if len(c) - 1 > MAX_DEGREE:
            raise DegreeError(f"degree {len(c) - 1} exceeds the cap {MAX_DEGREE}")
        object.__setattr__(self, "coefficients", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def array(self, width: int | None = None) -> np.ndarray:
        w = max(1, len(self.coefficients)) if width is None else width
        out = np.zeros(w)
        out[: len(self.coefficients)] = self.coefficients
        return out

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(s, self.array())

    def is_zero(self) -> bool:
        return not self.coefficients


def _as_row(p, width: int | None = None) -> np.ndarray:
    if p is None:
        arr = np.zeros(1)
    elif isinstance(p, Poly):
        arr = p.array()
    else:
        arr = np.atleast_1d(np.asarray(p, dtype=float))
    if width is not None and arr.size < width:
        arr = np.concatenate([arr, np.zeros(width - arr.size)])
    return arr


class PiecewiseFunction:
    """Piecewise polynomial on the real line, optionally periodic.

    ``pieces[i]`` is a polynomial in ``t - breakpoints[i]``. Aperiodic
    functions have ``len(pieces) == len(breakpoints) - 1``; periodic ones have
    one piece per breakpoint, the last covering ``[b_last, b_0 + period)``.
    """

    __slots__ = ("edges", "coef", "left", "right", "period")

    def __init__(
        self,
        breakpoints: Sequence[float],
        pieces: Sequence,
        left_tail=None,
        right_tail=None,
        period: float | None = None,
    ):
        b = np.asarray(breakpoints, dtype=float).ravel()
        if b.size == 0:
            b = np.zeros(1)
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints not increasing")
        if not np.all(np.isfinite(b)):
            raise ValueError("breakpoints must be finite")
        rows = [_as_row(p) for p in pieces]
        if period is not None:
            period = float(period)
            if period <= 0:
                raise ValueError("period must be positive")
            if len(rows) != b.size:
                raise ValueError("periodic function needs one piece per breakpoint")
            if b[-1] >= b[0] + period:
                raise ValueError("breakpoints exceed one period cell")
            b = np.append(b, b[0] + period)
            if not (_as_row(left_tail) == 0).all() or not (_as_row(right_tail) == 0).all():
                raise ValueError("periodic functions have zero tails")
        elif len(rows) != b.size - 1:
            raise ValueError("aperiodic function needs len(breakpoints) - 1 pieces")
        lt, rt = _as_row(left_tail), _as_row(right_tail)
        width = max([lt.size, rt.size, 1] + [r.size for r in rows])
        if width - 1 > MAX_DEGREE:
            raise DegreeError(f"degree {width - 1} exceeds the cap {MAX_DEGREE}")
        coef = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            coef[i, : r.size] = r
        self._set(b, coef, _as_row(lt, width), _as_row(rt, width), period)

    def _set(self, edges, coef, left, right, period):
        w = _trim_width(coef, left, right)
        object.__setattr__(self, "edges", np.asarray(edges, dtype=float))
        object.__setattr__(self, "coef", _pad(coef, w)[:, :w] if coef.size else np.zeros((0, w)))
        object.__setattr__(self, "left", _pad(left, w)[0, :w])
        object.__setattr__(self, "right", _pad(right, w)[0, :w])
        object.__setattr__(self, "period", period)
        for a in (self.edges, self.coef, self.left, self.right):
            a.flags.writeable = False

    def __setattr__(self, name, value):
        raise AttributeError("PiecewiseFunction is immutable")

    @classmethod
    def _raw(cls, edges, coef, left=None, right=None, period=None) -> "PiecewiseFunction":
        obj = object.__new__(cls)
        coef = np.atleast_2d(np.asarray(coef, dtype=float)) if len(coef) else np.zeros((0, 1))
        w = coef.shape[1]
        left = np.zeros(w) if left is None else np.asarray(left, dtype=float)
        right = np.zeros(w) if right is None else np.asarray(right, dtype=float)
        w = max(w, left.size, right.size)
        obj._set(edges, _pad(coef, w), _as_row(left, w), _as_row(right, w), period)
        return obj

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, period: float | None = None) -> "PiecewiseFunction":
        if period is None:
            return cls._raw(np.zeros(1), np.zeros((0, 1)))
        return cls._raw(np.array([0.0, period]), np.zeros((1, 1)), period=period)

    @classmethod
    def constant(cls, c: float, period: float | None = None) -> "PiecewiseFunction":
        if period is None:
            return cls._raw(np.zeros(1), np.zeros((0, 1)), [c], [c])
        return cls._raw(np.array([0.0, period]), np.array([[c]]), period=period)

    @classmethod
    def indicator(cls, a: float, b: float, c: float = 1.0) -> "PiecewiseFunction":
        return cls._raw(np.array([a, b]), np.array([[c]]))

    @classmethod
    def heaviside(cls, x0: float = 0.0, c: float = 1.0) -> "PiecewiseFunction":
        return cls._raw(np.array([x0]), np.zeros((0, 1)), [0.0], [c])

    @classmethod
    def from_global(cls, breakpoints, polys, left_tail=None, right_tail=None, period=None):
        """Build from pieces given as polynomials in the global variable ``t``."""
        b = np.asarray(breakpoints, dtype=float).ravel()
        rows = [_as_row(p) for p in polys]
        width = max([1] + [r.size for r in rows])
        coef = np.array([_as_row(r, width) for r in rows]).reshape(len(rows), width)
        local = shift_rows(coef, b[: len(rows)]) if len(rows) else coef
        lt = rt = None
        if left_tail is not None:
            lt = shift_rows(_as_row(left_tail)[None, :], b[0])[0]
        if right_tail is not None:
            rt = shift_rows(_as_row(right_tail)[None, :], b[-1])[0]
        return cls(b, list(local), lt, rt, period)

    @classmethod
    def linear_interpolant(cls, nodes, values) -> "PiecewiseFunction":
        """Continuous piecewise-linear function, zero outside ``[nodes[0], nodes[-1]]``."""
        x = np.asarray(nodes, dtype=float)
        v = np.asarray(values, dtype=float)
        slope = np.diff(v) / np.diff(x)
        return cls._raw(x, np.column_stack([v[:-1], slope]))

    # -- basic properties --------------------------------------------------

    @property
    def breakpoints(self) -> np.ndarray:
        return self.edges[:-1] if self.period is not None else self.edges

    @property
    def pieces(self) -> tuple[Poly, ...]:
        return tuple(Poly(tuple(r)) for r in self.coef)

    @property
    def left_tail(self) -> Poly:
        return Poly(tuple(self.left))

    @property
    def right_tail(self) -> Poly:
        return Poly(tuple(self.right))

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1 if self.coef.size else self.left.size - 1

    @property
    def is_periodic(self) -> bool:
        return self.period is not None

    def has_zero_tails(self) -> bool:
        return not self.left.any() and not self.right.any()

    def is_zero(self, tol: float = 0.0) -> bool:
        return (
            np.all(np.abs(self.coef) <= tol)
            and np.all(np.abs(self.left) <= tol)
            and np.all(np.abs(self.right) <= tol)
        )

    def __repr__(self) -> str:
        kind = f"period={self.period}" if self.is_periodic else "aperiodic"
        return f"PiecewiseFunction({self.coef.shape[0]} pieces on [{self.edges[0]:g}, {self.edges[-1]:g}], {kind})"

    # -- location / evaluation ---------------------------------------------

    def _reduce(self, t: np.ndarray) -> np.ndarray:
        b0, p = self.edges[0], self.period
        r = b0 + np.mod(t - b0, p)
        return np.where(r >= b0 + p, b0, r)

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        """Right-limit value at ``t`` (scalar or array)."""
        t_arr = np.asarray(t, dtype=float)
        tt = t_arr.ravel()
        if self.is_periodic:
            tt = self._reduce(tt)
            idx = np.clip(np.searchsorted(self.edges, tt, side="right") - 1, 0, self.coef.shape[0] - 1)
            out = eval_rows(self.coef[idx], tt - self.edges[idx])
        else:
            n = self.coef.shape[0]
            idx = np.searchsorted(self.edges, tt, side="right") - 1
            rows = np.empty((tt.size, self.left.size))
            s = np.empty(tt.size)
            lt, rt = idx < 0, idx >= n
            mid = ~(lt | rt)
            rows[lt], s[lt] = self.left, tt[lt] - self.edges[0]
            rows[rt], s[rt] = self.right, tt[rt] - self.edges[-1]
            rows[mid], s[mid] = self.coef[idx[mid]], tt[mid] - self.edges[idx[mid]]
            out = eval_rows(rows, s)
        if t_arr.ndim == 0:
            return float(out[0])
        return out.reshape(t_arr.shape)

    def left_limit(self, t):
        """Left-limit value at ``t``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if self.is_periodic:
            tt = self._reduce(t_arr)
            idx = np.searchsorted(self.edges, tt, side="left") - 1
            wrap = idx < 0
            idx = np.where(wrap, self.coef.shape[0] - 1, idx)
            s = np.where(wrap, self.edges[-1] - self.edges[-2], tt - self.edges[idx])
            out = eval_rows(self.coef[idx], s)
        else:
            n = self.coef.shape[0]
            idx = np.searchsorted(self.edges, t_arr, side="left") - 1
            rows = np.empty((t_arr.size, self.left.size))
            s = np.empty(t_arr.size)
            lt, rt = idx < 0, idx >= n
            mid = ~(lt | rt)
            rows[lt], s[lt] = self.left, t_arr[lt] - self.edges[0]
            rows[rt], s[rt] = self.right, t_arr[rt] - self.edges[-1]
            rows[mid], s[mid] = self.coef[idx[mid]], t_arr[mid] - self.edges[idx[mid]]
            out = eval_rows(rows, s)
        return float(out[0]) if np.ndim(t) == 0 else out

    # -- re-expression on other grids ----------------------------------------

    def _on_grid(self, grid: np.ndarray):
        """Coefficient rows for the intervals of ``grid`` plus both tails.

        No own edge may lie strictly inside a grid interval. The tails are only
        meaningful when ``grid`` covers all own edges.
        """
        grid = np.asarray(grid, dtype=float)
        starts = grid[:-1]
        # pieces are looked up at interval midpoints: an own edge that differs
        # from a grid point by rounding must not select the neighbouring piece
        mids = 0.5 * (grid[:-1] + grid[1:])
        width = self.coef.shape[1] if self.coef.size else self.left.size
        if self.is_periodic:
            r = self._reduce(mids)
            idx = np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, self.coef.shape[0] - 1)
            d = r - (mids - starts) - self.edges[idx]
            rows = shift_rows(self.coef[idx], d) if starts.size else np.zeros((0, width))
            return rows, np.zeros(width), np.zeros(width)
        n = self.coef.shape[0]
        idx = np.searchsorted(self.edges, mids, side="right") - 1
        src = np.empty((starts.size, width))
        d = np.empty(starts.size)
        lt, rt = idx < 0, idx >= n
        mid = ~(lt | rt)
        src[lt], d[lt] = _pad(self.left, width)[0], starts[lt] - self.edges[0]
        src[rt], d[rt] = _pad(self.right, width)[0], starts[rt] - self.edges[-1]
        if mid.any():
            src[mid], d[mid] = self.coef[idx[mid]], starts[mid] - self.edges[idx[mid]]
        rows = shift_rows(src, d) if starts.size else np.zeros((0, width))
        left = shift_rows(self.left[None, :], grid[0] - self.edges[0])[0]
        right = shift_rows(self.right[None, :], grid[-1] - self.edges[-1])[0]
        return rows, left, right

    def refine(self, points: Iterable[float]) -> "PiecewiseFunction":
        """Same function with extra breakpoints inserted."""
        pts = np.asarray(list(points), dtype=float)
        if self.is_periodic:
            pts = self._reduce(pts)
            grid = _merge_points(self.edges, pts)
            grid = grid[grid <= self.edges[-1]]
            rows, _, _ = self._on_grid(grid)
            return PiecewiseFunction._raw(grid, rows, period=self.period)
        grid = _merge_points(self.edges, pts)
        rows, left, right = self._on_grid(grid)
        return PiecewiseFunction._raw(grid, rows, left, right)

    def unroll(self, a: float, b: float) -> "PiecewiseFunction":
        """Aperiodic copy equal to ``self`` on ``[a, b)`` and zero elsewhere."""
        if b <= a:
            raise ValueError("empty unroll range")
        if not self.is_periodic:
            return self.restrict(a, b)
        p, b0 = self.period, self.edges[0]
        k0 = math.floor((a - b0) / p) - 1
        k1 = math.ceil((b - b0) / p) + 1
        cell = self.edges[:-1]
        reps = (cell[None, :] + p * np.arange(k0, k1 + 1)[:, None]).ravel()
        grid = _merge_points(reps[(reps > a) & (reps < b)], [a, b])
        rows, _, _ = self._on_grid(grid)
        return PiecewiseFunction._raw(grid, rows)

    def restrict(self, a: float, b: float) -> "PiecewiseFunction":
        """Equal to ``self`` on ``[a, b)``, zero elsewhere."""
        if self.is_periodic:
            return self.unroll(a, b)
        grid = _merge_points([a, b], self.edges[(self.edges > a) & (self.edges < b)])
        rows, _, _ = self._on_grid(grid)
        return PiecewiseFunction._raw(grid, rows)

    def periodize(self, b0: float, period: float) -> "PiecewiseFunction":
        """Periodic function repeating ``self`` on ``[b0, b0 + period)``."""
        inner = self.edges[(self.edges > b0) & (self.edges < b0 + period)]
        grid = _merge_points([b0, b0 + period], inner)
        rows, _, _ = self._on_grid(grid)
        return PiecewiseFunction._raw(grid, rows, period=period)

    def recell(self, b0: float) -> "PiecewiseFunction":
        """Periodic function re-expressed with its cell starting at ``b0``."""
        if not self.is_periodic:
            raise ValueError("recell needs a periodic function")
        u = self.unroll(b0, b0 + self.period)
        return PiecewiseFunction._raw(u.edges, u.coef, period=self.period)

    def simplify(self, tol: float = 0.0) -> "PiecewiseFunction":
        """Drop breakpoints across which the polynomial does not change."""
        edges, coef = self.edges, self.coef
        n = coef.shape[0]
        if n == 0:
            return self
        keep_rows = [0]
        keep_edges = [edges[0]]
        for i in range(1, n):
            prev = keep_rows[-1]
            cont = shift_rows(coef[prev : prev + 1], edges[i] - keep_edges[-1])[0]
            if np.all(np.abs(cont - coef[i]) <= tol * (1.0 + np.abs(coef[i]))):
                continue
            keep_rows.append(i)
            keep_edges.append(edges[i])
        keep_edges.append(edges[-1])
        new_coef = coef[keep_rows]
        new_edges = np.array(keep_edges)
        if self.is_periodic:
            return PiecewiseFunction._raw(new_edges, new_coef, period=self.period)
        left, right = self.left, self.right

        def same(p, q):
            return np.all(np.abs(p - q) <= tol * (1.0 + np.abs(q)))

        while new_coef.shape[0] and same(left, new_coef[0]):
            left = shift_rows(left[None, :], new_edges[1] - new_edges[0])[0]
            new_coef, new_edges = new_coef[1:], new_edges[1:]
        while new_coef.shape[0] and same(
            shift_rows(new_coef[-1:], new_edges[-1] - new_edges[-2])[0], right
        ):
            right = new_coef[-1]
            new_coef, new_edges = new_coef[:-1], new_edges[:-1]
        return PiecewiseFunction._raw(new_edges, new_coef, left, right)

    # -- arithmetic ----------------------------------------------------------

    def _binary(self, other: "PiecewiseFunction", rowop, tailop) -> "PiecewiseFunction":
        if self.is_periodic and other.is_periodic:
            if abs(self.period - other.period) > _MERGE_TOL * self.period:
                raise ValueError("periods differ")
            o = other.recell(self.edges[0]) if other.edges[0] != self.edges[0] else other
            grid = _merge_points(self.edges, o.edges)
            a, _, _ = self._on_grid(grid)
            b, _, _ = o._on_grid(grid)
            return PiecewiseFunction._raw(grid, rowop(a, b), period=self.period)
        if self.is_periodic or other.is_periodic:
            per, ape = (self, other) if self.is_periodic else (other, self)
            if not ape.has_zero_tails():
                raise ValueError("cannot combine a periodic function with one of unbounded support")
            lo, hi = ape.edges[0], ape.edges[-1]
            if hi <= lo:
                zero = PiecewiseFunction.zero()
                return self._binary_aperiodic(zero if self.is_periodic else self, zero if other.is_periodic else other, rowop, tailop)
            per = per.unroll(lo, hi)
            return (per._binary_aperiodic(ape, rowop, tailop) if self.is_periodic else ape._binary_aperiodic(per, rowop, tailop))
        return self._binary_aperiodic(other, rowop, tailop)

    def _binary_aperiodic(self, other, rowop, tailop):
        grid = _merge_points(self.edges, other.edges)
        a, la, ra = self._on_grid(grid)
        b, lb, rb = other._on_grid(grid)
        return PiecewiseFunction._raw(grid, rowop(a, b), tailop(la, lb), tailop(ra, rb))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = PiecewiseFunction.constant(other, self.period)
        return self._binary(other, _addrows, _addtail)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = PiecewiseFunction.constant(other, self.period)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self.scale(float(other))
        return self._binary(other, mul_rows, _multail)

    __rmul__ = __mul__

    def scale(self, c: float) -> "PiecewiseFunction":
        return PiecewiseFunction._raw(self.edges, self.coef * c, self.left * c, self.right * c, self.period)

    def shift(self, d: float) -> "PiecewiseFunction":
        """The function ``t -> self(t - d)``."""
        return PiecewiseFunction._raw(self.edges + d, self.coef, self.left, self.right, self.period)

    def rescale(self, s: float) -> "PiecewiseFunction":
        """The function ``t -> self(s * t)`` for ``s > 0``."""
        if s <= 0:
            raise ValueError("rescale factor must be positive")
        powers = s ** np.arange(self.coef.shape[1] if self.coef.size else self.left.size)
        w = powers.size
        return PiecewiseFunction._raw(
            self.edges / s,
            self.coef * powers if self.coef.size else self.coef,
            _as_row(self.left, w) * powers,
            _as_row(self.right, w) * powers,
            None if self.period is None else self.period / s,
        )

    def derivative(self) -> "PiecewiseFunction":
        """Piecewise derivative; jumps are dropped (see :meth:`jumps`)."""
        return PiecewiseFunction._raw(
            self.edges,
            diff_rows(self.coef) if self.coef.size else self.coef,
            diff_rows(self.left)[0],
            diff_rows(self.right)[0],
            self.period,
        )

    def jumps(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints and the jump ``f(x+) - f(x-)`` at each of them."""
        x = self.breakpoints
        return x, self.evaluate(x) - self.left_limit(x)

    def abs(self) -> "PiecewiseFunction":
        """``|f|``, with pieces split at the real roots of each polynomial."""
        pts = []
        n = self.coef.shape[0]
        for i in range(n):
            h = self.edges[i + 1] - self.edges[i]
            pts.extend(self.edges[i] + r for r in _real_roots(self.coef[i], 0.0, h))
        if not self.is_periodic:
            pts.extend(self.edges[0] + r for r in _real_roots(self.left, -np.inf, 0.0))
            pts.extend(self.edges[-1] + r for r in _real_roots(self.right, 0.0, np.inf))
        f = self.refine(pts) if pts else self
        ne = f.coef.shape[0]
        if ne:
            mids = 0.5 * (f.edges[:-1] + f.edges[1:])
            sgn = np.sign(f.evaluate(mids))
            sgn[sgn == 0] = 1.0
            coef = f.coef * sgn[:, None]
        else:
            coef = f.coef
        left, right = f.left, f.right
        if not f.is_periodic:
            lw = _trim_width(left)
            if lw > 0 and left[lw - 1] != 0:
                # sign as t -> -inf
                left = left * (np.sign(left[lw - 1]) * (-1) ** (lw - 1))
            rw = _trim_width(right)
            if rw > 0 and right[rw - 1] != 0:
                right = right * np.sign(right[rw - 1])
        return PiecewiseFunction._raw(f.edges, coef, left, right, f.period)

    # -- integration -----------------------------------------------------------

    def piece_integrals(self) -> np.ndarray:
        if not self.coef.size:
            return np.zeros(0)
        return definite_rows(self.coef, np.diff(self.edges))

    def integral(self, a: float | None = None, b: float | None = None) -> float:
        """``int_a^b f``; ``None`` bounds mean the corresponding infinity."""
        if self.is_periodic:
            if a is None or b is None:
                if a is None and b is None and self.is_zero():
                    return 0.0
                raise ValueError("infinite integral of a periodic function")
            return float(self.unroll(a, b).piece_integrals().sum())
        if (a is None and self.left.any()) or (b is None and self.right.any()):
            raise ValueError("integral diverges: nonzero tail")
        lo = self.edges[0] if a is None else a
        hi = self.edges[-1] if b is None else b
        if hi <= lo:
            return 0.0 if hi == lo else -self.integral(hi, lo)
        return float(self.restrict(lo, hi).piece_integrals().sum())

    def cell_integral(self) -> float:
        if not self.is_periodic:
            raise ValueError("cell_integral needs a periodic function")
        return float(self.piece_integrals().sum())

    def antiderivative(self, base: float | None = None) -> "PiecewiseFunction":
        """Continuous ``F`` with ``F' = f`` piecewise and ``F(base) = 0``.

        ``base=None`` stands for ``-inf`` and needs a zero left tail. Periodic
        input must have zero mean, and ``base`` then defaults to the cell start.
        """
        if self.is_periodic:
            total = self.cell_integral()
            scale = float(np.max(np.abs(self.coef))) if self.coef.size else 0.0
            if abs(total) > 1e-12 * max(1.0, scale * self.period):
                raise ValueError(
                    f"periodic function has nonzero mean ({total:.3g}); its antiderivative is not periodic"
                )
            q = integrate_rows(self.coef)
            vals = np.concatenate([[0.0], np.cumsum(self.piece_integrals())])
            q[:, 0] += vals[:-1]
            F = PiecewiseFunction._raw(self.edges, q, period=self.period)
            c = F.evaluate(self.edges[0] if base is None else base)
            return F - c if c != 0.0 else F
        if base is None and self.left.any():
            raise ValueError("antiderivative from -inf needs a zero left tail")
        ql = integrate_rows(self.left)[0]
        qr = integrate_rows(self.right)[0]
        if self.coef.size:
            q = integrate_rows(self.coef)
            vals = np.concatenate([[0.0], np.cumsum(self.piece_integrals())])
            q[:, 0] += vals[:-1]
            qr[0] += vals[-1]
        else:
            q = np.zeros((0, ql.size))
        F = PiecewiseFunction._raw(self.edges, q, ql, qr)
        if base is not None:
            c = F.evaluate(base)
            if c != 0.0:
                F = F + PiecewiseFunction.constant(-c)
        return F

    # -- serialization ---------------------------------------------------------

    def global_pieces(self) -> dict:
        """Pieces in global coordinates (for the text format)."""
        rows = shift_rows(self.coef, -self.edges[:-1]) if self.coef.size else self.coef
        out = {
            "breakpoints": [float(x) for x in self.breakpoints],
            "polys": [[float(c) for c in r[: max(1, _trim_width(r))]] for r in rows],
        }
        if not self.is_periodic:
            if self.left.any():
                lt = shift_rows(self.left[None, :], -self.edges[0])[0]
                out["left_tail"] = [float(c) for c in lt[: _trim_width(lt)]]
            if self.right.any():
                rt = shift_rows(self.right[None, :], -self.edges[-1])[0]
                out["right_tail"] = [float(c) for c in rt[: _trim_width(rt)]]
        return out


def _addrows(a, b):
    w = max(a.shape[1], b.shape[1])
    return _pad(a, w) + _pad(b, w)


def _addtail(a, b):
    w = max(a.size, b.size)
    return _as_row(a, w) + _as_row(b, w)


def _multail(a, b):
    return mul_rows(a[None, :], b[None, :])[0]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Continuous, compactly supported piecewise polynomial."""

    __test__ = False  # keep pytest from collecting this class

    underlying: PiecewiseFunction

    def __post_init__(self):
        f = self.underlying
        if f.is_periodic or not f.has_zero_tails():
            raise ValueError("test function must have compact support")
        _, jumps = f.jumps()
        scale = 1.0 + float(np.max(np.abs(f.coef))) if f.coef.size else 1.0
        if jumps.size and np.max(np.abs(jumps)) > 1e-12 * scale:
            raise ValueError("test function must be continuous")

    @property
    def support(self) -> tuple[float, float]:
        return float(self.underlying.edges[0]), float(self.underlying.edges[-1])

    def __call__(self, t):
        return self.underlying.evaluate(t)

    def derivative(self) -> PiecewiseFunction:
        return self.underlying.derivative()

    def w12_norm(self) -> float:
        f = self.underlying
        d = f.derivative()
        return math.sqrt((f * f).integral() + (d * d).integral())

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return TestFunction(self.underlying + other.underlying)

    def scale(self, c: float) -> "TestFunction":
        return TestFunction(self.underlying.scale(c))

    @classmethod
    def hat(cls, center: float, halfwidth: float, height: float = 1.0) -> "TestFunction":
        return cls(PiecewiseFunction.linear_interpolant(
            [center - halfwidth, center, center + halfwidth], [0.0, height, 0.0]))

    @classmethod
    def trapezoid(cls, a: float, b: float, c: float, d: float) -> "TestFunction":
        """Zero outside ``[a, d]``, one on ``[b, c]``, linear in between."""
        return cls(PiecewiseFunction.linear_interpolant([a, b, c, d], [0.0, 1.0, 1.0, 0.0]))

    @classmethod
    def random(cls, rng: np.random.Generator, lo: float = -3.0, hi: float = 3.0,
               n_pieces: int = 6, degree: int = 3) -> "TestFunction":
        """Random continuous piecewise polynomial supported in ``[lo, hi]``."""
        a, b = np.sort(rng.uniform(lo, hi, 2))
        if b - a < 0.5:
            a, b = max(lo, a - 0.5), min(hi, b + 0.5)
        nodes = np.sort(np.concatenate([[a, b], rng.uniform(a, b, n_pieces - 1)]))
        nodes = _merge_points(nodes)
        vals = rng.normal(size=nodes.size)
        vals[0] = vals[-1] = 0.0
        h = np.diff(nodes)
        rows = np.zeros((h.size, degree + 1))
        rows[:, 0] = vals[:-1]
        rows[:, 1] = np.diff(vals) / h
        # bubble s(s - h) * (c0 + c1 s + ...) keeps the endpoint values
        for i in range(h.size):
            extra = rng.normal(size=max(0, degree - 1))
            bubble = mul_rows(np.array([[0.0, -h[i], 1.0]]), extra[None, :] / h[i] ** 2)[0] if extra.size else np.zeros(1)
            rows[i, : bubble.size] += bubble[: degree + 1]
        return cls(PiecewiseFunction._raw(nodes, rows))


@dataclass(frozen=True)
class DistributionW1:
    """Distribution ``g' + h + sum_k c_k delta_{x_k}``.

    For a periodic distribution ``g`` and ``h`` share the period and ``atoms``
    lists one period cell.
    """

    g: PiecewiseFunction = None
    h: PiecewiseFunction = None
    atoms: tuple[tuple[float, float], ...] = ()
    period: float | None = None

    def __post_init__(self):
        p = self.period
        g = PiecewiseFunction.zero(p) if self.g is None else self.g
        h = PiecewiseFunction.zero(p) if self.h is None else self.h
        if p is not None:
            g = g if g.is_periodic else _periodic_zero_or_fail(g, p)
            h = h if h.is_periodic else _periodic_zero_or_fail(h, p)
            for f in (g, h):
                if abs(f.period - p) > _MERGE_TOL * p:
                    raise ValueError("parts have a different period")
        elif g.is_periodic or h.is_periodic:
            raise ValueError("periodic parts need a periodic distribution")
        atoms = tuple(sorted((float(x), float(c)) for x, c in self.atoms))
        xs = [x for x, _ in atoms]
        if p is not None:
            xs = sorted(x % p for x in xs)
            if len(xs) > 1 and min(min(np.diff(xs)), p - (xs[-1] - xs[0])) <= _MERGE_TOL * p:
                raise ValueError("duplicate atoms within one period")
        elif len(xs) > 1 and np.min(np.diff(xs)) <= 0:
            raise ValueError("duplicate atoms")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def delta(cls, x: float = 0.0, c: float = 1.0) -> "DistributionW1":
        return cls(atoms=((x, c),))

    @classmethod
    def comb(cls, alpha: float = 1.0, a: float = 1.0) -> "DistributionW1":
        """The lattice ``sum_n alpha * delta(t - n a)``."""
        return cls(atoms=((0.0, alpha),), period=a)

    @classmethod
    def random(cls, rng: np.random.Generator, lo: float = -2.0, hi: float = 2.0, n_pieces: int = 4,
               degree: int = 2, n_atoms: int = 2, period: float | None = None) -> "DistributionW1":
        """Random mix of a discontinuous ``g``, a bounded ``h`` and point masses.

        Aperiodic draws live in ``[lo, hi]``; periodic ones fill the cell ``[0, period)``.
        """
        a, b = (lo, hi) if period is None else (0.0, period)

        def part():
            inner = np.sort(rng.uniform(a, b, n_pieces - 1))
            if period is None:
                bps = _merge_points([a, b], inner)
                rows = rng.normal(size=(bps.size - 1, degree + 1))
            else:
                bps = _merge_points([a], inner)
                rows = rng.normal(size=(bps.size, degree + 1))
            rows /= np.arange(1, degree + 2)  # keep higher coefficients modest
            return PiecewiseFunction(bps, list(rows), period=period)

        xs = rng.uniform(a, b, n_atoms)
        cs = rng.normal(size=n_atoms)
        return cls(part(), part(), tuple(zip(xs.tolist(), cs.tolist())), period)

    @property
    def is_periodic(self) -> bool:
        return self.period is not None

    def is_zero(self) -> bool:
        return self.g.derivative().is_zero() and not self.g.jumps()[1].any() and self.h.is_zero() and all(c == 0 for _, c in self.atoms)

    def atoms_in(self, a: float, b: float) -> list[tuple[float, float]]:
        """Atoms with ``a <= x <= b``, replicated over periods."""
        if not self.is_periodic:
            return [(x, c) for x, c in self.atoms if a <= x <= b]
        p = self.period
        out = []
        for x, c in self.atoms:
            k0, k1 = math.ceil((a - x) / p - 1e-12), math.floor((b - x) / p + 1e-12)
            out.extend((x + k * p, c) for k in range(k0, k1 + 1))
        return sorted(out)

    def unroll(self, a: float, b: float) -> "DistributionW1":
        """Aperiodic distribution agreeing with ``self`` on test functions supported in ``[a, b]``."""
        return DistributionW1(self.g.unroll(a, b), self.h.unroll(a, b), tuple(self.atoms_in(a, b)))

    def _combine(self, other: "DistributionW1", sign: float) -> "DistributionW1":
        if (self.period is None) != (other.period is None):
            raise ValueError("cannot combine periodic and aperiodic distributions")
        merged: dict[float, float] = {}
        for x, c in self.atoms:
            merged[x] = merged.get(x, 0.0) + c
        for x, c in other.atoms:
            key = next((y for y in merged if abs(y - x) <= _MERGE_TOL * (1 + abs(x))), x)
            merged[key] = merged.get(key, 0.0) + sign * c
        return DistributionW1(self.g + other.g.scale(sign), self.h + other.h.scale(sign),
                              tuple(merged.items()), self.period)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def scale(self, s: float) -> "DistributionW1":
        return DistributionW1(self.g.scale(s), self.h.scale(s),
                              tuple((x, s * c) for x, c in self.atoms), self.period)

    def rescale(self, T: float) -> "DistributionW1":
        """The distribution ``t -> f(T t)``."""
        return DistributionW1(
            self.g.rescale(T).scale(1.0 / T),
            self.h.rescale(T),
            tuple((x / T, c / T) for x, c in self.atoms),
            None if self.period is None else self.period / T,
        )

    def support_hull(self) -> tuple[float, float] | None:
        """Smallest interval containing the support (aperiodic only)."""
        if self.is_periodic:
            return (-math.inf, math.inf)
        lo, hi = math.inf, -math.inf
        g, h = self.g, self.h
        if h.left.any() or h.right.any() or g.derivative().left.any() or g.derivative().right.any():
            return (-math.inf, math.inf)
        for f, moving in ((g.derivative(), True), (h, True)):
            for i in range(f.coef.shape[0]):
                if f.coef[i].any():
                    lo, hi = min(lo, f.edges[i]), max(hi, f.edges[i + 1])
        x, j = g.jumps()
        for xi, ji in zip(x, j):
            if ji != 0:
                lo, hi = min(lo, xi), max(hi, xi)
        for xi, c in self.atoms:
            if c != 0:
                lo, hi = min(lo, xi), max(hi, xi)
        if lo > hi:
            return None
        return (float(lo), float(hi))


def _periodic_zero_or_fail(f: PiecewiseFunction, period: float) -> PiecewiseFunction:
    if f.is_zero():
        return PiecewiseFunction.zero(period)
    raise ValueError("periodic distribution needs periodic parts")


# ---------------------------------------------------------------------------


def evaluate(f: PiecewiseFunction, t):
    return f.evaluate(t)


def antiderivative(f: PiecewiseFunction, base: float | None = None) -> PiecewiseFunction:
    return f.antiderivative(base)


def pair(f: DistributionW1, psi: TestFunction) -> float:
    """``<f, psi> = -int g psi' + int h psi + sum_k c_k psi(x_k)``."""
    a, b = psi.support
    if b <= a:
        return 0.0
    g = f.g.unroll(a, b) if f.is_periodic else f.g
    h = f.h.unroll(a, b) if f.is_periodic else f.h
    u = psi.underlying
    total = -(g * u.derivative()).integral() + (h * u).integral()
    atoms = f.atoms_in(a, b)
    if atoms:
        x = np.array([x for x, _ in atoms])
        c = np.array([c for _, c in atoms])
        total += float(np.dot(c, u.evaluate(x)))
    return float(total)


def _window_sup(g: PiecewiseFunction, lo: float | None = None, hi: float | None = None) -> float:
    """``sup_t int_t^{t+1} g`` over ``t`` in ``[lo, hi]`` for aperiodic ``g`` with zero tails."""
    G = g.antiderivative()
    W = G.shift(-1.0) - G
    cands = [0.0] if lo is None else []
    n = W.coef.shape[0]
    for i in range(n):
        a, b = W.edges[i], W.edges[i + 1]
        if lo is not None and (b < lo or a > hi):
            continue
        a_c = a if lo is None else max(a, lo)
        b_c = b if hi is None else min(b, hi)
        row = W.coef[i]
        cands.append(float(eval_rows(row[None, :], np.array([a_c - a]))[0]))
        cands.append(float(eval_rows(row[None, :], np.array([b_c - a]))[0]))
        for r in _real_roots(diff_rows(row)[0], a_c - a, b_c - a):
            cands.append(float(eval_rows(row[None, :], np.array([r]))[0]))
    return max(cands)


def _unif_window(f: PiecewiseFunction) -> float:
    if f.is_periodic:
        b0, p = f.edges[0], f.period
        return _window_sup(f.unroll(b0 - 1.0, b0 + p + 2.0), b0, b0 + p)
    if f.has_zero_tails():
        return _window_sup(f)
    if _trim_width(f.left) > 1 or _trim_width(f.right) > 1:
        raise ValueError("uniform norms need constant tails or a periodic function")
    # far windows see only a tail; the rest see a bounded stretch
    tails = [float(f.left[0]), float(f.right[0])]
    if f.edges.size == 0:
        return max(tails)
    lo, hi = float(f.edges[0]) - 1.0, float(f.edges[-1])
    return max(tails + [_window_sup(f.restrict(lo, hi + 1.0), lo, hi)])


def norm_L2_unif(f: PiecewiseFunction) -> float:
    """``sup_t (int_t^{t+1} |f|^2)^{1/2}``, maximized exactly per piece."""
    return math.sqrt(max(0.0, _unif_window(f * f)))


def norm_L1_unif(f: PiecewiseFunction) -> float:
    """``sup_t int_t^{t+1} |f|``."""
    return max(0.0, _unif_window(f.abs()))


def sup_abs(f: PiecewiseFunction) -> float:
    """``sup |f|`` for piecewise functions with bounded tails."""
    vals = [0.0]
    n = f.coef.shape[0]
    for i in range(n):
        h = f.edges[i + 1] - f.edges[i]
        pts = [0.0, h] + _real_roots(diff_rows(f.coef[i])[0], 0.0, h)
        vals.extend(np.abs(eval_rows(np.repeat(f.coef[i : i + 1], len(pts), 0), np.array(pts))))
    for tail in (f.left, f.right):
        if _trim_width(tail) > 1 and np.any(tail[1:]):
            return math.inf
        vals.append(abs(tail[0]))
    return float(max(vals))


def element_moments(f: PiecewiseFunction, nodes: np.ndarray, kmax: int) -> np.ndarray:
    """``M[j, k] = int_{x_j}^{x_{j+1}} f(t) (t - x_j)^k dt`` for ``k <= kmax``.

    Exact; ``f`` is refined onto ``nodes`` internally.
    """
    nodes = np.asarray(nodes, dtype=float)
    a, b = nodes[0], nodes[-1]
    base = f.unroll(a, b) if f.is_periodic else f
    grid = _merge_points(nodes, base.edges[(base.edges > a) & (base.edges < b)])
    rows, _, _ = base._on_grid(grid)
    owner = np.searchsorted(nodes, grid[:-1], side="right") - 1
    d = grid[:-1] - nodes[owner]
    h = np.diff(grid)
    out = np.zeros((nodes.size - 1, kmax + 1))
    for k in range(kmax + 1):
        # (s + d)^k expanded as a row in s, times f's piece
        mono = np.zeros((grid.size - 1, k + 1))
        for j in range(k + 1):
            mono[:, j] = math.comb(k, j) * d ** (k - j)
        prod = mul_rows(rows, mono)
        np.add.at(out[:, k], owner, definite_rows(prod, h))
    return out
