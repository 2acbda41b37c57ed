"""Potential files: JSON text with ``period``, ``g``, ``h`` and ``atoms``.

``g`` and ``h`` are ``{"breakpoints": [...], "polys": [[c0, c1, ...], ...]}``
with polynomials in the global variable. Aperiodic parts have one poly per
gap between breakpoints and may also carry ``left_tail`` / ``right_tail``
polynomials. Periodic parts list one cell: one poly per breakpoint, the last
running up to the first breakpoint plus the period.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .decompose import SigmaTau
from .pw_calculus import DistributionW1, PiecewiseFunction


class SpecError(ValueError):
    """Invalid potential file; the message carries the offending line."""


_KEYS = {"period", "g", "h", "atoms"}
_PIECE_KEYS = {"breakpoints", "polys", "left_tail", "right_tail"}


def _line_of(text: str, pattern: str, start: int = 0) -> tuple[int, str]:
    m = re.compile(pattern).search(text, start)
    if m is None:
        return 0, ""
    lineno = text.count("\n", 0, m.start()) + 1
    return lineno, text.splitlines()[lineno - 1].strip()


def _fail(text: str, msg: str, pattern: str | None, start: int = 0):
    if pattern is not None:
        lineno, line = _line_of(text, pattern, start)
        if lineno:
            raise SpecError(f"line {lineno}: {msg}\n    {line}")
    raise SpecError(msg)


def _key_pos(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return m.start() if m else 0


def _pieces(text: str, name: str, obj, period) -> PiecewiseFunction:
    here = _key_pos(text, name)
    if obj is None:
        return PiecewiseFunction.zero(period)
    if not isinstance(obj, dict):
        _fail(text, f"part {name!r} must be an object with breakpoints and polys", r'"%s"' % name)
    unknown = set(obj) - _PIECE_KEYS
    if unknown:
        _fail(text, f"part {name!r}: unknown keys {sorted(unknown)}", r'"%s"' % name)
    bps = obj.get("breakpoints", [])
    polys = obj.get("polys", [])
    if not bps and not polys:
        return PiecewiseFunction.zero(period)
    try:
        b = np.asarray(bps, dtype=float)
        rows = [np.asarray(p, dtype=float) for p in polys]
    except (TypeError, ValueError):
        _fail(text, f"part {name!r}: breakpoints and polys must be numbers", r'"breakpoints"', here)
    if b.ndim != 1 or np.any(~np.isfinite(b)):
        _fail(text, f"part {name!r}: breakpoints must be a flat list of finite numbers", r'"breakpoints"', here)
    if np.any(np.diff(b) <= 0):
        _fail(text, f"part {name!r}: breakpoints not increasing", r'"breakpoints"', here)
    if period is None and len(rows) != max(0, b.size - 1):
        _fail(text, f"part {name!r}: {len(rows)} polys for {b.size} breakpoints "
                    f"(need one fewer)", r'"polys"', here)
    if period is not None:
        if "left_tail" in obj or "right_tail" in obj:
            _fail(text, f"part {name!r}: periodic parts take no tails", r'"(left|right)_tail"', here)
        if len(rows) != b.size:
            _fail(text, f"part {name!r}: periodic parts need one poly per breakpoint", r'"polys"', here)
        if b[-1] >= b[0] + period:
            _fail(text, f"part {name!r}: breakpoints exceed one period cell", r'"breakpoints"', here)
    try:
        return PiecewiseFunction.from_global(b, rows, obj.get("left_tail"), obj.get("right_tail"), period)
    except ValueError as exc:
        _fail(text, f"part {name!r}: {exc}", r'"%s"' % name)


def loads_spec(text: str) -> DistributionW1:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1].strip() if 0 < exc.lineno <= len(lines) else ""
        raise SpecError(f"line {exc.lineno}, column {exc.colno}: malformed JSON ({exc.msg})\n    {line}") from None
    if not isinstance(data, dict):
        raise SpecError("line 1: top level must be an object")
    unknown = set(data) - _KEYS
    if unknown:
        _fail(text, f"unknown keys {sorted(unknown)}", r'"(%s)"' % "|".join(map(re.escape, sorted(unknown))))
    period = data.get("period")
    if period is not None:
        if not isinstance(period, (int, float)) or not period > 0:
            _fail(text, "period must be a positive number or null", r'"period"')
        period = float(period)
    g = _pieces(text, "g", data.get("g"), period)
    h = _pieces(text, "h", data.get("h"), period)
    atoms = data.get("atoms") or []
    try:
        atoms = [(float(x), float(c)) for x, c in atoms]
    except (TypeError, ValueError):
        _fail(text, "atoms must be a list of [x, c] pairs", r'"atoms"')
    xs = sorted(x for x, _ in atoms)
    for x0, x1 in zip(xs, xs[1:]):
        if x1 - x0 <= 1e-12 * max(1.0, abs(x0)):
            _fail(text, f"duplicate atom at x={x0:.17g}", r'"atoms"')
    try:
        return DistributionW1(g, h, tuple(atoms), period)
    except ValueError as exc:
        _fail(text, str(exc), r'"atoms"')


def parse_spec(path) -> DistributionW1:
    """Read and validate a potential file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {p}: {exc.strerror}") from None
    try:
        return loads_spec(text)
    except SpecError as exc:
        raise SpecError(f"{p}: {exc}") from None


def _num(x: float):
    # 17 significant digits, integers kept short
    v = float(f"{x:.17g}")
    return int(v) if v.is_integer() and abs(v) < 2**53 else v


def _pieces_obj(f: PiecewiseFunction) -> dict:
    d = f.global_pieces()
    return {k: ([_num(x) for x in v] if k != "polys" else [[_num(c) for c in r] for r in v]) for k, v in d.items()}


def spec_dict(q: DistributionW1) -> dict:
    return {
        "period": None if q.period is None else _num(q.period),
        "g": _pieces_obj(q.g),
        "h": _pieces_obj(q.h),
        "atoms": [[_num(x), _num(c)] for x, c in q.atoms],
    }


def dumps_spec(q: DistributionW1) -> str:
    return json.dumps(spec_dict(q), indent=2) + "\n"


def dump_spec(q: DistributionW1, path) -> None:
    Path(path).write_text(dumps_spec(q))


def dumps_sigma_tau(st: SigmaTau) -> str:
    """SigmaTau in the potential format: sigma as the ``g`` part, tau as ``h``."""
    return dumps_spec(DistributionW1(g=st.sigma, h=st.tau, period=st.sigma.period))
