"""Command-line front end: ``singspec <command> [flags]``.

Every flag may also come from a JSON ``--config`` file; flags given on the
command line win. Outputs are CSV files plus ``manifest.json``; failures
print a JSON error object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__, oracles
from .decompose import SigmaTau, decompose, decompose_periodic
from .floquet import THETA_GRID, band_edges, dispersion, theta_eigenvalues_many, unit_cell
from .galerkin import DEFAULT_H, DEFAULT_L, DEFAULT_SEED, convergence_experiment, gamma_bound, window_range
from .io import dumps_sigma_tau, parse_spec
from .pw_calculus import DistributionW1
from .quasi_ode import DEFAULT_TOL, Coefficients, monodromy_many

COMMANDS = ("decompose", "bands", "dispersion", "eigs", "converge", "kp-check")


@dataclass
class RunConfig:
    command: str = "bands"
    potential: str | None = None
    out: str = "out"
    tol: float = DEFAULT_TOL
    lambda_min: float = -1.0
    lambda_max: float = 60.0
    theta_grid: int = THETA_GRID
    mesh_h: float = DEFAULT_H
    L: float = DEFAULT_L
    seed: int = DEFAULT_SEED
    n_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    n_min: int | None = None
    n_max: int | None = None
    alpha: float = 1.0
    a: float = 1.0

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        for name in ("tol", "mesh_h", "L", "a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name.replace('_', '-')} must be positive")
        if self.theta_grid < 1:
            raise ValueError("theta-grid must be positive")
        if not self.lambda_min < self.lambda_max:
            raise ValueError("lambda range is empty")
        if not self.n_list or any(int(n) < 1 for n in self.n_list):
            raise ValueError("n-list needs positive mollifier levels")
        if self.command not in ("kp-check",) and not self.potential:
            raise ValueError(f"{self.command} needs --potential")


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("SINGSPEC_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """``map`` that may run in threads but always returns results in input order."""
    items = list(items)
    n = min(thread_cap(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows, comments=()) -> None:
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------


def _split(q: DistributionW1, cfg: RunConfig) -> SigmaTau:
    if q.is_periodic:
        return decompose_periodic(q)
    r = window_range(q)
    lo = cfg.n_min if cfg.n_min is not None else (r.start if len(r) else 0)
    hi = cfg.n_max if cfg.n_max is not None else (r.stop - 1 if len(r) else 0)
    return decompose(q, lo, hi)


def _periodic_cell(cfg: RunConfig):
    q = parse_spec(cfg.potential)
    if not q.is_periodic:
        raise ValueError("band computations need a periodic potential")
    st = decompose_periodic(q)
    sigma, tau, a = unit_cell(st.sigma, st.tau)
    return Coefficients(sigma, tau, 0.0), a


def _bands(cfg: RunConfig):
    c, a = _periodic_cell(cfg)
    # spectral parameters scale by a^2 on the unit cell
    s = a * a
    bands = band_edges(c, cfg.lambda_min * s, cfg.lambda_max * s, cfg.tol)
    return c, s, bands


def cmd_decompose(cfg: RunConfig, out: Path) -> dict:
    q = parse_spec(cfg.potential)
    st = _split(q, cfg)
    (out / "sigma_tau.json").write_text(dumps_sigma_tau(st))
    prov = [{"n": n, "a_n": a} for n, a in st.provenance]
    (out / "provenance.json").write_text(json.dumps(prov, indent=2) + "\n")
    return {"windows": len(prov), "gamma_bound": gamma_bound(st)}


def cmd_bands(cfg: RunConfig, out: Path) -> dict:
    _, s, bands = _bands(cfg)
    write_csv(out / "bands.csv", ["k", "lo", "hi", "gap_after"],
              [(b.k, b.lo / s, b.hi / s, b.gap_after / s) for b in bands])
    return {"bands": len(bands)}


def _theta_grid(n: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n) / n


def cmd_dispersion(cfg: RunConfig, out: Path) -> dict:
    c, s, bands = _bands(cfg)
    th = _theta_grid(cfg.theta_grid)
    branches = ordered_map(lambda b: dispersion(c, b.k, th, b, cfg.tol), bands)
    rows = [(br.k, t, lam / s) for br in branches for t, lam in br.samples]
    write_csv(out / "dispersion.csv", ["k", "theta", "lambda"], rows)
    return {"branches": len(branches), "samples": len(rows)}


def cmd_eigs(cfg: RunConfig, out: Path) -> dict:
    c, s, bands = _bands(cfg)
    th = _theta_grid(cfg.theta_grid)
    # one batch for all angles: adaptive steps depend on the batch, so splitting
    # it by thread count would change the last digits
    eigs = theta_eigenvalues_many(c, th, cfg.lambda_max * s, cfg.tol, bands)
    rows = [(t, k + 1, lam / s) for t, lams in zip(th, eigs) for k, lam in enumerate(lams)]
    write_csv(out / "eigs.csv", ["theta", "k", "lambda"], rows)
    return {"rows": len(rows)}


def cmd_converge(cfg: RunConfig, out: Path) -> dict:
    q = parse_spec(cfg.potential)
    rep = convergence_experiment(q, None, [int(n) for n in cfg.n_list], L=cfg.L, h=cfg.mesh_h)
    write_csv(out / "convergence.csv", ["n", "w_norm_gap", "resolvent_gap", "ratio"],
              [(r.n, r.w_norm_gap, r.resolvent_gap, r.ratio) for r in rep.rows],
              comments=[f"h={_fmt(rep.h)} L={_fmt(rep.L)} lambda={_fmt(rep.lam)} seed={cfg.seed}", rep.note])
    return {"lambda": rep.lam, "rows": len(rep.rows)}


def cmd_kp_check(cfg: RunConfig, out: Path) -> dict:
    m = oracles.KPModel(cfg.alpha, cfg.a)
    comb = DistributionW1.comb(cfg.alpha, cfg.a)
    st = decompose_periodic(comb)
    lams = np.linspace(-5.0, 60.0, 50)
    M = monodromy_many(st.sigma, st.tau, lams, cfg.tol)
    ref = np.array([oracles.kp_quasi_monodromy(m, x) for x in lams])
    dev = np.max(np.abs(M - ref), axis=(1, 2))
    write_csv(out / "kp_check.csv", ["lambda", "max_entry_deviation"], zip(lams, dev))
    worst = float(np.max(dev))
    print(json.dumps({"max_deviation": worst, "lambdas": int(lams.size)}))
    return {"max_deviation": worst}


HANDLERS = {
    "decompose": cmd_decompose,
    "bands": cmd_bands,
    "dispersion": cmd_dispersion,
    "eigs": cmd_eigs,
    "converge": cmd_converge,
    "kp-check": cmd_kp_check,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singspec", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file supplying any of the flags below")
    p.add_argument("--potential", help="potential file (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tol", type=float)
    p.add_argument("--lambda-min", dest="lambda_min", type=float)
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.add_argument("--theta-grid", dest="theta_grid", type=int)
    p.add_argument("--mesh-h", dest="mesh_h", type=float)
    p.add_argument("--L", dest="L", type=float)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--n-list", dest="n_list", type=lambda s: [int(x) for x in s.split(",")],
                   help="comma-separated mollifier levels")
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--alpha", type=float, help="comb strength for kp-check")
    p.add_argument("--a", dest="a", type=float, help="comb spacing for kp-check")
    return p


def make_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(RunConfig)}
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown config keys {sorted(bad)}")
        values.update(data)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = HANDLERS[cfg.command](cfg, out)
    manifest = {
        "config": asdict(cfg),
        "summary": summary,
        "versions": {
            "singspec": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "threads": thread_cap(),
        "wall_time_s": time.perf_counter() - t0,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return 0


def main(argv=None) -> int:
    try:
        cfg = make_config(argv)
        return run(cfg)
    except SystemExit:
        raise
    except Exception as exc:  # report every module error in one machine-readable shape
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
