"""Command-line front end: ``daafd decompose | verify | interp | infprod``.

Exit codes: 0 success, 1 parse or validation error, 2 division-precondition
abort (``decompose``) or failed checks (``verify``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import blaschke, infprod, interp, seriescore
from .engine import (DecompositionReport, DivisionError, EngineConfig, energy_rows, replay,
                     run_decomposition)
from .selector import SearchConfig

log = logging.getLogger("daafd")

EXIT_OK, EXIT_PARSE, EXIT_ABORT = 0, 1, 2


class InputError(Exception):
    """Unreadable or invalid input file."""


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    max_steps: int = 50
    ranks: Union[int, List[int]] = 1
    budget: int = 2000
    degree: Optional[int] = None
    r_max: float = 0.95
    stop_tol: float = 1e-6
    ledger_tol: float = 1e-6
    div_tol: float = 1e-8
    seed: int = 42
    threads: int = 1
    search: dict = field(default_factory=dict)
    out: Optional[str] = None
    energies: Optional[str] = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.degree is not None and self.degree < 2:
            raise ValueError("degree must be >= 2")
        if not 0 < self.r_max < 1:
            raise ValueError("r_max must lie in (0, 1)")
        for name in ("stop_tol", "ledger_tol", "div_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ValueError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj)

    def engine_config(self) -> EngineConfig:
        extra = dict(self.search)
        search = SearchConfig(budget=self.budget, r_max=self.r_max, seed=self.seed,
                              threads=self.threads, **extra)
        return EngineConfig(max_steps=self.max_steps, ranks=self.ranks, degree=self.degree,
                            stop_tol=self.stop_tol, ledger_tol=self.ledger_tol,
                            div_tol=self.div_tol, search=search)


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _threads(arg: Optional[int]) -> Optional[int]:
    if arg is not None:
        return arg
    env = os.environ.get("DAAFD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"DAAFD_THREADS must be an integer, got {env!r}")
    return None


# -- decompose -------------------------------------------------------------------


def energy_header(N: int) -> List[str]:
    coords = [f"w{u + 1}_{part}" for u in range(N) for part in ("re", "im")]
    return ["step", *coords, "rank", "term_energy", "residual_energy", "ledger_defect"]


def write_energies(report: DecompositionReport, path: str) -> None:
    _write_csv(path, energy_header(report.F.N), energy_rows(report))


def cmd_decompose(args) -> int:
    if args.replay:
        report = DecompositionReport.from_dict(_read_json(args.replay))
        try:
            again = replay(report)
        except DivisionError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ABORT
        if args.energies:
            write_energies(again, args.energies)
        if args.out:
            _write_json(args.out, again.to_dict())
        return EXIT_OK
    if not args.input:
        raise InputError("--input is required unless --replay is given")
    try:
        F = seriescore.series_from_dict(_read_json(args.input))
    except ValueError as exc:
        raise InputError(f"{args.input}: {exc}") from exc
    cfg_obj = _read_json(args.config) if args.config else {}
    try:
        rc = RunConfig.from_dict(cfg_obj)
        if args.seed is not None:
            rc.seed = args.seed
        threads = _threads(args.threads)
        if threads is not None:
            rc.threads = threads
        cfg = rc.engine_config()
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from exc
    out = args.out or rc.out
    energies = args.energies or rc.energies

    def progress(step):
        log.info("step %d: |w| = %.4f, term %.6g, residual %.6g", step.k,
                 float(np.linalg.norm(step.w)), step.term_energy, step.residual_energy)

    try:
        report = run_decomposition(F, cfg, progress=progress)
    except DivisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if out:
        _write_json(out, report.to_dict())
    if energies:
        write_energies(report, energies)
    return EXIT_OK


# -- verify ------------------------------------------------------------------------

VERIFY_TOL = {
    "kernel_identity": 1e-10,
    "formula_agreement": 1e-12,
    "coisometry": 1e-8,
    "gleason": 1e-12,
    "remark_eigen": 1e-12,
}


def _sphere(rng, N):
    z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return z / np.linalg.norm(z)


def _ball(rng, N, rmax=0.999):
    return _sphere(rng, N) * rmax * rng.uniform() ** (1 / (2 * N))


def run_checks(ncases: int, seed: int, dims=(1, 2, 3), fault: bool = False) -> List[list]:
    """Rows ``[check, N, cases, max_residual, tolerance, ok]``."""
    rows = []
    if ncases <= 0:
        return rows
    rng = np.random.default_rng(seed)
    for N in dims:
        res = {k: 0.0 for k in VERIFY_TOL}
        for _ in range(ncases):
            a, z, w = _ball(rng, N), _ball(rng, N), _ball(rng, N)
            res["kernel_identity"] = max(res["kernel_identity"],
                                         blaschke.kernel_identity_residual(a, z, w))
            dev = np.abs(blaschke.blaschke_vector(a, z) - blaschke.blaschke_vector_rudin(a, z))
            res["formula_agreement"] = max(res["formula_agreement"], float(dev.max()))
            n = int(rng.integers(1, 4))
            c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            B = blaschke.elementary_factor(a, c).evaluate(_sphere(rng, N))
            res["coisometry"] = max(res["coisometry"], float(np.linalg.norm(B @ np.conj(B.T) - np.eye(n), 2)))
            if N > 1:
                f = seriescore.random_polynomial(rng, N, 1, 1, 4, max_degree=4)
                zz = _ball(rng, N, 0.99)
                lhs = f(zz) - f(np.zeros(N))
                rhs = sum(zz[u] * seriescore.gleason_Ru(f, u)(zz) for u in range(N))
                res["gleason"] = max(res["gleason"], float(np.abs(lhs - rhs).max()))
            res["remark_eigen"] = max(res["remark_eigen"], infprod.remark_direction_residual(a))
        if fault:
            res["kernel_identity"] += 1.0
        for name, tol in VERIFY_TOL.items():
            if name == "gleason" and N == 1:
                continue
            rows.append([name, N, ncases, res[name], tol, res[name] <= tol])
    return rows


def cmd_verify(args) -> int:
    rows = run_checks(args.ncases, args.seed, fault=args.inject_fault)
    header = ["check", "N", "cases", "max_residual", "tolerance", "ok"]
    if args.out:
        _write_csv(args.out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_ABORT


# -- interp --------------------------------------------------------------------------


def cmd_interp(args) -> int:
    try:
        problem = interp.InterpolationProblem.from_dict(_read_json(args.input))
    except ValueError as exc:
        raise InputError(f"{args.input}: {exc}") from exc
    chain = interp.solve_multi(problem, skip_tol=args.skip_tol)
    residuals = [float(np.linalg.norm(np.conj(problem.vectors[j]) @ chain.evaluate(problem.points[j])))
                 for j in range(problem.M)]
    out = chain.to_dict()
    out["condition_residuals"] = residuals
    out["verified"] = bool(max(residuals) <= 1e-9)
    if args.out:
        _write_json(args.out, out)
    else:
        json.dump(out, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


# -- infprod ---------------------------------------------------------------------------


def _points_from(obj, key: str):
    if isinstance(obj, dict):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
        obj = obj[key]
    return blaschke.decode_complex(obj)


def cmd_infprod(args) -> int:
    try:
        pobj = _read_json(args.points)
        pts = np.atleast_2d(_points_from(pobj, "points"))
        us = None
        if isinstance(pobj, dict) and "unitaries" in pobj:
            us = [None if u is None else blaschke.decode_complex(u) for u in pobj["unitaries"]]
        z = _points_from(_read_json(args.z), "z")
        if z.ndim != 1:
            raise ValueError("z must be a single point")
        seq = infprod.NormalizedFactorSeq(pts, us)
        m_max = len(seq) if args.m_max is None else args.m_max
        if z.size != seq.N:
            raise ValueError(f"z has {z.size} coordinates, points have {seq.N}")
        if float(np.linalg.norm(z)) >= 1:
            raise ValueError("z must lie in the open ball")
        rep = infprod.convergence_report(seq, z, m_max)
    except (ValueError, TypeError, IndexError) as exc:
        raise InputError(str(exc)) from exc
    if rep["tail_flagged"]:
        print("warning: the summability terms show no decay along the prefix", file=sys.stderr)
    rows = [[r[c] for c in infprod.CSV_COLUMNS] for r in rep["rows"]]
    _write_csv(args.out, infprod.CSV_COLUMNS, rows)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="daafd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="adaptive decomposition of a function file")
    d.add_argument("--input", help="function JSON")
    d.add_argument("--config", help="run configuration JSON")
    d.add_argument("--out", help="report JSON")
    d.add_argument("--energies", help="per-step energies CSV")
    d.add_argument("--seed", type=int)
    d.add_argument("--threads", type=int, help="scan workers (fallback: DAAFD_THREADS)")
    d.add_argument("--replay", metavar="REPORT", help="recompute energies from a stored report")
    d.set_defaults(func=cmd_decompose)

    v = sub.add_parser("verify", help="randomised identity checks")
    v.add_argument("--ncases", type=int, default=1000)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--out", help="CSV path (default: stdout)")
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("interp", help="Blaschke chain for interpolation conditions")
    i.add_argument("--input", required=True, help="problem JSON {points, vectors}")
    i.add_argument("--out", help="chain JSON (default: stdout)")
    i.add_argument("--skip-tol", type=float, default=interp.SKIP_TOL)
    i.set_defaults(func=cmd_interp)

    q = sub.add_parser("infprod", help="infinite-product diagnostics")
    q.add_argument("--points", required=True)
    q.add_argument("--z", required=True)
    q.add_argument("--m-max", type=int)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_infprod)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
