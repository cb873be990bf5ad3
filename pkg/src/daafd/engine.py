"""Adaptive decomposition of matrix-valued Drury-Arveson functions.

Each step selects ``(w_k, P_k)`` by maximum selection against the chain
accumulated so far, splits off the kernel term carrying ``P_k F_k(w_k)``,
and divides the remainder by the block ``B_{w_k,P_k}`` that encodes the
condition ``P_k H(w_k) = 0``.  After ``u`` steps

    F = sum_k  C_k(z) H0_k(z) + C_{u+1}(z) F_{u+1}(z)

where ``C_k`` is the chain of the first ``k`` blocks.

All series are polynomials of degree ``<= D``.  The kernel term is built
with the degree-``D`` section of the reproducing kernel, which reproduces
``F_k(w_k)`` exactly on polynomials; hence ``P_k H(w_k) = 0`` holds exactly,
the division by the block is an exact inversion of a partial isometry, and
the energy ledger closes to rounding error.  The price is a small distance
between the polynomial kernel term and the rational one
``P F(w) sqrt(1-|w|^2) e_w``; it is reported per step as ``section_gap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .blaschke import (BlaschkeChain, cauchy_kernel_normalized, chain_from_dict,
                       decode_complex, encode_complex)
from .interp import InterpolationProblem, solve_multi
from .selector import CandidateSet, Projection, SearchConfig, select_max
from .seriescore import (PowerSeries, da_inner, da_norm, expand_cauchy, random_ball_points,
                         series_from_dict, series_to_dict, truncate)


class DivisionError(RuntimeError):
    """The function handed to a division step is not in the range of the factor."""

    def __init__(self, message: str, step: Optional[int] = None, residual: float = math.nan):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.residual = residual


@dataclass
class EngineConfig:
    """Parameters of :func:`run_decomposition`.

    ``ranks`` is a constant rank or a per-step schedule (the last entry is
    reused once the schedule runs out).  ``degree`` defaults to the degree
    bound of the input.
    """

    max_steps: int = 50
    ranks: Union[int, Sequence[int]] = 1
    degree: Optional[int] = None
    stop_tol: float = 1e-6
    ledger_tol: float = 1e-6
    div_tol: float = 1e-8
    admissible: bool = True
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        for name in ("stop_tol", "ledger_tol", "div_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.degree is not None and self.degree < 2:
            raise ValueError("degree must be >= 2")
        sched = [self.ranks] if np.isscalar(self.ranks) else list(self.ranks)
        if not sched or any(int(r) < 1 for r in sched):
            raise ValueError("ranks must be positive")
        if self.search.budget < 1:
            raise ValueError("search budget must be >= 1")

    def rank(self, k: int) -> int:
        if np.isscalar(self.ranks):
            return int(self.ranks)
        sched = list(self.ranks)
        return int(sched[min(k, len(sched) - 1)])

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "search"}
        if not np.isscalar(out["ranks"]):
            out["ranks"] = [int(r) for r in out["ranks"]]
        out["search"] = dict(self.search.__dict__)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "EngineConfig":
        obj = dict(obj)
        search = SearchConfig(**obj.pop("search", {}))
        return cls(search=search, **obj)


@dataclass(frozen=True, eq=False)
class DecompositionStep:
    """Record of one step; ``M = P F_k(w)`` and ``block`` is ``B_{w,P}``."""

    k: int
    w: np.ndarray
    P: Projection
    M: np.ndarray
    block: BlaschkeChain
    term_energy: float
    residual_energy: float
    ledger_defect: float
    section_gap: float
    division_residual: float
    selection_value: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.P.r

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "w": encode_complex(self.w),
            "V": encode_complex(self.P.V),
            "M": encode_complex(self.M),
            "block": self.block.to_dict(),
            "term_energy": self.term_energy,
            "residual_energy": self.residual_energy,
            "ledger_defect": self.ledger_defect,
            "section_gap": self.section_gap,
            "division_residual": self.division_residual,
            "selection_value": self.selection_value,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecompositionStep":
        return cls(k=int(obj["k"]), w=decode_complex(obj["w"]),
                   P=Projection(decode_complex(obj["V"])), M=decode_complex(obj["M"]),
                   block=chain_from_dict(obj["block"]),
                   term_energy=float(obj["term_energy"]),
                   residual_energy=float(obj["residual_energy"]),
                   ledger_defect=float(obj["ledger_defect"]),
                   section_gap=float(obj["section_gap"]),
                   division_residual=float(obj["division_residual"]),
                   selection_value=float(obj["selection_value"]),
                   diagnostics=dict(obj.get("diagnostics", {})))


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    F: PowerSeries
    config: EngineConfig
    steps: List[DecompositionStep]
    initial_energy: float
    residual: PowerSeries
    samples: List[dict] = field(default_factory=list)

    @property
    def final_residual_energy(self) -> float:
        return self.steps[-1].residual_energy if self.steps else self.initial_energy

    @property
    def tail_budget(self) -> float:
        return float(sum(s.section_gap for s in self.steps))

    def chain(self, k: int) -> BlaschkeChain:
        """Chain of the first ``k`` blocks."""
        out = BlaschkeChain(self.F.rows, self.F.N)
        for s in self.steps[:k]:
            out = out.extend(s.block)
        return out

    def term_series(self, k: int) -> PowerSeries:
        s = self.steps[k]
        return kernel_term(s.w, s.M, self.residual.max_degree)

    def to_dict(self) -> dict:
        return {
            "input": series_to_dict(self.F),
            "config": self.config.to_dict(),
            "initial_energy": self.initial_energy,
            "final_residual_energy": self.final_residual_energy,
            "tail_budget": self.tail_budget,
            "steps": [s.to_dict() for s in self.steps],
            "residual": series_to_dict(self.residual),
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecompositionReport":
        try:
            return cls(F=series_from_dict(obj["input"]),
                       config=EngineConfig.from_dict(obj["config"]),
                       steps=[DecompositionStep.from_dict(s) for s in obj["steps"]],
                       initial_energy=float(obj["initial_energy"]),
                       residual=series_from_dict(obj["residual"]),
                       samples=list(obj.get("samples", [])))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed report: {exc!r}") from exc


# -- single-step building blocks ----------------------------------------------


def kernel_section(w, D: int) -> PowerSeries:
    """``k_w^D(z) = sum_{j<=D} <z,w>^j``, the degree-``D`` section of the kernel."""
    e = expand_cauchy(w, D)
    return PowerSeries.from_dense(e.basis, e.data)


def kernel_term(w, M, D: int) -> PowerSeries:
    """``M k_w^D / k_w^D(w)``: the polynomial carrying the value ``M`` at ``w``."""
    w = np.asarray(w, dtype=complex).ravel()
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    k = kernel_section(w, D)
    s = float(np.vdot(w, w).real)
    norm2 = float(D + 1) if s == 1 else (1 - s ** (D + 1)) / (1 - s)
    data = k.data[:, :, :1] * (M[None] / norm2)
    return PowerSeries.from_dense(k.basis, data)


def section_gap(w, M, D: int) -> float:
    """Squared distance between the polynomial and the rational kernel term."""
    s = float(np.vdot(np.ravel(w), np.ravel(w)).real)
    m2 = float(np.vdot(M, M).real)
    if s == 0:
        return 0.0
    return m2 * (1 - s) * s ** (D + 1) / (1 - s ** (D + 1))


def extract_term(F: PowerSeries, w, P: Projection):
    """Split ``F = H0 + H`` with ``H0`` carrying ``P F(w)`` and ``P H(w) = 0``.

    Returns ``(H0, H)``; the two parts are orthogonal and ``[F,F] =
    [H0,H0] + [H,H]`` up to rounding.
    """
    w = np.asarray(w, dtype=complex).ravel()
    if P.d != F.rows:
        raise ValueError(f"projection of size {P.d} does not act on {F!r}")
    V = P.V
    M = V @ (np.conj(V.T) @ F(w))
    H0 = kernel_term(w, M, F.max_degree)
    return H0, F - H0


def block_factor(w, P: Projection) -> BlaschkeChain:
    """Block ``B_{w,P}`` whose range is ``{h : P h(w) = 0}``."""
    w = np.asarray(w, dtype=complex).ravel()
    pts = np.broadcast_to(w, (P.r, w.size))
    return solve_multi(InterpolationProblem(pts, P.V.T))


def _divide(H: PowerSeries, factor, scale: float = 0.0):
    # residual relative to max(|H|, scale); inside the loop ``scale`` is |F_k|, so an H
    # that is pure rounding noise (a term that captured everything) is not flagged
    F_next = factor.adjoint_apply(H)
    denom = max(da_norm(H), scale)
    if denom == 0:
        return F_next, 0.0
    back = factor.apply(F_next)
    resid = da_norm(back - H) / denom
    return F_next, resid


def divide_by_factor(H: PowerSeries, factor, D: Optional[int] = None,
                     div_tol: float = 1e-8, step: Optional[int] = None) -> PowerSeries:
    """Minimal-norm ``G`` with ``factor * G = H``.

    ``factor`` is a :class:`BlaschkeFactor` or a :class:`BlaschkeChain`.
    Multiplication by the factor is a partial isometry, so its adjoint (which
    maps polynomials of degree ``<= D`` to polynomials of degree ``<= D``)
    inverts it on its range.  Raises :class:`DivisionError` if ``factor * G``
    misses ``H`` by more than ``10 div_tol`` relative, which signals that
    ``H`` was not in the range.
    """
    if D is not None and D != H.max_degree:
        H = truncate(H, D)
    F_next, resid = _divide(H, factor)
    if resid > 10 * div_tol:
        raise DivisionError(f"range residual {resid:.3e} exceeds {10 * div_tol:.1e}",
                            step=step, residual=resid)
    return F_next


# -- the loop ------------------------------------------------------------------


def _energy(F: PowerSeries) -> float:
    return float(np.vdot(F.data * np.sqrt(F.basis.weights)[:, None, None],
                         F.data * np.sqrt(F.basis.weights)[:, None, None]).real)


def _step(k, Fk, w, P, D, div_tol, total, captured):
    M = P.V @ (np.conj(P.V.T) @ Fk(w))
    H0 = kernel_term(w, M, D)
    H = Fk - H0
    block = block_factor(w, P)
    F_next, resid = _divide(H, block, da_norm(Fk))
    if resid > 10 * div_tol:
        raise DivisionError(f"range residual {resid:.3e} exceeds {10 * div_tol:.1e}",
                            step=k, residual=resid)
    term = _energy(H0)
    res_e = _energy(F_next)
    defect = total - (captured + term) - res_e
    return M, block, F_next, term, res_e, defect, resid


def _sample_points(N: int, count: int = 8) -> np.ndarray:
    return random_ball_points(np.random.default_rng(7), count, N, rmax=0.9)


def run_decomposition(F: PowerSeries, config: Optional[EngineConfig] = None,
                      progress=None) -> DecompositionReport:
    """Run the adaptive decomposition of ``F``.

    Stops after ``config.max_steps`` steps or once the residual energy drops
    below ``stop_tol * ||F||^2``.  ``progress`` (optional) is called with each
    new :class:`DecompositionStep`.
    """
    cfg = config or EngineConfig()
    D = cfg.degree if cfg.degree is not None else F.max_degree
    Fk = truncate(F, D) if D != F.max_degree else F
    total = _energy(Fk)
    steps: List[DecompositionStep] = []
    n = F.rows
    chain = BlaschkeChain(n, F.N)
    candidates = CandidateSet(F.N, n, cfg.search) if total > 0 and cfg.max_steps else None
    captured = 0.0
    for k in range(cfg.max_steps if total > 0 else 0):
        sel = select_max(chain, Fk, cfg.rank(k), cfg.search, admissible=cfg.admissible,
                         candidates=candidates)
        if sel.P.r == 0 or sel.value <= 0:
            break
        M, block, F_next, term, res_e, defect, resid = _step(
            k, Fk, sel.w, sel.P, D, cfg.div_tol, total, captured)
        diag = {key: sel.diagnostics[key] for key in ("candidates", "refine_iterations",
                                                       "scan_value") if key in sel.diagnostics}
        step = DecompositionStep(k=k, w=np.asarray(sel.w), P=sel.P, M=M, block=block,
                                 term_energy=term, residual_energy=res_e, ledger_defect=defect,
                                 section_gap=section_gap(sel.w, M, D), division_residual=resid,
                                 selection_value=float(sel.value), diagnostics=diag)
        steps.append(step)
        if progress is not None:
            progress(step)
        captured += term
        chain = chain.extend(block)
        for f in block.factors:
            candidates.push(f)
        Fk = F_next
        if res_e <= cfg.stop_tol * total:
            break
    report = DecompositionReport(F=F, config=cfg, steps=steps, initial_energy=total,
                                 residual=Fk)
    report.samples.extend(reconstruction_samples(report))
    return report


def replay(report: DecompositionReport) -> DecompositionReport:
    """Recompute every step from the stored ``w_k`` and ``P_k`` (no search)."""
    cfg = report.config
    D = report.residual.max_degree
    F = report.F
    Fk = truncate(F, D) if D != F.max_degree else F
    total = _energy(Fk)
    captured = 0.0
    steps = []
    for old in report.steps:
        M, block, F_next, term, res_e, defect, resid = _step(
            old.k, Fk, old.w, old.P, D, cfg.div_tol, total, captured)
        steps.append(replace(old, M=M, block=block, term_energy=term, residual_energy=res_e,
                             ledger_defect=defect, section_gap=section_gap(old.w, M, D),
                             division_residual=resid))
        captured += term
        Fk = F_next
    out = DecompositionReport(F=F, config=cfg, steps=steps, initial_energy=total, residual=Fk)
    out.samples.extend(reconstruction_samples(out))
    return out


# -- evaluation and checks -----------------------------------------------------


def reconstruct(report: DecompositionReport, z, upto: Optional[int] = None) -> np.ndarray:
    """Partial sum of the first ``upto + 1`` terms at ``z`` (rational evaluation).

    Term ``k`` is ``sqrt(1-|w_k|^2) e_{w_k}(z) C_k(z) M_k``.  ``upto = -1``
    gives zero; ``None`` uses every step.  ``z`` may be one point or a batch.
    """
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    n, m = report.F.shape
    out = np.zeros((zz.shape[0], n, m), dtype=complex)
    last = len(report.steps) - 1 if upto is None else min(upto, len(report.steps) - 1)
    chain_val = np.broadcast_to(np.eye(n, dtype=complex), (zz.shape[0], n, n))
    for s in report.steps[: last + 1]:
        sw = float(np.vdot(s.w, s.w).real)
        ker = np.sqrt(1 - sw) * cauchy_kernel_normalized(s.w, zz)
        out += ker[:, None, None] * (chain_val @ s.M)
        chain_val = np.matmul(chain_val, s.block.evaluate(zz))
    return out[0] if single else out


def reconstruction_samples(report: DecompositionReport, points=None) -> List[dict]:
    """Pointwise errors of the full reconstruction at a few fixed points.

    Each record carries the error and the bound
    ``(||R|| + sum_k sqrt(gap_k)) / sqrt(1-|z|^2)`` that it must respect.
    """
    F = report.F
    pts = _sample_points(F.N) if points is None else np.atleast_2d(points)
    approx = reconstruct(report, pts)
    exact = F(pts)
    slack = math.sqrt(max(report.final_residual_energy, 0.0)) + \
        sum(math.sqrt(s.section_gap) for s in report.steps)
    out = []
    for z, a, e in zip(pts, approx, exact):
        sz = float(np.vdot(z, z).real)
        out.append({"z": encode_complex(z),
                    "error": float(np.linalg.norm(e - a)),
                    "bound": slack / math.sqrt(1 - sz)})
    return out


def term_pairings(report: DecompositionReport) -> np.ndarray:
    """Matrix of ``|<T_k, T_l>|`` (``k < l``, upper triangle).

    ``T_k = C_k H0_k``; the pairing is evaluated as
    ``<H0_k, B_k ... B_{l-1} H0_l>`` with every product kept to degree ``D``,
    which is exact for the degree-``D`` polynomial ``H0_k``.
    """
    steps = report.steps
    L = len(steps)
    out = np.zeros((L, L))
    H0 = [report.term_series(k) for k in range(L)]
    for l in range(1, L):
        G = H0[l]
        for k in range(l - 1, -1, -1):
            G = steps[k].block.apply(G)
            out[k, l] = abs(da_inner(G, H0[k]))
    return out


def pairing_bounds(report: DecompositionReport) -> np.ndarray:
    """Truncation bound for :func:`term_pairings`.

    The pairing equals ``-Tr(M_k^* X_{>D}(w_k)) / k^D_{w_k}(w_k)`` where
    ``X_{>D}`` is the part of degree ``> D`` of ``B_k ... H0_l``; Cauchy-Schwarz
    gives ``|H0_k| |H0_l| s^{(D+1)/2} / sqrt(1 - s^{D+1})`` with ``s = |w_k|^2``.
    """
    D = report.residual.max_degree
    e = np.sqrt([s.term_energy for s in report.steps])
    sw = np.array([float(np.vdot(s.w, s.w).real) for s in report.steps])
    fac = sw ** ((D + 1) / 2) / np.sqrt(1 - sw ** (D + 1))
    return np.triu(np.outer(e * fac, e), 1)


def term_orthogonality(report: DecompositionReport) -> float:
    """Largest pairing ``|<T_k, T_l>|``, ``k < l``, relative to ``||F||^2``."""
    if len(report.steps) < 2 or report.initial_energy == 0:
        return 0.0
    return float(term_pairings(report).max() / report.initial_energy)


def ambient_term_energy(report: DecompositionReport, k: int) -> float:
    """``||C_k H0_k||^2`` with the chain product kept to degree ``D``."""
    G = report.term_series(k)
    for s in reversed(report.steps[:k]):
        G = s.block.apply(G)
    return _energy(G)


def roosendaal_residual(report: DecompositionReport, k: int) -> float:
    """``|| sqrt(1-|w|^2) e_w(w) C_k(w) - C_k(w) ||`` at ``w = w_k``."""
    s = report.steps[k]
    C = report.chain(k).evaluate(s.w)
    sw = float(np.vdot(s.w, s.w).real)
    lhs = np.sqrt(1 - sw) * cauchy_kernel_normalized(s.w, s.w) * C
    return float(np.linalg.norm(lhs - C))


def ledger_ok(report: DecompositionReport) -> bool:
    tol = report.config.ledger_tol * max(report.initial_energy, 1e-300)
    return all(abs(s.ledger_defect) <= tol for s in report.steps)


def energy_rows(report: DecompositionReport) -> List[list]:
    """Rows ``[step, w_1.re, w_1.im, ..., rank, term, residual, defect]``."""
    rows = []
    for s in report.steps:
        coords = []
        for x in np.ravel(s.w):
            coords.extend([float(x.real), float(x.imag)])
        rows.append([s.k, *coords, s.rank, s.term_energy, s.residual_energy, s.ledger_defect])
    return rows
