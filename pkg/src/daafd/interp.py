"""Tangential interpolation ``c_j^* f(a_j) = 0`` by Blaschke chains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .blaschke import (BlaschkeChain, BlaschkeFactor, decode_complex, elementary_factor,
                       encode_complex)

SKIP_TOL = 1e-10


@dataclass(frozen=True)
class InterpolationProblem:
    points: np.ndarray   # (M, N)
    vectors: np.ndarray  # (M, n)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=complex))
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if pts.shape[0] < 1 or pts.shape[0] != vec.shape[0]:
            raise ValueError(f"need M >= 1 points with one vector each, got {pts.shape[0]} and {vec.shape[0]}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vec))):
            raise ValueError("interpolation data must be finite")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms >= 1):
            j = int(np.argmax(norms >= 1))
            raise ValueError(f"point {j} is not in the open ball (|a| = {norms[j]:.6g})")
        zero = np.linalg.norm(vec, axis=1) == 0
        if np.any(zero):
            raise ValueError(f"vector {int(np.argmax(zero))} is zero")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "vectors", vec)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_dict(cls, obj: dict) -> "InterpolationProblem":
        try:
            return cls(decode_complex(obj["points"]), decode_complex(obj["vectors"]))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed interpolation problem: {exc}") from exc

    def to_dict(self) -> dict:
        return {"points": encode_complex(self.points), "vectors": encode_complex(self.vectors)}


def solve_single(a, c) -> BlaschkeFactor:
    """Factor ``B`` with ``{f : c^* f(a) = 0} = B H^(n+N-1)``."""
    return elementary_factor(a, c)


def solve_multi(problem: InterpolationProblem, skip_tol: float = SKIP_TOL) -> BlaschkeChain:
    """Chain ``B = B_1 B_2 ...`` parametrising all solutions as ``f = B u``.

    Condition ``j`` is pulled through the factors built so far; when the row
    ``c_j^* (B_1...B_{j-1})(a_j)`` vanishes (relative to
    ``|c_j| |B(a_j)|``) the condition holds for every ``u`` and no factor is
    added.
    """
    chain = BlaschkeChain(problem.n, problem.N)
    skipped = []
    for j in range(problem.M):
        a, c = problem.points[j], problem.vectors[j]
        Ba = chain.evaluate(a)
        row = np.conj(c) @ Ba
        scale = np.linalg.norm(c) * np.linalg.norm(Ba, 2)
        resid = float(np.linalg.norm(row))
        if resid <= skip_tol * scale:
            skipped.append((j, resid))
            continue
        chain = chain.append(elementary_factor(a, np.conj(row)))
    return BlaschkeChain(chain.n, chain.N, chain.factors, tuple(skipped))


def condition_residuals(chain: BlaschkeChain, problem: InterpolationProblem,
                        u_values: np.ndarray) -> np.ndarray:
    """``|c_j^* B(a_j) u_j|`` for supplied right-factor values ``u_j`` at ``a_j``."""
    out = np.empty(problem.M)
    for j in range(problem.M):
        val = np.conj(problem.vectors[j]) @ chain.evaluate(problem.points[j]) @ u_values[j]
        out[j] = float(np.linalg.norm(val))
    return out


def problem_from_points(points: Sequence, vectors: Sequence) -> InterpolationProblem:
    return InterpolationProblem(np.asarray(points, dtype=complex), np.asarray(vectors, dtype=complex))
