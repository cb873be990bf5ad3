"""Infinite Blaschke products in the ball: normalised factors and partial products.

Factor ``k`` (``k = 1, 2, ...``) acts on rows of width ``n_k = 1 + (k-1)(N-1)``
and is normalised as ``B_k(z) W_k`` with ``W_k`` unitary, chosen so that the
value at the boundary point ``alpha_k = -a_k/|a_k|`` is the embedding
``F_k = (I_{n_k} 0)``.  Writing ``B_k W_k = F_k + A_k(z)`` the partial products

    Z_m(z) = (F_1 + A_1(z)) (F_2 + A_2(z)) ... (F_m + A_m(z))

are rows of width ``1 + m(N-1)``; they converge when
``sum_k sqrt(1 - |a_k|^2)`` is finite.  :func:`convergence_report` evaluates
the inequalities that control this convergence along a finite prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .blaschke import (BlaschkeFactor, _as_point, _check_open_ball, blaschke_vector,
                       complete_isometry, unitary_completion)


def boundary_point(a) -> np.ndarray:
    """``alpha = -a / |a|`` on the unit sphere."""
    a = _as_point(a)
    r = float(np.linalg.norm(a))
    if r == 0:
        raise ValueError("a = 0 has no associated boundary point")
    return -a / r


def factor_difference(a, z) -> np.ndarray:
    """``b_a(z) - b_a(alpha)`` through its closed form.

    With ``s = |a|^2``, ``rho = sqrt(1 - s)`` and ``Q = a^* a (1 - rho)/s - I``:

        b_a(z) - b_a(alpha) = -rho ((z - alpha) Q + z <alpha, a> - alpha <z, a>)
                              / ((1 - <z, a>)(1 + |a|))

    ``z`` may be a single point or a ``(K, N)`` batch.
    """
    a = _as_point(a)
    s = _check_open_ball(a)
    if s == 0:
        raise ValueError("a = 0 has no associated boundary point")
    alpha = -a / math.sqrt(s)
    rho = math.sqrt(1 - s)
    z = np.asarray(z, dtype=complex)
    Q = np.outer(np.conj(a), a) * ((1 - rho) / s) - np.eye(a.size)
    za = z @ np.conj(a)
    aa = alpha @ np.conj(a)
    numer = (z - alpha) @ Q + z * aa - alpha * za[..., None]
    return -rho * numer / ((1 - za) * (1 + math.sqrt(s)))[..., None]


def factor_difference_bound(a, z) -> np.ndarray:
    """``4 sqrt(1 - |a|^2) / (1 - |z|)``."""
    a = _as_point(a)
    z = np.asarray(z, dtype=complex)
    s = float(np.vdot(a, a).real)
    return 4 * math.sqrt(1 - s) / (1 - np.linalg.norm(z, axis=-1))


def remark_eigen_check(a) -> float:
    """``| ||a^* a (1 - sqrt(1-s))/s - I||_2 - sqrt(1 - s) |`` with ``s = |a|^2``.

    The matrix has eigenvalue ``-sqrt(1-s)`` along ``a^*`` and ``-1`` on the
    orthogonal complement, so the residual vanishes for ``N = 1`` and equals
    ``1 - sqrt(1-s)`` for ``N > 1``.  :func:`remark_direction_residual`
    checks the eigenvalue along ``a^*`` alone.
    """
    a = _as_point(a)
    s = _check_open_ball(a)
    if s == 0:
        raise ValueError("a must be nonzero")
    Q = np.outer(np.conj(a), a) * ((1 - math.sqrt(1 - s)) / s) - np.eye(a.size)
    return abs(float(np.linalg.norm(Q, 2)) - math.sqrt(1 - s))


def remark_direction_residual(a) -> float:
    """Residual of ``a Q = -sqrt(1-s) a`` and of ``|Q| = max(1, sqrt(1-s))`` for ``N > 1``."""
    a = _as_point(a)
    s = _check_open_ball(a)
    if s == 0:
        raise ValueError("a must be nonzero")
    rho = math.sqrt(1 - s)
    Q = np.outer(np.conj(a), a) * ((1 - rho) / s) - np.eye(a.size)
    along = float(np.linalg.norm(a @ Q + rho * a)) / math.sqrt(s)
    expected = rho if a.size == 1 else 1.0
    return max(along, abs(float(np.linalg.norm(Q, 2)) - expected))


@dataclass(frozen=True, eq=False)
class NormalizedFactor:
    """``B(z) W = F + A(z)`` with ``B(alpha) W = (I 0)``."""

    factor: BlaschkeFactor
    alpha: np.ndarray
    b_alpha: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return self.factor.a

    @property
    def W(self) -> np.ndarray:
        return self.factor.W

    @property
    def shape(self):
        return self.factor.shape

    def value(self, z) -> np.ndarray:
        return self.factor.evaluate(z)

    def A(self, z) -> np.ndarray:
        """``U diag(b_a(z) - b_a(alpha), 0) W`` (single point or batch)."""
        z = np.asarray(z, dtype=complex)
        single = z.ndim == 1
        zz = np.atleast_2d(z)
        n, N = self.factor.rows, self.factor.N
        mid = np.zeros((zz.shape[0], n, n + N - 1), dtype=complex)
        mid[:, 0, :N] = factor_difference(self.a, zz)
        out = self.factor.U @ mid @ self.W
        return out[0] if single else out

    def embedding(self) -> np.ndarray:
        n, cols = self.shape
        return np.eye(n, cols, dtype=complex)

    def constant_residual(self) -> float:
        """``|| U diag(b_a(alpha), I) W - (I 0) ||``."""
        n, N = self.factor.rows, self.factor.N
        C = np.zeros((n, n + N - 1), dtype=complex)
        C[0, :N] = self.b_alpha
        if n > 1:
            C[1:, N:] = np.eye(n - 1)
        return float(np.linalg.norm(self.factor.U @ C @ self.W - self.embedding()))


def build_normalized_factor(a, U=None) -> NormalizedFactor:
    """Normalise ``U diag(b_a, I)`` so that its value at ``alpha`` is ``(I 0)``.

    ``U`` defaults to the scalar ``1``; a unitary ``U`` of size ``n`` gives a
    factor of shape ``n x (n + N - 1)``.
    """
    a = _as_point(a)
    _check_open_ball(a)
    alpha = boundary_point(a)
    N = a.size
    U = np.eye(1, dtype=complex) if U is None else np.atleast_2d(np.asarray(U, dtype=complex))
    n = U.shape[0]
    if U.shape != (n, n) or np.linalg.norm(np.conj(U.T) @ U - np.eye(n)) > 1e-10:
        raise ValueError("U must be a square unitary matrix")
    b_alpha = blaschke_vector(a, alpha)
    C = np.zeros((n, n + N - 1), dtype=complex)
    C[0, :N] = b_alpha
    if n > 1:
        C[1:, N:] = np.eye(n - 1)
    C = U @ C
    # C is coisometric; complete the columns of C^* to a unitary W so that C W = (I 0)
    W = complete_isometry(np.conj(C.T))
    fac = BlaschkeFactor(a=a, U=U, c=U[:, 0].copy(), W=W)
    return NormalizedFactor(factor=fac, alpha=alpha, b_alpha=b_alpha)


def row_width(N: int, m: int) -> int:
    """Width ``1 + m(N-1)`` of the partial product ``Z_m``."""
    return 1 + m * (N - 1)


def embed(v, width: int) -> np.ndarray:
    """Zero-pad a row to ``width`` entries (the embedding ``C^m -> l_2`` truncated)."""
    v = np.asarray(v, dtype=complex).ravel()
    if v.size > width:
        raise ValueError("cannot embed into a shorter row")
    out = np.zeros(width, dtype=complex)
    out[: v.size] = v
    return out


class NormalizedFactorSeq:
    """Finite prefix ``a_1, ..., a_m`` of an infinite product.

    Parameters
    ----------
    points : array_like, shape (m, N)
        Nonzero points of the ball.
    unitaries : sequence of arrays, optional
        ``U_k`` of size ``1 + (k-1)(N-1)``; identity when omitted.  A vector
        entry is taken as the first column ``c`` of ``U_k`` and completed.
    """

    def __init__(self, points, unitaries: Optional[Sequence] = None):
        pts = np.atleast_2d(np.asarray(points, dtype=complex))
        if pts.shape[0] < 1:
            raise ValueError("need at least one point")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"point {int(np.argmax(norms == 0))} is zero")
        if np.any(norms >= 1):
            raise ValueError(f"point {int(np.argmax(norms >= 1))} is not in the open ball")
        self.points = pts
        self.N = pts.shape[1]
        self.factors: List[NormalizedFactor] = []
        for k in range(pts.shape[0]):
            n_k = row_width(self.N, k)
            U = None if unitaries is None or unitaries[k] is None else np.asarray(unitaries[k])
            if U is not None and U.ndim == 1:
                U = unitary_completion(U)
            if U is None:
                U = np.eye(n_k, dtype=complex)
            if U.shape[0] != n_k:
                raise ValueError(f"U_{k + 1} must have size {n_k}, got {U.shape[0]}")
            self.factors.append(build_normalized_factor(pts[k], U))

    def __len__(self) -> int:
        return len(self.factors)

    @property
    def condition_terms(self) -> np.ndarray:
        """``sqrt(1 - |a_k|^2)``."""
        return np.sqrt(1 - np.sum(np.abs(self.points) ** 2, axis=1))

    @property
    def condition_value(self) -> float:
        return float(np.sum(self.condition_terms))

    def tail_flagged(self) -> bool:
        """Heuristic divergence flag for the summability condition.

        A prefix is flagged when its second half contributes at least half
        as much to ``sum sqrt(1 - |a_k|^2)`` as its first half, that is when
        the terms show no clear decay.  A finite prefix can never prove
        divergence.
        """
        t = self.condition_terms
        if t.size < 4:
            return False
        h = t.size // 2
        return bool(np.sum(t[h:]) >= 0.5 * np.sum(t[:h]))

    def A_norms(self, z, m: Optional[int] = None) -> np.ndarray:
        m = len(self) if m is None else m
        return np.array([np.linalg.norm(f.A(z), 2) for f in self.factors[:m]])


def partial_products(seq: NormalizedFactorSeq, z, m: Optional[int] = None) -> List[np.ndarray]:
    """``[Z_0, Z_1, ..., Z_m]`` at a single point ``z``; ``Z_0 = (1)``."""
    z = _as_point(z)
    m = len(seq) if m is None else m
    if m > len(seq):
        raise ValueError(f"only {len(seq)} factors available")
    out = [np.ones(1, dtype=complex)]
    Z = out[0]
    for f in seq.factors[:m]:
        Z = Z @ f.value(z)
        out.append(Z)
    return out


def partial_product(seq: NormalizedFactorSeq, z, m: int) -> np.ndarray:
    """``Z_m(z)``, a row of width ``1 + m(N-1)``."""
    return partial_products(seq, z, m)[-1]


def step1_bound(seq, z, m1: int, m2: int):
    """``|| prod_{m1<k<=m2} (F_k + A_k) - (I 0) ||`` and ``prod (1 + ||A_k||) - 1``."""
    z = _as_point(z)
    n = row_width(seq.N, m1)
    P = np.eye(n, dtype=complex)
    for f in seq.factors[m1:m2]:
        P = P @ f.value(z)
    lhs = float(np.linalg.norm(P - np.eye(*P.shape), 2))
    rhs = float(np.prod(1 + seq.A_norms(z)[m1:m2]) - 1)
    return lhs, rhs


def cauchy_bound(seq, z, m1: int, m2: int, K: Optional[float] = None):
    """``|| i(Z_m2) - i(Z_m1) ||`` and ``e^{2K} sum_{m1<k<=m2} ||A_k||``."""
    Zs = partial_products(seq, z, m2)
    nA = seq.A_norms(z, m2)
    K = float(np.sum(seq.A_norms(z))) if K is None else K
    lhs = float(np.linalg.norm(Zs[m2] - embed(Zs[m1], Zs[m2].size)))
    return lhs, float(math.exp(2 * K) * np.sum(nA[m1:m2]))


CSV_COLUMNS = ("m", "increment", "cauchy_bound", "step1_lhs", "step1_rhs",
               "lower_bound_lhs", "lower_bound_rhs", "K", "tail_lhs", "tail_rhs",
               "growth_rhs")


def convergence_report(seq: NormalizedFactorSeq, z, m_max: Optional[int] = None) -> dict:
    """Per-``m`` diagnostics of the partial products at ``z``.

    Returns ``{"rows": [...], "K": K, "lower_bound_active": bool,
    "tail_flagged": bool, "min_slack": float}``.  Each row holds, for
    ``m = 1..m_max``:

    * ``increment = |i(Z_m) - i(Z_{m-1})|`` and ``cauchy_bound = e^{2K} |A_m|``;
    * ``step1_lhs = |Z_m - E_m|`` and ``step1_rhs = prod_{k<=m}(1 + |A_k|) - 1``;
    * ``lower_bound_lhs = |Z_m|`` and ``lower_bound_rhs = 1 - sum_{k<=m} |A_k|``
      (``nan`` unless ``K < 1/2``);
    * ``tail_lhs = |Z_m - Z_{m_max}|`` and ``tail_rhs = e^{2K} sum_{m<k<=m_max} |A_k|``,
      the prefix standing in for the limit;
    * ``growth_rhs = exp(sum_{k<=m} |A_k|)``, which bounds ``|Z_m|``.

    ``K`` is the sum of ``|A_k(z)|`` over the prefix.
    """
    z = _as_point(z)
    m_max = len(seq) if m_max is None else m_max
    if not 1 <= m_max <= len(seq):
        raise ValueError(f"m_max must be in 1..{len(seq)}")
    Zs = partial_products(seq, z, m_max)
    nA = seq.A_norms(z, m_max)
    K = float(np.sum(nA))
    e2K = math.exp(2 * K)
    active = K < 0.5
    Zend = Zs[m_max]
    rows = []
    cum = np.cumsum(nA)
    prod = np.cumprod(1 + nA)
    slack = []
    for m in range(1, m_max + 1):
        Z = Zs[m]
        E = embed([1.0], Z.size)
        row = {
            "m": m,
            "increment": float(np.linalg.norm(Z - embed(Zs[m - 1], Z.size))),
            "cauchy_bound": e2K * float(nA[m - 1]),
            "step1_lhs": float(np.linalg.norm(Z - E)),
            "step1_rhs": float(prod[m - 1] - 1),
            "lower_bound_lhs": float(np.linalg.norm(Z)),
            "lower_bound_rhs": float(1 - cum[m - 1]) if active else math.nan,
            "K": K,
            "tail_lhs": float(np.linalg.norm(Zend - embed(Z, Zend.size))),
            "tail_rhs": e2K * float(K - cum[m - 1]),
            "growth_rhs": math.exp(float(cum[m - 1])),
        }
        slack += [row["cauchy_bound"] - row["increment"], row["step1_rhs"] - row["step1_lhs"],
                  row["tail_rhs"] - row["tail_lhs"], row["growth_rhs"] - row["lower_bound_lhs"]]
        if active:
            slack.append(row["lower_bound_lhs"] - row["lower_bound_rhs"])
        rows.append(row)
    return {"rows": rows, "K": K, "lower_bound_active": active,
            "tail_flagged": seq.tail_flagged(),
            "condition_value": seq.condition_value,
            "min_slack": float(min(slack))}
