"""Blaschke factors of the unit ball and elementary matrix factors.

For ``a`` in the ball the row-valued factor

    b_a(z) = sqrt(1 - |a|^2) / (1 - <z, a>) (z - a) (I_N - a^* a)^(-1/2)

vanishes at ``a``, is coisometric on the sphere and satisfies

    (1 - b_a(z) b_a(w)^*) / (1 - <z, w>) = (1 - |a|^2) / ((1 - <z, a>)(1 - <a, w>)).

An elementary factor ``B(z) = U diag(b_a(z), I_{n-1})`` with ``U e_1 = c/|c|``
parametrises all ``f`` with ``c^* f(a) = 0`` as ``f = B g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .seriescore import (PowerSeries, expand_cauchy, series_adjoint_matmul,
                         series_matmul, unit_index)


def _as_point(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError("point has non-finite coordinates")
    return a


def _check_open_ball(a: np.ndarray):
    r2 = float(np.vdot(a, a).real)
    if r2 >= 1:
        raise ValueError(f"point must lie in the open unit ball, got |a| = {np.sqrt(r2):.6g}")
    return r2


def cauchy_kernel_normalized(a, z) -> np.ndarray:
    """Normalized Cauchy kernel ``e_a(z) = sqrt(1-|a|^2) / (1 - <z, a>)``.

    ``z`` may be a single point or a ``(K, N)`` batch.
    """
    a = _as_point(a)
    s = _check_open_ball(a)
    z = np.asarray(z, dtype=complex)
    return np.sqrt(1 - s) / (1 - z @ np.conj(a))


def blaschke_vector(a, z) -> np.ndarray:
    """Row-valued Blaschke factor ``b_a(z)`` (shape ``(N,)`` or ``(K, N)``).

    The inverse square root ``(I - a^* a)^(-1/2)`` is applied through its
    rank-one closed form.
    """
    a = _as_point(a)
    s = _check_open_ball(a)
    z = np.asarray(z, dtype=complex)
    za = z @ np.conj(a)
    d = z - a
    if s > 0:
        gamma = 1 / np.sqrt(1 - s) - 1
        d = d + (gamma / s) * (d @ np.conj(a))[..., None] * a
    return (np.sqrt(1 - s) / (1 - za))[..., None] * d


def blaschke_vector_rudin(a, z) -> np.ndarray:
    """The same factor through the projection form

        b_a(z) = ((z a^*/|a|^2) a - a + sqrt(1-|a|^2) (z - (z a^*/|a|^2) a)) / (1 - z a^*).

    The sign is chosen so the result coincides with :func:`blaschke_vector`;
    the textbook expression is the negative of this (a unimodular constant).
    """
    a = _as_point(a)
    s = _check_open_ball(a)
    if s == 0:
        raise ValueError("projection form needs a != 0")
    z = np.asarray(z, dtype=complex)
    za = z @ np.conj(a)
    proj = (za / s)[..., None] * a
    return (proj - a + np.sqrt(1 - s) * (z - proj)) / (1 - za)[..., None]


def kernel_identity_residual(a, z, w) -> float:
    """``|(1 - b_a(z) b_a(w)^*)/(1 - <z,w>) - (1-|a|^2)/((1-<z,a>)(1-<a,w>))|``."""
    a = _as_point(a)
    z = _as_point(z)
    w = _as_point(w)
    s = _check_open_ball(a)
    bz = blaschke_vector(a, z)
    bw = blaschke_vector(a, w)
    lhs = (1 - np.vdot(bw, bz)) / (1 - np.vdot(w, z))
    rhs = (1 - s) / ((1 - np.vdot(a, z)) * (1 - np.vdot(w, a)))
    return float(abs(lhs - rhs))


def unitary_completion(c) -> np.ndarray:
    """Unitary ``U`` whose first column is ``c / |c|``.

    Built from the Householder reflector sending ``e_1`` to the phase-rotated
    unit vector with a real non-negative first entry; the phase is then put
    back on the first column only, so ``c = e_1`` gives the identity.
    """
    c = np.asarray(c, dtype=complex).ravel()
    norm = np.linalg.norm(c)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("cannot complete a zero (or non-finite) vector")
    u = c / norm
    phase = u[0] / abs(u[0]) if abs(u[0]) > 0 else 1.0
    ut = u / phase
    v = -ut
    v[0] += 1.0
    vv = float(np.vdot(v, v).real)
    H = np.eye(c.size, dtype=complex)
    if vv > 1e-300:
        H -= (2.0 / vv) * np.outer(v, np.conj(v))
    H[:, 0] = ut  # exact first column
    H[:, 0] *= phase
    return H


def complete_isometry(V) -> np.ndarray:
    """Extend a ``d x k`` isometry to a ``d x d`` unitary with ``V`` as leading columns."""
    V = np.asarray(V, dtype=complex)
    d, k = V.shape
    if k == d:
        return V.copy()
    Q, _ = np.linalg.qr(V, mode="complete")
    return np.concatenate([V, Q[:, k:]], axis=1)


@dataclass(frozen=True, eq=False)
class BlaschkeFactor:
    """Elementary factor ``B(z) = U diag(b_a(z), I_{n-1}) [W]`` of shape ``n x (n+N-1)``.

    ``c`` is the vector that generated ``U``; ``W`` is an optional unitary
    applied on the right (used for normalised factors of infinite products).
    """

    a: np.ndarray
    U: np.ndarray
    c: np.ndarray
    W: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def rows(self) -> int:
        return self.U.shape[0]

    @property
    def cols(self) -> int:
        return self.rows + self.N - 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def middle(self, z) -> np.ndarray:
        """``diag(b_a(z), I_{n-1})`` for a batch ``(K, N)`` -> ``(K, n, n+N-1)``."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        K, n, N = z.shape[0], self.rows, self.N
        out = np.zeros((K, n, n + N - 1), dtype=complex)
        out[:, 0, :N] = blaschke_vector(self.a, z)
        if n > 1:
            out[:, 1:, N:] = np.eye(n - 1)
        return out

    def evaluate(self, z) -> np.ndarray:
        """Rational evaluation; single point -> ``n x (n+N-1)``, batch -> ``K x ...``."""
        single = np.asarray(z).ndim == 1
        val = np.matmul(self.U, self.middle(z))
        if self.W is not None:
            val = val @ self.W
        return val[0] if single else val

    __call__ = evaluate

    def b_series(self, D: int) -> PowerSeries:
        """Series of the row ``b_a`` up to degree ``D``."""
        key = ("b", D)
        if key not in self._cache:
            a = self.a
            N = self.N
            s = float(np.vdot(a, a).real)
            if s > 0:
                lam = np.eye(N) + (1 / np.sqrt(1 - s) - 1) / s * np.outer(np.conj(a), a)
            else:
                lam = np.eye(N, dtype=complex)
            numer = {(0,) * N: (-a @ lam)[None, :]}
            if D >= 1:
                for u in range(N):
                    numer[unit_index(N, u)] = lam[u][None, :]
            numer_series = PowerSeries(N, 1, N, D, numer)
            cauchy = expand_cauchy(a, D)
            b = series_matmul(cauchy, numer_series) * np.sqrt(1 - s)
            r = np.sqrt(s)
            tail = (1 + r) * r ** D / (1 - r)
            self._cache[key] = PowerSeries.from_dense(b.basis, b.data, tail_bound=tail)
        return self._cache[key]

    def series(self, D: int) -> PowerSeries:
        """Series of ``B(z)`` (including ``W`` if present) up to degree ``D``."""
        key = ("B", D)
        if key not in self._cache:
            b = self.b_series(D)
            n, N = self.rows, self.N
            data = np.zeros((b.basis.size, n, n + N - 1), dtype=complex)
            data[:, 0, :N] = b.data[:, 0, :]
            if n > 1:
                data[0, 1:, N:] = np.eye(n - 1)
            data = np.einsum("ij,ajk->aik", self.U, data)
            if self.W is not None:
                data = data @ self.W
            self._cache[key] = PowerSeries.from_dense(b.basis, data, tail_bound=b.tail_bound)
        return self._cache[key]

    def apply(self, g: PowerSeries) -> PowerSeries:
        """Truncated product ``B g`` at the degree of ``g`` (``W`` must be absent)."""
        if self.W is not None:
            raise NotImplementedError("apply() is defined for unnormalised factors")
        if g.rows != self.cols:
            raise ValueError(f"factor of shape {self.shape} cannot multiply {g!r}")
        N = self.N
        top = series_matmul(self.b_series(g.max_degree), g.rows_slice(slice(0, N)))
        data = np.concatenate([top.data, g.data[:, N:, :]], axis=1)
        return PowerSeries.from_dense(g.basis, np.einsum("ij,ajk->aik", self.U, data))

    def adjoint_apply(self, h: PowerSeries) -> PowerSeries:
        """Adjoint of multiplication by ``B`` applied to a polynomial ``h``.

        ``M_B^* h = diag(M_b^*, I) U^* h``; exact for polynomial ``h`` since
        only coefficients of ``b_a`` up to ``deg h`` enter.
        """
        if self.W is not None:
            raise NotImplementedError("adjoint_apply() is defined for unnormalised factors")
        if h.rows != self.rows:
            raise ValueError(f"factor of shape {self.shape} cannot act on {h!r}")
        hu = h.left(np.conj(self.U.T))
        top = series_adjoint_matmul(self.b_series(h.max_degree), hu.rows_slice(slice(0, 1)))
        data = np.concatenate([top.data, hu.data[:, 1:, :]], axis=1)
        return PowerSeries.from_dense(h.basis, data)

    def to_dict(self) -> dict:
        out = {"a": _enc(self.a), "U": _enc(self.U), "c": _enc(self.c)}
        if self.W is not None:
            out["W"] = _enc(self.W)
        return out


def elementary_factor(a, c) -> BlaschkeFactor:
    """Factor ``U diag(b_a, I)`` encoding the condition ``c^* f(a) = 0``."""
    a = _as_point(a)
    _check_open_ball(a)
    c = np.asarray(c, dtype=complex).ravel()
    U = unitary_completion(c)
    a.setflags(write=False)
    U.setflags(write=False)
    return BlaschkeFactor(a=a, U=U, c=c.copy())


def factor_series(factor: BlaschkeFactor, D: int) -> PowerSeries:
    return factor.series(D)


@dataclass(frozen=True, eq=False)
class BlaschkeChain:
    """Ordered product ``B_1 B_2 ... B_k`` of elementary factors.

    ``skipped`` records interpolation conditions that were already satisfied
    and therefore contributed no factor: ``(condition_index, residual_norm)``.
    """

    n: int
    N: int
    factors: Tuple[BlaschkeFactor, ...] = ()
    skipped: Tuple[Tuple[int, float], ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        width = self.n
        for k, f in enumerate(self.factors):
            if f.rows != width or f.N != self.N:
                raise ValueError(f"factor {k} of shape {f.shape} does not compose with width {width}")
            width = f.cols

    @property
    def rows(self) -> int:
        return self.n

    @property
    def cols(self) -> int:
        return self.n + len(self.factors) * (self.N - 1)

    @property
    def s(self) -> int:
        return len(self.factors)

    def append(self, factor: BlaschkeFactor) -> "BlaschkeChain":
        return BlaschkeChain(self.n, self.N, self.factors + (factor,), self.skipped)

    def extend(self, other: "BlaschkeChain") -> "BlaschkeChain":
        return BlaschkeChain(self.n, self.N, self.factors + other.factors,
                             self.skipped + other.skipped)

    def _rows(self, zz: np.ndarray) -> np.ndarray:
        # all rows b_{a_j}(z) at once: (K, k, N)
        if "pts" not in self._cache:
            A = np.array([f.a for f in self.factors])
            s = np.sum(np.abs(A) ** 2, axis=1)
            coef = np.where(s > 0, (1 / np.sqrt(1 - s) - 1) / np.where(s > 0, s, 1), 0.0)
            self._cache["pts"] = (A, np.sqrt(1 - s), coef)
        A, root, coef = self._cache["pts"]
        d = zz[:, None, :] - A[None]
        proj = np.einsum("kjn,jn->kj", d, np.conj(A))
        d = d + (coef[None, :] * proj)[..., None] * A[None]
        return (root[None, :] / (1 - zz @ np.conj(A.T)))[..., None] * d

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        single = z.ndim == 1
        zz = np.atleast_2d(z)
        val = np.broadcast_to(np.eye(self.n, dtype=complex), (zz.shape[0], self.n, self.n))
        if self.factors:
            b = self._rows(zz)
            for j, f in enumerate(self.factors):
                X = val @ f.U
                val = np.concatenate([X[:, :, :1] * b[:, None, j, :], X[:, :, 1:]], axis=2)
                if f.W is not None:
                    val = val @ f.W
        return val[0] if single else np.array(val)

    __call__ = evaluate

    def series(self, D: int) -> PowerSeries:
        out = PowerSeries.constant(self.N, np.eye(self.n), D)
        for f in self.factors:
            out = series_matmul(out, f.series(D))
        return out

    def apply(self, g: PowerSeries) -> PowerSeries:
        for f in reversed(self.factors):
            g = f.apply(g)
        return g

    def adjoint_apply(self, h: PowerSeries) -> PowerSeries:
        for f in self.factors:
            h = f.adjoint_apply(h)
        return h

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "width": self.cols,
            "factors": [f.to_dict() for f in self.factors],
            "skipped": [{"condition": int(j), "residual": float(r)} for j, r in self.skipped],
        }


def _enc(A) -> list:
    A = np.asarray(A)
    if A.ndim == 0:
        return [float(A.real), float(A.imag)]
    return [_enc(x) for x in A]


def _dec(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def factor_from_dict(obj: dict) -> BlaschkeFactor:
    W = _dec(obj["W"]) if "W" in obj else None
    return BlaschkeFactor(a=_dec(obj["a"]), U=_dec(obj["U"]), c=_dec(obj["c"]), W=W)


def chain_from_dict(obj: dict) -> BlaschkeChain:
    return BlaschkeChain(int(obj["n"]), int(obj["N"]),
                         tuple(factor_from_dict(f) for f in obj["factors"]),
                         tuple((int(s["condition"]), float(s["residual"])) for s in obj.get("skipped", [])))


encode_complex = _enc
decode_complex = _dec
