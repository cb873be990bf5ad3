"""Truncated multi-index power series and the Drury-Arveson pairing.

A :class:`PowerSeries` stores the Taylor coefficients of an
``n x m`` matrix-valued function on the unit ball of ``C^N`` up to a total
degree ``D``.  Coefficients live in a dense array indexed by a graded
monomial basis (:class:`MonomialBasis`), which is shared and cached per
``(N, D)`` so that products, adjoint products and evaluations are
vectorised.  The norm is the Drury-Arveson one,

    ||f||^2 = sum_alpha  alpha! / |alpha|!  |f_alpha|^2,

whose reproducing kernel is ``1 / (1 - <z, w>)``.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]

# Default truncation degree per ambient dimension.
DEFAULT_DEGREE = {1: 24, 2: 24, 3: 12}


def default_degree(N: int) -> int:
    return DEFAULT_DEGREE.get(N, 8)


def da_weight(alpha: Sequence[int]) -> float:
    """Return the Drury-Arveson weight ``alpha! / |alpha|!``.

    Computed through log-gamma so large degrees do not overflow; exact
    integer arithmetic is used while the factorials stay small.
    """
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be non-negative: {alpha}")
    deg = sum(alpha)
    if deg <= 20:
        num = 1
        for a in alpha:
            num *= math.factorial(a)
        return num / math.factorial(deg)
    return math.exp(sum(math.lgamma(a + 1) for a in alpha) - math.lgamma(deg + 1))


def unit_index(N: int, u: int, k: int = 1) -> MultiIndex:
    """Multi-index ``k * e_u`` (``u`` is zero-based)."""
    out = [0] * N
    out[u] = k
    return tuple(out)


def _compositions(N: int, deg: int) -> Iterable[MultiIndex]:
    # all alpha in N_0^N with |alpha| = deg, lexicographically descending
    if N == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _compositions(N - 1, deg - first):
            yield (first,) + rest


class MonomialBasis:
    """Graded enumeration of the multi-indices of degree ``<= D`` in ``N`` variables.

    Besides the index map it precomputes the DA weights and the table of
    all pairs ``(beta, gamma)`` with ``|beta + gamma| <= D``, sorted by the
    position of ``beta + gamma``; series products and adjoint products are
    reductions over that table.
    """

    def __init__(self, N: int, D: int):
        if N < 1 or D < 0:
            raise ValueError(f"invalid basis dimensions N={N}, D={D}")
        self.N = N
        self.D = D
        self.indices: list = [
            alpha for deg in range(D + 1) for alpha in _compositions(N, deg)
        ]
        self.position: Dict[MultiIndex, int] = {a: i for i, a in enumerate(self.indices)}
        self.size = len(self.indices)
        self.exponents = np.array(self.indices, dtype=np.int64).reshape(self.size, N)
        self.degrees = self.exponents.sum(axis=1)
        self.weights = np.array([da_weight(a) for a in self.indices])
        # offsets[d] = first position of degree d
        self.offsets = np.searchsorted(self.degrees, np.arange(D + 2))

    @functools.cached_property
    def pairs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(beta_pos, gamma_pos, target_pos, segment_starts) sorted by target."""
        bs, gs, ts = [], [], []
        for t, alpha in enumerate(self.indices):
            for beta in itertools.product(*(range(a + 1) for a in alpha)):
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                bs.append(self.position[beta])
                gs.append(self.position[gamma])
                ts.append(t)
        b = np.array(bs, dtype=np.int64)
        g = np.array(gs, dtype=np.int64)
        t = np.array(ts, dtype=np.int64)
        starts = np.searchsorted(t, np.arange(self.size))
        return b, g, t, starts

    @functools.cached_property
    def shifts(self) -> Tuple[np.ndarray, np.ndarray]:
        """For each axis u: (source positions alpha with alpha_u > 0, target alpha - e_u)."""
        src, dst = [], []
        for u in range(self.N):
            s_u, d_u = [], []
            for i, alpha in enumerate(self.indices):
                if alpha[u] > 0:
                    lowered = list(alpha)
                    lowered[u] -= 1
                    s_u.append(i)
                    d_u.append(self.position[tuple(lowered)])
            src.append(np.array(s_u, dtype=np.int64))
            dst.append(np.array(d_u, dtype=np.int64))
        return src, dst

    def monomials(self, z: np.ndarray) -> np.ndarray:
        """Values ``z^alpha`` for a batch of points; returns shape (K, size)."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        if z.shape[-1] != self.N:
            raise ValueError(f"point has {z.shape[-1]} coordinates, expected {self.N}")
        K = z.shape[0]
        powers = np.ones((K, self.N, self.D + 1), dtype=complex)
        for j in range(1, self.D + 1):
            powers[:, :, j] = powers[:, :, j - 1] * z
        out = np.ones((K, self.size), dtype=complex)
        for u in range(self.N):
            out *= powers[:, u, self.exponents[:, u]]
        return out


@functools.lru_cache(maxsize=None)
def monomial_basis(N: int, D: int) -> MonomialBasis:
    return MonomialBasis(N, D)


class PowerSeries:
    """Truncated power series ``f(z) = sum_alpha z^alpha f_alpha`` with matrix coefficients.

    Parameters
    ----------
    N : int
        Number of complex variables.
    rows, cols : int
        Shape of every coefficient.
    max_degree : int
        Truncation degree ``D``; coefficients of higher degree are rejected.
    coeffs : mapping, optional
        ``{alpha: matrix}``; absent indices are zero.  Scalars are accepted
        for ``1 x 1`` series.
    tail_bound : float
        Bound on the pointwise truncation error on the closed ball, carried
        as metadata by expansions of rational functions.

    Instances are immutable; every operation returns a new series.
    """

    __slots__ = ("N", "rows", "cols", "max_degree", "basis", "data", "tail_bound")

    def __init__(self, N: int, rows: int, cols: int, max_degree: int,
                 coeffs: Mapping[Sequence[int], object] | None = None,
                 tail_bound: float = 0.0):
        basis = monomial_basis(N, max_degree)
        data = np.zeros((basis.size, rows, cols), dtype=complex)
        for alpha, value in (coeffs or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != N or any(a < 0 for a in alpha):
                raise ValueError(f"invalid multi-index {alpha} for N={N}")
            if sum(alpha) > max_degree:
                raise ValueError(f"multi-index {alpha} exceeds max_degree {max_degree}")
            value = np.asarray(value, dtype=complex)
            if value.ndim == 0:
                value = value.reshape(1, 1)
            if value.shape != (rows, cols):
                raise ValueError(
                    f"coefficient at {alpha} has shape {value.shape}, expected {(rows, cols)}")
            data[basis.position[alpha]] += value
        self._set(basis, data, tail_bound)

    def _set(self, basis, data, tail_bound):
        data.setflags(write=False)
        object.__setattr__(self, "N", basis.N)
        object.__setattr__(self, "max_degree", basis.D)
        object.__setattr__(self, "rows", data.shape[1])
        object.__setattr__(self, "cols", data.shape[2])
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "tail_bound", float(tail_bound))

    def __setattr__(self, name, value):
        raise AttributeError("PowerSeries is immutable")

    @classmethod
    def from_dense(cls, basis: MonomialBasis, data: np.ndarray,
                   tail_bound: float = 0.0) -> "PowerSeries":
        data = np.array(data, dtype=complex)
        if data.ndim != 3 or data.shape[0] != basis.size:
            raise ValueError(f"dense data of shape {data.shape} does not fit basis of size {basis.size}")
        obj = cls.__new__(cls)
        obj._set(basis, data, tail_bound)
        return obj

    @classmethod
    def zeros(cls, N: int, rows: int, cols: int, max_degree: int) -> "PowerSeries":
        return cls(N, rows, cols, max_degree)

    @classmethod
    def constant(cls, N: int, value, max_degree: int) -> "PowerSeries":
        value = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(N, value.shape[0], value.shape[1], max_degree, {(0,) * N: value})

    @classmethod
    def monomial(cls, alpha: Sequence[int], max_degree: int, value=1.0) -> "PowerSeries":
        value = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(len(alpha), value.shape[0], value.shape[1], max_degree, {tuple(alpha): value})

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def coeffs(self) -> Dict[MultiIndex, np.ndarray]:
        """Nonzero coefficients as a ``{alpha: matrix}`` map."""
        nz = np.flatnonzero(np.any(self.data != 0, axis=(1, 2)))
        return {self.basis.indices[i]: self.data[i] for i in nz}

    def coefficient(self, alpha: Sequence[int]) -> np.ndarray:
        pos = self.basis.position.get(tuple(alpha))
        if pos is None:
            return np.zeros(self.shape, dtype=complex)
        return self.data[pos]

    def __repr__(self):
        return (f"PowerSeries(N={self.N}, shape={self.shape}, D={self.max_degree}, "
                f"nnz={len(self.coeffs)})")

    def __call__(self, z) -> np.ndarray:
        return series_eval(self, z)

    def __add__(self, other):
        return series_add(self, other)

    def __sub__(self, other):
        return series_add(self, series_scale(other, -1.0))

    def __neg__(self):
        return series_scale(self, -1.0)

    def __mul__(self, lam):
        return series_scale(self, lam)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return series_matmul(self, other)

    # -- constant-matrix actions (coefficientwise) --------------------------

    def left(self, A) -> "PowerSeries":
        """Series of ``A f(z)`` for a constant matrix ``A``."""
        A = np.asarray(A, dtype=complex)
        return PowerSeries.from_dense(self.basis, np.einsum("ij,ajk->aik", A, self.data))

    def right(self, A) -> "PowerSeries":
        """Series of ``f(z) A`` for a constant matrix ``A``."""
        A = np.asarray(A, dtype=complex)
        return PowerSeries.from_dense(self.basis, np.einsum("aij,jk->aik", self.data, A))

    def rows_slice(self, sl) -> "PowerSeries":
        return PowerSeries.from_dense(self.basis, self.data[:, sl, :])


def _check_same(f: PowerSeries, g: PowerSeries):
    if f.N != g.N or f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f!r} vs {g!r}")


def _common_basis(f: PowerSeries, g: PowerSeries) -> MonomialBasis:
    return monomial_basis(f.N, min(f.max_degree, g.max_degree))


def truncate(f: PowerSeries, D: int) -> PowerSeries:
    """Restrict (or zero-pad) ``f`` to degree bound ``D``."""
    basis = monomial_basis(f.N, D)
    data = np.zeros((basis.size,) + f.shape, dtype=complex)
    k = min(basis.size, f.basis.size)
    data[:k] = f.data[:k]  # graded order is a prefix order
    # the tail bound is only meaningful for the degree it was computed at
    return PowerSeries.from_dense(basis, data,
                                  tail_bound=f.tail_bound if D == f.max_degree else 0.0)


def series_add(f: PowerSeries, g: PowerSeries) -> PowerSeries:
    _check_same(f, g)
    basis = _common_basis(f, g)
    k = basis.size
    return PowerSeries.from_dense(basis, f.data[:k] + g.data[:k],
                                  tail_bound=f.tail_bound + g.tail_bound)


def series_scale(f: PowerSeries, lam) -> PowerSeries:
    lam = complex(lam)
    return PowerSeries.from_dense(f.basis, f.data * lam, tail_bound=abs(lam) * f.tail_bound)


def series_matmul(f: PowerSeries, g: PowerSeries, max_degree: int | None = None) -> PowerSeries:
    """Cauchy product: coefficient at alpha is ``sum_{beta+gamma=alpha} f_beta g_gamma``."""
    if f.N != g.N or f.cols != g.rows:
        raise ValueError(f"cannot multiply {f!r} by {g!r}")
    D = min(f.max_degree, g.max_degree) if max_degree is None else max_degree
    basis = monomial_basis(f.N, D)
    fd = truncate(f, D).data
    gd = truncate(g, D).data
    b, c, t, starts = basis.pairs
    prod = np.matmul(fd[b], gd[c])
    data = np.add.reduceat(prod, starts, axis=0)
    return PowerSeries.from_dense(basis, data)


def series_adjoint_matmul(f: PowerSeries, h: PowerSeries) -> PowerSeries:
    """Apply the adjoint of ``g -> f g`` (DA pairing) to a polynomial ``h``.

    The result ``g`` satisfies ``<h, f u> = <g, u>`` for every series ``u``;
    because multiplication never lowers degree, ``g`` is again a polynomial
    of degree ``<= deg h`` and only ``f`` up to that degree is needed:

        g_gamma = (1 / w_gamma) sum_beta w_{beta+gamma} f_beta^* h_{beta+gamma}.
    """
    if f.N != h.N or f.rows != h.rows:
        raise ValueError(f"cannot apply adjoint multiplication by {f!r} to {h!r}")
    basis = h.basis
    fd = truncate(f, basis.D).data
    b, c, t, _ = basis.pairs
    w = basis.weights
    weighted = h.data * w[:, None, None]
    contrib = np.matmul(np.conj(np.swapaxes(fd[b], 1, 2)), weighted[t])
    data = np.zeros((basis.size, f.cols, h.cols), dtype=complex)
    np.add.at(data, c, contrib)
    data /= w[:, None, None]
    return PowerSeries.from_dense(basis, data)


def series_eval(f: PowerSeries, z) -> np.ndarray:
    """Evaluate at one point (returns ``rows x cols``) or a batch (``K x rows x cols``)."""
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    mono = f.basis.monomials(z)
    out = np.einsum("ka,aij->kij", mono, f.data)
    return out[0] if single else out


def da_inner_matrix(f: PowerSeries, g: PowerSeries) -> np.ndarray:
    """Matrix pairing ``[f, g] = sum_alpha w_alpha g_alpha^* f_alpha`` (``cols x cols``)."""
    _check_same(f, g)
    basis = _common_basis(f, g)
    k = basis.size
    return np.einsum("a,aji,ajk->ik", basis.weights, np.conj(g.data[:k]), f.data[:k])


def da_inner(f: PowerSeries, g: PowerSeries) -> complex:
    """Scalar inner product ``<f, g> = Tr [f, g]``."""
    _check_same(f, g)
    basis = _common_basis(f, g)
    k = basis.size
    return complex(np.einsum("a,aij,aij->", basis.weights, f.data[:k], np.conj(g.data[:k])))


def da_norm(f: PowerSeries) -> float:
    val = float(np.einsum("a,aij->", f.basis.weights, np.abs(f.data) ** 2))
    return math.sqrt(max(val, 0.0))


def gleason_Ru(f: PowerSeries, u: int) -> PowerSeries:
    """Gleason operator ``R_u f = int_0^1 d/dz_u f(tz) dt`` (``u`` zero-based).

    Coefficient at ``alpha - e_u`` is ``(alpha_u / |alpha|) f_alpha``; the
    constant term drops out and the degree bound decreases by one.
    """
    if not 0 <= u < f.N:
        raise ValueError(f"axis {u} out of range for N={f.N}")
    D = max(f.max_degree - 1, 0)
    basis = monomial_basis(f.N, D)
    src, dst = f.basis.shifts
    s, d = src[u], dst[u]
    keep = d < basis.size
    s, d = s[keep], d[keep]
    ratio = f.basis.exponents[s, u] / f.basis.degrees[s]
    data = np.zeros((basis.size,) + f.shape, dtype=complex)
    data[d] = f.data[s] * ratio[:, None, None]
    return PowerSeries.from_dense(basis, data)


def expand_cauchy(a, D: int) -> PowerSeries:
    """Scalar series of ``1 / (1 - <z, a>)`` up to degree ``D``.

    ``sum_alpha (|alpha|!/alpha!) z^alpha conj(a)^alpha``; the pointwise tail on
    the closed ball is at most ``||a||^(D+1) / (1 - ||a||)``.
    """
    a = np.asarray(a, dtype=complex).ravel()
    r = float(np.linalg.norm(a))
    if r >= 1:
        raise ValueError(f"point must lie in the open ball, got norm {r}")
    basis = monomial_basis(a.size, D)
    coef = basis.monomials(np.conj(a))[0] / basis.weights
    return PowerSeries.from_dense(basis, coef[:, None, None],
                                  tail_bound=r ** (D + 1) / (1 - r))


# -- JSON function file format ------------------------------------------------


def _encode_matrix(A: np.ndarray) -> list:
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.atleast_2d(A)]


def _decode_matrix(obj, rows: int, cols: int) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (rows, cols, 2):
        raise ValueError(f"coefficient value has shape {arr.shape}, expected {(rows, cols, 2)}")
    return arr[..., 0] + 1j * arr[..., 1]


def series_to_dict(f: PowerSeries) -> dict:
    return {
        "N": f.N,
        "rows": f.rows,
        "cols": f.cols,
        "max_degree": f.max_degree,
        "coeffs": [{"alpha": list(alpha), "value": _encode_matrix(value)}
                   for alpha, value in f.coeffs.items()],
    }


def series_from_dict(obj: Mapping) -> PowerSeries:
    try:
        N, rows, cols, D = (int(obj[k]) for k in ("N", "rows", "cols", "max_degree"))
        entries = obj["coeffs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed function file: {exc}") from exc
    if N < 1 or rows < 1 or cols < 1 or D < 0:
        raise ValueError("function file dimensions must be positive")
    coeffs: Dict[MultiIndex, np.ndarray] = {}
    for k, entry in enumerate(entries):
        try:
            alpha = tuple(int(a) for a in entry["alpha"])
            value = _decode_matrix(entry["value"], rows, cols)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed coefficient entry {k}: {exc}") from exc
        coeffs[alpha] = coeffs.get(alpha, 0) + value
    return PowerSeries(N, rows, cols, D, coeffs)


def dump_series(f: PowerSeries, path) -> None:
    with open(path, "w") as fh:
        json.dump(series_to_dict(f), fh, indent=1)


def load_series(path) -> PowerSeries:
    with open(path) as fh:
        return series_from_dict(json.load(fh))


def random_polynomial(rng: np.random.Generator, N: int, rows: int, cols: int,
                      degree: int, max_degree: int | None = None,
                      scale: float = 1.0) -> PowerSeries:
    """Random complex polynomial of total degree ``<= degree`` (test and demo helper)."""
    D = degree if max_degree is None else max_degree
    basis = monomial_basis(N, D)
    k = int(basis.offsets[degree + 1])
    data = np.zeros((basis.size, rows, cols), dtype=complex)
    data[:k] = scale * (rng.standard_normal((k, rows, cols))
                        + 1j * rng.standard_normal((k, rows, cols))) / math.sqrt(2)
    return PowerSeries.from_dense(basis, data)


def random_ball_points(rng: np.random.Generator, K: int, N: int,
                       rmax: float = 0.95, sphere: bool = False) -> np.ndarray:
    """K points uniform in direction; radius uniform on [0, rmax), or on the sphere."""
    v = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if sphere:
        return v
    return v * (rmax * rng.random((K, 1)))
