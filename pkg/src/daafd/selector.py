"""Maximum selection: maximise ``(1 - |w|^2) ||B(w) P F(w)||_F^2`` over ``w`` and rank-r ``P``.

Existence of a maximiser is guaranteed (the objective vanishes at the
sphere and the rank-r projections form a compact set); finding it is a
two-phase search.  A deterministic low-discrepancy scan of the ball is
followed by a Nelder-Mead refinement in the ``2N`` real coordinates; at
every probed ``w`` the projection is optimised by multi-start ascent on
the Stiefel manifold of ``d x r`` isometries.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import qmc

from .seriescore import PowerSeries, monomial_basis


@dataclass(frozen=True, eq=False)
class Projection:
    """Orthogonal projection ``P = V V^*`` stored through a ``d x r`` isometry ``V``."""

    V: np.ndarray

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.V.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self.V @ np.conj(self.V.T)

    @classmethod
    def canonical(cls, d: int, r: int) -> "Projection":
        return cls(np.eye(d, r, dtype=complex))


@dataclass
class SearchConfig:
    budget: int = 2000
    r_max: float = 0.95
    clamp: float = 0.999
    starts: int = 8
    refine_starts: int = 3
    proj_tol: float = 1e-10
    proj_maxiter: int = 200
    xtol: float = 1e-8
    refine_maxiter: int = 4000
    seed: int = 42
    threads: int = 1
    chunk: int = 256


@dataclass
class SelectionResult:
    w: np.ndarray
    P: Projection
    value: float
    diagnostics: dict = field(default_factory=dict)


def msp_objective(Bval, P, Fval, w) -> float:
    """``(1 - |w|^2) ||Bval P Fval||_F^2``; ``P`` is a :class:`Projection` or a matrix."""
    w = np.asarray(w, dtype=complex).ravel()
    Pm = P.matrix if isinstance(P, Projection) else np.asarray(P, dtype=complex)
    Bval = np.asarray(Bval, dtype=complex)
    Fval = np.asarray(Fval, dtype=complex)
    if Bval.shape[1] != Pm.shape[0] or Pm.shape[1] != Fval.shape[0]:
        raise ValueError(f"shapes do not compose: {Bval.shape}, {Pm.shape}, {Fval.shape}")
    r2 = float(np.vdot(w, w).real)
    if r2 >= 1:
        raise ValueError("w must lie in the open ball")
    X = Bval @ Pm @ Fval
    return (1 - r2) * float(np.vdot(X, X).real)


def projection_value(Bval, V, Fval) -> float:
    """``||B V V^* F||_F^2``."""
    X = np.asarray(Bval) @ V @ (np.conj(V.T) @ np.asarray(Fval))
    return float(np.vdot(X, X).real)


# -- projection optimiser (batched) -------------------------------------------


def _herm(X):
    return np.conj(np.swapaxes(X, -1, -2))


def _values(A, G, V):
    # Tr(V^* A V V^* G V) for a batch
    Vh = _herm(V)
    Ar = Vh @ A @ V
    Gr = Vh @ G @ V
    return np.einsum("kij,kji->k", Ar, Gr).real


def _orth(X):
    if X.shape[-1] == 1:
        nrm = np.linalg.norm(X, axis=-2, keepdims=True)
        return X / np.where(nrm > 0, nrm, 1.0)
    Q, R = np.linalg.qr(X)
    # fix column phases so the retraction is continuous and deterministic
    d = np.diagonal(R, axis1=-2, axis2=-1)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return Q * ph[..., None, :]


def _top_eigvecs(M, r):
    _, vecs = np.linalg.eigh(M)
    return vecs[..., ::-1][..., :r]


def _ascent(A, G, V, tol, maxiter):
    K = A.shape[0]
    g = _values(A, G, V)
    scale = np.linalg.norm(A, axis=(1, 2)) * np.linalg.norm(G, axis=(1, 2))
    eta = 1.0 / np.where(scale > 0, scale, 1.0)
    eta_floor = eta * 1e-12
    active = np.flatnonzero(scale > 0)
    it = 0
    while active.size and it < maxiter:
        it += 1
        Va, Aa, Ga = V[active], A[active], G[active]
        AV, GV = Aa @ Va, Ga @ Va
        Vh = _herm(Va)
        Z = AV @ (Vh @ GV) + GV @ (Vh @ AV)
        Z = Z - Va @ (Vh @ Z)
        cand = _orth(Va + eta[active, None, None] * Z)
        gc = _values(Aa, Ga, cand)
        ga = g[active]
        acc = gc > ga
        gain = (gc - ga) / np.maximum(ga, 1e-300)
        idx = active[acc]
        V[idx] = cand[acc]
        g[idx] = gc[acc]
        eta[active] = np.where(acc, eta[active] * 2.0, eta[active] * 0.5)
        done = (acc & (gain < tol)) | (eta[active] < eta_floor[active])
        done |= np.linalg.norm(Z, axis=(1, 2)) * eta[active] < 1e-15
        active = active[~done]
    return V, g, it


def _bloch(A):
    # coefficients (Tr A sigma_1, Tr A sigma_2, Tr A sigma_3) of a Hermitian 2x2 batch
    return np.stack([2 * A[:, 0, 1].real, -2 * A[:, 0, 1].imag,
                     (A[:, 0, 0] - A[:, 1, 1]).real], axis=1)


def _rank_one_plane(A, G, grid=64, newton=8):
    """Exact rank-one optimum for ``d = 2``.

    With ``v v^* = (I + x.sigma)/2`` the objective is
    ``(a0 + x.alpha)(g0 + x.gamma)/4`` on the unit sphere of ``R^3``; a maximiser
    lies in the plane of ``alpha`` and ``gamma``, which leaves a degree-two
    trigonometric polynomial in one angle.
    """
    K = A.shape[0]
    a0 = np.trace(A, axis1=1, axis2=2).real
    g0 = np.trace(G, axis1=1, axis2=2).real
    al, ga = _bloch(A), _bloch(G)
    # orthonormal frame (e1, e2) of a plane containing alpha and gamma
    e1 = al.copy()
    n1 = np.linalg.norm(e1, axis=1)
    swap = n1 < 1e-14 * np.maximum(np.linalg.norm(ga, axis=1), 1e-300)
    e1[swap] = ga[swap]
    n1 = np.linalg.norm(e1, axis=1)
    e1[n1 == 0] = [0.0, 0.0, 1.0]
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    other = np.where(swap[:, None], al, ga)
    e2 = other - np.sum(other * e1, axis=1, keepdims=True) * e1
    n2 = np.linalg.norm(e2, axis=1)
    fallback = np.cross(e1, np.where(np.abs(e1[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]]))
    small = n2 <= 1e-14 * np.maximum(np.linalg.norm(other, axis=1), 1e-300)
    e2[small] = fallback[small]
    e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
    p1, p2 = np.sum(al * e1, 1), np.sum(al * e2, 1)
    q1, q2 = np.sum(ga * e1, 1), np.sum(ga * e2, 1)

    def h(t):
        c, s = np.cos(t), np.sin(t)
        return (a0[:, None] + p1[:, None] * c + p2[:, None] * s) * \
               (g0[:, None] + q1[:, None] * c + q2[:, None] * s)

    th = np.linspace(0, 2 * np.pi, grid, endpoint=False)[None, :]
    t = th[0, np.argmax(h(th), axis=1)][:, None]
    for _ in range(newton):
        c, s = np.cos(t), np.sin(t)
        u = a0[:, None] + p1[:, None] * c + p2[:, None] * s
        du = -p1[:, None] * s + p2[:, None] * c
        v = g0[:, None] + q1[:, None] * c + q2[:, None] * s
        dv = -q1[:, None] * s + q2[:, None] * c
        d1 = du * v + u * dv
        d2 = -(u - a0[:, None]) * v + 2 * du * dv - u * (v - g0[:, None])
        ok = d2 < 0
        t = np.where(ok, t - d1 / np.where(ok, d2, -1.0), t)
    t = t[:, 0]
    x = np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2
    up = x[:, 2] >= 0
    V = np.empty((K, 2, 1), dtype=complex)
    V[:, 0, 0] = np.where(up, 1 + x[:, 2], x[:, 0] - 1j * x[:, 1])
    V[:, 1, 0] = np.where(up, x[:, 0] + 1j * x[:, 1], 1 - x[:, 2])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return _values(A, G, V), V


def batched_projection(Bb, Fb, r, starts=8, rng=None, tol=1e-10, maxiter=200,
                       random_starts=None, warm=None):
    """Optimise the projection independently for a batch of ``(B, F)`` pairs.

    Returns ``(values, V, iterations)`` with ``V`` of shape ``(K, d, r)``.
    ``random_starts`` may supply the random initial isometries
    ``(K, n_random, d, r)`` so results do not depend on how a batch is split.
    """
    Bb = np.asarray(Bb, dtype=complex)
    Fb = np.asarray(Fb, dtype=complex)
    K, _, d = Bb.shape
    if not 1 <= r <= d:
        raise ValueError(f"rank {r} out of range for dimension {d}")
    A = _herm(Bb) @ Bb
    G = Fb @ _herm(Fb)
    if r == d:
        V = np.broadcast_to(np.eye(d, dtype=complex), (K, d, d)).copy()
        return _values(A, G, V), V, 0
    if r == 1 and d == 2:
        vals, V = _rank_one_plane(A, G)
        return vals, V, 0
    inits = [_top_eigvecs(A, r), _top_eigvecs(G, r)]
    nA = np.linalg.norm(A, axis=(1, 2))[:, None, None]
    nG = np.linalg.norm(G, axis=(1, 2))[:, None, None]
    inits.append(_top_eigvecs(A / np.where(nA > 0, nA, 1) + G / np.where(nG > 0, nG, 1), r))
    if warm is not None:
        inits.append(np.broadcast_to(warm, (K, d, r)))
    n_random = max(starts - 3, 0)
    if n_random:
        if random_starts is None:
            rng = np.random.default_rng(0) if rng is None else rng
            random_starts = (rng.standard_normal((K, n_random, d, r))
                             + 1j * rng.standard_normal((K, n_random, d, r)))
        for j in range(n_random):
            inits.append(random_starts[:, j])
    S = len(inits)
    V0 = _orth(np.concatenate([np.asarray(v, dtype=complex) for v in inits], axis=0))
    AA = np.concatenate([A] * S, axis=0)
    GG = np.concatenate([G] * S, axis=0)
    V, g, its = _ascent(AA, GG, V0, tol, maxiter)
    g = g.reshape(S, K)
    best = np.argmax(g, axis=0)  # first start wins ties
    V = V.reshape(S, K, d, r)[best, np.arange(K)]
    return g[best, np.arange(K)], V, its


def optimize_projection(Bval, Fval, r: int, starts: int = 8, seed: int = 0,
                        tol: float = 1e-10, maxiter: int = 200, warm=None) -> Projection:
    """Rank-``r`` projection maximising ``||Bval P Fval||_F^2``."""
    Bval = np.atleast_2d(np.asarray(Bval, dtype=complex))
    Fval = np.atleast_2d(np.asarray(Fval, dtype=complex))
    d = Bval.shape[1]
    if Fval.shape[0] != d:
        raise ValueError(f"shapes do not compose: {Bval.shape}, {Fval.shape}")
    if not 1 <= r <= d:
        raise ValueError(f"rank {r} out of range for dimension {d}")
    _, V, _ = batched_projection(Bval[None], Fval[None], r, starts=starts,
                                 rng=np.random.default_rng(seed), tol=tol,
                                 maxiter=maxiter, warm=warm)
    return Projection(V[0])


# -- admissible range restriction -------------------------------------------


def admissible_basis(Bval, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (``d x q``) of the range of ``Bval^*``."""
    _, s, Vh = np.linalg.svd(Bval)
    if s.size == 0 or s[0] == 0:
        return np.zeros((Bval.shape[1], 0), dtype=complex)
    q = int(np.sum(s > rtol * max(s[0], 1.0)))
    return np.conj(Vh[:q].T)


def _restricted_batch(Bb, Fb, r, cfg, random_starts, rng, admissible, warm=None):
    """Optimise projections for a batch; optionally inside ``ran B(w)^*``."""
    K, n, d = Bb.shape
    if not admissible:
        rr = min(r, d)
        vals, V, _ = batched_projection(Bb, Fb, rr, cfg.starts, rng, cfg.proj_tol,
                                        cfg.proj_maxiter, random_starts, warm)
        return vals, V
    _, s, Vh = np.linalg.svd(Bb)
    q_all = np.sum(s > 1e-10 * np.maximum(s[:, :1], 1.0), axis=1)
    vals = np.zeros(K)
    Vout = [None] * K
    for q in np.unique(q_all):
        idx = np.flatnonzero(q_all == q)
        if q == 0:
            for i in idx:
                Vout[i] = np.zeros((d, 0), dtype=complex)
            continue
        S = _herm(Vh[idx, :q, :])  # (k, d, q)
        Bq = Bb[idx] @ S
        Fq = _herm(S) @ Fb[idx]
        rr = min(r, int(q))
        rs = None
        if random_starts is not None:
            rs = random_starts[idx][..., :q, :rr]
        wq = None
        if warm is not None and warm.shape[2] == rr:
            wq = _orth(_herm(S) @ warm)
        v, Vq, _ = batched_projection(Bq, Fq, rr, cfg.starts, rng, cfg.proj_tol,
                                      cfg.proj_maxiter, rs, wq)
        vals[idx] = v
        Vf = S @ Vq
        for j, i in enumerate(idx):
            Vout[i] = Vf[j]
    return vals, Vout


# -- candidate scan ---------------------------------------------------------


def scan_points(N: int, budget: int, r_max: float = 0.95, seed: int = 42) -> np.ndarray:
    """Deterministic low-discrepancy candidates in ``|w| <= r_max`` (first one is 0).

    A Sobol sequence in ``2N + 1`` dimensions; the first coordinate sets the
    radius (uniform in area along each complex line), the rest a Gaussian
    direction on the sphere.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    pts = np.zeros((budget, N), dtype=complex)
    if budget == 1:
        return pts
    sob = qmc.Sobol(d=2 * N + 1, scramble=True, seed=seed)
    m = int(math.ceil(math.log2(budget)))
    u = sob.random_base2(m)[: budget - 1]
    u = np.clip(u, 1e-12, 1 - 1e-12)
    g = ndtri(u[:, 1:])
    direction = g[:, :N] + 1j * g[:, N:]
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = r_max * np.sqrt(u[:, 0])
    pts[1:] = direction * radius[:, None]
    return pts


class CandidateSet:
    """Scan points with cached chain values, extended factor by factor."""

    def __init__(self, N: int, n: int, cfg: SearchConfig):
        self.N = N
        self.points = scan_points(N, cfg.budget, cfg.r_max, cfg.seed)
        self.weights = 1.0 - np.sum(np.abs(self.points) ** 2, axis=1)
        self.chain_values = np.broadcast_to(np.eye(n, dtype=complex),
                                            (self.points.shape[0], n, n)).copy()
        self._mono = {}

    def push(self, factor) -> None:
        self.chain_values = np.matmul(self.chain_values, factor.evaluate(self.points))

    def monomials(self, D: int) -> np.ndarray:
        if D not in self._mono:
            self._mono[D] = monomial_basis(self.N, D).monomials(self.points)
        return self._mono[D]

    def evaluate(self, F: PowerSeries) -> np.ndarray:
        return np.einsum("ka,aij->kij", self.monomials(F.max_degree), F.data)


def _evaluate_B(B, z: np.ndarray, n: int) -> np.ndarray:
    if B is None:
        return np.broadcast_to(np.eye(n, dtype=complex), (z.shape[0], n, n))
    return np.asarray(B(z) if callable(B) else B.evaluate(z))


def select_max(B, F: PowerSeries, r: int, cfg: Optional[SearchConfig] = None,
               admissible: bool = False, candidates: Optional[CandidateSet] = None
               ) -> SelectionResult:
    """Maximum selection for the pair ``(B, F)``.

    ``B`` is ``None`` (identity), a chain, or a callable mapping a ``(K, N)``
    batch to ``(K, n, d)`` values.  With ``admissible`` the projection range
    is restricted to ``ran B(w)^*``.  ``candidates`` may carry precomputed
    chain values at the scan points.
    """
    cfg = cfg or SearchConfig()
    N, d = F.N, F.rows
    if candidates is None:
        nn = d if B is None else B.rows
        candidates = CandidateSet(N, nn, cfg)
        if B is not None:
            candidates.chain_values = _evaluate_B(B, candidates.points, nn).copy()
    pts = candidates.points
    K = pts.shape[0]
    rr = min(r, d)

    if np.all(F.data == 0):
        return SelectionResult(np.zeros(N, dtype=complex), Projection.canonical(d, rr), 0.0,
                               {"candidates": K, "refine_iterations": 0, "history": [0.0],
                                "scan_value": 0.0})

    Fvals = candidates.evaluate(F)
    Bvals = candidates.chain_values
    rng = np.random.default_rng(cfg.seed)
    n_random = max(cfg.starts - 3, 0)
    rs = (rng.standard_normal((K, n_random, d, rr))
          + 1j * rng.standard_normal((K, n_random, d, rr))) if n_random else None

    chunks = [slice(i, min(i + cfg.chunk, K)) for i in range(0, K, cfg.chunk)]

    def work(sl):
        return _restricted_batch(Bvals[sl], Fvals[sl], r, cfg,
                                 None if rs is None else rs[sl], None, admissible)

    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(sl) for sl in chunks]
    vals = np.concatenate([res[0] for res in results]) * candidates.weights
    Vs = [V for res in results for V in res[1]]
    best = int(np.argmax(vals))
    best_w, best_V, best_val = pts[best].copy(), np.asarray(Vs[best]), float(vals[best])

    # local refinement
    clamp = cfg.clamp
    Bfun = (lambda z: _evaluate_B(B, z, d)) if B is not None else None
    warm = best_V if best_V.shape[1] == rr else None
    cache = {}
    rcfg = SearchConfig(**{**cfg.__dict__, "starts": cfg.refine_starts})

    def point(x):
        w = x[:N] + 1j * x[N:]
        nw = np.linalg.norm(w)
        if nw > clamp:
            w = w * (clamp / nw)
        return w

    def evaluate(x):
        key = x.tobytes()
        if key in cache:
            return cache[key]
        w = point(x)
        Bw = (np.eye(d, dtype=complex) if Bfun is None else Bfun(w[None])[0])
        Fw = F(w)
        v, V = _restricted_batch(Bw[None], Fw[None], r, rcfg, None,
                                 np.random.default_rng(cfg.seed), admissible,
                                 None if warm is None else warm[None])
        val = float(v[0]) * (1 - float(np.vdot(w, w).real))
        cache[key] = (val, np.asarray(V[0]), w)
        return cache[key]

    x0 = np.concatenate([best_w.real, best_w.imag])
    step = 0.5 * cfg.r_max * (2.0 / max(K, 2)) ** (1.0 / (2 * N))
    simplex = np.vstack([x0] + [x0 + step * np.eye(2 * N)[i] for i in range(2 * N)])
    history = [best_val]

    def cb(xk):
        history.append(evaluate(np.asarray(xk, dtype=float))[0])

    fscale = max(best_val, 1e-300)
    res = minimize(lambda x: -evaluate(x)[0] / fscale, x0, method="Nelder-Mead",
                   callback=cb,
                   options={"initial_simplex": simplex, "xatol": cfg.xtol,
                            "fatol": 1e-13, "maxiter": cfg.refine_maxiter,
                            "maxfev": 2 * cfg.refine_maxiter})
    val, V, w = evaluate(np.asarray(res.x, dtype=float))
    if val > best_val:
        best_w, best_V, best_val = w, V, val
    diag = {"candidates": K, "refine_iterations": int(res.nit), "history": history,
            "scan_value": float(vals[best]), "scan_index": best,
            "probed_max": float(np.max(vals))}
    return SelectionResult(best_w, Projection(best_V), best_val, diag)
