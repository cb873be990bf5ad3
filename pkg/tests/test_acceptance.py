"""Acceptance criteria; the terminal summary prints one line per criterion."""

import json
import time

import numpy as np
import pytest

from corpus import DEGREE, corpus, kernel_sum, normalized_kernel
from daafd import cli
from daafd.blaschke import (blaschke_vector, blaschke_vector_rudin, elementary_factor,
                            kernel_identity_residual)
from daafd.engine import EngineConfig, divide_by_factor, reconstruct, run_decomposition
from daafd.infprod import (NormalizedFactorSeq, convergence_report, factor_difference,
                           factor_difference_bound)
from daafd.interp import InterpolationProblem, condition_residuals, solve_multi
from daafd.selector import SearchConfig, select_max
from daafd.seriescore import (PowerSeries, da_norm, gleason_Ru, monomial_basis,
                              random_ball_points, random_polynomial, series_to_dict)

criterion = pytest.mark.criterion


def _sphere(rng, K, N):
    return random_ball_points(rng, K, N, sphere=True)


# -- 1 ---------------------------------------------------------------------------


@criterion(1, "kernel identity, 1000 triples per N, < 5 s")
def test_kernel_identity(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (1, 2, 3):
        pts = random_ball_points(rng, 3000, N, rmax=0.999).reshape(1000, 3, N)
        for a, z, w in pts:
            worst = max(worst, kernel_identity_residual(a, z, w))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10
    assert elapsed < 5.0


# -- 2 ---------------------------------------------------------------------------


@criterion(2, "two Blaschke formulas agree to 1e-12")
@pytest.mark.parametrize("N", [1, 2, 3])
def test_formula_agreement(rng, N):
    a = random_ball_points(rng, 300, N, rmax=0.99)
    z = random_ball_points(rng, 300, N, rmax=0.999)
    dev = max(np.abs(blaschke_vector(ai, zi) - blaschke_vector_rudin(ai, zi)).max()
              for ai, zi in zip(a, z))
    assert dev <= 1e-12


# -- 3 ---------------------------------------------------------------------------


@criterion(3, "coisometric boundary values")
class TestBoundaryCoisometry:
    @pytest.mark.parametrize("N,n", [(1, 1), (2, 1), (2, 3), (3, 2)])
    def test_elementary(self, rng, N, n):
        a = random_ball_points(rng, 1, N, rmax=0.95)[0]
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        B = elementary_factor(a, c).evaluate(_sphere(rng, 200, N))
        err = np.linalg.norm(B @ np.conj(np.swapaxes(B, 1, 2)) - np.eye(n), axis=(1, 2), ord=2)
        assert err.max() <= 1e-8

    @pytest.mark.parametrize("N,n", [(1, 1), (2, 2), (3, 1)])
    def test_three_factor_chain(self, rng, N, n):
        pts = random_ball_points(rng, 3, N, rmax=0.9)
        vecs = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
        chain = solve_multi(InterpolationProblem(pts, vecs))
        assert len(chain.factors) == 3
        B = chain.evaluate(_sphere(rng, 200, N))
        err = np.linalg.norm(B @ np.conj(np.swapaxes(B, 1, 2)) - np.eye(n), axis=(1, 2), ord=2)
        assert err.max() <= 1e-8


# -- 4 ---------------------------------------------------------------------------


@criterion(4, "tangential interpolation, random and skip-engineered")
class TestInterpolation:
    def test_random_problems(self, rng):
        worst = 0.0
        for _ in range(20):
            pts = random_ball_points(rng, 3, 2, rmax=0.9)
            vecs = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
            prob = InterpolationProblem(pts, vecs)
            chain = solve_multi(prob)
            for _ in range(20):
                u = random_polynomial(rng, 2, chain.cols, 1, 3)
                worst = max(worst, condition_residuals(chain, prob, u(pts)).max())
        assert worst <= 1e-9

    def test_skip_path(self, rng):
        for _ in range(5):
            pts = random_ball_points(rng, 2, 2, rmax=0.9)
            c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            d = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            lam = complex(rng.standard_normal(), rng.standard_normal())
            # third condition repeats the first one up to scaling
            prob = InterpolationProblem([pts[0], pts[1], pts[0]], [c, d, lam * c])
            chain = solve_multi(prob)
            assert len(chain.factors) == 2
            assert [j for j, _ in chain.skipped] == [2]
            u = random_polynomial(rng, 2, chain.cols, 1, 3)
            assert condition_residuals(chain, prob, u(prob.points)).max() <= 1e-9


# -- 5 ---------------------------------------------------------------------------

_CORPUS = corpus()
_REPORTS = {}


def corpus_report(name):
    if name not in _REPORTS:
        cfg = EngineConfig(search=SearchConfig(budget=2000))
        t0 = time.perf_counter()
        rep = run_decomposition(_CORPUS[name], cfg)
        _REPORTS[name] = (rep, time.perf_counter() - t0)
    return _REPORTS[name]


@criterion(5, "energy ledger on the 10-function corpus, D=24, budget 2000")
@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(_CORPUS))
def test_energy_ledger(name):
    F = _CORPUS[name]
    assert F.max_degree == DEGREE
    rep, elapsed = corpus_report(name)
    total = rep.initial_energy
    assert rep.steps
    captured = 0.0
    prev = total
    for s in rep.steps:
        captured += s.term_energy
        assert s.term_energy >= 0
        assert abs(total - captured - s.residual_energy) <= 1e-6 * total
        assert abs(s.ledger_defect) <= 1e-6 * total
        assert s.residual_energy <= prev + 1e-12 * total
        prev = s.residual_energy
    assert elapsed < 60.0


# -- 6 ---------------------------------------------------------------------------


@criterion(6, "single normalised kernel recovered in one step")
@pytest.mark.parametrize("w,c", [
    ([0.4 - 0.3j], [[1.5]]),
    ([0.3, -0.2j], [[1.0]]),
    ([-0.1, 0.5], [[1.0], [0.5j]]),
])
def test_single_kernel(w, c):
    F = normalized_kernel(w, c)
    rep = run_decomposition(F, EngineConfig(search=SearchConfig(budget=2000)))
    assert len(rep.steps) == 1
    assert rep.final_residual_energy <= 1e-8 * rep.initial_energy
    assert rep.steps[0].term_energy >= (1 - 1e-8) * rep.initial_energy


# -- 7 ---------------------------------------------------------------------------


def _tm_function(ws, k, z):
    """Modified Blaschke system in the disc, built from the points ``ws``."""
    a = ws[k]
    v = np.sqrt(1 - abs(a) ** 2) / (1 - z * np.conj(a))
    for b in ws[:k]:
        v = v * (z - b) / (1 - z * np.conj(b))
    return v


@criterion(7, "one-variable terms match the modified Blaschke system")
@pytest.mark.parametrize("F", [
    kernel_sum([[0.3], [-0.4j], [0.5 + 0.1j]], [[[1.0]], [[0.7]], [[-0.5j]]], 120),
    random_polynomial(np.random.default_rng(2), 1, 1, 1, 8, 120),
], ids=["kernels", "polynomial"])
def test_classical_cross_check(F):
    rep = run_decomposition(F, EngineConfig(max_steps=6, search=SearchConfig(budget=2000)))
    ws = np.array([s.w[0] for s in rep.steps])
    assert len(ws) >= 3
    # coefficients <F, B_k> by quadrature on the circle (exact for these degrees)
    nodes = np.exp(2j * np.pi * np.arange(2048) / 2048)
    Fb = F(nodes[:, None])[:, 0, 0]
    rng = np.random.default_rng(9)
    z = 0.9 * np.sqrt(rng.random(50)) * np.exp(2j * np.pi * rng.random(50))
    prev = np.zeros(50, dtype=complex)
    for k in range(len(ws)):
        cur = reconstruct(rep, z[:, None], k)[:, 0, 0]
        coef = np.mean(Fb * np.conj(_tm_function(ws, k, nodes)))
        np.testing.assert_allclose(cur - prev, coef * _tm_function(ws, k, z), rtol=0, atol=1e-8)
        prev = cur


# -- 8 ---------------------------------------------------------------------------


def forward_matrix(factor, D):
    """Matrix of ``g -> (B g)_{<= D}`` in orthonormal coefficient coordinates."""
    basis = monomial_basis(factor.N, D)
    cols = factor.cols
    K = basis.size * cols
    data = np.zeros((basis.size, cols, K), dtype=complex)
    idx = np.arange(K)
    data[idx // cols, idx % cols, idx] = 1
    out = factor.apply(PowerSeries.from_dense(basis, data)).data.reshape(-1, K)
    sw = np.sqrt(basis.weights)
    return np.repeat(sw, factor.rows)[:, None] * out / np.repeat(sw, cols)[None, :]


@criterion(8, "division returns the minimal-norm preimage")
@pytest.mark.parametrize("N,D,deg", [(1, 40, 6), (2, 16, 4)])
def test_division_oracle(rng, N, D, deg):
    for _ in range(25):
        a = random_ball_points(rng, 1, N, rmax=0.45)[0]
        n = int(rng.integers(1, 3))
        factor = elementary_factor(a, rng.standard_normal(n) + 1j * rng.standard_normal(n))
        g = random_polynomial(rng, N, factor.cols, 1, deg, D)
        H = factor.apply(g)
        F_next = divide_by_factor(H, factor)
        assert da_norm(factor.apply(F_next) - H) <= 1e-8 * da_norm(H)
        h = (H.data * np.sqrt(H.basis.weights)[:, None, None]).reshape(-1)
        x = np.linalg.lstsq(forward_matrix(factor, D), h, rcond=1e-8)[0]
        assert abs(da_norm(F_next) - np.linalg.norm(x)) <= 1e-8 * np.linalg.norm(x)
        if N == 1 and n == 1:
            z = 0.5 * np.exp(2j * np.pi * rng.random(10))[:, None]
            b = factor.evaluate(z)[:, 0, 0]  # u b_a(z) with |u| = 1
            keep = np.abs(b) > 0.1
            np.testing.assert_allclose(F_next(z)[keep, 0, 0], H(z)[keep, 0, 0] / b[keep],
                                       rtol=1e-8, atol=1e-10)


# -- 9 ---------------------------------------------------------------------------


@criterion(9, "maximum selection on F(z)=z and the objective upper bound")
class TestMaximumSelection:
    def test_identity_function(self):
        F = PowerSeries.monomial([1], DEGREE)
        sel = select_max(None, F, 1)
        assert abs(abs(sel.w[0]) - 1 / np.sqrt(2)) <= 1e-4
        assert abs(sel.value - 0.25) <= 1e-6
        assert sel.value <= da_norm(F) ** 2

    def test_upper_bound_random(self, rng):
        cfg = SearchConfig(budget=300)
        for N, n, m in [(1, 1, 1), (2, 1, 2), (2, 2, 2)]:
            for _ in range(3):
                F = random_polynomial(rng, N, n, m, 4, 12)
                pts = random_ball_points(rng, 2, N, rmax=0.8)
                chain = solve_multi(InterpolationProblem(pts, np.ones((2, n))))
                G = random_polynomial(rng, N, chain.cols, m, 3, 12)
                for B, f in [(None, F), (chain, G)]:
                    sel = select_max(B, f, 1, cfg)
                    assert sel.value <= da_norm(f) ** 2 * (1 + 1e-12)

    def test_upper_bound_along_decompositions(self):
        for name in ("n1_two_pole", "n2_kernels"):
            rep, _ = corpus_report(name)
            prev = rep.initial_energy
            for s in rep.steps:
                assert s.selection_value <= prev * (1 + 1e-10)
                prev = s.residual_energy


# -- 10 --------------------------------------------------------------------------


@criterion(10, "infinite-product bounds for 1-|a_k|^2 = 4^-k, N=2, m <= 12, < 10 s")
@pytest.mark.parametrize("directions", ["fixed", "random"])
def test_infinite_product_bounds(rng, directions):
    t0 = time.perf_counter()
    m = 12
    radii = np.sqrt(1 - 4.0 ** -np.arange(1, m + 1))
    if directions == "fixed":
        u = np.tile(np.array([1.0, 1j]) / np.sqrt(2), (m, 1))
    else:
        u = _sphere(rng, m, 2)
    seq = NormalizedFactorSeq(radii[:, None] * u)
    zs = random_ball_points(rng, 20, 2, rmax=0.8)
    zs = np.vstack([zs, 0.8 * _sphere(rng, 5, 2), np.zeros((1, 2))])
    worst = np.inf
    for z in zs:
        rep = convergence_report(seq, z, m)
        worst = min(worst, rep["min_slack"])
        for a in seq.points:
            d = np.linalg.norm(factor_difference(a, z))
            worst = min(worst, float(factor_difference_bound(a, z)) - d)
        for f in seq.factors:
            A = np.linalg.norm(f.A(z), 2)
            worst = min(worst, float(factor_difference_bound(f.a, z)) - A)
    assert worst >= -1e-10
    assert time.perf_counter() - t0 < 10.0


# -- 11 --------------------------------------------------------------------------


@criterion(11, "Gleason decomposition at the origin")
@pytest.mark.parametrize("N", [2, 3])
def test_gleason_identity(rng, N):
    worst = 0.0
    for _ in range(100):
        deg = int(rng.integers(1, 7))
        f = random_polynomial(rng, N, 1, 1, deg)
        z = random_ball_points(rng, 5, N, rmax=0.99)
        lhs = f(z) - f(np.zeros(N))
        rhs = sum(z[:, u, None, None] * gleason_Ru(f, u)(z) for u in range(N))
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    assert worst <= 1e-12


# -- 12 --------------------------------------------------------------------------


@criterion(12, "decompose output independent of the thread count")
def test_thread_determinism(tmp_path):
    F = random_polynomial(np.random.default_rng(4), 2, 2, 1, 3, 12)
    (tmp_path / "f.json").write_text(json.dumps(series_to_dict(F)))
    (tmp_path / "cfg.json").write_text(json.dumps({"max_steps": 4, "budget": 1500}))
    outs = []
    for threads in (1, 4):
        csv_path = tmp_path / f"e{threads}.csv"
        code = cli.main(["decompose", "--input", str(tmp_path / "f.json"),
                         "--config", str(tmp_path / "cfg.json"), "--seed", "3",
                         "--threads", str(threads), "--energies", str(csv_path)])
        assert code == 0
        outs.append(csv_path.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 5
