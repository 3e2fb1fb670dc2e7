import io

import numpy as np
import pytest

from rwre_lab import EnvironmentView, transition_vector
from rwre_lab.corrector import (H_eps, ResolventParams, centered_drift, chi, chi_path_sum,
                                cocycle_residual, decompose, g_max, h_at, limit_diffusion_matrix,
                                min_depth, reachable, resolvent_along, resolvent_h,
                                resolvent_residual, write_decomposition_csv)
from rwre_lab.env import derive_seed
from rwre_lab.errors import InvalidStepError, UnreachableError
from rwre_lab.walk import sample_path


def test_depth_invariant(uniform1):
    p = ResolventParams.for_law(uniform1, 1 / 16, 1e-8)
    assert p.satisfies(uniform1)
    tail = (1 + 1 / 16) ** -p.K * g_max(uniform1) * 16
    assert tail <= 1e-8 * (1 + 1e-12)
    assert not ResolventParams(1 / 16, 1e-8, p.K - 1).satisfies(uniform1)
    assert g_max(uniform1) == 2.0
    with pytest.raises(ValueError):
        ResolventParams(0.0, 1e-8, 10)


def test_zero_for_deterministic_law(simple2):
    env = EnvironmentView(simple2, 1)
    p = ResolventParams.for_law(simple2, 0.1, 1e-6)
    assert np.array_equal(resolvent_h(env, p), [0.0, 0.0])
    path = sample_path(env, 30, 2)
    r = decompose(path, env, p)
    assert np.allclose(r.xbar, path.positions[-1] - 30 * np.array([0.0, 0.0]))
    for v in (r.m_eps, r.s_eps, r.r_eps, r.r_n):
        assert np.array_equal(v, [0.0, 0.0])
    assert np.array_equal(H_eps(env, 0, (0, 0), (1, 0), p), [0.0, 0.0])
    assert cocycle_residual(path, env, p).residual == 0.0


def test_series_head(uniform1):
    env = EnvironmentView(uniform1, 3)
    eps = 0.2
    h = resolvent_h(env, ResolventParams(eps, 1.0, 1))
    assert np.allclose(h, centered_drift(env, 0, (0,)) / (1 + eps), atol=1e-15)


def test_resolvent_equation_seed42(uniform1):
    env = EnvironmentView(uniform1, 42)
    p = ResolventParams.for_law(uniform1, 1 / 16, 1e-8)
    rng = np.random.default_rng(0)
    for _ in range(20):
        lvl = int(rng.integers(0, 50))
        x = int(rng.integers(-lvl, lvl + 1)) if lvl else 0
        assert resolvent_residual(env, lvl, (x,), p) <= 2 * p.tol


def test_resolvent_equation_two_dim(dirichlet2):
    env = EnvironmentView(dirichlet2, 5)
    p = ResolventParams.for_law(dirichlet2, 1 / 4, 1e-8)
    for lvl, x in [(0, (0, 0)), (3, (1, -2)), (7, (-3, 2))]:
        assert resolvent_residual(env, lvl, x, p) <= 2 * p.tol


def test_martingale_increments_have_zero_conditional_mean(mixture1):
    env = EnvironmentView(mixture1, 11)
    p = ResolventParams.for_law(mixture1, 1 / 8, 1e-8)
    S = mixture1.support.array
    for lvl, x in [(0, 0), (4, 2), (9, -3)]:
        pi = transition_vector(env, lvl, (x,))
        m = sum(pi[j] * H_eps(env, lvl, (x,), (x + S[j, 0],), p) for j in range(len(S)))
        assert np.all(np.abs(m) <= 2 * p.tol)


def test_invalid_step(uniform1):
    env = EnvironmentView(uniform1, 1)
    with pytest.raises(InvalidStepError):
        H_eps(env, 0, (0,), (2,), ResolventParams.for_law(uniform1, 0.5, 1e-4))


def test_H_eps_cauchy_in_eps(uniform1):
    # |H_eps - H_{eps/2}| shrinks on average as eps halves
    def mean_gap(eps):
        gaps = []
        for i in range(40):
            env = EnvironmentView(uniform1, derive_seed(7, i, 0))
            z = (1,) if i % 2 else (-1,)
            a = H_eps(env, 0, (0,), z, ResolventParams.for_law(uniform1, eps, 1e-8))
            b = H_eps(env, 0, (0,), z, ResolventParams.for_law(uniform1, eps / 2, 1e-8))
            gaps.append(float(np.abs(a - b)[0]))
        return np.mean(gaps)

    g = [mean_gap(e) for e in (1 / 2, 1 / 8, 1 / 32)]
    assert g[0] > g[1] > g[2]


def test_sweep_agrees_with_series(dirichlet2, uniform1):
    for law, n, eps in [(uniform1, 60, 1 / 8), (dirichlet2, 12, 1 / 4)]:
        env = EnvironmentView(law, 13)
        p = ResolventParams.for_law(law, eps, 1e-9)
        path = sample_path(env, n, 1)
        sw = resolvent_along(env, path.positions, p)
        assert np.all(sw.err_path <= p.tol) and np.all(sw.err_next <= p.tol)
        series = np.array([h_at(env, k, path.positions[k], p) for k in range(n + 1)])
        assert np.max(np.abs(sw.h_path - series)) <= 2 * p.tol
        S = law.support.array
        k = n // 2
        nxt = np.array([h_at(env, k + 1, path.positions[k] + z, p) for z in S])
        assert np.max(np.abs(sw.h_next[k] - nxt)) <= 2 * p.tol


def test_sweep_error_bound_is_honest(uniform1):
    # a loose tolerance must still bound the true error
    env = EnvironmentView(uniform1, 2)
    path = sample_path(env, 40, 1)
    loose = ResolventParams.for_law(uniform1, 1 / 16, 1e-2)
    sharp = ResolventParams.for_law(uniform1, 1 / 16, 1e-11)
    a = resolvent_along(env, path.positions, loose)
    b = resolvent_along(env, path.positions, sharp)
    assert np.all(np.abs(a.h_path - b.h_path)[:, 0] <= a.err_path + 1e-10)


@pytest.mark.parametrize("method", ["sweep", "series"])
def test_decomposition_identity(dirichlet2, method):
    env = EnvironmentView(dirichlet2, 4)
    p = ResolventParams.for_law(dirichlet2, 1 / 8, 1e-8)
    path = sample_path(env, 12, 9)
    r = decompose(path, env, p, method=method)
    assert r.identity_residual <= 1e-9
    assert np.allclose(r.r_n, p.epsilon * r.s_eps + r.r_eps, atol=1e-9)


def test_r_eps_bound(uniform1):
    env = EnvironmentView(uniform1, 6)
    p = ResolventParams.for_law(uniform1, 1 / 32, 1e-8)
    path = sample_path(env, 100, 2)
    sw = resolvent_along(env, path.positions, p)
    r = decompose(path, env, p)
    assert np.all(np.abs(r.r_eps) <= 2 * np.abs(sw.h_path).max())


def test_chi_basics(uniform1):
    env = EnvironmentView(uniform1, 42)
    p = ResolventParams.for_law(uniform1, 1 / 16, 1e-10)
    assert np.array_equal(chi(env, 0, (0,), p), [0.0])
    c = chi(env, 2, (0,), p)
    assert np.allclose(c, h_at(env, 0, (0,), p) - h_at(env, 2, (0,), p), atol=0)
    assert np.allclose(chi_path_sum(env, [(1,), (-1,)], p), c, atol=1e-9)
    assert np.allclose(chi_path_sum(env, [(-1,), (1,)], p), c, atol=1e-9)
    with pytest.raises(UnreachableError):
        chi(env, 2, (1,), p)
    with pytest.raises(UnreachableError):
        chi(env, 2, (4,), p)


def test_bridges_are_path_independent(dirichlet2):
    env = EnvironmentView(dirichlet2, 3)
    p = ResolventParams.for_law(dirichlet2, 1 / 4, 1e-10)
    S = dirichlet2.support.steps
    rng = np.random.default_rng(1)
    for _ in range(5):
        steps = [S[j] for j in rng.integers(0, 4, size=4)]
        perm = [steps[j] for j in rng.permutation(4)]
        a, b = chi_path_sum(env, steps, p), chi_path_sum(env, perm, p)
        end = np.sum(steps, axis=0)
        assert np.allclose(a, b, atol=1e-9)
        assert np.allclose(a, chi(env, 4, end, p), atol=1e-9)


def test_reachable(dirichlet2):
    assert reachable(dirichlet2, 3, (1, 2))
    assert not reachable(dirichlet2, 3, (1, 1))
    assert reachable(dirichlet2, 0, (0, 0))


def test_cocycle_residual_shrinks_with_eps(uniform1):
    res = {}
    for eps in (1 / 4, 1 / 8, 1 / 16):
        p = ResolventParams.for_law(uniform1, eps, 1e-6)
        vals = []
        for i in range(30):
            env = EnvironmentView(uniform1, derive_seed(5, i, 0))
            path = sample_path(env, 64, derive_seed(5, i, 1))
            rec = cocycle_residual(path, env, p)
            assert rec.nv_reachable  # n even, [nv] = 0
            vals.append(rec.residual)
        res[eps] = np.mean(vals)
    assert res[1 / 4] > res[1 / 8] > res[1 / 16]


def test_diffusion_matrix_deterministic(simple2):
    p = ResolventParams.for_law(simple2, 0.1, 1e-6)
    d = limit_diffusion_matrix(simple2, p, 50, 3, seed=1)
    assert np.allclose(d.matrix, np.diag([0.5, 0.5]), atol=1e-15)


def test_diffusion_matrix_symmetric_psd(dirichlet2):
    p = ResolventParams.for_law(dirichlet2, 1 / 2, 1e-4)
    d = limit_diffusion_matrix(dirichlet2, p, 20, 2, seed=3)
    assert np.allclose(d.matrix, d.matrix.T)
    assert np.all(np.linalg.eigvalsh(d.matrix) >= -1e-12)
    assert d.se.shape == (2, 2)
    with pytest.raises(ValueError):
        limit_diffusion_matrix(dirichlet2, p, 1)


def test_min_depth_monotone(uniform1):
    assert min_depth(uniform1, 1 / 8, 1e-4) < min_depth(uniform1, 1 / 8, 1e-8)
    assert min_depth(uniform1, 1 / 4, 1e-8) < min_depth(uniform1, 1 / 8, 1e-8)


def test_decomposition_csv(uniform1):
    env = EnvironmentView(uniform1, 1)
    p = ResolventParams.for_law(uniform1, 1 / 4, 1e-6)
    recs = [decompose(sample_path(env, 10, s), env, p) for s in (1, 2)]
    buf = io.StringIO()
    write_decomposition_csv(recs, p.K, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("n,xbar_1,m_eps_1") and len(lines) == 3
