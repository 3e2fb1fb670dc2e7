import io

import numpy as np
import pytest

from rwre_lab import EnvironmentView, set_workers, transition_vector
from rwre_lab.dp import annealed_params, quenched_mean_series
from rwre_lab.errors import SeedCollisionError
from rwre_lab.walk import (annealed_path, annealed_positions, annealed_positions_env_averaged,
                           deterministic_centering, grid_indices, pair_collisions, positions_at,
                           sample_batch, sample_pair, sample_path, scale_path, write_paths_csv)

from conftest import brute_force_law


def test_path_is_reproducible_and_consistent(dirichlet2):
    env = EnvironmentView(dirichlet2, 3)
    a = sample_path(env, 200, 11)
    assert a == sample_path(env, 200, 11)
    assert a != sample_path(env, 200, 12)
    S = dirichlet2.support.array
    assert np.array_equal(np.diff(a.positions, axis=0), S[a.steps])
    assert np.array_equal(a.positions[0], [0, 0])


def test_steps_have_positive_probability(mixture1):
    env = EnvironmentView(mixture1, 8)
    p = sample_path(env, 300, 2)
    for k in range(300):
        assert transition_vector(env, k, p.positions[k])[p.steps[k]] > 0


def test_sample_pair_needs_distinct_seeds(uniform1):
    env = EnvironmentView(uniform1, 1)
    with pytest.raises(SeedCollisionError):
        sample_pair(env, 10, 5, 5)
    a, b = sample_pair(env, 10, 5, 6)
    assert a.replica_seed == 5 and b.replica_seed == 6


def test_positions_at_matches_batch(uniform1):
    env = EnvironmentView(uniform1, 4)
    paths = sample_batch(env, 50, 30, 99)
    idx = [0, 10, 25, 50]
    pos = positions_at(env, 50, 30, 99, idx)
    assert np.array_equal(pos, np.stack([p.positions[idx] for p in paths]))


def test_worker_count_does_not_change_output(dirichlet2):
    env = EnvironmentView(dirichlet2, 4)
    try:
        set_workers(1)
        a = positions_at(env, 100, 300, 7, [100])
        set_workers(4)
        b = positions_at(env, 100, 300, 7, [100])
    finally:
        set_workers(None)
    assert np.array_equal(a, b)


def test_empirical_law_matches_exact_quenched_law(uniform1):
    # chi-square style check of the sampler against enumeration at n = 8
    env = EnvironmentView(uniform1, 21)
    n, N = 8, 40000
    exact = brute_force_law(env, n)
    pos = positions_at(env, n, N, 5, [n])[:, 0, 0]
    for (x,), p in exact.items():
        f = np.mean(pos == x)
        assert abs(f - p) < 4.5 * np.sqrt(p * (1 - p) / N) + 1e-12


def test_quenched_mean_of_samples(dirichlet2):
    env = EnvironmentView(dirichlet2, 2)
    n, N = 64, 20000
    pos = positions_at(env, n, N, 1, [n])[:, 0, :].astype(float)
    mean = quenched_mean_series(env, n).means[n]
    se = pos.std(axis=0) / np.sqrt(N)
    assert np.all(np.abs(pos.mean(axis=0) - mean) < 4 * se)


def test_annealed_walk_moments(dirichlet2):
    ap = annealed_params(dirichlet2)
    from rwre_lab.env import law_moments

    p = law_moments(dirichlet2)[0]
    n, N = 100, 20000
    pos = annealed_positions(p, n, N, 3, dirichlet2.support, [n])[:, 0, :].astype(float)
    assert np.all(np.abs(pos.mean(axis=0) - n * ap.v_bar) < 4 * np.sqrt(n * np.diag(ap.D_matrix) / N))
    assert np.allclose(np.cov(pos.T) / n, ap.D_matrix, atol=0.05)
    path = annealed_path(p, 20, 3, dirichlet2.support)
    assert path.n == 20 and path.positions.shape == (21, 2)


def test_env_averaged_walk_has_annealed_law(uniform1):
    # under the annealed measure the steps of a space-time walk are i.i.d. with law p
    n, N = 64, 20000
    pos = annealed_positions_env_averaged(uniform1, n, N, 9, [n])[:, 0, 0].astype(float)
    assert abs(pos.mean()) < 4 * np.sqrt(n / N)
    assert abs(pos.var() / n - 1) < 0.05


def test_pair_collisions_first_step(uniform1):
    # P(X_1 = X~_1) = q_origin(0) = 2/3 for Dirichlet(1, 1)
    counts, jc, jo = pair_collisions(uniform1, 2, 30000, 4)
    c1 = counts - 1  # k = 0 always collides
    assert abs(c1.mean() - 2 / 3) < 4 * np.sqrt(2 / 9 / 30000)
    assert jc.sum() + jo.sum() == 2 * 30000


def test_scale_path_and_grid(uniform1):
    env = EnvironmentView(uniform1, 0)
    p = sample_path(env, 16, 1)
    assert list(grid_indices(16, [0, 0.25, 0.5, 1])) == [0, 4, 8, 16]
    sp = scale_path(p, [0, 0.5, 1], deterministic_centering([0.0], 16))
    assert np.allclose(sp.values[:, 0], p.positions[[0, 8, 16], 0] / 4)
    with pytest.raises(IndexError):
        scale_path(p, [1], deterministic_centering([0.0], 8))


def test_write_paths_csv(uniform1):
    env = EnvironmentView(uniform1, 0)
    buf = io.StringIO()
    write_paths_csv(sample_batch(env, 3, 2, 0), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "replica,k,x_1" and len(lines) == 1 + 2 * 4
