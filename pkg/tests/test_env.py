import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwre_lab import (EnvironmentView, SiteLaw, StepSupport, shift_view, transition_vector,
                      validate_spec)
from rwre_lab.env import derive_seed, derive_seeds, law_moments, transition_vectors
from rwre_lab.errors import EllipticityError, EmptySupportError, NormalizationError


def test_nearest_neighbour_order():
    s = StepSupport.nearest_neighbour(2)
    assert s.steps == ((1, 0), (-1, 0), (0, 1), (0, -1))


def test_support_rejects_bad_steps():
    with pytest.raises(EmptySupportError):
        StepSupport(1, ())
    with pytest.raises(ValueError):
        StepSupport(1, ((1,), (1,)))
    with pytest.raises(ValueError):
        StepSupport(2, ((1,), (0, 1)))


def test_single_step_dirichlet_is_not_elliptic():
    with pytest.raises(EllipticityError):
        validate_spec(SiteLaw.dirichlet([(1,)], [2.0]))


def test_point_mass_laws_are_not_elliptic(nn1):
    with pytest.raises(EllipticityError):
        validate_spec(SiteLaw.deterministic(nn1, (1.0, 0.0)))
    with pytest.raises(EllipticityError):
        validate_spec(SiteLaw.mixture(nn1, [(0.5, (1.0, 0.0)), (0.5, (0.0, 1.0))]))
    # one non-degenerate component with positive weight is enough
    validate_spec(SiteLaw.mixture(nn1, [(0.9, (1.0, 0.0)), (0.1, (0.5, 0.5))]))


def test_normalization_tolerances(nn1, caplog):
    with pytest.raises(NormalizationError):
        validate_spec(SiteLaw.deterministic(nn1, (0.5, 0.5 + 1e-6)))
    with pytest.raises(NormalizationError):
        validate_spec(SiteLaw.mixture(nn1, [(0.75, (0.5, 0.5)), (0.75, (0.2, 0.8))]))
    with caplog.at_level(logging.WARNING):
        law = validate_spec(SiteLaw.deterministic(nn1, (0.5, 0.5 + 1e-10)))
    assert "renormalizing" in caplog.text
    assert sum(law.variant.vector) == pytest.approx(1.0, abs=1e-15)
    caplog.clear()
    with caplog.at_level(logging.WARNING):
        validate_spec(SiteLaw.deterministic(nn1, (0.5, 0.5 + 1e-13)))
    assert caplog.text == ""


def test_dirichlet_rejects_wrong_length(nn1):
    with pytest.raises(NormalizationError):
        validate_spec(SiteLaw.dirichlet(nn1, (1.0, 1.0, 1.0)))
    with pytest.raises(NormalizationError):
        validate_spec(SiteLaw.dirichlet(nn1, (1.0, -1.0)))


def test_law_moments_dirichlet():
    p, m = law_moments(SiteLaw.dirichlet(StepSupport.nearest_neighbour(1), (1.0, 3.0)))
    assert np.allclose(p, [0.25, 0.75])
    # E u^2 for Beta(1, 3) is 1*2/(4*5)
    assert m[0, 0] == pytest.approx(0.1)
    assert m[0, 1] == pytest.approx(3 / 20)


def test_vectors_are_deterministic_functions_of_seed_and_site(dirichlet2):
    env = EnvironmentView(dirichlet2, 123)
    a = transition_vector(env, 5, (2, -3))
    b = transition_vector(EnvironmentView(dirichlet2, 123), 5, (2, -3))
    assert np.array_equal(a, b)
    c = transition_vector(EnvironmentView(dirichlet2, 124), 5, (2, -3))
    assert not np.array_equal(a, c)


def test_shift_view_matches_absolute_coordinates(dirichlet2):
    env = EnvironmentView(dirichlet2, 9)
    shifted = shift_view(env, 3, (1, -2))
    assert np.array_equal(transition_vector(shifted, 2, (4, 0)), transition_vector(env, 5, (5, -2)))


@pytest.mark.parametrize("seed", [0, 1, 2 ** 63 - 1, 2 ** 63, 2 ** 64 - 1])
def test_uniform_site_marginal(uniform1, seed):
    env = EnvironmentView(uniform1, seed)
    n = 20000
    v = transition_vectors(env, np.arange(n) // 200, (np.arange(n) % 200 - 100).reshape(-1, 1))
    u = v[:, 0]
    assert np.allclose(v.sum(axis=1), 1.0)
    # Uniform(0,1): mean 1/2, variance 1/12
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / n)
    assert abs(u.var() - 1 / 12) < 0.004


@pytest.mark.parametrize("alphas", [(0.3, 0.7, 2.0), (5.0, 1.0, 1.0), (0.05, 0.05, 0.1)])
def test_dirichlet_site_moments(alphas):
    law = SiteLaw.dirichlet([(1,), (0,), (-1,)], alphas)
    env = EnvironmentView(law, 77)
    n = 30000
    v = transition_vectors(env, np.arange(n), np.zeros((n, 1), np.int64))
    p, m = law_moments(law)
    assert np.all(np.abs(v.mean(axis=0) - p) < 4 * np.sqrt(np.diag(m) / n) + 1e-12)
    emp_m = v.T @ v / n
    assert np.allclose(emp_m, m, atol=0.01)


def test_mixture_and_deterministic_sites(mixture1, nn1):
    env = EnvironmentView(mixture1, 5)
    v = transition_vectors(env, np.arange(4000), np.zeros((4000, 1), np.int64))
    comps = {(0.8, 0.2), (0.3, 0.7)}
    assert {tuple(np.round(x, 12)) for x in v} == comps
    assert abs(np.mean(v[:, 0] == 0.8) - 0.5) < 0.04
    det = EnvironmentView(SiteLaw.deterministic(nn1, (0.3, 0.7)), 1)
    assert np.array_equal(transition_vector(det, 3, (1,)), [0.3, 0.7])


def test_derive_seed_families_differ():
    a = derive_seeds(42, 100, 1)
    b = derive_seeds(42, 100, 2)
    assert len(set(a.tolist()) | set(b.tolist())) == 200
    assert derive_seed(42, 3, 1) == int(a[3])


@settings(max_examples=40, deadline=None)
@given(alphas=st.lists(st.floats(0.05, 20.0), min_size=2, max_size=5),
       seed=st.integers(0, 2 ** 64 - 1), level=st.integers(-10 ** 6, 10 ** 6),
       site=st.integers(-10 ** 6, 10 ** 6))
def test_vectors_are_probability_vectors(alphas, seed, level, site):
    steps = [(i,) for i in range(len(alphas))]
    env = EnvironmentView(SiteLaw.dirichlet(steps, alphas), seed)
    v = transition_vector(env, level, (site,))
    assert np.all(v >= 0) and np.all(np.isfinite(v))
    assert v.sum() == pytest.approx(1.0, abs=1e-12)
