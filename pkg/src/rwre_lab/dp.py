"""Exact space-time dynamic programming.

All tables are dense over the bounding box of the reachable cone and are
swept in row-major order, so every floating-point sum is taken in one fixed
order and results are bit-reproducible.  Tables are never truncated: a box
larger than ``cap`` entries raises ResourceError instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from ._parallel import map_chunks
from .env import EnvironmentView, SiteLaw, derive_seeds, env_key, law_moments, walk_key
from .errors import ResourceError

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class OccupationSlab:
    """levels[k] maps a site to P_0^w(X_k = site); keys in row-major order."""

    n: int
    levels: list[dict[tuple[int, ...], float]]


@dataclass(frozen=True)
class AnnealedParams:
    v_bar: np.ndarray
    D_matrix: np.ndarray
    g_norm_sq: float
    q_origin: dict[tuple[int, ...], float]
    q_homog: dict[tuple[int, ...], float]

    @property
    def nu(self) -> int:
        return len(self.v_bar)


@dataclass(frozen=True)
class QuenchedMeanSeries:
    """means[k] = E_0^w X_k (E-part) and pik_g[k] = (Pi^k g)(w)."""

    n: int
    means: np.ndarray
    pik_g: np.ndarray


@dataclass(frozen=True)
class CollisionSeries:
    return_probs: np.ndarray
    partial_sums: np.ndarray


@dataclass(frozen=True)
class VarianceEstimate:
    n: int
    V: float
    SE: float


def cone_box_size(steps: np.ndarray, n: int) -> int:
    span = steps.max(axis=0) - steps.min(axis=0)
    return int(np.prod(n * span + 1, dtype=object))


def _check_cap(size: int, cap: int, what: str) -> None:
    if size > cap:
        raise ResourceError(f"{what}: table of {size} entries exceeds cap {cap}")


def occupation(env: EnvironmentView, n: int, cap: int = DEFAULT_CAP) -> OccupationSlab:
    """Level-by-level quenched law of X_k, k = 0..n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    law = env.law
    kind, alphas, cumw, comps, steps = law.packed
    size = cone_box_size(steps, n)
    _check_cap(size * (n + 1), cap, "occupation slab")
    slab = np.zeros((n + 1, size))
    vbar = law_moments(law)[0] @ steps
    K.fwd_series(kind, alphas, cumw, comps, steps, env.key, env.origin_level, env.osite,
                 n, vbar, slab)
    lo = n * steps.min(axis=0)
    shape = tuple(n * (steps.max(axis=0) - steps.min(axis=0)) + 1)
    levels = []
    for k in range(n + 1):
        nz = np.flatnonzero(slab[k])
        coords = np.stack(np.unravel_index(nz, shape), axis=1) + lo
        levels.append({tuple(int(c) for c in x): float(slab[k, i]) for x, i in zip(coords, nz)})
    return OccupationSlab(n, levels)


def quenched_mean_series(env: EnvironmentView, n: int, cap: int = DEFAULT_CAP) -> QuenchedMeanSeries:
    if n < 1:
        raise ValueError("n must be >= 1")
    law = env.law
    kind, alphas, cumw, comps, steps = law.packed
    _check_cap(cone_box_size(steps, n), cap, "quenched mean series")
    vbar = law_moments(law)[0] @ steps
    means, pikg = K.fwd_series(kind, alphas, cumw, comps, steps, env.key, env.origin_level,
                               env.osite, n, vbar, np.empty((0, 0)))
    return QuenchedMeanSeries(n, means, pikg)


def _difference_law(weights: np.ndarray, steps: np.ndarray) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    m = len(steps)
    for i in range(m):
        for j in range(m):
            y = tuple(int(c) for c in steps[j] - steps[i])
            out[y] = out.get(y, 0.0) + float(weights[i, j])
    return dict(sorted(out.items()))


def annealed_params(law: SiteLaw) -> AnnealedParams:
    """Velocity, diffusion matrix, E|g|^2 and the collision kernel q."""
    p, mm = law_moments(law)
    S = law.support.array.astype(float)
    vbar = p @ S
    c = S - vbar
    D = (c * p[:, None]).T @ c
    D = 0.5 * (D + D.T)
    # E|D - vbar|^2 = sum_{z,z'} m(z,z') (z - vbar).(z' - vbar)
    g2 = max(float(np.sum(mm * (c @ c.T))), 0.0)
    steps = law.support.array
    return AnnealedParams(vbar, D, g2, _difference_law(mm, steps), _difference_law(np.outer(p, p), steps))


def _q_arrays(params: AnnealedParams):
    keys = sorted(set(params.q_origin) | set(params.q_homog))
    qsteps = np.array(keys, dtype=np.int64).reshape(len(keys), params.nu)
    qh = np.array([params.q_homog.get(k, 0.0) for k in keys])
    qo = np.array([params.q_origin.get(k, 0.0) for k in keys])
    return qsteps, qh, qo


def collision_sum(params: AnnealedParams, n: int, cap: int = DEFAULT_CAP) -> CollisionSeries:
    """P(Y_k = 0) for k < n and the partial sums, for the difference walk
    Y of two walkers sharing one environment (kernel q_origin at 0,
    q_homog elsewhere)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    qsteps, qh, qo = _q_arrays(params)
    _check_cap(cone_box_size(qsteps, n), cap, "collision chain")
    ret = K.collision_chain(qsteps, qh, qo, n)
    return CollisionSeries(ret, np.cumsum(ret))


def variance_quenched_mean(law: SiteLaw, seeds: Sequence[int], ladder: Sequence[int],
                           cap: int = DEFAULT_CAP) -> list[VarianceEstimate]:
    """V(n) = E|E_0^w X_n - n v|^2 by exact DP in each of the given environments.

    The only randomness is the choice of environments, so SE is the plain
    standard error of the per-environment squares.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two environments")
    ladder = np.asarray(sorted(set(int(x) for x in ladder)), dtype=np.int64)
    if ladder.size == 0 or ladder[0] < 0:
        raise ValueError("ladder must contain nonnegative depths")
    kind, alphas, cumw, comps, steps = law.packed
    nmax = int(ladder[-1])
    _check_cap(cone_box_size(steps, nmax), cap, "quenched mean series")
    vbar = law_moments(law)[0] @ steps
    keys = np.array([env_key(int(s)) for s in seeds], dtype=np.uint64)

    def work(a, b):
        return K.fwd_sq_many(kind, alphas, cumw, comps, steps, keys[a:b], nmax, vbar, ladder)

    sq = np.concatenate(map_chunks(work, len(keys), chunk=8))
    M = sq.shape[0]
    V = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / np.sqrt(M)
    return [VarianceEstimate(int(n), float(v), float(s)) for n, v, s in zip(ladder, V, se)]


def variance_quenched_mean_nested(law: SiteLaw, seeds: Sequence[int], n: int,
                                  inner: int) -> VarianceEstimate:
    """Cross-check of V(n) with Monte Carlo inner averages.

    Each environment contributes (A - n v).(B - n v) with A, B the means of
    two independent halves of ``inner`` walks, an unbiased estimate of
    |E_0^w X_n - n v|^2.  Slower and noisier than the exact route.
    """
    from .walk import _run_walks, _walk_keys

    half = max(inner // 2, 1)
    steps = law.support.array
    vbar = law_moments(law)[0] @ steps
    vals = []
    for s in seeds:
        wseeds = derive_seeds(int(s), 2 * half, 7)
        pos, _ = _run_walks(law, np.array([env_key(int(s))]), 0, np.zeros(law.nu, np.int64), n,
                            _walk_keys(wseeds), np.array([n]), False)
        x = pos[:, 0, :] - n * vbar
        vals.append(float(x[:half].mean(axis=0) @ x[half:].mean(axis=0)))
    vals = np.asarray(vals)
    return VarianceEstimate(n, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))))


def density_f(env: EnvironmentView, n: int, cap: int = DEFAULT_CAP) -> float:
    """f_n = sum over sites x at level -n of P_x^w(X_n = 0), by backward DP."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0
    kind, alphas, cumw, comps, steps = env.law.packed
    _check_cap(cone_box_size(steps, n), cap, "density table")
    return float(K.density(kind, alphas, cumw, comps, steps, env.key, env.origin_level,
                           env.osite, n))


def write_collision_csv(series: CollisionSeries, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "p_return", "cumsum"])
    for k, (p, c) in enumerate(zip(series.return_probs, series.partial_sums)):
        w.writerow([k, repr(float(p)), repr(float(c))])


def write_variance_csv(rows: Sequence[VarianceEstimate], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "V", "SE"])
    for r in rows:
        w.writerow([r.n, repr(r.V), repr(r.SE)])


__all__ = [
    "OccupationSlab", "AnnealedParams", "QuenchedMeanSeries", "CollisionSeries",
    "VarianceEstimate", "occupation", "quenched_mean_series", "annealed_params",
    "collision_sum", "variance_quenched_mean", "variance_quenched_mean_nested",
    "density_f", "write_collision_csv", "write_variance_csv", "DEFAULT_CAP", "walk_key",
]
