"""Quenched, annealed and coupled walks; the scaled path functionals.

Positions are kept in E-coordinates (Z^nu).  The deterministic e_1 component
of X_k is the level k itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from ._parallel import map_chunks
from .env import EnvironmentView, SiteLaw, StepSupport, derive_seed, derive_seeds, env_key, walk_key
from .errors import SeedCollisionError

# derive_seed families
REPLICA, ENV, PAIR_A, PAIR_B = 1, 2, 3, 4


@dataclass(frozen=True, eq=False)
class Path:
    n: int
    steps: np.ndarray
    positions: np.ndarray
    replica_seed: int

    def __eq__(self, other):
        return (isinstance(other, Path) and self.n == other.n
                and self.replica_seed == other.replica_seed
                and np.array_equal(self.steps, other.steps)
                and np.array_equal(self.positions, other.positions))

    __hash__ = None


@dataclass(frozen=True)
class ScaledPath:
    t_grid: np.ndarray
    values: np.ndarray
    centering: str


def _walk_keys(seeds) -> np.ndarray:
    return np.array([walk_key(int(s)) for s in seeds], dtype=np.uint64)


def _env_keys(seeds) -> np.ndarray:
    return np.array([env_key(int(s)) for s in seeds], dtype=np.uint64)


def _run_walks(law: SiteLaw, env_keys: np.ndarray, olev: int, osite: np.ndarray, n: int,
               wkeys: np.ndarray, rec_idx: np.ndarray, store_steps: bool):
    kind, alphas, cumw, comps, steps = law.packed
    nrep = len(wkeys)
    rec_idx = np.asarray(rec_idx, dtype=np.int64)
    shared = len(env_keys) == 1

    def work(a, b):
        pos = np.zeros((b - a, len(rec_idx), law.nu), dtype=np.int64)
        st = np.zeros((b - a, n if store_steps else 0), dtype=np.int64)
        ek = env_keys if shared else env_keys[a:b]
        K.walk_batch(kind, alphas, cumw, comps, steps, ek, olev, osite, n,
                     wkeys[a:b], rec_idx, pos, st, store_steps)
        return pos, st

    parts = map_chunks(work, nrep)
    if not parts:
        return np.zeros((0, len(rec_idx), law.nu), np.int64), np.zeros((0, n), np.int64)
    return np.concatenate([p for p, _ in parts]), np.concatenate([s for _, s in parts])


def sample_path(env: EnvironmentView, n: int, replica_seed: int) -> Path:
    """One quenched path; step k uses a uniform keyed by (replica_seed, k)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    wk = _walk_keys([replica_seed])
    pos, st = _run_walks(env.law, np.array([env.key]), env.origin_level, env.osite, n, wk,
                         np.arange(n + 1), True)
    return Path(n, st[0], pos[0], int(replica_seed))


def sample_pair(env: EnvironmentView, n: int, seed_a: int, seed_b: int) -> tuple[Path, Path]:
    """Two walkers, conditionally independent given the shared environment."""
    if seed_a == seed_b:
        raise SeedCollisionError("the two walkers need distinct seeds")
    return sample_path(env, n, seed_a), sample_path(env, n, seed_b)


def replica_seeds(batch_seed: int, N: int) -> np.ndarray:
    return derive_seeds(batch_seed, N, REPLICA)


def sample_batch(env: EnvironmentView, n: int, N: int, batch_seed: int) -> list[Path]:
    if N < 1:
        raise ValueError("N must be >= 1")
    seeds = replica_seeds(batch_seed, N)
    pos, st = _run_walks(env.law, np.array([env.key]), env.origin_level, env.osite, n,
                         _walk_keys(seeds), np.arange(n + 1), True)
    return [Path(n, st[i], pos[i], int(seeds[i])) for i in range(N)]


def positions_at(env: EnvironmentView, n: int, N: int, batch_seed: int,
                 indices: Sequence[int]) -> np.ndarray:
    """positions[indices] for the N replicas of ``sample_batch`` without
    materializing whole paths; shape (N, len(indices), nu)."""
    seeds = replica_seeds(batch_seed, N)
    pos, _ = _run_walks(env.law, np.array([env.key]), env.origin_level, env.osite, n,
                        _walk_keys(seeds), np.asarray(indices), False)
    return pos


def annealed_positions_env_averaged(law: SiteLaw, n: int, N: int, seed: int,
                                    indices: Sequence[int]) -> np.ndarray:
    """Quenched walks, each in its own freshly keyed environment."""
    env_seeds = derive_seeds(seed, N, ENV)
    wseeds = derive_seeds(seed, N, REPLICA)
    pos, _ = _run_walks(law, _env_keys(env_seeds), 0, np.zeros(law.nu, np.int64), n,
                        _walk_keys(wseeds), np.asarray(indices), False)
    return pos


def annealed_path(p: Sequence[float], n: int, seed: int, support: StepSupport) -> Path:
    """Homogeneous walk with i.i.d. steps of law p (the annealed walk)."""
    pos, st = _iid(p, n, [seed], support, np.arange(n + 1), True)
    return Path(n, st[0], pos[0], int(seed))


def annealed_positions(p, n: int, N: int, seed: int, support: StepSupport, indices) -> np.ndarray:
    pos, _ = _iid(p, n, derive_seeds(seed, N, REPLICA), support, np.asarray(indices), False)
    return pos


def _iid(p, n, seeds, support, rec_idx, store_steps):
    p = np.asarray(p, dtype=float)
    if p.shape != (support.m,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("p must be a probability vector over the support")
    cum = np.cumsum(p / p.sum())
    wkeys = _walk_keys(seeds)
    rec_idx = np.asarray(rec_idx, dtype=np.int64)

    def work(a, b):
        pos = np.zeros((b - a, len(rec_idx), support.nu), dtype=np.int64)
        st = np.zeros((b - a, n if store_steps else 0), dtype=np.int64)
        K.iid_batch(cum, support.array, wkeys[a:b], n, rec_idx, pos, st, store_steps)
        return pos, st

    parts = map_chunks(work, len(wkeys))
    return np.concatenate([q for q, _ in parts]), np.concatenate([s for _, s in parts])


def pair_collisions(law: SiteLaw, n: int, N: int, seed: int,
                    env: EnvironmentView | None = None):
    """Collision counts sum_{k<n} 1{X_k = X~_k} for N walker pairs.

    With ``env=None`` every pair gets its own environment (annealed average
    over the environment); otherwise all pairs share ``env``.  Also returns
    the joint step tables tallied at collision and non-collision times.
    """
    kind, alphas, cumw, comps, steps = law.packed
    m = law.m
    if env is None:
        ekeys = _env_keys(derive_seeds(seed, N, ENV))
        olev, osite = 0, np.zeros(law.nu, np.int64)
    else:
        ekeys = np.array([env.key])
        olev, osite = env.origin_level, env.osite
    ka = _walk_keys(derive_seeds(seed, N, PAIR_A))
    kb = _walk_keys(derive_seeds(seed, N, PAIR_B))
    shared = len(ekeys) == 1

    def work(a, b):
        counts = np.zeros(b - a, dtype=np.int64)
        jc = np.zeros((m, m), dtype=np.int64)
        jo = np.zeros((m, m), dtype=np.int64)
        K.pair_batch(kind, alphas, cumw, comps, steps, ekeys if shared else ekeys[a:b],
                     olev, osite, n, ka[a:b], kb[a:b], counts, jc, jo)
        return counts, jc, jo

    parts = map_chunks(work, N)
    counts = np.concatenate([c for c, _, _ in parts])
    jc = sum(p[1] for p in parts)
    jo = sum(p[2] for p in parts)
    return counts, jc, jo


def grid_indices(n: int, t_grid: Sequence[float]) -> np.ndarray:
    """[n t] for each t, exact for dyadic t."""
    return np.array([int(np.floor(n * float(t) + 1e-9)) for t in t_grid], dtype=np.int64)


def scale_path(path: Path, t_grid: Sequence[float], centering_series,
               centering: str = "deterministic") -> ScaledPath:
    """B_n(t) = (X_[nt] - c_[nt]) / sqrt(n) for a centering series c.

    ``centering_series[k]`` is k*vbar (deterministic) or E_0^w X_k (quenched).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    idx = grid_indices(path.n, t_grid)
    c = np.asarray(centering_series, dtype=float)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    if idx.size and idx.max() >= len(c):
        raise IndexError(f"centering series has {len(c)} entries, index {idx.max()} needed")
    values = (path.positions[idx] - c[idx]) / np.sqrt(path.n)
    return ScaledPath(t_grid, values, centering)


def write_paths_csv(paths: Iterable[Path], fh) -> None:
    paths = list(paths)
    nu = paths[0].positions.shape[1] if paths else 1
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["replica", "k"] + [f"x_{i + 1}" for i in range(nu)])
    for r, p in enumerate(paths):
        for k, x in enumerate(p.positions):
            w.writerow([r, k, *(int(c) for c in x)])


def deterministic_centering(vbar, n: int) -> np.ndarray:
    return np.outer(np.arange(n + 1), np.asarray(vbar, dtype=float))


__all__ = [
    "Path", "ScaledPath", "sample_path", "sample_pair", "sample_batch", "positions_at",
    "annealed_path", "annealed_positions", "annealed_positions_env_averaged",
    "pair_collisions", "scale_path", "grid_indices", "replica_seeds", "write_paths_csv",
    "deterministic_centering", "derive_seed",
]
