"""Resolvent corrector, martingale decomposition and corrector function.

Two routes to h_eps are provided:

* ``resolvent_h`` sums the truncated series sum_k (1+eps)^-k Pi^(k-1) g from
  one exact forward DP started at the queried site.  Cheap for one site, and
  the route used as the independent oracle in tests.
* ``resolvent_along`` solves (1+eps) h = g + Pi h backwards on a finite
  window around a whole path at once.  Zero boundary values are used outside
  the window and at the last level; a companion recursion with boundary
  value one gives a pointwise a-posteriori error bound, and the window is
  widened until that bound is below ``tol`` at every queried site.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels as K
from ._parallel import map_chunks
from .dp import DEFAULT_CAP, annealed_params, quenched_mean_series
from .env import EnvironmentView, SiteLaw, derive_seed, law_moments, shift_view, transition_vector
from .errors import InvalidStepError, ResourceError, UnreachableError
from .walk import Path, sample_path


def g_max(law: SiteLaw) -> float:
    """Bound used for |g|: twice the largest |z - vbar| over the support."""
    S = law.support.array.astype(float)
    vbar = law_moments(law)[0] @ S
    return 2.0 * float(np.max(np.linalg.norm(S - vbar, axis=1)))


def min_depth(law: SiteLaw, epsilon: float, tol: float) -> int:
    return max(1, math.ceil(math.log(g_max(law) / (epsilon * tol)) / math.log1p(epsilon)))


@dataclass(frozen=True)
class ResolventParams:
    epsilon: float
    tol: float
    K: int

    def __post_init__(self):
        if not (self.epsilon > 0 and self.tol > 0 and self.K >= 1):
            raise ValueError("epsilon, tol must be positive and K >= 1")

    @classmethod
    def for_law(cls, law: SiteLaw, epsilon: float, tol: float = 1e-8) -> "ResolventParams":
        """Smallest truncation depth whose series tail is below tol."""
        return cls(float(epsilon), float(tol), min_depth(law, epsilon, tol))

    def satisfies(self, law: SiteLaw) -> bool:
        return self.K >= min_depth(law, self.epsilon, self.tol)


@dataclass(frozen=True)
class DecompositionRecord:
    """X_n - n v = xbar + m_eps + eps * s_eps + r_eps, and r_n = X_n - n v - xbar - m_eps."""

    n: int
    xbar: np.ndarray
    m_eps: np.ndarray
    s_eps: np.ndarray
    r_eps: np.ndarray
    r_n: np.ndarray
    identity_residual: float
    epsilon: float
    trunc_bound: float


# ----------------------------------------------------------------- helpers


def _vbar(law: SiteLaw) -> np.ndarray:
    return law_moments(law)[0] @ law.support.array


def local_drift(env: EnvironmentView, level: int, site: Sequence[int]) -> np.ndarray:
    """D(T_(level, site) omega) = sum_z z pi_z."""
    return transition_vector(env, level, site) @ env.law.support.array


def centered_drift(env: EnvironmentView, level: int, site: Sequence[int]) -> np.ndarray:
    if not env.law.is_random():
        return np.zeros(env.nu)
    return local_drift(env, level, site) - _vbar(env.law)


def _step_index(law: SiteLaw, z) -> int:
    try:
        return law.support.steps.index(tuple(int(c) for c in z))
    except ValueError:
        raise InvalidStepError(f"{tuple(z)} is not in the step support") from None


# ------------------------------------------------------------ series route


@lru_cache(maxsize=65536)
def _series_h(law: SiteLaw, seed: int, level: int, site: tuple, eps: float, depth: int,
              cap: int) -> tuple:
    view = EnvironmentView(law, seed, level, site)
    pik = quenched_mean_series(view, depth, cap).pik_g
    w = (1.0 + eps) ** -np.arange(1, depth + 1)
    return tuple(float(x) for x in w @ pik)


def resolvent_h(env: EnvironmentView, params: ResolventParams, cap: int = DEFAULT_CAP) -> np.ndarray:
    """h_eps at the view origin: sum_{k=1}^K (1+eps)^-k (Pi^(k-1) g)(omega).

    Memoized by absolute site; the cache is transparent because every value
    is a pure function of its key.
    """
    if not env.law.is_random():
        return np.zeros(env.nu)
    return np.array(_series_h(env.law, env.master_seed, env.origin_level, env.origin_site,
                              params.epsilon, params.K, cap))


def h_at(env: EnvironmentView, level: int, site: Sequence[int], params: ResolventParams) -> np.ndarray:
    return resolvent_h(shift_view(env, level, site), params)


def pi_h(env: EnvironmentView, level: int, site: Sequence[int], params: ResolventParams) -> np.ndarray:
    """(Pi h_eps)(T_(level, site) omega) as the explicit neighbour sum."""
    pi = transition_vector(env, level, site)
    site = np.asarray(site, dtype=np.int64)
    out = np.zeros(env.nu)
    for p, z in zip(pi, env.law.support.array):
        out += p * h_at(env, level + 1, site + z, params)
    return out


def resolvent_residual(env: EnvironmentView, level: int, site: Sequence[int],
                       params: ResolventParams) -> float:
    """|(1+eps) h - Pi h - g| at one site, Pi h from independent neighbour solves."""
    r = ((1 + params.epsilon) * h_at(env, level, site, params)
         - pi_h(env, level, site, params) - centered_drift(env, level, site))
    return float(np.max(np.abs(r)))


def H_eps(env: EnvironmentView, level: int, a: Sequence[int], b: Sequence[int],
          params: ResolventParams) -> np.ndarray:
    """Martingale increment h(T_(k+1,b) w) - Pi h(T_(k,a) w), with Pi h taken
    from the resolvent identity (1+eps) h - g."""
    _step_index(env.law, np.subtract(b, a))
    return (h_at(env, level + 1, b, params) - (1 + params.epsilon) * h_at(env, level, a, params)
            + centered_drift(env, level, a))


# ------------------------------------------------------------- sweep route


@dataclass(frozen=True)
class SweepResult:
    h_path: np.ndarray
    err_path: np.ndarray
    h_next: np.ndarray
    err_next: np.ndarray
    window: tuple[np.ndarray, np.ndarray]
    levels: int


def _window_radius(law: SiteLaw, eps: float, tol: float) -> int:
    # exit-time Laplace transform heuristic: E exp(-eps tau_a) ~ exp(-a sqrt(2 eps / s2))
    s2 = float(np.max(np.abs(law.support.array)) ** 2)
    a = math.log(max(g_max(law) / (eps * tol), 2.0)) * math.sqrt(s2 / (2.0 * eps))
    return int(math.ceil(a)) + int(np.max(np.abs(law.support.array)))


def resolvent_along(env: EnvironmentView, positions: np.ndarray, params: ResolventParams,
                    cap: int = DEFAULT_CAP) -> SweepResult:
    """h_eps at (k, positions[k]) and at every (k+1, positions[k] + z).

    The returned error arrays are rigorous bounds on |h_returned - h_eps|
    (per coordinate), each at most ``params.tol``.
    """
    law = env.law
    positions = np.ascontiguousarray(positions, dtype=np.int64).reshape(-1, law.nu)
    npts, m, nu = len(positions), law.m, law.nu
    if not law.is_random():
        z = np.zeros
        return SweepResult(z((npts, nu)), z(npts), z((npts, m, nu)), z((npts, m)),
                           (positions.min(axis=0), positions.max(axis=0)), 0)
    eps, tol = params.epsilon, params.tol
    gm = g_max(law)
    steps = law.support.array
    L = npts + 1 + math.ceil(math.log(2.0 * gm / (eps * tol)) / math.log1p(eps))
    a = _window_radius(law, eps, tol)
    kind, alphas, cumw, comps, _ = law.packed
    vbar = _vbar(law)
    for _ in range(6):
        lo = np.maximum(positions.min(axis=0) - a, L * steps.min(axis=0))
        hi = np.minimum(positions.max(axis=0) + a, L * steps.max(axis=0))
        if int(np.prod(hi - lo + 1, dtype=object)) > cap:
            raise ResourceError(f"resolvent window of {np.prod(hi - lo + 1)} sites exceeds cap {cap}")
        hp, bp, hn, bn = K.resolvent_sweep(kind, alphas, cumw, comps, steps, env.key,
                                           env.origin_level, env.osite, lo, hi, L, eps, vbar,
                                           positions)
        scale = gm / eps
        if max(bp.max(), bn.max()) * scale <= tol:
            return SweepResult(hp, bp * scale, hn, bn * scale, (lo, hi), L)
        a *= 2
    raise ResourceError("could not reach the requested tolerance with a bounded window")


# ----------------------------------------------------------- decomposition


def decompose(path: Path, env: EnvironmentView, params: ResolventParams,
              method: str = "sweep") -> DecompositionRecord:
    """Split X_n - n v into xbar, M^eps, eps S^eps and R^eps along ``path``.

    One h_eps value per visited site; Pi h is taken from the resolvent
    identity, so the four-term identity holds to rounding.
    """
    law = env.law
    S = law.support.array
    n = path.n
    X = path.positions
    kind, alphas, cumw, comps, _ = law.packed
    pi = K.path_observables(kind, alphas, cumw, comps, S, env.key, env.origin_level, env.osite,
                            np.ascontiguousarray(X))
    vbar = _vbar(law)
    D = pi @ S
    g = D - vbar if law.is_random() else np.zeros_like(D)
    if method == "sweep":
        sw = resolvent_along(env, X, params)
        h, bound = sw.h_path, float(sw.err_path.max(initial=0.0))
    elif method == "series":
        h = np.array([h_at(env, k, X[k], params) for k in range(n + 1)])
        bound = params.tol
    else:
        raise ValueError(f"unknown method {method!r}")
    eps = params.epsilon
    xbar = X[n] - D[:n].sum(axis=0)
    H = h[1:] - (1 + eps) * h[:-1] + g[:n]
    m_eps = H.sum(axis=0)
    s_eps = h[:n].sum(axis=0)
    r_eps = h[0] - h[n]
    target = X[n] - n * vbar
    r_n = target - xbar - m_eps
    resid = float(np.linalg.norm(target - (xbar + m_eps + eps * s_eps + r_eps)))
    return DecompositionRecord(n, xbar, m_eps, s_eps, r_eps, r_n, resid, eps, bound)


def write_decomposition_csv(records: Sequence[DecompositionRecord], K_or_L: int, fh) -> None:
    if not records:
        return
    nu = len(records[0].xbar)
    cols = ["xbar", "m_eps", "s_eps", "r_eps", "r_n"]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n"] + [f"{c}_{i + 1}" for c in cols for i in range(nu)]
               + ["identity_residual", "epsilon", "depth", "trunc_bound"])
    for r in records:
        vals = [repr(float(x)) for c in cols for x in getattr(r, c)]
        w.writerow([r.n, *vals, repr(r.identity_residual), repr(r.epsilon), K_or_L,
                    repr(r.trunc_bound)])


# --------------------------------------------------------- corrector chi


def reachable(law: SiteLaw, m: int, x: Sequence[int], cap: int = DEFAULT_CAP) -> bool:
    """Is x a sum of exactly m elements of the step support?"""
    return tuple(int(c) for c in x) in _reachable_set(law.support.steps, int(m), cap)


@lru_cache(maxsize=256)
def _reachable_set(steps: tuple, m: int, cap: int) -> frozenset:
    S = np.array(steps, dtype=np.int64)
    lo, hi = m * S.min(axis=0), m * S.max(axis=0)
    shape = tuple(hi - lo + 1)
    if int(np.prod(shape, dtype=object)) > cap:
        raise ResourceError("reachability table exceeds cap")
    cur = np.zeros(shape, dtype=bool)
    cur[tuple(-lo)] = True
    for _ in range(m):
        nxt = np.zeros_like(cur)
        for s in S:
            src = tuple(slice(max(0, -c), n - max(0, c)) for c, n in zip(s, shape))
            dst = tuple(slice(max(0, c), n - max(0, -c)) for c, n in zip(s, shape))
            nxt[dst] |= cur[src]
        cur = nxt
    return frozenset(tuple(int(c) for c in idx + lo) for idx in np.argwhere(cur))


def chi(env: EnvironmentView, level: int, site: Sequence[int], params: ResolventParams) -> np.ndarray:
    """Corrector at fixed eps: the telescoped f_eps sum h(w) - h(T_(level, site) w)."""
    if level < 0 or not reachable(env.law, level, site):
        raise UnreachableError(f"({level}, {tuple(site)}) is not reachable from the origin")
    return h_at(env, 0, np.zeros(env.nu, np.int64), params) - h_at(env, level, site, params)


def chi_path_sum(env: EnvironmentView, steps: Sequence[Sequence[int]], params: ResolventParams) -> np.ndarray:
    """sum_i f_eps(T_{x_i} w, T_{x_{i+1}} w) along an explicit path from the origin.

    f_eps = g - H_eps - eps h with H_eps = h(next) - Pi h, Pi h taken as the
    explicit neighbour sum (not the resolvent identity), so agreement with
    ``chi`` is a genuine check of the resolvent equation at each vertex.
    """
    eps = params.epsilon
    x = np.zeros(env.nu, np.int64)
    total = np.zeros(env.nu)
    for k, z in enumerate(steps):
        z = np.asarray(z, dtype=np.int64)
        j = _step_index(env.law, z)
        if transition_vector(env, k, x)[j] <= 0:
            raise UnreachableError(f"step {tuple(z)} has zero probability at level {k}")
        hk = h_at(env, k, x, params)
        H = h_at(env, k + 1, x + z, params) - pi_h(env, k, x, params)
        total += centered_drift(env, k, x) - H - eps * hk
        x = x + z
    return total


@dataclass(frozen=True)
class CocycleRecord:
    epsilon: float
    residual: float
    r_n: np.ndarray
    chi_sum: np.ndarray
    nv_site: tuple
    nv_reachable: bool
    relative_reachable: bool


def cocycle_residual(path: Path, env: EnvironmentView, params: ResolventParams,
                     record: DecompositionRecord | None = None) -> CocycleRecord:
    """|R_n - (chi([nv], w) + chi(X_n - [nv], T_[nv] w))| at fixed eps.

    [nv] = (n, floor(n vbar)).  The relative displacement X_n - [nv] lies at
    level 0, where no forward path reaches it unless it is zero; the chi
    values are then taken through the cocycle extension h(T_a w) - h(T_b w)
    and the reachability flags record this.
    """
    n = path.n
    vbar = _vbar(env.law)
    nv = np.floor(n * vbar + 1e-12).astype(np.int64)
    if record is None:
        record = decompose(path, env, params)
    X = path.positions[n]
    h0 = h_at(env, 0, np.zeros(env.nu, np.int64), params)
    hnv = h_at(env, n, nv, params)
    hX = h_at(env, n, X, params)
    chi_sum = (h0 - hnv) + (hnv - hX)
    rel = X - nv
    return CocycleRecord(params.epsilon, float(np.linalg.norm(record.r_n - chi_sum)), record.r_n,
                         chi_sum, tuple(int(c) for c in nv), reachable(env.law, n, nv),
                         bool(np.all(rel == 0)))


# -------------------------------------------------- limiting diffusion matrix


def conditional_increment_cov(pi: np.ndarray, steps: np.ndarray, h_next: np.ndarray) -> np.ndarray:
    """sum_z pi_z (z - D + H_z)(z - D + H_z)^T with H_z = h(next_z) - Pi h."""
    D = pi @ steps
    pih = pi @ h_next
    y = steps - D + (h_next - pih)
    return (y * pi[:, None]).T @ y


@dataclass(frozen=True)
class DiffusionEstimate:
    matrix: np.ndarray
    se: np.ndarray
    epsilon: float
    M: int
    N: int


def limit_diffusion_matrix(law: SiteLaw, params: ResolventParams, M: int, N: int = 1,
                           seed: int = 0) -> DiffusionEstimate:
    """Monte Carlo estimate of E_0[(X_1 - D + H_eps)(X_1 - D + H_eps)^T].

    Each of M fresh environments contributes the average over the first N
    steps of one walk of the exact conditional covariance given the site
    (the expectation over the step is done in closed form).
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    S = law.support.array
    kind, alphas, cumw, comps, _ = law.packed

    def one(i):
        env = EnvironmentView(law, derive_seed(seed, i, 11))
        path = sample_path(env, N, derive_seed(seed, i, 12))
        X = np.ascontiguousarray(path.positions[:N])
        pi = K.path_observables(kind, alphas, cumw, comps, S, env.key, 0, env.osite, X)
        sw = resolvent_along(env, X, params)
        acc = np.zeros((law.nu, law.nu))
        for k in range(N):
            acc += conditional_increment_cov(pi[k], S, sw.h_next[k])
        return acc / N

    mats = np.concatenate(map_chunks(lambda a, b: np.array([one(i) for i in range(a, b)]), M, chunk=16))
    est = mats.mean(axis=0)
    se = mats.std(axis=0, ddof=1) / np.sqrt(M)
    return DiffusionEstimate(0.5 * (est + est.T), se, params.epsilon, M, N)


__all__ = [
    "ResolventParams", "DecompositionRecord", "SweepResult", "CocycleRecord", "DiffusionEstimate",
    "g_max", "min_depth", "resolvent_h", "h_at", "pi_h", "resolvent_residual", "H_eps",
    "resolvent_along", "decompose", "reachable", "chi", "chi_path_sum", "cocycle_residual",
    "limit_diffusion_matrix", "conditional_increment_cov", "local_drift", "centered_drift",
    "write_decomposition_csv", "annealed_params",
]
