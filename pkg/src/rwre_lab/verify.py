"""Statistical checks: quenched CLT, scaling exponents, martingale CLT
hypotheses, the collision identity and ergodic averages.

Every report carries the thresholds it was judged against, and ``passed`` is
recomputed from the recorded numbers only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Any, Sequence

import numpy as np
from scipy.special import ndtr

from .corrector import ResolventParams, conditional_increment_cov, resolvent_along
from .dp import (DEFAULT_CAP, VarianceEstimate, annealed_params, collision_sum,
                 quenched_mean_series, variance_quenched_mean)
from .env import EnvironmentView, SiteLaw, derive_seeds, transition_vectors
from ._parallel import map_chunks
from .errors import DegenerateDirectionError, InsufficientSamplesError, UnknownObservableError
from .walk import Path, deterministic_centering, grid_indices, pair_collisions, positions_at

KS_ALPHA = 1e-3
Z_MAX = 4.0
COV_REL_MAX = 0.05
CORR_MAX = 0.05
R2_DROP = 0.9


# ----------------------------------------------------------------- KS test


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution.

    For lam >= 1.18 the alternating series 2 sum_j (-1)^(j-1) exp(-2 j^2 lam^2)
    is used; below that the Jacobi theta form
    1 - sqrt(2 pi)/lam sum_j exp(-(2j-1)^2 pi^2 / (8 lam^2)) converges faster.
    Both are summed until the next term is below 1e-17 (at most 100 terms).
    """
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        s, c = 0.0, -math.pi ** 2 / (8 * lam * lam)
        for j in range(1, 101):
            t = math.exp(c * (2 * j - 1) ** 2)
            s += t
            if t < 1e-17:
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    s = 0.0
    for j in range(1, 101):
        t = math.exp(-2.0 * j * j * lam * lam)
        s += t if j % 2 else -t
        if t < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_normal_test(samples) -> tuple[float, float]:
    """One-sample KS statistic against N(0, 1) and its asymptotic p-value.

    The p-value uses Stephens' small-sample correction
    lam = (sqrt(N) + 0.12 + 0.11/sqrt(N)) * D.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    N = x.size
    if N < 20:
        raise InsufficientSamplesError(f"KS test needs at least 20 samples, got {N}")
    F = ndtr(x)
    i = np.arange(1, N + 1)
    D = float(max(np.max(i / N - F), np.max(F - (i - 1) / N)))
    rn = math.sqrt(N)
    return D, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * D)


# ---------------------------------------------------------- exponent fits


@dataclass(frozen=True)
class ExponentFit:
    points: list
    slope: float
    slope_SE: float
    intercept: float
    r_squared: float
    dropped: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def _ols(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    icpt = float(ym - slope * xm)
    res = y - (icpt + slope * x)
    sst = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((res ** 2).sum()) / sst if sst > 0 else 1.0
    se = math.sqrt(float((res ** 2).sum()) / (len(x) - 2) / sxx) if len(x) > 2 else float("nan")
    return slope, se, icpt, r2


def fit_exponent(points: Sequence[tuple], drop_rule: bool = True) -> ExponentFit:
    """Least-squares slope of log(value) against log(n) over points with value > 0.

    If r^2 < 0.9 and more than three points remain, the smallest-n point is
    dropped once and the drop is recorded.
    """
    pts = [(int(n), float(v), float(se)) for n, v, se in sorted(points)]
    use = [p for p in pts if p[1] > 0]
    flags = []
    if len(use) < len(pts):
        flags.append("nonpositive values excluded")
    if len(use) < 2:
        flags.append("degenerate: fewer than two positive values")
        nan = float("nan")
        return ExponentFit(pts, nan, nan, nan, nan, [], flags)
    x = np.log([p[0] for p in use])
    y = np.log([p[1] for p in use])
    slope, se, icpt, r2 = _ols(x, y)
    dropped = []
    if drop_rule and r2 < R2_DROP and len(use) > 3:
        dropped.append(use[0][0])
        slope, se, icpt, r2 = _ols(x[1:], y[1:])
    return ExponentFit(pts, slope, se, icpt, r2, dropped, flags)


# ----------------------------------------------------------- generic report


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class TestReport:
    name: str
    inputs: dict
    seed: int
    statistics: dict
    thresholds: dict
    passed: bool

    def to_json(self) -> dict:
        return _plain(asdict(self))


# ------------------------------------------------------------- quenched CLT


@dataclass(frozen=True)
class CltReport:
    n: int
    N: int
    centering: str
    cov: np.ndarray
    reference: np.ndarray
    cov_rel_error: float
    ks_results: list
    increment_corr: list
    thresholds: dict
    flags: list
    passed: bool

    def to_json(self) -> dict:
        return _plain(asdict(self))


def default_directions(nu: int) -> list[np.ndarray]:
    dirs = [np.eye(nu)[i] for i in range(nu)]
    if nu > 1:
        dirs.append(np.ones(nu) / math.sqrt(nu))
    return dirs


def clt_judgement(cov_rel_error: float, ks_results: list, increment_corr: list,
                  thresholds: dict) -> bool:
    ok = cov_rel_error < thresholds["cov_rel_max"]
    ok &= all(r[3] > thresholds["ks_alpha"] for r in ks_results)
    ok &= all(r[1] < thresholds["corr_max"] for r in increment_corr)
    return bool(ok)


def clt_quenched(env: EnvironmentView, n: int, N: int, directions=None,
                 t_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
                 centering: str = "deterministic", batch_seed: int = 0,
                 thresholds: dict | None = None) -> CltReport:
    """FCLT diagnostics for N walks of length n in the one environment ``env``.

    ks_results rows are (theta, statistic, p, p_bonferroni); increment_corr
    rows are ((t_a, t_b, t_c, t_d), max |corr|) over coordinate pairs of the
    increments on two disjoint grid intervals.
    """
    th = {"cov_rel_max": COV_REL_MAX, "ks_alpha": KS_ALPHA, "corr_max": CORR_MAX}
    th.update(thresholds or {})
    law = env.law
    ap = annealed_params(law)
    Dm = ap.D_matrix
    t_grid = np.asarray(sorted(set(float(t) for t in t_grid)), dtype=float)
    if t_grid.size == 0 or t_grid.min() < 0 or t_grid.max() > 1:
        raise ValueError("t_grid must lie in [0, 1]")
    flags = []
    idx = grid_indices(n, t_grid)
    pos = positions_at(env, n, N, batch_seed, idx).astype(float)
    if centering == "deterministic":
        c = deterministic_centering(ap.v_bar, n)[idx]
    elif centering == "quenched":
        c = quenched_mean_series(env, n).means[idx]
    else:
        raise ValueError(f"unknown centering {centering!r}")
    B = (pos - c) / math.sqrt(n)
    if np.all(t_grid == 0) or t_grid[-1] != 1.0:
        flags.append("degenerate t_grid: B_n(1) not sampled")
    B1 = B[:, -1, :]
    cov = B1.T @ B1 / N
    cov_err = float(np.linalg.norm(cov - Dm) / np.linalg.norm(Dm)) if np.any(Dm) else float("inf")
    dirs = default_directions(law.nu) if directions is None else [np.asarray(d, float) for d in directions]
    ks = []
    if not flags:
        for th_ in dirs:
            var = float(th_ @ Dm @ th_)
            if var <= 0:
                raise DegenerateDirectionError(f"theta^T D theta = 0 for theta = {th_.tolist()}")
            stat, p = ks_normal_test(B1 @ th_ / math.sqrt(var))
            ks.append((th_, stat, p, min(1.0, p * len(dirs))))
    corr = []
    incs = [(t_grid[i], t_grid[i + 1], B[:, i + 1, :] - B[:, i, :]) for i in range(len(t_grid) - 1)]
    for (a, b, X), (c_, d, Y) in combinations(incs, 2):
        best = 0.0
        for i in range(law.nu):
            for j in range(law.nu):
                x, y = X[:, i], Y[:, j]
                sx, sy = x.std(), y.std()
                if sx > 0 and sy > 0:
                    best = max(best, abs(float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))))
        corr.append(((float(a), float(b), float(c_), float(d)), best))
    passed = not flags and clt_judgement(cov_err, ks, corr, th)
    return CltReport(n, N, centering, cov, Dm, cov_err, ks, corr, th, flags, passed)


# --------------------------------------------------------- scaling exponents


def centering_decay(env: EnvironmentView, ladder: Sequence[int]) -> ExponentFit:
    """Fit of n^(-1/2) max_{k<=n} |E_0^w X_k - k v| against n, from one DP."""
    ladder = sorted(int(n) for n in ladder)
    if len(ladder) < 4 or len(set(ladder)) != len(ladder):
        raise ValueError("ladder must have at least 4 distinct points")
    vbar = annealed_params(env.law).v_bar
    if not env.law.is_random():
        # E_0^w X_k = k v exactly; the DP would only add round-off
        pts = [(n, 0.0, 0.0) for n in ladder]
    else:
        means = quenched_mean_series(env, ladder[-1]).means
        dev = np.linalg.norm(means - np.outer(np.arange(len(means)), vbar), axis=1)
        run = np.maximum.accumulate(dev)
        pts = [(n, float(run[n] / math.sqrt(n)), 0.0) for n in ladder]
    if all(v == 0 for _, v, _ in pts):
        nan = float("nan")
        return ExponentFit(pts, nan, nan, nan, nan, [], ["degenerate: all values are zero, fit skipped"])
    return fit_exponent(pts)


def centering_decay_averaged(law: SiteLaw, ladder: Sequence[int], M: int, seed: int = 0) -> ExponentFit:
    """Like ``centering_decay`` but fits the mean over M environments of
    n^(-1/2) max_{k<=n} |E_0^w X_k - k v|; point SEs are across environments.

    A single environment's ladder is one correlated sample path in n, so its
    slope scatters widely around the environment-averaged exponent.
    """
    ladder = sorted(int(n) for n in ladder)
    if len(ladder) < 4 or len(set(ladder)) != len(ladder):
        raise ValueError("ladder must have at least 4 distinct points")
    if M < 2:
        raise ValueError("M must be >= 2")
    vbar = annealed_params(law).v_bar
    seeds = derive_seeds(seed, M, 22)
    idx = np.asarray(ladder)

    def one(s):
        means = quenched_mean_series(EnvironmentView(law, int(s)), ladder[-1]).means
        run = np.maximum.accumulate(np.linalg.norm(means - np.outer(np.arange(len(means)), vbar), axis=1))
        return run[idx] / np.sqrt(idx)

    if not law.is_random():
        nan = float("nan")
        return ExponentFit([(n, 0.0, 0.0) for n in ladder], nan, nan, nan, nan, [],
                           ["degenerate: all values are zero, fit skipped"])
    vals = np.concatenate(map_chunks(lambda a, b: np.array([one(s) for s in seeds[a:b]]), M, chunk=4))
    mean, se = vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(M)
    pts = [(n, float(v), float(s)) for n, v, s in zip(ladder, mean, se)]
    if all(v == 0 for _, v, _ in pts):
        nan = float("nan")
        return ExponentFit(pts, nan, nan, nan, nan, [], ["degenerate: all values are zero, fit skipped"])
    return fit_exponent(pts)


@dataclass(frozen=True)
class VarianceScaling:
    fit: ExponentFit
    collision_fit: ExponentFit
    rows: list
    collision_rows: list
    g_norm_sq: float


def variance_scaling(law: SiteLaw, ladder: Sequence[int], M: int, seed: int = 0,
                     cap: int = DEFAULT_CAP) -> VarianceScaling:
    """Exponent of sqrt V(n) from exact per-environment DP, and the exponent
    of the collision-chain partial sums sum_{k<n} P(Y_k = 0)."""
    ladder = sorted(int(n) for n in ladder)
    ap = annealed_params(law)
    if law.is_random():
        rows = variance_quenched_mean(law, derive_seeds(seed, M, 21), ladder, cap)
    else:
        rows = [VarianceEstimate(n, 0.0, 0.0) for n in ladder]
    pts = []
    for r in rows:
        s = math.sqrt(r.V) if r.V > 0 else 0.0
        pts.append((r.n, s, r.SE / (2 * s) if s > 0 else 0.0))
    if all(r.V == 0 for r in rows):
        nan = float("nan")
        fit = ExponentFit(pts, nan, nan, nan, nan, [], ["degenerate: V(n) = 0 on the whole ladder"])
    else:
        fit = fit_exponent(pts)
    cs = collision_sum(ap, ladder[-1], cap).partial_sums
    cpts = [(n, float(cs[n - 1]), 0.0) for n in ladder]
    return VarianceScaling(fit, fit_exponent(cpts), rows, cpts, ap.g_norm_sq)


# ------------------------------------------------- martingale CLT hypotheses


@dataclass(frozen=True)
class MgHypothesesReport:
    n: int
    epsilon: float
    gamma: np.ndarray
    qv_curve: list
    lindeberg: list
    max_increment: float
    sup_deviation: float
    rel_sup_deviation: float

    def to_json(self) -> dict:
        return _plain(asdict(self))


def mg_hypotheses(env: EnvironmentView, path: Path, params: ResolventParams,
                  t_grid: Sequence[float], gamma, thresholds: Sequence[float] = (0.1,)) -> MgHypothesesReport:
    """Conditional quadratic variation and Lindeberg sums of the array
    Y_{n,k} = n^(-1/2) (Z_k - D + H_eps) along one path.

    The conditional moments given the walker's site are exact sums over the
    step support.  qv_curve rows are (t, matrix, Frobenius deviation from
    t * gamma); the relative deviation divides by |gamma|_F.
    """
    law = env.law
    S = law.support.array.astype(float)
    n = path.n
    X = path.positions
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    pis = transition_vectors(env, np.arange(n), X[:n])
    sw = resolvent_along(env, X[:n], params)
    covs = np.empty((n, law.nu, law.nu))
    lind = np.zeros(len(thresholds))
    max_inc = 0.0
    for k in range(n):
        pi, hn = pis[k], sw.h_next[k]
        covs[k] = conditional_increment_cov(pi, S, hn)
        y = (S - pi @ S + hn - pi @ hn) / math.sqrt(n)
        ny2 = np.sum(y * y, axis=1)
        for i, thr in enumerate(thresholds):
            lind[i] += float(np.sum(pi * ny2 * (ny2 >= thr * thr)))
        j = law.support.steps.index(tuple(int(c) for c in X[k + 1] - X[k]))
        max_inc = max(max_inc, math.sqrt(float(ny2[j])))
    cum = np.concatenate([np.zeros((1, law.nu, law.nu)), np.cumsum(covs, axis=0)]) / n
    curve = []
    sup = 0.0
    for t, i in zip(t_grid, grid_indices(n, t_grid)):
        dev = float(np.linalg.norm(cum[i] - t * gamma))
        sup = max(sup, dev)
        curve.append((float(t), cum[i], dev))
    gnorm = float(np.linalg.norm(gamma))
    rel = sup / gnorm if gnorm > 0 else float("inf")
    return MgHypothesesReport(n, params.epsilon, gamma, curve,
                              [(float(t), float(v)) for t, v in zip(thresholds, lind)],
                              max_inc, sup, rel)


# --------------------------------------------------------- collision identity


def _z(a: float, sa: float, b: float, sb: float) -> float:
    den = math.hypot(sa, sb)
    if den == 0:
        return 0.0 if a == b else float("inf")
    return (a - b) / den


def collision_identity_test(law: SiteLaw, n: int, M: int, N_pairs: int, seed: int = 0,
                            z_max: float = Z_MAX) -> TestReport:
    """Three routes to V(n): E|g|^2 * sum_{k<n} P(Y_k = 0) from the collision
    chain, the per-environment DP average, and Monte Carlo pair collisions."""
    ap = annealed_params(law)
    g2 = ap.g_norm_sq
    exact = g2 * float(collision_sum(ap, n).partial_sums[n - 1])
    if law.is_random():
        v = variance_quenched_mean(law, derive_seeds(seed, M, 21), [n])[0]
    else:
        v = VarianceEstimate(n, 0.0, 0.0)
    counts, _, _ = pair_collisions(law, n, N_pairs, seed)
    mc = g2 * float(counts.mean())
    mc_se = g2 * float(counts.std(ddof=1)) / math.sqrt(N_pairs) if N_pairs > 1 else 0.0
    z = {"exact_vs_dp": _z(exact, 0.0, v.V, v.SE),
         "exact_vs_mc": _z(exact, 0.0, mc, mc_se),
         "dp_vs_mc": _z(v.V, v.SE, mc, mc_se)}
    stats = {"g_norm_sq": g2, "exact": exact, "dp": v.V, "dp_SE": v.SE, "mc": mc, "mc_SE": mc_se,
             "z": z}
    return TestReport("collision_identity", {"n": n, "M": M, "N_pairs": N_pairs}, seed, stats,
                      {"z_max": z_max}, all(abs(x) < z_max for x in z.values()))


# ----------------------------------------------------------- ergodic averages


def _observable(name: str, nu: int, m: int):
    kind, _, arg = name.partition(":")
    if kind == "pi_coord" and arg.isdigit() and int(arg) < m:
        j = int(arg)
        return lambda pi, S, v: pi[:, j]
    if kind == "drift_coord" and arg.isdigit() and int(arg) < nu:
        d = int(arg)
        return lambda pi, S, v: pi @ S[:, d]
    if name == "drift_sq":
        return lambda pi, S, v: np.sum((pi @ S - v) ** 2, axis=1)
    raise UnknownObservableError(name)


@dataclass(frozen=True)
class ErgodicSeries:
    observable: str
    running: np.ndarray
    final: float
    final_SE: float
    baseline: float
    baseline_SE: float


def ergodic_average(env: EnvironmentView, path: Path, observable: str,
                    n_baseline: int | None = None) -> ErgodicSeries:
    """Running averages of Psi(T_(m, X_m) w) along the path, m < n.

    Observables: ``pi_coord:j`` (j-th transition probability), ``drift_coord:d``
    (d-th coordinate of D) and ``drift_sq`` (|D - v|^2).  The baseline is the
    plain average of Psi over fresh sites (negative levels, site 0), which
    the walker never sees.
    """
    law = env.law
    f = _observable(observable, law.nu, law.m)
    S = law.support.array.astype(float)
    vbar = annealed_params(law).v_bar
    n = path.n
    pis = transition_vectors(env, np.arange(n), path.positions[:n])
    vals = f(pis, S, vbar)
    running = np.cumsum(vals) / np.arange(1, n + 1)
    nb = n if n_baseline is None else int(n_baseline)
    base = f(transition_vectors(env, -np.arange(1, nb + 1), np.zeros((nb, law.nu), np.int64)), S, vbar)

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0

    return ErgodicSeries(observable, running, float(running[-1]), se(vals),
                         float(base.mean()), se(base))


# ---------------------------------------------------------------- output


def write_json(obj: Any, fh) -> None:
    json.dump(_plain(obj), fh, indent=2, sort_keys=True)
    fh.write("\n")


def write_fit_csv(fit: ExponentFit, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "value", "SE"])
    for n, v, s in fit.points:
        w.writerow([n, repr(float(v)), repr(float(s))])


__all__ = [
    "ks_normal_test", "kolmogorov_sf", "ExponentFit", "fit_exponent", "TestReport", "CltReport",
    "clt_quenched", "clt_judgement", "default_directions", "centering_decay",
    "centering_decay_averaged", "variance_scaling",
    "VarianceScaling", "MgHypothesesReport", "mg_hypotheses", "collision_identity_test",
    "ErgodicSeries", "ergodic_average", "write_json", "write_fit_csv",
]
