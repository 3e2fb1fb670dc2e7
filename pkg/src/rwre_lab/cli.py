"""Command-line experiment runner.

    rwre-lab <experiment> --config FILE [--key value ...]
    rwre-lab describe <experiment> --config FILE [--key value ...]

Experiments: simulate, clt, collisions, scaling, corrector, mg-check,
ergodic, density, all.  Every ``--key value`` pair overrides the config key of
the same name; values are parsed as JSON when possible, else kept as strings.

Exit status: 0 all checks passed, 1 a statistical check failed, 2 invalid
configuration, 3 a DP table would exceed the size cap.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path as FsPath
from typing import Any, Callable

import numpy as np

from . import __version__
from ._parallel import set_workers
from .corrector import (ResolventParams, decompose, limit_diffusion_matrix,
                        write_decomposition_csv)
from .dp import DEFAULT_CAP, annealed_params, cone_box_size, density_f, write_collision_csv, collision_sum
from .env import EnvironmentView, SiteLaw, StepSupport, derive_seed, validate_spec
from .errors import ConfigError, LawError, ResourceError
from .verify import (centering_decay_averaged, clt_quenched, collision_identity_test,
                     ergodic_average, mg_hypotheses, variance_scaling, write_fit_csv)
from .walk import grid_indices, positions_at, sample_path

EXPERIMENTS = ("simulate", "clt", "collisions", "scaling", "corrector", "mg-check", "ergodic",
               "density")

DEFAULT_LAW = {"nu": 1, "kind": "dirichlet", "alphas": [1.0, 1.0]}

# global defaults; per-experiment defaults below fill keys left unset
DEFAULTS: dict[str, Any] = {
    "law": DEFAULT_LAW,
    "master_seed": 42,
    "output_dir": "rwre_out",
    "workers": None,
    "cap": DEFAULT_CAP,
    "t_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
    "directions": None,
    "tol": 1e-3,
    "thresholds": {},
}

EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"n": 1024, "N": 100},
    "clt": {"n": 4096, "N": 20000, "centering": ["deterministic", "quenched"]},
    "collisions": {"n": 256, "M": 2000, "N_pairs": 100000},
    "scaling": {"ladder": [2 ** k for k in range(6, 13)], "M": 2000,
                "centering_ladder": [2 ** k for k in range(8, 15)], "centering_M": 32},
    "corrector": {"ladder": [64, 256, 1024], "samples": 500, "epsilon": None},
    "mg-check": {"n": 4096, "samples": 50, "epsilon": 1 / 64, "M": 5000},
    "ergodic": {"n": 100000, "observables": ["pi_coord:0", "drift_sq"]},
    "density": {"ladder": [0, 1, 2, 4, 8], "M": 5000},
}

THRESHOLDS: dict[str, dict[str, Any]] = {
    "clt": {"cov_rel_max": 0.05, "ks_alpha": 1e-3, "corr_max": 0.05},
    "collisions": {"z_max": 4.0},
    "scaling": {"variance_slope": [0.20, 0.30], "collision_slope": [0.4, 0.6],
                "centering_slope": [-0.35, -0.15]},
    "corrector": {"alpha_max": 0.35, "identity_residual_max": 1e-9},
    "mg-check": {"rel_deviation_max": 0.1, "lindeberg_threshold": 0.1, "lindeberg_max": 0.01},
    "ergodic": {"z_max": 4.0},
    "density": {"z_max": 4.0},
}


# ------------------------------------------------------------------ config


def law_from_json(spec: dict) -> SiteLaw:
    """Build and validate a SiteLaw from its JSON form.

    ``{"nu": 1, "steps": [[1], [-1]], "kind": "dirichlet", "alphas": [1, 1]}``;
    ``steps`` defaults to the nearest-neighbour support, ``kind`` is one of
    dirichlet (``alphas``), mixture (``components`` = [[w, [p...]], ...]) or
    deterministic (``vector``).
    """
    if not isinstance(spec, dict):
        raise ConfigError("law must be a JSON object")
    try:
        nu = int(spec.get("nu", 1))
        steps = spec.get("steps")
        support = StepSupport.nearest_neighbour(nu) if steps is None else StepSupport(nu, tuple(map(tuple, steps)))
        kind = spec.get("kind", "dirichlet")
        if kind == "dirichlet":
            law = SiteLaw.dirichlet(support, spec["alphas"])
        elif kind == "mixture":
            law = SiteLaw.mixture(support, spec["components"])
        elif kind == "deterministic":
            law = SiteLaw.deterministic(support, spec["vector"])
        else:
            raise ConfigError(f"unknown law kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed law: {exc}") from exc
    return validate_spec(law)


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict
    law: SiteLaw = field(repr=False)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def thresholds(self, name: str) -> dict:
        th = dict(THRESHOLDS.get(name, {}))
        user = self.values.get("thresholds") or {}
        th.update(user.get(name, {}) if isinstance(user.get(name), dict) else
                  {k: v for k, v in user.items() if k in th})
        return th

    def for_experiment(self, name: str) -> "ExperimentConfig":
        vals = dict(EXPERIMENT_DEFAULTS[name])
        vals.update({k: v for k, v in self.values.items() if v is not None or k not in vals})
        return ExperimentConfig(name, vals, self.law)


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _pos_int(v, key):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{key} must be a positive integer, got {v!r}")


def _check_values(name: str, vals: dict) -> None:
    for key in ("n", "N", "M", "N_pairs", "samples", "centering_M"):
        if key in vals:
            _pos_int(vals[key], key)
    for key in ("ladder", "centering_ladder"):
        if key in vals:
            lad = vals[key]
            if not isinstance(lad, list) or not lad or not all(isinstance(x, int) and x >= 0 for x in lad):
                raise ConfigError(f"{key} must be a nonempty list of nonnegative integers")
    t = vals.get("t_grid")
    if not isinstance(t, list) or not t or not all(isinstance(x, (int, float)) and 0 <= x <= 1 for x in t):
        raise ConfigError("t_grid must be a nonempty list of numbers in [0, 1]")
    eps = vals.get("epsilon")
    if eps is not None and not (isinstance(eps, (int, float)) and eps > 0):
        raise ConfigError("epsilon must be positive")
    if not (isinstance(vals.get("tol"), (int, float)) and vals["tol"] > 0):
        raise ConfigError("tol must be positive")
    w = vals.get("workers")
    if w is not None:
        _pos_int(w, "workers")
    if name == "clt":
        cen = vals.get("centering")
        cen = [cen] if isinstance(cen, str) else cen
        if not cen or any(c not in ("deterministic", "quenched") for c in cen):
            raise ConfigError("centering must be 'deterministic', 'quenched' or a list of them")
        vals["centering"] = cen
    if name in ("corrector", "scaling") and any(x < 1 for x in vals.get("ladder", [1])):
        raise ConfigError("ladder entries must be >= 1")


def load_config(experiment: str, path: str | None, overrides: dict) -> ExperimentConfig:
    """Merge defaults, the config file and command-line overrides, then validate."""
    vals = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        vals.update(data)
    vals.update(overrides)
    exp = experiment or vals.get("experiment")
    if exp not in EXPERIMENTS + ("all",):
        raise ConfigError(f"unknown experiment {exp!r}")
    vals["experiment"] = exp
    if not isinstance(vals.get("master_seed"), int) or vals["master_seed"] < 0:
        raise ConfigError("master_seed must be a nonnegative integer")
    law = law_from_json(vals["law"])
    cfg = ExperimentConfig(exp, vals, law)
    for name in (EXPERIMENTS if exp == "all" else (exp,)):
        _check_values(name, cfg.for_experiment(name).values)
    return cfg


# ------------------------------------------------------------- experiments


class Outputs:
    """Collects files in a staging directory; nothing lands in output_dir
    unless the run completes."""

    def __init__(self, stage: FsPath):
        self.stage = stage
        self.files: list[str] = []

    def open(self, name: str):
        self.files.append(name)
        return open(self.stage / name, "w", newline="")

    def csv(self, name: str, header, rows) -> None:
        with self.open(name) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _in(x: float, rng) -> bool:
    return bool(rng[0] <= x <= rng[1])


def run_simulate(cfg: ExperimentConfig, out: Outputs) -> dict:
    law, n, N, seed = cfg.law, cfg["n"], cfg["N"], cfg["master_seed"]
    env = EnvironmentView(law, seed)
    t_grid = sorted(set(float(t) for t in cfg["t_grid"]))
    idx = grid_indices(n, t_grid)
    pos = positions_at(env, n, N, derive_seed(seed, 0, 31), idx)
    rows = ((r, t, *pos[r, i]) for r in range(N) for i, t in enumerate(t_grid))
    out.csv("simulate_positions.csv", ["replica", "t"] + [f"x_{d + 1}" for d in range(law.nu)], rows)
    end = pos[:, -1, :].astype(float)
    return {"passed": True, "n": n, "N": N, "mean_end": end.mean(axis=0).tolist(),
            "cov_end": (np.cov(end.T, ddof=1).reshape(law.nu, law.nu) if N > 1 else np.zeros((law.nu, law.nu))).tolist()}


def run_clt(cfg: ExperimentConfig, out: Outputs) -> dict:
    env = EnvironmentView(cfg.law, cfg["master_seed"])
    th = cfg.thresholds("clt")
    res, ks_rows, inc_rows = {}, [], []
    for c in cfg["centering"]:
        r = clt_quenched(env, cfg["n"], cfg["N"], cfg["directions"], cfg["t_grid"], c,
                         derive_seed(cfg["master_seed"], 0, 32), th)
        res[c] = {"cov": r.cov.tolist(), "reference": r.reference.tolist(),
                  "cov_rel_error": r.cov_rel_error, "flags": r.flags, "passed": r.passed,
                  "ks": [{"theta": k[0].tolist(), "statistic": k[1], "p": k[2], "p_bonferroni": k[3]}
                         for k in r.ks_results],
                  "increment_corr": [{"intervals": list(k[0]), "max_abs_corr": k[1]} for k in r.increment_corr]}
        ks_rows += [(c, " ".join(repr(float(x)) for x in k[0]), k[1], k[2], k[3]) for k in r.ks_results]
        inc_rows += [(c, *k[0], k[1]) for k in r.increment_corr]
    out.csv("clt_ks.csv", ["centering", "theta", "statistic", "p", "p_bonferroni"], ks_rows)
    out.csv("clt_increments.csv", ["centering", "t_a", "t_b", "t_c", "t_d", "max_abs_corr"], inc_rows)
    return {"passed": all(v["passed"] for v in res.values()), "n": cfg["n"], "N": cfg["N"],
            "thresholds": th, "centerings": res}


def run_collisions(cfg: ExperimentConfig, out: Outputs) -> dict:
    th = cfg.thresholds("collisions")
    rep = collision_identity_test(cfg.law, cfg["n"], cfg["M"], cfg["N_pairs"], cfg["master_seed"],
                                  th["z_max"])
    with out.open("collisions_series.csv") as fh:
        write_collision_csv(collision_sum(annealed_params(cfg.law), cfg["n"], cfg["cap"]), fh)
    d = rep.to_json()
    return {"passed": rep.passed, **d}


def _fit_json(fit) -> dict:
    return {"slope": fit.slope, "slope_SE": fit.slope_SE, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "dropped": fit.dropped, "flags": fit.flags,
            "points": [list(p) for p in fit.points]}


def run_scaling(cfg: ExperimentConfig, out: Outputs) -> dict:
    th = cfg.thresholds("scaling")
    vs = variance_scaling(cfg.law, cfg["ladder"], cfg["M"], cfg["master_seed"], cfg["cap"])
    cd = centering_decay_averaged(cfg.law, cfg["centering_ladder"], cfg["centering_M"], cfg["master_seed"])
    for name, fit in (("scaling_variance.csv", vs.fit), ("scaling_collisions.csv", vs.collision_fit),
                      ("scaling_centering.csv", cd)):
        with out.open(name) as fh:
            write_fit_csv(fit, fh)
    checks = {"variance_slope": _in(vs.fit.slope, th["variance_slope"]),
              "collision_slope": _in(vs.collision_fit.slope, th["collision_slope"]),
              "centering_slope": _in(cd.slope, th["centering_slope"])}
    return {"passed": all(checks.values()), "checks": checks, "thresholds": th,
            "variance_fit": _fit_json(vs.fit), "collision_fit": _fit_json(vs.collision_fit),
            "centering_fit": _fit_json(cd), "g_norm_sq": vs.g_norm_sq}


def run_corrector(cfg: ExperimentConfig, out: Outputs) -> dict:
    from .verify import fit_exponent

    th = cfg.thresholds("corrector")
    law, seed, S = cfg.law, cfg["master_seed"], cfg["samples"]
    recs, pts, worst = [], [], 0.0
    for n in cfg["ladder"]:
        eps = cfg["epsilon"] or 1.0 / n
        params = ResolventParams.for_law(law, eps, cfg["tol"])
        sq = np.empty(S)
        for i in range(S):
            env = EnvironmentView(law, derive_seed(seed, i, 41))
            path = sample_path(env, n, derive_seed(seed, i, 42))
            r = decompose(path, env, params)
            recs.append(r)
            sq[i] = float(r.r_n @ r.r_n)
            worst = max(worst, r.identity_residual)
        pts.append((n, float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(S)) if S > 1 else 0.0))
    with out.open("corrector_records.csv") as fh:
        write_decomposition_csv(recs, 0, fh)
    fit = fit_exponent(pts)
    alpha = fit.slope / 2
    checks = {"alpha": bool(alpha <= th["alpha_max"]),
              "identity_residual": bool(worst <= th["identity_residual_max"])}
    return {"passed": all(checks.values()), "checks": checks, "thresholds": th, "alpha_hat": alpha,
            "fit": _fit_json(fit), "max_identity_residual": worst}


def run_mg(cfg: ExperimentConfig, out: Outputs) -> dict:
    th = cfg.thresholds("mg-check")
    law, seed, n = cfg.law, cfg["master_seed"], cfg["n"]
    params = ResolventParams.for_law(law, cfg["epsilon"], cfg["tol"])
    gamma = limit_diffusion_matrix(law, params, cfg["M"], 1, derive_seed(seed, 0, 51))
    devs, linds, maxinc, rows = [], [], [], []
    t_grid = sorted(set(float(t) for t in cfg["t_grid"]))
    for i in range(cfg["samples"]):
        env = EnvironmentView(law, derive_seed(seed, i, 52))
        path = sample_path(env, n, derive_seed(seed, i, 53))
        rep = mg_hypotheses(env, path, params, t_grid, gamma.matrix, (th["lindeberg_threshold"],))
        devs.append(rep.rel_sup_deviation)
        linds.append(rep.lindeberg[0][1])
        maxinc.append(rep.max_increment)
        rows += [(i, t, dev, *np.ravel(mat)) for t, mat, dev in rep.qv_curve]
    nu = law.nu
    out.csv("mg-check_qv.csv", ["sample", "t", "deviation"] + [f"qv_{a + 1}{b + 1}" for a in range(nu) for b in range(nu)], rows)
    mean_dev, mean_l = float(np.mean(devs)), float(np.mean(linds))
    checks = {"qv_deviation": mean_dev < th["rel_deviation_max"], "lindeberg": mean_l < th["lindeberg_max"]}
    return {"passed": all(checks.values()), "checks": checks, "thresholds": th,
            "gamma_hat": gamma.matrix.tolist(), "gamma_SE": gamma.se.tolist(), "epsilon": params.epsilon,
            "mean_rel_sup_deviation": mean_dev, "mean_lindeberg": mean_l,
            "max_increment": float(np.max(maxinc))}


def run_ergodic(cfg: ExperimentConfig, out: Outputs) -> dict:
    th = cfg.thresholds("ergodic")
    seed, n = cfg["master_seed"], cfg["n"]
    env = EnvironmentView(cfg.law, seed)
    path = sample_path(env, n, derive_seed(seed, 0, 61))
    res, rows = {}, []
    marks = sorted(set([2 ** k for k in range(int(math.log2(n)) + 1)] + [n]))
    for name in cfg["observables"]:
        s = ergodic_average(env, path, name)
        se = math.hypot(s.final_SE, s.baseline_SE)
        z = (s.final - s.baseline) / se if se > 0 else (0.0 if s.final == s.baseline else math.inf)
        res[name] = {"final": s.final, "final_SE": s.final_SE, "baseline": s.baseline,
                     "baseline_SE": s.baseline_SE, "z": z, "passed": abs(z) < th["z_max"]}
        rows += [(name, k, s.running[k - 1]) for k in marks]
    out.csv("ergodic_running.csv", ["observable", "k", "running_average"], rows)
    return {"passed": all(v["passed"] for v in res.values()), "thresholds": th, "observables": res}


def run_density(cfg: ExperimentConfig, out: Outputs) -> dict:
    th = cfg.thresholds("density")
    law, seed, M = cfg.law, cfg["master_seed"], cfg["M"]
    res, rows = {}, []
    for n in cfg["ladder"]:
        vals = np.array([density_f(EnvironmentView(law, derive_seed(seed, i, 71)), n, cfg["cap"])
                         for i in range(M)])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
        ok = mean == 1.0 if n == 0 else (abs(mean - 1) < th["z_max"] * se if se > 0 else abs(mean - 1) < 1e-12)
        res[str(n)] = {"mean": mean, "SE": se, "passed": bool(ok)}
        rows.append((n, mean, se))
    out.csv("density.csv", ["n", "mean_f", "SE"], rows)
    return {"passed": all(v["passed"] for v in res.values()), "thresholds": th, "ladder": res}


RUNNERS: dict[str, Callable[[ExperimentConfig, Outputs], dict]] = {
    "simulate": run_simulate, "clt": run_clt, "collisions": run_collisions, "scaling": run_scaling,
    "corrector": run_corrector, "mg-check": run_mg, "ergodic": run_ergodic, "density": run_density,
}


# ------------------------------------------------------------------ driver


def _sha256(path: FsPath) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig) -> int:
    """Run the configured experiment(s); returns the exit status."""
    set_workers(cfg.get("workers"))
    outdir = FsPath(cfg["output_dir"])
    outdir.parent.mkdir(parents=True, exist_ok=True)
    stage = FsPath(tempfile.mkdtemp(prefix=".rwre-stage-", dir=outdir.parent))
    t0 = time.perf_counter()
    try:
        out = Outputs(stage)
        names = EXPERIMENTS if cfg.experiment == "all" else (cfg.experiment,)
        summary = {"experiment": cfg.experiment, "master_seed": cfg["master_seed"], "results": {}}
        for name in names:
            summary["results"][name] = RUNNERS[name](cfg.for_experiment(name), out)
        summary["passed"] = all(r["passed"] for r in summary["results"].values())
        with out.open("summary.json") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for f in out.files:
            shutil.move(str(stage / f), str(outdir / f))
            files.append({"file": f, "sha256": _sha256(outdir / f)})
        manifest = {"config": _jsonable(cfg.values), "version": __version__,
                    "timestamp": datetime.now(timezone.utc).isoformat(), "files": files,
                    "runtime_seconds": time.perf_counter() - t0}
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return 0 if summary["passed"] else 1
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


PLANS = {
    "simulate": ["env.validate_spec", "walk.positions_at (N replicas, one environment)"],
    "clt": ["dp.annealed_params", "walk.positions_at (N replicas, one environment)",
            "dp.quenched_mean_series (quenched centering)", "verify.ks_normal_test per direction",
            "covariance and increment correlations"],
    "collisions": ["dp.annealed_params", "dp.collision_sum", "dp.variance_quenched_mean (M environments)",
                   "walk.pair_collisions (N_pairs fresh environments)", "pairwise z-scores"],
    "scaling": ["dp.variance_quenched_mean over the ladder (M environments)", "dp.collision_sum",
                "verify.centering_decay_averaged (centering_M environments)", "exponent fits"],
    "corrector": ["walk.sample_path per sample", "corrector.resolvent_along (windowed sweep)",
                  "corrector.decompose", "exponent fit of mean |R_n|^2"],
    "mg-check": ["corrector.limit_diffusion_matrix (M environments)", "walk.sample_path per sample",
                 "corrector.resolvent_along", "verify.mg_hypotheses"],
    "ergodic": ["walk.sample_path", "verify.ergodic_average per observable"],
    "density": ["dp.density_f per environment and ladder depth"],
}


def describe(cfg: ExperimentConfig, stream=None) -> None:
    """Print the plan, cost estimates and thresholds; no computation."""
    stream = sys.stdout if stream is None else stream
    law = cfg.law
    steps = law.support.array
    cap = cfg["cap"]
    p = lambda s="": print(s, file=stream)  # noqa: E731
    p(f"law: nu={law.nu}, |S|={law.m}, {type(law.variant).__name__}, random={law.is_random()}")
    p(f"master_seed: {cfg['master_seed']}   output_dir: {cfg['output_dir']}   cap: {cap}")
    for name in (EXPERIMENTS if cfg.experiment == "all" else (cfg.experiment,)):
        c = cfg.for_experiment(name)
        p()
        p(f"[{name}]")
        for i, step in enumerate(PLANS[name], 1):
            p(f"  {i}. {step}")
        depths = [c[k] for k in ("n",) if k in c.values] + list(c.get("ladder") or []) \
            + list(c.get("centering_ladder") or [])
        if name == "corrector" or name == "mg-check":
            depths = []
        for d in sorted(set(depths)):
            size = cone_box_size(steps, d) if d > 0 else 1
            warn = "  WARNING: ResourceError likely" if size > cap else ""
            p(f"  DP box at depth {d}: {size} sites{warn}")
        if name == "collisions":
            ap = annealed_params(law)
            qs = np.array(list(ap.q_origin), dtype=np.int64).reshape(-1, law.nu)
            size = cone_box_size(qs, c["n"])
            warn = "  WARNING: ResourceError likely" if size > cap else ""
            p(f"  collision chain box: {size} sites{warn}")
        reps = {k: c[k] for k in ("N", "M", "N_pairs", "samples", "centering_M") if k in c.values}
        if reps:
            p("  replicas: " + ", ".join(f"{k}={v}" for k, v in reps.items()))
        if name in THRESHOLDS:
            p("  thresholds: " + json.dumps(c.thresholds(name), sort_keys=True))


def _split_overrides(rest: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or i + 1 >= len(rest):
            raise ConfigError(f"expected --key value pairs, got {tok!r}")
        out[tok[2:]] = parse_value(rest[i + 1])
        i += 2
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rwre-lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("experiment", help="experiment name, or 'describe'")
    parser.add_argument("target", nargs="?", help="experiment to describe (describe only)")
    parser.add_argument("--config", help="JSON config file")
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = _split_overrides(rest)
        if args.experiment == "describe":
            cfg = load_config(args.target, args.config, overrides)
            describe(cfg)
            return 0
        if args.target is not None:
            raise ConfigError(f"unexpected argument {args.target!r}")
        cfg = load_config(args.experiment, args.config, overrides)
    except (ConfigError, LawError, ValueError) as exc:
        print(f"rwre-lab: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ResourceError as exc:
        print(f"rwre-lab: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, LawError) as exc:
        print(f"rwre-lab: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
