"""Site laws and the lazily generated space-time environment.

Coordinates: a point of Z^d = Z x Z^nu is written (level, site) with the
level along the deterministic time direction e_1; ``site`` lives in the
hyperplane E = Z^nu.  A site law describes the random probability vector
(pi_{0, e_1 + z})_{z in S} over a finite step support S in E.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import EllipticityError, EmptySupportError, NormalizationError

log = logging.getLogger(__name__)

SILENT_TOL = 1e-12
HARD_TOL = 1e-9


@dataclass(frozen=True)
class StepSupport:
    nu: int
    steps: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        steps = tuple(tuple(int(c) for c in s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if self.nu < 1:
            raise ValueError("nu must be a positive integer")
        if not steps:
            raise EmptySupportError("step support is empty")
        for s in steps:
            if len(s) != self.nu:
                raise ValueError(f"step {s} does not have {self.nu} coordinates")
        if len(set(steps)) != len(steps):
            raise ValueError("steps must be pairwise distinct")

    @classmethod
    def nearest_neighbour(cls, nu: int) -> "StepSupport":
        """The 2*nu unit steps +-u_i, ordered u_1, -u_1, u_2, -u_2, ..."""
        steps = []
        for i in range(nu):
            for sign in (1, -1):
                s = [0] * nu
                s[i] = sign
                steps.append(tuple(s))
        return cls(nu, tuple(steps))

    @property
    def m(self) -> int:
        return len(self.steps)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.steps, dtype=np.int64).reshape(self.m, self.nu)
        a.setflags(write=False)
        return a


def _as_support(steps) -> StepSupport:
    if isinstance(steps, StepSupport):
        return steps
    steps = [tuple(int(c) for c in s) for s in steps]
    return StepSupport(len(steps[0]) if steps else 1, tuple(steps))


@dataclass(frozen=True)
class Dirichlet:
    alphas: tuple[float, ...]


@dataclass(frozen=True)
class Mixture:
    components: tuple[tuple[float, tuple[float, ...]], ...]


@dataclass(frozen=True)
class Deterministic:
    vector: tuple[float, ...]


Variant = Union[Dirichlet, Mixture, Deterministic]


@dataclass(frozen=True)
class SiteLaw:
    support: StepSupport
    variant: Variant

    @classmethod
    def dirichlet(cls, steps: Sequence[Sequence[int]], alphas: Sequence[float]) -> "SiteLaw":
        return cls(_as_support(steps), Dirichlet(tuple(float(a) for a in alphas)))

    @classmethod
    def deterministic(cls, steps: Sequence[Sequence[int]], vector: Sequence[float]) -> "SiteLaw":
        return cls(_as_support(steps), Deterministic(tuple(float(p) for p in vector)))

    @classmethod
    def mixture(cls, steps, components) -> "SiteLaw":
        comps = tuple((float(w), tuple(float(p) for p in v)) for w, v in components)
        return cls(_as_support(steps), Mixture(comps))

    @property
    def nu(self) -> int:
        return self.support.nu

    @property
    def m(self) -> int:
        return self.support.m

    @cached_property
    def packed(self) -> tuple:
        """Arguments in the layout expected by the compiled kernels."""
        m = self.m
        v = self.variant
        alphas = np.ones(m)
        cumw = np.ones(1)
        comps = np.zeros((1, m))
        if isinstance(v, Dirichlet):
            alphas = np.asarray(v.alphas, dtype=float)
            kind = K.FLAT if np.all(alphas == 1.0) else K.DIRICHLET
        elif isinstance(v, Mixture):
            kind = K.MIXTURE
            cumw = np.cumsum([w for w, _ in v.components])
            comps = np.array([c for _, c in v.components], dtype=float)
        else:
            kind = K.DETERMINISTIC
            comps = np.asarray(v.vector, dtype=float).reshape(1, m)
        return kind, alphas, cumw, comps, self.support.array

    def is_random(self) -> bool:
        """False when every site carries the same vector (no environment noise)."""
        v = self.variant
        if isinstance(v, Deterministic):
            return False
        if isinstance(v, Mixture):
            live = [c for w, c in v.components if w > 0]
            return any(c != live[0] for c in live[1:])
        return True


def _check_vector(vec, m, what) -> tuple[float, ...]:
    a = np.asarray(vec, dtype=float)
    if a.shape != (m,):
        raise NormalizationError(f"{what}: expected {m} entries, got {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise NormalizationError(f"{what}: entries must be finite and nonnegative")
    dev = abs(a.sum() - 1.0)
    if dev > HARD_TOL:
        raise NormalizationError(f"{what}: sums to {a.sum():.15g}, not 1")
    if dev > SILENT_TOL:
        log.warning("%s: renormalizing (deviation %.3g)", what, dev)
    if dev > 0:
        a = a / a.sum()
    return tuple(float(x) for x in a)


def validate_spec(law: SiteLaw) -> SiteLaw:
    """Check every SiteLaw invariant, including ellipticity.

    Returns the law unchanged, or a renormalized copy when some vector was off
    by no more than 1e-9.  Raises NormalizationError, EllipticityError or
    EmptySupportError.
    """
    if law.support.m == 0:
        raise EmptySupportError("step support is empty")
    m = law.m
    v = law.variant
    if isinstance(v, Dirichlet):
        if len(v.alphas) != m:
            raise NormalizationError(f"expected {m} Dirichlet parameters, got {len(v.alphas)}")
        if not all(np.isfinite(a) and a > 0 for a in v.alphas):
            raise NormalizationError("Dirichlet parameters must be positive")
        if m == 1:
            raise EllipticityError("a single-step support makes every site deterministic")
        return law
    if isinstance(v, Mixture):
        if not v.components:
            raise NormalizationError("mixture has no components")
        weights = _check_vector([w for w, _ in v.components], len(v.components), "mixture weights")
        comps = tuple((w, _check_vector(c, m, f"component {i}"))
                      for i, (w, (_, c)) in enumerate(zip(weights, v.components)))
        if not any(w > 0 and max(c) < 1 - SILENT_TOL for w, c in comps):
            raise EllipticityError("every positively weighted component is a point mass")
        new = Mixture(comps)
    else:
        vec = _check_vector(v.vector, m, "deterministic vector")
        if max(vec) >= 1 - SILENT_TOL:
            raise EllipticityError("deterministic vector is a point mass")
        new = Deterministic(vec)
    return law if new == v else SiteLaw(law.support, new)


def law_moments(law: SiteLaw) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector p(z) = E pi_z and second moments m(z, z') = E pi_z pi_z'."""
    v = law.variant
    if isinstance(v, Dirichlet):
        a = np.asarray(v.alphas, dtype=float)
        a0 = a.sum()
        p = a / a0
        mm = np.outer(a, a) + np.diag(a)
        mm /= a0 * (a0 + 1.0)
    elif isinstance(v, Mixture):
        p = sum(w * np.asarray(c) for w, c in v.components)
        mm = sum(w * np.outer(c, c) for w, c in v.components)
    else:
        c = np.asarray(v.vector, dtype=float)
        p, mm = c.copy(), np.outer(c, c)
    mm = 0.5 * (mm + mm.T)
    return np.asarray(p, dtype=float), np.asarray(mm, dtype=float)


def env_key(master_seed: int) -> np.uint64:
    return np.uint64(K.mix64(np.uint64(master_seed) ^ K.TAG_ENV))


def walk_key(replica_seed: int) -> np.uint64:
    return np.uint64(K.mix64(np.uint64(replica_seed) ^ K.TAG_WALK))


def derive_seed(base: int, index: int, tag: int = 0) -> int:
    """Child seed number ``index`` of ``base``; ``tag`` separates families."""
    h = np.uint64(K.mix64(np.uint64(base) ^ K.TAG_DERIVE))
    h = np.uint64(K.combine(h, np.int64(tag)))
    return int(K.combine(h, np.int64(index)))


def derive_seeds(base: int, count: int, tag: int = 0) -> np.ndarray:
    return np.array([derive_seed(base, i, tag) for i in range(count)], dtype=np.uint64)


@dataclass(frozen=True)
class EnvironmentView:
    """i.i.d. space-time environment drawn from ``law`` and keyed by
    ``master_seed``; queries are relative to ``origin`` (the shift T)."""

    law: SiteLaw
    master_seed: int
    origin_level: int = 0
    origin_site: tuple[int, ...] = field(default=None)

    def __post_init__(self):
        site = self.origin_site
        if site is None:
            site = (0,) * self.law.nu
        site = tuple(int(c) for c in site)
        if len(site) != self.law.nu:
            raise ValueError("origin site has the wrong dimension")
        object.__setattr__(self, "origin_site", site)
        object.__setattr__(self, "master_seed", int(self.master_seed) & 0xFFFFFFFFFFFFFFFF)
        object.__setattr__(self, "origin_level", int(self.origin_level))

    @property
    def nu(self) -> int:
        return self.law.nu

    @cached_property
    def key(self) -> np.uint64:
        return env_key(self.master_seed)

    @property
    def osite(self) -> np.ndarray:
        return np.asarray(self.origin_site, dtype=np.int64)


def transition_vector(env: EnvironmentView, level: int, site: Sequence[int]) -> np.ndarray:
    """The vector (pi_{x, x + e_1 + z})_{z in S} at view coordinates (level, site)."""
    return transition_vectors(env, [level], [site])[0]


def transition_vectors(env: EnvironmentView, levels, sites) -> np.ndarray:
    levels = np.asarray(levels, dtype=np.int64).reshape(-1) + env.origin_level
    sites = np.asarray(sites, dtype=np.int64).reshape(len(levels), env.nu) + env.osite
    kind, alphas, cumw, comps, _ = env.law.packed
    return K.vectors_at(kind, alphas, cumw, comps, env.key, levels, sites)


def shift_view(env: EnvironmentView, m: int, x: Sequence[int]) -> EnvironmentView:
    """The view of T_{(m, x)} omega."""
    x = tuple(int(c) for c in x)
    if len(x) != env.nu:
        raise ValueError("shift has the wrong dimension")
    site = tuple(a + b for a, b in zip(env.origin_site, x))
    return EnvironmentView(env.law, env.master_seed, env.origin_level + int(m), site)
