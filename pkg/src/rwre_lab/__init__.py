"""Simulation and verification lab for random walks in space-time i.i.d.
random environments."""

__version__ = "0.1.0"

from ._parallel import get_workers, set_workers
from .env import (Deterministic, Dirichlet, EnvironmentView, Mixture, SiteLaw, StepSupport,
                  derive_seed, shift_view, transition_vector, validate_spec)
from .errors import *  # noqa: F401,F403

__all__ = [
    "__version__", "set_workers", "get_workers", "SiteLaw", "StepSupport", "Dirichlet", "Mixture",
    "Deterministic", "EnvironmentView", "validate_spec", "transition_vector", "shift_view",
    "derive_seed",
]
