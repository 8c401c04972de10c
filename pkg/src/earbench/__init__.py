"""Deterministic ear-recognition experiment toolkit."""

from earbench.common import DEFAULT_SEED, SEED_ENV_VAR, DataError, derive_seed

__version__ = "0.1.0"

__all__ = ["DEFAULT_SEED", "SEED_ENV_VAR", "DataError", "derive_seed", "__version__"]
