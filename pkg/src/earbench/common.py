"""Shared plumbing: error type, seed derivation, global defaults."""

from __future__ import annotations

import hashlib
import os

DEFAULT_SEED = 42
SEED_ENV_VAR = "EARBENCH_SEED"


class DataError(Exception):
    """An input file or dataset violates a format or content contract."""


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from mixed parts.

    Uses blake2b so the value does not depend on process hash randomization;
    the same parts always yield the same seed, across runs and workers.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def resolve_seed(explicit: int | None = None) -> int:
    """Seed precedence: explicit value > EARBENCH_SEED env var > DEFAULT_SEED."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise DataError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return DEFAULT_SEED
