"""Enumeration caps.

All exhaustive enumerations in the package (path spaces, product outcome
spaces, grouped convolution states) are guarded by a cap and raise
:class:`~lecam.errors.SizeLimit` beyond it.  The environment variable
``LECAM_MAX_PATHS`` overrides every cap at once; individual call sites can
also pass an explicit bound.
"""

from __future__ import annotations

import os

from .errors import InvalidParams

#: Full path enumeration (roughly 2^22 binary steps, 3^14 ternary steps).
DEFAULT_MAX_PATHS = 5_000_000

#: Outcome count of product experiments.
DEFAULT_MAX_OUTCOMES = 1 << 24

#: Grouped states in terminal-value / convolution laws.
DEFAULT_MAX_STATES = 10_000_000

ENV_VAR = "LECAM_MAX_PATHS"


def _env_override() -> int | None:
    raw = os.environ.get(ENV_VAR)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError as exc:
        raise InvalidParams(f"{ENV_VAR} must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise InvalidParams(f"{ENV_VAR} must be positive, got {value}")
    return value


def _resolve(given: int | None, default: int) -> int:
    if given is not None:
        if given <= 0:
            raise InvalidParams(f"cap must be positive, got {given}")
        return given
    override = _env_override()
    return default if override is None else override


def max_paths(given: int | None = None) -> int:
    return _resolve(given, DEFAULT_MAX_PATHS)


def max_product_outcomes(given: int | None = None) -> int:
    return _resolve(given, DEFAULT_MAX_OUTCOMES)


def max_states(given: int | None = None) -> int:
    return _resolve(given, DEFAULT_MAX_STATES)
