"""Synthesis options: key=value files and command-line overrides."""
from __future__ import annotations

from collections.abc import Mapping
import logging
from pathlib import Path
from typing import Any

import voluptuous as vol

from .bpi import BpiConfig
from .const import (
    BACKEND_AUTO,
    CONF_BETA,
    CONF_BIG_M1,
    CONF_BIG_M2,
    CONF_EPS_BETA,
    CONF_EPS_FEAS,
    CONF_EPS_IMPROVE,
    CONF_EVAL_METHOD,
    CONF_LP_BACKEND,
    CONF_MAX_ITERATIONS,
    CONF_N_MAX,
    CONF_N_NEW,
    CONF_RABIN_INDEX,
    CONF_SEARCH_TIME_LIMIT,
    CONF_TIME_LIMIT,
    DEFAULT_BETA,
    DEFAULT_BIG_M,
    DEFAULT_EPS_BETA,
    DEFAULT_EPS_FEAS,
    DEFAULT_EPS_IMPROVE,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_N_MAX,
    DEFAULT_N_NEW,
    DEFAULT_RABIN_INDEX,
    DEFAULT_SEARCH_TIME_LIMIT,
    EVAL_DIRECT,
    EVAL_METHODS,
    LP_BACKENDS,
)
from .exceptions import InvalidConfig

_LOGGER = logging.getLogger(__name__)

POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_N_MAX, default=DEFAULT_N_MAX): POSITIVE_INT,
        vol.Optional(CONF_N_NEW, default=DEFAULT_N_NEW): POSITIVE_INT,
        vol.Optional(CONF_BETA, default=DEFAULT_BETA): vol.All(
            vol.Coerce(float),
            vol.Range(min=0, max=1, min_included=False, max_included=False),
        ),
        vol.Optional(CONF_EPS_BETA, default=DEFAULT_EPS_BETA): POSITIVE_FLOAT,
        vol.Optional(CONF_EPS_FEAS, default=DEFAULT_EPS_FEAS): POSITIVE_FLOAT,
        vol.Optional(CONF_EPS_IMPROVE, default=DEFAULT_EPS_IMPROVE): POSITIVE_FLOAT,
        vol.Optional(CONF_BIG_M1, default=DEFAULT_BIG_M): POSITIVE_FLOAT,
        vol.Optional(CONF_BIG_M2, default=DEFAULT_BIG_M): POSITIVE_FLOAT,
        vol.Optional(CONF_MAX_ITERATIONS, default=DEFAULT_MAX_ITERATIONS): POSITIVE_INT,
        vol.Optional(CONF_RABIN_INDEX, default=DEFAULT_RABIN_INDEX): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional(CONF_EVAL_METHOD, default=EVAL_DIRECT): vol.In(EVAL_METHODS),
        vol.Optional(CONF_LP_BACKEND, default=BACKEND_AUTO): vol.In(LP_BACKENDS),
        vol.Optional(CONF_TIME_LIMIT, default=None): vol.Any(None, POSITIVE_FLOAT),
        vol.Optional(
            CONF_SEARCH_TIME_LIMIT, default=DEFAULT_SEARCH_TIME_LIMIT
        ): POSITIVE_FLOAT,
    }
)


def parse_options(text: str) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    options: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidConfig(f"line {number}: expected key = value")
        options[key.strip()] = value.strip()
    return options


def load_config(path: Path | str) -> dict[str, str]:
    _LOGGER.debug("Loading options from %s", path)
    return parse_options(Path(path).read_text(encoding="utf-8"))


def build_config(
    options: Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> BpiConfig:
    """Validate defaults < file options < overrides into a BpiConfig."""
    merged = dict(options or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        validated = CONFIG_SCHEMA(merged)
    except vol.Invalid as err:
        raise InvalidConfig(f"Invalid configuration: {err}") from err
    return BpiConfig(**validated)
