"""
Flat experiment configuration files.

One ``key = value`` per line; ``#`` starts a comment line and blank lines are
ignored. Every key belongs to exactly one of PipelineConfig, Hyperparams or
ScorerConfig, except ``hidden_size`` and ``seed``, which set the scorer and the
training run alike. Values given on the command line override the file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

from errors import ConfigError
from pipeline import PipelineConfig
from scorer_util import ScorerConfig
from trainer import Hyperparams

__docformat__ = 'reStructuredText'

logger = logging.getLogger(__name__)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(convert: Callable[[str], object]) -> Callable[[str], object]:
    def wrap(text: str):
        return None if text.lower() == "none" else convert(text)
    return wrap


PIPELINE_KEYS = {
    "k": int,
    "k_prime": int,
    "top_l": int,
    "alpha": float,
    "beta": float,
    "theta": float,
    "rerank": _bool,
    "constraints": _bool,
}

TRAINING_KEYS = {
    "margin": float,
    "learning_rate": float,
    "epochs": int,
    "negatives": _optional(int),
    "freeze_pretrained": _bool,
}

SCORER_KEYS = {
    "model": str,
    "view": _optional(str),
    "variant": _optional(str),
    "embedding_dim": int,
    "window": int,
    "trigram_buckets": int,
}

SHARED_KEYS = {
    "hidden_size": int,
    "seed": int,
}

KEY_TYPES = {**PIPELINE_KEYS, **TRAINING_KEYS, **SCORER_KEYS, **SHARED_KEYS}


@dataclass
class RunConfig:
    pipeline: PipelineConfig
    hyperparams: Hyperparams
    scorer: ScorerConfig


def parse_config(lines, path: str = "<config>") -> dict[str, object]:
    """
    Typed values of a config file's lines.

    :raises ConfigError: a line without "=", an unknown or repeated key, or a
        value of the wrong type; the message names the 1-based line
    """
    values: dict[str, object] = {}
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise ConfigError(f"{path}:{line_no}: expected key = value, got {stripped!r}")
        if key not in KEY_TYPES:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        try:
            values[key] = KEY_TYPES[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: bad value for {key}: {exc}") from exc
    return values


def read_config(path: str) -> dict[str, object]:
    with open(path, encoding="utf-8") as f:
        return parse_config(f, path)


def build_config(values: Mapping[str, object]) -> RunConfig:
    """ The three config records from a key -> value mapping; missing keys keep their defaults. """
    unknown = set(values) - set(KEY_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def pick(keys):
        return {k: values[k] for k in keys if k in values}

    return RunConfig(
        pipeline=PipelineConfig(**pick(PIPELINE_KEYS)),
        hyperparams=Hyperparams(**pick(TRAINING_KEYS), **pick(SHARED_KEYS)),
        scorer=ScorerConfig(**pick(SCORER_KEYS), **pick(SHARED_KEYS)),
    )


def load_config(path: str | None = None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """ File values (if a path is given) overlaid by the non-None overrides. """
    values = read_config(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    logger.debug("configuration: %s", values)
    return build_config(values)
