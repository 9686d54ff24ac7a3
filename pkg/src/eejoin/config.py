"""Run configuration: a flat set of ``key=value`` settings.

Settings come from defaults, then an optional config file, then explicit
``--set`` overrides, later sources winning.  Unknown keys are rejected
rather than ignored so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .costs import Objective
from .indexing import IndexScheme
from .plans import SignatureKind, SignatureScheme
from .text import DEFAULT_VARIANT_CAP, Predicate, WeightingScheme


class ConfigError(ValueError):
    """A config file or override that cannot be applied."""


@dataclass(frozen=True)
class RunConfig:
    gamma: Fraction = Fraction(3, 4)
    predicate: Predicate = Predicate.EXTRA
    weighting: WeightingScheme = WeightingScheme.UNIT
    idf_scale: int = 10
    ordering: str = "frequency"
    mappers: int = 4
    reducers: int = 4
    memory_budget: int = 64 * 1024 * 1024
    sample_rate: Fraction = Fraction(1)
    seed: int = 42
    lsh_bands: int = 16
    lsh_rows: int = 4
    variant_cap: int = DEFAULT_VARIANT_CAP
    max_group_size: int = 1_000_000
    objective: Objective = Objective.JOB_COMPLETION
    index_schemes: tuple[IndexScheme, ...] = (
        IndexScheme.PER_WORD,
        IndexScheme.PREFIX,
        IndexScheme.JACCARD_VARIANT,
    )
    signature_kinds: tuple[SignatureKind, ...] = (
        SignatureKind.SINGLE_WORD,
        SignatureKind.PREFIX,
        SignatureKind.LSH,
        SignatureKind.JACCARD_VARIANT,
    )

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0 < self.sample_rate <= 1:
            raise ConfigError(f"sample_rate must be in (0, 1], got {self.sample_rate}")
        for name in ("idf_scale", "mappers", "reducers", "memory_budget",
                     "lsh_bands", "lsh_rows", "variant_cap", "max_group_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.ordering not in ("frequency", "identity"):
            raise ConfigError(
                f"ordering must be 'frequency' or 'identity', got {self.ordering!r}"
            )

    def signature_schemes(self) -> tuple[SignatureScheme, ...]:
        return tuple(
            SignatureScheme(kind, bands=self.lsh_bands, rows=self.lsh_rows, seed=self.seed)
            if kind is SignatureKind.LSH
            else SignatureScheme(kind)
            for kind in self.signature_kinds
        )


def _parse_value(key: str, value: str):
    value = value.strip()
    try:
        if key in ("gamma", "sample_rate"):
            return Fraction(value)
        if key in ("idf_scale", "mappers", "reducers", "memory_budget", "seed",
                   "lsh_bands", "lsh_rows", "variant_cap", "max_group_size"):
            return int(value)
        if key == "predicate":
            return Predicate(value)
        if key == "weighting":
            return WeightingScheme(value)
        if key == "objective":
            return Objective(value)
        if key == "ordering":
            return value
        if key == "index_schemes":
            return tuple(IndexScheme(v.strip()) for v in value.split(",") if v.strip())
        if key == "signature_kinds":
            return tuple(SignatureKind(v.strip()) for v in value.split(",") if v.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
    raise ConfigError(f"unknown config key {key!r}")


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _apply(config: RunConfig, key: str, value: str) -> RunConfig:
    key = key.strip()
    if key not in _FIELD_NAMES:
        raise ConfigError(f"unknown config key {key!r}")
    return replace(config, **{key: _parse_value(key, value)})


def load_config(
    path=None, overrides: Sequence[str] = (), base: RunConfig | None = None
) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides."""
    config = base if base is not None else RunConfig()
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            config = _apply(config, key, value)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must be key=value, got {item!r}")
        config = _apply(config, key, value)
    return config
