"""Shared helpers for the versioned key-value text formats (``ee-* v1``)."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Iterable


class DataFormatError(ValueError):
    """A file (or file-like input) does not match its declared format."""

    def __init__(self, path, line: int | None, message: str):
        where = str(path)
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def write_kv(path, header: str, pairs: Iterable[tuple[str, str]]) -> None:
    lines = [header]
    lines.extend(f"{k}\t{v}" for k, v in pairs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kv(path, expected_header: str) -> list[tuple[str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != expected_header:
        raise DataFormatError(path, 1, f"expected header {expected_header!r}")
    pairs: list[tuple[str, str]] = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        k, sep, v = line.partition("\t")
        if not sep:
            raise DataFormatError(path, i, "expected key<TAB>value")
        pairs.append((k, v))
    return pairs


def parse_fraction(text: str) -> Fraction:
    """Parse a rational from decimal ('0.75') or ratio ('3/4') notation, exactly."""
    try:
        num, sep, den = text.partition("/")
        if sep and "." not in text:
            # plain integer ratio; skips the Fraction string grammar
            return Fraction(int(num), int(den))
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def format_fraction(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def parse_int(text: str, *, minimum: int | None = None) -> int:
    try:
        v = int(text.strip())
    except ValueError as exc:
        raise ValueError(f"not an integer: {text!r}") from exc
    if minimum is not None and v < minimum:
        raise ValueError(f"expected an integer >= {minimum}, got {v}")
    return v
