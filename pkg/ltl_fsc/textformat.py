"""Sectioned plain-text grammar shared by the model, automaton and controller files.

A file is a sequence of sections. A section starts with an unindented header
``name:`` that may carry inline tokens on the same line; every following
indented line is an entry of that section. Blank lines and lines starting with
``#`` are ignored. Probabilities are written with ``repr`` so that a parsed
file serializes back to the identical text.
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

from .exceptions import ModelParseError


@dataclass
class Section:
    """One header with its inline tokens and entry lines"""

    name: str
    line: int
    inline: list[str] = field(default_factory=list)
    entries: list[tuple[int, str]] = field(default_factory=list)


def parse_sections(text: str, allowed: Iterable[str]) -> list[Section]:
    """Split text into sections, rejecting unknown headers."""
    allowed = set(allowed)
    sections: list[Section] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if raw[0].isspace():
            if not sections:
                raise ModelParseError("entry before any section header", number)
            sections[-1].entries.append((number, raw.strip()))
            continue
        name, sep, rest = raw.partition(":")
        name = name.strip()
        if not sep:
            raise ModelParseError(f"expected 'header:' but got {raw!r}", number)
        if name not in allowed:
            raise ModelParseError(f"unknown section {name!r}", number)
        sections.append(Section(name, number, rest.split()))
    return sections


def unique_sections(
    sections: list[Section], required: Iterable[str]
) -> dict[str, Section]:
    """Index sections by name, each at most once, required ones present."""
    by_name: dict[str, Section] = {}
    for section in sections:
        if section.name in by_name:
            raise ModelParseError(f"duplicate section {section.name!r}", section.line)
        by_name[section.name] = section
    for name in required:
        if name not in by_name:
            raise ModelParseError(f"missing section {name!r}")
    return by_name


def split_entry(entry: str, line: int) -> tuple[list[str], str]:
    """Split ``lhs tokens : rhs`` into the lhs tokens and the raw rhs."""
    lhs, sep, rhs = entry.partition(":")
    if not sep:
        raise ModelParseError(f"expected ':' in {entry!r}", line)
    return lhs.split(), rhs.strip()


def parse_float(token: str, line: int) -> float:
    """Parse a decimal literal."""
    try:
        return float(token)
    except ValueError as err:
        raise ModelParseError(f"invalid number {token!r}", line) from err


def lookup(names: dict[str, int], token: str, kind: str, line: int) -> int:
    """Resolve a declared name to its index."""
    if token not in names:
        raise ModelParseError(f"undeclared {kind} {token!r}", line)
    return names[token]


def index_names(tokens: list[str], kind: str, line: int) -> dict[str, int]:
    """Map declared names to positions, rejecting duplicates."""
    names: dict[str, int] = {}
    for token in tokens:
        if token in names:
            raise ModelParseError(f"duplicate {kind} {token!r}", line)
        names[token] = len(names)
    return names


def format_float(value: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(value))


def header(name: str, tokens: Iterable[str] = ()) -> str:
    """Format a section header with optional inline tokens."""
    tokens = list(tokens)
    return f"{name}: {' '.join(tokens)}" if tokens else f"{name}:"
