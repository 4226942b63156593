"""Language registry: grammars, container kinds, and kind inventories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from astsearch.errors import EncodingError, UnsupportedLanguage
from astsearch.syntax.brace_grammar import (
    BRACE_ANON_KINDS,
    BRACE_NAMED_KINDS,
    parse_brace_language,
)
from astsearch.syntax.python_grammar import (
    PYTHON_ANON_KINDS,
    PYTHON_NAMED_KINDS,
    parse_python,
)
from astsearch.syntax.tree import RawAst


@dataclass(frozen=True)
class Grammar:
    name: str
    parse: Callable[[str], RawAst]
    container_kinds: frozenset[str]
    kind_inventory: tuple[str, ...]  # all kinds this grammar can emit, sorted


_GRAMMARS: dict[str, Grammar] = {}


def _register(grammar: Grammar, *aliases: str) -> None:
    _GRAMMARS[grammar.name] = grammar
    for alias in aliases:
        _GRAMMARS[alias] = grammar


_register(
    Grammar(
        name="python",
        parse=parse_python,
        container_kinds=frozenset({"block"}),
        kind_inventory=tuple(sorted(set(PYTHON_NAMED_KINDS) | set(PYTHON_ANON_KINDS))),
    ),
    "py",
)
_register(
    Grammar(
        name="javascript",
        parse=parse_brace_language,
        container_kinds=frozenset({"statement_block"}),
        kind_inventory=tuple(sorted(set(BRACE_NAMED_KINDS) | set(BRACE_ANON_KINDS))),
    ),
    "js",
)


def supported_languages() -> list[str]:
    return sorted({g.name for g in _GRAMMARS.values()})


def get_grammar(language: str) -> Grammar:
    grammar = _GRAMMARS.get(language.lower())
    if grammar is None:
        raise UnsupportedLanguage(
            f"no grammar registered for {language!r}; supported: {', '.join(supported_languages())}"
        )
    return grammar


def parse_source(source: str | bytes, language: str) -> RawAst:
    """Parse source text for one of the configured languages.

    Accepts bytes for convenience; they must decode as UTF-8.
    """
    grammar = get_grammar(language)
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"source is not valid UTF-8: {exc}") from exc
    return grammar.parse(source)


def container_kinds_for(language: str) -> frozenset[str]:
    return get_grammar(language).container_kinds


def kind_inventory(language: str) -> tuple[str, ...]:
    return get_grammar(language).kind_inventory
