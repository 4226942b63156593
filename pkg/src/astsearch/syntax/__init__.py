from astsearch.syntax.tree import RawAst, RawNode, RefinedAst, RefinedNode
from astsearch.syntax.languages import (
    container_kinds_for,
    kind_inventory,
    parse_source,
    supported_languages,
)

__all__ = [
    "RawAst",
    "RawNode",
    "RefinedAst",
    "RefinedNode",
    "container_kinds_for",
    "kind_inventory",
    "parse_source",
    "supported_languages",
]
