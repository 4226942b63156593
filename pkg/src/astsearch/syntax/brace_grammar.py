"""Structural concrete syntax trees for brace-delimited languages.

A deliberately coarse grammar: statements are classified by their leading
keyword, `{...}` groups become statement_block nodes (the refinement
container for these languages), and `(...)`/`[...]` groups become grouped
expression nodes. Good enough to drive graph construction for JavaScript-ish
sources without a full grammar; parsing is total.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from astsearch.syntax.tree import RawAst, RawNode

_KEYWORDS = {
    "function", "class", "if", "else", "for", "while", "do", "switch",
    "case", "default", "return", "break", "continue", "const", "let", "var",
    "import", "export", "from", "new", "typeof", "instanceof", "in", "of",
    "try", "catch", "finally", "throw", "async", "await", "yield", "delete",
    "void", "this", "super", "extends", "static", "get", "set",
}

_STATEMENT_KINDS = {
    "function": "function_declaration",
    "class": "class_declaration",
    "if": "if_statement",
    "for": "for_statement",
    "while": "while_statement",
    "do": "do_statement",
    "switch": "switch_statement",
    "return": "return_statement",
    "break": "break_statement",
    "continue": "continue_statement",
    "const": "lexical_declaration",
    "let": "lexical_declaration",
    "var": "variable_declaration",
    "import": "import_statement",
    "export": "export_statement",
    "try": "try_statement",
    "throw": "throw_statement",
}

BRACE_NAMED_KINDS = sorted(
    set(_STATEMENT_KINDS.values())
    | {
        "program", "expression_statement", "statement_block",
        "parenthesized_expression", "bracket_expression", "identifier",
        "number", "string", "template_string", "regex", "ERROR",
    }
)

_PUNCT = [
    "===", "!==", ">>>=", "...", "**=", "<<=", ">>=", "&&=", "||=", "??=",
    "=>", "==", "!=", "<=", ">=", "&&", "||", "??", "++", "--", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "**", "<<", ">>", ">>>", "(", ")",
    "[", "]", "{", "}", ",", ";", ":", ".", "?", "+", "-", "*", "/", "%",
    "<", ">", "=", "!", "&", "|", "^", "~",
]

BRACE_ANON_KINDS = sorted(_KEYWORDS | set(_PUNCT))

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<template>`(?:\\.|[^`\\])*`?)
  | (?P<string>"(?:\\.|[^"\\\n])*"?|'(?:\\.|[^'\\\n])*'?)
  | (?P<number>0[xXoObB][0-9a-fA-F]+|\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+)
  | (?P<name>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<punct>""" + "|".join(re.escape(p) for p in sorted(_PUNCT, key=len, reverse=True)) + r""")
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class _Tok:
    kind: str  # leaf kind, already classified
    text: str
    start: int  # byte offset
    end: int
    line: int


def _lex(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line = 1
    byte_pos = 0
    for match in _TOKEN_RE.finditer(source):
        text = match.group(0)
        start = byte_pos
        byte_pos += len(text.encode("utf-8"))
        group = match.lastgroup
        newlines = text.count("\n")
        if group in ("ws", "comment"):
            line += newlines
            continue
        if group == "name":
            kind = text if text in _KEYWORDS else "identifier"
        elif group == "number":
            kind = "number"
        elif group == "string":
            kind = "string"
        elif group == "template":
            kind = "template_string"
        elif group == "punct":
            kind = text
        else:
            kind = "ERROR"
        toks.append(_Tok(kind, text, start, byte_pos - (0), line))
        toks[-1] = _Tok(kind, text, start, start + len(text.encode("utf-8")), line)
        line += newlines
    return toks


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = _lex(source)
        self.pos = 0
        self.nodes: list[RawNode] = []

    def _peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def _leaf_consume(self) -> int:
        tk = self.toks[self.pos]
        self.pos += 1
        node = RawNode(len(self.nodes), tk.kind, (tk.start, tk.end))
        self.nodes.append(node)
        return node.id

    def _interior(self, kind: str, children: list[int]) -> int:
        start = min(self.nodes[c].span[0] for c in children)
        end = max(self.nodes[c].span[1] for c in children)
        node = RawNode(len(self.nodes), kind, (start, end), list(children))
        self.nodes.append(node)
        return node.id

    def parse_program(self) -> RawAst:
        children = []
        while self._peek() is not None:
            children.append(self._parse_statement())
        span = (0, len(self.source.encode("utf-8")))
        root = RawNode(len(self.nodes), "program", span, children)
        self.nodes.append(root)
        return RawAst(self.nodes, root.id, self.source)

    def _parse_statement(self) -> int:
        tk = self._peek()
        if tk.kind == "{":
            return self._parse_block()
        if tk.kind == ";":
            return self._leaf_consume()
        kind = _STATEMENT_KINDS.get(tk.kind, "expression_statement")
        kids: list[int] = []
        line = tk.line
        while True:
            tk = self._peek()
            if tk is None or tk.kind == "}":
                break
            if tk.kind == ";":
                kids.append(self._leaf_consume())
                break
            if kids and tk.line > line and not self._continues_statement(tk):
                break
            line = tk.line
            if tk.kind == "{":
                kids.append(self._parse_block())
                nxt = self._peek()
                # "} else {", "} catch (e) {", "} while (cond)" keep one statement
                if nxt is not None and nxt.kind in ("else", "catch", "finally", "while"):
                    line = nxt.line
                    continue
                nxt_is_semi = nxt is not None and nxt.kind == ";"
                if nxt_is_semi:
                    kids.append(self._leaf_consume())
                break
            elif tk.kind == "(":
                kids.append(self._parse_group(")", "parenthesized_expression"))
            elif tk.kind == "[":
                kids.append(self._parse_group("]", "bracket_expression"))
            elif tk.kind in (")", "]"):
                kids.append(self._leaf_consume())  # unbalanced; keep total
            else:
                kids.append(self._leaf_consume())
        if not kids:
            anchor = self._peek()
            span = (anchor.start, anchor.start) if anchor else (0, 0)
            node = RawNode(len(self.nodes), "ERROR", span)
            self.nodes.append(node)
            if anchor is not None:
                self.pos += 1
            return node.id
        return self._interior(kind, kids)

    def _continues_statement(self, tk: _Tok) -> bool:
        """ASI heuristic: operators and group openers extend the previous line."""
        return tk.kind in (
            ".", "+", "-", "*", "/", "=", "==", "===", "&&", "||", "??", "?",
            ":", ",", "=>", "(", "[", "else", "catch", "finally",
        )

    def _parse_block(self) -> int:
        kids = [self._leaf_consume()]  # "{"
        while True:
            tk = self._peek()
            if tk is None:
                break
            if tk.kind == "}":
                kids.append(self._leaf_consume())
                break
            kids.append(self._parse_statement())
        return self._interior("statement_block", kids)

    def _parse_group(self, close: str, kind: str) -> int:
        kids = [self._leaf_consume()]  # opener
        while True:
            tk = self._peek()
            if tk is None:
                break
            if tk.kind == close:
                kids.append(self._leaf_consume())
                break
            if tk.kind == "{":
                kids.append(self._parse_block())
            elif tk.kind == "(":
                kids.append(self._parse_group(")", "parenthesized_expression"))
            elif tk.kind == "[":
                kids.append(self._parse_group("]", "bracket_expression"))
            elif tk.kind == "}":
                break  # unbalanced: let the enclosing block close
            else:
                kids.append(self._leaf_consume())
        return self._interior(kind, kids)


def parse_brace_language(source: str) -> RawAst:
    """Parse a brace-delimited source into a total structural syntax tree."""
    return _Parser(source).parse_program()
