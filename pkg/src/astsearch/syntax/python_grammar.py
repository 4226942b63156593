"""Concrete syntax trees for Python source.

Built on the stdlib tokenizer plus a recursive-descent grammar. The output
mirrors the usual multi-language CST shape: every keyword and punctuation
token is its own leaf node whose kind equals its text (an "anonymous" node),
named nodes carry grammar-rule kinds ("function_definition", "block", ...),
and spans are byte ranges into the UTF-8 source. Parsing is total: malformed
regions become "ERROR" nodes holding the raw tokens, never an exception.
"""

from __future__ import annotations

import io
import token as toktype
import tokenize
from dataclasses import dataclass

from astsearch.syntax.tree import RawAst, RawNode

# Leaf kinds produced for non-anonymous tokens.
_KEYWORD_CONSTANTS = {"True": "true", "False": "false", "None": "none"}

_KEYWORDS = {
    "def", "class", "if", "elif", "else", "for", "while", "try", "except",
    "finally", "with", "as", "return", "raise", "pass", "break", "continue",
    "import", "from", "in", "is", "not", "and", "or", "lambda", "global",
    "nonlocal", "assert", "del", "yield", "await", "async",
}

_AUGMENTED_OPS = {
    "+=", "-=", "*=", "/=", "//=", "%=", "@=", "**=", "<<=", ">>=", "&=",
    "|=", "^=",
}

# (precedence, right-associative, node kind); higher binds tighter.
_BINARY_OPS: dict[str, tuple[int, bool, str]] = {
    "or": (4, False, "boolean_operator"),
    "and": (5, False, "boolean_operator"),
    "in": (10, False, "comparison_operator"),
    "is": (10, False, "comparison_operator"),
    "<": (10, False, "comparison_operator"),
    ">": (10, False, "comparison_operator"),
    "==": (10, False, "comparison_operator"),
    "!=": (10, False, "comparison_operator"),
    "<=": (10, False, "comparison_operator"),
    ">=": (10, False, "comparison_operator"),
    "|": (20, False, "binary_operator"),
    "^": (21, False, "binary_operator"),
    "&": (22, False, "binary_operator"),
    "<<": (23, False, "binary_operator"),
    ">>": (23, False, "binary_operator"),
    "+": (30, False, "binary_operator"),
    "-": (30, False, "binary_operator"),
    "*": (31, False, "binary_operator"),
    "/": (31, False, "binary_operator"),
    "//": (31, False, "binary_operator"),
    "%": (31, False, "binary_operator"),
    "@": (31, False, "binary_operator"),
    "**": (50, True, "binary_operator"),
}

_PREC_COMPARISON = 10
_PREC_AFTER_COMPARISON = 11

PYTHON_NAMED_KINDS = [
    "ERROR", "aliased_import", "argument_list", "assert_statement",
    "assignment", "attribute", "augmented_assignment", "await",
    "binary_operator", "block", "boolean_operator", "break_statement",
    "call", "class_definition", "comparison_operator", "concatenated_string",
    "conditional_expression", "continue_statement", "decorated_definition",
    "decorator", "default_parameter", "delete_statement", "dictionary",
    "dictionary_comprehension", "dictionary_splat", "dictionary_splat_pattern",
    "dotted_name", "elif_clause", "ellipsis", "else_clause",
    "except_clause", "expression_list", "expression_statement", "false",
    "finally_clause", "float", "for_in_clause", "for_statement",
    "function_definition", "generator_expression", "global_statement",
    "identifier", "if_clause", "if_statement", "import_from_statement",
    "import_statement", "integer", "keyword_argument", "lambda",
    "lambda_parameters", "list", "list_comprehension", "list_splat",
    "list_splat_pattern", "module", "named_expression", "none",
    "nonlocal_statement", "not_operator", "pair", "parameters",
    "parenthesized_expression", "pass_statement", "raise_statement",
    "return_statement", "set", "set_comprehension", "slice", "string",
    "subscript", "true", "try_statement", "tuple", "typed_default_parameter",
    "typed_parameter", "unary_operator", "while_statement", "wildcard_import",
    "with_item", "with_statement", "yield",
]

PYTHON_ANON_KINDS = sorted(
    _KEYWORDS
    | _AUGMENTED_OPS
    | set(_BINARY_OPS)
    | {
        "(", ")", "[", "]", "{", "}", ",", ":", ";", ".", "=", ":=", "->",
        "*", "**", "~", "+", "-", "@", "...", "/",
    }
)


@dataclass
class _Tok:
    type: int
    text: str
    start: int  # byte offset
    end: int    # byte offset


class _ParseFailure(Exception):
    """Internal signal: the current statement cannot be parsed; recover."""


def _byte_offsets(source: str) -> list[int]:
    """Byte offset of the start of each physical line (1-based rows)."""
    offsets = [0]
    for line in source.splitlines(keepends=True):
        offsets.append(offsets[-1] + len(line.encode("utf-8")))
    return offsets


def _lex(source: str) -> list[_Tok]:
    """Tokenize, converting (row, col) positions to byte offsets.

    Tokenizer failures (unterminated strings, bad indentation) truncate the
    stream; whatever remains of the source is appended as a single ERRORTOKEN
    so the parser can fold it into an ERROR node.
    """
    line_offsets = _byte_offsets(source)
    lines = source.splitlines(keepends=True)
    total = len(source.encode("utf-8"))

    def to_byte(row: int, col: int) -> int:
        if row - 1 >= len(lines):
            return total
        base = line_offsets[row - 1]
        return min(base + len(lines[row - 1][:col].encode("utf-8")), total)

    keep = (
        toktype.NAME, toktype.OP, toktype.NUMBER, toktype.STRING,
        toktype.NEWLINE, toktype.INDENT, toktype.DEDENT, toktype.ERRORTOKEN,
    )
    toks: list[_Tok] = []
    gen = tokenize.generate_tokens(io.StringIO(source).readline)
    try:
        for tk in gen:
            if tk.type not in keep:
                continue
            start = to_byte(*tk.start)
            end = to_byte(*tk.end)
            toks.append(_Tok(tk.type, tk.string, start, end))
    except (tokenize.TokenError, IndentationError, SyntaxError):
        tail_start = toks[-1].end if toks else 0
        if source.encode("utf-8")[tail_start:].strip():
            toks.append(_Tok(toktype.ERRORTOKEN, "", tail_start, total))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = _lex(source)
        self.pos = 0
        self.nodes: list[RawNode] = []

    # --- token helpers -------------------------------------------------

    def _peek(self, ahead: int = 0) -> _Tok | None:
        i = self.pos + ahead
        return self.toks[i] if i < len(self.toks) else None

    def _at_end(self) -> bool:
        return self.pos >= len(self.toks)

    def _at(self, text: str) -> bool:
        tk = self._peek()
        return tk is not None and tk.type in (toktype.OP, toktype.NAME) and tk.text == text

    def _at_type(self, ttype: int) -> bool:
        tk = self._peek()
        return tk is not None and tk.type == ttype

    def _advance(self) -> _Tok:
        tk = self.toks[self.pos]
        self.pos += 1
        return tk

    # --- node construction ----------------------------------------------

    def _leaf(self, kind: str, span: tuple[int, int]) -> int:
        node = RawNode(len(self.nodes), kind, span)
        self.nodes.append(node)
        return node.id

    def _token_leaf(self, tk: _Tok) -> int:
        """Leaf for a consumed token; keywords and punctuation are anonymous."""
        if tk.type == toktype.NAME:
            kind = _KEYWORD_CONSTANTS.get(tk.text)
            if kind is None:
                kind = tk.text if tk.text in _KEYWORDS else "identifier"
        elif tk.type == toktype.NUMBER:
            kind = _classify_number(tk.text)
        elif tk.type == toktype.STRING:
            kind = "string"
        elif tk.type == toktype.ERRORTOKEN:
            kind = "ERROR"
        else:
            kind = tk.text
        return self._leaf(kind, (tk.start, tk.end))

    def _consume(self) -> int:
        return self._token_leaf(self._advance())

    def _expect(self, text: str) -> int:
        if not self._at(text):
            raise _ParseFailure(f"expected {text!r}")
        return self._consume()

    def _interior(self, kind: str, children: list[int]) -> int:
        start = min(self.nodes[c].span[0] for c in children)
        end = max(self.nodes[c].span[1] for c in children)
        node = RawNode(len(self.nodes), kind, (start, end), list(children))
        self.nodes.append(node)
        return node.id

    # --- statements -----------------------------------------------------

    def parse_module(self) -> RawAst:
        children = self._parse_statements(top_level=True)
        span = (0, len(self.source.encode("utf-8")))
        root = RawNode(len(self.nodes), "module", span, children)
        self.nodes.append(root)
        return RawAst(self.nodes, root.id, self.source)

    def _parse_statements(self, top_level: bool = False) -> list[int]:
        """Statement sequence until DEDENT (block) or EOF (module)."""
        out: list[int] = []
        while not self._at_end():
            tk = self._peek()
            if tk.type == toktype.DEDENT:
                if top_level:
                    self.pos += 1
                    continue
                break
            if tk.type == toktype.NEWLINE:
                self.pos += 1
                continue
            if tk.type == toktype.INDENT:
                # Unexpected indentation: flatten the over-indented region.
                self.pos += 1
                out.extend(self._parse_statements())
                if self._at_type(toktype.DEDENT):
                    self.pos += 1
                continue
            if self._at(";"):
                out.append(self._consume())
                continue
            out.append(self._statement_with_recovery())
        return out

    def _statement_with_recovery(self) -> int:
        mark = len(self.nodes)
        pos0 = self.pos
        try:
            return self._parse_statement()
        except _ParseFailure:
            del self.nodes[mark:]
            self.pos = pos0
            return self._error_statement()

    def _error_statement(self) -> int:
        """Consume through the next statement boundary into an ERROR node."""
        children: list[int] = []
        while not self._at_end():
            tk = self._peek()
            if tk.type in (toktype.NEWLINE, toktype.DEDENT):
                break
            if tk.type == toktype.INDENT:
                self.pos += 1
                continue
            children.append(self._consume())
        if self._at_type(toktype.NEWLINE):
            self.pos += 1
        if not children:
            anchor = self._peek()
            span = (anchor.start, anchor.start) if anchor else (0, 0)
            if anchor is not None:
                self.pos += 1
            return self._leaf("ERROR", span)
        return self._interior("ERROR", children)

    def _parse_statement(self) -> int:
        tk = self._peek()
        if tk is None:
            raise _ParseFailure("unexpected end of input")
        if tk.type == toktype.NAME:
            handler = {
                "def": self._parse_function_definition,
                "class": self._parse_class_definition,
                "if": self._parse_if_statement,
                "for": self._parse_for_statement,
                "while": self._parse_while_statement,
                "try": self._parse_try_statement,
                "with": self._parse_with_statement,
                "async": self._parse_async_statement,
            }.get(tk.text)
            if handler is not None:
                return handler()
        if self._at("@"):
            return self._parse_decorated_definition()
        node = self._parse_simple_statement()
        self._end_simple_statement()
        return node

    def _end_simple_statement(self) -> None:
        if self._at_type(toktype.NEWLINE):
            self.pos += 1

    def _parse_simple_statement(self) -> int:
        tk = self._peek()
        if tk is None:
            raise _ParseFailure("unexpected end of input")
        if tk.type == toktype.NAME:
            text = tk.text
            if text == "return":
                kids = [self._consume()]
                if self._starts_expression():
                    kids.append(self._parse_expression_list())
                return self._interior("return_statement", kids)
            if text in ("pass", "break", "continue"):
                return self._interior(f"{text}_statement", [self._consume()])
            if text == "raise":
                kids = [self._consume()]
                if self._starts_expression():
                    kids.append(self._parse_expression())
                    if self._at("from"):
                        kids.append(self._consume())
                        kids.append(self._parse_expression())
                return self._interior("raise_statement", kids)
            if text == "import":
                return self._parse_import_statement()
            if text == "from":
                return self._parse_import_from_statement()
            if text in ("global", "nonlocal"):
                kids = [self._consume(), self._parse_identifier()]
                while self._at(","):
                    kids.append(self._consume())
                    kids.append(self._parse_identifier())
                return self._interior(f"{text}_statement", kids)
            if text == "assert":
                kids = [self._consume(), self._parse_expression()]
                if self._at(","):
                    kids.append(self._consume())
                    kids.append(self._parse_expression())
                return self._interior("assert_statement", kids)
            if text == "del":
                return self._interior(
                    "delete_statement", [self._consume(), self._parse_expression_list()]
                )
            if text == "yield":
                return self._interior("expression_statement", [self._parse_yield()])
        return self._parse_expression_statement()

    def _parse_expression_statement(self) -> int:
        left = self._parse_expression_list()
        if self._at(":") :
            # Annotated assignment: target ":" type ["=" value]
            kids = [left, self._consume(), self._parse_expression()]
            if self._at("="):
                kids.append(self._consume())
                kids.append(self._parse_expression_list())
            return self._interior("expression_statement", [self._interior("assignment", kids)])
        node = left
        tk = self._peek()
        if self._at("="):
            kids = [node, self._consume(), self._parse_assignment_rhs()]
            node = self._interior("assignment", kids)
        elif tk is not None and tk.type == toktype.OP and tk.text in _AUGMENTED_OPS:
            kids = [node, self._consume(), self._parse_expression_list()]
            node = self._interior("augmented_assignment", kids)
        return self._interior("expression_statement", [node])

    def _parse_assignment_rhs(self) -> int:
        value = self._parse_expression_list()
        if self._at("="):
            kids = [value, self._consume(), self._parse_assignment_rhs()]
            return self._interior("assignment", kids)
        return value

    def _parse_import_statement(self) -> int:
        kids = [self._expect("import"), self._parse_import_name()]
        while self._at(","):
            kids.append(self._consume())
            kids.append(self._parse_import_name())
        return self._interior("import_statement", kids)

    def _parse_import_from_statement(self) -> int:
        kids = [self._expect("from")]
        while self._at(".") or self._at("..."):
            kids.append(self._consume())
        if not self._at("import"):
            kids.append(self._parse_dotted_name())
        kids.append(self._expect("import"))
        if self._at("*"):
            kids.append(self._interior("wildcard_import", [self._consume()]))
            return self._interior("import_from_statement", kids)
        parens = self._at("(")
        if parens:
            kids.append(self._consume())
        kids.append(self._parse_import_name())
        while self._at(","):
            kids.append(self._consume())
            if parens and self._at(")"):
                break
            kids.append(self._parse_import_name())
        if parens:
            kids.append(self._expect(")"))
        return self._interior("import_from_statement", kids)

    def _parse_import_name(self) -> int:
        name = self._parse_dotted_name()
        if self._at("as"):
            return self._interior("aliased_import", [name, self._consume(), self._parse_identifier()])
        return name

    def _parse_dotted_name(self) -> int:
        kids = [self._parse_identifier()]
        while self._at("."):
            kids.append(self._consume())
            kids.append(self._parse_identifier())
        return self._interior("dotted_name", kids) if len(kids) > 1 else kids[0]

    def _parse_identifier(self) -> int:
        tk = self._peek()
        if tk is None or tk.type != toktype.NAME or tk.text in _KEYWORDS:
            raise _ParseFailure("expected identifier")
        return self._consume()

    # --- compound statements ---------------------------------------------

    def _parse_async_statement(self) -> int:
        nxt = self._peek(1)
        if nxt is not None and nxt.type == toktype.NAME and nxt.text in ("def", "for", "with"):
            async_tok = self._consume()
            inner = {
                "def": self._parse_function_definition,
                "for": self._parse_for_statement,
                "with": self._parse_with_statement,
            }[nxt.text](prefix=[async_tok])
            return inner
        return self._parse_expression_statement()

    def _parse_function_definition(self, prefix: list[int] | None = None) -> int:
        kids = list(prefix or [])
        kids.append(self._expect("def"))
        kids.append(self._parse_identifier())
        kids.append(self._parse_parameters())
        if self._at("->"):
            kids.append(self._consume())
            kids.append(self._parse_expression())
        kids.append(self._expect(":"))
        kids.append(self._parse_block())
        return self._interior("function_definition", kids)

    def _parse_parameters(self) -> int:
        kids = [self._expect("(")]
        while not self._at(")"):
            kids.append(self._parse_parameter())
            if self._at(","):
                kids.append(self._consume())
            elif not self._at(")"):
                raise _ParseFailure("expected ',' or ')' in parameters")
        kids.append(self._consume())
        return self._interior("parameters", kids)

    def _parse_parameter(self, allow_annotation: bool = True) -> int:
        if self._at("*") or self._at("**"):
            splat = self._consume()
            kind = "list_splat_pattern" if self.nodes[splat].kind == "*" else "dictionary_splat_pattern"
            if self._at(",") or self._at(")"):
                return splat  # bare "*" keyword-only marker
            kids = [splat, self._parse_identifier()]
            if allow_annotation and self._at(":"):
                kids.append(self._consume())
                kids.append(self._parse_expression())
            return self._interior(kind, kids)
        if self._at("/"):
            return self._consume()
        name = self._parse_identifier()
        annotated = allow_annotation and self._at(":")
        kids = [name]
        if annotated:
            kids.append(self._consume())
            kids.append(self._parse_expression())
        if self._at("="):
            kids.append(self._consume())
            kids.append(self._parse_expression())
            kind = "typed_default_parameter" if annotated else "default_parameter"
            return self._interior(kind, kids)
        if annotated:
            return self._interior("typed_parameter", kids)
        return name

    def _parse_class_definition(self) -> int:
        kids = [self._expect("class"), self._parse_identifier()]
        if self._at("("):
            kids.append(self._parse_argument_list())
        kids.append(self._expect(":"))
        kids.append(self._parse_block())
        return self._interior("class_definition", kids)

    def _parse_decorated_definition(self) -> int:
        kids = []
        while self._at("@"):
            deco = [self._consume(), self._parse_expression()]
            kids.append(self._interior("decorator", deco))
            if self._at_type(toktype.NEWLINE):
                self.pos += 1
        kids.append(self._parse_statement())
        return self._interior("decorated_definition", kids)

    def _parse_if_statement(self) -> int:
        kids = [self._expect("if"), self._parse_expression(), self._expect(":"), self._parse_block()]
        while self._at("elif"):
            clause = [self._consume(), self._parse_expression(), self._expect(":"), self._parse_block()]
            kids.append(self._interior("elif_clause", clause))
        if self._at("else"):
            kids.append(self._parse_else_clause())
        return self._interior("if_statement", kids)

    def _parse_else_clause(self) -> int:
        return self._interior("else_clause", [self._expect("else"), self._expect(":"), self._parse_block()])

    def _parse_for_statement(self, prefix: list[int] | None = None) -> int:
        kids = list(prefix or [])
        kids.append(self._expect("for"))
        kids.append(self._parse_target_list())
        kids.append(self._expect("in"))
        kids.append(self._parse_expression_list())
        kids.append(self._expect(":"))
        kids.append(self._parse_block())
        if self._at("else"):
            kids.append(self._parse_else_clause())
        return self._interior("for_statement", kids)

    def _parse_while_statement(self) -> int:
        kids = [self._expect("while"), self._parse_expression(), self._expect(":"), self._parse_block()]
        if self._at("else"):
            kids.append(self._parse_else_clause())
        return self._interior("while_statement", kids)

    def _parse_try_statement(self) -> int:
        kids = [self._expect("try"), self._expect(":"), self._parse_block()]
        saw_handler = False
        while self._at("except"):
            saw_handler = True
            clause = [self._consume()]
            if self._starts_expression():
                clause.append(self._parse_expression())
                if self._at("as"):
                    clause.append(self._consume())
                    clause.append(self._parse_identifier())
            clause.append(self._expect(":"))
            clause.append(self._parse_block())
            kids.append(self._interior("except_clause", clause))
        if self._at("else"):
            kids.append(self._parse_else_clause())
        if self._at("finally"):
            clause = [self._consume(), self._expect(":"), self._parse_block()]
            kids.append(self._interior("finally_clause", clause))
            saw_handler = True
        if not saw_handler:
            raise _ParseFailure("try without except/finally")
        return self._interior("try_statement", kids)

    def _parse_with_statement(self, prefix: list[int] | None = None) -> int:
        kids = list(prefix or [])
        kids.append(self._expect("with"))
        kids.append(self._parse_with_item())
        while self._at(","):
            kids.append(self._consume())
            kids.append(self._parse_with_item())
        kids.append(self._expect(":"))
        kids.append(self._parse_block())
        return self._interior("with_statement", kids)

    def _parse_with_item(self) -> int:
        kids = [self._parse_expression()]
        if self._at("as"):
            kids.append(self._consume())
            kids.append(self._parse_expression())
        return self._interior("with_item", kids)

    def _parse_block(self) -> int:
        """Indented suite, or inline simple statements after the colon."""
        if self._at_type(toktype.NEWLINE):
            self.pos += 1
            if not self._at_type(toktype.INDENT):
                raise _ParseFailure("expected indented block")
            self.pos += 1
            stmts = self._parse_statements()
            if self._at_type(toktype.DEDENT):
                self.pos += 1
            if not stmts:
                raise _ParseFailure("empty block")
            return self._interior("block", stmts)
        stmts = [self._parse_simple_statement()]
        while self._at(";"):
            stmts.append(self._consume())
            if self._at_type(toktype.NEWLINE) or self._at_end():
                break
            stmts.append(self._parse_simple_statement())
        self._end_simple_statement()
        return self._interior("block", stmts)

    # --- expressions -----------------------------------------------------

    def _starts_expression(self) -> bool:
        tk = self._peek()
        if tk is None or tk.type in (toktype.NEWLINE, toktype.INDENT, toktype.DEDENT):
            return False
        if tk.type in (toktype.NUMBER, toktype.STRING):
            return True
        if tk.type == toktype.NAME:
            return tk.text not in (_KEYWORDS - {"not", "lambda", "await", "yield"}) or tk.text in (
                "not", "lambda", "await", "yield",
            )
        return tk.type == toktype.OP and tk.text in ("(", "[", "{", "-", "+", "~", "*", "**", "...")

    def _parse_expression_list(self) -> int:
        first = self._parse_expression()
        if not self._at(","):
            return first
        kids = [first]
        while self._at(","):
            kids.append(self._consume())
            if not self._starts_expression():
                break
            kids.append(self._parse_expression())
        return self._interior("expression_list", kids)

    def _parse_target_list(self) -> int:
        """Loop/comprehension targets; stops before 'in'."""
        first = self._parse_binary(_PREC_AFTER_COMPARISON)
        if not self._at(","):
            return first
        kids = [first]
        while self._at(","):
            kids.append(self._consume())
            if self._at("in") or not self._starts_expression():
                break
            kids.append(self._parse_binary(_PREC_AFTER_COMPARISON))
        return self._interior("expression_list", kids)

    def _parse_expression(self) -> int:
        if self._at("lambda"):
            return self._parse_lambda()
        if self._at("yield"):
            return self._parse_yield()
        node = self._parse_binary(0)
        if self._at("if"):
            kids = [node, self._consume(), self._parse_binary(0)]
            if self._at("else"):
                kids.append(self._consume())
                kids.append(self._parse_expression())
            node = self._interior("conditional_expression", kids)
        if self._at(":="):
            kids = [node, self._consume(), self._parse_expression()]
            node = self._interior("named_expression", kids)
        return node

    def _parse_lambda(self) -> int:
        kids = [self._expect("lambda")]
        params = []
        while not self._at(":") and not self._at_end():
            # lambda parameters cannot carry annotations; ":" ends the list
            params.append(self._parse_parameter(allow_annotation=False))
            if self._at(","):
                params.append(self._consume())
        if params:
            kids.append(self._interior("lambda_parameters", params))
        kids.append(self._expect(":"))
        kids.append(self._parse_expression())
        return self._interior("lambda", kids)

    def _parse_yield(self) -> int:
        kids = [self._expect("yield")]
        if self._at("from"):
            kids.append(self._consume())
            kids.append(self._parse_expression())
        elif self._starts_expression():
            kids.append(self._parse_expression_list())
        return self._interior("yield", kids)

    def _parse_binary(self, min_prec: int) -> int:
        left = self._parse_unary()
        while True:
            tk = self._peek()
            if tk is None or tk.type not in (toktype.OP, toktype.NAME):
                return left
            text = tk.text
            # Two-token operators: "not in", "is not".
            if text == "not" and self._peek(1) is not None and self._peek(1).text == "in":
                entry = _BINARY_OPS["in"]
                extra = 2
            elif text == "is" and self._peek(1) is not None and self._peek(1).text == "not":
                entry = _BINARY_OPS["is"]
                extra = 2
            elif text in _BINARY_OPS:
                entry = _BINARY_OPS[text]
                extra = 1
            else:
                return left
            prec, right_assoc, kind = entry
            if prec < min_prec:
                return left
            ops = [self._consume() for _ in range(extra)]
            right = self._parse_binary(prec if right_assoc else prec + 1)
            left = self._interior(kind, [left, *ops, right])

    def _parse_unary(self) -> int:
        if self._at("not"):
            return self._interior("not_operator", [self._consume(), self._parse_binary(6)])
        if self._at("-") or self._at("+") or self._at("~"):
            return self._interior("unary_operator", [self._consume(), self._parse_binary(32)])
        if self._at("await"):
            return self._interior("await", [self._consume(), self._parse_binary(40)])
        if self._at("*") or self._at("**"):
            splat = self._consume()
            kind = "list_splat" if self.nodes[splat].kind == "*" else "dictionary_splat"
            return self._interior(kind, [splat, self._parse_binary(40)])
        return self._parse_postfix()

    def _parse_postfix(self) -> int:
        node = self._parse_atom()
        while True:
            if self._at("("):
                node = self._interior("call", [node, self._parse_argument_list()])
            elif self._at("["):
                kids = [node, self._consume(), self._parse_slice()]
                kids.append(self._expect("]"))
                node = self._interior("subscript", kids)
            elif self._at("."):
                node = self._interior("attribute", [node, self._consume(), self._parse_identifier()])
            else:
                return node

    def _parse_slice(self) -> int:
        kids: list[int] = []
        sliced = False
        while not self._at("]") and not self._at_end():
            if self._at(":"):
                sliced = True
                kids.append(self._consume())
            elif self._at(","):
                kids.append(self._consume())
            else:
                kids.append(self._parse_expression())
        if not kids:
            raise _ParseFailure("empty subscript")
        if sliced:
            return self._interior("slice", kids)
        return kids[0] if len(kids) == 1 else self._interior("expression_list", kids)

    def _parse_argument_list(self) -> int:
        kids = [self._expect("(")]
        while not self._at(")"):
            kids.append(self._parse_argument())
            if self._at(","):
                kids.append(self._consume())
            elif not self._at(")"):
                raise _ParseFailure("expected ',' or ')' in arguments")
        kids.append(self._consume())
        return self._interior("argument_list", kids)

    def _parse_argument(self) -> int:
        tk = self._peek()
        nxt = self._peek(1)
        if (
            tk is not None and tk.type == toktype.NAME and tk.text not in _KEYWORDS
            and nxt is not None and nxt.type == toktype.OP and nxt.text == "="
        ):
            kids = [self._consume(), self._consume(), self._parse_expression()]
            return self._interior("keyword_argument", kids)
        arg = self._parse_expression()
        if self._at("for") or self._at("async"):
            clauses = self._parse_comprehension_clauses()
            return self._interior("generator_expression", [arg, *clauses])
        return arg

    def _parse_comprehension_clauses(self) -> list[int]:
        clauses: list[int] = []
        while True:
            if self._at("for") or (self._at("async") and self._peek(1) is not None and self._peek(1).text == "for"):
                kids = []
                if self._at("async"):
                    kids.append(self._consume())
                kids.append(self._expect("for"))
                kids.append(self._parse_target_list())
                kids.append(self._expect("in"))
                kids.append(self._parse_binary(0))
                clauses.append(self._interior("for_in_clause", kids))
            elif self._at("if"):
                clauses.append(self._interior("if_clause", [self._consume(), self._parse_binary(0)]))
            else:
                return clauses

    def _parse_atom(self) -> int:
        tk = self._peek()
        if tk is None:
            raise _ParseFailure("expected expression")
        if tk.type == toktype.NUMBER:
            return self._consume()
        if tk.type == toktype.STRING:
            first = self._consume()
            if not self._at_type(toktype.STRING):
                return first
            kids = [first]
            while self._at_type(toktype.STRING):
                kids.append(self._consume())
            return self._interior("concatenated_string", kids)
        if tk.type == toktype.NAME:
            if tk.text in _KEYWORD_CONSTANTS or tk.text not in _KEYWORDS:
                return self._consume()
            raise _ParseFailure(f"unexpected keyword {tk.text!r}")
        if tk.type == toktype.ERRORTOKEN:
            return self._consume()
        if tk.text == "(":
            return self._parse_parenthesized()
        if tk.text == "[":
            return self._parse_bracketed("]", "list", "list_comprehension")
        if tk.text == "{":
            return self._parse_braced()
        if tk.text == "...":
            tok = self._advance()
            return self._leaf("ellipsis", (tok.start, tok.end))
        raise _ParseFailure(f"unexpected token {tk.text!r}")

    def _parse_parenthesized(self) -> int:
        kids = [self._expect("(")]
        if self._at(")"):
            kids.append(self._consume())
            return self._interior("tuple", kids)
        first = self._parse_expression()
        if self._at("for") or self._at("async"):
            kids.append(first)
            kids.extend(self._parse_comprehension_clauses())
            kids.append(self._expect(")"))
            return self._interior("generator_expression", kids)
        if self._at(","):
            kids.append(first)
            while self._at(","):
                kids.append(self._consume())
                if self._at(")"):
                    break
                kids.append(self._parse_expression())
            kids.append(self._expect(")"))
            return self._interior("tuple", kids)
        kids.append(first)
        kids.append(self._expect(")"))
        return self._interior("parenthesized_expression", kids)

    def _parse_bracketed(self, close: str, plain_kind: str, comp_kind: str) -> int:
        kids = [self._consume()]
        if self._at(close):
            kids.append(self._consume())
            return self._interior(plain_kind, kids)
        first = self._parse_expression()
        if self._at("for") or self._at("async"):
            kids.append(first)
            kids.extend(self._parse_comprehension_clauses())
            kids.append(self._expect(close))
            return self._interior(comp_kind, kids)
        kids.append(first)
        while self._at(","):
            kids.append(self._consume())
            if self._at(close):
                break
            kids.append(self._parse_expression())
        kids.append(self._expect(close))
        return self._interior(plain_kind, kids)

    def _parse_braced(self) -> int:
        kids = [self._expect("{")]
        if self._at("}"):
            kids.append(self._consume())
            return self._interior("dictionary", kids)
        first = self._parse_expression()
        if self._at(":"):
            pair = self._interior("pair", [first, self._consume(), self._parse_expression()])
            if self._at("for") or self._at("async"):
                kids.append(pair)
                kids.extend(self._parse_comprehension_clauses())
                kids.append(self._expect("}"))
                return self._interior("dictionary_comprehension", kids)
            kids.append(pair)
            while self._at(","):
                kids.append(self._consume())
                if self._at("}"):
                    break
                key = self._parse_expression()
                kids.append(self._interior("pair", [key, self._expect(":"), self._parse_expression()]))
            kids.append(self._expect("}"))
            return self._interior("dictionary", kids)
        if self._at("for") or self._at("async"):
            kids.append(first)
            kids.extend(self._parse_comprehension_clauses())
            kids.append(self._expect("}"))
            return self._interior("set_comprehension", kids)
        kids.append(first)
        while self._at(","):
            kids.append(self._consume())
            if self._at("}"):
                break
            kids.append(self._parse_expression())
        kids.append(self._expect("}"))
        return self._interior("set", kids)


def _classify_number(text: str) -> str:
    lowered = text.lower()
    if lowered.startswith(("0x", "0o", "0b")):
        return "integer"
    if "." in text or "j" in lowered or ("e" in lowered):
        return "float"
    return "integer"


def parse_python(source: str) -> RawAst:
    """Parse Python source into a total concrete syntax tree."""
    return _Parser(source).parse_module()
