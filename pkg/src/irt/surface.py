"""Surface syntax: lexer and parser.

Declarations are grouped by layout: a new declaration starts in column zero
with either `assume`, `NAME :: TYPE`, or `NAME = EXPR`; indented lines
continue the declaration above.  Implicit lambdas and unpacks have no
concrete syntax; elaboration inserts them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import logic
from .core import (
    DFun,
    IFun,
    IPair,
    RBase,
    TAll,
    TVar,
    Type,
    tbase,
)
from .logic import BOOL, INT, UNIT, Lit, Sort, Var


class SyntaxErrorIrt(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Span:
    line: int
    col: int


# Surface expressions


@dataclass(frozen=True)
class SVar:
    name: str
    span: Span


@dataclass(frozen=True)
class SConst:
    value: object
    span: Span


@dataclass(frozen=True)
class SLam:
    param: str
    body: "SExpr"
    span: Span


@dataclass(frozen=True)
class SApp:
    fn: "SExpr"
    arg: "SExpr"
    span: Span


@dataclass(frozen=True)
class SLet:
    binder: str
    annot: Type | None
    bound: "SExpr"
    body: "SExpr"
    span: Span


@dataclass(frozen=True)
class SIf:
    cond: "SExpr"
    then: "SExpr"
    els: "SExpr"
    span: Span


SExpr = SVar | SConst | SLam | SApp | SLet | SIf


@dataclass(frozen=True)
class AssumeSig:
    name: str
    type: Type
    span: Span


@dataclass(frozen=True)
class CheckedSig:
    name: str
    type: Type
    span: Span


@dataclass(frozen=True)
class Def:
    name: str
    expr: SExpr
    span: Span


Decl = AssumeSig | CheckedSig | Def


@dataclass
class SurfaceProgram:
    decls: list[Decl]

    def sig_of(self, name: str) -> AssumeSig | CheckedSig | None:
        for d in self.decls:
            if isinstance(d, (AssumeSig, CheckedSig)) and d.name == name:
                return d
        return None

    def expect_header(self) -> str | None:
        return getattr(self, "_expect", None)


class DuplicateDefinition(Exception):
    pass


# ---------------------------------------------------------------------------
# Lexer

TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t]+)
    | (?P<comment>--[^\n]*)
    | (?P<nl>\n)
    | (?P<int>\d+)
    | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
    | (?P<sym>::|->|<=|&&|\|\||[\\(){}\[\].:|=+\-<])
    """,
    re.VERBOSE,
)

KEYWORDS = {"assume", "let", "in", "if", "then", "else", "forall", "not", "true", "false"}


@dataclass(frozen=True)
class Token:
    kind: str  # 'int' | 'ident' | 'sym' | keyword itself
    text: str
    line: int
    col: int


def lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if not m:
            raise SyntaxErrorIrt(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(tok)
        elif kind == "int":
            tokens.append(Token("int", tok, line, col))
            col += len(tok)
        elif kind == "ident":
            k = tok if tok in KEYWORDS else "ident"
            tokens.append(Token(k, tok, line, col))
            col += len(tok)
        else:
            tokens.append(Token("sym", tok, line, col))
            col += len(tok)
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# Parser

SORT_NAMES = {"Int": INT, "Bool": BOOL}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def at_sym(self, text: str, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.kind == "sym" and t.text == text

    def at_kind(self, kind: str, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.kind == kind

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            last = self.tokens[-1] if self.tokens else Token("sym", "", 1, 1)
            raise SyntaxErrorIrt("unexpected end of input", last.line, last.col + len(last.text))
        self.pos += 1
        return t

    def expect_sym(self, text: str) -> Token:
        t = self.next()
        if t.kind != "sym" or t.text != text:
            raise SyntaxErrorIrt(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return t

    def expect_kind(self, kind: str) -> Token:
        t = self.next()
        if t.kind != kind:
            raise SyntaxErrorIrt(f"expected {kind}, found {t.text!r}", t.line, t.col)
        return t

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    # -- types --------------------------------------------------------------

    def parse_type(self) -> Type:
        t = self.peek()
        if t is None:
            raise SyntaxErrorIrt("expected a type", 1, 1)
        if t.kind == "forall":
            self.next()
            var = self.expect_kind("ident").text
            self.expect_sym(".")
            return TAll(var, self.parse_type())
        if self.at_sym("["):
            self.next()
            name = self.expect_kind("ident").text
            self.expect_sym(":")
            dom = self.parse_type()
            self.expect_sym("]")
            if self.at_sym("->"):
                self.next()
                return IFun(name, dom, self.parse_type())
            self.expect_sym(".")
            return IPair(name, dom, self.parse_type())
        # dependent binder: IDENT ':' ...
        if t.kind == "ident" and self.at_sym(":", 1):
            self.next()
            self.next()
            dom = self.parse_atype()
            self.expect_sym("->")
            return DFun(t.text, dom, self.parse_type())
        dom = self.parse_atype()
        if self.at_sym("->"):
            self.next()
            return DFun("_", dom, self.parse_type())
        return dom

    def parse_atype(self) -> Type:
        t = self.next()
        if t.kind == "ident":
            if t.text in SORT_NAMES:
                return tbase(SORT_NAMES[t.text])
            if t.text[0].islower():
                return TVar(t.text)
            raise SyntaxErrorIrt(f"unknown type name {t.text!r}", t.line, t.col)
        if t.kind == "sym" and t.text == "(":
            if self.at_sym(")"):
                self.next()
                return tbase(UNIT)
            inner = self.parse_type()
            self.expect_sym(")")
            return inner
        if t.kind == "sym" and t.text == "{":
            binder = self.expect_kind("ident").text
            self.expect_sym(":")
            sort = self.parse_base_sort()
            self.expect_sym("|")
            pred = self.parse_pred()
            self.expect_sym("}")
            return RBase(binder, sort, pred)
        raise SyntaxErrorIrt(f"expected a type, found {t.text!r}", t.line, t.col)

    def parse_base_sort(self) -> Sort:
        t = self.next()
        if t.kind == "ident" and t.text in SORT_NAMES:
            return SORT_NAMES[t.text]
        if t.kind == "sym" and t.text == "(":
            self.expect_sym(")")
            return UNIT
        raise SyntaxErrorIrt(f"expected a base sort, found {t.text!r}", t.line, t.col)

    # -- refinement predicates ------------------------------------------------

    def parse_pred(self) -> logic.Expr:
        return self._pred_or()

    def _pred_or(self) -> logic.Expr:
        lhs = self._pred_and()
        while self.at_sym("||"):
            self.next()
            lhs = logic.App("or", (lhs, self._pred_and()))
        return lhs

    def _pred_and(self) -> logic.Expr:
        lhs = self._pred_cmp()
        while self.at_sym("&&"):
            self.next()
            lhs = logic.App("and", (lhs, self._pred_cmp()))
        return lhs

    def _pred_cmp(self) -> logic.Expr:
        lhs = self._pred_add()
        for op in ("=", "<=", "<"):
            if self.at_sym(op):
                self.next()
                return logic.App("=" if op == "=" else op, (lhs, self._pred_add()))
        return lhs

    def _pred_add(self) -> logic.Expr:
        lhs = self._pred_atom()
        while self.at_sym("+") or self.at_sym("-"):
            op = self.next().text
            lhs = logic.App(op, (lhs, self._pred_atom()))
        return lhs

    def _pred_atom(self) -> logic.Expr:
        t = self.next()
        if t.kind == "int":
            return Lit(int(t.text))
        if t.kind == "true":
            return logic.TRUE
        if t.kind == "false":
            return logic.FALSE
        if t.kind == "not":
            return logic.neg(self._pred_atom())
        if t.kind == "ident":
            return Var(t.text)
        if t.kind == "sym" and t.text == "(":
            if self.at_sym(")"):
                self.next()
                return logic.UNIT_LIT
            inner = self.parse_pred()
            self.expect_sym(")")
            return inner
        raise SyntaxErrorIrt(f"expected a predicate, found {t.text!r}", t.line, t.col)

    # -- expressions ----------------------------------------------------------

    def parse_expr(self) -> SExpr:
        t = self.peek()
        if t is None:
            raise SyntaxErrorIrt("expected an expression", 1, 1)
        span = Span(t.line, t.col)
        if self.at_sym("\\"):
            self.next()
            param = self.expect_kind("ident").text
            self.expect_sym("->")
            return SLam(param, self.parse_expr(), span)
        if t.kind == "let":
            self.next()
            binder = self.expect_kind("ident").text
            annot = None
            if self.at_sym("::"):
                self.next()
                annot = self.parse_type()
            self.expect_sym("=")
            bound = self.parse_expr()
            tok = self.next()
            if tok.kind != "in":
                raise SyntaxErrorIrt(f"expected 'in', found {tok.text!r}", tok.line, tok.col)
            body = self.parse_expr()
            return SLet(binder, annot, bound, body, span)
        if t.kind == "if":
            self.next()
            cond = self.parse_expr()
            tok = self.next()
            if tok.kind != "then":
                raise SyntaxErrorIrt(f"expected 'then', found {tok.text!r}", tok.line, tok.col)
            then = self.parse_expr()
            tok = self.next()
            if tok.kind != "else":
                raise SyntaxErrorIrt(f"expected 'else', found {tok.text!r}", tok.line, tok.col)
            els = self.parse_expr()
            return SIf(cond, then, els, span)
        return self._expr_or()

    def _binop(self, op: str, lhs: SExpr, rhs: SExpr, span: Span) -> SExpr:
        return SApp(SApp(SVar(op, span), lhs, span), rhs, span)

    def _expr_or(self) -> SExpr:
        lhs = self._expr_and()
        while self.at_sym("||"):
            t = self.next()
            lhs = self._binop("||", lhs, self._expr_and(), Span(t.line, t.col))
        return lhs

    def _expr_and(self) -> SExpr:
        lhs = self._expr_cmp()
        while self.at_sym("&&"):
            t = self.next()
            lhs = self._binop("&&", lhs, self._expr_cmp(), Span(t.line, t.col))
        return lhs

    def _expr_cmp(self) -> SExpr:
        lhs = self._expr_add()
        for op in ("=", "<=", "<"):
            if self.at_sym(op):
                t = self.next()
                return self._binop(op, lhs, self._expr_add(), Span(t.line, t.col))
        return lhs

    def _expr_add(self) -> SExpr:
        lhs = self._expr_app()
        while self.at_sym("+") or self.at_sym("-"):
            t = self.next()
            lhs = self._binop(t.text, lhs, self._expr_app(), Span(t.line, t.col))
        return lhs

    def _expr_app(self) -> SExpr:
        e = self._expr_atom()
        while self._at_atom():
            arg = self._expr_atom()
            e = SApp(e, arg, Span(arg.span.line, arg.span.col))
        return e

    def _at_atom(self) -> bool:
        t = self.peek()
        if t is None:
            return False
        if t.kind in ("int", "ident", "true", "false", "not"):
            return True
        return t.kind == "sym" and t.text == "("

    def _expr_atom(self) -> SExpr:
        t = self.next()
        span = Span(t.line, t.col)
        if t.kind == "int":
            return SConst(int(t.text), span)
        if t.kind == "true":
            return SConst(True, span)
        if t.kind == "false":
            return SConst(False, span)
        if t.kind == "not":
            return SApp(SVar("not", span), self._expr_atom(), span)
        if t.kind == "ident":
            return SVar(t.text, span)
        if t.kind == "sym" and t.text == "(":
            if self.at_sym(")"):
                self.next()
                return SConst(logic.UNIT_VALUE, span)
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        raise SyntaxErrorIrt(f"expected an expression, found {t.text!r}", t.line, t.col)


def _split_decl_lines(text: str) -> list[tuple[int, str]]:
    """Group physical lines into declaration chunks by column-zero starts."""
    chunks: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.split("--", 1)[0].rstrip()
        if not stripped.strip():
            continue
        starts_new = not line[0].isspace() if line else False
        if starts_new or not chunks:
            chunks.append((lineno, [line]))
        else:
            chunks[-1][1].append(line)
    return [(ln, "\n".join(ls)) for ln, ls in chunks]


def parse(text: str) -> SurfaceProgram:
    decls: list[Decl] = []
    for lineno, chunk in _split_decl_lines(text):
        tokens = lex(chunk)
        if not tokens:
            continue
        # fix up line numbers relative to the file
        tokens = [Token(t.kind, t.text, t.line + lineno - 1, t.col) for t in tokens]
        p = _Parser(tokens)
        first = p.next()
        span = Span(first.line, first.col)
        if first.kind == "assume":
            name = p.expect_kind("ident").text
            p.expect_sym("::")
            decls.append(AssumeSig(name, p.parse_type(), span))
        elif first.kind == "ident":
            if p.at_sym("::"):
                p.next()
                decls.append(CheckedSig(first.text, p.parse_type(), span))
            elif p.at_sym("="):
                p.next()
                decls.append(Def(first.text, p.parse_expr(), span))
            else:
                t = p.peek() or first
                raise SyntaxErrorIrt("expected '::' or '=' after name", t.line, t.col)
        else:
            raise SyntaxErrorIrt(f"expected a declaration, found {first.text!r}", first.line, first.col)
        if not p.done():
            t = p.peek()
            raise SyntaxErrorIrt(f"trailing input {t.text!r}", t.line, t.col)

    _validate(decls)
    return SurfaceProgram(decls)


def _validate(decls: list[Decl]):
    sigs: dict[str, Decl] = {}
    defs: dict[str, Decl] = {}
    for d in decls:
        if isinstance(d, (AssumeSig, CheckedSig)):
            if d.name in sigs:
                raise DuplicateDefinition(f"duplicate signature for {d.name}")
            sigs[d.name] = d
        else:
            if d.name in defs:
                raise DuplicateDefinition(f"duplicate definition of {d.name}")
            defs[d.name] = d
    for name, d in sigs.items():
        if isinstance(d, CheckedSig) and name not in defs:
            raise DuplicateDefinition(f"checked signature {name} has no definition")
    for name, d in defs.items():
        if name in sigs and isinstance(sigs[name], AssumeSig):
            raise DuplicateDefinition(f"{name} is assumed and also defined")
