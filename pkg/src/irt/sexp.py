"""Tiny S-expression reader/printer shared by the EHC format and SMT-LIB."""

from __future__ import annotations

Sexp = str | int | list


class SexpError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "()":
            out.append(ch)
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch.isspace():
            i += 1
        elif ch == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SexpError("unterminated |symbol|")
            out.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_all(text: str) -> list[Sexp]:
    tokens = tokenize(text)
    pos = 0

    def parse_one() -> Sexp:
        nonlocal pos
        if pos >= len(tokens):
            raise SexpError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise SexpError("missing ')'")
                if tokens[pos] == ")":
                    pos += 1
                    return items
                items.append(parse_one())
        if tok == ")":
            raise SexpError("unexpected ')'")
        if tok.lstrip("-").isdigit():
            return int(tok)
        return tok

    forms = []
    while pos < len(tokens):
        forms.append(parse_one())
    return forms


def parse_one(text: str) -> Sexp:
    forms = parse_all(text)
    if len(forms) != 1:
        raise SexpError(f"expected one form, found {len(forms)}")
    return forms[0]


def render(s: Sexp) -> str:
    if isinstance(s, list):
        return "(" + " ".join(render(x) for x in s) + ")"
    return str(s)


def render_pretty(s: Sexp, indent: int = 0, width: int = 90) -> str:
    flat = render(s)
    if len(flat) + indent <= width or not isinstance(s, list) or not s:
        return flat
    head = render(s[0])
    pad = " " * (indent + 2)
    body = "\n".join(pad + render_pretty(x, indent + 2, width) for x in s[1:])
    return f"({head}\n{body})"
