"""Terms of the refinement logic.

A single expression type doubles as theory term and predicate, the way
SMT-LIB treats booleans.  Predicates are just boolean-sorted expressions:
literals, variables, linear integer arithmetic, equality over base sorts,
and the propositional connectives.  Everything is immutable and hashable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping


@dataclass(frozen=True)
class Sort:
    name: str

    def __repr__(self) -> str:
        return self.name


INT = Sort("Int")
BOOL = Sort("Bool")
UNIT = Sort("Unit")

SORTS_BY_NAME = {s.name: s for s in (INT, BOOL, UNIT)}


class UnitValue:
    """The single inhabitant of Unit."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "unit"


UNIT_VALUE = UnitValue()


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: object  # int | bool | UnitValue


@dataclass(frozen=True)
class App:
    op: str
    args: tuple["Expr", ...]


Expr = Var | Lit | App

TRUE = Lit(True)
FALSE = Lit(False)
UNIT_LIT = Lit(UNIT_VALUE)

# Connectives and interpreted operators.  Anything else is an uninterpreted
# function symbol (datatype constructors enter the logic that way).
BOOL_OPS = frozenset({"and", "or", "not", "=>"})
CMP_OPS = frozenset({"=", "<=", "<"})
ARITH_OPS = frozenset({"+", "-"})
INTERPRETED = BOOL_OPS | CMP_OPS | ARITH_OPS


def conj(parts: list[Expr]) -> Expr:
    parts = [p for p in parts if p != TRUE]
    if any(p == FALSE for p in parts):
        return FALSE
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return App("and", tuple(parts))


def disj(parts: list[Expr]) -> Expr:
    parts = [p for p in parts if p != FALSE]
    if any(p == TRUE for p in parts):
        return TRUE
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return App("or", tuple(parts))


def neg(p: Expr) -> Expr:
    if p == TRUE:
        return FALSE
    if p == FALSE:
        return TRUE
    if isinstance(p, App) and p.op == "not":
        return p.args[0]
    return App("not", (p,))


def eq(a: Expr, b: Expr) -> Expr:
    return App("=", (a, b))


def free_vars(e: Expr) -> set[str]:
    match e:
        case Var(name):
            return {name}
        case Lit():
            return set()
        case App(_, args):
            out: set[str] = set()
            for a in args:
                out |= free_vars(a)
            return out
    raise TypeError(e)


def subst(e: Expr, env: Mapping[str, Expr]) -> Expr:
    """Simultaneous substitution of variables.  Terms have no binders."""
    match e:
        case Var(name):
            return env.get(name, e)
        case Lit():
            return e
        case App(op, args):
            return App(op, tuple(subst(a, env) for a in args))
    raise TypeError(e)


def subst1(e: Expr, x: str, r: Expr) -> Expr:
    return subst(e, {x: r})


def rename(e: Expr, ren: Mapping[str, str]) -> Expr:
    return subst(e, {k: Var(v) for k, v in ren.items()})


def depth(e: Expr) -> int:
    match e:
        case App(_, args):
            return 1 + max((depth(a) for a in args), default=0)
        case _:
            return 0


def subterms(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, App):
        for a in e.args:
            yield from subterms(a)


def conjuncts(p: Expr) -> Iterator[Expr]:
    """Flatten the conjunctive structure of a predicate."""
    if isinstance(p, App) and p.op == "and":
        for a in p.args:
            yield from conjuncts(a)
    else:
        yield p


class SortError(Exception):
    pass


def sort_of(e: Expr, env: Mapping[str, Sort]) -> Sort:
    """Sort-check an expression; uninterpreted applications are Int-valued."""
    match e:
        case Var(name):
            if name not in env:
                raise SortError(f"unbound variable {stemmed(name)}")
            return env[name]
        case Lit(v):
            if isinstance(v, bool):
                return BOOL
            if isinstance(v, int):
                return INT
            return UNIT
        case App(op, args):
            arg_sorts = [sort_of(a, env) for a in args]
            if op in BOOL_OPS:
                if any(s != BOOL for s in arg_sorts):
                    raise SortError(f"'{op}' applied to non-Bool operand")
                return BOOL
            if op in CMP_OPS:
                if len(arg_sorts) != 2:
                    raise SortError(f"'{op}' expects two operands")
                if arg_sorts[0] != arg_sorts[1]:
                    raise SortError(
                        f"'{op}' operands have sorts {arg_sorts[0]} and {arg_sorts[1]}"
                    )
                if op != "=" and arg_sorts[0] != INT:
                    raise SortError(f"'{op}' compares Int only")
                return BOOL
            if op in ARITH_OPS:
                if any(s != INT for s in arg_sorts):
                    raise SortError(f"'{op}' applied to non-Int operand")
                return INT
            return INT  # uninterpreted symbols are Int-valued
    raise TypeError(e)


def stemmed(name: str) -> str:
    return name.split("!", 1)[0]


def evaluate(e: Expr, env: Mapping[str, object]) -> object:
    """Evaluate over the standard model (full integers, not a finite cut)."""
    match e:
        case Var(name):
            return env[name]
        case Lit(v):
            return v
        case App(op, args):
            vals = [evaluate(a, env) for a in args]
            match op:
                case "and":
                    return all(vals)
                case "or":
                    return any(vals)
                case "not":
                    return not vals[0]
                case "=>":
                    return (not vals[0]) or vals[1]
                case "=":
                    return vals[0] == vals[1]
                case "<=":
                    return vals[0] <= vals[1]
                case "<":
                    return vals[0] < vals[1]
                case "+":
                    return sum(vals)
                case "-":
                    return vals[0] - vals[1] if len(vals) == 2 else -vals[0]
                case _:
                    raise SortError(f"uninterpreted symbol '{op}' has no model")
    raise TypeError(e)


def linear_form(e: Expr) -> tuple[dict[str, Fraction], Fraction] | None:
    """View an Int expression as sum(coeff*var) + const, or None if nonlinear.

    Uninterpreted applications count as opaque atoms keyed by their printed
    form, which is enough for the lightweight solvers built on top.
    """
    coeffs: dict[str, Fraction] = {}
    const = Fraction(0)

    def add(term: Expr, sign: int) -> bool:
        nonlocal const
        match term:
            case Lit(v) if isinstance(v, int) and not isinstance(v, bool):
                const += sign * v
                return True
            case Var(name):
                coeffs[name] = coeffs.get(name, Fraction(0)) + sign
                return True
            case App("+", args):
                return all(add(a, sign) for a in args)
            case App("-", args):
                if len(args) == 1:
                    return add(args[0], -sign)
                return add(args[0], sign) and all(add(a, -sign) for a in args[1:])
            case _:
                return False

    if not add(e, 1):
        return None
    return {k: v for k, v in coeffs.items() if v != 0}, const
