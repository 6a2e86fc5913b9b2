"""SMT-LIB2 embedding and the external solver driver.

The final predicate-variable-free VC becomes a standard SMT-LIB2 script
asserting its negation; validity is unsat.  One solver process per query,
command configurable via IRT_SMT_CMD (any SMT-LIB2 solver reading stdin
works, e.g. ``z3 -in``); the bundled ``irt-smt`` checker is the default.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
from dataclasses import dataclass, field

from .ehc import CAnd, CExists, CForall, CHead, Constraint, KApp, free_vars
from .logic import (
    BOOL,
    INT,
    INTERPRETED,
    UNIT,
    UNIT_VALUE,
    App,
    Expr,
    Lit,
    Sort,
    Var,
)

UNIT_CONST = "unit!val"


class UnsupportedAtom(Exception):
    pass


class SolverSpawnFailure(Exception):
    pass


class MalformedSolverOutput(Exception):
    pass


def default_command() -> list[str]:
    env = os.environ.get("IRT_SMT_CMD")
    if env:
        return shlex.split(env)
    return [sys.executable, "-m", "irt.smtlite"]


@dataclass
class SmtConfig:
    command: list[str] = field(default_factory=default_command)
    timeout_ms: int = 10_000
    logic: str = "ALL"
    seed: int = 0

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


SMT_OPS = {
    "and": "and", "or": "or", "not": "not", "=>": "=>",
    "=": "=", "<=": "<=", "<": "<", "+": "+", "-": "-",
}


def _term(e: Expr) -> str:
    match e:
        case Var(n):
            return n
        case Lit(v):
            if v is UNIT_VALUE:
                return UNIT_CONST
            if isinstance(v, bool):
                return "true" if v else "false"
            if v < 0:
                return f"(- {-v})"
            return str(v)
        case App(op, args):
            smt_op = SMT_OPS.get(op, op)
            return "(" + smt_op + "".join(" " + _term(a) for a in args) + ")"
    raise TypeError(e)


def _formula(c: Constraint) -> str:
    match c:
        case CHead(p):
            if isinstance(p, KApp):
                raise UnsupportedAtom(f"predicate variable {p.var} in a VC")
            return _term(p)
        case CAnd(parts):
            if not parts:
                return "true"
            return "(and" + "".join(" " + _formula(x) for x in parts) + ")"
        case CForall(x, s, guard, body):
            if isinstance(guard, KApp):
                raise UnsupportedAtom(f"predicate variable {guard.var} in a VC")
            return f"(forall (({x} {s.name})) (=> {_term(guard)} {_formula(body)}))"
        case CExists(_, _, _):
            raise UnsupportedAtom("existential binder in a VC")
    raise TypeError(c)


def _collect_symbols(c: Constraint) -> tuple[set[Sort], set[tuple[str, int]]]:
    sorts: set[Sort] = set()
    funs: set[tuple[str, int]] = set()

    def term(e: Expr):
        match e:
            case Lit(v):
                if v is UNIT_VALUE:
                    sorts.add(UNIT)
            case App(op, args):
                if op not in INTERPRETED:
                    funs.add((op, len(args)))
                for a in args:
                    term(a)
            case _:
                pass

    def go(c: Constraint):
        match c:
            case CHead(p):
                if not isinstance(p, KApp):
                    term(p)
            case CAnd(parts):
                for x in parts:
                    go(x)
            case CForall(_, s, guard, body):
                sorts.add(s)
                if not isinstance(guard, KApp):
                    term(guard)
                go(body)
            case CExists(_, s, body):
                sorts.add(s)
                go(body)

    go(c)
    return sorts, funs


def embed_smt(vc: Constraint, cfg: SmtConfig | None = None) -> str:
    """A deterministic SMT-LIB2 script whose check-sat is unsat iff the VC
    is valid."""
    cfg = cfg or SmtConfig()
    free = sorted(free_vars(vc))
    sorts, funs = _collect_symbols(vc)
    lines = [f"(set-logic {cfg.logic})"]
    if UNIT in sorts:
        lines.append("(declare-sort Unit 0)")
        lines.append(f"(declare-const {UNIT_CONST} Unit)")
        lines.append(f"(assert (forall ((u!0 Unit)) (= u!0 {UNIT_CONST})))")
    for x in free:
        lines.append(f"(declare-const {x} Int)")  # VCs are closed; defensive
    for op, arity in sorted(funs):
        doms = " ".join(["Int"] * arity)
        lines.append(f"(declare-fun {op} ({doms}) Int)")
    lines.append(f"(assert (not {_formula(vc)}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def check_valid(vc: Constraint, cfg: SmtConfig | None = None) -> tuple[str, str | None, str]:
    """Run the external solver: unsat is Valid, sat is Invalid (with any
    model text the solver printed), unknown and timeouts map accordingly."""
    cfg = cfg or SmtConfig()
    script = embed_smt(vc, cfg)
    try:
        proc = subprocess.run(
            cfg.command,
            input=script.encode(),
            capture_output=True,
            timeout=cfg.timeout_ms / 1000.0,
        )
    except FileNotFoundError as exc:
        raise SolverSpawnFailure(f"cannot run {cfg.command!r}: {exc}") from exc
    except subprocess.TimeoutExpired:
        return "Timeout", "SmtTimeout", ""
    out = proc.stdout.decode(errors="replace")
    err = proc.stderr.decode(errors="replace")
    answer = next((line.strip() for line in out.splitlines() if line.strip()), "")
    if answer == "unsat":
        return "Valid", None, out
    if answer == "sat":
        model = out.split("\n", 1)[1] if "\n" in out else ""
        return "Invalid", model.strip() or None, out
    if answer == "unknown":
        return "Unknown", None, out
    raise MalformedSolverOutput(
        f"solver said {answer!r}; stderr: {err.strip()[:500]}"
    )
