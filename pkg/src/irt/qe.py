"""Theory-agnostic quantifier elimination over equalities.

The defining constraint of a Skolem predicate is mined for equality atoms
along every guard path; their congruence closure, restricted to the
predicate's own scope, becomes the solution.  Inhabitation side conditions
are discharged by searching that solution for a witness equality.  Both are
under-approximations by design.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .ehc import CAnd, CExists, CForall, CHead, Constraint, KApp, Prop
from .logic import FALSE, TRUE, App, Expr, Lit, Var, conj, depth, eq, free_vars, subst1

DEPTH_CAP = 8


class EqualityGraph:
    """Union-find over terms with congruence propagation.

    Distinct literals are distinct classes; merging two of them marks the
    graph contradictory (the relation described is empty).
    """

    def __init__(self):
        self.parent: dict[Expr, Expr] = {}
        self.uses: dict[Expr, list[Expr]] = {}
        self.sig: dict[tuple, Expr] = {}
        self.contradictory = False

    def add(self, t: Expr):
        if t in self.parent:
            return
        self.parent[t] = t
        if isinstance(t, App):
            for a in t.args:
                self.add(a)
                self.uses.setdefault(self.find(a), []).append(t)
            self._record_sig(t)

    def find(self, t: Expr) -> Expr:
        self.add(t)
        root = t
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[t] != root:
            self.parent[t], t = root, self.parent[t]
        return root

    def _record_sig(self, t: App):
        key = (t.op, tuple(self.find(a) for a in t.args))
        other = self.sig.get(key)
        if other is None:
            self.sig[key] = t
        elif self.find(other) != self.find(t):
            self.union(other, t)

    def union(self, a: Expr, b: Expr):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if isinstance(ra, Lit) and isinstance(rb, Lit) and ra != rb:
            self.contradictory = True
        # prefer literal representatives, then smaller terms
        if _rep_key(rb) < _rep_key(ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        moved = self.uses.pop(rb, [])
        self.uses.setdefault(ra, []).extend(moved)
        for parent_term in list(moved) + list(self.uses.get(ra, [])):
            if isinstance(parent_term, App):
                self._record_sig(parent_term)

    def assert_eq(self, a: Expr, b: Expr):
        self.add(a)
        self.add(b)
        self.union(a, b)

    def equal(self, a: Expr, b: Expr) -> bool:
        return self.find(a) == self.find(b)

    def classes(self) -> dict[Expr, list[Expr]]:
        out: dict[Expr, list[Expr]] = {}
        for t in self.parent:
            out.setdefault(self.find(t), []).append(t)
        return out


def _rep_key(t: Expr) -> tuple:
    kind = 0 if isinstance(t, Lit) else 1 if isinstance(t, Var) else 2
    return (kind, repr(t))


def equality_atoms(p: Expr) -> list[tuple[Expr, Expr]]:
    """Equality atoms in the positive conjunctive structure of a predicate."""
    match p:
        case App("=", (a, b)):
            if depth(a) > DEPTH_CAP or depth(b) > DEPTH_CAP:
                return []
            return [(a, b)]
        case App("and", args):
            out = []
            for a in args:
                out.extend(equality_atoms(a))
            return out
        case _:
            return []


@dataclass(frozen=True)
class _Path:
    guards: tuple[Prop, ...]
    head: Prop


def _paths(c: Constraint, prefix: tuple[Prop, ...] = ()) -> Iterable[_Path]:
    match c:
        case CHead(p):
            yield _Path(prefix, p)
        case CAnd(parts):
            for x in parts:
                yield from _paths(x, prefix)
        case CForall(_, _, guard, body):
            yield from _paths(body, prefix + (guard,))
        case CExists(_, _, body):
            # nested side conditions: binder adds no facts along the path
            yield from _paths(body, prefix)
        case _:
            raise TypeError(c)


def _scoped(t: Expr, scope: frozenset[str]) -> bool:
    return free_vars(t) <= scope


def cc_qe(c: Constraint, result_scope: Iterable[str]) -> Expr:
    """Congruence-closure quantifier elimination.

    Per guard path, close the equality atoms of guards and head; keep the
    implied equalities whose both sides mention only scope variables and
    literals; intersect across paths.  A path whose head is `false` or whose
    closure merges distinct literals empties the relation.
    """
    scope = frozenset(result_scope)
    path_sets: list[frozenset[tuple[str, str]]] = []
    rendered: dict[tuple[str, str], Expr] = {}

    for path in _paths(c, ()):
        if isinstance(path.head, KApp):
            continue  # unresolved predicate application carries no equalities
        if path.head == TRUE:
            continue  # vacuous clause imposes nothing
        graph = EqualityGraph()
        atoms: list[tuple[Expr, Expr]] = []
        for g in path.guards:
            if isinstance(g, KApp):
                continue
            atoms.extend(equality_atoms(g))
        head_is_false = path.head == FALSE
        atoms.extend(equality_atoms(path.head))
        for a, b in atoms:
            graph.assert_eq(a, b)
        if graph.contradictory or head_is_false:
            return FALSE
        found: set[tuple[str, str]] = set()
        for members in graph.classes().values():
            in_scope = [t for t in members if _scoped(t, scope)]
            for i in range(len(in_scope)):
                for j in range(i + 1, len(in_scope)):
                    a, b = sorted((in_scope[i], in_scope[j]), key=repr)
                    key = (repr(a), repr(b))
                    found.add(key)
                    rendered[key] = eq(a, b)
        path_sets.append(frozenset(found))

    if not path_sets:
        return TRUE
    common = frozenset.intersection(*path_sets)
    if not common:
        return TRUE
    return conj([rendered[k] for k in sorted(common)])


def cc_witness(var: str, body: Expr, outer_scope: Iterable[str], constrained: bool) -> Expr:
    """Discharge an inhabitation side condition exists var. body.

    Search the body's equalities for var = t with t free of var and well
    scoped; substitute it.  An unconstrained Skolem relation is trivially
    inhabited; a constrained one with no witness equality fails.
    """
    scope = frozenset(outer_scope)
    graph = EqualityGraph()
    for a, b in equality_atoms(body):
        graph.assert_eq(a, b)
    if graph.contradictory:
        return FALSE
    target = graph.find(Var(var)) if Var(var) in graph.parent else None
    if target is not None:
        candidates = [
            t
            for t, rep in ((t, graph.find(t)) for t in list(graph.parent))
            if rep == target and var not in free_vars(t) and _scoped(t, scope)
        ]
        if candidates:
            witness = min(candidates, key=_rep_key)
            from .ehc import simplify_prop  # local import to avoid a cycle

            reduced = simplify_prop(_eval_ground(subst1(body, var, witness)))
            return reduced  # typically true after substituting the witness
    if body == TRUE and not constrained:
        return TRUE
    return FALSE


def _eval_ground(p: Expr) -> Expr:
    """Fold ground equalities produced by witness substitution."""
    match p:
        case App("=", (a, b)) if a == b:
            return TRUE
        case App("=", (Lit(x), Lit(y))):
            return Lit(x == y)
        case App("and", args):
            return conj([_eval_ground(a) for a in args])
        case App("or", args):
            from .logic import disj

            return disj([_eval_ground(a) for a in args])
        case _:
            return p


@dataclass(frozen=True)
class QeProcedure:
    """A quantifier elimination strategy pluggable into the solver."""

    name: str
    eliminate: Callable[[Constraint, frozenset[str]], Expr]
    witness: Callable[[str, Expr, frozenset[str], bool], Expr]
    is_strengthening: bool = True
    is_weakening: bool = False


CC_QE = QeProcedure(
    name="cc",
    eliminate=cc_qe,
    witness=cc_witness,
    is_strengthening=True,
    is_weakening=False,
)


QE_PROCEDURES = {"cc": CC_QE}
