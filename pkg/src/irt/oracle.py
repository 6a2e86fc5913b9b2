"""Brute-force finite-domain satisfiability for EHCs.

The independent oracle behind the equisatisfiability property tests: it
enumerates every second-order assignment (predicate variables as relations
over domain tuples) and checks the validity judgment directly, with
existential binders evaluated by searching the domain.  Arithmetic atoms are
evaluated over the full integers; only quantifier ranges are restricted, so
sat over a finite domain implies sat.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .ehc import (
    CAnd,
    CExists,
    CForall,
    CHead,
    Constraint,
    KApp,
    Prop,
    Registry,
    SolutionMap,
    pred_vars,
)
from .logic import (
    BOOL,
    INT,
    UNIT,
    UNIT_VALUE,
    Expr,
    Lit,
    Sort,
    Var,
    conj,
    disj,
    eq,
    evaluate,
)


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class FiniteDomain:
    values: dict  # Sort -> tuple of python values

    def of(self, sort: Sort):
        try:
            return self.values[sort]
        except KeyError:
            raise BudgetExceeded(f"no finite domain for sort {sort}") from None


def default_domain(ints=(0, 1, 2)) -> FiniteDomain:
    return FiniteDomain({INT: tuple(ints), BOOL: (False, True), UNIT: (UNIT_VALUE,)})


def _tuples(pv_params, domain: FiniteDomain):
    return list(itertools.product(*[domain.of(s) for _, s in pv_params]))


def _subsets_ordered(tuples):
    """All subsets, smallest first, deterministically ordered."""
    for k in range(len(tuples) + 1):
        for combo in itertools.combinations(range(len(tuples)), k):
            yield frozenset(tuples[i] for i in combo)


@dataclass
class Witness:
    delta: dict[str, frozenset] = field(default_factory=dict)
    psi: dict[str, object] = field(default_factory=dict)

    def to_solution_map(self, registry: Registry) -> SolutionMap:
        sm = SolutionMap()
        for name, rel in self.delta.items():
            params = tuple(p for p, _ in registry[name].params)
            body = disj(
                [conj([eq(Var(p), _lit(v)) for p, v in zip(params, tup)]) for tup in sorted(rel, key=repr)]
            )
            sm.second_order[name] = (params, body)
        for x, v in self.psi.items():
            sm.first_order[x] = _lit(v)
        return sm


def _lit(v) -> Expr:
    return Lit(v)


def _eval_prop(p: Prop, delta, env) -> bool:
    if isinstance(p, KApp):
        args = tuple(evaluate(a, env) for a in p.args)
        return args in delta[p.var]
    return bool(evaluate(p, env))


def _valid(c: Constraint, delta, env, domain: FiniteDomain, psi: dict | None) -> bool:
    match c:
        case CHead(p):
            return _eval_prop(p, delta, env)
        case CAnd(parts):
            return all(_valid(x, delta, env, domain, psi) for x in parts)
        case CForall(x, s, guard, body):
            for v in domain.of(s):
                env2 = {**env, x: v}
                if _eval_prop(guard, delta, env2):
                    if not _valid(body, delta, env2, domain, None):
                        return False
            return True
        case CExists(x, s, body):
            for v in domain.of(s):
                if _valid(body, delta, {**env, x: v}, domain, psi):
                    if psi is not None:
                        psi[x] = v
                    return True
            return False
    raise TypeError(c)


def brute_force_sat(
    c: Constraint,
    registry: Registry,
    domain: FiniteDomain | None = None,
    budget: int = 1_000_000,
) -> tuple[bool, Witness | None]:
    """Does some (Delta, Psi) over the finite domain validate c?

    Enumerates relations smallest-first, so reported witnesses are minimal.
    Raises BudgetExceeded when the assignment space is too large to sweep.
    """
    domain = domain or default_domain()
    used = sorted(pred_vars(c))
    for name in used:
        if name not in registry:
            raise KeyError(f"predicate variable {name} missing from registry")
    tuple_spaces = {name: _tuples(registry[name].params, domain) for name in used}

    total = 1
    for name in used:
        total *= 2 ** len(tuple_spaces[name])
        if total > budget:
            raise BudgetExceeded(f"{total} candidate assignments exceed budget {budget}")

    for choice in itertools.product(*[_subsets_ordered(tuple_spaces[n]) for n in used]):
        delta = dict(zip(used, choice))
        psi: dict[str, object] = {}
        if _valid(c, delta, {}, domain, psi):
            return True, Witness(delta=delta, psi=psi)
    return False, None


def check_assignment(
    c: Constraint,
    delta: dict[str, frozenset],
    domain: FiniteDomain | None = None,
) -> bool:
    """Validity of c under a fixed second-order assignment."""
    domain = domain or default_domain()
    return _valid(c, delta, {}, domain, None)


def eval_closed(c: Constraint, domain: FiniteDomain | None = None, env: dict | None = None) -> bool:
    """Evaluate a predicate-variable-free constraint over the finite domain."""
    domain = domain or default_domain()
    return _valid(c, {}, env or {}, domain, None)
