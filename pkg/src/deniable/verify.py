"""Ground truth by enumeration, simulated adversaries, and dependency connectivity.

The oracle deliberately shares no code with detection: it grounds constraints over
every ordered tuple pair on its own and decides inference by trying assignments.
"""

from __future__ import annotations

import itertools
import os
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .constraints import DenialConstraint, DependencySet, FunctionConstraint, Operand
from .model import CellRef, QuerierView, RelationInstance, Schema, base_view, compare, values_equal

DEFAULT_BUDGET = 10 ** 7


class DomainTooLarge(RuntimeError):
    pass


def oracle_budget() -> int:
    raw = os.environ.get("TT_ORACLE_BUDGET")
    return int(float(raw)) if raw else DEFAULT_BUDGET


class _Budget:
    def __init__(self, limit: int | None):
        self.limit = oracle_budget() if limit is None else limit
        self.used = 0

    def spend(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.limit:
            raise DomainTooLarge(
                f"oracle enumeration passed {self.limit} assignments; "
                "shrink the instance or raise TT_ORACLE_BUDGET")


# ---------------------------------------------------------------------------
# Grounding, independent of the detection module

@dataclass(frozen=True)
class Grounded:
    """A constraint bound to concrete tuples: ('dc', dc, {slot: tuple}) or ('fc', fc, t)."""

    kind: str
    constraint: Any
    tuples: tuple

    def cells(self, schema: Schema) -> set[CellRef]:
        if self.kind == "fc":
            t = self.tuples[0]
            return {CellRef(t, schema.index(a)) for a in self.constraint.attributes}
        bind = dict(zip((1, 2), self.tuples))
        return {CellRef(bind[o.slot], schema.index(o.attribute))
                for p in self.constraint.predicates for o in (p.lhs, p.rhs) if o.is_attr}


def groundings(deps: DependencySet, n: int, cell: CellRef, schema: Schema) -> list[Grounded]:
    """Every grounding (all ordered pairs for binary DCs) that mentions `cell`."""
    out = []
    for dc in deps.dcs:
        slots = sorted({o.slot for p in dc.predicates for o in (p.lhs, p.rhs) if o.is_attr})
        if len(slots) == 1:
            cands = [(cell[0], cell[0])]
        else:
            cands = [(i, j) for i in range(n) for j in range(n) if i != j and cell[0] in (i, j)]
        for pair in cands:
            g = Grounded("dc", dc, pair)
            if cell in g.cells(schema):
                out.append(g)
    for fc in deps.fcs:
        g = Grounded("fc", fc, (cell[0],))
        if cell in g.cells(schema):
            out.append(g)
    return out


def candidates(attr, instance: RelationInstance, attr_index: int) -> list:
    """Values a hidden cell may take: the domain, or for continuous attributes a grid."""
    if attr.is_discrete:
        return list(attr.values)
    seen = list(attr.grid())
    for row in instance.rows:
        v = row[attr_index]
        if not any(values_equal(v, s) for s in seen):
            seen.append(v)
    return sorted(seen)


def _dc_satisfiable(g: Grounded, cell: CellRef, x, view, schema: Schema, domains, budget: _Budget) -> bool:
    """Can the free cells be filled so that the grounded DC holds with `cell` = x?"""
    bind = dict(zip((1, 2), g.tuples))
    free = sorted(c for c in g.cells(schema) if c != cell and view.observe(c) is None)

    def value(o: Operand, assignment):
        if not o.is_attr:
            return o.literal
        c = CellRef(bind[o.slot], schema.index(o.attribute))
        if c == cell:
            return x
        if c in assignment:
            return assignment[c]
        return view.observe(c)

    for combo in itertools.product(*(domains[c[1]] for c in free)):
        budget.spend()
        assignment = dict(zip(free, combo))
        if not all(compare(value(p.lhs, assignment), p.op, value(p.rhs, assignment))
                   for p in g.constraint.predicates):
            return True
    return False


def _fc_allows(g: Grounded, cell: CellRef, x, view, schema: Schema, instance: RelationInstance) -> bool:
    """Function constraints, read abstractly: an output is pinned once every input is known;
    an input of an invertible function is pinned once the output and the other inputs are known."""
    fc: FunctionConstraint = g.constraint
    t = g.tuples[0]
    out = CellRef(t, schema.index(fc.output_attr))
    inputs = [CellRef(t, schema.index(a)) for a in fc.input_attrs]
    truth = instance.value(cell)
    if cell == out:
        pinned = all(view.observe(c) is not None for c in inputs)
    elif fc.invertible:
        pinned = view.observe(out) is not None and all(
            view.observe(c) is not None for c in inputs if c != cell)
    else:
        pinned = False
    return not pinned or values_equal(x, truth)


def oracle_inferred_set(cell: CellRef, view, deps: DependencySet, schema: Schema | None = None, *,
                        budget: _Budget | int | None = None, only: Sequence[Grounded] | None = None) -> list:
    """Values of `cell` consistent with the view and every grounding that mentions it.

    `only` restricts the check to the given groundings.
    """
    instance = view.instance
    schema = schema or instance.schema
    if not isinstance(budget, _Budget):
        budget = _Budget(budget)
    domains = [candidates(a, instance, i) for i, a in enumerate(schema.attributes)]
    alive = list(domains[cell[1]])
    for g in groundings(deps, instance.n_tuples, cell, schema) if only is None else only:
        if g.kind == "fc":
            alive = [x for x in alive if _fc_allows(g, cell, x, view, schema, instance)]
        else:
            alive = [x for x in alive if _dc_satisfiable(g, cell, x, view, schema, domains, budget)]
    return alive


@dataclass
class CellVerdict:
    cell: CellRef
    under_view: list
    under_base: list

    @property
    def equal(self) -> bool:
        return len(self.under_view) == len(self.under_base) and all(
            values_equal(a, b) for a, b in zip(self.under_view, self.under_base))


@dataclass
class OracleResult:
    verdicts: list[CellVerdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.equal for v in self.verdicts)

    @property
    def failures(self) -> list[CellRef]:
        return [v.cell for v in self.verdicts if not v.equal]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "cells": [{"cell": list(v.cell), "equal": v.equal,
                           "under_view": v.under_view, "under_base": v.under_base}
                          for v in self.verdicts]}


def check_full_deniability(instance: RelationInstance, deps: DependencySet, sensitive: Iterable[CellRef],
                           view, *, budget: int | None = None) -> OracleResult:
    """Compare what the view reveals about each sensitive cell with what nothing reveals."""
    b = _Budget(budget)
    base = base_view(instance)
    result = OracleResult()
    for c in sorted(set(sensitive)):
        result.verdicts.append(CellVerdict(
            c, oracle_inferred_set(c, view, deps, budget=b), oracle_inferred_set(c, base, deps, budget=b)))
    return result


# ---------------------------------------------------------------------------
# Attackers

@dataclass
class AttackOutcome:
    guesses: dict = field(default_factory=dict)
    correct: int = 0
    total: int = 0

    @property
    def precision(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"correct": self.correct, "total": self.total, "precision": self.precision,
                "guesses": [{"cell": list(c), "value": v} for c, v in sorted(self.guesses.items())]}


def attack_weighted_sampling(view, schema: Schema | None = None, seed: int = 42, *,
                             cells: Iterable[CellRef] | None = None) -> AttackOutcome:
    """Guess each hidden cell by sampling its column's visible values (uniform if none)."""
    instance = view.instance
    schema = schema or instance.schema
    rng = random.Random(seed)
    targets = sorted(view.hidden if cells is None else set(cells) & set(view.hidden))
    visible: dict[int, list] = {}
    out = AttackOutcome()
    for c in targets:
        a = c[1]
        if a not in visible:
            visible[a] = [row[a] for t, row in enumerate(instance.rows) if CellRef(t, a) not in view.hidden]
        pool = visible[a] or candidates(schema.attributes[a], instance, a)
        guess = pool[rng.randrange(len(pool))]
        out.guesses[c] = guess
        out.total += 1
        out.correct += int(values_equal(guess, instance.value(c)))
    return out


class AttackerView:
    """A view whose hidden cells can be filled in by an attacker's guesses."""

    def __init__(self, view):
        self.instance = view.instance
        self.hidden = set(view.hidden)
        self.filled: dict[CellRef, Any] = {}

    def observe(self, cell: CellRef):
        if cell in self.filled:
            return self.filled[cell]
        if cell in self.hidden:
            return None
        return self.instance.value(cell)

    def is_hidden(self, cell: CellRef) -> bool:
        return self.observe(cell) is None


def attack_constraint_propagation(view, deps: DependencySet, schema: Schema | None = None, *,
                                  cells: Iterable[CellRef] | None = None,
                                  budget: int | None = None) -> AttackOutcome:
    """Fill a hidden cell whenever the constraints leave a single value, until nothing changes."""
    instance = view.instance
    schema = schema or instance.schema
    b = _Budget(budget)
    av = AttackerView(view)
    open_cells = sorted(view.hidden)
    for _ in range(max(1, len(open_cells))):
        changed = False
        for c in open_cells:
            if c in av.filled:
                continue
            alive = oracle_inferred_set(c, av, deps, schema, budget=b)
            if len(alive) == 1:
                av.filled[c] = alive[0]
                changed = True
        if not changed:
            break
    scope = set(view.hidden) if cells is None else set(cells)
    out = AttackOutcome()
    for c, v in av.filled.items():
        if c in scope:
            out.guesses[c] = v
            out.total += 1
            out.correct += int(values_equal(v, instance.value(c)))
    return out


# ---------------------------------------------------------------------------
# Dependency connectivity

def dependency_connectivity(schema: Schema, deps: DependencySet) -> dict[str, int]:
    """Degree of each attribute in the constraint hypergraph plus the degrees of its neighbours.

    Neighbours are attributes that share at least one constraint with it.
    """
    edges = [set(c.attributes) for c in deps.all]
    degree = {a: sum(a in e for e in edges) for a in schema.names}
    scores = {}
    for a in schema.names:
        near = set().union(*(e for e in edges if a in e)) - {a} if degree[a] else set()
        scores[a] = degree[a] + sum(degree[b] for b in near)
    return scores


def connectivity_groups(scores: dict[str, int]) -> dict[str, str]:
    """Split attributes into low / medium / high thirds by score (ties keep schema order)."""
    ranked = sorted(scores, key=lambda a: -scores[a])
    n = len(ranked)
    cut_hi, cut_mid = round(n / 3), round(2 * n / 3)
    out = {}
    for i, a in enumerate(ranked):
        out[a] = "high" if i < cut_hi else "medium" if i < cut_mid else "low"
    return out
