"""Grounding of dependencies, three-valued evaluation, and cueset generation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .constraints import (ColumnStore, DenialConstraint, DependencySet, FunctionConstraint,
                          Operand, fc_instantiate)
from .model import CellRef, MissingOwnership, QuerierView, RelationInstance, compare


class Truth(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


class EmptyComplement(Exception):
    """Every predicate of the instantiation mentions the cell, so there is no TTC to check."""


@dataclass(frozen=True)
class Const:
    value: Any

    def __repr__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class GroundPredicate:
    lhs: CellRef | Const
    op: str
    rhs: CellRef | Const

    @property
    def cells(self) -> tuple[CellRef, ...]:
        return tuple(o for o in (self.lhs, self.rhs) if isinstance(o, CellRef))

    def other(self, cell: CellRef) -> CellRef | Const:
        """The operand opposite `cell` (which must be one side)."""
        return self.rhs if self.lhs == cell else self.lhs

    def oriented(self, cell: CellRef) -> tuple[str, CellRef | Const]:
        """(op, other) read as ``cell op other``."""
        from .constraints import FLIP
        if self.lhs == cell:
            return self.op, self.rhs
        return FLIP[self.op], self.lhs

    def __repr__(self) -> str:
        return f"{self.lhs!r} {self.op} {self.rhs!r}"


@dataclass(frozen=True)
class InstantiatedDependency:
    id: str
    origin: str
    predicates: tuple[GroundPredicate, ...]
    is_fc: bool = False
    invertible: bool = False
    output_cell: CellRef | None = None

    @property
    def cells(self) -> frozenset[CellRef]:
        return frozenset(c for p in self.predicates for c in p.cells)

    @property
    def input_cells(self) -> tuple[CellRef, ...]:
        return tuple(p.lhs for p in self.predicates if p.lhs != self.output_cell)

    def split(self, cell: CellRef) -> tuple[list[GroundPredicate], list[GroundPredicate]]:
        """(owner predicates that mention `cell`, the rest)."""
        owner, rest = [], []
        for p in self.predicates:
            (owner if cell in p.cells else rest).append(p)
        return owner, rest


@dataclass(frozen=True)
class Cueset:
    """Cells whose hiding blocks inference about `owner` through instantiation `origin`."""

    owner: CellRef
    members: tuple[CellRef, ...]
    origin: str
    # (dependency id, tuple bound to t1, tuple bound to t2); lets callers re-ground cheaply
    binding: tuple = field(default=(), compare=False, repr=False)

    def overlaps(self, cells) -> bool:
        if isinstance(cells, (set, frozenset)):
            return not cells.isdisjoint(self.members)
        return any(m in cells for m in self.members)


@dataclass(frozen=True)
class ResidualLeakage:
    cell: CellRef
    origin: str
    reason: str

    def to_dict(self) -> dict:
        return {"cell": list(self.cell), "origin": self.origin, "reason": self.reason}


# ---------------------------------------------------------------------------
# Evaluation

def _observe(view, o):
    if isinstance(o, Const):
        return o.value
    return view.observe(o)


def eval_predicate(pred: GroundPredicate, view) -> Truth:
    lhs, rhs = _observe(view, pred.lhs), _observe(view, pred.rhs)
    if lhs is None or rhs is None:
        return Truth.UNKNOWN
    return Truth.TRUE if compare(lhs, pred.op, rhs) else Truth.FALSE


def ttc(inst: InstantiatedDependency, view, cell: CellRef) -> bool:
    """Tattle-Tale Condition: every predicate not mentioning `cell` is True under `view`."""
    _, rest = inst.split(cell)
    if not rest:
        raise EmptyComplement(f"{inst.id}: every predicate mentions {cell!r}")
    return all(eval_predicate(p, view) is Truth.TRUE for p in rest)


# ---------------------------------------------------------------------------
# Instantiation

def _ground_operand(o: Operand, tuples: dict[int, int], instance: RelationInstance):
    if o.is_attr:
        return CellRef(tuples[o.slot], instance.schema.index(o.attribute))
    return Const(o.literal)


def ground_dc(dc: DenialConstraint, t1: int, t2: int | None, instance: RelationInstance) -> InstantiatedDependency:
    if dc.arity == 1:
        slot = dc.slots[0]
        tuples = {slot: t1}
        iid = f"{dc.id}[{t1}]"
    else:
        tuples = {1: t1, 2: t2}
        iid = f"{dc.id}[{t1},{t2}]"
    preds = tuple(GroundPredicate(_ground_operand(p.lhs, tuples, instance), p.op,
                                  _ground_operand(p.rhs, tuples, instance)) for p in dc.predicates)
    return InstantiatedDependency(iid, dc.id, preds)


def ground(dep, binding: tuple, instance: RelationInstance) -> InstantiatedDependency:
    """Rebuild an instantiation from a cueset binding ``(dep id, t1[, t2])``."""
    tuples = binding[1:]
    if isinstance(dep, FunctionConstraint):
        return fc_instantiate(dep, tuples[0], instance)
    return ground_dc(dep, tuples[0], tuples[1] if len(tuples) > 1 else None, instance)


def _orders(dc: DenialConstraint, i: int, j: int) -> list[tuple[int, int]]:
    if dc.swap_invariant:
        return [(min(i, j), max(i, j))]
    return [(i, j), (j, i)]


def instantiate(dep, target: CellRef, view) -> list[InstantiatedDependency]:
    """Instantiations of `dep` that contain `target`."""
    instance = view.instance
    name = instance.schema.attributes[target[1]].name
    if name not in dep.attributes:
        return []
    t = target[0]
    if isinstance(dep, FunctionConstraint):
        return [fc_instantiate(dep, t, instance)]
    if dep.arity == 1:
        inst = ground_dc(dep, t, None, instance)
        return [inst] if target in inst.cells else []
    out = []
    for j in range(instance.n_tuples):
        if j == t:
            continue
        for a, b in _orders(dep, t, j):
            inst = ground_dc(dep, a, b, instance)
            if target in inst.cells:
                out.append(inst)
    return out


# ---------------------------------------------------------------------------
# Cueset rules

def cueset_rule(inst: InstantiatedDependency, cell: CellRef, view, use_ttc: bool = True):
    """Apply the detection rules to one instantiation.

    Returns (members or None, ResidualLeakage or None).
    """
    if inst.is_fc:
        if cell == inst.output_cell:
            inputs = inst.input_cells
            if use_ttc and any(view.is_hidden(c) for c in inputs):
                return None, None
            return tuple(sorted(inputs)), None
        if not inst.invertible:
            return None, None
        if use_ttc and view.is_hidden(inst.output_cell):
            return None, None
        return (inst.output_cell,), None
    owner, rest = inst.split(cell)
    if not rest:
        others = sorted({c for p in owner for c in p.cells if c != cell})
        if others:
            return tuple(others), None
        return None, ResidualLeakage(cell, inst.id, "constraint against a constant fixes the cell")
    if use_ttc and not all(eval_predicate(p, view) is Truth.TRUE for p in rest):
        return None, None
    return tuple(sorted({c for p in rest for c in p.cells})), None


def _binding_of(inst: InstantiatedDependency) -> tuple:
    inside = inst.id[inst.id.rindex("[") + 1:-1]
    return (inst.origin, *(int(x) for x in inside.split(",")))


def detect(targets: Iterable[CellRef], deps: DependencySet, view, *,
           warnings: list | None = None, use_ttc: bool = True) -> list[Cueset]:
    """Cuesets for every target via per-instantiation evaluation (reference method)."""
    out = []
    for c in sorted(set(targets)):
        for dep in deps.all:
            for inst in instantiate(dep, c, view):
                members, warn = cueset_rule(inst, c, view, use_ttc)
                if warn is not None and warnings is not None:
                    warnings.append(warn)
                if members is not None:
                    out.append(Cueset(c, members, inst.id, _binding_of(inst)))
    return out


class _Plan:
    """Owner/non-owner split of an arity-2 DC for targets at (slot, attribute)."""

    def __init__(self, dc: DenialConstraint, slot: int, attribute: str, schema):
        self.slot = slot
        self.rest = [p for p in dc.predicates
                     if not any(o.is_attr and o.slot == slot and o.attribute == attribute
                                for o in (p.lhs, p.rhs))]
        self.member_ops = sorted({(o.slot, schema.index(o.attribute))
                                  for p in self.rest for o in (p.lhs, p.rhs) if o.is_attr})


def scan(targets: Iterable[CellRef], deps: DependencySet, view, *, use_ttc: bool = True,
         covered: frozenset | set | None = None, warnings: list | None = None,
         chunk: int = 256) -> tuple[list[Cueset], int]:
    """Join-based detection: one vectorized pass per constraint and target attribute.

    Binary constraints are evaluated as a (targets x partners) boolean matrix over
    the view with hidden cells nulled; a pair survives when every non-owner
    predicate is True. Returns (cuesets, total emitted). When `covered` is given,
    cuesets meeting it are counted but not materialized.
    """
    instance = view.instance
    schema = instance.schema
    targets = sorted(set(targets))
    if not targets:
        return [], 0
    store = ColumnStore(instance, view.hidden if use_ttc else ())
    n = instance.n_tuples
    everyone = np.arange(n)
    out: list[Cueset] = []
    total = 0

    def emit(cs: Cueset):
        nonlocal total
        total += 1
        if covered is None or not cs.overlaps(covered):
            out.append(cs)

    by_attr: dict[int, list[int]] = {}
    for c in targets:
        by_attr.setdefault(c[1], []).append(c[0])
    fallback: list[tuple[CellRef, object]] = []
    queued: set = set()
    cov = None
    if covered is not None:
        cov = np.zeros((n, len(schema)), dtype=bool)
        for c in covered:
            cov[c[0], c[1]] = True

    for dep in deps.all:
        if isinstance(dep, FunctionConstraint) or dep.arity == 1:
            for c in targets:
                if schema.attributes[c[1]].name in dep.attributes:
                    fallback.append((c, dep))
            continue
        symmetric = dep.swap_invariant
        for a, tuples in by_attr.items():
            name = schema.attributes[a].name
            for slot in (1, 2):
                if not any(o.is_attr and o.slot == slot and o.attribute == name
                           for p in dep.predicates for o in (p.lhs, p.rhs)):
                    continue
                plan = _Plan(dep, slot, name, schema)
                if not plan.rest:
                    for t in tuples:
                        if (CellRef(t, a), dep.id) not in queued:
                            queued.add((CellRef(t, a), dep.id))
                            fallback.append((CellRef(t, a), dep))
                    continue
                idx_all = np.asarray(tuples)
                for start in range(0, len(idx_all), chunk):
                    idx = idx_all[start:start + chunk]
                    rows = {slot: idx[:, None], 3 - slot: everyone[None, :]}
                    mask = np.ones((len(idx), n), dtype=bool)
                    if use_ttc:
                        for p in plan.rest:
                            truth, unknown = store.predicate(p, rows)
                            mask &= truth & ~unknown
                    mask[np.arange(len(idx)), idx] = False
                    if symmetric:
                        mask &= (everyone[None, :] > idx[:, None]) if slot == 1 else \
                                (everyone[None, :] < idx[:, None])
                    if cov is not None:
                        hit = np.zeros_like(mask)
                        for s, x in plan.member_ops:
                            hit |= cov[idx, x][:, None] if s == slot else cov[:, x][None, :]
                        total += int(np.count_nonzero(mask & hit))
                        mask &= ~hit
                    own_x = sorted({x for s, x in plan.member_ops if s == slot})
                    part_x = sorted({x for s, x in plan.member_ops if s != slot})
                    part_cells: dict[int, tuple] = {}
                    rs, js = np.nonzero(mask)
                    total += len(rs)
                    last_r, own, owner = -1, (), None
                    for r, j in zip(rs.tolist(), js.tolist()):
                        if r != last_r:
                            i = int(idx[r])
                            own = tuple(CellRef(i, x) for x in own_x)
                            owner, last_r = CellRef(i, a), r
                        part = part_cells.get(j)
                        if part is None:
                            part = part_cells[j] = tuple(CellRef(j, x) for x in part_x)
                        t1, t2 = (i, j) if slot == 1 else (j, i)
                        out.append(Cueset(owner, own + part if i < j else part + own,
                                          f"{dep.id}[{t1},{t2}]", (dep.id, t1, t2)))

    for c, dep in fallback:
        if isinstance(dep, FunctionConstraint) or dep.arity == 1:
            insts = instantiate(dep, c, view)
        else:
            insts = [inst for inst in instantiate(dep, c, view) if not inst.split(c)[1]]
        for inst in insts:
            members, warn = cueset_rule(inst, c, view, use_ttc)
            if warn is not None and warnings is not None:
                warnings.append(warn)
            if members is not None:
                emit(Cueset(c, members, inst.id, _binding_of(inst)))
    return out, total


def detect_query_based(targets: Iterable[CellRef], deps: DependencySet, instance: RelationInstance,
                       view, *, warnings: list | None = None) -> list[Cueset]:
    assert view.instance is instance
    return scan(targets, deps, view, warnings=warnings)[0]


def detect_oblivious(targets: Iterable[CellRef], deps: DependencySet, instance: RelationInstance,
                     *, warnings: list | None = None) -> list[Cueset]:
    """A cueset for every instantiation of every relevant dependency, ignoring the view."""
    return scan(targets, deps, QuerierView(instance), use_ttc=False, warnings=warnings)[0]


def filter_owner(cuesets: Sequence[Cueset], querier: str, instance: RelationInstance,
                 warnings: list | None = None) -> list[Cueset]:
    """Drop members owned by the querier; a cueset left empty is reported, not kept."""
    if instance.owners is None:
        raise MissingOwnership("ownership filtering needs an owner column")
    out = []
    for cs in cuesets:
        kept = tuple(m for m in cs.members if instance.owners[m[0]] != querier)
        if kept:
            out.append(Cueset(cs.owner, kept, cs.origin, cs.binding))
        elif warnings is not None:
            warnings.append(ResidualLeakage(cs.owner, cs.origin, "every cue cell belongs to the querier"))
    return out


def multiset_key(cuesets: Iterable[Cueset]) -> list[tuple]:
    return sorted((cs.owner, cs.members, cs.origin) for cs in cuesets)
