"""Seeded synthetic instances that satisfy a given constraint set, plus a Tax-like preset."""

from __future__ import annotations

import random
from typing import Sequence

import numpy as np

from .constraints import (EQ_TOL, DenialConstraint, DependencySet, FunctionConstraint, fc_value,
                          parse_constraints)
from .model import CellRef, Policy, RelationInstance, Schema


class GenerationTimeout(RuntimeError):
    pass


def _pool(attr, rng: random.Random, points: int = 64) -> list:
    if attr.is_discrete:
        values = list(attr.values)
    else:
        step = (attr.high - attr.low) / points
        values = [round(attr.low + i * step, 6) for i in range(points + 1)]
    rng.shuffle(values)
    return values


def _order(schema: Schema, deps: DependencySet) -> list[int]:
    outputs = [schema.index(fc.output_attr) for fc in deps.fcs]
    rest = [i for i in range(len(schema)) if i not in outputs]
    return rest + [i for i in dict.fromkeys(outputs)]


class _Columns:
    """Growing numeric copy of the rows generated so far."""

    def __init__(self, schema: Schema, capacity: int):
        self.schema = schema
        self.data = np.zeros((capacity, len(schema)))
        self.n = 0
        self.codes = [None if a.ordered else {v: k for k, v in enumerate(a.values)}
                      for a in schema.attributes]

    def encode(self, a: int, value) -> float:
        code = self.codes[a]
        return float(value) if code is None else float(code.get(value, -1))

    def push(self, row: Sequence[float]) -> None:
        self.data[self.n] = row
        self.n += 1


def _cmp(a, op: str, b):
    diff = a - b
    if op == "==":
        return np.abs(diff) <= EQ_TOL
    if op == "!=":
        return np.abs(diff) > EQ_TOL
    if op == "<":
        return diff < -EQ_TOL
    if op == "<=":
        return diff <= EQ_TOL
    if op == ">":
        return diff > EQ_TOL
    return diff >= -EQ_TOL


def _violates(dc: DenialConstraint, new: dict[int, float], cols: _Columns) -> bool:
    """Would the partial row `new` (attribute index -> code) break `dc` against itself or earlier rows?"""
    schema = cols.schema
    old = cols.data[:cols.n]

    def side(o, slot_new: int):
        if not o.is_attr:
            return None
        a = schema.index(o.attribute)
        return new[a] if o.slot == slot_new else old[:, a]

    def holds(slot_new: int):
        mask = None
        for p in dc.predicates:
            lhs, rhs = side(p.lhs, slot_new), side(p.rhs, slot_new)
            if lhs is None:
                lhs = cols.encode(schema.index(p.rhs.attribute), p.lhs.literal)
            if rhs is None:
                rhs = cols.encode(schema.index(p.lhs.attribute), p.rhs.literal)
            r = _cmp(np.asarray(lhs, dtype=float), p.op, np.asarray(rhs, dtype=float))
            mask = r if mask is None else mask & r
        return mask

    if dc.arity == 1:
        return bool(holds(dc.slots[0]))
    if cols.n == 0:
        return False
    return bool(np.any(holds(1))) or bool(np.any(holds(2)))


def generate(schema: Schema, deps: DependencySet, n: int, seed: int = 42,
             max_restarts: int = 500) -> RelationInstance:
    """Sample `n` rows attribute by attribute, rejecting values that break a constraint."""
    deps.validate(schema)
    rng = random.Random(seed)
    order = _order(schema, deps)
    position = {a: k for k, a in enumerate(order)}
    # a constraint is checked as soon as its last attribute (in sampling order) is assigned
    due: dict[int, list[DenialConstraint]] = {}
    for dc in deps.dcs:
        last = max(position[schema.index(a)] for a in dc.attributes)
        due.setdefault(order[last], []).append(dc)
    fc_for = {schema.index(fc.output_attr): fc for fc in deps.fcs}
    cols = _Columns(schema, max(n, 1))
    rows = []
    for _ in range(n):
        for _attempt in range(max_restarts):
            row = _sample_row(schema, order, due, fc_for, cols, rng)
            if row is not None:
                break
        else:
            raise GenerationTimeout(f"could not extend past {len(rows)} rows within {max_restarts} restarts")
        rows.append(tuple(row[a] for a in range(len(schema))))
        cols.push([cols.encode(a, row[a]) for a in range(len(schema))])
    return RelationInstance(schema, tuple(rows))


def _sample_row(schema, order, due, fc_for, cols, rng):
    values: dict[int, object] = {}
    codes: dict[int, float] = {}
    for a in order:
        attr = schema.attributes[a]
        if a in fc_for:
            fc = fc_for[a]
            v = fc_value(schema, [values[schema.index(x)] for x in fc.input_attrs])
            if attr.is_discrete:
                v = next((d for d in attr.values if abs(float(d) - v) <= EQ_TOL), None)
                pool = [] if v is None else [v]
            else:
                pool = [v] if attr.contains(v) else []
        else:
            pool = _pool(attr, rng)
        for v in pool:
            codes[a] = cols.encode(a, v)
            if not any(_violates(dc, codes, cols) for dc in due.get(a, ())):
                values[a] = v
                break
        else:
            return None
    return values


# ---------------------------------------------------------------------------
# Tax-like preset

STATES = ("CA", "NY", "TX", "FL", "WA", "IL", "MA", "OH")


def tax_schema() -> Schema:
    return Schema.from_dict({
        "relation": "Tax",
        "attributes": [
            {"name": "Zip", "kind": "discrete", "values": [f"{90000 + 37 * i}" for i in range(60)]},
            {"name": "City", "kind": "discrete", "values": [f"City{i:02d}" for i in range(24)]},
            {"name": "State", "kind": "discrete", "values": list(STATES)},
            {"name": "AreaCode", "kind": "discrete", "values": [f"{200 + 7 * i}" for i in range(30)]},
            {"name": "Marital", "kind": "discrete", "values": ["S", "M"]},
            {"name": "HasChild", "kind": "discrete", "values": ["Y", "N"]},
            {"name": "ChildExemp", "kind": "discrete", "values": [0, 1000, 2000, 3000]},
            {"name": "SingleExemp", "kind": "discrete", "values": [0, 1500, 3000, 4500]},
            {"name": "Salary", "kind": "continuous", "range": [10000, 200000]},
            {"name": "Rate", "kind": "continuous", "range": [0, 0.5]},
            {"name": "Tax", "kind": "continuous", "range": [0, 100000]},
        ],
        "fc_function": "product",
    })


TAX_CONSTRAINTS = """\
# Tax-like dependency list
dc:zip_city: !(t1.Zip == t2.Zip & t1.City != t2.City)
dc:area_state: !(t1.AreaCode == t2.AreaCode & t1.State != t2.State)
dc:zip_state: !(t1.Zip == t2.Zip & t1.State != t2.State)
dc:child_exemp: !(t1.State != t2.State & t1.HasChild == t2.HasChild & t1.ChildExemp != t2.ChildExemp)
dc:single_exemp: !(t1.State != t2.State & t1.Marital == t2.Marital & t1.SingleExemp != t2.SingleExemp)
dc:salary_rate: !(t1.State != t2.State & t1.Salary > t2.Salary & t1.Rate < t2.Rate)
dc:mixed_1: !(t1.AreaCode != t2.AreaCode & t1.Zip == t2.Zip & t1.HasChild == t2.HasChild & t1.Salary > t2.Salary & t1.Rate < t2.Rate & t1.SingleExemp != t2.SingleExemp)
dc:mixed_2: !(t1.Marital != t2.Marital & t1.Salary != t2.Salary & t1.Rate == t2.Rate & t1.SingleExemp == t2.SingleExemp & t1.ChildExemp != t2.ChildExemp)
dc:mixed_3: !(t1.State != t2.State & t1.Marital != t2.Marital & t1.Rate == t2.Rate & t1.SingleExemp == t2.SingleExemp & t1.ChildExemp != t2.ChildExemp)
dc:state_salary: !(t1.State == t2.State & t1.Salary == t2.Salary & t1.Rate != t2.Rate)
fc:tax: t1.Tax = fn(t1.Salary, t1.Rate) noninvertible
"""

# the five constraints used for the 1K-row experiments
TAX_CORE = ("zip_city", "area_state", "zip_state", "single_exemp", "salary_rate")


def tax_constraints(ids: Sequence[str] | None = TAX_CORE) -> DependencySet:
    full = parse_constraints(TAX_CONSTRAINTS, tax_schema())
    if ids is None:
        return full
    keep = set(ids)
    return DependencySet(tuple(d for d in full.dcs if d.id in keep),
                         tuple(f for f in full.fcs if f.id in keep))


def tax_instance(n: int = 1000, seed: int = 7, ids: Sequence[str] | None = TAX_CORE) -> RelationInstance:
    return generate(tax_schema(), tax_constraints(ids), n, seed)


def sample_policies(instance: RelationInstance, count: int, seed: int = 0, attribute: str = "State",
                    querier: str = "Q") -> list[Policy]:
    """Deny policies each hiding `attribute` of one tuple.

    Tuples come from a seeded permutation, so the policies for `count` are a prefix of
    those for any larger count.
    """
    order = list(range(instance.n_tuples))
    random.Random(seed).shuffle(order)
    return [Policy(querier, (attribute,), tuples=(t,)) for t in order[:count]]


def sensitive_cells(instance: RelationInstance, policies: Sequence[Policy]) -> set[CellRef]:
    from .model import sensitivity_determination
    return set(sensitivity_determination(policies, policies[0].querier if policies else "", instance).cells)


HOSPITAL_CONSTRAINTS = """\
# Hospital-like dependency list
dc:h1: !(t1.Condition == t2.Condition & t1.MeasureName == t2.MeasureName & t1.HospitalType != t2.HospitalType)
dc:h2: !(t1.HospitalName == t2.HospitalName & t1.ZIPCode != t2.ZIPCode)
dc:h3: !(t1.HospitalName == t2.HospitalName & t1.PhoneNumber != t2.PhoneNumber)
dc:h4: !(t1.MeasureCode == t2.MeasureCode & t1.MeasureName != t2.MeasureName)
dc:h5: !(t1.MeasureCode == t2.MeasureCode & t1.StateAvg != t2.StateAvg)
dc:h6: !(t1.MeasureCode == t2.MeasureCode & t1.Condition != t2.Condition)
dc:h7: !(t1.HospitalName == t2.HospitalName & t1.HospitalOwner != t2.HospitalOwner)
dc:h8: !(t1.HospitalName == t2.HospitalName & t1.ProviderNumber != t2.ProviderNumber)
dc:h9: !(t1.ProviderNumber == t2.ProviderNumber & t1.HospitalName != t2.HospitalName)
dc:h10: !(t1.City == t2.City & t1.CountyName != t2.CountyName)
dc:h11: !(t1.ZIPCode == t2.ZIPCode & t1.EmergencyService != t2.EmergencyService)
dc:h12: !(t1.HospitalName == t2.HospitalName & t1.City != t2.City)
dc:h13: !(t1.MeasureName == t2.MeasureName & t1.MeasureCode != t2.MeasureCode)
dc:h14: !(t1.HospitalName == t2.HospitalName & t1.PhoneNumber == t2.PhoneNumber & t1.HospitalOwner == t2.HospitalOwner & t1.State != t2.State)
"""
