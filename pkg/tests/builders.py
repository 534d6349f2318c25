"""Fixtures and reference computations shared by the test modules."""

from __future__ import annotations

import functools
import itertools
import random

from deniable.constraints import DependencySet, parse_constraints
from deniable.model import CellRef, Policy, QuerierView, RelationInstance, Schema
from deniable.synth import GenerationTimeout, generate, tax_constraints, tax_instance

EMPLOYEE_SCHEMA = {
    "relation": "Employee",
    "attributes": [
        {"name": "EId", "kind": "discrete", "values": [1, 2, 3, 4]},
        {"name": "EName", "kind": "discrete",
         "values": ["Alice Ames", "Bobby Baker", "Carrie Sea", "Danny Dunn"]},
        {"name": "Zip", "kind": "discrete", "values": ["92612", "10001"]},
        {"name": "State", "kind": "discrete", "values": ["CA", "NY", "TX"]},
        {"name": "Role", "kind": "discrete", "values": ["Staff", "Faculty"]},
        {"name": "WorkHrs", "kind": "continuous", "range": [0, 80], "bins": 8},
        {"name": "SalPerHr", "kind": "continuous", "range": [0, 1000], "bins": 10},
    ],
}

EMPLOYEE_ROWS = (
    (1, "Alice Ames", "92612", "CA", "Staff", 40.0, 100.0),
    (2, "Bobby Baker", "92612", "CA", "Faculty", 20.0, 200.0),
    (3, "Carrie Sea", "92612", "CA", "Faculty", 30.0, 200.0),
    (4, "Danny Dunn", "10001", "NY", "Staff", 40.0, 150.0),
)

# same state and role: the first may not earn more per hour than the second
EMPLOYEE_DC = "dc:sal: !(t1.State == t2.State & t1.Role == t2.Role & t1.SalPerHr > t2.SalPerHr)"


def numbered_cell(k: int, width: int = 7) -> CellRef:
    """Translate 1-based row-major cell numbering (c1, c2, ...) to a CellRef."""
    return CellRef((k - 1) // width, (k - 1) % width)


def employee():
    """Employee table where faculty in one state share a SalPerHr; c14 is Bobby's, c21 Carrie's (both 200)."""
    schema = Schema.from_dict(EMPLOYEE_SCHEMA)
    deps = parse_constraints(EMPLOYEE_DC, schema)
    return schema, RelationInstance(schema, EMPLOYEE_ROWS), deps


COUNTER_SCHEMA = {
    "relation": "R",
    "attributes": [{"name": n, "kind": "discrete", "values": [1, 2, 3]} for n in ("A1", "A2", "A3")],
}
COUNTER_DCS = """\
dc:a1_a2: !(t1.A1 == t2.A1 & t1.A2 != t2.A2)
dc:a2_a3: !(t1.A2 == t2.A2 & t1.A3 != t2.A3)
dc:a1_a3: !(t1.A1 == t2.A1 & t1.A3 != t2.A3)
"""


def counter_example():
    """Two equal tuples under A1->A2, A2->A3, A1->A3; the sensitive cell is c6 = t2.A3."""
    schema = Schema.from_dict(COUNTER_SCHEMA)
    deps = parse_constraints(COUNTER_DCS, schema)
    inst = RelationInstance(schema, ((1, 2, 2), (1, 2, 2)))
    return schema, inst, deps, {numbered_cell(6, 3)}


RANDOM_OPS = ("==", "!=", "<", ">")


def random_dcs(rng: random.Random, names, max_dcs: int = 3, max_preds: int = 3) -> str:
    lines = []
    for k in range(rng.randint(1, max_dcs)):
        preds = set()
        while len(preds) < rng.randint(2, max_preds):
            a, b = rng.choice(names), rng.choice(names)
            op = rng.choice(RANDOM_OPS)
            preds.add(f"t1.{a} {op} t2.{b}")
        lines.append(f"dc:r{k}: !(" + " & ".join(sorted(preds)) + ")")
    return "\n".join(lines) + "\n"


def random_case(seed: int, max_tuples: int = 5, max_attrs: int = 4, max_dom: int = 4,
                max_dcs: int = 3, sensitive: tuple = (1, 2)):
    """Small random instance with binary constraints it satisfies, plus 1-2 sensitive cells.

    Attributes share one domain and predicates use strict comparisons only, so a
    predicate with a hidden operand can always be made False by some domain value.
    """
    rng = random.Random(seed)
    while True:
        n_attr = rng.randint(2, max_attrs)
        names = [f"A{i}" for i in range(n_attr)]
        dom = list(range(rng.randint(2, max_dom)))
        schema = Schema.from_dict({"relation": "R", "attributes": [
            {"name": a, "kind": "discrete", "values": dom} for a in names]})
        deps = parse_constraints(random_dcs(rng, names, max_dcs), schema)
        n = rng.randint(2, max_tuples)
        try:
            inst = generate(schema, deps, n, seed=rng.randrange(10 ** 6), max_restarts=50)
        except GenerationTimeout:
            continue
        cells = list(inst.cells())
        s = set(rng.sample(cells, rng.randint(*sensitive)))
        return schema, inst, deps, s


def exact_min_cover(sets) -> int:
    """Size of a smallest hitting set, by trying every subset in order of size."""
    universe = sorted({c for s in sets for c in s})
    for k in range(len(universe) + 1):
        for combo in itertools.combinations(universe, k):
            chosen = set(combo)
            if all(chosen & set(s) for s in sets):
                return k
    raise AssertionError("unreachable")


@functools.lru_cache(maxsize=None)
def tax_1k():
    return tax_instance(1000, seed=7)


def tax_core() -> DependencySet:
    return tax_constraints()


def direct_policy(querier: str, cells, schema: Schema) -> list[Policy]:
    return [Policy(querier, (schema.attributes[a].name,), tuples=(t,)) for t, a in cells]


def random_detection_case(seed):
    """Instance with up to 20 tuples and 4 constraints (sometimes a unary one), plus a random view."""
    rng = random.Random(seed)
    while True:
        names = [f"A{i}" for i in range(rng.randint(2, 4))]
        dom = list(range(rng.randint(2, 4)))
        schema = Schema.from_dict({"relation": "R", "attributes": [
            {"name": a, "kind": "discrete", "values": dom} for a in names]})
        text = random_dcs(rng, names, max_dcs=4, max_preds=3)
        if rng.random() < 0.3:
            text += f"dc:u: !(t1.{names[0]} == {dom[-1]} & t1.{names[1]} == {dom[0]})\n"
        deps = parse_constraints(text, schema)
        try:
            inst = generate(schema, deps, rng.randint(2, 20), seed=rng.randrange(10 ** 6), max_restarts=30)
        except GenerationTimeout:
            continue
        cells = list(inst.cells())
        hidden = frozenset(rng.sample(cells, rng.randint(1, min(8, len(cells)))))
        return inst, deps, QuerierView(inst, hidden)


# golden 5-row fixtures satisfying every Tax and Hospital constraint

TAX_ROWS = (
    ("90000", "City00", "CA", "200", "S", "Y", 1000, 1500, 50000.0, 0.2, 10000.0),
    ("90000", "City00", "CA", "200", "M", "N", 0, 3000, 80000.0, 0.25, 20000.0),
    ("90037", "City01", "NY", "207", "S", "Y", 1000, 1500, 60000.0, 0.25, 15000.0),
    ("90074", "City02", "NY", "214", "M", "N", 0, 3000, 100000.0, 0.3, 30000.0),
    ("90111", "City03", "TX", "221", "S", "N", 0, 1500, 40000.0, 0.2, 8000.0),
)

HOSPITAL_NAMES = ("ProviderNumber", "HospitalName", "City", "State", "ZIPCode", "CountyName", "PhoneNumber",
                  "HospitalType", "HospitalOwner", "EmergencyService", "Condition", "MeasureCode",
                  "MeasureName", "StateAvg")
HOSPITAL_ROWS = (
    ("P1", "H1", "Boaz", "AL", "35957", "Marshall", "2565938310", "Acute", "Gov", "Yes",
     "Heart Attack", "AMI-1", "Aspirin at arrival", "AL_AMI-1"),
    ("P1", "H1", "Boaz", "AL", "35957", "Marshall", "2565938310", "Acute", "Gov", "Yes",
     "Heart Failure", "HF-1", "Discharge instructions", "AL_HF-1"),
    ("P2", "H2", "Dothan", "AL", "36301", "Houston", "3347938701", "Acute", "Private", "Yes",
     "Heart Attack", "AMI-1", "Aspirin at arrival", "AL_AMI-1"),
    ("P3", "H3", "Boaz", "AL", "35957", "Marshall", "2565930000", "Acute", "Gov", "Yes",
     "Pneumonia", "PN-2", "Pneumococcal vaccination", "AL_PN-2"),
    ("P4", "H4", "Mobile", "AL", "36608", "Mobile", "2514351000", "Acute", "Private", "No",
     "Pneumonia", "PN-2", "Pneumococcal vaccination", "AL_PN-2"),
)


def hospital():
    attrs = []
    for i, name in enumerate(HOSPITAL_NAMES):
        values = list(dict.fromkeys(r[i] for r in HOSPITAL_ROWS)) + ["other"]
        attrs.append({"name": name, "kind": "discrete", "values": values})
    schema = Schema.from_dict({"relation": "Hospital", "attributes": attrs})
    return schema, RelationInstance(schema, HOSPITAL_ROWS)
