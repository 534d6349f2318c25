import json

import pytest
from hypothesis import given, strategies as st

from deniable.model import (AttributeDef, CellRef, DomainViolation, ModelError, Policy, QuerierView,
                            RelationInstance, Schema, SchemaMismatch, UnknownAttribute, base_view,
                            domain_size, load_policies, load_relation, load_schema, read_view_csv,
                            sensitivity_determination, Condition)

from builders import EMPLOYEE_SCHEMA, employee

SMALL = Schema.from_dict({"relation": "R", "attributes": [
    {"name": "State", "kind": "discrete", "values": ["CA", "NY", "TX"]},
    {"name": "Zip", "kind": "discrete", "values": ["1", "2"]},
    {"name": "Salary", "kind": "continuous", "range": [0, 1000]},
]})


def test_load_relation_counts_cells():
    inst = load_relation("State,Zip,Salary\nCA,1,10\nNY,2,20.5\n", SMALL)
    assert inst.n_tuples == 2 and inst.n_cells == 6
    assert inst.value(CellRef(1, 2)) == 20.5


def test_load_relation_rejects_value_outside_domain():
    with pytest.raises(DomainViolation) as err:
        load_relation("State,Zip,Salary\nXX,1,10\n", SMALL)
    assert err.value.row == 0 and err.value.column == "State"


def test_load_relation_rejects_bad_header():
    with pytest.raises(SchemaMismatch):
        load_relation("Zip,State,Salary\n1,CA,10\n", SMALL)
    with pytest.raises(SchemaMismatch):
        load_relation("State,Zip,Salary\nCA,1\n", SMALL)


def test_tax_like_cells_addressable():
    schema = Schema.from_dict({"relation": "Tax", "attributes": [
        {"name": "State", "kind": "discrete", "values": ["CA", "NY"]},
        {"name": "Zip", "kind": "discrete", "values": ["90001", "10001"]},
        {"name": "Salary", "kind": "continuous", "range": [0, 100000]},
        {"name": "Rate", "kind": "continuous", "range": [0, 1]},
    ]})
    text = "State,Zip,Salary,Rate\nCA,90001,50000,0.2\nCA,90001,60000,0.3\nNY,10001,70000,0.3\nNY,10001,20000,0.1\n"
    inst = load_relation(text, schema)
    assert inst.n_cells == 16
    assert inst.cell(2, "Zip") == CellRef(2, 1)
    assert inst.value(inst.cell(3, "Rate")) == 0.1


def test_domain_size():
    assert domain_size(SMALL.attr("State")) == 3
    assert domain_size(SMALL.attr("Salary")) == 1000
    with pytest.raises(ModelError):
        AttributeDef("X", "continuous", low=200, high=200)
    with pytest.raises(ModelError):
        AttributeDef("X", "discrete", values=("a", "a"))


def test_base_view():
    inst = load_relation("State,Zip,Salary\nCA,1,10\nNY,2,20\n", SMALL)
    v = base_view(inst)
    assert len(v.hidden) == 6
    assert all(v.observe(c) is None for c in inst.cells())
    assert base_view(RelationInstance(SMALL, ())).hidden == frozenset()


def test_view_observation_and_csv_round_trip():
    inst = load_relation("State,Zip,Salary\nCA,1,10\nNY,2,20\n", SMALL)
    v = QuerierView(inst, frozenset({CellRef(0, 2)}))
    assert v.observe(CellRef(0, 2)) is None and v.observe(CellRef(1, 2)) == 20
    text = v.to_csv()
    assert "\\N" in text
    assert read_view_csv(text, inst).hidden == v.hidden
    with pytest.raises(IndexError):
        QuerierView(inst, frozenset({CellRef(5, 0)}))


def test_example_policy_selects_salary_cell():
    schema, inst, _ = employee()
    p = Policy("John Doe", ("SalPerHr",), (Condition("EName", "=", "Carrie Sea"),), "Employee")
    s = sensitivity_determination([p], "John Doe", inst)
    assert s.cells == {inst.cell(2, "SalPerHr")}
    assert sensitivity_determination([p], "someone else", inst).cells == frozenset()
    assert sensitivity_determination([], "John Doe", inst).cells == frozenset()


def test_overlapping_policies_union_and_order_free():
    schema, inst, _ = employee()
    a = Policy("Q", ("SalPerHr",), (Condition("Role", "==", "Faculty"),))
    b = Policy("Q", ("SalPerHr", "WorkHrs"), (Condition("EName", "==", "Bobby Baker"),))
    allow = Policy("Q", ("State",), action="allow")
    one = sensitivity_determination([a, b, allow], "Q", inst).cells
    two = sensitivity_determination([allow, b, a], "Q", inst).cells
    assert one == two
    assert one == {CellRef(1, 6), CellRef(2, 6), CellRef(1, 5)}
    assert base_view(inst).hidden >= one


def test_policy_unknown_attribute():
    schema, inst, _ = employee()
    with pytest.raises(UnknownAttribute):
        sensitivity_determination([Policy("Q", ("Bonus",))], "Q", inst)


def test_policy_file_forms():
    schema, inst, _ = employee()
    text = json.dumps([
        {"querier": "Q", "relation": "Employee", "selection": [{"attr": "State", "op": "=", "value": "NY"}],
         "projection": ["SalPerHr"], "action": "deny"},
        {"querier": "Q", "cells": [[0, "State"], [1, 4]]},
    ])
    policies = load_policies(text, schema)
    cells = sensitivity_determination(policies, "Q", inst).cells
    assert cells == {CellRef(3, 6), CellRef(0, 3), CellRef(1, 4)}


def test_schema_round_trip_and_owner_column():
    data = dict(EMPLOYEE_SCHEMA, owner_column="Owner")
    schema = load_schema(json.dumps(data))
    assert Schema.from_dict(schema.to_dict()) == schema
    inst = load_relation("EId,EName,Zip,State,Role,WorkHrs,SalPerHr,Owner\n"
                         "1,Alice Ames,92612,CA,Staff,40,100,alice\n", schema)
    assert inst.owners == ("alice",)
    assert inst.to_csv().splitlines()[0].endswith(",Owner")


@given(st.lists(st.sets(st.tuples(st.integers(0, 3), st.integers(0, 2)), max_size=5), max_size=4))
def test_sensitivity_is_union_of_direct_policies(groups):
    inst = load_relation("State,Zip,Salary\n" + "CA,1,10\n" * 4, SMALL)
    policies = [Policy("Q", (SMALL.attributes[a].name,), tuples=(t,)) for g in groups for t, a in g]
    expected = {CellRef(t, a) for g in groups for t, a in g}
    assert sensitivity_determination(policies, "Q", inst).cells == expected
    assert sensitivity_determination(list(reversed(policies)), "Q", inst).cells == expected
