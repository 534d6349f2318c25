import pytest

from deniable.constraints import parse_constraints, validate_instance
from deniable.model import Schema
from deniable.synth import (TAX_CORE, GenerationTimeout, generate, sample_policies, sensitive_cells,
                            tax_constraints, tax_instance, tax_schema)


def test_tax_instance_satisfies_core_constraints():
    inst = tax_instance(100, seed=3)
    assert inst.n_tuples == 100
    assert validate_instance(inst, tax_constraints()) == []
    assert [d.id for d in tax_constraints().dcs] == list(TAX_CORE)


def test_full_tax_list_with_function():
    deps = tax_constraints(None)
    inst = generate(tax_schema(), deps, 60, seed=5)
    assert validate_instance(inst, deps) == []


def test_same_seed_same_rows():
    assert tax_instance(50, seed=9).to_csv() == tax_instance(50, seed=9).to_csv()
    assert tax_instance(50, seed=9).to_csv() != tax_instance(50, seed=10).to_csv()


def test_fd_groups_are_consistent():
    schema = Schema.from_dict({"relation": "R", "attributes": [
        {"name": "A", "kind": "discrete", "values": list(range(6))},
        {"name": "B", "kind": "discrete", "values": list(range(20))}]})
    deps = parse_constraints("dc: !(t1.A == t2.A & t1.B != t2.B)", schema)
    inst = generate(schema, deps, 200, seed=1)
    seen = {}
    for a, b in inst.rows:
        assert seen.setdefault(a, b) == b


def test_unsatisfiable_times_out():
    schema = Schema.from_dict({"relation": "R", "attributes": [
        {"name": "A", "kind": "discrete", "values": [1, 2]}]})
    deps = parse_constraints("dc: !(t1.A == t2.A)", schema)
    with pytest.raises(GenerationTimeout):
        generate(schema, deps, 3, seed=0, max_restarts=5)


def test_policy_prefixes():
    inst = tax_instance(80, seed=2)
    small, big = sample_policies(inst, 10, seed=4), sample_policies(inst, 30, seed=4)
    assert big[:10] == small
    assert sensitive_cells(inst, small) < sensitive_cells(inst, big)
    assert len(sensitive_cells(inst, big)) == 30
