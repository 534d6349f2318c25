import json

import pytest

from deniable.cli import main
from deniable.model import QuerierView, load_relation, load_schema, read_view_csv

from builders import EMPLOYEE_DC, EMPLOYEE_SCHEMA, employee, numbered_cell


@pytest.fixture
def files(tmp_path):
    _, inst, _ = employee()
    paths = {
        "data": tmp_path / "emp.csv",
        "schema": tmp_path / "emp.json",
        "constraints": tmp_path / "emp.dc",
        "policies": tmp_path / "pol.json",
    }
    paths["data"].write_text(inst.to_csv())
    paths["schema"].write_text(json.dumps(EMPLOYEE_SCHEMA))
    paths["constraints"].write_text(EMPLOYEE_DC + "\n")
    paths["policies"].write_text(json.dumps([{"querier": "Q1", "cells": [[1, "SalPerHr"]]}]))
    return tmp_path, {k: str(v) for k, v in paths.items()}


def common(p, querier=True):
    args = ["--data", p["data"], "--schema", p["schema"], "--constraints", p["constraints"]]
    if querier:
        args += ["--policies", p["policies"], "--querier", "Q1"]
    return args


def test_protect_then_verify(files, capsys):
    tmp, p = files
    out, rep = str(tmp / "v.csv"), str(tmp / "r.json")
    code = main(["protect", *common(p), "--mode", "full", "--protection", "mvc", "--out", out, "--report", rep])
    assert code == 0
    report = json.loads((tmp / "r.json").read_text())
    assert report["format"] == 1 and report["total_hidden"] == sum(report["hidden_per_invocation"])
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == "invocation\tcells_detected\tcuesets" and printed[-1].startswith("# sensitive=1")
    assert "\\N" in (tmp / "v.csv").read_text()
    assert main(["verify", *common(p), "--view", out]) == 0


def test_verify_flags_sensitive_only_view(files, capsys):
    tmp, p = files
    _, inst, _ = employee()
    view = tmp / "bare.csv"
    view.write_text(QuerierView(inst, frozenset({numbered_cell(14)})).to_csv())
    assert main(["verify", *common(p), "--view", str(view)]) == 4
    assert "(1,SalPerHr)" in capsys.readouterr().err
    base = tmp / "base.csv"
    base.write_text(QuerierView(inst, frozenset(inst.cells())).to_csv())
    assert main(["verify", *common(p), "--view", str(base)]) == 0


def test_verify_budget_exit(files):
    tmp, p = files
    _, inst, _ = employee()
    view = tmp / "wide.csv"
    view.write_text(QuerierView(inst, frozenset({numbered_cell(14), numbered_cell(11)})).to_csv())
    assert main(["verify", *common(p), "--view", str(view), "--budget", "2"]) == 3


def test_residual_warning_exit(files):
    tmp, p = files
    (tmp / "emp.dc").write_text(EMPLOYEE_DC + "\ndc:cap: !(t1.SalPerHr > 900)\n")
    out = str(tmp / "v.csv")
    assert main(["protect", *common(p), "--out", out]) == 2
    assert (tmp / "v.csv").exists()


@pytest.mark.parametrize("extra", [
    ["--mode", "kden"],
    ["--k", "0.5"],
    ["--bin-size", "2"],
    ["--protection", "best"],
])
def test_usage_errors(files, extra):
    _, p = files
    assert main(["protect", *common(p), *extra]) == 1


def test_io_and_data_errors(files):
    tmp, p = files
    assert main(["protect", *common(dict(p, data=str(tmp / "missing.csv")))]) == 1
    (tmp / "emp.csv").write_text((tmp / "emp.csv").read_text().replace("Faculty,20.0,200.0", "Faculty,20.0,250.0"))
    # the data now breaks its own constraint
    assert main(["protect", *common(p)]) == 1
    assert main([]) == 1


def test_kden_and_binning_dispatch(files):
    tmp, p = files
    rep = tmp / "r.json"
    assert main(["protect", *common(p), "--mode", "kden", "--k", "0.5", "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["mode"] == "kden"
    assert main(["protect", *common(p), "--bin-size", "2", "--merge-size", "2", "--report", str(rep)]) == 0
    assert [s["kind"] for s in json.loads(rep.read_text())["stages"]][:3] == ["bin", "bin", "merge"]


def test_figures(files):
    tmp, p = files
    figs = tmp / "figs"
    assert main(["protect", *common(p), "--out", str(tmp / "v.csv"), "--figures", str(figs)]) == 0
    assert (figs / "invocations.png").stat().st_size > 0
    assert main(["connectivity", "--schema", p["schema"], "--constraints", p["constraints"],
                 "--figures", str(figs)]) == 0
    assert (figs / "connectivity.png").stat().st_size > 0


def test_attack_on_protected_view(files, capsys):
    tmp, p = files
    out = str(tmp / "v.csv")
    main(["protect", *common(p), "--out", out])
    capsys.readouterr()
    rep = tmp / "a.json"
    assert main(["attack", *common(p), "--view", out, "--report", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert data["constraint_propagation"]["total"] == 0
    again = tmp / "b.json"
    main(["attack", *common(p), "--view", out, "--report", str(again)])
    assert json.loads(again.read_text())["weighted_sampling"] == data["weighted_sampling"]


def test_gen_is_deterministic(files):
    tmp, p = files
    fd_schema = tmp / "fd.json"
    fd_schema.write_text(json.dumps({"relation": "R", "attributes": [
        {"name": "A", "kind": "discrete", "values": [1, 2, 3]},
        {"name": "B", "kind": "discrete", "values": [1, 2, 3, 4]}]}))
    fd = tmp / "fd.dc"
    fd.write_text("dc: !(t1.A == t2.A & t1.B != t2.B)\n")
    a, b = tmp / "a.csv", tmp / "b.csv"
    for path in (a, b):
        assert main(["gen", "--schema", str(fd_schema), "--constraints", str(fd), "--n", "40",
                     "--seed", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    inst = load_relation(a.read_text(), load_schema(fd_schema.read_text()))
    assert inst.n_tuples == 40
    assert main(["gen", "--n", "5"]) == 1


def test_gen_tax_preset(tmp_path):
    out = tmp_path / "tax"
    assert main(["gen", "--preset", "tax", "--n", "30", "--out-dir", str(out), "--only", "zip_city", "zip_state"]) == 0
    for name in ("tax.csv", "tax.schema.json", "tax.dc"):
        assert (out / name).exists()
    schema = load_schema((out / "tax.schema.json").read_text())
    assert load_relation((out / "tax.csv").read_text(), schema).n_tuples == 30


def test_connectivity_table(files, capsys):
    _, p = files
    assert main(["connectivity", "--schema", p["schema"], "--constraints", p["constraints"]]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "attribute\tscore\tgroup" and len(rows) == 8


def test_view_round_trip_from_cli(files):
    tmp, p = files
    out = tmp / "v.csv"
    main(["protect", *common(p), "--out", str(out)])
    _, inst, _ = employee()
    assert numbered_cell(14) in read_view_csv(out.read_text(), inst).hidden
