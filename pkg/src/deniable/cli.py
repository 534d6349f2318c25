"""Command line: protect, verify, attack, gen, connectivity.

Exit codes: 0 ok, 1 usage or I/O error, 2 view written with residual-leakage
warnings, 3 oracle enumeration budget exceeded, 4 deniability violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import plots
from .constraints import ConstraintError, parse_constraints, validate_instance
from .engine import EngineOptions, IterationCapExceeded, run_binning, run_full
from .model import (ModelError, load_policies, load_relation, load_schema, read_view_csv,
                    sensitivity_determination)
from .synth import TAX_CONSTRAINTS, GenerationTimeout, generate, tax_schema
from .verify import (DomainTooLarge, attack_constraint_propagation, attack_weighted_sampling,
                     check_full_deniability, connectivity_groups, dependency_connectivity)

log = logging.getLogger("deniable")

EXIT_OK, EXIT_USAGE, EXIT_RESIDUAL, EXIT_BUDGET, EXIT_VIOLATION = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _inputs(args, need_policies: bool = True):
    schema = load_schema(_read(args.schema))
    instance = load_relation(_read(args.data), schema)
    deps = parse_constraints(_read(args.constraints), schema)
    policies = load_policies(_read(args.policies), schema) if need_policies and args.policies else []
    return schema, instance, deps, policies


def cmd_protect(args) -> int:
    if args.k is not None and args.mode != "kden":
        raise UsageError("--k only applies with --mode kden")
    if args.mode == "kden" and args.k is None:
        raise UsageError("--mode kden needs --k")
    if (args.bin_size is None) != (args.merge_size is None):
        raise UsageError("--bin-size and --merge-size go together")
    schema, instance, deps, policies = _inputs(args)
    broken = validate_instance(instance, deps)
    if broken:
        first = broken[0]
        raise UsageError(f"data violates {len(broken)} constraint instantiation(s), "
                         f"first: {first.constraint_id} on tuples {list(first.tuples)}")
    options = EngineOptions(mode=args.mode, k=args.k, detection=args.detection, protection=args.protection,
                            cloak_attrs=tuple(args.cloak or ()), owner_filter=args.owner_filter,
                            seed=args.seed)
    if args.bin_size is not None:
        view, report = run_binning(args.querier, policies, deps, instance, args.bin_size, args.merge_size, options)
    else:
        view, report = run_full(args.querier, policies, deps, instance, options)
    _write(args.out, view.to_csv())
    rep = report.to_dict()
    _write(args.report, json.dumps(rep, indent=2))
    if args.figures:
        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plots.invocation_chart(rep, Path(args.figures) / "invocations.png")
    print("invocation\tcells_detected\tcuesets")
    for j, (h, c) in enumerate(zip(report.hidden_per_invocation, report.cuesets_per_invocation), start=1):
        print(f"{j}\t{h}\t{c}")
    print(f"# sensitive={report.sensitive} total_hidden={report.total_hidden} "
          f"residual_warnings={len(report.residual_warnings)} wall_ms={report.wall_ms:.1f}")
    if args.out is None:
        sys.stdout.write(view.to_csv())
    return EXIT_RESIDUAL if report.residual_warnings else EXIT_OK


def cmd_verify(args) -> int:
    schema, instance, deps, policies = _inputs(args)
    view = read_view_csv(_read(args.view), instance)
    sensitive = sensitivity_determination(policies, args.querier, instance).cells
    result = check_full_deniability(instance, deps, sensitive, view, budget=args.budget)
    _write(args.report, json.dumps({"format": 1, "oracle": result.to_dict()}, indent=2, default=str))
    print("cell\tattribute\tequal\tunder_view\tunder_base")
    for v in result.verdicts:
        print(f"{v.cell[0]}\t{schema.attributes[v.cell[1]].name}\t{v.equal}\t{len(v.under_view)}\t{len(v.under_base)}")
    if not result.passed:
        names = ", ".join(f"({c[0]},{schema.attributes[c[1]].name})" for c in result.failures)
        print(f"# deniability violated for {names}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"# full deniability holds for {len(result.verdicts)} sensitive cell(s)")
    return EXIT_OK


def cmd_attack(args) -> int:
    schema, instance, deps, policies = _inputs(args)
    view = read_view_csv(_read(args.view), instance)
    scope = None
    if policies:
        scope = sensitivity_determination(policies, args.querier, instance).cells
    sampled = attack_weighted_sampling(view, schema, args.seed, cells=scope)
    forced = attack_constraint_propagation(view, deps, schema, cells=scope, budget=args.budget)
    _write(args.report, json.dumps({"format": 1, "weighted_sampling": sampled.to_dict(),
                                    "constraint_propagation": forced.to_dict()}, indent=2, default=str))
    print("attacker\tcorrect\ttotal\tprecision")
    print(f"weighted_sampling\t{sampled.correct}\t{sampled.total}\t{sampled.precision:.4f}")
    print(f"constraint_propagation\t{forced.correct}\t{forced.total}\t{forced.precision:.4f}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.preset:
        schema, text = tax_schema(), TAX_CONSTRAINTS
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        _write(str(out_dir / "tax.schema.json"), json.dumps(schema.to_dict(), indent=2))
        _write(str(out_dir / "tax.dc"), text)
        deps = parse_constraints(text, schema)
        if args.only:
            from .synth import tax_constraints
            deps = tax_constraints(args.only)
        data_path = str(out_dir / "tax.csv")
    else:
        if not (args.schema and args.constraints):
            raise UsageError("gen needs --schema and --constraints, or --preset tax")
        schema = load_schema(_read(args.schema))
        deps = parse_constraints(_read(args.constraints), schema)
        data_path = args.out
    instance = generate(schema, deps, args.n, args.seed)
    csv_text = instance.to_csv()
    if data_path:
        _write(data_path, csv_text)
        print(f"# wrote {instance.n_tuples} rows to {data_path}")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_connectivity(args) -> int:
    schema = load_schema(_read(args.schema))
    deps = parse_constraints(_read(args.constraints), schema)
    scores = dependency_connectivity(schema, deps)
    groups = connectivity_groups(scores)
    print("attribute\tscore\tgroup")
    for a in sorted(scores, key=lambda a: (-scores[a], schema.index(a))):
        print(f"{a}\t{scores[a]}\t{groups[a]}")
    if args.figures:
        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plots.connectivity_chart(scores, groups, Path(args.figures) / "connectivity.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deniable", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def inputs(sp, policies=True):
        sp.add_argument("--data", required=True)
        sp.add_argument("--schema", required=True)
        sp.add_argument("--constraints", required=True)
        if policies:
            sp.add_argument("--policies", required=True)
            sp.add_argument("--querier", required=True)
        sp.add_argument("--seed", type=int, default=42)

    sp = sub.add_parser("protect", help="compute a secure view")
    inputs(sp)
    sp.add_argument("--mode", choices=("full", "kden"), default="full")
    sp.add_argument("--k", type=float)
    sp.add_argument("--detection", choices=("query", "ttc", "oblivious"), default="query")
    sp.add_argument("--protection", choices=("mvc", "random"), default="mvc")
    sp.add_argument("--cloak", nargs="+", metavar="ATTR", help="also hide these attributes in touched tuples")
    sp.add_argument("--owner-filter", action="store_true", help="drop querier-owned cells from cuesets")
    sp.add_argument("--bin-size", type=int)
    sp.add_argument("--merge-size", type=int)
    sp.add_argument("--out")
    sp.add_argument("--report")
    sp.add_argument("--figures", metavar="DIR")
    sp.set_defaults(func=cmd_protect)

    sp = sub.add_parser("verify", help="check a view with the brute-force oracle")
    inputs(sp)
    sp.add_argument("--view", required=True)
    sp.add_argument("--report")
    sp.add_argument("--budget", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("attack", help="run the simulated attackers on a view")
    sp.add_argument("--data", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--constraints", required=True)
    sp.add_argument("--view", required=True)
    sp.add_argument("--policies")
    sp.add_argument("--querier", default="")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--report")
    sp.add_argument("--budget", type=int)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("gen", help="generate an instance satisfying the constraints")
    sp.add_argument("--schema")
    sp.add_argument("--constraints")
    sp.add_argument("--preset", choices=("tax",))
    sp.add_argument("--only", nargs="+", metavar="ID", help="constraint ids to honour (preset only)")
    sp.add_argument("--out-dir")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("connectivity", help="print dependency connectivity per attribute")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--constraints", required=True)
    sp.add_argument("--figures", metavar="DIR")
    sp.set_defaults(func=cmd_connectivity)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DomainTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ModelError, ConstraintError, GenerationTimeout, IterationCapExceeded,
            ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
