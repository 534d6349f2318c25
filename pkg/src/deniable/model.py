"""Relational data model: schema, instance, cells, querier views and policies."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, Sequence

NULL_TOKEN = "\\N"
EQ_TOL = 1e-9

DISCRETE = "discrete"
CONTINUOUS = "continuous"

OPS = ("==", "!=", "<", "<=", ">", ">=")
OP_ALIASES = {"=": "==", "<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}


class ModelError(Exception):
    """Base class for data-model errors."""


class SchemaMismatch(ModelError):
    pass


class DomainViolation(ModelError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnknownAttribute(ModelError):
    pass


class MissingOwnership(ModelError):
    pass


class CellRef(NamedTuple):
    """Address of one cell. Orders lexicographically by (tuple, attribute)."""

    tuple_index: int
    attribute_index: int

    def __repr__(self) -> str:
        return f"c({self.tuple_index},{self.attribute_index})"


@dataclass(frozen=True)
class AttributeDef:
    name: str
    kind: str = DISCRETE
    values: tuple = ()
    low: float = 0.0
    high: float = 0.0
    # grid resolution used when the brute-force oracle enumerates a continuous domain
    bins: int = 16

    def __post_init__(self):
        if self.kind == DISCRETE:
            if not self.values:
                raise ModelError(f"attribute {self.name}: discrete domain is empty")
            if len(set(self.values)) != len(self.values):
                raise ModelError(f"attribute {self.name}: duplicate domain values")
        elif self.kind == CONTINUOUS:
            if not float(self.low) < float(self.high):
                raise ModelError(f"attribute {self.name}: continuous range needs min < max")
        else:
            raise ModelError(f"attribute {self.name}: unknown kind {self.kind!r}")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    @property
    def ordered(self) -> bool:
        """Whether <, <=, >, >= make sense on this attribute."""
        if not self.is_discrete:
            return True
        return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.values)

    def contains(self, value: Any) -> bool:
        if self.is_discrete:
            return value in self.values
        return isinstance(value, (int, float)) and self.low - EQ_TOL <= value <= self.high + EQ_TOL

    def parse(self, text: str) -> Any:
        """Parse a CSV field into a domain value, raising DomainViolation."""
        if self.is_discrete:
            for v in self.values:
                if str(v) == text:
                    return v
            raise DomainViolation(f"value {text!r} not in domain of {self.name}")
        try:
            value = float(text)
        except ValueError:
            raise DomainViolation(f"value {text!r} is not numeric for {self.name}") from None
        if not self.contains(value):
            raise DomainViolation(f"value {text!r} outside [{self.low}, {self.high}] for {self.name}")
        return value

    def grid(self) -> list:
        """Finite stand-in for the domain, used by enumeration-based checks."""
        if self.is_discrete:
            return list(self.values)
        step = (self.high - self.low) / self.bins
        return [self.low + i * step for i in range(self.bins + 1)]


def domain_size(attr: AttributeDef) -> float:
    """Cardinality of a discrete domain, or interval length of a continuous one."""
    if attr.is_discrete:
        return len(attr.values)
    return float(attr.high) - float(attr.low)


def values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            return math.isclose(a, b, rel_tol=0.0, abs_tol=EQ_TOL)
    return a == b


def compare(lhs: Any, op: str, rhs: Any) -> bool:
    """Two-valued comparison of domain values; continuous equality uses EQ_TOL."""
    if op == "==":
        return values_equal(lhs, rhs)
    if op == "!=":
        return not values_equal(lhs, rhs)
    if op == "<":
        return lhs < rhs and not values_equal(lhs, rhs)
    if op == "<=":
        return lhs <= rhs or values_equal(lhs, rhs)
    if op == ">":
        return lhs > rhs and not values_equal(lhs, rhs)
    if op == ">=":
        return lhs >= rhs or values_equal(lhs, rhs)
    raise ValueError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class Schema:
    relation: str
    attributes: tuple[AttributeDef, ...]
    owner_column: str | None = None
    # how `fn` is evaluated when validating function constraints: "product" or "sum"
    fc_function: str = "product"

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ModelError("attribute names must be unique")
        if self.fc_function not in ("product", "sum"):
            raise ModelError(f"fc_function must be product or sum, got {self.fc_function!r}")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise UnknownAttribute(f"unknown attribute {name!r} in relation {self.relation}")

    def attr(self, name_or_index: str | int) -> AttributeDef:
        if isinstance(name_or_index, str):
            return self.attributes[self.index(name_or_index)]
        return self.attributes[name_or_index]

    def __len__(self) -> int:
        return len(self.attributes)

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        attrs = []
        for spec in data["attributes"]:
            kind = spec.get("kind", DISCRETE)
            if kind == DISCRETE:
                attrs.append(AttributeDef(spec["name"], DISCRETE, tuple(spec["values"])))
            else:
                lo, hi = spec["range"]
                attrs.append(AttributeDef(spec["name"], CONTINUOUS, (), float(lo), float(hi),
                                          int(spec.get("bins", 16))))
        return cls(data["relation"], tuple(attrs), data.get("owner_column"),
                   data.get("fc_function", "product"))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"relation": self.relation, "attributes": []}
        for a in self.attributes:
            if a.is_discrete:
                out["attributes"].append({"name": a.name, "kind": DISCRETE, "values": list(a.values)})
            else:
                out["attributes"].append({"name": a.name, "kind": CONTINUOUS,
                                          "range": [a.low, a.high], "bins": a.bins})
        if self.owner_column:
            out["owner_column"] = self.owner_column
        if self.fc_function != "product":
            out["fc_function"] = self.fc_function
        return out


def load_schema(text: str) -> Schema:
    return Schema.from_dict(json.loads(text))


@dataclass(frozen=True)
class RelationInstance:
    schema: Schema
    rows: tuple[tuple, ...]
    owners: tuple | None = None

    def __post_init__(self):
        width = len(self.schema)
        for r, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaMismatch(f"row {r} has {len(row)} values, expected {width}")
            for a, (attr, value) in enumerate(zip(self.schema.attributes, row)):
                if not attr.contains(value):
                    raise DomainViolation(f"row {r}: {value!r} outside domain of {attr.name}",
                                          row=r, column=attr.name)
        if self.owners is not None and len(self.owners) != len(self.rows):
            raise SchemaMismatch("owner column length differs from row count")

    @property
    def n_tuples(self) -> int:
        return len(self.rows)

    @property
    def n_cells(self) -> int:
        return len(self.rows) * len(self.schema)

    def cells(self) -> Iterable[CellRef]:
        for t in range(len(self.rows)):
            for a in range(len(self.schema)):
                yield CellRef(t, a)

    def value(self, cell: CellRef) -> Any:
        return self.rows[cell.tuple_index][cell.attribute_index]

    def cell(self, tuple_index: int, attr: str | int) -> CellRef:
        a = self.schema.index(attr) if isinstance(attr, str) else attr
        if not (0 <= tuple_index < len(self.rows) and 0 <= a < len(self.schema)):
            raise IndexError(f"cell ({tuple_index}, {attr}) outside instance bounds")
        return CellRef(tuple_index, a)

    def column(self, attr: str | int) -> list:
        a = self.schema.index(attr) if isinstance(attr, str) else attr
        return [row[a] for row in self.rows]

    def subset(self, tuple_indices: Sequence[int]) -> "RelationInstance":
        rows = tuple(self.rows[t] for t in tuple_indices)
        owners = None if self.owners is None else tuple(self.owners[t] for t in tuple_indices)
        # rows were checked when this instance was built
        out = object.__new__(RelationInstance)
        object.__setattr__(out, "schema", self.schema)
        object.__setattr__(out, "rows", rows)
        object.__setattr__(out, "owners", owners)
        return out

    def to_csv(self, hidden: frozenset | set = frozenset()) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = list(self.schema.names)
        if self.owners is not None and self.schema.owner_column:
            header.append(self.schema.owner_column)
        writer.writerow(header)
        for t, row in enumerate(self.rows):
            out = [NULL_TOKEN if CellRef(t, a) in hidden else _fmt(v) for a, v in enumerate(row)]
            if self.owners is not None and self.schema.owner_column:
                out.append(self.owners[t])
            writer.writerow(out)
        return buf.getvalue()


def _fmt(value: Any) -> str:
    if isinstance(value, float) and value.is_integer():
        return repr(value)
    return str(value)


def load_relation(csv_text: str, schema: Schema) -> RelationInstance:
    """Parse RFC-4180 CSV text with a header row into an instance."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatch("empty CSV: missing header row") from None
    expected = list(schema.names)
    owner_pos = None
    if schema.owner_column and len(header) == len(expected) + 1:
        if schema.owner_column not in header:
            raise SchemaMismatch(f"owner column {schema.owner_column!r} missing from header")
        owner_pos = header.index(schema.owner_column)
        header = header[:owner_pos] + header[owner_pos + 1:]
    if [h.strip() for h in header] != expected:
        raise SchemaMismatch(f"header {header} does not match schema attributes {expected}")
    rows, owners = [], []
    for r, fields in enumerate(reader):
        if not fields:
            continue
        if owner_pos is not None:
            if len(fields) != len(expected) + 1:
                raise SchemaMismatch(f"row {r} has {len(fields)} fields, expected {len(expected) + 1}")
            owners.append(fields[owner_pos])
            fields = fields[:owner_pos] + fields[owner_pos + 1:]
        if len(fields) != len(expected):
            raise SchemaMismatch(f"row {r} has {len(fields)} fields, expected {len(expected)}")
        row = []
        for attr, text in zip(schema.attributes, fields):
            try:
                row.append(attr.parse(text))
            except DomainViolation as exc:
                raise DomainViolation(f"row {r}, column {attr.name}: {exc}", row=r, column=attr.name) from None
        rows.append(tuple(row))
    return RelationInstance(schema, tuple(rows), tuple(owners) if owner_pos is not None else None)


def read_view_csv(csv_text: str, instance: RelationInstance) -> "QuerierView":
    """Recover the hidden set of an emitted view by locating NULL tokens.

    Visible fields must agree with the instance they are paired with.
    """
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader)
    names = instance.schema.names
    positions = [header.index(n) for n in names]
    hidden = set()
    n = 0
    for t, fields in enumerate(reader):
        if not fields:
            continue
        if t >= instance.n_tuples:
            raise SchemaMismatch("view has more rows than the instance")
        for a, pos in enumerate(positions):
            if fields[pos] == NULL_TOKEN:
                hidden.add(CellRef(t, a))
            else:
                attr = instance.schema.attributes[a]
                if not values_equal(attr.parse(fields[pos]), instance.rows[t][a]):
                    raise SchemaMismatch(f"view value at row {t}, column {attr.name} differs from the data")
        n += 1
    if n != instance.n_tuples:
        raise SchemaMismatch(f"view has {n} rows, instance has {instance.n_tuples}")
    return QuerierView(instance, frozenset(hidden))


@dataclass(frozen=True)
class QuerierView:
    """Per-cell assignment of the true value or NULL (None)."""

    instance: RelationInstance
    hidden: frozenset = frozenset()

    def __post_init__(self):
        n, w = self.instance.n_tuples, len(self.instance.schema)
        for c in self.hidden:
            if not (0 <= c[0] < n and 0 <= c[1] < w):
                raise IndexError(f"hidden cell {c} outside instance bounds")

    def observe(self, cell: CellRef) -> Any:
        if cell in self.hidden:
            return None
        return self.instance.rows[cell[0]][cell[1]]

    def is_hidden(self, cell: CellRef) -> bool:
        return cell in self.hidden

    def with_hidden(self, cells: Iterable[CellRef]) -> "QuerierView":
        return QuerierView(self.instance, self.hidden | frozenset(cells))

    def to_csv(self) -> str:
        return self.instance.to_csv(self.hidden)


def base_view(instance: RelationInstance) -> QuerierView:
    """The view with every cell NULL."""
    return QuerierView(instance, frozenset(instance.cells()))


@dataclass(frozen=True)
class Condition:
    attribute: str
    op: str
    value: Any

    def __post_init__(self):
        op = OP_ALIASES.get(self.op, self.op)
        if op not in OPS:
            raise ValueError(f"unknown operator {self.op!r}")
        object.__setattr__(self, "op", op)


@dataclass(frozen=True)
class Policy:
    """Deny/allow rule: object condition (selection + projection), subject, action.

    ``tuples`` selects explicit tuple indices instead of a selection; it backs the
    direct cell-list policy form.
    """

    querier: str
    projection: tuple[str, ...]
    selection: tuple[Condition, ...] = ()
    relation: str | None = None
    action: str = "deny"
    tuples: tuple[int, ...] | None = None

    def check(self, schema: Schema) -> None:
        for c in self.selection:
            schema.index(c.attribute)
        for p in self.projection:
            schema.index(p)
        if self.action not in ("deny", "allow"):
            raise ValueError(f"unknown policy action {self.action!r}")

    def selects(self, instance: RelationInstance, t: int) -> bool:
        if self.tuples is not None:
            return t in self.tuples
        row = instance.rows[t]
        schema = instance.schema
        return all(compare(row[schema.index(c.attribute)], c.op, c.value) for c in self.selection)


@dataclass(frozen=True)
class SensitiveSet:
    querier: str
    cells: frozenset = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(sorted(self.cells))

    def __contains__(self, cell) -> bool:
        return cell in self.cells


def sensitivity_determination(policies: Iterable[Policy], querier: str,
                              instance: RelationInstance) -> SensitiveSet:
    """Cells denied to `querier` by any matching deny policy; allow is the default."""
    schema = instance.schema
    cells = set()
    for p in policies:
        p.check(schema)
        if p.querier != querier or p.action != "deny":
            continue
        if p.relation is not None and p.relation != schema.relation:
            continue
        cols = [schema.index(a) for a in p.projection]
        # explicit tuple lists need no scan
        candidates = range(instance.n_tuples) if p.tuples is None else \
            (t for t in p.tuples if 0 <= t < instance.n_tuples)
        for t in candidates:
            if p.selects(instance, t):
                cells.update(CellRef(t, a) for a in cols)
    return SensitiveSet(querier, frozenset(cells))


def load_policies(text: str, schema: Schema) -> list[Policy]:
    """Read the JSON policy file (selection form or direct cell-list form)."""
    out = []
    for entry in json.loads(text):
        if "cells" in entry:
            for t, attr in entry["cells"]:
                name = attr if isinstance(attr, str) else schema.attributes[int(attr)].name
                schema.index(name)
                out.append(Policy(entry["querier"], (name,), tuples=(int(t),),
                                  action=entry.get("action", "deny")))
            continue
        selection = tuple(Condition(s["attr"], s.get("op", "=="), s["value"])
                          for s in entry.get("selection", []))
        p = Policy(entry["querier"], tuple(entry["projection"]), selection,
                   entry.get("relation"), entry.get("action", "deny"))
        p.check(schema)
        out.append(p)
    return out


def dump_policies(policies: Sequence[Policy], schema: Schema) -> str:
    out = []
    for p in policies:
        if p.tuples is not None:
            out.append({"querier": p.querier, "action": p.action,
                        "cells": [[t, a] for t in p.tuples for a in p.projection]})
        else:
            out.append({"querier": p.querier, "relation": p.relation or schema.relation,
                        "selection": [{"attr": c.attribute, "op": c.op, "value": c.value}
                                      for c in p.selection],
                        "projection": list(p.projection), "action": p.action})
    return json.dumps(out, indent=2)
