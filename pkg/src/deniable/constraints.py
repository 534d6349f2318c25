"""Constraint language for denial constraints (DCs) and function-based constraints (FCs).

One constraint per line::

    # functional dependency Zip -> State
    dc: !(t1.Zip == t2.Zip & t1.State != t2.State)
    dc:rate_cap: !(t1.Rate > 0.4)
    fc: t1.Salary = fn(t1.WorkHrs, t1.SalPerHr) invertible

String literals are double-quoted, numbers bare.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .model import (EQ_TOL, CellRef, RelationInstance, Schema, UnknownAttribute, compare,
                    values_equal)

SYMMETRIC_OPS = frozenset({"==", "!="})
FLIP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
NEGATE = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


class ConstraintError(Exception):
    pass


class ParseError(ConstraintError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class TrivialPredicate(ConstraintError):
    pass


@dataclass(frozen=True)
class Operand:
    """Either ``t<slot>.<attribute>`` or a constant literal."""

    kind: str
    slot: int = 0
    attribute: str = ""
    literal: Any = None

    @classmethod
    def attr(cls, slot: int, attribute: str) -> "Operand":
        return cls("tuple_attr", slot, attribute)

    @classmethod
    def const(cls, literal: Any) -> "Operand":
        return cls("constant", literal=literal)

    @property
    def is_attr(self) -> bool:
        return self.kind == "tuple_attr"

    def swapped(self) -> "Operand":
        if not self.is_attr:
            return self
        return Operand.attr(3 - self.slot, self.attribute)

    def __str__(self) -> str:
        if self.is_attr:
            return f"t{self.slot}.{self.attribute}"
        return _fmt_literal(self.literal)


def _fmt_literal(value: Any) -> str:
    if isinstance(value, str):
        return json.dumps(value)
    return repr(value)


@dataclass(frozen=True)
class Predicate:
    lhs: Operand
    op: str
    rhs: Operand

    def swapped(self) -> "Predicate":
        return Predicate(self.lhs.swapped(), self.op, self.rhs.swapped())

    def canonical(self) -> tuple:
        """Key that identifies the predicate up to operand order of symmetric ops."""
        a, b = str(self.lhs), str(self.rhs)
        if self.op in SYMMETRIC_OPS and b < a:
            a, b = b, a
        return (a, self.op, b)

    @property
    def slots(self) -> set[int]:
        return {o.slot for o in (self.lhs, self.rhs) if o.is_attr}

    @property
    def attributes(self) -> set[str]:
        return {o.attribute for o in (self.lhs, self.rhs) if o.is_attr}

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class DenialConstraint:
    id: str
    predicates: tuple[Predicate, ...]

    @property
    def slots(self) -> list[int]:
        return sorted(set().union(*(p.slots for p in self.predicates)))

    @property
    def arity(self) -> int:
        return len(self.slots)

    @property
    def attributes(self) -> set[str]:
        return set().union(*(p.attributes for p in self.predicates))

    @property
    def asymmetric(self) -> bool:
        return any(p.op not in SYMMETRIC_OPS for p in self.predicates)

    @property
    def swap_invariant(self) -> bool:
        """True when exchanging t1 and t2 yields the same predicate set."""
        if self.arity < 2:
            return False
        original = sorted(p.canonical() for p in self.predicates)
        swapped = sorted(p.swapped().canonical() for p in self.predicates)
        return original == swapped

    def __str__(self) -> str:
        return format_constraint(self)


@dataclass(frozen=True)
class FunctionConstraint:
    id: str
    output_attr: str
    input_attrs: tuple[str, ...]
    invertible: bool

    @property
    def attributes(self) -> set[str]:
        return {self.output_attr, *self.input_attrs}

    def __str__(self) -> str:
        return format_constraint(self)


@dataclass(frozen=True)
class DependencySet:
    dcs: tuple[DenialConstraint, ...] = ()
    fcs: tuple[FunctionConstraint, ...] = ()

    def __post_init__(self):
        ids = [c.id for c in self.all]
        if len(set(ids)) != len(ids):
            raise ConstraintError("constraint ids must be unique")

    @property
    def all(self) -> list:
        return [*self.dcs, *self.fcs]

    def __len__(self) -> int:
        return len(self.dcs) + len(self.fcs)

    def __iter__(self):
        return iter(self.all)

    def validate(self, schema: Schema) -> None:
        for dc in self.dcs:
            check_dc(dc, schema)
        for fc in self.fcs:
            for a in fc.attributes:
                schema.index(a)
            if len(fc.attributes) != len(fc.input_attrs) + 1:
                raise ConstraintError(f"{fc.id}: attributes of a function constraint must be distinct")


def check_dc(dc: DenialConstraint, schema: Schema) -> None:
    """Schema-level checks that the parser cannot do without the schema."""
    for p in dc.predicates:
        for o in (p.lhs, p.rhs):
            if o.is_attr:
                schema.index(o.attribute)
        if p.op in ("<", "<=", ">", ">="):
            for o in (p.lhs, p.rhs):
                if o.is_attr and not schema.attr(o.attribute).ordered:
                    raise ConstraintError(
                        f"{dc.id}: operator {p.op} needs an ordered attribute, {o.attribute} is categorical")
        for o in (p.lhs, p.rhs):
            if not o.is_attr:
                other = p.rhs if o is p.lhs else p.lhs
                attr = schema.attr(other.attribute)
                if attr.is_discrete and p.op in ("==", "!=") and o.literal not in attr.values:
                    raise ConstraintError(f"{dc.id}: constant {o.literal!r} outside domain of {attr.name}")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<neg>!\()
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[:().,&=])
""", re.VERBOSE)


class _Lexer:
    def __init__(self, line: str, lineno: int):
        self.tokens: list[tuple[str, str, int]] = []
        self.lineno = lineno
        pos = 0
        while pos < len(line):
            m = _TOKEN.match(line, pos)
            if m is None:
                raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), pos + 1))
            pos = m.end()
        self.i = 0
        self.end_col = len(line) + 1

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"expected {what}, got end of line", self.lineno, self.end_col)
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, col = self.next(repr(value))
        if text != value:
            raise ParseError(f"expected {value!r}, got {text!r}", self.lineno, col)

    def ident(self, what: str = "identifier") -> str:
        kind, text, col = self.next(what)
        if kind != "ident":
            raise ParseError(f"expected {what}, got {text!r}", self.lineno, col)
        return text

    def at(self, value: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[1] == value

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing {tok[1]!r}", self.lineno, tok[2])


def _operand(lx: _Lexer) -> Operand:
    kind, text, col = lx.next("operand")
    if kind == "ident" and re.fullmatch(r"t[12]", text):
        lx.expect(".")
        return Operand.attr(int(text[1]), lx.ident("attribute name"))
    if kind == "string":
        return Operand.const(json.loads(text))
    if kind == "number":
        value = float(text)
        if re.fullmatch(r"-?\d+", text):
            value = int(text)
        return Operand.const(value)
    raise ParseError(f"expected t1.<attr>, t2.<attr> or a literal, got {text!r}", lx.lineno, col)


def _predicate(lx: _Lexer, lineno: int) -> Predicate:
    start = lx.peek()
    lhs = _operand(lx)
    kind, op, col = lx.next("comparison operator")
    if kind != "op":
        raise ParseError(f"expected comparison operator, got {op!r}", lineno, col)
    rhs = _operand(lx)
    if not lhs.is_attr and not rhs.is_attr:
        raise ParseError("a predicate needs at least one tuple attribute", lineno, start[2])
    if lhs == rhs:
        raise TrivialPredicate(f"line {lineno}: predicate compares {lhs} with itself")
    return Predicate(lhs, op, rhs)


def _parse_line(line: str, lineno: int, auto_id: str):
    lx = _Lexer(line, lineno)
    kind = lx.ident("'dc' or 'fc'")
    if kind not in ("dc", "fc"):
        raise ParseError(f"expected 'dc' or 'fc', got {kind!r}", lineno, 1)
    lx.expect(":")
    cid = auto_id
    tok = lx.peek()
    if tok is not None and tok[0] == "ident" and not re.fullmatch(r"t[12]", tok[1]):
        cid = lx.ident("constraint id")
        lx.expect(":")
    if kind == "dc":
        kind_tok = lx.next("'!('")
        if kind_tok[0] != "neg":
            raise ParseError(f"expected '!(', got {kind_tok[1]!r}", lineno, kind_tok[2])
        preds = [_predicate(lx, lineno)]
        while lx.at("&"):
            lx.next("&")
            preds.append(_predicate(lx, lineno))
        lx.expect(")")
        lx.done()
        return DenialConstraint(cid, tuple(preds))
    out = _fc_attr(lx)
    lx.expect("=")
    name = lx.ident("'fn'")
    if name != "fn":
        raise ParseError(f"expected 'fn', got {name!r}", lineno, lx.tokens[lx.i - 1][2])
    lx.expect("(")
    inputs = [_fc_attr(lx)]
    while lx.at(","):
        lx.next(",")
        inputs.append(_fc_attr(lx))
    lx.expect(")")
    flag = lx.ident("'invertible' or 'noninvertible'")
    if flag not in ("invertible", "noninvertible"):
        raise ParseError(f"expected 'invertible' or 'noninvertible', got {flag!r}", lineno,
                         lx.tokens[lx.i - 1][2])
    lx.done()
    if len({out, *inputs}) != len(inputs) + 1:
        raise ParseError("function constraint attributes must be distinct", lineno, 1)
    return FunctionConstraint(cid, out, tuple(inputs), flag == "invertible")


def _fc_attr(lx: _Lexer) -> str:
    kind, text, col = lx.next("t1.<attr>")
    if text != "t1":
        raise ParseError(f"function constraints only reference t1, got {text!r}", lx.lineno, col)
    lx.expect(".")
    return lx.ident("attribute name")


def parse_constraints(text: str, schema: Schema | None = None) -> DependencySet:
    """Parse a constraint file. With a schema, attribute names and operators are checked."""
    dcs, fcs, seen = [], [], set()
    position = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        position += 1
        kind = line.strip()[:2]
        c = _parse_line(line, lineno, f"{kind}{position}")
        if c.id in seen:
            raise ParseError(f"duplicate constraint id {c.id!r}", lineno, 1)
        seen.add(c.id)
        (dcs if isinstance(c, DenialConstraint) else fcs).append(c)
    deps = DependencySet(tuple(dcs), tuple(fcs))
    if schema is not None:
        deps.validate(schema)
    return deps


def _strip_comment(line: str) -> str:
    in_str = escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif in_str and ch == "\\":
            escaped = True
        elif ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def format_constraint(c: DenialConstraint | FunctionConstraint) -> str:
    if isinstance(c, DenialConstraint):
        return f"dc:{c.id}: !(" + " & ".join(str(p) for p in c.predicates) + ")"
    flag = "invertible" if c.invertible else "noninvertible"
    inputs = ", ".join(f"t1.{a}" for a in c.input_attrs)
    return f"fc:{c.id}: t1.{c.output_attr} = fn({inputs}) {flag}"


def format_constraints(deps: DependencySet) -> str:
    return "".join(format_constraint(c) + "\n" for c in deps.all)


# ---------------------------------------------------------------------------
# Instance validation

@dataclass(frozen=True)
class Violation:
    constraint_id: str
    tuples: tuple[int, ...]


def fc_value(schema: Schema, inputs: Sequence[float]) -> float:
    if schema.fc_function == "sum":
        return float(sum(inputs))
    return float(math.prod(inputs))


def fc_holds(fc: FunctionConstraint, row: Sequence, schema: Schema) -> bool:
    inputs = [row[schema.index(a)] for a in fc.input_attrs]
    return values_equal(fc_value(schema, inputs), row[schema.index(fc.output_attr)])


def dc_holds_on(dc: DenialConstraint, schema: Schema, t1: Sequence, t2: Sequence | None = None) -> bool:
    """Evaluate a schema-level DC on concrete rows (True means satisfied)."""
    rows = {1: t1, 2: t2 if t2 is not None else t1}

    def val(o: Operand):
        return rows[o.slot][schema.index(o.attribute)] if o.is_attr else o.literal

    return not all(compare(val(p.lhs), p.op, val(p.rhs)) for p in dc.predicates)


def validate_instance(instance: RelationInstance, deps: DependencySet) -> list[Violation]:
    """Every violated DC instantiation (by tuple indices) and every tuple breaking an FC."""
    schema = instance.schema
    deps.validate(schema)
    out: list[Violation] = []
    n = instance.n_tuples
    store = ColumnStore(instance)
    everything = np.arange(n)
    for dc in deps.dcs:
        if dc.arity == 1:
            slot = dc.slots[0]
            mask = store.unary(dc, slot, everything)
            out.extend(Violation(dc.id, (int(t),)) for t in np.flatnonzero(mask))
            continue
        symmetric = dc.swap_invariant
        for start in range(0, n, 512):
            left = everything[start:start + 512]
            viol = store.pairwise(dc, left, everything)
            viol[np.arange(len(left)), left] = False
            for a, b in zip(*np.nonzero(viol)):
                i, j = int(left[a]), int(b)
                if symmetric and i > j:
                    continue
                out.append(Violation(dc.id, (i, j)))
    for fc in deps.fcs:
        for t, row in enumerate(instance.rows):
            if not fc_holds(fc, row, schema):
                out.append(Violation(fc.id, (t,)))
    return out


class ColumnStore:
    """Columnar copy of an instance for vectorized predicate evaluation.

    Ordered attributes become float arrays; categorical ones become integer codes
    (only == and != apply to them). ``hidden`` masks mark NULL cells of a view.
    """

    def __init__(self, instance: RelationInstance, hidden: Iterable[CellRef] = ()):
        self.instance = instance
        schema = instance.schema
        n = instance.n_tuples
        self.cols, self.codes = _columns(instance)
        self.null = np.zeros((n, len(schema)), dtype=bool)
        for c in hidden:
            self.null[c[0], c[1]] = True

    def _const(self, attr_index: int, literal: Any):
        code = self.codes[attr_index]
        if code is None:
            return float(literal)
        return code.get(literal, -1)

    def operand(self, o: Operand, other: Operand, rows: dict[int, np.ndarray]):
        """Values (broadcastable) and null mask for one operand."""
        if o.is_attr:
            a = self.instance.schema.index(o.attribute)
            idx = rows[o.slot]
            return self.cols[a][idx], self.null[idx, a]
        a = self.instance.schema.index(other.attribute)
        return self._const(a, o.literal), False

    def predicate(self, p: Predicate, rows: dict[int, np.ndarray]):
        """(truth, unknown) arrays for predicate `p` with slots bound to index arrays."""
        lv, ln = self.operand(p.lhs, p.rhs, rows)
        rv, rn = self.operand(p.rhs, p.lhs, rows)
        truth = _vcompare(lv, p.op, rv)
        unknown = np.logical_or(ln, rn)
        return truth, unknown

    def bind(self, left: np.ndarray, right: np.ndarray | None = None) -> dict[int, np.ndarray]:
        if right is None:
            return {1: left, 2: left}
        return {1: left[:, None], 2: right[None, :]}

    def pairwise(self, dc: DenialConstraint, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """Boolean matrix: True where (t1=left[i], t2=right[j]) violates `dc` (ignores NULLs)."""
        rows = self.bind(left, right)
        out = np.ones((len(left), len(right)), dtype=bool)
        for p in dc.predicates:
            truth, _ = self.predicate(p, rows)
            out &= truth
        return out

    def unary(self, dc: DenialConstraint, slot: int, tuples: np.ndarray) -> np.ndarray:
        rows = {slot: tuples}
        out = np.ones(len(tuples), dtype=bool)
        for p in dc.predicates:
            truth, _ = self.predicate(p, rows)
            out &= truth
        return out


def _columns(instance: RelationInstance) -> tuple[list[np.ndarray], list[dict | None]]:
    """Encoded columns of `instance`, built once and kept on the (immutable) instance."""
    cached = instance.__dict__.get("_columns")
    if cached is not None:
        return cached
    n = instance.n_tuples
    cols: list[np.ndarray] = []
    codes: list[dict | None] = []
    for a, attr in enumerate(instance.schema.attributes):
        col = [row[a] for row in instance.rows]
        if attr.ordered:
            cols.append(np.asarray(col, dtype=float).reshape(n))
            codes.append(None)
        else:
            code = {v: k for k, v in enumerate(attr.values)}
            cols.append(np.asarray([code[v] for v in col], dtype=np.int64).reshape(n))
            codes.append(code)
    object.__setattr__(instance, "_columns", (cols, codes))
    return cols, codes


def _vcompare(a, op: str, b):
    if op in ("==", "!="):
        if isinstance(a, np.ndarray) and a.dtype.kind == "f" or isinstance(b, np.ndarray) and b.dtype.kind == "f" \
                or isinstance(a, float) or isinstance(b, float):
            eq = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) <= EQ_TOL
        else:
            eq = np.equal(a, b)
        return eq if op == "==" else ~eq
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if op == "<":
        return diff < -EQ_TOL
    if op == "<=":
        return diff <= EQ_TOL
    if op == ">":
        return diff > EQ_TOL
    if op == ">=":
        return diff >= -EQ_TOL
    raise ValueError(op)


# ---------------------------------------------------------------------------
# FC instantiation (DC form)

def fc_instantiate(fc: FunctionConstraint, tuple_index: int, instance: RelationInstance):
    """Ground an FC on one tuple as not(in_1 = v_1 & ... & in_n = v_n & out != v_out)."""
    from .detect import Const, GroundPredicate, InstantiatedDependency

    schema = instance.schema
    preds = []
    for a in fc.input_attrs:
        c = CellRef(tuple_index, schema.index(a))
        preds.append(GroundPredicate(c, "==", Const(instance.value(c))))
    out = CellRef(tuple_index, schema.index(fc.output_attr))
    preds.append(GroundPredicate(out, "!=", Const(instance.value(out))))
    return InstantiatedDependency(f"{fc.id}[{tuple_index}]", fc.id, tuple(preds),
                                  is_fc=True, invertible=fc.invertible, output_cell=out)
