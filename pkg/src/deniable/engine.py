"""The hiding loop for full deniability, its k-percentile relaxation, and the binning wrapper."""

from __future__ import annotations

import json
import random
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

from .constraints import DependencySet, FunctionConstraint
from .detect import (Const, Cueset, InstantiatedDependency, ResidualLeakage, detect, filter_owner,
                     ground, scan)
from .model import (CellRef, QuerierView, RelationInstance, compare, domain_size,
                    sensitivity_determination)
from .protect import canonical_order, protect_cloak, protect_mvc, protect_random

DETECTIONS = ("query", "ttc", "oblivious")
PROTECTIONS = ("mvc", "random")


class IterationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineOptions:
    mode: str = "full"
    k: float | None = None
    detection: str = "query"
    protection: str = "mvc"
    cloak_attrs: tuple[str, ...] = ()
    owner_filter: bool = False
    seed: int = 42
    max_iterations: int | None = None

    def __post_init__(self):
        if self.mode not in ("full", "kden"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "kden" and self.k is None:
            raise ValueError("k-percentile mode needs k")
        if self.detection not in DETECTIONS:
            raise ValueError(f"unknown detection {self.detection!r}")
        if self.protection not in PROTECTIONS:
            raise ValueError(f"unknown protection {self.protection!r}")


@dataclass
class RunReport:
    iterations: int = 0
    cuesets_per_invocation: list[int] = field(default_factory=list)
    hidden_per_invocation: list[int] = field(default_factory=list)
    total_hidden: int = 0
    residual_warnings: list[dict] = field(default_factory=list)
    wall_ms: float = 0.0
    mode: str = "full"
    sensitive: int = 0
    stages: list[dict] | None = None

    def to_dict(self) -> dict:
        out = {"format": 1, **asdict(self)}
        if self.stages is None:
            out.pop("stages")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# Leakage

@dataclass(frozen=True)
class LeakageSet:
    """Values an observer can rule out for one cell.

    Discrete domains keep the excluded values; continuous ones keep the surviving
    interval [low, high] and exclude everything else.
    """

    discrete: bool
    minus_set: frozenset = frozenset()
    low: float = 0.0
    high: float = 0.0
    dom_size: float = 0.0

    @property
    def size(self) -> float:
        if self.discrete:
            return float(len(self.minus_set))
        return self.dom_size - (self.high - self.low)

    def excludes(self, value: Any) -> bool:
        if self.discrete:
            return value in self.minus_set
        return not (self.low - 1e-9 <= value <= self.high + 1e-9)


def _operand_value(o, view):
    if isinstance(o, Const):
        return o.value
    return view.observe(o)


def compute_leakage(cell: CellRef, view, instantiations: Iterable[InstantiatedDependency]) -> LeakageSet:
    """Values excluded for `cell` by instantiations whose TTC already holds."""
    attr = view.instance.schema.attributes[cell[1]]
    true_value = view.instance.value(cell)
    if attr.is_discrete:
        minus: set = set()
        for inst in instantiations:
            if inst.is_fc and cell != inst.output_cell:
                minus |= {v for v in attr.values if not compare(v, "==", true_value)}
                continue
            owner = [p for p in inst.predicates if cell in p.cells]
            ops = []
            for p in owner:
                op, other = p.oriented(cell)
                val = view.instance.value(cell) if other == cell else _operand_value(other, view)
                if val is None:
                    break
                ops.append((op, val))
            else:
                minus |= {v for v in attr.values if all(compare(v, op, val) for op, val in ops)}
        return LeakageSet(True, frozenset(minus), dom_size=float(len(attr.values)))

    low, high = float(attr.low), float(attr.high)
    for inst in instantiations:
        if inst.is_fc and cell != inst.output_cell:
            low = high = float(true_value)
            continue
        owner = [p for p in inst.predicates if cell in p.cells]
        pairs = []
        for p in owner:
            op, other = p.oriented(cell)
            val = _operand_value(other, view)
            if val is None:
                pairs = None
                break
            pairs.append((op, float(val)))
        if not pairs:
            continue
        if len(pairs) == 1:
            low, high = _narrow(pairs[0][0], pairs[0][1], low, high)
            continue
        # several owner predicates: the excluded region is where all of them hold at once
        lo, hi = float("-inf"), float("inf")
        for op, val in pairs:
            if op in ("<", "<="):
                hi = min(hi, val)
            elif op in (">", ">="):
                lo = max(lo, val)
            elif op == "==":
                lo, hi = max(lo, val), min(hi, val)
        if lo <= low and hi < high:
            low = max(low, min(hi, high))
        elif hi >= high and lo > low:
            high = min(high, max(lo, low))
    return LeakageSet(False, low=low, high=high, dom_size=domain_size(attr))


def _narrow(op: str, val: float, low: float, high: float) -> tuple[float, float]:
    # the owner predicate `cell op val` must be False for the constraint to hold
    if op in ("<", "<="):
        if low < val:
            low = min(val, high)
    elif op in (">", ">="):
        if high > val:
            high = max(val, low)
    elif op == "!=":
        low = high = val
    return low, high


def clamp_k(k: float, attr) -> float:
    size = domain_size(attr)
    floor = 1.0 / size if size > 0 else 0.0
    return min(1.0, max(floor, k))


def is_deniable(attr, leakage: LeakageSet, k: float) -> bool:
    k = clamp_k(k, attr)
    size = domain_size(attr)
    if leakage.discrete:
        return size - len(leakage.minus_set) >= k * size - 1e-12
    return leakage.high - leakage.low >= k * size - 1e-12


# ---------------------------------------------------------------------------
# Full deniability loop

@dataclass
class _Trace:
    """What the full loop did, kept so that k-percentile pruning can replay it."""

    detected: dict = field(default_factory=dict)     # cell -> (invocation, view)
    entries: dict = field(default_factory=dict)      # cell -> list of (cueset, cover cells)
    cloak_of: dict = field(default_factory=dict)     # hidden cell -> cells cloaked alongside it


def _detect_round(targets, deps, view, options: EngineOptions, covered, warnings):
    if options.detection == "ttc":
        found = detect(targets, deps, view, warnings=warnings)
        total = len(found)
        if covered is not None:
            found = [cs for cs in found if not cs.overlaps(covered)]
        return found, total
    return scan(targets, deps, view, use_ttc=options.detection == "query", covered=covered,
                warnings=warnings)


def _hide_loop(sensitive: Iterable[CellRef], deps: DependencySet, instance: RelationInstance,
               options: EngineOptions, querier: str | None = None, trace: _Trace | None = None):
    started = time.perf_counter()
    rng = random.Random(options.seed)
    hidden = set(sensitive)
    report = RunReport(mode=options.mode, sensitive=len(hidden))
    cap = options.max_iterations or max(1, instance.n_cells)
    cloak_cols = sorted({instance.schema.index(a) for a in options.cloak_attrs})
    warnings: list[ResidualLeakage] = []
    targets = set(hidden)
    while targets:
        if report.iterations >= cap:
            raise IterationCapExceeded(f"no fixpoint after {cap} detection rounds")
        view = QuerierView(instance, frozenset(hidden))
        covered = None if trace is not None else frozenset(hidden)
        found, total = _detect_round(targets, deps, view, options, covered, warnings)
        report.iterations += 1
        report.hidden_per_invocation.append(len(targets))
        report.cuesets_per_invocation.append(total)
        if options.owner_filter:
            found = filter_owner(found, querier, instance, warnings)
        if trace is not None:
            for c in targets:
                trace.detected[c] = (report.iterations, view)
                trace.entries.setdefault(c, [])
        # with `covered` set, detection has already dropped covered cuesets
        remaining = canonical_order(found if covered is not None else
                                    (cs for cs in found if not cs.overlaps(hidden)))
        if options.protection == "mvc":
            selection = protect_mvc(remaining)
        else:
            selection = protect_random(remaining, rng)
        if cloak_cols:
            selection = protect_cloak(selection, options.cloak_attrs, view)
        new = set(selection.cells) - hidden
        if trace is not None:
            for cs in found:
                cover = frozenset(m for m in cs.members if m in hidden or m in selection.cells)
                trace.entries[cs.owner].append((cs, cover))
            for c in selection.cells:
                trace.cloak_of.setdefault(c, set()).update(
                    CellRef(c[0], a) for a in cloak_cols if CellRef(c[0], a) != c)
        hidden |= new
        targets = new
    report.total_hidden = sum(report.hidden_per_invocation)
    report.residual_warnings = _dedupe(warnings)
    report.wall_ms = (time.perf_counter() - started) * 1000.0
    return QuerierView(instance, frozenset(hidden)), report


def _dedupe(warnings: Sequence[ResidualLeakage]) -> list[dict]:
    seen, out = set(), []
    for w in warnings:
        key = (w.cell, w.origin)
        if key not in seen:
            seen.add(key)
            out.append(w.to_dict())
    return out


def protect_cells(sensitive: Iterable[CellRef], deps: DependencySet, instance: RelationInstance,
                  options: EngineOptions = EngineOptions(), querier: str | None = None):
    """Run the configured algorithm for an explicit sensitive set."""
    sensitive = set(sensitive)
    if options.mode == "kden":
        return _run_kden(sensitive, deps, instance, options, querier)
    return _hide_loop(sensitive, deps, instance, options, querier)


def run_full(querier: str, policies, deps: DependencySet, instance: RelationInstance,
             options: EngineOptions = EngineOptions()):
    """Secure view for `querier`: sensitive cells plus the cells hidden to block inference."""
    sensitive = sensitivity_determination(policies, querier, instance).cells
    return protect_cells(sensitive, deps, instance, options, querier)


# ---------------------------------------------------------------------------
# k-percentile deniability

def leakage_of(cell: CellRef, entries, deps_by_id: dict, view, cache: dict | None = None) -> LeakageSet:
    insts = []
    for cs, _ in entries:
        inst = None if cache is None else cache.get(cs.binding)
        if inst is None:
            inst = ground(deps_by_id[cs.binding[0]], cs.binding, view.instance)
            if cache is not None:
                cache[cs.binding] = inst
        insts.append(inst)
    return compute_leakage(cell, view, insts)


def kprune(true_hide: set, to_hide: set, level: int, k: float, cueset_index: dict,
           deps_by_id: dict, views: dict) -> set:
    """One level of pruning over the fan-out of the full algorithm.

    At level 1 a cell that is already k-deniable keeps none of its cuesets; otherwise
    the cuesets with the largest leakage are kept until the rest leave it deniable.
    Deeper levels keep everything. Returns true_hide plus the kept covering cells.
    """
    best = []
    cache: dict = {}
    for cell in sorted(true_hide):
        entries = cueset_index.get(cell, [])
        if level > 1 or k >= 1.0:
            best.extend(entries)
            continue
        view = views[cell]
        attr = view.instance.schema.attributes[cell[1]]

        def rest_ok(cut: int) -> bool:
            return is_deniable(attr, leakage_of(cell, ranked[cut:], deps_by_id, view, cache), k)

        ranked = entries
        if rest_ok(0):
            continue
        ranked = sorted(entries, key=lambda e: (-leakage_of(cell, [e], deps_by_id, view, cache).size,
                                                e[0].origin, e[0].members))
        # leakage only grows with more instantiations, so the smallest retained prefix
        # that leaves the remainder deniable can be found by bisection
        lo, hi = 1, len(ranked)
        while lo < hi:
            mid = (lo + hi) // 2
            if rest_ok(mid):
                hi = mid
            else:
                lo = mid + 1
        best.extend(ranked[:lo])
    out = set(true_hide)
    for _, cover in best:
        out |= cover & to_hide
    return out


def _run_kden(sensitive: set, deps: DependencySet, instance: RelationInstance,
              options: EngineOptions, querier: str | None):
    started = time.perf_counter()
    trace = _Trace()
    full_view, full_report = _hide_loop(sensitive, deps, instance, options, querier, trace)
    everything = set(full_view.hidden)
    deps_by_id = {d.id: d for d in deps.all}
    views = {c: v for c, (_, v) in trace.detected.items()}
    kept = set(sensitive)
    frontier = set(sensitive)
    level = 1
    report = RunReport(mode="kden", sensitive=len(sensitive),
                       residual_warnings=full_report.residual_warnings)
    report.hidden_per_invocation.append(len(sensitive))
    report.cuesets_per_invocation.append(sum(len(trace.entries.get(c, [])) for c in sensitive))
    report.iterations = 1
    while frontier:
        grown = kprune(frontier, everything, level, options.k, trace.entries, deps_by_id, views)
        added = grown - kept
        for c in list(added):
            added |= trace.cloak_of.get(c, set()) & everything
        added -= kept
        if not added:
            break
        kept |= added
        frontier = added
        level += 1
        report.iterations += 1
        report.hidden_per_invocation.append(len(added))
        report.cuesets_per_invocation.append(sum(len(trace.entries.get(c, [])) for c in added))
    report.total_hidden = sum(report.hidden_per_invocation)
    report.wall_ms = (time.perf_counter() - started) * 1000.0
    return QuerierView(instance, frozenset(kept)), report


# ---------------------------------------------------------------------------
# Binning then merging

def run_binning(querier: str, policies, deps: DependencySet, instance: RelationInstance,
                b: int, m: int, options: EngineOptions = EngineOptions()):
    """Protect contiguous bins of `b` tuples, then merge `m` results at a time and re-protect.

    Cells hidden in earlier stages are sensitive in later ones; the last stage covers
    every tuple, so its output satisfies the same guarantees as a single run.
    """
    if b < 1 or m < 2:
        raise ValueError("bin size must be >= 1 and merge size >= 2")
    started = time.perf_counter()
    sensitive = sensitivity_determination(policies, querier, instance).cells
    n = instance.n_tuples
    stages: list[dict] = []

    def run(tuples: tuple[int, ...], carried: set, kind: str):
        local = {t: i for i, t in enumerate(tuples)}
        sub = instance.subset(tuples)
        seeds = {CellRef(local[c[0]], c[1]) for c in (sensitive | carried) if c[0] in local}
        view, rep = protect_cells(seeds, deps, sub, options, querier)
        hidden = {CellRef(tuples[c[0]], c[1]) for c in view.hidden}
        stages.append({"kind": kind, "tuples": len(tuples), "hidden": len(hidden),
                       "iterations": rep.iterations, "wall_ms": rep.wall_ms})
        return hidden, rep

    bins = deque(tuple(range(s, min(s + b, n))) for s in range(0, max(n, 1), b))
    hidden_of: dict[tuple, set] = {}
    merge_queue: list[tuple] = []
    merged_runs: set[tuple] = set()
    last = None
    if len(bins) == 1:
        hidden_of[bins[0]], last = run(bins[0], set(), "bin")
    while len(bins) != 1 or merge_queue:
        current = bins.popleft()
        if current in merged_runs:
            # already the output of a run over exactly these tuples; running again with
            # its own hidden set as the sensitive set would hide nothing new
            stages.append({"kind": "reuse", "tuples": len(current), "hidden": len(hidden_of[current]),
                           "iterations": 0, "wall_ms": 0.0})
        else:
            hidden_of[current], last = run(current, hidden_of.get(current, set()), "bin")
        merge_queue.append(current)
        if len(merge_queue) >= m or not bins:
            merged = tuple(sorted(t for q in merge_queue for t in q))
            carried = set().union(*(hidden_of[q] for q in merge_queue))
            hidden_of[merged], last = run(merged, carried, "merge")
            merged_runs.add(merged)
            bins.append(merged)
            merge_queue = []
    final = bins[0]
    hidden = hidden_of[final]
    report = last
    report.sensitive = len(sensitive)
    report.stages = stages
    report.wall_ms = (time.perf_counter() - started) * 1000.0
    return QuerierView(instance, frozenset(hidden)), report
