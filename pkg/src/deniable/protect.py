"""Choosing cells to hide so that every cueset of a batch loses at least one cell."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .detect import Cueset
from .model import CellRef


@dataclass(frozen=True)
class HideSelection:
    cells: frozenset
    # covering cell per input cueset, aligned with the input list
    covered: tuple = ()


def canonical_order(cuesets: Iterable[Cueset]) -> list[Cueset]:
    return sorted(cuesets, key=lambda cs: (cs.owner, cs.origin, cs.members))


def protect_random(cuesets: Sequence[Cueset], rng_seed: int | random.Random = 0) -> HideSelection:
    """Visit cuesets in a seeded random order; hide one random member of each uncovered one."""
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    order = list(range(len(cuesets)))
    rng.shuffle(order)
    chosen: set[CellRef] = set()
    cover: list[CellRef | None] = [None] * len(cuesets)
    for i in order:
        members = cuesets[i].members
        hit = next((m for m in members if m in chosen), None)
        if hit is None:
            hit = members[rng.randrange(len(members))]
            chosen.add(hit)
        cover[i] = hit
    return HideSelection(frozenset(chosen), tuple(cover))


def protect_mvc(cuesets: Sequence[Cueset]) -> HideSelection:
    """Greedy cover: repeatedly hide the most frequent cell among uncovered cuesets.

    Frequencies count duplicate cuesets separately; ties go to the smallest CellRef.
    """
    where: dict[CellRef, list[int]] = {}
    for i, cs in enumerate(cuesets):
        for m in set(cs.members):
            where.setdefault(m, []).append(i)
    count = {c: len(ix) for c, ix in where.items()}
    heap = [(-n, c) for c, n in count.items()]
    heapq.heapify(heap)
    alive = [True] * len(cuesets)
    cover: list[CellRef | None] = [None] * len(cuesets)
    chosen: set[CellRef] = set()
    left = len(cuesets)
    while left and heap:
        neg, c = heapq.heappop(heap)
        if -neg != count[c]:
            if count[c] > 0:
                heapq.heappush(heap, (-count[c], c))
            continue
        if count[c] == 0:
            break
        chosen.add(c)
        for i in where[c]:
            if not alive[i]:
                continue
            alive[i] = False
            cover[i] = c
            left -= 1
            for m in set(cuesets[i].members):
                count[m] -= 1
    return HideSelection(frozenset(chosen), tuple(cover))


def protect_cloak(selection: HideSelection, sensitive_attrs: Iterable[str], view) -> HideSelection:
    """Also hide, in every tuple touched by the selection, the cells of the sensitive attributes."""
    schema = view.instance.schema
    cols = sorted({schema.index(a) for a in sensitive_attrs})
    extra = {CellRef(c[0], a) for c in selection.cells for a in cols}
    return HideSelection(selection.cells | frozenset(extra), selection.covered)


def cloak_cells(cell: CellRef, cols: Sequence[int]) -> set[CellRef]:
    return {CellRef(cell[0], a) for a in cols}
