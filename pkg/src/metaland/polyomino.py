"""Polyominoes: area, perimeter, shape classification, projections and
minimal-perimeter shapes.

Cells are ``(x, y)`` integer pairs with ``y`` pointing up, so "bottom" is
the smallest ``y`` and "left" the smallest ``x``.  Polyominoes are fixed
(not identified under rotation) and stored translated so that
``min x = min y = 0``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

MAX_ENUMERATION = 10

_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class PolyominoError(ValueError):
    pass


@dataclass(frozen=True)
class Polyomino:
    cells: frozenset

    def __post_init__(self):
        cells = frozenset((int(x), int(y)) for x, y in self.cells)
        if not cells:
            raise PolyominoError("a polyomino needs at least one cell")
        mx = min(x for x, _ in cells)
        my = min(y for _, y in cells)
        object.__setattr__(self, "cells", frozenset((x - mx, y - my) for x, y in cells))

    @classmethod
    def from_cells(cls, cells: Iterable) -> "Polyomino":
        return cls(frozenset(cells))

    @classmethod
    def rectangle(cls, width: int, height: int) -> "Polyomino":
        return cls(frozenset((x, y) for x in range(width) for y in range(height)))

    @classmethod
    def from_ascii(cls, text: str) -> "Polyomino":
        """``#`` marks a cell; the last line is the bottom row."""
        rows = [r for r in text.strip("\n").splitlines()]
        h = len(rows)
        return cls(frozenset((x, h - 1 - r) for r, row in enumerate(rows)
                             for x, ch in enumerate(row) if ch == "#"))

    @property
    def area(self) -> int:
        return len(self.cells)

    @cached_property
    def adjacencies(self) -> int:
        cells = self.cells
        return sum((x + 1, y) in cells for x, y in cells) + sum((x, y + 1) in cells for x, y in cells)

    @property
    def perimeter(self) -> int:
        return 4 * self.area - 2 * self.adjacencies

    def sorted_cells(self) -> list[tuple[int, int]]:
        return sorted(self.cells)

    def to_json(self) -> str:
        return json.dumps([list(c) for c in self.sorted_cells()])

    def ascii(self) -> str:
        w, h = surrounding_rectangle(self)
        rows = []
        for y in range(h - 1, -1, -1):
            rows.append("".join("#" if (x, y) in self.cells else "." for x in range(w)))
        return "\n".join(rows)


def measure(poly: Polyomino) -> tuple[int, int]:
    return poly.area, poly.perimeter


def surrounding_rectangle(poly: Polyomino) -> tuple[int, int]:
    return (max(x for x, _ in poly.cells) + 1, max(y for _, y in poly.cells) + 1)


def is_connected(poly: Polyomino) -> bool:
    cells = poly.cells
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        x, y = stack.pop()
        for dx, dy in _STEPS:
            c = (x + dx, y + dy)
            if c in cells and c not in seen:
                seen.add(c)
                stack.append(c)
    return len(seen) == len(cells)


def _runs_contiguous(groups: dict) -> bool:
    return all(max(v) - min(v) + 1 == len(v) for v in groups.values())


def is_convex(poly: Polyomino) -> bool:
    cols: dict[int, list[int]] = {}
    rows: dict[int, list[int]] = {}
    for x, y in poly.cells:
        cols.setdefault(x, []).append(y)
        rows.setdefault(y, []).append(x)
    return _runs_contiguous(cols) and _runs_contiguous(rows)


def is_monotone(poly: Polyomino) -> bool:
    w, h = surrounding_rectangle(poly)
    return poly.perimeter == 2 * (w + h)


@dataclass(frozen=True)
class ShapeFlags:
    connected: bool
    convex: bool
    monotone: bool


def classify(poly: Polyomino) -> ShapeFlags:
    return ShapeFlags(is_connected(poly), is_convex(poly), is_monotone(poly))


def project(poly: Polyomino, direction: str) -> Polyomino:
    """Slide every column down (``'down'``) or every row left (``'left'``)
    onto the edge of the bounding box, keeping the per-column (per-row)
    cell counts."""
    if direction == "down":
        counts = Counter(x for x, _ in poly.cells)
        return Polyomino(frozenset((x, y) for x, c in counts.items() for y in range(c)))
    if direction == "left":
        counts = Counter(y for _, y in poly.cells)
        return Polyomino(frozenset((x, y) for y, c in counts.items() for x in range(c)))
    raise PolyominoError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# minimal shapes


def min_perimeter(n: int) -> int:
    if n <= 0:
        raise PolyominoError("area must be positive")
    return 2 * math.isqrt(4 * n - 1) + 2  # == 2 * ceil(2 sqrt(n)), in exact integers


@dataclass(frozen=True)
class MinimalShape:
    n: int
    s: int
    k: int
    case: str  # "i": n = s(s-1) + k, "ii": n = s^2 + k
    min_perimeter: int
    polyomino: Polyomino


def decompose(n: int) -> tuple[int, int, str]:
    if n <= 0:
        raise PolyominoError("area must be positive")
    s = math.isqrt(n)
    if n < s * s + s:
        return s, n - s * s, "ii"
    s += 1
    return s, n - s * (s - 1), "i"


def minimal_shape(n: int) -> MinimalShape:
    """Quasi-square (case i) or square (case ii) with a bar of ``k`` cells
    laid on top of a longest side."""
    s, k, case = decompose(n)
    height = s - 1 if case == "i" else s
    cells = {(x, y) for x in range(s) for y in range(height)}
    cells |= {(x, height) for x in range(k)}
    return MinimalShape(n, s, k, case, min_perimeter(n), Polyomino(frozenset(cells)))


def shape_perimeter(s: int, k: int, case: str) -> int:
    if case == "i":
        return 4 * s - 2 if k == 0 else 4 * s
    return 4 * s if k == 0 else 4 * s + 2


# ---------------------------------------------------------------------------
# enumeration


def _canon(cells) -> frozenset:
    mx = min(x for x, _ in cells)
    my = min(y for _, y in cells)
    return frozenset((x - mx, y - my) for x, y in cells)


def _connected_by_area(n: int) -> list[set]:
    levels = [set(), {frozenset({(0, 0)})}]
    for _ in range(2, n + 1):
        nxt = set()
        for cells in levels[-1]:
            for x, y in cells:
                for dx, dy in _STEPS:
                    c = (x + dx, y + dy)
                    if c not in cells:
                        nxt.add(_canon(cells | {c}))
        levels.append(nxt)
    return levels


def _partitions(n: int, largest: int | None = None) -> Iterator[list[int]]:
    largest = n if largest is None else largest
    if n == 0:
        yield []
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _partitions(n - first, first):
            yield [first] + rest


def _place_apart(parts) -> frozenset:
    out, x0 = set(), 0
    for cells in parts:
        out |= {(x + x0, y) for x, y in cells}
        x0 += max(x for x, _ in cells) + 2
    return frozenset(out)


def enumerate_exhaustive(n: int, connected: bool = True) -> Iterator[Polyomino]:
    """All fixed polyominoes of area ``n`` up to translation, grown cell by
    cell with canonical deduplication.

    With ``connected=False`` disconnected ones are included too, one
    representative per multiset of component shapes (components set side by
    side one empty column apart).  The perimeter of a disconnected polyomino
    is the sum over its components, so it does not depend on how the
    components are placed as long as they share no edge."""
    if n <= 0:
        raise PolyominoError("area must be positive")
    if n > MAX_ENUMERATION:
        raise PolyominoError(f"enumeration bound: n <= {MAX_ENUMERATION}")
    levels = _connected_by_area(n)
    if connected:
        for cells in sorted(levels[n], key=sorted):
            yield Polyomino(cells)
        return
    ordered = [sorted(levels[k], key=sorted) for k in range(n + 1)]
    for parts in _partitions(n):
        yield from _multisets(parts, ordered)


def _multisets(parts: list[int], ordered) -> Iterator[Polyomino]:
    # nondecreasing shape index within runs of equal size, so each multiset appears once
    def rec(i, prev_size, prev_idx, chosen):
        if i == len(parts):
            yield Polyomino(_place_apart(chosen))
            return
        size = parts[i]
        start = prev_idx if size == prev_size else 0
        for idx in range(start, len(ordered[size])):
            yield from rec(i + 1, size, idx, chosen + [ordered[size][idx]])

    yield from rec(0, None, 0, [])
