import math

import pytest
from hypothesis import given, settings, strategies as st

from metaland import polyomino as po
from metaland.polyomino import Polyomino

# fixed polyominoes by area (translations identified, rotations not)
FIXED_COUNTS = [1, 2, 6, 19, 63, 216, 760, 2725, 9910]


def cellsets(max_size=12):
    return st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=max_size)


def test_measure_rectangle():
    r = Polyomino.rectangle(3, 2)
    assert po.measure(r) == (6, 10)
    assert po.surrounding_rectangle(r) == (3, 2)
    assert po.classify(r) == po.ShapeFlags(True, True, True)


def test_ascii_roundtrip():
    p = Polyomino.from_ascii("#..\n###\n.#.")
    assert p.area == 5
    assert Polyomino.from_ascii(p.ascii()) == p
    assert p.ascii().splitlines()[0] == "#.."


def test_shape_classes():
    # row- and column-convex shapes span their bounding box; a notch breaks both
    plus = Polyomino.from_ascii(".#.\n###\n.#.")
    assert po.is_convex(plus) and po.is_monotone(plus)
    s_shape = Polyomino.from_ascii(".##\n##.")
    assert po.is_convex(s_shape) and po.is_monotone(s_shape)
    u_shape = Polyomino.from_ascii("#.#\n###")
    assert po.is_connected(u_shape) and not po.is_convex(u_shape) and not po.is_monotone(u_shape)
    gap = Polyomino.from_cells([(0, 0), (2, 0)])
    assert not po.is_connected(gap) and not po.is_convex(gap)
    assert gap.perimeter == 8


def test_projection():
    p = Polyomino.from_ascii("#.\n.#\n##")
    down = po.project(p, "down")
    assert sorted(down.cells) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    left = po.project(p, "left")
    assert left.area == p.area
    with pytest.raises(po.PolyominoError):
        po.project(p, "up")


@pytest.mark.parametrize("n, expected", [(1, 4), (2, 6), (3, 8), (4, 8), (5, 10), (6, 10),
                                         (7, 12), (9, 12), (10, 14), (12, 14), (13, 16)])
def test_min_perimeter_values(n, expected):
    assert po.min_perimeter(n) == expected


def test_min_perimeter_matches_ceiling_formula():
    for n in range(1, 20001):
        assert po.min_perimeter(n) == 2 * math.ceil(2 * math.sqrt(n))


def test_decompose_and_minimal_shape():
    assert po.decompose(7) == (3, 1, "i")
    assert po.decompose(9) == (3, 0, "ii")
    assert po.decompose(6) == (3, 0, "i")
    assert po.decompose(11) == (3, 2, "ii")
    for n in range(1, 200):
        ms = po.minimal_shape(n)
        assert ms.polyomino.area == n
        assert ms.polyomino.perimeter == ms.min_perimeter == po.shape_perimeter(ms.s, ms.k, ms.case)
        assert po.is_convex(ms.polyomino)
    with pytest.raises(po.PolyominoError):
        po.minimal_shape(0)


def test_fixed_counts():
    for n, count in enumerate(FIXED_COUNTS, start=1):
        assert sum(1 for _ in po.enumerate_exhaustive(n)) == count


def test_disconnected_enumeration_small():
    # n = 3: six connected shapes, domino + monomino in two orientations, three monominoes
    polys = list(po.enumerate_exhaustive(3, connected=False))
    assert len(polys) == 6 + 2 + 1
    assert min(p.perimeter for p in polys) == 8
    assert sum(not po.is_connected(p) for p in polys) == 3


def test_enumeration_bounds():
    with pytest.raises(po.PolyominoError):
        list(po.enumerate_exhaustive(11))
    with pytest.raises(po.PolyominoError):
        list(po.enumerate_exhaustive(0))


@settings(max_examples=200, deadline=None)
@given(cellsets())
def test_perimeter_lower_bound(cells):
    p = Polyomino.from_cells(cells)
    assert p.perimeter >= po.min_perimeter(p.area)
    assert p.perimeter % 2 == 0


@settings(max_examples=200, deadline=None)
@given(cellsets())
def test_perimeter_counts_exposed_edges(cells):
    p = Polyomino.from_cells(cells)
    exposed = sum((x + dx, y + dy) not in p.cells
                  for x, y in p.cells for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    assert p.perimeter == exposed


@settings(max_examples=200, deadline=None)
@given(cellsets())
def test_projection_does_not_grow_perimeter(cells):
    p = Polyomino.from_cells(cells)
    for d in ("down", "left"):
        q = po.project(p, d)
        assert q.area == p.area
        assert q.perimeter <= p.perimeter


@settings(max_examples=200, deadline=None)
@given(cellsets())
def test_monotone_iff_bounding_box_perimeter(cells):
    p = Polyomino.from_cells(cells)
    w, h = po.surrounding_rectangle(p)
    assert p.perimeter >= 2 * (w + h) or not po.is_connected(p)
    if po.is_convex(p) and po.is_connected(p):
        assert po.is_monotone(p)
