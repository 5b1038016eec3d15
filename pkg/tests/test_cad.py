import math
import random

import pytest
from hypothesis import given, strategies as st

from geocad.cad import (
    DEFAULT_GRID, Arc, BrokenChain, CADModel, ChainError, CollinearArc, ExtrudeParams, Face, GridRangeError,
    Line, Loop, ModelError, NonFinite, QuantGrid, Sketch, arc_geometry, check_loop_chain, defining_points,
    dequantize, loop_bbox, loop_center, loop_polyline, loop_vertices, quantize, validate_model,
)
from helpers import random_loop
from oracle import circumcenter, quantize_ref

SQUARE = Loop.polygon([(0, 0), (5, 0), (5, 5), (0, 5)])
TRIANGLE = Loop.polygon([(0, 0), (4, 0), (0, 3)])
CIRCLE = Loop.circle((32, 32), 10)
SEMICIRCLE = Loop((0, 0), (Line((4, 0)), Arc((0, 0), (2, 2))))


def test_vertices_examples():
    assert loop_vertices(SQUARE) == [(0, 0), (5, 0), (5, 5), (0, 5)]
    assert loop_vertices(CIRCLE) == [(32, 32)]
    assert loop_vertices(TRIANGLE) == [(0, 0), (4, 0), (0, 3)]


def test_vertices_broken_chain():
    open_chain = Loop((0, 0), (Line((4, 0)), Line((4, 4)), Line((1, 0))))
    with pytest.raises(BrokenChain):
        loop_vertices(open_chain)


def test_center_examples():
    assert loop_center(Loop.polygon([(0, 0), (1, 0), (1, 1), (0, 1)])) == (0.5, 0.5)
    assert loop_center(CIRCLE) == (32, 32)
    cx, cy = loop_center(TRIANGLE)
    assert cx == pytest.approx(4 / 3, abs=1e-12) and cy == 1


def test_center_ignores_arc_mids():
    assert loop_center(SEMICIRCLE) == (2, 0)


def test_bbox_examples():
    assert tuple(loop_bbox(SQUARE)) == (0, 0, 5, 5)
    assert tuple(loop_bbox(Loop.circle((10, 10), 4))) == (6, 6, 14, 14)
    assert tuple(loop_bbox(SEMICIRCLE)) == pytest.approx((0, 0, 4, 2))


def test_bbox_arc_bulge_below_chord():
    # clockwise half circle bulging downwards
    lp = Loop((0, 10), (Line((4, 10)), Arc((0, 10), (2, 8))))
    assert tuple(loop_bbox(lp)) == pytest.approx((0, 8, 4, 10))


def test_quantize_examples():
    assert quantize(0.5) == 128 == quantize_ref(0.5, 256, 0, 1)
    assert quantize(0.0) == 0
    assert quantize(7.5) == 255
    assert quantize(-3.0) == 0
    with pytest.raises(NonFinite):
        quantize(float("nan"))
    with pytest.raises(NonFinite):
        quantize(float("inf"))


def test_dequantize_ends():
    assert dequantize(0) == 0.0 and dequantize(255) == 1.0
    assert dequantize(128, interval=(-1.0, 1.0)) == pytest.approx(128 * 2 / 255 - 1)


@given(st.floats(-2, 3, allow_nan=False), st.sampled_from([2, 16, 256, 1024]))
def test_quantize_matches_exact_reference(v, levels):
    assert quantize(v, QuantGrid(levels)) == quantize_ref(v, levels, 0, 1)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.sampled_from([(0.0, 1.0), (-1.0, 1.0), (-5.0, 20.0)]))
def test_quantize_idempotent(v, interval):
    q = quantize(v, DEFAULT_GRID, interval)
    assert 0 <= q <= 255
    assert quantize(dequantize(q, DEFAULT_GRID, interval), DEFAULT_GRID, interval) == q


def test_grid_invariants():
    with pytest.raises(ValueError):
        QuantGrid(1)
    g = QuantGrid(4)
    assert g.max == 3 and g.contains(3) and not g.contains(4) and not g.contains(-1)


def test_arc_geometry_examples():
    g = arc_geometry(Arc((4, 0), (2, 2)), (0, 0))
    assert g.center == pytest.approx((2, 0)) and g.radius == pytest.approx(2) and g.sweep == pytest.approx(math.pi)
    s2 = 2 * math.cos(math.pi / 4)
    g = arc_geometry(Arc((0, 2), (s2, s2)), (2, 0))
    assert g.sweep == pytest.approx(math.pi / 2) and g.orientation == 1
    with pytest.raises(CollinearArc):
        arc_geometry(Arc((4, 0), (2, 0)), (0, 0))


@given(st.integers(0, 10_000))
def test_arc_center_matches_exact_circumcenter(seed):
    rng = random.Random(seed)
    pts = [(rng.randint(0, 255), rng.randint(0, 255)) for _ in range(3)]
    try:
        exact = circumcenter(*pts)
    except ValueError:
        with pytest.raises(CollinearArc):
            arc_geometry(Arc(pts[2], pts[1]), pts[0])
        return
    g = arc_geometry(Arc(pts[2], pts[1]), pts[0])
    scale = max(1.0, abs(float(exact[0])), abs(float(exact[1])))
    assert g.center[0] == pytest.approx(float(exact[0]), abs=1e-9 * scale)
    assert g.center[1] == pytest.approx(float(exact[1]), abs=1e-9 * scale)
    assert 0 < g.sweep < 2 * math.pi


@given(st.integers(0, 100_000))
def test_vertex_count_and_skeleton(seed):
    lp = random_loop(random.Random(seed))
    verts = loop_vertices(lp)
    if lp.is_circle:
        assert verts == [lp.curves[0].center]
        return
    assert len(verts) == len(lp.curves)
    skeleton = Loop.polygon(verts)
    assert [c.end for c in skeleton.curves] == [c.end for c in lp.curves]


@given(st.integers(0, 100_000), st.integers(-50, 50), st.integers(-50, 50))
def test_center_translation_equivariant(seed, dx, dy):
    lp = random_loop(random.Random(seed))
    moved = Loop((lp.start[0] + dx, lp.start[1] + dy), tuple(_shift(c, dx, dy) for c in lp.curves))
    (x0, y0), (x1, y1) = loop_center(lp), loop_center(moved)
    assert x1 - x0 == pytest.approx(dx, abs=1e-9) and y1 - y0 == pytest.approx(dy, abs=1e-9)


def _shift(c, dx, dy):
    if isinstance(c, Arc):
        return Arc((c.end[0] + dx, c.end[1] + dy), (c.mid[0] + dx, c.mid[1] + dy))
    if isinstance(c, Line):
        return Line((c.end[0] + dx, c.end[1] + dy))
    return type(c)((c.center[0] + dx, c.center[1] + dy), c.radius)


@given(st.integers(0, 100_000), st.sampled_from([1.0, 0.1, 0.01]))
def test_bbox_contains_dense_samples(seed, err):
    lp = random_loop(random.Random(seed))
    box = loop_bbox(lp)
    for x, y in loop_polyline(lp, max_chord_error=err):
        assert box.xmin - 1e-9 <= x <= box.xmax + 1e-9
        assert box.ymin - 1e-9 <= y <= box.ymax + 1e-9


def test_bbox_is_tight_for_arcs():
    lp = Loop((0, 0), (Line((4, 0)), Arc((0, 0), (2, 2))))
    xs, ys = zip(*loop_polyline(lp, 1e-4))
    box = loop_bbox(lp)
    assert max(ys) == pytest.approx(box.ymax, abs=1e-3)


def test_chain_checks():
    check_loop_chain(SQUARE)
    with pytest.raises(ChainError):
        check_loop_chain(Loop((0, 0), (Line((3, 0)), Line((3, 3)))))
    with pytest.raises(ChainError):
        check_loop_chain(Loop((0, 0), (Line((3, 0)), CIRCLE.curves[0])))
    with pytest.raises(CollinearArc):
        check_loop_chain(Loop((0, 0), (Line((4, 0)), Arc((0, 0), (2, 0)))))


def test_defining_points():
    assert defining_points(SEMICIRCLE) == [(0, 0), (4, 0), (2, 2), (0, 0)]
    assert defining_points(CIRCLE) == [(32, 32)]


def test_extrude_params_validation():
    assert ExtrudeParams().values() == (0, 0, 0, 128, 128, 128, 255, 1, 0)
    for bad in (dict(boolean_op="union"), dict(scale=0), dict(dist_pos=0, dist_neg=0), dict(origin=(1, 2))):
        with pytest.raises(ModelError):
            ExtrudeParams(**bad)


def test_model_invariants():
    sk = Sketch((Face(SQUARE),))
    with pytest.raises(ModelError):
        CADModel(())
    with pytest.raises(ModelError):
        CADModel(((sk, ExtrudeParams(boolean_op="cut")),))
    with pytest.raises(ModelError):
        Sketch(())
    m = CADModel(((sk, ExtrudeParams()), (sk, ExtrudeParams(boolean_op="join"))))
    assert m.loops() == [SQUARE, SQUARE]


def test_validate_model():
    outer = Loop.polygon([(0, 0), (50, 0), (50, 50), (0, 50)])
    good = CADModel(((Sketch((Face(outer, (Loop.circle((25, 25), 5),)),)), ExtrudeParams()),))
    validate_model(good)
    escaping = CADModel(((Sketch((Face(outer, (Loop.circle((48, 25), 5),)),)), ExtrudeParams()),))
    with pytest.raises(ModelError):
        validate_model(escaping)
    validate_model(escaping, nesting=False)
    off_grid = CADModel(((Sketch((Face(Loop.polygon([(0, 0), (300, 0), (0, 5)])),)), ExtrudeParams()),))
    with pytest.raises(GridRangeError):
        validate_model(off_grid)
