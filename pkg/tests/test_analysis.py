import random

import pytest
from hypothesis import given, strategies as st

from geocad.analysis import (
    CATEGORIES, DIM_KEYS, GENERALIZES, SIMPLE_CATEGORIES, GeometricLabel, InvalidLoop, Tolerances, check_closed,
    check_self_intersection, classify_loop, is_simple_part, is_valid_loop, satisfies,
)
from geocad.cad import Arc, Circle, Line, Loop, loop_bbox
from helpers import convex_polygon
from oracle import oracle_classify
import shapegen


def poly(*pts):
    return Loop.polygon(list(pts))


@pytest.mark.parametrize("loop, category", [
    (poly((0, 0), (10, 0), (10, 10), (0, 10)), "square"),
    (poly((0, 0), (20, 0), (20, 10), (0, 10)), "rectangle"),
    (poly((0, 0), (4, 0), (0, 3)), "right_triangle"),
    (poly((0, 0), (4, 0), (0, 4)), "isosceles_right_triangle"),
    (poly((0, 0), (10, 0), (5, 20)), "isosceles_triangle"),
    (poly((0, 0), (10, 0), (4, 7)), "acute_triangle"),
    (poly((0, 0), (10, 0), (14, 3)), "obtuse_triangle"),
    (poly((0, 0), (5, 0), (8, 4), (3, 4)), "rhombus"),
    (poly((0, 0), (6, 0), (8, 3), (2, 3)), "parallelogram"),
    (poly((0, 0), (10, 0), (7, 4), (3, 4)), "isosceles_trapezoid"),
    (poly((0, 0), (10, 0), (8, 4), (1, 4)), "trapezoid"),
    (poly((0, 0), (3, -2), (9, 0), (3, 2)), "kite"),
    (poly((0, 0), (10, 1), (7, 6), (1, 4)), "quadrilateral"),
    (Loop.circle((50, 50), 9), "circle"),
    (Loop((0, 0), (Line((4, 0)), Arc((0, 0), (2, 2)))), "semicircle"),
    (Loop((0, 0), (Line((10, 0)), Arc((0, 0), (5, -5)))), "semicircle"),
    (Loop((25, 0), (Arc((7, 24), (20, 15)), Line((25, 0)))), "minor_arc_loop"),
    (Loop((0, 0), (Line((4, 0)), Line((0, 4)), Arc((0, 0), (-1, 2)))), "sector"),
    (convex_polygon(random.Random(1), 7, 100, 100, 50), "complex"),
])
def test_classification_examples(loop, category):
    assert classify_loop(loop).category == category
    assert oracle_classify(loop)[0] == category


def test_dims_examples():
    assert classify_loop(poly((0, 0), (10, 0), (10, 10), (0, 10))).dims == {"side": 10}
    assert classify_loop(poly((0, 0), (0, 10), (20, 10), (20, 0))).dims == {"length": 20, "width": 10}
    assert classify_loop(Loop.circle((50, 50), 9)).dims == {"radius": 9}
    assert classify_loop(poly((0, 0), (4, 0), (0, 3))).dims == {}


def test_quarter_and_three_quarter():
    quarter = Loop((10, 0), (Arc((0, 10), (8, 6)), Line((10, 0))))
    three = Loop((10, 0), (Arc((0, 10), (-8, -6)), Line((10, 0))))
    assert classify_loop(quarter).category == "quarter_circle"
    assert classify_loop(three).category == "three_quarter_circle"


def test_tolerance_boundary():
    almost = poly((0, 0), (100, 0), (100, 101), (0, 101))
    assert classify_loop(almost).category == "square"
    assert classify_loop(almost, Tolerances(length_rel_eps=0.001)).category == "rectangle"
    with pytest.raises(ValueError):
        Tolerances(angle_eps=0)


def test_invalid_loops():
    bow_tie = poly((0, 0), (4, 4), (4, 0), (0, 4))
    assert check_self_intersection(bow_tie)
    assert not is_valid_loop(bow_tie)
    with pytest.raises(InvalidLoop):
        classify_loop(bow_tie)
    open_loop = Loop((0, 0), (Line((4, 0)), Line((4, 4))))
    assert not check_closed(open_loop)
    with pytest.raises(InvalidLoop):
        classify_loop(open_loop)
    degenerate_arc = Loop((0, 0), (Line((4, 0)), Arc((0, 0), (2, 0))))
    assert check_self_intersection(degenerate_arc)
    assert check_closed(Loop.circle((5, 5), 2)) and not check_self_intersection(Loop.circle((5, 5), 2))


def test_simple_part_signatures():
    assert is_simple_part(poly((0, 0), (4, 0), (0, 3)))
    assert is_simple_part(Loop.circle((5, 5), 2))
    assert not is_simple_part(convex_polygon(random.Random(2), 5, 100, 100, 40))


def test_label_validation():
    with pytest.raises(ValueError):
        GeometricLabel("hexagon")
    with pytest.raises(ValueError):
        GeometricLabel("rhombus", {"side": 3})
    assert not GeometricLabel("complex").is_simple
    assert set(DIM_KEYS) <= set(SIMPLE_CATEGORIES)
    assert set(CATEGORIES) == set(SIMPLE_CATEGORIES) | {"complex"}


def test_specificity_lattice():
    assert satisfies("square", "rectangle") and satisfies("square", "rhombus")
    assert not satisfies("rectangle", "square")
    assert satisfies("isosceles_right_triangle", "right_triangle")
    assert not satisfies("right_triangle", "isosceles_triangle")
    assert satisfies("circle", "circle") and not satisfies("circle", "semicircle")
    # the map is transitively closed
    for k, sup in GENERALIZES.items():
        for s in sup:
            assert GENERALIZES.get(s, set()) <= sup


def _rot90(loop, k):
    box = loop_bbox(loop)
    ox, oy = int(box.xmin), int(box.ymin)

    def f(p):
        x, y = p[0] - ox, p[1] - oy
        for _ in range(k):
            x, y = -y, x
        return (x + 200, y + 200)
    return _map(loop, f)


def _mirror(loop):
    return _map(loop, lambda p: (255 - p[0], p[1]))


def _scale(loop, s):
    box = loop_bbox(loop)
    ox, oy = int(box.xmin), int(box.ymin)
    if loop.is_circle:
        c = loop.curves[0]
        return Loop.circle(((c.center[0] - ox) * s, (c.center[1] - oy) * s), c.radius * s)
    return _map(loop, lambda p: ((p[0] - ox) * s, (p[1] - oy) * s))


def _map(loop, f):
    if loop.is_circle:
        c = loop.curves[0]
        return Loop.circle(f(c.center), c.radius)
    out = []
    for c in loop.curves:
        out.append(Arc(f(c.end), f(c.mid)) if isinstance(c, Arc) else Line(f(c.end)))
    return Loop(f(loop.start), tuple(out))


@given(st.integers(0, 10**9), st.sampled_from(shapegen.CATEGORIES))
def test_classifier_agrees_with_oracle(seed, category):
    rng = random.Random(seed)
    loop = shapegen.make_shape(category, rng, axis_aligned=rng.random() < 0.3)
    label = classify_loop(loop)
    exp_cat, exp_dims = oracle_classify(loop)
    assert label.category == exp_cat == category
    assert label.dims.keys() == exp_dims.keys()
    for k, v in exp_dims.items():
        assert label.dims[k] == pytest.approx(v, rel=1e-9)


@given(st.integers(0, 10**9), st.sampled_from(shapegen.CATEGORIES), st.integers(1, 3), st.integers(2, 3))
def test_label_invariance(seed, category, quarter_turns, k):
    loop = shapegen.make_shape(category, random.Random(seed))
    base = classify_loop(loop)
    assert classify_loop(_rot90(loop, quarter_turns)) == base
    assert classify_loop(_mirror(loop)) == base
    scaled = classify_loop(_scale(loop, k))
    assert scaled.category == base.category
    for key, v in base.dims.items():
        assert scaled.dims[key] == pytest.approx(k * v, rel=1e-9)


@given(st.integers(0, 10**9))
def test_complex_loops_stay_complex(seed):
    rng = random.Random(seed)
    loop = convex_polygon(rng, rng.randint(5, 9), 128, 128, rng.randint(20, 100))
    assert classify_loop(loop).category == "complex"


def test_curve_types_are_plain_dataclasses():
    assert Circle((1, 1), 1) == Loop.circle((1, 1), 1).curves[0]
