"""Loop validity checks and vertex-based shape classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import kernels
from .cad import (
    Arc, ChainError, Circle, CollinearArc, GeometryError, Loop, arc_geometry, check_loop_chain,
    loop_polyline, loop_vertices,
)

__all__ = [
    "CATEGORIES", "SIMPLE_CATEGORIES", "DIM_KEYS", "GeometricLabel", "Tolerances", "InvalidLoop",
    "arc_geometry", "check_closed", "check_self_intersection", "is_simple_part", "classify_loop",
    "is_valid_loop", "satisfies",
]

TRIANGLES = ("acute_triangle", "right_triangle", "obtuse_triangle", "isosceles_triangle",
             "isosceles_right_triangle")
QUADRILATERALS = ("quadrilateral", "trapezoid", "isosceles_trapezoid", "kite", "parallelogram",
                  "rectangle", "rhombus", "square")
CURVED = ("circle", "semicircle", "quarter_circle", "three_quarter_circle", "major_arc_loop",
          "minor_arc_loop", "sector")
SIMPLE_CATEGORIES = TRIANGLES + QUADRILATERALS + CURVED
CATEGORIES = SIMPLE_CATEGORIES + ("complex",)

DIM_KEYS = {"circle": ("radius",), "square": ("side",), "rectangle": ("length", "width")}

# (lines, arcs, circles) signatures with a vertex-based classification
SIMPLE_SIGNATURES = {(3, 0, 0), (4, 0, 0), (0, 0, 1), (1, 1, 0), (2, 1, 0)}


class InvalidLoop(GeometryError):
    pass


@dataclass(frozen=True)
class Tolerances:
    length_rel_eps: float = 0.02
    angle_eps: float = 0.0175
    parallel_eps: float = 0.02

    def __post_init__(self):
        if min(self.length_rel_eps, self.angle_eps, self.parallel_eps) <= 0:
            raise ValueError("tolerances must be positive")


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class GeometricLabel:
    category: str
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        allowed = DIM_KEYS.get(self.category, ())
        extra = set(self.dims) - set(allowed)
        if extra:
            raise ValueError(f"{self.category} takes dims {allowed}, got {sorted(extra)}")

    @property
    def is_simple(self) -> bool:
        return self.category != "complex"


def check_closed(loop: Loop) -> bool:
    if not loop.curves:
        return False
    if any(isinstance(c, Circle) for c in loop.curves):
        return len(loop.curves) == 1
    return loop.curves[-1].end == loop.start


def check_self_intersection(loop: Loop) -> bool:
    """True when the loop touches or crosses itself.

    Arcs are flattened with a chord error of at most 0.25 grid units; a
    collinear (degenerate) arc counts as an intersection.
    """
    if loop.is_circle:
        return False
    try:
        pts = loop_polyline(loop)
    except CollinearArc:
        return True
    ring = pts[:-1] if pts[-1] == pts[0] else pts
    return kernels.polyline_self_intersects([p[0] for p in ring], [p[1] for p in ring])


def is_valid_loop(loop: Loop) -> bool:
    if not check_closed(loop):
        return False
    try:
        check_loop_chain(loop)
    except ChainError:
        return False
    return not check_self_intersection(loop)


def is_simple_part(loop: Loop) -> bool:
    return loop.signature() in SIMPLE_SIGNATURES


# -- predicates -------------------------------------------------------------


def _len_eq(a, b, tol):
    return abs(a - b) <= tol.length_rel_eps * max(a, b)


def _is_right(u, v, tol):
    dot = u[0] * v[0] + u[1] * v[1]
    return abs(dot) <= math.sin(tol.angle_eps) * math.hypot(*u) * math.hypot(*v)


def _is_parallel(u, v, tol):
    cross = u[0] * v[1] - u[1] * v[0]
    return abs(cross) <= tol.parallel_eps * math.hypot(*u) * math.hypot(*v)


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _corners(verts):
    n = len(verts)
    return [(_sub(verts[i - 1], verts[i]), _sub(verts[(i + 1) % n], verts[i])) for i in range(n)]


def _classify_triangle(verts, tol):
    sides = [math.hypot(*_sub(verts[(i + 1) % 3], verts[i])) for i in range(3)]
    corners = _corners(verts)
    right = any(_is_right(u, v, tol) for u, v in corners)
    iso = any(_len_eq(sides[i], sides[(i + 1) % 3], tol) for i in range(3))
    if right and iso:
        return GeometricLabel("isosceles_right_triangle")
    if right:
        return GeometricLabel("right_triangle")
    if iso:
        return GeometricLabel("isosceles_triangle")
    if any(u[0] * v[0] + u[1] * v[1] < 0 for u, v in corners):
        return GeometricLabel("obtuse_triangle")
    return GeometricLabel("acute_triangle")


def _classify_quad(verts, tol):
    edges = [_sub(verts[(i + 1) % 4], verts[i]) for i in range(4)]
    sides = [math.hypot(*e) for e in edges]
    par02 = _is_parallel(edges[0], edges[2], tol)
    par13 = _is_parallel(edges[1], edges[3], tol)
    all_equal = all(_len_eq(sides[i], sides[j], tol) for i in range(4) for j in range(i + 1, 4))
    all_right = all(_is_right(u, v, tol) for u, v in _corners(verts))
    if all_equal and all_right:
        return GeometricLabel("square", {"side": sum(sides) / 4})
    if par02 and par13 and all_right:
        a, b = (sides[0] + sides[2]) / 2, (sides[1] + sides[3]) / 2
        return GeometricLabel("rectangle", {"length": max(a, b), "width": min(a, b)})
    if all_equal:
        return GeometricLabel("rhombus")
    if par02 and par13:
        return GeometricLabel("parallelogram")
    if par02 or par13:
        legs = (sides[1], sides[3]) if par02 else (sides[0], sides[2])
        if _len_eq(*legs, tol):
            return GeometricLabel("isosceles_trapezoid")
        return GeometricLabel("trapezoid")
    if (_len_eq(sides[0], sides[1], tol) and _len_eq(sides[2], sides[3], tol)) or \
            (_len_eq(sides[1], sides[2], tol) and _len_eq(sides[3], sides[0], tol)):
        return GeometricLabel("kite")
    return GeometricLabel("quadrilateral")


def _classify_line_arc(loop, tol):
    cur = loop.start
    for c in loop.curves:
        if isinstance(c, Arc):
            sweep = arc_geometry(c, cur).sweep
            break
        cur = c.end
    for target, name in ((math.pi / 2, "quarter_circle"), (math.pi, "semicircle"),
                         (3 * math.pi / 2, "three_quarter_circle")):
        if abs(sweep - target) <= tol.angle_eps:
            return GeometricLabel(name)
    return GeometricLabel("minor_arc_loop" if sweep < math.pi else "major_arc_loop")


def classify_loop(loop: Loop, tol: Tolerances = DEFAULT_TOLERANCES) -> GeometricLabel:
    """Most specific category of a valid loop.

    Triangles: right and isosceles are tested first (both give the combined
    class), then obtuse vs acute.  Quadrilaterals in the order square,
    rectangle, rhombus, parallelogram, isosceles trapezoid, trapezoid, kite.
    A line plus an arc is named by its sweep; two lines plus an arc is a sector.
    """
    try:
        check_loop_chain(loop)
    except ChainError as exc:
        raise InvalidLoop(str(exc)) from None
    if check_self_intersection(loop):
        raise InvalidLoop("loop intersects itself")
    sig = loop.signature()
    if sig == (0, 0, 1):
        return GeometricLabel("circle", {"radius": loop.curves[0].radius})
    if sig == (3, 0, 0):
        return _classify_triangle(loop_vertices(loop), tol)
    if sig == (4, 0, 0):
        return _classify_quad(loop_vertices(loop), tol)
    if sig == (1, 1, 0):
        return _classify_line_arc(loop, tol)
    if sig == (2, 1, 0):
        return GeometricLabel("sector")
    return GeometricLabel("complex")


# a loop of category k also satisfies every instruction listed for k
GENERALIZES = {
    "square": {"rectangle", "rhombus", "parallelogram", "trapezoid", "kite", "quadrilateral"},
    "rectangle": {"parallelogram", "trapezoid", "quadrilateral"},
    "rhombus": {"parallelogram", "trapezoid", "kite", "quadrilateral"},
    "parallelogram": {"trapezoid", "quadrilateral"},
    "isosceles_trapezoid": {"trapezoid", "quadrilateral"},
    "trapezoid": {"quadrilateral"},
    "kite": {"quadrilateral"},
    "isosceles_right_triangle": {"right_triangle", "isosceles_triangle"},
}


def satisfies(found: str, wanted: str) -> bool:
    """Whether a loop classified ``found`` fulfils an instruction for ``wanted``."""
    return found == wanted or wanted in GENERALIZES.get(found, ())
