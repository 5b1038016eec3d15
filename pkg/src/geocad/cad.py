"""Sketch-extrude CAD domain types and elementary loop geometry.

All coordinates live on an integer quantization grid (``QuantGrid``).  Loops are
stored as a start point followed by curves that only carry their end point, so a
chain is connected by construction and closure is the only thing to check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union


class GeometryError(ValueError):
    pass


class ChainError(GeometryError):
    """Curves do not form a closed chain (or a circle shares its loop)."""


BrokenChain = ChainError


class CollinearArc(ChainError):
    pass


class GridRangeError(GeometryError):
    pass


class NonFinite(GeometryError):
    pass


class ModelError(GeometryError):
    pass


@dataclass(frozen=True)
class QuantGrid:
    levels: int = 256

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"grid needs at least 2 levels, got {self.levels}")

    @property
    def max(self) -> int:
        return self.levels - 1

    def contains(self, q: int) -> bool:
        return 0 <= q <= self.levels - 1


DEFAULT_GRID = QuantGrid()


class Point(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Line:
    end: Point
    kind = "line"


@dataclass(frozen=True)
class Arc:
    """Three-point arc: the chain's current point, ``mid`` (on the arc) and ``end``."""

    end: Point
    mid: Point
    kind = "arc"


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: int
    kind = "circle"

    @property
    def end(self) -> Point:
        return self.center


Curve = Union[Line, Arc, Circle]


@dataclass(frozen=True)
class Loop:
    start: Point
    curves: tuple

    def __post_init__(self):
        object.__setattr__(self, "start", Point(*self.start))
        object.__setattr__(self, "curves", tuple(self.curves))

    @classmethod
    def polygon(cls, points: Sequence[Sequence[int]]) -> "Loop":
        pts = [Point(*p) for p in points]
        return cls(pts[0], tuple(Line(p) for p in pts[1:] + pts[:1]))

    @classmethod
    def circle(cls, center: Sequence[int], radius: int) -> "Loop":
        c = Point(*center)
        return cls(c, (Circle(c, radius),))

    @property
    def is_circle(self) -> bool:
        return len(self.curves) == 1 and isinstance(self.curves[0], Circle)

    def signature(self) -> tuple:
        """(lines, arcs, circles) counts."""
        n_line = sum(isinstance(c, Line) for c in self.curves)
        n_arc = sum(isinstance(c, Arc) for c in self.curves)
        return n_line, n_arc, len(self.curves) - n_line - n_arc


@dataclass(frozen=True)
class Face:
    outer: Loop
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    @property
    def loops(self) -> tuple:
        return (self.outer,) + self.holes


@dataclass(frozen=True)
class Sketch:
    faces: tuple

    def __post_init__(self):
        object.__setattr__(self, "faces", tuple(self.faces))
        if not self.faces:
            raise ModelError("sketch needs at least one face")

    def loops(self) -> list:
        return [lp for f in self.faces for lp in f.loops]


BOOLEAN_OPS = ("new", "join", "cut", "intersect")


@dataclass(frozen=True)
class ExtrudeParams:
    """Extrusion of one sketch, every field quantized on the model grid.

    ``orientation`` holds three Euler angles (z, y, x order) where level ``q``
    means ``q * 2*pi / levels``.  ``origin`` is dequantized on [-1, 1],
    ``scale`` and the two distances on [0, 1] (normalized model units).
    """

    orientation: tuple = (0, 0, 0)
    origin: tuple = (128, 128, 128)
    scale: int = 255
    dist_pos: int = 1
    dist_neg: int = 0
    boolean_op: str = "new"

    def __post_init__(self):
        object.__setattr__(self, "orientation", tuple(self.orientation))
        object.__setattr__(self, "origin", tuple(self.origin))
        if len(self.orientation) != 3 or len(self.origin) != 3:
            raise ModelError("orientation and origin need three components")
        if self.boolean_op not in BOOLEAN_OPS:
            raise ModelError(f"unknown boolean op {self.boolean_op!r}")
        if self.scale < 1:
            raise ModelError("scale must be positive")
        if self.dist_pos < 0 or self.dist_neg < 0 or self.dist_pos + self.dist_neg < 1:
            raise ModelError("extrusion distances must be nonnegative and sum to at least 1")

    def values(self) -> tuple:
        return (*self.orientation, *self.origin, self.scale, self.dist_pos, self.dist_neg)


@dataclass(frozen=True)
class CADModel:
    steps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(s) for s in self.steps))
        if not self.steps:
            raise ModelError("model needs at least one sketch-extrude step")
        if self.steps[0][1].boolean_op != "new":
            raise ModelError("first extrusion must create a new body")

    def loops(self) -> list:
        return [lp for sketch, _ in self.steps for lp in sketch.loops()]


# -- geometry ---------------------------------------------------------------


class ArcGeometry(NamedTuple):
    center: tuple
    radius: float
    sweep: float
    orientation: int  # +1 counter-clockwise, -1 clockwise


class BBox(NamedTuple):
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> tuple:
        return ((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)

    def contains(self, other: "BBox", slack: float = 0.0) -> bool:
        return (other.xmin >= self.xmin - slack and other.ymin >= self.ymin - slack
                and other.xmax <= self.xmax + slack and other.ymax <= self.ymax + slack)


def arc_geometry(arc: Arc, chain_start) -> ArcGeometry:
    """Circumcircle, swept angle and handedness of an arc entered at ``chain_start``."""
    sx, sy = chain_start
    mx, my = arc.mid
    ex, ey = arc.end
    cross = (mx - sx) * (ey - sy) - (my - sy) * (ex - sx)
    if cross == 0:
        raise CollinearArc(f"arc {tuple(chain_start)} -> {tuple(arc.mid)} -> {tuple(arc.end)} is collinear")
    d = 2.0 * cross
    s2 = sx * sx + sy * sy
    m2 = mx * mx + my * my
    e2 = ex * ex + ey * ey
    # circumcenter via the standard determinant form
    ux = (s2 * (my - ey) + m2 * (ey - sy) + e2 * (sy - my)) / d
    uy = (s2 * (ex - mx) + m2 * (sx - ex) + e2 * (mx - sx)) / d
    r = math.hypot(sx - ux, sy - uy)
    a_s = math.atan2(sy - uy, sx - ux)
    a_e = math.atan2(ey - uy, ex - ux)
    orient = 1 if cross > 0 else -1
    if orient > 0:
        sweep = (a_e - a_s) % (2 * math.pi)
    else:
        sweep = (a_s - a_e) % (2 * math.pi)
    return ArcGeometry((ux, uy), r, sweep, orient)


def arc_polyline(start, arc: Arc, max_chord_error: float = 0.25, min_segments: int = 4) -> list:
    """Points along an arc from ``start`` to ``arc.end`` (both exact) with bounded sagitta."""
    g = arc_geometry(arc, start)
    n = _segments_for(g.radius, g.sweep, max_chord_error, min_segments)
    ux, uy = g.center
    a0 = math.atan2(start[1] - uy, start[0] - ux)
    pts = [(float(start[0]), float(start[1]))]
    for i in range(1, n):
        a = a0 + g.orientation * g.sweep * i / n
        pts.append((ux + g.radius * math.cos(a), uy + g.radius * math.sin(a)))
    pts.append((float(arc.end[0]), float(arc.end[1])))
    return pts


def circle_polyline(circle: Circle, max_chord_error: float = 0.25, min_segments: int = 8) -> list:
    """Closed ring of points (first point repeated at the end)."""
    n = _segments_for(circle.radius, 2 * math.pi, max_chord_error, min_segments)
    cx, cy = circle.center
    pts = [(cx + circle.radius * math.cos(2 * math.pi * i / n),
            cy + circle.radius * math.sin(2 * math.pi * i / n)) for i in range(n)]
    pts.append(pts[0])
    return pts


def _segments_for(radius: float, sweep: float, err: float, min_segments: int) -> int:
    if radius <= err:
        return min_segments
    step = 2 * math.acos(1 - err / radius)
    return max(min_segments, math.ceil(sweep / step))


def loop_polyline(loop: Loop, max_chord_error: float = 0.25) -> list:
    """Closed polyline (first point repeated at the end) approximating the loop."""
    if loop.is_circle:
        return circle_polyline(loop.curves[0], max_chord_error)
    pts = [(float(loop.start[0]), float(loop.start[1]))]
    cur = loop.start
    for c in loop.curves:
        if isinstance(c, Arc):
            pts.extend(arc_polyline(cur, c, max_chord_error)[1:])
        elif isinstance(c, Line):
            pts.append((float(c.end[0]), float(c.end[1])))
        else:
            raise ChainError("circle must be the only curve of its loop")
        cur = c.end
    return pts


def loop_vertices(loop: Loop) -> list:
    """Curve endpoints in traversal order, starting at ``loop.start``.

    Arc mid points are not vertices; a circle loop yields its center alone.
    """
    if not loop.curves:
        raise ChainError("empty loop")
    if loop.is_circle:
        return [loop.curves[0].center]
    if any(isinstance(c, Circle) for c in loop.curves):
        raise ChainError("circle must be the only curve of its loop")
    if loop.curves[-1].end != loop.start:
        raise ChainError(f"chain ends at {tuple(loop.curves[-1].end)}, not at start {tuple(loop.start)}")
    return [loop.start] + [c.end for c in loop.curves[:-1]]


def loop_center(loop: Loop) -> tuple:
    verts = loop_vertices(loop)
    return (sum(p[0] for p in verts) / len(verts), sum(p[1] for p in verts) / len(verts))


def loop_bbox(loop: Loop) -> BBox:
    """Tight bounds including arc bulges and circle extents."""
    if loop.is_circle:
        (cx, cy), r = loop.curves[0].center, loop.curves[0].radius
        return BBox(cx - r, cy - r, cx + r, cy + r)
    xs = [float(loop.start[0])]
    ys = [float(loop.start[1])]
    cur = loop.start
    for c in loop.curves:
        if isinstance(c, Arc):
            g = arc_geometry(c, cur)
            a0 = math.atan2(cur[1] - g.center[1], cur[0] - g.center[0])
            for k in range(4):
                ang = k * math.pi / 2
                # signed travel from the start angle to this axis direction
                travel = ((ang - a0) * g.orientation) % (2 * math.pi)
                if travel <= g.sweep:
                    xs.append(g.center[0] + g.radius * math.cos(ang))
                    ys.append(g.center[1] + g.radius * math.sin(ang))
        xs.append(float(c.end[0]))
        ys.append(float(c.end[1]))
        cur = c.end
    return BBox(min(xs), min(ys), max(xs), max(ys))


def defining_points(loop: Loop) -> list:
    """Every stored coordinate pair: start, curve ends, arc mids, circle centers."""
    pts = [] if loop.is_circle else [loop.start]
    for c in loop.curves:
        if isinstance(c, Arc):
            pts.append(c.mid)
        pts.append(c.center if isinstance(c, Circle) else c.end)
    return pts


def quantize(value: float, grid: QuantGrid = DEFAULT_GRID, interval=(0.0, 1.0)) -> int:
    """Nearest of ``grid.levels`` evenly spaced levels spanning ``interval``.

    Level ``q`` sits at ``lo + q * (hi - lo) / (levels - 1)``; ties round up and
    values outside the interval clamp to the end levels.
    """
    lo, hi = interval
    if not hi > lo:
        raise ValueError(f"empty interval {interval}")
    if not math.isfinite(value):
        raise NonFinite(f"cannot quantize {value}")
    t = (value - lo) / (hi - lo) * (grid.levels - 1)
    return min(max(math.floor(t + 0.5), 0), grid.levels - 1)


def dequantize(q: int, grid: QuantGrid = DEFAULT_GRID, interval=(0.0, 1.0)) -> float:
    lo, hi = interval
    return lo + q * (hi - lo) / (grid.levels - 1)


def check_loop_chain(loop: Loop) -> None:
    """Raise ``ChainError`` unless the loop is a closed chain with sound arcs."""
    if not loop.curves:
        raise ChainError("empty loop")
    if any(isinstance(c, Circle) for c in loop.curves):
        if len(loop.curves) != 1:
            raise ChainError("a loop with a circle holds exactly that one curve")
        if loop.curves[0].radius < 1:
            raise ChainError("circle radius must be at least one grid unit")
        return
    if loop.curves[-1].end != loop.start:
        raise ChainError(f"chain ends at {tuple(loop.curves[-1].end)}, not at start {tuple(loop.start)}")
    cur = loop.start
    for c in loop.curves:
        if isinstance(c, Arc):
            arc_geometry(c, cur)
        cur = c.end


def check_loop_grid(loop: Loop, grid: QuantGrid = DEFAULT_GRID) -> None:
    for p in defining_points(loop):
        if not (grid.contains(p[0]) and grid.contains(p[1])):
            raise GridRangeError(f"point {tuple(p)} outside grid 0..{grid.max}")
    if loop.is_circle and not 1 <= loop.curves[0].radius <= grid.max:
        raise GridRangeError(f"radius {loop.curves[0].radius} outside 1..{grid.max}")


def validate_model(model: CADModel, grid: QuantGrid = DEFAULT_GRID, *, nesting: bool = True) -> None:
    """Full structural check: chains, grid bounds, extrusion fields, hole nesting."""
    for sketch, ext in model.steps:
        for v in ext.values():
            if not grid.contains(v):
                raise GridRangeError(f"extrusion value {v} outside grid 0..{grid.max}")
        for face in sketch.faces:
            for lp in face.loops:
                check_loop_chain(lp)
                check_loop_grid(lp, grid)
            if nesting and face.holes:
                outer = loop_bbox(face.outer)
                for h in face.holes:
                    if not outer.contains(loop_bbox(h), slack=1e-9):
                        raise ModelError("hole loop extends past its outer loop")
