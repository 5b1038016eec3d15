"""Caption-preserving geometric transforms of loops."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .analysis import GeometricLabel, InvalidLoop, check_self_intersection, classify_loop
from .cad import (
    DEFAULT_GRID, Arc, Circle, CollinearArc, GeometryError, Line, Loop, Point, QuantGrid,
    arc_geometry, defining_points,
)


class OutOfGrid(GeometryError):
    pass


class DegenerateResult(GeometryError):
    pass


class ExhaustedRetries(RuntimeError):
    pass


@dataclass(frozen=True)
class Translate:
    dx: int
    dy: int


@dataclass(frozen=True)
class Scale:
    factor: Fraction
    anchor: tuple = (0, 0)

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")


@dataclass(frozen=True)
class Rotate:
    angle: float
    anchor: tuple = (0, 0)

    def __post_init__(self):
        if not math.isfinite(self.angle) or not all(math.isfinite(a) for a in self.anchor):
            raise ValueError("rotation parameters must be finite")


@dataclass(frozen=True)
class Reflect:
    """Mirror across the line through ``point`` along ``direction``."""

    point: tuple
    direction: tuple

    def __post_init__(self):
        vals = (*self.point, *self.direction)
        if not all(math.isfinite(v) for v in vals) or self.direction == (0, 0):
            raise ValueError("reflection axis must be finite and non-degenerate")


Transform = Translate | Scale | Rotate | Reflect


def describe(t) -> dict:
    """JSON-friendly description of a transform."""
    if isinstance(t, Translate):
        return {"type": "translate", "dx": t.dx, "dy": t.dy}
    if isinstance(t, Scale):
        return {"type": "scale", "factor": str(t.factor), "anchor": [str(Fraction(a)) for a in t.anchor]}
    if isinstance(t, Rotate):
        return {"type": "rotate", "degrees": round(math.degrees(t.angle), 9),
                "anchor": [str(Fraction(a)) for a in t.anchor]}
    return {"type": "reflect", "point": [str(Fraction(a)) for a in t.point],
            "direction": [str(Fraction(a)) for a in t.direction]}


def inverse(t):
    if isinstance(t, Translate):
        return Translate(-t.dx, -t.dy)
    if isinstance(t, Scale):
        return Scale(1 / Fraction(t.factor), t.anchor)
    if isinstance(t, Rotate):
        return Rotate(-t.angle, t.anchor)
    return t


def _point_map(t):
    """Exact (Fraction) mapping for every transform whose coefficients are rational."""
    F = Fraction
    if isinstance(t, Translate):
        return lambda x, y: (F(x) + t.dx, F(y) + t.dy)
    if isinstance(t, Scale):
        f, (ax, ay) = F(t.factor), map(F, t.anchor)
        return lambda x, y: (ax + f * (x - ax), ay + f * (y - ay))
    if isinstance(t, Rotate):
        ax, ay = map(F, t.anchor)
        quarter = t.angle / (math.pi / 2)
        if abs(quarter - round(quarter)) < 1e-12:
            c, s = ((1, 0), (0, 1), (-1, 0), (0, -1))[round(quarter) % 4]
        else:
            c, s = F(math.cos(t.angle)), F(math.sin(t.angle))
        return lambda x, y: (ax + c * (x - ax) - s * (y - ay), ay + s * (x - ax) + c * (y - ay))
    px, py = map(F, t.point)
    dx, dy = map(F, t.direction)
    n = dx * dx + dy * dy
    a, b = (dx * dx - dy * dy) / n, 2 * dx * dy / n
    return lambda x, y: (px + a * (x - px) + b * (y - py), py + b * (x - px) - a * (y - py))


def _round(v: Fraction) -> int:
    return math.floor(v + Fraction(1, 2))


def apply_transform(loop: Loop, t, grid: QuantGrid = DEFAULT_GRID) -> Loop:
    """Map every defining point (and circle radius under scaling), then re-quantize."""
    fmap = _point_map(t)

    def q(p):
        x, y = fmap(*p)
        out = Point(_round(x), _round(y))
        if not (grid.contains(out.x) and grid.contains(out.y)):
            raise OutOfGrid(f"{tuple(p)} maps to {tuple(out)}, outside 0..{grid.max}")
        return out

    if loop.is_circle:
        c = loop.curves[0]
        r = _round(Fraction(c.radius) * Fraction(t.factor)) if isinstance(t, Scale) else c.radius
        if r < 1:
            raise DegenerateResult("circle radius collapsed")
        return Loop.circle(q(c.center), r)

    start = q(loop.start)
    curves = []
    cur = start
    for c in loop.curves:
        end = q(c.end)
        if end == cur:
            raise DegenerateResult("a curve collapsed to a point")
        if isinstance(c, Arc):
            nc = Arc(end, q(c.mid))
            try:
                arc_geometry(nc, cur)
            except CollinearArc:
                raise DegenerateResult("an arc collapsed to a line") from None
        else:
            nc = Line(end)
        curves.append(nc)
        cur = end
    out = Loop(start, tuple(curves))
    if check_self_intersection(out):
        raise DegenerateResult("re-quantized loop intersects itself")
    return out


SCALE_FACTORS = (Fraction(1, 2), Fraction(2), Fraction(3))
QUARTER_TURNS = (1, 2, 3)
REFLECT_AXES = ((1, 0), (0, 1), (1, 1), (1, -1))


def _bounds(loop):
    pts = defining_points(loop)
    if loop.is_circle:
        (cx, cy), r = loop.curves[0].center, loop.curves[0].radius
        pts = [(cx - r, cy - r), (cx + r, cy + r)]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def _draw(family, loop, rng, grid):
    x0, y0, x1, y1 = _bounds(loop)
    center = ((x0 + x1) // 2, (y0 + y1) // 2)
    if family == "translate":
        lo_x, hi_x = -x0, grid.max - x1
        lo_y, hi_y = -y0, grid.max - y1
        if hi_x < lo_x or hi_y < lo_y:
            return Translate(0, 0)
        return Translate(rng.randint(lo_x, hi_x), rng.randint(lo_y, hi_y))
    if family == "scale":
        return Scale(rng.choice(SCALE_FACTORS), (x0, y0))
    if family == "rotate":
        return Rotate(rng.choice(QUARTER_TURNS) * math.pi / 2, center)
    return Reflect(center, rng.choice(REFLECT_AXES))


def augment_random(loop: Loop, label: GeometricLabel, rng_seed: int, count: int,
                   grid: QuantGrid = DEFAULT_GRID, max_retries: int = 64) -> list:
    """``count`` accepted ``(variant, transform)`` pairs.

    Simple loops draw from translation, scaling, quarter-turn rotation and
    axis/diagonal reflection; complex loops from translation and scaling only.
    A simple variant is accepted only if it keeps the original category.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = random.Random(rng_seed)
    families = ("translate", "scale", "rotate", "reflect") if label.is_simple else ("translate", "scale")
    out = []
    for _ in range(count):
        for _attempt in range(max_retries):
            t = _draw(rng.choice(families), loop, rng, grid)
            try:
                v = apply_transform(loop, t, grid)
                if label.is_simple and classify_loop(v).category != label.category:
                    continue
            except (OutOfGrid, DegenerateResult, InvalidLoop):
                continue
            out.append((v, t))
            break
        else:
            raise ExhaustedRetries(f"no valid variant after {max_retries} draws")
    return out
