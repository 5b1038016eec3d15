"""Random-but-valid model construction shared by the property and acceptance tests."""
from __future__ import annotations

import math
import random

from geocad.cad import CADModel, ExtrudeParams, Face, Loop, Sketch, loop_bbox
from shapegen import CATEGORIES, make_shape


def convex_polygon(rng: random.Random, n: int, cx: int, cy: int, r: int) -> Loop:
    """Complex-signature loop: ``n`` lattice points on a rough circle, in angle order."""
    while True:
        angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
        pts = []
        for a in angles:
            p = (round(cx + r * math.cos(a)), round(cy + r * math.sin(a)))
            if p not in pts:
                pts.append(p)
        if len(pts) == n:
            from oracle import brute_self_intersects

            if not brute_self_intersects(pts):
                return Loop.polygon(pts)


def random_loop(rng: random.Random) -> Loop:
    if rng.random() < 0.2:
        r = rng.randint(10, 100)
        return convex_polygon(rng, rng.randint(5, 9), rng.randint(r + 1, 254 - r), rng.randint(r + 1, 254 - r), r)
    return make_shape(rng.choice(CATEGORIES), rng, axis_aligned=rng.random() < 0.3)


def random_face(rng: random.Random) -> Face:
    outer = random_loop(rng)
    box = loop_bbox(outer)
    holes = []
    for _ in range(rng.choice([0, 0, 1, 2])):
        r = rng.randint(1, 6)
        lo_x, hi_x = math.ceil(box.xmin) + r, math.floor(box.xmax) - r
        lo_y, hi_y = math.ceil(box.ymin) + r, math.floor(box.ymax) - r
        if lo_x <= hi_x and lo_y <= hi_y:
            holes.append(Loop.circle((rng.randint(lo_x, hi_x), rng.randint(lo_y, hi_y)), r))
    return Face(outer, tuple(holes))


def random_extrude(rng: random.Random, op: str) -> ExtrudeParams:
    pos = rng.randint(0, 255)
    neg = rng.randint(0 if pos else 1, 255)
    return ExtrudeParams(tuple(rng.randint(0, 255) for _ in range(3)), tuple(rng.randint(0, 255) for _ in range(3)),
                         rng.randint(1, 255), pos, neg, op)


def random_model(rng: random.Random, max_steps: int = 5) -> CADModel:
    steps = []
    for i in range(rng.randint(1, max_steps)):
        faces = tuple(random_face(rng) for _ in range(rng.randint(1, 3)))
        op = "new" if i == 0 else rng.choice(["new", "join", "cut", "intersect"])
        steps.append((Sketch(faces), random_extrude(rng, op)))
    return CADModel(tuple(steps))
