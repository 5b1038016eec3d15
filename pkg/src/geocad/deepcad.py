"""Ingest DeepCAD-style JSON sequences into quantized ``CADModel`` values.

Only the subset the text form can express is read: ``Sketch`` entities whose
profiles hold ``Line3D``/``Arc3D``/``Circle3D`` curves, and ``ExtrudeFeature``
entities.  Unknown extra keys are ignored.
"""
from __future__ import annotations

import json
import math

import numpy as np
from scipy.spatial.transform import Rotation

from .cad import (
    DEFAULT_GRID, Arc, CADModel, Circle, ExtrudeParams, Face, Line, Loop, Point, QuantGrid,
    Sketch, quantize,
)


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    pass


class UnsupportedEntity(IngestError):
    pass


class DegenerateGeometry(IngestError):
    pass


OPERATIONS = {
    "NewBodyFeatureOperation": "new",
    "JoinFeatureOperation": "join",
    "CutFeatureOperation": "cut",
    "IntersectFeatureOperation": "intersect",
}

_CHAIN_EPS = 1e-6


def _get(d, *keys):
    cur = d
    for k in keys:
        if not isinstance(cur, dict) or k not in cur:
            raise SchemaError(f"missing field {'.'.join(keys)}")
        cur = cur[k]
    return cur


def _xy(d, key):
    p = _get(d, key)
    try:
        return float(p["x"]), float(p["y"])
    except (KeyError, TypeError, ValueError):
        raise SchemaError(f"malformed point {key}") from None


def _vec3(d, key):
    p = _get(d, key)
    try:
        return np.array([float(p["x"]), float(p["y"]), float(p["z"])])
    except (KeyError, TypeError, ValueError):
        raise SchemaError(f"malformed vector {key}") from None


def _read_curve(c):
    kind = c.get("type") if isinstance(c, dict) else None
    if kind == "Line3D":
        return ["line", _xy(c, "start_point"), _xy(c, "end_point")]
    if kind == "Arc3D":
        start, end = _xy(c, "start_point"), _xy(c, "end_point")
        if "mid_point" in c:
            mid = _xy(c, "mid_point")
        else:
            cx, cy = _xy(c, "center_point")
            r = float(_get(c, "radius"))
            mid_angle = (float(_get(c, "start_angle")) + float(_get(c, "end_angle"))) / 2
            rx, ry = _xy(c, "reference_vector")
            norm = math.hypot(rx, ry) or 1.0
            rx, ry = rx / norm, ry / norm
            ca, sa = math.cos(mid_angle), math.sin(mid_angle)
            mid = (cx + r * (ca * rx - sa * ry), cy + r * (sa * rx + ca * ry))
        return ["arc", start, end, mid]
    if kind == "Circle3D":
        return ["circle", _xy(c, "center_point"), float(_get(c, "radius"))]
    raise UnsupportedEntity(f"unsupported curve type {kind!r}")


def _close(a, b):
    return abs(a[0] - b[0]) <= _CHAIN_EPS and abs(a[1] - b[1]) <= _CHAIN_EPS


def _flip(c):
    if c[0] == "line":
        return ["line", c[2], c[1]]
    return ["arc", c[2], c[1], c[3]]


def _chain(curves):
    """Order and orient open curves head to tail, the way profile loops are stored loosely."""
    if len(curves) == 1 and curves[0][0] == "circle":
        return curves
    if any(c[0] == "circle" for c in curves):
        raise SchemaError("circle mixed with other curves in one loop")
    rest = list(curves[1:])
    out = [curves[0]]
    while rest:
        tail = out[-1][2]
        for i, c in enumerate(rest):
            if _close(c[1], tail):
                out.append(rest.pop(i))
                break
            if _close(c[2], tail):
                out.append(_flip(rest.pop(i)))
                break
        else:
            raise SchemaError("profile curves do not form a connected chain")
    return out


def _sketch_points(loops):
    for lp in loops:
        for c in lp:
            if c[0] == "circle":
                (x, y), r = c[1], c[2]
                yield (x - r, y - r)
                yield (x + r, y + r)
            else:
                yield from c[1:]


def _quantize_loop(curves, lo, span, grid):
    def q(p):
        return Point(quantize(p[0] - lo[0], grid, (0.0, span)), quantize(p[1] - lo[1], grid, (0.0, span)))

    if curves[0][0] == "circle":
        r = max(1, round(curves[0][2] / span * grid.max))
        return Loop.circle(q(curves[0][1]), r)
    start = q(curves[0][1])
    out = []
    cur = start
    for c in curves:
        end = q(c[2])
        if end == cur:
            continue
        if c[0] == "arc":
            mid = q(c[3])
            cross = (mid[0] - cur[0]) * (end[1] - cur[1]) - (mid[1] - cur[1]) * (end[0] - cur[0])
            out.append(Arc(end, mid) if cross != 0 else Line(end))
        else:
            out.append(Line(end))
        cur = end
    if cur != start:
        # rounding moved the closing vertex; snap the chain shut
        out.append(Line(start))
    if len(out) < 2 or (len(out) == 2 and all(isinstance(c, Line) for c in out)):
        raise DegenerateGeometry("loop collapses on the quantization grid")
    return Loop(start, tuple(out))


def ingest_deepcad(doc: dict, grid: QuantGrid = DEFAULT_GRID) -> CADModel:
    """Convert a parsed DeepCAD document to a quantized model.

    All sketches share one uniform 2D scale and translation chosen so the
    union of their local bounds fills the grid; each sketch origin absorbs
    the translation so the 3D placement is unchanged.
    """
    entities = _get(doc, "entities")
    sequence = _get(doc, "sequence")
    if not isinstance(sequence, list) or not sequence:
        raise SchemaError("empty sequence")

    raw_steps = []
    for item in sequence:
        if not isinstance(item, dict):
            raise SchemaError("malformed sequence item")
        if item.get("type") != "ExtrudeFeature":
            continue
        ext = _get(entities, _get(item, "entity"))
        profiles = _get(ext, "profiles")
        if not profiles:
            raise SchemaError("extrusion without profiles")
        sketch_ent = None
        faces = []
        for ref in profiles:
            sk = _get(entities, _get(ref, "sketch"))
            if sk.get("type") != "Sketch":
                raise SchemaError("profile does not reference a sketch")
            sketch_ent = sketch_ent or sk
            prof = _get(sk, "profiles", _get(ref, "profile"))
            outer, holes = None, []
            for lp in _get(prof, "loops"):
                curves = _chain([_read_curve(c) for c in _get(lp, "profile_curves")])
                if lp.get("is_outer", False) and outer is None:
                    outer = curves
                else:
                    holes.append(curves)
            if outer is None:
                if not holes:
                    raise SchemaError("profile without loops")
                outer = holes.pop(0)
            faces.append([outer] + holes)
        tf = _get(sketch_ent, "transform")
        frame = np.stack([_vec3(tf, "x_axis"), _vec3(tf, "y_axis"), _vec3(tf, "z_axis")], axis=1)
        origin = _vec3(tf, "origin")
        e1 = float(_get(ext, "extent_one", "distance", "value"))
        kind = ext.get("extent_type", "OneSideFeatureExtentType")
        if kind == "SymmetricFeatureExtentType":
            d_pos = d_neg = abs(e1)
        elif kind == "TwoSidesFeatureExtentType":
            d_pos, d_neg = abs(e1), abs(float(_get(ext, "extent_two", "distance", "value")))
        else:
            d_pos, d_neg = (e1, 0.0) if e1 >= 0 else (0.0, -e1)
        op = OPERATIONS.get(_get(ext, "operation"))
        if op is None:
            raise SchemaError(f"unknown operation {ext['operation']!r}")
        raw_steps.append((faces, frame, origin, d_pos, d_neg, op))

    if not raw_steps:
        raise SchemaError("sequence holds no extrusions")

    pts = np.array([p for faces, *_ in raw_steps for f in faces for p in _sketch_points(f)])
    lo = pts.min(axis=0)
    span = float((pts.max(axis=0) - lo).max())
    if not span > 0:
        raise DegenerateGeometry("sketch geometry has zero extent")

    shifted = [frame @ np.array([lo[0], lo[1], 0.0]) + origin for _, frame, origin, *_ in raw_steps]
    extent = max([span] + [float(np.abs(o).max()) for o in shifted]
                 + [max(s[3], s[4]) for s in raw_steps])

    steps = []
    for i, ((faces, frame, _, d_pos, d_neg, op), origin) in enumerate(zip(raw_steps, shifted)):
        qfaces = []
        for f in faces:
            loops = [_quantize_loop(c, lo, span, grid) for c in f]
            qfaces.append(Face(loops[0], tuple(loops[1:])))
        angles = Rotation.from_matrix(frame).as_euler("zyx")
        orient = tuple(int(round((a % (2 * math.pi)) / (2 * math.pi) * grid.levels)) % grid.levels
                       for a in angles)
        qo = tuple(quantize(v / extent, grid, (-1.0, 1.0)) for v in origin)
        qpos = quantize(d_pos / extent, grid)
        qneg = quantize(d_neg / extent, grid)
        if qpos + qneg < 1:
            qpos = 1
        # the first body is always created fresh
        steps.append((Sketch(tuple(qfaces)),
                      ExtrudeParams(orient, qo, max(1, quantize(span / extent, grid)), qpos, qneg,
                                    "new" if i == 0 else op)))
    return CADModel(tuple(steps))


def ingest_deepcad_json(document, grid: QuantGrid = DEFAULT_GRID) -> CADModel:
    """Accept JSON text, bytes or an already-parsed dict."""
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise SchemaError("document root must be an object")
    return ingest_deepcad(document, grid)
