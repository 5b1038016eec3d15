"""Complementary captioning of local loops.

Simple loops get a caption from a fixed template filled by vertex analysis;
complex loops are rendered and described by a vision-language model.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable

from PIL import Image, ImageDraw

from .analysis import (
    DEFAULT_TOLERANCES, SIMPLE_CATEGORIES, GeometricLabel, Tolerances, classify_loop,
    is_simple_part, is_valid_loop,
)
from .cad import Arc, CADModel, Circle, GeometryError, Loop, defining_points, loop_bbox, loop_polyline
from .endpoints import EndpointError, MalformedReply
from .textformat import DEFAULT_GRAMMAR, TextGrammar, serialize_loop

log = logging.getLogger(__name__)

VLLM_CAPTION_PROMPT = (
    "Given a loop in a CAD sketch, provide a brief description of its geometric shape "
    "starting with 'a' or 'an' if identifiable; otherwise, state 'None'."
)

PROVENANCES = ("vertex_based", "vllm", "none")

TEMPLATES = {
    "acute_triangle": "an acute triangle",
    "right_triangle": "a right triangle",
    "obtuse_triangle": "an obtuse triangle",
    "isosceles_triangle": "an isosceles triangle",
    "isosceles_right_triangle": "an isosceles right triangle",
    "quadrilateral": "a quadrilateral",
    "trapezoid": "a trapezoid",
    "isosceles_trapezoid": "an isosceles trapezoid",
    "kite": "a kite",
    "parallelogram": "a parallelogram",
    "rectangle": "a rectangle with a length of {length} and a width of {width}",
    "rhombus": "a rhombus",
    "square": "a square with a side length of {side}",
    "circle": "a circle with a radius of {radius}",
    "semicircle": "a semicircle",
    "quarter_circle": "a quarter circle",
    "three_quarter_circle": "a three-quarter circle",
    "major_arc_loop": "a major arc loop",
    "minor_arc_loop": "a minor arc loop",
    "sector": "a sector",
}


class NotSimple(ValueError):
    pass


class DegenerateExtent(GeometryError):
    pass


@dataclass(frozen=True)
class Caption:
    label: GeometricLabel
    text: str
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "vertex_based" and not self.label.is_simple:
            raise ValueError("vertex-based captions describe simple loops only")
        if self.provenance == "vllm" and (self.label.is_simple or not re.match(r"an? ", self.text)):
            raise ValueError("VLLM captions describe complex loops and start with an article")
        if self.provenance == "none" and self.text:
            raise ValueError("a 'none' caption carries no text")


def format_dim(v: float) -> str:
    if abs(v - round(v)) < 1e-9:
        return str(int(round(v)))
    return f"{v:.2f}".rstrip("0").rstrip(".")


def caption_simple(label: GeometricLabel) -> Caption:
    if not label.is_simple:
        raise NotSimple("complex loops are captioned by the VLLM")
    text = TEMPLATES[label.category].format(**{k: format_dim(v) for k, v in label.dims.items()})
    return Caption(label, text, "vertex_based")


_NUM = r"(\d+(?:\.\d+)?)"


def _template_regex(template: str) -> re.Pattern:
    head, sep, tail = template.partition(" with ")
    if not sep:
        return re.compile(re.escape(head))
    names = re.findall(r"\{(\w+)\}", tail)
    pattern = re.escape(" with " + tail)
    for n in names:
        pattern = pattern.replace(re.escape("{" + n + "}"), f"(?P<{n}>{_NUM[1:-1]})")
    return re.compile(re.escape(head) + f"(?:{pattern})?")


# longest first so "an isosceles right triangle" wins over "a right triangle"
_PARSERS = sorted(((cat, _template_regex(t)) for cat, t in TEMPLATES.items()),
                  key=lambda kv: -len(TEMPLATES[kv[0]].split(" with ")[0]))


def parse_caption(text: str) -> GeometricLabel | None:
    """Recover the label behind a template caption (dims optional), else ``None``."""
    t = " ".join(text.strip().lower().rstrip(".").split())
    for cat, rx in _PARSERS:
        m = rx.fullmatch(t)
        if m:
            dims = {k: float(v) for k, v in m.groupdict().items() if v is not None}
            if cat == "circle" and "radius" in dims:
                dims["radius"] = int(dims["radius"]) if dims["radius"].is_integer() else dims["radius"]
            return GeometricLabel(cat, dims)
    return None


# -- rendering ----------------------------------------------------------------


def render_loop_image(loop: Loop, canvas=(256, 256), stroke: int = 3) -> bytes:
    """PNG of the loop: black stroke on white, fitted to 90% of the canvas."""
    width, height = canvas
    box = loop_bbox(loop)
    if not loop.is_circle and (box.width <= 0 or box.height <= 0):
        raise DegenerateExtent("loop has a zero-area extent")
    scale = 0.9 * min(width, height) / max(box.width, box.height)
    cx, cy = box.center
    pts = [(width / 2 + (x - cx) * scale, height / 2 - (y - cy) * scale)
           for x, y in loop_polyline(loop, max_chord_error=0.5 / scale)]
    img = Image.new("RGB", (width, height), "white")
    ImageDraw.Draw(img).line(pts, fill="black", width=stroke, joint="curve")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# -- VLLM captioning ----------------------------------------------------------


def normalize_vllm_text(reply: str) -> str:
    t = " ".join(reply.strip().strip("\"'`").split()).lower().rstrip(".").strip()
    if not t:
        raise MalformedReply("empty reply")
    if not re.match(r"an? ", t):
        t = ("an " if t[0] in "aeiou" else "a ") + t
    return t


def caption_complex_via_vllm(loop: Loop, client, canvas=(256, 256)) -> Caption:
    if is_simple_part(loop):
        raise ValueError("simple loops are captioned from their vertices")
    reply = client.ask(VLLM_CAPTION_PROMPT, render_loop_image(loop, canvas))
    if not isinstance(reply, str):
        raise MalformedReply("non-text reply")
    complex_label = GeometricLabel("complex")
    if reply.strip().strip("\"'`.").strip().lower() == "none":
        return Caption(complex_label, "", "none")
    return Caption(complex_label, normalize_vllm_text(reply), "vllm")


# -- dedup ----------------------------------------------------------------------


def _curve_key(c):
    if isinstance(c, Arc):
        return ("arc", *c.end, *c.mid)
    return ("line", *c.end)


def _reversed(loop: Loop) -> Loop:
    pts = [loop.start] + [c.end for c in loop.curves[:-1]]
    curves = []
    for i in range(len(loop.curves) - 1, -1, -1):
        c = loop.curves[i]
        curves.append(Arc(pts[i], c.mid) if isinstance(c, Arc) else type(c)(pts[i]))
    return Loop(loop.start, tuple(curves))


def canonical_form(loop: Loop) -> tuple:
    """Translation-, start- and direction-normalized curve sequence."""
    if loop.is_circle:
        c = loop.curves[0]
        return ("circle", c.radius)
    pts = defining_points(loop)
    ox, oy = min(p[0] for p in pts), min(p[1] for p in pts)

    def shifted(c):
        k = _curve_key(c)
        return (k[0],) + tuple(v - (ox if i % 2 == 0 else oy) for i, v in enumerate(k[1:]))

    best = None
    for variant in (loop, _reversed(loop)):
        starts = [variant.start] + [c.end for c in variant.curves[:-1]]
        n = len(variant.curves)
        for k in range(n):
            seq = (starts[k][0] - ox, starts[k][1] - oy) + tuple(
                shifted(variant.curves[(k + j) % n]) for j in range(n))
            if best is None or seq < best:
                best = seq
    return best


def canonical_key(loop: Loop) -> str:
    return hashlib.blake2b(repr(canonical_form(loop)).encode(), digest_size=16).hexdigest()


# -- corpus ---------------------------------------------------------------------


@dataclass
class CorpusRecord:
    key: str
    loop_text: str
    caption: str
    provenance: str  # vertex_based | vllm | none | pending
    category: str
    dims: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusRecord":
        return cls(d["key"], d["loop_text"], d.get("caption", ""), d["provenance"],
                   d["category"], dict(d.get("dims") or {}))


@dataclass
class CorpusStats:
    simple: int = 0
    complex: int = 0
    invalid: int = 0
    duplicate: int = 0
    pending: int = 0
    none: int = 0


def build_caption_corpus(models: Iterable[CADModel], client=None, *, jobs: int = 4,
                         tol: Tolerances = DEFAULT_TOLERANCES, grammar: TextGrammar = DEFAULT_GRAMMAR,
                         canvas=(256, 256)):
    """Collect, filter, deduplicate and caption every loop of ``models``.

    Returns ``(records, stats)``; records keep first-seen order.  Complex loops
    are sent to ``client`` (anything with ``ask(prompt, png) -> str``) with at
    most ``jobs`` requests in flight; without a client, or when a request
    fails, they are kept with provenance ``pending``.
    """
    stats = CorpusStats()
    seen = set()
    records: list[CorpusRecord] = []
    complex_loops: list[tuple[int, Loop]] = []
    for model in models:
        for lp in model.loops():
            if not is_valid_loop(lp):
                stats.invalid += 1
                continue
            key = canonical_key(lp)
            if key in seen:
                stats.duplicate += 1
                continue
            seen.add(key)
            text = serialize_loop(lp, grammar)
            if is_simple_part(lp):
                stats.simple += 1
                cap = caption_simple(classify_loop(lp, tol))
                records.append(CorpusRecord(key, text, cap.text, cap.provenance, cap.label.category,
                                            dict(cap.label.dims)))
            else:
                stats.complex += 1
                complex_loops.append((len(records), lp))
                records.append(CorpusRecord(key, text, "", "pending", "complex"))

    if client is not None and complex_loops:
        def run(item):
            try:
                return caption_complex_via_vllm(item[1], client, canvas)
            except (EndpointError, MalformedReply) as exc:
                log.warning("captioning failed for %s: %s", records[item[0]].key, exc)
                return None

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for (idx, _), cap in zip(complex_loops, pool.map(run, complex_loops)):
                if cap is not None:
                    records[idx].caption = cap.text
                    records[idx].provenance = cap.provenance
    stats.pending = sum(r.provenance == "pending" for r in records)
    stats.none = sum(r.provenance == "none" for r in records)
    return records, stats


def write_corpus(records: Iterable[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_corpus(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [CorpusRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def label_of(record: CorpusRecord) -> GeometricLabel:
    if record.category in SIMPLE_CATEGORIES:
        return GeometricLabel(record.category, dict(record.dims))
    return GeometricLabel("complex")
