"""Hierarchical text form of CAD models.

Canonical layout (tokens separated by single spaces)::

    <model> <se> <sketch> <face> <loop> X Y line X Y arc X Y MX MY ... <loop_end>
        <loop> circle CX CY R <loop_end> ... <face> ... <ext> A1 A2 A3 OX OY OZ S D+ D- OP <se_end>
        <se> ... <se_end> <model_end>

Every loop is one contiguous ``<loop> ... <loop_end>`` substring; the first
loop of a face is its outer boundary, the rest are holes.  See
``docs/FORMATS.md`` for the grammar in EBNF.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

from .cad import (
    BOOLEAN_OPS, DEFAULT_GRID, Arc, CADModel, ChainError, Circle, ExtrudeParams, Face,
    GridRangeError, Line, Loop, ModelError, Point, QuantGrid, Sketch, check_loop_chain,
)


_INT = re.compile(r"-?[0-9]+")
_TOKEN = re.compile(r"\S+")


class CADSyntaxError(ValueError):
    def __init__(self, position: int, expected: str, found: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        got = f", found {found!r}" if found else ", found end of text"
        super().__init__(f"at offset {position}: expected {expected}{got}")


@dataclass(frozen=True)
class TextGrammar:
    model_open: str = "<model>"
    model_close: str = "<model_end>"
    step_open: str = "<se>"
    step_close: str = "<se_end>"
    sketch: str = "<sketch>"
    face: str = "<face>"
    loop_open: str = "<loop>"
    loop_close: str = "<loop_end>"
    extrude: str = "<ext>"
    mask: str = "<mask>"
    line: str = "line"
    arc: str = "arc"
    circle: str = "circle"

    def __post_init__(self):
        toks = [self.model_open, self.model_close, self.step_open, self.step_close, self.sketch,
                self.face, self.loop_open, self.loop_close, self.extrude, self.mask,
                self.line, self.arc, self.circle, *BOOLEAN_OPS]
        if len(set(toks)) != len(toks):
            raise ValueError("grammar tokens must be distinct")
        for t in toks:
            if not t or any(ch.isspace() for ch in t) or _INT.fullmatch(t):
                raise ValueError(f"invalid grammar token {t!r}")


DEFAULT_GRAMMAR = TextGrammar()


class LoopFragment(NamedTuple):
    text: str
    span: tuple


class MaskSlot:
    """Placeholder standing in for a masked loop inside a parsed model."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MASK_SLOT"


MASK_SLOT = MaskSlot()


# -- serialization ----------------------------------------------------------


def serialize_loop(loop: Loop, grammar: TextGrammar = DEFAULT_GRAMMAR) -> str:
    g = grammar
    if loop.is_circle:
        c = loop.curves[0]
        return f"{g.loop_open} {g.circle} {c.center[0]} {c.center[1]} {c.radius} {g.loop_close}"
    parts = [g.loop_open, str(loop.start[0]), str(loop.start[1])]
    for c in loop.curves:
        if isinstance(c, Line):
            parts += [g.line, str(c.end[0]), str(c.end[1])]
        elif isinstance(c, Arc):
            parts += [g.arc, str(c.end[0]), str(c.end[1]), str(c.mid[0]), str(c.mid[1])]
        else:
            raise ChainError("circle must be the only curve of its loop")
    parts.append(g.loop_close)
    return " ".join(parts)


def serialize_extrude(ext: ExtrudeParams, grammar: TextGrammar = DEFAULT_GRAMMAR) -> str:
    return " ".join([grammar.extrude, *map(str, ext.values()), ext.boolean_op])


def serialize_model(model: CADModel, grammar: TextGrammar = DEFAULT_GRAMMAR) -> str:
    g = grammar
    parts = [g.model_open]
    for sketch, ext in model.steps:
        parts += [g.step_open, g.sketch]
        for face in sketch.faces:
            parts.append(g.face)
            for lp in face.loops:
                parts.append(g.mask if lp is MASK_SLOT else serialize_loop(lp, g))
        parts += [serialize_extrude(ext, g), g.step_close]
    parts.append(g.model_close)
    return " ".join(parts)


# -- parsing ----------------------------------------------------------------


class _Parser:
    def __init__(self, text, grammar: TextGrammar, grid: QuantGrid, allow_mask: bool):
        if isinstance(text, (bytes, bytearray)):
            try:
                text = bytes(text).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CADSyntaxError(exc.start, "UTF-8 text", "undecodable bytes") from None
        if not isinstance(text, str):
            raise TypeError(f"expected str or bytes, got {type(text).__name__}")
        self.text = text
        self.g = grammar
        self.grid = grid
        self.allow_mask = allow_mask
        self.toks = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
        self.i = 0
        self.fragments: list[LoopFragment] = []
        self.masks: list[int] = []
        self.chain_as_syntax = True

    # token helpers
    def peek(self):
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def pos(self):
        return self.toks[self.i][1] if self.i < len(self.toks) else len(self.text)

    def fail(self, expected):
        raise CADSyntaxError(self.pos(), expected, self.peek() or "")

    def expect(self, tok):
        if self.peek() != tok:
            self.fail(repr(tok))
        self.i += 1

    def integer(self, what="integer"):
        tok = self.peek()
        if tok is None or not _INT.fullmatch(tok):
            self.fail(what)
        self.i += 1
        return int(tok)

    def coord(self):
        at = self.pos()
        v = self.integer("coordinate")
        if not self.grid.contains(v):
            raise GridRangeError(f"at offset {at}: coordinate {v} outside grid 0..{self.grid.max}")
        return v

    def point(self):
        return Point(self.coord(), self.coord())

    def end(self):
        if self.i != len(self.toks):
            self.fail("end of text")

    # grammar
    def model(self):
        g = self.g
        self.expect(g.model_open)
        steps = [self.step()]
        while self.peek() == g.step_open:
            steps.append(self.step())
        self.expect(g.model_close)
        at = self.toks[0][1]
        try:
            return CADModel(tuple(steps))
        except ModelError as exc:
            raise CADSyntaxError(at, "model whose first extrusion is 'new'", str(exc)) from None

    def step(self):
        g = self.g
        self.expect(g.step_open)
        self.expect(g.sketch)
        faces = [self.face()]
        while self.peek() == g.face:
            faces.append(self.face())
        ext = self.extrude()
        self.expect(g.step_close)
        return Sketch(tuple(faces)), ext

    def face(self):
        g = self.g
        self.expect(g.face)
        loops = [self.loop_item()]
        while self.peek() in (g.loop_open, g.mask):
            loops.append(self.loop_item())
        return Face(loops[0], tuple(loops[1:]))

    def loop_item(self):
        g = self.g
        if self.peek() == g.mask:
            if not self.allow_mask:
                self.fail("loop (mask token not allowed here)")
            self.masks.append(self.pos())
            self.i += 1
            return MASK_SLOT
        start_tok = self.i
        lp = self.loop()
        a = self.toks[start_tok][1]
        b = self.toks[self.i - 1][1] + len(self.toks[self.i - 1][0])
        self.fragments.append(LoopFragment(self.text[a:b], (a, b)))
        return lp

    def loop(self):
        at = self.pos()
        try:
            return self._loop()
        except ChainError as exc:
            if not self.chain_as_syntax:
                raise
            raise CADSyntaxError(at, "closed loop chain", str(exc)) from None

    def _loop(self):
        g = self.g
        self.expect(g.loop_open)
        if self.peek() == g.circle:
            self.i += 1
            center = self.point()
            at = self.pos()
            r = self.integer("radius")
            if not 1 <= r <= self.grid.max:
                raise GridRangeError(f"at offset {at}: radius {r} outside 1..{self.grid.max}")
            curves = [Circle(center, r)]
            start = center
        else:
            start = self.point()
            curves = []
            while self.peek() in (g.line, g.arc, g.circle):
                kw = self.peek()
                if kw == g.circle:
                    raise ChainError(f"at offset {self.pos()}: a circle must be the only curve of its loop")
                self.i += 1
                if kw == g.line:
                    curves.append(Line(self.point()))
                else:
                    end = self.point()
                    curves.append(Arc(end, self.point()))
            if not curves:
                self.fail(f"{g.line!r} or {g.arc!r}")
        if self.peek() in (g.line, g.arc, g.circle):
            raise ChainError(f"at offset {self.pos()}: a circle must be the only curve of its loop")
        self.expect(g.loop_close)
        lp = Loop(start, tuple(curves))
        check_loop_chain(lp)
        return lp

    def extrude(self):
        g = self.g
        self.expect(g.extrude)
        at = self.pos()
        vals = [self.coord() for _ in range(9)]
        op = self.peek()
        if op not in BOOLEAN_OPS:
            self.fail("boolean op " + "|".join(BOOLEAN_OPS))
        self.i += 1
        try:
            return ExtrudeParams(tuple(vals[0:3]), tuple(vals[3:6]), vals[6], vals[7], vals[8], op)
        except ModelError as exc:
            raise CADSyntaxError(at, "valid extrusion parameters", str(exc)) from None


def parse_model(text, grammar: TextGrammar = DEFAULT_GRAMMAR, grid: QuantGrid = DEFAULT_GRID,
                *, allow_mask: bool = False):
    """Parse model text into ``(CADModel, [LoopFragment, ...])``.

    With ``allow_mask`` the mask token is accepted wherever a loop may stand and
    shows up in the model as ``MASK_SLOT``.
    """
    p = _Parser(text, grammar, grid, allow_mask)
    model = p.model()
    p.end()
    return model, p.fragments


def parse_loop_fragment(text, grammar: TextGrammar = DEFAULT_GRAMMAR, grid: QuantGrid = DEFAULT_GRID) -> Loop:
    p = _Parser(text, grammar, grid, allow_mask=False)
    p.chain_as_syntax = False
    lp = p.loop()
    p.end()
    return lp


def find_masks(text: str, grammar: TextGrammar = DEFAULT_GRAMMAR) -> list:
    """Offsets of every standalone mask token."""
    return [m.start() for m in _TOKEN.finditer(text) if m.group() == grammar.mask]


def replace_span(text: str, span, replacement: str) -> str:
    a, b = span
    return text[:a] + replacement + text[b:]
