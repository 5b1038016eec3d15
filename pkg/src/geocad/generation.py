"""Masked-loop infilling with pluggable backends, plus symmetric sketch edits."""
from __future__ import annotations

import functools
import logging
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import InvalidLoop, check_self_intersection, classify_loop
from .augment import DegenerateResult, OutOfGrid, Reflect, Scale, Translate, apply_transform
from .captioning import CorpusRecord, normalize_vllm_text, parse_caption
from .cad import (
    DEFAULT_GRID, BBox, CADModel, ChainError, GeometryError, GridRangeError, Loop, QuantGrid,
    Sketch, Face, loop_bbox, loop_vertices, validate_model,
)
from .dataset import stage2_prompt
from .endpoints import LLMClient
from .textformat import (
    DEFAULT_GRAMMAR, CADSyntaxError, TextGrammar, find_masks, parse_loop_fragment, parse_model,
    serialize_loop,
)

log = logging.getLogger(__name__)

STATUSES = ("ok", "parse_failed", "invalid_loop", "conflict")


class NoMatch(LookupError):
    pass


class RegionTooSmall(GeometryError):
    pass


class CoincidentCenters(GeometryError):
    pass


@dataclass
class GeneratorConfig:
    temperature: float = 0.9
    top_p: float = 0.9
    max_new_tokens: int = 512
    endpoint: str = "retrieval"
    retries: int = 3
    seed: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")


@dataclass
class InfillResult:
    raw_text: str
    status: str
    loop: Loop | None = None
    model: CADModel | None = None
    model_text: str | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


# -- backends -------------------------------------------------------------------


class LLMBackend:
    """Remote text-completion model."""

    def __init__(self, client: LLMClient):
        self.client = client

    def __call__(self, prompt: str, instruction: str, cfg: GeneratorConfig) -> str:
        return self.client.complete(prompt, temperature=cfg.temperature, top_p=cfg.top_p,
                                    max_new_tokens=cfg.max_new_tokens, seed=cfg.seed)


class RetrievalBackend:
    """Offline baseline: reuse a corpus loop matching the instruction, fitted to the masked region."""

    def __init__(self, corpus: list, region: BBox, seed: int = 0, grid: QuantGrid = DEFAULT_GRID,
                 grammar: TextGrammar = DEFAULT_GRAMMAR, contain: BBox | None = None):
        self.corpus = corpus
        self.region = region
        self.seed = seed
        self.grid = grid
        self.grammar = grammar
        self.contain = contain

    def __call__(self, prompt: str, instruction: str, cfg: GeneratorConfig) -> str:
        seed = self.seed if cfg.seed is None else cfg.seed
        return retrieval_generate(instruction, self.corpus, self.region, seed, self.grid, self.grammar,
                                  contain=self.contain)


def extract_fragment(raw: str, grammar: TextGrammar = DEFAULT_GRAMMAR) -> str:
    """Generated text up to and including the first loop-close token."""
    text = raw.strip()
    cut = text.find(grammar.loop_close)
    return text[:cut + len(grammar.loop_close)] if cut >= 0 else text


def generate_infill(masked_text: str, instruction: str, cfg: GeneratorConfig, backend,
                    grammar: TextGrammar = DEFAULT_GRAMMAR, grid: QuantGrid = DEFAULT_GRID) -> InfillResult:
    """Query ``backend`` for the masked loop, splice it in and validate.

    Content problems come back as a status; transport failures raise
    ``EndpointError``.
    """
    n_masks = len(find_masks(masked_text, grammar))
    if n_masks != 1:
        raise ValueError(f"expected exactly one mask token, found {n_masks}")
    try:
        raw = backend(stage2_prompt(masked_text, instruction), instruction, cfg)
    except (NoMatch, RegionTooSmall) as exc:
        # the backend produced nothing usable
        return InfillResult("", "parse_failed", detail=str(exc))
    try:
        loop = parse_loop_fragment(extract_fragment(raw, grammar), grammar, grid)
    except (CADSyntaxError, GridRangeError) as exc:
        return InfillResult(raw, "parse_failed", detail=str(exc))
    except ChainError as exc:
        return InfillResult(raw, "invalid_loop", detail=str(exc))
    if check_self_intersection(loop):
        return InfillResult(raw, "invalid_loop", loop=loop, detail="loop intersects itself")
    text = masked_text.replace(grammar.mask, serialize_loop(loop, grammar), 1)
    try:
        model, _ = parse_model(text, grammar, grid)
        validate_model(model, grid)
    except (CADSyntaxError, GeometryError) as exc:
        return InfillResult(raw, "conflict", loop=loop, detail=str(exc))
    return InfillResult(raw, "ok", loop=loop, model=model, model_text=text)


# -- retrieval baseline -----------------------------------------------------------


def _dim_distance(a: dict, b: dict) -> float:
    return sum(abs(a[k] - b.get(k, math.inf)) for k in a)


def retrieval_generate(instruction: str, corpus: list, region: BBox, rng_seed=0,
                       grid: QuantGrid = DEFAULT_GRID, grammar: TextGrammar = DEFAULT_GRAMMAR, *,
                       contain: BBox | None = None, max_candidates: int = 16) -> str:
    """Fragment text of a corpus loop answering ``instruction``, placed in ``region``.

    Matching order: exact caption, then same category with the nearest dims,
    then any loop of the category.  Loops chosen for an instruction that names
    dims are only translated (their size is the point); others are scaled to
    fill the region.  ``contain`` is a box the placed loop must enclose (the
    holes of a masked outer loop).  Up to ``max_candidates`` matches are tried
    in seeded order before giving up with ``RegionTooSmall``.
    """
    if not corpus:
        raise NoMatch("empty corpus")
    rng = random.Random(rng_seed)
    want = " ".join(instruction.strip().lower().rstrip(".").split())
    label = parse_caption(want)
    usable = [r for r in corpus if r.caption and r.provenance in ("vertex_based", "vllm")]
    pool = [r for r in usable if r.caption == want]
    if not pool and label is not None:
        pool = [r for r in usable if r.category == label.category]
        if not pool:
            raise NoMatch(f"no corpus loop of category {label.category}")
        if label.dims:
            best = min(_dim_distance(label.dims, r.dims) for r in pool)
            pool = [r for r in pool if _dim_distance(label.dims, r.dims) == best]
    if not pool:
        raise NoMatch(f"no corpus loop matches {instruction!r}")
    order = rng.sample(pool, min(len(pool), max_candidates))
    sized = label is not None and bool(label.dims)
    placed = None
    for pick in order:
        loop = parse_loop_fragment(pick.loop_text, grammar, grid)
        if sized:
            placed = center_in_region(loop, region, grid, contain=contain)
            break
        keep = pick.category if pick.category != "complex" else None
        try:
            placed = fit_to_region(loop, region, grid, keep_category=keep, contain=contain)
            break
        except RegionTooSmall:
            continue
    if placed is None:
        raise RegionTooSmall(f"none of {len(order)} candidate loops fits inside {tuple(region)}")
    return serialize_loop(placed, grammar)


def _shift_range(lo_box, hi_box, grid_max, region_lo, region_hi, contain_lo, contain_hi):
    """Integer shifts keeping [lo_box, hi_box] on the grid and, when possible,
    around [contain_lo, contain_hi] and inside [region_lo, region_hi]."""
    lo = math.ceil(-lo_box)
    hi = math.floor(grid_max - hi_box)
    if contain_lo is None:
        return lo, hi
    lo = max(lo, math.ceil(contain_hi - hi_box))
    hi = min(hi, math.floor(contain_lo - lo_box))
    if lo > hi:
        return math.ceil(-lo_box), math.floor(grid_max - hi_box)
    lo2 = max(lo, math.ceil(region_lo - lo_box))
    hi2 = min(hi, math.floor(region_hi - hi_box))
    return (lo2, hi2) if lo2 <= hi2 else (lo, hi)


def center_in_region(loop: Loop, region: BBox, grid: QuantGrid = DEFAULT_GRID, *,
                     contain: BBox | None = None) -> Loop:
    """Integer translation centering the loop on the region, kept inside the grid.

    With ``contain`` the shift is further limited, per axis and whenever such
    shifts exist, to placements enclosing that box, preferring ones that also
    stay inside the region.
    """
    box = loop_bbox(loop)
    rx, ry = region.center
    bx, by = box.center
    c = contain
    lo_x, hi_x = _shift_range(box.xmin, box.xmax, grid.max, region.xmin, region.xmax,
                              c and c.xmin, c and c.xmax)
    lo_y, hi_y = _shift_range(box.ymin, box.ymax, grid.max, region.ymin, region.ymax,
                              c and c.ymin, c and c.ymax)
    dx = min(max(math.floor(rx - bx + 0.5), lo_x), hi_x)
    dy = min(max(math.floor(ry - by + 0.5), lo_y), hi_y)
    return apply_transform(loop, Translate(dx, dy), grid)


@functools.lru_cache(maxsize=4096)
def _scale_candidates(s_max: float, max_den: int = 8) -> list:
    """Rational factors up to ``s_max``, largest first.

    Small denominators come first in spirit (they keep the grid aligned);
    finer fractions of ``s_max`` fill the gaps so tiny regions stay reachable.
    """
    vals = {Fraction(n, d) for d in range(1, max_den + 1) for n in range(1, math.floor(s_max * d) + 1)}
    for pct in range(100, 0, -1):
        f = Fraction(s_max * pct / 100).limit_denominator(1024)
        if 0 < f <= s_max:
            vals.add(f)
    return tuple(sorted(vals, reverse=True))


def fit_to_region(loop: Loop, region: BBox, grid: QuantGrid = DEFAULT_GRID, *,
                  keep_category: str | None = None, min_fill: float = 0.9, contain: BBox | None = None) -> Loop:
    """Uniformly scale (rational factor) and translate ``loop`` into ``region``.

    A loop that already fits with at least ``min_fill`` linear fill is only
    translated.  Otherwise the largest factor whose re-quantized result is a
    valid loop inside the region (and keeps ``keep_category`` when given) wins,
    falling back to smaller fills when quantization breaks larger ones.
    A ``contain`` box must end up inside the placed loop's bounding box.
    """
    region = BBox(*region)
    box = loop_bbox(loop)
    rw, rh = region.width, region.height
    extent = max(box.width, box.height)
    if rw < 0 or rh < 0 or extent <= 0:
        raise RegionTooSmall("empty region or zero-extent loop")
    ratios = [r / e for r, e in ((rw, box.width), (rh, box.height)) if e > 0]
    s_max = min(ratios)

    def accept(candidate):
        cbox = loop_bbox(candidate)
        if not region.contains(cbox, slack=1e-9):
            return False
        if contain is not None and not cbox.contains(contain, slack=1e-9):
            return False
        if keep_category is not None:
            try:
                return classify_loop(candidate).category == keep_category
            except InvalidLoop:
                return False
        return True

    if 1 <= s_max <= 1 / min_fill:
        try:
            moved = center_in_region(loop, region, grid, contain=contain)
            if accept(moved):
                return moved
        except (OutOfGrid, DegenerateResult):
            pass
    for f in _scale_candidates(s_max):
        if extent * f <= 1:
            break
        # rounding moves each side by at most one unit, so far too small never encloses
        if contain is not None and (box.width * f + 1 < contain.width or box.height * f + 1 < contain.height):
            break
        try:
            scaled = apply_transform(loop, Scale(f, (Fraction(box.xmin), Fraction(box.ymin))), grid)
            placed = center_in_region(scaled, region, grid, contain=contain)
        except (OutOfGrid, DegenerateResult):
            continue
        if accept(placed):
            return placed
    raise RegionTooSmall(f"no valid placement of the loop inside {tuple(region)}")


# -- symmetric pair editing -------------------------------------------------------


def _exact_center(loop: Loop):
    verts = loop_vertices(loop)
    return (Fraction(sum(p[0] for p in verts), len(verts)), Fraction(sum(p[1] for p in verts), len(verts)))


def symmetric_pair_edit(sketch: Sketch, loop_a: Loop, loop_b: Loop, new_fragment: str,
                        grid: QuantGrid = DEFAULT_GRID, grammar: TextGrammar = DEFAULT_GRAMMAR) -> Sketch:
    """Replace a mirrored loop pair: ``loop_a`` by the new loop, ``loop_b`` by its mirror image.

    The mirror axis is the perpendicular bisector of the two loop centers.
    """
    loops = sketch.loops()
    if loop_a not in loops or loop_b not in loops or loop_a == loop_b:
        raise ValueError("loop_a and loop_b must be two distinct loops of the sketch")
    ca, cb = _exact_center(loop_a), _exact_center(loop_b)
    if ca == cb:
        raise CoincidentCenters("both loops share one center; the mirror axis is undefined")
    new = parse_loop_fragment(new_fragment, grammar, grid)
    if check_self_intersection(new):
        raise InvalidLoop("new loop intersects itself")
    new = fit_to_region(new, loop_bbox(loop_a), grid)
    mid = ((ca[0] + cb[0]) / 2, (ca[1] + cb[1]) / 2)
    axis = (-(cb[1] - ca[1]), cb[0] - ca[0])
    mirrored = apply_transform(new, Reflect(mid, axis), grid)
    swap = {loop_a: new, loop_b: mirrored}

    def sub(lp):
        return swap.pop(lp, lp)

    faces = tuple(Face(sub(f.outer), tuple(sub(h) for h in f.holes)) for f in sketch.faces)
    return Sketch(faces)


# -- batch protocol -------------------------------------------------------------------


@dataclass
class ProtocolItem:
    model_id: str
    instruction: str
    loop_index: int
    result: InfillResult
    meta: dict = field(default_factory=dict)


def mask_context(model: CADModel, index: int) -> tuple:
    """``(region, contain)`` for masking loop ``index``: its bbox, and the union
    bbox of the face's holes when it is an outer loop that has any."""
    k = 0
    for sketch, _ in model.steps:
        for face in sketch.faces:
            for j, lp in enumerate(face.loops):
                if k == index:
                    contain = None
                    if j == 0 and face.holes:
                        boxes = [loop_bbox(h) for h in face.holes]
                        contain = BBox(min(b.xmin for b in boxes), min(b.ymin for b in boxes),
                                       max(b.xmax for b in boxes), max(b.ymax for b in boxes))
                    return loop_bbox(lp), contain
                k += 1
    raise IndexError(f"model has {k} loops, no loop {index}")


def run_protocol(models: list, instructions: list, backend_factory, cfg: GeneratorConfig,
                 rng_seed: int = 0, grammar: TextGrammar = DEFAULT_GRAMMAR,
                 grid: QuantGrid = DEFAULT_GRID) -> list:
    """Mask one random loop per model and infill it once per instruction.

    ``backend_factory(region, seed, contain)`` builds the backend for one masked
    model (see ``mask_context``);
    ``models`` holds ``(model_id, model_text)`` pairs.
    """
    from .dataset import mask_loop

    items = []
    for model_id, text in models:
        model, fragments = parse_model(text, grammar, grid)
        idx = random.Random(f"{rng_seed}:{model_id}").randrange(len(fragments))
        masked, _ = mask_loop(text, fragments[idx], grammar, grid)
        region, contain = mask_context(model, idx)
        backend = backend_factory(region, f"{rng_seed}:{model_id}", contain)
        for instruction in instructions:
            items.append(ProtocolItem(model_id, instruction, idx,
                                      generate_infill(masked, instruction, cfg, backend, grammar, grid)))
    return items
