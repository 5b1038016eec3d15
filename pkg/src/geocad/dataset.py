"""Stage-1 alignment and stage-2 masked-infill training samples."""
from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .analysis import classify_loop
from .augment import augment_random, describe
from .captioning import CorpusRecord, caption_simple, canonical_key, label_of
from .cad import DEFAULT_GRID, ChainError, GridRangeError, QuantGrid
from .textformat import (
    DEFAULT_GRAMMAR, CADSyntaxError, LoopFragment, TextGrammar,
    parse_loop_fragment, parse_model, replace_span, serialize_loop, serialize_model,
)

log = logging.getLogger(__name__)

STAGE1_TEMPLATE = (
    "Generate the textual representation of a local part of a CAD sketch whose shape is {instruction}.\n"
    "Local part:"
)
STAGE2_TEMPLATE = (
    "Below is a CAD model in text form in which one local part has been masked. "
    "Predict the masked local part so that its shape is {instruction}, "
    "keeping every other part unchanged.\n"
    "CAD model: {masked_text}\n"
    "Masked part:"
)
_STAGE2_RX = re.compile(r"^.*\nCAD model: (?P<masked>.*)\nMasked part:$", re.S)

INSTRUCTION_SOURCE = "ground-truth caption of the masked loop"


class SpanMismatch(ValueError):
    pass


class NoMaskableLoop(ValueError):
    pass


@dataclass
class TrainingSample:
    stage: str
    prompt: str
    answer: str
    meta: dict = field(default_factory=dict)

    @property
    def instruction(self) -> str:
        return self.meta.get("instruction_text", "")

    def to_dict(self) -> dict:
        return {"stage": self.stage, "prompt": self.prompt, "answer": self.answer, "meta": self.meta}


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (0.90, 0.05, 0.05)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or min(self.ratios) < 0 or abs(sum(self.ratios) - 1) > 1e-9:
            raise ValueError(f"split ratios must be three nonnegative numbers summing to 1, got {self.ratios}")


def split_dataset(model_ids: list, spec: SplitSpec = SplitSpec()):
    """Seeded shuffle, then contiguous cuts at the (rounded) ratio boundaries."""
    if not model_ids:
        raise ValueError("nothing to split")
    ids = list(model_ids)
    random.Random(spec.seed).shuffle(ids)
    n = len(ids)
    a = math.floor(spec.ratios[0] * n + 0.5)
    b = math.floor((spec.ratios[0] + spec.ratios[1]) * n + 0.5)
    return ids[:a], ids[a:b], ids[b:]


def stage1_prompt(instruction: str) -> str:
    return STAGE1_TEMPLATE.format(instruction=instruction)


def stage2_prompt(masked_text: str, instruction: str) -> str:
    return STAGE2_TEMPLATE.format(instruction=instruction, masked_text=masked_text)


def extract_masked_text(prompt: str) -> str:
    m = _STAGE2_RX.match(prompt)
    if not m:
        raise ValueError("not a stage-2 prompt")
    return m.group("masked")


def mask_loop(model_text: str, fragment: LoopFragment, grammar: TextGrammar = DEFAULT_GRAMMAR,
              grid: QuantGrid = DEFAULT_GRID):
    """Replace one loop span by the mask token; returns ``(masked_text, answer)``."""
    a, b = fragment.span
    if not (0 <= a < b <= len(model_text)):
        raise SpanMismatch(f"span {fragment.span} outside text of length {len(model_text)}")
    answer = model_text[a:b]
    try:
        parse_loop_fragment(answer, grammar, grid)
    except (CADSyntaxError, ChainError, GridRangeError) as exc:
        raise SpanMismatch(f"span {fragment.span} is not a loop: {exc}") from None
    return replace_span(model_text, fragment.span, grammar.mask), answer


def build_stage1_samples(records: Iterable[CorpusRecord], augment_count: int = 3, rng_seed: int = 0,
                         grammar: TextGrammar = DEFAULT_GRAMMAR, grid: QuantGrid = DEFAULT_GRID
                         ) -> Iterator[TrainingSample]:
    """One sample for each captioned loop plus one per augmented variant.

    Dimensional captions (circle, square, rectangle) are re-derived for each
    variant, since scaling changes the dims; all other captions carry over.
    """
    for rec in records:
        if rec.provenance not in ("vertex_based", "vllm") or not rec.caption:
            log.info("skipping %s: provenance %s", rec.key, rec.provenance)
            continue
        loop = parse_loop_fragment(rec.loop_text, grammar, grid)
        label = label_of(rec)
        base = {"model_id": None, "loop_key": rec.key, "category": rec.category}
        yield TrainingSample("stage1", stage1_prompt(rec.caption), serialize_loop(loop, grammar),
                             {**base, "instruction_text": rec.caption})
        if augment_count <= 0:
            continue
        seed = f"{rng_seed}:{rec.key}"
        for variant, t in augment_random(loop, label, seed, augment_count, grid):
            text = caption_simple(classify_loop(variant)).text if label.is_simple else rec.caption
            yield TrainingSample("stage1", stage1_prompt(text), serialize_loop(variant, grammar),
                                 {**base, "instruction_text": text, "transform": describe(t)})


def build_stage2_samples(models: Iterable, captions: dict, rng_seed: int, epoch: int,
                         grammar: TextGrammar = DEFAULT_GRAMMAR, grid: QuantGrid = DEFAULT_GRID,
                         on_unmaskable: str = "raise") -> Iterator[TrainingSample]:
    """One masked sample per model for the given epoch.

    ``models`` yields ``(model_id, CADModel or model text)``; ``captions`` maps
    canonical loop keys to caption text.  The masked loop is drawn uniformly
    among captioned loops with a generator seeded by ``(rng_seed, epoch,
    model_id)``.
    """
    for model_id, model in models:
        text = model if isinstance(model, str) else serialize_model(model, grammar)
        parsed, fragments = parse_model(text, grammar, grid)
        loops = parsed.loops()
        choices = [(i, captions[k]) for i, k in enumerate(map(canonical_key, loops)) if captions.get(k)]
        if not choices:
            if on_unmaskable == "skip":
                log.info("model %s has no captioned loop; skipped", model_id)
                continue
            raise NoMaskableLoop(f"model {model_id} has no captioned loop")
        idx, instruction = random.Random(f"{rng_seed}:{epoch}:{model_id}").choice(choices)
        masked, answer = mask_loop(text, fragments[idx], grammar, grid)
        yield TrainingSample("stage2", stage2_prompt(masked, instruction), answer, {
            "model_id": model_id,
            "loop_key": canonical_key(loops[idx]),
            "loop_index": idx,
            "category": classify_loop(loops[idx]).category,
            "instruction_text": instruction,
            "instruction_source": INSTRUCTION_SOURCE,
            "epoch": epoch,
        })


def caption_map(records: Iterable[CorpusRecord]) -> dict:
    return {r.key: r.caption for r in records if r.provenance in ("vertex_based", "vllm") and r.caption}


def _tokens(text: str) -> set:
    return set(re.findall(r"[a-z0-9\-]+", text.lower()))


def select_exemplars(target: TrainingSample, pool: list, k: int) -> list:
    """Identical instructions first, then by instruction word overlap; ties keep pool order."""
    k = max(0, min(k, len(pool)))
    if k == 0:
        return []
    want = target.instruction
    want_tokens = _tokens(want)

    def score(item):
        i, s = item
        if s.instruction == want:
            return (0, 0.0, i)
        got = _tokens(s.instruction)
        union = want_tokens | got
        return (1, -(len(want_tokens & got) / len(union) if union else 0.0), i)

    candidates = [(i, s) for i, s in enumerate(pool) if s is not target]
    return [s for _, s in sorted(candidates, key=score)[:k]]


def build_fewshot_prompt(target: TrainingSample, exemplar_pool: list, k: int = 5) -> str:
    shots = select_exemplars(target, exemplar_pool, k)
    if not shots:
        return target.prompt
    blocks = [f"Instruction: {s.prompt}\nAnswer: {s.answer}" for s in shots]
    return "\n\n".join(blocks + [target.prompt])


def emit_jsonl(samples: Iterable[TrainingSample], path) -> int:
    n = 0
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for s in samples:
                fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")
                n += 1
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write samples to {path}: {exc.strerror}") from exc
    return n


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [TrainingSample(**json.loads(line)) for line in fh if line.strip()]
