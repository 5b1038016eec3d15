import random

import pytest
from hypothesis import given, strategies as st

from geocad.analysis import classify_loop
from geocad.cad import CADModel, ExtrudeParams, Face, Loop, Sketch
from geocad.captioning import CorpusRecord, build_caption_corpus, canonical_key
from geocad.dataset import (
    INSTRUCTION_SOURCE, NoMaskableLoop, SpanMismatch, SplitSpec, TrainingSample, build_fewshot_prompt,
    build_stage1_samples, build_stage2_samples, caption_map, emit_jsonl, extract_masked_text, mask_loop,
    read_jsonl, select_exemplars, split_dataset, stage1_prompt,
)
from geocad.textformat import LoopFragment, parse_loop_fragment, parse_model, replace_span, serialize_model
from helpers import random_model

SQUARE = Loop.polygon([(0, 0), (50, 0), (50, 50), (0, 50)])
HOLE = Loop.circle((25, 25), 5)
PLATE = CADModel(((Sketch((Face(SQUARE, (HOLE,)),)), ExtrudeParams()),))


def corpus_for(models, vllm_reply="an odd shape"):
    class Fake:
        def ask(self, prompt, png):
            return vllm_reply
    records, _ = build_caption_corpus(models, Fake())
    return records


def test_split_ratios():
    ids = [f"m{i}" for i in range(1000)]
    train, val, test = split_dataset(ids)
    assert (len(train), len(val), len(test)) == (900, 50, 50)
    assert sorted(train + val + test) == sorted(ids)
    assert split_dataset(ids) == split_dataset(ids)
    assert split_dataset(ids, SplitSpec(seed=1)) != split_dataset(ids)
    with pytest.raises(ValueError):
        SplitSpec((0.5, 0.5))
    with pytest.raises(ValueError):
        split_dataset([])


@given(st.integers(1, 500), st.integers(0, 100))
def test_split_partitions(n, seed):
    ids = list(range(n))
    parts = split_dataset(ids, SplitSpec(seed=seed))
    assert sorted(sum(map(list, parts), [])) == ids
    assert not (set(parts[0]) & set(parts[2]))


def test_mask_loop_splice():
    text = serialize_model(PLATE)
    _, frags = parse_model(text)
    masked, answer = mask_loop(text, frags[1])
    assert answer == "<loop> circle 25 25 5 <loop_end>"
    assert masked.count("<mask>") == 1
    assert masked.replace("<mask>", answer) == text


def test_mask_loop_span_mismatch():
    text = serialize_model(PLATE)
    with pytest.raises(SpanMismatch):
        mask_loop(text, LoopFragment("x", (0, 7)))
    with pytest.raises(SpanMismatch):
        mask_loop(text, LoopFragment("x", (5, len(text) + 10)))


def test_stage1_samples():
    records = corpus_for([PLATE])
    samples = list(build_stage1_samples(records, augment_count=3, rng_seed=0))
    # two captioned loops, each with three variants
    assert len(samples) == 8
    first = samples[0]
    assert first.prompt == stage1_prompt("a square with a side length of 50")
    assert first.answer == "<loop> 0 0 line 50 0 line 50 50 line 0 50 line 0 0 <loop_end>"
    for s in samples:
        label = classify_loop(parse_loop_fragment(s.answer))
        assert s.instruction.startswith(("a square", "a circle"))
        assert s.meta["category"] == label.category
    assert [s.to_dict() for s in samples] == \
        [s.to_dict() for s in build_stage1_samples(records, augment_count=3, rng_seed=0)]


def test_stage1_variant_captions_track_dims():
    records = corpus_for([PLATE])
    for s in build_stage1_samples(records, augment_count=5, rng_seed=3):
        label = classify_loop(parse_loop_fragment(s.answer))
        if label.category == "circle":
            assert s.instruction == f"a circle with a radius of {label.dims['radius']}"


def test_stage1_single_loop_four_samples():
    rec = CorpusRecord("k", "<loop> 0 0 line 40 0 line 0 30 line 0 0 <loop_end>", "a right triangle",
                       "vertex_based", "right_triangle")
    assert len(list(build_stage1_samples([rec], augment_count=3))) == 4


def test_stage1_skips_uncaptioned():
    recs = [CorpusRecord("a", "<loop> circle 9 9 3 <loop_end>", "", "none", "complex"),
            CorpusRecord("b", "<loop> circle 9 9 3 <loop_end>", "", "pending", "complex")]
    assert list(build_stage1_samples(recs)) == []


def test_stage2_samples():
    records = corpus_for([PLATE])
    caps = caption_map(records)
    s = list(build_stage2_samples([("plate", PLATE)], caps, rng_seed=1, epoch=0))
    assert len(s) == 1
    sample = s[0]
    masked = extract_masked_text(sample.prompt)
    assert masked.replace("<mask>", sample.answer) == serialize_model(PLATE)
    assert sample.meta["instruction_source"] == INSTRUCTION_SOURCE
    assert sample.meta["instruction_text"] == caps[sample.meta["loop_key"]]
    again = list(build_stage2_samples([("plate", serialize_model(PLATE))], caps, rng_seed=1, epoch=0))
    assert again[0].to_dict() == sample.to_dict()


def test_stage2_epochs_vary_mask():
    records = corpus_for([PLATE])
    caps = caption_map(records)
    picks = {next(build_stage2_samples([("plate", PLATE)], caps, 0, e)).meta["loop_index"] for e in range(30)}
    assert picks == {0, 1}


def test_stage2_no_maskable_loop():
    with pytest.raises(NoMaskableLoop):
        list(build_stage2_samples([("plate", PLATE)], {}, 0, 0))
    assert list(build_stage2_samples([("plate", PLATE)], {}, 0, 0, on_unmaskable="skip")) == []


@given(st.integers(0, 10**9))
def test_stage2_splice_identity(seed):
    model = random_model(random.Random(seed), max_steps=3)
    caps = caption_map(corpus_for([model]))
    for s in build_stage2_samples([(seed, model)], caps, seed, 0, on_unmaskable="skip"):
        masked = extract_masked_text(s.prompt)
        assert masked.count("<mask>") == 1
        at = masked.index("<mask>")
        assert replace_span(masked, (at, at + len("<mask>")), s.answer) == serialize_model(model)


def test_no_split_leakage():
    models = [(f"m{i}", random_model(random.Random(i), max_steps=2)) for i in range(60)]
    train, val, test = split_dataset([mid for mid, _ in models], SplitSpec(seed=5))
    caps = caption_map(corpus_for([m for _, m in models]))
    lookup = dict(models)
    train_ids = {s.meta["model_id"] for s in build_stage2_samples(
        [(mid, lookup[mid]) for mid in train], caps, 0, 0, on_unmaskable="skip")}
    assert train_ids.isdisjoint(test) and train_ids.isdisjoint(val)


def test_fewshot_selection():
    pool = [TrainingSample("stage2", f"p{i}", f"a{i}", {"instruction_text": t})
            for i, t in enumerate(["a circle with a radius of 3", "a kite", "a circle with a radius of 9",
                                   "a square with a side length of 3"])]
    target = TrainingSample("stage2", "target", "", {"instruction_text": "a circle with a radius of 9"})
    shots = select_exemplars(target, pool, 2)
    assert [s.prompt for s in shots] == ["p2", "p0"]
    prompt = build_fewshot_prompt(target, pool, 2)
    assert prompt.startswith("Instruction: p2\nAnswer: a2") and prompt.endswith("target")
    assert build_fewshot_prompt(target, [], 5) == "target"
    assert sorted(s.prompt for s in select_exemplars(pool[0], pool, 10)) == ["p1", "p2", "p3"]


def test_emit_and_read(tmp_path):
    samples = list(build_stage1_samples(corpus_for([PLATE]), augment_count=1))
    path = tmp_path / "s.jsonl"
    assert emit_jsonl(samples, path) == len(samples)
    assert [s.to_dict() for s in read_jsonl(path)] == [s.to_dict() for s in samples]
    with pytest.raises(OSError):
        emit_jsonl(samples, tmp_path / "missing" / "s.jsonl")


def test_keys_match_corpus():
    recs = corpus_for([PLATE])
    assert [r.key for r in recs] == [canonical_key(SQUARE), canonical_key(HOLE)]
