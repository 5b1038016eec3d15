"""Command-line pipeline: ingest, caption, augment, prepare, infill, evaluate, sketch-edit.

Settings resolve as flags > environment variables > ``--config`` file.  The
config file holds ``key = value`` lines; a bare key applies to every
subcommand with that option, ``command.key`` to one subcommand only.  Keys use
the option name with dashes or underscores (``top-p`` or ``top_p``).

Exit codes: 0 success, 1 usage, 2 empty output, 3 endpoint failure, 4 I/O or
unreadable input.
"""
from __future__ import annotations

import json
import logging
import os
import random
import sys
import time
from pathlib import Path

import click

from . import __version__
from .augment import QUARTER_TURNS, REFLECT_AXES, SCALE_FACTORS, ExhaustedRetries, augment_random, describe
from .cad import GeometryError
from .captioning import CorpusRecord, build_caption_corpus, label_of, read_corpus, write_corpus
from .dataset import (
    INSTRUCTION_SOURCE, SplitSpec, build_stage1_samples, build_stage2_samples, caption_map, emit_jsonl, mask_loop,
    split_dataset,
)
from .deepcad import IngestError, ingest_deepcad_json
from .endpoints import EndpointError, LLMClient, VLLMClient
from .evaluation import EvalCase, EvalConfig, evaluate_run
from .generation import (
    GeneratorConfig, InfillResult, LLMBackend, RetrievalBackend, generate_infill, mask_context, run_protocol,
    symmetric_pair_edit,
)
from .textformat import CADSyntaxError, find_masks, parse_loop_fragment, parse_model, serialize_loop, serialize_model

log = logging.getLogger("geocad")

EXIT_USAGE, EXIT_EMPTY, EXIT_ENDPOINT, EXIT_IO = 1, 2, 3, 4


class EmptyOutput(click.ClickException):
    exit_code = EXIT_EMPTY


def _default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def read_config(path) -> dict:
    """Parse a ``key = value`` file into click's nested ``default_map`` shape."""
    out: dict = {"*": {}}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            scope, _, name = key.rpartition(".")
            out.setdefault(scope or "*", {})[name.replace("-", "_")] = value
    return out


def _default_map(cfg: dict, commands) -> dict:
    shared = cfg.get("*", {})
    dm = {}
    for name, cmd in commands.items():
        # keys may name the option (--corpus) or the parameter (corpus_path)
        alias = {}
        for p in cmd.params:
            alias[p.name] = p.name
            for opt in getattr(p, "opts", []):
                if opt.startswith("--"):
                    alias[opt[2:].replace("-", "_")] = p.name
        entry = {alias[k]: v for k, v in shared.items() if k in alias}
        for k, v in cfg.get(name, {}).items():
            key = k.replace("-", "_")
            if key not in alias:
                raise click.UsageError(f"config key {name}.{k} is not an option of {name}")
            entry[alias[key]] = v
        if entry:
            dm[name] = entry
    return dm


def write_manifest(path: Path, command: str, params: dict, inputs: list, outputs: list, started: float,
                   extra: dict | None = None):
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(params.items()) if not callable(v)},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": params.get("seed"),
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
        **(extra or {}),
    }
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def _read_models(path) -> list:
    """``(id, text)`` pairs from a JSONL file of ``{"id", "text"}`` records."""
    models = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                rec = json.loads(line)
                models.append((str(rec.get("id", n)), rec["text"]))
    return models


def _write_jsonl(path, rows) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def _jobs_option(f):
    return click.option("--jobs", type=click.IntRange(min=1), envvar="GEOCAD_JOBS", default=_default_jobs,
                        show_default="available CPUs", help="Worker count.")(f)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="geocad")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="key = value settings file (lowest precedence).")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Geometry-instructed local-part editing pipeline for sketch-extrude CAD text."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        ctx.default_map = _default_map(read_config(config_path), cli.commands)
    ctx.obj = {"started": time.time()}


# -- ingest ---------------------------------------------------------------------


@cli.command()
@click.argument("src_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def ingest(ctx, src_dir, out):
    """Convert a directory of DeepCAD JSON files to model text (JSONL of {id, text})."""
    rows, rejects = [], []
    for f in sorted(src_dir.glob("*.json")):
        try:
            model = ingest_deepcad_json(f.read_bytes())
            rows.append({"id": f.stem, "text": serialize_model(model)})
        except (IngestError, GeometryError, ValueError) as exc:
            log.warning("rejected %s: %s", f.name, exc)
            rejects.append({"file": f.name, "error": f"{type(exc).__name__}: {exc}"})
    reject_path = out.with_name(out.name + ".rejects.jsonl")
    _write_jsonl(reject_path, rejects)
    _write_jsonl(out, rows)
    write_manifest(_manifest_path(out), "ingest", ctx.params, [src_dir], [out, reject_path], ctx.obj["started"])
    click.echo(f"ingested {len(rows)} models, rejected {len(rejects)}")
    if not rows:
        raise EmptyOutput(f"no model in {src_dir} could be ingested")


# -- caption ----------------------------------------------------------------------


@cli.command()
@click.argument("models", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--vllm-endpoint", envvar="GEOCAD_VLLM_URL", default=None,
              help="Base URL of the vision-language model; without it complex loops stay pending.")
@click.option("--vllm-model", default="default", show_default=True, help="Model name sent to the endpoint.")
@_jobs_option
@click.pass_context
def caption(ctx, models, out, vllm_endpoint, vllm_model, jobs):
    """Build the deduplicated caption corpus of every loop in MODELS."""
    parsed = [parse_model(text)[0] for _, text in _read_models(models)]
    client = VLLMClient(vllm_endpoint, vllm_model) if vllm_endpoint else None
    records, stats = build_caption_corpus(parsed, client, jobs=jobs)
    write_corpus(records, out)
    write_manifest(_manifest_path(out), "caption", ctx.params, [models], [out], ctx.obj["started"])
    click.echo(json.dumps(vars(stats), sort_keys=True))
    if not records:
        raise EmptyOutput("no valid loop found")


# -- augment ----------------------------------------------------------------------


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--count", type=click.IntRange(min=1), default=3, show_default=True, help="Variants per loop.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def augment(ctx, corpus, out, count, seed):
    """Write label-preserving augmented variants of every captioned loop."""
    rows = []
    for rec in read_corpus(corpus):
        if rec.provenance not in ("vertex_based", "vllm"):
            continue
        loop = parse_loop_fragment(rec.loop_text)
        try:
            variants = augment_random(loop, label_of(rec), f"{seed}:{rec.key}", count)
        except ExhaustedRetries as exc:
            log.warning("no variants for %s: %s", rec.key, exc)
            continue
        for v, t in variants:
            rows.append({"source_key": rec.key, "category": rec.category,
                         "loop_text": serialize_loop(v), "transform": describe(t)})
    _write_jsonl(out, rows)
    write_manifest(_manifest_path(out), "augment", ctx.params, [corpus], [out], ctx.obj["started"])
    click.echo(f"wrote {len(rows)} variants")
    if not rows:
        raise EmptyOutput("no variant produced")


# -- prepare ----------------------------------------------------------------------


def _parse_split(ctx, param, value):
    try:
        parts = tuple(float(x) for x in value.split(","))
        return SplitSpec(parts).ratios
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _dataset_metadata(stage: str) -> dict:
    if stage == "1":
        return {"augmentation": {"scale_factors": [str(f) for f in SCALE_FACTORS],
                                 "scale_anchor": "loop bbox minimum",
                                 "rotations_deg": [90 * k for k in QUARTER_TURNS],
                                 "reflection_axes": [list(a) for a in REFLECT_AXES],
                                 "complex_loops": "translate and scale only"}}
    return {"instruction_source": INSTRUCTION_SOURCE}


@cli.command()
@click.option("--stage", type=click.Choice(["1", "2"]), required=True, help="Alignment (1) or infill (2) samples.")
@click.option("--captions", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Caption corpus JSONL.")
@click.option("--models", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Model text JSONL (stage 2).")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--epochs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Stage 2: one freshly masked sample per model per epoch.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", default="0.9,0.05,0.05", show_default=True, callback=_parse_split,
              help="train,val,test ratios over model ids.")
@click.option("--augment-count", type=click.IntRange(min=0), default=3, show_default=True,
              help="Stage 1: augmented variants per loop.")
@click.pass_context
def prepare(ctx, stage, captions, models, out_dir, epochs, seed, split, augment_count):
    """Emit stage-1 or stage-2 training samples as JSONL."""
    out_dir.mkdir(parents=True, exist_ok=True)
    records = read_corpus(captions)
    outputs = []
    if stage == "1":
        path = out_dir / "stage1.jsonl"
        n = emit_jsonl(build_stage1_samples(records, augment_count, seed), path)
        outputs.append(path)
    else:
        if models is None:
            raise click.UsageError("--models is required for --stage 2")
        pairs = _read_models(models)
        train, val, test = split_dataset([mid for mid, _ in pairs], SplitSpec(split, seed))
        which = {**{m: "train" for m in train}, **{m: "val" for m in val}, **{m: "test" for m in test}}
        caps = caption_map(records)
        n = 0
        # one file per epoch, each with a fresh mask choice per model
        for epoch in range(epochs):
            def tagged(epoch=epoch):
                for s in build_stage2_samples(pairs, caps, seed, epoch, on_unmaskable="skip"):
                    s.meta["split"] = which[s.meta["model_id"]]
                    yield s

            path = out_dir / f"stage2.epoch{epoch}.jsonl"
            n += emit_jsonl(tagged(), path)
            outputs.append(path)
        split_path = out_dir / "splits.json"
        split_path.write_text(json.dumps({"train": train, "val": val, "test": test}, indent=1) + "\n")
        outputs.append(split_path)
    write_manifest(out_dir / f"manifest.stage{stage}.json", "prepare", ctx.params,
                   [captions] + ([models] if models else []), outputs, ctx.obj["started"],
                   {"dataset_metadata": _dataset_metadata(stage)})
    click.echo(f"wrote {n} samples")
    if n == 0:
        raise EmptyOutput("no sample produced")


# -- infill ---------------------------------------------------------------------------


def _result_row(model_id, instruction, loop_index, r: InfillResult) -> dict:
    return {"model_id": model_id, "instruction": instruction, "loop_index": loop_index, "status": r.status,
            "raw_text": r.raw_text, "loop_text": serialize_loop(r.loop) if r.loop else None,
            "model_text": r.model_text, "detail": r.detail}


def _backend_factory(endpoint, corpus_path, cfg):
    if endpoint == "retrieval":
        if corpus_path is None:
            raise click.UsageError("--corpus is required with --endpoint retrieval")
        corpus = read_corpus(corpus_path)
        return lambda region, seed, contain=None: RetrievalBackend(corpus, region, seed, contain=contain)
    backend = LLMBackend(LLMClient(endpoint, retries=cfg.retries))
    return lambda region, seed, contain=None: backend


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="File holding one model text (masked or not).")
@click.option("--batch", "batch_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Model text JSONL: mask one seeded random loop per model and run every instruction.")
@click.option("--instruction", "instructions", multiple=True, help="Geometric instruction (repeatable).")
@click.option("--instructions-file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="One instruction per line (batch mode).")
@click.option("--loop-index", type=click.IntRange(min=0), default=None,
              help="Loop to mask in an unmasked model (default: seeded random).")
@click.option("--endpoint", envvar="GEOCAD_LLM_URL", default="retrieval", show_default=True,
              help='Generator URL, or "retrieval" for the offline corpus baseline.')
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Caption corpus for the retrieval baseline.")
@click.option("--temperature", type=click.FloatRange(min=0), default=0.9, show_default=True)
@click.option("--top-p", type=click.FloatRange(min=0, min_open=True, max=1), default=0.9, show_default=True)
@click.option("--max-new-tokens", type=click.IntRange(min=1), default=512, show_default=True)
@click.option("--retries", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Result JSON(L); stdout if omitted.")
@click.pass_context
def infill(ctx, model_path, batch_path, instructions, instructions_file, loop_index, endpoint, corpus_path,
           temperature, top_p, max_new_tokens, retries, seed, out):
    """Generate a masked loop from a geometric instruction."""
    if (model_path is None) == (batch_path is None):
        raise click.UsageError("give exactly one of --model or --batch")
    instructions = list(instructions)
    if instructions_file:
        instructions += [ln.strip() for ln in instructions_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not instructions:
        raise click.UsageError("no instruction given")
    cfg = GeneratorConfig(temperature, top_p, max_new_tokens, endpoint, retries, seed)
    factory = _backend_factory(endpoint, corpus_path, cfg)

    if batch_path is not None:
        items = run_protocol(_read_models(batch_path), instructions, factory, cfg, seed)
        rows = [_result_row(i.model_id, i.instruction, i.loop_index, i.result) for i in items]
    else:
        text = model_path.read_text(encoding="utf-8").strip()
        if find_masks(text):
            if endpoint == "retrieval":
                raise click.UsageError("retrieval needs the unmasked model (with --loop-index) to know the region")
            masked, idx, region, contain = text, None, None, None
        else:
            model, fragments = parse_model(text)
            idx = loop_index if loop_index is not None else random.Random(seed).randrange(len(fragments))
            if idx >= len(fragments):
                raise click.UsageError(f"--loop-index {idx} out of range (model has {len(fragments)} loops)")
            masked, _ = mask_loop(text, fragments[idx])
            region, contain = mask_context(model, idx)
        backend = factory(region, seed, contain)
        rows = [_result_row(model_path.stem, ins, idx, generate_infill(masked, ins, cfg, backend))
                for ins in instructions]

    payload = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)
    if out is None:
        click.echo(payload, nl=False)
    else:
        out.write_text(payload, encoding="utf-8")
        write_manifest(_manifest_path(out), "infill", ctx.params,
                       [p for p in (model_path, batch_path, corpus_path) if p], [out], ctx.obj["started"])
    if not rows:
        raise EmptyOutput("no result produced")


# -- evaluate -------------------------------------------------------------------------


def _load_results(path) -> list:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            loop = parse_loop_fragment(row["loop_text"]) if row.get("loop_text") else None
            model = parse_model(row["model_text"])[0] if row.get("status") == "ok" else None
            res = InfillResult(row.get("raw_text", ""), row["status"], loop, model, row.get("model_text"),
                               row.get("detail", ""))
            cases.append(EvalCase(res, row["instruction"], str(row.get("model_id", ""))))
    return cases


@cli.command()
@click.option("--results", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Infill results JSONL (as written by `infill`).")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Reference model text JSONL.")
@click.option("--points", type=click.IntRange(min=1), default=2000, show_default=True, help="Points per cloud.")
@click.option("--voxels", type=click.IntRange(min=1), default=28, show_default=True, help="JSD grid resolution.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-generated", type=click.IntRange(min=1), default=None,
              help="Seeded subset of generated models used for COV/MMD/JSD.")
@click.option("--max-reference", type=click.IntRange(min=1), default=None,
              help="Seeded subset of reference models used for COV/MMD/JSD.")
@click.option("--vllm-endpoint", envvar="GEOCAD_VLLM_URL", default=None, help="Judge for complex instructions.")
@click.option("--vllm-model", default="default", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Report JSON path.")
@_jobs_option
@click.pass_context
def evaluate(ctx, results, reference, points, voxels, seed, max_generated, max_reference, vllm_endpoint,
             vllm_model, out, jobs):
    """Score a batch of infill results (PV, Ver-score, VLLM-score, COV, MMD, JSD)."""
    cases = _load_results(results)
    if not cases:
        raise EmptyOutput(f"{results} holds no results")
    refs = [(mid, parse_model(text)[0]) for mid, text in _read_models(reference)]
    cfg = EvalConfig(points, voxels, seed, max_generated, max_reference, jobs)
    client = VLLMClient(vllm_endpoint, vllm_model) if vllm_endpoint else None
    report = evaluate_run(cases, refs, cfg, client)
    if out is not None:
        out.write_text(report.to_json() + "\n", encoding="utf-8")
        write_manifest(_manifest_path(out), "evaluate", ctx.params, [results, reference], [out],
                       ctx.obj["started"])
    else:
        click.echo(report.to_json())
    click.echo(report.table(), err=out is None)


# -- sketch-edit ----------------------------------------------------------------------


@cli.command("sketch-edit")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--step", type=click.IntRange(min=0), default=0, show_default=True, help="Sketch-extrude step.")
@click.option("--loop-a", type=click.IntRange(min=0), required=True, help="Loop index (within the step) to replace.")
@click.option("--loop-b", type=click.IntRange(min=0), required=True, help="Index of its mirror partner.")
@click.option("--fragment", required=True, help="Loop text of the new part.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
def sketch_edit(ctx, model_path, step, loop_a, loop_b, fragment, out):
    """Replace a symmetric loop pair, mirroring the new loop onto the partner."""
    from .cad import CADModel

    model, _ = parse_model(model_path.read_text(encoding="utf-8").strip())
    if step >= len(model.steps):
        raise click.UsageError(f"--step {step} out of range")
    sketch, ext = model.steps[step]
    loops = sketch.loops()
    if max(loop_a, loop_b) >= len(loops):
        raise click.UsageError(f"loop index out of range (step has {len(loops)} loops)")
    edited = symmetric_pair_edit(sketch, loops[loop_a], loops[loop_b], fragment)
    steps = list(model.steps)
    steps[step] = (edited, ext)
    out.write_text(serialize_model(CADModel(tuple(steps))) + "\n", encoding="utf-8")
    write_manifest(_manifest_path(out), "sketch-edit", ctx.params, [model_path], [out], ctx.obj["started"])


def main(argv=None) -> int:
    """Entry point mapping failure classes to exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="geocad", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except EndpointError as exc:
        click.echo(f"error: endpoint unavailable: {exc}", err=True)
        return EXIT_ENDPOINT
    except (OSError, CADSyntaxError, GeometryError, IngestError, json.JSONDecodeError, KeyError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_IO
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
