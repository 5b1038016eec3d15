"""Batch scoring: prediction validity, Ver-score, VLLM-score and point-cloud metrics."""
from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import kernels
from .analysis import DEFAULT_TOLERANCES, DIM_KEYS, GeometricLabel, InvalidLoop, Tolerances, classify_loop, satisfies
from .cad import DEFAULT_GRID, CADModel, GeometryError, QuantGrid, dequantize, loop_polyline
from .captioning import parse_caption, render_loop_image
from .endpoints import EndpointError, MalformedReply
from .generation import STATUSES, InfillResult
from .textformat import serialize_model

log = logging.getLogger(__name__)

VLLM_JUDGE_PROMPT = (
    "Does the shape drawn in the image match this description: '{instruction}'? "
    "Answer with Yes or No."
)


class NotApplicable(ValueError):
    pass


class DegenerateModel(GeometryError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray  # (n, 3)
    source_id: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


# -- point clouds -------------------------------------------------------------


def _step_segments(sketch, ext, grid: QuantGrid, chord: float) -> list:
    """3D wireframe segments of one extrusion: every loop at both end faces."""
    rot = Rotation.from_euler("zyx", [q * 2 * np.pi / grid.levels for q in ext.orientation]).as_matrix()
    origin = np.array([dequantize(q, grid, (-1.0, 1.0)) for q in ext.origin])
    size = dequantize(ext.scale, grid) / grid.max
    heights = (-dequantize(ext.dist_neg, grid), dequantize(ext.dist_pos, grid))
    segs = []
    for lp in sketch.loops():
        uv = np.asarray(loop_polyline(lp, chord), dtype=np.float64) * size
        for h in heights:
            local = np.column_stack([uv, np.full(len(uv), h)])
            world = local @ rot.T + origin
            segs.append(np.stack([world[:-1], world[1:]], axis=1))
    return segs


def sample_point_cloud(model: CADModel, n: int = 2000, rng_seed=0, grid: QuantGrid = DEFAULT_GRID,
                       source_id: str = "") -> PointCloud:
    """``n`` points uniform by arc length over the model's extruded wireframe."""
    if n < 1:
        raise ValueError("a point cloud needs at least one point")
    segs = [s for sk, ext in model.steps for s in _step_segments(sk, ext, grid, 0.25)]
    segs = np.concatenate(segs) if segs else np.zeros((0, 2, 3))
    lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    total = lengths.sum()
    if not total > 0:
        raise DegenerateModel("wireframe has zero length")
    rng = np.random.default_rng(random.Random(rng_seed).getrandbits(64))
    s = rng.uniform(0.0, total, n)
    cum = np.cumsum(lengths)
    idx = np.minimum(np.searchsorted(cum, s, side="right"), len(segs) - 1)
    t = ((s - (cum[idx] - lengths[idx])) / np.where(lengths[idx] > 0, lengths[idx], 1.0)).clip(0, 1)
    pts = segs[idx, 0] + t[:, None] * (segs[idx, 1] - segs[idx, 0])
    return PointCloud(pts, source_id)


# -- distances ------------------------------------------------------------------


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Half the sum of both directed mean squared nearest-neighbour distances."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance of an empty cloud")
    return 0.5 * (float(kernels.nn_sqdist(a.points, b.points).mean())
                  + float(kernels.nn_sqdist(b.points, a.points).mean()))


def chamfer_matrix(generated: list, reference: list, jobs: int = 1) -> np.ndarray:
    def row(g):
        return [chamfer_distance(g, r) for r in reference]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(row, generated))
    else:
        rows = [row(g) for g in generated]
    return np.array(rows, dtype=np.float64).reshape(len(generated), len(reference))


def cov_mmd(generated: list, reference: list, jobs: int = 1, dist: np.ndarray | None = None):
    """Coverage and minimum matching distance (unscaled) under chamfer distance.

    A reference counts as covered when it is a nearest reference of some
    generated cloud; ties all count, so identical sets always reach full
    coverage.
    """
    if not generated or not reference:
        raise ValueError("cov_mmd needs two nonempty sets")
    d = chamfer_matrix(generated, reference, jobs) if dist is None else dist
    nearest = d == d.min(axis=1, keepdims=True)
    cov = float(nearest.any(axis=0).mean())
    mmd = float(d.min(axis=0).mean())
    return cov, mmd


def jsd(generated: list, reference: list, grid_res: int = 28) -> float:
    """Jensen-Shannon divergence (base 2) of voxel occupancy over the shared bounding cube."""
    if not generated or not reference:
        raise ValueError("jsd needs two nonempty sets")
    if grid_res < 1:
        raise ValueError("grid_res must be positive")
    gp = np.concatenate([c.points for c in generated])
    rp = np.concatenate([c.points for c in reference])
    both = np.concatenate([gp, rp])
    lo = both.min(axis=0)
    side = float((both.max(axis=0) - lo).max())

    def hist(p):
        if side > 0:
            cell = np.floor((p - lo) / side * grid_res).astype(np.int64).clip(0, grid_res - 1)
        else:
            cell = np.zeros((len(p), 3), dtype=np.int64)
        flat = (cell[:, 0] * grid_res + cell[:, 1]) * grid_res + cell[:, 2]
        h = np.bincount(flat, minlength=grid_res ** 3).astype(np.float64)
        return h / h.sum()

    p, q = hist(gp), hist(rp)
    m = (p + q) / 2

    def kl(x):
        nz = x > 0
        return float((x[nz] * np.log2(x[nz] / m[nz])).sum())

    return min(1.0, max(0.0, 0.5 * kl(p) + 0.5 * kl(q)))


# -- per-result scores ----------------------------------------------------------


def prediction_validity(results: list) -> float:
    if not results:
        raise ValueError("no results")
    return sum(r.status == "ok" for r in results) / len(results)


def _dims_match(found: dict, wanted: dict, tol: Tolerances) -> bool:
    for k, w in wanted.items():
        if k not in found:
            return False
        # captions print dims to two decimals
        if abs(found[k] - w) > tol.length_rel_eps * abs(w) + 0.005:
            return False
    return True


def ver_score(result: InfillResult, instruction_label: GeometricLabel,
              tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """Vertex-based consistency of a generated simple loop with its instruction."""
    if not instruction_label.is_simple:
        raise NotApplicable("Ver-score covers simple instructions only")
    if result.status != "ok" or result.loop is None:
        raise NotApplicable(f"result status is {result.status}")
    try:
        found = classify_loop(result.loop, tol)
    except InvalidLoop:
        return False
    if not satisfies(found.category, instruction_label.category):
        return False
    if not instruction_label.dims:
        return True
    # dims only make sense against the instructed category's own keys
    if found.category != instruction_label.category and instruction_label.category in DIM_KEYS:
        if instruction_label.category == "rectangle" and found.category == "square":
            side = found.dims["side"]
            return _dims_match({"length": side, "width": side}, instruction_label.dims, tol)
        return False
    return _dims_match(found.dims, instruction_label.dims, tol)


def parse_yes_no(reply: str) -> bool:
    words = re.findall(r"[a-z]+", reply.lower())
    if words and words[0] in ("yes", "no"):
        return words[0] == "yes"
    yes, no = "yes" in words, "no" in words
    if yes == no:
        raise MalformedReply(f"no yes/no judgment in {reply[:80]!r}")
    return yes


def vllm_score(result: InfillResult, instruction_text: str, client, canvas=(256, 256)) -> bool:
    if result.status != "ok" or result.loop is None:
        raise NotApplicable(f"result status is {result.status}")
    reply = client.ask(VLLM_JUDGE_PROMPT.format(instruction=instruction_text),
                       render_loop_image(result.loop, canvas))
    return parse_yes_no(reply)


# -- run report -------------------------------------------------------------------


@dataclass
class EvalCase:
    result: InfillResult
    instruction: str
    model_id: str = ""


@dataclass
class EvalConfig:
    points: int = 2000
    voxels: int = 28
    seed: int = 0
    max_generated: int | None = None
    max_reference: int | None = None
    jobs: int = 1
    tol: Tolerances = DEFAULT_TOLERANCES


@dataclass
class EvalReport:
    pv: float
    ver_score: float | None
    vllm_score: float | None
    cov: float | None
    mmd_x100: float | None
    jsd_x100: float | None
    counts: dict
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"pv": self.pv, "ver_score": self.ver_score}
        if self.vllm_score is not None:
            d["vllm_score"] = self.vllm_score
        d.update(cov=self.cov, mmd_x100=self.mmd_x100, jsd_x100=self.jsd_x100,
                 counts=self.counts, errors=self.errors)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.1f}%"

        def num(v):
            return "n/a" if v is None else f"{v:.2f}"

        cols = [("COV", pct(self.cov)), ("MMD", num(self.mmd_x100)), ("JSD", num(self.jsd_x100)),
                ("PV", pct(self.pv)), ("Ver-score", pct(self.ver_score))]
        if self.vllm_score is not None:
            cols.append(("VLLM-score", pct(self.vllm_score)))
        w = [max(len(a), len(b)) + 2 for a, b in cols]
        head = "".join(a.ljust(n) for (a, _), n in zip(cols, w))
        body = "".join(b.ljust(n) for (_, b), n in zip(cols, w))
        return head.rstrip() + "\n" + body.rstrip()


def _clouds(models, cfg: EvalConfig, grid, errors: dict) -> list:
    out = []
    for mid, m in models:
        # seeding by content makes equal models yield equal clouds
        digest = hashlib.blake2b(serialize_model(m).encode(), digest_size=8).hexdigest()
        try:
            out.append(sample_point_cloud(m, cfg.points, f"{cfg.seed}:{digest}", grid, mid))
        except DegenerateModel:
            errors["degenerate_model"] = errors.get("degenerate_model", 0) + 1
    return out


def _subset(items: list, limit, seed, tag):
    if limit is None or len(items) <= limit:
        return items
    rng = random.Random(f"{seed}:{tag}")
    keep = sorted(rng.sample(range(len(items)), limit))
    return [items[i] for i in keep]


def evaluate_run(cases: list, reference: list, cfg: EvalConfig = EvalConfig(), vllm_client=None,
                 grid: QuantGrid = DEFAULT_GRID) -> EvalReport:
    """Aggregate every metric over a batch of infill results.

    ``reference`` holds ``(model_id, CADModel)`` pairs.  Instructions that
    parse as a template caption are simple (Ver-score); the rest are complex
    (VLLM-score, omitted without a client).  Metrics over an empty set are
    reported as ``None``.
    """
    if not cases:
        raise ValueError("empty batch")
    errors: dict = {}
    counts = {s: 0 for s in STATUSES}
    for c in cases:
        counts[c.result.status] += 1
    pv = prediction_validity([c.result for c in cases])

    simple_hits = simple_n = 0
    complex_cases = []
    for c in cases:
        label = parse_caption(c.instruction)
        if label is None:
            complex_cases.append(c)
            continue
        simple_n += 1
        if c.result.status == "ok" and ver_score(c.result, label, cfg.tol):
            simple_hits += 1
    ver = simple_hits / simple_n if simple_n else None

    vllm = None
    if vllm_client is not None and complex_cases:
        def judge(c):
            if c.result.status != "ok":
                return False
            try:
                return vllm_score(c.result, c.instruction, vllm_client)
            except (EndpointError, MalformedReply) as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
            verdicts = list(pool.map(judge, complex_cases))
        for v in verdicts:
            if isinstance(v, Exception):
                key = "endpoint" if isinstance(v, EndpointError) else "malformed_reply"
                errors[key] = errors.get(key, 0) + 1
        vllm = sum(v is True for v in verdicts) / len(verdicts)

    gen_models = [(c.model_id, c.result.model) for c in cases if c.result.status == "ok"]
    gen_models = _subset(gen_models, cfg.max_generated, cfg.seed, "generated")
    ref_models = _subset(list(reference), cfg.max_reference, cfg.seed, "reference")
    gen = _clouds(gen_models, cfg, grid, errors)
    ref = _clouds(ref_models, cfg, grid, errors)
    cov = mmd = js = None
    if gen and ref:
        cov, mmd_raw = cov_mmd(gen, ref, cfg.jobs)
        mmd = 100 * mmd_raw
        js = 100 * jsd(gen, ref, cfg.voxels)
    return EvalReport(pv, ver, vllm, cov, mmd, js, counts, errors)
