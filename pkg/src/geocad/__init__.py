"""Geometry-instructed editing of local loops in sketch-extrude CAD models."""

__version__ = "0.1.0"

from .cad import (  # noqa: E402
    Arc, BBox, CADModel, ChainError, Circle, CollinearArc, DEFAULT_GRID, ExtrudeParams, Face,
    GeometryError, GridRangeError, Line, Loop, ModelError, Point, QuantGrid, Sketch, dequantize,
    loop_bbox, loop_center, quantize, validate_model,
)
from .textformat import (  # noqa: E402
    CADSyntaxError, DEFAULT_GRAMMAR, TextGrammar, parse_loop_fragment, parse_model, serialize_loop,
    serialize_model,
)
from .analysis import (  # noqa: E402
    DEFAULT_TOLERANCES, GeometricLabel, InvalidLoop, Tolerances, check_self_intersection,
    classify_loop, is_valid_loop,
)
from .captioning import Caption, build_caption_corpus, caption_simple, parse_caption  # noqa: E402
from .augment import apply_transform, augment_random  # noqa: E402
from .generation import GeneratorConfig, InfillResult, generate_infill, retrieval_generate  # noqa: E402
from .evaluation import chamfer_distance, cov_mmd, evaluate_run, jsd, sample_point_cloud  # noqa: E402
