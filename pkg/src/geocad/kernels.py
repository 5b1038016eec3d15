"""Hot-kernel dispatch: the compiled ``_kernels`` extension when built, else ``_kernels_py``.

Set ``GEOCAD_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("GEOCAD_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = "python" if _impl.__name__.endswith("_py") else "cython"

polyline_self_intersects = _impl.polyline_self_intersects
segments_intersect = _impl.segments_intersect
nn_sqdist = _impl.nn_sqdist
