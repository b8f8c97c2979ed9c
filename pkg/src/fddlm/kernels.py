"""Kernel backend selection.

The compiled extension is preferred when available; setting the environment
variable FDDLM_PURE_PYTHON=1 forces the pure-Python fallback (used by the
backend-comparison benchmark and for debugging).
"""

import os

if os.environ.get("FDDLM_PURE_PYTHON", "").strip() not in ("", "0", "false", "False"):
    from . import _core_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _core_py as _impl

        BACKEND = "python"

polygon_area = _impl.polygon_area
clip_triangle = _impl.clip_triangle
clip_against_candidates = _impl.clip_against_candidates
locate_points = _impl.locate_points
