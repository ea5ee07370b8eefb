"""Kernel lane selection.

Prefers the compiled extension and falls back to the pure-Python lane with
identical semantics. Set ESSPLIT_PURE=1 to force the fallback (used by the
parity tests and the benchmark).
"""

import os

if os.environ.get("ESSPLIT_PURE", "") not in ("", "0"):
    from . import _kernels_py as _impl
    BACKEND = "pure"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "pure"

Stream = _impl.Stream
Counters = _impl.Counters
exceed_up = _impl.exceed_up
exceed_down = _impl.exceed_down
stay_bounds = _impl.stay_bounds
rect_bounds = _impl.rect_bounds
envelope_walk = _impl.envelope_walk
fill_segment = _impl.fill_segment
accept_bounds = _impl.accept_bounds
split_coord = _impl.split_coord
sharpen_side = _impl.sharpen_side
euler_run = _impl.euler_run
