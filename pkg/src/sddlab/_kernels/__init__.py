"""Kernel lane selection.

Two interchangeable implementations of the numerical hot path exist: the
compiled Cython lane (`_ckernels`) and the pure-Python lane (`pykernels`).
They are algorithmically identical and bit-for-bit compatible. The compiled
lane is preferred when importable; set SDDLAB_PURE=1 to force the pure lane.
"""

import os

if os.environ.get("SDDLAB_PURE") == "1":
    from . import pykernels as _impl

    LANE = "pure"
else:
    try:
        from . import _ckernels as _impl

        LANE = "compiled"
    except ImportError:
        from . import pykernels as _impl

        LANE = "pure"

norm_cdf = _impl.norm_cdf
ontime_probability = _impl.ontime_probability
eval_walk = _impl.eval_walk
best_insertion = _impl.best_insertion
maximize_quote = _impl.maximize_quote
MAX_WALK_LEGS = _impl.MAX_WALK_LEGS
