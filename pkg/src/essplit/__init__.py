"""Unbiased rare-event probabilities for Brownian motion.

The package estimates P(the path reaches the target barrier before the
recurrent one) by multilevel splitting whose every crossing decision is
made on tolerance-enforced path skeletons: finite, refinable records that
sandwich the true path almost surely. No discretisation enters, so the
estimators are unbiased; an Euler baseline with discrete barrier
monitoring is included to exhibit the bias being removed.
"""

from .errors import (AssumptionViolatedError, IncompatibleSkeletonError,
                     NonConvergenceError)
from .kernels import BACKEND
from .sampling import (ProbabilityBounds, RngStream, bridge_exceedance_bounds,
                       bridge_midpoint, derive_stream_id, gaussian,
                       interval_stay_bounds, retrospective_bernoulli)
from .skeleton import (Cell, Skeleton, ToleranceLadder, box, compatible,
                       concat, evaluate, skeleton_from_text, skeleton_to_text)
from .brownian import (DEFAULT_CONFIG, EsSamplerConfig, extend, refine_cell,
                       sample_segment, sharpen_cell)
from .barriers import (BlockDecomposition, CrossingVerdict, LevelSystem,
                       ReactionCoordinate, block_decompose, classify_single,
                       classify_two_sided, coordinate_abs_diff,
                       coordinate_min, custom_coordinate, identity_1d,
                       make_coordinate, single_barrier_crossing,
                       two_sided_crossing)
from .splitting import (Estimate, ParticleRecord, SplitConfig, euler_kernel,
                        euler_mls, exact_mls_fixed, exact_mls_smc)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolatedError", "IncompatibleSkeletonError",
    "NonConvergenceError", "BACKEND",
    "ProbabilityBounds", "RngStream", "bridge_exceedance_bounds",
    "bridge_midpoint", "derive_stream_id", "gaussian", "interval_stay_bounds",
    "retrospective_bernoulli",
    "Cell", "Skeleton", "ToleranceLadder", "box", "compatible", "concat",
    "evaluate", "skeleton_from_text", "skeleton_to_text",
    "DEFAULT_CONFIG", "EsSamplerConfig", "extend", "refine_cell",
    "sample_segment", "sharpen_cell",
    "BlockDecomposition", "CrossingVerdict", "LevelSystem",
    "ReactionCoordinate", "block_decompose", "classify_single",
    "classify_two_sided", "coordinate_abs_diff", "coordinate_min",
    "custom_coordinate", "identity_1d", "make_coordinate",
    "single_barrier_crossing", "two_sided_crossing",
    "Estimate", "ParticleRecord", "SplitConfig", "euler_kernel", "euler_mls",
    "exact_mls_fixed", "exact_mls_smc",
    "__version__",
]
