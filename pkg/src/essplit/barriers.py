"""Barrier classification and first-crossing deciders.

A reaction coordinate maps states to scalars; cells are classified against
barrier levels using the coordinate's range over the cell box. Deciders
refine ambiguous cells (and extend the horizon when needed) until the
skeleton proves which barrier the path reached first. Every decision is a
measurable function of exactly sampled quantities, so no discretisation
bias enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .brownian import (DEFAULT_CONFIG, EsSamplerConfig, refine_cell,
                       sample_segment, sharpen_cell)
from .errors import AssumptionViolatedError, NonConvergenceError
from .skeleton import Skeleton, concat
from .sampling import RngStream

__all__ = [
    "ReactionCoordinate",
    "identity_1d",
    "coordinate_min",
    "coordinate_abs_diff",
    "custom_coordinate",
    "LevelSystem",
    "BlockDecomposition",
    "classify_single",
    "classify_two_sided",
    "block_decompose",
    "single_barrier_crossing",
    "two_sided_crossing",
    "CrossingVerdict",
]

DEFAULT_REFINE_CAP = 100_000
DEFAULT_WORK_FRACTION = 0.25
DEFAULT_EXTENSION_SCALE = 0.5


class ReactionCoordinate:
    """Scalar summary of the state with interval arithmetic over boxes.

    evaluate maps a point to the coordinate value; inf_over/sup_over give
    its exact range over an axis-aligned box. The batch methods vectorise
    over a skeleton's envelope columns and additionally produce witnesses:
    inf_ub is a value the running infimum is known to reach (an upper bound
    on the true infimum over the cell) and sup_lb one the running supremum
    is known to reach. Witnesses let deciders prove barrier contact without
    further refinement.
    """

    def __init__(self, kind: str,
                 evaluate: Callable[[np.ndarray], float],
                 inf_over: Callable[[np.ndarray, np.ndarray], float],
                 sup_over: Callable[[np.ndarray, np.ndarray], float]):
        self.kind = kind
        self._evaluate = evaluate
        self._inf_over = inf_over
        self._sup_over = sup_over

    def evaluate(self, x) -> float:
        return float(self._evaluate(np.atleast_1d(np.asarray(x, dtype=float))))

    def inf_over(self, lower, upper) -> float:
        return float(self._inf_over(np.asarray(lower, dtype=float),
                                    np.asarray(upper, dtype=float)))

    def sup_over(self, lower, upper) -> float:
        return float(self._sup_over(np.asarray(lower, dtype=float),
                                    np.asarray(upper, dtype=float)))

    def batch_range(self, env: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(inf, sup) of the coordinate over each cell box; env is (n, d, 4)."""
        n = env.shape[0]
        inf = np.empty(n)
        sup = np.empty(n)
        for k in range(n):
            inf[k] = self.inf_over(env[k, :, 0], env[k, :, 3])
            sup[k] = self.sup_over(env[k, :, 0], env[k, :, 3])
        return inf, sup

    def batch_witness(self, env: np.ndarray, v0: np.ndarray,
                      v1: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(inf_ub, sup_lb) witnesses per cell from endpoint values; v0/v1
        are (n, d) arrays of cell start/end states."""
        n = env.shape[0]
        e0 = np.empty(n)
        e1 = np.empty(n)
        for k in range(n):
            e0[k] = self.evaluate(v0[k])
            e1[k] = self.evaluate(v1[k])
        return np.minimum(e0, e1), np.maximum(e0, e1)


class _Identity1d(ReactionCoordinate):
    def __init__(self):
        super().__init__("identity_1d",
                         lambda x: x[0],
                         lambda lo, hi: lo[0],
                         lambda lo, hi: hi[0])

    def batch_range(self, env):
        return env[:, 0, 0].copy(), env[:, 0, 3].copy()

    def batch_witness(self, env, v0, v1):
        e0 = v0[:, 0]
        e1 = v1[:, 0]
        inf_ub = np.minimum(np.minimum(e0, e1), env[:, 0, 1])
        sup_lb = np.maximum(np.maximum(e0, e1), env[:, 0, 2])
        return inf_ub, sup_lb


class _CoordinateMin(ReactionCoordinate):
    def __init__(self):
        super().__init__("coordinate_min",
                         lambda x: x.min(),
                         lambda lo, hi: lo.min(),
                         lambda lo, hi: hi.min())

    def batch_range(self, env):
        return env[:, :, 0].min(axis=1), env[:, :, 3].min(axis=1)

    def batch_witness(self, env, v0, v1):
        e0 = v0.min(axis=1)
        e1 = v1.min(axis=1)
        # the coordinate's infimum over the cell is at most every single
        # coordinate's infimum, hence at most each inner lower bound
        inf_ub = np.minimum(np.minimum(e0, e1), env[:, :, 1].min(axis=1))
        sup_lb = np.maximum(e0, e1)
        return inf_ub, sup_lb


def _absdiff_inf(lo, hi):
    if lo[0] <= hi[1] and lo[1] <= hi[0]:
        return 0.0
    return max(lo[0] - hi[1], lo[1] - hi[0])


class _CoordinateAbsDiff(ReactionCoordinate):
    def __init__(self):
        super().__init__("coordinate_abs_diff",
                         lambda x: abs(x[0] - x[1]),
                         _absdiff_inf,
                         lambda lo, hi: max(hi[0] - lo[1], hi[1] - lo[0]))

    def batch_range(self, env):
        l0 = env[:, 0, 0]
        u0 = env[:, 0, 3]
        l1 = env[:, 1, 0]
        u1 = env[:, 1, 3]
        sup = np.maximum(u0 - l1, u1 - l0)
        # boxes overlap exactly when both gap differences are nonpositive
        inf = np.maximum(np.maximum(l0 - u1, l1 - u0), 0.0)
        return inf, sup


def identity_1d() -> ReactionCoordinate:
    """First coordinate of a one-dimensional state."""
    return _Identity1d()


def coordinate_min() -> ReactionCoordinate:
    """Minimum over the state's coordinates."""
    return _CoordinateMin()


def coordinate_abs_diff() -> ReactionCoordinate:
    """Absolute difference of the first two coordinates."""
    return _CoordinateAbsDiff()


def custom_coordinate(evaluate, inf_over, sup_over,
                      kind: str = "custom") -> ReactionCoordinate:
    """Wrap user callables; inf_over/sup_over must bound the coordinate's
    exact range over boxes or classification is unsound."""
    return ReactionCoordinate(kind, evaluate, inf_over, sup_over)


def make_coordinate(kind: str) -> ReactionCoordinate:
    if kind == "identity_1d":
        return identity_1d()
    if kind == "coordinate_min":
        return coordinate_min()
    if kind == "coordinate_abs_diff":
        return coordinate_abs_diff()
    raise ValueError(f"unknown reaction coordinate kind: {kind}")


@dataclass(frozen=True)
class LevelSystem:
    """Absorbing lower barrier z_A and increasing levels z_1 < ... < z_m;
    the last level is the rare set's threshold."""

    z_A: float
    levels: Tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(z) for z in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("at least one level is required")
        if not self.z_A < levels[0]:
            raise ValueError(f"z_A={self.z_A} must be below the first level {levels[0]}")
        for a, b in zip(levels, levels[1:]):
            if not a < b:
                raise ValueError(f"levels must be strictly increasing, got {a} then {b}")

    @property
    def z_B(self) -> float:
        return self.levels[-1]

    @property
    def m(self) -> int:
        return len(self.levels)


def classify_single(cell_box, xi: ReactionCoordinate, z_D: float) -> int:
    """-1 when the box lies strictly below z_D, +1 when entirely at or
    above, 0 when it brackets the barrier."""
    lower, upper = cell_box
    if xi.sup_over(lower, upper) < z_D:
        return -1
    if xi.inf_over(lower, upper) >= z_D:
        return 1
    return 0


def classify_two_sided(cell_box, xi: ReactionCoordinate, z_A: float,
                       z_B: float) -> int:
    """Five-way class of a box against both barriers: -2 fully at or below
    z_A, -1 touching z_A only, 0 strictly between, +1 touching z_B only,
    +2 fully at or above z_B. A box in contact with both barriers violates
    the decider's working assumption and raises."""
    lower, upper = cell_box
    inf = xi.inf_over(lower, upper)
    sup = xi.sup_over(lower, upper)
    if inf <= z_A and sup >= z_B:
        raise AssumptionViolatedError(
            f"cell box spans both barriers (range [{inf}, {sup}] vs "
            f"[{z_A}, {z_B}]); refine before classifying")
    if sup <= z_A:
        return -2
    if inf >= z_B:
        return 2
    if inf <= z_A:
        return -1
    if sup >= z_B:
        return 1
    return 0


@dataclass(frozen=True)
class BlockDecomposition:
    """Partition of a class sequence into maximal same-sign runs.

    kappa[j] is the block index of cell j; blocks holds (start, stop)
    half-open cell ranges; block_kind holds each block's sign.
    """

    kappa: Tuple[int, ...]
    blocks: Tuple[Tuple[int, int], ...]
    block_kind: Tuple[int, ...]


def block_decompose(n_seq: Sequence[int]) -> BlockDecomposition:
    """Group consecutive cells whose classes share a sign."""
    seq = [int(v) for v in n_seq]
    for v in seq:
        if not -2 <= v <= 2:
            raise ValueError(f"class {v} outside [-2, 2]")
    kappa: List[int] = []
    blocks: List[Tuple[int, int]] = []
    kinds: List[int] = []
    for j, v in enumerate(seq):
        sign = (v > 0) - (v < 0)
        if blocks and sign == kinds[-1]:
            blocks[-1] = (blocks[-1][0], j + 1)
        else:
            blocks.append((j, j + 1))
            kinds.append(sign)
        kappa.append(len(blocks) - 1)
    return BlockDecomposition(tuple(kappa), tuple(blocks), tuple(kinds))


class _RefineBudget:
    __slots__ = ("left",)

    def __init__(self, n: int):
        self.left = n

    def take(self):
        if self.left <= 0:
            raise NonConvergenceError(
                "refinement budget exhausted before a crossing decision")
        self.left -= 1


def _pick(mask: np.ndarray, scores: np.ndarray, strategy: str) -> int:
    idx = np.flatnonzero(mask)
    if strategy == "largest_overlap":
        return int(idx[np.argmax(scores[idx])])
    return int(idx[0])


# intervals narrower than this fraction of the box diameter stop helping;
# past it the cell is bisected in time instead
_SHARPEN_DIAM_FRACTION = 0.125


def _refine_step(stream, sk, k, xi, prefer_side, cfg, cnt, budget):
    """One refinement move on cell k.

    Interval sharpening is preferred: it consumes a single retrospective
    Bernoulli and cannot stall, whereas a time bisection rejection-samples
    a midpoint against the cell's extremum event, which is slow exactly in
    the extreme envelope states the deciders tend to visit. For a monotone
    one-coordinate summary, sharpening the decision side's interval alone
    is almost surely decisive, so such cells are never bisected here. For
    other coordinates sharpening only shrinks the box to the exact extremum
    rectangle, which can overestimate the summary's path range, so once
    every interval is narrow relative to the box the cell is bisected to
    expose new exact path points.

    prefer_side is "above" (sharpen the maximum's interval), "below" (the
    minimum's), or None (whichever interval is widest).
    """
    budget.take()
    env = sk.env[k]
    if xi.kind == "identity_1d" and prefer_side is not None:
        side = 1 if prefer_side == "above" else 0
        return sharpen_cell(stream, sk, k, 0, side, cfg, cnt)
    w_min = env[:, 1] - env[:, 0]
    w_max = env[:, 3] - env[:, 2]
    diam = float((env[:, 3] - env[:, 0]).max())
    widest = max(float(w_min.max()), float(w_max.max()))
    if widest > _SHARPEN_DIAM_FRACTION * diam:
        if float(w_max.max()) >= float(w_min.max()):
            return sharpen_cell(stream, sk, k, int(np.argmax(w_max)), 1,
                                cfg, cnt)
        return sharpen_cell(stream, sk, k, int(np.argmax(w_min)), 0,
                            cfg, cnt)
    return refine_cell(stream, sk, k, cfg, cnt)


def _one_sided_decide(stream, sk, xi, z, side, cfg, cnt, strategy, budget):
    """Refine until the skeleton proves whether the path reaches the region
    ({xi >= z} above, {xi <= z} below) within its span."""
    while True:
        inf, sup = xi.batch_range(sk.env)
        inf_ub, sup_lb = xi.batch_witness(sk.env, sk.values[:-1], sk.values[1:])
        if side == "above":
            proved = (inf >= z) | (sup_lb >= z)
            safe = sup < z
            scores = sup - z
        else:
            proved = (sup <= z) | (inf_ub <= z)
            safe = inf > z
            scores = z - inf
        if proved.any():
            return 1, sk
        undecided = ~safe
        if not undecided.any():
            return 0, sk
        if (undecided & sk.settled).any():
            raise AssumptionViolatedError(
                "archived hull cell became ambiguous; barriers moved "
                "inside a previously decided region")
        k = _pick(undecided, scores, strategy)
        sk = _refine_step(stream, sk, k, xi, side, cfg, cnt, budget)


def single_barrier_crossing(stream: RngStream, sk: Skeleton,
                            xi: ReactionCoordinate, z_D: float,
                            sampler: Optional[EsSamplerConfig] = None,
                            strategy: str = "first",
                            counters=None,
                            side: str = "above",
                            refine_cap: int = DEFAULT_REFINE_CAP):
    """Decide whether the path enters {xi >= z_D} within the skeleton's
    span (side="below" flips the region to {xi <= z_D}).

    Returns (indicator, refined skeleton); the refinement performed while
    deciding is kept so later queries start from the sharper description.
    """
    cfg = sampler or DEFAULT_CONFIG
    cnt = counters if counters is not None else kernels.Counters()
    if sk.is_empty:
        raise ValueError("cannot decide a crossing on an empty skeleton")
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    budget = _RefineBudget(refine_cap)
    return _one_sided_decide(stream, sk, xi, z_D, side, cfg, cnt,
                             strategy, budget)


@dataclass(frozen=True)
class CrossingVerdict:
    """Outcome of a two-barrier race: decision is -1 (lower barrier first)
    or +1 (upper barrier first); skeleton is the fully refined path record
    up to sigma_tilde, the end of the segment where the decision landed."""

    decision: int
    skeleton: Skeleton
    sigma_tilde: float


def _classes(inf: np.ndarray, sup: np.ndarray, z_A: float,
             z_B: float) -> np.ndarray:
    cls = np.zeros(len(inf), dtype=np.int8)
    cls[sup <= z_A] = -2
    cls[(inf <= z_A) & (sup > z_A)] = -1
    cls[inf >= z_B] = 2
    cls[(sup >= z_B) & (inf < z_B) & (inf > z_A)] = 1
    return cls


def _prepass(stream, sk, xi, z_A, z_B, cfg, cnt, strategy, budget):
    """Refine until no cell box touches both barriers and no two adjacent
    cells touch opposite barriers."""
    while True:
        inf, sup = xi.batch_range(sk.env)
        touch_a = inf <= z_A
        touch_b = sup >= z_B
        straddle = touch_a & touch_b
        if straddle.any():
            diam = (sk.env[:, :, 3] - sk.env[:, :, 0]).max(axis=1)
            k = _pick(straddle, diam, strategy)
        else:
            adj = (touch_a[:-1] & touch_b[1:]) | (touch_b[:-1] & touch_a[1:])
            if not adj.any():
                return sk
            j = int(np.flatnonzero(adj)[0])
            diam = (sk.env[:, :, 3] - sk.env[:, :, 0]).max(axis=1)
            k = j if diam[j] >= diam[j + 1] else j + 1
        if sk.settled[k]:
            raise AssumptionViolatedError(
                "archived hull cell touches a barrier; barriers moved "
                "inside a previously decided region")
        sk = _refine_step(stream, sk, k, xi, None, cfg, cnt, budget)


def _scan_segment(stream, sk, xi, z_A, z_B, cfg, cnt, strategy, budget):
    """One decision pass over a working segment. Returns (decision, sk)
    where decision 0 means the segment is fully inside (z_A, z_B)."""
    while True:
        sk = _prepass(stream, sk, xi, z_A, z_B, cfg, cnt, strategy, budget)
        inf, sup = xi.batch_range(sk.env)
        cls = _classes(inf, sup, z_A, z_B)
        dec = block_decompose(cls)
        active = None
        for (s_idx, e_idx), kind in zip(dec.blocks, dec.block_kind):
            if kind != 0:
                active = (s_idx, e_idx, kind)
                break
        if active is None:
            return 0, sk
        s_idx, e_idx, kind = active
        block_cls = cls[s_idx:e_idx]
        if kind < 0:
            if (block_cls == -2).any():
                return -1, sk
            sub = sk.subskeleton(s_idx, e_idx)
            ind, sub = _one_sided_decide(stream, sub, xi, z_A, "below",
                                         cfg, cnt, strategy, budget)
            sk = sk.replace_cells(s_idx, e_idx, sub)
            if ind:
                return -1, sk
        else:
            if (block_cls == 2).any():
                return 1, sk
            sub = sk.subskeleton(s_idx, e_idx)
            ind, sub = _one_sided_decide(stream, sub, xi, z_B, "above",
                                         cfg, cnt, strategy, budget)
            sk = sk.replace_cells(s_idx, e_idx, sub)
            if ind:
                return 1, sk
        # block resolved as no-entry; its cells are now interior, rescan


def _archive(sk: Skeleton, xi, z_A, z_B, compact: bool) -> Skeleton:
    """Collapse a fully interior segment to one settled hull cell when the
    hull itself still classifies as interior."""
    if not compact or sk.n_cells <= 1:
        return sk
    hull = sk.settle_hull()
    lo = hull.env[0, :, 0]
    hi = hull.env[0, :, 3]
    if xi.inf_over(lo, hi) > z_A and xi.sup_over(lo, hi) < z_B:
        return hull
    return sk


def two_sided_crossing(stream: RngStream, sk: Skeleton,
                       xi: ReactionCoordinate, z_A: float, z_B: float,
                       sampler: Optional[EsSamplerConfig] = None,
                       strategy: str = "first",
                       work_fraction: float = DEFAULT_WORK_FRACTION,
                       refine_cap: int = DEFAULT_REFINE_CAP,
                       extension_scale: float = DEFAULT_EXTENSION_SCALE,
                       max_extensions: int = 1_000_000,
                       compact: bool = True,
                       counters=None) -> CrossingVerdict:
    """Race the path between barriers z_A < z_B, extending the horizon in
    fixed-size blocks until one side is provably reached first.

    The skeleton must start inside [z_A, z_B). Ambiguous cells are refined;
    stretches scanned without any barrier contact are archived (optionally
    as settled hull cells, which keeps long runs compact). The verdict's
    skeleton replays to the same decision without further sampling.
    """
    cfg = sampler or DEFAULT_CONFIG
    cnt = counters if counters is not None else kernels.Counters()
    if sk.is_empty:
        raise ValueError("the initial skeleton must contain at least one cell")
    if not z_A < z_B:
        raise ValueError(f"need z_A < z_B, got {z_A}, {z_B}")
    xi0 = xi.evaluate(sk.start_value)
    if not z_A <= xi0 < z_B:
        raise ValueError(
            f"start value {xi0} outside the working band [{z_A}, {z_B})")
    gap = z_B - z_A
    level_w = cfg.ladder.level_for(work_fraction * gap)
    ext_len = cfg.T * max(1, math.ceil(extension_scale * gap * gap / cfg.T))
    budget = _RefineBudget(refine_cap)
    archive = Skeleton.empty(sk.d)
    cur = sk
    for _ in range(max_extensions):
        decision, cur = _scan_segment(stream, cur, xi, z_A, z_B, cfg, cnt,
                                      strategy, budget)
        if decision != 0:
            full = concat(archive, cur)
            return CrossingVerdict(decision, full, float(cur.t_end))
        archive = concat(archive, _archive(cur, xi, z_A, z_B, compact))
        cur = sample_segment(stream, archive.end_value, archive.t_end,
                             archive.t_end + ext_len, level_w,
                             config=cfg, counters=cnt)
    raise NonConvergenceError(
        f"no crossing decided within {max_extensions} horizon extensions")
