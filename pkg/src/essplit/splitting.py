"""Multilevel splitting engines.

Two exact engines drive the tolerance-enforced sampler through a ladder of
barrier levels: fixed splitting (every survivor gets the same number of
children) and an SMC variant (multinomial resampling back to constant
population). Matching Euler engines with discretely monitored crossings
provide the biased baseline the exact method is compared against.

All particle randomness is keyed: root particles derive their streams from
the trial stream and their index, children from (parent stream id, level,
child index). Results are therefore reproducible and independent of
execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .barriers import (DEFAULT_EXTENSION_SCALE, DEFAULT_REFINE_CAP,
                       DEFAULT_WORK_FRACTION, LevelSystem, ReactionCoordinate,
                       two_sided_crossing)
from .brownian import DEFAULT_CONFIG, EsSamplerConfig, sample_segment
from .errors import NonConvergenceError
from .sampling import RngStream, derive_stream_id
from .skeleton import Skeleton, concat

__all__ = [
    "ParticleRecord",
    "SplitConfig",
    "Estimate",
    "exact_mls_fixed",
    "exact_mls_smc",
    "euler_kernel",
    "euler_mls",
]

# domain tags for stream-id derivation, so roots, resampling draws, and
# children can never collide
_TAG_ROOT = 1
_TAG_RESAMPLE = 2


@dataclass(frozen=True)
class ParticleRecord:
    """A particle's observable state after its latest level decision."""

    skeleton: Skeleton
    sigma_tilde: float
    x_at_sigma_tilde: Tuple[float, ...]
    level_reached: int
    alive: int
    stream_id: int = 0


@dataclass(frozen=True)
class SplitConfig:
    """Everything an estimation engine needs for one trial.

    The initial law is a point mass at x0, or uniform on the axis-aligned
    box x0_box when given; either way its support must map into
    [z_A, z_B) under xi. ratios apply to the fixed-splitting engine only
    (one per level transition); n is the SMC population. h0/rescale feed
    the Euler engines: the step at level i is h0 * rescale**(i-1).
    """

    level_system: LevelSystem
    xi: ReactionCoordinate
    x0: Tuple[float, ...]
    x0_box: Optional[Tuple[Tuple[float, float], ...]] = None
    n0: int = 100
    ratios: Optional[Tuple[int, ...]] = None
    n: int = 100
    sampler: EsSamplerConfig = field(default_factory=lambda: DEFAULT_CONFIG)
    seed: int = 0
    strategy: str = "first"
    work_fraction: float = DEFAULT_WORK_FRACTION
    refine_cap: int = DEFAULT_REFINE_CAP
    extension_scale: float = DEFAULT_EXTENSION_SCALE
    compact: bool = True
    split_grid: Optional[float] = None
    h0: float = 0.1
    rescale: float = 9.0
    max_euler_steps: int = 10 ** 9

    def __post_init__(self):
        if np.isscalar(self.x0):
            object.__setattr__(self, "x0", (float(self.x0),))
        else:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.ratios is not None:
            object.__setattr__(self, "ratios",
                               tuple(int(r) for r in self.ratios))
        if self.n0 < 1 or self.n < 1:
            raise ValueError("particle counts must be at least 1")
        if self.ratios is not None:
            if len(self.ratios) != self.level_system.m - 1:
                raise ValueError(
                    f"need {self.level_system.m - 1} splitting ratios, "
                    f"got {len(self.ratios)}")
            if any(r < 1 for r in self.ratios):
                raise ValueError("splitting ratios must be at least 1")
        if self.split_grid is not None and not self.split_grid > 0.0:
            raise ValueError("split_grid spacing must be positive")
        if not self.h0 > 0.0 or not self.rescale > 0.0:
            raise ValueError("euler step parameters must be positive")
        ls = self.level_system
        if self.x0_box is not None:
            box = tuple((float(a), float(b)) for a, b in self.x0_box)
            object.__setattr__(self, "x0_box", box)
            if len(box) != len(self.x0):
                raise ValueError("x0_box dimension differs from x0")
            for a, b in box:
                if not a <= b:
                    raise ValueError(f"box side [{a}, {b}] is empty")
            lo = np.array([a for a, _ in box])
            hi = np.array([b for _, b in box])
            if not (self.xi.inf_over(lo, hi) >= ls.z_A
                    and self.xi.sup_over(lo, hi) < ls.z_B):
                raise ValueError(
                    "initial box support leaves the working band [z_A, z_B)")
        else:
            xi0 = self.xi.evaluate(np.array(self.x0))
            if not ls.z_A <= xi0 < ls.z_B:
                raise ValueError(
                    f"initial point maps to {xi0}, outside [{ls.z_A}, {ls.z_B})")

    def fixed_ratios(self) -> Tuple[int, ...]:
        if self.ratios is not None:
            return self.ratios
        return (1,) * (self.level_system.m - 1)


@dataclass(frozen=True)
class Estimate:
    """Engine output: the estimate, per-level bookkeeping, and cost totals."""

    p_hat: float
    counts: Tuple[int, ...]
    level_ratios: Tuple[float, ...]
    extinct: bool
    cells: int
    refinements: int
    bern_depth: int
    bernoullis: int = 0
    proposals: int = 0
    euler_steps: int = 0


def _draw_initial(stream: RngStream, cfg: SplitConfig) -> Tuple[float, ...]:
    if cfg.x0_box is None:
        return cfg.x0
    return tuple(a + (b - a) * stream.uniform() for a, b in cfg.x0_box)


def _working_level(cfg: SplitConfig, z_hi: float) -> int:
    gap = z_hi - cfg.level_system.z_A
    return cfg.sampler.ladder.level_for(cfg.work_fraction * gap)


def _value_at_boundary(sk: Skeleton, t: float) -> Tuple[float, ...]:
    idx = int(np.searchsorted(sk.times, t))
    if idx >= len(sk.times) or sk.times[idx] != t:
        raise ValueError(f"time {t} is not a cell boundary of the skeleton")
    return tuple(float(v) for v in sk.values[idx])


def _decide_level(stream: RngStream, sk: Skeleton, cfg: SplitConfig,
                  z_hi: float, level_idx: int, cnt) -> Optional[ParticleRecord]:
    """Run one particle's two-barrier race against (z_A, z_hi). Returns the
    survivor record, or None when the lower barrier was reached first."""
    ls = cfg.level_system
    verdict = two_sided_crossing(
        stream, sk, cfg.xi, ls.z_A, z_hi, cfg.sampler,
        strategy=cfg.strategy, work_fraction=cfg.work_fraction,
        refine_cap=cfg.refine_cap, extension_scale=cfg.extension_scale,
        compact=cfg.compact, counters=cnt)
    if verdict.decision != 1:
        return None
    out = verdict.skeleton
    sigma = verdict.sigma_tilde
    if cfg.split_grid is not None:
        g = cfg.split_grid
        k = math.ceil(sigma / g)
        while (k - 1) * g >= sigma:
            k -= 1
        branch = k * g
        if branch > out.t_end:
            seg = sample_segment(stream, out.end_value, out.t_end, branch,
                                 _working_level(cfg, z_hi),
                                 config=cfg.sampler, counters=cnt)
            out = concat(out, seg)
    return ParticleRecord(
        skeleton=out,
        sigma_tilde=sigma,
        x_at_sigma_tilde=_value_at_boundary(out, sigma),
        level_reached=level_idx,
        alive=1,
        stream_id=stream.stream_id,
    )


def _initial_segment(stream: RngStream, x0, cfg: SplitConfig, cnt) -> Skeleton:
    level = _working_level(cfg, cfg.level_system.levels[0])
    return sample_segment(stream, x0, 0.0, cfg.sampler.T, level,
                          config=cfg.sampler, counters=cnt)


def _finish(cfg: SplitConfig, counts: List[int], attempts: List[int],
            p_hat: float, cnt) -> Estimate:
    m = cfg.level_system.m
    counts = list(counts) + [0] * (m - len(counts))
    attempts = list(attempts) + [0] * (m - len(attempts))
    ratios = tuple(
        (counts[i] / attempts[i]) if attempts[i] > 0 else 0.0
        for i in range(m))
    extinct = any(c == 0 for c in counts)
    return Estimate(
        p_hat=p_hat, counts=tuple(counts), level_ratios=ratios,
        extinct=extinct, cells=cnt.cells, refinements=cnt.refinements,
        bern_depth=cnt.bern_depth, bernoullis=cnt.bernoullis,
        proposals=cnt.proposals, euler_steps=cnt.euler_steps)


def exact_mls_fixed(cfg: SplitConfig, stream: Optional[RngStream] = None,
                    root_stream_ids: Optional[Sequence[int]] = None) -> Estimate:
    """Fixed-splitting estimator: N0 roots, every level-i survivor branches
    into ratios[i-1] children, p_hat = N_m / (N0 * prod(ratios)).

    Each child receives the parent's immutable skeleton and continues with
    its own stream, so a crossing already proven inside the parent skeleton
    is honoured before any new sampling.
    """
    master = stream if stream is not None else RngStream(cfg.seed, 0)
    base_seed = master.seed
    base_sid = master.stream_id
    ls = cfg.level_system
    ratios = cfg.fixed_ratios()
    cnt = kernels.Counters()

    survivors: List[ParticleRecord] = []
    counts: List[int] = []
    attempts: List[int] = []
    for j in range(cfg.n0):
        rid = j if root_stream_ids is None else int(root_stream_ids[j])
        ps = RngStream(base_seed, derive_stream_id(base_sid, _TAG_ROOT, rid))
        x0 = _draw_initial(ps, cfg)
        sk0 = _initial_segment(ps, x0, cfg, cnt)
        rec = _decide_level(ps, sk0, cfg, ls.levels[0], 1, cnt)
        if rec is not None:
            survivors.append(rec)
    counts.append(len(survivors))
    attempts.append(cfg.n0)

    for i in range(2, ls.m + 1):
        if not survivors:
            break
        ratio = ratios[i - 2]
        attempts.append(len(survivors) * ratio)
        next_survivors: List[ParticleRecord] = []
        for rec in survivors:
            for r in range(ratio):
                cs = RngStream(base_seed,
                               derive_stream_id(rec.stream_id, i, r))
                child = _decide_level(cs, rec.skeleton, cfg,
                                      ls.levels[i - 1], i, cnt)
                if child is not None:
                    next_survivors.append(child)
        survivors = next_survivors
        counts.append(len(survivors))

    denom = cfg.n0
    for r in ratios:
        denom *= r
    padded = list(counts) + [0] * (ls.m - len(counts))
    p_hat = padded[-1] / denom
    return _finish(cfg, counts, attempts, p_hat, cnt)


def exact_mls_smc(cfg: SplitConfig, stream: Optional[RngStream] = None) -> Estimate:
    """SMC estimator: constant population n, multinomial resampling from the
    survivors before each level, p_hat = prod(N_i / n)."""
    master = stream if stream is not None else RngStream(cfg.seed, 0)
    base_seed = master.seed
    base_sid = master.stream_id
    ls = cfg.level_system
    n = cfg.n
    cnt = kernels.Counters()

    survivors: List[ParticleRecord] = []
    counts: List[int] = []
    attempts: List[int] = []
    for j in range(n):
        ps = RngStream(base_seed, derive_stream_id(base_sid, _TAG_ROOT, j))
        x0 = _draw_initial(ps, cfg)
        sk0 = _initial_segment(ps, x0, cfg, cnt)
        rec = _decide_level(ps, sk0, cfg, ls.levels[0], 1, cnt)
        if rec is not None:
            survivors.append(rec)
    counts.append(len(survivors))
    attempts.append(n)
    p_hat = counts[0] / n

    for i in range(2, ls.m + 1):
        if not survivors:
            break
        rs = RngStream(base_seed, derive_stream_id(base_sid, _TAG_RESAMPLE, i))
        k = len(survivors)
        next_survivors: List[ParticleRecord] = []
        attempts.append(n)
        for j in range(n):
            a = int(rs.uniform() * k)
            if a >= k:
                a = k - 1
            parent = survivors[a]
            cs = RngStream(base_seed, derive_stream_id(parent.stream_id, i, j))
            child = _decide_level(cs, parent.skeleton, cfg,
                                  ls.levels[i - 1], i, cnt)
            if child is not None:
                next_survivors.append(child)
        survivors = next_survivors
        counts.append(len(survivors))
        p_hat *= counts[-1] / n

    return _finish(cfg, counts, attempts, p_hat, cnt)


def euler_kernel(stream: RngStream, x, h: float, mu=None, sigma=None):
    """One explicit step x + mu(x) h + sigma(x) sqrt(h) Z.

    mu maps a point to a drift vector (None means zero drift); sigma maps a
    point to a scalar, a per-coordinate vector, or a matrix (None means
    identity). Always consumes one normal per coordinate.
    """
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    xv = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    d = xv.shape[0]
    z = np.array([stream.standard_normal() for _ in range(d)])
    drift = np.zeros(d) if mu is None else np.asarray(mu(xv), dtype=float)
    sh = math.sqrt(h)
    if sigma is None:
        noise = sh * z
    else:
        sv = np.asarray(sigma(xv), dtype=float)
        if sv.ndim == 2:
            noise = sv @ (sh * z)
        else:
            noise = sv * sh * z
    out = xv + drift * h + noise
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out


_EULER_KINDS = {"identity_1d": 0, "coordinate_min": 1, "coordinate_abs_diff": 2}


def _euler_decide(stream: RngStream, cnt, x: np.ndarray, z_A: float,
                  z_hi: float, h: float, xi: ReactionCoordinate,
                  max_steps: int) -> int:
    kind = _EULER_KINDS.get(xi.kind)
    if kind is not None:
        verdict, _ = kernels.euler_run(stream.k, cnt, x, z_A, z_hi, h,
                                       kind, max_steps)
        return verdict
    sh = math.sqrt(h)
    d = x.shape[0]
    for _ in range(max_steps):
        for c in range(d):
            x[c] += sh * stream.standard_normal()
        cnt.euler_steps += 1
        v = xi.evaluate(x)
        if v <= z_A:
            return -1
        if v >= z_hi:
            return 1
    raise NonConvergenceError("euler trajectory exceeded the step budget")


def euler_mls(cfg: SplitConfig, stream: Optional[RngStream] = None,
              mode: str = "fixed") -> Estimate:
    """Biased baseline: the splitting engines driven by an Euler walk with
    discretely monitored crossings. The step at level i is
    h0 * rescale**(i-1); crossings between grid times are missed, which is
    exactly the bias the exact engines remove.
    """
    if mode not in ("fixed", "smc"):
        raise ValueError(f"mode must be 'fixed' or 'smc', got {mode!r}")
    master = stream if stream is not None else RngStream(cfg.seed, 0)
    base_seed = master.seed
    base_sid = master.stream_id
    ls = cfg.level_system
    cnt = kernels.Counters()
    pop = cfg.n0 if mode == "fixed" else cfg.n
    ratios = cfg.fixed_ratios() if mode == "fixed" else None

    # survivors hold (state at crossing, stream id)
    survivors: List[Tuple[np.ndarray, int]] = []
    counts: List[int] = []
    attempts: List[int] = []
    for j in range(pop):
        ps = RngStream(base_seed, derive_stream_id(base_sid, _TAG_ROOT, j))
        x = np.array(_draw_initial(ps, cfg), dtype=float)
        verdict = _euler_decide(ps, cnt, x, ls.z_A, ls.levels[0], cfg.h0,
                                cfg.xi, cfg.max_euler_steps)
        if verdict == 1:
            survivors.append((x, ps.stream_id))
    counts.append(len(survivors))
    attempts.append(pop)

    for i in range(2, ls.m + 1):
        if not survivors:
            break
        h = cfg.h0 * cfg.rescale ** (i - 1)
        next_survivors: List[Tuple[np.ndarray, int]] = []
        if mode == "fixed":
            ratio = ratios[i - 2]
            attempts.append(len(survivors) * ratio)
            for state, sid in survivors:
                for r in range(ratio):
                    cs = RngStream(base_seed, derive_stream_id(sid, i, r))
                    x = state.copy()
                    verdict = _euler_decide(cs, cnt, x, ls.z_A,
                                            ls.levels[i - 1], h, cfg.xi,
                                            cfg.max_euler_steps)
                    if verdict == 1:
                        next_survivors.append((x, cs.stream_id))
        else:
            rs = RngStream(base_seed,
                           derive_stream_id(base_sid, _TAG_RESAMPLE, i))
            k = len(survivors)
            attempts.append(pop)
            for j in range(pop):
                a = int(rs.uniform() * k)
                if a >= k:
                    a = k - 1
                state, sid = survivors[a]
                cs = RngStream(base_seed, derive_stream_id(sid, i, j))
                x = state.copy()
                verdict = _euler_decide(cs, cnt, x, ls.z_A, ls.levels[i - 1],
                                        h, cfg.xi, cfg.max_euler_steps)
                if verdict == 1:
                    next_survivors.append((x, cs.stream_id))
        survivors = next_survivors
        counts.append(len(survivors))

    padded = list(counts) + [0] * (ls.m - len(counts))
    if mode == "fixed":
        denom = pop
        for r in ratios:
            denom *= r
        p_hat = padded[-1] / denom
    else:
        p_hat = 1.0
        for c in padded:
            p_hat *= c / pop
    return _finish(cfg, counts, attempts, p_hat, cnt)
