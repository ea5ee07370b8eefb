"""Tolerance-enforced Brownian path sampling.

Segments are simulated as skeletons whose cells each carry exact endpoint
values and per-coordinate extremum envelopes with box diameter at most
twice the tolerance of their level. Existing cells can be refined to a
finer tolerance conditionally on everything already revealed, which keeps
every draw exact under the Wiener measure: nothing is ever resimulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import NonConvergenceError
from .sampling import RngStream
from .skeleton import Skeleton, ToleranceLadder, concat

__all__ = [
    "EsSamplerConfig",
    "DEFAULT_CONFIG",
    "sample_segment",
    "refine_cell",
    "sharpen_cell",
    "extend",
]

_MAX_SEGMENT_CELLS = 1 << 22

# Midpoint bisection falls back to an exponentially tilted proposal once
# this many plain bridge proposals have been rejected in a row; the switch
# keeps the accepted law exact while restoring usable acceptance on cells
# whose recorded event is rare — either one extremum far from both
# endpoints, or a dip *and* a rise whose conjunction is rare even though
# each alone is not.
_TILT_AFTER = 64

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EsSamplerConfig:
    """Knobs for the exact path sampler.

    ladder fixes the tolerance schedule; T is the base span used by callers
    that extend horizons in T-sized blocks; layer_grid_ratio controls how
    fast the envelope search grids grow (must exceed 1; larger values give
    looser first envelopes but fewer layer draws).
    """

    ladder: ToleranceLadder
    T: float = 1.0
    layer_grid_ratio: float = 1.5
    bernoulli_cap: int = 10_000
    proposal_cap: int = 1_000_000

    def __post_init__(self):
        if not self.T > 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not self.layer_grid_ratio > 1.0:
            raise ValueError(
                f"layer_grid_ratio must exceed 1, got {self.layer_grid_ratio}")
        if self.bernoulli_cap < 1 or self.proposal_cap < 1:
            raise ValueError("caps must be positive")


DEFAULT_CONFIG = EsSamplerConfig(ladder=ToleranceLadder(eps1=1.0, rho=0.5))

# cell payload passed through the refinement recursion:
# (t0, t1, x0 tuple, x1 tuple, [per-coordinate (mlo, mhi, klo, khi)])
_CellData = Tuple[float, float, Tuple[float, ...], Tuple[float, ...],
                  List[Tuple[float, float, float, float]]]


def _as_point(x) -> Tuple[float, ...]:
    if np.isscalar(x):
        return (float(x),)
    return tuple(float(v) for v in np.asarray(x, dtype=float).ravel())


def _log_ndtr(x: float) -> float:
    """log of the standard normal CDF, stable into the far lower tail."""
    if x > -37.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # Mills-ratio asymptotic: Phi(x) ~ phi(x) / (-x) as x -> -inf.
    return -0.5 * x * x - _LOG_SQRT_2PI - math.log(-x)


def _std_normal_above(stream: RngStream, a: float, budget: int) -> float:
    """Draw a standard normal conditioned on being >= a. Exact.

    For a <= 0 plain resampling accepts with probability >= 1/2; for a > 0
    a shifted-exponential proposal accepts with probability >= exp(-1/2),
    so either branch terminates geometrically fast.
    """
    if a <= 0.0:
        for _ in range(budget):
            z = stream.standard_normal()
            if z >= a:
                return z
    else:
        lam = 0.5 * (a + math.sqrt(a * a + 4.0))
        for _ in range(budget):
            z = a - math.log(1.0 - stream.uniform()) / lam
            dz = z - lam
            if stream.uniform() <= math.exp(-0.5 * dz * dz):
                return z
    raise NonConvergenceError("truncated normal draw exceeded its budget")


def _tilt_draw(stream: RngStream, x0: float, x1: float, hd: float, k: float,
               mu: float, sd: float, budget: int) -> Tuple[float, float]:
    """Propose a midpoint for a coordinate whose envelope requires a dip
    to k far below both endpoints (x0, x1 > k).

    The proposal density is proportional to phi(w) * h(w) with
    h(w) = 1 for w <= k and h(w) = pL(w) + pR(w) for w > k, where
    pL = exp(-2 (x0-k)(w-k) / hd) and pR likewise for x1 are the exact
    half-cell dip probabilities. Since the true acceptance target
    P(event | w) never exceeds h(w), thinning by P(event | w) / h(w)
    leaves the accepted midpoint exactly bridge-law conditioned on the
    event. Returns (w, h(w)).
    """
    s2 = sd * sd
    a0 = (k - mu) / sd
    lw0 = _log_ndtr(a0)
    # exp(-b (w - k)) tilts the proposal mean down by b * sd^2.
    bl = 2.0 * (x0 - k) / hd
    br = 2.0 * (x1 - k) / hd
    ml = mu - bl * s2
    mr = mu - br * s2
    lwl = 0.5 * bl * bl * s2 - bl * (mu - k) + _log_ndtr((ml - k) / sd)
    lwr = 0.5 * br * br * s2 - br * (mu - k) + _log_ndtr((mr - k) / sd)
    top = max(lw0, lwl, lwr)
    w0 = math.exp(lw0 - top)
    wl = math.exp(lwl - top)
    wr = math.exp(lwr - top)
    pick = stream.uniform() * (w0 + wl + wr)
    if pick < w0:
        w = mu - sd * _std_normal_above(stream, -a0, budget)
    elif pick < w0 + wl:
        w = ml + sd * _std_normal_above(stream, (k - ml) / sd, budget)
    else:
        w = mr + sd * _std_normal_above(stream, (k - mr) / sd, budget)
    if w <= k:
        return w, 1.0
    return w, (math.exp(-2.0 * (x0 - k) * (w - k) / hd)
               + math.exp(-2.0 * (x1 - k) * (w - k) / hd))


def _propose_coord(stream: RngStream, x0: float, x1: float, dur: float,
                   env: Tuple[float, float, float, float], sd: float,
                   budget: int) -> Tuple[float, float]:
    """Propose one coordinate's midpoint, tilting toward whichever extremum
    event is the rarer given the endpoints. Returns (w, majorant at w); the
    caller accepts with probability P(event | w) / majorant. The majorant
    bounds the single rarer-side event, which in turn bounds the recorded
    joint event, so the thinned draw is exact whether the cell records one
    rare extremum or a rare dip-and-rise conjunction."""
    mlo, mhi, klo, khi = env
    mu = 0.5 * (x0 + x1)
    hd = 0.5 * dur
    p_dip = kernels.exceed_down(x0, x1, dur, mhi)
    p_rise = kernels.exceed_up(x0, x1, dur, klo)
    if p_dip <= p_rise:
        return _tilt_draw(stream, x0, x1, hd, mhi, mu, sd, budget)
    w, den = _tilt_draw(stream, -x0, -x1, hd, -klo, -mu, sd, budget)
    return -w, den


def _split_cell(stream: RngStream, counters, cd: _CellData, target: float,
                cfg: EsSamplerConfig) -> Tuple[_CellData, _CellData]:
    """Bisect a cell in time, conditionally on its envelopes.

    The midpoint value is rejection-sampled from the bridge law against the
    observed extremum event. Coordinates are independent under the bridge
    law and the recorded events are per-coordinate, so the conditional law
    factorises and each coordinate is accepted on its own; rejecting one
    never discards another's accepted draw (a joint accept would pay the
    product of the per-coordinate event probabilities). Plain bridge
    proposals handle the common case; if a run of them is rejected — the
    envelope records a rare event, either one extremum far from both
    endpoints or a dip-and-rise pair whose conjunction is rare even though
    each alone is routine — proposals switch to an exponentially tilted
    mixture aimed at the rarer side, thinned by the exact probability ratio
    so the accepted law is unchanged. Each coordinate's event then splits
    into the two halves' events, sharpened until their interval widths
    reach target/2.
    """
    t0, t1, x0, x1, envs = cd
    dur = t1 - t0
    tm = t0 + 0.5 * dur
    d = len(x0)
    sd = math.sqrt(0.25 * dur)
    cap = cfg.bernoulli_cap
    parts: List[float] = []
    for c in range(d):
        accepted = False
        for attempt in range(cfg.proposal_cap):
            if attempt < _TILT_AFTER:
                wc = 0.5 * (x0[c] + x1[c]) + sd * stream.standard_normal()
                den = 1.0
            else:
                wc, den = _propose_coord(stream, x0[c], x1[c], dur,
                                         envs[c], sd, cap)
            counters.proposals += 1
            counters.bernoullis += 1
            u = stream.uniform() * den
            n = 1
            decided = -1
            lo = 0.0
            hi = 1.0
            while n <= cap:
                counters.bern_depth += 1
                lo, hi = kernels.accept_bounds(x0[c], x1[c], dur, *envs[c],
                                               wc, n)
                if u < lo:
                    decided = 1
                    break
                if u >= hi:
                    decided = 0
                    break
                n += 1
            if decided < 0:
                raise NonConvergenceError(
                    "midpoint acceptance undecided at refinement cap", lo, hi)
            if decided == 1:
                accepted = True
                break
        if not accepted:
            raise NonConvergenceError(
                f"no midpoint accepted in {cfg.proposal_cap} proposals")
        parts.append(wc)
    w = tuple(parts)

    left_envs: List[Tuple[float, float, float, float]] = []
    right_envs: List[Tuple[float, float, float, float]] = []
    for c in range(d):
        mlo, mhi, klo, khi = envs[c]
        gL, kL, mL, vL, gR, kR, mR, vR = kernels.split_coord(
            stream.k, counters, x0[c], x1[c], dur, mlo, mhi, klo, khi,
            w[c], target, cap)
        # children stay nested inside the parent box by construction; the
        # clips below only guard against representation-level drift
        left_envs.append((max(gL, mlo), kL, mL, min(vL, khi)))
        right_envs.append((max(gR, mlo), kR, mR, min(vR, khi)))
    counters.refinements += 1
    left: _CellData = (t0, tm, x0, w, left_envs)
    right: _CellData = (tm, t1, w, x1, right_envs)
    return left, right


def _fit(stream: RngStream, counters, cd: _CellData, eps: float,
         cfg: EsSamplerConfig, out: List[_CellData], force: bool):
    """Recursively bisect cd until every piece's box diameter is at most
    2*eps. With force, split at least once even if cd already fits."""
    t0, t1, x0, x1, envs = cd
    diam = max(e[3] - e[0] for e in envs)
    if not force and diam <= 2.0 * eps:
        out.append(cd)
        return
    left, right = _split_cell(stream, counters, cd, eps, cfg)
    _fit(stream, counters, left, eps, cfg, out, False)
    _fit(stream, counters, right, eps, cfg, out, False)


def _build(cells: List[_CellData], level: int) -> Skeleton:
    n = len(cells)
    d = len(cells[0][2])
    times = np.zeros(n + 1)
    values = np.zeros((n + 1, d))
    env = np.zeros((n, d, 4))
    times[0] = cells[0][0]
    values[0] = cells[0][2]
    for k, (t0, t1, x0, x1, envs) in enumerate(cells):
        times[k + 1] = t1
        values[k + 1] = x1
        for c in range(d):
            env[k, c, :] = envs[c]
    levels = np.full(n, level, dtype=np.int64)
    return Skeleton(times, values, env, levels)


def _cell_data(sk: Skeleton, k: int) -> _CellData:
    t0 = float(sk.times[k])
    t1 = float(sk.times[k + 1])
    x0 = tuple(float(v) for v in sk.values[k])
    x1 = tuple(float(v) for v in sk.values[k + 1])
    envs = [tuple(float(sk.env[k, c, i]) for i in range(4))
            for c in range(sk.d)]
    return t0, t1, x0, x1, envs


def sample_segment(stream: RngStream, x_start, s: float, t: float, level: int,
                   config: Optional[EsSamplerConfig] = None,
                   counters=None) -> Skeleton:
    """Simulate a fresh path segment on [s, t] started at x_start, returning
    a skeleton whose every cell has box diameter at most 2*eps(level).

    The terminal value is drawn first from the exact transition law, the
    interior is filled with bridge midpoints on a dyadic grid sized so cells
    are short enough for the tolerance, then each cell gets extremum
    envelopes; rare oversize cells are refined in place.
    """
    cfg = config or DEFAULT_CONFIG
    cnt = counters if counters is not None else kernels.Counters()
    if not t > s:
        raise ValueError(f"need t > s, got s={s}, t={t}")
    x0 = _as_point(x_start)
    d = len(x0)
    dur = t - s
    eps = cfg.ladder.eps(level)
    target_dur = 0.25 * eps * eps
    depth = 0 if dur <= target_dur else int(math.ceil(math.log2(dur / target_dur)))
    n = 1 << depth
    if n > _MAX_SEGMENT_CELLS:
        raise ValueError(
            f"segment needs {n} cells at level {level}; "
            "use a coarser working level or a shorter span")
    sqrt_dur = math.sqrt(dur)
    x1 = tuple(x0[c] + sqrt_dur * stream.standard_normal() for c in range(d))

    times = np.zeros(n + 1)
    values = np.zeros((n + 1, d))
    env = np.zeros((n, d, 4))
    step0 = math.sqrt(dur / n)
    kernels.fill_segment(stream.k, cnt, times, values, env, s, t,
                         list(x0), list(x1), depth, step0,
                         cfg.layer_grid_ratio, cfg.bernoulli_cap)
    levels = np.full(n, level, dtype=np.int64)
    sk = Skeleton(times, values, env, levels)

    diam = (env[:, :, 3] - env[:, :, 0]).max(axis=1)
    oversize = np.flatnonzero(diam > 2.0 * eps)
    for k in oversize[::-1]:
        out: List[_CellData] = []
        _fit(stream, cnt, _cell_data(sk, int(k)), eps, cfg, out, False)
        sk = sk.replace_cells(int(k), int(k) + 1, _build(out, level))
    return sk


def refine_cell(stream: RngStream, sk: Skeleton, k: int,
                config: Optional[EsSamplerConfig] = None,
                counters=None) -> Skeleton:
    """Replace cell k by a sub-skeleton one level finer, conditionally on
    the cell's endpoints and envelopes. Endpoint values are unchanged and
    the new boxes nest inside the old one.

    The cell is always genuinely split, so repeated refinement makes strict
    progress even when the old box already happens to fit the next level.
    """
    cfg = config or DEFAULT_CONFIG
    cnt = counters if counters is not None else kernels.Counters()
    if not 0 <= k < sk.n_cells:
        raise IndexError(f"cell index {k} out of range for {sk.n_cells} cells")
    if sk.settled[k]:
        raise ValueError(
            f"cell {k} is a settled archive hull and cannot be refined")
    level = int(sk.levels[k]) + 1
    eps = cfg.ladder.eps(level)
    out: List[_CellData] = []
    _fit(stream, cnt, _cell_data(sk, k), eps, cfg, out, True)
    return sk.replace_cells(k, k + 1, _build(out, level))


def sharpen_cell(stream: RngStream, sk: Skeleton, k: int, coord: int,
                 side: int, config: Optional[EsSamplerConfig] = None,
                 counters=None) -> Skeleton:
    """Halve one extremum interval of cell k in place: side 0 bisects the
    minimum's interval for the given coordinate, side 1 the maximum's.

    A single retrospective Bernoulli picks the surviving half, so unlike a
    full bisection this never rejection-samples a midpoint; it shrinks the
    cell's box toward the path without adding cells. The skeleton keeps its
    level tags: sharpened boxes are only ever tighter than the level asks.
    """
    cfg = config or DEFAULT_CONFIG
    cnt = counters if counters is not None else kernels.Counters()
    if not 0 <= k < sk.n_cells:
        raise IndexError(f"cell index {k} out of range for {sk.n_cells} cells")
    if sk.settled[k]:
        raise ValueError(
            f"cell {k} is a settled archive hull and cannot be refined")
    if not 0 <= coord < sk.d:
        raise IndexError(f"coordinate {coord} out of range for d={sk.d}")
    if side not in (0, 1):
        raise ValueError(f"side must be 0 (minimum) or 1 (maximum), got {side}")
    dur = float(sk.times[k + 1] - sk.times[k])
    x0 = float(sk.values[k, coord])
    x1 = float(sk.values[k + 1, coord])
    mlo, mhi, klo, khi = (float(v) for v in sk.env[k, coord])
    new_env = kernels.sharpen_side(stream.k, cnt, x0, x1, dur,
                                   mlo, mhi, klo, khi, side,
                                   cfg.bernoulli_cap)
    cnt.refinements += 1
    env = sk.env.copy()
    env[k, coord, :] = new_env
    return Skeleton(sk.times, sk.values, env, sk.levels, sk.settled,
                    validate=False)


def extend(stream: RngStream, sk: Skeleton, level: int,
           config: Optional[EsSamplerConfig] = None,
           counters=None) -> Skeleton:
    """Append a fresh segment doubling the skeleton's span: a skeleton over
    [s, t] becomes one over [s, 2t - s]."""
    cfg = config or DEFAULT_CONFIG
    seg = sample_segment(stream, sk.end_value, sk.t_end,
                         sk.t_end + (sk.t_end - sk.t_start), level,
                         config=cfg, counters=counters)
    return concat(sk, seg)
