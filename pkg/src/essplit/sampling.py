"""Random primitives: keyed streams, exact bridge draws, and Bernoulli
sampling from probabilities that are only available as convergent bounds.

All randomness in the package flows through RngStream so that any quantity
is reproducible from (seed, stream_id) alone, independent of scheduling.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

from . import kernels
from .errors import NonConvergenceError

__all__ = [
    "RngStream",
    "ProbabilityBounds",
    "gaussian",
    "bridge_midpoint",
    "retrospective_bernoulli",
    "bridge_exceedance_bounds",
    "interval_stay_bounds",
    "derive_stream_id",
]

DEFAULT_BERNOULLI_CAP = 10_000

_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    # splitmix64 finaliser; full-period bijection on 64-bit words
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_stream_id(*parts: int) -> int:
    """Collapse an integer tuple into a 64-bit stream id, injectively enough
    that distinct derivation paths never collide in practice."""
    acc = 0x243F6A8885A308D3
    for p in parts:
        acc = _mix64(acc ^ (p & _MASK64))
    return acc


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Streams with distinct keys are independent; the same key replays the
    same variate sequence regardless of what other streams were consumed.
    """

    __slots__ = ("k",)

    def __init__(self, seed: int, stream_id: int = 0):
        self.k = kernels.Stream(seed, stream_id)

    @property
    def seed(self) -> int:
        return self.k.seed

    @property
    def stream_id(self) -> int:
        return self.k.stream_id

    @property
    def n_uniform(self) -> int:
        return self.k.n_uniform

    @property
    def n_gaussian(self) -> int:
        return self.k.n_gaussian

    def uniform(self) -> float:
        """Next uniform variate on [0, 1)."""
        return self.k.uniform()

    def standard_normal(self) -> float:
        """Next standard normal variate."""
        return self.k.gaussian()

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


class ProbabilityBounds:
    """A probability known only through bounds refinable to any depth.

    lower_at(n) is nondecreasing in n, upper_at(n) nonincreasing, and the
    two converge to the target probability as n grows.
    """

    __slots__ = ("_lo", "_hi")

    def __init__(self, lower: Callable[[int], float], upper: Callable[[int], float]):
        self._lo = lower
        self._hi = upper

    def lower_at(self, n: int) -> float:
        return self._lo(n)

    def upper_at(self, n: int) -> float:
        return self._hi(n)

    @classmethod
    def constant(cls, p: float) -> "ProbabilityBounds":
        """Bounds that are already tight at depth 1."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
        return cls(lambda n: p, lambda n: p)


def gaussian(stream: RngStream, mean: float, sd: float) -> float:
    """One draw from Normal(mean, sd**2). sd = 0 returns mean exactly."""
    if sd < 0.0:
        raise ValueError(f"standard deviation must be nonnegative, got {sd}")
    if sd == 0.0:
        return float(mean)
    return float(mean) + sd * stream.standard_normal()


ArrayLike = Union[float, Sequence[float], np.ndarray]


def bridge_midpoint(stream: RngStream, x_s: ArrayLike, x_t: ArrayLike,
                    s: float, u: float, t: float) -> Union[float, np.ndarray]:
    """Exact draw of a Brownian path at time u given values at s and t.

    Coordinates are independent: vector endpoints consume one normal per
    coordinate, in coordinate order.
    """
    if not (s < u < t):
        raise ValueError(f"interior time required: s={s}, u={u}, t={t}")
    frac = (u - s) / (t - s)
    sd = math.sqrt((u - s) * (t - u) / (t - s))
    if np.isscalar(x_s) and np.isscalar(x_t):
        mean = float(x_s) + frac * (float(x_t) - float(x_s))
        return mean + sd * stream.standard_normal()
    a = np.asarray(x_s, dtype=float)
    b = np.asarray(x_t, dtype=float)
    if a.shape != b.shape:
        raise ValueError("endpoint shapes differ")
    out = np.empty_like(a)
    flat_a = a.ravel()
    flat_b = b.ravel()
    flat_o = out.ravel()
    for i in range(flat_a.size):
        mean = flat_a[i] + frac * (flat_b[i] - flat_a[i])
        flat_o[i] = mean + sd * stream.standard_normal()
    return out


def retrospective_bernoulli(stream: RngStream, p_bounds: ProbabilityBounds,
                            cap: int = DEFAULT_BERNOULLI_CAP) -> int:
    """Sample Bernoulli(p) from bounds on p, consuming exactly one uniform.

    Refines depth until the uniform separates from the bracket. If the
    bracket still contains it at depth cap, raises with the last bounds
    attached (attributes .lower and .upper).
    """
    u = stream.uniform()
    lo = 0.0
    hi = 1.0
    for n in range(1, cap + 1):
        lo = p_bounds.lower_at(n)
        hi = p_bounds.upper_at(n)
        if u < lo:
            return 1
        if u >= hi:
            return 0
    raise NonConvergenceError(
        f"bernoulli undecided after {cap} refinements", lo, hi)


def bridge_exceedance_bounds(x_s: float, x_t: float, s: float, t: float,
                             c: float) -> ProbabilityBounds:
    """Bounds on P(sup over [s, t] of a bridge x_s -> x_t reaches c).

    The probability is available in closed form, so the bounds are tight at
    every depth: exp(-2 (c - x_s)(c - x_t) / (t - s)) above both endpoints,
    and exactly 1 when c is at or below either endpoint.
    """
    if not t > s:
        raise ValueError(f"need t > s, got s={s}, t={t}")
    p = kernels.exceed_up(float(x_s), float(x_t), t - s, float(c))
    return ProbabilityBounds.constant(p)


def interval_stay_bounds(x_s: float, x_t: float, s: float, t: float,
                         lo: float, hi: float) -> ProbabilityBounds:
    """Bounds on P(bridge x_s -> x_t stays inside (lo, hi) on [s, t]),
    refining through the alternating series sandwich."""
    if not t > s:
        raise ValueError(f"need t > s, got s={s}, t={t}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    dur = t - s
    x0 = float(x_s)
    x1 = float(x_t)

    # The raw sandwich is monotone in exact arithmetic; a running extremum
    # absorbs the 1-ulp wobble that can appear once both sides converge.
    memo: dict[int, tuple[float, float]] = {0: (0.0, 1.0)}

    def _at(n: int) -> tuple[float, float]:
        top = max(memo)
        while top < n:
            top += 1
            raw_lo, raw_hi = kernels.stay_bounds(x0, x1, lo, hi, dur, top)
            prev_lo, prev_hi = memo[top - 1]
            memo[top] = (max(prev_lo, raw_lo), min(prev_hi, raw_hi))
        return memo[n]

    def lower(n: int) -> float:
        return _at(n)[0]

    def upper(n: int) -> float:
        return _at(n)[1]

    return ProbabilityBounds(lower, upper)
