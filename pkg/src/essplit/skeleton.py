"""Path skeletons: tolerance ladders, cells with extremum envelopes, and
the algebra for composing, evaluating, and serialising skeletons.

A skeleton summarises one continuous trajectory over a time span as a
contiguous sequence of cells. Each cell stores its exact endpoint values
and, per coordinate, four envelope bounds (mlo, mhi, klo, khi): the path's
minimum over the cell lies in (mlo, mhi] and its maximum in [klo, khi).
The outer box [mlo, khi] therefore contains the path, while mhi and klo
bound the path from the inside (there is a point at or below mhi and one
at or above klo). Cells are stored column-wise in read-only arrays so that
classification against barriers can run vectorised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from .errors import IncompatibleSkeletonError

__all__ = [
    "ToleranceLadder",
    "Cell",
    "Skeleton",
    "box",
    "compatible",
    "concat",
    "evaluate",
    "skeleton_to_text",
    "skeleton_from_text",
]


@dataclass(frozen=True)
class ToleranceLadder:
    """Geometric tolerance schedule eps(level) = eps1 * rho**(level - 1).

    Levels below 1 are meaningful and give coarser tolerances; samplers use
    them so that cell sizes track the physical scale of the problem.
    """

    eps1: float
    rho: float

    def __post_init__(self):
        if not self.eps1 > 0.0:
            raise ValueError(f"eps1 must be positive, got {self.eps1}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")

    def eps(self, level: int) -> float:
        return self.eps1 * self.rho ** (level - 1)

    def level_for(self, tol: float) -> int:
        """Smallest level whose tolerance is at most tol."""
        if not tol > 0.0:
            raise ValueError(f"tolerance must be positive, got {tol}")
        guess = 1 + math.ceil(math.log(tol / self.eps1) / math.log(self.rho))
        while self.eps(guess) > tol:
            guess += 1
        while self.eps(guess - 1) <= tol:
            guess -= 1
        return guess


class Cell:
    """Read-only view of one skeleton cell."""

    __slots__ = ("_sk", "_k")

    def __init__(self, sk: "Skeleton", k: int):
        self._sk = sk
        self._k = k

    @property
    def t_start(self) -> float:
        return float(self._sk.times[self._k])

    @property
    def t_end(self) -> float:
        return float(self._sk.times[self._k + 1])

    @property
    def x_start(self) -> np.ndarray:
        return self._sk.values[self._k]

    @property
    def x_end(self) -> np.ndarray:
        return self._sk.values[self._k + 1]

    @property
    def lower(self) -> np.ndarray:
        return self._sk.env[self._k, :, 0]

    @property
    def inner_lower(self) -> np.ndarray:
        return self._sk.env[self._k, :, 1]

    @property
    def inner_upper(self) -> np.ndarray:
        return self._sk.env[self._k, :, 2]

    @property
    def upper(self) -> np.ndarray:
        return self._sk.env[self._k, :, 3]

    @property
    def level(self) -> int:
        return int(self._sk.levels[self._k])

    @property
    def settled(self) -> bool:
        return bool(self._sk.settled[self._k])

    def diameter(self) -> float:
        """Largest per-coordinate box width."""
        return float(np.max(self.upper - self.lower))

    def __repr__(self) -> str:
        return (f"Cell([{self.t_start}, {self.t_end}], level={self.level}, "
                f"diam={self.diameter():.3g})")


class Skeleton:
    """Immutable contiguous sequence of cells over one time span.

    Columns: times (n+1,), values (n+1, d), env (n, d, 4) ordered
    (mlo, mhi, klo, khi), levels (n,), settled (n,). The empty skeleton
    (zero cells) acts as the identity for concatenation.

    The constructor adopts the arrays it is given and marks them read-only;
    pass a copy if the caller still needs write access.
    """

    __slots__ = ("times", "values", "env", "levels", "settled")

    def __init__(self, times, values, env, levels, settled=None, validate=True):
        times = np.ascontiguousarray(times, dtype=np.float64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        env = np.ascontiguousarray(env, dtype=np.float64)
        levels = np.ascontiguousarray(levels, dtype=np.int64)
        n = len(levels)
        if settled is None:
            settled = np.zeros(n, dtype=bool)
        else:
            settled = np.ascontiguousarray(settled, dtype=bool)
        if validate:
            _validate_columns(times, values, env, levels, settled)
        for a in (times, values, env, levels, settled):
            a.setflags(write=False)
        self.times = times
        self.values = values
        self.env = env
        self.levels = levels
        self.settled = settled

    @classmethod
    def empty(cls, d: int) -> "Skeleton":
        return cls(np.zeros(0), np.zeros((0, d)), np.zeros((0, d, 4)),
                   np.zeros(0, dtype=np.int64), validate=False)

    @property
    def n_cells(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return self.n_cells

    @property
    def is_empty(self) -> bool:
        return self.n_cells == 0

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def t_start(self) -> float:
        self._require_nonempty()
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        self._require_nonempty()
        return float(self.times[-1])

    @property
    def start_value(self) -> np.ndarray:
        self._require_nonempty()
        return self.values[0]

    @property
    def end_value(self) -> np.ndarray:
        self._require_nonempty()
        return self.values[-1]

    def cell(self, k: int) -> Cell:
        if not 0 <= k < self.n_cells:
            raise IndexError(f"cell index {k} out of range for {self.n_cells} cells")
        return Cell(self, k)

    def __iter__(self) -> Iterator[Cell]:
        for k in range(self.n_cells):
            yield Cell(self, k)

    def subskeleton(self, i: int, j: int) -> "Skeleton":
        """Cells i..j-1 as a standalone skeleton."""
        if not (0 <= i < j <= self.n_cells):
            raise IndexError(f"bad cell range [{i}, {j})")
        return Skeleton(self.times[i:j + 1], self.values[i:j + 1],
                        self.env[i:j], self.levels[i:j], self.settled[i:j],
                        validate=False)

    def replace_cells(self, i: int, j: int, sub: "Skeleton") -> "Skeleton":
        """New skeleton with cells i..j-1 replaced by sub (same time span)."""
        if not (0 <= i < j <= self.n_cells):
            raise IndexError(f"bad cell range [{i}, {j})")
        if sub.is_empty:
            raise ValueError("replacement must contain at least one cell")
        if sub.times[0] != self.times[i] or sub.times[-1] != self.times[j]:
            raise ValueError("replacement span does not match the removed cells")
        times = np.concatenate([self.times[:i], sub.times, self.times[j + 1:]])
        values = np.concatenate([self.values[:i], sub.values, self.values[j + 1:]])
        env = np.concatenate([self.env[:i], sub.env, self.env[j:]])
        levels = np.concatenate([self.levels[:i], sub.levels, self.levels[j:]])
        settled = np.concatenate([self.settled[:i], sub.settled, self.settled[j:]])
        return Skeleton(times, values, env, levels, settled, validate=False)

    def settle_hull(self) -> "Skeleton":
        """Collapse the whole skeleton into one settled hull cell.

        The hull keeps exact span endpoints and values; its box is the union
        of the cell boxes, and its inner bounds are the tightest implied by
        the member cells. Settled cells cannot be refined again.
        """
        self._require_nonempty()
        d = self.d
        env = np.empty((1, d, 4))
        env[0, :, 0] = self.env[:, :, 0].min(axis=0)
        env[0, :, 1] = self.env[:, :, 1].min(axis=0)
        env[0, :, 2] = self.env[:, :, 2].max(axis=0)
        env[0, :, 3] = self.env[:, :, 3].max(axis=0)
        times = np.array([self.times[0], self.times[-1]])
        values = np.stack([self.values[0], self.values[-1]])
        levels = np.array([self.levels.min()], dtype=np.int64)
        settled = np.ones(1, dtype=bool)
        return Skeleton(times, values, env, levels, settled, validate=False)

    def _require_nonempty(self):
        if self.is_empty:
            raise ValueError("operation undefined on an empty skeleton")

    def __repr__(self) -> str:
        if self.is_empty:
            return "Skeleton(empty)"
        return (f"Skeleton(cells={self.n_cells}, d={self.d}, "
                f"span=[{self.t_start}, {self.t_end}])")


def _validate_columns(times, values, env, levels, settled):
    n = len(levels)
    if times.shape != (n + 1,):
        raise ValueError("times must have one more entry than there are cells")
    d = values.shape[1] if values.ndim == 2 else -1
    if values.shape != (n + 1, d) or env.shape != (n, d, 4) or settled.shape != (n,):
        raise ValueError("column shapes are inconsistent")
    if n == 0:
        return
    if not np.all(np.diff(times) > 0.0):
        raise ValueError("cell times must be strictly increasing")
    mlo = env[:, :, 0]
    mhi = env[:, :, 1]
    klo = env[:, :, 2]
    khi = env[:, :, 3]
    if not (np.all(mlo <= mhi) and np.all(klo <= khi)
            and np.all(mlo <= klo) and np.all(mhi <= khi)):
        raise ValueError("envelope bounds out of order")
    left = values[:-1]
    right = values[1:]
    if not (np.all(mlo <= left) and np.all(left <= khi)
            and np.all(mlo <= right) and np.all(right <= khi)):
        raise ValueError("cell box does not contain its endpoint values")


def box(cell: Cell) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box of a cell as (lower, upper) arrays."""
    return np.array(cell.lower, dtype=float), np.array(cell.upper, dtype=float)


def compatible(a: Skeleton, b: Skeleton) -> int:
    """1 when b can follow a: adjacent spans and intersecting junction boxes.

    Empty skeletons are compatible with everything. Non-adjacent spans are a
    usage error, not incompatibility.
    """
    if a.is_empty or b.is_empty:
        return 1
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.t_end != b.t_start:
        raise ValueError(
            f"spans are not adjacent: first ends at {a.t_end}, "
            f"second starts at {b.t_start}")
    lo_a = a.env[-1, :, 0]
    hi_a = a.env[-1, :, 3]
    lo_b = b.env[0, :, 0]
    hi_b = b.env[0, :, 3]
    ok = np.all(np.maximum(lo_a, lo_b) <= np.minimum(hi_a, hi_b))
    return 1 if ok else 0


def concat(a: Skeleton, b: Skeleton) -> Skeleton:
    """Join two skeletons over adjacent spans. Empty acts as identity."""
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    if compatible(a, b) != 1:
        raise IncompatibleSkeletonError(
            "junction boxes do not intersect; skeletons describe different paths")
    times = np.concatenate([a.times, b.times[1:]])
    values = np.concatenate([a.values, b.values[1:]])
    env = np.concatenate([a.env, b.env])
    levels = np.concatenate([a.levels, b.levels])
    settled = np.concatenate([a.settled, b.settled])
    return Skeleton(times, values, env, levels, settled, validate=False)


def evaluate(sk: Skeleton, u: float) -> Union[float, np.ndarray]:
    """Piecewise-constant read-out: the box midpoint of the cell whose
    half-open interval [t_k, t_{k+1}) contains u; at the right end of the
    span, the last cell's midpoint. Scalar for one-dimensional skeletons.
    """
    sk._require_nonempty()
    if not sk.times[0] <= u <= sk.times[-1]:
        raise ValueError(
            f"time {u} outside skeleton span [{sk.times[0]}, {sk.times[-1]}]")
    k = int(np.searchsorted(sk.times, u, side="right")) - 1
    if k > sk.n_cells - 1:
        k = sk.n_cells - 1
    mid = 0.5 * (sk.env[k, :, 0] + sk.env[k, :, 3])
    if sk.d == 1:
        return float(mid[0])
    return mid.copy()


def skeleton_to_text(sk: Skeleton) -> str:
    """Line-oriented serialisation: a header line, then one cell per line."""
    lines = [f"skeleton cells={sk.n_cells} d={sk.d}"]
    for k in range(sk.n_cells):
        parts: List[str] = [repr(float(sk.times[k])), repr(float(sk.times[k + 1])),
                            str(int(sk.levels[k])), str(int(sk.settled[k]))]
        parts.extend(repr(float(v)) for v in sk.values[k])
        parts.extend(repr(float(v)) for v in sk.values[k + 1])
        for c in range(sk.d):
            parts.extend(repr(float(sk.env[k, c, i])) for i in range(4))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def skeleton_from_text(text: str) -> Skeleton:
    """Inverse of skeleton_to_text; the roundtrip is exact."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("skeleton "):
        raise ValueError("missing skeleton header line")
    header = dict(fld.split("=") for fld in lines[0].split()[1:])
    n = int(header["cells"])
    d = int(header["d"])
    if len(lines) != n + 1:
        raise ValueError(f"expected {n} cell lines, found {len(lines) - 1}")
    if n == 0:
        return Skeleton.empty(d)
    times = np.zeros(n + 1)
    values = np.zeros((n + 1, d))
    env = np.zeros((n, d, 4))
    levels = np.zeros(n, dtype=np.int64)
    settled = np.zeros(n, dtype=bool)
    for k, line in enumerate(lines[1:]):
        f = line.split()
        want = 4 + 2 * d + 4 * d
        if len(f) != want:
            raise ValueError(f"cell record {k} has {len(f)} fields, expected {want}")
        t0, t1 = float(f[0]), float(f[1])
        if k == 0:
            times[0] = t0
        elif times[k] != t0:
            raise ValueError(f"cell record {k} is not contiguous with its predecessor")
        times[k + 1] = t1
        levels[k] = int(f[2])
        settled[k] = bool(int(f[3]))
        x0 = [float(v) for v in f[4:4 + d]]
        x1 = [float(v) for v in f[4 + d:4 + 2 * d]]
        if k == 0:
            values[0] = x0
        elif not np.array_equal(values[k], x0):
            raise ValueError(f"cell record {k} start value mismatch")
        values[k + 1] = x1
        base = 4 + 2 * d
        for c in range(d):
            env[k, c, :] = [float(v) for v in f[base + 4 * c: base + 4 * c + 4]]
    return Skeleton(times, values, env, levels, settled)
