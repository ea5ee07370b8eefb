"""Numeric kernels, pure-Python lane.

Everything on the hot path lives here: buffered random streams, the exact
Brownian-bridge crossing formula, the alternating-series bounds for the
probability that a bridge stays inside an interval, the layered envelope
walks, conditional cell splitting, and the Euler stepping loop.

The compiled lane in ``_kernels.pyx`` mirrors this file statement for
statement. Both lanes must consume random variates in the same order and
perform float operations in the same order, so that a run is bit-identical
whichever lane is active. Keep the two files in sync.
"""

import math

import numpy as np

from .errors import NonConvergenceError

_BLOCK = 4096
_MASK64 = (1 << 64) - 1


class Stream:
    """Buffered uniform/gaussian source keyed by (seed, stream_id).

    Distinct keys give statistically independent streams (counter-based
    generator), and the same key always replays the same sequence. Buffers
    are refilled in fixed-size blocks so both kernel lanes see identical
    variates.
    """

    __slots__ = ("seed", "stream_id", "_gen", "_uni", "_iu", "_gau", "_ig",
                 "n_uniform", "n_gaussian")

    def __init__(self, seed, stream_id):
        self.seed = seed & _MASK64
        self.stream_id = stream_id & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed, self.stream_id]))
        self._uni = self._gen.random(_BLOCK)
        self._iu = 0
        self._gau = self._gen.standard_normal(_BLOCK)
        self._ig = 0
        self.n_uniform = 0
        self.n_gaussian = 0

    def uniform(self):
        i = self._iu
        if i == _BLOCK:
            self._uni = self._gen.random(_BLOCK)
            i = 0
        self._iu = i + 1
        self.n_uniform += 1
        return float(self._uni[i])

    def gaussian(self):
        i = self._ig
        if i == _BLOCK:
            self._gau = self._gen.standard_normal(_BLOCK)
            i = 0
        self._ig = i + 1
        self.n_gaussian += 1
        return float(self._gau[i])


class Counters:
    """Mutable cost tally threaded through every sampling operation."""

    __slots__ = ("cells", "refinements", "bernoullis", "bern_depth",
                 "proposals", "euler_steps")

    def __init__(self):
        self.cells = 0
        self.refinements = 0
        self.bernoullis = 0
        self.bern_depth = 0
        self.proposals = 0
        self.euler_steps = 0

    def merge(self, other):
        self.cells += other.cells
        self.refinements += other.refinements
        self.bernoullis += other.bernoullis
        self.bern_depth += other.bern_depth
        self.proposals += other.proposals
        self.euler_steps += other.euler_steps


def exceed_up(x0, x1, dur, c):
    """P(sup of a Brownian bridge x0 -> x1 over dur reaches level c). Exact."""
    if c <= x0 or c <= x1:
        return 1.0
    return math.exp(-2.0 * (c - x0) * (c - x1) / dur)


def exceed_down(x0, x1, dur, c):
    """P(inf of a Brownian bridge x0 -> x1 over dur reaches down to c). Exact."""
    if c >= x0 or c >= x1:
        return 1.0
    return math.exp(-2.0 * (x0 - c) * (x1 - c) / dur)


def stay_bounds(x0, x1, lo, hi, dur, n):
    """Bounds at truncation depth n >= 1 on the probability that a bridge
    x0 -> x1 over duration dur stays strictly inside (lo, hi).

    The escape probability is an alternating series; truncating after a
    positive (sigma) term overstates it and after a negative (tau) term
    understates it, which yields a monotone sandwich in n.  The terms
    interleave (sigma_j >= tau_j >= sigma_{j+1}) for every parameter
    choice, so the sandwich is valid in all regimes.
    """
    if x0 <= lo or x1 <= lo or x0 >= hi or x1 >= hi:
        return 0.0, 0.0
    width = hi - lo
    esc_lo = 0.0
    esc_hi = 1.0
    j = 1
    while j <= n:
        dj = width * j
        sig = (math.exp(-2.0 * (dj + lo - x0) * (dj + lo - x1) / dur)
               + math.exp(-2.0 * (dj - hi + x0) * (dj - hi + x1) / dur))
        tau = (math.exp(-2.0 * dj * (dj + (x0 - x1)) / dur)
               + math.exp(-2.0 * dj * (dj + (x1 - x0)) / dur))
        esc_hi = esc_lo + sig
        esc_lo = esc_hi - tau
        j += 1
    g_lo = 1.0 - esc_hi
    g_hi = 1.0 - esc_lo
    if g_lo < 0.0:
        g_lo = 0.0
    if g_hi > 1.0:
        g_hi = 1.0
    if g_hi < g_lo:
        g_hi = g_lo
    return g_lo, g_hi


def rect_bounds(x0, x1, dur, g, k, m, v, n):
    """Bounds at depth n on P(min in (g, k], max in [m, v)) for a bridge."""
    if g >= k or m >= v:
        return 0.0, 0.0
    s1l, s1h = stay_bounds(x0, x1, g, v, dur, n)
    s2l, s2h = stay_bounds(x0, x1, k, v, dur, n)
    s3l, s3h = stay_bounds(x0, x1, g, m, dur, n)
    s4l, s4h = stay_bounds(x0, x1, k, m, dur, n)
    lo = s1l - s2h - s3h + s4l
    hi = s1h - s2l - s3l + s4h
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if hi < lo:
        hi = lo
    return lo, hi


def envelope_walk(stream, counters, x0, x1, dur, step0, ratio, cap):
    """Sample one coordinate's extremum events for a fresh bridge cell.

    Returns (mlo, mhi, Mlo, Mhi): the minimum lies in (mlo, mhi] and the
    maximum in [Mlo, Mhi). The upper layer is walked first on a geometric
    grid using the exact crossing formula; the lower layer is then walked
    conditionally on the upper event via retrospective Bernoulli draws.
    """
    lo_b = x0 if x0 < x1 else x1
    hi_b = x0 if x0 > x1 else x1

    c_lo = hi_b
    e_lo = 1.0
    step = step0
    it = 0
    while True:
        it += 1
        if it > cap:
            raise NonConvergenceError("upper envelope walk exceeded its budget")
        c_hi = c_lo + step
        e_hi = exceed_up(x0, x1, dur, c_hi)
        counters.bernoullis += 1
        u = stream.uniform()
        if e_lo <= 0.0:
            break
        if u * e_lo < e_hi:
            c_lo = c_hi
            e_lo = e_hi
            step = step * ratio
        else:
            break
    m_lo_layer = c_lo
    m_hi_layer = c_hi
    p_ev = e_lo - e_hi
    if p_ev <= 0.0:
        raise NonConvergenceError(
            "upper layer event has zero measure at double precision")

    l_hi = lo_b
    step = step0
    first = True
    it = 0
    while True:
        it += 1
        if it > cap:
            raise NonConvergenceError("lower envelope walk exceeded its budget")
        l_lo = l_hi - step
        counters.bernoullis += 1
        u = stream.uniform()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            al, ah = stay_bounds(x0, x1, l_lo, m_hi_layer, dur, n)
            bl, bh = stay_bounds(x0, x1, l_lo, m_lo_layer, dur, n)
            num_lo = p_ev - ah + bl
            num_hi = p_ev - al + bh
            if num_lo < 0.0:
                num_lo = 0.0
            if num_hi > p_ev:
                num_hi = p_ev
            if first:
                den_lo = p_ev
                den_hi = p_ev
            else:
                cl, ch = stay_bounds(x0, x1, l_hi, m_hi_layer, dur, n)
                dl, dh = stay_bounds(x0, x1, l_hi, m_lo_layer, dur, n)
                den_lo = p_ev - ch + dl
                den_hi = p_ev - cl + dh
                if den_lo < 0.0:
                    den_lo = 0.0
                if den_hi > p_ev:
                    den_hi = p_ev
            r_lo = 0.0 if den_hi <= 0.0 else num_lo / den_hi
            r_hi = 1.0 if den_lo <= 0.0 else num_hi / den_lo
            if r_hi > 1.0:
                r_hi = 1.0
            if r_lo > r_hi:
                r_lo = r_hi
            if u < r_lo:
                decided = 1
                break
            if u >= r_hi:
                decided = 0
                break
            n += 1
        if decided < 0:
            raise NonConvergenceError(
                "lower envelope step undecided at refinement cap", r_lo, r_hi)
        if decided == 1:
            l_hi = l_lo
            step = step * ratio
            first = False
        else:
            break
    return l_lo, l_hi, m_lo_layer, m_hi_layer


def fill_segment(stream, counters, times, values, env,
                 t0, t1, x0, x1, depth, step0, ratio, cap):
    """Populate a fresh dyadic segment in place.

    times: (n+1,), values: (n+1, d), env: (n, d, 4) with n = 2**depth.
    Endpoint values x0/x1 are fixed by the caller; interior values are bridge
    midpoints filled coarse-to-fine, then each cell gets per-coordinate
    extremum envelopes.
    """
    n = 1 << depth
    d = len(x0)
    cellw = (t1 - t0) / n
    for i in range(n + 1):
        times[i] = t0 + i * cellw
    times[n] = t1
    for c in range(d):
        values[0, c] = x0[c]
        values[n, c] = x1[c]
    stride = n
    while stride > 1:
        half = stride >> 1
        i = 0
        while i < n:
            lo = i
            hi = i + stride
            mid = i + half
            dt_l = times[mid] - times[lo]
            dt_r = times[hi] - times[mid]
            dt = times[hi] - times[lo]
            for c in range(d):
                mean = values[lo, c] + (dt_l / dt) * (values[hi, c] - values[lo, c])
                sd = math.sqrt(dt_l * dt_r / dt)
                values[mid, c] = mean + sd * stream.gaussian()
            i += stride
        stride = half
    for k in range(n):
        dur = times[k + 1] - times[k]
        for c in range(d):
            mlo, mhi, klo, khi = envelope_walk(
                stream, counters, values[k, c], values[k + 1, c],
                dur, step0, ratio, cap)
            env[k, c, 0] = mlo
            env[k, c, 1] = mhi
            env[k, c, 2] = klo
            env[k, c, 3] = khi
        counters.cells += 1


def accept_bounds(x0, x1, dur, mlo, mhi, Mlo, Mhi, w, n):
    """Bounds at depth n on P(cell extremum event | midpoint value w).

    The event is {min in (mlo, mhi], max in [Mlo, Mhi)} for the whole cell;
    conditioning on the midpoint splits the bridge into two independent
    halves, and the event probability expands by inclusion-exclusion into
    products of per-half interval-stay probabilities. Trivial event sides
    (mhi at or above an endpoint, Mlo at or below one) drop out on their own
    because the corresponding stay probability is exactly zero.
    """
    hd = 0.5 * dur
    a1l, a1h = stay_bounds(x0, w, mlo, Mhi, hd, n)
    b1l, b1h = stay_bounds(w, x1, mlo, Mhi, hd, n)
    a2l, a2h = stay_bounds(x0, w, mhi, Mhi, hd, n)
    b2l, b2h = stay_bounds(w, x1, mhi, Mhi, hd, n)
    a3l, a3h = stay_bounds(x0, w, mlo, Mlo, hd, n)
    b3l, b3h = stay_bounds(w, x1, mlo, Mlo, hd, n)
    a4l, a4h = stay_bounds(x0, w, mhi, Mlo, hd, n)
    b4l, b4h = stay_bounds(w, x1, mhi, Mlo, hd, n)
    lo = a1l * b1l - a2h * b2h - a3h * b3h + a4l * b4l
    hi = a1h * b1h - a2l * b2l - a3l * b3l + a4h * b4h
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if hi < lo:
        hi = lo
    return lo, hi


def _state_prob(x0, w, x1, hd,
                gL, kL, mL, vL, gR, kR, mR, vR,
                pend_min, mhi, pend_max, Mlo, n):
    """Bounds on the probability of a half-split event state.

    The state fixes each half's min interval (g, k] and max interval [m, v),
    with up to two pending disjunctive constraints inherited from the parent
    event: pend_min requires min(min_L, min_R) <= mhi and pend_max requires
    max(max_L, max_R) >= Mlo. Inclusion-exclusion over constraint violations
    (a violation intersects both halves' intervals) gives signed sums of
    per-half rectangle probabilities.
    """
    lo = 0.0
    hi = 0.0
    vmin = 0
    while vmin <= (1 if pend_min else 0):
        vmax = 0
        while vmax <= (1 if pend_max else 0):
            cgL = gL
            cgR = gR
            cvL = vL
            cvR = vR
            if vmin:
                if cgL < mhi:
                    cgL = mhi
                if cgR < mhi:
                    cgR = mhi
            if vmax:
                if cvL > Mlo:
                    cvL = Mlo
                if cvR > Mlo:
                    cvR = Mlo
            pl, ph = rect_bounds(x0, w, hd, cgL, kL, mL, cvL, n)
            ql, qh = rect_bounds(w, x1, hd, cgR, kR, mR, cvR, n)
            if (vmin + vmax) % 2 == 0:
                lo += pl * ql
                hi += ph * qh
            else:
                lo -= ph * qh
                hi -= pl * ql
            vmax += 1
        vmin += 1
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if hi < lo:
        hi = lo
    return lo, hi


def _rect_ratio_bernoulli(stream, counters, x0, x1, hd,
                          ng, nk, nm, nv, dg, dk, dm, dv, cap):
    """Retrospective Bernoulli whose probability is the ratio of two nested
    rectangle events for one half-bridge. Consumes exactly one uniform."""
    counters.bernoullis += 1
    u = stream.uniform()
    n = 1
    r_lo = 0.0
    r_hi = 1.0
    while n <= cap:
        counters.bern_depth += 1
        nl, nh = rect_bounds(x0, x1, hd, ng, nk, nm, nv, n)
        dl, dh = rect_bounds(x0, x1, hd, dg, dk, dm, dv, n)
        r_lo = 0.0 if dh <= 0.0 else nl / dh
        r_hi = 1.0 if dl <= 0.0 else nh / dl
        if r_hi > 1.0:
            r_hi = 1.0
        if r_lo > r_hi:
            r_lo = r_hi
        if u < r_lo:
            return 1
        if u >= r_hi:
            return 0
        n += 1
    raise NonConvergenceError(
        "interval sharpening undecided at refinement cap", r_lo, r_hi)


def split_coord(stream, counters, x0, x1, dur, mlo, mhi, Mlo, Mhi,
                w, target, cap):
    """Sample both halves' extremum events after the midpoint value w of a
    cell was accepted.

    Resolves the parent event's disjunctive inner constraints first (so the
    two halves become conditionally independent), then bisects each half's
    min/max layer intervals until the half's box diameter reaches 2*target
    or both intervals are narrower than target/2.

    Returns (gL, kL, mL, vL, gR, kR, mR, vR).
    """
    hd = 0.5 * dur
    lobL = x0 if x0 < w else w
    hibL = x0 if x0 > w else w
    lobR = w if w < x1 else x1
    hibR = w if w > x1 else x1
    gL = mlo
    kL = lobL
    mL = hibL
    vL = Mhi
    gR = mlo
    kR = lobR
    mR = hibR
    vR = Mhi
    pend_min = 1 if (mhi < lobL and mhi < lobR) else 0
    pend_max = 1 if (Mlo > hibL and Mlo > hibR) else 0

    if pend_min:
        counters.bernoullis += 1
        u = stream.uniform()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            nl, nh = _state_prob(x0, w, x1, hd, gL, mhi, mL, vL, gR, kR, mR, vR,
                                 0, mhi, pend_max, Mlo, n)
            dl, dh = _state_prob(x0, w, x1, hd, gL, kL, mL, vL, gR, kR, mR, vR,
                                 1, mhi, pend_max, Mlo, n)
            r_lo = 0.0 if dh <= 0.0 else nl / dh
            r_hi = 1.0 if dl <= 0.0 else nh / dl
            if r_hi > 1.0:
                r_hi = 1.0
            if r_lo > r_hi:
                r_lo = r_hi
            if u < r_lo:
                decided = 1
                break
            if u >= r_hi:
                decided = 0
                break
            n += 1
        if decided < 0:
            raise NonConvergenceError(
                "min-side disjunction undecided at refinement cap", r_lo, r_hi)
        if decided == 1:
            kL = mhi
        else:
            gL = mhi
            kR = mhi
        pend_min = 0

    if pend_max:
        counters.bernoullis += 1
        u = stream.uniform()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            nl, nh = _state_prob(x0, w, x1, hd, gL, kL, Mlo, vL, gR, kR, mR, vR,
                                 0, mhi, 0, Mlo, n)
            dl, dh = _state_prob(x0, w, x1, hd, gL, kL, mL, vL, gR, kR, mR, vR,
                                 0, mhi, 1, Mlo, n)
            r_lo = 0.0 if dh <= 0.0 else nl / dh
            r_hi = 1.0 if dl <= 0.0 else nh / dl
            if r_hi > 1.0:
                r_hi = 1.0
            if r_lo > r_hi:
                r_lo = r_hi
            if u < r_lo:
                decided = 1
                break
            if u >= r_hi:
                decided = 0
                break
            n += 1
        if decided < 0:
            raise NonConvergenceError(
                "max-side disjunction undecided at refinement cap", r_lo, r_hi)
        if decided == 1:
            mL = Mlo
        else:
            vL = Mlo
            mR = Mlo
        pend_max = 0

    half_t = 0.5 * target
    # left half
    while vL - gL > 2.0 * target:
        wmin = kL - gL
        wmax = vL - mL
        if wmin <= half_t and wmax <= half_t:
            break
        if wmin >= wmax:
            q = 0.5 * (gL + kL)
            b = _rect_ratio_bernoulli(stream, counters, x0, w, hd,
                                      q, kL, mL, vL, gL, kL, mL, vL, cap)
            if b:
                gL = q
            else:
                kL = q
        else:
            q = 0.5 * (mL + vL)
            b = _rect_ratio_bernoulli(stream, counters, x0, w, hd,
                                      gL, kL, mL, q, gL, kL, mL, vL, cap)
            if b:
                vL = q
            else:
                mL = q
    # right half
    while vR - gR > 2.0 * target:
        wmin = kR - gR
        wmax = vR - mR
        if wmin <= half_t and wmax <= half_t:
            break
        if wmin >= wmax:
            q = 0.5 * (gR + kR)
            b = _rect_ratio_bernoulli(stream, counters, w, x1, hd,
                                      q, kR, mR, vR, gR, kR, mR, vR, cap)
            if b:
                gR = q
            else:
                kR = q
        else:
            q = 0.5 * (mR + vR)
            b = _rect_ratio_bernoulli(stream, counters, w, x1, hd,
                                      gR, kR, mR, q, gR, kR, mR, vR, cap)
            if b:
                vR = q
            else:
                mR = q
    return gL, kL, mL, vL, gR, kR, mR, vR


def sharpen_side(stream, counters, x0, x1, dur, mlo, mhi, Mlo, Mhi,
                 side, cap):
    """Bisect one extremum interval of a whole cell conditionally on its
    event: side 0 halves the minimum's interval (mlo, mhi], side 1 the
    maximum's [Mlo, Mhi). One retrospective Bernoulli, one uniform."""
    if side == 0:
        q = 0.5 * (mlo + mhi)
        if not mlo < q < mhi:
            raise NonConvergenceError(
                "minimum interval too narrow to bisect at double precision")
        b = _rect_ratio_bernoulli(stream, counters, x0, x1, dur,
                                  q, mhi, Mlo, Mhi, mlo, mhi, Mlo, Mhi, cap)
        if b:
            return q, mhi, Mlo, Mhi
        return mlo, q, Mlo, Mhi
    q = 0.5 * (Mlo + Mhi)
    if not Mlo < q < Mhi:
        raise NonConvergenceError(
            "maximum interval too narrow to bisect at double precision")
    b = _rect_ratio_bernoulli(stream, counters, x0, x1, dur,
                              mlo, mhi, Mlo, q, mlo, mhi, Mlo, Mhi, cap)
    if b:
        return mlo, mhi, Mlo, q
    return mlo, mhi, q, Mhi


def euler_run(stream, counters, x, za, zb, h, kind, max_steps):
    """Step a driftless unit-volatility walk of dimension len(x) until the
    reaction coordinate, monitored only at grid times, leaves (za, zb).

    kind: 0 = first coordinate, 1 = coordinate minimum, 2 = |x0 - x1|.
    x is modified in place. Returns (verdict, steps) with verdict -1 when the
    lower barrier was seen first and +1 for the upper one.
    """
    d = len(x)
    sh = math.sqrt(h)
    steps = 0
    while steps < max_steps:
        for c in range(d):
            x[c] = x[c] + sh * stream.gaussian()
        steps += 1
        if kind == 0:
            xi = x[0]
        elif kind == 1:
            xi = x[0]
            for c in range(1, d):
                if x[c] < xi:
                    xi = x[c]
        else:
            xi = x[0] - x[1]
            if xi < 0.0:
                xi = -xi
        if xi <= za:
            counters.euler_steps += steps
            return -1, steps
        if xi >= zb:
            counters.euler_steps += steps
            return 1, steps
    counters.euler_steps += steps
    raise NonConvergenceError("euler trajectory exceeded the step budget")
