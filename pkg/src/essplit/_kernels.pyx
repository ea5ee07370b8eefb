# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Numeric kernels, compiled lane.

This module mirrors ``_kernels_py.py`` statement for statement. Both lanes
must consume random variates in the same order and perform float operations
in the same order, so that a run is bit-identical whichever lane is active.
The extension is built with floating-point contraction disabled for exactly
that reason. Keep the two files in sync.
"""

import numpy as np

from libc.math cimport exp, sqrt

from .errors import NonConvergenceError

DEF BLOCK = 4096

_MASK64 = (1 << 64) - 1


cdef class Stream:
    """Buffered uniform/gaussian source keyed by (seed, stream_id).

    Distinct keys give statistically independent streams (counter-based
    generator), and the same key always replays the same sequence. Buffers
    are refilled in fixed-size blocks so both kernel lanes see identical
    variates.
    """

    cdef readonly object seed
    cdef readonly object stream_id
    cdef object _gen
    cdef object _uni_arr
    cdef object _gau_arr
    cdef double[::1] _uni
    cdef double[::1] _gau
    cdef Py_ssize_t _iu
    cdef Py_ssize_t _ig
    cdef readonly long long n_uniform
    cdef readonly long long n_gaussian

    def __init__(self, seed, stream_id):
        self.seed = seed & _MASK64
        self.stream_id = stream_id & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed, self.stream_id]))
        self._uni_arr = self._gen.random(BLOCK)
        self._uni = self._uni_arr
        self._iu = 0
        self._gau_arr = self._gen.standard_normal(BLOCK)
        self._gau = self._gau_arr
        self._ig = 0
        self.n_uniform = 0
        self.n_gaussian = 0

    cdef double _uniform_c(self):
        cdef Py_ssize_t i = self._iu
        if i == BLOCK:
            self._uni_arr = self._gen.random(BLOCK)
            self._uni = self._uni_arr
            i = 0
        self._iu = i + 1
        self.n_uniform += 1
        return self._uni[i]

    cdef double _gaussian_c(self):
        cdef Py_ssize_t i = self._ig
        if i == BLOCK:
            self._gau_arr = self._gen.standard_normal(BLOCK)
            self._gau = self._gau_arr
            i = 0
        self._ig = i + 1
        self.n_gaussian += 1
        return self._gau[i]

    def uniform(self):
        return self._uniform_c()

    def gaussian(self):
        return self._gaussian_c()


cdef class Counters:
    """Mutable cost tally threaded through every sampling operation."""

    cdef public long long cells
    cdef public long long refinements
    cdef public long long bernoullis
    cdef public long long bern_depth
    cdef public long long proposals
    cdef public long long euler_steps

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


cdef inline double _exceed_up_c(double x0, double x1, double dur, double c):
    if c <= x0 or c <= x1:
        return 1.0
    return exp(-2.0 * (c - x0) * (c - x1) / dur)


cdef inline double _exceed_down_c(double x0, double x1, double dur, double c):
    if c >= x0 or c >= x1:
        return 1.0
    return exp(-2.0 * (x0 - c) * (x1 - c) / dur)


def exceed_up(double x0, double x1, double dur, double c):
    """P(sup of a Brownian bridge x0 -> x1 over dur reaches level c). Exact."""
    return _exceed_up_c(x0, x1, dur, c)


def exceed_down(double x0, double x1, double dur, double c):
    """P(inf of a Brownian bridge x0 -> x1 over dur reaches down to c). Exact."""
    return _exceed_down_c(x0, x1, dur, c)


cdef (double, double) _stay_bounds_c(double x0, double x1, double lo,
                                     double hi, double dur, long n):
    cdef double width, esc_lo, esc_hi, dj, sig, tau, g_lo, g_hi
    cdef long j
    if x0 <= lo or x1 <= lo or x0 >= hi or x1 >= hi:
        return 0.0, 0.0
    width = hi - lo
    esc_lo = 0.0
    esc_hi = 1.0
    j = 1
    while j <= n:
        dj = width * j
        sig = (exp(-2.0 * (dj + lo - x0) * (dj + lo - x1) / dur)
               + exp(-2.0 * (dj - hi + x0) * (dj - hi + x1) / dur))
        tau = (exp(-2.0 * dj * (dj + (x0 - x1)) / dur)
               + exp(-2.0 * dj * (dj + (x1 - x0)) / dur))
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


def stay_bounds(double x0, double x1, double lo, double hi, double dur, long n):
    """Bounds at truncation depth n >= 1 on the probability that a bridge
    x0 -> x1 over duration dur stays strictly inside (lo, hi).

    The escape probability is an alternating series; truncating after a
    positive (sigma) term overstates it and after a negative (tau) term
    understates it, which yields a monotone sandwich in n.
    """
    return _stay_bounds_c(x0, x1, lo, hi, dur, n)


cdef (double, double) _rect_bounds_c(double x0, double x1, double dur,
                                     double g, double k, double m, double v,
                                     long n):
    cdef double s1l, s1h, s2l, s2h, s3l, s3h, s4l, s4h, lo, hi
    if g >= k or m >= v:
        return 0.0, 0.0
    s1l, s1h = _stay_bounds_c(x0, x1, g, v, dur, n)
    s2l, s2h = _stay_bounds_c(x0, x1, k, v, dur, n)
    s3l, s3h = _stay_bounds_c(x0, x1, g, m, dur, n)
    s4l, s4h = _stay_bounds_c(x0, x1, k, m, dur, n)
    lo = s1l - s2h - s3h + s4l
    hi = s1h - s2l - s3l + s4h
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if hi < lo:
        hi = lo
    return lo, hi


def rect_bounds(double x0, double x1, double dur, double g, double k,
                double m, double v, long n):
    """Bounds at depth n on P(min in (g, k], max in [m, v)) for a bridge."""
    return _rect_bounds_c(x0, x1, dur, g, k, m, v, n)


cdef (double, double, double, double) _envelope_walk_c(
        Stream stream, Counters counters, double x0, double x1, double dur,
        double step0, double ratio, long cap) except *:
    cdef double lo_b, hi_b, c_lo, c_hi, e_lo, e_hi, step, u
    cdef double m_lo_layer, m_hi_layer, p_ev
    cdef double l_lo, l_hi, al, ah, bl, bh, cl, ch, dl, dh
    cdef double num_lo, num_hi, den_lo, den_hi, r_lo, r_hi
    cdef long it, n
    cdef int first, decided

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
        e_hi = _exceed_up_c(x0, x1, dur, c_hi)
        counters.bernoullis += 1
        u = stream._uniform_c()
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
    first = 1
    it = 0
    while True:
        it += 1
        if it > cap:
            raise NonConvergenceError("lower envelope walk exceeded its budget")
        l_lo = l_hi - step
        counters.bernoullis += 1
        u = stream._uniform_c()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            al, ah = _stay_bounds_c(x0, x1, l_lo, m_hi_layer, dur, n)
            bl, bh = _stay_bounds_c(x0, x1, l_lo, m_lo_layer, dur, n)
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
                cl, ch = _stay_bounds_c(x0, x1, l_hi, m_hi_layer, dur, n)
                dl, dh = _stay_bounds_c(x0, x1, l_hi, m_lo_layer, dur, n)
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
            first = 0
        else:
            break
    return l_lo, l_hi, m_lo_layer, m_hi_layer


def envelope_walk(Stream stream not None, Counters counters not None,
                  double x0, double x1, double dur, double step0,
                  double ratio, long cap):
    """Sample one coordinate's extremum events for a fresh bridge cell.

    Returns (mlo, mhi, Mlo, Mhi): the minimum lies in (mlo, mhi] and the
    maximum in [Mlo, Mhi). The upper layer is walked first on a geometric
    grid using the exact crossing formula; the lower layer is then walked
    conditionally on the upper event via retrospective Bernoulli draws.
    """
    return _envelope_walk_c(stream, counters, x0, x1, dur, step0, ratio, cap)


def fill_segment(Stream stream not None, Counters counters not None,
                 double[::1] times, double[:, ::1] values,
                 double[:, :, ::1] env, double t0, double t1,
                 x0, x1, long depth, double step0, double ratio, long cap):
    """Populate a fresh dyadic segment in place.

    times: (n+1,), values: (n+1, d), env: (n, d, 4) with n = 2**depth.
    Endpoint values x0/x1 are fixed by the caller; interior values are bridge
    midpoints filled coarse-to-fine, then each cell gets per-coordinate
    extremum envelopes.
    """
    cdef long n = 1 << depth
    cdef double[::1] x0v = np.asarray(x0, dtype=np.float64)
    cdef double[::1] x1v = np.asarray(x1, dtype=np.float64)
    cdef Py_ssize_t d = x0v.shape[0]
    cdef double cellw = (t1 - t0) / n
    cdef long i, stride, half, lo, hi, mid, k
    cdef Py_ssize_t c
    cdef double dt_l, dt_r, dt, mean, sd, dur
    cdef double mlo, mhi, klo, khi
    for i in range(n + 1):
        times[i] = t0 + i * cellw
    times[n] = t1
    for c in range(d):
        values[0, c] = x0v[c]
        values[n, c] = x1v[c]
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
                sd = sqrt(dt_l * dt_r / dt)
                values[mid, c] = mean + sd * stream._gaussian_c()
            i += stride
        stride = half
    for k in range(n):
        dur = times[k + 1] - times[k]
        for c in range(d):
            mlo, mhi, klo, khi = _envelope_walk_c(
                stream, counters, values[k, c], values[k + 1, c],
                dur, step0, ratio, cap)
            env[k, c, 0] = mlo
            env[k, c, 1] = mhi
            env[k, c, 2] = klo
            env[k, c, 3] = khi
        counters.cells += 1


cdef (double, double) _accept_bounds_c(double x0, double x1, double dur,
                                       double mlo, double mhi, double Mlo,
                                       double Mhi, double w, long n):
    cdef double hd = 0.5 * dur
    cdef double a1l, a1h, b1l, b1h, a2l, a2h, b2l, b2h
    cdef double a3l, a3h, b3l, b3h, a4l, a4h, b4l, b4h, lo, hi
    a1l, a1h = _stay_bounds_c(x0, w, mlo, Mhi, hd, n)
    b1l, b1h = _stay_bounds_c(w, x1, mlo, Mhi, hd, n)
    a2l, a2h = _stay_bounds_c(x0, w, mhi, Mhi, hd, n)
    b2l, b2h = _stay_bounds_c(w, x1, mhi, Mhi, hd, n)
    a3l, a3h = _stay_bounds_c(x0, w, mlo, Mlo, hd, n)
    b3l, b3h = _stay_bounds_c(w, x1, mlo, Mlo, hd, n)
    a4l, a4h = _stay_bounds_c(x0, w, mhi, Mlo, hd, n)
    b4l, b4h = _stay_bounds_c(w, x1, mhi, Mlo, hd, n)
    lo = a1l * b1l - a2h * b2h - a3h * b3h + a4l * b4l
    hi = a1h * b1h - a2l * b2l - a3l * b3l + a4h * b4h
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if hi < lo:
        hi = lo
    return lo, hi


def accept_bounds(double x0, double x1, double dur, double mlo, double mhi,
                  double Mlo, double Mhi, double w, long n):
    """Bounds at depth n on P(cell extremum event | midpoint value w).

    The event is {min in (mlo, mhi], max in [Mlo, Mhi)} for the whole cell;
    conditioning on the midpoint splits the bridge into two independent
    halves, and the event probability expands by inclusion-exclusion into
    products of per-half interval-stay probabilities. Trivial event sides
    (mhi at or above an endpoint, Mlo at or below one) drop out on their own
    because the corresponding stay probability is exactly zero.
    """
    return _accept_bounds_c(x0, x1, dur, mlo, mhi, Mlo, Mhi, w, n)


cdef (double, double) _state_prob_c(double x0, double w, double x1, double hd,
                                    double gL, double kL, double mL, double vL,
                                    double gR, double kR, double mR, double vR,
                                    int pend_min, double mhi, int pend_max,
                                    double Mlo, long n):
    cdef double lo = 0.0
    cdef double hi = 0.0
    cdef double cgL, cgR, cvL, cvR, pl, ph, ql, qh
    cdef int vmin, vmax
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
            pl, ph = _rect_bounds_c(x0, w, hd, cgL, kL, mL, cvL, n)
            ql, qh = _rect_bounds_c(w, x1, hd, cgR, kR, mR, cvR, n)
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


cdef int _rect_ratio_bernoulli_c(Stream stream, Counters counters,
                                 double x0, double x1, double hd,
                                 double ng, double nk, double nm, double nv,
                                 double dg, double dk, double dm, double dv,
                                 long cap) except -9:
    cdef double u, nl, nh, dl, dh, r_lo, r_hi
    cdef long n
    counters.bernoullis += 1
    u = stream._uniform_c()
    n = 1
    r_lo = 0.0
    r_hi = 1.0
    while n <= cap:
        counters.bern_depth += 1
        nl, nh = _rect_bounds_c(x0, x1, hd, ng, nk, nm, nv, n)
        dl, dh = _rect_bounds_c(x0, x1, hd, dg, dk, dm, dv, n)
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


def split_coord(Stream stream not None, Counters counters not None,
                double x0, double x1, double dur, double mlo, double mhi,
                double Mlo, double Mhi, double w, double target, long cap):
    """Sample both halves' extremum events after the midpoint value w of a
    cell was accepted.

    Resolves the parent event's disjunctive inner constraints first (so the
    two halves become conditionally independent), then bisects each half's
    min/max layer intervals until the half's box diameter reaches 2*target
    or both intervals are narrower than target/2.

    Returns (gL, kL, mL, vL, gR, kR, mR, vR).
    """
    cdef double hd = 0.5 * dur
    cdef double lobL, hibL, lobR, hibR
    cdef double gL, kL, mL, vL, gR, kR, mR, vR
    cdef double u, nl, nh, dl, dh, r_lo, r_hi, half_t, wmin, wmax, q
    cdef long n
    cdef int pend_min, pend_max, decided, b

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
        u = stream._uniform_c()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            nl, nh = _state_prob_c(x0, w, x1, hd, gL, mhi, mL, vL, gR, kR, mR, vR,
                                   0, mhi, pend_max, Mlo, n)
            dl, dh = _state_prob_c(x0, w, x1, hd, gL, kL, mL, vL, gR, kR, mR, vR,
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
        u = stream._uniform_c()
        n = 1
        decided = -1
        r_lo = 0.0
        r_hi = 1.0
        while n <= cap:
            counters.bern_depth += 1
            nl, nh = _state_prob_c(x0, w, x1, hd, gL, kL, Mlo, vL, gR, kR, mR, vR,
                                   0, mhi, 0, Mlo, n)
            dl, dh = _state_prob_c(x0, w, x1, hd, gL, kL, mL, vL, gR, kR, mR, vR,
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
            b = _rect_ratio_bernoulli_c(stream, counters, x0, w, hd,
                                        q, kL, mL, vL, gL, kL, mL, vL, cap)
            if b:
                gL = q
            else:
                kL = q
        else:
            q = 0.5 * (mL + vL)
            b = _rect_ratio_bernoulli_c(stream, counters, x0, w, hd,
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
            b = _rect_ratio_bernoulli_c(stream, counters, w, x1, hd,
                                        q, kR, mR, vR, gR, kR, mR, vR, cap)
            if b:
                gR = q
            else:
                kR = q
        else:
            q = 0.5 * (mR + vR)
            b = _rect_ratio_bernoulli_c(stream, counters, w, x1, hd,
                                        gR, kR, mR, q, gR, kR, mR, vR, cap)
            if b:
                vR = q
            else:
                mR = q
    return gL, kL, mL, vL, gR, kR, mR, vR


def sharpen_side(Stream stream not None, Counters counters not None,
                 double x0, double x1, double dur, double mlo, double mhi,
                 double Mlo, double Mhi, int side, long cap):
    """Bisect one extremum interval of a whole cell conditionally on its
    event: side 0 halves the minimum's interval (mlo, mhi], side 1 the
    maximum's [Mlo, Mhi). One retrospective Bernoulli, one uniform."""
    cdef double q
    cdef int b
    if side == 0:
        q = 0.5 * (mlo + mhi)
        if not mlo < q < mhi:
            raise NonConvergenceError(
                "minimum interval too narrow to bisect at double precision")
        b = _rect_ratio_bernoulli_c(stream, counters, x0, x1, dur,
                                    q, mhi, Mlo, Mhi, mlo, mhi, Mlo, Mhi, cap)
        if b:
            return q, mhi, Mlo, Mhi
        return mlo, q, Mlo, Mhi
    q = 0.5 * (Mlo + Mhi)
    if not Mlo < q < Mhi:
        raise NonConvergenceError(
            "maximum interval too narrow to bisect at double precision")
    b = _rect_ratio_bernoulli_c(stream, counters, x0, x1, dur,
                                mlo, mhi, Mlo, q, mlo, mhi, Mlo, Mhi, cap)
    if b:
        return mlo, mhi, Mlo, q
    return mlo, mhi, q, Mhi


def euler_run(Stream stream not None, Counters counters not None,
              double[::1] x, double za, double zb, double h, int kind,
              long max_steps):
    """Step a driftless unit-volatility walk of dimension len(x) until the
    reaction coordinate, monitored only at grid times, leaves (za, zb).

    kind: 0 = first coordinate, 1 = coordinate minimum, 2 = |x0 - x1|.
    x is modified in place. Returns (verdict, steps) with verdict -1 when the
    lower barrier was seen first and +1 for the upper one.
    """
    cdef Py_ssize_t d = x.shape[0]
    cdef double sh = sqrt(h)
    cdef long steps = 0
    cdef Py_ssize_t c
    cdef double xi
    while steps < max_steps:
        for c in range(d):
            x[c] = x[c] + sh * stream._gaussian_c()
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
