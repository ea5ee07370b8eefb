"""Reaction coordinates, box classification, block structure, and the
first-crossing deciders."""

import math

import numpy as np
import pytest
from scipy import stats

from essplit import kernels
from essplit.barriers import (DEFAULT_EXTENSION_SCALE, BlockDecomposition,
                              CrossingVerdict, LevelSystem, block_decompose,
                              classify_single, classify_two_sided,
                              coordinate_abs_diff, coordinate_min,
                              custom_coordinate, identity_1d,
                              make_coordinate, single_barrier_crossing,
                              two_sided_crossing)
from essplit.brownian import DEFAULT_CONFIG, sample_segment
from essplit.errors import AssumptionViolatedError, NonConvergenceError
from essplit.sampling import RngStream
from essplit.skeleton import Skeleton


def brute_range(kind, lo, hi):
    """Exact coordinate range over a box, derived only from the geometry:
    the extrema of these coordinates are attained at box corners, except
    that |x0 - x1| attains 0 anywhere the two intervals overlap."""
    d = len(lo)
    vals = []
    for mask in range(1 << d):
        corner = [hi[c] if mask >> c & 1 else lo[c] for c in range(d)]
        if kind == "identity_1d":
            vals.append(corner[0])
        elif kind == "coordinate_min":
            vals.append(min(corner))
        else:
            vals.append(abs(corner[0] - corner[1]))
    inf = min(vals)
    sup = max(vals)
    if kind == "coordinate_abs_diff" and lo[0] <= hi[1] and lo[1] <= hi[0]:
        inf = 0.0
    return inf, sup


def random_box(rng, d, z_grid=None):
    lo = rng.uniform(-2.0, 2.0, size=d)
    hi = lo + rng.uniform(0.0, 1.5, size=d)
    if z_grid is not None and rng.random() < 0.5:
        # snap some edges onto barrier values to exercise boundary semantics
        c = int(rng.integers(0, d))
        if rng.random() < 0.5:
            lo[c] = float(rng.choice(z_grid))
            hi[c] = max(hi[c], lo[c])
        else:
            hi[c] = float(rng.choice(z_grid))
            lo[c] = min(lo[c], hi[c])
    return lo, hi


# ---------------------------------------------------------------------------
# reaction coordinates


def test_make_coordinate_kinds():
    for kind in ("identity_1d", "coordinate_min", "coordinate_abs_diff"):
        xi = make_coordinate(kind)
        assert xi.kind == kind
    with pytest.raises(ValueError, match="unknown"):
        make_coordinate("nope")


def test_coordinate_evaluate():
    assert identity_1d().evaluate([1.5]) == 1.5
    assert coordinate_min().evaluate([0.4, -0.2, 1.0]) == -0.2
    assert coordinate_abs_diff().evaluate([0.3, 1.1]) == pytest.approx(0.8)
    assert coordinate_abs_diff().evaluate([1.1, 0.3]) == pytest.approx(0.8)


def test_coordinate_ranges_match_brute_force():
    rng = np.random.default_rng(2)
    cases = {"identity_1d": 1, "coordinate_min": 3, "coordinate_abs_diff": 2}
    for kind, d in cases.items():
        xi = make_coordinate(kind)
        for _ in range(500):
            lo, hi = random_box(rng, d)
            want = brute_range(kind, lo, hi)
            assert xi.inf_over(lo, hi) == pytest.approx(want[0], abs=1e-12)
            assert xi.sup_over(lo, hi) == pytest.approx(want[1], abs=1e-12)


def test_batch_range_agrees_with_scalar_calls():
    rng = np.random.default_rng(3)
    for kind, d in (("identity_1d", 1), ("coordinate_min", 2),
                    ("coordinate_abs_diff", 2)):
        xi = make_coordinate(kind)
        env = np.zeros((40, d, 4))
        for k in range(40):
            lo, hi = random_box(rng, d)
            env[k, :, 0] = lo
            env[k, :, 1] = lo
            env[k, :, 2] = hi
            env[k, :, 3] = hi
        inf, sup = xi.batch_range(env)
        for k in range(40):
            assert inf[k] == pytest.approx(
                xi.inf_over(env[k, :, 0], env[k, :, 3]), abs=1e-14)
            assert sup[k] == pytest.approx(
                xi.sup_over(env[k, :, 0], env[k, :, 3]), abs=1e-14)


def test_batch_witnesses_are_attainable_bounds():
    # a witness claims the coordinate's path-infimum is at most inf_ub and
    # its path-supremum at least sup_lb; both must stay inside the box range
    rng = np.random.default_rng(4)
    for kind, d in (("identity_1d", 1), ("coordinate_min", 3),
                    ("coordinate_abs_diff", 2)):
        xi = make_coordinate(kind)
        for trial in range(40):
            stream = RngStream(1000 + trial, hash(kind) % 1000)
            start = tuple(float(v) for v in rng.normal(size=d))
            sk = sample_segment(stream, start, 0.0, 1.0, 1)
            inf, sup = xi.batch_range(sk.env)
            inf_ub, sup_lb = xi.batch_witness(sk.env, sk.values[:-1],
                                              sk.values[1:])
            assert np.all(inf <= inf_ub + 1e-12)
            assert np.all(sup_lb <= sup + 1e-12)
            # endpoint values themselves are witnesses
            e0 = np.array([xi.evaluate(v) for v in sk.values[:-1]])
            e1 = np.array([xi.evaluate(v) for v in sk.values[1:]])
            assert np.all(inf_ub <= np.minimum(e0, e1) + 1e-12)
            assert np.all(sup_lb >= np.maximum(e0, e1) - 1e-12)


def test_custom_coordinate_wraps_callables():
    xi = custom_coordinate(lambda x: x[0] + x[1],
                           lambda lo, hi: lo[0] + lo[1],
                           lambda lo, hi: hi[0] + hi[1],
                           kind="sum")
    assert xi.kind == "sum"
    assert xi.evaluate([1.0, 2.0]) == 3.0
    assert xi.inf_over([0.0, 1.0], [2.0, 3.0]) == 1.0
    assert xi.sup_over([0.0, 1.0], [2.0, 3.0]) == 5.0
    inf, sup = xi.batch_range(np.array([[[0.0, 0.0, 2.0, 2.0],
                                         [1.0, 1.0, 3.0, 3.0]]]))
    assert inf[0] == 1.0 and sup[0] == 5.0


# ---------------------------------------------------------------------------
# classification


def test_classify_single_matches_brute_force():
    rng = np.random.default_rng(7)
    z_grid = np.array([-1.0, 0.0, 0.5])
    mismatches = 0
    for kind, d in (("identity_1d", 1), ("coordinate_min", 2),
                    ("coordinate_abs_diff", 2)):
        xi = make_coordinate(kind)
        for _ in range(3000):
            lo, hi = random_box(rng, d, z_grid)
            z = float(rng.choice(z_grid)) if rng.random() < 0.6 \
                else float(rng.uniform(-1.5, 1.5))
            inf, sup = brute_range(kind, lo, hi)
            want = -1 if sup < z else (1 if inf >= z else 0)
            mismatches += classify_single((lo, hi), xi, z) != want
    assert mismatches == 0


def test_classify_two_sided_matches_brute_force():
    rng = np.random.default_rng(8)
    mismatches = 0
    for kind, d in (("identity_1d", 1), ("coordinate_min", 2),
                    ("coordinate_abs_diff", 2)):
        xi = make_coordinate(kind)
        for _ in range(3000):
            z_A = float(rng.uniform(-1.5, 0.0))
            z_B = z_A + float(rng.uniform(0.5, 2.5))
            lo, hi = random_box(rng, d, np.array([z_A, z_B]))
            inf, sup = brute_range(kind, lo, hi)
            if inf <= z_A and sup >= z_B:
                with pytest.raises(AssumptionViolatedError):
                    classify_two_sided((lo, hi), xi, z_A, z_B)
                continue
            if sup <= z_A:
                want = -2
            elif inf >= z_B:
                want = 2
            elif inf <= z_A:
                want = -1
            elif sup >= z_B:
                want = 1
            else:
                want = 0
            mismatches += classify_two_sided((lo, hi), xi, z_A, z_B) != want
    assert mismatches == 0


def test_classify_boundary_semantics():
    xi = identity_1d()
    # box supremum exactly at the barrier counts as contact from below
    assert classify_single(([0.0], [1.0]), xi, 1.0) == 0
    assert classify_single(([1.0], [2.0]), xi, 1.0) == 1
    assert classify_single(([0.0], [0.999]), xi, 1.0) == -1
    # two-sided: closed contact at A, half-open at B
    assert classify_two_sided(([0.0], [0.5]), xi, 0.0, 1.0) == -1
    assert classify_two_sided(([0.1], [0.9]), xi, 0.0, 1.0) == 0
    assert classify_two_sided(([0.5], [1.0]), xi, 0.0, 1.0) == 1
    assert classify_two_sided(([-1.0], [0.0]), xi, 0.0, 1.0) == -2
    assert classify_two_sided(([1.0], [2.0]), xi, 0.0, 1.0) == 2
    with pytest.raises(AssumptionViolatedError):
        classify_two_sided(([0.0], [1.0]), xi, 0.0, 1.0)


# ---------------------------------------------------------------------------
# block decomposition


def test_block_decompose_worked_example():
    dec = block_decompose([1, 1, 0, 0, -1, -2, -1])
    assert dec.kappa == (0, 0, 1, 1, 2, 2, 2)
    assert dec.blocks == ((0, 2), (2, 4), (4, 7))
    assert dec.block_kind == (1, 0, -1)


def test_block_decompose_properties():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        seq = rng.integers(-2, 3, size=n)
        dec = block_decompose(seq)
        assert len(dec.kappa) == n
        # blocks tile the index range in order
        assert dec.blocks[0][0] == 0
        assert dec.blocks[-1][1] == n
        for (a, b), (c, _) in zip(dec.blocks, dec.blocks[1:]):
            assert b == c
        # adjacent blocks carry different signs, members match their sign
        for kind_a, kind_b in zip(dec.block_kind, dec.block_kind[1:]):
            assert kind_a != kind_b
        for (a, b), kind in zip(dec.blocks, dec.block_kind):
            for j in range(a, b):
                assert int(seq[j] > 0) - int(seq[j] < 0) == kind
                assert dec.kappa[j] == dec.blocks.index((a, b))


def test_block_decompose_edge_cases():
    dec = block_decompose([])
    assert dec.kappa == () and dec.blocks == () and dec.block_kind == ()
    dec = block_decompose([2])
    assert dec.blocks == ((0, 1),) and dec.block_kind == (1,)
    with pytest.raises(ValueError):
        block_decompose([3])
    with pytest.raises(ValueError):
        block_decompose([0, -5])


# ---------------------------------------------------------------------------
# level systems


def test_level_system_validation():
    ls = LevelSystem(z_A=0.0, levels=(1.0, 2.0, 3.0))
    assert ls.z_B == 3.0
    assert ls.m == 3
    with pytest.raises(ValueError, match="at least one"):
        LevelSystem(z_A=0.0, levels=())
    with pytest.raises(ValueError, match="below"):
        LevelSystem(z_A=1.0, levels=(1.0, 2.0))
    with pytest.raises(ValueError, match="increasing"):
        LevelSystem(z_A=0.0, levels=(1.0, 1.0))
    with pytest.raises(ValueError, match="increasing"):
        LevelSystem(z_A=0.0, levels=(2.0, 1.0))


# ---------------------------------------------------------------------------
# single-barrier decider


def test_single_barrier_law_matches_reflection():
    # P(BM from x0 reaches z within [0, T]) = 2 * Phi((x0 - z)/sqrt(T))
    x0, z, T = 0.0, 1.2, 1.0
    p_true = 2.0 * stats.norm.sf((z - x0) / math.sqrt(T))
    xi = identity_1d()
    n = 1200
    hits = 0
    for i in range(n):
        stream = RngStream(3434, i)
        sk = sample_segment(stream, x0, 0.0, T, 1)
        ind, _ = single_barrier_crossing(stream, sk, xi, z)
        hits += ind
    margin = 3.6 * math.sqrt(p_true * (1 - p_true) / n)
    assert abs(hits / n - p_true) < margin


def test_single_barrier_below_side():
    x0, z, T = 0.0, -0.9, 1.0
    p_true = 2.0 * stats.norm.sf((x0 - z) / math.sqrt(T))
    xi = identity_1d()
    n = 1200
    hits = 0
    for i in range(n):
        stream = RngStream(3535, i)
        sk = sample_segment(stream, x0, 0.0, T, 1)
        ind, _ = single_barrier_crossing(stream, sk, xi, z, side="below")
        hits += ind
    margin = 3.6 * math.sqrt(p_true * (1 - p_true) / n)
    assert abs(hits / n - p_true) < margin


def test_single_barrier_returns_refined_skeleton_and_proof():
    stream = RngStream(99, 0)
    sk = sample_segment(stream, 0.0, 0.0, 1.0, 1)
    xi = identity_1d()
    ind, refined = single_barrier_crossing(stream, sk, xi, 0.8)
    inf, sup = xi.batch_range(refined.env)
    inf_ub, sup_lb = xi.batch_witness(refined.env, refined.values[:-1],
                                      refined.values[1:])
    if ind:
        assert np.any((inf >= 0.8) | (sup_lb >= 0.8))
    else:
        assert np.all(sup < 0.8)


def test_single_barrier_guards_and_budget():
    stream = RngStream(98, 0)
    xi = identity_1d()
    with pytest.raises(ValueError, match="empty"):
        single_barrier_crossing(stream, Skeleton.empty(1), xi, 1.0)
    sk = sample_segment(stream, 0.0, 0.0, 1.0, 1)
    with pytest.raises(ValueError, match="side"):
        single_barrier_crossing(stream, sk, xi, 1.0, side="sideways")
    # a barrier strictly between the witnessed running maximum and the
    # highest box top cannot be decided in zero refinement moves
    witnessed = max(float(sk.env[:, 0, 2].max()), float(sk.values.max()))
    top = float(sk.env[:, 0, 3].max())
    assert witnessed < top
    with pytest.raises(NonConvergenceError, match="budget"):
        single_barrier_crossing(stream, sk, xi, 0.5 * (witnessed + top),
                                refine_cap=0)


def test_single_barrier_is_deterministic():
    runs = []
    for _ in range(2):
        out = []
        for i in range(30):
            stream = RngStream(515, i)
            sk = sample_segment(stream, 0.0, 0.0, 1.0, 1)
            ind, refined = single_barrier_crossing(stream, sk, identity_1d(),
                                                   0.7)
            out.append((ind, refined.n_cells, float(refined.env.sum())))
        runs.append(out)
    assert runs[0] == runs[1]


# ---------------------------------------------------------------------------
# two-sided decider


def first_contact_proof(verdict, xi, z_A, z_B):
    """Deterministically re-derive the race outcome from the verdict's
    skeleton alone: the first barrier-touching block must carry the
    decision's sign and contain a cell proving actual contact."""
    sk = verdict.skeleton
    inf, sup = xi.batch_range(sk.env)
    inf_ub, sup_lb = xi.batch_witness(sk.env, sk.values[:-1], sk.values[1:])
    cls = np.zeros(sk.n_cells, dtype=int)
    cls[(inf <= z_A) & (sup <= z_B)] = -1
    cls[sup <= z_A] = -2
    cls[(sup >= z_B) & (inf >= z_A)] = np.maximum(
        cls[(sup >= z_B) & (inf >= z_A)], 1)
    cls[inf >= z_B] = 2
    dec = block_decompose(cls)
    first_kind = next((k for k in dec.block_kind if k != 0), 0)
    if first_kind != verdict.decision:
        return False
    (a, b) = dec.blocks[dec.block_kind.index(first_kind)]
    if verdict.decision > 0:
        return bool(np.any((inf[a:b] >= z_B) | (sup_lb[a:b] >= z_B)))
    return bool(np.any((sup[a:b] <= z_A) | (inf_ub[a:b] <= z_A)))


def run_crossing(seed, i, x0, z_A, z_B, xi=None, **kw):
    stream = RngStream(seed, i)
    d = len(x0) if isinstance(x0, tuple) else 1
    sk = sample_segment(stream, x0, 0.0, DEFAULT_CONFIG.T,
                        DEFAULT_CONFIG.ladder.level_for(
                            0.25 * (z_B - z_A)))
    return two_sided_crossing(stream, sk, xi or identity_1d(), z_A, z_B, **kw)


def test_two_sided_crossing_law_simple_band():
    # between barriers 0 and 2 from x0=1 the walk exits up with probability
    # exactly one half
    n = 1200
    ups = 0
    for i in range(n):
        v = run_crossing(616, i, 1.0, 0.0, 2.0)
        assert v.decision in (-1, 1)
        ups += v.decision == 1
    assert abs(ups / n - 0.5) < 3.6 * math.sqrt(0.25 / n)


def test_two_sided_crossing_law_asymmetric_band():
    # from x0=1 between 0 and 3 the up-exit probability is exactly 1/3
    n = 1200
    ups = 0
    for i in range(n):
        ups += run_crossing(717, i, 1.0, 0.0, 3.0).decision == 1
    p = 1.0 / 3.0
    assert abs(ups / n - p) < 3.6 * math.sqrt(p * (1 - p) / n)


def test_two_sided_verdict_replays_from_skeleton():
    xi = identity_1d()
    for i in range(60):
        v = run_crossing(818, i, 1.0, 0.0, 2.0)
        assert first_contact_proof(v, xi, 0.0, 2.0)


def test_two_sided_sigma_on_extension_grid():
    # the decision time is the end of some working segment, so it sits on
    # the grid made of the initial span plus whole extension blocks
    gap = 2.0
    ext_len = DEFAULT_CONFIG.T * max(
        1, math.ceil(DEFAULT_EXTENSION_SCALE * gap * gap / DEFAULT_CONFIG.T))
    for i in range(40):
        v = run_crossing(919, i, 1.0, 0.0, 2.0)
        k = (v.sigma_tilde - DEFAULT_CONFIG.T) / ext_len
        assert k == int(k) >= 0
        assert v.skeleton.t_end == v.sigma_tilde


def test_two_sided_abs_diff_law():
    # xi = |x0 - x1| is a time-changed absolute Brownian motion, so exit
    # probabilities follow the gambler's-ruin formula on (0.25, 2) from 1
    xi = make_coordinate("coordinate_abs_diff")
    p = 0.75 / 1.75
    n = 500
    ups = 0
    for i in range(n):
        v = run_crossing(2121, i, (0.0, 1.0), 0.25, 2.0, xi=xi)
        ups += v.decision == 1
        if i < 25:
            assert first_contact_proof(v, xi, 0.25, 2.0)
    assert abs(ups / n - p) < 3.6 * math.sqrt(p * (1 - p) / n)


def test_two_sided_coordinate_min_smoke():
    xi = make_coordinate("coordinate_min")
    for i in range(25):
        v = run_crossing(2222, i, (1.0, 1.0), 0.0, 2.5, xi=xi)
        assert v.decision in (-1, 1)
        assert first_contact_proof(v, xi, 0.0, 2.5)


def test_two_sided_compact_matches_full_archive():
    xi = identity_1d()
    for i in range(25):
        a = run_crossing(2323, i, 1.0, 0.0, 2.0, compact=True)
        b = run_crossing(2323, i, 1.0, 0.0, 2.0, compact=False)
        assert a.decision == b.decision
        assert a.sigma_tilde == b.sigma_tilde
        assert a.skeleton.n_cells <= b.skeleton.n_cells
        assert not b.skeleton.settled.any()


def test_two_sided_largest_overlap_strategy():
    for i in range(40):
        v = run_crossing(2424, i, 1.0, 0.0, 2.0, strategy="largest_overlap")
        assert v.decision in (-1, 1)
        assert first_contact_proof(v, identity_1d(), 0.0, 2.0)


def test_two_sided_guards():
    stream = RngStream(31, 0)
    xi = identity_1d()
    sk = sample_segment(stream, 1.0, 0.0, 1.0, 1)
    with pytest.raises(ValueError, match="at least one cell"):
        two_sided_crossing(stream, Skeleton.empty(1), xi, 0.0, 2.0)
    with pytest.raises(ValueError, match="z_A < z_B"):
        two_sided_crossing(stream, sk, xi, 2.0, 0.0)
    with pytest.raises(ValueError, match="band"):
        two_sided_crossing(stream, sk, xi, 2.0, 3.0)
    with pytest.raises(ValueError, match="band"):
        # the upper barrier is exclusive at the start
        two_sided_crossing(stream, sk, xi, 0.0, float(sk.start_value[0]))


def test_two_sided_budget_and_extension_limits():
    xi = identity_1d()
    # a hand-built cell whose box straddles both barriers needs at least one
    # refinement move, so a zero budget must fail deterministically
    straddle = Skeleton(np.array([0.0, 1.0]), np.array([[1.0], [1.0]]),
                        np.array([[[0.1, 0.9, 1.1, 1.9]]]), np.array([1]))
    with pytest.raises(NonConvergenceError, match="budget"):
        two_sided_crossing(RngStream(32, 5), straddle, xi, 0.2, 1.8,
                           refine_cap=0)
    # a wide band with stunted extensions cannot possibly decide
    stream = RngStream(33, 5)
    sk = sample_segment(stream, 25.0, 0.0, 1.0, 3)
    with pytest.raises(NonConvergenceError, match="extensions"):
        two_sided_crossing(stream, sk, xi, 0.0, 50.0, max_extensions=2,
                           extension_scale=1e-9)


def test_two_sided_threads_counters():
    stream = RngStream(34, 0)
    cnt = kernels.Counters()
    sk = sample_segment(stream, 1.0, 0.0, 1.0, 1, counters=cnt)
    v = two_sided_crossing(stream, sk, identity_1d(), 0.0, 2.0, counters=cnt)
    assert isinstance(v, CrossingVerdict)
    assert cnt.cells > 0
    assert cnt.bernoullis > 0
    assert cnt.refinements > 0
