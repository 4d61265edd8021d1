import math
from itertools import permutations

import numpy as np
import pytest

from ldpvec.coco import (
    coco_choose_t,
    coco_mean_contribution,
    coco_nonmissing_contribution,
    coco_omega,
    coco_params,
    coco_predicted_mse,
    coco_randomize,
    coco_randomize_batch,
    coco_weight_vector,
    collision_rates,
    overwrite_probability,
)
from ldpvec.domain import MechanismParams, PrivateView, TernaryVector, draw_user_hash
from ldpvec.oracle import (
    CocoTable,
    _coco_table_probs,
    coco_exact_rates_by_rank,
    coco_exact_rates_by_table,
)

LN2 = math.log(2)


def test_rates_examples():
    r = collision_rates(1, LN2, 4)
    assert (r.p_ow, r.p_t, r.p_o, r.p_f) == pytest.approx((0.0, 2 / 5, 1 / 5, 1 / 4))
    assert overwrite_probability(2, 8) == pytest.approx(0.125)
    r0 = collision_rates(3, 0.0, 10)
    assert r0.p_t == pytest.approx(r0.p_o)


def test_rates_reject_bad_domain():
    with pytest.raises(ValueError):
        collision_rates(2, 1.0, 7)  # odd t
    with pytest.raises(ValueError):
        collision_rates(2, 1.0, 4)  # t < 2s+2


def test_choose_t_examples():
    assert coco_choose_t(8, 0.5, "mean") == 24
    assert coco_choose_t(8, 0.5, "nonmissing") == 54
    assert coco_choose_t(1, 0.1, "mean") == 6  # ceil gives 5, rounded up to even >= 2s+2


def test_omega_example():
    # d=10, s=3, eps=ln2, t=8 instance: Omega = 3*3 + 8 - 6 = 11
    assert coco_omega(3, LN2, 8) == pytest.approx(11.0)


def test_weight_vector_single_entry_layout():
    # s=1: one bucket at e^eps, its pair at 1, everything else at w
    t, eps = 6, LN2
    uh = draw_user_hash(0, 2, "paired", t)
    x = TernaryVector(d=4, support=((2, 1),))
    W = coco_weight_vector(x.support, uh, eps, t).w
    omega = coco_omega(1, eps, t)
    w = (omega - math.exp(eps) - 1.0) / (t - 2)
    hb = uh.event_bucket(2, 1)
    lb = uh.event_bucket(2, -1)
    assert W[hb - 1] == pytest.approx(math.exp(eps))
    assert W[lb - 1] == pytest.approx(1.0)
    for k in range(t):
        if k not in (hb - 1, lb - 1):
            assert W[k] == pytest.approx(w)
    assert W.sum() == pytest.approx(omega)


def test_weight_vector_overwrite_semantics():
    # two dims forced onto one pair: the later write wins, both buckets replaced
    t, eps = 8, 0.7
    table = CocoTable({1: 2, 2: 2}, {1: 1, 2: 1}, t)

    class H:
        def event_bucket(self, j, b):
            return table.event_bucket(j, b)

        def pair_slot(self, j):
            return table.pair_slot(j)

    x = TernaryVector(d=2, support=((1, 1), (2, -1)))
    for ordered in permutations(x.support):
        W = coco_weight_vector(tuple(ordered), H(), eps, t).w
        j_last, b_last = ordered[-1]
        assert W[table.event_bucket(j_last, b_last) - 1] == pytest.approx(math.exp(eps))
        assert W[table.event_bucket(j_last, -b_last) - 1] == pytest.approx(1.0)
        assert W.sum() == pytest.approx(coco_omega(2, eps, t))


def test_residual_weight_bounds_exhaustive():
    # 1 <= w <= (e^eps+1)/2 for every possible surviving-pair count
    for eps in (0.1, 1.0, 2.0):
        eeps = math.exp(eps)
        for s in range(1, 7):
            for t in range(2 * s + 2, 4 * s + 9, 2):
                omega = coco_omega(s, eps, t)
                for m in range(1, s + 1):
                    w = (omega - m * (eeps + 1.0)) / (t - 2 * m)
                    assert 1.0 - 1e-12 <= w <= (eeps + 1.0) / 2.0 + 1e-12


def test_coco_weights_validation():
    from ldpvec.coco import CocoWeights

    good = coco_weight_vector(((2, 1),), draw_user_hash(0, 2, "paired", 6), LN2, 6)
    assert good.probabilities.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        CocoWeights(w=np.array([2.0, 1.0, 1.0]), omega=5.0, epsilon=LN2)  # sum mismatch
    with pytest.raises(ValueError):
        CocoWeights(w=np.array([3.0, 1.0, 1.0]), omega=5.0, epsilon=LN2)  # weight above e^eps


def test_randomize_rejects_bad_t():
    rng = np.random.default_rng(0)
    x = TernaryVector(d=4, support=((1, 1),))
    uh = draw_user_hash(0, 0, "paired", 6)
    with pytest.raises(ValueError):
        coco_randomize(x, uh, MechanismParams(d=4, s=1, epsilon=1.0, t=3), rng)
    with pytest.raises(ValueError):
        coco_params(4, 2, 1.0, t=4)


def test_randomize_matches_exact_law():
    rng = np.random.default_rng(8)
    for (d, s, eps, t, seed) in ((10, 3, LN2, 8, 5), (6, 2, 1.0, 8, 11), (4, 1, LN2, 6, 2)):
        x = TernaryVector(d=d, support=tuple((j + 1, (-1) ** j) for j in range(s)))
        params = MechanismParams(d=d, s=s, epsilon=eps, t=t)
        uh = draw_user_hash(seed, 0, "paired", t)
        table = CocoTable(
            {j: uh.pair_slot(j) for j, _ in x.support},
            {j: uh.pair_sign(j) for j, _ in x.support},
            t,
        )
        exact = _coco_table_probs(x, table, params)
        n = 60_000
        counts = np.zeros(t)
        for _ in range(n):
            counts[coco_randomize(x, uh, params, rng).z - 1] += 1
        assert np.abs(counts / n - exact).max() < 4 * math.sqrt(0.25 / n)


def test_randomize_batch_matches_exact_law():
    rng = np.random.default_rng(12)
    for (d, s, eps, t, seed) in ((10, 3, LN2, 8, 5), (8, 3, 0.5, 10, 9), (6, 2, 1.0, 8, 11)):
        x_support = tuple((j + 1, (-1) ** j) for j in range(s))
        x = TernaryVector(d=d, support=x_support)
        params = MechanismParams(d=d, s=s, epsilon=eps, t=t)
        uh = draw_user_hash(seed, 0, "paired", t)
        table = CocoTable(
            {j: uh.pair_slot(j) for j, _ in x_support},
            {j: uh.pair_sign(j) for j, _ in x_support},
            t,
        )
        exact = _coco_table_probs(x, table, params)
        n = 200_000
        seeds = np.full(n, uh.seed, dtype=np.uint64)
        sup = np.tile([[j for j, _ in x_support]], (n, 1))
        sg = np.tile([[b for _, b in x_support]], (n, 1))
        z = coco_randomize_batch(sup, sg, seeds, params, rng)
        emp = np.bincount(z - 1, minlength=t) / n
        assert np.abs(emp - exact).max() < 4 * math.sqrt(0.25 / n)


def test_contribution_examples():
    rates = collision_rates(1, LN2, 4)
    uh = draw_user_hash(1, 0, "paired", 4)
    hp = uh.event_bucket(2, 1)
    hm = uh.event_bucket(2, -1)
    other = next(z for z in range(1, 5) if z not in (hp, hm))
    mean_hit = coco_mean_contribution(PrivateView(hash=uh, z=hp), 2, rates)
    mean_opp = coco_mean_contribution(PrivateView(hash=uh, z=hm), 2, rates)
    mean_other = coco_mean_contribution(PrivateView(hash=uh, z=other), 2, rates)
    assert (mean_hit, mean_opp, mean_other) == pytest.approx((5.0, -5.0, 0.0))
    # unbiasedness identities at the designed rates
    assert rates.p_t * mean_hit + rates.p_o * mean_opp == pytest.approx(1.0)
    assert rates.p_f * mean_hit + rates.p_f * mean_opp == pytest.approx(0.0)

    nm_hit = coco_nonmissing_contribution(PrivateView(hash=uh, z=hp), 2, rates)
    nm_other = coco_nonmissing_contribution(PrivateView(hash=uh, z=other), 2, rates)
    assert (nm_hit, nm_other) == pytest.approx((5.0, -5.0))
    both = rates.p_t + rates.p_o
    assert both * nm_hit + (1 - both) * nm_other == pytest.approx(1.0)
    assert 2 * rates.p_f * nm_hit + (1 - 2 * rates.p_f) * nm_other == pytest.approx(0.0)


def test_contribution_rejects_degenerate_rates():
    rates = collision_rates(1, 0.0, 4)
    uh = draw_user_hash(1, 0, "paired", 4)
    with pytest.raises(ValueError):
        coco_mean_contribution(PrivateView(hash=uh, z=1), 1, rates)


def test_predicted_mse_examples():
    rates = collision_rates(1, LN2, 4)
    assert coco_predicted_mse(2, 1, rates, "mean") == pytest.approx(26.5)
    # d == s: no missing-dimension term
    val = coco_predicted_mse(1, 1, rates, "mean")
    expect = ((rates.p_t + rates.p_o) - (rates.p_t - rates.p_o) ** 2) / (rates.p_t - rates.p_o) ** 2
    assert val == pytest.approx(expect)


def test_rate_ordering_and_overwrite_bound_grid():
    # p_o < p_f < p_t and P_ow <= 1/e on the validity grid
    for eps in np.arange(0.1, 3.01, 0.1):
        for s in range(1, 33):
            for t in range(2 * s + 2, 8 * s + 1, 2):
                r = collision_rates(s, float(eps), t)
                assert r.p_o < r.p_f < r.p_t, (eps, s, t)
                assert r.p_ow <= math.exp(-1) + 1e-12, (s, t)


def test_exact_rate_routes_agree():
    for (s, eps, t) in ((1, 0.7, 4), (2, 1.0, 8), (3, 0.5, 10), (2, 2.0, 12)):
        closed = collision_rates(s, eps, t)
        rank = coco_exact_rates_by_rank(s, eps, t)
        table = coco_exact_rates_by_table(s, eps, t)
        for got in (rank, table):
            assert got[0] == pytest.approx(closed.p_t, abs=1e-12)
            assert got[1] == pytest.approx(closed.p_o, abs=1e-12)
            assert got[2] == pytest.approx(closed.p_f, abs=1e-12)
    # rank route also covers sparsities beyond table enumeration
    rank = coco_exact_rates_by_rank(8, 0.5, 24)
    closed = collision_rates(8, 0.5, 24)
    assert rank[0] == pytest.approx(closed.p_t, abs=1e-12)
    assert rank[1] == pytest.approx(closed.p_o, abs=1e-12)
