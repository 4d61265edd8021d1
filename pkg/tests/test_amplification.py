import math

import numpy as np
import pytest

from ldpvec.amplification import (
    AmplificationQuery,
    DivergenceResult,
    amplified_epsilon,
    collision_alpha,
    efmrtt_closed_form,
    exact_pq_laws,
    generic_clone_alpha,
    pq_divergence,
)

LN2 = math.log(2)


def brute_force_divergence(n, eps, alpha, eps_c):
    """Independent full-support enumeration of the counting laws."""
    a = alpha / (math.exp(eps) - 1.0)
    eeps = math.exp(eps)
    deltas = (((1, 0), eeps * a), ((0, 1), a), ((0, 0), 1.0 - a - eeps * a))
    P, Q = {}, {}
    for c in range(n):
        pcv = math.comb(n - 1, c) * (2 * a) ** c * (1 - 2 * a) ** (n - 1 - c)
        for av in range(c + 1):
            w = pcv * math.comb(c, av) * 0.5**c
            for (d1, d2), pd in deltas:
                kp = (av + d1, c - av + d2)
                kq = (av + d2, c - av + d1)
                P[kp] = P.get(kp, 0.0) + w * pd
                Q[kq] = Q.get(kq, 0.0) + w * pd
    ec = math.exp(eps_c)
    fwd = sum(max(0.0, P[k] - ec * Q.get(k, 0.0)) for k in P)
    bwd = sum(max(0.0, Q[k] - ec * P.get(k, 0.0)) for k in Q)
    return fwd, bwd


def test_collision_alpha_examples():
    assert collision_alpha(4, 1.0, 17) == pytest.approx(0.28790, abs=1e-5)
    assert collision_alpha(1, LN2, 4) == pytest.approx(0.2)
    assert collision_alpha(4, 1.0, 10**9) < 1e-7
    with pytest.raises(ValueError):
        collision_alpha(4, 1.0, 4)


def test_generic_clone_alpha_examples():
    assert generic_clone_alpha(math.log(3)) == pytest.approx(0.5)
    assert generic_clone_alpha(LN2) == pytest.approx(1 / 3)
    assert generic_clone_alpha(1e-9) == pytest.approx(0.0, abs=1e-9)


def test_efmrtt_examples():
    assert efmrtt_closed_form(1.0, 1e-6, 10**5) == pytest.approx(0.14105, abs=1e-5)
    assert efmrtt_closed_form(1.0, 1e-6, 10**12) < 1e-3
    assert efmrtt_closed_form(2.0, 1e-6, 10**5) == pytest.approx(2 * efmrtt_closed_form(1.0, 1e-6, 10**5))


def test_query_validation():
    AmplificationQuery(n=10, epsilon=1.0, alpha=0.2, delta=1e-6)
    with pytest.raises(ValueError):
        AmplificationQuery(n=10, epsilon=1.0, alpha=0.0, delta=1e-6)
    with pytest.raises(ValueError):
        # above the generic-clone ceiling: the Delta law degenerates
        AmplificationQuery(n=10, epsilon=1.0, alpha=0.5, delta=1e-6)
    with pytest.raises(ValueError):
        AmplificationQuery(n=10, epsilon=1.0, alpha=0.2, delta=1.5)


def test_n1_hand_values():
    query = AmplificationQuery(n=1, epsilon=LN2, alpha=1 / 3, delta=1e-6)
    r0 = pq_divergence(query, 0.0)
    assert r0.reported_delta == pytest.approx(1 / 3, abs=1e-15)
    r1 = pq_divergence(query, LN2)
    assert max(r1.delta_forward, r1.delta_backward) == 0.0
    assert r1.truncation_mass < 1e-12


def test_engine_matches_brute_force():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 5))
        eps = float(rng.uniform(0.2, 2.5))
        alpha = float(rng.uniform(0.01, generic_clone_alpha(eps)))
        eps_c = float(rng.uniform(0.0, eps))
        query = AmplificationQuery(n=n, epsilon=eps, alpha=alpha, delta=1e-6)
        got = pq_divergence(query, eps_c)
        fwd, bwd = brute_force_divergence(n, eps, alpha, eps_c)
        worst = max(worst, abs(got.delta_forward - fwd), abs(got.delta_backward - bwd))
        assert got.truncation_mass < 1e-12
        # coordinate-swap symmetry: the two directions agree exactly
        assert got.delta_forward == pytest.approx(got.delta_backward, abs=1e-12)
    assert worst < 1e-12


def test_exact_pq_laws_are_distributions():
    P, Q = exact_pq_laws(4, 1.0, 0.3)
    assert sum(P.values()) == pytest.approx(1.0, abs=1e-12)
    assert sum(Q.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(Q[(v, u)] == pytest.approx(P[(u, v)], abs=1e-15) for (u, v) in P)


def test_engine_matches_exact_laws_at_moderate_n():
    # windows genuinely truncate here; reported delta must stay a tight
    # conservative envelope of the exact value
    n, eps, alpha = 100, 1.0, 0.25
    P, Q = exact_pq_laws(n, eps, alpha)
    for eps_c in (0.0, 0.3, 0.8):
        ec = math.exp(eps_c)
        exact = max(
            sum(max(0.0, P[k] - ec * Q.get(k, 0.0)) for k in P),
            sum(max(0.0, Q[k] - ec * P.get(k, 0.0)) for k in Q),
        )
        got = pq_divergence(AmplificationQuery(n=n, epsilon=eps, alpha=alpha, delta=1e-6), eps_c)
        assert got.truncation_mass < 1e-9
        assert exact <= got.reported_delta <= exact + 1e-9


def test_divergence_zero_at_local_budget():
    for n in (1, 2, 4, 50):
        query = AmplificationQuery(n=n, epsilon=1.0, alpha=0.25, delta=1e-8)
        res = pq_divergence(query, 1.0)
        assert max(res.delta_forward, res.delta_backward) < 1e-15


def test_divergence_monotone_in_eps_c():
    query = AmplificationQuery(n=200, epsilon=1.5, alpha=0.3, delta=1e-6)
    grid = np.linspace(0.0, 1.5, 12)
    vals = [pq_divergence(query, e).reported_delta for e in grid]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_amplified_epsilon_single_message_no_gain():
    got = amplified_epsilon(1, LN2, 1 / 3, 1e-6, tolerance=1e-4)
    assert got == pytest.approx(LN2, abs=1e-4)


def test_amplified_epsilon_monotone_in_n_and_alpha():
    vals = [amplified_epsilon(n, 1.0, 0.2, 1e-6) for n in (100, 1000, 10_000)]
    assert vals[0] >= vals[1] >= vals[2]
    by_alpha = [amplified_epsilon(1000, 1.0, a, 1e-6) for a in (0.05, 0.15, 0.3)]
    assert by_alpha[0] <= by_alpha[1] + 1e-4 <= by_alpha[2] + 2e-4


def test_vacuous_delta_amplifies_to_zero():
    assert amplified_epsilon(100, 1.0, 0.2, 1.0 - 1e-12) == 0.0


def test_tightness_ordering_small_grid():
    n, delta = 2000, 1e-6
    for eps in (0.5, 1.0):
        s = 4
        t = max(s + 1, math.floor(s * math.exp(eps) + 2 * s - 1))
        ec_col = amplified_epsilon(n, eps, collision_alpha(s, eps, t), delta)
        ec_gen = amplified_epsilon(n, eps, generic_clone_alpha(eps), delta)
        ef = efmrtt_closed_form(eps, delta, n)
        assert ec_col <= ec_gen + 1e-4 <= ef + 1e-4


def test_divergence_result_validation():
    with pytest.raises(ValueError):
        DivergenceResult(delta_forward=-0.1, delta_backward=0.0, truncation_mass=0.0)
    res = DivergenceResult(delta_forward=0.1, delta_backward=0.2, truncation_mass=0.01)
    assert res.reported_delta == pytest.approx(0.21)
