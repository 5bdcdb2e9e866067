import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from oracles import dh_brute, ds_brute
from strategies import eps_values, joint_tables, pq_pairs, prob_vectors
from oscl.divergence import (cond_entropy, cond_mutual_info, dh_eps, dmax, dmax_eps, ds_eps, ds_eps_iid,
                             ds_eps_iid_estimate, entropy, kl, log_ratios, mutual_info, spectrum)
from oscl.errors import ConfigurationError
from oscl.prob import JointDist


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# --- frozen values (derived by hand and by the brute-force oracles) -----------

def test_ds_frozen_values():
    assert ds_eps([0.1, 0.9], [0.5, 0.5], 0.05) == pytest.approx(math.log2(1.8), abs=1e-12)
    # the top ratio carries mass 0.1 >= eps, so it cannot be dropped
    assert ds_eps([0.1, 0.9], [0.01, 0.99], 0.1) == pytest.approx(math.log2(10), abs=1e-12)
    assert ds_eps([0.1, 0.9], [0.01, 0.99], 0.11) == pytest.approx(math.log2(0.9 / 0.99), abs=1e-12)
    assert ds_eps([0.5, 0.5], [1.0, 0.0], 0.5) == math.inf


def test_dh_frozen_values():
    r = dh_eps([0.5, 0.3, 0.2], [0.2, 0.3, 0.5], 0.5, mode="exact")
    assert r.value == pytest.approx(-math.log2(0.2), abs=1e-12)
    assert r.set.to_mask().tolist() == [True, False, False]
    assert dh_eps([0.5, 0.3, 0.2], [0.2, 0.3, 0.5], 0.1).value == 0.0


def test_kl_and_dmax():
    assert kl([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.5 * math.log2(2) + 0.5 * math.log2(2 / 3), abs=1e-12)
    assert kl([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert dmax([0.5, 0.5], [0.25, 0.75]) == pytest.approx(1.0)
    assert np.isnan(log_ratios([0.0, 1.0], [0.5, 0.5])[0])


# --- oracle equivalence --------------------------------------------------------

@given(pq_pairs(max_size=7), st.sampled_from([0.0, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0]))
def test_ds_matches_tail_scan(pq, eps):
    p, q = pq
    assert ds_eps(p, q, eps) == ds_brute(p.tolist(), q.tolist(), eps)


@given(pq_pairs(max_size=7), st.sampled_from([0.0, 0.05, 0.1, 0.3, 0.5, 0.9]))
def test_dh_exact_matches_subset_search(pq, eps):
    p, q = pq
    got = dh_eps(p, q, eps, mode="exact").value
    want = dh_brute(p.tolist(), q.tolist(), eps)
    assert got == want or math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)


# --- invariants ----------------------------------------------------------------

@given(pq_pairs(q_full_support=True), eps_values, eps_values)
def test_ds_nonincreasing_in_eps(pq, a, b):
    p, q = pq
    lo, hi = sorted((a, b))
    assert ds_eps(p, q, hi) <= ds_eps(p, q, lo)


@given(pq_pairs(), eps_values, eps_values)
def test_dh_nondecreasing_in_eps(pq, a, b):
    p, q = pq
    lo, hi = sorted((a, b))
    assert dh_eps(p, q, lo).value <= dh_eps(p, q, hi).value + 1e-12


@given(pq_pairs(), eps_values)
def test_greedy_never_beats_exact(pq, eps):
    p, q = pq
    assert dh_eps(p, q, eps, "greedy").value <= dh_eps(p, q, eps, "exact").value + 1e-12


@given(pq_pairs(), eps_values)
def test_set_is_feasible(pq, eps):
    p, q = pq
    r = dh_eps(p, q, eps)
    assert r.p_mass >= 1 - eps - 1e-12
    assert r.q_mass == pytest.approx(float(q[r.set.to_mask()].sum()))


@given(pq_pairs(), st.floats(0.01, 0.99))
def test_dh_dominates_spectrum_at_complement(pq, eps):
    # the set {L >= D_s^(1-eps)} is feasible for D_H^eps
    p, q = pq
    assert dh_eps(p, q, eps).value >= ds_eps(p, q, 1 - eps) - 1e-9


@given(pq_pairs(q_full_support=True))
def test_kl_between_spectrum_limits(pq):
    p, q = pq
    assert kl(p, q) <= dmax(p, q) + 1e-12
    assert kl(p, q) >= -1e-12


@given(prob_vectors(), eps_values)
def test_self_divergences(p, eps):
    assert ds_eps(p, p, eps) == 0.0
    assert dh_eps(p, p, eps).value <= -math.log2(1 - eps) + 1e-12


@given(pq_pairs(q_full_support=True), st.floats(0.0, 0.9))
def test_smooth_max_below_max(pq, eps):
    p, q = pq
    assert dmax_eps(p, q, eps) <= dmax(p, q) + 1e-12


@given(pq_pairs(q_full_support=True))
def test_spectrum_masses_sum_to_one(pq):
    p, q = pq
    pts = spectrum(p, q)
    assert sum(m for _, m in pts) == pytest.approx(1.0)
    assert all(a.log_ratio > b.log_ratio for a, b in zip(pts, pts[1:]))


def test_input_validation():
    with pytest.raises(ConfigurationError):
        ds_eps([0.5, 0.6], [0.5, 0.5], 0.1)
    with pytest.raises(ConfigurationError):
        dh_eps([0.5, 0.5], [0.5, 0.5], 1.0)
    with pytest.raises(ConfigurationError):
        dh_eps(np.full(30, 1 / 30), np.full(30, 1 / 30), 0.1, mode="exact")


# --- i.i.d. blocks ---------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4])
def test_iid_types_match_sequence_enumeration(n):
    p, q = np.array([0.3, 0.5, 0.2]), np.array([0.5, 0.25, 0.25])
    pn, qn = [], []
    for seq in itertools.product(range(3), repeat=n):
        pn.append(math.prod(p[list(seq)]))
        qn.append(math.prod(q[list(seq)]))
    for eps in (0.05, 0.2, 0.6):
        assert ds_eps_iid(p, q, n, eps) == pytest.approx(ds_brute(pn, qn, eps), abs=1e-9)


def test_iid_estimate_exact_method():
    v, se = ds_eps_iid_estimate([0.3, 0.7], [0.5, 0.5], 6, 0.1, method="exact")
    assert se == 0.0 and v == ds_eps_iid([0.3, 0.7], [0.5, 0.5], 6, 0.1)


# --- Shannon quantities -----------------------------------------------------------

def test_shannon_on_binary_symmetric_channel():
    j = JointDist([("X", 2), ("Y", 2)], [[0.45, 0.05], [0.05, 0.45]])
    assert entropy(j) == pytest.approx(1 + h2(0.1))
    assert cond_entropy(j, ["X"], ["Y"]) == pytest.approx(h2(0.1))
    assert mutual_info(j, ["X"], ["Y"]) == pytest.approx(1 - h2(0.1))


@given(joint_tables((2, 2, 3)))
def test_chain_rule(t):
    j = JointDist([("A", 2), ("B", 2), ("C", 3)], t)
    lhs = mutual_info(j, ["A"], ["B", "C"])
    rhs = mutual_info(j, ["A"], ["C"]) + cond_mutual_info(j, ["A"], ["B"], ["C"])
    assert lhs == pytest.approx(rhs, abs=1e-9)
    assert cond_mutual_info(j, ["A"], ["B"], ["C"]) >= -1e-12
