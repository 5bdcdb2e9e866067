import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import ds_brute
from oscl.analysis import (br_divergence, br_infimum, build_extension, check_divergence_chain, rate_region,
                           task1_br_bound, task6_bound_display, verify_extension_inequality)
from oscl.protocols.instances import dsbc_table, random_markov_xym


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


W = np.array([[0.75, 0.25], [0.25, 0.75]])
SYM = 0.5 * W[:, :, None] * W[:, None, :]       # X uniform, Y and M through the same BSC(1/4)


def test_extension_of_small_kernel():
    e = build_extension(np.array([[3 / 8, 1 / 8], [1 / 4, 1 / 4]]))
    assert e.K == 4 and e.counts.tolist() == [[3, 1], [2, 2]]
    assert e.snap_exact and e.d0 == 1.0


def test_br_divergence_matches_tail_scan():
    p = random_markov_xym(np.random.default_rng(5), 2, 2, 2)
    p_ym = p.sum(axis=0)
    kernel = p_ym / p_ym.sum(axis=1, keepdims=True)
    p_y = p.sum(axis=(0, 2))
    p_x_y = p.sum(axis=2) / p_y[None, :]
    ref = p_y[None, :, None] * p_x_y[:, :, None] * kernel[None, :, :]
    for eps in (0.05, 0.2):
        assert br_divergence(p, kernel, eps) == ds_brute(p.ravel().tolist(), ref.ravel().tolist(), eps)
        assert task1_br_bound(p, kernel, eps, 0.1) >= br_divergence(p, kernel, eps)


def test_br_infimum_not_above_default_kernel():
    p = random_markov_xym(np.random.default_rng(6), 2, 2, 2)
    s = br_infimum(p, 0.1, resolution=4)
    p_ym = p.sum(axis=0)
    assert s.value <= br_divergence(p, p_ym / p_ym.sum(axis=1, keepdims=True), 0.1) + 1e-12
    assert s.exhaustive


def test_chain_values_on_symmetric_instance():
    # frozen: every quantity was recomputed by enumeration when this case was found
    c = check_divergence_chain(SYM, 0.1)
    assert c.br == pytest.approx(math.log2(1.5), abs=1e-12)
    assert c.ext_canonical == pytest.approx(math.log2(9 / 8), abs=1e-12)
    assert c.ds_extended == pytest.approx(2.0, abs=1e-12)
    assert c.ds_plain == pytest.approx(1.0, abs=1e-12)
    assert c.checks["br >= ext_canonical"]["holds"]
    assert c.checks["ds_plain >= br"]["holds"]
    # the extension cost falls below the extended spectrum divergence here
    assert not c.checks["ext_canonical >= ds_extended"]["holds"]


def test_extension_inequality_symmetric_instance():
    r = verify_extension_inequality(SYM, eps=0.1)
    assert r.holds and r.margin == pytest.approx(math.log2(16 / 9), abs=1e-12)
    assert r.dh == pytest.approx(math.log2(16 / 9), abs=1e-12)
    assert r.test_q_mass == 0.875 and r.test_q_le and not r.test_q_equal


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_extension_inequality_margin_nonnegative(seed):
    p = random_markov_xym(np.random.default_rng(seed), 2, 2, 2)
    r = verify_extension_inequality(p, eps=0.1, k_cap=64)
    assert r.margin >= -1e-9 and r.test_q_le and r.test_p_ok


def test_rate_region_dsbc():
    r = rate_region(8, dsbc_table(1, 0.1))
    assert r.bounds["R_A"] == pytest.approx(h2(0.1), abs=1e-12)
    assert r.bounds["R_A + R_B"] == pytest.approx(1 + h2(0.1), abs=1e-12)
    assert r.contains({"R_A": 1.0, "R_B": 0.5}) and not r.contains({"R_A": 0.4, "R_B": 0.4})


def test_task6_rows():
    d = task6_bound_display(np.full((2,) * 8, 1 / 256), 0.1, 0.05)
    assert len(d["rows"]) == 15
    assert d["error_bound"] == pytest.approx(20 * 0.1 + 30 * 0.05)
