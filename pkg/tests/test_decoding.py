import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strategies import joint_tables
from oscl.acceptance import AcceptanceSet
from oscl.decoding import (BipartiteDensities, BipartiteThresholds, DecoderSpec, bipartite_premise_mass,
                           build_test_from_dh, decode_bipartite, decode_bipartite_batch, decode_unipartite,
                           decode_unipartite_batch, bipartite_rates, run_bipartite_bench, run_unipartite_bench,
                           unipartite_rate)
from oscl.divergence import dh_eps
from oscl.errors import ConfigurationError
from oscl.rng import StreamBank


def spec_from_mask(mask):
    return AcceptanceSet(("Y", "M"), mask.shape, mask)


@given(st.lists(st.booleans(), min_size=6, max_size=6), st.lists(st.integers(0, 2), min_size=5, max_size=5),
       st.integers(0, 1))
def test_scalar_and_batch_unipartite_agree(bits, book, y):
    mask = np.array(bits).reshape(2, 3)
    spec = DecoderSpec(spec_from_mask(mask), 5)
    got = decode_unipartite(spec, y, book)
    batch = decode_unipartite_batch(mask, np.array([y]), np.array([book]))[0]
    passing = [j for j, m in enumerate(book) if mask[y, m]]
    assert got == (passing[0] if passing else None)
    assert batch == (passing[0] if passing else -1)


def test_slots_are_zero_based():
    mask = np.array([[True, True]])
    assert decode_unipartite(DecoderSpec(spec_from_mask(mask), 3), 0, [1, 0, 1]) == 0


@given(joint_tables((2, 2, 2)), st.integers(0, 3), st.integers(0, 3))
def test_bipartite_scan_is_lexicographic_first_pass(p, r1, r2):
    pu, pv = np.array([0.5, 0.5]), np.array([0.5, 0.5])
    dens = BipartiteDensities.from_joint(p, pu, pv)
    th = BipartiteThresholds.from_rates(r1 * 0.25, r2 * 0.25, 0.9)
    rng = np.random.default_rng(r1 * 7 + r2)
    cm, cn = rng.integers(0, 2, 3), rng.integers(0, 2, 4)
    y = int(rng.integers(0, 2))
    got = decode_bipartite(th, y, cm, cn, dens)
    want = None
    for j, k in itertools.product(range(3), range(4)):
        a, b, c = dens.lr1[y, cm[j], cn[k]], dens.lr2[y, cm[j], cn[k]], dens.lr12[y, cm[j], cn[k]]
        if a > th.t1 and b > th.t2 and c > th.t12:
            want = (j, k)
            break
    assert got == want
    from oscl.decoding import build_test_from_thresholds
    mask = build_test_from_thresholds(th, dens).to_mask()
    j, k = decode_bipartite_batch(mask, np.array([y]), cm[None], cn[None])
    assert (None if j[0] < 0 else (int(j[0]), int(k[0]))) == want


@given(joint_tables((2, 2, 2)), st.integers(0, 6), st.integers(0, 6))
def test_premise_mass_is_complement_of_test(p, r1, r2):
    pu, pv = np.array([0.4, 0.6]), np.array([0.5, 0.5])
    from oscl.decoding import build_test_from_thresholds
    dens = BipartiteDensities.from_joint(p, pu, pv)
    mask = build_test_from_thresholds(BipartiteThresholds.from_rates(r1, r2, 0.5), dens).to_mask()
    assert bipartite_premise_mass(p, pu, pv, r1, r2, 0.5) == pytest.approx(1 - p[mask].sum(), abs=1e-12)


def test_unipartite_rate_formula():
    p = np.array([[0.4, 0.05], [0.05, 0.5]])
    prior = p.sum(axis=0)
    R, dh = unipartite_rate(p, prior, 0.1, 0.25)
    assert dh == dh_eps(p, np.outer(p.sum(axis=1), prior), 0.1).value
    assert R == math.floor(max(dh - 2, 0))


def test_unipartite_bench_within_guarantee():
    # noisy identity on 8 symbols: D_H is about 3 bits, so the allowed rate is positive at delta = 0.5
    p = (np.eye(8) * 0.9 + 0.1 / 8) / 8
    out = run_unipartite_bench(p, p.sum(axis=0), 0.1, 0.5, trials=4000, seed=3)
    assert out["R"] == out["R_max"] >= 1
    err, tv = out["slot_error"], out["output_tv"]
    assert err["value"] <= out["slot_error_bound"] + 4 * err["std_error"]
    assert tv["value"] <= out["output_tv_bound"] + 4 * tv["std_error"] + tv["bias_bound"]
    assert out["scan_order"] == "ascending"


def test_bipartite_bench_reports_premise():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.5
    out = run_bipartite_bench(p, [0.5, 0.5], [0.5, 0.5], 0.2, 0.05, R1=0, R2=0, trials=2000, seed=1)
    assert out["premise_mass"] == bipartite_premise_mass(p, [0.5, 0.5], [0.5, 0.5], 0, 0, 0.05)
    if out["premise_holds"]:
        assert out["pair_error"]["value"] <= out["pair_error_bound"] + 4 * out["pair_error"]["std_error"]


def test_bipartite_rates_respect_caps():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    r = bipartite_rates(p, [0.5, 0.5], [0.5, 0.5], (0.05, 0.05, 0.05), 0.1)
    assert r["R1"] <= r["caps"][0] and r["R2"] <= r["caps"][1] and r["R1"] + r["R2"] <= r["caps"][2]


def test_decoder_spec_validation():
    with pytest.raises(ConfigurationError):
        DecoderSpec(spec_from_mask(np.ones((2, 2), bool)), 0)
    with pytest.raises(ConfigurationError):
        decode_unipartite(DecoderSpec(spec_from_mask(np.ones((2, 2), bool)), 3), 0, [0, 1])
