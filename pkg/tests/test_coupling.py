import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oracles import convex_split_tv_brute
from strategies import joint_tables
from oscl.coupling import (BipartiteSplitSpec, ConvexSplitSpec, bipartite_premise_mass, bipartite_split_density,
                           bipartite_split_sample, convex_split_density, convex_split_exact, convex_split_sample,
                           product_density, smooth_truncate, verify_convex_split)
from oscl.errors import ConfigurationError
from oscl.rng import StreamBank


def chi2_pvalue(counts, probs):
    counts = np.asarray(counts, float).ravel()
    exp = np.asarray(probs, float).ravel() * counts.sum()
    keep = exp > 0
    assert counts[~keep].sum() == 0, "observed a zero-probability cell"
    return stats.chisquare(counts[keep], exp[keep]).pvalue


@given(joint_tables((2, 2)), st.integers(0, 2))
def test_exact_tv_matches_codebook_enumeration(p, R):
    prior = np.array([0.4, 0.6])
    spec = ConvexSplitSpec(p, prior, R)
    tv, _ = convex_split_exact(spec)
    assert tv == pytest.approx(convex_split_tv_brute(p.tolist(), prior.tolist(), R), abs=1e-12)


def test_exact_tv_three_symbols():
    p = np.array([[0.2, 0.1, 0.0], [0.05, 0.15, 0.5]])
    prior = np.array([0.3, 0.3, 0.4])
    for R in (0, 1):
        tv, _ = convex_split_exact(ConvexSplitSpec(p, prior, R))
        assert tv == pytest.approx(convex_split_tv_brute(p.tolist(), prior.tolist(), R), abs=1e-12)


def test_tv_shrinks_with_rate():
    p = np.array([[0.4, 0.1], [0.1, 0.4]])
    tvs = [convex_split_exact(ConvexSplitSpec(p, p.sum(axis=0), R))[0] for R in range(6)]
    assert all(b <= a + 1e-12 for a, b in zip(tvs, tvs[1:]))


def test_densities_normalize():
    p = np.array([[0.3, 0.2], [0.1, 0.4]])
    spec = ConvexSplitSpec(p, np.array([0.5, 0.5]), 2)
    books = np.array(list(itertools.product(range(2), repeat=4)))
    total_split = total_prod = 0.0
    for x in range(2):
        xs = np.full(len(books), x)
        total_split += np.exp2(convex_split_density(spec, xs, books)).sum()
        total_prod += np.exp2(product_density(spec, xs, books)).sum()
    assert total_split == pytest.approx(1.0) and total_prod == pytest.approx(1.0)


def test_bipartite_density_normalizes():
    p = np.array([[[0.1, 0.2], [0.05, 0.15]], [[0.2, 0.1], [0.1, 0.1]]])
    spec = BipartiteSplitSpec(p, [0.5, 0.5], [0.3, 0.7], 1, 1)
    total = 0.0
    for x, a, b in itertools.product(range(2), itertools.product(range(2), repeat=2),
                                     itertools.product(range(2), repeat=2)):
        total += 2.0 ** bipartite_split_density(spec, x, [a], [b])
    assert total == pytest.approx(1.0)


def test_sampler_law():
    p = np.array([[0.3, 0.2, 0.0], [0.1, 0.1, 0.3]])
    prior = np.array([0.2, 0.5, 0.3])
    spec = ConvexSplitSpec(p, prior, 2)
    d = convex_split_sample(spec, StreamBank(11, np.arange(30000)))
    rows = np.arange(d.j.size)
    planted = d.codewords[rows, d.j]
    assert chi2_pvalue(np.bincount(d.x * 3 + planted, minlength=6), p) > 1e-3
    other = d.codewords[rows, (d.j + 1) % 4]
    assert chi2_pvalue(np.bincount(other, minlength=3), prior) > 1e-3
    assert chi2_pvalue(np.bincount(d.j, minlength=4), np.full(4, 0.25)) > 1e-3


def test_bipartite_sampler_law():
    p = np.array([[[0.1, 0.2], [0.05, 0.15]], [[0.2, 0.1], [0.1, 0.1]]])
    spec = BipartiteSplitSpec(p, [0.5, 0.5], [0.3, 0.7], 1, 2)
    d = bipartite_split_sample(spec, StreamBank(3, np.arange(30000)))
    rows = np.arange(d.j.size)
    cell = d.x * 4 + d.codewords[rows, d.j] * 2 + d.codewords_n[rows, d.k]
    assert chi2_pvalue(np.bincount(cell, minlength=8), p) > 1e-3


def bipartite_premise_brute(p, pu, pv, R1, R2, delta):
    s = delta ** 2 / 24
    total = 0.0
    px = p.sum(axis=(1, 2))
    for x, m, n in itertools.product(*map(range, p.shape)):
        if p[x, m, n] == 0:
            continue
        rm = p[x, m].sum() / (px[x] * pu[m])
        rn = p[x, :, n].sum() / (px[x] * pv[n])
        rmn = p[x, m, n] / (px[x] * pu[m] * pv[n])
        if rm >= s * 2 ** R1 or rn >= s * 2 ** R2 or rmn >= s * 2 ** (R1 + R2):
            total += p[x, m, n]
    return total


@given(joint_tables((2, 2, 3)), st.integers(0, 12), st.integers(0, 12))
def test_bipartite_premise_matches_loop(p, R1, R2):
    pu, pv = np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5])
    got = bipartite_premise_mass(p, pu, pv, R1, R2, 0.3)
    assert got == pytest.approx(bipartite_premise_brute(p, pu, pv, R1, R2, 0.3), abs=1e-12)


@settings(max_examples=25)
@given(joint_tables((2, 2)))
def test_guarantee_at_threshold_rate(p):
    prior = p.sum(axis=0)
    if np.any(prior == 0):
        prior = np.array([0.5, 0.5])
    spec0 = ConvexSplitSpec(p, prior, 0)
    R = math.ceil(spec0.threshold(0.1, 0.5))
    rep = verify_convex_split(ConvexSplitSpec(p, prior, R), 0.1, 0.5)
    assert rep.rate_condition_met and rep.tv <= 0.6 + 1e-12


def test_monte_carlo_agrees_with_exact():
    p = np.array([[0.35, 0.15], [0.05, 0.45]])
    spec = ConvexSplitSpec(p, np.array([0.4, 0.6]), 3)
    exact = verify_convex_split(spec, 0.1, 0.25).tv
    for method in ("mc", "mc-codebook"):
        rep = verify_convex_split(spec, 0.1, 0.25, method=method, n_samples=40000, seed=5)
        assert abs(rep.tv - exact) <= 5 * rep.std_error + 1e-3


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ConvexSplitSpec(np.array([[0.5, 0.5]]), np.array([1.0, 0.0]), 1)
    with pytest.raises(ConfigurationError):
        ConvexSplitSpec(np.array([[0.5, 0.5]]), np.array([0.5, 0.5]), -1)


@given(joint_tables((3, 3)), st.floats(0.0, 2.0))
def test_smoothing_caps_ratios_and_keeps_input_marginal(p, c):
    prior = np.array([0.2, 0.3, 0.5])
    sm = smooth_truncate(p, prior, c)
    assert np.allclose(sm.smoothed.sum(axis=1), p.sum(axis=1))
    assert sm.tv_cost <= sm.truncated_mass + 1e-12
    px = p.sum(axis=1)
    for x in np.flatnonzero(px > 0):
        assert np.all(sm.smoothed[x] / px[x] / prior <= 2.0 ** (c + 1) + 1e-9)


@given(joint_tables((3, 3)), st.floats(0.0, 2.0))
def test_smoothing_distance_closed_form(p, c):
    # the refill lands partly on the dropped symbols, so the distance is
    # sum_x p(x) eps_x (1 - prior(bad_x)), not the truncated mass itself
    prior = np.array([0.2, 0.3, 0.5])
    sm = smooth_truncate(p, prior, c)
    want = 0.0
    for x, row in enumerate(p):
        if row.sum() > 0:
            bad = row / row.sum() / prior > 2.0 ** c
            want += row[bad].sum() * (1 - prior[bad].sum())
    assert sm.tv_cost == pytest.approx(want, abs=1e-12)
