"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned to the values of the acceptance list.  Lines are
printed with capture disabled so they show up in ``pytest -v`` logs.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import convex_split_tv_brute, dh_brute, ds_brute
from oscl.analysis import rate_region, verify_extension_inequality
from oscl.cli import golden_check
from oscl.coupling import ConvexSplitSpec, verify_convex_split
from oscl.decoding import unipartite_rate, run_unipartite_bench, run_bipartite_bench
from oscl.divergence import dh_eps, ds_eps, ds_eps_iid_estimate, kl
from oscl.protocols import (BRConfig, SlepianWolfConfig, Task1Config, run_task1_br, run_task1_convex_split,
                            run_task8)
from oscl.protocols.br import plan_br
from oscl.protocols.instances import dsbc_table, random_markov_xym

GOLDEN_DIR = Path(__file__).parent / "golden"


def report(capsys, criterion: int, checks: list[tuple[str, bool, str]], elapsed: float) -> None:
    ok = all(c[1] for c in checks)
    with capsys.disabled():
        print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s)")
        for name, passed, detail in checks:
            print(f"    {'ok  ' if passed else 'FAIL'} {name}: {detail}")
    assert ok, "; ".join(f"{n}: {d}" for n, p, d in checks if not p)


def h2(p: float) -> float:
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# ---------------------------------------------------------------------------

def test_criterion_1_divergence_oracles(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    ds_diff = dh_diff = 0.0
    ds_exact_hits = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        p = rng.dirichlet(np.full(n, 0.7))
        q = rng.dirichlet(np.full(n, 0.7))
        p[rng.random(n) < 0.15] = 0.0                     # some zeros in p
        q[rng.random(n) < 0.1] = 0.0                      # and in q
        if p.sum() == 0:
            p[0] = 1.0
        p /= p.sum()
        if q.sum() == 0:
            q[-1] = 1.0
        q /= q.sum()
        eps = float(rng.uniform(0.01, 0.99))
        a, b = ds_eps(p, q, eps), ds_brute(p.tolist(), q.tolist(), eps)
        ds_exact_hits += a == b
        ds_diff = max(ds_diff, 0.0 if a == b else abs(a - b))
        a, b = dh_eps(p, q, eps, mode="exact").value, dh_brute(p.tolist(), q.tolist(), eps)
        dh_diff = max(dh_diff, 0.0 if a == b else abs(a - b))
    elapsed = time.perf_counter() - t0
    report(capsys, 1, [
        ("ds_eps equals tail scan", ds_exact_hits == 200, f"{ds_exact_hits}/200 bit-identical, max diff {ds_diff:.1e}"),
        ("dh_eps(exact) equals subset search", dh_diff <= 1e-12, f"max |diff| {dh_diff:.1e} (float summation order)"),
        ("runtime < 10 s", elapsed < 10, f"{elapsed:.2f} s"),
    ], elapsed)


def test_criterion_2_convex_split(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    eps, delta, bound = 0.1, 0.25, 0.35
    small, brute_gap = [], 0.0
    for _ in range(20):
        p = rng.dirichlet(np.ones(4)).reshape(2, 2)
        prior = p.sum(axis=0)
        R = min(math.ceil(ConvexSplitSpec(p, prior, 0).threshold(eps, delta)), 4)
        rep = verify_convex_split(ConvexSplitSpec(p, prior, R), eps, delta, method="exact")
        small.append(rep.tv)
        if R <= 2:
            brute_gap = max(brute_gap, abs(rep.tv - convex_split_tv_brute(p.tolist(), prior.tolist(), R)))
    large = []
    for _ in range(20):
        nx, nm = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        p = rng.dirichlet(np.ones(nx * nm)).reshape(nx, nm)
        prior = p.sum(axis=0)
        R = min(math.ceil(ConvexSplitSpec(p, prior, 0).threshold(eps, delta)), 12)
        rep = verify_convex_split(ConvexSplitSpec(p, prior, R), eps, delta, method="mc", n_samples=100_000,
                                  seed=int(rng.integers(1 << 31)))
        large.append((rep.tv, rep.std_error))
    elapsed = time.perf_counter() - t0
    worst_large = max(tv - (bound + 4 * se) for tv, se in large)
    report(capsys, 2, [
        ("exact tv <= 0.35 on 20 small instances (R capped at 4)", max(small) <= bound,
         f"max tv {max(small):.4f}"),
        ("exact tv agrees with codebook enumeration", brute_gap <= 1e-12, f"max gap {brute_gap:.1e}"),
        ("MC tv <= 0.35 + 4 se on 20 larger instances (R <= 12)", worst_large <= 0,
         f"max tv {max(t for t, _ in large):.4f}, worst slack {worst_large:.4f}"),
        ("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_3_position_decoding(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    eps, delta = 0.1, 0.25
    worst_err = worst_tv = -math.inf

    def bench(p, prior, d, seed):
        nonlocal worst_err, worst_tv
        out = run_unipartite_bench(p, prior, eps, d, trials=10_000, seed=seed)
        e, tv = out["slot_error"], out["output_tv"]
        worst_err = max(worst_err, e["value"] - (eps + d + 4 * e["std_error"]))
        worst_tv = max(worst_tv, tv["value"] - (eps + 2 * d + 0.02))
        return out["R"]

    # random joints with the marginal prior: D_H is at most about 2 bits here
    rates = [bench(p := rng.dirichlet(np.full(16, 0.3)).reshape(4, 4), p.sum(axis=0), delta, i) for i in range(20)]
    # near-bijective joints with random priors, kept when the rate is positive
    mismatched = []
    while len(mismatched) < 20:
        perm = np.eye(4)[rng.permutation(4)]
        p = (0.97 * perm + 0.03 / 4) / 4
        prior = rng.dirichlet(np.full(4, 0.5))
        if unipartite_rate(p, prior, eps, 0.5)[0] >= 1:
            mismatched.append(bench(p, prior, 0.5, 100 + len(mismatched)))
    elapsed = time.perf_counter() - t0
    report(capsys, 3, [
        ("Pr{J != J'} <= eps + delta + 4 sigma", worst_err <= 0,
         f"worst slack {worst_err:.4f}; rates {rates} (marginal prior), {mismatched} (random prior, delta 0.5)"),
        ("plug-in output tv <= eps + 2 delta + 0.02", worst_tv <= 0, f"worst slack {worst_tv:.4f}"),
        ("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s"),
    ], elapsed)


def _noisy_copy_instance(rng, n: int = 64, noise: float = 0.02) -> np.ndarray:
    """Y uniform; M a noisy copy of Y; N a noisy copy of a random relabelling of Y."""
    perm = rng.permutation(n)
    cm = (1 - noise) * np.eye(n) + noise / n
    cn = ((1 - noise) * np.eye(n) + noise / n)[perm]
    return (1 / n) * cm[:, :, None] * cn[:, None, :]


def test_criterion_4_bipartite_decoding(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    eps, delta = 0.2, 0.1
    premise_ok, premise_exact, worst = True, 0.0, -math.inf
    rows = []
    for i in range(10):
        p = _noisy_copy_instance(rng, noise=float(rng.uniform(0.005, 0.03)))
        pu, pv = p.sum(axis=(0, 2)), p.sum(axis=(0, 1))
        out = run_bipartite_bench(p, pu, pv, eps, delta, rate_rule="premise", trials=10_000, seed=i)
        # recompute the premise mass cell by cell
        py, pym, pyn = p.sum(axis=(1, 2)), p.sum(axis=2), p.sum(axis=1)
        s = math.log2(1 / delta)
        mass = 0.0
        for y, m, n in zip(*np.nonzero(p)):
            v = p[y, m, n]
            r1 = math.log2(v / (pu[m] * pyn[y, n]))
            r2 = math.log2(v / (pym[y, m] * pv[n]))
            r12 = math.log2(v / (py[y] * pu[m] * pv[n]))
            if r1 <= out["R1"] + s or r2 <= out["R2"] + s or r12 <= out["R1"] + out["R2"] + s:
                mass += v
        premise_exact = max(premise_exact, abs(mass - out["premise_mass"]))
        premise_ok &= out["premise_mass"] <= eps
        e = out["pair_error"]
        worst = max(worst, e["value"] - (eps + 3 * delta + 4 * e["std_error"]))
        rows.append((out["R1"], out["R2"], round(out["premise_mass"], 4), round(e["value"], 4)))
    elapsed = time.perf_counter() - t0
    report(capsys, 4, [
        ("premise mass exact (cell-by-cell recomputation)", premise_exact <= 1e-12, f"max gap {premise_exact:.1e}"),
        ("premise mass <= eps", premise_ok, f"(R1, R2, mass, error) = {rows}"),
        ("pair error <= eps + 3 delta + 4 sigma", worst <= 0, f"worst slack {worst:.4f}"),
        ("runtime < 120 s", elapsed < 120, f"{elapsed:.1f} s"),
    ], elapsed)


def _task1_instances():
    rng = np.random.default_rng(505)
    return [random_markov_xym(rng, 3, 3, 3) for _ in range(10)]


def test_criterion_5_task1_end_to_end(capsys):
    t0 = time.perf_counter()
    eps, delta = 0.1, 0.1
    worst, rows = -math.inf, []
    for i, p in enumerate(_task1_instances()):
        rep = run_task1_convex_split(Task1Config(p, eps, delta, trials=100_000, seed=i))
        worst = max(worst, rep.empirical_error - (eps + 4 * delta + 0.03))
        rows.append((rep.parameters["R"], rep.parameters["r"], round(rep.empirical_error, 4)))
    elapsed = time.perf_counter() - t0
    report(capsys, 5, [
        ("plug-in tv <= eps + 4 delta + 0.03", worst <= 0, f"worst slack {worst:.4f}; (R, r, tv) = {rows}"),
        ("runtime < 5 min", elapsed < 300, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_6_rejection_sampling(capsys):
    t0 = time.perf_counter()
    eps, delta = 0.1, 0.1
    worst, bits_ok, rows = -math.inf, True, []
    for i, p in enumerate(_task1_instances()):
        cfg = BRConfig(p, eps, delta, trials=100_000, seed=i)
        rep = run_task1_br(cfg)
        plan = plan_br(cfg)
        want_bits = math.ceil(2 ** plan.c / delta ** 2 - 1e-12)
        bits_ok &= rep.comm_bits["alice->bob"] == want_bits == plan.hash_bits
        worst = max(worst, rep.empirical_error - (eps + 3 * delta + 4 * rep.std_error))
        rows.append((want_bits, round(rep.empirical_error, 4)))
    elapsed = time.perf_counter() - t0
    report(capsys, 6, [
        ("error <= eps + 3 delta + 4 sigma", worst <= 0, f"worst slack {worst:.4f}"),
        ("wire bits == ceil(2^c / delta^2)", bits_ok, f"(bits, error) = {rows}"),
        ("runtime < 5 min", elapsed < 300, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_7_slepian_wolf_sweep(capsys):
    t0 = time.perf_counter()
    n, delta, trials = 12, 0.05, 2000
    src = {"kind": "dsbc", "n": n, "crossover": 0.1}
    need = n + 2 * math.log2(3 / delta)
    top = math.ceil(need - 1e-12)
    points = list(range(top - 8, top + 1))           # bin exponents 8 .. 0
    rows, bound_ok, mono_ok, prev, checked = [], True, True, None, 0
    for R in points:
        rep = run_task8(SlepianWolfConfig(src, delta, R_A=R, R_B=R, trials=trials, seed=7, grid_cap=1 << 16))
        err, se = rep.empirical_error, rep.std_error
        choice = rep.details["choice_rule_bound"]
        if choice < 1:
            checked += 1
            bound_ok &= err <= choice + 4 * se
        if prev is not None:
            mono_ok &= err <= prev[0] + 2 * math.hypot(se, prev[1]) + 1e-15
        prev = (err, se)
        rows.append((R, rep.parameters["r_A"], round(err, 4), round(choice, 4)))
    # the (n, n) point; at delta = 0.05 its bin grid would be 2^24, so it runs at 0.1
    nn = run_task8(SlepianWolfConfig(src, 0.1, R_A=n, R_B=n, trials=trials, seed=7, grid_cap=1 << 22))
    elapsed = time.perf_counter() - t0
    report(capsys, 7, [
        ("block error <= choice-rule bound where that bound < 1", bound_ok and checked > 0,
         f"{checked} points checked; (R, r, error, bound) = {rows}"),
        ("error non-increasing within 2 sigma along the sum-rate sweep", mono_ok, "see rows"),
        ("error at (R_A, R_B) = (n, n) <= 1e-3", nn.empirical_error <= 1e-3,
         f"{nn.empirical_error:.4f} with r_A = r_B = {nn.parameters['r_A']} at delta 0.1 (codebook needs R + r >= "
         f"{nn.details['codebook_exponent_needed'][0]:.2f})"),
        ("runtime < 10 min", elapsed < 600, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_8_extension_inequality(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    eps = 0.1
    margins, eq_gap, q_le, p_ok = [], 0.0, True, True
    for _ in range(100):
        p = random_markov_xym(rng, int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        r = verify_extension_inequality(p, eps=eps, k_cap=64)
        margins.append(r.margin)
        eq_gap = max(eq_gap, abs(r.test_q_mass - r.test_q_target))
        q_le &= r.test_q_le
        p_ok &= r.test_p_mass >= 1 - eps - 1e-12
    elapsed = time.perf_counter() - t0
    report(capsys, 8, [
        ("inequality margin >= -1e-4", min(margins) >= -1e-4, f"min margin {min(margins):.4f}"),
        ("set mass under the product equals 2^ell/|M| to 1e-12", eq_gap <= 1e-12,
         f"max gap {eq_gap:.4f} (the inequality <= holds on all: {q_le})"),
        ("set mass under the joint >= 1 - eps", p_ok, "all instances" if p_ok else "violated"),
        ("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_9_asymptotics(capsys):
    t0 = time.perf_counter()
    p, q = np.array([0.3, 0.7]), np.array([0.5, 0.5])
    direct = sum(a * math.log2(a / b) for a, b in zip(p, q))
    est, se = ds_eps_iid_estimate(p, q, 500, 0.1, n_samples=20_000, seed=9)
    rate = est / 500
    region = rate_region(8, dsbc_table(1, 0.1))
    gap = abs(region.bounds["R_A"] - h2(0.1))
    elapsed = time.perf_counter() - t0
    report(capsys, 9, [
        ("KL by direct summation is 0.11871", abs(direct - 0.11871) < 5e-6 and abs(kl(p, q) - direct) < 1e-15,
         f"{direct:.6f}"),
        ("|D_s^0.1(p^500||q^500)/500 - 0.11871| <= 0.1", abs(rate - 0.11871) <= 0.1,
         f"{rate:.5f} (se {se / 500:.5f})"),
        ("Task-8 region corner equals h2(0.1) to 1e-9", gap <= 1e-9, f"gap {gap:.1e}"),
        ("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s"),
    ], elapsed)


def test_criterion_10_determinism(capsys):
    t0 = time.perf_counter()
    first = golden_check(GOLDEN_DIR, workers=1)
    second = golden_check(GOLDEN_DIR, workers=1)
    eight = golden_check(GOLDEN_DIR, workers=8)
    names = [r["name"] for r in first]
    fails = lambda res: [r["name"] for r in res if not r["passed"]]
    elapsed = time.perf_counter() - t0
    report(capsys, 10, [
        ("golden files present", len(names) > 0, f"{len(names)} files"),
        ("byte-identical, first run, 1 worker", not fails(first), f"failures {fails(first)}"),
        ("byte-identical, second run, 1 worker", not fails(second), f"failures {fails(second)}"),
        ("byte-identical, 8 workers", not fails(eight), f"failures {fails(eight)}"),
    ], elapsed)
