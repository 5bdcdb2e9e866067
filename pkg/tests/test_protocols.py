import math

import numpy as np
import pytest

from oscl.errors import ConfigurationError
from oscl.protocols import (BRConfig, LossyConfig, OneSenderConfig, SlepianWolfConfig, Task1Config,
                            TwoSenderConfig, run_task1_br, run_task1_convex_split, run_task2, run_task2_identity,
                            run_task3, run_task4, run_task5, run_task7, run_task8, run_task9)
from oscl.protocols.br import plan_br
from oscl.protocols.instances import dsbc_table, random_markov_xym, random_one_sender

N16 = 16
PXY16 = (0.8 * np.eye(N16) + 0.2 / N16) / N16
EYE = np.eye(N16)


def assert_within(rep, sigmas=4.0):
    assert rep.status == "ok"
    assert rep.premises_hold, [c.to_dict() for c in rep.premise_checks if not c.holds]
    assert rep.within_bound(sigmas) is True, (rep.empirical_error, rep.theorem_bound)


def same(a, b):
    return a.to_dict(wall_time=False) == b.to_dict(wall_time=False)


# --- message compression with side information ------------------------------------

def test_task1_convex_split_bound_and_rate():
    p = random_markov_xym(np.random.default_rng(1))
    rep = run_task1_convex_split(Task1Config(p, 0.1, 0.25, trials=4000, seed=2))
    assert_within(rep)
    assert rep.comm_bits["alice->bob"] == rep.parameters["R"]
    assert same(rep, run_task1_convex_split(Task1Config(p, 0.1, 0.25, trials=4000, seed=2)))


def test_task1_rejects_non_markov():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.4
    p[0, 1, 1] = p[1, 0, 0] = 0.1
    with pytest.raises(ConfigurationError):
        run_task1_convex_split(Task1Config(p, 0.1, 0.25, trials=10))


def test_task1_br_wire_bits():
    p = random_markov_xym(np.random.default_rng(3))
    cfg = BRConfig(p, 0.1, 0.25, trials=4000, seed=1)
    rep = run_task1_br(cfg)
    plan = plan_br(cfg)
    assert plan.hash_bits == math.ceil(2 ** plan.c / 0.25 ** 2 - 1e-12)
    assert rep.comm_bits["alice->bob"] == plan.hash_bits
    assert_within(rep)


# --- two senders ----------------------------------------------------------------

P4 = PXY16[:, :, None, None] * EYE[:, None, :, None] * EYE[None, :, None, :]


def test_task2_bound():
    assert_within(run_task2(TwoSenderConfig(P4, 0.25, eps=0.3, trials=3000)))


def test_task3_bound_with_trivial_side_information():
    assert_within(run_task3(TwoSenderConfig(P4[:, :, None], 0.25, eps=0.6, trials=3000)))


def test_task9_block_error():
    p9 = PXY16[:, :, None] * EYE[None, :, :]
    rep = run_task9(TwoSenderConfig(p9, 0.25, eps=0.6, trials=3000))
    assert_within(rep)
    assert rep.error_kind.startswith("block error")


def test_task2_short_codebooks_void_the_guarantee():
    rep = run_task2(TwoSenderConfig(P4, 0.25, eps=0.3, R_A=0, r_A=0, R_B=0, r_B=0, trials=10))
    failed = {c.name for c in rep.premise_checks if not c.holds}
    assert failed == {"codebook A exponent R_A + r_A", "codebook B exponent R_B + r_B"}
    assert rep.theorem_bound is None and rep.within_bound() is None


def test_task2_infeasible_split_is_reported_not_run():
    rep = run_task2(TwoSenderConfig(P4, 0.25, eps_parts=(0.01, 0.01, 0.01), R_A=2, R_B=2, rate_rule="dh",
                                    trials=10))
    assert rep.status == "infeasible" and rep.empirical_error is None
    assert rep.to_dict()["status"] == "infeasible"


# --- one sender, two receivers ---------------------------------------------------------

def test_task4_and_task5():
    p = random_one_sender(np.random.default_rng(0))
    assert_within(run_task4(OneSenderConfig(p[:, 0, 0], 0.1, eps=0.5, trials=3000)))
    assert_within(run_task5(OneSenderConfig(p, 0.1, eps=0.5, trials=3000)))


def test_task5_engines_agree():
    p = np.zeros((2, 1, 1, 2, 2))
    p[0, 0, 0, 0, 0] = p[1, 0, 0, 1, 1] = 0.5
    kw = dict(eps=0.5, R_B=2, R_C=2, r_B=0, r_C=0, trials=4000)
    a = run_task5(OneSenderConfig(p, 0.1, engine="collapsed", **kw))
    b = run_task5(OneSenderConfig(p, 0.1, engine="literal", **kw))
    se = math.hypot(a.std_error, b.std_error)
    assert abs(a.empirical_error - b.empirical_error) <= 4 * se + a.bias_bound + b.bias_bound


# --- lossy and distributed compression ---------------------------------------------

def test_task7_exceedance_and_derandomization():
    pxy = np.array([[0.4, 0.1], [0.1, 0.4]])
    rep = run_task7(LossyConfig(pxy, np.eye(2), np.array([[0, 1], [0, 1]]), 1 - np.eye(2), 1, 0.1, 0.1,
                                trials=3000, strings=4, trials_per_string=500))
    assert_within(rep)
    d = rep.details["derandomized"]
    assert d["best_exceedance"] <= d["mean_exceedance"] and d["min_le_mean"]
    assert rep.details["ideal_exceedance_delta1"] == 0.0


def test_task8_dsbc_and_table_sources_agree():
    kw = dict(delta=0.3, R_A=9, R_B=9, trials=2000)
    a = run_task8(SlepianWolfConfig({"kind": "dsbc", "n": 2, "crossover": 0.1}, **kw))
    b = run_task8(SlepianWolfConfig(dsbc_table(2, 0.1), **kw))
    assert_within(a)
    assert_within(b)
    assert a.theorem_bound == pytest.approx(b.theorem_bound)


def test_task8_worker_independence():
    cfg = SlepianWolfConfig({"kind": "dsbc", "n": 3, "crossover": 0.1}, 0.3, R_A=8, R_B=8, trials=9000)
    assert same(run_task8(cfg, workers=1), run_task8(cfg, workers=2))


def test_task2_identity_view():
    rep = run_task2_identity(SlepianWolfConfig({"kind": "dsbc", "n": 2, "crossover": 0.1}, 0.3, R_A=9, R_B=9,
                                               eta=0.1, trials=2000))
    assert_within(rep)


def test_dsbc_table_normalized():
    t = dsbc_table(3, 0.2)
    assert t.shape == (8, 8) and t.sum() == pytest.approx(1.0)
    assert np.allclose(t, t.T)
