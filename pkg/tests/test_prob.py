import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strategies import joint_tables
from oscl.errors import ConfigurationError, DomainError
from oscl.prob import CondKernel, FiniteDist, JointDist, is_markov, product, sample_indices, tv_exact
from oscl.rng import StreamBank


def xy():
    return JointDist([("X", ["a", "b"]), ("Y", 3)], [[0.1, 0.2, 0.1], [0.3, 0.0, 0.3]])


def test_finite_dist_validation():
    with pytest.raises(ConfigurationError):
        FiniteDist(["a", "b"], [0.5, 0.6])
    with pytest.raises(ConfigurationError):
        FiniteDist(["a", "a"], [0.5, 0.5])
    assert FiniteDist.point(["a", "b"], "b").probs.tolist() == [0.0, 1.0]


def test_marginal_condition_reorder():
    j = xy()
    assert np.allclose(j.marginal(["Y"]).table, [0.4, 0.2, 0.4])
    assert np.allclose(j.condition("X", "a").table, [0.25, 0.5, 0.25])
    assert j.reorder(["Y", "X"]).table.shape == (3, 2)
    with pytest.raises(DomainError):
        JointDist([("X", 2), ("Y", 2)], [[1.0, 0.0], [0.0, 0.0]]).condition("X", 1)


def test_json_round_trip():
    j = xy()
    back = JointDist.from_json(json.dumps(j.to_dict()))
    assert back.names == j.names and np.array_equal(back.table, j.table)
    with pytest.raises(ConfigurationError):
        JointDist.from_dict({"probs": [1.0]})


def test_extend_builds_markov_chain():
    j = xy().extend("X", CondKernel(["a", "b"], [0, 1], [[0.9, 0.1], [0.2, 0.8]]), "M")
    assert is_markov(j, ["M"], ["X"], ["Y"])
    assert np.isclose(j.table.sum(), 1.0)


@given(joint_tables((2, 3, 2)))
def test_marginals_commute(t):
    j = JointDist([("A", 2), ("B", 3), ("C", 2)], t)
    assert np.allclose(j.marginal(["A", "C"]).marginal(["A"]).table, j.marginal(["A"]).table)
    assert np.isclose(j.marginal(["B"]).table.sum(), 1.0)


@given(joint_tables((3,)), joint_tables((2,)))
def test_product_is_markov_with_empty_middle(a, b):
    j = product(JointDist([("A", 3)], a), JointDist([("B", 2)], b))
    assert is_markov(j, ["A"], [], ["B"])


@given(joint_tables((4,)), joint_tables((4,)))
def test_tv_is_a_metric_bound(a, b):
    d = tv_exact(a, b)
    assert 0 <= d <= 1 + 1e-12
    assert np.isclose(d, tv_exact(b, a))


def test_sampling_frequencies():
    j = xy()
    idx = sample_indices(j, StreamBank(4, np.arange(40000)))
    freq = np.bincount(idx, minlength=6) / idx.size
    assert np.abs(freq - j.table.ravel()).max() < 0.01
    assert freq[4] == 0.0


def test_dict_axes_accept_integer_sizes():
    j = JointDist.from_dict({"axes": [{"name": "X", "symbols": 2}, {"name": "Y", "symbols": ["u", "v"]}],
                             "probs": [0.25, 0.25, 0.25, 0.25]})
    assert j.axis("X").symbols == (0, 1) and j.shape == (2, 2)
