"""Hypothesis strategies for distributions on small alphabets."""

import numpy as np
from hypothesis import strategies as st


@st.composite
def prob_vectors(draw, min_size=1, max_size=6, allow_zeros=True):
    n = draw(st.integers(min_size, max_size))
    lo = 0 if allow_zeros else 1
    w = draw(st.lists(st.integers(lo, 20), min_size=n, max_size=n).filter(lambda v: sum(v) > 0))
    w = np.array(w, dtype=float)
    return w / w.sum()


@st.composite
def pq_pairs(draw, max_size=6, q_full_support=False):
    p = draw(prob_vectors(min_size=1, max_size=max_size))
    n = p.size
    lo = 1 if q_full_support else 0
    w = draw(st.lists(st.integers(lo, 20), min_size=n, max_size=n).filter(lambda v: sum(v) > 0))
    q = np.array(w, dtype=float)
    return p, q / q.sum()


@st.composite
def joint_tables(draw, shape):
    size = int(np.prod(shape))
    w = draw(st.lists(st.integers(0, 12), min_size=size, max_size=size).filter(lambda v: sum(v) > 0))
    t = np.array(w, dtype=float).reshape(shape)
    return t / t.sum()


eps_values = st.floats(0.01, 0.9, allow_nan=False)
