"""Portable, seedable random streams.

Every stream is a xoshiro256** generator whose 256-bit state is filled by a
SplitMix64 sequence started at ``mix64(lane ^ mix64(seed))``.  A :class:`StreamBank` holds
many such streams side by side ("lanes") and advances them in lockstep with
vectorized uint64 arithmetic, so lane ``t`` always produces the same sequence
no matter how lanes are grouped into batches or spread over workers.  In the
simulators one lane is one trial.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_53 = 1.0 / 9007199254740992.0


def _u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype != np.uint64:
        arr = np.array([int(v) & MASK64 for v in np.ravel(arr)], dtype=np.uint64).reshape(arr.shape)
    return arr


def mix64(x) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise (a bijective 64-bit mixer)."""
    z = np.array(_u64(x), dtype=np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def splitmix64(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One SplitMix64 step on an array of states; returns (new_state, output)."""
    state = state + _GOLDEN
    return state, mix64(state)


def derive_seed(seed: int, tag: int) -> int:
    """Deterministically derive an independent 64-bit seed from (seed, tag)."""
    a = mix64(np.array([int(tag) & MASK64], dtype=np.uint64))
    b = mix64(np.array([int(seed) & MASK64], dtype=np.uint64) ^ a)
    return int(b[0])


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class StreamBank:
    """A batch of independent xoshiro256** streams, one per lane.

    Parameters
    ----------
    seed : int
        Experiment seed (taken modulo 2**64).
    lanes : array_like of int
        Lane identifiers, typically trial indices.  Lane ``t`` is seeded from
        SplitMix64 started at ``mix64(t ^ mix64(seed))``, so
        different seeds never reuse each other's lane streams.

    Examples
    --------
    >>> bank = StreamBank(7, range(3))
    >>> bank.random().shape
    (3,)
    """

    def __init__(self, seed: int, lanes):
        lanes = _u64(np.atleast_1d(np.asarray(lanes)))
        key = mix64(np.array([int(seed) & MASK64], dtype=np.uint64))[0]
        state = mix64(lanes ^ key)
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words
        self.size = lanes.shape[0]

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s = [s0, s1, s2, _rotl(s3, 45)]
        return result

    def random(self) -> np.ndarray:
        """Uniform doubles on [0, 1) with 53 random bits, one per lane."""
        return (self.next_u64() >> np.uint64(11)).astype(np.float64) * _TWO_53

    def integers(self, n: int) -> np.ndarray:
        """Integers in ``range(n)`` per lane (floor of a scaled uniform)."""
        out = (self.random() * n).astype(np.int64)
        return np.minimum(out, n - 1)

    def choice(self, cdf: np.ndarray) -> np.ndarray:
        """Inverse-CDF draw per lane from a table built by :func:`inverse_cdf`."""
        return draw(cdf, self.random())


def inverse_cdf(probs) -> np.ndarray:
    """Cumulative table for inverse-CDF sampling.

    Entries from the last positive-probability symbol onward are set to
    ``inf`` so rounding in the cumulative sum can never select a symbol of
    zero probability.
    """
    p = np.asarray(probs, dtype=float).ravel()
    cdf = np.cumsum(p)
    nz = np.flatnonzero(p > 0)
    if nz.size == 0:
        raise ValueError("cannot sample from an all-zero vector")
    cdf[nz[-1]:] = np.inf
    return cdf


def draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms to symbol indices with a table from :func:`inverse_cdf`."""
    return np.searchsorted(cdf, u, side="right")


def draw_rows(cdf_rows: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw where each lane uses its own row of a CDF table."""
    table = cdf_rows[rows]
    return (table <= u[:, None]).sum(axis=1)


def conditional_cdf_rows(matrix) -> np.ndarray:
    """Row-wise cumulative tables for a row-stochastic matrix.

    Rows that are all zero are left as ``inf`` everywhere (never sampled).
    """
    m = np.asarray(matrix, dtype=float)
    out = np.full(m.shape, np.inf)
    for i, row in enumerate(m):
        if row.sum() > 0:
            out[i] = inverse_cdf(row / row.sum())
    return out


def counter_uniforms(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """A block of uniforms from counter-mode SplitMix64.

    Row ``t`` holds outputs ``offset+1 .. offset+count`` of the SplitMix64
    sequence started at ``keys[t]``, so any column range can be produced
    without generating the columns before it.  Codebooks use this to draw all
    slots of a lane in one vectorized step.
    """
    keys = _u64(np.asarray(keys)).reshape(-1, 1)
    steps = (np.arange(offset + 1, offset + count + 1, dtype=np.uint64) * _GOLDEN)[None, :]
    z = mix64(keys + steps)
    return (z >> np.uint64(11)).astype(np.float64) * _TWO_53


def binomial_ppf_lanes(u, n, p) -> np.ndarray:
    """Binomial draws with per-lane ``n`` and ``p`` by vectorized inverse CDF.

    Each lane gets the smallest ``k`` with ``F(k) >= u``.
    """
    from scipy.stats import binom

    u = np.asarray(u, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=np.int64), u.shape)
    p = np.clip(np.broadcast_to(np.asarray(p, dtype=float), u.shape), 0.0, 1.0)
    k = binom.ppf(u, n, p)
    return np.clip(np.nan_to_num(k, nan=0.0), 0, n).astype(np.int64)


def multinomial_counts(bank: "StreamBank", n, probs) -> np.ndarray:
    """Symbol counts of ``n`` i.i.d. draws from ``probs``, one row per lane.

    Uses the chain of conditional binomials, one uniform per symbol except
    the last.  ``n`` may differ per lane and ``probs`` may be one row per
    lane.
    """
    p = np.asarray(probs, dtype=float)
    p = np.broadcast_to(p, (bank.size, p.shape[-1]))
    k = p.shape[1]
    out = np.zeros((bank.size, k), dtype=np.int64)
    remaining = np.broadcast_to(np.asarray(n, dtype=np.int64), (bank.size,)).copy()
    left = np.ones(bank.size)
    last = k - 1 - np.argmax(p[:, ::-1] > 0, axis=1)
    for i in range(k - 1):
        q = np.divide(p[:, i], left, out=np.zeros(bank.size), where=left > 1e-300)
        q = np.where(i == last, 1.0, q)
        out[:, i] = binomial_ppf_lanes(bank.random(), remaining, q)
        remaining -= out[:, i]
        left = left - p[:, i]
    out[:, -1] = remaining
    return out
