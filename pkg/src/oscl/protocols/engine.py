"""Trial engine for protocols where two senders each pick a slot in their own
codebook and one receiver decodes the pair inside the announced bins.

Two interchangeable ways to produce a sender's bin are provided.  ``literal``
draws the whole codebook and runs the weighted slot choice; ``collapsed``
draws only what the receiver can see (the chosen bin) from its exact law,
which costs ``O(support + 2**r)`` per trial instead of ``O(2**(R+r))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coupling import iid_codebook
from ..decoding import NO_SLOT, first_true
from ..errors import ConfigurationError
from ..rng import StreamBank, counter_uniforms, inverse_cdf
from .common import BinPlan, SupportTable, bayes_slot, bin_slice, collapsed_bin

ENGINES = ("literal", "collapsed")


@dataclass(frozen=True)
class Sender:
    """One sender: codebook prior, slot weights and bin plan.

    ``weights`` (dense, source × codeword symbol) is needed by the literal
    engine only; the collapsed engine uses ``table``.
    """

    prior: np.ndarray
    table: SupportTable
    plan: BinPlan
    weights: np.ndarray | None = None

    @classmethod
    def from_weights(cls, weights: np.ndarray, prior: np.ndarray, plan: BinPlan) -> "Sender":
        return cls(prior, SupportTable.from_weights(weights, prior), plan, weights)

    @classmethod
    def identity(cls, prior: np.ndarray, plan: BinPlan) -> "Sender":
        """The message is the source symbol itself (weights ``1[m = x] / prior(x)``)."""
        size = prior.size
        syms = np.arange(size, dtype=np.int64)[:, None]
        with np.errstate(divide="ignore"):
            w = np.where(prior > 0, 1.0 / prior, 0.0)[:, None]
        table = SupportTable(syms, w, prior[:, None].copy(), np.clip(1.0 - prior, 0.0, 1.0))
        return cls(prior, table, plan, None)

    def draw(self, bank: StreamBank, x: np.ndarray, engine: str):
        """``(bin_symbols, local_slot, aborted, bin_index)`` for each lane."""
        plan = self.plan
        if engine == "literal":
            if self.weights is None:
                raise ConfigurationError("the literal engine needs dense weights")
            cw = iid_codebook(bank, inverse_cdf(self.prior), plan.total)
            u, fallback = bank.random(), bank.integers(plan.total)
            j, aborted = bayes_slot(self.weights, x, cw, u, fallback)
            b = plan.bin_of(j)
            return bin_slice(cw, b, plan), j & (plan.bin_size - 1), aborted, b
        bins, local, aborted = collapsed_bin(bank, x, self.table, self.prior, plan)
        return bins, local, aborted, bank.integers(plan.bins)

    def slots_per_lane(self, engine: str) -> int:
        if engine == "literal":
            return self.plan.total
        return self.plan.bin_size * (self.table.width + 2)


@dataclass(frozen=True)
class TableSource:
    """(X, Y, Z) drawn from an explicit joint table."""

    p_xyz: np.ndarray

    def sample(self, bank: StreamBank):
        return np.unravel_index(bank.choice(inverse_cdf(self.p_xyz.ravel())), self.p_xyz.shape)


@dataclass(frozen=True)
class DSBCSource:
    """Uniform n-bit X; Y flips each bit of X independently with ``crossover``."""

    n: int
    crossover: float

    def sample(self, bank: StreamBank):
        x = (bank.next_u64() >> np.uint64(64 - self.n)).astype(np.int64)
        flips = counter_uniforms(bank.next_u64(), self.n) < self.crossover
        noise = (flips.astype(np.int64) << np.arange(self.n, dtype=np.int64)).sum(axis=1)
        return x, x ^ noise, np.zeros_like(x)


@dataclass(frozen=True)
class MaskTest:
    """Receiver test given as a boolean table over (z, m, n)."""

    mask: np.ndarray

    def accept(self, z, cm, cn) -> np.ndarray:
        return self.mask[z[:, None, None], cm[:, :, None], cn[:, None, :]]


@dataclass(frozen=True)
class DistanceTest:
    """Receiver test that depends only on the Hamming distance of (m, n)."""

    ok_by_distance: np.ndarray

    def accept(self, z, cm, cn) -> np.ndarray:
        return self.ok_by_distance[np.bitwise_count(cm[:, :, None] ^ cn[:, None, :])]


@dataclass(frozen=True)
class TwoSenderJob:
    """One chunk of trials: sample the source, let both senders choose, decode.

    ``hist_shape`` (x, y, z, m, n axes) turns on the output histogram used
    for plug-in tv; leave it ``None`` for alphabets too large to tabulate.
    """

    source: object
    alice: Sender
    bob: Sender
    test: object
    engine: str = "collapsed"
    hist_shape: tuple | None = None

    def __call__(self, seed: int, start: int, stop: int) -> dict:
        bank = StreamBank(seed, np.arange(start, stop))
        rows = np.arange(bank.size)
        x, y, z = self.source.sample(bank)
        cand_m, j, ab_a, ba = self.alice.draw(bank, x, self.engine)
        cand_n, k, ab_b, bb = self.bob.draw(bank, y, self.engine)
        first = first_true(self.test.accept(z, cand_m, cand_n))
        miss = first == NO_SLOT
        first = np.where(miss, 0, first)
        jl, kl = np.divmod(first, cand_n.shape[1])
        m_hat, n_hat = cand_m[rows, jl], cand_n[rows, kl]
        out = {"abort_a": int(ab_a.sum()), "abort_b": int(ab_b.sum()), "miss": int(miss.sum()),
               "pair_error": int(np.count_nonzero((jl != j) | (kl != k))),
               "x_mismatch": int(np.count_nonzero(m_hat != x)),
               "xy_mismatch": int(np.count_nonzero((m_hat != x) | (n_hat != y))),
               "wire_overflow": int(np.count_nonzero((ba >= self.alice.plan.bins) | (bb >= self.bob.plan.bins)))}
        if self.hist_shape is not None:
            cells = np.ravel_multi_index((x, y, z, m_hat, n_hat), self.hist_shape)
            out["hist"] = np.bincount(cells, minlength=int(np.prod(self.hist_shape)))
        return out

    def slots_per_lane(self) -> int:
        grid = self.alice.plan.bin_size * self.bob.plan.bin_size
        return self.alice.slots_per_lane(self.engine) + self.bob.slots_per_lane(self.engine) + grid


def check_engine(engine: str) -> str:
    if engine not in ENGINES:
        raise ConfigurationError(f"unknown engine {engine!r}; use one of {ENGINES}")
    return engine
