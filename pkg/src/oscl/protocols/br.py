"""Rejection-sampling message compression with hashed index transfer.

Both parties read the same list of ``n_U = ceil(|M|/δ)`` shared uniform
pairs ``(m_i, e_i)`` over ``M × {0..K−1}``.  Alice accepts the first ``i``
with ``e_i < K·p(m_i|x)``; Bob keeps every ``j`` with
``e_j < K·2^c·p_N(m_j|y)``.  Alice then sends ``L = ceil(2^c/δ²)`` one-bit
hashes of ``i`` and Bob outputs the message of the unique kept index whose
hashes agree.  Any abort makes Bob output the message of a fresh uniform
pair.

Hash ``ℓ`` of index ``i`` is bit ``ℓ mod 64`` of
``mix64(k_{ℓ div 64} + (i + 1)·γ)`` where ``k_w`` are shared per-trial keys
and ``γ`` is the golden-ratio increment.  Hash strings are compared word by
word and later words are only evaluated where earlier ones agree, which
gives exactly the same decisions as evaluating all ``L`` bits.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..divergence import ds_eps
from ..errors import ConfigurationError
from ..estimate import plugin_tv
from ..rng import StreamBank, counter_uniforms, derive_seed, inverse_cdf, mix64
from ..runner import run_chunks
from .common import ProtocolReport, as_table, check_normalized, cond_independent

DEFAULT_K_CAP = 1 << 16
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_WORD_SALT = 0xD1B54A32D192ED03
ALICE_NONE = -1

DISPLAY = ("1/2|p_XYM - p_XYM^| <= eps + 3 delta with c = D_s^eps(p_XMY||p_Y(p_X|Y x p_N|Y)), "
           "n_U = ceil(|M|/delta) shared samples, |J| cap ceil(2^c/delta), ceil(2^c/delta^2) hash bits")


# ---------------------------------------------------------------------------
# granularity


@dataclass(frozen=True)
class Snapping:
    """Integer tables ``counts / K`` approximating a set of conditional rows."""

    K: int
    counts: np.ndarray
    exact: bool
    row_tv: np.ndarray


def snap_rows(rows, k_cap: int = DEFAULT_K_CAP) -> Snapping:
    """Common denominator for row-stochastic rows.

    Rows are first read as rationals with denominator at most ``k_cap``; if
    that reproduces every entry to 1e-12 and the least common denominator
    fits under the cap, the snapping is exact.  Otherwise every row is
    rounded to multiples of ``1/k_cap`` by largest remainders.
    """
    r = np.asarray(rows, dtype=float)
    if r.ndim != 2:
        raise ConfigurationError("rows must form a matrix")
    if k_cap < 1:
        raise ConfigurationError("K cap must be positive")
    fracs = [[Fraction(float(v)).limit_denominator(k_cap) for v in row] for row in r]
    close = all(abs(float(f) - v) <= 1e-12 for row, frow in zip(r, fracs) for f, v in zip(row, frow))
    sums_ok = all(sum(frow) == 1 for frow in fracs)
    if close and sums_ok:
        K = 1
        for frow in fracs:
            for f in frow:
                K = K * f.denominator // math.gcd(K, f.denominator)
                if K > k_cap:
                    break
        if K <= k_cap:
            counts = np.array([[int(f * K) for f in frow] for frow in fracs], dtype=np.int64)
            return Snapping(K, counts, True, 0.5 * np.abs(counts / K - r).sum(axis=1))
    K = int(k_cap)
    scaled = r * K
    counts = np.floor(scaled).astype(np.int64)
    for i in range(r.shape[0]):
        short = K - int(counts[i].sum())
        if short > 0:
            order = np.argsort(-(scaled[i] - counts[i]), kind="stable")
            counts[i, order[:short]] += 1
    return Snapping(K, counts, False, 0.5 * np.abs(counts / K - r).sum(axis=1))


def _conditional(p_ab: np.ndarray) -> np.ndarray:
    pa = p_ab.sum(axis=1, keepdims=True)
    return np.divide(p_ab, pa, out=np.full_like(p_ab, 1.0 / p_ab.shape[1]), where=pa > 0)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class BRConfig:
    """Inputs of the rejection-sampling protocol.

    Parameters
    ----------
    p_xym : array_like, shape (nx, ny, nm)
        Source and message with ``M − X − Y``.
    kernel_n : array_like, shape (ny, nm), optional
        Bob's reference kernel ``p_N|Y``; defaults to ``p_M|Y``.
    k_cap : int
        Largest allowed granularity ``K``.
    snap : {"round", "exact"}
        ``exact`` refuses inputs that need a denominator above ``k_cap``;
        ``round`` falls back to multiples of ``1/k_cap``.
    """

    p_xym: np.ndarray
    eps: float
    delta: float
    kernel_n: np.ndarray | None = None
    k_cap: int = DEFAULT_K_CAP
    trials: int = 10_000
    seed: int = 0
    snap: str = "round"


@dataclass(frozen=True)
class BRPlan:
    p_xym: np.ndarray
    K: int
    alice_counts: np.ndarray
    bob_counts: np.ndarray
    snap_exact: bool
    snap_tv: float
    c: float
    n_u: int
    j_cap: int
    hash_bits: int

    @property
    def bob_threshold(self) -> np.ndarray:
        return (2.0 ** self.c) * self.bob_counts


def plan_br(cfg: BRConfig) -> BRPlan:
    if not 0 < cfg.eps < 1 or not 0 < cfg.delta < 1:
        raise ConfigurationError("eps and delta must lie in (0, 1)")
    p = as_table(cfg.p_xym, 3, "p_xym")
    check_normalized(p, "p_xym")
    if not cond_independent(p, [2], [0]):
        raise ConfigurationError("M − X − Y does not hold within 1e-9")
    nx, ny, nm = p.shape
    pm_x = _conditional(p.sum(axis=1))
    if cfg.kernel_n is None:
        pn_y = _conditional(p.sum(axis=0))
    else:
        pn_y = as_table(cfg.kernel_n, 2, "kernel_n")
        if pn_y.shape != (ny, nm) or np.any(np.abs(pn_y.sum(axis=1) - 1) > 1e-9):
            raise ConfigurationError("kernel_n must be a row-stochastic (|Y|, |M|) matrix")
    snap = snap_rows(np.vstack([pm_x, pn_y]), cfg.k_cap)
    if cfg.snap == "exact" and not snap.exact:
        raise ConfigurationError(f"the kernels need a denominator above K cap {cfg.k_cap}; "
                                 "use a coarser rational approximation or snap='round'")
    if cfg.snap not in ("exact", "round"):
        raise ConfigurationError(f"unknown snap mode {cfg.snap!r}")
    a = snap.counts[:nx]
    b = snap.counts[nx:]
    p_xy = p.sum(axis=2)
    px = p_xy.sum(axis=1)
    snapped = p_xy[:, :, None] * (a / snap.K)[:, None, :]
    ref = p_xy[:, :, None] * (b / snap.K)[None, :, :]
    if np.any((snapped > 0) & (ref <= 0)):
        c = float("inf")
    else:
        c = ds_eps(snapped, ref, cfg.eps)
    if not np.isfinite(c):
        raise ConfigurationError("the reference kernel misses part of the message support")
    snap_tv = float(px @ snap.row_tv[:nx])
    n_u = math.ceil(nm / cfg.delta - 1e-12)
    j_cap = math.ceil(2.0 ** c / cfg.delta - 1e-12)
    bits = math.ceil(2.0 ** c / cfg.delta ** 2 - 1e-12)
    return BRPlan(p, snap.K, a, b, snap.exact, snap_tv, c, n_u, j_cap, bits)


# ---------------------------------------------------------------------------
# hashing


def _word_keys(key: np.ndarray, word: int) -> np.ndarray:
    return mix64(key ^ np.uint64((word * _WORD_SALT) & 0xFFFFFFFFFFFFFFFF))


def hash_word(key: np.ndarray, index: np.ndarray, word: int, bits: int) -> np.ndarray:
    """Word ``word`` of the hash string of ``index`` (lanes × indices).

    Only the low ``min(64, bits − 64·word)`` bits are used.
    """
    k = _word_keys(np.asarray(key, dtype=np.uint64), word)
    idx = np.asarray(index, dtype=np.int64) + 1
    shape = np.broadcast_shapes(k.shape[:1] + (1,) * (idx.ndim - 1), idx.shape)
    kk = np.broadcast_to(k.reshape((-1,) + (1,) * (idx.ndim - 1)), shape)
    z = mix64(kk + np.broadcast_to(idx, shape).astype(np.uint64) * _GOLDEN)
    width = min(64, bits - 64 * word)
    if width < 64:
        z = z & np.uint64((1 << width) - 1)
    return z


def hash_bits(key: int, index: int, bits: int) -> np.ndarray:
    """All ``bits`` hash values of one index, as a 0/1 array."""
    out = []
    for w in range((bits + 63) // 64):
        z = int(hash_word(np.array([key], dtype=np.uint64), np.array([[index]]), w, bits)[0, 0])
        width = min(64, bits - 64 * w)
        out.extend((z >> t) & 1 for t in range(width))
    return np.array(out, dtype=np.uint8)


def _rest_equal(key: np.ndarray, a: np.ndarray, b: np.ndarray, bits: int) -> np.ndarray:
    """Whether indices ``a`` and ``b`` agree on hash words 1, 2, ... (vectorized)."""
    eq = np.ones(a.shape, dtype=bool)
    for w in range(1, (bits + 63) // 64):
        eq &= hash_word(key, a[:, None], w, bits)[:, 0] == hash_word(key, b[:, None], w, bits)[:, 0]
    return eq


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class BRJob:
    """Trials of the protocol; picklable for process pools.

    With ``shared_lane`` set, every trial reuses the shared randomness of
    that one lane (a fixed shared string) while inputs stay independent.
    """

    p_xy: np.ndarray
    alice_counts: np.ndarray
    bob_threshold: np.ndarray
    K: int
    n_u: int
    j_cap: int
    bits: int
    shared_lane: int | None = None

    def __call__(self, seed: int, start: int, stop: int) -> dict:
        lanes = np.arange(start, stop)
        private = StreamBank(seed, lanes)
        shared_ids = lanes if self.shared_lane is None else np.full(lanes.size, self.shared_lane)
        shared = StreamBank(derive_seed(seed, 0x5EED), shared_ids)
        n = private.size
        nx, ny = self.p_xy.shape
        nm = self.alice_counts.shape[1]
        x, y = np.divmod(private.choice(inverse_cdf(self.p_xy.ravel())), ny)
        fresh_m = private.integers(nm)
        u = counter_uniforms(shared.next_u64(), 2 * self.n_u)
        ms = np.minimum((u[:, : self.n_u] * nm).astype(np.int64), nm - 1)
        es = np.minimum((u[:, self.n_u:] * self.K).astype(np.int64), self.K - 1)
        key = shared.next_u64()

        ok_a = es < self.alice_counts[x[:, None], ms]
        has_i = ok_a.any(axis=1)
        i = np.where(has_i, ok_a.argmax(axis=1), ALICE_NONE)
        in_j = es < self.bob_threshold[y[:, None], ms]
        size_j = in_j.sum(axis=1)
        too_many = size_j >= self.j_cap

        # first hash word for every shared index and for Alice's message
        h_all = hash_word(key, np.broadcast_to(np.arange(self.n_u), (n, self.n_u)), 0, self.bits)
        h_i = hash_word(key, i[:, None], 0, self.bits)[:, 0]
        match0 = in_j & (h_all == h_i[:, None])
        # collisions inside J on the first word
        hj = np.where(in_j, h_all, np.uint64(0))
        same = (hj[:, :, None] == hj[:, None, :]) & in_j[:, :, None] & in_j[:, None, :]
        same &= ~np.eye(self.n_u, dtype=bool)[None]
        coll0 = same.any(axis=(1, 2))

        collide = coll0
        match = match0
        if self.bits > 64:
            t, a, b = np.nonzero(np.triu(same, 1) & ~too_many[:, None, None])
            collide = np.zeros(n, dtype=bool)
            collide[t[_rest_equal(key[t], a, b, self.bits)]] = True
            t, j = np.nonzero(match0 & ~too_many[:, None])
            match = np.zeros_like(match0)
            good = _rest_equal(key[t], i[t], j, self.bits)
            match[t[good], j[good]] = True
        n_match = match.sum(axis=1)
        no_match = n_match == 0
        # Alice cannot signal her own abort; she hashes a reserved index
        # that Bob's list never contains, which almost surely leaves him
        # without a match.
        abort = too_many | collide | no_match
        found = match.argmax(axis=1)
        m_hat = np.where(abort, fresh_m, ms[np.arange(n), found])
        cells = (x * ny + y) * nm + m_hat
        return {
            "hist": np.bincount(cells, minlength=nx * ny * nm),
            "alice_abort": int((~has_i).sum()),
            "bob_list_too_long": int((has_i & too_many).sum()),
            "hash_collision": int((has_i & ~too_many & collide).sum()),
            "no_hash_match": int((has_i & ~too_many & ~collide & no_match).sum()),
            "index_missed": int((has_i & ~in_j[np.arange(n), np.maximum(i, 0)]).sum()),
            "wrong_index": int((~abort & (found != i)).sum()),
            "list_size_sum": int(size_j.sum()),
            "wire_bits": int(self.bits) * n,
        }


def br_job(plan: BRPlan, shared_lane: int | None = None) -> BRJob:
    return BRJob(plan.p_xym.sum(axis=2), plan.alice_counts, plan.bob_threshold, plan.K, plan.n_u,
                 plan.j_cap, plan.hash_bits, shared_lane)


def _chunk(plan: BRPlan) -> int:
    return int(max(64, min(4096, (1 << 22) // (plan.n_u * plan.n_u))))


def run_task1_br(cfg: BRConfig, workers: int | None = None) -> ProtocolReport:
    """Simulate the rejection-sampling protocol and compare with ``ε + 3δ``.

    The bound includes the total variation introduced by snapping the
    kernels to multiples of ``1/K`` (zero when the snapping is exact).
    """
    t0 = time.perf_counter()
    if cfg.trials < 1:
        raise ConfigurationError("trials must be at least 1")
    plan = plan_br(cfg)
    tally = run_chunks(br_job(plan), cfg.trials, cfg.seed, chunk=_chunk(plan), workers=workers)
    n = cfg.trials
    tv = plugin_tv(plan.p_xym, tally["hist"])
    bits_per_trial = tally["wire_bits"] // n
    flags = [] if plan.snap_exact else ["kernels snapped to multiples of 1/K; bound includes the snapping tv"]
    return ProtocolReport(
        task="task1-br", display=DISPLAY, error_kind="plug-in tv",
        empirical_error=min(tv.value, 1.0), std_error=tv.std_error, bias_bound=tv.bias_bound,
        comm_bits={"alice->bob": bits_per_trial},
        theorem_bound=cfg.eps + 3 * cfg.delta + plan.snap_tv,
        premise_checks=[],
        abort_rates={k: tally[k] / n for k in ("alice_abort", "bob_list_too_long", "hash_collision",
                                               "no_hash_match")},
        trials=n, seed=cfg.seed,
        parameters={"eps": cfg.eps, "delta": cfg.delta, "K": plan.K, "k_cap": cfg.k_cap},
        details={"c": plan.c, "shared_samples": plan.n_u, "list_cap": plan.j_cap,
                 "hash_bits": plan.hash_bits, "log2_hash_bits": math.log2(plan.hash_bits),
                 "c_plus_2log2_1_over_delta": plan.c + 2 * math.log2(1 / cfg.delta),
                 "snap_exact": plan.snap_exact, "snap_tv": plan.snap_tv,
                 "index_missed_rate": tally["index_missed"] / n, "wrong_index_rate": tally["wrong_index"] / n,
                 "mean_list_size": tally["list_size_sum"] / n},
        flags=flags, wall_time=time.perf_counter() - t0)
