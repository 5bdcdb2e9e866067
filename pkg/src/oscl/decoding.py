"""Position-based decoding: locate the correlated slot of a codebook by
running a fixed test on each slot in turn.

Slots are 0-based.  The decoders return ``None`` (scalar form) or ``-1``
(batch form) when no slot passes; protocols map that outcome to slot 0 and
count it separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .acceptance import AcceptanceSet
from .coupling import iid_codebook
from .divergence import dh_eps
from .errors import ConfigurationError
from .estimate import frequency, histogram, plugin_tv
from .rng import StreamBank, inverse_cdf
from .runner import run_chunks

NO_SLOT = -1


@dataclass(frozen=True)
class DecoderSpec:
    """A sequential decoder.

    Parameters
    ----------
    test : AcceptanceSet
        Test over (side information, message); its first axis is the side
        information (a singleton axis when there is none).
    slot_count : int
        Number of slots scanned, in ascending order.
    """

    test: AcceptanceSet
    slot_count: int
    side_info_axes: tuple = ()
    scan_order: str = "ascending"

    def __post_init__(self):
        if self.slot_count < 1:
            raise ConfigurationError("slot_count must be at least 1")
        if len(self.test.shape) != 2:
            raise ConfigurationError("the test must be over (side information, message)")


class BipartiteThresholds(NamedTuple):
    """log2 thresholds for the three ratios of a bipartite test (bits)."""

    t1: float
    t2: float
    t12: float

    @classmethod
    def from_rates(cls, r1: float, r2: float, delta: float) -> "BipartiteThresholds":
        """``r1 + log2(1/δ)``, ``r2 + log2(1/δ)``, ``r1 + r2 + log2(1/δ)``."""
        s = float(np.log2(1 / delta))
        return cls(r1 + s, r2 + s, r1 + r2 + s)


@dataclass(frozen=True)
class BipartiteDensities:
    """log2 ratio tables over (y, m, n) for the bipartite test.

    ``lr1 = log p_YMN / (p_U p_YN)``, ``lr2 = log p_YMN / (p_YM p_V)`` and
    ``lr12 = log p_YMN / (p_Y p_U p_V)``; ``-inf`` where p_YMN is 0.
    """

    lr1: np.ndarray
    lr2: np.ndarray
    lr12: np.ndarray

    @classmethod
    def from_joint(cls, p_ymn, prior_m, prior_n) -> "BipartiteDensities":
        p = np.asarray(p_ymn, dtype=float)
        pu = np.asarray(prior_m, dtype=float)
        pv = np.asarray(prior_n, dtype=float)
        py = p.sum(axis=(1, 2))
        pym = p.sum(axis=2)
        pyn = p.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.log2(p)
            lr1 = lp - np.log2(pu)[None, :, None] - np.log2(pyn)[:, None, :]
            lr2 = lp - np.log2(pym)[:, :, None] - np.log2(pv)[None, None, :]
            lr12 = lp - np.log2(py)[:, None, None] - np.log2(pu)[None, :, None] - np.log2(pv)[None, None, :]
        tables = [np.where(p > 0, t, -np.inf) for t in (lr1, lr2, lr12)]
        return cls(*tables)


# ---------------------------------------------------------------------------
# test construction


def build_test_from_dh(p_joint, q_product, eps: float, mode: str = "auto") -> AcceptanceSet:
    """The optimizing set of the hypothesis-testing divergence (p-mass ≥ 1 − ε)."""
    return dh_eps(p_joint, q_product, eps, mode).set


def build_test_from_thresholds(thresholds: BipartiteThresholds, densities: BipartiteDensities,
                               axes=("Y", "M", "N")) -> AcceptanceSet:
    """Threshold-form set ``{lr1 > t1 and lr2 > t2 and lr12 > t12}``.

    Strict, so that the rejected region is exactly the one whose mass the
    premise bounds.
    """
    strict = tuple(float(np.nextafter(t, np.inf)) for t in thresholds)
    return AcceptanceSet(tuple(axes), densities.lr1.shape, None,
                         (densities.lr1, densities.lr2, densities.lr12), strict)


def bipartite_premise_mass(p_ymn, prior_m, prior_n, r1: float, r2: float, delta: float) -> float:
    """p-mass where some ratio is at most its threshold 2^r/δ.

    This is the quantity that must not exceed ε for the bipartite decoder's
    guarantee to apply.
    """
    d = BipartiteDensities.from_joint(p_ymn, prior_m, prior_n)
    t = BipartiteThresholds.from_rates(r1, r2, delta)
    p = np.asarray(p_ymn, dtype=float)
    bad = (d.lr1 <= t.t1) | (d.lr2 <= t.t2) | (d.lr12 <= t.t12)
    return float(p[bad & (p > 0)].sum())


# ---------------------------------------------------------------------------
# decoders


def decode_unipartite(spec: DecoderSpec, y: int, codewords) -> int | None:
    """First slot ``j`` with ``(y, codewords[j])`` in the test, else ``None``."""
    cw = np.asarray(codewords, dtype=np.int64)
    if cw.size != spec.slot_count:
        raise ConfigurationError(f"expected {spec.slot_count} codewords, got {cw.size}")
    hits = np.asarray(spec.test.contains(np.full(cw.size, y), cw), dtype=bool)
    idx = np.flatnonzero(hits)
    return int(idx[0]) if idx.size else None


def first_true(acc: np.ndarray) -> np.ndarray:
    """Index of the first True along the last axis, ``NO_SLOT`` if none."""
    flat = acc.reshape(acc.shape[0], -1)
    first = flat.argmax(axis=1)
    return np.where(flat[np.arange(flat.shape[0]), first], first, NO_SLOT)


def decode_unipartite_batch(mask: np.ndarray, y: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    """Vectorized :func:`decode_unipartite` with an explicit (y, m) mask."""
    return first_true(mask[y[:, None], codewords])


def decode_bipartite(thresholds: BipartiteThresholds, y: int, m_codewords, n_codewords,
                     densities: BipartiteDensities) -> tuple[int, int] | None:
    """First pair (j, k) in lexicographic order passing all three thresholds."""
    test = build_test_from_thresholds(thresholds, densities)
    cm = np.asarray(m_codewords, dtype=np.int64)
    cn = np.asarray(n_codewords, dtype=np.int64)
    jj, kk = np.meshgrid(np.arange(cm.size), np.arange(cn.size), indexing="ij")
    hits = np.asarray(test.contains(np.full(jj.shape, y), cm[jj], cn[kk]), dtype=bool)
    idx = np.flatnonzero(hits.ravel())
    if not idx.size:
        return None
    j, k = divmod(int(idx[0]), cn.size)
    return j, k


def decode_bipartite_batch(mask: np.ndarray, y: np.ndarray, m_codewords: np.ndarray,
                           n_codewords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bipartite scan with an explicit (y, m, n) mask.

    Returns ``(j, k)`` arrays, both ``NO_SLOT`` where nothing passes.
    """
    acc = mask[y[:, None, None], m_codewords[:, :, None], n_codewords[:, None, :]]
    first = first_true(acc)
    width = n_codewords.shape[1]
    j = np.where(first >= 0, first // width, NO_SLOT)
    k = np.where(first >= 0, first % width, NO_SLOT)
    return j, k


# ---------------------------------------------------------------------------
# benches


def unipartite_rate(p_ym, prior, eps: float, delta: float, mode: str = "auto") -> tuple[int, float]:
    """Largest R with ``R <= max(D_H^ε(p_YM || p_Y × W) − log2(1/δ), 0)``, and D_H."""
    p = np.asarray(p_ym, dtype=float)
    q = np.outer(p.sum(axis=1), prior)
    dh = dh_eps(p, q, eps, mode).value
    return int(np.floor(max(dh - np.log2(1 / delta), 0.0) + 1e-12)), dh


@dataclass(frozen=True)
class _UnipartiteJob:
    p_ym: np.ndarray
    prior: np.ndarray
    mask: np.ndarray
    R: int

    def __call__(self, seed: int, start: int, stop: int) -> dict:
        bank = StreamBank(seed, np.arange(start, stop))
        n = bank.size
        slots = 1 << self.R
        j = bank.integers(slots)
        flat = bank.choice(inverse_cdf(self.p_ym.ravel()))
        y, m = np.divmod(flat, self.p_ym.shape[1])
        cw = iid_codebook(bank, inverse_cdf(self.prior), slots)
        cw[np.arange(n), j] = m
        jp = decode_unipartite_batch(self.mask, y, cw)
        miss = jp == NO_SLOT
        jp = np.where(miss, 0, jp)
        out_m = cw[np.arange(n), jp]
        return {"wrong": int(np.count_nonzero(jp != j)), "miss": int(np.count_nonzero(miss)),
                "hist": histogram(y * self.p_ym.shape[1] + out_m, self.p_ym.size)}


def run_unipartite_bench(p_ym, prior, eps: float, delta: float, R: int | None = None,
                         trials: int = 10_000, seed: int = 0, mode: str = "auto",
                         workers: int | None = None) -> dict:
    """Monte Carlo check of position-based decoding on a planted codebook.

    The test is the optimizing set of D_H^ε(p_YM || p_Y × W); ``R`` defaults
    to the largest rate the guarantee allows.
    """
    p = np.asarray(p_ym, dtype=float)
    prior = np.asarray(prior, dtype=float)
    rate, dh = unipartite_rate(p, prior, eps, delta, mode)
    R = rate if R is None else int(R)
    mask = build_test_from_dh(p, np.outer(p.sum(axis=1), prior), eps, mode).to_mask()
    tally = run_chunks(_UnipartiteJob(p, prior, mask, R), trials, seed,
                       chunk=max(1, min(4096, (1 << 20) >> R)), workers=workers)
    wrong = frequency(np.arange(trials) < tally["wrong"])
    tv = plugin_tv(p, tally["hist"])
    return {
        "R": R, "R_max": rate, "dh": dh, "trials": trials, "seed": seed,
        "slot_error": wrong.to_dict(), "miss_rate": tally["miss"] / trials,
        "slot_error_bound": eps + delta, "output_tv": tv.to_dict(), "output_tv_bound": eps + 2 * delta,
        "scan_order": "ascending",
        "display": "Pr{J != J'} <= eps + delta and 1/2|p_YM_J' - p_YM| <= eps + 2 delta "
                   "when R <= max(D_H^eps(p_YM||p_Y x W) - log2(1/delta), 0)",
    }


def bipartite_rates(p_ymn, prior_m, prior_n, eps_parts, delta: float, mode: str = "auto") -> dict:
    """Largest rate pair allowed by the three D_H constraints of the bipartite decoder."""
    p = np.asarray(p_ymn, dtype=float)
    pu = np.asarray(prior_m, dtype=float)
    pv = np.asarray(prior_n, dtype=float)
    py, pym, pyn = p.sum(axis=(1, 2)), p.sum(axis=2), p.sum(axis=1)
    q1 = pyn[:, None, :] * pu[None, :, None]
    q2 = pym[:, :, None] * pv[None, None, :]
    q3 = py[:, None, None] * pu[None, :, None] * pv[None, None, :]
    slack = 2 * np.log2(1 / delta)
    d = [dh_eps(p, q, e, mode).value for q, e in zip((q1, q2, q3), eps_parts)]
    caps = [int(np.floor(max(v - slack, 0.0) + 1e-12)) for v in d]
    best = None
    for r1 in range(caps[0] + 1):
        r2 = min(caps[1], caps[2] - r1)
        if r2 < 0:
            continue
        cand = (r1 + r2, r1, r2)
        if best is None or cand > best:
            best = cand
    return {"dh": d, "caps": caps, "R1": best[1], "R2": best[2]}


def bipartite_premise_rates(p_ymn, prior_m, prior_n, eps: float, delta: float, r_max: int = 16) -> dict:
    """Largest rate pair (by sum, then R1) whose premise mass is at most ε."""
    best = None
    for r1 in range(r_max + 1):
        for r2 in range(r_max + 1 - r1):
            if bipartite_premise_mass(p_ymn, prior_m, prior_n, r1, r2, delta) <= eps:
                cand = (r1 + r2, r1, r2)
                if best is None or cand > best:
                    best = cand
    if best is None:
        return {"R1": None, "R2": None}
    return {"R1": best[1], "R2": best[2]}


@dataclass(frozen=True)
class _BipartiteJob:
    p_ymn: np.ndarray
    prior_m: np.ndarray
    prior_n: np.ndarray
    mask: np.ndarray
    R1: int
    R2: int

    def __call__(self, seed: int, start: int, stop: int) -> dict:
        bank = StreamBank(seed, np.arange(start, stop))
        n = bank.size
        j = bank.integers(1 << self.R1)
        k = bank.integers(1 << self.R2)
        flat = bank.choice(inverse_cdf(self.p_ymn.ravel()))
        y, m, nn = np.unravel_index(flat, self.p_ymn.shape)
        cm = iid_codebook(bank, inverse_cdf(self.prior_m), 1 << self.R1)
        cn = iid_codebook(bank, inverse_cdf(self.prior_n), 1 << self.R2)
        rows = np.arange(n)
        cm[rows, j] = m
        cn[rows, k] = nn
        jp, kp = decode_bipartite_batch(self.mask, y, cm, cn)
        miss = jp == NO_SLOT
        jp = np.where(miss, 0, jp)
        kp = np.where(miss, 0, kp)
        cells = np.ravel_multi_index((y, cm[rows, jp], cn[rows, kp]), self.p_ymn.shape)
        return {"wrong": int(np.count_nonzero((jp != j) | (kp != k))), "miss": int(np.count_nonzero(miss)),
                "hist": histogram(cells, self.p_ymn.size)}


def run_bipartite_bench(p_ymn, prior_m, prior_n, eps: float, delta: float, R1: int | None = None,
                        R2: int | None = None, eps_parts=None, trials: int = 10_000, seed: int = 0,
                        mode: str = "auto", rate_rule: str = "dh", workers: int | None = None) -> dict:
    """Monte Carlo check of bipartite position-based decoding.

    With ``rate_rule="dh"`` rates default to the D_H choice with
    ``eps_parts`` (default: an even split of ``ε − 3δ``); with
    ``"premise"`` they are the largest pair whose premise mass is at most
    ``ε``.  The premise mass is always computed exactly and the guarantee is
    reported as void when it exceeds ``ε``.
    """
    p = np.asarray(p_ymn, dtype=float)
    if rate_rule == "dh":
        if eps_parts is None:
            share = (eps - 3 * delta) / 3
            if share <= 0:
                raise ConfigurationError("eps must exceed 3 delta for the default rate choice")
            eps_parts = (share, share, share)
        rates = bipartite_rates(p, prior_m, prior_n, eps_parts, delta, mode)
    elif rate_rule == "premise":
        rates = bipartite_premise_rates(p, prior_m, prior_n, eps, delta)
        if rates["R1"] is None and (R1 is None or R2 is None):
            raise ConfigurationError("no rate pair satisfies the premise")
        eps_parts = []
    else:
        raise ConfigurationError(f"unknown rate rule {rate_rule!r}")
    R1 = rates["R1"] if R1 is None else int(R1)
    R2 = rates["R2"] if R2 is None else int(R2)
    premise = bipartite_premise_mass(p, prior_m, prior_n, R1, R2, delta)
    dens = BipartiteDensities.from_joint(p, prior_m, prior_n)
    mask = build_test_from_thresholds(BipartiteThresholds.from_rates(R1, R2, delta), dens).to_mask()
    chunk = max(1, min(4096, (1 << 22) >> (R1 + R2)))
    tally = run_chunks(_BipartiteJob(p, np.asarray(prior_m, float), np.asarray(prior_n, float), mask, R1, R2),
                       trials, seed, chunk=chunk, workers=workers)
    wrong = frequency(np.arange(trials) < tally["wrong"])
    return {
        "R1": R1, "R2": R2, "rate_choice": rates, "eps_parts": list(eps_parts), "trials": trials, "seed": seed,
        "premise_mass": premise, "premise_holds": premise <= eps,
        "pair_error": wrong.to_dict(), "miss_rate": tally["miss"] / trials,
        "pair_error_bound": eps + 3 * delta if premise <= eps else None,
        "output_tv": plugin_tv(p, tally["hist"]).to_dict(),
        "output_tv_bound": eps + 6 * delta if premise <= eps else None,
        "scan_order": "lexicographic",
        "display": "Pr{(J,K) != (J',K')} <= eps + 3 delta when the three-ratio premise mass is <= eps",
    }
