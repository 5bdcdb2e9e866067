"""Convex-split codebooks and the truncate-and-refill smoothing they rely on.

A convex-split codebook hides a correlated pair (x, m_J) at a uniformly
random slot J among 2**R slots whose other entries are i.i.d. draws from a
prior.  Its density relative to the fully independent product is the slot
average of the likelihood ratio ``w(x, m) = p(m|x) / prior(m)``, which makes
both exact evaluation (through symbol counts) and Monte Carlo evaluation
cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .divergence import ds_eps
from .errors import ConfigurationError, NumericalError
from .prob import DEFAULT_MAX_CELLS, FiniteDist, JointDist, tv_monte_carlo
from .rng import (StreamBank, conditional_cdf_rows, counter_uniforms, draw_rows, inverse_cdf,
                  multinomial_counts)


def _prior_array(prior, size: int) -> np.ndarray:
    arr = prior.probs if isinstance(prior, FiniteDist) else np.asarray(prior, dtype=float).ravel()
    if arr.size != size:
        raise ConfigurationError(f"prior has {arr.size} symbols, the message alphabet has {size}")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-10:
        raise ConfigurationError("prior must be a probability vector")
    return np.asarray(arr, dtype=float)


def _codeword_dtype(size: int):
    return np.uint8 if size <= 256 else (np.uint16 if size <= 65536 else np.int64)


@dataclass(frozen=True)
class ConvexSplitSpec:
    """Convex-split construction for a pair (X, M) and a prior on M.

    Parameters
    ----------
    p_xm : ndarray, shape (nx, nm)
        Joint distribution of the input and the (flattened) message.
    prior : ndarray, shape (nm,)
        Distribution of the decoy codewords.
    R : int
        Codebook size is ``2**R``.
    """

    p_xm: np.ndarray
    prior: np.ndarray
    R: int
    p_x: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.p_xm, dtype=float)
        if p.ndim != 2:
            raise ConfigurationError("p_xm must be a 2-D table")
        if abs(p.sum() - 1.0) > 1e-10 or np.any(p < 0):
            raise ConfigurationError("p_xm must be a probability table")
        prior = _prior_array(self.prior, p.shape[1])
        if int(self.R) != self.R or self.R < 0:
            raise ConfigurationError("R must be a natural number")
        if np.any((p.sum(axis=0) > 0) & (prior <= 0)):
            raise ConfigurationError("prior must be positive on the support of the message marginal")
        px = p.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where((px[:, None] > 0) & (prior[None, :] > 0),
                         p / np.where(px > 0, px, 1.0)[:, None] / np.where(prior > 0, prior, 1.0)[None, :], 0.0)
        object.__setattr__(self, "p_xm", p)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "R", int(self.R))
        object.__setattr__(self, "p_x", px)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_joint(cls, base: JointDist, x_axes, m_axes, prior, R: int) -> "ConvexSplitSpec":
        return cls(base.matrix(list(x_axes), list(m_axes)), prior, R)

    @property
    def slots(self) -> int:
        return 1 << self.R

    def threshold(self, eps: float, delta: float) -> float:
        """Smallest real R allowed by the convex-split rate condition."""
        return ds_eps(self.p_xm, np.outer(self.p_x, self.prior), eps) + 2 * np.log2(3 / delta)


@dataclass(frozen=True)
class BipartiteSplitSpec:
    """Bipartite convex-split: two codebooks of sizes 2**R1 and 2**R2."""

    p_xmn: np.ndarray
    prior_m: np.ndarray
    prior_n: np.ndarray
    R1: int
    R2: int
    p_x: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.p_xmn, dtype=float)
        if p.ndim != 3:
            raise ConfigurationError("p_xmn must be a 3-D table")
        pu = _prior_array(self.prior_m, p.shape[1])
        pv = _prior_array(self.prior_n, p.shape[2])
        if min(self.R1, self.R2) < 0:
            raise ConfigurationError("rates must be natural numbers")
        if np.any((p.sum(axis=(0, 2)) > 0) & (pu <= 0)) or np.any((p.sum(axis=(0, 1)) > 0) & (pv <= 0)):
            raise ConfigurationError("priors must be positive on the message supports")
        px = p.sum(axis=(1, 2))
        ref = px[:, None, None] * pu[None, :, None] * pv[None, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(ref > 0, p / np.where(ref > 0, ref, 1.0), 0.0)
        for name, val in (("p_xmn", p), ("prior_m", pu), ("prior_n", pv), ("p_x", px), ("weights", w),
                          ("R1", int(self.R1)), ("R2", int(self.R2))):
            object.__setattr__(self, name, val)


@dataclass
class CodebookDraw:
    """Sampled codebooks, one row per lane.

    ``j`` (and ``k``) are 0-based slot indices of the correlated entry.
    """

    j: np.ndarray
    x: np.ndarray
    codewords: np.ndarray
    k: np.ndarray | None = None
    codewords_n: np.ndarray | None = None


class Smoothing(NamedTuple):
    """Result of a truncate-and-refill smoothing.

    ``tv_cost`` is the exact ½‖smoothed − base‖; ``truncated_mass`` is
    Σ_x p(x) ε_x, the mass moved out of the bad sets, which bounds it.
    """

    smoothed: np.ndarray
    tv_cost: float
    truncated_mass: float


# ---------------------------------------------------------------------------
# smoothing


def smooth_truncate(base, prior, c: float) -> Smoothing:
    """Cap the ratio p(m|x)/prior(m) at about 2**c while keeping p_X.

    For each x the symbols whose ratio exceeds ``2**c`` are dropped and their
    conditional mass ``eps_x`` is refilled as ``eps_x * prior``.  Afterwards
    every ratio is at most ``2**c + eps_x <= 2**(c + 1)``.

    Parameters
    ----------
    base : ndarray (nx, nm) or JointDist with two axes
    prior : array_like (nm,)
    c : float
        Ratio exponent, ``c >= 0``.
    """
    if c < 0:
        raise ConfigurationError("c must be non-negative")
    p = base.table if isinstance(base, JointDist) else np.asarray(base, dtype=float)
    p = p.reshape(p.shape[0], -1)
    pr = _prior_array(prior, p.shape[1])
    if np.any(pr <= 0):
        raise ConfigurationError("prior must be positive on the whole message alphabet")
    px = p.sum(axis=1)
    out = np.zeros_like(p)
    truncated = 0.0
    for x in range(p.shape[0]):
        if px[x] <= 0:
            continue
        cond = p[x] / px[x]
        good = cond / pr <= 2.0**c
        eps_x = float(cond[~good].sum())
        out[x] = px[x] * (np.where(good, cond, 0.0) + eps_x * pr)
        truncated += px[x] * eps_x
    return Smoothing(out, 0.5 * float(np.abs(out - p).sum()), truncated)


def smooth_truncate_bipartite(base, prior_m, prior_n, R1: int, R2: int, delta: float) -> Smoothing:
    """Bipartite truncate-and-refill at thresholds (δ²/24)·2^R.

    ``Good_x`` keeps the pairs whose three ratios (M alone, N alone, and the
    pair) are at most ``(δ²/24)·2^{R1}``, ``(δ²/24)·2^{R2}`` and
    ``(δ²/24)·2^{R1+R2}``; the conditional mass outside is refilled as
    ``eps_x * prior_m x prior_n``.
    """
    p = base.table if isinstance(base, JointDist) else np.asarray(base, dtype=float)
    pu = _prior_array(prior_m, p.shape[1])
    pv = _prior_array(prior_n, p.shape[2])
    if np.any(pu <= 0) or np.any(pv <= 0):
        raise ConfigurationError("priors must be positive")
    t1, t2, t12 = bipartite_split_thresholds(R1, R2, delta)
    px = p.sum(axis=(1, 2))
    out = np.zeros_like(p)
    truncated = 0.0
    for x in range(p.shape[0]):
        if px[x] <= 0:
            continue
        cond = p[x] / px[x]
        rm = cond.sum(axis=1) / pu
        rn = cond.sum(axis=0) / pv
        rmn = cond / np.outer(pu, pv)
        good = (rm[:, None] <= t1) & (rn[None, :] <= t2) & (rmn <= t12)
        eps_x = float(cond[~good].sum())
        out[x] = px[x] * (np.where(good, cond, 0.0) + eps_x * np.outer(pu, pv))
        truncated += px[x] * eps_x
    return Smoothing(out, 0.5 * float(np.abs(out - p).sum()), truncated)


def bipartite_split_thresholds(R1: int, R2: int, delta: float) -> tuple[float, float, float]:
    """Ratio thresholds (δ²/24)·2^{R1}, (δ²/24)·2^{R2}, (δ²/24)·2^{R1+R2}."""
    s = delta**2 / 24
    return s * 2.0**R1, s * 2.0**R2, s * 2.0 ** (R1 + R2)


def bipartite_premise_mass(p_xmn, prior_m, prior_n, R1: int, R2: int, delta: float) -> float:
    """p-mass where some ratio reaches its bipartite convex-split threshold."""
    p = np.asarray(p_xmn, dtype=float)
    pu = np.asarray(prior_m, dtype=float)
    pv = np.asarray(prior_n, dtype=float)
    t1, t2, t12 = bipartite_split_thresholds(R1, R2, delta)
    px = p.sum(axis=(1, 2))
    pxm = p.sum(axis=2)
    pxn = p.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rm = pxm / (px[:, None] * pu[None, :])
        rn = pxn / (px[:, None] * pv[None, :])
        rmn = p / (px[:, None, None] * pu[None, :, None] * pv[None, None, :])
    bad = (rm[:, :, None] >= t1) | (rn[:, None, :] >= t2) | (rmn >= t12)
    return float(p[bad & (p > 0)].sum())


# ---------------------------------------------------------------------------
# densities


def _mean_weight(weights: np.ndarray, x: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    return weights[x[:, None], codewords].mean(axis=1)


def convex_split_density(spec: ConvexSplitSpec, x, codewords) -> np.ndarray:
    """log2 density of the convex-split joint at (x, m_1, ..., m_{2^R}).

    Uses density = p_X(x) Π prior(m_i) × mean_j w(x, m_j), evaluated in
    O(2^R).  Accepts a single point or a batch (``x`` of shape (n,),
    ``codewords`` of shape (n, 2^R)).
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.int64))
    cw = np.asarray(codewords, dtype=np.int64).reshape(x_arr.size, -1)
    if cw.shape[1] != spec.slots:
        raise ConfigurationError(f"expected {spec.slots} codewords, got {cw.shape[1]}")
    pr = spec.prior[cw]
    if np.any(pr <= 0):
        raise NumericalError("prior is zero at a supplied codeword")
    with np.errstate(divide="ignore"):
        out = np.log2(spec.p_x[x_arr]) + np.log2(pr).sum(axis=1) + np.log2(_mean_weight(spec.weights, x_arr, cw))
    return out if np.ndim(x) else out[0]


def product_density(spec: ConvexSplitSpec, x, codewords) -> np.ndarray:
    """log2 density of p_X × prior^{⊗2^R}."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.int64))
    cw = np.asarray(codewords, dtype=np.int64).reshape(x_arr.size, -1)
    with np.errstate(divide="ignore"):
        out = np.log2(spec.p_x[x_arr]) + np.log2(spec.prior[cw]).sum(axis=1)
    return out if np.ndim(x) else out[0]


def bipartite_split_density(spec: BipartiteSplitSpec, x, m_codewords, n_codewords) -> np.ndarray:
    """log2 density of the bipartite convex-split joint."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.int64))
    cm = np.asarray(m_codewords, dtype=np.int64).reshape(x_arr.size, -1)
    cn = np.asarray(n_codewords, dtype=np.int64).reshape(x_arr.size, -1)
    pu, pv = spec.prior_m[cm], spec.prior_n[cn]
    if np.any(pu <= 0) or np.any(pv <= 0):
        raise NumericalError("prior is zero at a supplied codeword")
    mean_w = spec.weights[x_arr[:, None, None], cm[:, :, None], cn[:, None, :]].mean(axis=(1, 2))
    with np.errstate(divide="ignore"):
        out = np.log2(spec.p_x[x_arr]) + np.log2(pu).sum(axis=1) + np.log2(pv).sum(axis=1) + np.log2(mean_w)
    return out if np.ndim(x) else out[0]


# ---------------------------------------------------------------------------
# samplers


def iid_codebook(bank: StreamBank, cdf: np.ndarray, count: int, dtype=np.int64) -> np.ndarray:
    """``count`` i.i.d. codewords per lane.

    Each lane spends one 64-bit output as the key of a counter-mode block
    (see :func:`~oscl.rng.counter_uniforms`), so slot ``i`` of a lane is
    reproducible on its own.
    """
    keys = bank.next_u64()
    u = counter_uniforms(keys, count)
    return np.searchsorted(cdf, u.ravel(), side="right").astype(dtype).reshape(bank.size, count)


def convex_split_sample(spec: ConvexSplitSpec, bank: StreamBank) -> CodebookDraw:
    """One convex-split codebook per lane.

    Draw order per lane: J, x, m_J given x, then the 2^R prior draws (the
    draw at slot J is overwritten).
    """
    n = bank.size
    j = bank.integers(spec.slots)
    x = bank.choice(inverse_cdf(spec.p_x))
    cond = conditional_cdf_rows(spec.p_xm)
    m_j = draw_rows(cond, x, bank.random())
    cw = iid_codebook(bank, inverse_cdf(spec.prior), spec.slots, _codeword_dtype(spec.prior.size))
    cw[np.arange(n), j] = m_j
    return CodebookDraw(j, x, cw)


def product_sample(spec: ConvexSplitSpec, bank: StreamBank) -> CodebookDraw:
    """x ~ p_X and all 2^R codewords i.i.d. prior (no planted slot)."""
    x = bank.choice(inverse_cdf(spec.p_x))
    cw = iid_codebook(bank, inverse_cdf(spec.prior), spec.slots, _codeword_dtype(spec.prior.size))
    return CodebookDraw(np.full(bank.size, -1), x, cw)


def bipartite_split_sample(spec: BipartiteSplitSpec, bank: StreamBank) -> CodebookDraw:
    """One bipartite convex-split draw per lane (J, K independent uniforms)."""
    n = bank.size
    j = bank.integers(1 << spec.R1)
    k = bank.integers(1 << spec.R2)
    flat = bank.choice(inverse_cdf(spec.p_xmn.ravel()))
    x, m, nn = np.unravel_index(flat, spec.p_xmn.shape)
    cm = iid_codebook(bank, inverse_cdf(spec.prior_m), 1 << spec.R1, _codeword_dtype(spec.prior_m.size))
    cn = iid_codebook(bank, inverse_cdf(spec.prior_n), 1 << spec.R2, _codeword_dtype(spec.prior_n.size))
    rows = np.arange(n)
    cm[rows, j] = m
    cn[rows, k] = nn
    return CodebookDraw(j, x, cm, k, cn)


# ---------------------------------------------------------------------------
# verification


def _type_classes(slots: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Count vectors of ``slots`` draws over ``k`` symbols and their log multinomial coefficients."""
    from .divergence import _compositions

    comps = _compositions(slots, k)
    logc = gammaln(slots + 1) - gammaln(comps + 1).sum(axis=1)
    return comps, logc


def type_class_count(slots: int, k: int) -> int:
    return int(round(np.exp(gammaln(slots + k) - gammaln(slots + 1) - gammaln(k))))


def convex_split_exact(spec: ConvexSplitSpec, max_cells: int = DEFAULT_MAX_CELLS) -> tuple[float, float]:
    """Exact (tv, kl) between the convex-split joint and the product.

    The density ratio depends on the codebook only through its symbol counts,
    so the sum runs over count vectors (type classes) weighted by their
    multinomial probability under the prior.
    """
    support = np.flatnonzero(spec.prior > 0)
    k = support.size
    n_types = type_class_count(spec.slots, k)
    if n_types * spec.p_x.size > max_cells:
        raise ConfigurationError(
            f"exact evaluation needs {n_types * spec.p_x.size} cells (cap {max_cells}); use method='mc'")
    comps, logc = _type_classes(spec.slots, k)
    logp = np.log(spec.prior[support])
    log_prob = logc + (comps * logp).sum(axis=1)
    prob = np.exp(log_prob)
    tv = 0.0
    div = 0.0
    for x in range(spec.p_x.size):
        if spec.p_x[x] <= 0:
            continue
        ratio = comps @ spec.weights[x, support] / spec.slots
        tv += spec.p_x[x] * float(np.sum(prob * np.abs(ratio - 1.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(ratio > 0, ratio * np.log2(np.where(ratio > 0, ratio, 1.0)), 0.0)
        div += spec.p_x[x] * float(np.sum(prob * terms))
    return 0.5 * tv, div


@dataclass
class ConvexSplitReport:
    """Outcome of :func:`verify_convex_split`."""

    R: int
    R_threshold: float
    rate_condition_met: bool
    tv: float
    std_error: float
    bound: float
    passed: bool
    method: str
    n_samples: int
    display: str = "1/2|split - product| <= eps + delta when R >= D_s^eps + 2 log2(3/delta)"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def product_counts_sample(spec: ConvexSplitSpec, bank: StreamBank) -> tuple[np.ndarray, np.ndarray]:
    """x ~ p_X and the symbol counts of 2^R i.i.d. prior draws.

    The density ratio of the split joint to the product depends on the
    codebook only through these counts, so this is an exact reduction of
    :func:`product_sample` for divergence estimation.
    """
    x = bank.choice(inverse_cdf(spec.p_x))
    return x, multinomial_counts(bank, spec.slots, spec.prior)


def count_log_ratio(spec: ConvexSplitSpec, x: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """log2 of split/product density at (x, codebook with the given counts)."""
    with np.errstate(divide="ignore"):
        return np.log2((counts * spec.weights[x]).sum(axis=1) / spec.slots)


def verify_convex_split(spec: ConvexSplitSpec, eps: float, delta: float, method: str = "exact",
                        n_samples: int = 100_000, seed: int = 0,
                        max_cells: int = DEFAULT_MAX_CELLS) -> ConvexSplitReport:
    """Measure ½‖split − product‖ and compare it with ε + δ.

    Methods
    -------
    ``"exact"``
        Sum over type classes (count vectors) of the codebook.
    ``"mc"``
        Sample (x, counts) under the product and average |ratio − 1|; an
        O(|M|) reduction of the codebook estimator with the same law.
    ``"mc-codebook"``
        Sample whole codebooks and use the O(2^R) density evaluators.
    """
    threshold = spec.threshold(eps, delta)
    if method == "exact":
        tv, _ = convex_split_exact(spec, max_cells)
        se = 0.0
        n_samples = 0
    elif method == "mc":
        tv, se = tv_monte_carlo(lambda b: count_log_ratio(spec, *b), lambda b: np.zeros(b[0].size),
                                lambda bank: product_counts_sample(spec, bank), n_samples, seed)
    elif method == "mc-codebook":
        chunk = max(1, min(4096, (1 << 22) // spec.slots))

        def sampler(bank):
            d = product_sample(spec, bank)
            return d.x, d.codewords

        tv, se = tv_monte_carlo(lambda b: convex_split_density(spec, *b),
                                lambda b: product_density(spec, *b),
                                sampler, n_samples, seed, chunk_size=chunk)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    bound = eps + delta
    return ConvexSplitReport(spec.R, threshold, spec.R >= threshold, tv, se, bound,
                             tv <= bound + 4 * se, method, n_samples)
