"""One-shot divergences on finite alphabets, all in bits.

The two quantities that drive every rate in the package are

* ``ds_eps``: the information-spectrum divergence, the smallest ``a`` such
  that the p-mass of ``{log2 p/q > a}`` is strictly below ``eps``;
* ``dh_eps``: the hypothesis-testing divergence, ``-log2 q(A)`` for the best
  deterministic set ``A`` with ``p(A) >= 1 - eps``.

Ratios follow the conventions ``0/0 = 0`` (ignored, no p-mass) and
``p/0 = +inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from .acceptance import AcceptanceSet
from .errors import ConfigurationError
from .prob import JointDist
from .rng import StreamBank, inverse_cdf

MASS_TOL = 1e-12
_NORMALIZED_TOL = 1e-10
EXACT_DH_LIMIT = 24


class SpectrumPoint(NamedTuple):
    log_ratio: float
    mass: float


@dataclass(frozen=True)
class HypothesisTestResult:
    """Outcome of a hypothesis-testing divergence computation."""

    value: float
    set: AcceptanceSet
    p_mass: float
    q_mass: float
    exact: bool


# ---------------------------------------------------------------------------
# input handling


def _flat_pair(p, q) -> tuple[np.ndarray, np.ndarray, tuple, tuple]:
    tp = p.table if isinstance(p, JointDist) else np.asarray(p, dtype=float)
    tq = q.table if isinstance(q, JointDist) else np.asarray(q, dtype=float)
    if tp.shape != tq.shape:
        raise ConfigurationError(f"p and q have different shapes {tp.shape} vs {tq.shape}")
    if np.any(tp < 0) or np.any(tq < 0):
        raise ConfigurationError("probabilities must be non-negative")
    if isinstance(p, JointDist):
        names = p.names
    elif isinstance(q, JointDist):
        names = q.names
    else:
        names = tuple(f"axis{i}" for i in range(tp.ndim))
    return tp.ravel(), tq.ravel(), names, tp.shape


def _check_normalized(p: np.ndarray) -> None:
    if abs(p.sum() - 1.0) > _NORMALIZED_TOL:
        raise ConfigurationError(f"first argument sums to {p.sum():.15g}, not 1")


def _check_eps(eps: float, lo_open: bool = False, hi_closed: bool = True) -> float:
    eps = float(eps)
    ok_lo = eps > 0 if lo_open else eps >= 0
    ok_hi = eps <= 1 if hi_closed else eps < 1
    if not (ok_lo and ok_hi):
        raise ConfigurationError(f"eps={eps} is outside the allowed range")
    return eps


def log_ratios(p, q) -> np.ndarray:
    """Pointwise log2(p/q) on the support of p (``nan`` off the support)."""
    tp, tq, _, shape = _flat_pair(p, q)
    out = np.full(tp.shape, np.nan)
    supp = tp > 0
    with np.errstate(divide="ignore"):
        out[supp] = np.where(tq[supp] > 0, np.log2(tp[supp]) - np.log2(np.where(tq[supp] > 0, tq[supp], 1.0)), np.inf)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# relative entropy family


def kl(p, q) -> float:
    """Relative entropy D(p||q) in bits (``inf`` if supp p is not in supp q)."""
    tp, tq, _, _ = _flat_pair(p, q)
    supp = tp > 0
    if np.any(tq[supp] <= 0):
        return float("inf")
    return float(np.sum(tp[supp] * (np.log2(tp[supp]) - np.log2(tq[supp]))))


def dmax(p, q) -> float:
    """Max divergence: the largest log2 ratio over the support of p."""
    lr = log_ratios(p, q).ravel()
    lr = lr[~np.isnan(lr)]
    return float(lr.max()) if lr.size else float("-inf")


def dmax_eps(p, q, eps: float) -> float:
    """Smooth max divergence with sub-normalized smoothing.

    Mass ``eps`` is removed from the symbols of largest ratio (water-filling)
    and the largest remaining ratio is returned.  The clip level ``lam``
    solves ``sum(max(p - lam*q, 0)) = eps``.
    """
    eps = float(eps)
    if not 0 <= eps < 1:
        raise ConfigurationError("eps must lie in [0, 1)")
    tp, tq, _, _ = _flat_pair(p, q)
    if eps == 0:
        return dmax(p, q)
    supp = tp > 0
    inf_mass = tp[supp & (tq <= 0)].sum()
    if inf_mass > eps:
        return float("inf")
    idx = np.flatnonzero(supp & (tq > 0))
    ratio = tp[idx] / tq[idx]
    order = np.argsort(-ratio, kind="stable")
    r = ratio[order]
    cp = np.cumsum(tp[idx][order])
    cq = np.cumsum(tq[idx][order])
    budget = eps - inf_mass
    for k in range(len(r)):
        lam = (cp[k] - budget) / cq[k]
        nxt = r[k + 1] if k + 1 < len(r) else 0.0
        if lam >= nxt:
            return float(np.log2(lam)) if lam > 0 else float("-inf")
    return float("-inf")


def spectrum(p, q) -> list[SpectrumPoint]:
    """Distinct log2 ratios under p, sorted descending, with their p-mass."""
    tp, tq, _, _ = _flat_pair(p, q)
    lr = log_ratios(tp, tq)
    supp = tp > 0
    values, inverse = np.unique(lr[supp], return_inverse=True)
    masses = np.bincount(inverse, weights=tp[supp])
    return [SpectrumPoint(float(v), float(m)) for v, m in zip(values[::-1], masses[::-1])]


def _ds_from_values(values: np.ndarray, weights: np.ndarray, eps: float) -> float:
    uniq, inverse = np.unique(values, return_inverse=True)
    masses = np.bincount(inverse, weights=weights)
    uniq, masses = uniq[::-1], masses[::-1]
    above = np.concatenate([[0.0], np.cumsum(masses)[:-1]])
    k = int(np.flatnonzero(above < eps)[-1])
    return float(uniq[k])


def ds_eps(p, q, eps: float) -> float:
    """Information-spectrum divergence.

    ``min{a : Pr_p{log2 p/q > a} < eps}`` with a strict inequality; the
    minimum is attained at one of the log-ratios.  ``eps = 0`` returns
    :func:`dmax`.

    Examples
    --------
    >>> round(ds_eps([0.1, 0.9], [0.5, 0.5], 0.05), 5)
    0.848
    """
    eps = _check_eps(eps)
    tp, tq, _, _ = _flat_pair(p, q)
    _check_normalized(tp)
    if eps == 0:
        return dmax(tp, tq)
    supp = tp > 0
    return _ds_from_values(log_ratios(tp, tq)[supp], tp[supp], eps)


def _greedy_order(tp: np.ndarray, tq: np.ndarray) -> np.ndarray:
    cand = np.flatnonzero(tp > 0)
    with np.errstate(divide="ignore"):
        ratio = np.where(tq[cand] > 0, tp[cand] / np.where(tq[cand] > 0, tq[cand], 1.0), np.inf)
    return cand[np.argsort(-ratio, kind="stable")]


def _greedy_set(tp: np.ndarray, tq: np.ndarray, target: float) -> np.ndarray:
    mask = np.zeros(tp.size, dtype=bool)
    acc = 0.0
    for i in _greedy_order(tp, tq):
        if acc >= target - MASS_TOL:
            break
        mask[i] = True
        acc += tp[i]
    return mask


def _exact_set(tp: np.ndarray, tq: np.ndarray, target: float) -> np.ndarray:
    """Minimize q(A) subject to p(A) >= target by branch and bound.

    Items are visited in descending p/q order, "take" before "skip", and a
    node is pruned when its fractional-knapsack lower bound cannot beat the
    incumbent.
    """
    free = (tp > 0) & (tq <= 0)
    need0 = target - tp[free].sum()
    items = np.flatnonzero((tp > 0) & (tq > 0))
    order = items[np.argsort(-(tp[items] / tq[items]), kind="stable")]
    pv = tp[order].tolist()
    qv = tq[order].tolist()
    n = len(order)
    suffix_p = np.concatenate([np.cumsum(pv[::-1])[::-1], [0.0]]).tolist()

    def lower_bound(k: int, need: float) -> float:
        cost = 0.0
        for i in range(k, n):
            if pv[i] >= need:
                return cost + qv[i] * need / pv[i]
            cost += qv[i]
            need -= pv[i]
        return cost

    best = [float("inf"), None]
    chosen: list[int] = []

    def visit(k: int, need: float, cost: float) -> None:
        if need <= MASS_TOL:
            if cost < best[0]:
                best[0] = cost
                best[1] = list(chosen)
            return
        if k == n or suffix_p[k] < need - MASS_TOL:
            return
        if cost + lower_bound(k, need) >= best[0]:
            return
        chosen.append(k)
        visit(k + 1, need - pv[k], cost + qv[k])
        chosen.pop()
        visit(k + 1, need, cost)

    visit(0, need0, 0.0)
    mask = free.copy()
    if best[1] is None:
        # only possible through rounding at the feasibility boundary
        return _greedy_set(tp, tq, target)
    mask[order[best[1]]] = True
    return mask


def dh_eps(p, q, eps: float, mode: str = "auto") -> HypothesisTestResult:
    """Hypothesis-testing divergence over deterministic sets.

    Parameters
    ----------
    p, q : array_like or JointDist
        Null and alternative distributions on the same alphabet.
    eps : float
        Allowed p-mass outside the set, in [0, 1).
    mode : {"exact", "greedy", "auto"}
        ``exact`` runs branch and bound and needs at most 24 symbols in the
        support of p; ``greedy`` adds symbols by descending p/q until the
        p-mass reaches ``1 - eps``; ``auto`` picks exact when allowed.

    Returns
    -------
    HypothesisTestResult
    """
    eps = float(eps)
    if eps < 0:
        raise ConfigurationError("eps must be non-negative (no feasible set otherwise)")
    if eps >= 1:
        raise ConfigurationError("eps must be below 1")
    tp, tq, names, shape = _flat_pair(p, q)
    support = int(np.count_nonzero(tp > 0))
    if mode == "auto":
        mode = "exact" if support <= EXACT_DH_LIMIT else "greedy"
    target = tp.sum() - eps
    if mode == "exact":
        if support > EXACT_DH_LIMIT:
            raise ConfigurationError(
                f"exact mode supports at most {EXACT_DH_LIMIT} symbols in the support of p, "
                f"got {support}; use mode='greedy'")
        mask = _exact_set(tp, tq, target)
    elif mode == "greedy":
        mask = _greedy_set(tp, tq, target)
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    p_mass = float(tp[mask].sum())
    q_mass = float(tq[mask].sum())
    value = float(-np.log2(q_mass)) + 0.0 if q_mass > 0 else float("inf")
    aset = AcceptanceSet(tuple(names), tuple(shape), mask.reshape(shape))
    return HypothesisTestResult(value, aset, p_mass, q_mass, mode == "exact")


# ---------------------------------------------------------------------------
# Shannon quantities


def _names(axes) -> list[str]:
    return [axes] if isinstance(axes, str) else list(axes)


def entropy(j: JointDist, axes=None) -> float:
    """Shannon entropy of the marginal on ``axes`` (all axes by default)."""
    t = j.table if axes is None else j.marginal(_names(axes)).table
    t = t[t > 0]
    return float(-np.sum(t * np.log2(t)))


def cond_entropy(j: JointDist, a, b) -> float:
    """H(A|B)."""
    a, b = _names(a), _names(b)
    if not b:
        return entropy(j, a)
    return entropy(j, a + b) - entropy(j, b)


def mutual_info(j: JointDist, a, b) -> float:
    """I(A:B) = D(p_AB || p_A x p_B)."""
    a, b = _names(a), _names(b)
    if not a or not b:
        return 0.0
    m = j.marginal(a + b).matrix(a, b)
    return kl(m, np.outer(m.sum(axis=1), m.sum(axis=0)))


def cond_mutual_info(j: JointDist, a, b, c) -> float:
    """I(A:B|C) = D(p_ABC || p_C p_{A|C} p_{B|C})."""
    a, b, c = _names(a), _names(b), _names(c)
    if not c:
        return mutual_info(j, a, b)
    if not a or not b:
        return 0.0
    t = j.marginal(c + a + b).table
    nc = int(np.prod(t.shape[: len(c)]))
    na = int(np.prod(t.shape[len(c): len(c) + len(a)]))
    t = t.reshape(nc, na, -1)
    pc = t.sum(axis=(1, 2))
    pca = t.sum(axis=2)
    pcb = t.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ref = np.where(pc[:, None, None] > 0,
                       pca[:, :, None] * pcb[:, None, :] / np.where(pc > 0, pc, 1.0)[:, None, None], 0.0)
    return kl(t, ref)


def tripartite_info(j: JointDist, a, b, c) -> float:
    """I(A:B:C) = D(p_ABC || p_A x p_B x p_C)."""
    a, b, c = _names(a), _names(b), _names(c)
    parts = [x for x in (a, b, c) if x]
    if len(parts) < 2:
        return 0.0
    t = j.marginal(sum(parts, [])).table
    ref = None
    for part in parts:
        m = j.marginal(part).table.ravel()
        ref = m if ref is None else np.multiply.outer(ref, m)
    return kl(t.ravel(), ref.ravel())


# ---------------------------------------------------------------------------
# i.i.d. blocks


def _compositions(n: int, k: int) -> np.ndarray:
    """All length-k non-negative integer vectors summing to n."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for first in range(n + 1):
        rest = _compositions(n - first, k - 1)
        rows.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
    return np.vstack(rows)


def ds_eps_iid(p, q, n: int, eps: float, max_types: int = 2_000_000) -> float:
    """Exact D_s^eps(p^n || q^n) by enumerating the types of the support of p."""
    tp, tq, _, _ = _flat_pair(p, q)
    _check_normalized(tp)
    supp = np.flatnonzero(tp > 0)
    k = len(supp)
    n_types = int(round(np.exp(gammaln(n + k) - gammaln(n + 1) - gammaln(k))))
    if n_types > max_types:
        raise ConfigurationError(f"{n_types} types exceed the exact limit; use the Monte Carlo estimate")
    comps = _compositions(n, k)
    lr = log_ratios(tp, tq)[supp]
    with np.errstate(invalid="ignore"):
        values = np.where(comps > 0, comps * lr, 0.0).sum(axis=1)
    logw = gammaln(n + 1) - gammaln(comps + 1).sum(axis=1) + (comps * np.log(tp[supp])).sum(axis=1)
    weights = np.exp(logw)
    eps = _check_eps(eps)
    if eps == 0:
        return float(values.max())
    return _ds_from_values(values, weights, eps)


def ds_eps_iid_estimate(p, q, n: int, eps: float, n_samples: int = 20000, seed: int = 0,
                        method: str = "mc", n_batches: int = 10) -> tuple[float, float]:
    """Estimate D_s^eps(p^n || q^n).

    The Monte Carlo method draws ``n_samples`` blocks of length ``n`` from p,
    sums their log-ratios and applies the spectrum definition to the
    empirical distribution of the sums.  The standard error comes from
    ``n_batches`` disjoint sub-samples.  ``method="exact"`` enumerates types
    (feasible for short blocks) and returns a zero standard error.
    """
    if n < 1:
        raise ConfigurationError("block length n must be at least 1")
    eps = _check_eps(eps, lo_open=True)
    if method == "exact":
        return ds_eps_iid(p, q, n, eps), 0.0
    if method != "mc":
        raise ConfigurationError(f"unknown method {method!r}")
    if n_samples < n_batches:
        raise ConfigurationError("need at least one sample per batch")
    tp, tq, _, _ = _flat_pair(p, q)
    _check_normalized(tp)
    lr = np.nan_to_num(log_ratios(tp, tq), nan=0.0)
    cdf = inverse_cdf(tp)
    bank = StreamBank(seed, np.arange(n_samples))
    sums = np.zeros(n_samples)
    for _ in range(n):
        sums += lr[bank.choice(cdf)]
    w = np.full(n_samples, 1.0 / n_samples)
    estimate = _ds_from_values(sums, w, eps)
    batches = np.array_split(sums, n_batches)
    per = [_ds_from_values(b, np.full(b.size, 1.0 / b.size), eps) for b in batches]
    if not np.all(np.isfinite(per)):
        return estimate, float("nan")
    return estimate, float(np.std(per, ddof=1) / np.sqrt(n_batches))
