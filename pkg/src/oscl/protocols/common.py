"""Plumbing shared by the protocol simulators: reports, bin plans, rate
split search and vectorized slot sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from ..prob import FiniteDist, JointDist
from ..rng import counter_uniforms, inverse_cdf, multinomial_counts

SCHEMA_VERSION = "1.0.0"
_TOL = 1e-12


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class PremiseCheck:
    """One premise of a guarantee, evaluated numerically.

    ``relation`` reads ``value <relation> threshold``.
    """

    name: str
    value: float
    threshold: float
    relation: str = "<="

    @property
    def holds(self) -> bool:
        if self.relation == "<=":
            return bool(self.value <= self.threshold + _TOL)
        if self.relation == ">=":
            return bool(self.value >= self.threshold - _TOL)
        raise ConfigurationError(f"unknown relation {self.relation!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "threshold": float(self.threshold),
                "relation": self.relation, "holds": self.holds}


@dataclass
class ProtocolReport:
    """Outcome of one simulated protocol run.

    ``theorem_bound`` is ``None`` when some premise fails, since the
    guarantee is void then.  ``display`` names the exact inequality the run
    was checked against.  An ``infeasible`` report describes a configuration
    that was not run; its error fields are ``None``.
    """

    task: str
    display: str
    error_kind: str
    empirical_error: float | None
    std_error: float | None
    comm_bits: dict
    theorem_bound: float | None
    premise_checks: list = field(default_factory=list)
    abort_rates: dict = field(default_factory=dict)
    trials: int = 0
    seed: int = 0
    bias_bound: float = 0.0
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    wall_time: float = 0.0
    status: str = "ok"

    def __post_init__(self):
        for link, bits in self.comm_bits.items():
            if int(bits) != bits or bits < 0:
                raise ValueError(f"comm_bits[{link!r}] must be a non-negative integer")
            self.comm_bits[link] = int(bits)
        if self.status == "ok" and not 0.0 <= self.empirical_error <= 1.0:
            raise ValueError("empirical_error must lie in [0, 1]")

    @property
    def premises_hold(self) -> bool:
        return all(c.holds for c in self.premise_checks)

    def within_bound(self, sigmas: float = 4.0, slack: float = 0.0) -> bool | None:
        """``error <= bound + sigmas·std_error + bias_bound + slack``; ``None`` if void."""
        if self.theorem_bound is None or self.empirical_error is None:
            return None
        margin = sigmas * self.std_error + self.bias_bound + slack
        return bool(self.empirical_error <= self.theorem_bound + margin)

    def to_dict(self, wall_time: bool = True) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "task": self.task,
            "display": self.display,
            "error_kind": self.error_kind,
            "empirical_error": None if self.empirical_error is None else float(self.empirical_error),
            "std_error": None if self.std_error is None else float(self.std_error),
            "bias_bound": float(self.bias_bound),
            "comm_bits": dict(sorted(self.comm_bits.items())),
            "theorem_bound": None if self.theorem_bound is None else float(self.theorem_bound),
            "premises_hold": self.premises_hold,
            "premise_checks": [c.to_dict() for c in self.premise_checks],
            "abort_rates": {k: float(v) for k, v in sorted(self.abort_rates.items())},
            "trials": int(self.trials),
            "seed": int(self.seed),
            "parameters": jsonable(self.parameters),
            "details": jsonable(self.details),
            "flags": list(self.flags),
        }
        if wall_time:
            out["wall_time"] = float(self.wall_time)
        return out


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class BinPlan:
    """Split of ``2**(R + r)`` slot indices into ``2**R`` bins of ``2**r``.

    Slots and bins are 0-based; bin ``b`` holds slots
    ``b·2**r .. (b+1)·2**r − 1``.
    """

    R: int
    r: int

    def __post_init__(self):
        if self.R < 0 or self.r < 0:
            raise ConfigurationError("rates must be non-negative integers")

    @property
    def total(self) -> int:
        return 1 << (self.R + self.r)

    @property
    def bins(self) -> int:
        return 1 << self.R

    @property
    def bin_size(self) -> int:
        return 1 << self.r

    def bin_of(self, index):
        return np.asarray(index) >> self.r

    def members_of(self, b):
        """Slot indices of bin ``b``; for an array of bins, one row per bin."""
        b = np.asarray(b, dtype=np.int64)
        return (b << self.r)[..., None] + np.arange(self.bin_size)


@dataclass(frozen=True)
class LinearConstraint:
    """``a·r_A + b·r_B  <sense>  bound`` over integer bin rates."""

    name: str
    a: int
    b: int
    sense: str
    bound: float

    def holds(self, ra: int, rb: int) -> bool:
        lhs = self.a * ra + self.b * rb
        if self.sense == "<=":
            return lhs <= self.bound + 1e-9
        if self.sense == ">=":
            return lhs >= self.bound - 1e-9
        raise ConfigurationError(f"unknown sense {self.sense!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "a": self.a, "b": self.b, "sense": self.sense,
                "bound": jsonable(float(self.bound))}


@dataclass(frozen=True)
class BinSplit:
    feasible: bool
    r_A: int | None
    r_B: int | None
    constraints: tuple
    r_max: int

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "r_A": self.r_A, "r_B": self.r_B, "r_max": self.r_max,
                "constraints": [c.to_dict() for c in self.constraints]}


def find_bin_split(constraints: Sequence[LinearConstraint], r_max: int = 24) -> BinSplit:
    """Lexicographically smallest ``(r_A, r_B)`` in ``[0, r_max]²`` meeting all constraints.

    The scan is exhaustive; an infeasible system is reported as such rather
    than clamped.
    """
    cons = tuple(constraints)
    for ra in range(r_max + 1):
        for rb in range(r_max + 1):
            if all(c.holds(ra, rb) for c in cons):
                return BinSplit(True, ra, rb, cons, r_max)
    return BinSplit(False, None, None, cons, r_max)


def two_sender_constraints(R_A: int, R_B: int, ds_a: float, ds_b: float, dh_a: float, dh_b: float,
                           dh_ab: float, delta: float) -> list[LinearConstraint]:
    """The five bin-rate constraints for two senders sharing one decoder.

    Codebooks must be large enough for the convex split
    (``R + r >= D_s + 2 log2(3/δ)``) and bins small enough for the decoder
    (``r <= max(D_H − 2 log2(1/δ), 0)``, individually and jointly).
    """
    split = 2 * np.log2(3 / delta)
    dec = 2 * np.log2(1 / delta)
    return [
        LinearConstraint("codebook A", 1, 0, ">=", ds_a + split - R_A),
        LinearConstraint("codebook B", 0, 1, ">=", ds_b + split - R_B),
        LinearConstraint("decode A", 1, 0, "<=", max(dh_a - dec, 0.0)),
        LinearConstraint("decode B", 0, 1, "<=", max(dh_b - dec, 0.0)),
        LinearConstraint("decode joint", 1, 1, "<=", max(dh_ab - dec, 0.0)),
    ]


# ---------------------------------------------------------------------------
# array helpers


def as_table(dist, ndim: int | None = None, name: str = "distribution") -> np.ndarray:
    """Dense float table from a :class:`JointDist`, :class:`FiniteDist` or array."""
    if isinstance(dist, JointDist):
        t = np.asarray(dist.table, dtype=float)
    elif isinstance(dist, FiniteDist):
        t = np.asarray(dist.probs, dtype=float)
    else:
        t = np.asarray(dist, dtype=float)
    if ndim is not None and t.ndim != ndim:
        raise ConfigurationError(f"{name} must have {ndim} axes, got {t.ndim}")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ConfigurationError(f"{name} must be finite and non-negative")
    return t


def check_normalized(t: np.ndarray, name: str) -> None:
    if abs(t.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"{name} sums to {t.sum():.12g}, not 1")


def cond_independent(p: np.ndarray, left: Sequence[int], mid: Sequence[int], tol: float = 1e-9) -> bool:
    """Whether ``left − mid − rest`` holds for a dense table (axes by position)."""
    axes = list(range(p.ndim))
    right = [a for a in axes if a not in left and a not in mid]
    if not right or not left:
        return True
    t = np.transpose(p, list(mid) + list(left) + right)
    nm = int(np.prod([p.shape[a] for a in mid])) if mid else 1
    nl = int(np.prod([p.shape[a] for a in left]))
    t = t.reshape(nm, nl, -1)
    mass = t.sum(axis=(1, 2))
    ok = mass > 0
    c = t[ok] / mass[ok, None, None]
    outer = c.sum(axis=2)[:, :, None] * c.sum(axis=1)[:, None, :]
    return bool(np.max(np.abs(c - outer), initial=0.0) <= tol)


def ratio_weights(p_xm: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """``p(m|x) / prior(m)`` with 0 where ``p(m|x) = 0``.

    A message with positive conditional probability but zero prior can never
    be produced from prior codewords, so it is rejected.
    """
    px = p_xm.sum(axis=1)
    cond = np.divide(p_xm, px[:, None], out=np.zeros_like(p_xm), where=px[:, None] > 0)
    if np.any((cond > 0) & (prior[None, :] <= 0)):
        raise ConfigurationError("the prior must cover the support of the message")
    return np.divide(cond, prior[None, :], out=np.zeros_like(cond), where=prior[None, :] > 0)


def bayes_slot(weights: np.ndarray, x: np.ndarray, codewords: np.ndarray,
               u: np.ndarray, fallback: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Draw a slot with probability proportional to ``weights[x, codeword]``.

    Returns ``(slot, aborted)``.  Lanes whose weights are all zero abort and
    use ``fallback`` (a uniformly drawn slot) instead.
    """
    w = weights[x[:, None], codewords]
    cum = np.cumsum(w, axis=1)
    tot = cum[:, -1]
    j = (cum <= (u * tot)[:, None]).sum(axis=1)
    last = w.shape[1] - 1 - np.argmax(w[:, ::-1] > 0, axis=1)
    j = np.minimum(j, last)
    aborted = tot <= 0
    return np.where(aborted, fallback, j), aborted


def bin_slice(codewords: np.ndarray, bins: np.ndarray, plan: BinPlan) -> np.ndarray:
    """Codewords of each lane's announced bin, shape ``(lanes, 2**r)``."""
    idx = (bins << plan.r)[:, None] + np.arange(plan.bin_size)
    return np.take_along_axis(codewords, idx, axis=1)


def chunk_for(slots: int, budget: int = 1 << 22, cap: int = 4096) -> int:
    """Trials per chunk so that ``chunk · slots`` stays within ``budget``."""
    return int(max(1, min(cap, budget // max(1, slots))))


# ---------------------------------------------------------------------------
# collapsed codebook sampling


@dataclass(frozen=True)
class SupportTable:
    """Where the slot weights of each source symbol are positive.

    Row ``x`` lists the codeword symbols with ``weights[x, ·] > 0`` (padded to
    a common width with zero-probability entries), their weights, their
    prior mass, and the prior mass of everything else.
    """

    syms: np.ndarray
    weights: np.ndarray
    probs: np.ndarray
    rest: np.ndarray

    @classmethod
    def from_weights(cls, weights: np.ndarray, prior: np.ndarray) -> "SupportTable":
        w = np.asarray(weights, dtype=float)
        pos = w > 0
        width = max(1, int(pos.sum(axis=1).max()))
        syms = np.zeros((w.shape[0], width), dtype=np.int64)
        ww = np.zeros((w.shape[0], width))
        pp = np.zeros((w.shape[0], width))
        for x in range(w.shape[0]):
            s = np.flatnonzero(pos[x])
            syms[x, :s.size], ww[x, :s.size], pp[x, :s.size] = s, w[x, s], prior[s]
        return cls(syms, ww, pp, np.clip(1.0 - pp.sum(axis=1), 0.0, 1.0))

    @property
    def width(self) -> int:
        return self.syms.shape[1]


def sample_outside(u: np.ndarray, syms: np.ndarray, probs: np.ndarray, prior_cdf: np.ndarray,
                   prior: np.ndarray) -> np.ndarray:
    """Prior draws conditioned on avoiding each lane's listed symbols.

    Inverse CDF of the prior on the complement: the uniform is scaled to the
    complement's mass and then shifted past each excluded interval in
    ascending order.  ``u`` has shape (lanes, k); ``syms``/``probs`` are the
    per-lane exclusions, shape (lanes, width), zero-probability pads allowed.
    """
    order = np.argsort(np.where(probs > 0, syms, np.iinfo(np.int64).max), axis=1)
    s = np.take_along_axis(syms, order, axis=1)
    q = np.take_along_axis(probs, order, axis=1)
    start = np.concatenate([[0.0], np.cumsum(prior)])[s]
    v = u * np.clip(1.0 - q.sum(axis=1), 0.0, 1.0)[:, None]
    for i in range(s.shape[1]):
        v = v + np.where((q[:, i] > 0)[:, None] & (v >= start[:, i][:, None]), q[:, i][:, None], 0.0)
    return np.minimum(np.searchsorted(prior_cdf, v, side="right"), prior.size - 1)


def _pick(score: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index drawn proportionally to ``score`` per row; ``(index, all_zero)``."""
    cum = np.cumsum(score, axis=1)
    tot = cum[:, -1]
    idx = (cum <= (u * tot)[:, None]).sum(axis=1)
    last = score.shape[1] - 1 - np.argmax(score[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last), tot <= 0


def _urn(u: np.ndarray, pool: np.ndarray, pool_total: np.ndarray) -> np.ndarray:
    """Ordered categories of ``u.shape[1]`` draws without replacement from ``pool``.

    ``pool`` (lanes, categories) is consumed in place.
    """
    n, steps = u.shape
    rows = np.arange(n)
    out = np.empty((n, steps), dtype=np.int64)
    total = pool_total.astype(np.int64).copy()
    top = pool.shape[1] - 1
    for s in range(steps):
        c = np.minimum((np.cumsum(pool, axis=1) <= (u[:, s] * total)[:, None]).sum(axis=1), top)
        out[:, s] = c
        pool[rows, c] -= 1
        total -= 1
    return out


def _place(chosen: np.ndarray, others: np.ndarray, local: np.ndarray) -> np.ndarray:
    """Bin with ``chosen`` at position ``local`` and ``others`` in order elsewhere."""
    n, size = chosen.shape[0], others.shape[1] + 1
    pos = np.arange(size)[None, :]
    if size == 1:
        return chosen[:, None].copy()
    src = np.clip(np.where(pos < local[:, None], pos, pos - 1), 0, size - 2)
    return np.where(pos == local[:, None], chosen[:, None], np.take_along_axis(others, src, axis=1))


def collapsed_bin(bank, x: np.ndarray, table: SupportTable, prior: np.ndarray, plan: BinPlan
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contents of the chosen slot's bin without materializing the codebook.

    Equal in law to drawing ``2**(R+r)`` i.i.d. prior codewords, picking a
    slot with probability proportional to its weight (uniform fallback if all
    weights vanish) and reading its bin.  Returns ``(bin_symbols, local,
    aborted)`` where ``local`` is the chosen slot's position in its bin.

    The chosen symbol follows from the multinomial counts of the weighted
    symbols.  The other ``2**r − 1`` members of the bin are drawn without
    replacement from the remaining slots (sequential urn, which also fixes
    their order), and the chosen slot's position is uniform.
    """
    n = x.shape[0]
    rows = np.arange(n)
    k = table.width
    syms, probs, w = table.syms[x], table.probs[x], table.weights[x]
    counts = multinomial_counts(bank, plan.total, np.concatenate([probs, table.rest[x][:, None]], axis=1))
    cat, aborted = _pick(counts[:, :k] * w, bank.random())
    cat = np.where(aborted, k, cat)
    size = plan.bin_size
    keys = bank.next_u64()
    rest_syms = sample_outside(counter_uniforms(keys, size), syms, probs, inverse_cdf(prior), prior)
    sym_of = np.concatenate([syms, np.zeros((n, 1), dtype=np.int64)], axis=1)
    chosen = np.where(cat < k, sym_of[rows, cat], rest_syms[:, 0])
    pool = counts.copy()
    pool[rows, cat] -= 1
    cats = _urn(counter_uniforms(keys, size - 1, offset=size), pool, np.full(n, plan.total - 1))
    others = np.where(cats < k, np.take_along_axis(sym_of, cats, axis=1), rest_syms[:, 1:])
    local = bank.integers(size)
    return _place(chosen, others, local), local, aborted


def collapsed_pair(bank, x: np.ndarray, weights: np.ndarray, prior_m: np.ndarray, prior_n: np.ndarray,
                   plan_m: BinPlan, plan_n: BinPlan):
    """Bipartite slot choice over two codebooks, collapsed to what receivers see.

    Equal in law to drawing both codebooks i.i.d. from their priors and
    picking ``(J, K)`` with probability proportional to
    ``weights[x, M_J, N_K]`` (uniform pair if all vanish), then reading the
    bins of ``J`` and ``K``.  Returns ``(bins_m, local_m, bins_n, local_n,
    aborted)``; with ``r = 0`` the bins are just the chosen symbols.
    """
    n = x.shape[0]
    rows = np.arange(n)
    nn = prior_n.size
    cm = multinomial_counts(bank, plan_m.total, prior_m)
    cn = multinomial_counts(bank, plan_n.total, prior_n)
    score = (cm[:, :, None].astype(float) * cn[:, None, :]) * weights[x]
    flat, aborted = _pick(score.reshape(n, -1), bank.random())
    m_fb, _ = _pick(cm.astype(float), bank.random())
    n_fb, _ = _pick(cn.astype(float), bank.random())
    m = np.where(aborted, m_fb, flat // nn)
    k = np.where(aborted, n_fb, flat % nn)
    out = []
    for counts, chosen, plan in ((cm, m, plan_m), (cn, k, plan_n)):
        pool = counts.copy()
        pool[rows, chosen] -= 1
        u = counter_uniforms(bank.next_u64(), plan.bin_size - 1)
        others = _urn(u, pool, np.full(n, plan.total - 1))
        local = bank.integers(plan.bin_size)
        out += [_place(chosen, others, local), local]
    return out[0], out[1], out[2], out[3], aborted


def literal_pair(bank, x: np.ndarray, weights: np.ndarray, prior_m: np.ndarray, prior_n: np.ndarray,
                 plan_m: BinPlan, plan_n: BinPlan):
    """:func:`collapsed_pair` computed from fully materialized codebooks."""
    from ..coupling import iid_codebook

    n = x.shape[0]
    cm = iid_codebook(bank, inverse_cdf(prior_m), plan_m.total)
    cn = iid_codebook(bank, inverse_cdf(prior_n), plan_n.total)
    score = weights[x[:, None, None], cm[:, :, None], cn[:, None, :]]
    flat, aborted = _pick(score.reshape(n, -1), bank.random())
    fj, fk = bank.integers(plan_m.total), bank.integers(plan_n.total)
    j = np.where(aborted, fj, flat // plan_n.total)
    k = np.where(aborted, fk, flat % plan_n.total)
    return (bin_slice(cm, plan_m.bin_of(j), plan_m), j & (plan_m.bin_size - 1),
            bin_slice(cn, plan_n.bin_of(k), plan_n), k & (plan_n.bin_size - 1), aborted)
