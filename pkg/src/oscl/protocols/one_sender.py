"""One sender, two receivers: Alice picks a pair of slots ``(J, K)`` jointly
in two shared codebooks and sends Bob information about ``J`` and Charlie
information about ``K``.

Task 4 sends the full slot indices.  Task 5 sends only bin indices, and
each receiver finds its slot inside the bin using its own side information.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..coupling import bipartite_premise_mass
from ..decoding import NO_SLOT, decode_unipartite_batch
from ..divergence import dh_eps, ds_eps
from ..errors import ConfigurationError
from ..estimate import plugin_tv
from ..rng import StreamBank
from ..runner import run_chunks
from .common import (BinPlan, PremiseCheck, ProtocolReport, as_table, check_normalized, chunk_for,
                     collapsed_pair, cond_independent, literal_pair, ratio_weights)
from .engine import TableSource, check_engine

DEFAULT_SLOT_CAP = 1 << 20

DISPLAY_TASK4 = ("1/2|p_XMN - p_XM^N^| <= eps + delta, given R_B >= D_s^eps1(p_XM||p_X x S) + 2 log2(5/delta), "
                 "R_C >= D_s^eps2(p_XN||p_X x T) + 2 log2(5/delta), R_B + R_C >= D_s^eps3(p_XMN||p_X x S x T) "
                 "+ 2 log2(5/delta) and eps1 + eps2 + eps3 <= eps")
DISPLAY_TASK5 = ("1/2|p_XYZMN - p_XYZM^N^| <= eps + 2 delta1 + 5 delta2, given R_B + r_B >= D_s^eps1(p_XM||p_X x S) "
                 "+ 2 log2(5/delta2), r_B <= max(D_H^delta1(p_MY||S x p_Y) - log2(1/delta2), 0), the same for "
                 "Charlie, and R_B + R_C + r_B + r_C >= D_s^eps3(p_XMN||p_X x S x T) + 2 log2(5/delta2)")


@dataclass(frozen=True)
class OneSenderConfig:
    """Inputs of the one-sender-two-receivers simulators.

    Parameters
    ----------
    p : array_like
        Task 4: shape (X, M, N).  Task 5: shape (X, Y, Z, M, N) with
        ``(M, N) − X − (Y, Z)``.
    delta : float
        Task 4 slack.  For Task 5 it is the default of ``delta1`` and
        ``delta2``.
    eps : float, optional
        Target error budget; defaults to ``sum(eps_parts)``.
    eps_parts : tuple of 3 floats, optional
        Smoothing of the three codebook divergences; default ``eps / 3``
        each.
    R_B, R_C : int, optional
        Bits to Bob and to Charlie.  Task 4 needs both or neither.
    r_B, r_C : int, optional
        Task 5 bin-size exponents.  Give all four rates, only ``(r_B, r_C)``
        or nothing; missing values are the smallest admissible ones.
    engine : {"collapsed", "literal"}
        How the two codebooks are sampled; both give the same law.
    """

    p: np.ndarray
    delta: float
    eps: float | None = None
    eps_parts: tuple | None = None
    delta1: float | None = None
    delta2: float | None = None
    prior_m: np.ndarray | None = None
    prior_n: np.ndarray | None = None
    R_B: int | None = None
    R_C: int | None = None
    r_B: int | None = None
    r_C: int | None = None
    engine: str = "collapsed"
    trials: int = 10_000
    seed: int = 0
    dh_mode: str = "auto"
    r_max: int = 16
    slot_cap: int = DEFAULT_SLOT_CAP


@dataclass(frozen=True)
class OneSenderPlan:
    p: np.ndarray                # (X, Y, Z, M, N)
    prior_m: np.ndarray
    prior_n: np.ndarray
    eps: float
    eps_parts: tuple
    ds: tuple                    # D_s of XM, XN, XMN
    dh: tuple | None             # D_H of MY and NZ (Task 5)
    plan_b: BinPlan
    plan_c: BinPlan
    mask_b: np.ndarray           # (Y, M)
    mask_c: np.ndarray           # (Z, N)
    checks: tuple
    split_mass: float
    statement_rates: dict | None


@dataclass(frozen=True)
class OneSenderJob:
    """Chunk of trials: source, joint slot choice, per-receiver decoding."""

    source: TableSource
    weights: np.ndarray          # (X, M, N)
    prior_m: np.ndarray
    prior_n: np.ndarray
    plan_b: BinPlan
    plan_c: BinPlan
    mask_b: np.ndarray
    mask_c: np.ndarray
    engine: str
    hist_shape: tuple

    def __call__(self, seed: int, start: int, stop: int) -> dict:
        bank = StreamBank(seed, np.arange(start, stop))
        rows = np.arange(bank.size)
        x, y, z = self.source.sample(bank)
        draw = literal_pair if self.engine == "literal" else collapsed_pair
        bins_m, j, bins_n, k, aborted = draw(bank, x, self.weights, self.prior_m, self.prior_n,
                                             self.plan_b, self.plan_c)
        jb = decode_unipartite_batch(self.mask_b, y, bins_m)
        kc = decode_unipartite_batch(self.mask_c, z, bins_n)
        miss_b, miss_c = jb == NO_SLOT, kc == NO_SLOT
        jb, kc = np.where(miss_b, 0, jb), np.where(miss_c, 0, kc)
        m_hat, n_hat = bins_m[rows, jb], bins_n[rows, kc]
        cells = np.ravel_multi_index((x, y, z, m_hat, n_hat), self.hist_shape)
        return {"abort": int(aborted.sum()), "miss_b": int(miss_b.sum()), "miss_c": int(miss_c.sum()),
                "slot_error_b": int(np.count_nonzero(jb != j)),
                "slot_error_c": int(np.count_nonzero(kc != k)),
                "hist": np.bincount(cells, minlength=int(np.prod(self.hist_shape)))}

    def slots_per_lane(self) -> int:
        if self.engine == "literal":
            return self.plan_b.total * self.plan_c.total
        return self.weights.shape[1] * self.weights.shape[2] + self.plan_b.bin_size + self.plan_c.bin_size


def _parts(cfg: OneSenderConfig) -> tuple[float, tuple]:
    if cfg.eps_parts is not None:
        parts = tuple(float(e) for e in cfg.eps_parts)
        if len(parts) != 3 or any(not 0 < e < 1 for e in parts):
            raise ConfigurationError("eps_parts must be three numbers in (0, 1)")
    elif cfg.eps is not None:
        parts = (cfg.eps / 3,) * 3
    else:
        raise ConfigurationError("give eps or eps_parts")
    eps = sum(parts) if cfg.eps is None else float(cfg.eps)
    if not 0 < eps < 1:
        raise ConfigurationError("eps must lie in (0, 1)")
    return eps, parts


def _priors(cfg: OneSenderConfig, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = []
    for given, marg, name in ((cfg.prior_m, p.sum(axis=(0, 1, 2, 4)), "prior_m"),
                              (cfg.prior_n, p.sum(axis=(0, 1, 2, 3)), "prior_n")):
        if given is None:
            out.append(marg)
            continue
        q = as_table(given, 1, name)
        if q.size != marg.size:
            raise ConfigurationError(f"{name} needs {marg.size} entries, got {q.size}")
        check_normalized(q, name)
        out.append(q)
    return out[0], out[1]


def codebook_divergences(p_xmn: np.ndarray, prior_m: np.ndarray, prior_n: np.ndarray, parts) -> tuple:
    """``D_s`` of p_XM, p_XN and p_XMN against the product with the priors."""
    px = p_xmn.sum(axis=(1, 2))
    p_xm, p_xn = p_xmn.sum(axis=2), p_xmn.sum(axis=1)
    q_xmn = px[:, None, None] * prior_m[None, :, None] * prior_n[None, None, :]
    return (ds_eps(p_xm, np.outer(px, prior_m), parts[0]),
            ds_eps(p_xn, np.outer(px, prior_n), parts[1]),
            ds_eps(p_xmn, q_xmn, parts[2]))


def _ceil(v: float) -> int:
    return int(np.ceil(v - 1e-12))


def plan_one_sender(cfg: OneSenderConfig, p: np.ndarray, binned: bool) -> OneSenderPlan:
    """Rates, premise checks and receiver tests for a 5-axis table.

    ``binned=False`` is Task 4 (no bins, receivers read their slot
    directly); ``binned=True`` is Task 5.
    """
    d = float(cfg.delta)
    if not 0 < d < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    d1 = d if cfg.delta1 is None else float(cfg.delta1)
    d2 = d if cfg.delta2 is None else float(cfg.delta2)
    if not (0 < d1 < 1 and 0 < d2 < 1):
        raise ConfigurationError("delta1 and delta2 must lie in (0, 1)")
    eps, parts = _parts(cfg)
    pu, pv = _priors(cfg, p)
    p_xmn = p.sum(axis=(1, 2))
    ds = codebook_divergences(p_xmn, pu, pv, parts)
    slack = 2 * np.log2(5 / (d2 if binned else d))
    need = tuple(v + slack for v in ds)

    dh = None
    if binned:
        p_ym = p.sum(axis=(0, 2, 4))
        p_zn = p.sum(axis=(0, 1, 3))
        test_b = dh_eps(p_ym, np.outer(p_ym.sum(axis=1), pu), d1, cfg.dh_mode)
        test_c = dh_eps(p_zn, np.outer(p_zn.sum(axis=1), pv), d1, cfg.dh_mode)
        dh = (test_b.value, test_c.value)
        caps = tuple(max(v - np.log2(1 / d2), 0.0) for v in dh)
        mask_b, mask_c = test_b.set.to_mask(), test_c.set.to_mask()
    else:
        caps = (0.0, 0.0)
        mask_b = np.ones((1, pu.size), dtype=bool)
        mask_c = np.ones((1, pv.size), dtype=bool)

    given = (cfg.R_B, cfg.R_C, cfg.r_B, cfg.r_C)
    if not binned and (cfg.r_B is not None or cfg.r_C is not None):
        raise ConfigurationError("task 4 sends full slot indices; r_B and r_C do not apply")
    if all(v is not None for v in given[:2]) and (not binned or all(v is not None for v in given[2:])):
        R_B, R_C = int(cfg.R_B), int(cfg.R_C)
        r_B, r_C = (int(cfg.r_B), int(cfg.r_C)) if binned else (0, 0)
    elif cfg.R_B is None and cfg.R_C is None:
        if binned and cfg.r_B is not None and cfg.r_C is not None:
            r_B, r_C = int(cfg.r_B), int(cfg.r_C)
        elif binned and cfg.r_B is None and cfg.r_C is None:
            r_B = min(int(np.floor(caps[0] + 1e-12)), _ceil(need[0]), cfg.r_max)
            r_C = min(int(np.floor(caps[1] + 1e-12)), _ceil(need[1]), cfg.r_max)
        elif not binned:
            r_B = r_C = 0
        else:
            raise ConfigurationError("give both bin exponents or neither")
        R_B = max(_ceil(need[0]) - r_B, 0)
        R_C = max(_ceil(need[1]) - r_C, 0)
        R_C += max(_ceil(need[2]) - (R_B + R_C + r_B + r_C), 0)
    else:
        raise ConfigurationError("give both R_B and R_C or neither")
    if min(R_B, R_C, r_B, r_C) < 0:
        raise ConfigurationError("rates must be non-negative")
    for name, bits in (("B", R_B + r_B), ("C", R_C + r_C)):
        if bits > 60:
            raise ConfigurationError(f"codebook {name} exponent {bits} exceeds 60")
    if cfg.engine == "literal" and (1 << (R_B + r_B + R_C + r_C)) > cfg.slot_cap:
        raise ConfigurationError(f"the literal engine would score 2^{R_B + r_B + R_C + r_C} slot pairs, "
                                 f"above the cap of {cfg.slot_cap}")
    if max(r_B, r_C) > cfg.r_max:
        raise ConfigurationError(f"bin exponents above r_max={cfg.r_max}")

    tb, tc = R_B + r_B, R_C + r_C
    checks = [PremiseCheck("eps1 + eps2 + eps3", sum(parts), eps, "<="),
              PremiseCheck("codebook B exponent", tb, need[0], ">="),
              PremiseCheck("codebook C exponent", tc, need[1], ">="),
              PremiseCheck("sum of codebook exponents", tb + tc, need[2], ">=")]
    if binned:
        checks += [PremiseCheck("bin exponent r_B", r_B, caps[0], "<="),
                   PremiseCheck("bin exponent r_C", r_C, caps[1], "<=")]
    split_mass = bipartite_premise_mass(p_xmn, pu, pv, tb, tc, d2 if binned else d)
    stated = None
    if binned:
        # Rate form with the bin exponents eliminated as D_s − D_H; the bin
        # caps above subtract a further log2(1/δ2), so this is only indicative.
        stated = {"R_B": need[0] - dh[0], "R_C": need[1] - dh[1], "R_B + R_C": need[2] - dh[0] - dh[1]}
    return OneSenderPlan(p, pu, pv, eps, parts, ds, dh, BinPlan(R_B, r_B), BinPlan(R_C, r_C),
                         mask_b, mask_c, tuple(checks), split_mass, stated)


def _run(task: str, display: str, cfg: OneSenderConfig, p: np.ndarray, binned: bool, bound_of,
         workers) -> ProtocolReport:
    t0 = time.perf_counter()
    if cfg.trials < 1:
        raise ConfigurationError("trials must be at least 1")
    engine = check_engine(cfg.engine)
    plan = plan_one_sender(cfg, p, binned)
    weights = ratio_weights(plan.p.sum(axis=(1, 2)).reshape(p.shape[0], -1),
                            np.outer(plan.prior_m, plan.prior_n).ravel()).reshape(p.shape[0], *p.shape[3:])
    job = OneSenderJob(TableSource(p.sum(axis=(3, 4))), weights, plan.prior_m, plan.prior_n,
                       plan.plan_b, plan.plan_c, plan.mask_b, plan.mask_c, engine, p.shape)
    tally = run_chunks(job, cfg.trials, cfg.seed, chunk=chunk_for(job.slots_per_lane()), workers=workers)
    n = cfg.trials
    hist = tally["hist"].reshape(p.shape)
    tv = plugin_tv(p if binned else p[:, 0, 0], hist if binned else hist[:, 0, 0])
    holds = all(c.holds for c in plan.checks)
    params = {"delta": cfg.delta, "eps": plan.eps, "eps_parts": list(plan.eps_parts),
              "R_B": plan.plan_b.R, "R_C": plan.plan_c.R, "engine": engine}
    if binned:
        params.update({"r_B": plan.plan_b.r, "r_C": plan.plan_c.r,
                       "delta1": cfg.delta if cfg.delta1 is None else cfg.delta1,
                       "delta2": cfg.delta if cfg.delta2 is None else cfg.delta2})
    details = {"ds": list(plan.ds), "dh": None if plan.dh is None else list(plan.dh),
               "split_premise_mass": plan.split_mass, "statement_rates": plan.statement_rates,
               "slot_error_rate_bob": tally["slot_error_b"] / n,
               "slot_error_rate_charlie": tally["slot_error_c"] / n}
    return ProtocolReport(
        task=task, display=display, error_kind="plug-in tv",
        empirical_error=min(tv.value, 1.0), std_error=tv.std_error, bias_bound=tv.bias_bound,
        comm_bits={"alice->bob": plan.plan_b.R, "alice->charlie": plan.plan_c.R},
        theorem_bound=bound_of(plan) if holds else None, premise_checks=list(plan.checks),
        abort_rates={"alice_no_positive_weight": tally["abort"] / n, "bob_no_slot_passes": tally["miss_b"] / n,
                     "charlie_no_slot_passes": tally["miss_c"] / n},
        trials=n, seed=cfg.seed, parameters=params, details=details,
        flags=[] if holds else ["premise violated"], wall_time=time.perf_counter() - t0)


def run_task4(cfg: OneSenderConfig, workers: int | None = None) -> ProtocolReport:
    """One sender, two receivers, no side information.

    ``cfg.p`` has axes (X, M, N).  Alice picks ``(J, K)`` with probability
    proportional to ``p(M_J, N_K | x) / (S(M_J) T(N_K))`` and sends ``J``
    to Bob and ``K`` to Charlie in full.
    """
    p3 = as_table(cfg.p, 3, "p")
    check_normalized(p3, "p")
    p = p3[:, None, None, :, :]
    return _run("task4", DISPLAY_TASK4, cfg, p, False, lambda pl: pl.eps + cfg.delta, workers)


def run_task5(cfg: OneSenderConfig, workers: int | None = None) -> ProtocolReport:
    """One sender, two receivers holding side information Y and Z.

    ``cfg.p`` has axes (X, Y, Z, M, N) with ``(M, N) − X − (Y, Z)``.  The
    slot pair is chosen as in :func:`run_task4`; each receiver gets a bin
    index and keeps the first slot of the bin that passes its own optimal
    hypothesis test.
    """
    p = as_table(cfg.p, 5, "p")
    check_normalized(p, "p")
    if not cond_independent(p, [3, 4], [0]):
        raise ConfigurationError("(M, N) − X − (Y, Z) does not hold within 1e-9")
    d1 = cfg.delta if cfg.delta1 is None else cfg.delta1
    d2 = cfg.delta if cfg.delta2 is None else cfg.delta2
    return _run("task5", DISPLAY_TASK5, cfg, p, True, lambda pl: pl.eps + 2 * d1 + 5 * d2, workers)
