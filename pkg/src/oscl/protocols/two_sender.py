"""Two senders, one receiver: each sender embeds its message in its own
convex-split codebook and sends a bin index; the receiver decodes the pair of
slots jointly inside the announced bin grid.

Task 2 has no receiver side information, Task 3 gives the receiver ``Z``,
and Task 9 is the helper setting where Alice's message is her source ``X``
itself and Charlie must recover ``X``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..decoding import (BipartiteDensities, BipartiteThresholds, bipartite_premise_mass,
                        build_test_from_thresholds)
from ..divergence import dh_eps, ds_eps
from ..errors import ConfigurationError
from ..estimate import plugin_tv
from ..runner import run_chunks
from .common import (BinPlan, BinSplit, PremiseCheck, ProtocolReport, as_table, check_normalized, chunk_for,
                     cond_independent, find_bin_split, ratio_weights, two_sender_constraints)
from .engine import MaskTest, Sender, TableSource, TwoSenderJob, check_engine

DEFAULT_SLOT_CAP = 1 << 20
DEFAULT_GRID_CAP = 1 << 16

DISPLAY_TASK2 = ("1/2|p_XYMN - p_XYM^N^| <= eps + eta1 + eta2 + 8 delta, given R_A + r_A >= D_s^eta1(p_XM||p_X x S) "
                 "+ 2 log2(3/delta), R_B + r_B >= D_s^eta2(p_YN||p_Y x T) + 2 log2(3/delta) and threshold-test "
                 "premise mass <= eps")
DISPLAY_TASK3 = ("1/2|p_XYZMN - p_XYZM^N^| <= eps1 + eps2 + eps3 + 13 delta, given R + r >= D_s^delta + 2 log2(3/delta) "
                 "per sender and r_A, r_B, r_A + r_B <= max(D_H^eps_i - 2 log2(1/delta), 0)")
DISPLAY_TASK3_THRESHOLD = ("1/2|p_XYZMN - p_XYZM^N^| <= eps + 2 delta + 8 delta, given the codebook constraints "
                           "with D_s^delta and threshold-test premise mass over (Z, M, N) <= eps")
DISPLAY_TASK9 = ("Pr{X != X^} <= eps + eta + 8 delta, given R_A + r_A >= log2|X| + 2 log2(3/delta), "
                 "R_B + r_B >= D_s^eta(p_YN||p_Y x p_N) + 2 log2(3/delta) and threshold-test premise mass <= eps")


@dataclass(frozen=True)
class TwoSenderConfig:
    """Inputs shared by the two-sender simulators.

    Parameters
    ----------
    p : array_like
        Task 2: shape (X, Y, M, N).  Task 3: shape (X, Y, Z, M, N).
        Task 9: shape (X, Y, N), the message of Alice being X itself.
    delta : float
        Slack parameter.
    eps : float, optional
        Allowed premise mass of the threshold test.  Defaults to
        ``sum(eps_parts) + 3δ`` (the D_H-based choice) and must then be
        below 1.
    eps_parts : tuple of 3 floats, optional
        Type-I allowances of the three hypothesis tests used to size the
        bins (and, for Task 3 with ``test="dh"``, to build the test).
    eta1, eta2 : float, optional
        Smoothing of the codebook-size divergences; default ``δ``.  For
        Task 9 only ``eta2`` is used (Alice's is exactly 0).
    prior_m, prior_n : array_like, optional
        S and T.  Default to the message marginals (S is uniform for Task 9).
    R_A, r_A, R_B, r_B : int, optional
        Bin-index bits and bin-size exponents.  With only ``R_A, R_B``
        given, the bin split is searched; with nothing given, rates follow
        ``rate_rule``.
    rate_rule : {"premise", "dh"}
        ``premise``: largest ``r_A + r_B`` whose threshold-test premise
        mass is at most ``eps``.  ``dh``: largest sum allowed by the D_H
        caps.
    test : {"threshold", "dh"}
        Receiver test; ``dh`` intersects three optimal hypothesis-test sets
        and is only meaningful for Task 3.
    engine : {"collapsed", "literal"}
        ``literal`` materializes both codebooks; ``collapsed`` samples the
        announced bins from their exact law (same output distribution).
    """

    p: np.ndarray
    delta: float
    eps: float | None = None
    eps_parts: tuple | None = None
    eta1: float | None = None
    eta2: float | None = None
    prior_m: np.ndarray | None = None
    prior_n: np.ndarray | None = None
    R_A: int | None = None
    r_A: int | None = None
    R_B: int | None = None
    r_B: int | None = None
    rate_rule: str = "premise"
    test: str = "threshold"
    engine: str = "collapsed"
    trials: int = 10_000
    seed: int = 0
    dh_mode: str = "auto"
    r_max: int = 16
    slot_cap: int = DEFAULT_SLOT_CAP
    grid_cap: int = DEFAULT_GRID_CAP


@dataclass(frozen=True)
class TwoSenderPlan:
    p: np.ndarray                # (X, Y, Z, M, N)
    prior_m: np.ndarray
    prior_n: np.ndarray
    eps: float
    eta1: float
    eta2: float
    ds_a: float
    ds_b: float
    dh: tuple | None
    R_A: int
    r_A: int
    R_B: int
    r_B: int
    premise_mass: float
    mask: np.ndarray             # (Z, M, N)
    checks: tuple
    split: BinSplit | None
    feasible: bool

    @property
    def premise_checks(self) -> list[PremiseCheck]:
        return list(self.checks)


def _eps_parts(cfg: TwoSenderConfig) -> tuple:
    if cfg.eps_parts is not None:
        parts = tuple(float(e) for e in cfg.eps_parts)
        if len(parts) != 3 or any(not 0 < e < 1 for e in parts):
            raise ConfigurationError("eps_parts must be three numbers in (0, 1)")
        return parts
    if cfg.eps is None:
        raise ConfigurationError("give eps or eps_parts")
    share = (cfg.eps - 3 * cfg.delta) / 3
    if share <= 0:
        return (cfg.eps / 3,) * 3
    return (share,) * 3


def _dh_values(p: np.ndarray, pu: np.ndarray, pv: np.ndarray, parts, mode: str) -> tuple:
    """D_H of p_ZMN against S × p_ZN, p_ZM × T and p_Z × S × T."""
    p_zmn = p.sum(axis=(0, 1))
    pz = p_zmn.sum(axis=(1, 2))
    pzm = p_zmn.sum(axis=2)
    pzn = p_zmn.sum(axis=1)
    qs = (pzn[:, None, :] * pu[None, :, None],
          pzm[:, :, None] * pv[None, None, :],
          pz[:, None, None] * pu[None, :, None] * pv[None, None, :])
    return tuple(dh_eps(p_zmn, q, e, mode) for q, e in zip(qs, parts))


def _codebook_total(ds: float, delta: float) -> int:
    return int(np.ceil(ds + 2 * np.log2(3 / delta) - 1e-12))


def _premise_mass(p, pu, pv, ra, rb, delta) -> float:
    return bipartite_premise_mass(p.sum(axis=(0, 1)), pu, pv, ra, rb, delta)


def plan_two_sender(cfg: TwoSenderConfig, p: np.ndarray, prior_m: np.ndarray, prior_n: np.ndarray,
                    ds_a: float | None = None) -> TwoSenderPlan:
    """Rates, premise checks and the receiver's test for a 5-axis table."""
    d = cfg.delta
    if not 0 < d < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    if cfg.rate_rule not in ("premise", "dh"):
        raise ConfigurationError(f"unknown rate rule {cfg.rate_rule!r}")
    if cfg.test not in ("threshold", "dh"):
        raise ConfigurationError(f"unknown test {cfg.test!r}")
    parts = _eps_parts(cfg) if (cfg.rate_rule == "dh" or cfg.test == "dh" or cfg.eps is None) else None
    eps = cfg.eps if cfg.eps is not None else sum(parts) + 3 * d
    if not 0 < eps < 1:
        raise ConfigurationError("eps must lie in (0, 1)")
    eta1 = d if cfg.eta1 is None else float(cfg.eta1)
    eta2 = d if cfg.eta2 is None else float(cfg.eta2)
    p_xm = p.sum(axis=(1, 2, 4))
    p_yn = p.sum(axis=(0, 2, 3))
    if ds_a is None:
        ds_a = ds_eps(p_xm, np.outer(p_xm.sum(axis=1), prior_m), eta1)
    ds_b = ds_eps(p_yn, np.outer(p_yn.sum(axis=1), prior_n), eta2)
    need_a, need_b = _codebook_total(ds_a, d), _codebook_total(ds_b, d)
    dh = _dh_values(p, prior_m, prior_n, parts, cfg.dh_mode) if parts is not None else None
    dh_vals = tuple(t.value for t in dh) if dh is not None else None

    explicit = [cfg.R_A, cfg.r_A, cfg.R_B, cfg.r_B]
    split = None
    if all(v is not None for v in explicit):
        R_A, r_A, R_B, r_B = map(int, explicit)
    elif cfg.r_A is not None and cfg.r_B is not None:
        r_A, r_B = int(cfg.r_A), int(cfg.r_B)
        R_A = max(need_a - r_A, 0) if cfg.R_A is None else int(cfg.R_A)
        R_B = max(need_b - r_B, 0) if cfg.R_B is None else int(cfg.R_B)
    elif cfg.R_A is not None and cfg.R_B is not None:
        R_A, R_B = int(cfg.R_A), int(cfg.R_B)
        if cfg.rate_rule == "dh":
            split = find_bin_split(two_sender_constraints(R_A, R_B, ds_a, ds_b, *dh_vals, d), cfg.r_max)
        else:
            split = _premise_split(p, prior_m, prior_n, R_A, R_B, need_a, need_b, eps, d, cfg.r_max)
        if not split.feasible:
            return TwoSenderPlan(p, prior_m, prior_n, eps, eta1, eta2, ds_a, ds_b, dh_vals, R_A, -1, R_B, -1,
                                 float("nan"), np.zeros(0, dtype=bool), (), split, False)
        r_A, r_B = split.r_A, split.r_B
    elif all(v is None for v in explicit):
        if cfg.rate_rule == "dh":
            caps = [int(np.floor(max(v - 2 * np.log2(1 / d), 0.0) + 1e-12)) for v in dh_vals]
            r_A, r_B = _best_pair(lambda a, b: a <= caps[0] and b <= caps[1] and a + b <= caps[2], cfg.r_max)
        else:
            r_A, r_B = _best_pair(lambda a, b: _premise_mass(p, prior_m, prior_n, a, b, d) <= eps, cfg.r_max)
        R_A, R_B = max(need_a - r_A, 0), max(need_b - r_B, 0)
    else:
        raise ConfigurationError("give all four rates, the bin exponents (r_A, r_B), the bin indices "
                                 "(R_A, R_B), or none of them")
    if min(R_A, r_A, R_B, r_B) < 0:
        raise ConfigurationError("rates must be non-negative")
    for name, bits in (("A", R_A + r_A), ("B", R_B + r_B)):
        if cfg.engine == "literal" and (1 << bits) > cfg.slot_cap:
            raise ConfigurationError(f"codebook {name} has 2^{bits} slots, above the cap of {cfg.slot_cap}")
        if bits > 60:
            raise ConfigurationError(f"codebook {name} exponent {bits} exceeds 60")
    if (1 << (r_A + r_B)) > cfg.grid_cap:
        raise ConfigurationError(f"bin grid 2^{r_A + r_B} exceeds the cap of {cfg.grid_cap}")

    checks = [PremiseCheck("codebook A exponent R_A + r_A", R_A + r_A, ds_a + 2 * np.log2(3 / d), ">="),
              PremiseCheck("codebook B exponent R_B + r_B", R_B + r_B, ds_b + 2 * np.log2(3 / d), ">=")]
    mass = _premise_mass(p, prior_m, prior_n, r_A, r_B, d)
    if cfg.test == "dh":
        slack = 2 * np.log2(1 / d)
        checks += [PremiseCheck("bin exponent r_A", r_A, max(dh_vals[0] - slack, 0.0), "<="),
                   PremiseCheck("bin exponent r_B", r_B, max(dh_vals[1] - slack, 0.0), "<="),
                   PremiseCheck("bin exponent r_A + r_B", r_A + r_B, max(dh_vals[2] - slack, 0.0), "<=")]
        mask = dh[0].set.to_mask() & dh[1].set.to_mask() & dh[2].set.to_mask()
    else:
        checks.append(PremiseCheck("threshold-test premise mass", mass, eps, "<="))
        dens = BipartiteDensities.from_joint(p.sum(axis=(0, 1)), prior_m, prior_n)
        mask = build_test_from_thresholds(BipartiteThresholds.from_rates(r_A, r_B, d), dens).to_mask()
    return TwoSenderPlan(p, prior_m, prior_n, eps, eta1, eta2, ds_a, ds_b, dh_vals, R_A, r_A, R_B, r_B,
                         mass, mask, tuple(checks), split, True)


def _best_pair(ok, r_max: int) -> tuple[int, int]:
    """Pair with the largest sum (ties: larger r_A) satisfying ``ok``; (0, 0) if none."""
    best = (0, 0, 0)
    for ra in range(r_max + 1):
        for rb in range(r_max + 1 - ra):
            if ok(ra, rb) and (ra + rb, ra) > best[:2]:
                best = (ra + rb, ra, rb)
    return best[1], best[2]


def _premise_split(p, pu, pv, R_A, R_B, need_a, need_b, eps, delta, r_max) -> BinSplit:
    """Lexicographically smallest (r_A, r_B) meeting both codebook sizes and the premise mass."""
    for ra in range(max(need_a - R_A, 0), r_max + 1):
        for rb in range(max(need_b - R_B, 0), r_max + 1):
            if _premise_mass(p, pu, pv, ra, rb, delta) <= eps + 1e-12:
                return BinSplit(True, ra, rb, (), r_max)
    return BinSplit(False, None, None, (), r_max)


def _simulate(plan: TwoSenderPlan, cfg: "TwoSenderConfig", workers) -> dict:
    p = plan.p
    engine = check_engine(cfg.engine)
    alice = Sender.from_weights(ratio_weights(p.sum(axis=(1, 2, 4)), plan.prior_m), plan.prior_m,
                                BinPlan(plan.R_A, plan.r_A))
    bob = Sender.from_weights(ratio_weights(p.sum(axis=(0, 2, 3)), plan.prior_n), plan.prior_n,
                              BinPlan(plan.R_B, plan.r_B))
    job = TwoSenderJob(TableSource(p.sum(axis=(3, 4))), alice, bob, MaskTest(plan.mask), engine, p.shape)
    tally = run_chunks(job, cfg.trials, cfg.seed, chunk=chunk_for(job.slots_per_lane()), workers=workers)
    if tally["wire_overflow"]:
        raise RuntimeError("a bin index did not fit in its bit budget")
    return tally


def _common_fields(plan: TwoSenderPlan, tally: dict, trials: int) -> tuple[dict, dict, dict]:
    aborts = {"alice_no_positive_weight": tally["abort_a"] / trials,
              "bob_no_positive_weight": tally["abort_b"] / trials,
              "charlie_no_pair_passes": tally["miss"] / trials}
    params = {"R_A": plan.R_A, "r_A": plan.r_A, "R_B": plan.R_B, "r_B": plan.r_B}
    details = {"ds_a": plan.ds_a, "ds_b": plan.ds_b, "dh": plan.dh, "premise_mass": plan.premise_mass,
               "pair_error_rate": tally["pair_error"] / trials}
    if plan.split is not None:
        details["bin_split"] = plan.split.to_dict()
    return aborts, params, details


def _infeasible_report(task: str, display: str, kind: str, plan: TwoSenderPlan, cfg: TwoSenderConfig,
                       t0: float) -> ProtocolReport:
    return ProtocolReport(
        task=task, display=display, error_kind=kind, empirical_error=None, std_error=None,
        comm_bits={"alice->charlie": plan.R_A, "bob->charlie": plan.R_B}, theorem_bound=None,
        trials=0, seed=cfg.seed,
        parameters={"delta": cfg.delta, "eps": plan.eps, "R_A": plan.R_A, "R_B": plan.R_B},
        details={"ds_a": plan.ds_a, "ds_b": plan.ds_b, "dh": plan.dh, "bin_split": plan.split.to_dict()},
        flags=["no bin split satisfies the constraints; not run"], status="infeasible",
        wall_time=time.perf_counter() - t0)


def _priors(cfg: TwoSenderConfig, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
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


def _check_trials(cfg: TwoSenderConfig) -> None:
    if cfg.trials < 1:
        raise ConfigurationError("trials must be at least 1")


def _run_tv(task: str, display: str, cfg: TwoSenderConfig, p: np.ndarray, bound_of, workers) -> ProtocolReport:
    t0 = time.perf_counter()
    _check_trials(cfg)
    pu, pv = _priors(cfg, p)
    plan = plan_two_sender(cfg, p, pu, pv)
    if not plan.feasible:
        return _infeasible_report(task, display, "plug-in tv", plan, cfg, t0)
    tally = _simulate(plan, cfg, workers)
    target = p if task == "task3" else p[:, :, 0]
    hist = tally["hist"].reshape(p.shape)
    tv = plugin_tv(target, hist if task == "task3" else hist[:, :, 0])
    aborts, params, details = _common_fields(plan, tally, cfg.trials)
    params.update({"delta": cfg.delta, "eps": plan.eps, "eta1": plan.eta1, "eta2": plan.eta2,
                   "test": cfg.test, "rate_rule": cfg.rate_rule})
    return ProtocolReport(
        task=task, display=display, error_kind="plug-in tv",
        empirical_error=min(tv.value, 1.0), std_error=tv.std_error, bias_bound=tv.bias_bound,
        comm_bits={"alice->charlie": plan.R_A, "bob->charlie": plan.R_B},
        theorem_bound=bound_of(plan) if all(c.holds for c in plan.checks) else None,
        premise_checks=plan.premise_checks, abort_rates=aborts, trials=cfg.trials, seed=cfg.seed,
        parameters=params, details=details, wall_time=time.perf_counter() - t0)


def run_task2(cfg: TwoSenderConfig, workers: int | None = None) -> ProtocolReport:
    """Two-sender message compression without receiver side information.

    ``cfg.p`` has axes (X, Y, M, N) and must factor as
    ``p(x, y) p(m|x) p(n|y)``.
    """
    p4 = as_table(cfg.p, 4, "p")
    check_normalized(p4, "p")
    if not (cond_independent(p4, [2], [0]) and cond_independent(p4, [3], [1])):
        raise ConfigurationError("M − X − Y − N does not hold within 1e-9")
    if cfg.test != "threshold":
        raise ConfigurationError("task 2 uses the threshold test")
    p = p4[:, :, None, :, :]
    return _run_tv("task2", DISPLAY_TASK2, cfg, p,
                   lambda pl: pl.eps + pl.eta1 + pl.eta2 + 8 * cfg.delta, workers)


def run_task3(cfg: TwoSenderConfig, workers: int | None = None) -> ProtocolReport:
    """Two-sender message compression with side information Z at the receiver.

    ``cfg.p`` has axes (X, Y, Z, M, N).  Both messages must be generated
    locally: ``M − X − (Y, Z, N)`` and ``N − Y − (X, Z, M)``.  With
    ``test="dh"`` the receiver intersects the three optimal test sets and
    the codebooks are sized with ``D_s^δ``.
    """
    p = as_table(cfg.p, 5, "p")
    check_normalized(p, "p")
    if not (cond_independent(p, [3], [0]) and cond_independent(p, [4], [1])):
        raise ConfigurationError("M − X − (Y, Z, N) or N − Y − (X, Z, M) does not hold within 1e-9")
    if cfg.eta1 is not None or cfg.eta2 is not None:
        raise ConfigurationError("task 3 sizes both codebooks with smoothing delta")
    if cfg.test == "dh":
        return _run_tv("task3", DISPLAY_TASK3, cfg, p, lambda pl: sum(_eps_parts(cfg)) + 13 * cfg.delta, workers)
    return _run_tv("task3", DISPLAY_TASK3_THRESHOLD, cfg, p, lambda pl: pl.eps + 10 * cfg.delta, workers)


def helper_sufficient_condition(p_xyn, R_A: int, R_B: int, eps: float, eta: float, delta: float) -> dict:
    """Closed-form rate test for the helper setting with S uniform and T = p_N.

    Needs ``R_B >= D_s^η(p_YN||p_Y × p_N) + 5 log2(1/δ)`` and
    ``Pr{p(x|n) <= 2^-R_A / δ³} <= ε − δ``, the probability summed exactly.
    """
    p = np.asarray(p_xyn, dtype=float)
    p_yn = p.sum(axis=0)
    p_xn = p.sum(axis=1)
    ds = ds_eps(p_yn, np.outer(p_yn.sum(axis=1), p_yn.sum(axis=0)), eta)
    pn = p_xn.sum(axis=0)
    cond = np.divide(p_xn, pn[None, :], out=np.zeros_like(p_xn), where=pn[None, :] > 0)
    mass = float(p_xn[(p_xn > 0) & (cond <= 2.0 ** -R_A / delta ** 3)].sum())
    rb_need = ds + 5 * np.log2(1 / delta)
    return {"ds_eta": ds, "R_B_needed": rb_need, "low_posterior_mass": mass, "allowed": eps - delta,
            "holds": bool(R_B >= rb_need - 1e-12 and mass <= eps - delta + 1e-12)}


def run_task9(cfg: TwoSenderConfig, workers: int | None = None) -> ProtocolReport:
    """Source coding with a coded helper: Charlie recovers X from both messages.

    ``cfg.p`` has axes (X, Y, N) with ``X − Y − N``.  Alice's message is X
    itself (codebook prior uniform on X), Bob's is N with ``T = p_N`` unless
    ``prior_n`` is given.  The error is the block error ``Pr{X̂ != X}``.
    """
    t0 = time.perf_counter()
    _check_trials(cfg)
    p3 = as_table(cfg.p, 3, "p")
    check_normalized(p3, "p")
    if not cond_independent(p3, [0], [1]):
        raise ConfigurationError("X − Y − N does not hold within 1e-9")
    if cfg.prior_m is not None:
        raise ConfigurationError("Alice's codebook prior is uniform in the helper setting")
    nx, ny, nn = p3.shape
    p = np.zeros((nx, ny, 1, nx, nn))
    p[np.arange(nx), :, 0, np.arange(nx), :] = p3
    pu = np.full(nx, 1.0 / nx)
    _, pv = _priors(cfg, p)
    plan = plan_two_sender(cfg, p, pu, pv, ds_a=float(np.log2(nx)))
    if not plan.feasible:
        return _infeasible_report("task9", DISPLAY_TASK9, "block error Pr{X^ != X}", plan, cfg, t0)
    tally = _simulate(plan, cfg, workers)
    n = cfg.trials
    err = tally["x_mismatch"] / n
    aborts, params, details = _common_fields(plan, tally, n)
    params.update({"delta": cfg.delta, "eps": plan.eps, "eta": plan.eta2, "rate_rule": cfg.rate_rule})
    details["helper_condition"] = helper_sufficient_condition(p3, plan.R_A, plan.R_B, plan.eps, plan.eta2,
                                                              cfg.delta)
    holds = all(c.holds for c in plan.checks)
    flags = [] if holds else ["premise violated"]
    return ProtocolReport(
        task="task9", display=DISPLAY_TASK9, error_kind="block error Pr{X^ != X}",
        empirical_error=err, std_error=float(np.sqrt(err * (1 - err) / n)),
        comm_bits={"alice->charlie": plan.R_A, "bob->charlie": plan.R_B},
        theorem_bound=plan.eps + plan.eta2 + 8 * cfg.delta if holds else None,
        premise_checks=plan.premise_checks, abort_rates=aborts, trials=n, seed=cfg.seed,
        parameters=params, details=details, flags=flags, wall_time=time.perf_counter() - t0)
