"""Lossy source coding with side information at the decoder.

Alice and Bob run the rejection-sampling protocol for a test channel
``p_M|X``; Bob reconstructs ``Z = f(Y, M̂)``.  The figure of merit is the
exceedance probability ``Pr{d(X, Z) >= k}``.  In the derandomized mode a set
of shared strings is sampled, each is fixed for a batch of trials, and the
best string is kept.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigurationError
from ..estimate import frequency
from ..rng import derive_seed
from ..runner import run_chunks
from .br import DEFAULT_K_CAP, BRConfig, _chunk, br_job, plan_br
from .common import ProtocolReport, as_table, check_normalized

DISPLAY = ("Pr{d(X, f(Y, M^)) >= k} <= eps + delta1 + 3 delta2, where delta1 = Pr{d(X, f(Y, M)) >= k} and the "
           "message is sent with the rejection-sampling protocol at slack delta2")


@dataclass(frozen=True)
class LossyConfig:
    """Inputs of the lossy-compression simulator.

    Parameters
    ----------
    p_xy : array_like, shape (nx, ny)
        Source and decoder side information.
    channel : array_like, shape (nx, nm)
        Test channel ``p_M|X`` (rows sum to 1).
    reproduce : array_like of int, shape (ny, nm)
        ``f(y, m)``, an index into the reproduction alphabet.
    distortion : array_like, shape (nx, nz)
        ``d(x, z) >= 0``.
    k : float
        Exceedance threshold.
    eps, delta2 : float
        Smoothing and slack of the underlying message transfer.
    strings : int
        Number of sampled shared strings for the derandomized mode (0
        turns it off).  Every string is scored on the same
        ``trials_per_string`` inputs.
    """

    p_xy: np.ndarray
    channel: np.ndarray
    reproduce: np.ndarray
    distortion: np.ndarray
    k: float
    eps: float
    delta2: float
    kernel_n: np.ndarray | None = None
    k_cap: int = DEFAULT_K_CAP
    trials: int = 10_000
    seed: int = 0
    strings: int = 0
    trials_per_string: int = 2_000


def _tables(cfg: LossyConfig):
    p_xy = as_table(cfg.p_xy, 2, "p_xy")
    check_normalized(p_xy, "p_xy")
    ch = as_table(cfg.channel, 2, "channel")
    if ch.shape[0] != p_xy.shape[0] or np.any(np.abs(ch.sum(axis=1) - 1) > 1e-9):
        raise ConfigurationError("channel must be a row-stochastic (|X|, |M|) matrix")
    f = np.asarray(cfg.reproduce)
    if f.shape != (p_xy.shape[1], ch.shape[1]) or not np.issubdtype(f.dtype, np.integer):
        raise ConfigurationError("reproduce must be an integer (|Y|, |M|) table")
    dist = as_table(cfg.distortion, 2, "distortion")
    if dist.shape[0] != p_xy.shape[0] or f.min() < 0 or f.max() >= dist.shape[1]:
        raise ConfigurationError("reproduce must index the columns of distortion")
    if np.any(dist < 0):
        raise ConfigurationError("distortion must be non-negative")
    return p_xy, ch, f, dist


def exceedance_cells(distortion: np.ndarray, reproduce: np.ndarray, k: float) -> np.ndarray:
    """Boolean (x, y, m) table of ``d(x, f(y, m)) >= k``."""
    return distortion[:, reproduce] >= k


def _exceedance(hist: np.ndarray, bad: np.ndarray) -> tuple[int, int]:
    h = hist.reshape(bad.shape)
    return int(h[bad].sum()), int(h.sum())


def run_task7(cfg: LossyConfig, workers: int | None = None) -> ProtocolReport:
    """Simulate lossy compression and compare the exceedance with ``ε + δ1 + 3δ2``.

    ``δ1`` is the exact exceedance of the ideal (unsimulated) message, so
    the guarantee is informative only when the test channel is good.
    """
    t0 = time.perf_counter()
    if cfg.trials < 1:
        raise ConfigurationError("trials must be at least 1")
    if cfg.strings < 0 or (cfg.strings and cfg.trials_per_string < 1):
        raise ConfigurationError("strings must be >= 0 and trials_per_string >= 1")
    p_xy, ch, f, dist = _tables(cfg)
    p_xym = p_xy[:, :, None] * ch[:, None, :]
    bad = exceedance_cells(dist, f, cfg.k)
    delta1 = float(p_xym[bad].sum())
    plan = plan_br(BRConfig(p_xym, cfg.eps, cfg.delta2, cfg.kernel_n, cfg.k_cap, cfg.trials, cfg.seed))
    chunk = _chunk(plan)
    tally = run_chunks(br_job(plan), cfg.trials, cfg.seed, chunk=chunk, workers=workers)
    hits, n = _exceedance(tally["hist"], bad)
    est = frequency(np.arange(n) < hits)
    n_aborts = sum(tally[k] for k in ("alice_abort", "bob_list_too_long", "hash_collision", "no_hash_match"))

    details = {"ideal_exceedance_delta1": delta1, "c": plan.c, "hash_bits": plan.hash_bits,
               "snap_tv": plan.snap_tv, "abort_rate": n_aborts / n}
    flags = [] if plan.snap_exact else ["kernels snapped to multiples of 1/K; bound includes the snapping tv"]
    if cfg.strings:
        details["derandomized"] = derandomize(plan, bad, cfg.strings, cfg.trials_per_string, cfg.seed,
                                              chunk, workers)
        if not details["derandomized"]["min_le_mean"]:
            flags.append("best sampled string is worse than the average")
    bits = tally["wire_bits"] // n
    return ProtocolReport(
        task="task7", display=DISPLAY, error_kind="exceedance frequency Pr{d(X,Z) >= k}",
        empirical_error=est.value, std_error=est.std_error,
        comm_bits={"alice->bob": bits},
        theorem_bound=cfg.eps + delta1 + 3 * cfg.delta2 + plan.snap_tv,
        abort_rates={k: tally[k] / n for k in ("alice_abort", "bob_list_too_long", "hash_collision",
                                               "no_hash_match")},
        trials=n, seed=cfg.seed,
        parameters={"eps": cfg.eps, "delta2": cfg.delta2, "k": cfg.k, "K": plan.K, "strings": cfg.strings,
                    "trials_per_string": cfg.trials_per_string},
        details=details, flags=flags, wall_time=time.perf_counter() - t0)


def derandomize(plan, bad: np.ndarray, strings: int, per_string: int, seed: int, chunk: int,
                workers=None) -> dict:
    """Exceedance of each of ``strings`` fixed shared strings.

    All strings are scored on the same batch of inputs (common random
    numbers, so differences between strings are not masked by input
    noise); within a batch every trial reads the same shared lane.  The
    minimum of the per-string estimates can never exceed their mean; both
    are returned together with the check.
    """
    rates = []
    for s in range(strings):
        job = replace(br_job(plan), shared_lane=s)
        tally = run_chunks(job, per_string, derive_seed(seed, 0xD5), chunk=chunk, workers=workers)
        hits, n = _exceedance(tally["hist"], bad)
        rates.append(hits / n)
    rates = np.asarray(rates)
    best = int(rates.argmin())
    return {"per_string": rates.tolist(), "best_string": best, "best_exceedance": float(rates[best]),
            "mean_exceedance": float(rates.mean()), "min_le_mean": bool(rates[best] <= rates.mean())}
