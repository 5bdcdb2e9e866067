"""Estimators shared by the benches and protocol simulators."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its uncertainty.

    ``bias_bound`` is only meaningful for plug-in distances (0 otherwise).
    """

    value: float
    std_error: float
    bias_bound: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def frequency(events) -> Estimate:
    """Event frequency with the binomial standard error."""
    e = np.asarray(events, dtype=bool)
    n = e.size
    p = float(e.mean()) if n else 0.0
    return Estimate(p, float(np.sqrt(p * (1 - p) / n)) if n else 0.0)


def histogram(flat_indices, size: int) -> np.ndarray:
    return np.bincount(np.asarray(flat_indices, dtype=np.int64), minlength=size)


def plugin_tv(target, counts) -> Estimate:
    """½‖target − empirical‖ from a histogram of observed cells.

    The standard error uses the bounded-difference (Efron–Stein) bound
    ``sqrt(1/(2n))``: moving one sample changes the statistic by at most
    ``1/n``.  The bias bound is ``sqrt(cells/n)``.
    """
    t = np.asarray(target, dtype=float).ravel()
    c = np.asarray(counts, dtype=float).ravel()
    n = c.sum()
    if n <= 0:
        raise ValueError("no samples")
    tv = 0.5 * float(np.abs(c / n - t).sum())
    return Estimate(tv, float(np.sqrt(1.0 / (2 * n))), float(np.sqrt(t.size / n)))
