"""Deterministic tests (subsets of a product alphabet) used by decoders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class AcceptanceSet:
    """A subset of a product alphabet.

    Two membership representations are supported:

    * explicit: a boolean ``mask`` over the full alphabet;
    * threshold: a list of log2-ratio tables (or callables on index arrays)
      with one threshold each; a tuple is accepted when every log-ratio is
      ``>=`` its threshold.

    Parameters
    ----------
    axes : tuple of str
        Axis names, in index order.
    shape : tuple of int
        Alphabet sizes.
    mask : ndarray of bool, optional
        Explicit membership table.
    log_ratios : sequence, optional
        Threshold form: tables of shape ``shape`` or callables.
    thresholds : sequence of float, optional
        One threshold per log-ratio, in bits.
    """

    axes: tuple
    shape: tuple
    mask: np.ndarray | None = None
    log_ratios: tuple = field(default=())
    thresholds: tuple = field(default=())

    def __post_init__(self):
        if self.mask is None and not self.log_ratios and not self.thresholds:
            object.__setattr__(self, "mask", np.ones(self.shape, dtype=bool))
        if self.mask is not None and tuple(self.mask.shape) != tuple(self.shape):
            raise ValueError("mask shape does not match the alphabet")
        if len(self.log_ratios) != len(self.thresholds):
            raise ValueError("one threshold per log-ratio is required")

    @property
    def explicit(self) -> bool:
        return self.mask is not None

    def contains(self, *index) -> np.ndarray:
        """Vectorized membership for index arrays (one array per axis)."""
        if self.mask is not None:
            return self.mask[index]
        out = None
        for lr, th in zip(self.log_ratios, self.thresholds):
            vals = lr(*index) if callable(lr) else np.asarray(lr)[index]
            ok = vals >= th
            out = ok if out is None else out & ok
        return out

    def to_mask(self) -> np.ndarray:
        """Materialize membership over the full alphabet."""
        if self.mask is not None:
            return self.mask
        grid = np.indices(self.shape)
        return np.asarray(self.contains(*grid), dtype=bool).reshape(self.shape)

    def mass(self, table) -> float:
        """Probability of the set under a table on the same alphabet."""
        t = np.asarray(table, dtype=float).reshape(self.shape)
        return float(t[self.to_mask()].sum())

    def members(self) -> list[tuple]:
        return [tuple(int(v) for v in i) for i in np.argwhere(self.to_mask())]


def full_set(axes: Sequence[str], shape: Sequence[int]) -> AcceptanceSet:
    return AcceptanceSet(tuple(axes), tuple(shape), np.ones(tuple(shape), dtype=bool))
