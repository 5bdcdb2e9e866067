"""Finite-alphabet distributions with named axes.

A :class:`JointDist` is a dense probability table whose axes carry a name and
an alphabet.  Everything in the package (divergences, codebooks, protocol
simulators) consumes these tables or the flat arrays behind them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError
from .rng import StreamBank, inverse_cdf

NORM_TOL = 1e-12
DEFAULT_MAX_CELLS = 2**22


@dataclass(frozen=True)
class Axis:
    name: str
    symbols: tuple

    def __len__(self) -> int:
        return len(self.symbols)


def _as_axes(axes) -> tuple[Axis, ...]:
    out = []
    for a in axes:
        if isinstance(a, Axis):
            out.append(a)
            continue
        name, symbols = (a["name"], a["symbols"]) if isinstance(a, dict) else a
        if isinstance(symbols, (int, np.integer)):
            symbols = range(int(symbols))
        out.append(Axis(str(name), tuple(symbols)))
    return tuple(out)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class FiniteDist:
    """Probability vector over a labelled finite alphabet.

    Parameters
    ----------
    labels : sequence
        Distinct symbol identifiers.
    probs : array_like
        Non-negative weights summing to one within ``1e-12``.
    """

    def __init__(self, labels: Sequence, probs):
        labels = tuple(labels)
        probs = np.asarray(probs, dtype=float).ravel()
        if len(labels) != probs.size:
            raise ConfigurationError(f"{len(labels)} labels but {probs.size} probabilities")
        if len(set(labels)) != len(labels):
            raise ConfigurationError("labels must be unique")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ConfigurationError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > NORM_TOL:
            raise ConfigurationError(f"probabilities sum to {probs.sum():.15g}, not 1")
        self.labels = labels
        self.probs = _frozen(probs)

    @classmethod
    def uniform(cls, labels: Sequence | int) -> "FiniteDist":
        if isinstance(labels, (int, np.integer)):
            labels = range(int(labels))
        labels = tuple(labels)
        return cls(labels, np.full(len(labels), 1.0 / len(labels)))

    @classmethod
    def point(cls, labels: Sequence, symbol) -> "FiniteDist":
        labels = tuple(labels)
        p = np.zeros(len(labels))
        p[labels.index(symbol)] = 1.0
        return cls(labels, p)

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"FiniteDist({list(self.labels)!r}, {self.probs.tolist()!r})"

    def as_joint(self, name: str) -> "JointDist":
        return JointDist([(name, self.labels)], self.probs)


class CondKernel:
    """Conditional distribution p(out | in) stored as a row-stochastic matrix.

    Parameters
    ----------
    inputs, outputs : sequence
        Input and output alphabets.
    matrix : array_like, shape (len(inputs), len(outputs))
        Row ``i`` is the output distribution given ``inputs[i]``.
    """

    def __init__(self, inputs: Sequence, outputs: Sequence, matrix):
        m = np.asarray(matrix, dtype=float)
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        if m.shape != (len(self.inputs), len(self.outputs)):
            raise ConfigurationError(f"kernel shape {m.shape} does not match alphabets")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > NORM_TOL):
            raise ConfigurationError("every kernel row must be a probability vector")
        self.matrix = _frozen(m)

    def row(self, symbol) -> FiniteDist:
        return FiniteDist(self.outputs, self.matrix[self.inputs.index(symbol)])


class JointDist:
    """Dense joint distribution with named axes.

    Parameters
    ----------
    axes : sequence
        ``(name, symbols)`` pairs, :class:`Axis` objects or JSON-style dicts.
        An integer in place of ``symbols`` means ``range(n)``.
    table : array_like
        Non-negative table whose shape matches the alphabets (a flat
        row-major vector is reshaped).
    subnormalized : bool
        Allow a total mass below one.
    max_cells : int
        Refuse tables larger than this.

    Examples
    --------
    >>> j = JointDist([("X", 2), ("Y", 2)], [0.5, 0, 0, 0.5])
    >>> j.marginal(["X"]).table.tolist()
    [0.5, 0.5]
    """

    def __init__(self, axes, table, subnormalized: bool = False, max_cells: int = DEFAULT_MAX_CELLS):
        self.axes = _as_axes(axes)
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"axis names must be unique, got {names}")
        shape = tuple(len(a) for a in self.axes)
        cells = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if cells > max_cells:
            raise ConfigurationError(f"table of {cells} cells exceeds the cap of {max_cells}")
        t = np.asarray(table, dtype=float)
        if t.size != cells:
            raise ConfigurationError(f"table has {t.size} entries, alphabets need {cells}")
        t = t.reshape(shape)
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ConfigurationError("table entries must be finite and non-negative")
        total = t.sum()
        if subnormalized:
            if total > 1.0 + NORM_TOL:
                raise ConfigurationError(f"sub-normalized table sums to {total:.15g} > 1")
        elif abs(total - 1.0) > NORM_TOL:
            raise ConfigurationError(f"table sums to {total:.15g}, not 1")
        self.table = _frozen(t)
        self.subnormalized = subnormalized

    # -- basic accessors ---------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.table.shape

    def axis(self, name: str) -> Axis:
        return self.axes[self.index(name)]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"unknown axis {name!r}; axes are {list(self.names)}") from None

    def __repr__(self) -> str:
        dims = ", ".join(f"{a.name}:{len(a)}" for a in self.axes)
        return f"JointDist({dims})"

    # -- transformations ---------------------------------------------------
    def marginal(self, keep: Iterable[str]) -> "JointDist":
        return marginalize(self, keep)

    def condition(self, axis: str, value) -> "JointDist":
        return condition(self, axis, value)

    def reorder(self, order: Sequence[str]) -> "JointDist":
        """Same distribution with axes permuted to ``order``."""
        idx = [self.index(n) for n in order]
        if sorted(idx) != list(range(len(self.axes))):
            raise ConfigurationError("reorder needs every axis exactly once")
        return JointDist([self.axes[i] for i in idx], np.transpose(self.table, idx),
                         subnormalized=self.subnormalized)

    def matrix(self, rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
        """Flatten to a 2-D array with row axes and column axes grouped."""
        j = self.reorder(list(rows) + list(cols))
        nr = int(np.prod([len(j.axis(n)) for n in rows], dtype=np.int64))
        return j.table.reshape(nr, -1)

    def extend(self, given: Sequence[str] | str, kernel, name: str, symbols=None) -> "JointDist":
        """Append a new axis drawn from ``kernel`` given the ``given`` axes.

        ``kernel`` has shape (cells of the given axes, new alphabet size) or is a
        :class:`CondKernel`; the result is Markov: new axis - given - rest.
        """
        given = [given] if isinstance(given, str) else list(given)
        if isinstance(kernel, CondKernel):
            symbols = kernel.outputs if symbols is None else symbols
            kernel = kernel.matrix
        k = np.asarray(kernel, dtype=float)
        if symbols is None:
            symbols = range(k.shape[-1])
        symbols = tuple(symbols)
        gshape = [len(self.axis(g)) for g in given]
        k = k.reshape(gshape + [len(symbols)])
        if np.any(np.abs(k.sum(axis=-1) - 1.0) > NORM_TOL):
            raise ConfigurationError("kernel rows must sum to one")
        # broadcast kernel against the full table
        gidx = [self.index(g) for g in given]
        perm = sorted(range(len(given)), key=lambda i: gidx[i])
        kk = np.transpose(k, perm + [len(given)])
        bshape = [1] * len(self.axes) + [len(symbols)]
        for i in sorted(gidx):
            bshape[i] = len(self.axes[i])
        table = self.table[..., None] * kk.reshape(bshape)
        return JointDist(list(self.axes) + [Axis(name, symbols)], table, subnormalized=self.subnormalized)

    def conditional(self, given: Sequence[str], target: Sequence[str]) -> np.ndarray:
        """Matrix of p(target | given); rows with zero mass are left at zero."""
        joint = self.marginal(list(given) + list(target)).matrix(given, target)
        row = joint.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(row > 0, joint / np.where(row > 0, row, 1.0), 0.0)
        return out

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "axes": [{"name": a.name, "symbols": list(a.symbols)} for a in self.axes],
            "probs": self.table.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, **kwargs) -> "JointDist":
        try:
            axes = data["axes"]
            probs = data["probs"]
        except (KeyError, TypeError):
            raise ConfigurationError("distribution needs 'axes' and 'probs'") from None
        return cls(axes, probs, **kwargs)

    @classmethod
    def from_json(cls, text: str, **kwargs) -> "JointDist":
        return cls.from_dict(json.loads(text), **kwargs)

    @classmethod
    def uniform(cls, axes) -> "JointDist":
        axes = _as_axes(axes)
        shape = tuple(len(a) for a in axes)
        return cls(axes, np.full(shape, 1.0 / np.prod(shape)))


# ---------------------------------------------------------------------------
# operations


def marginalize(j: JointDist, keep: Iterable[str]) -> JointDist:
    """Sum out every axis not in ``keep``.

    The result follows the order of ``keep`` when it is a list or tuple, and
    the order of ``j`` when it is a set.
    """
    if isinstance(keep, (set, frozenset)):
        keep = [n for n in j.names if n in keep]
    keep = list(keep)
    if not keep:
        raise ConfigurationError("marginalize needs at least one axis to keep")
    idx = [j.index(n) for n in keep]
    if len(set(idx)) != len(idx):
        raise ConfigurationError("duplicate axis in keep")
    drop = tuple(i for i in range(len(j.axes)) if i not in idx)
    t = j.table.sum(axis=drop) if drop else j.table
    remaining = [i for i in range(len(j.axes)) if i in idx]
    perm = [remaining.index(i) for i in idx]
    return JointDist([j.axes[i] for i in idx], np.transpose(t, perm), subnormalized=j.subnormalized)


def condition(j: JointDist, axis: str, value) -> JointDist:
    """Slice ``axis`` at ``value`` and renormalize."""
    a = j.index(axis)
    symbols = j.axes[a].symbols
    try:
        pos = symbols.index(value)
    except ValueError:
        raise ConfigurationError(f"{value!r} is not a symbol of axis {axis!r}") from None
    if len(j.axes) == 1:
        raise ConfigurationError("conditioning needs at least two axes")
    sl = np.take(j.table, pos, axis=a)
    mass = sl.sum()
    if mass <= 0:
        raise DomainError(f"Pr{{{axis} = {value!r}}} is zero; restrict to the support first")
    return JointDist([ax for i, ax in enumerate(j.axes) if i != a], sl / mass)


def product(a: JointDist, b: JointDist) -> JointDist:
    """Independent joint of two distributions with disjoint axis names."""
    clash = set(a.names) & set(b.names)
    if clash:
        raise ConfigurationError(f"axis names clash: {sorted(clash)}")
    table = np.multiply.outer(a.table, b.table)
    return JointDist(list(a.axes) + list(b.axes), table,
                     subnormalized=a.subnormalized or b.subnormalized)


def is_markov(j: JointDist, left, mid, right, tol: float = 1e-9) -> bool:
    """Check the chain left - mid - right.

    For every mid value with positive probability the conditional joint of
    (left, right) must match the product of its conditional marginals to
    within ``tol`` in max-abs deviation.
    """
    left, mid, right = list(left), list(mid), list(right)
    if sorted(left + mid + right) != sorted(j.names):
        raise ConfigurationError("left, mid and right must partition the axes")
    if not left or not right:
        return True
    if mid:
        t = j.reorder(mid + left + right).table
        nm = int(np.prod([len(j.axis(n)) for n in mid]))
    else:
        t = j.reorder(left + right).table[None]
        nm = 1
    nl = int(np.prod([len(j.axis(n)) for n in left]))
    t = t.reshape(nm, nl, -1)
    for slab in t:
        mass = slab.sum()
        if mass <= 0:
            continue
        c = slab / mass
        outer = np.outer(c.sum(axis=1), c.sum(axis=0))
        if np.max(np.abs(c - outer)) > tol:
            return False
    return True


def _aligned_tables(a, b) -> tuple[np.ndarray, np.ndarray]:
    ta = a.table if isinstance(a, JointDist) else np.asarray(a, dtype=float)
    tb = b.table if isinstance(b, JointDist) else np.asarray(b, dtype=float)
    if isinstance(a, JointDist) and isinstance(b, JointDist):
        if [len(x) for x in a.axes] != [len(x) for x in b.axes]:
            raise ConfigurationError("distributions have different alphabets")
    if ta.shape != tb.shape:
        raise ConfigurationError(f"shape mismatch {ta.shape} vs {tb.shape}")
    return ta, tb


def tv_exact(a, b) -> float:
    """Total variation distance ½ Σ|a − b|."""
    ta, tb = _aligned_tables(a, b)
    return float(0.5 * np.abs(ta - tb).sum())


def tv_monte_carlo(density_a: Callable, density_b: Callable, sampler_b: Callable,
                   n_samples: int, seed: int, chunk_size: int = 4096) -> tuple[float, float]:
    """Estimate total variation from samples of ``b``.

    Uses tv = ½ E_b |a/b − 1|.

    Parameters
    ----------
    density_a, density_b : callable
        Map a sample batch to log2-densities (one value per sample).
    sampler_b : callable
        ``sampler_b(bank)`` returns a batch with one sample per lane of the
        :class:`~oscl.rng.StreamBank`.
    n_samples : int
        Number of draws; sample ``i`` uses lane ``i``.
    seed : int
        Stream seed.
    chunk_size : int
        Lanes per batch.  Fixed batching keeps the floating-point sum
        reproducible.

    Returns
    -------
    estimate, std_error : float
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    total = 0.0
    total_sq = 0.0
    for start in range(0, n_samples, chunk_size):
        stop = min(start + chunk_size, n_samples)
        bank = StreamBank(seed, np.arange(start, stop))
        batch = sampler_b(bank)
        lb = np.asarray(density_b(batch), dtype=float)
        if np.any(~np.isfinite(lb)):
            raise NumericalError("density_b is zero at a sampled point")
        la = np.asarray(density_a(batch), dtype=float)
        vals = np.abs(np.exp2(la - lb) - 1.0)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
    mean = total / n_samples
    if n_samples > 1:
        var = max(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    else:
        var = 0.0
    return 0.5 * mean, 0.5 * float(np.sqrt(var / n_samples))


def sample(j: JointDist, rng: StreamBank) -> tuple:
    """Draw one symbol tuple per call by inverse CDF (first lane of ``rng``)."""
    flat = sample_indices(j, rng)[0]
    idx = np.unravel_index(int(flat), j.shape)
    return tuple(ax.symbols[i] for ax, i in zip(j.axes, idx))


def sample_indices(j: JointDist, rng: StreamBank) -> np.ndarray:
    """Flat row-major cell indices, one per lane, by inverse CDF."""
    return rng.choice(inverse_cdf(j.table.ravel()))
