"""Bound and rate-region calculators that need no simulation.

* message-compression thresholds for the rejection-sampling protocol and
  their infimum over Bob's reference kernel;
* the canonical extension ``E`` of a message and the inequality it yields
  between the information-spectrum and hypothesis-testing quantities;
* the chain relating the rejection-sampling cost to the extension cost;
* asymptotic rate regions and the two-senders-two-receivers rate display.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .divergence import _compositions, dh_eps, dmax, ds_eps
from .errors import ConfigurationError
from .prob import JointDist
from .protocols.br import DEFAULT_K_CAP, snap_rows
from .protocols.common import as_table, check_normalized, cond_independent

_TOL = 1e-9


def _conditional_rows(p_ab: np.ndarray) -> np.ndarray:
    pa = p_ab.sum(axis=1, keepdims=True)
    return np.divide(p_ab, pa, out=np.zeros_like(p_ab), where=pa > 0)


def _markov_xym(p_xym) -> np.ndarray:
    p = as_table(p_xym, 3, "p_xym")
    check_normalized(p, "p_xym")
    if not cond_independent(p, [2], [0]):
        raise ConfigurationError("M − X − Y does not hold within 1e-9")
    return p


def _reference(p: np.ndarray, kernel_n: np.ndarray) -> np.ndarray:
    """``p_Y(y) p_X|Y(x|y) p_N|Y(m|y)`` on the (x, y, m) grid."""
    return p.sum(axis=2)[:, :, None] * kernel_n[None, :, :]


# ---------------------------------------------------------------------------
# rejection-sampling cost


def br_divergence(p_xym, kernel_n, eps: float) -> float:
    """``D_s^ε(p_XMY || p_Y(p_X|Y × p_N|Y))``; ``+inf`` if the kernel misses support."""
    p = _markov_xym(p_xym)
    k = as_table(kernel_n, 2, "kernel_n")
    if k.shape != p.shape[1:]:
        raise ConfigurationError(f"kernel_n must have shape {p.shape[1:]}")
    q = _reference(p, k)
    if np.any((p > 0) & (q <= 0)):
        warnings.warn("the reference kernel misses part of the message support; the cost is infinite",
                      stacklevel=2)
        return float("inf")
    return ds_eps(p, q, eps)


def task1_br_bound(p_xym, kernel_n, eps: float, delta: float) -> float:
    """Bits sufficient for the rejection-sampling protocol: ``D_s^ε(...) + 2 log2(1/δ)``.

    With ``kernel_n=None`` Bob's reference is ``p_M|Y``.
    """
    if not 0 < delta < 1:
        raise ConfigurationError("delta must lie in (0, 1)")
    p = _markov_xym(p_xym)
    k = _conditional_rows(p.sum(axis=0)) if kernel_n is None else kernel_n
    return br_divergence(p, k, eps) + 2 * math.log2(1 / delta)


@dataclass(frozen=True)
class KernelSearch:
    value: float
    kernel: np.ndarray
    exhaustive: bool
    evaluations: int


def br_infimum(p_xym, eps: float, resolution: int = 4, max_evals: int = 20_000) -> KernelSearch:
    """Smallest ``D_s^ε(p_XMY || p_Y(p_X|Y × p_N|Y))`` over a grid of kernels.

    Each kernel row ranges over the simplex grid of step ``1/resolution``
    plus the row of ``p_M|Y``.  All combinations are tried when there are at
    most ``max_evals``; otherwise rows are improved one at a time until no
    single-row change helps.  Either way the result is an upper bound on
    the true infimum.
    """
    p = _markov_xym(p_xym)
    ny, nm = p.shape[1:]
    natural = _conditional_rows(p.sum(axis=0))
    grid = _compositions(resolution, nm) / resolution
    cands = [np.vstack([natural[y], grid]) for y in range(ny)]
    p_xy = p.sum(axis=2)

    def cost(kernel: np.ndarray) -> float:
        q = p_xy[:, :, None] * kernel[None, :, :]
        if np.any((p > 0) & (q <= 0)):
            return float("inf")
        return ds_eps(p, q, eps)

    total = math.prod(c.shape[0] for c in cands)
    evals = 0
    if total <= max_evals:
        best, best_k = float("inf"), natural
        for rows in itertools.product(*(range(c.shape[0]) for c in cands)):
            k = np.stack([cands[y][i] for y, i in enumerate(rows)])
            v = cost(k)
            evals += 1
            if v < best - 1e-15:
                best, best_k = v, k
        return KernelSearch(best, best_k, True, evals)
    best_k = natural.copy()
    best = cost(best_k)
    improved = True
    while improved:
        improved = False
        for y in range(ny):
            for row in cands[y]:
                k = best_k.copy()
                k[y] = row
                v = cost(k)
                evals += 1
                if v < best - 1e-15:
                    best, best_k, improved = v, k, True
    return KernelSearch(best, best_k, False, evals)


# ---------------------------------------------------------------------------
# canonical extension


@dataclass(frozen=True)
class ExtensionBuild:
    """The canonical extension of a message ``M`` by ``E ∈ {0..K−1}``.

    ``p_xme[x, m, e] = p_X(x)/K`` when ``e < K p_M|X(m|x)`` (after snapping
    the rows to multiples of ``1/K``), else 0.  ``U`` is uniform on
    ``M × {0..K−1}``.
    """

    K: int
    p_xme: np.ndarray
    counts: np.ndarray           # K · p_M|X, integers
    snap_exact: bool
    marginal_tv: float
    ell: float | None = None

    @property
    def prior_u(self) -> np.ndarray:
        nm = self.p_xme.shape[1]
        return np.full((nm, self.K), 1.0 / (nm * self.K))

    @property
    def d0(self) -> float:
        """``D_s^0(p_XME || p_X × p_U)``, always ``log2 |M|``."""
        px = self.p_xme.sum(axis=(1, 2))
        return dmax(self.p_xme, px[:, None, None] * self.prior_u[None])


def build_extension(p_xm, k_cap: int = DEFAULT_K_CAP, ell: float | None = None) -> ExtensionBuild:
    """Canonical extension of ``p_XM`` with granularity ``K <= k_cap``.

    The rows ``p_M|X`` are snapped to a common denominator first (exactly
    when possible); ``marginal_tv`` is the resulting distance between the
    X,M marginal of the extension and ``p_XM``.
    """
    p = as_table(p_xm, 2, "p_xm")
    check_normalized(p, "p_xm")
    px = p.sum(axis=1)
    snap = snap_rows(_conditional_rows(p), k_cap)
    K, counts = snap.K, snap.counts
    # rows of unused x are snapped too but carry no mass
    e = np.arange(K)
    table = np.where(e[None, None, :] < counts[:, :, None], (px / K)[:, None, None], 0.0)
    tv = 0.5 * float(np.abs(table.sum(axis=2) - p).sum())
    return ExtensionBuild(K, table, counts, snap.exact, tv, ell)


def _joint_yme(p_xym: np.ndarray, ext: ExtensionBuild) -> np.ndarray:
    """``p_YME`` for ``Y − X − (M, E)``."""
    p_xy = p_xym.sum(axis=2)
    cond = ext.p_xme / np.where(p_xy.sum(axis=1) > 0, p_xy.sum(axis=1), 1.0)[:, None, None]
    return np.einsum("xy,xme->yme", p_xy, cond)


@dataclass
class ExtensionInequalityReport:
    """Both sides of ``D_s^ε(XMY) >= D_s^0(XME) − D_H^ε(YME)`` and the two lemmas behind it."""

    ell: float                   # D_s^ε on the snapped message
    ell_unsnapped: float
    d0: float
    dh: float
    dh_exact: bool
    rhs: float
    margin: float
    test_q_mass: float           # mass of the set under p_Y × p_U
    test_q_target: float         # 2^ell / |M|
    test_q_equal: bool
    test_q_le: bool
    test_p_mass: float           # mass under p_YME
    test_p_ok: bool
    K: int
    snap_tv: float
    holds: bool = field(init=False)

    def __post_init__(self):
        self.holds = bool(self.margin >= -_TOL and self.test_q_le and self.test_p_ok)

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


def verify_extension_inequality(p_xym, kernel_n=None, eps: float = 0.1, k_cap: int = 64,
                                dh_mode: str = "auto") -> ExtensionInequalityReport:
    """Evaluate the extension inequality for one reference kernel.

    The message kernel is snapped to multiples of ``1/K`` and every
    quantity is computed for the snapped instance, so the inequality is
    checked exactly; ``ell_unsnapped`` and ``snap_tv`` show how far the
    snapped instance is from the input.  In greedy mode ``D_H`` is
    underestimated, which only makes the check harder to pass.

    The set used in the argument is
    ``{(y, m, e) : e < K 2^ℓ p_N|Y(m|y)}``.  Its p_Y × p_U mass is at most
    ``2^ℓ / |M|``, with equality when every ``K 2^ℓ p_N|Y(m|y)`` is an
    integer not above ``K``.
    """
    p0 = _markov_xym(p_xym)
    nx, ny, nm = p0.shape
    k = _conditional_rows(p0.sum(axis=0)) if kernel_n is None else as_table(kernel_n, 2, "kernel_n")
    ext = build_extension(p0.sum(axis=1), k_cap)
    K = ext.K
    # the snapped instance: same p_XY, message kernel counts / K
    p = p0.sum(axis=2)[:, :, None] * (ext.counts / K)[:, None, :]
    ell0 = br_divergence(p0, k, eps)
    ell = br_divergence(p, k, eps)
    p_yme = _joint_yme(p, ext)
    py = p_yme.sum(axis=(1, 2))
    q_yme = py[:, None, None] * ext.prior_u[None]
    test = dh_eps(p_yme, q_yme, eps, dh_mode)
    d0 = ext.d0
    rhs = d0 - test.value
    # the argument's set, counted per (y, m)
    per_ym = np.minimum(np.floor(K * 2.0 ** ell * k + 1e-9), K)
    in_a = np.arange(K)[None, None, :] < per_ym[:, :, None]
    q_mass = float(q_yme[in_a].sum())
    target = 2.0 ** ell / nm
    p_mass = float(p_yme[in_a].sum())
    return ExtensionInequalityReport(ell, ell0, d0, test.value, test.exact, rhs, ell - rhs, q_mass, target,
                           bool(abs(q_mass - target) <= 1e-12), bool(q_mass <= target + 1e-12),
                           p_mass, bool(p_mass >= 1 - eps - 1e-12), K, ext.marginal_tv)


@dataclass
class ChainReport:
    """Rejection-sampling cost versus the canonical extension cost."""

    br: float                    # grid infimum over kernels
    br_exhaustive: bool
    ext_canonical: float         # D_s^0 − D_H^ε for the canonical E
    ds_extended: float           # D_s^ε(p_XMEY || p_Y(p_X|Y × p_ME|Y))
    ds_plain: float              # D_s^ε(p_XMY || p_Y(p_X|Y × p_M|Y))
    K: int
    snap_tv: float
    checks: dict

    @property
    def holds(self) -> bool:
        return all(c["holds"] for c in self.checks.values())

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "checks"}
        out["checks"] = self.checks
        out["holds"] = self.holds
        return out


def check_divergence_chain(p_xym, eps: float = 0.1, k_cap: int = 64, resolution: int = 4,
                           max_evals: int = 20_000, dh_mode: str = "auto", tol: float = 1e-9) -> ChainReport:
    """Evaluate the chain between the two costs on the snapped instance.

    Checked, each with tolerance ``tol``:

    * ``ext >= br``-side: ``br >= ext_canonical`` (the extension cost of the
      canonical ``E`` never exceeds the rejection-sampling cost);
    * ``ext_canonical >= ds_extended >= ds_plain >= br``.

    Since the minimum over extensions is at most ``ext_canonical``, the
    first check is a strengthening of the stated direction.  ``br`` comes
    from a kernel grid (an upper bound on the infimum) that contains
    ``p_M|Y``, so the last link holds by construction.
    """
    p0 = _markov_xym(p_xym)
    ext = build_extension(p0.sum(axis=1), k_cap)
    K = ext.K
    p = p0.sum(axis=2)[:, :, None] * (ext.counts / K)[:, None, :]
    search = br_infimum(p, eps, resolution, max_evals)
    p_yme = _joint_yme(p, ext)
    py = p_yme.sum(axis=(1, 2))
    ext_val = ext.d0 - dh_eps(p_yme, py[:, None, None] * ext.prior_u[None], eps, dh_mode).value
    # p_XYME with (M, E) flattened into one message
    p_xy = p.sum(axis=2)
    px = p_xy.sum(axis=1)
    cond_me = (ext.p_xme / np.where(px > 0, px, 1.0)[:, None, None]).reshape(px.size, -1)
    p_xyw = p_xy[:, :, None] * cond_me[:, None, :]
    ds_ext = ds_eps(p_xyw, _reference(p_xyw, _conditional_rows(p_xyw.sum(axis=0))), eps)
    ds_plain = ds_eps(p, _reference(p, _conditional_rows(p.sum(axis=0))), eps)

    def row(lhs, rhs):
        return {"lhs": float(lhs), "rhs": float(rhs), "margin": float(lhs - rhs), "holds": bool(lhs >= rhs - tol)}

    checks = {"br >= ext_canonical": row(search.value, ext_val),
              "ext_canonical >= ds_extended": row(ext_val, ds_ext),
              "ds_extended >= ds_plain": row(ds_ext, ds_plain),
              "ds_plain >= br": row(ds_plain, search.value)}
    return ChainReport(search.value, search.exhaustive, ext_val, ds_ext, ds_plain, K, ext.marginal_tv, checks)


# ---------------------------------------------------------------------------
# rate regions


@dataclass(frozen=True)
class RateRegionPoint:
    """Corner constraints of an asymptotic rate region, in bits per symbol.

    ``bounds`` maps a rate expression (``"R_A"``, ``"R_A + R_B"``, ...) to
    its lower bound; ``quantities`` lists the information terms used.
    """

    task: int
    bounds: dict
    quantities: dict

    def contains(self, rates: dict, tol: float = 1e-9) -> bool:
        """Whether ``rates`` (keys ``R_A``, ``R_B`` or ``R``) meets every bound."""
        for expr, lo in self.bounds.items():
            value = sum(rates[t.strip()] for t in expr.split("+"))
            if value < lo - tol:
                return False
        return True

    def to_dict(self) -> dict:
        return {"task": self.task, "bounds": dict(self.bounds), "quantities": dict(self.quantities)}


def _joint(table: np.ndarray, names: str) -> JointDist:
    return JointDist([(n, s) for n, s in zip(names, table.shape)], table)


def rate_region(task: int, p, channel=None) -> RateRegionPoint:
    """Asymptotic rate region of a task for the given single-letter source.

    ``p`` axes: task 3 (X, Y, Z, M, N); task 5 (X, Y, Z, M, N); task 7
    (X, Y) with ``channel`` = ``p_M|X`` or a list of candidate channels
    (the smallest rate wins); task 8 (X, Y); task 9 (X, Y, N).
    """
    from .divergence import cond_entropy, cond_mutual_info, entropy, mutual_info, tripartite_info

    t = np.asarray(p, dtype=float)
    if task == 3:
        j = _joint(t, "XYZMN")
        if not (cond_independent(t, [3], [0]) and cond_independent(t, [4], [1])):
            raise ConfigurationError("M − X − (Y, Z, N) or N − Y − (X, Z, M) does not hold")
        q = {"I(X:M)": mutual_info(j, "X", "M"), "I(M:NZ)": mutual_info(j, "M", ["N", "Z"]),
             "I(Y:N)": mutual_info(j, "Y", "N"), "I(MZ:N)": mutual_info(j, ["M", "Z"], "N"),
             "I(Z:M:N)": tripartite_info(j, "Z", "M", "N")}
        b = {"R_A": q["I(X:M)"] - q["I(M:NZ)"], "R_B": q["I(Y:N)"] - q["I(MZ:N)"],
             "R_A + R_B": q["I(X:M)"] + q["I(Y:N)"] - q["I(Z:M:N)"]}
    elif task == 5:
        j = _joint(t, "XYZMN")
        if not cond_independent(t, [3, 4], [0]):
            raise ConfigurationError("(M, N) − X − (Y, Z) does not hold")
        q = {"I(X:M)": mutual_info(j, "X", "M"), "I(M:Y)": mutual_info(j, "M", "Y"),
             "I(X:N)": mutual_info(j, "X", "N"), "I(N:Z)": mutual_info(j, "N", "Z"),
             "I(X:M:N)": tripartite_info(j, "X", "M", "N")}
        b = {"R_A": q["I(X:M)"] - q["I(M:Y)"], "R_B": q["I(X:N)"] - q["I(N:Z)"],
             "R_A + R_B": q["I(X:M:N)"] - q["I(M:Y)"] - q["I(N:Z)"]}
    elif task == 7:
        if channel is None:
            raise ConfigurationError("task 7 needs a test channel p_M|X (or a list of them)")
        chans = channel if isinstance(channel, (list, tuple)) else [channel]
        rates = []
        for ch in chans:
            c = np.asarray(ch, dtype=float)
            rates.append(cond_mutual_info(_joint(t[:, :, None] * c[:, None, :], "XYM"), "X", "M", "Y"))
        best = int(np.argmin(rates))
        q = {"I(X:M|Y)": rates[best], "candidate": best, "all": rates}
        b = {"R": rates[best]}
    elif task == 8:
        j = _joint(t, "XY")
        q = {"H(X|Y)": cond_entropy(j, "X", "Y"), "H(Y|X)": cond_entropy(j, "Y", "X"), "H(XY)": entropy(j)}
        b = {"R_A": q["H(X|Y)"], "R_B": q["H(Y|X)"], "R_A + R_B": q["H(XY)"]}
    elif task == 9:
        j = _joint(t, "XYN")
        if not cond_independent(t, [0], [1]):
            raise ConfigurationError("X − Y − N does not hold")
        q = {"H(X|N)": cond_entropy(j, "X", "N"), "I(Y:N)": mutual_info(j, "Y", "N"),
             "I(X:N)": mutual_info(j, "X", "N")}
        b = {"R_A": q["H(X|N)"], "R_B": q["I(Y:N)"] - q["I(X:N)"], "R_A + R_B": q["H(X|N)"] + q["I(Y:N)"]}
    else:
        raise ConfigurationError(f"no rate region for task {task}; use 3, 5, 7, 8 or 9")
    return RateRegionPoint(task, b, q)


# ---------------------------------------------------------------------------
# two senders, two receivers

TASK6_AXES = ("X1", "M11", "M12", "X2", "M21", "M22", "Y1", "Y2")


def task6_bound_display(p, eps: float, delta: float, dh_mode: str = "auto") -> dict:
    """Right-hand sides of every rate inequality for two senders and two receivers.

    ``p`` has axes (X1, M11, M12, X2, M21, M22, Y1, Y2); sender ``i`` holds
    ``(X_i, M_i1, M_i2)`` and receiver ``j`` holds ``Y_j`` and must recover
    ``M_1j, M_2j``.  Returns the rows (single rates, pairs, triples and the
    total) and the error bound ``20ε + 30δ``.  Nothing is simulated.
    """
    t = as_table(p, 8, "p")
    check_normalized(t, "p")
    if not (cond_independent(t.sum(axis=(4, 5)), [1, 2], [0])
            and cond_independent(t.sum(axis=(1, 2)), [2, 3], [1])):
        raise ConfigurationError("(M11, M12) − X1 − (Y1, Y2, X2) or (M21, M22) − X2 − (Y1, Y2, X1) does not hold")
    idx = {a: i for i, a in enumerate(TASK6_AXES)}
    slack = 10 * math.log2(1 / delta)

    def marg(names):
        keep = [idx[n] for n in names]
        drop = tuple(i for i in range(8) if i not in keep)
        m = t.sum(axis=drop)
        order = np.argsort(np.argsort(keep))
        return np.transpose(m, order) if m.ndim > 1 else m

    def product_of(names):
        out = None
        for n in names:
            m = marg([n])
            out = m if out is None else np.multiply.outer(out, m)
        return out

    def ds(x, msgs):
        names = [x] + list(msgs)
        px = marg([x])
        q = px
        for n in msgs:
            q = np.multiply.outer(q, marg([n]))
        return ds_eps(marg(names), q, eps)

    def dh(msgs, y):
        names = list(msgs) + [y]
        return dh_eps(marg(names), product_of(names), eps, dh_mode).value

    def m(i, j):
        return f"M{i}{j}"

    def name(i, j):
        return f"R^({i})_{j}"

    rows = []
    pairs = [(i, j) for i in (1, 2) for j in (1, 2)]
    single = {}
    for i, j in pairs:
        s, h = ds(f"X{i}", [m(i, j)]), dh([m(i, j)], f"Y{j}")
        single[(i, j)] = (s, h)
        rows.append({"rates": name(i, j), "rhs": s - h + slack, "ds": [s], "dh": [h]})
    for a, b in itertools.combinations(pairs, 2):
        (sa, ha), (sb, hb) = single[a], single[b]
        rows.append({"rates": f"{name(*a)} + {name(*b)}", "rhs": sa + sb - ha - hb + slack,
                     "ds": [sa, sb], "dh": [ha, hb]})
    for i, j in pairs:
        k, l = 3 - i, 3 - j
        s1 = ds(f"X{i}", [m(i, j), m(i, l)])
        s2 = ds(f"X{k}", [m(k, j)])
        h1 = dh([m(i, j), m(k, j)], f"Y{j}")
        h2 = dh([m(i, l)], f"Y{l}")
        rows.append({"rates": f"{name(i, j)} + {name(i, l)} + {name(k, j)}", "rhs": s1 + s2 - h1 - h2 + slack,
                     "ds": [s1, s2], "dh": [h1, h2]})
    s1 = ds("X1", ["M11", "M12"])
    s2 = ds("X2", ["M21", "M22"])
    h1 = dh(["M11", "M21"], "Y1")
    h2 = dh(["M12", "M22"], "Y2")
    rows.append({"rates": " + ".join(name(i, j) for i, j in pairs), "rhs": s1 + s2 - h1 - h2 + slack,
                 "ds": [s1, s2], "dh": [h1, h2]})
    return {"rows": rows, "error_bound": 20 * eps + 30 * delta, "eps": eps, "delta": delta}
