"""Command-line experiment runner.

``oscl <subcommand> --config F [--seed N] [--trials N] [--out F] [--strict] [--workers N]``

Every run validates its JSON config against a schema, executes with the
given seed, and writes a versioned JSON report.  Reports are serialized with
sorted keys, so two runs with the same config and seed differ only in
``wall_time``.  ``sweep`` writes CSV rows instead; ``golden-check`` re-runs
stored reports and byte-compares them.

Exit codes: 0 success, 1 configuration error (nothing written), 2 premise
violation or infeasible configuration under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigurationError, DomainError, NumericalError, PremiseViolation
from .prob import JointDist
from .protocols.common import SCHEMA_VERSION, ProtocolReport, jsonable

EXIT_OK, EXIT_CONFIG, EXIT_PREMISE = 0, 1, 2

# ---------------------------------------------------------------------------
# schema pieces

_DEFS = {
    "nested": {
        "type": "array", "minItems": 1,
        "items": {"anyOf": [{"type": "number"}, {"$ref": "#/$defs/nested"}]},
    },
    "joint": {
        "type": "object", "required": ["axes", "probs"], "additionalProperties": False,
        "properties": {
            "axes": {"type": "array", "minItems": 1, "items": {
                "type": "object", "required": ["name", "symbols"], "additionalProperties": False,
                "properties": {"name": {"type": "string"},
                               "symbols": {"anyOf": [{"type": "array", "minItems": 1},
                                                     {"type": "integer", "minimum": 1}]}}}},
            "probs": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        },
    },
    "dist": {"anyOf": [{"$ref": "#/$defs/joint"}, {"$ref": "#/$defs/nested"}]},
}

PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
UNIT0 = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
INT0 = {"type": "integer", "minimum": 0}
INT1 = {"type": "integer", "minimum": 1}
SEED = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}
NUM = {"type": "number"}
DIST = {"$ref": "#/$defs/dist"}
TABLE = {"$ref": "#/$defs/nested"}
PROBS = {"type": "array", "minItems": 1, "items": PROB}
DH_MODE = {"enum": ["auto", "exact", "greedy"]}
ENGINE = {"enum": ["collapsed", "literal"]}

_COMMON = {"seed": SEED, "trials": INT1}


def _schema(props: dict, required=()) -> dict:
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "$defs": _DEFS,
            "type": "object", "additionalProperties": False,
            "properties": {**_COMMON, **props}, "required": list(required)}


def _format_error(err: jsonschema.ValidationError) -> str:
    path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return f"{path}: {err.message}"


def validate(config, schema: dict) -> None:
    """Raise :class:`ConfigurationError` listing every schema violation by path."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(_format_error(e) for e in errors))


# ---------------------------------------------------------------------------
# value conversion

def to_table(value) -> np.ndarray:
    """Array from a ``{"axes", "probs"}`` distribution or a nested list."""
    if isinstance(value, dict):
        return np.array(JointDist.from_dict(value).table, dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.dtype == object:
        raise ConfigurationError("nested lists must be rectangular")
    return arr


def _int_table(value) -> np.ndarray:
    arr = np.asarray(value)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ConfigurationError("expected a rectangular table of integers")
    return arr


def _convert(cfg: dict, dists=(), vectors=(), ints=(), tuples=()) -> dict:
    out = dict(cfg)
    for key in dists:
        if out.get(key) is not None:
            out[key] = to_table(out[key])
    for key in vectors:
        if out.get(key) is not None:
            out[key] = np.asarray(out[key], dtype=float)
    for key in ints:
        if out.get(key) is not None:
            out[key] = _int_table(out[key])
    for key in tuples:
        if out.get(key) is not None:
            out[key] = tuple(out[key])
    return out


# ---------------------------------------------------------------------------
# commands

@dataclass(frozen=True)
class Outcome:
    """What a command produced: the report body and whether a premise failed."""

    report: dict
    violation: bool
    protocol: ProtocolReport | None = None


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    schema: dict
    run: Callable[[dict, int | None], Outcome]


def _protocol(cls_path: str, runner_path: str, dists=(), vectors=(), ints=(), tuples=(), extra=None):
    """Command body that builds a config dataclass and calls a protocol runner."""

    def run(cfg: dict, workers):
        from importlib import import_module
        mod_c, cls_name = cls_path.rsplit(".", 1)
        mod_r, fn_name = runner_path.rsplit(".", 1)
        cls = getattr(import_module(mod_c), cls_name)
        fn = getattr(import_module(mod_r), fn_name)
        kwargs = _convert(cfg, dists, vectors, ints, tuples)
        if extra is not None:
            kwargs = extra(kwargs)
        rep = fn(cls(**kwargs), workers=workers)
        violation = rep.status != "ok" or not rep.premises_hold
        return Outcome(rep.to_dict(wall_time=True), violation, rep)

    return run


def _source(kwargs: dict) -> dict:
    src = kwargs["source"]
    if isinstance(src, dict) and src.get("kind") == "table":
        src = {"kind": "table", "p_xy": to_table(src["p_xy"])}
    elif not (isinstance(src, dict) and src.get("kind") == "dsbc"):
        src = to_table(src)
    kwargs["source"] = src
    return kwargs


def _analysis(body: Callable[[dict, int | None], tuple[dict, bool]], display: str):
    def run(cfg: dict, workers):
        result, violation = body(cfg, workers)
        report = {"schema_version": SCHEMA_VERSION, "display": display, "result": jsonable(result)}
        return Outcome(report, violation)

    return run


def _measure(cfg, workers):
    from .divergence import dh_eps, dmax, ds_eps, kl
    p, q = to_table(cfg["p"]), to_table(cfg["q"])
    mode = cfg.get("dh_mode", "auto")
    rows = []
    for eps in cfg.get("eps_grid", [0.1]):
        row = {"eps": eps, "ds_eps": ds_eps(p, q, eps)}
        if eps > 0:
            h = dh_eps(p, q, eps, mode)
            row["dh_eps"] = {"value": h.value, "exact": h.exact}
        rows.append(row)
    return {"kl": kl(p, q), "dmax": dmax(p, q), "grid": rows}, False


def _convex_split(cfg, workers):
    from .coupling import ConvexSplitSpec, verify_convex_split
    from .divergence import ds_eps
    p = to_table(cfg["p_xm"])
    if p.ndim != 2:
        raise ConfigurationError("p_xm must be a 2-D table (X, M)")
    prior = np.asarray(cfg["prior"], float) if "prior" in cfg else p.sum(axis=0)
    eps, delta = cfg["eps"], cfg["delta"]
    ds = ds_eps(p, np.outer(p.sum(axis=1), prior), eps)
    need = ds + 2 * math.log2(3 / delta)
    R = cfg.get("R")
    if R is None:
        if not math.isfinite(need):
            raise ConfigurationError("the prior misses part of the support of p_M; no finite rate works")
        R = max(0, math.ceil(need - 1e-12))
    seed = cfg.get("seed", 0)
    rep = verify_convex_split(ConvexSplitSpec(p, prior, R), eps, delta, method=cfg.get("method", "exact"),
                              n_samples=cfg.get("trials", 100_000), seed=seed)
    out = rep.to_dict()
    out["ds_eps"] = ds
    return out, not rep.rate_condition_met


def _decode_bench(cfg, workers):
    from .decoding import run_unipartite_bench, run_bipartite_bench
    p = to_table(cfg["p"])
    common = dict(trials=cfg.get("trials", 10_000), seed=cfg.get("seed", 0), mode=cfg.get("dh_mode", "auto"),
                  workers=workers)
    if cfg.get("mode", "unipartite") == "unipartite":
        if p.ndim != 2:
            raise ConfigurationError("p must be a 2-D table (Y, M) for the unipartite bench")
        prior = np.asarray(cfg["prior"], float) if "prior" in cfg else p.sum(axis=0)
        out = run_unipartite_bench(p, prior, cfg["eps"], cfg["delta"], R=cfg.get("R"), **common)
        return out, False
    if p.ndim != 3:
        raise ConfigurationError("p must be a 3-D table (Y, M, N) for the bipartite bench")
    pm = np.asarray(cfg["prior_m"], float) if "prior_m" in cfg else p.sum(axis=(0, 2))
    pn = np.asarray(cfg["prior_n"], float) if "prior_n" in cfg else p.sum(axis=(0, 1))
    parts = tuple(cfg["eps_parts"]) if "eps_parts" in cfg else None
    out = run_bipartite_bench(p, pm, pn, cfg["eps"], cfg["delta"], R1=cfg.get("R1"), R2=cfg.get("R2"),
                          eps_parts=parts, rate_rule=cfg.get("rate_rule", "dh"), **common)
    return out, not out["premise_holds"]


def _bounds(cfg, workers):
    from . import analysis
    kind = cfg["kind"]
    p = to_table(cfg["p"])
    if kind == "task1-br":
        kernel = to_table(cfg["kernel_n"]) if "kernel_n" in cfg else None
        eps, delta = cfg["eps"], cfg["delta"]
        search = analysis.br_infimum(p, eps, cfg.get("resolution", 4), cfg.get("max_evals", 20_000))
        return {"bound_given_kernel": analysis.task1_br_bound(p, kernel, eps, delta),
                "divergence_given_kernel": analysis.br_divergence(p, kernel, eps) if kernel is not None
                else analysis.br_divergence(p, _cond_m_given_y(p), eps),
                "infimum": search.value, "infimum_kernel": search.kernel, "infimum_exhaustive": search.exhaustive,
                "evaluations": search.evaluations}, False
    if kind == "task6":
        return analysis.task6_bound_display(p, cfg["eps"], cfg["delta"], cfg.get("dh_mode", "auto")), False
    from .protocols import helper_sufficient_condition
    for key in ("R_A", "R_B", "eta"):
        if key not in cfg:
            raise ConfigurationError(f"$.{key}: required for kind 'task9-helper'")
    out = helper_sufficient_condition(p, cfg["R_A"], cfg["R_B"], cfg["eps"], cfg["eta"], cfg["delta"])
    return out, not out["holds"]


def _cond_m_given_y(p_xym: np.ndarray) -> np.ndarray:
    p_ym = p_xym.sum(axis=0)
    py = p_ym.sum(axis=1, keepdims=True)
    return np.divide(p_ym, py, out=np.full_like(p_ym, 1.0 / p_ym.shape[1]), where=py > 0)


def _rates(cfg, workers):
    from .analysis import rate_region
    channel = to_table(cfg["channel"]) if "channel" in cfg else None
    return rate_region(cfg["task"], to_table(cfg["p"]), channel).to_dict(), False


def _thm13(cfg, workers):
    from .analysis import verify_extension_inequality
    kernel = to_table(cfg["kernel_n"]) if "kernel_n" in cfg else None
    rep = verify_extension_inequality(to_table(cfg["p_xym"]), kernel, cfg.get("eps", 0.1), cfg.get("k_cap", 64),
                           cfg.get("dh_mode", "auto"))
    return rep.to_dict(), False


def _thm12(cfg, workers):
    from .analysis import check_divergence_chain
    rep = check_divergence_chain(to_table(cfg["p_xym"]), cfg.get("eps", 0.1), cfg.get("k_cap", 64),
                                cfg.get("resolution", 4), cfg.get("max_evals", 20_000), cfg.get("dh_mode", "auto"))
    return rep.to_dict(), False


_TWO_SENDER = {
    "p": DIST, "delta": PROB, "eps": PROB, "eps_parts": PROBS, "eta1": PROB, "eta2": PROB,
    "prior_m": PROBS, "prior_n": PROBS, "R_A": INT0, "r_A": INT0, "R_B": INT0, "r_B": INT0,
    "rate_rule": {"enum": ["premise", "dh"]}, "test": {"enum": ["threshold", "dh"]}, "engine": ENGINE,
    "dh_mode": DH_MODE, "r_max": INT0, "slot_cap": INT1, "grid_cap": INT1,
}
_ONE_SENDER = {
    "p": DIST, "delta": PROB, "eps": PROB, "eps_parts": PROBS, "delta1": PROB, "delta2": PROB,
    "prior_m": PROBS, "prior_n": PROBS, "R_B": INT0, "R_C": INT0, "r_B": INT0, "r_C": INT0,
    "engine": ENGINE, "dh_mode": DH_MODE, "r_max": INT0, "slot_cap": INT1,
}
_SOURCE = {"anyOf": [
    {"type": "object", "required": ["kind", "n", "crossover"], "additionalProperties": False,
     "properties": {"kind": {"const": "dsbc"}, "n": {"type": "integer", "minimum": 1, "maximum": 30},
                    "crossover": PROB}},
    {"type": "object", "required": ["kind", "p_xy"], "additionalProperties": False,
     "properties": {"kind": {"const": "table"}, "p_xy": DIST}},
    DIST,
]}
_SW = {"source": _SOURCE, "delta": PROB, "eps": PROB, "R_A": INT0, "R_B": INT0, "r_A": INT0, "r_B": INT0,
       "eta": PROB, "engine": ENGINE, "r_max": INT0, "grid_cap": INT1, "literal_slot_cap": INT1}

_P = "oscl.protocols"
COMMANDS: dict[str, Command] = {c.name: c for c in [
    Command("measure", "divergences of p against q on an eps grid",
            _schema({"p": DIST, "q": DIST, "eps_grid": {"type": "array", "items": UNIT0}, "dh_mode": DH_MODE},
                    ["p", "q"]),
            _analysis(_measure, "D_s^eps(p||q) = min{a : Pr_p{log2 p/q > a} < eps}; "
                                "D_H^eps(p||q) = max{-log2 q(A) : p(A) >= 1 - eps}")),
    Command("convex-split", "exact or sampled distance of the convex split from the product",
            _schema({"p_xm": DIST, "prior": PROBS, "R": INT0, "eps": UNIT0, "delta": PROB,
                     "method": {"enum": ["exact", "mc", "mc-codebook"]}}, ["p_xm", "eps", "delta"]),
            _analysis(_convex_split, "1/2|split - product| <= eps + delta when R >= D_s^eps + 2 log2(3/delta)")),
    Command("decode-bench", "position-based decoding on a planted codebook",
            _schema({"mode": {"enum": ["unipartite", "bipartite"]}, "p": DIST, "prior": PROBS, "prior_m": PROBS,
                     "prior_n": PROBS, "eps": PROB, "delta": PROB, "R": INT0, "R1": INT0, "R2": INT0,
                     "eps_parts": {"type": "array", "minItems": 3, "maxItems": 3, "items": PROB},
                     "rate_rule": {"enum": ["dh", "premise"]}, "dh_mode": DH_MODE}, ["p", "eps", "delta"]),
            _analysis(_decode_bench, "unipartite: Pr{J != J'} <= eps + delta; "
                                     "bipartite: Pr{(J,K) != (J',K')} <= eps + 3 delta")),
    Command("task1", "message compression with side information (convex split + position decoding)",
            _schema({"p_xym": DIST, "eps": PROB, "delta": PROB, "prior": PROBS, "kernel_e": DIST, "R": INT0,
                     "r": INT0, "shared": {"enum": ["actual", "fictitious"]}, "dh_mode": DH_MODE,
                     "slot_cap": INT1}, ["p_xym", "eps", "delta"]),
            _protocol(f"{_P}.Task1Config", f"{_P}.run_task1_convex_split", dists=("p_xym", "kernel_e"),
                      vectors=("prior",))),
    Command("task1-br", "message compression by rejection sampling and hashing",
            _schema({"p_xym": DIST, "eps": PROB, "delta": PROB, "kernel_n": DIST, "k_cap": INT1,
                     "snap": {"enum": ["round", "exact"]}}, ["p_xym", "eps", "delta"]),
            _protocol(f"{_P}.BRConfig", f"{_P}.run_task1_br", dists=("p_xym", "kernel_n"))),
    Command("task2", "two senders, one receiver",
            _schema(_TWO_SENDER, ["p", "delta"]),
            _protocol(f"{_P}.TwoSenderConfig", f"{_P}.run_task2", dists=("p",), vectors=("prior_m", "prior_n"),
                      tuples=("eps_parts",))),
    Command("task3", "two senders with side information at the receiver",
            _schema(_TWO_SENDER, ["p", "delta"]),
            _protocol(f"{_P}.TwoSenderConfig", f"{_P}.run_task3", dists=("p",), vectors=("prior_m", "prior_n"),
                      tuples=("eps_parts",))),
    Command("task4", "one sender, two receivers without side information",
            _schema(_ONE_SENDER, ["p", "delta"]),
            _protocol(f"{_P}.OneSenderConfig", f"{_P}.run_task4", dists=("p",), vectors=("prior_m", "prior_n"),
                      tuples=("eps_parts",))),
    Command("task5", "one sender, two receivers with side information",
            _schema(_ONE_SENDER, ["p", "delta"]),
            _protocol(f"{_P}.OneSenderConfig", f"{_P}.run_task5", dists=("p",), vectors=("prior_m", "prior_n"),
                      tuples=("eps_parts",))),
    Command("task7", "lossy compression with decoder side information",
            _schema({"p_xy": DIST, "channel": TABLE, "reproduce": TABLE, "distortion": TABLE, "k": NUM,
                     "eps": PROB, "delta2": PROB, "kernel_n": DIST, "k_cap": INT1, "strings": INT0,
                     "trials_per_string": INT1},
                    ["p_xy", "channel", "reproduce", "distortion", "k", "eps", "delta2"]),
            _protocol(f"{_P}.LossyConfig", f"{_P}.run_task7", dists=("p_xy", "channel", "distortion", "kernel_n"),
                      ints=("reproduce",))),
    Command("task8", "distributed lossless compression with random binning",
            _schema(_SW, ["source", "delta"]),
            _protocol(f"{_P}.SlepianWolfConfig", f"{_P}.run_task8", extra=_source)),
    Command("task9", "compression with a helper",
            _schema(_TWO_SENDER, ["p", "delta"]),
            _protocol(f"{_P}.TwoSenderConfig", f"{_P}.run_task9", dists=("p",), vectors=("prior_m", "prior_n"),
                      tuples=("eps_parts",))),
    Command("bounds", "closed-form guarantees without simulation",
            _schema({"kind": {"enum": ["task1-br", "task6", "task9-helper"]}, "p": DIST, "kernel_n": DIST,
                     "eps": PROB, "delta": PROB, "eta": PROB, "R_A": INT0, "R_B": INT0, "resolution": INT1,
                     "max_evals": INT1, "dh_mode": DH_MODE}, ["kind", "p", "eps", "delta"]),
            _analysis(_bounds, "task1-br: D_s^eps(p_XMY||p_Y(p_X|Y x p_N|Y)) + O(log 1/delta) bits at error "
                               "eps + 3 delta; task6: error 20 eps + 30 delta; task9-helper: sufficient "
                               "rate test")),
    Command("rates", "asymptotic rate region from Shannon quantities",
            _schema({"task": {"enum": [3, 5, 7, 8, 9]}, "p": DIST, "channel": TABLE}, ["task", "p"]),
            _analysis(_rates, "iid limit of the one-shot rate inequalities")),
    Command("thm13", "extension inequality for one reference kernel",
            _schema({"p_xym": DIST, "kernel_n": DIST, "eps": PROB, "k_cap": INT1, "dh_mode": DH_MODE},
                    ["p_xym"]),
            _analysis(_thm13, "D_s^eps(XMY) >= D_s^0(XME) - D_H^eps(YME) for the canonical extension E")),
    Command("thm12", "chain between the rejection-sampling and extension costs",
            _schema({"p_xym": DIST, "eps": PROB, "k_cap": INT1, "resolution": INT1, "max_evals": INT1,
                     "dh_mode": DH_MODE}, ["p_xym"]),
            _analysis(_thm12, "br >= ext_canonical >= ds_extended >= ds_plain >= br")),
]}

PROTOCOL_COMMANDS = tuple(n for n in COMMANDS if n.startswith("task"))


# ---------------------------------------------------------------------------
# execution

def prepare(command: str, config: dict, seed: int | None = None, trials: int | None = None) -> dict:
    """Validate ``config`` for ``command`` and apply seed/trial overrides."""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    if not isinstance(config, dict):
        raise ConfigurationError("$: config must be a JSON object")
    cfg = dict(config)
    if seed is not None:
        cfg["seed"] = seed
    if trials is not None:
        cfg["trials"] = trials
    validate(cfg, COMMANDS[command].schema)
    return cfg


def execute(command: str, config: dict, seed: int | None = None, trials: int | None = None,
            workers: int | None = None) -> Outcome:
    """Run one command; the report records the command, the effective config and the wall time."""
    cfg = prepare(command, config, seed, trials)
    t0 = time.perf_counter()
    try:
        out = COMMANDS[command].run(cfg, workers)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"config rejected: {exc}") from exc
    report = dict(out.report)
    report["command"] = command
    report["config"] = cfg
    report["oscl_version"] = __version__
    report.setdefault("wall_time", time.perf_counter() - t0)
    return Outcome(report, out.violation, out.protocol)


def strip_wall_time(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "wall_time"}


def canonical(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, non-finite floats as strings."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)          # mkstemp creates 0600 files
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from exc


def golden_record(command: str, outcome: Outcome) -> dict:
    """Self-contained golden entry: the inputs and the report without wall time."""
    cfg = outcome.report["config"]
    return {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg,
            "seed": cfg.get("seed"), "trials": cfg.get("trials"), "report": strip_wall_time(outcome.report)}


# ---------------------------------------------------------------------------
# sweep

SWEEP_SCHEMA = {
    "type": "object", "additionalProperties": False, "required": ["command", "base"],
    "properties": {
        "command": {"enum": list(PROTOCOL_COMMANDS)},
        "base": {"type": "object"},
        "grid": {"type": "object", "minProperties": 1, "additionalProperties": {"type": "array", "minItems": 1}},
        "zip": {"type": "object", "minProperties": 1, "additionalProperties": {"type": "array", "minItems": 1}},
        "seed": SEED, "trials": INT1,
    },
    "oneOf": [{"required": ["grid"]}, {"required": ["zip"]}],
}


def sweep_points(spec: dict) -> list[dict]:
    """Grid points: the Cartesian product of ``grid`` or the parallel lists of ``zip``."""
    if "grid" in spec:
        keys = list(spec["grid"])
        return [dict(zip(keys, combo)) for combo in itertools.product(*(spec["grid"][k] for k in keys))]
    keys = list(spec["zip"])
    lengths = {len(v) for v in spec["zip"].values()}
    if len(lengths) != 1:
        raise ConfigurationError("$.zip: all lists must have the same length")
    return [dict(zip(keys, combo)) for combo in zip(*(spec["zip"][k] for k in keys))]


def run_sweep(spec: dict, seed: int | None = None, trials: int | None = None,
              workers: int | None = None) -> tuple[str, bool]:
    """Run every grid point with the same seed and return CSV text.

    Trend columns compare each row with the previous one:
    ``error_change`` is the difference of empirical errors and
    ``nonincreasing_2sigma`` tests ``err <= prev + 2·sqrt(se² + se_prev²)``;
    ``monotone_so_far`` is the running conjunction.
    """
    validate(spec, SWEEP_SCHEMA)
    command = spec["command"]
    seed = spec.get("seed", 0) if seed is None else seed
    trials = spec.get("trials") if trials is None else trials
    points = sweep_points(spec)
    # validate every point before running any of them
    configs = [prepare(command, {**spec["base"], **pt}, seed, trials) for pt in points]
    keys = list(points[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(keys + ["status", "premises_hold", "empirical_error", "std_error", "theorem_bound",
                            "within_bound", "comm_bits_total", "error_change", "nonincreasing_2sigma",
                            "monotone_so_far"])
    prev, monotone, violation = None, True, False
    for pt, cfg in zip(points, configs):
        out = execute(command, cfg, workers=workers)
        rep = out.protocol
        violation |= out.violation
        err, se = rep.empirical_error, rep.std_error
        change = step_ok = ""
        if err is not None and prev is not None:
            change = err - prev[0]
            step_ok = bool(err <= prev[0] + 2 * math.hypot(se, prev[1]) + 1e-15)
            monotone = monotone and step_ok
        if err is not None:
            prev = (err, se)
        writer.writerow([pt[k] for k in keys] + [
            rep.status, rep.premises_hold, _cell(err), _cell(se), _cell(rep.theorem_bound), _cell(rep.within_bound()),
            sum(rep.comm_bits.values()), _cell(change), step_ok, monotone])
    return buf.getvalue(), violation


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# golden files

def _diff_paths(a, b, path="$") -> list[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(f"{path}.{k}")
            else:
                out.extend(_diff_paths(a[k], b[k], f"{path}.{k}"))
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        return [p for i, (x, y) in enumerate(zip(a, b)) for p in _diff_paths(x, y, f"{path}[{i}]")]
    return [] if a == b else [path]


def golden_check(directory: str | os.PathLike, workers: int | None = None) -> list[dict]:
    """Re-run each ``*.json`` golden file and byte-compare the canonical report.

    Returns one entry per file with ``name``, ``passed`` and, on drift, the
    JSON paths that differ.
    """
    results = []
    for path in sorted(Path(directory).glob("*.json")):
        entry = {"name": path.name, "passed": False, "diff": []}
        try:
            gold = json.loads(path.read_text(encoding="utf-8"))
            cfg = dict(gold["config"])
            if gold.get("seed") is not None:
                cfg["seed"] = gold["seed"]
            if gold.get("trials") is not None:
                cfg["trials"] = gold["trials"]
            fresh = strip_wall_time(execute(gold["command"], cfg, workers=workers).report)
        except (ConfigurationError, KeyError, json.JSONDecodeError) as exc:
            entry["error"] = str(exc)
            results.append(entry)
            continue
        want, got = canonical(gold["report"]), canonical(fresh)
        entry["passed"] = want == got
        if not entry["passed"]:
            entry["diff"] = _diff_paths(json.loads(want), json.loads(got)) or ["$ (formatting)"]
        results.append(entry)
    return results


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oscl", description="One-shot compression protocol laboratory.")
    parser.add_argument("--version", action="version", version=f"oscl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")

    def runtime(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--seed", type=int, help="64-bit unsigned seed (overrides the config)")
        p.add_argument("--trials", type=int, help="number of trials (overrides the config)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--strict", action="store_true", help="exit 2 on premise violation or infeasibility")
        p.add_argument("--workers", type=int, help="worker processes (default: $OSCL_WORKERS or 1)")

    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, help=cmd.help)
        runtime(p)
        p.add_argument("--no-wall-time", action="store_true", help="omit the wall_time field")
        p.add_argument("--golden", action="store_true", help="write a golden record instead of the report")
    p = sub.add_parser("sweep", help="run a protocol over a parameter grid and write CSV rows")
    runtime(p)
    p = sub.add_parser("golden-check", help="re-run golden files and byte-compare the reports")
    p.add_argument("directory")
    p.add_argument("--out", help="write the pass/fail list as JSON")
    p.add_argument("--workers", type=int)
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        if args.command == "golden-check":
            return _golden_main(args)
        config = load_config(args.config)
        if args.command == "sweep":
            text, violation = run_sweep(config, args.seed, args.trials, args.workers)
            _emit(text, args.out)
            return EXIT_PREMISE if args.strict and violation else EXIT_OK
        out = execute(args.command, config, args.seed, args.trials, args.workers)
        if args.golden:
            text = canonical(golden_record(args.command, out))
        else:
            text = canonical(strip_wall_time(out.report) if args.no_wall_time else out.report)
        _emit(text, args.out)
        if out.violation:
            print("warning: a premise of the guarantee does not hold", file=sys.stderr)
            if args.strict:
                return EXIT_PREMISE
        return EXIT_OK
    except PremiseViolation as exc:
        print(f"premise violation: {exc}", file=sys.stderr)
        return EXIT_PREMISE if getattr(args, "strict", False) else EXIT_CONFIG
    except (ConfigurationError, DomainError, NumericalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _golden_main(args) -> int:
    if not Path(args.directory).is_dir():
        raise ConfigurationError(f"{args.directory}: not a directory")
    results = golden_check(args.directory, args.workers)
    if not results:
        print(f"warning: no golden files in {args.directory}", file=sys.stderr)
    for r in results:
        line = f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}"
        if not r["passed"]:
            line += ": " + (r.get("error") or ", ".join(r["diff"][:20]))
        print(line, file=sys.stderr if args.out else sys.stdout)
    if args.out:
        write_atomic(args.out, canonical(results))
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
