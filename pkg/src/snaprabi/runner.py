"""Sweep configs, grid execution and result emission.

Config documents are YAML mappings. A file may hold several documents
separated by ``---``; each expands to its own grid and rows are
concatenated. Keys::

    method: snap_rabi            # see METHODS
    target: {k: 1, l: 1, T: 1.0} # or [k, l, T]
    resources: [2, 4, 6]         # M, N, r, k_max or t2 depending on method
    parameters: {...}            # method extras, see METHOD_PARAMETERS
    optical_state: {kind: prc, mean_quanta: 1.0}     # mean_quanta may be a list
    mechanical_state: {kind: vacuum}                 # default vacuum
    noise: {dq: 0.001, dr: 0, deta: 1, losses_apply_to: [mode1, mode2],
            noise_rabi_only: false}                  # or null
    cutoffs: auto                # or [D1, D2]
    metrics: [fidelity, snr, minvar, negativity, gaussian_negativity, g2]
    seed: 0
    output: results.csv
    format: csv

The grid is ``optical n̄ × mechanical n̄ × resources`` in that nesting order.
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
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, CutoffTooSmall, InvalidArgument, UndefinedMetric
from .gates import Gate
from .hilbert import MODE1, MODE2, SpaceDescriptor
from .metrics import (MetricsReport, covariance_matrix, displacement_snr, fidelity,
                      g2_correlation, gaussian_negativity_from_cov, min_quadrature_variance,
                      negativity, negativity_raw)
from .noise import NoiseModel
from .sequences import (GateSequence, concatenated_bch, concatenated_bch_target,
                        default_tau, dispersive_rabi_method, fourier_series_method,
                        gaussian_delta_method, ideal_sequence, kerr_linearized, kerr_squeezed,
                        run_sequence, snap_rabi, snap_rabi_v1)
from .states import StateSpec, compose, make_state, poisson_weights, thermal_weights

SCHEMA_VERSION = 1
WORKERS_ENV = "SNAPRABI_WORKERS"
CONVERGENCE_STEP = 8
CONVERGENCE_TOL = 1e-4
TAIL_TOL = 1e-10
MAX_AUTO_D2 = 600

METHODS = ("ideal", "dispersive_rabi", "snap_rabi", "snap_rabi_v1", "kerr_linearized",
           "kerr_squeezed", "fourier_series", "gaussian_delta", "concatenated_bch")
METRICS = ("fidelity", "snr", "minvar", "negativity", "gaussian_negativity", "g2")

# allowed (k, l) per method; None means any
_TARGETS = {
    "ideal": None,
    "dispersive_rabi": {(1, 1), (1, 2)},
    "snap_rabi": {(1, 1), (1, 2), (2, 1), (2, 2)},
    "snap_rabi_v1": {(1, 1)},
    "kerr_linearized": {(1, 1)},
    "kerr_squeezed": {(1, 2)},
    "fourier_series": {(1, 1)},
    "gaussian_delta": {(1, 1)},
    "concatenated_bch": None,
}

# name -> (required, default)
METHOD_PARAMETERS: dict[str, dict[str, tuple[bool, Any]]] = {
    "ideal": {},
    "dispersive_rabi": {},
    "snap_rabi": {"include_final_snap": (False, True)},
    "snap_rabi_v1": {},
    "kerr_linearized": {"alpha": (True, None)},
    "kerr_squeezed": {},
    "fourier_series": {"tau": (False, None)},
    "gaussian_delta": {"a": (True, None), "tau": (False, None)},
    "concatenated_bch": {"t1": (True, None), "variant": (False, "same_sign")},
}

_TOP_KEYS = {"method", "target", "resources", "parameters", "optical_state", "mechanical_state",
             "noise", "cutoffs", "metrics", "seed", "output", "format"}
_STATE_KEYS = {"kind", "amplitude", "mean_quanta", "fock_n", "seed"}
_NOISE_KEYS = {"dq", "dr", "deta", "d_eta", "losses_apply_to", "noise_rabi_only"}

ROW_COLUMNS = ("schema_version", "point", "method", "k", "l", "T", "resource_param",
               "optical_kind", "optical_nbar", "mechanical_kind", "mechanical_nbar",
               "dq", "dr", "d_eta", "noise_rabi_only", "seed", "D1", "D2",
               "disposal", *MetricsReport.__dataclass_fields__, "resource_breakdown",
               "wall_time", "flagged", "error")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    target: tuple[int, int, float]
    resources: tuple
    optical_state: tuple[StateSpec, ...]
    mechanical_state: tuple[StateSpec, ...] = (StateSpec("vacuum"),)
    parameters: dict = field(default_factory=dict)
    noise: NoiseModel | None = None
    cutoffs: tuple[int, int] | None = None
    metrics: tuple[str, ...] = METRICS
    seed: int = 0
    output: str | None = None
    format: str = "csv"


@dataclass(frozen=True)
class GridPoint:
    index: int
    method: str
    target: tuple[int, int, float]
    resource: Any
    parameters: dict
    optical: StateSpec
    mechanical: StateSpec
    noise: NoiseModel | None
    cutoffs: tuple[int, int] | None
    metrics: tuple[str, ...]
    seed: int


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(doc: dict, allowed: set, path: str):
    if not isinstance(doc, dict):
        _fail(path, f"expected a mapping, got {type(doc).__name__}")
    for key in doc:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else str(key), "unknown key")


def _number(value, path, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            _fail(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _parse_states(doc, path: str, seed: int) -> tuple[StateSpec, ...]:
    if isinstance(doc, str):
        doc = {"kind": doc}
    _check_keys(doc, _STATE_KEYS, path)
    if "kind" not in doc:
        _fail(f"{path}.kind", "missing required key")
    nbars = doc.get("mean_quanta")
    nbars = nbars if isinstance(nbars, list) else [nbars]
    if not nbars:
        _fail(f"{path}.mean_quanta", "sweep list is empty")
    out = []
    for i, nb in enumerate(nbars):
        kw = {k: v for k, v in doc.items() if k != "mean_quanta"}
        if nb is not None:
            kw["mean_quanta"] = _number(nb, f"{path}.mean_quanta[{i}]")
        if "amplitude" in kw:
            a = kw["amplitude"]
            kw["amplitude"] = complex(a[0], a[1]) if isinstance(a, list) else \
                _number(a, f"{path}.amplitude")
        kw.setdefault("seed", seed)
        try:
            spec = StateSpec(**kw)
            if spec.kind in ("coherent", "phase_randomized_coherent", "thermal"):
                spec.nbar
        except (InvalidArgument, TypeError) as e:
            _fail(path, str(e))
        out.append(spec)
    return tuple(out)


def _parse_noise(doc, path="noise") -> NoiseModel | None:
    if doc is None:
        return None
    _check_keys(doc, _NOISE_KEYS, path)
    kw = dict(doc)
    if "deta" in kw:
        if "d_eta" in kw:
            _fail(f"{path}.deta", "give deta or d_eta, not both")
        kw["d_eta"] = kw.pop("deta")
    for key in ("dq", "dr", "d_eta"):
        if key in kw:
            kw[key] = _number(kw[key], f"{path}.{key}")
    if "losses_apply_to" in kw:
        kw["losses_apply_to"] = tuple(kw["losses_apply_to"])
    try:
        return NoiseModel(**kw)
    except InvalidArgument as e:
        _fail(path, str(e))


def _parse_target(doc) -> tuple[int, int, float]:
    if isinstance(doc, dict):
        _check_keys(doc, {"k", "l", "T"}, "target")
        missing = {"k", "l", "T"} - set(doc)
        if missing:
            _fail(f"target.{sorted(missing)[0]}", "missing required key")
        k, l, T = doc["k"], doc["l"], doc["T"]
    elif isinstance(doc, (list, tuple)) and len(doc) == 3:
        k, l, T = doc
    else:
        _fail("target", "expected {k, l, T} or [k, l, T]")
    return _number(k, "target.k", int), _number(l, "target.l", int), _number(T, "target.T")


def config_from_mapping(doc: dict) -> ExperimentConfig:
    """Validate one config mapping and fill defaults."""
    _check_keys(doc, _TOP_KEYS, "")
    for key in ("method", "optical_state"):
        if key not in doc:
            _fail(key, "missing required key")
    method = doc["method"]
    if method not in METHODS:
        _fail("method", f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method != "concatenated_bch" and "target" not in doc:
        _fail("target", "missing required key")
    target = _parse_target(doc.get("target", [1, 1, 0.0]))
    allowed = _TARGETS[method]
    if allowed is not None and target[:2] not in allowed:
        _fail("target", f"{method} does not support (k, l) = {target[:2]}")

    if "resources" not in doc and method != "ideal":
        _fail("resources", "missing required key")
    resources = doc.get("resources", [0])
    if not isinstance(resources, list):
        _fail("resources", "expected a list")
    if not resources:
        _fail("resources", "sweep list is empty")
    integral = method in ("dispersive_rabi", "snap_rabi", "snap_rabi_v1", "kerr_linearized",
                          "fourier_series", "gaussian_delta")
    resources = tuple(_number(r, f"resources[{i}]", int if integral else float)
                      for i, r in enumerate(resources))

    params = doc.get("parameters") or {}
    spec = METHOD_PARAMETERS[method]
    _check_keys(params, set(spec), "parameters")
    filled = {}
    for name, (required, default) in spec.items():
        if name in params:
            filled[name] = params[name]
        elif required:
            _fail(f"parameters.{name}", f"missing required key for method {method}")
        elif default is not None:
            filled[name] = default
    for name in ("alpha", "tau", "a", "t1"):
        if name in filled:
            filled[name] = _number(filled[name], f"parameters.{name}")
    if method == "concatenated_bch" and filled["variant"] not in ("same_sign", "opposite_sign"):
        _fail("parameters.variant", "must be same_sign or opposite_sign")

    seed = _number(doc.get("seed", 0), "seed", int)
    optical = _parse_states(doc["optical_state"], "optical_state", seed)
    mechanical = _parse_states(doc.get("mechanical_state", {"kind": "vacuum"}),
                               "mechanical_state", seed)

    cutoffs = doc.get("cutoffs", "auto")
    if cutoffs == "auto" or cutoffs is None:
        cutoffs = None
    elif isinstance(cutoffs, list) and len(cutoffs) == 2:
        cutoffs = (_number(cutoffs[0], "cutoffs[0]", int), _number(cutoffs[1], "cutoffs[1]", int))
        if min(cutoffs) < 2:
            _fail("cutoffs", "cutoffs must be at least 2")
    else:
        _fail("cutoffs", "expected 'auto' or [D1, D2]")

    metrics = doc.get("metrics", list(METRICS))
    if not isinstance(metrics, list) or not metrics:
        _fail("metrics", "expected a non-empty list")
    for i, m in enumerate(metrics):
        if m not in METRICS:
            _fail(f"metrics[{i}]", f"unknown metric {m!r}")

    fmt = doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        _fail("format", "must be csv or json")
    return ExperimentConfig(method=method, target=target, resources=resources,
                            optical_state=optical, mechanical_state=mechanical,
                            parameters=filled, noise=_parse_noise(doc.get("noise")),
                            cutoffs=cutoffs, metrics=tuple(metrics), seed=seed,
                            output=doc.get("output"), format=fmt)


def parse_configs(text: str) -> list[ExperimentConfig]:
    """All configs in a (possibly multi-document) YAML text."""
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed document: {e}") from None
    if not docs:
        raise ConfigError("empty config document")
    return [config_from_mapping(d) for d in docs]


def parse_config(text: str) -> ExperimentConfig:
    configs = parse_configs(text)
    if len(configs) != 1:
        raise ConfigError(f"expected one config document, found {len(configs)}")
    return configs[0]


# --------------------------------------------------------------------------
# building a point
# --------------------------------------------------------------------------


def _state_cutoff(spec: StateSpec, tol: float = TAIL_TOL) -> int:
    """Smallest cutoff (at least 8) keeping all but ``tol`` of the state's trace."""
    kind = spec.kind
    if kind == "vacuum":
        return 8
    if kind == "fock":
        return spec.fock_n + 8
    if kind == "random_superposition":
        # weights fall like e^{-n}
        return max(8, int(math.ceil(-math.log(tol))) + 2)
    nbar = spec.nbar
    weights = thermal_weights if kind == "thermal" else poisson_weights
    d = 8
    while 1 - weights(nbar, d).sum() > tol:
        d += 4
    return d


def auto_cutoffs(point: GridPoint) -> tuple[int, int]:
    """Default cutoffs.

    Mode 1 takes ``max(16, ⌈6n̄⌉ + 10)``, raised until the input loses at
    most 1e-10 of its trace. Mode 2 takes ``max(16, ⌈(n_top^k·T/√2 + 3)²/2⌉ + 10)``
    on top of the mechanical input's own need, where ``n_top`` is the level
    above which mode 1 carries less than 1e-7. Quadratic couplings squeeze
    instead of displace and get ``8s² + 20`` with ``s = n_top^k·T``. The
    linearised Kerr sequence also covers a coherent state at ``X = α + s``.
    """
    k, l, T = point.target
    nbar = point.optical.nbar if point.optical.kind != "random_superposition" else 1.0
    d1 = max(16, math.ceil(6 * nbar) + 10, _state_cutoff(point.optical))
    if point.method in ("snap_rabi", "snap_rabi_v1"):
        d1 = max(d1, int(point.resource) + 2)
    n_top = _state_cutoff(point.optical, 1e-7) - 1
    extra = _state_cutoff(point.mechanical) - 8
    s = abs(T) * n_top ** k
    if point.method == "concatenated_bch":
        s = 2 * abs(point.resource)
    if l == 1:
        d2 = max(16, math.ceil((s / math.sqrt(2) + 3) ** 2 / 2) + 10)
    else:
        d2 = max(16, math.ceil(8 * s ** 2 + 20))
    if point.method == "kerr_linearized":
        # the linearising displacement parks mode 2 near X = -α between cycles
        shifted = StateSpec("coherent", amplitude=(point.parameters["alpha"] + s) / math.sqrt(2))
        d2 = max(d2, _state_cutoff(shifted) + 10)
    return d1, min(d2 + extra, MAX_AUTO_D2)


def build_sequence(point: GridPoint, space: SpaceDescriptor) -> tuple[GateSequence, GateSequence]:
    """The simulated sequence and the reference it is compared with."""
    k, l, T = point.target
    r = point.resource
    p = point.parameters
    osc = space.without(["qubit"])
    m = point.method
    if m == "ideal":
        seq = ideal_sequence(k, l, T, osc)
    elif m == "dispersive_rabi":
        seq = dispersive_rabi_method(T, r, l, space)
    elif m == "snap_rabi":
        seq = snap_rabi(T, r, k, l, p.get("include_final_snap", True), space)
    elif m == "snap_rabi_v1":
        seq = snap_rabi_v1(T, r, space)
    elif m == "kerr_linearized":
        seq = kerr_linearized(T / (r * p["alpha"]), p["alpha"], r, osc)
    elif m == "kerr_squeezed":
        if r == 0:
            raise InvalidArgument("kerr_squeezed needs a nonzero squeezing r")
        seq = kerr_squeezed(-T / math.sinh(2 * r), r, osc)
    elif m == "fourier_series":
        tau = p["tau"]
        seq = fourier_series_method(tau, T / tau, r, space)
    elif m == "gaussian_delta":
        tau = p["tau"]
        seq = gaussian_delta_method(p["a"], r, T / tau, tau, space)
    elif m == "concatenated_bch":
        seq = concatenated_bch(p["t1"], r, p["variant"], space)
        op = concatenated_bch_target(p["t1"], r, p["variant"], space)
        ref_gate = Gate(op, 0.0, "none", "closed_form")
        ref = GateSequence((ref_gate,), seq.qubit_prep, seq.qubit_disposal, "closed_form", space)
        return seq, ref
    else:
        raise InvalidArgument(f"unknown method {m!r}")
    return seq, ideal_sequence(*seq.target, osc)


def _metric_values(point: GridPoint, d1: int, d2: int) -> tuple[dict[str, float], dict]:
    space = SpaceDescriptor.hybrid(d1, d2)
    state = compose(None, make_state(point.optical, d1, MODE1),
                    make_state(point.mechanical, d2, MODE2))
    seq, ref = build_sequence(point, space)
    out = run_sequence(state, seq, point.noise)
    ideal = run_sequence(state, ref)
    values = {"resource": seq.total_resource}
    meta = {"disposal": seq.disposal_for(point.noise) or "none",
            "resource_breakdown": ";".join(f"{k}={v!r}"
                                           for k, v in sorted(seq.resource_breakdown().items()))}
    for name in point.metrics:
        try:
            if name == "fidelity":
                values["fidelity"] = fidelity(ideal, out)
            elif name == "snr":
                if seq.target is None:
                    raise UndefinedMetric("no oscillator target")
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    values["snr"] = displacement_snr(state, seq, point.noise)
            elif name == "minvar":
                values["min_quadrature_variance"] = min_quadrature_variance(out, MODE2)
            elif name == "negativity":
                values["negativity"] = negativity(out, MODE2)
                values["negativity_raw"] = negativity_raw(out, MODE2)
            elif name == "gaussian_negativity":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    gn, nu = gaussian_negativity_from_cov(covariance_matrix(out))
                values["gaussian_negativity"] = gn
                values["pt_symplectic_eigenvalue"] = nu
            elif name == "g2":
                values["g2"] = g2_correlation(out)
        except UndefinedMetric:
            pass
    return values, meta


def evaluate_point(point: GridPoint) -> dict:
    """One result row; failures become rows with ``error`` set."""
    t0 = time.perf_counter()
    row = _row_prefix(point)
    try:
        d1, d2 = point.cutoffs if point.cutoffs is not None else auto_cutoffs(point)
        if point.method in ("fourier_series", "gaussian_delta") and "tau" not in point.parameters:
            # fix τ from the base cutoff so the convergence rerun uses the same sequence
            params = dict(point.parameters, tau=default_tau(SpaceDescriptor.oscillators(d1, d2)))
            point = replace(point, parameters=params)
        values, meta = _metric_values(point, d1, d2)
        shifted, _ = _metric_values(point, d1 + CONVERGENCE_STEP, d2 + CONVERGENCE_STEP)
        diffs = [abs(values[k] - shifted[k]) for k in values
                 if k in shifted and math.isfinite(values[k]) and math.isfinite(shifted[k])]
        shift = max(diffs, default=0.0)
        report = MetricsReport(**values, convergence_shift=shift)
        row.update(report.to_dict())
        row.update(meta)
        row.update(D1=d1, D2=d2, flagged=shift >= CONVERGENCE_TOL, error="")
    except (InvalidArgument, CutoffTooSmall, ValueError, RuntimeError, MemoryError) as e:
        row.update(MetricsReport().to_dict())
        row.update(flagged=True, error=f"{type(e).__name__}: {e}")
    row["wall_time"] = time.perf_counter() - t0
    return row


def _row_prefix(point: GridPoint) -> dict:
    k, l, T = point.target
    noise = point.noise or NoiseModel()
    def nbar(s):
        if s.mean_quanta is not None:
            return s.mean_quanta
        try:
            return s.nbar
        except InvalidArgument:
            return math.nan
    return {
        "schema_version": SCHEMA_VERSION, "point": point.index, "method": point.method,
        "k": k, "l": l, "T": T, "resource_param": point.resource,
        "optical_kind": point.optical.kind, "optical_nbar": nbar(point.optical),
        "mechanical_kind": point.mechanical.kind, "mechanical_nbar": nbar(point.mechanical),
        "dq": noise.dq, "dr": noise.dr, "d_eta": noise.d_eta,
        "noise_rabi_only": noise.noise_rabi_only, "seed": point.seed,
        "D1": point.cutoffs[0] if point.cutoffs else "",
        "D2": point.cutoffs[1] if point.cutoffs else "",
    }


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def expand_grid(config: ExperimentConfig, start: int = 0) -> list[GridPoint]:
    points = []
    grid = itertools.product(config.optical_state, config.mechanical_state, config.resources)
    for i, (opt, mech, res) in enumerate(grid):
        points.append(GridPoint(start + i, config.method, config.target, res,
                                dict(config.parameters), opt, mech, config.noise,
                                config.cutoffs, config.metrics, config.seed))
    return points


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be at least 1")
        return n
    return os.cpu_count() or 1


def run_points(points: list[GridPoint], workers: int = 1) -> list[dict]:
    """Evaluate points, serially or in a process pool; rows keep grid order."""
    if workers <= 1 or len(points) <= 1:
        return [evaluate_point(p) for p in points]
    with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
        return list(pool.map(evaluate_point, points))


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[dict]:
    """One row per grid point, ordered by grid position."""
    return run_points(expand_grid(config), workers)


# --------------------------------------------------------------------------
# emission
# --------------------------------------------------------------------------


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def format_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for row in rows:
            w.writerow([_csv_cell(row.get(c)) for c in ROW_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        data = [{c: _json_value(row.get(c)) for c in ROW_COLUMNS} for row in rows]
        return json.dumps(data, indent=1, allow_nan=False) + "\n"
    raise InvalidArgument(f"unknown format {fmt!r}")


def emit(rows: list[dict], fmt: str, path: str | None) -> None:
    """Write rows to ``path`` (stdout when None)."""
    text = format_rows(rows, fmt)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------


def verification_checks() -> list[tuple[str, callable]]:
    """Quick identity and property checks run by ``verify``."""
    from . import verify
    return verify.CHECKS


def _cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            configs = parse_configs(fh.read())
        workers = args.workers if args.workers is not None else default_workers()
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        cutoffs = None
        if args.cutoff_override:
            try:
                d1, d2 = (int(x) for x in args.cutoff_override.split(","))
            except ValueError:
                raise ConfigError("--cutoff-override expects D1,D2") from None
            cutoffs = (d1, d2)
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    points = []
    for cfg in configs:
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed,
                          optical_state=tuple(replace(s, seed=args.seed) for s in cfg.optical_state),
                          mechanical_state=tuple(replace(s, seed=args.seed)
                                                 for s in cfg.mechanical_state))
        if cutoffs is not None:
            cfg = replace(cfg, cutoffs=cutoffs)
        points += expand_grid(cfg, start=len(points))
    try:
        rows = run_points(points, workers)
        fmt = args.format or configs[0].format
        emit(rows, fmt, args.out if args.out is not None else configs[0].output)
    except (OSError, RuntimeError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"point {r['point']} failed: {r['error']}", file=sys.stderr)
    return 2 if failed and len(failed) == len(rows) else 0


def _cmd_verify(args) -> int:
    failures = 0
    for name, check in verification_checks():
        try:
            ok, detail = check()
        except Exception as e:  # a crashing check counts as a failure
            ok, detail = False, f"{type(e).__name__}: {e}"
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snaprabi",
                                     description="Hybrid qubit-oscillator gate-sequence sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a sweep config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output path ('-' for stdout)")
    run.add_argument("--format", choices=("csv", "json"), default=None)
    run.add_argument("--workers", type=int, default=None,
                     help=f"worker processes (default ${WORKERS_ENV} or all cores)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--cutoff-override", default=None, metavar="D1,D2")
    run.set_defaults(func=_cmd_run)
    ver = sub.add_parser("verify", help="run the built-in identity checks")
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
