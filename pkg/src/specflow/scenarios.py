"""Scenario configs: parsing, execution and report files."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import acceptance, doi
from .errors import InvalidWeightError, SpecflowError
from .flow import (
    loop_integral,
    retract,
    retract_lipschitz_bound,
    sf_integral_bounded,
    sf_integral_unbounded,
)
from .operators import FramedOperator, essential_data, from_dict, random_hermitian
from .paths import (
    UNBOUNDED,
    arc_length,
    make_line_path,
    make_path,
    make_quadratic_path,
    make_random_quadratic_path,
    make_trig_loop,
    make_trig_path,
    reverse,
    vartheta_path,
)
from .weights import PullbackWeight, make_weight

KINDS = ("bounded_path", "unbounded_path", "loop_test", "exactness_test", "doi_check", "retract_test", "selftest")

CSV_COLUMNS = (
    "scenario_id",
    "kind",
    "dim",
    "sf_partition",
    "sf_crossing",
    "integral",
    "boundary",
    "total",
    "rounded",
    "defect",
    "quad_err",
    "wall_ms",
)

DEFAULT_TOLERANCES = {
    "defect": 1e-6,
    "loop": 1e-8,
    "exactness": 1e-7,
    "doi": 1e-10,
    "unbounded_vs_bounded": 1e-6,
}

SEED_ENV = "SPECFLOW_SEED"
UINT64_MAX = 2**64 - 1


class ConfigError(SpecflowError, ValueError):
    """Malformed configuration (CLI exit status 2)."""


@dataclass
class Scenario:
    id: str
    kind: str
    seed: int = 0
    dim: int = 1
    essential_points: tuple = (-1.0, 1.0)
    path_spec: dict = field(default_factory=dict)
    weight_spec: Any = field(default_factory=lambda: {"kind": "bump", "delta": 0.5, "m": 2})
    quad_tol: float = 1e-9
    grid: int = 256
    tolerances: dict = field(default_factory=dict)

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


@dataclass
class Outcome:
    scenario: Scenario
    passed: bool
    report: dict
    row: dict
    failures: list
    wall_ms: float


# -- parsing ------------------------------------------------------------------------


def _seed(value, where) -> int:
    try:
        s = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: seed {value!r} is not an integer") from exc
    if not 0 <= s <= UINT64_MAX:
        raise ConfigError(f"{where}: seed must be a 64-bit unsigned integer")
    return s


def parse_config(data: dict, env: Optional[dict] = None) -> list:
    """Validate a config mapping and return its scenarios in file order."""
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    raw = data.get("scenarios", [])
    if not isinstance(raw, list):
        raise ConfigError("'scenarios' must be a list")
    base_seed = _seed(data.get("seed", 0), "config")
    override = env.get(SEED_ENV)
    if override not in (None, ""):
        base_seed = _seed(override, SEED_ENV)
    base_tol = data.get("tolerances", {})
    seen = set()
    out = []
    for i, item in enumerate(raw):
        where = f"scenario {i}"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be an object")
        sid = item.get("id")
        if not isinstance(sid, str) or not sid:
            raise ConfigError(f"{where}: 'id' must be a non-empty string")
        if sid in seen:
            raise ConfigError(f"{where}: duplicate id {sid!r}")
        seen.add(sid)
        kind = item.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"{where}: unknown kind {kind!r}")
        seed = base_seed if override not in (None, "") else _seed(item.get("seed", base_seed), where)
        try:
            dim = int(item.get("dim", 1))
            quad_tol = float(item.get("quad_tol", 1e-9))
            grid = int(item.get("grid", 256))
            ess = tuple(float(e) for e in item.get("essential_points", (-1.0, 1.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if dim < 1:
            raise ConfigError(f"{where}: dim must be >= 1")
        if not quad_tol > 0:
            raise ConfigError(f"{where}: quad_tol must be positive")
        if grid < 2:
            raise ConfigError(f"{where}: grid must be >= 2")
        path_spec = item.get("path_spec", {})
        if not isinstance(path_spec, dict):
            raise ConfigError(f"{where}: path_spec must be an object")
        tolerances = {**base_tol, **item.get("tolerances", {})}
        unknown = set(tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"{where}: unknown tolerance names {sorted(unknown)}")
        kwargs = dict(
            id=sid, kind=kind, seed=seed, dim=dim, essential_points=ess, path_spec=path_spec,
            quad_tol=quad_tol, grid=grid, tolerances=tolerances,
        )
        if "weight_spec" in item:
            specs = item["weight_spec"] if isinstance(item["weight_spec"], list) else [item["weight_spec"]]
            for w in specs:
                try:
                    make_weight(w, check=False)
                except InvalidWeightError as exc:
                    raise ConfigError(f"{where}: {exc}") from exc
            kwargs["weight_spec"] = item["weight_spec"]
        out.append(Scenario(**kwargs))
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


# -- path construction ------------------------------------------------------------------


def _operator(spec, ess) -> FramedOperator:
    if isinstance(spec, dict) and "diag" in spec:
        return FramedOperator.diag(spec["diag"], ess)
    if isinstance(spec, dict) and "real_parts" in spec:
        return from_dict({**spec, "essential_points": ess})
    raise ConfigError(f"operator spec must have 'diag' or matrix fields, got {spec!r}")


def build_path(s: Scenario, unbounded: bool = False):
    spec = dict(s.path_spec)
    kind = spec.pop("type", "trig_path")
    reverse_it = bool(spec.pop("reverse", False))
    for meta in ("expect", "compare_bounded"):
        spec.pop(meta, None)
    try:
        if kind == "line":
            ess = () if unbounded else s.essential_points
            path = make_line_path(
                _operator(spec["F0"], ess), _operator(spec["F1"], ess), UNBOUNDED if unbounded else "bounded"
            )
        elif kind == "scalar":
            a = float(spec.get("a", 1.0))
            if unbounded:
                path = make_path(lambda t: np.array([[(2.0 * t - 1.0) * a]]), lambda t: np.array([[2.0 * a]]), kind=UNBOUNDED)
            else:
                path = make_line_path(
                    FramedOperator.diag([-a], s.essential_points), FramedOperator.diag([a], s.essential_points)
                )
        elif kind == "trig_path":
            path = make_trig_path(s.seed, s.dim, essential_points=s.essential_points, **spec)
        elif kind == "trig_loop":
            path = make_trig_loop(s.seed, s.dim, essential_points=s.essential_points, **spec)
        elif kind == "quadratic":
            if "D0" in spec:
                mats = [np.asarray(spec[k], dtype=float) for k in ("D0", "V", "W")]
                path = make_quadratic_path(*mats)
            else:
                path = make_random_quadratic_path(s.seed, s.dim, **spec)
        else:
            raise ConfigError(f"{s.id}: unknown path type {kind!r}")
    except TypeError as exc:
        raise ConfigError(f"{s.id}: bad path_spec: {exc}") from exc
    except KeyError as exc:
        raise ConfigError(f"{s.id}: path_spec is missing {exc}") from exc
    return reverse(path) if reverse_it else path


# -- scenario kinds ---------------------------------------------------------------------


def _row(s: Scenario, **values) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(scenario_id=s.id, kind=s.kind, dim=s.dim)
    row.update(values)
    return row


def _sf_row(s, r) -> dict:
    return _row(
        s,
        sf_partition=r.sf_partition,
        sf_crossing=r.sf_crossing,
        integral=r.integral_value,
        boundary=r.boundary_term,
        total=r.total,
        rounded=r.rounded_total,
        defect=r.integer_defect,
        quad_err=r.quadrature_error_estimate,
    )


def _sf_contracts(s, r, failures, expect=None):
    if not r.sf_partition == r.sf_crossing == r.rounded_total:
        failures.append(
            f"estimator agreement: partition {r.sf_partition}, crossing {r.sf_crossing}, rounded {r.rounded_total}"
        )
    if r.integer_defect > s.tol("defect"):
        failures.append(f"integer defect {r.integer_defect:.3e} > {s.tol('defect'):g}")
    if expect is not None and r.rounded_total != int(expect):
        failures.append(f"expected spectral flow {expect}, got {r.rounded_total}")


def run_bounded(s: Scenario):
    w = make_weight(s.weight_spec)
    path = build_path(s)
    r = sf_integral_bounded(path, w, s.quad_tol, s.grid)
    failures = []
    _sf_contracts(s, r, failures, s.path_spec.get("expect"))
    return r.to_dict(timing=False), _sf_row(s, r), failures


def run_unbounded(s: Scenario):
    w = make_weight(s.weight_spec)
    path = build_path(s, unbounded=True)
    r = sf_integral_unbounded(path, w, s.quad_tol, s.grid)
    failures = []
    _sf_contracts(s, r, failures, s.path_spec.get("expect"))
    report = r.to_dict(timing=False)
    if s.path_spec.get("compare_bounded", False) and w.kind == "gaussian":
        b = sf_integral_bounded(vartheta_path(path), PullbackWeight(w), s.quad_tol, s.grid)
        report["bounded_vartheta_total"] = b.total
        if abs(b.total - r.total) > s.tol("unbounded_vs_bounded"):
            failures.append(f"unbounded total {r.total!r} vs transformed bounded total {b.total!r}")
    return report, _sf_row(s, r), failures


def run_loop(s: Scenario):
    w = make_weight(s.weight_spec)
    spec = {"type": "trig_loop", "amplitude": 0.2, **s.path_spec}
    loop = build_path(Scenario(**{**s.__dict__, "path_spec": spec}))
    q = loop_integral(loop, w, s.quad_tol)
    length = arc_length(loop)
    bound = s.tol("loop") * (1.0 + length)
    failures = [] if abs(q.value) <= bound else [f"loop integral {q.value:.3e} exceeds {bound:.3e}"]
    report = {"integral_value": q.value, "quadrature_error_estimate": q.error_estimate, "arc_length": length}
    return report, _row(s, integral=q.value, quad_err=q.error_estimate), failures


def _weights(spec) -> list:
    specs = spec if isinstance(spec, list) else [spec]
    return [make_weight(w) for w in specs]


def run_exactness(s: Scenario):
    rng = np.random.default_rng(s.seed)
    n = s.dim
    F0 = FramedOperator(random_hermitian(rng, n, 0.9), s.essential_points)
    F1 = FramedOperator(random_hermitian(rng, n, 0.9), s.essential_points)
    K = random_hermitian(rng, n, float(s.path_spec.get("bend", 0.05)))
    bridges = {"line": make_line_path(F0, F1), "bent": acceptance.bent_bridge(F0, F1, K)}
    totals = {}
    last = None
    for w in _weights(s.weight_spec):
        for name, path in bridges.items():
            last = sf_integral_bounded(path, w, s.quad_tol, s.grid)
            totals[f"{json.dumps(w.spec(), sort_keys=True)}|{name}"] = last.total
    values = list(totals.values())
    spread = max(values) - min(values)
    failures = [] if spread <= s.tol("exactness") else [f"totals spread {spread:.3e} > {s.tol('exactness'):g}"]
    _sf_contracts(s, last, failures)
    return {"totals": totals, "spread": spread}, _sf_row(s, last), failures


def run_doi(s: Scenario):
    spec = s.path_spec
    fn = doi.FUNCTIONS.get(spec.get("function", "tanh"))
    if fn is None:
        raise ConfigError(f"{s.id}: unknown function {spec.get('function')!r}; choose from {sorted(doi.FUNCTIONS)}")
    rng = np.random.default_rng(s.seed)
    pairs = int(spec.get("pairs", 10))
    scale = float(spec.get("scale", 1.0))
    worst = 0.0
    for _ in range(pairs):
        A = random_hermitian(rng, s.dim, scale)
        B = random_hermitian(rng, s.dim, scale)
        res = doi.perturbation_residual(fn, A, B)
        ref = 1.0 + np.linalg.norm(doi.matrix_function(A, fn) - doi.matrix_function(B, fn))
        worst = max(worst, res / ref)
    failures = [] if worst < s.tol("doi") else [f"perturbation residual ratio {worst:.3e} >= {s.tol('doi'):g}"]
    return {"function": fn.name, "pairs": pairs, "worst_residual_ratio": worst}, _row(s), failures


def run_retract(s: Scenario):
    rng = np.random.default_rng(s.seed)
    count = int(s.path_spec.get("count", 10))
    failures = []
    worst_ratio = 0.0
    for _ in range(count):
        F = acceptance._random_fredholm(rng, s.dim)
        if not np.array_equal(retract(F, 0.0).block, F.block):
            failures.append("retract(F, 0) differs from F")
        if not essential_data(retract(F, 1.0)).in_Fpm1:
            failures.append("retract(F, 1) is not in F*^{+-1}")
        C = retract_lipschitz_bound(F)
        ts = np.linspace(0.0, 1.0, 33)
        for a, b in zip(ts[:-1], ts[1:]):
            d = acceptance._framed_distance(retract(F, float(a)), retract(F, float(b)))
            if C > 0:
                worst_ratio = max(worst_ratio, d / (C * (b - a)))
    if worst_ratio > 1.0 + 1e-9:
        failures.append(f"continuity modulus exceeded the Lipschitz bound (ratio {worst_ratio:.6f})")
    return {"count": count, "worst_lipschitz_ratio": worst_ratio}, _row(s), failures


def run_selftest(s: Scenario):
    results = acceptance.run_acceptance(s.path_spec.get("filter"), emit=lambda line: None)
    failures = [r.line() for r in results if not r.passed]
    report = {"criteria": [{"key": r.key, "name": r.name, "passed": r.passed} for r in results]}
    return report, _row(s), failures


RUNNERS = {
    "bounded_path": run_bounded,
    "unbounded_path": run_unbounded,
    "loop_test": run_loop,
    "exactness_test": run_exactness,
    "doi_check": run_doi,
    "retract_test": run_retract,
    "selftest": run_selftest,
}


def run_scenario(s: Scenario) -> Outcome:
    started = time.perf_counter()
    try:
        report, row, failures = RUNNERS[s.kind](s)
    except ConfigError:
        raise
    except SpecflowError as exc:
        report, row, failures = {"error": f"{type(exc).__name__}: {exc}"}, _row(s), [f"{type(exc).__name__}: {exc}"]
    wall_ms = 1e3 * (time.perf_counter() - started)
    row["wall_ms"] = f"{wall_ms:.3f}"
    report = {"scenario_id": s.id, "kind": s.kind, "seed": s.seed, "passed": not failures, "failures": failures, **report}
    return Outcome(s, not failures, report, row, failures, wall_ms)


def run_all(scenarios: list, threads: Optional[int] = None) -> list:
    """Run scenarios concurrently; outcomes come back in input order."""
    workers = max(1, threads or os.cpu_count() or 1)
    if workers == 1 or len(scenarios) <= 1:
        return [run_scenario(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_scenario, scenarios))


# -- output -----------------------------------------------------------------------------


def _clean(obj):
    """Make a report JSON-safe (numpy scalars, non-finite floats)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt_cell(row.get(k, "")) for k in CSV_COLUMNS})
    return buf.getvalue()


def _safe_name(sid: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.@=" else "_" for c in sid)


def write_outputs(outcomes: list, out_dir: str, csv_name: str = "results.csv"):
    for o in outcomes:
        name = _safe_name(o.scenario.id)
        atomic_write(os.path.join(out_dir, f"{name}.json"), json.dumps(_clean(o.report), indent=2) + "\n")
        atomic_write(os.path.join(out_dir, f"{name}.timing.json"), json.dumps({"wall_ms": o.wall_ms}) + "\n")
    atomic_write(os.path.join(out_dir, csv_name), csv_text([o.row for o in outcomes]))


# -- sweeps -----------------------------------------------------------------------------


def parse_range(text: str) -> list:
    """``a:b:n`` (inclusive linspace) or a comma list; integers stay integers."""
    def num(x):
        x = x.strip()
        try:
            return int(x)
        except ValueError:
            return float(x)

    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        return [num(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}: {exc}") from exc


def _set(obj, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        if isinstance(obj, list):
            obj = obj[int(k)]
        else:
            obj = obj.setdefault(k, {})
    last = keys[-1]
    if isinstance(obj, list):
        obj[int(last)] = value
    else:
        obj[last] = value


def expand_sweep(config: dict, params: list) -> dict:
    """One scenario copy per point of the parameter grid; ids get ``@name=value`` suffixes.

    A parameter path starting with ``scenarios.`` addresses the config root,
    anything else is applied inside every scenario.
    """
    grid = [({}, "")]
    for item in params:
        if "=" not in item:
            raise ConfigError(f"--param needs path=range, got {item!r}")
        path, rng_text = item.split("=", 1)
        grid = [({**a, path: v}, f"{tag}@{path}={v}") for a, tag in grid for v in parse_range(rng_text)]
    out = copy.deepcopy(config)
    scenarios = []
    for assignment, tag in grid:
        cfg = copy.deepcopy(config)
        for path, v in assignment.items():
            if path.startswith("scenarios."):
                try:
                    _set(cfg, path, v)
                except (IndexError, ValueError, TypeError, AttributeError) as exc:
                    raise ConfigError(f"cannot set {path}: {exc}") from exc
        for sc in cfg.get("scenarios", []):
            for path, v in assignment.items():
                if not path.startswith("scenarios."):
                    try:
                        _set(sc, path, v)
                    except (IndexError, ValueError, TypeError, AttributeError) as exc:
                        raise ConfigError(f"cannot set {path}: {exc}") from exc
            sc["id"] = f"{sc.get('id', '')}{tag}"
            scenarios.append(sc)
    out["scenarios"] = scenarios
    return out
