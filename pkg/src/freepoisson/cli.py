"""Command line interface.

Subcommands: ``solve`` (potential and derivatives on a point set),
``verify`` (residual, mean-value and inequality checks), ``norms``
(Lorentz diagnostics and the normalized-solution bound), and
``convergence`` (error against the radial oracle as budgets grow).

Run configurations are JSON documents; unknown keys are rejected with
the offending path.  Output files are written atomically (temp file
plus rename) and contain no timestamps or timings, so a rerun with the
same configuration and seed is byte-identical regardless of the
``--threads`` setting.  Wall-clock timings go to stderr only.

Exit codes: 0 success, 2 configuration error, 3 admissibility
rejection, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AdmissibilityError, ConfigError, FreePoissonError
from .lorentz import (
    LorentzParams,
    build_normalized_solution,
    kernel_weak_quasi_norm,
    lorentz_quasi_norm,
)
from .quadrature import (
    QuadratureConfig,
    eval_gradient,
    eval_hessian,
    eval_potential,
)
from .sources import CORPUS_FACTORIES, check_conditions, radial_reference_potential
from .verify import inequality_harness, mean_value_check, residual_suite

SCHEMA_VERSION = 1
RECORD_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ADMISSIBILITY = 3
EXIT_VERIFICATION = 4


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "schema_version", "dimension", "source", "quadrature",
    "evaluation_points", "compute", "verify", "norms", "convergence",
    "output",
}
_SOURCE_KEYS = {"name", "params"}
_QUAD_KEYS = {
    "split_radius", "truncation_radius", "radial_nodes", "angular_rule",
    "angular_nodes_or_samples", "midfield_samples", "rel_tolerance", "seed",
}
_POINTS_KEYS = {"points", "grid", "radial"}
_GRID_KEYS = {"center", "extent", "counts"}
_RADIAL_KEYS = {"radii", "direction"}
_COMPUTE_KEYS = {"gradient", "hessian", "residual"}
_OUTPUT_KEYS = {"format"}
_VERIFY_KEYS = {
    "mode", "dimensions", "harness_trials", "points", "h_values", "mean_value",
}
_MEAN_VALUE_KEYS = {"center", "radii", "allow_source_overlap"}
_NORMS_KEYS = {"p", "q", "method"}
_CONV_KEYS = {"radial_nodes", "midfield_samples", "point"}

_FORMATS = ("csv", "json", "both")


def _reject_unknown(block: dict, allowed: set[str], path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"expected an object, got {type(block).__name__}", path)
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", path)


def _number(block, key, path, *, required=False, default=None, integer=False,
            minimum=None):
    if key not in block:
        if required:
            raise ConfigError("missing required key", f"{path}.{key}")
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError("expected a number", f"{path}.{key}")
    if integer:
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError("expected an integer", f"{path}.{key}")
        val = int(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"must be >= {minimum}", f"{path}.{key}")
    return val


def _vector(value, n, path):
    if not isinstance(value, list) or len(value) != n or \
            any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigError(f"expected a list of {n} numbers", path)
    return [float(v) for v in value]


@dataclass
class RunConfig:
    """Validated run configuration shared by the subcommands."""

    dimension: int
    source_name: str
    source_params: dict
    quadrature: QuadratureConfig
    points: np.ndarray
    compute_gradient: bool = True
    compute_hessian: bool = False
    compute_residual: bool = False
    out_format: str = "both"
    verify_block: dict = field(default_factory=dict)
    norms_block: dict = field(default_factory=dict)
    convergence_block: dict = field(default_factory=dict)

    def canonical_dict(self) -> dict:
        """Fully explicit form; reparsing it reproduces this config."""
        out = {
            "schema_version": SCHEMA_VERSION,
            "dimension": self.dimension,
            "source": {"name": self.source_name, "params": self.source_params},
            "quadrature": {
                "split_radius": self.quadrature.split_radius,
                "truncation_radius": self.quadrature.truncation_radius,
                "radial_nodes": self.quadrature.radial_nodes,
                "angular_rule": self.quadrature.angular_rule,
                "angular_nodes_or_samples": self.quadrature.angular_nodes_or_samples,
                "midfield_samples": self.quadrature.midfield_samples,
                "rel_tolerance": self.quadrature.rel_tolerance,
                "seed": self.quadrature.seed,
            },
            "evaluation_points": {"points": [[float(v) for v in p] for p in self.points]},
            "compute": {
                "gradient": self.compute_gradient,
                "hessian": self.compute_hessian,
                "residual": self.compute_residual,
            },
            "output": {"format": self.out_format},
        }
        if self.verify_block:
            out["verify"] = self.verify_block
        if self.norms_block:
            out["norms"] = self.norms_block
        if self.convergence_block:
            out["convergence"] = self.convergence_block
        return out


def build_source(name: str, params: dict):
    factory = CORPUS_FACTORIES.get(name)
    if factory is None:
        raise ConfigError(
            f"unknown source {name!r}; available: {sorted(CORPUS_FACTORIES)}",
            "source.name",
        )
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}", "source.params")
    except FreePoissonError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}", "source.params")


def _parse_points(block: dict, n: int) -> np.ndarray:
    _reject_unknown(block, _POINTS_KEYS, "evaluation_points")
    given = [k for k in _POINTS_KEYS if k in block]
    if len(given) != 1:
        raise ConfigError(
            f"exactly one of {sorted(_POINTS_KEYS)} required, got {given}",
            "evaluation_points",
        )
    if "points" in block:
        raw = block["points"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("expected a nonempty list of points",
                              "evaluation_points.points")
        pts = [_vector(p, n, f"evaluation_points.points[{i}]")
               for i, p in enumerate(raw)]
        return np.asarray(pts, dtype=float)
    if "grid" in block:
        grid = block["grid"]
        _reject_unknown(grid, _GRID_KEYS, "evaluation_points.grid")
        center = _vector(grid.get("center", [0.0] * n), n, "evaluation_points.grid.center")
        extent = _number(grid, "extent", "evaluation_points.grid", required=True)
        if extent <= 0:
            raise ConfigError("must be positive", "evaluation_points.grid.extent")
        counts = grid.get("counts")
        if not isinstance(counts, list) or len(counts) != n or \
                any(isinstance(c, bool) or not isinstance(c, int) or c < 1 for c in counts):
            raise ConfigError(f"expected a list of {n} positive integers",
                              "evaluation_points.grid.counts")
        axes = [np.linspace(c - extent, c + extent, k) if k > 1 else np.array([c])
                for c, k in zip(center, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    radial = block["radial"]
    _reject_unknown(radial, _RADIAL_KEYS, "evaluation_points.radial")
    radii = radial.get("radii")
    if not isinstance(radii, list) or not radii or \
            any(isinstance(r, bool) or not isinstance(r, (int, float)) or r < 0 for r in radii):
        raise ConfigError("expected a nonempty list of nonnegative numbers",
                          "evaluation_points.radial.radii")
    direction = np.zeros(n)
    direction[0] = 1.0
    if "direction" in radial:
        direction = np.asarray(
            _vector(radial["direction"], n, "evaluation_points.radial.direction")
        )
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise ConfigError("direction must be nonzero",
                              "evaluation_points.radial.direction")
        direction = direction / norm
    return np.asarray([r * direction for r in radii], dtype=float)


def parse_run_config(doc: dict) -> RunConfig:
    """Validate a configuration document; raise ConfigError with a path."""
    _reject_unknown(doc, _TOP_KEYS, "<top>")
    version = _number(doc, "schema_version", "<top>", default=SCHEMA_VERSION, integer=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", "schema_version")

    n = _number(doc, "dimension", "<top>", required=True, integer=True)
    if n < 3:
        raise ConfigError("dimension must be >= 3", "dimension")

    if "source" not in doc:
        raise ConfigError("missing required key", "source")
    src = doc["source"]
    _reject_unknown(src, _SOURCE_KEYS, "source")
    name = src.get("name")
    if not isinstance(name, str):
        raise ConfigError("missing or non-string source name", "source.name")
    params = src.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("expected an object", "source.params")
    source = build_source(name, params)  # validates

    quad_block = doc.get("quadrature", {})
    _reject_unknown(quad_block, _QUAD_KEYS, "quadrature")
    defaults = {
        "truncation_radius":
            max(8.0, 4.0 * source.support_radius)
            if math.isfinite(source.support_radius) else 8.0,
    }
    kwargs = dict(defaults)
    for key in _QUAD_KEYS:
        if key in quad_block:
            val = quad_block[key]
            if key == "angular_rule":
                if not isinstance(val, str):
                    raise ConfigError("expected a string", "quadrature.angular_rule")
            elif isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError("expected a number", f"quadrature.{key}")
            if key in ("radial_nodes", "angular_nodes_or_samples",
                       "midfield_samples", "seed"):
                val = _number(quad_block, key, "quadrature", integer=True, minimum=0)
            kwargs[key] = val
    try:
        quad = QuadratureConfig(**kwargs)
    except FreePoissonError as exc:
        raise ConfigError(str(exc), "quadrature")

    if "evaluation_points" not in doc:
        raise ConfigError("missing required key", "evaluation_points")
    points = _parse_points(doc["evaluation_points"], n)
    limit = quad.truncation_radius / 2.0
    for i, p in enumerate(points):
        if float(np.linalg.norm(p)) >= limit:
            raise ConfigError(
                f"|x| = {float(np.linalg.norm(p)):.6g} exceeds "
                f"truncation_radius/2 = {limit:.6g}; enlarge quadrature."
                "truncation_radius", f"evaluation_points[{i}]",
            )

    compute = doc.get("compute", {})
    _reject_unknown(compute, _COMPUTE_KEYS, "compute")
    for key in compute:
        if not isinstance(compute[key], bool):
            raise ConfigError("expected a boolean", f"compute.{key}")

    output = doc.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    fmt = output.get("format", "both")
    if fmt not in _FORMATS:
        raise ConfigError(f"format must be one of {_FORMATS}", "output.format")

    verify_block = doc.get("verify", {})
    if verify_block:
        _reject_unknown(verify_block, _VERIFY_KEYS, "verify")
        if "mean_value" in verify_block:
            _reject_unknown(verify_block["mean_value"], _MEAN_VALUE_KEYS,
                            "verify.mean_value")
    norms_block = doc.get("norms", {})
    if norms_block:
        _reject_unknown(norms_block, _NORMS_KEYS, "norms")
    conv_block = doc.get("convergence", {})
    if conv_block:
        _reject_unknown(conv_block, _CONV_KEYS, "convergence")

    return RunConfig(
        dimension=n,
        source_name=name,
        source_params=dict(params),
        quadrature=quad,
        points=points,
        compute_gradient=bool(compute.get("gradient", True)),
        compute_hessian=bool(compute.get("hessian", False)),
        compute_residual=bool(compute.get("residual", False)),
        out_format=fmt,
        verify_block=dict(verify_block),
        norms_block=dict(norms_block),
        convergence_block=dict(conv_block),
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    return parse_run_config(doc)


# ---------------------------------------------------------------------------
# Output helpers (atomic, deterministic)
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as handle:
        handle.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: Path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

@dataclass
class ResultRecord:
    """Per-point solve output.  ``wall_time`` stays in memory (stderr
    logging only): deterministic output files must not depend on it."""

    index: int
    point: np.ndarray
    u: float
    u_stat_error: float
    u_tail_bound: float
    nodes_used: int
    grad: np.ndarray | None = None
    grad_stat_error: float | None = None
    grad_tail_bound: float | None = None
    hess: np.ndarray | None = None
    hess_stat_error: float | None = None
    hess_tail_bound: float | None = None
    trace_residual: float | None = None
    wall_time: float = 0.0


def _solve_one(source, n, point, quad, rc: RunConfig, index: int) -> ResultRecord:
    started = time.perf_counter()
    pot = eval_potential(source, n, point, quad)
    record = ResultRecord(
        index=index, point=point,
        u=pot.u, u_stat_error=pot.statistical_error,
        u_tail_bound=pot.tail_bound, nodes_used=pot.nodes_used,
    )
    if rc.compute_gradient:
        g = eval_gradient(source, n, point, quad)
        record.grad = g.grad
        record.grad_stat_error = g.statistical_error
        record.grad_tail_bound = g.tail_bound
        record.nodes_used += g.nodes_used
    if rc.compute_hessian:
        h = eval_hessian(source, n, point, quad)
        record.hess = h.hess
        record.hess_stat_error = h.statistical_error
        record.hess_tail_bound = h.tail_bound
        record.nodes_used += h.nodes_used
        if rc.compute_residual:
            record.trace_residual = abs(float(np.trace(h.hess)) - h.f_at_point)
    record.wall_time = time.perf_counter() - started
    return record


def _csv_header(rc: RunConfig) -> list[str]:
    n = rc.dimension
    header = ["index"] + [f"x{i + 1}" for i in range(n)]
    header += ["u", "u_stat_error", "u_tail_bound"]
    if rc.compute_gradient:
        header += [f"grad_{i + 1}" for i in range(n)]
        header += ["grad_stat_error", "grad_tail_bound"]
    if rc.compute_hessian:
        header += [f"hess_{i + 1}_{j + 1}" for i in range(n) for j in range(n)]
        header += ["hess_stat_error", "hess_tail_bound"]
        if rc.compute_residual:
            header += ["trace_residual"]
    header += ["nodes_used"]
    return header


def _csv_row(rc: RunConfig, rec: ResultRecord) -> list:
    row: list = [rec.index] + [float(v) for v in rec.point]
    row += [rec.u, rec.u_stat_error, rec.u_tail_bound]
    if rc.compute_gradient:
        row += [float(v) for v in rec.grad]
        row += [rec.grad_stat_error, rec.grad_tail_bound]
    if rc.compute_hessian:
        row += [float(v) for v in rec.hess.ravel()]
        row += [rec.hess_stat_error, rec.hess_tail_bound]
        if rc.compute_residual:
            row += [rec.trace_residual]
    row += [rec.nodes_used]
    return row


def cmd_solve(rc: RunConfig, outdir: Path, threads: int) -> int:
    source = build_source(rc.source_name, rc.source_params)
    n, quad = rc.dimension, rc.quadrature

    report = check_conditions(source, n, quad)
    need_gradient_condition = rc.compute_hessian
    rejected = not report.f_condition_finite or (
        need_gradient_condition
        and (not source.is_c1 or not report.gradf_condition_finite)
    )
    if rejected:
        _write_json(outdir / "admissibility.json", report.as_dict())
        print(
            f"admissibility: source {source.name!r} rejected in dimension {n} "
            f"(f condition finite: {report.f_condition_finite}, grad condition "
            f"finite: {report.gradf_condition_finite}, C1: {source.is_c1})",
            file=sys.stderr,
        )
        return EXIT_ADMISSIBILITY

    started = time.perf_counter()
    records: list[ResultRecord | None] = [None] * len(rc.points)

    def work(i: int):
        records[i] = _solve_one(source, n, rc.points[i], quad, rc, i)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(rc.points))))
    else:
        for i in range(len(rc.points)):
            work(i)
    elapsed = time.perf_counter() - started

    if rc.out_format in ("csv", "both"):
        _write_csv(
            outdir / "results.csv", _csv_header(rc),
            [_csv_row(rc, rec) for rec in records],
        )
    if rc.out_format in ("json", "both"):
        summary = {
            "record_schema_version": RECORD_SCHEMA_VERSION,
            "config": rc.canonical_dict(),
            "num_points": len(records),
            "aggregates": {
                "max_stat_error": max(r.u_stat_error for r in records),
                "max_tail_bound": max(r.u_tail_bound for r in records),
                "total_nodes": sum(r.nodes_used for r in records),
            },
            "admissibility": report.as_dict(),
        }
        _write_json(outdir / "summary.json", summary)
    print(
        f"solve: {len(records)} point(s) in {elapsed:.2f}s "
        f"(mean {elapsed / max(len(records), 1):.3f}s/point)",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(rc: RunConfig, outdir: Path, threads: int) -> int:
    source = build_source(rc.source_name, rc.source_params)
    n, quad = rc.dimension, rc.quadrature
    block = rc.verify_block
    mode = block.get("mode", "full")
    if mode not in ("full", "harness"):
        raise ConfigError("mode must be 'full' or 'harness'", "verify.mode")

    failures: list[str] = []
    report: dict = {"mode": mode, "dimension": n}

    dims = block.get("dimensions", [n])
    trials = int(block.get("harness_trials", 100_000))
    harness_out = []
    for dim in dims:
        res = inequality_harness(int(dim), trials=trials, seed=quad.seed)
        harness_out.append({
            "dimension": res.dimension,
            "trials": res.trials,
            "checks": res.checks,
            "violations": res.violations,
        })
        if not res.passed:
            failures.append(
                f"kernel bound violations in dimension {res.dimension}: "
                f"{len(res.violations)} witness(es)"
            )
    report["harness"] = harness_out

    if mode == "full":
        rep = check_conditions(source, n, quad)
        if not rep.f_condition_finite:
            _write_json(outdir / "admissibility.json", rep.as_dict())
            print(f"admissibility: source {source.name!r} rejected", file=sys.stderr)
            return EXIT_ADMISSIBILITY

        points = block.get("points")
        pts = np.asarray(points, dtype=float) if points else rc.points[:3]
        h_values = tuple(block.get("h_values", (0.2, 0.1, 0.05, 0.025)))
        include_trace = source.is_c1 and rep.gradf_condition_finite
        suite = residual_suite(source, n, pts, quad, h_values, include_trace)
        report["residuals"] = suite.as_dict()
        for entry in suite.entries:
            budget = 5e-3 * max(1.0, abs(entry.f_value)) + (entry.trace_stat_error or 0.0)
            if entry.trace_residual is not None and entry.trace_residual > budget:
                failures.append(
                    f"trace residual {entry.trace_residual:.3e} exceeds budget "
                    f"{budget:.3e} at point {list(map(float, entry.point))}"
                )
            floor = 10.0 * (entry.trace_stat_error or quad.rel_tolerance)
            if entry.slope is not None and max(entry.fd_residuals) > floor \
                    and entry.slope < 1.8:
                failures.append(
                    f"finite-difference convergence slope {entry.slope:.2f} < 1.8 "
                    f"at point {list(map(float, entry.point))}"
                )

        mv = block.get("mean_value")
        if mv:
            center = mv.get("center", [0.0] * n)
            overlap = bool(mv.get("allow_source_overlap", False))
            mv_out = []
            for radius in mv.get("radii", [0.25]):
                res = mean_value_check(
                    source, n, center, float(radius), quad,
                    allow_source_overlap=overlap,
                )
                mv_out.append(res.as_dict())
                if res.harmonic_region:
                    for kind, disc in (("sphere", res.sphere_discrepancy),
                                       ("ball", res.ball_discrepancy)):
                        if abs(disc) > res.tolerance_budget:
                            failures.append(
                                f"mean-value {kind} discrepancy {disc:.3e} exceeds "
                                f"budget {res.tolerance_budget:.3e} at radius {radius}"
                            )
            report["mean_value"] = mv_out

    report["failures"] = failures
    report["passed"] = not failures
    _write_json(outdir / "verify_report.json", report)
    for line in failures:
        print(f"verify: FAIL {line}", file=sys.stderr)
    print(f"verify: {'PASS' if not failures else 'FAIL'} "
          f"({len(failures)} failure(s))", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_VERIFICATION


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def cmd_norms(rc: RunConfig, outdir: Path, threads: int) -> int:
    source = build_source(rc.source_name, rc.source_params)
    n, quad = rc.dimension, rc.quadrature
    block = rc.norms_block
    p = float(block.get("p", n / 2.0))
    q_raw = block.get("q", 1.0)
    q = math.inf if q_raw in ("inf", "Infinity") else float(q_raw)
    method = block.get("method")

    try:
        params = LorentzParams(p, q)
        lorentz = lorentz_quasi_norm(source, n, params, quad, method=method)
        solution = build_normalized_solution(source, n, quad)
    except AdmissibilityError as exc:
        print(f"admissibility: {exc}", file=sys.stderr)
        if exc.report is not None:
            _write_json(outdir / "admissibility.json", exc.report.as_dict())
        return EXIT_ADMISSIBILITY

    holder_bound = kernel_weak_quasi_norm(n) * solution.lorentz_norm
    # equality is attained for co-monotone radial pairs; allow roundoff
    holder_ok = abs(solution.c) <= holder_bound * (1.0 + 1e-6) + 1e-12

    out = {
        "dimension": n,
        "source": source.name,
        "lorentz": lorentz.as_dict(),
        "normalized_solution": solution.as_dict(),
        "kernel_weak_quasi_norm": kernel_weak_quasi_norm(n),
        "holder_bound_on_c": holder_bound,
        "holder_check_passed": holder_ok,
    }
    _write_json(outdir / "norms.json", out)
    if not holder_ok:
        print(
            f"norms: FAIL |c| = {abs(solution.c):.6e} exceeds the pairing bound "
            f"{holder_bound:.6e}", file=sys.stderr,
        )
        return EXIT_VERIFICATION
    print("norms: PASS", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def cmd_convergence(rc: RunConfig, outdir: Path, threads: int) -> int:
    source = build_source(rc.source_name, rc.source_params)
    n, quad = rc.dimension, rc.quadrature
    block = rc.convergence_block

    report = check_conditions(source, n, quad)
    if not report.f_condition_finite:
        _write_json(outdir / "admissibility.json", report.as_dict())
        print(f"admissibility: source {source.name!r} rejected", file=sys.stderr)
        return EXIT_ADMISSIBILITY

    point = np.asarray(
        block.get("point", rc.points[0]), dtype=float
    )
    radial_sweep = [int(v) for v in block.get("radial_nodes", [8, 16, 32, 64])]
    sample_sweep = [int(v) for v in
                    block.get("midfield_samples", [12500, 25000, 50000, 100000, 200000])]

    if source.is_radial:
        oracle = float(radial_reference_potential(
            source, n, [float(np.linalg.norm(point))]
        )[0])
        error_kind = "radial_oracle"
    else:
        finest = eval_potential(
            source, n, point,
            quad.replace(radial_nodes=max(radial_sweep),
                         midfield_samples=max(sample_sweep)),
        )
        oracle = finest.u
        error_kind = "finest_run"

    rows = []
    started = time.perf_counter()
    for nodes in radial_sweep:
        res = eval_potential(source, n, point, quad.replace(radial_nodes=nodes))
        rows.append(["radial_nodes", nodes, res.u, abs(res.u - oracle),
                     res.statistical_error, res.tail_bound, res.nodes_used])
    for samples in sample_sweep:
        res = eval_potential(source, n, point, quad.replace(midfield_samples=samples))
        rows.append(["midfield_samples", samples, res.u, abs(res.u - oracle),
                     res.statistical_error, res.tail_bound, res.nodes_used])
    elapsed = time.perf_counter() - started

    header = ["sweep", "value", "u", "abs_error", "statistical_error",
              "tail_bound", "nodes_used"]
    if rc.out_format in ("csv", "both"):
        _write_csv(outdir / "convergence.csv", header, rows)
    if rc.out_format in ("json", "both"):
        _write_json(outdir / "convergence.json", {
            "config": rc.canonical_dict(),
            "point": [float(v) for v in point],
            "error_kind": error_kind,
            "reference_value": oracle,
            "rows": [dict(zip(header, row)) for row in rows],
        })
    print(f"convergence: {len(rows)} run(s) in {elapsed:.2f}s", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "norms": cmd_norms,
    "convergence": cmd_convergence,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freepoisson",
        description="Free-space Poisson solver via the Newtonian potential.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "evaluate the potential and derivatives on a point set"),
        ("verify", "run residual, mean-value and kernel-bound checks"),
        ("norms", "Lorentz diagnostics and the normalized-solution bound"),
        ("convergence", "error versus quadrature budget sweeps"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the quadrature seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for point evaluation (results are "
                            "independent of this setting)")
        p.add_argument("--format", choices=list(_FORMATS), default=None,
                       help="override the output format")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rc = load_run_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            rc.quadrature = rc.quadrature.replace(seed=args.seed)
        if args.format is not None:
            rc.out_format = args.format
        return _COMMANDS[args.command](rc, Path(args.out), args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdmissibilityError as exc:
        print(f"admissibility: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except FreePoissonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
