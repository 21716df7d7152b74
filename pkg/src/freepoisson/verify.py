"""Independent checks: residuals, mean-value property, kernel bounds.

Every check here avoids the code path it certifies.  The finite
difference Laplacian uses only potential values; the mean-value check
uses only sphere and ball averages of potential values; the inequality
harness needs no quadrature at all.

Evaluation points of one stencil or averaging ball share a fixed
``singular_center``, hence one zone geometry and one Monte Carlo
sample set.  The shared midfield estimator is a finite sum of kernel
translates, harmonic off the sample points, so stencil differences and
sphere averages cancel its noise exactly rather than amplifying it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError
from .kernel import surface_area, unit_ball_volume
from .quadrature import (
    QuadratureConfig,
    _sphere_rule,
    default_config,
    eval_hessian,
    eval_potential,
)
from .sources import SourceFunction

_STREAM_HARNESS = 107

DEFAULT_H_VALUES = (0.2, 0.1, 0.05, 0.025)


# ---------------------------------------------------------------------------
# Finite-difference Laplacian residual
# ---------------------------------------------------------------------------

@dataclass
class PointResidual:
    """Residuals of Delta u = f at one point.

    ``fd_residuals[i]`` is |Delta_h u - f(x)| for ``h_values[i]`` using
    the (2n+1)-point central stencil; ``slope`` the least-squares slope
    of log residual against log h (None when residuals vanish);
    ``richardson_residual`` uses the last two h (ratio 2) to
    extrapolate the h^2 term away.  ``trace_residual`` is
    |trace(Hessian) - f(x)| from the direct second-derivative route,
    with its Monte Carlo error in ``trace_stat_error``.
    """

    point: np.ndarray
    f_value: float
    h_values: tuple[float, ...]
    fd_laplacians: list[float]
    fd_residuals: list[float]
    slope: float | None
    richardson_residual: float | None
    trace_residual: float | None = None
    trace_stat_error: float | None = None

    def as_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "f_value": self.f_value,
            "h_values": list(self.h_values),
            "fd_laplacians": self.fd_laplacians,
            "fd_residuals": self.fd_residuals,
            "slope": self.slope,
            "richardson_residual": self.richardson_residual,
            "trace_residual": self.trace_residual,
            "trace_stat_error": self.trace_stat_error,
        }


@dataclass
class ResidualReport:
    """Collection of per-point residual diagnostics."""

    entries: list[PointResidual] = field(default_factory=list)

    @property
    def max_trace_residual(self) -> float:
        vals = [e.trace_residual for e in self.entries if e.trace_residual is not None]
        return max(vals) if vals else 0.0

    @property
    def min_slope(self) -> float:
        vals = [e.slope for e in self.entries if e.slope is not None]
        return min(vals) if vals else math.inf

    def as_dict(self) -> dict:
        return {"entries": [e.as_dict() for e in self.entries]}


def fd_laplacian_residual(
    f: SourceFunction,
    n: int,
    x,
    cfg: QuadratureConfig | None = None,
    h_values: tuple[float, ...] = DEFAULT_H_VALUES,
    include_trace: bool = True,
) -> PointResidual:
    """Check Delta u = f at x by central finite differences of u.

    All 2n+1 stencil evaluations (for every h) share the near ball
    B(x, split_radius) and one sample set, so the finite difference
    sees a fixed smooth field; residuals then decrease like h^2 until
    the deterministic quadrature floor.  Requires max(h) < split_radius.
    """
    cfg = cfg if cfg is not None else default_config(f)
    x = np.asarray(x, dtype=float)
    h_values = tuple(sorted((float(h) for h in h_values), reverse=True))
    if not h_values:
        raise DomainError("need at least one step size")
    if h_values[0] >= cfg.split_radius:
        raise PreconditionError(
            f"largest step {h_values[0]} must stay below split_radius "
            f"{cfg.split_radius} so the stencil stays in the near ball"
        )

    u_center = eval_potential(f, n, x, cfg, singular_center=x).u
    f_value = float(f.eval_f(x[None, :])[0])

    laplacians, residuals = [], []
    for h in h_values:
        acc = -2.0 * n * u_center
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            acc += eval_potential(f, n, x + e, cfg, singular_center=x).u
            acc += eval_potential(f, n, x - e, cfg, singular_center=x).u
        lap = acc / (h * h)
        laplacians.append(lap)
        residuals.append(abs(lap - f_value))

    slope = None
    pos = [(h, r) for h, r in zip(h_values, residuals) if r > 0.0]
    if len(pos) >= 2:
        hs = np.log([p[0] for p in pos])
        rs = np.log([p[1] for p in pos])
        slope = float(np.polyfit(hs, rs, 1)[0])

    richardson = None
    if len(h_values) >= 2 and abs(h_values[-2] / h_values[-1] - 2.0) < 1e-9:
        extrapolated = (4.0 * laplacians[-1] - laplacians[-2]) / 3.0
        richardson = abs(extrapolated - f_value)

    trace_res = trace_se = None
    if include_trace and f.is_c1:
        hess = eval_hessian(f, n, x, cfg)
        trace_res = abs(float(np.trace(hess.hess)) - f_value)
        trace_se = hess.trace_stat_error

    return PointResidual(
        point=x, f_value=f_value, h_values=h_values,
        fd_laplacians=laplacians, fd_residuals=residuals,
        slope=slope, richardson_residual=richardson,
        trace_residual=trace_res, trace_stat_error=trace_se,
    )


def residual_suite(f: SourceFunction, n: int, points, cfg: QuadratureConfig | None = None,
                   h_values: tuple[float, ...] = DEFAULT_H_VALUES,
                   include_trace: bool = True) -> ResidualReport:
    """Run ``fd_laplacian_residual`` over a family of points."""
    report = ResidualReport()
    for x in points:
        report.entries.append(
            fd_laplacian_residual(f, n, x, cfg, h_values, include_trace)
        )
    return report


# ---------------------------------------------------------------------------
# Mean-value property
# ---------------------------------------------------------------------------

@dataclass
class MeanValueReport:
    """Sphere and ball averages of u around a center, against u(center).

    In a source-free region both discrepancies vanish (harmonicity).
    With ``allow_source_overlap`` the expected leading terms are the
    Taylor values (radius^2 / (2n)) f(center) for the sphere and
    (radius^2 / (2(n+2))) f(center) for the ball, both O(radius^2).
    ``tolerance_budget`` is twice the configured relative tolerance
    scaled by max(1, |u(center)|).
    """

    dimension: int
    center: np.ndarray
    radius: float
    u_center: float
    sphere_average: float
    ball_average: float
    sphere_discrepancy: float
    ball_discrepancy: float
    harmonic_region: bool
    f_center: float
    taylor_sphere: float | None
    taylor_ball: float | None
    tolerance_budget: float

    def as_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "center": [float(v) for v in self.center],
            "radius": self.radius,
            "u_center": self.u_center,
            "sphere_average": self.sphere_average,
            "ball_average": self.ball_average,
            "sphere_discrepancy": self.sphere_discrepancy,
            "ball_discrepancy": self.ball_discrepancy,
            "harmonic_region": self.harmonic_region,
            "f_center": self.f_center,
            "taylor_sphere": self.taylor_sphere,
            "taylor_ball": self.taylor_ball,
            "tolerance_budget": self.tolerance_budget,
        }


def mean_value_check(
    f: SourceFunction,
    n: int,
    center,
    radius: float,
    cfg: QuadratureConfig | None = None,
    *,
    allow_source_overlap: bool = False,
    sphere_nodes: int = 8,
    radial_nodes: int = 6,
) -> MeanValueReport:
    """Compare u(center) with its sphere and ball averages.

    Without ``allow_source_overlap`` the averaging ball must be
    disjoint from supp f (u harmonic there, averages must agree).
    With it, the report carries the interior Taylor predictions
    instead.  ``radius`` must stay below split_radius so all averaged
    points share the near ball around the center.
    """
    from numpy.polynomial.legendre import leggauss

    cfg = cfg if cfg is not None else default_config(f)
    center = np.asarray(center, dtype=float)
    radius = float(radius)
    if not 0.0 < radius < cfg.split_radius:
        raise PreconditionError(
            f"averaging radius must lie in (0, split_radius={cfg.split_radius})"
        )

    dist_to_support = float(np.linalg.norm(center)) - f.support_radius
    harmonic = math.isfinite(f.support_radius) and dist_to_support > radius
    if not harmonic and not allow_source_overlap:
        raise PreconditionError(
            "averaging ball meets the source support; u is not harmonic "
            "there (pass allow_source_overlap=True to compare against the "
            "interior Taylor prediction instead)"
        )

    omega = surface_area(n)
    dirs, w_ang, _ = _sphere_rule(n, cfg.replace(angular_nodes_or_samples=sphere_nodes))

    u_center = eval_potential(f, n, center, cfg, singular_center=center).u

    def sphere_integral(rho: float) -> float:
        total = 0.0
        for d, w in zip(dirs, w_ang):
            total += w * eval_potential(f, n, center + rho * d, cfg,
                                        singular_center=center).u
        return total

    sphere_avg = sphere_integral(radius) / omega

    t, wt = leggauss(radial_nodes)
    rho_nodes = 0.5 * (t + 1.0) * radius
    rho_weights = 0.5 * wt * radius
    ball_integral = 0.0
    for rho, w in zip(rho_nodes, rho_weights):
        ball_integral += w * rho ** (n - 1) * sphere_integral(rho)
    ball_avg = ball_integral / (unit_ball_volume(n) * radius**n)

    f_center = float(f.eval_f(center[None, :])[0])
    return MeanValueReport(
        dimension=n, center=center, radius=radius,
        u_center=u_center,
        sphere_average=sphere_avg, ball_average=ball_avg,
        sphere_discrepancy=sphere_avg - u_center,
        ball_discrepancy=ball_avg - u_center,
        harmonic_region=harmonic,
        f_center=f_center,
        taylor_sphere=None if harmonic else radius**2 * f_center / (2.0 * n),
        taylor_ball=None if harmonic else radius**2 * f_center / (2.0 * (n + 2)),
        tolerance_budget=2.0 * cfg.rel_tolerance * max(1.0, abs(u_center)),
    )


# ---------------------------------------------------------------------------
# Kernel lower-bound inequality harness
# ---------------------------------------------------------------------------

@dataclass
class HarnessResult:
    """Counts and witnesses from randomized kernel-bound trials.

    ``checks`` maps inequality name to trial count; ``violations``
    holds up to ten witness dictionaries (empty on success).
    Comparisons allow relative slack 1e-12 for floating point, since
    several bounds are attained with equality on the boundary of their
    hypotheses.
    """

    dimension: int
    trials: int
    checks: dict[str, int]
    violations: list[dict]

    @property
    def passed(self) -> bool:
        return not self.violations


_REL_SLACK = 1e-12


def _record_violations(result: HarnessResult, name: str, lhs, rhs, extras: dict):
    result.checks[name] = result.checks.get(name, 0) + lhs.size
    bad = np.nonzero(lhs < rhs * (1.0 - _REL_SLACK))[0]
    for i in bad[:10]:
        witness = {"check": name, "lhs": float(lhs[i]), "rhs": float(rhs[i])}
        witness.update({k: float(v[i]) for k, v in extras.items()})
        result.violations.append(witness)


def inequality_harness(n: int, trials: int = 100_000, seed: int = 0) -> HarnessResult:
    """Randomized verification of the kernel lower bounds in R^n.

    Geometry reduces to the plane spanned by x and y, so a
    configuration is (|x|, |y|, cos angle).  Two hypothesis families:

    * potential tail: R log-uniform in [1e-2, 1e3], |x| < R/2,
      |y| >= R; checks |x-y| >= |y| - |x|, |x-y| >= |y|/2 and
      |x-y|^{n-2} >= c_1 (1 + |y|^{n-2}) with
      c_1 = min(R^{n-2}, 1)/2^{n-1}.
    * derivative tail: M log-uniform in (1/2, 1e3], R > 2M, |x| < M,
      |y| >= R; checks the same triangle facts and
      |x-y|^{n-1} >= 2^{-n} (1 + |y|^{n-1}).

    Deterministic probes at distance 1e-9 from each hypothesis
    boundary are appended (several bounds are tight exactly there).
    """
    if n < 3:
        raise DomainError(f"harness requires n >= 3, got {n}")
    if trials < 1:
        raise DomainError("trials must be positive")
    rng = np.random.default_rng([seed, _STREAM_HARNESS, n])
    result = HarnessResult(dimension=n, trials=trials, checks={}, violations=[])

    def dist(xn, yn, t):
        return np.sqrt(np.maximum(xn * xn + yn * yn - 2.0 * xn * yn * t, 0.0))

    # potential-tail family
    R = 10.0 ** rng.uniform(-2.0, 3.0, trials)
    xn = 0.5 * R * rng.random(trials)
    yn = R * 10.0 ** rng.uniform(0.0, 2.0, trials)
    t = rng.uniform(-1.0, 1.0, trials)
    d = dist(xn, yn, t)
    c1 = np.minimum(R ** (n - 2), 1.0) / 2.0 ** (n - 1)
    extras = {"R": R, "x_norm": xn, "y_norm": yn, "cos_angle": t}
    _record_violations(result, "triangle", d, yn - xn, extras)
    _record_violations(result, "half_far_point", d, 0.5 * yn, extras)
    _record_violations(result, "c1_lower_bound", d ** (n - 2), c1 * (1.0 + yn ** (n - 2)), extras)

    # derivative-tail family
    M = 10.0 ** rng.uniform(math.log10(0.5) + 1e-6, 3.0, trials)
    R2 = 2.0 * M * 10.0 ** rng.uniform(0.0, 1.0, trials)
    xn2 = M * rng.random(trials)
    yn2 = R2 * 10.0 ** rng.uniform(0.0, 2.0, trials)
    t2 = rng.uniform(-1.0, 1.0, trials)
    d2 = dist(xn2, yn2, t2)
    extras2 = {"M": M, "R": R2, "x_norm": xn2, "y_norm": yn2, "cos_angle": t2}
    _record_violations(result, "triangle_deriv", d2, yn2 - xn2, extras2)
    _record_violations(result, "half_far_point_deriv", d2, 0.5 * yn2, extras2)
    _record_violations(
        result, "two_pow_lower_bound",
        d2 ** (n - 1), 2.0 ** (-n) * (1.0 + yn2 ** (n - 1)), extras2,
    )

    # boundary probes
    eps = 1e-9
    probe_R = np.array([1e-2, 1.0, 1e3])
    for tt in (-1.0 + eps, 0.0, 1.0 - eps):
        xp = 0.5 * probe_R * (1.0 - eps)
        yp = probe_R * (1.0 + eps)
        dp = dist(xp, yp, np.full_like(xp, tt))
        c1p = np.minimum(probe_R ** (n - 2), 1.0) / 2.0 ** (n - 1)
        _record_violations(
            result, "boundary_probe_c1",
            dp ** (n - 2), c1p * (1.0 + yp ** (n - 2)),
            {"R": probe_R, "x_norm": xp, "y_norm": yp,
             "cos_angle": np.full_like(xp, tt)},
        )
        Mp = np.array([0.5 * (1.0 + eps), 1.0, 1e3])
        Rp = 2.0 * Mp * (1.0 + eps)
        xp2 = Mp * (1.0 - eps)
        yp2 = Rp.copy()
        dp2 = dist(xp2, yp2, np.full_like(xp2, tt))
        _record_violations(
            result, "boundary_probe_two_pow",
            dp2 ** (n - 1), 2.0 ** (-n) * (1.0 + yp2 ** (n - 1)),
            {"M": Mp, "R": Rp, "x_norm": xp2, "y_norm": yp2,
             "cos_angle": np.full_like(xp2, tt)},
        )

    return result
