"""Volume quadrature for the Newtonian potential and its derivatives.

The convolution u = E_n * f over R^n is split into three zones around
an evaluation point x:

* near: a ball B(center, split_radius) containing x, integrated in
  polar coordinates about x.  The r^{n-1} volume factor cancels the
  kernel singularity exactly, so the radial integrand is smooth and a
  Gauss-Legendre rule applies.  ``center`` defaults to x; passing a
  fixed ``singular_center`` lets several nearby evaluation points share
  one zone geometry (finite-difference stencils, sphere averages).
* mid: B(0, truncation_radius) minus the near ball, by stratified
  Monte Carlo over fixed-width radial shells with two-stage (pilot
  then Neyman) sample allocation.  All randomness is drawn from
  streams keyed by (seed, stream, shell, stage) and never by x, so
  every evaluation point sees the same sample set.
* far: never sampled.  A certified analytic bound on the discarded
  tail is returned instead, from the kernel lower bounds
  |x-y|^{n-2} >= c_1 (1 + |y|^{n-2}) with
  c_1 = min(R^{n-2}, 1) / 2^{n-1} for |x| < R/2, and
  |x-y|^{n-1} >= 2^{-n} (1 + |y|^{n-1}) for first and second
  derivatives.

``statistical_error`` fields report three standard errors of the
Monte Carlo part; deterministic (Gauss) contributions carry none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import AdmissibilityError, DomainError, PreconditionError
from . import kernel as _kernel
from .kernel import kernel_gradients, kernel_values, surface_area
from .sources import SourceFunction, check_conditions

# RNG stream labels (shared registry across modules; keep distinct).
_STREAM_MID_PILOT = 101
_STREAM_MID_MAIN = 102
_STREAM_NEAR_SPHERE = 103

# Radial strata have fixed width so that enlarging the truncation radius
# only appends shells; for compactly supported sources the appended
# shells are inert and the result is bit-identical.
SHELL_WIDTH = 0.125
PILOT_PER_SHELL = 24
MIN_MAIN_PER_SHELL = 8

_ANGULAR_RULES = ("product_gauss", "monte_carlo")


@dataclass(frozen=True)
class QuadratureConfig:
    """Zone decomposition parameters.

    ``angular_nodes_or_samples`` is the polar-node count of the product
    rule in three dimensions (the azimuthal count is twice that) and
    the direction-sample count of the Monte Carlo sphere rule
    otherwise.  ``rel_tolerance`` is the accuracy target used by
    consistency checks, not a hard guarantee.
    """

    split_radius: float = 0.5
    truncation_radius: float = 8.0
    radial_nodes: int = 64
    angular_rule: str = "product_gauss"
    angular_nodes_or_samples: int = 32
    midfield_samples: int = 200_000
    rel_tolerance: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.angular_rule not in _ANGULAR_RULES:
            raise DomainError(
                f"angular_rule must be one of {_ANGULAR_RULES}, got {self.angular_rule!r}"
            )
        if not (0.0 < self.split_radius < self.truncation_radius):
            raise DomainError(
                "need 0 < split_radius < truncation_radius, got "
                f"{self.split_radius} and {self.truncation_radius}"
            )
        if self.radial_nodes < 2:
            raise DomainError("radial_nodes must be >= 2")
        if self.angular_nodes_or_samples < 4:
            raise DomainError("angular_nodes_or_samples must be >= 4")
        if self.midfield_samples < 100:
            raise DomainError("midfield_samples must be >= 100")
        if self.rel_tolerance <= 0:
            raise DomainError("rel_tolerance must be positive")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DomainError("seed must be a nonnegative integer")

    def replace(self, **overrides) -> "QuadratureConfig":
        return replace(self, **overrides)


def default_config(f: SourceFunction | None = None, **overrides) -> QuadratureConfig:
    """Default configuration; truncation covers 4x a finite support."""
    trunc = 8.0
    if f is not None and math.isfinite(f.support_radius):
        trunc = max(8.0, 4.0 * f.support_radius)
    base = QuadratureConfig(truncation_radius=trunc)
    return base.replace(**overrides) if overrides else base


@dataclass(frozen=True)
class TailCertificate:
    """Analytic bound on the contribution discarded beyond the
    truncation radius.  Valid for evaluation points with
    |x| < truncation_radius / 2; for ``kind`` other than "value" the
    bound is per derivative component and requires truncation_radius
    greater than 1."""

    truncation_radius: float
    c1: float
    weighted_tail: float
    bound: float
    kind: str = "value"


@dataclass
class PotentialResult:
    """One evaluation of the potential or a derivative.

    Unused slots are None (``eval_potential`` fills only ``u``, and so
    on).  ``statistical_error`` is three standard errors of the Monte
    Carlo zones, maximized over components; per-component values sit in
    ``component_stat_errors``.  ``tail_bound`` certifies the truncation
    (per component for derivatives).  ``nodes_used`` counts integrand
    evaluations across zones and stages.
    """

    point: np.ndarray
    u: float | None
    grad: np.ndarray | None
    hess: np.ndarray | None
    tail_bound: float
    statistical_error: float
    nodes_used: int
    component_stat_errors: np.ndarray | None = None
    trace_stat_error: float | None = None
    f_at_point: float | None = None


# ---------------------------------------------------------------------------
# Sphere rules
# ---------------------------------------------------------------------------

def _sphere_rule(n: int, cfg: QuadratureConfig):
    """Directions and weights integrating over the unit sphere in R^n.

    Returns (dirs, weights, stochastic).  Weights sum to the sphere
    measure.  The product Gauss rule exists only in three dimensions
    (Gauss-Legendre in the polar cosine, where it absorbs the sine
    weight exactly, times a uniform azimuthal rule); other dimensions
    fall back to seeded Monte Carlo directions.
    """
    omega = surface_area(n)
    if n == 3 and cfg.angular_rule == "product_gauss":
        k = cfg.angular_nodes_or_samples
        t, wt = leggauss(k)
        m_phi = 2 * k
        phi = 2.0 * np.pi * (np.arange(m_phi) + 0.5) / m_phi
        sin_theta = np.sqrt(1.0 - t * t)
        dirs = np.empty((k * m_phi, 3))
        dirs[:, 0] = np.outer(sin_theta, np.cos(phi)).ravel()
        dirs[:, 1] = np.outer(sin_theta, np.sin(phi)).ravel()
        dirs[:, 2] = np.repeat(t, m_phi)
        weights = np.repeat(wt, m_phi) * (2.0 * np.pi / m_phi)
        return dirs, weights, False
    m = cfg.angular_nodes_or_samples
    rng = np.random.default_rng([cfg.seed, _STREAM_NEAR_SPHERE])
    z = rng.standard_normal((m, n))
    dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    weights = np.full(m, omega / m)
    return dirs, weights, True


# ---------------------------------------------------------------------------
# Near zone: polar Gauss-Legendre about x inside B(center, split_radius)
# ---------------------------------------------------------------------------

def _near_zone(kind: str, f: SourceFunction, n: int, x: np.ndarray,
               cfg: QuadratureConfig, center: np.ndarray):
    omega = surface_area(n)
    r = cfg.split_radius
    d = x - center
    dist = float(np.linalg.norm(d))

    dirs, w_ang, stochastic = _sphere_rule(n, cfg)
    m = dirs.shape[0]
    if dist == 0.0:
        rho_max = np.full(m, r)
    else:
        proj = dirs @ d
        rho_max = -proj + np.sqrt(proj * proj + r * r - dist * dist)

    t, wt = leggauss(cfg.radial_nodes)
    t01 = 0.5 * (t + 1.0)
    w01 = 0.5 * wt

    rho = t01[:, None] * rho_max[None, :]                 # (nr, m)
    pts = x[None, None, :] + rho[..., None] * dirs[None, :, :]
    nodes = rho.size

    # the polar volume factor rho^{n-1} cancels the kernel singularity,
    # leaving KERNEL_SIGN-scaled smooth radial integrands
    sign = _kernel.KERNEL_SIGN
    if kind == "value":
        fv = f.eval_f(pts)                                # (nr, m)
        per_dir = rho_max * np.einsum("i,ij,ij->j", w01, rho, fv)
        prefactor = sign / ((n - 2.0) * omega)
        estimate = prefactor * float(w_ang @ per_dir)
        se = 0.0
        if stochastic:
            se = abs(prefactor) * omega * float(np.std(per_dir, ddof=1)) / math.sqrt(m)
        return estimate, np.array([se]), nodes, None

    if kind == "gradient":
        fv = f.eval_f(pts)
        line = rho_max * np.einsum("i,ij->j", w01, fv)    # (m,)
        per_dir = dirs * line[:, None]                    # (m, n)
        estimate = sign * (w_ang @ per_dir) / omega
        se = np.zeros(n)
        if stochastic:
            # equal weights omega/m make the estimator a plain sample mean
            se = np.std(per_dir, axis=0, ddof=1) / math.sqrt(m)
        return estimate, se, nodes, None

    # hessian: entries int dE_j(x-y) d_i f(y) dy; near-zone form
    # sign/omega * int_S omega_j * (int_0^rho_max d_i f(x + rho w) drho) dsigma
    gv = f.eval_grad_f(pts)                               # (nr, m, n)
    line_vec = rho_max[:, None] * np.einsum("i,ijk->jk", w01, gv)  # (m, n)
    estimate = sign * np.einsum("m,mi,mj->ij", w_ang, line_vec, dirs) / omega
    se = np.zeros((n, n))
    trace_se = 0.0
    if stochastic:
        per_dir = -line_vec[:, :, None] * dirs[:, None, :]        # (m, n, n)
        se = np.std(per_dir, axis=0, ddof=1) / math.sqrt(m)
        tr = np.einsum("mii->m", per_dir)
        trace_se = float(np.std(tr, ddof=1)) / math.sqrt(m)
    return estimate, se, nodes, trace_se


# ---------------------------------------------------------------------------
# Mid zone: stratified Monte Carlo over radial shells
# ---------------------------------------------------------------------------

def _shell_edges(truncation_radius: float) -> np.ndarray:
    k = int(math.ceil(truncation_radius / SHELL_WIDTH - 1e-12))
    edges = SHELL_WIDTH * np.arange(k + 1, dtype=float)
    edges[-1] = min(edges[-1], truncation_radius)
    if edges[-1] < truncation_radius:
        edges = np.append(edges, truncation_radius)
    return edges


def _shell_points(rng, n: int, a: float, b: float, m: int) -> np.ndarray:
    z = rng.standard_normal((m, n))
    dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    u = rng.random(m)
    radii = (a**n + u * (b**n - a**n)) ** (1.0 / n)
    return dirs * radii[:, None]


def _mid_integrand(kind: str, f: SourceFunction, n: int, x: np.ndarray,
                   center: np.ndarray, r: float, pts: np.ndarray) -> np.ndarray:
    """Per-sample integrand rows, zero inside the excluded near ball.

    Output width: 1 (value), n (gradient), n^2 + 1 (hessian entries in
    row-major order with the trace samples appended)."""
    m = pts.shape[0]
    width = 1 if kind == "value" else (n if kind == "gradient" else n * n + 1)
    out = np.zeros((m, width))
    mask = np.linalg.norm(pts - center, axis=1) >= r
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return out
    sub = pts[idx]
    diffs = x[None, :] - sub
    if kind == "value":
        out[idx, 0] = kernel_values(n, diffs) * f.eval_f(sub)
    elif kind == "gradient":
        out[idx] = kernel_gradients(n, diffs) * f.eval_f(sub)[:, None]
    else:
        gf = f.eval_grad_f(sub)
        ge = kernel_gradients(n, diffs)
        prod = gf[:, :, None] * ge[:, None, :]
        out[idx, : n * n] = prod.reshape(idx.size, -1)
        out[idx, n * n] = np.einsum("mi,mi->m", gf, ge)
    return out


def _largest_remainder(weights: np.ndarray, budget: int) -> np.ndarray:
    """Deterministic apportionment of ``budget`` proportional to weights."""
    total = float(np.sum(weights))
    if budget <= 0 or total <= 0.0:
        return np.zeros(len(weights), dtype=int)
    raw = weights / total * budget
    base = np.floor(raw).astype(int)
    short = budget - int(np.sum(base))
    if short > 0:
        order = np.lexsort((np.arange(len(weights)), -(raw - base)))
        base[order[:short]] += 1
    return base


def _mid_zone(kind: str, f: SourceFunction, n: int, x: np.ndarray,
              cfg: QuadratureConfig, center: np.ndarray, anchor: np.ndarray):
    """Stratified estimate over B(0, R) minus B(center, split_radius).

    The pilot stage runs at ``anchor`` (not x): sample allocation then
    depends only on (f, cfg, center, anchor), so a family of evaluation
    points sharing a singular center also shares its sample set exactly.
    """
    omega = surface_area(n)
    edges = _shell_edges(cfg.truncation_radius)
    n_shells = len(edges) - 1
    width = 1 if kind == "value" else (n if kind == "gradient" else n * n + 1)

    volumes = omega / n * (edges[1:] ** n - edges[:-1] ** n)
    spread = np.zeros(n_shells)
    active = np.zeros(n_shells, dtype=bool)
    nodes = 0

    for k in range(n_shells):
        rng = np.random.default_rng([cfg.seed, _STREAM_MID_PILOT, k])
        pts = _shell_points(rng, n, edges[k], edges[k + 1], PILOT_PER_SHELL)
        g = _mid_integrand(kind, f, n, anchor, center, cfg.split_radius, pts)
        nodes += PILOT_PER_SHELL
        if np.any(g != 0.0):
            active[k] = True
            spread[k] = math.sqrt(float(np.mean(np.var(g, axis=0, ddof=1))))

    alloc = np.zeros(n_shells, dtype=int)
    if np.any(active):
        budget = cfg.midfield_samples
        floor = np.where(active, MIN_MAIN_PER_SHELL, 0)
        floor_total = int(np.sum(floor))
        if floor_total >= budget:
            alloc = np.maximum(_largest_remainder(active.astype(float), budget), 2 * active)
        else:
            weights = np.where(active, volumes * spread, 0.0)
            if not np.any(weights > 0.0):
                weights = np.where(active, volumes, 0.0)
            alloc = floor + _largest_remainder(weights, budget - floor_total)

    total = np.zeros(width)
    variance = np.zeros(width)
    for k in range(n_shells):
        m = int(alloc[k])
        if m == 0:
            continue
        rng = np.random.default_rng([cfg.seed, _STREAM_MID_MAIN, k])
        pts = _shell_points(rng, n, edges[k], edges[k + 1], m)
        g = _mid_integrand(kind, f, n, x, center, cfg.split_radius, pts)
        nodes += m
        total += volumes[k] * np.mean(g, axis=0)
        if m >= 2:
            variance += volumes[k] ** 2 * np.var(g, axis=0, ddof=1) / m

    se = np.sqrt(variance)
    if kind == "value":
        return float(total[0]), se, nodes, None
    if kind == "gradient":
        return total, se, nodes, None
    hess = total[: n * n].reshape(n, n)
    return hess, se[: n * n].reshape(n, n), nodes, float(se[n * n])


# ---------------------------------------------------------------------------
# Far zone: certified analytic tail bounds (never sampled)
# ---------------------------------------------------------------------------

def _weighted_radial_tail(profile, n: int, power: int, radius: float) -> float:
    """omega * int_radius^inf r^{n-1} profile(r) / (1 + r^power) dr."""
    omega = surface_area(n)
    val, _ = integrate.quad(
        lambda rr: omega * rr ** (n - 1) * float(profile(np.asarray(rr))) / (1.0 + rr**power),
        radius, np.inf, limit=400,
    )
    return val


def tail_certificate(f: SourceFunction, n: int, cfg: QuadratureConfig,
                     kind: str = "value") -> TailCertificate:
    """Certified bound on the truncated far-field contribution.

    For ``kind="value"`` the bound is
    weighted_tail / ((n-2) * omega * c1); for "gradient" and "hessian"
    it is 2^n * int_R^inf r^{n-1} profile(r) / (1 + r^{n-1}) dr per
    component, with the gradient envelope of f in the hessian case.
    Compact support inside the truncation ball certifies a zero tail
    without quadrature.
    """
    if kind not in ("value", "gradient", "hessian"):
        raise DomainError(f"unknown tail kind {kind!r}")
    if n < 3:
        raise DomainError(f"tail certificates require n >= 3, got {n}")
    R = cfg.truncation_radius
    omega = surface_area(n)
    c1 = min(R ** (n - 2), 1.0) / 2.0 ** (n - 1)

    if kind == "value":
        prof = f.radial_profile
        if math.isfinite(f.support_radius) and f.support_radius <= R:
            return TailCertificate(R, c1, 0.0, 0.0, kind)
        if prof is None:
            raise AdmissibilityError(
                f"source {f.name!r} has no radial envelope; tail cannot be certified"
            )
        weighted = _weighted_radial_tail(prof, n, n - 2, R)
        return TailCertificate(R, c1, weighted, weighted / ((n - 2.0) * omega * c1), kind)

    if R <= 1.0:
        raise PreconditionError(
            "derivative tail bounds need truncation_radius > 1"
        )
    prof = f.radial_profile if kind == "gradient" else f.radial_gradient_profile
    if math.isfinite(f.support_radius) and f.support_radius <= R:
        return TailCertificate(R, c1, 0.0, 0.0, kind)
    if prof is None:
        raise AdmissibilityError(
            f"source {f.name!r} lacks the radial envelope needed to certify "
            f"the {kind} tail"
        )
    weighted, _ = integrate.quad(
        lambda rr: rr ** (n - 1) * float(prof(np.asarray(rr))) / (1.0 + rr ** (n - 1)),
        R, np.inf, limit=400,
    )
    return TailCertificate(R, c1, weighted, 2.0**n * weighted, kind)


# ---------------------------------------------------------------------------
# Public evaluations
# ---------------------------------------------------------------------------

def _validate_point(f, n, x, cfg, singular_center):
    if n < 3:
        raise DomainError(f"potential evaluation requires n >= 3, got {n}")
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DomainError(f"expected a point of shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("evaluation point must be finite")
    if np.linalg.norm(x) >= cfg.truncation_radius / 2.0:
        raise PreconditionError(
            f"|x| = {np.linalg.norm(x):.6g} must stay below "
            f"truncation_radius/2 = {cfg.truncation_radius / 2.0:.6g} for the "
            "tail certificate to apply; enlarge truncation_radius"
        )
    if singular_center is None:
        center = x.copy()
    else:
        center = np.asarray(singular_center, dtype=float)
        if center.shape != (n,):
            raise DomainError("singular_center must have the point's shape")
        if np.linalg.norm(x - center) >= cfg.split_radius:
            raise PreconditionError(
                "evaluation point must lie strictly inside the near ball "
                f"B(singular_center, split_radius={cfg.split_radius})"
            )
    if np.linalg.norm(center) + cfg.split_radius > cfg.truncation_radius:
        raise PreconditionError(
            "near ball must sit inside the truncation ball; enlarge "
            "truncation_radius or shrink split_radius"
        )
    return x, center


def _require_admissible(f, n, cfg, need_gradient: bool):
    report = check_conditions(f, n, cfg)
    if not report.f_condition_finite:
        raise AdmissibilityError(
            f"source {f.name!r} fails the weighted integrability condition "
            f"in dimension {n}", report,
        )
    if need_gradient:
        if not f.is_c1 or f.eval_grad_f is None:
            raise AdmissibilityError(
                f"source {f.name!r} is not continuously differentiable; "
                "second derivatives are not defined pointwise", report,
            )
        if not report.gradf_condition_finite:
            raise AdmissibilityError(
                f"gradient of source {f.name!r} fails the weighted "
                f"integrability condition in dimension {n}", report,
            )
    return report


def eval_potential(f: SourceFunction, n: int, x, cfg: QuadratureConfig | None = None,
                   *, singular_center=None) -> PotentialResult:
    """Potential u(x) = (E_n * f)(x) with certified truncation.

    Parameters
    ----------
    f : SourceFunction
    n : int
        Dimension, n >= 3.
    x : array_like, shape (n,)
        Evaluation point, |x| < truncation_radius / 2.
    cfg : QuadratureConfig, optional
        Defaults to ``default_config(f)``.
    singular_center : array_like, optional
        Center of the near ball; must satisfy
        |x - singular_center| < split_radius.  Defaults to x.  Points
        sharing a center share zone geometry and Monte Carlo samples.

    Returns
    -------
    PotentialResult
        With ``u`` set; ``tail_bound`` certifies the discarded far
        field and ``statistical_error`` is three standard errors of
        the Monte Carlo zones.
    """
    cfg = cfg if cfg is not None else default_config(f)
    x, center = _validate_point(f, n, x, cfg, singular_center)
    _require_admissible(f, n, cfg, need_gradient=False)

    near, near_se, near_nodes, _ = _near_zone("value", f, n, x, cfg, center)
    mid, mid_se, mid_nodes, _ = _mid_zone("value", f, n, x, cfg, center, anchor=center)
    tail = tail_certificate(f, n, cfg, kind="value")

    se = math.hypot(float(near_se[0]), float(mid_se[0]))
    return PotentialResult(
        point=x, u=near + mid, grad=None, hess=None,
        tail_bound=tail.bound, statistical_error=3.0 * se,
        nodes_used=near_nodes + mid_nodes,
        component_stat_errors=np.array([3.0 * se]),
    )


def eval_gradient(f: SourceFunction, n: int, x, cfg: QuadratureConfig | None = None,
                  *, singular_center=None) -> PotentialResult:
    """Gradient of the potential; see ``eval_potential`` for contract."""
    cfg = cfg if cfg is not None else default_config(f)
    x, center = _validate_point(f, n, x, cfg, singular_center)
    _require_admissible(f, n, cfg, need_gradient=False)

    near, near_se, near_nodes, _ = _near_zone("gradient", f, n, x, cfg, center)
    mid, mid_se, mid_nodes, _ = _mid_zone("gradient", f, n, x, cfg, center, anchor=center)
    tail = tail_certificate(f, n, cfg, kind="gradient")

    se = 3.0 * np.hypot(near_se, mid_se)
    return PotentialResult(
        point=x, u=None, grad=near + mid, hess=None,
        tail_bound=tail.bound, statistical_error=float(np.max(se)),
        nodes_used=near_nodes + mid_nodes,
        component_stat_errors=se,
    )


def eval_hessian(f: SourceFunction, n: int, x, cfg: QuadratureConfig | None = None,
                 *, singular_center=None) -> PotentialResult:
    """Hessian of the potential at x for C^1 admissible sources.

    Entries are D_ij u(x) = int dE_j(x-y) d_i f(y) dy.  The Monte
    Carlo matrix is symmetrized (same samples enter (i,j) and (j,i)
    with different integrands, so raw asymmetry is statistical noise;
    averaging is unbiased and leaves the trace unchanged).  The trace
    estimates f(x); ``f_at_point`` and ``trace_stat_error`` support
    residual checks.
    """
    cfg = cfg if cfg is not None else default_config(f)
    x, center = _validate_point(f, n, x, cfg, singular_center)
    _require_admissible(f, n, cfg, need_gradient=True)

    near, near_se, near_nodes, near_tr_se = _near_zone("hessian", f, n, x, cfg, center)
    mid, mid_se, mid_nodes, mid_tr_se = _mid_zone("hessian", f, n, x, cfg, center, anchor=center)
    tail = tail_certificate(f, n, cfg, kind="hessian")

    hess = near + mid
    hess = 0.5 * (hess + hess.T)
    se = 3.0 * np.hypot(near_se, mid_se)
    se = 0.5 * (se + se.T)
    trace_se = 3.0 * math.hypot(float(near_tr_se or 0.0), float(mid_tr_se or 0.0))
    return PotentialResult(
        point=x, u=None, grad=None, hess=hess,
        tail_bound=tail.bound, statistical_error=float(np.max(se)),
        nodes_used=near_nodes + mid_nodes,
        component_stat_errors=se,
        trace_stat_error=trace_se,
        f_at_point=float(f.eval_f(x[None, :])[0]),
    )
