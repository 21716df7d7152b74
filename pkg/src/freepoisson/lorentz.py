"""Lorentz-space machinery and the normalized bounded solution.

Conventions (pinned once, used everywhere): with f* the decreasing
rearrangement and mu the distribution function,

    ||f||_{p,1}   = int_0^inf t^{1/p - 1} f*(t) dt,
    ||f||_{p,inf} = sup_lambda lambda * mu(lambda)^{1/p},

so the pairing |int g f| <= ||g||_{p,inf} * ||f||_{p',1} holds with
constant one (Hardy-Littlewood; equality is attained when both factors
are radially decreasing, so numerical checks must allow roundoff on
top of the constant).

The kernel |E_n| has super-level sets {|E_n| > lambda} equal to balls
of radius ((n-2) omega_{n-1} lambda)^{-1/(n-2)}, hence

    lambda^{n/(n-2)} mu(lambda) = c_n
                                = (omega_{n-1}/n) ((n-2) omega_{n-1})^{-n/(n-2)}

independently of lambda, and ||E_n||_{n/(n-2),inf} = c_n^{(n-2)/n}.

The normalized solution subtracts c = int E_n(y) f(y) dy = u(0), so
that u(0) = 0 exactly and sup |u| <= c_n^{(n-2)/n} ||f||_{n/2,1} + |c|.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import AdmissibilityError, DomainError
from .kernel import kernel_values, surface_area, unit_ball_volume
from .quadrature import QuadratureConfig, default_config, eval_potential
from .sources import SourceFunction, check_conditions

_STREAM_LORENTZ = 104
_STREAM_LEVELSET = 106

# lambda grids for distribution samples: geometric, 40 points per decade
_GRID_PER_DECADE = 40
_GRID_DECADES = 4


def weak_norm_constant(n: int) -> float:
    """The constant value of lambda^{n/(n-2)} mu_{|E_n|}(lambda)."""
    if n < 3:
        raise DomainError(f"weak norm constant requires n >= 3, got {n}")
    omega = surface_area(n)
    return omega / n * ((n - 2.0) * omega) ** (-n / (n - 2.0))


def kernel_weak_quasi_norm(n: int) -> float:
    """||E_n||_{n/(n-2), inf} in the pinned convention: c_n^{(n-2)/n}."""
    return weak_norm_constant(n) ** ((n - 2.0) / n)


def kernel_level_set_radius(n: int, lam: float) -> float:
    """Radius of the ball {|E_n| > lam}."""
    if lam <= 0:
        raise DomainError("level must be positive")
    return ((n - 2.0) * surface_area(n) * lam) ** (-1.0 / (n - 2.0))


def kernel_level_set_measure_mc(n: int, lam: float, samples: int = 400_000,
                                seed: int = 0) -> float:
    """Monte Carlo estimate of mu_{|E_n|}(lam) = |{ |E_n| > lam }|.

    Samples uniformly in a ball of twice the analytic level-set radius,
    so the hit fraction is about 1/8 regardless of lam.  Independent of
    the closed form it checks.
    """
    r_ref = 2.0 * kernel_level_set_radius(n, lam)
    rng = np.random.default_rng([seed, _STREAM_LEVELSET, n])
    z = rng.standard_normal((samples, n))
    dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
    radii = r_ref * rng.random(samples) ** (1.0 / n)
    pts = dirs * radii[:, None]
    hits = np.abs(kernel_values(n, pts)) > lam
    volume = unit_ball_volume(n) * r_ref**n
    return volume * float(np.count_nonzero(hits)) / samples


@dataclass(frozen=True)
class LorentzParams:
    """Indices of the Lorentz space L^{p,q}; q = math.inf for weak-L^p."""

    p: float
    q: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise DomainError(f"need p > 1, got {self.p}")
        if not (self.q >= 1.0 or math.isinf(self.q)):
            raise DomainError(f"need q in [1, inf], got {self.q}")


@dataclass
class LorentzReport:
    """Quasi-norm estimate with the sampled distribution function.

    ``distribution_samples`` is a list of (lambda, measure) pairs on a
    geometric grid; measures are nonincreasing in lambda.
    ``standard_error`` is zero for the analytic route and a replicate
    standard error for the Monte Carlo route (which restricts the
    domain to the truncation ball of ``cfg``).
    """

    params: LorentzParams
    method: str
    quasi_norm: float
    distribution_samples: list[tuple[float, float]]
    standard_error: float = 0.0

    def as_dict(self) -> dict:
        return {
            "p": self.params.p,
            "q": self.params.q if math.isfinite(self.params.q) else "inf",
            "method": self.method,
            "quasi_norm": self.quasi_norm,
            "standard_error": self.standard_error,
            "distribution_samples": [list(s) for s in self.distribution_samples],
        }


def _safe_quad(func, a, b) -> tuple[float, bool]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            val, err = integrate.quad(func, a, b, limit=400)
        except Exception:
            return math.inf, False
    if not math.isfinite(val) or (abs(val) > 0 and err > 0.1 * abs(val)):
        return math.inf, False
    return val, True


def _profile_grid(f: SourceFunction, lam_min: float):
    """Dense decreasing profile on a radius grid reaching below lam_min."""
    r_max = f.support_radius
    if not math.isfinite(r_max):
        r_max = 1.0
        while float(f.radial_profile(np.asarray(r_max))) > lam_min and r_max < 1e12:
            r_max *= 2.0
    rs = np.geomspace(1e-9, max(r_max, 1e-6), 4096)
    rs = np.concatenate([[0.0], rs])
    return rs, f.radial_profile(rs)


def _analytic_quasi_norm(f: SourceFunction, n: int, params: LorentzParams):
    """Closed radial route; requires a nonincreasing radial profile."""
    v_n = unit_ball_volume(n)
    p, q = params.p, params.q
    prof = f.radial_profile
    upper = f.support_radius if math.isfinite(f.support_radius) else np.inf

    if math.isinf(q):
        rs, vals = _profile_grid(f, 1e-12)
        cand = (v_n * rs**n) ** (1.0 / p) * vals
        return float(np.max(cand)), True

    def integrand(r):
        return n * v_n ** (q / p) * r ** (n * q / p - 1.0) * float(prof(np.asarray(r))) ** q

    val, ok = _safe_quad(integrand, 0.0, upper)
    if not ok:
        return math.inf, False
    return float(val ** (1.0 / q)), True


def _mc_weighted_values(f: SourceFunction, n: int, cfg: QuadratureConfig,
                        replicate: int, samples: int):
    """One replicate of |f| samples with stratified-shell weights."""
    R = cfg.truncation_radius
    edges = np.linspace(0.0, R, 65)
    omega = surface_area(n)
    volumes = omega / n * (edges[1:] ** n - edges[:-1] ** n)
    counts = np.maximum((samples * volumes / volumes.sum()).astype(int), 8)
    vals, weights = [], []
    for k in range(len(volumes)):
        rng = np.random.default_rng([cfg.seed, _STREAM_LORENTZ, k, replicate])
        m = int(counts[k])
        z = rng.standard_normal((m, n))
        dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
        radii = (edges[k] ** n + rng.random(m) * (edges[k + 1] ** n - edges[k] ** n)) ** (1.0 / n)
        pts = dirs * radii[:, None]
        vals.append(np.abs(f.eval_f(pts)))
        weights.append(np.full(m, volumes[k] / m))
    return np.concatenate(vals), np.concatenate(weights)


def _empirical_quasi_norm(vals, weights, params: LorentzParams) -> float:
    """Quasi-norm of the weighted empirical rearrangement."""
    order = np.argsort(vals)[::-1]
    v = vals[order]
    w = weights[order]
    keep = v > 0.0
    v, w = v[keep], w[keep]
    if v.size == 0:
        return 0.0
    t_right = np.cumsum(w)
    t_left = t_right - w
    p, q = params.p, params.q
    if math.isinf(q):
        return float(np.max(t_right ** (1.0 / p) * v))
    a = q / p
    return float(np.sum(v**q * (t_right**a - t_left**a) / a) ** (1.0 / q))


def _distribution_from_samples(vals, weights) -> list[tuple[float, float]]:
    top = float(np.max(vals)) if vals.size else 0.0
    if top <= 0.0:
        return []
    n_pts = _GRID_PER_DECADE * _GRID_DECADES + 1
    lams = top * 10.0 ** (-np.arange(n_pts) / _GRID_PER_DECADE)
    order = np.argsort(vals)
    sorted_vals = vals[order]
    cum_w = np.concatenate([[0.0], np.cumsum(weights[order])])
    total = cum_w[-1]
    idx = np.searchsorted(sorted_vals, lams, side="right")
    measures = total - cum_w[idx]
    return [(float(l), float(m)) for l, m in zip(lams, measures)]


def _analytic_distribution(f: SourceFunction, n: int) -> list[tuple[float, float]]:
    v_n = unit_ball_volume(n)
    rs, vals = _profile_grid(f, 1e-12)
    top = float(vals[0])
    if top <= 0.0:
        return []
    n_pts = _GRID_PER_DECADE * _GRID_DECADES + 1
    lams = top * 10.0 ** (-np.arange(n_pts) / _GRID_PER_DECADE)
    out = []
    for lam in lams:
        above = np.nonzero(vals > lam)[0]
        r_star = rs[above[-1]] if above.size else 0.0
        out.append((float(lam), float(v_n * r_star**n)))
    return out


def _profile_is_nonincreasing(f: SourceFunction) -> bool:
    if f.radial_profile is None:
        return False
    upper = f.support_radius if math.isfinite(f.support_radius) else 1e6
    rs = np.geomspace(1e-8, max(upper, 1e-6), 512)
    vals = f.radial_profile(rs)
    scale = float(np.max(np.abs(vals))) or 1.0
    return bool(np.all(np.diff(vals) <= 1e-12 * scale))


def lorentz_quasi_norm(f: SourceFunction, n: int, params: LorentzParams,
                       cfg: QuadratureConfig | None = None,
                       method: str | None = None) -> LorentzReport:
    """Quasi-norm of f in L^{p,q}(R^n) with distribution samples.

    ``method`` is "analytic_radial" (closed layer-cake form, available
    when the source is radial with a nonincreasing profile),
    "monte_carlo" (stratified sampling in the truncation ball, with a
    replicate standard error), or None to pick automatically.
    """
    if n < 3:
        raise DomainError(f"need n >= 3, got {n}")
    cfg = cfg if cfg is not None else default_config(f)
    if method is None:
        method = "analytic_radial" if (f.is_radial and _profile_is_nonincreasing(f)) \
            else "monte_carlo"
    if method not in ("analytic_radial", "monte_carlo"):
        raise DomainError(f"unknown method {method!r}")

    if method == "analytic_radial":
        if not f.is_radial or f.radial_profile is None:
            raise DomainError("analytic_radial requires a radial source with a profile")
        if not _profile_is_nonincreasing(f):
            raise DomainError(
                "analytic_radial requires a nonincreasing profile; use monte_carlo"
            )
        value, _ = _analytic_quasi_norm(f, n, params)
        return LorentzReport(
            params=params, method=method, quasi_norm=value,
            distribution_samples=_analytic_distribution(f, n),
            standard_error=0.0,
        )

    replicates = 8
    per_rep = max(cfg.midfield_samples // replicates, 2000)
    estimates = []
    all_vals, all_weights = [], []
    for j in range(replicates):
        vals, weights = _mc_weighted_values(f, n, cfg, j, per_rep)
        estimates.append(_empirical_quasi_norm(vals, weights, params))
        all_vals.append(vals)
        all_weights.append(weights / replicates)
    estimates = np.asarray(estimates)
    vals = np.concatenate(all_vals)
    weights = np.concatenate(all_weights)
    return LorentzReport(
        params=params, method=method,
        quasi_norm=float(np.mean(estimates)),
        distribution_samples=_distribution_from_samples(vals, weights),
        standard_error=float(np.std(estimates, ddof=1) / math.sqrt(replicates)),
    )


@dataclass
class NormalizedSolution:
    """Normalization constant and a priori bound for one (f, n, cfg).

    ``c`` is int E_n(y) f(y) dy = u_raw(0); the normalized solution is
    u_raw - c, vanishes at the origin, and is bounded by
    ``bound = kernel_weak_quasi_norm(n) * ||f||_{n/2,1} + |c|``.
    """

    dimension: int
    source_name: str
    c: float
    lorentz_norm: float
    bound: float

    def as_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "source": self.source_name,
            "c": self.c,
            "lorentz_norm_n2_1": self.lorentz_norm,
            "bound": self.bound,
        }


def normalization_constant(f: SourceFunction, n: int,
                           cfg: QuadratureConfig | None = None) -> float:
    """c = int E_n(y) f(y) dy, evaluated as the raw potential at 0.

    Requires the weighted admissibility condition and f in L^{n/2,1}
    (otherwise the constant need not be finite and the bounded
    normalization is meaningless).
    """
    cfg = cfg if cfg is not None else default_config(f)
    report = check_conditions(f, n, cfg)
    if not report.f_condition_finite:
        raise AdmissibilityError(
            f"source {f.name!r} fails the weighted integrability condition", report
        )
    norm = lorentz_quasi_norm(f, n, LorentzParams(n / 2.0, 1.0), cfg)
    if not math.isfinite(norm.quasi_norm):
        raise AdmissibilityError(
            f"source {f.name!r} is not in L^(n/2,1); no bounded normalization", report
        )
    return eval_potential(f, n, np.zeros(n), cfg).u


def build_normalized_solution(f: SourceFunction, n: int,
                              cfg: QuadratureConfig | None = None) -> NormalizedSolution:
    """Constant, Lorentz norm and a priori sup bound in one record."""
    cfg = cfg if cfg is not None else default_config(f)
    c = normalization_constant(f, n, cfg)
    norm = lorentz_quasi_norm(f, n, LorentzParams(n / 2.0, 1.0), cfg)
    bound = kernel_weak_quasi_norm(n) * norm.quasi_norm + abs(c)
    return NormalizedSolution(
        dimension=n, source_name=f.name, c=c,
        lorentz_norm=norm.quasi_norm, bound=bound,
    )


def normalized_solution(f: SourceFunction, n: int, x,
                        cfg: QuadratureConfig | None = None,
                        *, constant: float | None = None) -> float:
    """The unique bounded solution normalized to vanish at the origin.

    Computes u_raw(x) - c.  When ``constant`` is omitted, c is
    recomputed with the same configuration; evaluation at x = 0 then
    subtracts a bit-identical recomputation and returns exactly 0.0.
    """
    cfg = cfg if cfg is not None else default_config(f)
    c = normalization_constant(f, n, cfg) if constant is None else constant
    return eval_potential(f, n, x, cfg).u - c
