"""Fundamental solution of the Laplacian and its derivatives.

Sign convention: for n >= 3 the kernel is the negative power law

    E_n(x) = -1 / ((n-2) * omega_{n-1} * |x|^{n-2}),

where omega_{n-1} is the surface measure of the unit sphere in R^n, so
that Delta(E_n * f) = f with no sign flip.  In two dimensions the
logarithmic form E_2(x) = log|x| / (2*pi) is provided for completeness;
the solver modules elsewhere in this package require n >= 3.

First and second derivatives share one closed form for every n >= 2:

    dE_n/dx_j        = x_j / (omega_{n-1} |x|^n)
    d2E_n/dx_i dx_j  = (delta_ij |x|^2 - n x_i x_j) / (omega_{n-1} |x|^{n+2})

The Hessian is trace free away from the origin (harmonicity) and
homogeneous of degree -n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .errors import DomainError, SingularPointError

# |x| below this is treated as the singular point.
SINGULARITY_CUTOFF = 1e-300

# The sign convention in one place: E_n = KERNEL_SIGN * |x|^{2-n} / ((n-2) omega).
# Everything downstream derives from it, so flipping it (a verification test
# hook) mis-signs the whole solver coherently.
KERNEL_SIGN = -1.0


def surface_area(n: int) -> float:
    """Surface measure omega_{n-1} of the unit sphere in R^n.

    Parameters
    ----------
    n : int
        Ambient dimension, n >= 2.

    Returns
    -------
    float
        omega_{n-1} = 2 * pi^{n/2} / Gamma(n/2).

    Raises
    ------
    DomainError
        If ``n`` is not an integer >= 2.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise DomainError(f"dimension must be an integer, got {n!r}")
    if n < 2:
        raise DomainError(f"dimension must be >= 2, got {n}")
    return float(2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0))


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n, equal to surface_area(n) / n."""
    return surface_area(n) / n


@dataclass(frozen=True)
class KernelValue:
    """Kernel value and derivatives at a single point.

    Attributes
    ----------
    value : float
        E_n(x).
    gradient : ndarray, shape (n,)
        grad E_n(x).
    hessian : ndarray, shape (n, n)
        Hessian of E_n at x; symmetric and trace free.
    """

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def eval_kernel(n: int, x, cutoff: float = SINGULARITY_CUTOFF) -> KernelValue:
    """Evaluate the fundamental solution and its derivatives at one point.

    Parameters
    ----------
    n : int
        Dimension, n >= 2.  The logarithmic form is used when n == 2.
    x : array_like, shape (n,)
        Evaluation point; must stay away from the origin.
    cutoff : float, optional
        |x| below this raises ``SingularPointError`` instead of
        returning an overflowed value.

    Returns
    -------
    KernelValue

    Raises
    ------
    DomainError
        Bad dimension or point of the wrong shape.
    SingularPointError
        |x| < cutoff, or the evaluation overflowed to a non-finite
        number (numerically indistinguishable from the singularity).
    """
    omega = surface_area(n)  # validates n
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DomainError(f"expected a point of shape ({n},), got {x.shape}")
    r = float(np.linalg.norm(x))
    if not np.isfinite(r):
        raise DomainError("evaluation point must be finite")
    if r < cutoff:
        raise SingularPointError(
            f"kernel singular at |x| = {r:.3e} (cutoff {cutoff:.3e})"
        )

    with np.errstate(over="ignore", divide="ignore"):
        if n == 2:
            value = -KERNEL_SIGN * np.log(r) / (2.0 * np.pi)
        else:
            value = KERNEL_SIGN * (r ** (2.0 - n)) / ((n - 2.0) * omega)
        grad = -KERNEL_SIGN * x / (omega * r**n)
        hess = -KERNEL_SIGN * (np.eye(n) * r**2 - n * np.outer(x, x)) / (omega * r ** (n + 2))

    if not (np.isfinite(value) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise SingularPointError(
            f"kernel evaluation overflowed at |x| = {r:.3e}; point is "
            "numerically too close to the singularity for this dimension"
        )
    return KernelValue(value=float(value), gradient=grad, hessian=hess)


def kernel_values(n: int, diffs: np.ndarray, cutoff: float = SINGULARITY_CUTOFF) -> np.ndarray:
    """Vectorized E_n over rows of ``diffs`` (shape (m, n), n >= 3).

    Rows must keep away from the origin; quadrature callers guarantee a
    positive gap.  Raises ``SingularPointError`` if any row is below the
    cutoff.
    """
    r = np.linalg.norm(diffs, axis=-1)
    if r.size and float(np.min(r)) < cutoff:
        raise SingularPointError("vectorized kernel hit the singularity")
    omega = surface_area(n)
    return KERNEL_SIGN * (r ** (2.0 - n)) / ((n - 2.0) * omega)


def kernel_gradients(n: int, diffs: np.ndarray, cutoff: float = SINGULARITY_CUTOFF) -> np.ndarray:
    """Vectorized grad E_n over rows of ``diffs``; returns shape (m, n)."""
    r = np.linalg.norm(diffs, axis=-1)
    if r.size and float(np.min(r)) < cutoff:
        raise SingularPointError("vectorized kernel gradient hit the singularity")
    omega = surface_area(n)
    return -KERNEL_SIGN * diffs / (omega * (r**n)[..., None])
