"""Covariance algebra of the shared-latent convolution prior.

One zero-mean latent GP with squared-exponential covariance (length scale
``ell``) is smoothed by a scaled Gaussian kernel per unit (width ``xi_i``,
scale ``alpha_i``). Because Gaussians convolve in closed form, every
cross-covariance is again a scaled squared exponential:

    between units i and j:  alpha_i alpha_j * ell/eta_ij * exp(-d^2 / (2 eta_ij^2)),
        eta_ij^2 = xi_i^2 + xi_j^2 + ell^2
    between unit i and the latent process:  alpha_i * ell/eta_i * exp(-d^2 / (2 eta_i^2)),
        eta_i^2 = xi_i^2 + ell^2
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

# Jitter ladder for Cholesky repair: start small, escalate x10, then give up.
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class Hyperparameters:
    """Shared latent length scale plus per-unit smoothing widths and scales.

    ``kernel_scales`` are sign-unconstrained; ``latent_length_scale`` and all
    ``kernel_widths`` must be positive.
    """

    latent_length_scale: float
    kernel_widths: np.ndarray
    kernel_scales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "latent_length_scale", float(self.latent_length_scale))
        widths = np.atleast_1d(np.asarray(self.kernel_widths, dtype=float))
        scales = np.atleast_1d(np.asarray(self.kernel_scales, dtype=float))
        if self.latent_length_scale <= 0:
            raise ValueError(f"latent_length_scale must be > 0, got {self.latent_length_scale}")
        if np.any(widths <= 0):
            raise ValueError("all kernel_widths must be > 0")
        if widths.shape != scales.shape:
            raise ValueError(
                f"kernel_widths and kernel_scales must match, got {widths.shape} vs {scales.shape}"
            )
        widths.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "kernel_widths", widths)
        object.__setattr__(self, "kernel_scales", scales)

    @property
    def n_units(self):
        return self.kernel_widths.size


@dataclass(frozen=True)
class InducingPoints:
    """Strictly increasing latent-function evaluation locations."""

    locations: np.ndarray

    def __post_init__(self):
        locs = np.atleast_1d(np.asarray(self.locations, dtype=float))
        if locs.size < 1:
            raise ValueError("need at least one inducing point")
        if locs.size > 1 and np.any(np.diff(locs) <= 0):
            raise ValueError("inducing points must be strictly increasing")
        locs.setflags(write=False)
        object.__setattr__(self, "locations", locs)

    @property
    def m(self):
        return int(self.locations.size)

    @classmethod
    def equally_spaced(cls, window, m):
        """m equally spaced locations spanning the observation window."""
        if m < 1:
            raise ValueError(f"need m >= 1, got {m}")
        if m == 1:
            return cls(np.array([0.5 * (window.start + window.end)]))
        return cls(np.linspace(window.start, window.end, m))


@dataclass(frozen=True)
class GramBundle:
    """Gram matrices for a set of (unit, time) points against inducing points.

    ``chol`` is the lower Cholesky factor of k_xx + jitter * I; ``jitter`` is
    the diagonal shift that was actually applied (0 when none was needed).
    """

    k_xx: np.ndarray
    chol: np.ndarray
    jitter: float
    k_fx: np.ndarray
    k_diag: np.ndarray


def latent_kernel(t, u, ell):
    """Squared-exponential covariance of the latent process, exp(-d^2/(2 ell^2))."""
    if ell <= 0:
        raise ValueError(f"length scale must be > 0, got {ell}")
    d = np.asarray(t, dtype=float) - np.asarray(u, dtype=float)
    return np.exp(-0.5 * (d / ell) ** 2)


def _check_index(i, n):
    if not 0 <= i < n:
        raise IndexError(f"unit index {i} out of range for {n} units")


def output_cross_kernel(i, j, t, u, theta):
    """Covariance between unit i's and unit j's latent log intensity."""
    _check_index(i, theta.n_units)
    _check_index(j, theta.n_units)
    ell = theta.latent_length_scale
    eta2 = theta.kernel_widths[i] ** 2 + theta.kernel_widths[j] ** 2 + ell**2
    d = np.asarray(t, dtype=float) - np.asarray(u, dtype=float)
    scale = theta.kernel_scales[i] * theta.kernel_scales[j] * np.sqrt(ell**2 / eta2)
    return scale * np.exp(-0.5 * d**2 / eta2)


def output_latent_cross_kernel(i, t, z, theta):
    """Covariance between unit i's latent log intensity and the latent process."""
    _check_index(i, theta.n_units)
    ell = theta.latent_length_scale
    eta2 = theta.kernel_widths[i] ** 2 + ell**2
    d = np.asarray(t, dtype=float) - np.asarray(z, dtype=float)
    return theta.kernel_scales[i] * np.sqrt(ell**2 / eta2) * np.exp(-0.5 * d**2 / eta2)


def prior_variance(theta):
    """Per-unit prior variance of the latent log intensity (constant in time)."""
    ell = theta.latent_length_scale
    return theta.kernel_scales**2 * ell / np.sqrt(2.0 * theta.kernel_widths**2 + ell**2)


def chol_with_jitter(a):
    """Lower Cholesky factor of ``a``, escalating a diagonal jitter on failure.

    Jitter starts at JITTER_START * mean(diag) and grows x10 up to
    JITTER_MAX * mean(diag); beyond that the matrix is declared
    ill-conditioned and the 1-norm condition estimate is reported.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.mean(np.diag(a)))
    if scale <= 0:
        scale = 1.0
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-12):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(a.shape[0])), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    cond = np.linalg.cond(a, 1)
    raise NumericalError(
        f"Cholesky failed after jitter up to {JITTER_MAX * scale:.3e}; "
        f"condition estimate {cond:.3e}"
    )


def build_gram(points, Z, theta):
    """Assemble the Gram bundle for (unit, time) pairs against inducing points.

    ``points`` is a sequence of (unit_index, time) pairs. Rows of ``k_fx``
    follow the input order; ``k_diag`` holds the per-point prior variances.
    """
    pts = list(points)
    units = np.asarray([p[0] for p in pts], dtype=int)
    times = np.asarray([p[1] for p in pts], dtype=float)
    if units.size and (units.min() < 0 or units.max() >= theta.n_units):
        raise IndexError("unit index out of range in points")

    ell = theta.latent_length_scale
    locs = Z.locations
    k_xx = latent_kernel(locs[:, None], locs[None, :], ell)
    chol, jitter = chol_with_jitter(k_xx)

    eta2 = theta.kernel_widths[units] ** 2 + ell**2
    coef = theta.kernel_scales[units] * np.sqrt(ell**2 / eta2)
    d2 = (times[:, None] - locs[None, :]) ** 2
    k_fx = coef[:, None] * np.exp(-0.5 * d2 / eta2[:, None])
    k_diag = prior_variance(theta)[units] if units.size else np.zeros(0)

    return GramBundle(k_xx=k_xx, chol=chol, jitter=jitter, k_fx=k_fx, k_diag=k_diag)


def cho_solve(chol, b):
    """Solve (L L^T) x = b given the lower factor L."""
    return scipy.linalg.cho_solve((chol, True), b, check_finite=False)
