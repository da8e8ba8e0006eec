"""Extrapolation and event-count forecasting for a fitted model.

Latent prediction reuses :func:`fleetpp.inference.posterior_moments` verbatim
(one code path), so anything proved about training-time moments holds for
prediction. Intensity statistics use log-normal moments: the point intensity
is exp(mu + var/2) and the reported band is exp(mu -+ 1.96 sqrt(var)).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError
from .inference import (
    DEFAULT_QUAD_ORDER,
    DEFAULT_QUAD_PANELS,
    EXP_GUARD,
    posterior_moments,
)
from .kernels import build_gram, cho_solve, chol_with_jitter, output_cross_kernel
from .quadrature import gauss_legendre_panels

PMF_TAIL = 1e-12
PMF_Y_CAP = 100_000


@dataclass(frozen=True)
class IntensityCurve:
    """Posterior log-intensity moments on a grid plus derived intensity stats."""

    grid: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    mean_intensity: np.ndarray
    median_intensity: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class CountForecast:
    """Poisson forecast of the event count on (t_star, t_star + horizon]."""

    t_star: float
    horizon: float
    lam: float
    counts: np.ndarray
    pmf: np.ndarray

    def mean(self):
        return float(self.counts @ self.pmf)


def predict_latent(model, unit, times):
    """Posterior mean/variance of the unit's latent log intensity at new times."""
    times = np.asarray(times, dtype=float)
    if np.any(~np.isfinite(times)):
        raise ValueError("non-finite prediction time")
    if not 0 <= unit < model.theta.n_units:
        raise IndexError(f"unit index {unit} out of range")
    pts = np.column_stack([np.full(times.size, unit), times])
    return posterior_moments(pts, model.theta, model.vstate)


def intensity_curve(model, unit, grid):
    """Intensity statistics on a sorted grid of times."""
    grid = np.asarray(grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    mu, var = predict_latent(model, unit, grid)
    sd = np.sqrt(var)
    return IntensityCurve(
        grid=grid,
        mu=mu,
        var=var,
        mean_intensity=np.exp(mu + 0.5 * var),
        median_intensity=np.exp(mu),
        lower=np.exp(mu - 1.96 * sd),
        upper=np.exp(mu + 1.96 * sd),
    )


def expected_count(
    model, unit, t_star, horizon, quad_order=DEFAULT_QUAD_ORDER, quad_panels=DEFAULT_QUAD_PANELS
):
    """Expected integrated intensity over (t_star, t_star + horizon]."""
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    nodes, weights = gauss_legendre_panels(t_star, t_star + horizon, quad_order, quad_panels)
    mu, var = predict_latent(model, unit, nodes)
    expo = mu + 0.5 * var
    if np.max(expo) > EXP_GUARD:
        raise NumericalError(
            f"forecast integrand exponent {np.max(expo):.1f} exceeds {EXP_GUARD:.0f}; "
            "rescale times or intensities"
        )
    return float(weights @ np.exp(expo))


def poisson_y_max(lam, tail=PMF_TAIL):
    """Smallest y whose Chernoff tail bound is below ``tail``, capped."""
    if lam <= 0:
        return 0
    y = int(np.ceil(lam)) + 1
    log_tail = np.log(tail)
    while y < PMF_Y_CAP:
        # Chernoff: P(Y >= y) <= exp(-lam) (e lam / y)^y for y > lam
        if -lam + y * (1.0 + np.log(lam) - np.log(y)) < log_tail:
            return y
        y += max(1, y // 20)
    return PMF_Y_CAP


def count_pmf(lam, y_max=None):
    """Poisson pmf over y = 0..y_max, computed in log space.

    With ``y_max=None`` the truncation point comes from :func:`poisson_y_max`,
    which keeps the discarded tail mass below PMF_TAIL.
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if lam == 0:
        ys = np.arange((y_max or 0) + 1)
        pmf = np.zeros(ys.size)
        pmf[0] = 1.0
        return ys, pmf
    if y_max is None:
        y_max = poisson_y_max(lam)
    ys = np.arange(y_max + 1)
    log_pmf = -lam + ys * np.log(lam) - gammaln(ys + 1.0)
    return ys, np.exp(log_pmf)


def count_forecast(
    model, unit, t_star, horizon, quad_order=DEFAULT_QUAD_ORDER, quad_panels=DEFAULT_QUAD_PANELS
):
    """Plug-in Poisson forecast: integrate the posterior-mean intensity."""
    lam = expected_count(model, unit, t_star, horizon, quad_order, quad_panels)
    ys, pmf = count_pmf(lam)
    return CountForecast(t_star=float(t_star), horizon=float(horizon), lam=lam, counts=ys, pmf=pmf)


def sample_count_forecast(model, unit, t_star, horizon, n_samples=2000, seed=0, grid_size=200):
    """Mixed-Poisson forecast: draw latent paths, integrate, mix Poisson counts.

    Optional alternative to the plug-in forecast; samples the latent function
    jointly on a grid over the forecast interval.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(t_star, t_star + horizon, grid_size)
    mu, var = predict_latent(model, unit, grid)
    # marginal draws would miss within-path correlation; build the joint covariance
    pts = np.column_stack([np.full(grid.size, unit), grid])
    gram = build_gram(pts, model.vstate.Z, model.theta)
    b = cho_solve(gram.chol, gram.k_fx.T)
    k_ff = output_cross_kernel(unit, unit, grid[:, None], grid[None, :], model.theta)
    s = model.vstate.cov
    cov = k_ff - gram.k_fx @ b + b.T @ s @ b
    chol, _ = chol_with_jitter(cov + 1e-10 * np.eye(grid.size))
    draws = mu[None, :] + rng.standard_normal((n_samples, grid.size)) @ chol.T
    lam_draws = np.trapezoid(np.exp(draws), grid, axis=1)
    counts = rng.poisson(lam_draws)
    y_max = int(counts.max()) if counts.size else 0
    ys = np.arange(y_max + 1)
    pmf = np.bincount(counts, minlength=y_max + 1) / n_samples
    return CountForecast(
        t_star=float(t_star),
        horizon=float(horizon),
        lam=float(lam_draws.mean()),
        counts=ys,
        pmf=pmf,
    )


def predictive_loglik(
    model,
    unit,
    event_times,
    t_star,
    end=None,
    quad_order=DEFAULT_QUAD_ORDER,
    quad_panels=DEFAULT_QUAD_PANELS,
):
    """Lower bound on the held-out log likelihood over (t_star, end].

    Same structure as the training bound with the optimized variational state
    and no KL term: -(integral of exp(mu + var/2)) + (sum of mu at events).
    """
    end = model.window.end if end is None else float(end)
    event_times = np.asarray(event_times, dtype=float)
    if event_times.size and (event_times.min() <= t_star or event_times.max() > end):
        raise ValueError(f"held-out events must lie in ({t_star}, {end}]")
    if end <= t_star:
        raise ValueError(f"evaluation region ({t_star}, {end}] is empty")
    nodes, weights = gauss_legendre_panels(t_star, end, quad_order, quad_panels)
    mu, var = predict_latent(model, unit, nodes)
    expo = mu + 0.5 * var
    if np.max(expo) > EXP_GUARD:
        raise NumericalError(
            f"integrand exponent {np.max(expo):.1f} exceeds {EXP_GUARD:.0f}; "
            "rescale times or intensities"
        )
    integral = weights @ np.exp(expo)
    data = 0.0
    if event_times.size:
        mu_e, _ = predict_latent(model, unit, event_times)
        data = mu_e.sum()
    return float(-integral + data)


def rms_intensity(pred, truth):
    """Root mean squared error between predicted and true intensity on a grid."""
    pred_vals = pred.mean_intensity if isinstance(pred, IntensityCurve) else np.asarray(pred)
    truth = np.asarray(truth, dtype=float)
    if pred_vals.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred_vals.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred_vals - truth) ** 2)))


def mae_counts(forecasts, actual):
    """Mean absolute error between forecast rates and observed counts."""
    forecasts = np.asarray(forecasts, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecasts.shape != actual.shape:
        raise ValueError(f"shape mismatch: {forecasts.shape} vs {actual.shape}")
    return float(np.mean(np.abs(forecasts - actual)))
