"""Synthetic fleet generation: parametric intensity families, correlated
latent-path draws through a sigmoid link, and exact thinning of event times."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .events import EventDataset, ObservationWindow, UnitRecord
from .kernels import Hyperparameters, cho_solve, chol_with_jitter, latent_kernel

# Unit-to-unit parameter distributions for the two parametric intensity
# families. The printed covariances are not exactly symmetric; they are
# symmetrized as (C + C^T)/2 and projected to PSD before use.
FORM1_MEAN = np.array([3.0, 20.0, 65.0])
FORM1_COV = np.array(
    [
        [5e-1, 4e-4, -1e-5],
        [4e-4, 2.5e-1, 3e-7],
        [1e-5, 3e-7, 1.0],
    ]
)
FORM2_MEAN = np.array([2.0, 2e-3, 50.0])
FORM2_COV = np.array(
    [
        [1.0, -1e-7, 2e-4],
        [-1e-7, 1e-2, 3e-7],
        [1e-5, 3e-7, 1.0],
    ]
)

DEFAULT_LAMBDA_STAR = 4.0
DEFAULT_GRID_SIZE = 1000
LATENT_GRID_SIZE = 256
MAX_PARAM_DRAWS = 100

GENERATOR_KINDS = ("mgcp-sigmoid", "form1", "form2")


def _repair_cov(cov):
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


@dataclass(frozen=True)
class ParametricForm:
    """A parametric intensity family with Gaussian unit-to-unit parameters."""

    family: str
    param_mean: np.ndarray
    param_cov: np.ndarray

    def __post_init__(self):
        if self.family not in ("form1", "form2"):
            raise ValueError(f"unknown family {self.family!r}")
        mean = np.asarray(self.param_mean, dtype=float).reshape(3)
        cov = _repair_cov(np.asarray(self.param_cov, dtype=float).reshape(3, 3))
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "param_mean", mean)
        object.__setattr__(self, "param_cov", cov)

    @classmethod
    def form1(cls):
        return cls("form1", FORM1_MEAN, FORM1_COV)

    @classmethod
    def form2(cls):
        return cls("form2", FORM2_MEAN, FORM2_COV)


@dataclass(frozen=True)
class SigmoidLinkSpec:
    """Generator settings for correlated latent paths squashed to intensities."""

    theta: Hyperparameters
    lambda_star: float = DEFAULT_LAMBDA_STAR
    grid_size: int = DEFAULT_GRID_SIZE
    latent_grid_size: int = LATENT_GRID_SIZE

    def __post_init__(self):
        if self.lambda_star <= 0:
            raise ValueError(f"lambda_star must be > 0, got {self.lambda_star}")
        if self.grid_size < 2 or self.latent_grid_size < 2:
            raise ValueError("grid sizes must be >= 2")


def intensity_form1(x, a, b, c):
    """Exponential decay plus a Gaussian bump: a exp(-x/b) + exp(-((x-c)/15)^2)."""
    if b <= 0:
        raise ValueError(f"decay scale b must be > 0, got {b}")
    x = np.asarray(x, dtype=float)
    return a * np.exp(-x / b) + np.exp(-(((x - c) / 15.0) ** 2))


def intensity_form2(x, a, b, c):
    """Chirped sinusoid with decay, a sin(b x^2) exp(-x/c) + 1, clamped at 0."""
    if c <= 0:
        raise ValueError(f"decay scale c must be > 0, got {c}")
    x = np.asarray(x, dtype=float)
    return np.maximum(a * np.sin(b * x**2) * np.exp(-x / c) + 1.0, 0.0)


def draw_unit_params(form, rng):
    """One multivariate-normal parameter draw; the decay scale is redrawn
    until positive (at most MAX_PARAM_DRAWS attempts)."""
    rng = np.random.default_rng(rng)
    positive_index = 1 if form.family == "form1" else 2
    for _ in range(MAX_PARAM_DRAWS):
        params = rng.multivariate_normal(form.param_mean, form.param_cov, method="cholesky")
        if params[positive_index] > 0:
            return params
    raise DataError(
        f"could not draw a positive decay scale in {MAX_PARAM_DRAWS} attempts"
    )


def _interp_fn(grid, values):
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)

    def fn(t):
        return np.interp(t, grid, values)

    return fn


def sample_mgcp_sigmoid(spec, window, rng):
    """Draw one correlated set of unit intensities through the sigmoid link.

    The shared latent process is sampled exactly on a dense latent grid and
    each unit's path is its conditional mean given that draw; with the latent
    grid much finer than the length scales involved, the residual conditional
    variance is negligible, so cross-unit correlations follow the model's
    cross-covariance. Returns (grid, intensities) with intensities shaped
    (n_units, grid_size), each value in (0, lambda_star).
    """
    rng = np.random.default_rng(rng)
    theta = spec.theta
    grid = np.linspace(window.start, window.end, spec.grid_size)
    latent_grid = np.linspace(window.start, window.end, spec.latent_grid_size)

    k_xx = latent_kernel(latent_grid[:, None], latent_grid[None, :], theta.latent_length_scale)
    chol, _ = chol_with_jitter(k_xx)
    x_draw = chol @ rng.standard_normal(latent_grid.size)

    weights = cho_solve(chol, x_draw)
    ell = theta.latent_length_scale
    paths = np.empty((theta.n_units, grid.size))
    for i in range(theta.n_units):
        eta2 = theta.kernel_widths[i] ** 2 + ell**2
        k_fx = (
            theta.kernel_scales[i]
            * np.sqrt(ell**2 / eta2)
            * np.exp(-0.5 * (grid[:, None] - latent_grid[None, :]) ** 2 / eta2)
        )
        paths[i] = k_fx @ weights
    intensities = spec.lambda_star / (1.0 + np.exp(-paths))
    return grid, intensities


def thinning_sample(lambda_fn, lambda_max, window, rng, check_grid=1000):
    """Exact draw from an inhomogeneous Poisson process by thinning.

    Candidates arrive as a homogeneous Poisson(lambda_max) stream over the
    window and survive with probability lambda(t)/lambda_max. The bound is
    validated on a dense grid first.
    """
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be > 0, got {lambda_max}")
    rng = np.random.default_rng(rng)
    grid = np.linspace(window.start, window.end, check_grid)
    on_grid = np.asarray(lambda_fn(grid), dtype=float)
    if np.max(on_grid) > lambda_max * (1 + 1e-9):
        raise ValueError(
            f"intensity exceeds lambda_max: {np.max(on_grid):.6g} > {lambda_max:.6g}"
        )
    n_cand = rng.poisson(lambda_max * window.length)
    times = np.sort(rng.uniform(window.start, window.end, n_cand))
    keep = rng.uniform(0.0, 1.0, n_cand) * lambda_max <= np.asarray(lambda_fn(times), dtype=float)
    return times[keep]


def _mgcp_hyperparams(n_units, rng):
    # moderate length scale with varied per-unit smoothing; positive scales
    widths = rng.uniform(2.0, 8.0, n_units)
    scales = rng.uniform(0.9, 1.8, n_units)
    return Hyperparameters(12.0, widths, scales)


def generate_fleet(
    kind,
    n_units,
    window,
    seed,
    lambda_star=DEFAULT_LAMBDA_STAR,
    intensity_scale=1.0,
    grid_size=DEFAULT_GRID_SIZE,
):
    """Generate a fleet of event streams plus their true intensity functions.

    Returns (EventDataset, truths) where ``truths`` is a list of callables,
    one per unit, evaluating the true intensity at arbitrary times. Unit ids
    are u1..uN; events come from exact thinning with a per-unit bound of
    1.05x the max of the true intensity on a dense grid.
    """
    if kind not in GENERATOR_KINDS:
        raise ValueError(f"unknown generator kind {kind!r}; choose from {GENERATOR_KINDS}")
    if n_units < 2:
        raise DataError(f"a fleet needs >= 2 units, got {n_units}")
    if intensity_scale <= 0:
        raise ValueError(f"intensity_scale must be > 0, got {intensity_scale}")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(n_units + 1)
    param_rng = np.random.default_rng(streams[0])
    grid = np.linspace(window.start, window.end, grid_size)

    truths = []
    if kind == "mgcp-sigmoid":
        spec = SigmoidLinkSpec(
            _mgcp_hyperparams(n_units, param_rng),
            lambda_star=lambda_star * intensity_scale,
            grid_size=grid_size,
        )
        _, intensities = sample_mgcp_sigmoid(spec, window, param_rng)
        for i in range(n_units):
            truths.append(_interp_fn(grid, intensities[i]))
    else:
        form = ParametricForm.form1() if kind == "form1" else ParametricForm.form2()
        base = intensity_form1 if kind == "form1" else intensity_form2
        for _ in range(n_units):
            a, b, c = draw_unit_params(form, param_rng)

            def fn(t, a=a, b=b, c=c):
                return intensity_scale * np.maximum(base(t, a, b, c), 0.0)

            truths.append(fn)

    units = []
    for i, fn in enumerate(truths):
        lam_max = 1.05 * float(np.max(fn(grid)))
        unit_rng = np.random.default_rng(streams[i + 1])
        times = thinning_sample(fn, lam_max, window, unit_rng, check_grid=grid_size)
        units.append(UnitRecord(f"u{i + 1}", times))
    return EventDataset(units, window), truths
