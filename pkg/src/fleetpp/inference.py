"""Variational inference for the shared-latent Poisson intensity model.

The variational family is a Gaussian N(m, S) over the latent process at M
inducing points, with S = L L^T. The evidence lower bound is

    L = - sum_i int_{T_i} exp(mu_i(u) + var_i(u)/2) du
        + sum_i sum_p mu_i(t_ip)
        - KL(N(m, S) || N(0, K_xx))

where (mu_i, var_i) are the closed-form posterior moments of unit i's latent
log intensity under the variational distribution, and T_i is unit i's
observation region (window start up to its ``observed_until``). The bound is
maximized jointly over the augmented vector

    Theta = [log ell, log xi_1..N, alpha_1..N, m, vech(L)]

with analytic gradients throughout.
"""

import json
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from .errors import DataError, NumericalError
from .events import ObservationWindow
from .kernels import (
    Hyperparameters,
    InducingPoints,
    build_gram,
    cho_solve,
    chol_with_jitter,
    latent_kernel,
)
from .quadrature import gauss_legendre_panels

VAR_FLOOR = 1e-12
EXP_GUARD = 700.0
DEFAULT_QUAD_ORDER = 10
DEFAULT_QUAD_PANELS = 20


@dataclass(frozen=True)
class VariationalState:
    """Variational Gaussian over the latent process at the inducing points."""

    m: np.ndarray
    chol_s: np.ndarray
    Z: InducingPoints

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).reshape(-1)
        L = np.asarray(self.chol_s, dtype=float)
        M = self.Z.m
        if m.size != M:
            raise ValueError(f"m has length {m.size}, expected {M}")
        if L.shape != (M, M):
            raise ValueError(f"chol_s has shape {L.shape}, expected {(M, M)}")
        if np.any(np.triu(L, 1) != 0):
            raise ValueError("chol_s must be lower triangular")
        if np.any(np.diag(L) <= 0):
            raise ValueError("chol_s must have positive diagonal")
        m.setflags(write=False)
        L = L.copy()
        L.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "chol_s", L)

    @property
    def cov(self):
        return self.chol_s @ self.chol_s.T

    @classmethod
    def prior_scaled(cls, theta, Z, scale=0.5):
        """m = 0 and S = scale^2 * K_xx; the near-prior starting state."""
        k_xx = latent_kernel(Z.locations[:, None], Z.locations[None, :], theta.latent_length_scale)
        chol, _ = chol_with_jitter(k_xx)
        return cls(np.zeros(Z.m), scale * chol, Z)


_CONFIG_KEYS = {
    "quad_order": int,
    "max_iters": int,
    "tol": float,
    "seed": int,
    "num_inducing": int,
    "optimize_inducing": bool,
    "optimizer": str,
    "init_jitter": float,
}


@dataclass(frozen=True)
class FitConfig:
    """Optimizer and quadrature settings for :func:`fit`."""

    quad_order: int = DEFAULT_QUAD_ORDER
    quad_panels: int = DEFAULT_QUAD_PANELS
    max_iters: int = 500
    tol: float = 1e-7
    optimizer: str = "lbfgs"
    seed: int = 0
    num_inducing: int = 10
    optimize_inducing: bool = False
    init_jitter: float = 0.0

    def __post_init__(self):
        if self.quad_order < 4:
            raise ValueError(f"quad_order must be >= 4, got {self.quad_order}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_file(cls, path):
        """Read ``key = value`` lines; '#' starts a comment; unknown keys fail."""
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
                key, _, val = line.partition("=")
                key = key.strip()
                val = val.strip()
                if key not in _CONFIG_KEYS:
                    raise DataError(f"line {lineno}: unknown config key {key!r}")
                conv = _CONFIG_KEYS[key]
                if conv is bool:
                    if val.lower() not in ("true", "false", "1", "0"):
                        raise DataError(f"line {lineno}: bad boolean {val!r}")
                    values[key] = val.lower() in ("true", "1")
                else:
                    values[key] = conv(val)
        return cls(**values)


@dataclass(frozen=True)
class FittedModel:
    """Optimized hyperparameters and variational state plus fit diagnostics."""

    theta: Hyperparameters
    vstate: VariationalState
    window: ObservationWindow
    unit_ids: tuple
    observed_until: np.ndarray
    elbo_value: float
    trace: np.ndarray
    converged: bool
    n_iters: int

    def index_of(self, unit_id):
        if unit_id in self.unit_ids:
            return self.unit_ids.index(unit_id)
        raise DataError(f"unknown unit {unit_id!r}; known units: {list(self.unit_ids)}")

    def to_json_dict(self):
        return {
            "latent_length_scale": self.theta.latent_length_scale,
            "kernel_widths": self.theta.kernel_widths.tolist(),
            "kernel_scales": self.theta.kernel_scales.tolist(),
            "inducing_points": self.vstate.Z.locations.tolist(),
            "m": self.vstate.m.tolist(),
            "chol_s": self.vstate.chol_s.tolist(),
            "window": [self.window.start, self.window.end],
            "unit_ids": list(self.unit_ids),
            "observed_until": np.asarray(self.observed_until).tolist(),
            "elbo": self.elbo_value,
            "trace": np.asarray(self.trace).tolist(),
            "converged": self.converged,
            "n_iters": self.n_iters,
        }

    @classmethod
    def from_json_dict(cls, doc):
        theta = Hyperparameters(
            doc["latent_length_scale"],
            np.asarray(doc["kernel_widths"]),
            np.asarray(doc["kernel_scales"]),
        )
        Z = InducingPoints(np.asarray(doc["inducing_points"]))
        vstate = VariationalState(np.asarray(doc["m"]), np.asarray(doc["chol_s"]), Z)
        return cls(
            theta=theta,
            vstate=vstate,
            window=ObservationWindow(*doc["window"]),
            unit_ids=tuple(doc["unit_ids"]),
            observed_until=np.asarray(doc["observed_until"], dtype=float),
            elbo_value=float(doc["elbo"]),
            trace=np.asarray(doc["trace"], dtype=float),
            converged=bool(doc["converged"]),
            n_iters=int(doc["n_iters"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# posterior moments and the three bound terms
# ---------------------------------------------------------------------------


def _moments_arrays(units, times, theta, vstate):
    units = np.asarray(units, dtype=int)
    times = np.asarray(times, dtype=float)
    if np.any(~np.isfinite(times)):
        raise ValueError("non-finite time in points")
    gram = build_gram(np.column_stack([units, times]), vstate.Z, theta)
    return _moments_from_gram(gram, vstate)


def _moments_from_gram(gram, vstate):
    b = cho_solve(gram.chol, gram.k_fx.T)
    a = cho_solve(gram.chol, vstate.m)
    mu = gram.k_fx @ a
    s = vstate.cov
    qf1 = np.einsum("nm,mn->n", gram.k_fx, b)
    qf2 = np.einsum("mn,mn->n", b, s @ b)
    var = np.maximum(gram.k_diag - qf1 + qf2, VAR_FLOOR)
    return mu, var


def posterior_moments(points, theta, vstate):
    """Mean and variance of the latent log intensity at (unit, time) points.

    Variances are the diagonal of the posterior covariance only, floored at
    VAR_FLOOR.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    return _moments_arrays(pts[:, 0].astype(int), pts[:, 1], theta, vstate)


def kl_term(vstate, k_xx):
    """KL divergence from N(m, S) to the zero-mean prior with covariance k_xx."""
    chol, _ = chol_with_jitter(np.asarray(k_xx, dtype=float))
    m = vstate.m
    L = vstate.chol_s
    s = vstate.cov
    k_inv_s = cho_solve(chol, s)
    a = cho_solve(chol, m)
    logdet_k = 2.0 * np.sum(np.log(np.diag(chol)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(L)))
    return 0.5 * (np.trace(k_inv_s) + m @ a - m.size + logdet_k - logdet_s)


def _normalize_regions(window, n_units):
    if isinstance(window, ObservationWindow):
        return [(window.start, window.end)] * n_units
    regions = [(float(a), float(b)) for a, b in window]
    if len(regions) != n_units:
        raise ValueError(f"got {len(regions)} regions for {n_units} units")
    return regions


def expected_integral_term(
    theta, vstate, window, quad_order=DEFAULT_QUAD_ORDER, quad_panels=DEFAULT_QUAD_PANELS
):
    """Per-unit and total expected intensity mass, int exp(mu + var/2).

    ``window`` is either one ObservationWindow applied to every unit or a
    sequence of per-unit (start, end) regions. Returns (total, per_unit).
    """
    if quad_order < 4:
        raise ValueError(f"quad_order must be >= 4, got {quad_order}")
    regions = _normalize_regions(window, theta.n_units)
    per_unit = np.zeros(theta.n_units)
    for i, (a, b) in enumerate(regions):
        nodes, weights = gauss_legendre_panels(a, b, quad_order, quad_panels)
        mu, var = _moments_arrays(np.full(nodes.size, i), nodes, theta, vstate)
        expo = mu + 0.5 * var
        if np.max(expo) > EXP_GUARD:
            raise NumericalError(
                f"unit {i}: integrand exponent {np.max(expo):.1f} exceeds {EXP_GUARD:.0f}; "
                "rescale times or intensities"
            )
        per_unit[i] = weights @ np.exp(expo)
    return float(per_unit.sum()), per_unit


def data_term(ds, theta, vstate):
    """Sum of posterior-mean log intensity over all observed events."""
    units = np.concatenate(
        [np.full(u.n_events, i) for i, u in enumerate(ds.units)] or [np.zeros(0, dtype=int)]
    )
    times = np.concatenate([u.event_times for u in ds.units] or [np.zeros(0)])
    if times.size == 0:
        return 0.0
    mu, _ = _moments_arrays(units, times, theta, vstate)
    return float(mu.sum())


def _unit_regions(ds):
    return [(ds.window.start, u.observed_until) for u in ds.units]


def elbo(ds, theta, vstate, config=None):
    """Evidence lower bound: -(integral term) + (data term) - (KL term).

    Each unit's integral runs over its own observation region, so partially
    observed units are not penalized for the unobserved remainder.
    """
    config = config or FitConfig()
    if theta.n_units != ds.n_units:
        raise ValueError(f"theta has {theta.n_units} units, dataset has {ds.n_units}")
    total, _ = expected_integral_term(
        theta, vstate, _unit_regions(ds), config.quad_order, config.quad_panels
    )
    k_xx = latent_kernel(
        vstate.Z.locations[:, None], vstate.Z.locations[None, :], theta.latent_length_scale
    )
    return -total + data_term(ds, theta, vstate) - kl_term(vstate, k_xx)


# ---------------------------------------------------------------------------
# augmented parameter vector
# ---------------------------------------------------------------------------


def pack_params(theta, m, chol_s):
    """Flatten to [log ell, log xi_1..N, alpha_1..N, m, vech(L)]."""
    M = m.size
    rows, cols = np.tril_indices(M)
    return np.concatenate(
        [
            [np.log(theta.latent_length_scale)],
            np.log(theta.kernel_widths),
            theta.kernel_scales,
            m,
            np.asarray(chol_s)[rows, cols],
        ]
    )


def unpack_params(x, n_units, m_inducing):
    """Inverse of :func:`pack_params`; returns (ell, xi, alpha, m, L)."""
    n, M = n_units, m_inducing
    ell = np.exp(x[0])
    xi = np.exp(x[1 : 1 + n])
    alpha = x[1 + n : 1 + 2 * n]
    m = x[1 + 2 * n : 1 + 2 * n + M]
    L = np.zeros((M, M))
    rows, cols = np.tril_indices(M)
    L[rows, cols] = x[1 + 2 * n + M :]
    return ell, xi, alpha, m, L


def n_params(n_units, m_inducing):
    return 1 + 2 * n_units + m_inducing + m_inducing * (m_inducing + 1) // 2


# ---------------------------------------------------------------------------
# ELBO value + gradient engine
# ---------------------------------------------------------------------------


class _ElboMachine:
    """Precomputed per-unit blocks for fast repeated ELBO/gradient evaluation.

    Each unit's block stacks its quadrature nodes (over the unit's own
    observation region) followed by its event times. ``clip_overflow``
    saturates the integrand exponent at EXP_GUARD so line searches see large
    finite values instead of overflow; the public operations raise instead.
    """

    def __init__(self, ds, Z, quad_order, quad_panels, clip_overflow=False):
        self.n_units = ds.n_units
        self.locations = np.asarray(Z.locations, dtype=float)
        self.M = self.locations.size
        self.clip_overflow = clip_overflow
        self.blocks = []
        for i, u in enumerate(ds.units):
            nodes, weights = gauss_legendre_panels(
                ds.window.start, u.observed_until, quad_order, quad_panels
            )
            times = np.concatenate([nodes, u.event_times])
            self.blocks.append(
                {
                    "times": times,
                    "weights": weights,
                    "n_nodes": nodes.size,
                    "d2": (times[:, None] - self.locations[None, :]) ** 2,
                }
            )
        self._z_d2 = (self.locations[:, None] - self.locations[None, :]) ** 2

    def set_locations(self, locations):
        """Re-point the machine at new inducing locations (experimental path)."""
        self.locations = np.asarray(locations, dtype=float)
        self._z_d2 = (self.locations[:, None] - self.locations[None, :]) ** 2
        for blk in self.blocks:
            blk["d2"] = (blk["times"][:, None] - self.locations[None, :]) ** 2

    def value(self, x):
        return self._eval(x, want_grad=False)[0]

    def value_and_grad(self, x):
        return self._eval(x, want_grad=True)

    def _eval(self, x, want_grad):
        n, M = self.n_units, self.M
        ell, xi, alpha, m, L = unpack_params(x, n, M)
        if np.any(np.abs(np.diag(L)) < 1e-300):
            # log|S| undefined; report a hugely bad objective to force backoff
            return -np.inf, np.zeros_like(x)

        k = np.exp(-0.5 * self._z_d2 / ell**2)
        chol, _ = chol_with_jitter(k)
        eye = np.eye(M)
        k_inv = cho_solve(chol, eye)
        a = cho_solve(chol, m)
        s = L @ L.T

        logdet_k = 2.0 * np.sum(np.log(np.diag(chol)))
        logdet_s = 2.0 * np.sum(np.log(np.abs(np.diag(L))))
        kl = 0.5 * (np.sum(k_inv * s) + m @ a - M + logdet_k - logdet_s)

        w2 = 2.0 * xi**2 + ell**2
        v = alpha**2 * ell / np.sqrt(w2)

        value = -kl
        if want_grad:
            grad = np.zeros_like(x)
            acc_rb = np.zeros(M)       # sum_j r_j b_j
            acc_wl = np.zeros((M, M))  # sum_j s_j b_j b_j^T
            acc_tr = np.zeros((M, M))  # sum_j s_j (b_j - 2 c_j) b_j^T
            grad_ell_local = 0.0

        for i, blk in enumerate(self.blocks):
            eta2 = xi[i] ** 2 + ell**2
            e = np.exp(-0.5 * blk["d2"] / eta2)
            p0 = np.sqrt(ell**2 / eta2) * e
            p = alpha[i] * p0
            b = cho_solve(chol, p.T)
            mu = p @ a
            qf1 = np.einsum("nm,mn->n", p, b)
            sb = s @ b
            qf2 = np.einsum("mn,mn->n", b, sb)
            var_raw = v[i] - qf1 + qf2
            var = np.maximum(var_raw, VAR_FLOOR)

            nn = blk["n_nodes"]
            expo = mu[:nn] + 0.5 * var[:nn]
            over = expo > EXP_GUARD
            if np.any(over):
                if not self.clip_overflow:
                    raise NumericalError(
                        f"unit {i}: integrand exponent {np.max(expo):.1f} exceeds "
                        f"{EXP_GUARD:.0f}; rescale times or intensities"
                    )
                expo = np.minimum(expo, EXP_GUARD)
            g = np.exp(expo)
            value += -(blk["weights"] @ g) + mu[nn:].sum()

            if not want_grad:
                continue

            wg = blk["weights"] * g
            if np.any(over):
                wg = np.where(over, 0.0, wg)  # saturated nodes carry no gradient
            r = np.concatenate([-wg, np.ones(mu.size - nn)])
            s_coef = np.concatenate([-0.5 * wg, np.zeros(mu.size - nn)])
            s_coef = np.where(var_raw > VAR_FLOOR, s_coef, 0.0)

            c = cho_solve(chol, sb)
            bc = b - c
            acc_rb += b @ r
            acc_wl += (b * s_coef) @ b.T
            acc_tr += ((b - 2.0 * c) * s_coef) @ b.T

            # alpha_i
            dmu = p0 @ a
            dv = 2.0 * alpha[i] * ell / np.sqrt(w2[i])
            dsig = dv - 2.0 * np.einsum("nm,mn->n", p0, bc)
            grad[1 + n + i] = r @ dmu + s_coef @ dsig

            # log xi_i
            dp = p * (xi[i] * (blk["d2"] - eta2) / eta2**2)
            dmu = dp @ a
            dv = -2.0 * v[i] * xi[i] / w2[i]
            dsig = dv - 2.0 * np.einsum("nm,mn->n", dp, bc)
            grad[1 + i] = xi[i] * (r @ dmu + s_coef @ dsig)

            # ell, local part
            dp = p * (1.0 / ell - ell / eta2 + ell * blk["d2"] / eta2**2)
            dmu = dp @ a
            dv = v[i] * (1.0 / ell - ell / w2[i])
            dsig = dv - 2.0 * np.einsum("nm,mn->n", dp, bc)
            grad_ell_local += r @ dmu + s_coef @ dsig

        if not want_grad:
            return value, None

        # m and vech(L)
        grad_m = acc_rb - a
        diag_l = np.diag(L)
        grad_L = 2.0 * acc_wl @ L - k_inv @ L + np.diag(1.0 / diag_l)
        rows, cols = np.tril_indices(M)
        n_head = 1 + 2 * n
        grad[n_head : n_head + M] = grad_m
        grad[n_head + M :] = grad_L[rows, cols]

        # ell, parts through K_xx (moments and KL)
        dk = k * self._z_d2 / ell**3
        g_kl = 0.5 * (k_inv - k_inv @ s @ k_inv - np.outer(a, a))
        grad_ell = (
            grad_ell_local
            - acc_rb @ dk @ a
            + np.sum(dk * acc_tr.T)
            - np.sum(g_kl * dk)
        )
        grad[0] = ell * grad_ell
        return value, grad


def elbo_gradient(ds, theta, vstate, config=None):
    """Gradient of the bound over [log ell, log xi, alpha, m, vech(L)]."""
    config = config or FitConfig()
    machine = _ElboMachine(ds, vstate.Z, config.quad_order, config.quad_panels)
    x = pack_params(theta, vstate.m, vstate.chol_s)
    _, grad = machine.value_and_grad(x)
    return grad


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def default_initial_params(ds, Z):
    """Near-prior start: ell = 10% of window, xi = ell/2, alpha = 1, m = 0,
    L = 0.5 chol(K_xx)."""
    ell0 = 0.1 * ds.window.length
    n = ds.n_units
    theta0 = Hyperparameters(ell0, np.full(n, ell0 / 2.0), np.ones(n))
    k_xx = latent_kernel(Z.locations[:, None], Z.locations[None, :], ell0)
    chol, _ = chol_with_jitter(k_xx)
    return theta0, np.zeros(Z.m), 0.5 * chol


def _canonical_lower(L):
    """Flip column signs so the diagonal is positive; leaves L L^T unchanged."""
    signs = np.where(np.diag(L) < 0, -1.0, 1.0)
    return L * signs[None, :]


def _adam_polish(machine, x0, steps, lr=1e-2):
    """First-order fallback when the quasi-Newton line search gives up."""
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    x = x0.copy()
    mom = np.zeros_like(x)
    vel = np.zeros_like(x)
    best_val, best_x = -np.inf, x0.copy()
    for t in range(1, steps + 1):
        val, grad = machine.value_and_grad(x)
        if np.isfinite(val) and val > best_val:
            best_val, best_x = val, x.copy()
        if not np.all(np.isfinite(grad)):
            break
        mom = beta1 * mom + (1 - beta1) * grad
        vel = beta2 * vel + (1 - beta2) * grad**2
        m_hat = mom / (1 - beta1**t)
        v_hat = vel / (1 - beta2**t)
        x = x + lr * m_hat / (np.sqrt(v_hat) + eps)
    val = machine.value(x)
    if np.isfinite(val) and val > best_val:
        best_val, best_x = val, x
    return best_val, best_x


def fit(ds, config=None):
    """Maximize the bound over the augmented parameter vector.

    Deterministic given ``config.seed``: the default initialization is
    seed-independent and any ``init_jitter`` perturbation is drawn from a
    generator seeded with it. Returns the best state encountered together
    with a nondecreasing best-so-far ELBO trace.
    """
    config = config or FitConfig()
    Z = InducingPoints.equally_spaced(ds.window, config.num_inducing)
    theta0, m0, L0 = default_initial_params(ds, Z)
    if config.init_jitter > 0:
        rng = np.random.default_rng(config.seed)
        theta0 = replace(
            theta0,
            kernel_scales=theta0.kernel_scales
            + config.init_jitter * rng.standard_normal(ds.n_units),
        )
        m0 = m0 + config.init_jitter * rng.standard_normal(Z.m)
    x0 = pack_params(theta0, m0, L0)

    machine = _ElboMachine(ds, Z, config.quad_order, config.quad_panels, clip_overflow=True)

    best = {"val": -np.inf, "x": x0.copy()}
    trace = []

    def objective(x):
        val, grad = machine.value_and_grad(x)
        if np.isfinite(val) and val > best["val"]:
            best["val"], best["x"] = val, x.copy()
        if not np.isfinite(val):
            return 1e100, np.zeros_like(x)
        return -val, -grad

    def callback(_xk):
        trace.append(best["val"])

    val0 = machine.value(x0)
    best["val"] = val0
    trace.append(val0)

    if config.optimizer == "lbfgs" and config.max_iters > 0:
        if config.optimize_inducing:
            res = _fit_with_inducing(machine, x0, Z, config, best, trace)
        else:
            res = scipy.optimize.minimize(
                objective,
                x0,
                jac=True,
                method="L-BFGS-B",
                callback=callback,
                options={
                    "maxiter": config.max_iters,
                    "ftol": config.tol,
                    "gtol": 1e-12,
                    "maxcor": 20,
                },
            )
        converged = bool(res.success)
        if res.status == 2:
            # abnormal line-search termination: polish with fixed-step updates
            adam_val, adam_x = _adam_polish(machine, best["x"], steps=min(200, config.max_iters))
            if adam_val > best["val"]:
                best["val"], best["x"] = adam_val, adam_x
            trace.append(best["val"])
    else:
        adam_val, adam_x = _adam_polish(machine, x0, steps=config.max_iters)
        if adam_val > best["val"]:
            best["val"], best["x"] = adam_val, adam_x
        trace.append(best["val"])
        converged = True

    ell, xi, alpha, m, L = unpack_params(best["x"], ds.n_units, Z.m)
    if config.optimize_inducing and "z" in best:
        Z, m, L = _sorted_inducing_state(best["z"], m, L)
    theta = Hyperparameters(ell, xi, alpha)
    vstate = VariationalState(m, _canonical_lower(L), Z)
    return FittedModel(
        theta=theta,
        vstate=vstate,
        window=ds.window,
        unit_ids=tuple(ds.unit_ids),
        observed_until=np.asarray([u.observed_until for u in ds.units]),
        elbo_value=float(best["val"]),
        trace=np.maximum.accumulate(np.asarray(trace, dtype=float)),
        converged=converged,
        n_iters=max(len(trace) - 1, 0),
    )


def _fit_with_inducing(machine, x0, Z, config, best, trace):
    """Experimental: optimize inducing locations too, by finite differences.

    The main block keeps its analytic gradient; the appended Z block gets
    central differences. Locations are sorted (with the matching permutation
    applied to m and S) when the final state is assembled.
    """
    n_main = x0.size
    xz0 = np.concatenate([x0, Z.locations])

    def split(xz):
        return xz[:n_main], xz[n_main:]

    def value(xz):
        x, z = split(xz)
        machine.set_locations(z)
        return machine.value(x)

    def objective(xz):
        x, z = split(xz)
        machine.set_locations(z)
        val, grad_x = machine.value_and_grad(x)
        if np.isfinite(val) and val > best["val"]:
            best["val"], best["x"] = val, x.copy()
            best["z"] = z.copy()
        if not np.isfinite(val):
            return 1e100, np.zeros_like(xz)
        h = 1e-5 * max(1.0, np.max(np.abs(z)))
        grad_z = np.zeros_like(z)
        for k in range(z.size):
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            machine.set_locations(zp)
            vp = machine.value(x)
            machine.set_locations(zm)
            vm = machine.value(x)
            grad_z[k] = (vp - vm) / (2 * h)
        machine.set_locations(z)
        return -val, -np.concatenate([grad_x, grad_z])

    best["z"] = Z.locations.copy()
    return scipy.optimize.minimize(
        objective,
        xz0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda _x: trace.append(best["val"]),
        options={"maxiter": config.max_iters, "ftol": config.tol, "gtol": 1e-12, "maxcor": 20},
    )


def _sorted_inducing_state(z, m, L):
    """Sort optimized locations, permuting m and S to match."""
    order = np.argsort(z)
    s = (L @ L.T)[np.ix_(order, order)]
    chol, _ = chol_with_jitter(s)
    return InducingPoints(z[order]), m[order], chol
