"""Joint source models and their regression (posterior mean) oracles.

Two pipelines share this module:

* scalar pipeline -- a scalar target Y with density on [-A, A] observed
  through n conditionally i.i.d. draws of a noise channel; the posterior
  mean is evaluated by composite Simpson quadrature on a fixed grid with
  log-domain stabilization.
* vector pipeline -- a joint sampler of (X in R^n, Y in R^p) with a
  regression oracle eta(x) = E[Y | X = x], used by the high-resolution
  quantization experiments.

The Gaussian-noise scalar models expose a sufficient-statistic fast path
(the sample mean), which makes million-sample Monte Carlo runs cheap
without changing the estimand: the posterior mean is tabulated on a dense
sample-mean grid using the same Simpson rule and interpolated linearly.
The logistic-noise model uses an exact compiled kernel instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidInputError, NumericalDegeneracyError
from .numerics import POSTERIOR_GRID_POINTS, rng_stream, simpson_nodes_weights

# Number of points of the cached inverse-CDF table used for prior sampling.
PRIOR_CDF_POINTS = 1 << 16

# Generic batch evaluation processes this many (sample, obs) pairs per slab.
_GENERIC_SLAB = 4_000_000


# ---------------------------------------------------------------------------
# scalar channel models
# ---------------------------------------------------------------------------


@dataclass
class ScalarChannelModel:
    """Scalar target with density on [-A, A] plus a smooth noise channel.

    Parameters
    ----------
    half_width : float
        Support half-width A; the target density lives on [-A, A].
    prior_log_density : callable
        Vectorized ``y -> log f_Y(y)``, finite on the support.
    log_prior_lipschitz : float
        Declared Lipschitz constant of ``log f_Y`` on the support.
    cond_log_density : callable
        ``(u, y) -> log dP(X1 = u | Y = y)``; vectorized in both arguments.
    cond_score : callable
        Partial derivative of ``cond_log_density`` in y.
    fisher : callable
        Vectorized ``y -> I(y) > 0``.
    sampler : callable
        ``(y, n_obs, rng) -> (len(y), n_obs)`` conditional draws.
    noise_sigma : float, optional
        Set for additive Gaussian noise; enables the sample-mean fast path.
    eta_batch_fn : callable, optional
        Model-specific exact batch regression ``(model, X) -> eta``.
    """

    name: str
    half_width: float
    prior_log_density: Callable
    log_prior_lipschitz: float
    cond_log_density: Callable
    cond_score: Callable
    fisher: Callable
    sampler: Callable
    noise_sigma: float | None = None
    eta_batch_fn: Callable | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise InvalidInputError(f"half_width must be positive, got {self.half_width}")

    # -- quadrature grid -----------------------------------------------------

    def grid(self):
        """Fixed Simpson nodes/weights plus prior factors on the support."""
        if "grid" not in self._cache:
            nodes, weights = simpson_nodes_weights(
                -self.half_width, self.half_width, POSTERIOR_GRID_POINTS
            )
            log_prior = np.asarray(self.prior_log_density(nodes), dtype=float)
            pw = weights * np.exp(log_prior)
            self._cache["grid"] = (nodes, weights, log_prior, pw, pw * nodes)
        return self._cache["grid"]

    # -- prior sampling (inverse CDF on a cached grid) -----------------------

    def _cdf_table(self):
        if "cdf" not in self._cache:
            ys = np.linspace(-self.half_width, self.half_width, PRIOR_CDF_POINTS)
            pdf = np.exp(np.asarray(self.prior_log_density(ys), dtype=float))
            h = ys[1] - ys[0]
            cdf = np.concatenate(([0.0], np.cumsum((pdf[1:] + pdf[:-1]) * (h / 2.0))))
            cdf /= cdf[-1]
            self._cache["cdf"] = (ys, cdf)
        return self._cache["cdf"]

    def sample_y(self, count: int, rng: np.random.Generator) -> np.ndarray:
        ys, cdf = self._cdf_table()
        return np.interp(rng.random(count), cdf, ys)

    def sample_joint_batch(self, n_obs: int, count: int, rng: np.random.Generator):
        """Draw ``count`` i.i.d. pairs (X in R^n_obs, Y)."""
        if n_obs < 1:
            raise InvalidInputError(f"n_obs must be >= 1, got {n_obs}")
        y = self.sample_y(count, rng)
        x = self.sampler(y, n_obs, rng)
        return x, y

    def sample_eta_y(self, n_obs: int, count: int, rng: np.random.Generator):
        """Draw ``count`` pairs (eta(X), Y) without materializing X.

        For Gaussian noise the sample mean is sufficient, so X enters the
        regression only through ``xbar ~ N(Y, sigma^2 / n)``; drawing xbar
        directly gives the identical joint law of (eta, Y).
        """
        if n_obs < 1:
            raise InvalidInputError(f"n_obs must be >= 1, got {n_obs}")
        y = self.sample_y(count, rng)
        if self.noise_sigma is not None:
            xbar = y + rng.standard_normal(count) * (self.noise_sigma / math.sqrt(n_obs))
            table_x, table_eta = self.eta_table(n_obs)
            return np.interp(xbar, table_x, table_eta), y
        x = self.sampler(y, n_obs, rng)
        return self.regression_batch(x), y

    # -- posterior mean ------------------------------------------------------

    def _loglik_grid_generic(self, x_batch: np.ndarray) -> np.ndarray:
        """Exact summed log-likelihood of each sample on the grid.

        Works in (samples x observations x grid) slabs bounded by
        ``_GENERIC_SLAB`` elements to keep memory flat.
        """
        nodes = self.grid()[0]
        n_samples, n_obs = x_batch.shape
        out = np.zeros((n_samples, nodes.size))
        rows = max(1, _GENERIC_SLAB // (n_obs * nodes.size))
        for r0 in range(0, n_samples, rows):
            block = x_batch[r0 : r0 + rows, :, None]
            out[r0 : r0 + rows] = np.asarray(
                self.cond_log_density(block, nodes[None, None, :])
            ).sum(axis=1)
        return out

    def _posterior_mean_from_loglik(self, loglik: np.ndarray, x_batch: np.ndarray):
        # the prior density is folded into the quadrature factors pw/pwy
        _, _, _, pw, pwy = self.grid()
        g = loglik
        m = g.max(axis=1)
        bad = ~np.isfinite(m)
        if bad.any():
            raise NumericalDegeneracyError(
                f"posterior weights underflow for x={x_batch[np.argmax(bad)]!r}"
            )
        w = np.exp(g - m[:, None])
        den = w @ pw
        if not np.all(den > 0.0) or not np.all(np.isfinite(den)):
            idx = int(np.argmin(den))
            raise NumericalDegeneracyError(
                f"posterior normalizer degenerate for x={x_batch[idx]!r}"
            )
        return (w @ pwy) / den

    def posterior_mean(self, x) -> float:
        """Posterior mean E[Y | X1..Xn = x] by stabilized quadrature.

        Observations are exchangeable, so they are sorted before the
        log-likelihood sum; permuted inputs produce bit-identical output.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.ndim != 1 or x.size < 1:
            raise InvalidInputError("x must be a nonempty 1-D vector of observations")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"non-finite observation in x={x!r}")
        x = np.sort(x)
        loglik = self._loglik_grid_generic(x[None, :])
        return float(self._posterior_mean_from_loglik(loglik, x[None, :])[0])

    # -- batched regression oracle -------------------------------------------

    def eta_table(self, n_obs: int):
        """Tabulated posterior mean against the sample mean (Gaussian noise).

        Rows of the table are exact Simpson-grid posterior means for the
        sufficient statistic; only the lookup between table abscissae is
        linearly interpolated.
        """
        if self.noise_sigma is None:
            raise InvalidInputError(f"model {self.name!r} has no sample-mean reduction")
        key = ("eta_table", n_obs)
        if key not in self._cache:
            a = self.half_width
            tau = self.noise_sigma / math.sqrt(n_obs)
            span_lo, span_hi = -a - 12.0 * tau, a + 12.0 * tau
            npoints = int(min(131_073, max(4097, math.ceil((span_hi - span_lo) / (tau / 32.0)))))
            ts = np.linspace(span_lo, span_hi, npoints)
            nodes = self.grid()[0]
            eta = np.empty(npoints)
            scale = n_obs / (2.0 * self.noise_sigma**2)
            for j0 in range(0, npoints, 1024):
                t = ts[j0 : j0 + 1024, None]
                loglik = -scale * (nodes[None, :] - t) ** 2
                eta[j0 : j0 + 1024] = self._posterior_mean_from_loglik(loglik, t)
            self._cache[key] = (ts, eta)
        return self._cache[key]

    def regression_batch(self, x_batch: np.ndarray) -> np.ndarray:
        """Posterior mean for a batch of samples, one row per sample."""
        x_batch = np.asarray(x_batch, dtype=float)
        if x_batch.ndim != 2 or x_batch.shape[1] < 1:
            raise InvalidInputError("x_batch must have shape (samples, n_obs)")
        if self.noise_sigma is not None:
            table_x, table_eta = self.eta_table(x_batch.shape[1])
            return np.interp(x_batch.mean(axis=1), table_x, table_eta)
        if self.eta_batch_fn is not None:
            return self.eta_batch_fn(self, x_batch)
        loglik = self._loglik_grid_generic(x_batch)
        return self._posterior_mean_from_loglik(loglik, x_batch)


# ---------------------------------------------------------------------------
# catalog: priors
# ---------------------------------------------------------------------------


def _uniform_log_density(half_width: float):
    log_c = -math.log(2.0 * half_width)

    def log_density(y):
        return np.full_like(np.asarray(y, dtype=float), log_c)

    return log_density


def _cosine_log_density(half_width: float):
    # f(y) = (2 + cos(pi * y / A)) / (4 A): strictly positive, smooth,
    # integrates to one; log f is Lipschitz with constant pi / (A sqrt(3)).
    def log_density(y):
        y = np.asarray(y, dtype=float)
        return np.log(2.0 + np.cos(np.pi * y / half_width)) - math.log(4.0 * half_width)

    return log_density


# ---------------------------------------------------------------------------
# catalog: noise channels
# ---------------------------------------------------------------------------


def uniform_gaussian_model(half_width: float, sigma: float) -> ScalarChannelModel:
    """Uniform prior on [-A, A], additive Gaussian noise N(0, sigma^2)."""
    return _gaussian_noise_model(
        f"uniform-gaussian(A={half_width};sigma={sigma})",
        half_width,
        sigma,
        _uniform_log_density(half_width),
        0.0,
    )


def cosine_gaussian_model(half_width: float, sigma: float) -> ScalarChannelModel:
    """Raised-cosine prior (2 + cos(pi y / A)) / 4A, Gaussian noise."""
    return _gaussian_noise_model(
        f"cosine-gaussian(A={half_width};sigma={sigma})",
        half_width,
        sigma,
        _cosine_log_density(half_width),
        math.pi / (half_width * math.sqrt(3.0)),
    )


def _gaussian_noise_model(name, half_width, sigma, prior_log_density, lip):
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    inv_var = 1.0 / sigma**2
    log_norm = -0.5 * math.log(2.0 * math.pi * sigma**2)

    def cond_log_density(u, y):
        return log_norm - 0.5 * inv_var * (np.asarray(u, dtype=float) - y) ** 2

    def cond_score(u, y):
        return (np.asarray(u, dtype=float) - y) * inv_var

    def fisher(y):
        return np.full_like(np.asarray(y, dtype=float), inv_var)

    def sampler(y, n_obs, rng):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return y[:, None] + sigma * rng.standard_normal((y.size, n_obs))

    return ScalarChannelModel(
        name=name,
        half_width=half_width,
        prior_log_density=prior_log_density,
        log_prior_lipschitz=lip,
        cond_log_density=cond_log_density,
        cond_score=cond_score,
        fisher=fisher,
        sampler=sampler,
        noise_sigma=sigma,
    )


def uniform_logistic_model(half_width: float, scale: float) -> ScalarChannelModel:
    """Uniform prior on [-A, A], additive logistic noise with the given scale.

    The score of the logistic location family is (2 F(z) - 1) / s with F
    the logistic CDF, and the Fisher information is 1 / (3 s^2).
    """
    if not (np.isfinite(scale) and scale > 0):
        raise InvalidInputError(f"scale must be positive, got {scale}")
    if half_width / scale > 600.0:
        # keeps exp(+-x/scale) representable inside the batch kernel
        raise InvalidInputError(
            f"half_width/scale = {half_width / scale:.3g} exceeds the supported 600"
        )
    inv_s = 1.0 / scale
    log_s = math.log(scale)

    def cond_log_density(u, y):
        z = (np.asarray(u, dtype=float) - y) * inv_s
        # log f = -z - 2 softplus(-z) - log s, written stably
        return z - 2.0 * np.logaddexp(0.0, z) - log_s

    def cond_score(u, y):
        z = (np.asarray(u, dtype=float) - y) * inv_s
        return (2.0 / (1.0 + np.exp(-z)) - 1.0) * inv_s

    def fisher(y):
        return np.full_like(np.asarray(y, dtype=float), inv_s**2 / 3.0)

    def sampler(y, n_obs, rng):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return rng.logistic(loc=y[:, None], scale=scale, size=(y.size, n_obs))

    def eta_batch(model, x_batch):
        _, _, _, pw, pwy = model.grid()
        nodes = model.grid()[0]
        return _logistic_eta_batch(x_batch, nodes, pw, pwy, inv_s)

    return ScalarChannelModel(
        name=f"uniform-logistic(A={half_width};scale={scale})",
        half_width=half_width,
        prior_log_density=_uniform_log_density(half_width),
        log_prior_lipschitz=0.0,
        cond_log_density=cond_log_density,
        cond_score=cond_score,
        fisher=fisher,
        sampler=sampler,
        eta_batch_fn=eta_batch,
    )


# ---------------------------------------------------------------------------
# compiled logistic batch kernel
# ---------------------------------------------------------------------------
#
# For a logistic location family the summed log-likelihood splits as
#   sum_i softplus(a_i - t) = sum_{a_i > t} (a_i - t) + log prod_i (1 + e^{-|a_i - t|}),
# with a = x / s and t = y / s. The linear part costs O(1) per grid node via
# prefix sums over the sorted observations; the product's factors lie in
# (1, 2], so the running product needs only multiply-adds and cannot
# overflow between periodic renormalizations.


def _logistic_eta_batch(x_batch, nodes, pw, pwy, inv_s):
    kernel = _get_logistic_kernel()
    if kernel is not None:
        return kernel(
            np.ascontiguousarray(x_batch, dtype=float), nodes, pw, pwy, float(inv_s)
        )
    # numpy fallback, exact but slow; used only when numba is unavailable
    out = np.empty(x_batch.shape[0])
    rows = max(1, _GENERIC_SLAB // (x_batch.shape[1] * nodes.size))
    for r0 in range(0, x_batch.shape[0], rows):
        z = (x_batch[r0 : r0 + rows, :, None] - nodes[None, None, :]) * inv_s
        loglik = (z - 2.0 * np.logaddexp(0.0, z)).sum(axis=1)
        w = np.exp(loglik - loglik.max(axis=1)[:, None])
        out[r0 : r0 + rows] = (w @ pwy) / (w @ pw)
    return out


_LOGISTIC_KERNEL = None


def _get_logistic_kernel():
    global _LOGISTIC_KERNEL
    if _LOGISTIC_KERNEL is not None:
        return _LOGISTIC_KERNEL
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover - numba is a declared dependency
        return None

    @njit(parallel=True, fastmath=True, cache=True)
    def kernel(x_batch, nodes, pw, pwy, inv_s):
        n_samples, n_obs = x_batch.shape
        n_grid = nodes.shape[0]
        out = np.empty(n_samples)
        t = nodes * inv_s
        rho_dn = np.exp(-(t[1] - t[0])) if n_grid > 1 else 1.0
        rho_up = 1.0 / rho_dn
        for b in prange(n_samples):
            a = np.sort(x_batch[b] * inv_s)
            e_pos = np.exp(a)
            e_neg = np.exp(-a)
            suffix = np.empty(n_obs + 1)
            suffix[n_obs] = 0.0
            for i in range(n_obs - 1, -1, -1):
                suffix[i] = suffix[i + 1] + a[i]
            loglik = np.empty(n_grid)
            split = 0
            c_dn = np.exp(-t[0])
            c_up = np.exp(t[0])
            mmax = -np.inf
            for g in range(n_grid):
                tg = t[g]
                if g > 0:
                    if g % 256 == 0:  # reseed to cap recurrence drift
                        c_dn = np.exp(-tg)
                        c_up = np.exp(tg)
                    else:
                        c_dn *= rho_dn
                        c_up *= rho_up
                while split < n_obs and a[split] <= tg:
                    split += 1
                linear = suffix[split] - (n_obs - split) * tg
                prod = 1.0
                logacc = 0.0
                for i in range(split):
                    prod *= 1.0 + e_pos[i] * c_dn
                    if prod > 1e300:
                        logacc += np.log(prod)
                        prod = 1.0
                for i in range(split, n_obs):
                    prod *= 1.0 + e_neg[i] * c_up
                    if prod > 1e300:
                        logacc += np.log(prod)
                        prod = 1.0
                softplus_sum = linear + logacc + np.log(prod)
                val = -n_obs * tg - 2.0 * softplus_sum
                loglik[g] = val
                if val > mmax:
                    mmax = val
            num = 0.0
            den = 0.0
            for g in range(n_grid):
                w = np.exp(loglik[g] - mmax)
                num += pwy[g] * w
                den += pw[g] * w
            out[b] = num / den
        return out

    _LOGISTIC_KERNEL = kernel
    return kernel


# ---------------------------------------------------------------------------
# vector joint models
# ---------------------------------------------------------------------------


@dataclass
class VectorJointModel:
    """Joint sampler of (X in R^n, Y in R^p) with a regression oracle.

    Optional moment metadata (first/second/fourth moments of ||eta(X)||,
    subgaussian constant, closed-form mmse) is consumed by the bound
    evaluators when present and estimated empirically otherwise.
    """

    name: str
    n_dim: int
    p_dim: int
    joint_sampler: Callable
    regression: Callable
    eta_norm_moments: tuple[float | None, float | None, float | None] = (None, None, None)
    subgaussian_v: float | None = None
    known_mmse: float | None = None

    def sample_joint_batch(self, count: int, rng: np.random.Generator):
        return self.joint_sampler(count, rng)


class LinearGaussianModel(VectorJointModel):
    """Jointly Gaussian (X, Y): Y ~ N(0, Sigma_Y), X = H Y + W.

    The regression function is linear, eta(x) = A x with
    A = Sigma_Y H' (H Sigma_Y H' + Sigma_W)^{-1}, and the second and
    fourth moments of ||eta(X)|| plus the subgaussian constant come in
    closed form from S = Cov(eta(X)).
    """

    def __init__(self, sigma_y, h, sigma_w):
        sigma_y = np.atleast_2d(np.asarray(sigma_y, dtype=float))
        sigma_w = np.atleast_2d(np.asarray(sigma_w, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        p = sigma_y.shape[0]
        n = sigma_w.shape[0]
        if sigma_y.shape != (p, p) or sigma_w.shape != (n, n) or h.shape != (n, p):
            raise InvalidInputError(
                f"inconsistent shapes: Sigma_Y {sigma_y.shape}, H {h.shape}, Sigma_W {sigma_w.shape}"
            )
        self.sigma_y = sigma_y
        self.sigma_w = sigma_w
        self.h = h
        self._chol_y = np.linalg.cholesky(sigma_y)
        self._chol_w = np.linalg.cholesky(sigma_w)
        gram = h @ sigma_y @ h.T + sigma_w
        self.a_mat = np.linalg.solve(gram, h @ sigma_y).T  # (p, n)
        eta_cov = self.a_mat @ gram @ self.a_mat.T
        tr = float(np.trace(eta_cov))
        e2 = tr
        e4 = tr**2 + 2.0 * float(np.trace(eta_cov @ eta_cov))
        v = float(np.linalg.eigvalsh(eta_cov)[-1])
        mmse = float(np.trace(sigma_y - self.a_mat @ h @ sigma_y))

        def joint_sampler(count, rng):
            y = rng.standard_normal((count, p)) @ self._chol_y.T
            w = rng.standard_normal((count, n)) @ self._chol_w.T
            return y @ h.T + w, y

        def regression(x):
            return np.asarray(x, dtype=float) @ self.a_mat.T

        super().__init__(
            name=f"linear-gaussian(p={p};n={n})",
            n_dim=n,
            p_dim=p,
            joint_sampler=joint_sampler,
            regression=regression,
            eta_norm_moments=(None, e2, e4),
            subgaussian_v=v,
            known_mmse=max(mmse, 0.0),
        )


def closed_form_mmse(model: LinearGaussianModel) -> float:
    """Exact mmse of a linear-Gaussian model, trace(Sigma_Y - A H Sigma_Y)."""
    val = float(np.trace(model.sigma_y - model.a_mat @ model.h @ model.sigma_y))
    if val < -1e-8 * (1.0 + float(np.trace(model.sigma_y))):
        raise NumericalDegeneracyError(f"closed-form mmse came out negative: {val}")
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# spec-level operations on scalar models
# ---------------------------------------------------------------------------


def posterior_mean_scalar(model: ScalarChannelModel, x) -> float:
    """Posterior mean of Y given the vector of observations ``x``."""
    return model.posterior_mean(x)


def sample_joint(model: ScalarChannelModel, n_obs: int, rng: np.random.Generator):
    """One draw of (X in R^n_obs, Y) from the joint law."""
    x, y = model.sample_joint_batch(n_obs, 1, rng)
    return x[0], float(y[0])


def fisher_info(model: ScalarChannelModel, y: float) -> float:
    """Fisher information I(y) of one observation at parameter y."""
    if not np.isfinite(y):
        raise InvalidInputError(f"y must be finite, got {y}")
    if abs(y) > model.half_width:
        raise DomainError(f"y={y} outside the support [-{model.half_width}, {model.half_width}]")
    return float(model.fisher(np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class MomentReport:
    """Empirical moments of ||eta(X)|| with standard errors.

    ``v`` is the model's declared subgaussian constant when available,
    otherwise the empirical log-MGF proxy (flagged by ``v_is_estimate``).
    """

    e1: float
    e1_se: float
    e2: float
    e2_se: float
    e4: float
    e4_se: float
    v: float
    v_is_estimate: bool
    n_samples: int


_MGF_LAMBDAS = (-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0)


def moment_report(model: VectorJointModel, n_samples: int, seed: int) -> MomentReport:
    """Estimate E||eta||, E||eta||^2, E||eta||^4 from fresh joint draws."""
    if n_samples < 1000:
        raise InvalidInputError(f"moment_report needs n_samples >= 1000, got {n_samples}")
    rng = rng_stream(seed, 9)
    x, _ = model.sample_joint_batch(n_samples, rng)
    norms = np.linalg.norm(np.atleast_2d(model.regression(x)), axis=-1)

    def mean_se(z):
        return float(z.mean()), float(z.std(ddof=1) / math.sqrt(n_samples))

    e1, e1_se = mean_se(norms)
    e2, e2_se = mean_se(norms**2)
    e4, e4_se = mean_se(norms**4)
    if model.subgaussian_v is not None:
        v, v_est = float(model.subgaussian_v), False
    else:
        centered = norms - e1
        v = 0.0
        for lam in _MGF_LAMBDAS:
            mgf = float(np.exp(lam * centered).mean())
            v = max(v, 2.0 * math.log(mgf) / lam**2)
        v_est = True
    return MomentReport(e1, e1_se, e2, e2_se, e4, e4_se, v, v_est, n_samples)
