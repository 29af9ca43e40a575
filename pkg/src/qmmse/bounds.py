"""Right-hand sides of the nonasymptotic regret bounds, plus diagnostics
for the posterior-concentration machinery behind the scalar-pipeline bound.

The theory asserts the existence of absolute constants without giving
values, so every evaluator takes its constant(s) explicitly and
:class:`BoundConfig` carries the package-wide defaults (all 1). Harnesses
fit each constant once on a designated calibration cell and freeze it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError
from .model import ScalarChannelModel
from .numerics import chunk_sizes, rng_stream, simpson_nodes_weights

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BoundConfig:
    """Package-wide constants for the bound evaluators.

    ``l_thm1`` scales the scalar-pipeline bound, ``c_corollary`` its
    codebook-size corollary; ``c_thm2_moment`` and ``(c1_thm2, c2_thm2)``
    scale the two high-resolution bounds; ``l0_bvm`` and ``c_abs`` are the
    concentration-event constants used by the diagnostics.
    """

    l_thm1: float = 1.0
    c_corollary: float = 1.0
    c_thm2_moment: float = 1.0
    c1_thm2: float = 1.0
    c2_thm2: float = 1.0
    l0_bvm: float = 1.0
    c_abs: float = 1.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not (np.isfinite(val) and val > 0):
                raise InvalidInputError(f"constant {name} must be positive, got {val}")


@dataclass(frozen=True)
class BoundReport:
    """One evaluated bound: name, value, echoed inputs, optional minimizer."""

    bound: str
    value: float
    inputs: dict
    r_star: float | None = None
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {"bound": self.bound, "value": self.value}
        if self.r_star is not None:
            out["r_star"] = self.r_star
        out["config"] = self.config
        out["inputs"] = self.inputs
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


# ---------------------------------------------------------------------------
# scalar-pipeline bounds
# ---------------------------------------------------------------------------


def thm1_rhs(l: float, delta: float, n_obs: int, e_inv_sqrt_fisher: float, mmse: float) -> float:
    """Scalar-pipeline regret-vs-distortion gap bound for a codebook with
    largest gap ``delta``:  L * delta^2 * min{1, (E[1/sqrt(I)] + sqrt(mmse))
    / (delta * sqrt(n))}."""
    _check_positive(l=l, delta=delta, n_obs=n_obs, e_inv_sqrt_fisher=e_inv_sqrt_fisher)
    if mmse < 0:
        raise InvalidInputError(f"mmse must be >= 0, got {mmse}")
    kappa = e_inv_sqrt_fisher + math.sqrt(mmse)
    return l * delta**2 * min(1.0, kappa / (delta * math.sqrt(n_obs)))


def thm1_rhs_gaussian(l: float, delta: float, n_obs: int, sigma: float) -> float:
    """Gaussian-noise specialization: L * delta^2 * min{1, sigma/(delta sqrt n)}."""
    _check_positive(l=l, delta=delta, n_obs=n_obs)
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    return l * delta**2 * min(1.0, sigma / (delta * math.sqrt(n_obs)))


def corollary_rhs(k: int, n_obs: int, e_inv_sqrt_fisher: float, mmse: float, c: float) -> float:
    """Optimal-codebook version of the gap bound:
    c * min{1/k^2, (E[1/sqrt(I)] + sqrt(mmse)) / (k sqrt(n))}."""
    _check_positive(c=c, k=k, n_obs=n_obs, e_inv_sqrt_fisher=e_inv_sqrt_fisher)
    if mmse < 0:
        raise InvalidInputError(f"mmse must be >= 0, got {mmse}")
    kappa = e_inv_sqrt_fisher + math.sqrt(mmse)
    return c * min(1.0 / k**2, kappa / (k * math.sqrt(n_obs)))


def fisher_expectations(model: ScalarChannelModel):
    """(E[1/sqrt(I(Y))], E[1/I(Y)]) by the shared Simpson quadrature."""
    nodes, weights = simpson_nodes_weights(-model.half_width, model.half_width)
    fy = np.exp(np.asarray(model.prior_log_density(nodes), dtype=float))
    info = np.asarray(model.fisher(nodes), dtype=float)
    if not np.all(np.isfinite(info)) or np.any(info <= 0):
        raise DomainError("Fisher information is undefined or nonpositive on the support")
    e_inv_sqrt = float((weights * fy / np.sqrt(info)).sum())
    e_inv = float((weights * fy / info).sum())
    return e_inv_sqrt, e_inv


def info_inequality_gap(model: ScalarChannelModel, n_obs: int, mmse_hat: float) -> float:
    """mmse_hat minus the information-inequality floor (1/n) E[1/I(Y)].

    The floor is an asymptotic lower bound: with a compactly supported
    prior, boundary truncation lets the true Bayes risk undershoot it by
    a relative O(1/(A sqrt(n I))) at finite n. The gap is therefore only
    expected to clear Monte Carlo noise in the interior regime, where the
    posterior width is small against the support.
    """
    _check_positive(n_obs=n_obs)
    _, e_inv = fisher_expectations(model)
    return float(mmse_hat) - e_inv / n_obs


# ---------------------------------------------------------------------------
# high-resolution (vector-pipeline) bounds
# ---------------------------------------------------------------------------


def thm2_bound_moment(e2: float, e4: float, k: int, p: int, c: float) -> float:
    """Fourth-moment regret bound: c * (e2 * e4)^(2/3) * k^(-2/(3p))."""
    _check_positive(e2=e2, e4=e4, k=k, p=p, c=c)
    return c * (e2 * e4) ** (2.0 / 3.0) * k ** (-2.0 / (3.0 * p))


def thm2_bound_subgaussian(
    e1: float, e4: float, v: float, k: int, p: int, c1: float, c2: float
):
    """Subgaussian regret bound: minimize over admissible ball radii
    g(r) = c1 r^2 k^(-2/p) + c2 sqrt(e4) exp(-(r - e1)^2 / (4 v)).

    The bracket is (e1, e1 + 20 sqrt(v)]. Because g need not be unimodal
    (a convex ramp plus a decaying tail), a coarse scan locates the global
    basin first and golden-section search then refines it to a relative
    tolerance of 1e-8. Returns ``(value, r_star)``.
    """
    _check_positive(e1=e1, e4=e4, v=v, k=k, p=p, c1=c1, c2=c2)
    k_term = float(k) ** (-2.0 / p)
    tail_scale = c2 * math.sqrt(e4)

    def g(r):
        return c1 * r * r * k_term + tail_scale * math.exp(-((r - e1) ** 2) / (4.0 * v))

    lo = e1 + 1e-12 * (1.0 + e1)
    hi = e1 + 20.0 * math.sqrt(v)
    scan = np.linspace(lo, hi, 1025)
    vals = np.array([g(r) for r in scan])
    i = int(vals.argmin())
    a = scan[max(i - 1, 0)]
    b = scan[min(i + 1, scan.size - 1)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = g(x1), g(x2)
    while (b - a) > 1e-8 * max(1.0, abs(b)):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = g(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = g(x2)
    r_star = x1 if f1 <= f2 else x2
    return g(r_star), float(r_star)


def weakened_thm2(k: float, p: int, c: float) -> float:
    """Suboptimal-radius weakening of the subgaussian bound: c log(k) / k^(2/p)."""
    _check_positive(p=p, c=c)
    if not k >= 2:
        raise InvalidInputError(f"weakened bound needs k >= 2, got {k}")
    return c * math.log(k) / float(k) ** (2.0 / p)


# ---------------------------------------------------------------------------
# posterior-concentration diagnostics
# ---------------------------------------------------------------------------


def score_average_Gn(model: ScalarChannelModel, x, y: float) -> float:
    """Normalized score average (1 / (n I(y))) * sum_i dℓ(x_i, y)/dy."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("observations must be finite")
    if not np.isfinite(y) or abs(y) > model.half_width:
        raise DomainError(f"y={y} outside the support")
    info = float(model.fisher(np.asarray(y, dtype=float)))
    return float(np.asarray(model.cond_score(x, y), dtype=float).sum()) / (x.size * info)


_BVM_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


def bvm_diagnostics(
    model: ScalarChannelModel,
    n_obs: int,
    n_samples: int,
    seed: int,
    l0: float = 1.0,
) -> dict:
    """Distribution summaries of the posterior-mean error decomposition.

    Per draw, the regression error splits as eta(X) - Y = G_n + Z_n with
    G_n the normalized score average; the residual Z_n is small with high
    probability. Reports mean |Z_n|, mean |eta - Y|, quantiles of the
    normalized residual sqrt(n I(Y)) |Z_n|, and the empirical coverage of
    the event {sqrt(n I(Y)) |Z_n| <= l0 (log n / n)^(1/4)}.
    """
    if n_samples < 10_000:
        raise InvalidInputError(f"bvm_diagnostics needs N >= 10^4, got {n_samples}")
    _check_positive(n_obs=n_obs, l0=l0)
    threshold = l0 * (math.log(n_obs) / n_obs) ** 0.25 if n_obs > 1 else 0.0
    gaussian = model.noise_sigma is not None
    normalized = []
    abs_z = []
    abs_err = []
    for ci, count in enumerate(chunk_sizes(n_samples)):
        rng = rng_stream(seed, 3, ci)
        if gaussian:
            y = model.sample_y(count, rng)
            xbar = y + rng.standard_normal(count) * (model.noise_sigma / math.sqrt(n_obs))
            table_x, table_eta = model.eta_table(n_obs)
            eta = np.interp(xbar, table_x, table_eta)
            gn = xbar - y  # score average of a Gaussian location family
        else:
            x, y = model.sample_joint_batch(n_obs, count, rng)
            eta = model.regression_batch(x)
            info = np.asarray(model.fisher(y), dtype=float)
            gn = np.asarray(model.cond_score(x, y[:, None]), dtype=float).sum(axis=1) / (
                n_obs * info
            )
        z = eta - y - gn
        info = np.asarray(model.fisher(y), dtype=float)
        normalized.append(np.sqrt(n_obs * info) * np.abs(z))
        abs_z.append(np.abs(z))
        abs_err.append(np.abs(eta - y))
    normalized = np.concatenate(normalized)
    abs_z = np.concatenate(abs_z)
    abs_err = np.concatenate(abs_err)
    return {
        "n_obs": int(n_obs),
        "N": int(n_samples),
        "seed": int(seed),
        "l0": float(l0),
        "threshold": float(threshold),
        "mean_abs_z": float(abs_z.mean()),
        "mean_abs_eta_err": float(abs_err.mean()),
        "normalized_z_quantiles": {
            str(q): float(np.quantile(normalized, q)) for q in _BVM_QUANTILES
        },
        "coverage": float((normalized <= threshold).mean()),
    }


def _check_positive(**kwargs):
    for name, val in kwargs.items():
        if not (np.isfinite(val) and val > 0):
            raise InvalidInputError(f"{name} must be positive, got {val}")
