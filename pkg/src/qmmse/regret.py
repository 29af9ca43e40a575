"""Monte Carlo estimation of mmse, quantized mmse, and the MMSE regret.

All quantized estimators are two-pass: an independent first pass fits the
per-cell reconstruction points (empirical conditional means), and a second
pass with fresh draws evaluates the squared error against them, so the
plug-in values are unbiased up to centroid noise.

Estimators accept an integer ``seed`` rather than a generator: draws are
made in fixed-size chunks on streams derived from ``(seed, pass, chunk)``
and partials are reduced in chunk order, which makes every estimate
bit-reproducible for a fixed (seed, N) no matter how chunks are executed.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import ScalarChannelModel, VectorJointModel
from .numerics import chunk_sizes, rng_stream, simpson_nodes_weights
from .quantizer import (
    Codebook,
    CoveringQuantizer,
    cell_error,
    covering_labels,
    nn_labels,
)

_MIN_SAMPLES = 1000

# stream indices: pass 1 fits centroids, pass 2 evaluates
_PASS_FIT, _PASS_EVAL = 0, 1


@dataclass(frozen=True)
class RegretEstimate:
    """Joint estimate of mmse, mmse_k, and the regret for one quantizer.

    ``regret_decomp`` is the decomposition route ``mmse_k - mmse``;
    ``regret_direct`` estimates ``E||eta - E[eta | cell]||^2`` directly.
    """

    mmse: float
    mmse_se: float
    mmse_k: float
    mmse_k_se: float
    regret_direct: float
    regret_direct_se: float
    n_obs: int
    k: int
    n_samples: int
    seed: int

    @property
    def regret_decomp(self) -> float:
        return self.mmse_k - self.mmse

    @property
    def combined_se(self) -> float:
        return math.sqrt(self.mmse_se**2 + self.mmse_k_se**2 + self.regret_direct_se**2)

    @property
    def residual(self) -> float:
        return self.mmse_k - self.mmse - self.regret_direct

    def to_json_dict(self) -> dict:
        return {
            "mmse": self.mmse,
            "mmse_se": self.mmse_se,
            "mmse_k": self.mmse_k,
            "mmse_k_se": self.mmse_k_se,
            "regret_direct": self.regret_direct,
            "regret_direct_se": self.regret_direct_se,
            "regret_decomp": self.regret_decomp,
            "n_obs": self.n_obs,
            "k": self.k,
            "N": self.n_samples,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


# ---------------------------------------------------------------------------
# draw plans: how one chunk of (y, eta, labels) is produced
# ---------------------------------------------------------------------------


class _DrawPlan:
    """Produces chunks of (y, eta, labels) for a model and cell scheme.

    ``cells`` is one of
      * None                      -- labels not computed,
      * ("x", fn, m)              -- fn maps a batch of X to labels in [m],
      * ("eta", quantizer)        -- nearest-neighbor cells of eta(X).
    """

    def __init__(self, model, n_obs, cells):
        self.model = model
        self.cells = cells
        if isinstance(model, ScalarChannelModel):
            if n_obs is None or n_obs < 1:
                raise InvalidInputError(f"scalar models need n_obs >= 1, got {n_obs}")
            self.n_obs = int(n_obs)
        elif isinstance(model, VectorJointModel):
            self.n_obs = int(model.n_dim)
        else:
            raise InvalidInputError(f"unsupported model type {type(model).__name__}")

    @property
    def m_cells(self) -> int:
        kind = self.cells[0]
        if kind == "x":
            return int(self.cells[2])
        q = self.cells[1]
        return q.overflow_label if isinstance(q, CoveringQuantizer) else q.k

    def _eta_labels(self, eta):
        q = self.cells[1]
        if isinstance(q, CoveringQuantizer):
            return covering_labels(q, eta.reshape(-1, 1) if eta.ndim == 1 else eta)
        return nn_labels(q, eta)

    def empty_cell_reconstructions(self, pooled_mean):
        """Per-cell fallbacks for cells the fitting pass never saw.

        For eta-space quantizer cells the quantizer's own reconstruction
        point is the natural fallback and keeps the error of a rare
        unseen-cell hit bounded by the cell size; arbitrary cell functions
        of X carry no geometry, so they fall back to the pooled mean.
        """
        if self.cells[0] != "eta":
            return None
        q = self.cells[1]
        if isinstance(q, CoveringQuantizer):
            return np.vstack([q.centers, np.atleast_2d(np.asarray(pooled_mean, dtype=float))])
        return np.asarray(q.points, dtype=float)

    def draw(self, count, rng, need_eta, need_labels):
        """One chunk. Returns (y, eta or None, labels or None)."""
        model = self.model
        if isinstance(model, ScalarChannelModel):
            eta_cells = need_labels and self.cells[0] == "eta"
            if eta_cells or (need_eta and not need_labels):
                eta, y = model.sample_eta_y(self.n_obs, count, rng)
                labels = self._eta_labels(eta) if need_labels else None
                return y, eta if need_eta else None, labels
            x, y = model.sample_joint_batch(self.n_obs, count, rng)
            labels = np.asarray(self.cells[1](x)) if need_labels else None
            eta = model.regression_batch(x) if need_eta else None
            return y, eta, labels
        x, y = model.sample_joint_batch(count, rng)
        eta = np.asarray(model.regression(x)) if (need_eta or self.cells and self.cells[0] == "eta") else None
        if not need_labels:
            return y, eta, None
        if self.cells[0] == "eta":
            labels = self._eta_labels(eta)
        else:
            labels = np.asarray(self.cells[1](x))
        return y, eta if need_eta else None, labels


def _sqerr(a, b):
    d = a - b
    return d * d if d.ndim == 1 else (d * d).sum(axis=1)


def _mean_se(total, total_sq, n):
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * (n / max(n - 1, 1))
    return mean, math.sqrt(var / n)


def _fit_centroids(plan, n_samples, seed, want):
    """Pass 1: per-cell empirical means of Y and/or eta."""
    m = plan.m_cells
    sums = {w: None for w in want}
    counts = np.zeros(m, dtype=np.int64)
    pooled = {w: None for w in want}
    total = 0
    for ci, count in enumerate(chunk_sizes(n_samples)):
        rng = rng_stream(seed, _PASS_FIT, ci)
        y, eta, labels = plan.draw(count, rng, need_eta="eta" in want, need_labels=True)
        counts += np.bincount(labels - 1, minlength=m)
        total += count
        for w in want:
            vals = y if w == "y" else eta
            idx = labels - 1
            if vals.ndim == 1:
                s = np.bincount(idx, weights=vals, minlength=m)
                p = vals.sum()
            else:
                s = np.stack(
                    [np.bincount(idx, weights=vals[:, j], minlength=m) for j in range(vals.shape[1])],
                    axis=1,
                )
                p = vals.sum(axis=0)
            sums[w] = s if sums[w] is None else sums[w] + s
            pooled[w] = p if pooled[w] is None else pooled[w] + p
    if m > 1 and int((counts > 0).sum()) <= 1:
        warnings.warn(
            f"all {total} first-pass samples landed in one of {m} cells", RuntimeWarning
        )
    cents = {}
    filled = counts > 0
    for w in want:
        c = np.empty_like(np.atleast_1d(sums[w]), dtype=float)
        c[filled] = (np.atleast_1d(sums[w])[filled].T / counts[filled]).T
        pooled_mean = pooled[w] / total
        fallback = plan.empty_cell_reconstructions(pooled_mean)
        if fallback is None:
            c[~filled] = pooled_mean
        else:
            fb = np.asarray(fallback, dtype=float).reshape(c.shape)
            c[~filled] = fb[~filled]
        cents[w] = c
    return cents, counts


def _resolve(model, n_obs, n_samples, seed):
    if n_samples < _MIN_SAMPLES:
        raise InvalidInputError(f"need N >= {_MIN_SAMPLES}, got {n_samples}")
    return int(n_samples), int(seed)


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------


def estimate_mmse(model, n_obs, n_samples: int, seed: int):
    """Monte Carlo mmse: sample mean of ||Y - eta(X)||^2 over fresh draws.

    Returns ``(value, standard_error)``.
    """
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    plan = _DrawPlan(model, n_obs, None)
    tot = tot_sq = 0.0
    for ci, count in enumerate(chunk_sizes(n_samples)):
        rng = rng_stream(seed, _PASS_EVAL, ci)
        y, eta, _ = plan.draw(count, rng, need_eta=True, need_labels=False)
        d = _sqerr(np.asarray(y, dtype=float), eta)
        tot += d.sum()
        tot_sq += (d * d).sum()
    return _mean_se(tot, tot_sq, n_samples)


def _eval_pass(plan, n_samples, seed, terms):
    """Pass 2: accumulate per-draw squared-error statistics."""
    need_eta = any(t in ("mmse", "regret") for t in terms)
    need_labels = any(t in ("mmse_k", "regret") for t in terms)
    acc = {t: [0.0, 0.0] for t in terms}
    for ci, count in enumerate(chunk_sizes(n_samples)):
        rng = rng_stream(seed, _PASS_EVAL, ci)
        y, eta, labels = plan.draw(count, rng, need_eta=need_eta, need_labels=need_labels)
        y = np.asarray(y, dtype=float)
        for t, cent in terms.items():
            if t == "mmse":
                d = _sqerr(y, eta)
            elif t == "mmse_k":
                d = _sqerr(y, cent[labels - 1])
            else:
                d = _sqerr(eta, cent[labels - 1])
            acc[t][0] += d.sum()
            acc[t][1] += (d * d).sum()
    return {t: _mean_se(s, s2, n_samples) for t, (s, s2) in acc.items()}


def estimate_mmse_k(model, n_obs, cell_index_fn, m_cells: int, n_samples: int, seed: int):
    """Quantized mmse at a given cell function with the optimal (empirical)
    reconstruction: pass 1 fits per-cell means of Y, an independent pass 2
    averages ||Y - centroid(cell(X))||^2. Returns ``(value, se)``."""
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    if m_cells < 1:
        raise InvalidInputError(f"m_cells must be >= 1, got {m_cells}")
    plan = _DrawPlan(model, n_obs, ("x", cell_index_fn, m_cells))
    cents, _ = _fit_centroids(plan, n_samples, seed, want=("y",))
    return _eval_pass(plan, n_samples, seed, {"mmse_k": cents["y"]})["mmse_k"]


def estimate_regret_direct(model, n_obs, cell_index_fn, m_cells: int, n_samples: int, seed: int):
    """Direct regret estimate E||eta(X) - E[eta | cell]||^2 for a given cell
    function, with the same two-pass structure as :func:`estimate_mmse_k`
    applied to eta in place of Y. Returns ``(value, se)``."""
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    if m_cells < 1:
        raise InvalidInputError(f"m_cells must be >= 1, got {m_cells}")
    plan = _DrawPlan(model, n_obs, ("x", cell_index_fn, m_cells))
    cents, _ = _fit_centroids(plan, n_samples, seed, want=("eta",))
    return _eval_pass(plan, n_samples, seed, {"regret": cents["eta"]})["regret"]


def regret_via_eta_quantization(model, n_obs, quantizer, n_samples: int, seed: int):
    """Regret of the cell function x -> nearest codepoint of eta(x).

    ``quantizer`` is a :class:`Codebook` (nearest-neighbor cells) or a
    :class:`CoveringQuantizer` (ball cover plus overflow cell); this is the
    no-loss route through eta-space. Returns ``(value, se)``.
    """
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    if not isinstance(quantizer, (Codebook, CoveringQuantizer)):
        raise InvalidInputError(f"expected a codebook, got {type(quantizer).__name__}")
    plan = _DrawPlan(model, n_obs, ("eta", quantizer))
    cents, _ = _fit_centroids(plan, n_samples, seed, want=("eta",))
    return _eval_pass(plan, n_samples, seed, {"regret": cents["eta"]})["regret"]


def estimate_decomposition(model, n_obs, cells, n_samples: int, seed: int) -> RegretEstimate:
    """Shared-pass estimate of mmse, mmse_k, and the direct regret.

    ``cells`` is either ``(cell_index_fn, m_cells)`` for cells of X, or a
    codebook / covering quantizer for eta-space cells. Pass 1 fits both the
    Y- and eta-centroids from the same draws; pass 2 evaluates all three
    squared errors on the same fresh draws.
    """
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    if isinstance(cells, (Codebook, CoveringQuantizer)):
        plan = _DrawPlan(model, n_obs, ("eta", cells))
    else:
        fn, m = cells
        if m < 1:
            raise InvalidInputError(f"m_cells must be >= 1, got {m}")
        plan = _DrawPlan(model, n_obs, ("x", fn, m))
    cents, _ = _fit_centroids(plan, n_samples, seed, want=("y", "eta"))
    stats = _eval_pass(
        plan,
        n_samples,
        seed,
        {"mmse": None, "mmse_k": cents["y"], "regret": cents["eta"]},
    )
    return RegretEstimate(
        mmse=stats["mmse"][0],
        mmse_se=stats["mmse"][1],
        mmse_k=stats["mmse_k"][0],
        mmse_k_se=stats["mmse_k"][1],
        regret_direct=stats["regret"][0],
        regret_direct_se=stats["regret"][1],
        n_obs=plan.n_obs,
        k=plan.m_cells,
        n_samples=n_samples,
        seed=seed,
    )


def decomposition_residual(model, n_obs, cell_index_fn, m_cells: int, n_samples: int, seed: int):
    """Residual of the decomposition identity, mmse_k - mmse - regret.

    All three terms share the same two passes. Returns the residual and
    the root-sum-square of the three standard errors.
    """
    est = estimate_decomposition(model, n_obs, (cell_index_fn, m_cells), n_samples, seed)
    return est.residual, est.combined_se


def estimate_quantization_gap(model, n_obs, codebook: Codebook, n_samples: int, seed: int):
    """Paired estimate of E[e_C(eta(X))] - E[e_C(Y)], the gap between the
    nearest-codepoint quantization errors of the regression value and of
    the target itself.

    Both cell-error evaluations share every draw, so their difference is
    measured at variance O((Delta |eta - Y|)^2) instead of O(Delta^4) --
    orders of magnitude below the gap bounds it is compared against. For
    Gaussian-noise models with even ``n_samples`` the conditional draws
    come in antithetic pairs (xbar = Y +- xi), which also cancels the
    first-order term of the difference; the standard error is then taken
    over pair means. Returns ``(gap, standard_error)``; positive when
    quantizing eta incurs more error than quantizing Y.
    """
    n_samples, seed = _resolve(model, n_obs, n_samples, seed)
    if codebook.p != 1:
        raise InvalidInputError("the quantization gap is defined for 1-D codebooks")
    scalar = isinstance(model, ScalarChannelModel)
    if scalar and model.noise_sigma is not None and n_samples % 2 == 0:
        table_x, table_eta = model.eta_table(n_obs)
        spread = model.noise_sigma / math.sqrt(n_obs)
        tot = tot_sq = 0.0
        n_pairs = n_samples // 2
        for ci, count in enumerate(chunk_sizes(n_pairs)):
            rng = rng_stream(seed, _PASS_EVAL, ci)
            y = model.sample_y(count, rng)
            xi = spread * rng.standard_normal(count)
            base = cell_error(codebook, y)
            d_hi = cell_error(codebook, np.interp(y + xi, table_x, table_eta)) - base
            d_lo = cell_error(codebook, np.interp(y - xi, table_x, table_eta)) - base
            d = 0.5 * (d_hi + d_lo)
            tot += d.sum()
            tot_sq += (d * d).sum()
        return _mean_se(tot, tot_sq, n_pairs)
    plan = _DrawPlan(model, n_obs, None)
    tot = tot_sq = 0.0
    for ci, count in enumerate(chunk_sizes(n_samples)):
        rng = rng_stream(seed, _PASS_EVAL, ci)
        y, eta, _ = plan.draw(count, rng, need_eta=True, need_labels=False)
        d = cell_error(codebook, eta) - cell_error(codebook, np.asarray(y, dtype=float))
        tot += d.sum()
        tot_sq += (d * d).sum()
    return _mean_se(tot, tot_sq, n_samples)


def distortion_of_Y(codebook: Codebook, density, half_width: float) -> float:
    """Exact quadrature of the quantizer's distortion on Y itself,
    integral of min_j (y - y_j)^2 f_Y(y) over [-A, A].

    Each Voronoi interval (boundaries at midpoints of adjacent codepoints)
    is integrated separately so the kinks of the cell-error function never
    cross a quadrature panel.
    """
    if codebook.p != 1:
        raise InvalidInputError("distortion_of_Y needs a 1-D codebook")
    a = float(half_width)
    pts = codebook.points
    if pts[0] < -a or pts[-1] > a:
        raise InvalidInputError(f"codebook leaves [-{a}, {a}]")
    edges = np.concatenate(([-a], (pts[:-1] + pts[1:]) / 2.0, [a]))
    total = 0.0
    for j in range(pts.size):
        nodes, weights = simpson_nodes_weights(edges[j], edges[j + 1], 513)
        f = np.asarray(density(nodes), dtype=float)
        total += float((weights * f * (nodes - pts[j]) ** 2).sum())
    return total
