"""Sweep engine over (n, k, model): regret tables, regime labels, and
log-log slope fits backing the scaling-law checks.

Rows are produced in deterministic (n, k) order with per-cell seeds derived
from the master seed, so a sweep re-run with the same configuration is
byte-identical apart from the wall-time column.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .bounds import BoundConfig, corollary_rhs, fisher_expectations, thm2_bound_subgaussian
from .errors import InvalidInputError, QmmseError
from .model import ScalarChannelModel, VectorJointModel, moment_report
from .quantizer import covering_codebook, panter_dite_1d
from .regret import distortion_of_Y, estimate_decomposition

CSV_HEADER = "model,n,k,N,seed,mmse,mmse_se,mmse_k,mmse_k_se,regret,regret_se,dist_y,bound,regime,wall_ms"

_FIELDS = CSV_HEADER.split(",")

QUANTIZATION_LIMITED = "quantization-limited"
ESTIMATION_LIMITED = "estimation-limited"


@dataclass(frozen=True)
class SweepRow:
    """One sweep cell; numeric fields are NaN when the cell failed."""

    model: str
    n: int
    k: int
    N: int
    seed: int
    mmse: float
    mmse_se: float
    mmse_k: float
    mmse_k_se: float
    regret: float
    regret_se: float
    dist_y: float
    bound: float
    regime: str
    wall_ms: float
    error: str | None = None

    def to_json_dict(self) -> dict:
        out = {name: getattr(self, name) for name in _FIELDS}
        out["error"] = self.error
        return out


def regime_classify(n_obs: int, k: int) -> str:
    """Which error source dominates: quantization when n > k^2, estimation
    otherwise (ties count as estimation-limited)."""
    if n_obs < 1 or k < 1:
        raise InvalidInputError(f"need n, k >= 1, got n={n_obs}, k={k}")
    return QUANTIZATION_LIMITED if n_obs > k * k else ESTIMATION_LIMITED


def cell_seed(master_seed: int, cell_index: int) -> int:
    """Deterministic per-cell seed derived from (master seed, cell index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(cell_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _failed_row(model_name, n, k, n_samples, seed, regime, err, wall_ms):
    nan = float("nan")
    return SweepRow(
        model=model_name, n=n, k=k, N=n_samples, seed=seed,
        mmse=nan, mmse_se=nan, mmse_k=nan, mmse_k_se=nan,
        regret=nan, regret_se=nan, dist_y=nan, bound=nan,
        regime=regime, wall_ms=wall_ms, error=f"{type(err).__name__}: {err}",
    )


def sweep_scalar(
    model: ScalarChannelModel,
    k_list,
    n_list,
    n_samples: int,
    master_seed: int,
    bound_config: BoundConfig | None = None,
) -> list[SweepRow]:
    """Scalar-pipeline sweep: per (n, k) cell, design the companding
    codebook, estimate (mmse, mmse_k, regret) on shared passes via the
    eta-space route, and record the exact Y-distortion and the corollary
    bound at the configured constant.

    Cell failures are recorded in the row and the sweep continues.
    """
    if not len(k_list) or not len(n_list):
        raise InvalidInputError("k_list and n_list must be nonempty")
    cfg = bound_config or BoundConfig()
    density = _prior_density(model)
    a = model.half_width
    e_inv_sqrt, _ = fisher_expectations(model)
    rows = []
    for idx_n, n_obs in enumerate(n_list):
        for idx_k, k in enumerate(k_list):
            seed = cell_seed(master_seed, idx_n * len(k_list) + idx_k)
            regime = regime_classify(n_obs, k)
            t0 = time.perf_counter()
            try:
                codebook = panter_dite_1d(density, a, k)
                est = estimate_decomposition(model, n_obs, codebook, n_samples, seed)
                dist = distortion_of_Y(codebook, density, a)
                bound = corollary_rhs(k, n_obs, e_inv_sqrt, max(est.mmse, 0.0), cfg.c_corollary)
                wall_ms = (time.perf_counter() - t0) * 1e3
                rows.append(SweepRow(
                    model=model.name, n=n_obs, k=k, N=n_samples, seed=seed,
                    mmse=est.mmse, mmse_se=est.mmse_se,
                    mmse_k=est.mmse_k, mmse_k_se=est.mmse_k_se,
                    regret=est.regret_direct, regret_se=est.regret_direct_se,
                    dist_y=dist, bound=bound, regime=regime, wall_ms=wall_ms,
                ))
            except QmmseError as err:
                wall_ms = (time.perf_counter() - t0) * 1e3
                rows.append(_failed_row(model.name, n_obs, k, n_samples, seed, regime, err, wall_ms))
    return rows


def sweep_vector(
    model: VectorJointModel,
    k_list,
    n_samples: int,
    master_seed: int,
    r_policy: str = "optimized",
    bound_config: BoundConfig | None = None,
) -> list[SweepRow]:
    """Vector-pipeline sweep: per k, pick the ball radius by ``r_policy``,
    build the covering quantizer with overflow cell, quantize eta(X), and
    record the subgaussian bound value.

    ``r_policy`` is ``"optimized"`` (minimizer of the subgaussian bound),
    ``"moment"`` (balance point of the fourth-moment derivation), or
    ``"fixed:<value>"``.
    """
    if not len(k_list):
        raise InvalidInputError("k_list must be nonempty")
    cfg = bound_config or BoundConfig()
    e1, e2, e4, v = _vector_moments(model, n_samples, master_seed)
    p = model.p_dim
    rows = []
    for idx_k, k in enumerate(k_list):
        seed = cell_seed(master_seed, idx_k)
        regime = regime_classify(model.n_dim, k)
        t0 = time.perf_counter()
        try:
            r = _pick_radius(r_policy, e1, e2, e4, v, k, p, cfg)
            cq = covering_codebook(p, r, k)
            est = estimate_decomposition(model, None, cq, n_samples, seed)
            bound, _ = thm2_bound_subgaussian(e1, e4, v, k, p, cfg.c1_thm2, cfg.c2_thm2)
            wall_ms = (time.perf_counter() - t0) * 1e3
            rows.append(SweepRow(
                model=model.name, n=model.n_dim, k=k, N=n_samples, seed=seed,
                mmse=est.mmse, mmse_se=est.mmse_se,
                mmse_k=est.mmse_k, mmse_k_se=est.mmse_k_se,
                regret=est.regret_direct, regret_se=est.regret_direct_se,
                dist_y=float("nan"), bound=bound, regime=regime, wall_ms=wall_ms,
            ))
        except QmmseError as err:
            wall_ms = (time.perf_counter() - t0) * 1e3
            rows.append(_failed_row(model.name, model.n_dim, k, n_samples, seed, regime, err, wall_ms))
    return rows


def _prior_density(model: ScalarChannelModel):
    def density(y):
        return np.exp(np.asarray(model.prior_log_density(y), dtype=float))

    return density


def _vector_moments(model: VectorJointModel, n_samples: int, master_seed: int):
    """Known moments where the model declares them, estimates otherwise."""
    e1_known, e2_known, e4_known = model.eta_norm_moments
    need_mc = e1_known is None or e2_known is None or e4_known is None or model.subgaussian_v is None
    if need_mc:
        mr = moment_report(model, max(1000, min(n_samples, 100_000)), cell_seed(master_seed, 1 << 20))
    e1 = e1_known if e1_known is not None else mr.e1
    e2 = e2_known if e2_known is not None else mr.e2
    e4 = e4_known if e4_known is not None else mr.e4
    v = model.subgaussian_v if model.subgaussian_v is not None else mr.v
    return float(e1), float(e2), float(e4), float(v)


def _pick_radius(r_policy, e1, e2, e4, v, k, p, cfg: BoundConfig) -> float:
    if r_policy == "optimized":
        _, r_star = thm2_bound_subgaussian(e1, e4, v, k, p, cfg.c1_thm2, cfg.c2_thm2)
        return r_star
    if r_policy == "moment":
        # balance point of r^2 k^(-2/p) against sqrt(e2 e4) / r
        return (math.sqrt(e2 * e4) * float(k) ** (2.0 / p) / 2.0) ** (1.0 / 3.0)
    if isinstance(r_policy, str) and r_policy.startswith("fixed:"):
        r = float(r_policy.split(":", 1)[1])
        if not (np.isfinite(r) and r > 0):
            raise InvalidInputError(f"fixed radius must be positive, got {r}")
        return r
    raise InvalidInputError(f"unknown r_policy {r_policy!r}")


# ---------------------------------------------------------------------------
# scaling fits and emitters
# ---------------------------------------------------------------------------


def fit_loglog_slope(pairs):
    """Least-squares line through (log x, log y).

    Returns ``(slope, intercept, r_squared)``; ``r_squared`` is 1 for an
    exact fit (including constant y).
    """
    pts = [(float(x), float(y)) for x, y in pairs]
    if len({x for x, _ in pts}) < 2:
        raise InvalidInputError("need at least 2 distinct x values")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise InvalidInputError("log-log fit needs positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    lxm, lym = lx.mean(), ly.mean()
    sxx = float(((lx - lxm) ** 2).sum())
    sxy = float(((lx - lxm) * (ly - lym)).sum())
    slope = sxy / sxx
    intercept = lym - slope * lxm
    ss_tot = float(((ly - lym) ** 2).sum())
    ss_res = float(((ly - (intercept + slope * lx)) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r_squared


def _cell_str(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows, path) -> None:
    """Write rows under the fixed header; floats use shortest round-trip
    decimals so re-parsing reproduces them bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_FIELDS)
        for row in rows:
            writer.writerow([_cell_str(getattr(row, name)) for name in _FIELDS])


def emit_json(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([row.to_json_dict() for row in rows], fh, indent=1)
        fh.write("\n")
