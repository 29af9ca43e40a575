"""Codebooks, nearest-neighbor quantization, and quantizer design.

Cell labels are 1-based throughout: a k-point codebook maps into
{1, ..., k}, and a covering quantizer reserves label k+1 for the
overflow cell outside its ball. Ties always break to the lowest label.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    CoveringAuditError,
    DomainError,
    InvalidInputError,
    QuantileInversionError,
)
from .numerics import rng_stream

logger = logging.getLogger(__name__)

# Guarantee of the cubic-grid covering construction: the achieved covering
# radius satisfies eps <= COVERING_C_GRID * sqrt(p) * r * k**(-1/p) for
# every k >= COVERING_K_MIN.
COVERING_C_GRID = 2.0
COVERING_K_MIN = 1


def _normalize_support(support) -> tuple[float, float]:
    if np.isscalar(support):
        a = float(support)
        if not (np.isfinite(a) and a > 0):
            raise InvalidInputError(f"half-width must be positive, got {support}")
        return -a, a
    lo, hi = (float(v) for v in support)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise InvalidInputError(f"bad support {support!r}")
    return lo, hi


# ---------------------------------------------------------------------------
# codebooks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """Reconstruction points of a k-point nearest-neighbor quantizer.

    One-dimensional codebooks are stored in strictly increasing order;
    ``support`` records the design interval when one was used.
    """

    points: np.ndarray
    support: tuple[float, float] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = np.sort(pts)
            if pts.size > 1 and not np.all(np.diff(pts) > 0):
                raise InvalidInputError("1-D codebook points must be distinct")
        elif pts.ndim != 2:
            raise InvalidInputError(f"points must be 1-D or 2-D, got ndim={pts.ndim}")
        if pts.size < 1:
            raise InvalidInputError("codebook needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("codebook points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]


def quantize_nn(codebook: Codebook, v) -> int:
    """Label (1-based) of the codebook point nearest to ``v``."""
    if codebook.p == 1:
        return int(nn_labels(codebook, np.asarray([v], dtype=float))[0])
    return int(nn_labels(codebook, np.asarray(v, dtype=float)[None, :])[0])


def nn_labels(codebook: Codebook, values: np.ndarray) -> np.ndarray:
    """Vectorized nearest-neighbor labels in {1..k}, ties to lowest."""
    pts = codebook.points
    if codebook.p == 1:
        v = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("values must be finite")
        if pts.size == 1:
            return np.ones(v.size, dtype=np.int64)
        mids = (pts[:-1] + pts[1:]) / 2.0
        # side='left': a point equal to a midpoint joins the lower cell
        return np.searchsorted(mids, v, side="left").astype(np.int64) + 1
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values must be finite")
    labels = np.empty(v.shape[0], dtype=np.int64)
    chunk = max(1, 8_000_000 // max(1, pts.shape[0] * pts.shape[1]))
    for i0 in range(0, v.shape[0], chunk):
        block = v[i0 : i0 + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        labels[i0 : i0 + chunk] = d2.argmin(axis=1) + 1
    return labels


def delta(codebook: Codebook, half_width: float | None = None) -> float:
    """Largest gap between consecutive codepoints padded with +-A.

    ``half_width`` defaults to the codebook's design support, which must
    then be symmetric about the origin.
    """
    if codebook.p != 1:
        raise InvalidInputError("delta is defined for 1-D codebooks")
    if half_width is None:
        if codebook.support is None or codebook.support[0] != -codebook.support[1]:
            raise InvalidInputError("no half-width given and no symmetric design support")
        half_width = codebook.support[1]
    a = float(half_width)
    pts = codebook.points
    if pts[0] < -a or pts[-1] > a:
        raise DomainError(f"codebook points leave [-{a}, {a}]")
    padded = np.concatenate(([-a], pts, [a]))
    return float(np.diff(padded).max())


def cell_error(codebook: Codebook, y):
    """Squared distance from ``y`` to the nearest codepoint (vectorized)."""
    if codebook.p != 1:
        raise InvalidInputError("cell_error is defined for 1-D codebooks")
    y_arr = np.asarray(y, dtype=float)
    pts = codebook.points
    idx = nn_labels(codebook, y_arr.reshape(-1)) - 1
    err = (y_arr.reshape(-1) - pts[idx]) ** 2
    return float(err[0]) if y_arr.ndim == 0 else err.reshape(y_arr.shape)


# ---------------------------------------------------------------------------
# scalar quantizer design
# ---------------------------------------------------------------------------


def _dense_cdf(density, lo, hi, npoints):
    ys = np.linspace(lo, hi, npoints)
    f = np.asarray(density(ys), dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise InvalidInputError("density must be finite and nonnegative on the support")
    h = ys[1] - ys[0]
    cdf = np.concatenate(([0.0], np.cumsum((f[1:] + f[:-1]) * (h / 2.0))))
    return ys, f, cdf


def _cell_moments(density, edges, npts=129):
    """Per-cell mass / first / second moments by Simpson on each cell."""
    n_cells = edges.size - 1
    u = np.linspace(0.0, 1.0, npts)
    nodes = edges[:-1, None] + np.diff(edges)[:, None] * u[None, :]
    w = np.full(npts, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    weights = np.diff(edges)[:, None] / (npts - 1) / 3.0 * w[None, :]
    f = np.asarray(density(nodes), dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise InvalidInputError("density must be finite and nonnegative on the support")
    wf = weights * f
    m0 = wf.sum(axis=1)
    m1 = (wf * nodes).sum(axis=1)
    m2 = (wf * nodes**2).sum(axis=1)
    assert m0.size == n_cells
    return m0, m1, m2


def lloyd_max_1d(
    density,
    support,
    k: int,
    tol: float = 1e-10,
    max_iter: int = 500,
    distortion_trace: list | None = None,
) -> Codebook:
    """Lloyd-Max design of a k-point quantizer for the given density.

    Alternates the centroid and nearest-neighbor conditions on exact
    cell moments (per-cell Simpson quadrature) until the largest point
    movement drops below ``tol``. Cells that lose all mass are re-seeded
    at the midpoint of the currently heaviest cell.

    Parameters
    ----------
    density : callable
        Vectorized density, nonnegative on the support. Need not be
        normalized.
    support : (lo, hi) or float
        Design interval; a single float A means [-A, A].
    distortion_trace : list, optional
        If given, appended with the distortion after every update.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is exceeded; carries the last iterate.
    """
    lo, hi = _normalize_support(support)
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if not tol > 0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    ys, _, cdf = _dense_cdf(density, lo, hi, 16385)
    if cdf[-1] <= 0:
        raise InvalidInputError("density has no mass on the support")
    targets = (2.0 * np.arange(1, k + 1) - 1.0) / (2.0 * k) * cdf[-1]
    points = np.interp(targets, cdf, ys)
    for _ in range(max_iter):
        edges = np.concatenate(([lo], (points[:-1] + points[1:]) / 2.0, [hi]))
        m0, m1, m2 = _cell_moments(density, edges)
        if np.any(m0 <= 0.0):
            heavy = int(np.argmax(m0))
            seed_at = 0.5 * (edges[heavy] + edges[heavy + 1])
            dead = np.flatnonzero(m0 <= 0.0)
            logger.warning("lloyd_max_1d: re-seeding %d empty cell(s) at %.6g", dead.size, seed_at)
            new_points = np.where(m0 > 0.0, np.divide(m1, np.where(m0 > 0, m0, 1.0)), seed_at)
            points = np.sort(new_points)
            if np.any(np.diff(points) <= 0):
                points = np.linspace(lo, hi, k + 2)[1:-1]
            continue
        new_points = m1 / m0
        if distortion_trace is not None:
            d = float((m2 - 2.0 * new_points * m1 + new_points**2 * m0).sum())
            distortion_trace.append(d)
        movement = float(np.abs(new_points - points).max())
        points = new_points
        if movement < tol:
            return Codebook(points, support=(lo, hi))
    raise ConvergenceError(
        f"lloyd_max_1d did not converge in {max_iter} iterations",
        last_iterate=Codebook(points, support=(lo, hi)),
    )


def panter_dite_1d(density, support, k: int) -> Codebook:
    """High-resolution companding design: codepoints at the odd quantiles
    (2j-1)/(2k) of the measure proportional to the cube root of the density.

    Consecutive interior codepoints then enclose exactly 1/k of the
    cube-root mass, with half cells of mass 1/(2k) at either end.
    """
    lo, hi = _normalize_support(support)
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    ys = np.linspace(lo, hi, (1 << 17) + 1)
    f = np.asarray(density(ys), dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise InvalidInputError("density must be finite and nonnegative on the support")
    g = np.cbrt(f)
    inc = (g[1:] + g[:-1]) * ((ys[1] - ys[0]) / 2.0)
    if np.any(inc <= 0.0):
        raise QuantileInversionError(
            "density vanishes on a set of positive measure; cube-root quantiles are not unique"
        )
    cum = np.concatenate(([0.0], np.cumsum(inc)))
    targets = (2.0 * np.arange(1, k + 1) - 1.0) / (2.0 * k) * cum[-1]
    points = np.interp(targets, cum, ys)
    return Codebook(points, support=(lo, hi))


# ---------------------------------------------------------------------------
# covering quantizer (cubic-grid construction with overflow cell)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoveringQuantizer:
    """Centers covering the radius-``radius`` ball, plus an overflow cell.

    Every point of the ball lies within ``eps`` of some center; points
    outside the ball map to the overflow label ``k + 1``.
    """

    centers: np.ndarray
    radius: float
    eps: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("centers must be finite")
        object.__setattr__(self, "centers", c)
        if not (self.radius > 0 and self.eps > 0):
            raise InvalidInputError("radius and eps must be positive")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.centers.shape[1]

    @property
    def overflow_label(self) -> int:
        return self.k + 1


def _grid_cells(p: int, r: float, s: float):
    """Cell indices of the side-``s`` lattice aligned at -r whose closed
    cells contain a point of the open radius-r ball."""
    m_axis = int(math.ceil(2.0 * r / s))
    edges_lo = -r + s * np.arange(m_axis)
    edges_hi = edges_lo + s
    # per-axis distance from 0 to the interval [lo, hi]
    d_axis = np.where(edges_lo > 0, edges_lo, np.where(edges_hi < 0, -edges_hi, 0.0))
    d2 = np.zeros((1,))
    for _ in range(p):
        d2 = (d2[:, None] + (d_axis**2)[None, :]).reshape(-1)
    keep = d2 < r * r
    return m_axis, keep


def _grid_centers(p: int, r: float, s: float) -> np.ndarray:
    m_axis, keep = _grid_cells(p, r, s)
    axis_centers = -r + s * (np.arange(m_axis) + 0.5)
    mesh = np.meshgrid(*([axis_centers] * p), indexing="ij")
    centers = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return centers[keep]


def _grid_count(p: int, r: float, s: float) -> int:
    return int(_grid_cells(p, r, s)[1].sum())


def covering_codebook(
    p: int, r: float, k: int, audit_points: int = 100_000, audit_seed: int = 0
) -> CoveringQuantizer:
    """Cover the radius-r ball in R^p with at most k cubic-grid centers.

    The lattice side is the smallest feasible value found by bisection
    (fewer centers for coarser lattices, so feasibility is one-sided),
    and the covering radius is the cell half-diagonal s * sqrt(p) / 2.
    The construction guarantees
    ``eps <= COVERING_C_GRID * sqrt(p) * r * k**(-1/p)`` and is checked
    here by a randomized audit of the ball.
    """
    if p < 1 or k < 1:
        raise InvalidInputError(f"need p >= 1 and k >= 1, got p={p}, k={k}")
    if not (np.isfinite(r) and r > 0):
        raise InvalidInputError(f"r must be positive, got {r}")
    hi = 2.0 * r  # one cell covering [-r, r]^p: always feasible
    lo = hi
    for _ in range(200):
        if _grid_count(p, r, lo) > k:
            break
        lo /= 2.0
        if lo < 1e-12 * r:  # k exceeds every lattice this fine; keep lo
            break
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _grid_count(p, r, mid) <= k:
            hi = mid
        else:
            lo = mid
    s = hi
    # guaranteed-feasible candidate: m = floor(k**(1/p)) cells per axis
    m = int(math.floor(k ** (1.0 / p) + 1e-12))
    if m >= 1:
        s_star = 2.0 * r / m
        if _grid_count(p, r, s_star) <= k and s_star < s:
            s = s_star
    centers = _grid_centers(p, r, s)
    if centers.shape[0] > k:
        raise CoveringAuditError(
            f"construction bug: {centers.shape[0]} centers exceed budget k={k}"
        )
    eps = s * math.sqrt(p) / 2.0
    cq = CoveringQuantizer(centers=centers, radius=float(r), eps=float(eps))
    if eps > COVERING_C_GRID * math.sqrt(p) * r * k ** (-1.0 / p) * (1.0 + 1e-9):
        raise CoveringAuditError(
            f"construction bug: eps={eps} breaks the documented grid guarantee"
        )
    if audit_points > 0:
        audit_covering(cq, audit_points, audit_seed)
    return cq


def audit_covering(cq: CoveringQuantizer, n_points: int, seed: int) -> float:
    """Randomized covering audit: sample the ball uniformly and check that
    every point is within ``eps`` of a center.

    Returns the largest nearest-center distance observed; raises
    ``CoveringAuditError`` on any uncovered point.
    """
    rng = rng_stream(seed, 7)
    worst = 0.0
    for i0 in range(0, n_points, 1 << 14):
        count = min(1 << 14, n_points - i0)
        dirs = rng.standard_normal((count, cq.p))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = cq.radius * rng.random(count) ** (1.0 / cq.p)
        pts = dirs * radii[:, None]
        d2 = ((pts[:, None, :] - cq.centers[None, :, :]) ** 2).sum(axis=2)
        dmin = np.sqrt(d2.min(axis=1))
        worst = max(worst, float(dmin.max()))
        if worst > cq.eps * (1.0 + 1e-12):
            bad = pts[int(np.argmax(dmin))]
            raise CoveringAuditError(
                f"uncovered point {bad} at distance {worst} > eps={cq.eps}"
            )
    return worst


def covering_quantize(cq: CoveringQuantizer, v) -> int:
    """Label in {1..k+1}: nearest center inside the ball, k+1 outside.

    Points with norm exactly ``radius`` take the in-ball branch.
    """
    return int(covering_labels(cq, np.atleast_2d(np.asarray(v, dtype=float)))[0])


def covering_labels(cq: CoveringQuantizer, values: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values must be finite")
    labels = np.full(v.shape[0], cq.overflow_label, dtype=np.int64)
    inside = np.linalg.norm(v, axis=1) <= cq.radius
    if inside.any():
        block = v[inside]
        d2 = ((block[:, None, :] - cq.centers[None, :, :]) ** 2).sum(axis=2)
        labels[inside] = d2.argmin(axis=1) + 1
    return labels


# ---------------------------------------------------------------------------
# empirical centroids
# ---------------------------------------------------------------------------


def centroids_from_labels(labels: np.ndarray, values: np.ndarray, m: int):
    """Per-cell means of ``values`` grouped by 1-based ``labels``.

    Empty cells get count 0 and the global mean as reconstruction.
    """
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    labels = np.asarray(labels)
    values = np.asarray(values, dtype=float)
    if labels.size == 0:
        raise InvalidInputError("no samples")
    idx = labels - 1
    counts = np.bincount(idx, minlength=m).astype(np.int64)
    if values.ndim == 1:
        sums = np.bincount(idx, weights=values, minlength=m)
    else:
        sums = np.stack(
            [np.bincount(idx, weights=values[:, j], minlength=m) for j in range(values.shape[1])],
            axis=1,
        )
    centroids = np.empty_like(sums, dtype=float)
    filled = counts > 0
    centroids[filled] = (sums[filled].T / counts[filled]).T
    if not filled.all():
        logger.debug(
            "centroids_from_labels: %d of %d cells empty, reconstructed at the global mean",
            int(m - filled.sum()),
            m,
        )
        centroids[~filled] = values.mean(axis=0)
    return centroids, counts


def centroids_from_samples(cell_index_fn, xs, ys, m: int):
    """Empirical reconstruction points for the cells of ``cell_index_fn``."""
    return centroids_from_labels(np.asarray(cell_index_fn(xs)), ys, m)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(
    r"^# codebook p=(\d+) k=(\d+)(?: r=([^ ]+) eps=([^ ]+))?\s*$"
)


def save_codebook(obj, path) -> None:
    """Write a codebook or covering quantizer in the line-oriented text
    format ``# codebook p=<p> k=<k> [r=<r> eps=<eps>]`` plus one point per
    line. Floats use shortest round-trip decimals, so loading is bit-exact.
    """
    if isinstance(obj, CoveringQuantizer):
        header = f"# codebook p={obj.p} k={obj.k} r={obj.radius!r} eps={obj.eps!r}"
        pts = obj.centers
    elif isinstance(obj, Codebook):
        header = f"# codebook p={obj.p} k={obj.k}"
        pts = obj.points.reshape(obj.k, -1)
    else:
        raise InvalidInputError(f"cannot serialize {type(obj).__name__}")
    lines = [header] + [" ".join(repr(float(c)) for c in row) for row in pts]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_codebook(path):
    """Inverse of :func:`save_codebook`."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty codebook file")
    match = _HEADER_RE.match(lines[0])
    if not match:
        raise InvalidInputError(f"{path}: bad header {lines[0]!r}")
    p, k = int(match.group(1)), int(match.group(2))
    rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    pts = np.asarray(rows, dtype=float)
    if pts.shape != (k, p):
        raise InvalidInputError(f"{path}: expected {k} points in R^{p}, got shape {pts.shape}")
    if match.group(3) is not None:
        return CoveringQuantizer(centers=pts, radius=float(match.group(3)), eps=float(match.group(4)))
    return Codebook(pts.reshape(-1) if p == 1 else pts)
