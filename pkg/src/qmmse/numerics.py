"""Shared numerical conventions: quadrature grids and seeded RNG streams.

Every module that integrates against a prior density uses the same
composite Simpson rule so that quantities computed in different places
(posterior means, distortions, Fisher expectations) agree to rounding.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

# Number of nodes of the composite Simpson grid used for posterior and
# prior integrals. 4097 = 2**12 + 1 keeps the rule exact-to-roundoff for
# the smooth densities in the shipped catalog.
POSTERIOR_GRID_POINTS = 4097

# Samples per chunk in Monte Carlo accumulators. Partial results are
# reduced in chunk-index order, so a fixed (seed, N) pair is
# bit-reproducible no matter how chunks are scheduled.
CHUNK_SIZE = 1 << 16


def simpson_nodes_weights(lo: float, hi: float, npoints: int = POSTERIOR_GRID_POINTS):
    """Nodes and weights of the composite Simpson rule on [lo, hi].

    Parameters
    ----------
    lo, hi : float
        Integration interval, lo < hi.
    npoints : int
        Odd number of nodes (even number of subintervals).

    Returns
    -------
    nodes, weights : ndarray
        ``sum(weights * f(nodes))`` approximates the integral.
    """
    if npoints < 3 or npoints % 2 == 0:
        raise InvalidInputError(f"Simpson rule needs an odd npoints >= 3, got {npoints}")
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise InvalidInputError(f"bad interval [{lo}, {hi}]")
    nodes = np.linspace(lo, hi, npoints)
    h = (hi - lo) / (npoints - 1)
    weights = np.full(npoints, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    return nodes, weights


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for stream ``key`` of a master seed.

    Streams are derived from ``(seed, key)`` only, so concurrent tasks
    that own distinct keys never share state and reruns are exact.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def chunk_sizes(total: int, chunk: int = CHUNK_SIZE) -> list[int]:
    """Split ``total`` draws into deterministic chunk lengths."""
    if total < 1:
        raise InvalidInputError(f"need at least 1 draw, got {total}")
    full, rem = divmod(total, chunk)
    return [chunk] * full + ([rem] if rem else [])
