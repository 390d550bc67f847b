"""Unit directions in the standard Gaussian space.

Directions are normalized standard Gaussian vectors whose coordinates come
from uniform sampling probabilities pushed through the inverse normal CDF.
Well-spread sets are obtained by oversampling a scrambled Sobol pool and
repeatedly discarding the point under maximal "pressure" sum 1/d**dim.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError
from .gaussian_geometry import check_dim

# keeps ndtri finite for sampling probabilities that land on 0 or 1
_U_EPS = 1e-300

_CHUNK = 512


def sample_direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Draw one direction uniformly distributed on the unit sphere."""
    dim = check_dim(dim)
    while True:
        u = rng.random(dim)
        m = ndtri(np.clip(u, _U_EPS, 1.0 - 2**-53))
        norm = np.linalg.norm(m)
        if norm > 0 and np.isfinite(norm):
            return m / norm


def sample_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform directions as an ``(n, dim)`` array."""
    dim = check_dim(dim)
    m = ndtri(np.clip(rng.random((n, dim)), _U_EPS, 1.0 - 2**-53))
    norms = np.linalg.norm(m, axis=1)
    bad = ~(norms > 0)
    while np.any(bad):
        m[bad] = ndtri(np.clip(rng.random((int(bad.sum()), dim)), _U_EPS, 1.0 - 2**-53))
        norms = np.linalg.norm(m, axis=1)
        bad = ~(norms > 0)
    return m / norms[:, None]


def sobol_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Directions from a scrambled Sobol sequence seeded from ``rng``.

    The Gaussian coordinates are inverse-CDF images of low-discrepancy
    sampling probabilities, so the set covers the sphere more evenly than
    i.i.d. draws.  Degenerate rows (norm 0) are replaced by i.i.d. draws.
    """
    dim = check_dim(dim)
    if n < 1:
        return np.empty((0, dim))
    seed = int(rng.integers(0, 2**63 - 1))
    engine = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # balance properties need powers of two; a prefix is still fine
        warnings.simplefilter("ignore", UserWarning)
        u = engine.random(n)
    m = ndtri(np.clip(u, _U_EPS, 1.0 - 2**-53))
    norms = np.linalg.norm(m, axis=1)
    bad = ~(norms > 0)
    if np.any(bad):
        m[bad] = sample_directions(rng, int(bad.sum()), dim)
        norms[bad] = 1.0
    return m / norms[:, None]


def _pressure_row(pool: np.ndarray, i: int, alive: np.ndarray, dim: int) -> float:
    # pressure on point i from every other live point (duplicates excluded)
    d = np.linalg.norm(pool[alive] - pool[i], axis=1)
    d = d[d > 0]
    return float(np.sum(d ** (-float(dim))))


def thin_by_pressure(pool, n: int) -> np.ndarray:
    """Keep ``n`` points of ``pool`` by repeatedly removing the most pressed one.

    The pressure on point i is sum over j != i of 1/d_ij**dim with chordal
    distances.  Ties go to the lowest index.  Exact duplicates give the
    later copy infinite pressure so it leaves first.  The surviving points
    are returned in their original order.
    """
    pool = np.asarray(pool, dtype=float)
    if pool.ndim != 2:
        raise DomainError("pool must be a 2-D array of points")
    m, dim = pool.shape
    if not (1 <= n <= m):
        raise DomainError(f"need 1 <= n <= pool size ({m}), got {n}")
    if n == m:
        return pool.copy()

    pressure = np.zeros(m)
    exponent = -float(dim)
    for start in range(0, m, _CHUNK):
        block = pool[start : start + _CHUNK]
        d = np.sqrt(np.maximum(
            np.sum(block**2, 1)[:, None] + np.sum(pool**2, 1)[None, :] - 2.0 * block @ pool.T,
            0.0,
        ))
        rows = np.arange(start, start + block.shape[0])
        # exact distances for near-coincident pairs, where the expansion is noisy
        close = d < 1e-6
        if np.any(close):
            r, c = np.nonzero(close)
            d[r, c] = np.linalg.norm(block[r] - pool[c], axis=1)
        d[np.arange(block.shape[0]), rows] = np.inf
        dup = d == 0
        with np.errstate(divide="ignore"):
            contrib = np.where(dup, 0.0, d**exponent)
        pressure[rows] = contrib.sum(axis=1)
        # a later-indexed duplicate of an earlier point is pushed out first
        later_dup = np.any(dup & (np.arange(m)[None, :] < rows[:, None]), axis=1)
        pressure[rows[later_dup]] = np.inf

    alive = np.ones(m, dtype=bool)
    for _ in range(m - n):
        k = int(np.argmax(np.where(alive, pressure, -np.inf)))
        alive[k] = False
        idx = np.nonzero(alive)[0]
        d = np.linalg.norm(pool[idx] - pool[k], axis=1)
        pos = d > 0
        with np.errstate(divide="ignore"):
            contrib = np.where(pos, d**exponent, 0.0)
        finite = np.isfinite(pressure[idx])
        new = pressure[idx] - contrib
        # subtraction loses precision when the removed term dominated: recompute
        unstable = finite & (contrib > 0.5 * pressure[idx])
        pressure[idx[finite]] = new[finite]
        for j in idx[unstable]:
            pressure[j] = _pressure_row(pool, j, alive, dim)
    return pool[alive].copy()


def spread_directions(
    rng: np.random.Generator, n: int, dim: int, oversample: float = 7.0
) -> np.ndarray:
    """Return ``n`` well-spread unit directions as an ``(n, dim)`` array.

    A pool of ``ceil(oversample * n)`` scrambled Sobol directions is thinned
    by pressure.  In one dimension only the two directions +1 and -1 exist,
    so at most two are returned.
    """
    dim = check_dim(dim)
    if n < 1:
        raise DomainError(f"need at least one direction, got {n}")
    if oversample < 1:
        raise DomainError("oversample factor must be at least 1")
    if dim == 1:
        first = 1.0 if rng.random() < 0.5 else -1.0
        return np.array([[first], [-first]])[: min(n, 2)]
    pool = sobol_directions(rng, int(math.ceil(oversample * n)), dim)
    return thin_by_pressure(pool, n)
