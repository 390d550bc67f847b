"""Global importance measures of the input variables for a rare event.

At each rare node the direction towards the centroid of its K nearest safe
nodes stands in for the limit-state gradient.  The squared direction
cosines of that vector split the node's contribution among the variables;
averaging over rare nodes (optionally with importance weights) gives the
indices s_v^2, which sum to one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .candidates import default_sigma
from .errors import DomainError, StateError


@dataclass
class SensitivityResult:
    label: str
    s: np.ndarray
    n_used: int
    n_skipped: int
    K: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "s_squared": [float(v) for v in self.s],
            "n_used": self.n_used,
            "n_skipped": self.n_skipped,
            "K": self.K,
        }


def direction_shares(
    rare_nodes, safe_nodes, K: int = 5, search_radius: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Squared direction cosines towards the K-nearest-safe centroid.

    Returns ``(shares, used)``: ``shares`` has one row per rare node (rows of
    skipped nodes are zero) and ``used`` flags nodes that produced shares.
    A node is skipped when its K-th nearest safe node lies beyond
    ``search_radius`` (default three cloud standard deviations) or when the
    centroid coincides with it.
    """
    rare = np.atleast_2d(np.asarray(rare_nodes, dtype=float))
    safe = np.atleast_2d(np.asarray(safe_nodes, dtype=float))
    if K < 1:
        raise DomainError("K must be at least 1")
    if len(safe) < K:
        raise StateError(f"need at least K={K} safe nodes, have {len(safe)}")
    dim = safe.shape[1]
    if len(rare) == 0:
        return np.empty((0, dim)), np.zeros(0, dtype=bool)
    radius = 3.0 * default_sigma(dim) if search_radius is None else float(search_radius)
    dist, idx = cKDTree(safe).query(rare, k=K)
    dist = dist.reshape(len(rare), K)
    idx = idx.reshape(len(rare), K)
    g = safe[idx].mean(axis=1) - rare
    norm2 = np.einsum("ij,ij->i", g, g)
    used = (dist[:, -1] <= radius) & (norm2 > 0)
    shares = np.zeros_like(g)
    shares[used] = g[used] ** 2 / norm2[used, None]
    n_zero = int(np.sum(norm2 == 0))
    if n_zero:
        warnings.warn(f"{n_zero} node(s) coincide with their safe centroid; skipped", RuntimeWarning, stacklevel=2)
    return shares, used


def sensitivity_indices(
    nodes,
    codes,
    label_code: int,
    K: int = 5,
    weights=None,
    safe_codes=None,
    label_name: str | None = None,
    search_radius: float | None = None,
) -> SensitivityResult:
    """Indices s_v^2 for the nodes carrying ``label_code``.

    Without ``weights`` the nodes are taken as draws proportional to the
    Gaussian density restricted to the sampled region, and the indices are
    the plain mean of the per-node shares.  With ``weights`` (likelihood
    ratios f/h) the shares are averaged with weight 1[label] * f/h and
    divided by the matching probability estimate.  Safe nodes are those in
    ``safe_codes`` (default: every other label).
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    codes = np.asarray(codes)
    hit = codes == label_code
    if not np.any(hit):
        raise StateError(f"no node carries label code {label_code}")
    safe = ~hit if safe_codes is None else np.isin(codes, list(safe_codes))
    shares, used = direction_shares(nodes[hit], nodes[safe], K, search_radius)
    n_used = int(used.sum())
    if n_used == 0:
        raise StateError("no rare node had usable safe neighbours")
    if weights is None:
        s = shares[used].mean(axis=0)
    else:
        w = np.asarray(weights, dtype=float)[hit]
        n = len(nodes)
        p_hat = float(np.sum(w[used])) / n
        s = np.sum(w[used, None] * shares[used], axis=0) / n / p_hat
    name = str(label_code) if label_name is None else label_name
    return SensitivityResult(name, s, n_used, int(hit.sum()) - n_used, K)


def form_alpha_from_design_point(x_star) -> np.ndarray:
    """Squared direction cosines of a design point, x_v**2 / beta**2."""
    x = np.asarray(x_star, dtype=float).reshape(-1)
    beta2 = float(x @ x)
    if not beta2 > 0 or not math.isfinite(beta2):
        raise DomainError("design point must be a nonzero finite vector")
    return x**2 / beta2
