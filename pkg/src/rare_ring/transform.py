"""Gaussian-copula (Nataf) map from standard Gaussian to physical space.

Independent standard normals are coloured with the eigendecomposition of
the underlying Gaussian correlation, x_c = Phi Lambda^(1/2) u, and each
coordinate is then pushed through its marginal quantile function at the
normal CDF value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .errors import ConfigError, DomainError

# Gaussian coordinates beyond this are saturated before the marginal map
CLAMP = 8.5

_GH_ORDER = 64
_BISECT_TOL = 1e-4


@dataclass(frozen=True)
class MarginalSpec:
    kind: str
    location: float = 0.0
    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.kind not in ("standard_normal", "gumbel_max", "weibull_min"):
            raise ConfigError(f"unknown marginal kind {self.kind!r}")
        if not self.scale > 0:
            raise ConfigError("marginal scale must be positive")
        if self.kind == "weibull_min" and not self.shape > 0:
            raise ConfigError("Weibull shape must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalSpec":
        return cls(d["kind"], float(d.get("location", 0.0)), float(d.get("scale", 1.0)), float(d.get("shape", 1.0)))

    def quantile_of_gaussian(self, x) -> np.ndarray:
        """F^-1(Phi(x)), evaluated through log tails to keep both ends exact."""
        x = np.clip(np.asarray(x, dtype=float), -CLAMP, CLAMP)
        if self.kind == "standard_normal":
            return x
        if self.kind == "gumbel_max":
            # F^-1(p) = mu - beta ln(-ln p), with ln p = log Phi(x)
            return self.location - self.scale * np.log(-log_ndtr(x))
        # Weibull: F^-1(p) = lambda (-ln(1 - p))^(1/k), with ln(1 - p) = log Phi(-x)
        return self.scale * (-log_ndtr(-x)) ** (1.0 / self.shape)


def _eig_colouring(corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(corr)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        nz = np.nonzero(np.abs(vecs[:, j]) > 1e-14)[0]
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


@dataclass
class NatafModel:
    marginals: list[MarginalSpec]
    gaussian_correlation: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.gaussian_correlation, dtype=float)
        n = len(self.marginals)
        if c.shape != (n, n):
            raise ConfigError("correlation matrix shape does not match the marginals")
        if not np.allclose(c, c.T, atol=1e-12) or not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise ConfigError("correlation matrix must be symmetric with unit diagonal")
        vals, vecs = _eig_colouring(c)
        if vals.min() <= 0:
            raise ConfigError("correlation matrix is not positive definite")
        self.gaussian_correlation = c
        self.eigenvalues = vals
        self.eigenvectors = vecs
        self._colour = vecs * np.sqrt(vals)[None, :]

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def color(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return u @ self._colour.T

    def marginal_map(self, x_c) -> np.ndarray:
        x_c = np.asarray(x_c, dtype=float)
        out = np.empty_like(x_c)
        for v, m in enumerate(self.marginals):
            out[..., v] = m.quantile_of_gaussian(x_c[..., v])
        return out

    def to_physical(self, u) -> np.ndarray:
        return self.marginal_map(self.color(u))


def color(model: NatafModel, u) -> np.ndarray:
    return model.color(u)


def marginal_map(model: NatafModel, x_c) -> np.ndarray:
    return model.marginal_map(x_c)


def _hermite_nodes(order: int = _GH_ORDER) -> tuple[np.ndarray, np.ndarray]:
    # probabilists' rule: integrates against the standard normal density
    t, w = np.polynomial.hermite.hermgauss(order)
    return t * math.sqrt(2.0), w / math.sqrt(math.pi)


def _moments(m: MarginalSpec, z: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    y = m.quantile_of_gaussian(z)
    mean = float(w @ y)
    return mean, math.sqrt(float(w @ (y - mean) ** 2))


def mapped_pearson(mi: MarginalSpec, mj: MarginalSpec, rho_g: float, order: int = _GH_ORDER) -> float:
    """Pearson correlation of the marginal images of a bivariate normal pair."""
    z, w = _hermite_nodes(order)
    mu_i, sd_i = _moments(mi, z, w)
    mu_j, sd_j = _moments(mj, z, w)
    a = z[:, None]
    b = rho_g * z[:, None] + math.sqrt(max(1.0 - rho_g**2, 0.0)) * z[None, :]
    ww = w[:, None] * w[None, :]
    yi = mi.quantile_of_gaussian(a)
    yj = mj.quantile_of_gaussian(b)
    return float(np.sum(ww * (yi - mu_i) * (yj - mu_j)) / (sd_i * sd_j))


def underlying_gaussian_correlation(
    mi: MarginalSpec, mj: MarginalSpec, target_pearson: float, tol: float = _BISECT_TOL
) -> float:
    """Gaussian correlation whose mapped Pearson correlation equals the target."""
    if not abs(target_pearson) < 1:
        raise DomainError("target correlation must lie in (-1, 1)")
    if target_pearson == 0:
        return 0.0
    lo, hi = -0.9999, 0.9999
    f_lo = mapped_pearson(mi, mj, lo) - target_pearson
    f_hi = mapped_pearson(mi, mj, hi) - target_pearson
    if f_lo > 0 or f_hi < 0:
        raise DomainError(
            f"target {target_pearson} outside attainable range "
            f"[{f_lo + target_pearson:.4f}, {f_hi + target_pearson:.4f}]"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mapped_pearson(mi, mj, mid) - target_pearson < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
