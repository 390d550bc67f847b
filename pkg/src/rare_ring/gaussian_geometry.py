"""Closed-form geometry of the standard Gaussian space.

The radial distance of a standard Gaussian vector in ``dim`` variables
follows the chi law with ``dim`` degrees of freedom, so ball and annulus
probability contents reduce to regularized incomplete gamma functions of
``rho**2 / 2``.  All functions accept scalars or arrays for the radius or
probability argument and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import special
from .errors import ConfigError, DomainError


def check_dim(dim) -> int:
    """Validate the number of Gaussian variables and return it as ``int``."""
    if isinstance(dim, bool) or int(dim) != dim or int(dim) < 1:
        raise DomainError(f"dimension must be a positive integer, got {dim!r}")
    return int(dim)


def _as_radius(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(np.isnan(rho)) or np.any(rho < 0):
        raise DomainError("radial distance must be nonnegative")
    return rho


def _ret(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class BallSpec:
    """Origin-centred ball with its inner and outer probability contents."""

    radius: float
    p_in: float
    p_out: float

    def __post_init__(self):
        if self.radius < 0:
            raise DomainError("ball radius must be nonnegative")
        if abs(self.p_in + self.p_out - 1.0) > 1e-12:
            raise DomainError("p_in + p_out must equal 1")
        if (self.radius == 0) != (self.p_in == 0):
            raise DomainError("zero radius must coincide with zero content")

    @classmethod
    def from_radius(cls, radius: float, dim: int) -> "BallSpec":
        radius = float(radius)
        p_out = float(chi_sf(radius, dim))
        return cls(radius, 1.0 - p_out, p_out)

    @classmethod
    def from_pout(cls, p_out: float, dim: int) -> "BallSpec":
        return cls(float(radius_for_pout(p_out, dim)), 1.0 - float(p_out), float(p_out))


@dataclass(frozen=True)
class AnnulusSpec:
    """Ring between two origin-centred spheres.

    ``p_r`` and ``p_R`` are the chi CDF values at the radii.  The
    exterior contents ``q_r = 1 - p_r`` and ``q_R = 1 - p_R`` are kept as
    well, computed from the upper tail, so that thin rings far out in the
    tail keep their relative precision.
    """

    r: float
    R: float
    p_r: float
    p_R: float
    q_r: float
    q_R: float

    def __post_init__(self):
        if not (0 <= self.r < self.R):
            raise DomainError(f"annulus needs 0 <= r < R, got r={self.r}, R={self.R}")
        if not self.p_ann > 0:
            raise DomainError("annulus has no probability content")

    @property
    def p_ann(self) -> float:
        return self.q_r - self.q_R

    @classmethod
    def from_radii(cls, r: float, R: float, dim: int) -> "AnnulusSpec":
        r, R = float(r), float(R)
        if not (0 <= r < R):
            raise DomainError(f"annulus needs 0 <= r < R, got r={r}, R={R}")
        q_r = float(chi_sf(r, dim))
        q_R = float(chi_sf(R, dim))
        return cls(r, R, 1.0 - q_r, 1.0 - q_R, q_r, q_R)


def chi_pdf(rho, dim: int):
    """Density of the radial distance in ``dim`` standard Gaussian variables."""
    dim = check_dim(dim)
    rho = _as_radius(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = (
            (1.0 - dim / 2.0) * math.log(2.0)
            - math.lgamma(dim / 2.0)
            + (dim - 1.0) * np.log(rho)
            - 0.5 * rho**2
        )
    out = np.exp(log_f)
    if dim == 1:
        out = np.where(rho == 0, math.sqrt(2.0 / math.pi), out)
    return _ret(out)


def chi_cdf(rho, dim: int):
    """Probability that the radial distance is at most ``rho``."""
    dim = check_dim(dim)
    rho = _as_radius(rho)
    return _ret(special.gammainc(dim / 2.0, 0.5 * rho**2))


def chi_sf(rho, dim: int):
    """Probability that the radial distance exceeds ``rho`` (upper tail)."""
    dim = check_dim(dim)
    rho = _as_radius(rho)
    return _ret(special.gammaincc(dim / 2.0, 0.5 * rho**2))


def chi_ppf(p, dim: int):
    """Radius of the ball holding probability ``p``."""
    dim = check_dim(dim)
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any((p < 0) | (p >= 1)):
        raise DomainError("probability must lie in [0, 1)")
    return _ret(np.sqrt(2.0 * special.gammaincinv(dim / 2.0, p)))


def radius_for_pout(p_out, dim: int):
    """Radius of the ball whose exterior holds probability ``p_out``."""
    dim = check_dim(dim)
    p_out = np.asarray(p_out, dtype=float)
    if np.any(np.isnan(p_out)) or np.any((p_out <= 0) | (p_out > 1)):
        raise DomainError("exterior probability must lie in (0, 1]")
    return _ret(np.sqrt(2.0 * special.gammainccinv(dim / 2.0, p_out)))


def ball_volume(r, dim: int):
    """Volume of the ``dim``-ball of radius ``r``."""
    dim = check_dim(dim)
    r = _as_radius(r)
    return _ret(math.pi ** (dim / 2.0) * r**dim / math.gamma(dim / 2.0 + 1.0))


def ball_surface(r, dim: int):
    """Surface measure of the sphere of radius ``r`` in ``dim`` dimensions."""
    dim = check_dim(dim)
    r = _as_radius(r)
    return _ret(2.0 * math.pi ** (dim / 2.0) * r ** (dim - 1) / math.gamma(dim / 2.0))


def point_log_density(rho, dim: int):
    """Log of the joint standard Gaussian density at distance ``rho``."""
    dim = check_dim(dim)
    rho = _as_radius(rho)
    return _ret(-0.5 * dim * math.log(2.0 * math.pi) - 0.5 * rho**2)


def radial_moments(dim: int) -> tuple[float, float, float, float]:
    """Return ``(mean, mode, median_approx, variance)`` of the chi law."""
    dim = check_dim(dim)
    mean = math.sqrt(2.0) * math.exp(math.lgamma((dim + 1) / 2.0) - math.lgamma(dim / 2.0))
    mode = math.sqrt(dim - 1.0)
    median = math.sqrt(dim) * (1.0 - 2.0 / (9.0 * dim)) ** 1.5
    variance = dim - mean**2
    return mean, mode, median, variance


def _open_probability(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any((p <= 0) | (p >= 1)):
        raise DomainError("sampling probability must lie in (0, 1)")
    return p


def exterior_distance(p, r: float, dim: int):
    """Inverse-CDF distance of a point drawn from the exterior of ball ``r``.

    Computed in the upper tail: the exterior content beyond the returned
    distance equals ``(1 - p) * Q(r)``.
    """
    dim = check_dim(dim)
    p = _open_probability(p)
    q_r = float(chi_sf(float(_as_radius(r)), dim))
    d = np.sqrt(2.0 * special.gammainccinv(dim / 2.0, (1.0 - p) * q_r))
    return _ret(np.maximum(d, np.nextafter(float(r), np.inf)))


def annulus_distance(p, ann: AnnulusSpec, dim: int):
    """Inverse-CDF distance of a point drawn inside the annulus ``ann``.

    Equivalent to ``chi_ppf(p * (p_R - p_r) + p_r)``, evaluated through the
    exterior contents for tail precision.  The result is clipped into the
    open interval ``(r, R)``.
    """
    dim = check_dim(dim)
    if not ann.p_ann > 0:
        raise DomainError("annulus has no probability content")
    p = _open_probability(p)
    q = ann.q_r - p * ann.p_ann
    d = np.sqrt(2.0 * special.gammainccinv(dim / 2.0, q))
    lo = np.nextafter(ann.r, np.inf)
    hi = np.nextafter(ann.R, -np.inf)
    return _ret(np.clip(d, lo, hi))


def outer_radius_for_estimate(p_prev: float, dim: int, fraction: float = 1e-4) -> float:
    """Outer ring radius leaving ``p_prev * fraction`` probability beyond it."""
    dim = check_dim(dim)
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    if not (0.0 < p_prev <= 1.0):
        raise DomainError(f"previous estimate must lie in (0, 1], got {p_prev}")
    return float(radius_for_pout(p_prev * fraction, dim))
