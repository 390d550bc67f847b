"""Regularized incomplete gamma functions and their inverses.

Both tails are computed in log space: the lower tail P(a, x) by its power
series (x < a + 1) and the upper tail Q(a, x) by a Lentz continued fraction
(x >= a + 1), or by its finite closed-form sum when 2a is an integer;
the complementary tail is formed with ``log1p``/``expm1`` so
that neither tail loses relative precision when it is tiny.  Inverses run a
bracketed Newton iteration on the log of whichever tail is smaller.

Only scalar shape ``a`` is supported; ``x`` and probabilities broadcast.
Lower-tail inverses whose true root underflows double precision (roughly
``p < 1e-300`` for small ``a``) return 0 or a subnormal.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfcx

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 1000


def _check_shape(a: float) -> float:
    a = float(a)
    if not a > 0.0 or not math.isfinite(a):
        raise ValueError(f"shape parameter must be positive and finite, got {a}")
    return a


def _log_series(a: float, x: np.ndarray) -> np.ndarray:
    # log P(a, x); valid for 0 < x < a + 1.  Converged entries drop out.
    total = np.full_like(x, 1.0 / a)
    term = total.copy()
    ap = a
    active = np.arange(x.size)
    xa = x.copy()
    for _ in range(_MAX_ITER):
        ap += 1.0
        term[active] *= xa / ap
        total[active] += term[active]
        keep = np.abs(term[active]) > np.abs(total[active]) * _EPS
        if not keep.all():
            active, xa = active[keep], xa[keep]
            if active.size == 0:
                break
    return np.log(total) + a * np.log(x) - x - math.lgamma(a)


def _log_continued_fraction(a: float, x: np.ndarray) -> np.ndarray:
    # log Q(a, x) by modified Lentz; valid for x >= a + 1
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    active = np.arange(x.size)
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b[active] += 2.0
        dd = an * d[active] + b[active]
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = b[active] + an / c[active]
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        delta = dd * cc
        d[active], c[active] = dd, cc
        h[active] *= delta
        keep = np.abs(delta - 1.0) > _EPS
        if not keep.all():
            active = active[keep]
            if active.size == 0:
                break
    return np.log(h) + a * np.log(x) - x - math.lgamma(a)


# shapes up to this size with 2a integral use the finite upper-tail sums
_FINITE_SUM_MAX = 200


def _has_finite_sum(a: float) -> bool:
    return 2.0 * a == round(2.0 * a) and a <= _FINITE_SUM_MAX


def _log_finite_sum(a: float, x: np.ndarray) -> np.ndarray:
    """log Q(a, x) for integer or half-integer ``a`` and x > 0.

    Q(m, x) = exp(-x) sum_{k<m} x^k / k!, and for half-integers
    Q(m + 1/2, x) = erfc(sqrt x) + exp(-x) sum_{k=1..m} x^(k-1/2) / Gamma(k+1/2).
    All terms are positive, so the log-sum-exp keeps full relative precision.
    """
    lx = np.log(x)[:, None]
    if a == round(a):
        k = np.arange(int(round(a)), dtype=float)
        logs = k * lx - np.array([math.lgamma(v + 1.0) for v in k])
    else:
        m = int(a - 0.5)
        k = np.arange(1, m + 1, dtype=float)
        logs = (k - 0.5) * lx - np.array([math.lgamma(v + 0.5) for v in k])
        logs = np.concatenate([np.log(erfcx(np.sqrt(x)))[:, None], logs], axis=1)
    top = logs.max(axis=1)
    return -x + top + np.log(np.exp(logs - top[:, None]).sum(axis=1))


def log_gammainc_pair(a: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(log P(a, x), log Q(a, x))`` elementwise."""
    a = _check_shape(a)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("incomplete gamma argument must be nonnegative")
    flat = np.atleast_1d(x).ravel()
    log_p = np.empty_like(flat)
    log_q = np.empty_like(flat)

    zero = flat == 0.0
    inf = np.isinf(flat)
    log_p[zero], log_q[zero] = -np.inf, 0.0
    log_p[inf], log_q[inf] = 0.0, -np.inf

    finite = ~(zero | inf)
    low = finite & (flat < a + 1.0)
    high = finite & ~low
    if np.any(low):
        lp = _log_series(a, flat[low])
        log_p[low] = lp
        log_q[low] = np.log(-np.expm1(lp))
    if np.any(high):
        xh = flat[high]
        lq = _log_finite_sum(a, xh) if _has_finite_sum(a) else _log_continued_fraction(a, xh)
        log_q[high] = lq
        log_p[high] = np.log1p(-np.exp(lq))
    return log_p.reshape(x.shape), log_q.reshape(x.shape)


def gammainc(a: float, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    log_p, _ = log_gammainc_pair(a, x)
    return np.exp(log_p)


def gammaincc(a: float, x):
    """Regularized upper incomplete gamma function Q(a, x)."""
    _, log_q = log_gammainc_pair(a, x)
    return np.exp(log_q)


def _initial_guess(a: float, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Numerical Recipes starting values; p and q are the two tails, one of
    # them accurate.
    if a > 1.0:
        small = np.minimum(p, q)
        t = np.sqrt(-2.0 * np.log(small))
        z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        z = np.where(p < 0.5, -z, z)
        x = a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * math.sqrt(a))) ** 3
        return np.maximum(x, 1e-3)
    t = 1.0 - a * (0.253 + a * 0.12)
    with np.errstate(divide="ignore"):
        lower = (p / t) ** (1.0 / a)
        upper = 1.0 - np.log(q / (1.0 - t))
    return np.maximum(np.where(p < t, lower, upper), 1e-300)


def _invert(a: float, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve P(a, x) = p (equivalently Q(a, x) = q) for interior targets.

    Works on the log of the smaller tail so targets like q = 1e-300 are fine.
    """
    use_upper = q < p
    log_target = np.where(use_upper, np.log(q), np.log(p))
    lg = math.lgamma(a)

    x = _initial_guess(a, p, q)
    lo = np.zeros_like(x)
    hi = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(200):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa = x[idx]
        log_p, log_q = log_gammainc_pair(a, xa)
        up = use_upper[idx]
        # increasing residual in x for both tails
        resid = np.where(up, log_target[idx] - log_q, log_p - log_target[idx])
        hi_a = np.where(resid > 0, np.minimum(hi[idx], xa), hi[idx])
        lo_a = np.where(resid < 0, np.maximum(lo[idx], xa), lo[idx])
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            # d(log tail)/d(log x); finite for every x > 0
            log_slope = a * np.log(xa) - xa - lg - np.where(up, log_q, log_p)
            dlogx = resid * np.exp(-log_slope)
            # Newton in x for the upper tail (log Q ~ -x), in log x for the lower
            x_new = np.where(up, xa - dlogx * xa, xa * np.exp(-dlogx))
        bad = ~np.isfinite(x_new) | (x_new <= lo_a) | (x_new >= hi_a)
        bisect = np.where(
            np.isfinite(hi_a),
            np.where(lo_a > 0, 0.5 * (lo_a + hi_a), 1e-3 * hi_a),
            2.0 * xa,
        )
        x_new = np.where(bad, bisect, x_new)

        done = (resid == 0) | (np.abs(x_new - xa) <= 4e-16 * xa) | (hi_a - lo_a <= 4e-16 * xa)
        x[idx] = np.where(resid == 0, xa, x_new)
        lo[idx], hi[idx] = lo_a, hi_a
        active[idx[done]] = False
    return x


def gammaincinv(a: float, p):
    """Inverse of P(a, .): returns x with P(a, x) = p, for p in [0, 1]."""
    a = _check_shape(a)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("probability must lie in [0, 1]")
    flat = np.atleast_1d(p).ravel()
    out = np.empty_like(flat)
    out[flat == 0.0] = 0.0
    out[flat == 1.0] = np.inf
    inner = (flat > 0.0) & (flat < 1.0)
    if np.any(inner):
        pi = flat[inner]
        out[inner] = _invert(a, pi, 1.0 - pi)
    return out.reshape(p.shape)


def gammainccinv(a: float, q):
    """Inverse of Q(a, .): returns x with Q(a, x) = q, for q in [0, 1]."""
    a = _check_shape(a)
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
        raise ValueError("probability must lie in [0, 1]")
    flat = np.atleast_1d(q).ravel()
    out = np.empty_like(flat)
    out[flat == 1.0] = 0.0
    out[flat == 0.0] = np.inf
    inner = (flat > 0.0) & (flat < 1.0)
    if np.any(inner):
        qi = flat[inner]
        out[inner] = _invert(a, 1.0 - qi, qi)
    return out.reshape(q.shape)
