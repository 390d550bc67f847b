"""Probability estimates from the nearest-neighbour surrogate.

The preferred estimator samples nodes in the ring between the radius of the
most central rare screening dot and an outer radius beyond which the
remaining probability is negligible.  Ring nodes are drawn from the
truncated Gaussian, so the likelihood ratio is the constant ``p_ann`` and
the estimate is ``p_ann`` times the fraction of nodes labelled rare.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .candidates import DotCloud, ExploitationConfig, generate_exploitation_dots, log_density
from .classifier import EventLabel, ExperimentalDesign
from .directions import sobol_directions
from .errors import ConfigError, DomainError, StateError
from .gaussian_geometry import (
    AnnulusSpec,
    annulus_distance,
    check_dim,
    chi_sf,
    outer_radius_for_estimate,
    radius_for_pout,
)

GLOBAL_RING = "global_ring"
LOCALIZED = "localized"

OUTER_RULES = ("estimate", "exterior")


@dataclass
class EstimateRecord:
    n_sim: int
    label: EventLabel
    p_hat: float
    variance: float
    cov: float
    n_is: int
    n_is_hits: int
    annulus: AnnulusSpec | None
    method: str
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        ann = self.annulus
        return {
            "n_sim": self.n_sim,
            "label": self.label.name,
            "label_code": self.label.code,
            "p_hat": self.p_hat,
            "variance": self.variance,
            "cov": self.cov,
            "n_is": self.n_is,
            "n_is_hits": self.n_is_hits,
            "method": self.method,
            "r_inner": None if ann is None else ann.r,
            "r_outer": None if ann is None else ann.R,
            "p_ann": None if ann is None else ann.p_ann,
            "flags": list(self.flags),
        }


@dataclass
class ScreeningResult:
    dots: np.ndarray
    codes: np.ndarray
    seed: np.ndarray
    log_h: np.ndarray
    r: float
    rare_code: int


def _cloud_log_h(dots, centres, sigma, dim) -> np.ndarray:
    c = dots - centres
    return -0.5 * dim * math.log(2.0 * math.pi * sigma**2) - 0.5 * np.einsum("ij,ij->i", c, c) / sigma**2


def _min_rare_radius(ed: ExperimentalDesign, dots, codes, rare_code) -> float:
    seeds = ed.points[ed.codes == rare_code]
    if len(seeds) == 0:
        raise StateError(f"design holds no point with label code {rare_code}")
    r = float(np.min(np.linalg.norm(seeds, axis=1)))
    hit = codes == rare_code
    if np.any(hit):
        r = min(r, float(np.min(np.linalg.norm(dots[hit], axis=1))))
    return r


def screen(
    rng: np.random.Generator,
    ed: ExperimentalDesign,
    rare_label: EventLabel | int,
    dots_per_seed: int = 1000,
    sigma: float | None = None,
) -> ScreeningResult:
    """Classify fresh Gaussian clouds around every point carrying ``rare_label``."""
    code = rare_label.code if isinstance(rare_label, EventLabel) else int(rare_label)
    cfg = ExploitationConfig(dots_per_seed, sigma)
    seeds = np.nonzero(ed.codes == code)[0]
    if seeds.size == 0:
        raise StateError(f"design holds no point with label code {code}")
    dots, owner = generate_exploitation_dots(rng, ed, cfg, (code,), seeds=seeds)
    codes = ed.classify_codes(dots)
    log_h = _cloud_log_h(dots, ed.points[owner], cfg.sigma_for(ed.dim), ed.dim)
    return ScreeningResult(dots, codes, owner, log_h, _min_rare_radius(ed, dots, codes, code), code)


def screen_from_cloud(cloud: DotCloud, ed: ExperimentalDesign, rare_code: int) -> ScreeningResult:
    """Screening view of a persistent cloud, restricted to one label's seeds."""
    cloud.sync(ed)
    own = ed.codes[cloud.seed] == rare_code
    dots = cloud.x[own]
    codes = ed.codes[cloud.i[own, 0]]
    return ScreeningResult(
        dots, codes, cloud.seed[own], cloud.log_h[own],
        _min_rare_radius(ed, dots, codes, rare_code), rare_code,
    )


def _summary(p_hat: float, variance: float) -> float:
    if p_hat > 0:
        return math.sqrt(max(variance, 0.0)) / p_hat
    return math.inf


def localized_is_estimate(
    screening: ScreeningResult, ed: ExperimentalDesign, rare_label: EventLabel | None = None
) -> EstimateRecord:
    """Average of indicator times f/h over all screening dots.

    Each dot is weighted with the density of the cloud that produced it.
    Where clouds overlap this is an average of per-cloud estimators, which
    is unbiased only if each cloud alone covers its share of the event.
    """
    code = screening.rare_code if rare_label is None else rare_label.code
    label = ed.labels_by_code.get(code, EventLabel(code, f"label_{code}"))
    n = len(screening.dots)
    if n == 0:
        raise StateError("empty screening result")
    hit = screening.codes == code
    terms = np.where(hit, np.exp(log_density(screening.dots) - screening.log_h), 0.0)
    p_hat = float(terms.mean())
    variance = float(np.sum((terms - p_hat) ** 2) / (n * (n - 1))) if n > 1 else math.inf
    return EstimateRecord(
        len(ed), label, p_hat, variance, _summary(p_hat, variance), n, int(hit.sum()), None,
        LOCALIZED, ["diagnostic"],
    )


def build_annulus(
    r_inner: float,
    prev_estimate: float | None,
    dim: int,
    fraction: float = 1e-4,
    rule: str = "estimate",
) -> AnnulusSpec:
    """Ring from ``r_inner`` to an outer radius set by the tail rule.

    ``rule="estimate"`` leaves ``prev_estimate * fraction`` beyond the outer
    radius when a positive previous estimate exists; otherwise, and always
    for ``rule="exterior"``, the exterior content ``1 - p_r`` takes its
    place.  If the outer radius does not exceed the inner one it is pushed
    out by factors of ten in exterior probability.
    """
    dim = check_dim(dim)
    if rule not in OUTER_RULES:
        raise ConfigError(f"unknown outer-radius rule {rule!r}; use one of {OUTER_RULES}")
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    r_inner = float(r_inner)
    if r_inner < 0:
        raise DomainError("inner radius must be nonnegative")
    q_r = float(chi_sf(r_inner, dim))
    if q_r <= 0:
        raise DomainError(f"inner radius {r_inner} leaves no exterior probability")
    base = prev_estimate if (rule == "estimate" and prev_estimate and prev_estimate > 0) else q_r
    base = min(float(base), 1.0)
    R = outer_radius_for_estimate(base, dim, fraction)
    p_out = base * fraction
    while R <= r_inner:
        p_out /= 10.0
        warnings.warn(
            f"outer radius {R:.4g} not beyond inner radius {r_inner:.4g}; widening",
            RuntimeWarning,
            stacklevel=2,
        )
        R = float(radius_for_pout(p_out, dim))
    return AnnulusSpec.from_radii(r_inner, R, dim)


def ring_nodes(rng: np.random.Generator, ann: AnnulusSpec, dim: int, n: int) -> np.ndarray:
    """``n`` nodes in the ring with stratified radial probabilities.

    Radii use the midpoint probabilities (i - 0.5)/n paired with a random
    permutation of scrambled Sobol directions.
    """
    dim = check_dim(dim)
    if n < 1:
        raise ConfigError("n_is must be at least 1")
    p = (np.arange(1, n + 1) - 0.5) / n
    radii = annulus_distance(p, ann, dim)
    radii = np.atleast_1d(radii)[rng.permutation(n)]
    if dim == 1:
        dirs = np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
    else:
        dirs = sobol_directions(rng, n, dim)
    return radii[:, None] * dirs


@dataclass
class RingSample:
    nodes: np.ndarray
    codes: np.ndarray
    annulus: AnnulusSpec


def global_is_estimate(
    rng: np.random.Generator,
    ed: ExperimentalDesign,
    labels,
    annulus: AnnulusSpec,
    n_is: int,
    indicator=None,
    return_sample: bool = False,
):
    """Ring estimates ``p_ann * n_T / n_is`` for each label in ``labels``.

    ``indicator`` maps an ``(n, dim)`` array to label codes and replaces the
    surrogate; it exists so the estimator can be checked against the true
    limit state.  With ``return_sample`` the classified nodes come back as
    well, for sensitivity analysis.
    """
    dim = ed.dim
    nodes = ring_nodes(rng, annulus, dim, n_is)
    codes = ed.classify_codes(nodes) if indicator is None else np.asarray(indicator(nodes), dtype=int)
    records = []
    p_ann = annulus.p_ann
    norms = None
    for label in labels:
        hits = codes == label.code
        n_t = int(hits.sum())
        p_hat = p_ann * n_t / n_is
        variance = (p_hat / n_is) * (p_ann - p_hat)
        cov = math.sqrt(n_is / n_t - 1.0) / math.sqrt(n_is) if n_t > 0 else math.inf
        flags = []
        if n_t and label.name != "safe":
            norms = np.linalg.norm(nodes, axis=1) if norms is None else norms
            # nodes are drawn at or beyond r, so the safe-ball premise holds
            if np.any(norms[hits] < annulus.r * (1 - 1e-12)):
                raise StateError("rare node found inside the presumed safe ball")
        records.append(EstimateRecord(
            len(ed), label, p_hat, max(variance, 0.0), cov, n_is, n_t, annulus, GLOBAL_RING, flags
        ))
    if return_sample:
        return records, RingSample(nodes, codes, annulus)
    return records


@dataclass
class HistoryRow:
    n_sim: int
    psi: float
    label: str
    p_hat: float
    cov: float
    r_inner: float
    r_outer: float
    n_rare: int


HISTORY_FIELDS = ("n_sim", "psi", "label", "p_hat", "cov", "r_inner", "r_outer", "n_rare")


class ConvergenceHistory:
    """Per-step, per-label rows; ``n_sim`` never decreases."""

    def __init__(self):
        self.rows: list[HistoryRow] = []

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def append(self, row: HistoryRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if row.n_sim < last.n_sim:
                raise DomainError("history rows must not go back in n_sim")
            if any(r.n_sim == row.n_sim and r.label == row.label for r in self.rows[-8:]):
                raise DomainError(f"duplicate history row for n_sim={row.n_sim}, label={row.label}")
        self.rows.append(row)

    def column(self, name: str, label: str | None = None) -> np.ndarray:
        rows = self.rows if label is None else [r for r in self.rows if r.label == label]
        return np.array([getattr(r, name) for r in rows])


def record_history(
    history: ConvergenceHistory,
    n_sim: int,
    psi: float,
    estimates: dict[str, EstimateRecord | None],
    n_rare: dict[str, int],
) -> ConvergenceHistory:
    """Append one row per label; labels without an estimate get p_hat 0."""
    for name in sorted(estimates):
        rec = estimates[name]
        if rec is None:
            history.append(HistoryRow(n_sim, psi, name, 0.0, math.inf, math.nan, math.nan, n_rare.get(name, 0)))
        else:
            ann = rec.annulus
            history.append(HistoryRow(
                n_sim, psi, name, rec.p_hat, rec.cov,
                math.nan if ann is None else ann.r,
                math.nan if ann is None else ann.R,
                n_rare.get(name, 0),
            ))
    return history
