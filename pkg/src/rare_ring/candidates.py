"""Candidate generation, censoring and psi scoring.

The score of a candidate c whose nearest design point s lies at distance l
is ``psi = sqrt(f(c) f(s)) * l**dim``, the probability content roughly
reclassified by evaluating c.  Exploitation dots are Gaussian clouds around
rare-labelled design points, kept only where the two nearest design points
disagree on the label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import DUPLICATE_TOL, ExperimentalDesign
from .errors import DomainError, StateError
from .exploration import ExplorationPlan
from .gaussian_geometry import check_dim

EXPLOITATION = 0
EXPLORATION = 1
ORIGIN_NAMES = {EXPLOITATION: "exploitation", EXPLORATION: "exploration"}


def default_sigma(dim: int) -> float:
    """Cloud standard deviation: sqrt(dim - 1), or 1 in one dimension."""
    dim = check_dim(dim)
    return 1.0 if dim == 1 else math.sqrt(dim - 1.0)


@dataclass(frozen=True)
class ExploitationConfig:
    dots_per_seed: int = 1000
    sigma: float | None = None

    def __post_init__(self):
        if self.dots_per_seed < 1:
            raise DomainError("dots_per_seed must be at least 1")
        if self.sigma is not None and not self.sigma > 0:
            raise DomainError("sigma must be positive")

    def sigma_for(self, dim: int) -> float:
        return default_sigma(dim) if self.sigma is None else float(self.sigma)


@dataclass
class Candidate:
    x: np.ndarray
    origin: int
    ref: tuple
    psi: float = float("nan")

    @property
    def origin_name(self) -> str:
        return ORIGIN_NAMES[self.origin]


def log_density(x: np.ndarray) -> np.ndarray:
    """Log standard Gaussian density of each row of ``x``."""
    x = np.atleast_2d(x)
    return -0.5 * x.shape[1] * math.log(2.0 * math.pi) - 0.5 * np.einsum("ij,ij->i", x, x)


def psi_from_parts(log_fc, log_fs, dist, dim: int) -> np.ndarray:
    """psi from log densities of candidate and neighbour and their distance."""
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore"):
        log_psi = 0.5 * (np.asarray(log_fc) + np.asarray(log_fs)) + dim * np.log(dist)
    return np.where(dist > 0, np.exp(log_psi), 0.0)


def psi_values(ed: ExperimentalDesign, xs) -> np.ndarray:
    """psi for each row of ``xs`` against the current design."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if len(xs) == 0:
        return np.empty(0)
    d, i = ed.nearest(xs, 1)
    return psi_from_parts(log_density(xs), log_density(ed.points[i[:, 0]]), d[:, 0], ed.dim)


def rare_indices(ed: ExperimentalDesign, rare_codes) -> np.ndarray:
    return np.nonzero(np.isin(ed.codes, list(rare_codes)))[0]


def generate_exploitation_dots(
    rng: np.random.Generator,
    ed: ExperimentalDesign,
    cfg: ExploitationConfig,
    rare_codes,
    seeds=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian dots around every rare design point.

    Returns ``(dots, seed_index)`` where ``seed_index`` is the design index
    of the cloud centre of each dot.  ``seeds`` restricts the centres.
    """
    seeds = rare_indices(ed, rare_codes) if seeds is None else np.asarray(seeds, dtype=int)
    n, dim = cfg.dots_per_seed, ed.dim
    if seeds.size == 0:
        return np.empty((0, dim)), np.empty(0, dtype=int)
    sigma = cfg.sigma_for(dim)
    centres = ed.points[seeds]
    noise = rng.standard_normal((seeds.size, n, dim))
    dots = (centres[:, None, :] + sigma * noise).reshape(-1, dim)
    return dots, np.repeat(seeds, n)


def censor_mask(ed: ExperimentalDesign, dots) -> np.ndarray:
    """True where the two nearest design points carry different labels."""
    dots = np.atleast_2d(np.asarray(dots, dtype=float))
    if len(dots) == 0:
        return np.zeros(0, dtype=bool)
    if len(ed) < 2:
        raise StateError("censoring needs at least two design points")
    _, _, codes = ed.two_nearest_codes(dots)
    return codes[:, 0] != codes[:, 1]


def censor_candidates(ed: ExperimentalDesign, dots) -> np.ndarray:
    """Dots whose two nearest design points disagree, in input order."""
    dots = np.atleast_2d(np.asarray(dots, dtype=float))
    return dots[censor_mask(ed, dots)]


def score_psi(ed: ExperimentalDesign, candidates, dim: int | None = None) -> list[Candidate]:
    """Score plain candidate vectors; origins default to exploration."""
    if len(ed) == 0:
        raise StateError("scoring needs a nonempty design")
    if dim is not None and check_dim(dim) != ed.dim:
        raise DomainError("dimension mismatch between design and candidates")
    xs = np.atleast_2d(np.asarray(candidates, dtype=float))
    if xs.size == 0:
        return []
    psi = psi_values(ed, xs)
    return [Candidate(x, EXPLORATION, (k,), float(p)) for k, (x, p) in enumerate(zip(xs, psi))]


def select_best(scored: list[Candidate]) -> Candidate:
    """Highest psi; ties go to exploitation, then to the lowest position."""
    if not scored:
        raise StateError("cannot select from an empty candidate list")
    best = 0
    for k in range(1, len(scored)):
        a, b = scored[k], scored[best]
        if a.psi > b.psi or (a.psi == b.psi and a.origin < b.origin):
            best = k
    return scored[best]


class DotCloud:
    """Gaussian dot clouds whose two-nearest-neighbour state tracks a design.

    Dots are drawn once per seed.  When design points are appended, only the
    distances to the new points are computed, which keeps each update linear
    in the number of dots.  The state always equals a fresh two-nearest
    query against the full design (ties to the lowest index).
    """

    def __init__(self, dim: int, cfg: ExploitationConfig):
        self.dim = check_dim(dim)
        self.cfg = cfg
        self.sigma = cfg.sigma_for(self.dim)
        self.x = np.empty((0, self.dim))
        self.seed = np.empty(0, dtype=int)
        self.log_h = np.empty(0)
        self.d = np.empty((0, 2))
        self.i = np.empty((0, 2), dtype=int)
        self.seeded: set[int] = set()
        self.n_synced = 0

    def __len__(self) -> int:
        return len(self.x)

    def sync(self, ed: ExperimentalDesign) -> None:
        """Fold design points added since the last call into the state."""
        pts = ed.points
        for j in range(self.n_synced, len(ed)):
            if len(self.x):
                dj = np.linalg.norm(self.x - pts[j], axis=1)
                first = dj < self.d[:, 0]
                second = ~first & (dj < self.d[:, 1])
                self.d[first, 1] = self.d[first, 0]
                self.i[first, 1] = self.i[first, 0]
                self.d[first, 0] = dj[first]
                self.i[first, 0] = j
                self.d[second, 1] = dj[second]
                self.i[second, 1] = j
        self.n_synced = len(ed)

    def add_seeds(self, rng: np.random.Generator, ed: ExperimentalDesign, seeds) -> None:
        """Draw clouds around design points not seeded before."""
        self.sync(ed)
        seeds = np.array([s for s in np.asarray(seeds, dtype=int) if s not in self.seeded], dtype=int)
        if seeds.size == 0:
            return
        dots, owner = generate_exploitation_dots(rng, ed, self.cfg, (), seeds=seeds)
        k = min(2, len(ed))
        d, i = ed.nearest(dots, k)
        if k == 1:
            d = np.column_stack([d[:, 0], np.full(len(d), np.inf)])
            i = np.column_stack([i[:, 0], i[:, 0]])
        centred = dots - ed.points[owner]
        log_h = (
            -0.5 * self.dim * math.log(2.0 * math.pi * self.sigma**2)
            - 0.5 * np.einsum("ij,ij->i", centred, centred) / self.sigma**2
        )
        self.x = np.concatenate([self.x, dots])
        self.seed = np.concatenate([self.seed, owner])
        self.log_h = np.concatenate([self.log_h, log_h])
        self.d = np.concatenate([self.d, d])
        self.i = np.concatenate([self.i, i])
        self.seeded.update(int(s) for s in seeds)

    def drop_coincident(self) -> None:
        """Remove dots that now coincide with a design point."""
        keep = self.d[:, 0] > DUPLICATE_TOL
        if not np.all(keep):
            for name in ("x", "seed", "log_h", "d", "i"):
                setattr(self, name, getattr(self, name)[keep])

    def nearest_codes(self, ed: ExperimentalDesign) -> np.ndarray:
        return ed.codes[self.i]

    def boundary_mask(self, ed: ExperimentalDesign) -> np.ndarray:
        codes = self.nearest_codes(ed)
        return codes[:, 0] != codes[:, 1]

    def psi(self, ed: ExperimentalDesign, mask=None) -> np.ndarray:
        sel = slice(None) if mask is None else mask
        x, d1, i1 = self.x[sel], self.d[sel, 0], self.i[sel, 0]
        return psi_from_parts(log_density(x), log_density(ed.points[i1]), d1, self.dim)


@dataclass
class CandidatePool:
    """Flat arrays describing one step's scored candidates."""

    x: np.ndarray
    origin: np.ndarray
    ref: np.ndarray
    psi: np.ndarray
    n_exploration: int
    n_exploitation: int

    def __len__(self) -> int:
        return len(self.x)

    def best(self) -> Candidate:
        if len(self) == 0:
            raise StateError("empty candidate pool")
        # exploitation rows come first, so argmax realizes the tie rule
        k = int(np.argmax(self.psi))
        return Candidate(self.x[k].copy(), int(self.origin[k]), tuple(int(v) for v in self.ref[k]), float(self.psi[k]))

    def candidates(self) -> list[Candidate]:
        return [
            Candidate(x, int(o), tuple(int(v) for v in r), float(p))
            for x, o, r, p in zip(self.x, self.origin, self.ref, self.psi)
        ]


def assemble_pool(
    plan: ExplorationPlan,
    ed: ExperimentalDesign,
    rng: np.random.Generator | None,
    cfg: ExploitationConfig,
    rare_codes,
    cloud: DotCloud | None = None,
) -> CandidatePool:
    """Censored exploitation dots followed by unconsumed exploration points.

    With ``cloud`` the persistent clouds are extended around new rare points
    and reused; without it fresh dots are drawn from ``rng`` around every
    rare point.  Exploitation refs are ``(seed, position)``; exploration refs
    are ``(layer, position)`` in the plan.
    """
    dim = ed.dim
    rare = rare_indices(ed, rare_codes)
    if rare.size and len(ed) >= 2:
        if cloud is not None:
            cloud.add_seeds(rng, ed, rare)
            cloud.sync(ed)
            cloud.drop_coincident()
            mask = cloud.boundary_mask(ed)
            dots = cloud.x[mask]
            dot_ref = np.column_stack([cloud.seed[mask], np.nonzero(mask)[0]])
            dot_psi = cloud.psi(ed, mask)
        else:
            raw, owner = generate_exploitation_dots(rng, ed, cfg, rare_codes)
            d, i, codes = ed.two_nearest_codes(raw)
            mask = (codes[:, 0] != codes[:, 1]) & (d[:, 0] > DUPLICATE_TOL)
            dots = raw[mask]
            dot_ref = np.column_stack([owner[mask], np.nonzero(mask)[0]])
            dot_psi = psi_from_parts(
                log_density(dots), log_density(ed.points[i[mask, 0]]), d[mask, 0], dim
            )
    else:
        dots = np.empty((0, dim))
        dot_ref = np.empty((0, 2), dtype=int)
        dot_psi = np.empty(0)

    explo, keys = plan.available()
    explo_psi = psi_values(ed, explo) if len(explo) else np.empty(0)
    return CandidatePool(
        x=np.concatenate([dots, explo]),
        origin=np.concatenate([
            np.full(len(dots), EXPLOITATION), np.full(len(explo), EXPLORATION)
        ]).astype(int),
        ref=np.concatenate([dot_ref.reshape(-1, 2), keys.reshape(-1, 2)]).astype(int),
        psi=np.concatenate([dot_psi, explo_psi]),
        n_exploration=len(explo),
        n_exploitation=len(dots),
    )
