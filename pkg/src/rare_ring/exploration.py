"""Nested shells of exploration candidates.

Level i sits on the sphere whose exterior holds probability 10**-i and
carries floor(-dim * ln(10**-i / dim)) well-spread points.  Each level gets
its own scrambled direction set so consecutive shells do not share rays.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .directions import spread_directions
from .errors import DomainError
from .gaussian_geometry import check_dim, radius_for_pout


def layer_count(p_out: float, dim: int) -> int:
    """Number of shell points for exterior probability ``p_out``."""
    dim = check_dim(dim)
    if not (0.0 < p_out < 1.0):
        raise DomainError(f"exterior probability must lie in (0, 1), got {p_out}")
    n = math.floor(-dim * math.log(p_out / dim))
    if n < 1:
        warnings.warn(f"layer count {n} clamped to 1", RuntimeWarning, stacklevel=2)
        n = 1
    return n


def plan_table(dim: int, levels: int = 15) -> list[tuple[int, float, int, float]]:
    """Rows ``(level, p_out, count, radius)`` without generating any points."""
    dim = check_dim(dim)
    rows = []
    for i in range(1, levels + 1):
        p_out = 10.0**-i
        rows.append((i, p_out, layer_count(p_out, dim), float(radius_for_pout(p_out, dim))))
    return rows


@dataclass
class ExplorationLayer:
    level: int
    p_out: float
    radius: float
    points: np.ndarray
    consumed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.consumed is None:
            self.consumed = np.zeros(len(self.points), dtype=bool)

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass
class ExplorationPlan:
    """Ordered shells of candidates plus per-point consumed flags."""

    dim: int
    layers: list[ExplorationLayer]
    oversample: float = 7.0

    def available(self) -> tuple[np.ndarray, np.ndarray]:
        """Unconsumed points and their ``(layer, position)`` keys."""
        pts, keys = [], []
        for li, layer in enumerate(self.layers):
            free = np.nonzero(~layer.consumed)[0]
            pts.append(layer.points[free])
            keys.append(np.column_stack([np.full(free.size, li), free]))
        if not pts:
            return np.empty((0, self.dim)), np.empty((0, 2), dtype=int)
        return np.concatenate(pts), np.concatenate(keys).astype(int)

    def consume(self, key) -> None:
        li, pos = int(key[0]), int(key[1])
        layer = self.layers[li]
        if layer.consumed[pos]:
            raise DomainError(f"exploration point {key} already consumed")
        layer.consumed[pos] = True

    @property
    def n_available(self) -> int:
        return int(sum((~layer.consumed).sum() for layer in self.layers))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "layers": [
                {
                    "level": layer.level,
                    "p_out": layer.p_out,
                    "radius": layer.radius,
                    "count": layer.count,
                    "points": layer.points.tolist(),
                    "consumed": layer.consumed.tolist(),
                }
                for layer in self.layers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ExplorationPlan":
        layers = [
            ExplorationLayer(
                level=int(d["level"]),
                p_out=float(d["p_out"]),
                radius=float(d["radius"]),
                points=np.asarray(d["points"], dtype=float).reshape(-1, int(data["dim"])),
                consumed=np.asarray(d["consumed"], dtype=bool),
            )
            for d in data["layers"]
        ]
        return cls(int(data["dim"]), layers)


def _make_layer(rng, level: int, dim: int, oversample: float) -> ExplorationLayer:
    p_out = 10.0**-level
    radius = float(radius_for_pout(p_out, dim))
    dirs = spread_directions(rng, layer_count(p_out, dim), dim, oversample)
    return ExplorationLayer(level, p_out, radius, radius * dirs)


def build_plan(
    rng: np.random.Generator, dim: int, max_level: int = 15, oversample: float = 7.0
) -> ExplorationPlan:
    """Generate shells 1..``max_level`` with independent direction sets."""
    dim = check_dim(dim)
    if max_level < 1:
        raise DomainError("max_level must be at least 1")
    layers = [_make_layer(rng, i, dim, oversample) for i in range(1, max_level + 1)]
    return ExplorationPlan(dim, layers, oversample)


def enrich_plan(
    plan: ExplorationPlan,
    rng: np.random.Generator,
    extra_levels: int = 0,
    extra_points: dict[int, int] | None = None,
) -> ExplorationPlan:
    """Append shells beyond the deepest level and/or points to existing shells.

    ``extra_points`` maps a level to a number of additional points placed on
    that shell.  Consumed flags of existing points are kept.  The plan is
    modified in place and returned.
    """
    if extra_levels < 0:
        raise DomainError("extra_levels must be nonnegative")
    top = max((layer.level for layer in plan.layers), default=0)
    for level in range(top + 1, top + 1 + extra_levels):
        plan.layers.append(_make_layer(rng, level, plan.dim, plan.oversample))
    for level, extra in (extra_points or {}).items():
        if extra < 0:
            raise DomainError("extra point count must be nonnegative")
        if extra == 0:
            continue
        matches = [layer for layer in plan.layers if layer.level == level]
        if not matches:
            raise DomainError(f"no layer at level {level}")
        layer = matches[0]
        new = layer.radius * spread_directions(rng, extra, plan.dim, plan.oversample)
        # drop anything coinciding with an existing point of the shell
        d = np.linalg.norm(new[:, None, :] - layer.points[None, :, :], axis=2)
        new = new[np.all(d > 1e-12, axis=1)]
        layer.points = np.concatenate([layer.points, new])
        layer.consumed = np.concatenate([layer.consumed, np.zeros(len(new), dtype=bool)])
    return plan


def add_level(plan: ExplorationPlan, rng: np.random.Generator, level: int) -> ExplorationPlan:
    """Insert a specific level; rejects a level already present."""
    if any(layer.level == level for layer in plan.layers):
        raise DomainError(f"level {level} already present in the plan")
    plan.layers.append(_make_layer(rng, level, plan.dim, plan.oversample))
    plan.layers.sort(key=lambda layer: layer.level)
    return plan
