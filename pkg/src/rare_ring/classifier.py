"""Experimental design and its nearest-neighbour label surrogate.

Any point of the space takes the label of its nearest evaluated point, so
the design implicitly partitions the space into Voronoi cells.  Exact
distance ties are broken in favour of the lowest design index.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, StateError
from .gaussian_geometry import check_dim

DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class EventLabel:
    code: int
    name: str

    def __str__(self) -> str:
        return self.name


SAFE = EventLabel(0, "safe")
FAILURE = EventLabel(1, "failure")
NO_RESULT = EventLabel(2, "no_result")

_STANDARD = {label.name: label for label in (SAFE, FAILURE, NO_RESULT)}


def label_from_token(token: str, registry: dict[str, EventLabel] | None = None) -> EventLabel:
    """Parse a label written as a name or an integer code.

    Integer tokens map 0 to safe and 1 to failure; other integers and
    unknown names create new labels on the fly and are stored in
    ``registry`` so later tokens reuse them.
    """
    registry = _STANDARD.copy() if registry is None else registry
    for label in _STANDARD.values():
        registry.setdefault(label.name, label)
    token = token.strip()
    if token in registry:
        return registry[token]
    try:
        code = int(token)
    except ValueError:
        code = None
    if code is not None:
        for label in registry.values():
            if label.code == code:
                return label
        label = EventLabel(code, f"label_{code}")
    else:
        code = max(label.code for label in registry.values()) + 1
        label = EventLabel(code, token)
    registry[label.name] = label
    return label


def _sorted_neighbours(points: np.ndarray, xs: np.ndarray, idx: np.ndarray, k: int):
    # recompute exact distances for the candidate neighbours and order them
    # by (distance, index) so ties resolve to the lowest index
    diff = points[idx] - xs[:, None, :]
    d = np.sqrt(np.einsum("qkd,qkd->qk", diff, diff))
    key = np.argsort(idx, axis=1, kind="stable")
    idx = np.take_along_axis(idx, key, 1)
    d = np.take_along_axis(d, key, 1)
    order = np.argsort(d, axis=1, kind="stable")
    return np.take_along_axis(d, order, 1)[:, :k], np.take_along_axis(idx, order, 1)[:, :k]


def brute_force_neighbours(points, xs, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Linear-scan oracle for the ``k`` nearest points (ties to lowest index)."""
    points = np.asarray(points, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = len(points)
    idx = np.broadcast_to(np.arange(m), (len(xs), m))
    return _sorted_neighbours(points, xs, np.ascontiguousarray(idx), k)


class ExperimentalDesign:
    """Evaluated points in standard Gaussian space, in evaluation order."""

    def __init__(self, dim: int):
        self.dim = check_dim(dim)
        self._points: list[np.ndarray] = []
        self._codes: list[int] = []
        self.raw: list[float | None] = []
        self.labels_by_code: dict[int, EventLabel] = {}
        self._array = np.empty((0, self.dim))
        self._code_array = np.empty(0, dtype=int)
        self._tree: cKDTree | None = None

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        if len(self._array) != len(self._points):
            self._array = np.array(self._points, dtype=float).reshape(-1, self.dim)
            self._code_array = np.array(self._codes, dtype=int)
        return self._array

    @property
    def codes(self) -> np.ndarray:
        self.points
        return self._code_array

    @property
    def labels(self) -> list[EventLabel]:
        return [self.labels_by_code[c] for c in self._codes]

    def label_set(self) -> list[EventLabel]:
        return [self.labels_by_code[c] for c in sorted(self.labels_by_code)]

    def add_point(self, x, label: EventLabel, raw: float | None = None) -> "ExperimentalDesign":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.dim,):
            raise DomainError(f"point must have {self.dim} coordinates")
        if not np.all(np.isfinite(x)):
            raise DomainError("point coordinates must be finite")
        if len(self):
            d, i = self.nearest(x[None, :], 1)
            if d[0, 0] <= DUPLICATE_TOL:
                raise DomainError(f"point duplicates design point {int(i[0, 0])}")
        known = self.labels_by_code.get(label.code)
        if known is not None and known != label:
            raise DomainError(f"label code {label.code} already used by {known.name!r}")
        self.labels_by_code[label.code] = label
        self._points.append(x.copy())
        self._codes.append(label.code)
        self.raw.append(None if raw is None else float(raw))
        self._tree = None
        return self

    def _index(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def nearest(self, xs, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the ``k`` nearest design points."""
        n = len(self)
        if n < k:
            raise StateError(f"need at least {k} design point(s), have {n}")
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.dim:
            raise DomainError(f"queries must have {self.dim} coordinates")
        if len(xs) == 0:
            return np.empty((0, k)), np.empty((0, k), dtype=int)
        kq = min(k + 2, n)
        _, idx = self._index().query(xs, k=kq)
        idx = np.asarray(idx).reshape(len(xs), kq)
        return _sorted_neighbours(self.points, xs, idx, k)

    def classify(self, x) -> EventLabel:
        _, i = self.nearest(np.asarray(x, dtype=float)[None, :], 1)
        return self.labels_by_code[int(self.codes[i[0, 0]])]

    def classify_codes(self, xs) -> np.ndarray:
        """Label codes of the nearest design point for each row of ``xs``."""
        _, i = self.nearest(xs, 1)
        return self.codes[i[:, 0]]

    def classify_batch(self, xs) -> list[EventLabel]:
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return []
        return [self.labels_by_code[int(c)] for c in self.classify_codes(xs)]

    def two_nearest_labels(self, x) -> tuple[EventLabel, EventLabel]:
        _, i = self.nearest(np.asarray(x, dtype=float)[None, :], 2)
        c = self.codes[i[0]]
        return self.labels_by_code[int(c[0])], self.labels_by_code[int(c[1])]

    def two_nearest_codes(self, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(distances, indices, codes)`` of the two nearest points per row."""
        d, i = self.nearest(xs, 2)
        return d, i, self.codes[i]

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "labels": {str(c): lab.name for c, lab in sorted(self.labels_by_code.items())},
            "points": self.points.tolist(),
            "codes": [int(c) for c in self._codes],
            "raw": list(self.raw),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentalDesign":
        ed = cls(int(data["dim"]))
        names = {int(c): name for c, name in data["labels"].items()}
        raw = data.get("raw") or [None] * len(data["points"])
        for x, c, r in zip(data["points"], data["codes"], raw):
            ed.add_point(x, EventLabel(int(c), names[int(c)]), r)
        return ed

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", *[f"x{v + 1}" for v in range(self.dim)], "label", "raw"])
        for i, (x, c, r) in enumerate(zip(self.points, self._codes, self.raw)):
            writer.writerow([
                i,
                *[f"{v:.12g}" for v in x],
                self.labels_by_code[c].name,
                "" if r is None else f"{r:.12g}",
            ])
        return buf.getvalue()
