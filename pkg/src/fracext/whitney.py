"""Whitney decompositions of a bounding box minus a closed set.

Cubes are stored as integer pairs (level k, lattice index i): the open cube
``i * 2^-k + (0, 2^-k)^d``. Disjointness and adjacency are decided on these
integers only.

Construction is top-down: a cube is accepted once ``diam(Q) <= dist(Q, N)``,
otherwise split. Because an accepted cube's parent was rejected,
``dist(Q, N) <= dist(parent, N) + diam(parent) < 4 diam(Q)``. Distances are
exact box-to-point-cloud distances.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import brute_cube_distance
from .errors import ContractViolation, DomainError
from .geometry import Box, PointCloudSet

__all__ = [
    "DyadicCube",
    "WhitneyDecomposition",
    "WhitneyReport",
    "whitney_decompose",
    "verify_whitney",
    "cube_neighbors",
    "cube_box_distance",
]


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def diam(self) -> float:
        return math.sqrt(self.d) * self.side

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.side

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def children(self) -> list["DyadicCube"]:
        base = [2 * i for i in self.index]
        out = []
        for bits in range(2**self.d):
            off = [(bits >> a) & 1 for a in range(self.d)]
            out.append(DyadicCube(self.level + 1, tuple(b + o for b, o in zip(base, off))))
        return out

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return tuple(i >> shift for i in other.index) == self.index


def cube_box_distance(levels, indices, cloud: PointCloudSet) -> np.ndarray:
    """Exact distance from each closed dyadic cube to the point cloud (KD-tree route)."""
    levels = np.asarray(levels)
    indices = np.asarray(indices, dtype=np.int64).reshape(len(levels), -1)
    side = 2.0 ** (-levels.astype(float))
    lo = indices * side[:, None]
    hi = lo + side[:, None]
    centre = 0.5 * (lo + hi)
    pts = cloud.points
    _, nearest = cloud.tree.query(centre)
    first = _box_dist(pts[nearest], lo, hi)
    # any minimiser lies within first + half-diagonal of the centre
    radius = first + 0.5 * math.sqrt(indices.shape[1]) * side * (1 + 1e-12)
    groups = cloud.tree.query_ball_point(centre, radius)
    out = first.copy()
    for q, members in enumerate(groups):
        if len(members) > 1:
            out[q] = min(out[q], _box_dist(pts[members], lo[q], hi[q]).min())
    return out


def _box_dist(P, lo, hi):
    gap = np.maximum(np.maximum(lo - P, P - hi), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def _brute_cube_distance(levels, indices, points) -> np.ndarray:
    """Same quantity as ``cube_box_distance`` by exhaustive scan; used for verification."""
    side = 2.0 ** (-np.asarray(levels).astype(float))
    lo = np.ascontiguousarray(indices * side[:, None])
    return brute_cube_distance(lo, lo + side[:, None], np.ascontiguousarray(points))


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    """Accepted cubes in canonical order (level-major, then lexicographic index).

    ``dropped_*`` lists the finest-level cubes that still violated the
    acceptance rule; they make up the truncation collar around N.
    """

    levels: np.ndarray
    indices: np.ndarray
    dist: np.ndarray
    generator: PointCloudSet
    bbox: Box
    coarsest_level: int
    finest_level: int
    dropped_indices: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def d(self) -> int:
        return self.indices.shape[1]

    @property
    def cubes(self) -> list[DyadicCube]:
        return [DyadicCube(int(k), tuple(int(v) for v in i)) for k, i in zip(self.levels, self.indices)]

    @property
    def sides(self) -> np.ndarray:
        return 2.0 ** (-self.levels.astype(float))

    @property
    def diams(self) -> np.ndarray:
        return math.sqrt(self.d) * self.sides

    @property
    def centers(self) -> np.ndarray:
        return (self.indices + 0.5) * self.sides[:, None]

    @property
    def truncated_volume(self) -> float:
        n = 0 if self.dropped_indices is None else len(self.dropped_indices)
        return n * 2.0 ** (-self.d * self.finest_level)

    @cached_property
    def _lookup(self) -> dict:
        return {(int(k), tuple(int(v) for v in i)): n for n, (k, i) in enumerate(zip(self.levels, self.indices))}

    def position(self, q: DyadicCube) -> int:
        try:
            return self._lookup[(q.level, tuple(q.index))]
        except KeyError:
            raise DomainError(f"cube {q} is not part of the decomposition") from None

    def fine_ranges(self) -> tuple[np.ndarray, np.ndarray]:
        """Closed integer extents of every cube in units of the finest level."""
        scale = (2 ** (self.finest_level - self.levels)).astype(np.int64)[:, None]
        lo = self.indices * scale
        return lo, lo + scale

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level"] + [f"index{a + 1}" for a in range(self.d)])
            for k, i in zip(self.levels, self.indices):
                w.writerow([int(k)] + [int(v) for v in i])


def _top_tiles(bbox: Box) -> tuple[int, np.ndarray]:
    extent = min(h - l for l, h in zip(bbox.lo, bbox.hi))
    level = -int(math.floor(math.log2(extent)))
    while True:
        try:
            ilo, ihi = bbox.index_range(level)
            break
        except DomainError:
            level += 1
            if level > 60:
                raise DomainError(f"bbox {bbox} is not dyadic") from None
    axes = [np.arange(a, b) for a, b in zip(ilo, ihi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, bbox.d)
    return level, grid.astype(np.int64)


def _children(indices: np.ndarray) -> np.ndarray:
    d = indices.shape[1]
    offs = np.array([[(b >> a) & 1 for a in range(d)] for b in range(2**d)], dtype=np.int64)
    return (2 * indices[:, None, :] + offs[None]).reshape(-1, d)


def whitney_decompose(N: PointCloudSet, bbox: Box, finest: int) -> WhitneyDecomposition:
    """Whitney cubes of ``bbox`` minus the closed set sampled by ``N``."""
    if len(N) == 0:
        raise DomainError("cannot decompose the complement of an empty set")
    if N.d != bbox.d:
        raise DomainError("generator and bbox dimensions differ")
    top, active = _top_tiles(bbox)
    if finest < top:
        raise DomainError(f"finest level {finest} is coarser than the top tiles ({top})")
    d = bbox.d
    acc_levels, acc_idx, acc_dist = [], [], []
    dropped = np.empty((0, d), dtype=np.int64)
    for level in range(top, finest + 1):
        if len(active) == 0:
            break
        lv = np.full(len(active), level)
        dist = cube_box_distance(lv, active, N)
        diam = math.sqrt(d) * 2.0**-level
        ok = diam <= dist
        order = np.lexsort(active[ok].T[::-1])
        acc_levels.append(lv[ok][order])
        acc_idx.append(active[ok][order])
        acc_dist.append(dist[ok][order])
        bad = active[~ok]
        if level == finest:
            dropped = bad[np.lexsort(bad.T[::-1])] if len(bad) else dropped
        else:
            active = _children(bad)
    levels = np.concatenate(acc_levels) if acc_levels else np.empty(0, dtype=np.int64)
    if len(levels) == 0:
        raise DomainError(f"finest level {finest} too coarse: no cube was accepted")
    return WhitneyDecomposition(
        levels=levels.astype(np.int64),
        indices=np.concatenate(acc_idx).astype(np.int64),
        dist=np.concatenate(acc_dist),
        generator=N,
        bbox=bbox,
        coarsest_level=top,
        finest_level=finest,
        dropped_indices=dropped,
    )


@dataclass(frozen=True)
class WhitneyReport:
    disjointness: bool
    cover_defect_volume: float
    ratio_min: float
    ratio_max: float
    distance_tolerance: float
    n_cubes: int

    def passed(self) -> bool:
        return self.disjointness and self.ratio_min >= 1.0 and self.ratio_max <= 4.0

    def to_dict(self) -> dict:
        return {
            "disjointness": self.disjointness,
            "cover_defect_volume": self.cover_defect_volume,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "distance_tolerance": self.distance_tolerance,
            "n_cubes": self.n_cubes,
        }


def _disjoint(levels: np.ndarray, indices: np.ndarray, coarsest: int) -> bool:
    keys = set()
    for k, i in zip(levels.tolist(), map(tuple, indices.tolist())):
        if (k, i) in keys:
            return False
        keys.add((k, i))
    for k, i in keys:
        for up in range(1, k - coarsest + 1):
            if (k - up, tuple(v >> up for v in i)) in keys:
                return False
    return True


def verify_whitney(w: WhitneyDecomposition) -> WhitneyReport:
    """Recheck disjointness, covering and the distance ratio of every cube.

    The ratio uses an exhaustive cube-to-cloud scan, independent of the
    KD-tree route used during construction. The cover defect is the volume
    of the bbox left uncovered by cubes (it contains the truncation collar,
    so it bounds the defect outside the collar from above).
    """
    disjoint = _disjoint(w.levels, w.indices, w.coarsest_level)
    fine_cells = int(np.sum((2 ** (w.d * (w.finest_level - w.levels))).astype(np.int64)))
    lo, hi = w.bbox.index_range(w.finest_level)
    total = int(np.prod(hi - lo))
    defect = (total - fine_cells) * 2.0 ** (-w.d * w.finest_level)
    dist = _brute_cube_distance(w.levels, w.indices, w.generator.points)
    ratio = dist / w.diams
    return WhitneyReport(
        disjointness=disjoint,
        cover_defect_volume=float(defect),
        ratio_min=float(ratio.min()),
        ratio_max=float(ratio.max()),
        distance_tolerance=w.generator.hausdorff_bound,
        n_cubes=len(w),
    )


def cube_neighbors(w: WhitneyDecomposition, q: DyadicCube) -> list[DyadicCube]:
    """Cubes of ``w`` whose closures touch the closure of ``q`` (``q`` included)."""
    pos = w.position(q)
    lo, hi = w.fine_ranges()
    touch = np.all((lo <= hi[pos]) & (lo[pos] <= hi), axis=1)
    cubes = w.cubes
    return [cubes[n] for n in np.flatnonzero(touch)]


def require_whitney(w: WhitneyDecomposition) -> WhitneyReport:
    report = verify_whitney(w)
    if not report.passed():
        raise ContractViolation(f"Whitney invariants violated: {report.to_dict()}")
    return report
