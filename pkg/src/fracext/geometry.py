"""Open sets in R^d with a labelled boundary partition (D, N).

Regions are exact predicates; nothing here is rasterized. Each built-in
geometry knows how to classify a point, how to sample its two boundary
pieces as point clouds, and which boxes bound it:

``bbox``
    dyadic box on which every downstream structure lives.
``core``
    part of the region that is actually modelled. Unbounded geometries are
    cut to it; ``core`` grown by 2 stays inside ``bbox`` so that truncated
    kernels (|x - y| < 1) and thickness balls (r <= 1) never leave ``bbox``.
``window``
    smaller dyadic box used by grid functions, norms and extension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
import hashlib

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DomainError

__all__ = [
    "Box",
    "FractionalParams",
    "Label",
    "PointCloudSet",
    "RegionSpec",
    "BUILTIN_GEOMETRIES",
    "builtin_geometry",
    "classify",
    "dist_to",
    "load_geometry_config",
]


class Label(IntEnum):
    OUTSIDE = 0
    INSIDE = 1
    IN_D = 2
    IN_N = 3


@dataclass(frozen=True)
class FractionalParams:
    """Smoothness ``s``, integrability ``p`` and dimension ``d``."""

    s: float
    p: float
    d: int

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.p < math.inf:
            raise ConfigError(f"p must lie in (0, inf), got {self.p}")
        if self.d not in (1, 2, 3):
            raise ConfigError(f"d must be 1, 2 or 3, got {self.d}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def kernel_exponent(self) -> float:
        """Exponent of the Gagliardo kernel |x - y|^-(sp + d)."""
        return self.s * self.p + self.d


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo, hi]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ConfigError(f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, points, closed=True) -> np.ndarray:
        P = np.atleast_2d(points)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((P >= lo) & (P <= hi), axis=1)
        return np.all((P > lo) & (P < hi), axis=1)

    def grow(self, margin: float) -> "Box":
        return Box(tuple(v - margin for v in self.lo), tuple(v + margin for v in self.hi))

    def intersect(self, other: "Box") -> "Box":
        return Box(
            tuple(max(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(min(a, b) for a, b in zip(self.hi, other.hi)),
        )

    def index_range(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer lattice range ``[i_lo, i_hi)`` of level-``level`` cells tiling the box."""
        scale = 2.0**level
        lo = np.asarray(self.lo) * scale
        hi = np.asarray(self.hi) * scale
        ilo, ihi = np.rint(lo), np.rint(hi)
        if np.any(np.abs(lo - ilo) > 1e-9) or np.any(np.abs(hi - ihi) > 1e-9):
            raise DomainError(f"box {self.lo}..{self.hi} is not aligned to level {level}")
        return ilo.astype(np.int64), ihi.astype(np.int64)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, eq=False)
class PointCloudSet:
    """Finite sample of a closed set, dense at scale ``2**-resolution_level``."""

    points: np.ndarray
    resolution_level: int
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def hausdorff_bound(self) -> float:
        return math.sqrt(self.d) * 2.0**-self.resolution_level

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1(self.points.tobytes())
        h.update(str(self.resolution_level).encode())
        return h.hexdigest()

    def dist(self, x) -> np.ndarray:
        if len(self) == 0:
            raise DomainError("distance to empty set")
        X = np.asarray(x, dtype=float).reshape(-1, self.d)
        dist, _ = self.tree.query(X)
        return dist

    def restrict(self, box: Box) -> "PointCloudSet":
        return PointCloudSet(self.points[box.contains(self.points)], self.resolution_level, self.label)

    def union(self, other: "PointCloudSet") -> "PointCloudSet":
        return PointCloudSet(
            np.vstack([self.points, other.points]),
            min(self.resolution_level, other.resolution_level),
            "+".join(x for x in (self.label, other.label) if x),
        )


def dist_to(cloud: PointCloudSet, x) -> float | np.ndarray:
    """Euclidean distance from ``x`` (one point or an array of points) to the cloud."""
    X = np.asarray(x, dtype=float)
    if X.ndim <= 1 and X.size == cloud.d:
        return float(cloud.dist(X)[0])
    return cloud.dist(X)


def _sample_segments(segs: np.ndarray, spacing: float) -> np.ndarray:
    """Points along 2D segments ``segs[k] = (a, b)`` no further apart than ``spacing``."""
    chunks = []
    for a, b in segs:
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        chunks.append(a + t * (b - a))
    if not chunks:
        return np.empty((0, 2))
    return np.unique(np.vstack(chunks), axis=0)


def _segments_dist(P: np.ndarray, segs: np.ndarray) -> np.ndarray:
    out = np.full(P.shape[0], np.inf)
    for a, b in segs:
        ab = b - a
        t = np.clip(((P - a) @ ab) / (ab @ ab), 0.0, 1.0)
        out = np.minimum(out, np.linalg.norm(P - (a + t[:, None] * ab), axis=1))
    return out


class RegionSpec:
    """An open set O with boundary partition D (vanishing trace) and N = bd O minus D.

    Subclasses implement ``inside`` (the open set itself), the residual tests
    ``_on_D`` / ``_on_N`` and the boundary samplers ``_sample_D`` / ``_sample_N``.
    """

    name: str = ""
    d: int = 2
    bbox: Box
    core: Box
    window: Box
    accumulation_point: tuple | None = None

    def __init__(self, level: int):
        if level < 1:
            raise ConfigError(f"resolution level must be >= 1, got {level}")
        self.level = int(level)

    def __repr__(self):
        return f"{type(self).__name__}(level={self.level})"

    # -- predicates -----------------------------------------------------

    @property
    def tol(self) -> float:
        """Residual below which a point counts as lying on a boundary curve."""
        return 2.0 ** (-self.level - 2)

    @property
    def spacing(self) -> float:
        """Point spacing along sampled boundary curves."""
        return 2.0 ** (-self.level - 1)

    def inside(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _on_D(self, P: np.ndarray) -> np.ndarray:
        return np.zeros(P.shape[0], dtype=bool)

    def _on_N(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, P) -> np.ndarray:
        return self.inside(np.atleast_2d(np.asarray(P, dtype=float)))

    def on_D(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = np.zeros(P.shape[0], dtype=bool)
        if len(self.d_cloud) == 0 or P.shape[0] == 0:
            return out
        # a point within tol of D is within tol + spacing of its samples
        near, _ = self.d_cloud.tree.query(P, distance_upper_bound=self.tol + self.spacing)
        cand = np.flatnonzero(np.isfinite(near))
        if len(cand):
            out[cand] = self._on_D(P[cand])
        return out

    def classify_points(self, P, check_bbox=True) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[1] != self.d:
            raise DomainError(f"expected {self.d}-dimensional points, got {P.shape[1]}")
        if check_bbox and not np.all(self.bbox.contains(P)):
            raise DomainError(f"query outside bbox {self.bbox.lo}..{self.bbox.hi}")
        labels = np.where(self.inside(P), Label.INSIDE, Label.OUTSIDE).astype(np.int8)
        labels[self._on_N(P)] = Label.IN_N
        labels[self._on_D(P)] = Label.IN_D
        return labels

    # -- boundary clouds ------------------------------------------------

    def _sample_D(self) -> np.ndarray:
        return np.empty((0, self.d))

    def _sample_N(self) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def d_cloud(self) -> PointCloudSet:
        pts = self._sample_D()
        pts = pts[self.bbox.contains(pts)] if len(pts) else pts
        return PointCloudSet(pts, self.level + 1, "D")

    @cached_property
    def n_cloud(self) -> PointCloudSet:
        pts = self._sample_N()
        pts = pts[self.bbox.contains(pts)]
        return PointCloudSet(pts, self.level + 1, "N")

    @cached_property
    def boundary_cloud(self) -> PointCloudSet:
        if len(self.d_cloud) == 0:
            return self.n_cloud
        return self.d_cloud.union(self.n_cloud)

    def dist_D(self, P) -> np.ndarray:
        """Distance to D; +inf everywhere when D is empty."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if len(self.d_cloud) == 0:
            return np.full(P.shape[0], np.inf)
        return self.d_cloud.dist(P)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "resolution_level": self.level,
            "bbox": self.bbox.to_dict(),
            "core": self.core.to_dict(),
            "window": self.window.to_dict(),
        }


class HalfPlane(RegionSpec):
    name = "halfplane"
    d = 2
    bbox = Box((-4, -4), (4, 4))
    core = Box((-2, -2), (2, 2))
    window = Box((-0.5, -0.5), (0.5, 0.5))

    def inside(self, P):
        return P[:, 0] > 0

    def _on_N(self, P):
        return np.abs(P[:, 0]) < self.tol

    def _sample_N(self):
        y = np.arange(self.bbox.lo[1], self.bbox.hi[1] + self.spacing / 2, self.spacing)
        return np.column_stack([np.zeros_like(y), y])


class Disk(RegionSpec):
    name = "disk"
    d = 2
    bbox = Box((-4, -4), (4, 4))
    core = Box((-1, -1), (1, 1))
    window = Box((-1.5, -1.5), (1.5, 1.5))

    def inside(self, P):
        return np.einsum("ij,ij->i", P, P) < 1.0

    def _on_N(self, P):
        return np.abs(np.linalg.norm(P, axis=1) - 1.0) < self.tol

    def _sample_N(self):
        n = int(math.ceil(2 * math.pi / self.spacing))
        t = 2 * math.pi * np.arange(n) / n
        return np.column_stack([np.cos(t), np.sin(t)])


class CuspTouchingHalfplane(RegionSpec):
    """Right half-plane touched at the origin by the cusp {|y| < x^2, x < 0}.

    D is the cusp boundary {|y| = x^2, x <= 0} (origin included), N the
    y-axis without the origin.
    """

    name = "cusp_touching_halfplane"
    d = 2
    bbox = Box((-4, -4), (4, 4))
    core = Box((-2, -2), (2, 2))
    window = Box((-0.5, -0.5), (0.5, 0.5))
    accumulation_point = (0.0, 0.0)

    def inside(self, P):
        x, y = P[:, 0], P[:, 1]
        return (x > 0) | ((x < 0) & (np.abs(y) < x * x))

    def _on_D(self, P):
        x, y = P[:, 0], P[:, 1]
        tip = np.hypot(x, y) < self.tol
        return tip | ((x <= 0) & (np.abs(np.abs(y) - x * x) < self.tol))

    def _on_N(self, P):
        return np.abs(P[:, 0]) < self.tol

    def _sample_D(self):
        # arc length element is at most sqrt(1 + 4 * 4) on x in [-2, 0]
        x_min = -2.0
        n = int(math.ceil(-x_min * math.sqrt(17.0) / self.spacing))
        x = np.linspace(x_min, 0.0, n + 1)
        upper = np.column_stack([x, x * x])
        lower = np.column_stack([x[:-1], -x[:-1] ** 2])
        return np.vstack([upper, lower])

    def _sample_N(self):
        y = np.arange(self.bbox.lo[1], self.bbox.hi[1] + self.spacing / 2, self.spacing)
        y = y[y != 0.0]
        return np.column_stack([np.zeros_like(y), y])


_EXP_LAYERS = 64


def _exp_layer_left_ends() -> np.ndarray:
    """Left end a_k of the included cubes in layer k (side 2^-k, height [2^-k, 2^-k+1))."""
    a = np.empty(_EXP_LAYERS + 1)
    for k in range(_EXP_LAYERS + 1):
        side = 2.0**-k
        # closure of column j meets {y <= e^x} iff 2^-k <= exp((j + 1) 2^-k)
        j_min = max(-8 * 2**k, math.ceil(-k * math.log(2.0) * 2**k) - 1)
        a[k] = j_min * side if j_min <= -1 else 0.0
    return a


class ExpWhitneyCusp(RegionSpec):
    """Union of upper-half-plane Whitney cubes meeting {0 < y < e^x}, -8 <= x <= 0.

    Layer k holds the cubes of side 2^-k at heights [2^-k, 2^-k+1); it covers
    (a_k, 0) horizontally. N is the segment [-8, 0] x {0}; D the rest of the
    boundary (a staircase, plus the two vertical sides).
    """

    name = "exp_whitney_cusp"
    d = 2
    bbox = Box((-12, -4), (4, 4))
    core = Box((-8, 0), (0, 2))
    window = Box((-1, 0), (1, 2))
    accumulation_point = None

    left_ends = _exp_layer_left_ends()

    @staticmethod
    def layer(y: np.ndarray) -> np.ndarray:
        """Layer index k with y in [2^-k, 2^-k+1), for y > 0."""
        _, e = np.frexp(y)
        return 1 - e

    def inside(self, P):
        x, y = P[:, 0], P[:, 1]
        ok = (y > 0) & (y < 2) & (x < 0)
        k = np.clip(self.layer(np.where(ok, y, 1.0)), 0, _EXP_LAYERS)
        return ok & (x > self.left_ends[k])

    @cached_property
    def d_segments(self) -> np.ndarray:
        a = self.left_ends
        segs = [((0.0, 0.0), (0.0, 2.0)), ((a[0], 2.0), (0.0, 2.0))]
        k_last = None
        for k in range(_EXP_LAYERS):
            segs.append(((a[k], 2.0**-k), (a[k], 2.0 ** (-k + 1))))
            if a[k + 1] < a[k]:
                segs.append(((a[k + 1], 2.0**-k), (a[k], 2.0**-k)))
            if a[k] == -8.0:
                k_last = k
                break
        # below layer k_last every layer spans the full [-8, 0]
        segs[-1] = ((-8.0, 0.0), (-8.0, 2.0 ** (-k_last + 1)))
        return np.asarray(segs, dtype=float)

    @property
    def n_segment(self) -> np.ndarray:
        return np.asarray([((-8.0, 0.0), (0.0, 0.0))])

    def exact_dist_D(self, P):
        return _segments_dist(np.atleast_2d(P), self.d_segments)

    def _on_D(self, P):
        return _segments_dist(P, self.d_segments) < self.tol

    def _on_N(self, P):
        return _segments_dist(P, self.n_segment) < self.tol

    def _sample_D(self):
        return _sample_segments(self.d_segments, self.spacing)

    def _sample_N(self):
        pts = _sample_segments(self.n_segment, self.spacing)
        return pts[(pts[:, 0] > -8.0) & (pts[:, 0] < 0.0)]


class UnitInterval(RegionSpec):
    """O = (0, 1) on the line with D = {0} and N = {1}."""

    name = "interval_with_endpoint_D"
    d = 1
    bbox = Box((-4,), (4,))
    core = Box((0,), (1,))
    window = Box((-2,), (3,))

    def inside(self, P):
        return (P[:, 0] > 0) & (P[:, 0] < 1)

    def _on_D(self, P):
        return np.abs(P[:, 0]) < self.tol

    def _on_N(self, P):
        return np.abs(P[:, 0] - 1.0) < self.tol

    def _sample_D(self):
        return np.zeros((1, 1))

    def _sample_N(self):
        return np.ones((1, 1))


BUILTIN_GEOMETRIES = {
    cls.name: cls for cls in (HalfPlane, Disk, CuspTouchingHalfplane, ExpWhitneyCusp, UnitInterval)
}


def builtin_geometry(name: str, resolution: int) -> RegionSpec:
    try:
        cls = BUILTIN_GEOMETRIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown geometry {name!r}; choose one of {sorted(BUILTIN_GEOMETRIES)}"
        ) from None
    return cls(resolution)


def classify(region: RegionSpec, x) -> Label:
    """Label of a single point: inside O, on D, on N, or outside."""
    return Label(int(region.classify_points(np.asarray(x, dtype=float)[None, :])[0]))


def load_geometry_config(path) -> RegionSpec:
    """Read a geometry config (JSON: name, resolution_level, optional bbox/window)."""
    import json

    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read geometry config {path}: {exc}") from exc
    if not isinstance(cfg, dict) or "name" not in cfg:
        raise ConfigError("geometry config needs a 'name' field")
    region = builtin_geometry(cfg["name"], int(cfg.get("resolution_level", 8)))
    for key in ("bbox", "window"):
        if key in cfg:
            box = Box(tuple(cfg[key]["lo"]), tuple(cfg[key]["hi"]))
            if box.d != region.d:
                raise ConfigError(f"{key} has dimension {box.d}, geometry has {region.d}")
            setattr(region, key, box)
    return region
