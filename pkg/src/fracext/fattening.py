"""Fattening of a region by the Whitney cubes of the complement of cl(N).

Sigma collects the cubes whose closure meets cl(O). The fattened domain is
O together with the Sigma cubes, minus D. A cube closure meets cl(O) exactly
when the cube lies inside O or touches the boundary of O; the first is
decided by the centre (cubes never meet N, and a cube inside O stays there),
the second by the exact box distance to the sampled boundary, accepting
anything within one sampling step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError
from .geometry import Box, PointCloudSet, RegionSpec
from .thickness import ThicknessReport, check_itc_in
from .whitney import WhitneyDecomposition, cube_box_distance, whitney_decompose

__all__ = [
    "FattenedDomain",
    "Lemma31Report",
    "fatten",
    "lemma31_ratio",
    "verify_fattened_itc",
]


class _CubeSet:
    """Union of half-open dyadic cells.

    Rasterized at the finest cell level over the cells' bounding box when
    that fits in memory; otherwise looked up by per-level sorted keys.
    """

    _MAX_RASTER = 1 << 27

    def __init__(self, levels: np.ndarray, indices: np.ndarray, bbox: Box):
        self.bbox = bbox
        self.raster = None
        self.tables = []
        if len(levels) == 0:
            return
        fine = int(levels.max())
        scale = (2 ** (fine - levels)).astype(np.int64)[:, None]
        lo = indices * scale
        hi = lo + scale
        origin, top = lo.min(axis=0), hi.max(axis=0)
        if np.prod((top - origin).astype(float)) <= self._MAX_RASTER:
            grid = np.zeros(tuple(top - origin), dtype=bool)
            for a, b in zip(lo - origin, hi - origin):
                grid[tuple(slice(u, v) for u, v in zip(a, b))] = True
            self.raster = (fine, origin, grid)
            return
        for k in np.unique(levels):
            sel = indices[levels == k]
            o = sel.min(axis=0)
            shape = sel.max(axis=0) + 1 - o
            keys = np.sort(np.ravel_multi_index(tuple((sel - o).T), tuple(shape)))
            self.tables.append((int(k), o, shape, keys))

    def contains(self, P: np.ndarray) -> np.ndarray:
        out = np.zeros(len(P), dtype=bool)
        if self.raster is not None:
            fine, origin, grid = self.raster
            idx = np.floor(P * 2.0**fine).astype(np.int64) - origin
            ok = np.all((idx >= 0) & (idx < grid.shape), axis=1)
            out[ok] = grid[tuple(idx[ok].T)]
            return out
        for k, o, shape, keys in self.tables:
            idx = np.floor(P * 2.0**k).astype(np.int64) - o
            ok = np.all((idx >= 0) & (idx < shape), axis=1)
            key = np.ravel_multi_index(tuple(idx[ok].T), tuple(shape))
            pos = np.minimum(np.searchsorted(keys, key), len(keys) - 1)
            out[ok] |= keys[pos] == key
        return out


@dataclass(frozen=True, eq=False)
class FattenedDomain:
    """O plus the cubes of Sigma with D removed.

    ``contributing`` marks the Sigma cubes not contained in O; only those add
    points to the fattened domain. ``extra_*`` holds hand-placed cubes, used
    to build deliberately broken fixtures.
    """

    base: RegionSpec
    whitney: WhitneyDecomposition
    sigma_levels: np.ndarray
    sigma_indices: np.ndarray
    contributing: np.ndarray
    extra_levels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    extra_indices: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def level(self) -> int:
        return self.base.level

    @property
    def core(self) -> Box:
        return self.base.core

    @property
    def bbox(self) -> Box:
        return self.base.bbox

    @property
    def window(self) -> Box:
        return self.base.window

    @property
    def accumulation_point(self):
        return self.base.accumulation_point

    @property
    def n_sigma(self) -> int:
        return len(self.sigma_levels)

    @cached_property
    def added_cubes(self) -> tuple[np.ndarray, np.ndarray]:
        """Cubes that add points outside O (contributing Sigma cubes plus extras)."""
        lv = np.concatenate([self.sigma_levels[self.contributing], self.extra_levels])
        ix = np.vstack([self.sigma_indices[self.contributing], self.extra_indices.reshape(-1, self.d)])
        return lv.astype(np.int64), ix.astype(np.int64)

    @cached_property
    def _cells(self) -> _CubeSet:
        return _CubeSet(*self.added_cubes, self.bbox)

    def in_added(self, P) -> np.ndarray:
        """Points of the fattened domain that are not in O."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = ~self.base.contains(P)
        if np.any(out):
            sub = np.flatnonzero(out)
            hit = self._cells.contains(P[sub])
            if np.any(hit):
                hit[hit] = ~self.base.on_D(P[sub[hit]])
            out[sub] = hit
        return out

    def contains(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        inside = self.base.contains(P)
        rest = np.flatnonzero(~inside)
        if len(rest):
            hit = self._cells.contains(P[rest])
            if np.any(hit):
                hit[hit] = ~self.base.on_D(P[rest[hit]])
            inside[rest] = hit
        return inside

    def sigma_cubes_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level"] + [f"index{a + 1}" for a in range(self.d)] + ["contributing"])
            for k, i, c in zip(self.sigma_levels, self.sigma_indices, self.contributing):
                w.writerow([int(k)] + [int(v) for v in i] + [int(c)])

    def raster(self, box: Box | None = None, level: int | None = None) -> tuple[np.ndarray, Box]:
        """Boolean membership of cell centres on a level-``level`` grid over ``box``."""
        box = self.window if box is None else box
        level = self.level if level is None else level
        lo, hi = box.index_range(level)
        axes = [(np.arange(a, b) + 0.5) * 2.0**-level for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        mask = np.concatenate([self.contains(c) for c in np.array_split(grid, max(1, len(grid) // 2_000_000))])
        return mask.reshape(tuple(hi - lo)), box

    def to_pgm(self, path, box: Box | None = None, level: int | None = None, comment: str | None = None) -> None:
        """Write the membership raster as a binary PGM (white = inside), y pointing up."""
        if self.d != 2:
            raise DomainError("PGM export needs a planar region")
        mask, _ = self.raster(box, level)
        img = np.where(mask.T[::-1], 255, 0).astype(np.uint8)
        note = f"# {comment}\n" if comment else ""
        with open(path, "wb") as fh:
            fh.write(f"P5\n{note}{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(img.tobytes())

    @cached_property
    def boundary_cloud(self) -> PointCloudSet:
        """Samples of the boundary of the fattened domain inside ``core``.

        Face midpoints between in/out cells of a raster one level finer than
        the region, plus the sampled D and N (which stay on the boundary).
        """
        level = self.level + 1
        box = self.core
        mask, _ = self.raster(box, level)
        h = 2.0**-level
        lo = np.asarray(box.index_range(level)[0])
        pts = []
        for ax in range(self.d):
            a = np.take(mask, np.arange(mask.shape[ax] - 1), axis=ax)
            b = np.take(mask, np.arange(1, mask.shape[ax]), axis=ax)
            cells = np.argwhere(a != b).astype(float)
            face = (cells + lo + 0.5) * h
            face[:, ax] += 0.5 * h
            pts.append(face)
        for cloud in (self.base.d_cloud, self.base.n_cloud):
            if len(cloud):
                pts.append(cloud.points[box.contains(cloud.points)])
        return PointCloudSet(np.unique(np.vstack(pts), axis=0), level, "boundary")


def fatten(
    region: RegionSpec,
    w: WhitneyDecomposition | None = None,
    extra_cubes=None,
) -> FattenedDomain:
    """Build Sigma and the fattened domain of ``region``.

    ``w`` must be generated by this region's N cloud (checked by
    fingerprint); when omitted it is built on ``region.bbox`` at the
    region's level.
    """
    if w is None:
        w = whitney_decompose(region.n_cloud, region.bbox, region.level)
    elif w.generator.fingerprint != region.n_cloud.fingerprint:
        raise DomainError("Whitney decomposition was generated from a different N")
    inside = region.contains(w.centers)
    boundary = region.boundary_cloud
    near = np.zeros(len(w), dtype=bool)
    rest = np.flatnonzero(~inside)
    if len(rest):
        gap = cube_box_distance(w.levels[rest], w.indices[rest], boundary)
        near[rest] = gap <= 2.0 * region.spacing
    sigma = inside | near
    if extra_cubes:
        ex_lv = np.array([c[0] for c in extra_cubes], dtype=np.int64)
        ex_ix = np.array([c[1] for c in extra_cubes], dtype=np.int64).reshape(-1, region.d)
    else:
        ex_lv = np.empty(0, dtype=np.int64)
        ex_ix = np.empty((0, region.d), dtype=np.int64)
    return FattenedDomain(
        base=region,
        whitney=w,
        sigma_levels=w.levels[sigma],
        sigma_indices=w.indices[sigma],
        contributing=~inside[sigma],
        extra_levels=ex_lv,
        extra_indices=ex_ix,
    )


@dataclass(frozen=True)
class Lemma31Report:
    vacuous: bool
    min_ratio: float
    n_pairs: int
    argmin_x: tuple | None = None
    argmin_y: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "vacuous": self.vacuous,
            "min_ratio": self.min_ratio,
            "n_pairs": self.n_pairs,
            "argmin_x": None if self.argmin_x is None else list(self.argmin_x),
            "argmin_y": None if self.argmin_y is None else list(self.argmin_y),
        }


def lemma31_ratio(f: FattenedDomain, n_pairs: int = 100_000, seed: int = 0) -> Lemma31Report:
    """Sample x in O, y in the added region, and return min |x - y| / dist_D(x).

    y is drawn uniformly from a uniformly chosen added cube (so small cubes
    near D are well represented); x = y + rho u with rho log-uniform in
    [2^(-L+2), 1].
    """
    lv, ix = f.added_cubes
    if len(lv) == 0 or len(f.base.d_cloud) == 0:
        return Lemma31Report(True, math.inf, 0)
    rng = np.random.default_rng([seed, 31])
    d = f.d
    r_min = 2.0 ** (-f.level + 2)
    best, bx, by = math.inf, None, None
    got = 0
    batch = 50_000
    for _ in range(400):
        pick = rng.integers(0, len(lv), size=batch)
        side = 2.0 ** (-lv[pick].astype(float))[:, None]
        y = (ix[pick] + rng.uniform(size=(batch, d))) * side
        y = y[f.in_added(y)]
        if len(y) == 0:
            continue
        u = rng.standard_normal(y.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rho = np.exp(rng.uniform(math.log(r_min), 0.0, size=(len(y), 1)))
        x = y + rho * u
        ok = f.base.contains(x) & f.bbox.contains(x)
        x, y = x[ok], y[ok]
        take = min(len(x), n_pairs - got)
        x, y = x[:take], y[:take]
        if take == 0:
            continue
        ratio = np.linalg.norm(x - y, axis=1) / f.base.dist_D(x)
        k = int(np.argmin(ratio))
        if ratio[k] < best:
            best, bx, by = float(ratio[k]), tuple(map(float, x[k])), tuple(map(float, y[k]))
        got += take
        if got >= n_pairs:
            break
    if got == 0:
        return Lemma31Report(True, math.inf, 0)
    return Lemma31Report(False, best, got, bx, by)


def verify_fattened_itc(
    f: FattenedDomain,
    centers: int = 200,
    radii: int = 20,
    seed: int = 0,
    n_mc: int = 10_000,
    bias_point=None,
) -> ThicknessReport:
    """Thickness of the fattened domain in balls centred on its own boundary."""
    return check_itc_in(f, f.boundary_cloud, centers, radii, seed, n_mc, bias_point)
