"""Grid functions and quadrature for L^p, truncated Gagliardo and Hardy norms.

A grid function lives on the level-L lattice: cell ``i`` is the cube
``i h + [0, h)^d`` with ``h = 2^-L`` and is represented by its centre
``(i + 1/2) h``. Cells are kept only where the centre lies in the carrying
region (or everywhere in ``window`` when the region is ``None``).

Pair sums are midpoint rules over ordered pairs of distinct cells whose
centres are closer than 1. Distances are computed on integer offsets, so
the truncation and the kernel values are bit-reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError
from .geometry import Box, FractionalParams, PointCloudSet

__all__ = [
    "GridFunction",
    "HardyReport",
    "lattice_cells",
    "seminorm_wsp",
    "seminorm_p",
    "cross_term_p",
    "lp_norm",
    "hardy_norm",
    "hardy_kernel_integral",
    "kernel_constant",
    "annulus_integral",
]

_TABLE_LIMIT = 1 << 22


def lattice_cells(region, level: int, window: Box) -> np.ndarray:
    """Integer indices of level-``level`` cells of ``window`` whose centres lie in ``region``."""
    lo, hi = window.index_range(level)
    axes = [np.arange(a, b) for a, b in zip(lo, hi)]
    cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, window.d).astype(np.int64)
    if region is None:
        return cells
    keep = region.contains((cells + 0.5) * 2.0**-level)
    return cells[keep]


def _region_name(region) -> str:
    if region is None:
        return "window"
    base = getattr(region, "base", None)
    if base is not None:
        return f"fattened:{base.name}"
    return region.name


@dataclass(frozen=True, eq=False)
class GridFunction:
    region: object
    level: int
    window: Box
    cells: np.ndarray
    values: np.ndarray
    params: FractionalParams

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.int64).reshape(-1, self.window.d)
        values = np.ascontiguousarray(self.values, dtype=float).reshape(-1)
        if len(cells) != len(values):
            raise DomainError(f"{len(cells)} cells but {len(values)} values")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, region, level: int, params: FractionalParams, func, window: Box | None = None):
        """Sample ``func(centres) -> values`` on the cells of ``region`` inside ``window``."""
        window = region.window if window is None else window
        cells = lattice_cells(region, level, window)
        values = func((cells + 0.5) * 2.0**-level) if len(cells) else np.empty(0)
        return cls(region, level, window, cells, np.asarray(values, dtype=float), params)

    @property
    def d(self) -> int:
        return self.cells.shape[1]

    @property
    def h(self) -> float:
        return 2.0**-self.level

    @property
    def centers(self) -> np.ndarray:
        return (self.cells + 0.5) * self.h

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.region, self.level, self.window, self.cells, values, self.params)

    def scaled(self, alpha: float) -> "GridFunction":
        return self.with_values(alpha * self.values)

    def validate(self) -> None:
        """Check that the cells are exactly the region's cells in the window."""
        expected = lattice_cells(self.region, self.level, self.window)
        if len(expected) != len(self.cells) or not np.array_equal(
            np.unique(expected, axis=0), np.unique(self.cells, axis=0)
        ):
            raise DomainError("grid function cells do not match the carrying region")

    def header(self) -> dict:
        return {
            "region": _region_name(self.region),
            "level": self.level,
            "window": self.window.to_dict(),
            "params": {"s": self.params.s, "p": self.params.p, "d": self.params.d},
        }

    def to_csv(self, path, extra: dict | None = None) -> None:
        head = self.header()
        if extra:
            head.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
            fh.write(",".join([f"i{a + 1}" for a in range(self.d)] + ["value"]) + "\n")
            for c, v in zip(self.cells.tolist(), self.values.tolist()):
                fh.write(",".join(map(str, c)) + "," + repr(v) + "\n")

    @classmethod
    def from_csv(cls, path, region=None) -> "GridFunction":
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ConfigError(f"{path}: missing JSON header line")
            head = json.loads(first[2:])
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        par = head["params"]
        window = Box(tuple(head["window"]["lo"]), tuple(head["window"]["hi"]))
        d = window.d
        cells = data[:, :d].astype(np.int64) if len(data) else np.empty((0, d), dtype=np.int64)
        values = data[:, d] if len(data) else np.empty(0)
        return cls(region, int(head["level"]), window, cells, values, FractionalParams(par["s"], par["p"], par["d"]))


# -- pair sums ----------------------------------------------------------------


@dataclass
class _Kernel:
    level: int
    params: FractionalParams
    rad2: int = field(init=False)
    scale: float = field(init=False)
    table: np.ndarray = field(init=False)

    def __post_init__(self):
        h = 2.0**-self.level
        d = self.params.d
        expo = self.params.kernel_exponent
        self.rad2 = 4**self.level
        # h^2d |h r|^-(sp+d) with r^2 = r2 in cell units
        self.scale = h ** (2 * d - expo)
        n = min(self.rad2, _TABLE_LIMIT)
        r2 = np.arange(n, dtype=float)
        r2[0] = 1.0
        self.table = self.scale * r2 ** (-0.5 * expo)
        self.table[0] = 0.0

    @property
    def expo(self) -> float:
        return self.params.kernel_exponent

    @property
    def width(self) -> int:
        return 2**self.level

    def value(self, r2: np.ndarray) -> np.ndarray:
        r2 = np.asarray(r2)
        out = np.where(r2 < len(self.table), self.table[np.minimum(r2, len(self.table) - 1)], 0.0)
        far = r2 >= len(self.table)
        if np.any(far):
            out[far] = self.scale * r2[far].astype(float) ** (-0.5 * self.expo)
        out[(r2 == 0) | (r2 >= self.rad2)] = 0.0
        return out


def _buckets(idx: np.ndarray, width: int):
    """Sort cells by unit bucket; return permutation, bucket origin, shape and CSR starts."""
    d = idx.shape[1]
    key = idx // width
    lo = key.min(axis=0) if len(idx) else np.zeros(d, dtype=np.int64)
    shape = (key.max(axis=0) - lo + 1) if len(idx) else np.ones(d, dtype=np.int64)
    flat = np.ravel_multi_index(tuple((key - lo).T), tuple(shape))
    order = np.argsort(flat, kind="stable")
    start = np.searchsorted(flat[order], np.arange(int(np.prod(shape)) + 1))
    return order, lo.astype(np.int64), shape.astype(np.int64), start.astype(np.int64)


def _sym_rows(idx, val, ker: _Kernel, p: float, want_mass: bool = False):
    order, bkey, bshape, bstart = _buckets(idx, ker.width)
    rows, mass = _kernels.pair_rows_sym(
        np.ascontiguousarray(idx[order]), np.ascontiguousarray(val[order]), bkey, bstart, bshape,
        ker.width, ker.rad2, ker.table, ker.scale, ker.expo, p, _kernels.pow_mode(p), want_mass,
    )
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return rows[inv], mass[inv]


def _cross_rows(aidx, aval, bidx, bval, ker: _Kernel, p: float) -> np.ndarray:
    if len(bidx) == 0 or len(aidx) == 0:
        return np.zeros(len(aidx))
    order, bkey, bshape, bstart = _buckets(bidx, ker.width)
    return _kernels.pair_rows_cross(
        np.ascontiguousarray(aidx), np.ascontiguousarray(aval),
        np.ascontiguousarray(bidx[order]), np.ascontiguousarray(bval[order]),
        bkey, bstart, bshape, ker.width, ker.rad2, ker.table, ker.scale, ker.expo, p, _kernels.pow_mode(p),
    )


def _box_mass(idx: np.ndarray, lo: np.ndarray, hi: np.ndarray, ker: _Kernel) -> np.ndarray:
    """Kernel mass sum_{b in box, b != a} K(a, b) for every cell a of a full box (d <= 2)."""
    d = idx.shape[1]
    n = hi - lo
    axes = [np.arange(-(m - 1), m) for m in n]
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum(g.astype(np.int64) ** 2 for g in grids)
    T = ker.value(r2)
    P = np.zeros(tuple(s + 1 for s in T.shape))
    P[tuple(slice(1, None) for _ in range(d))] = T
    for ax in range(d):
        P = np.cumsum(P, axis=ax)
    # offsets from a to the box run over [lo - a, hi - 1 - a]; shift by n - 1 into T
    start = lo - idx + (n - 1)
    stop = hi - idx + (n - 1)
    if d == 1:
        return P[stop[:, 0]] - P[start[:, 0]]
    a0, a1 = start[:, 0], start[:, 1]
    b0, b1 = stop[:, 0], stop[:, 1]
    return P[b0, b1] - P[a0, b1] - P[b0, a1] + P[a0, a1]


def seminorm_p(f: GridFunction, symmetric: bool = True) -> float:
    """Sum over ordered cell pairs of |f(x) - f(y)|^p K(x, y) h^2d (the seminorm to the p)."""
    p = f.params.p
    ker = _Kernel(f.level, f.params)
    if len(f) < 2:
        return 0.0
    if not symmetric:
        return math.fsum(_cross_rows(f.cells, f.values, f.cells, f.values, ker, p))
    nz = f.values != 0.0
    S_idx, S_val = f.cells[nz], f.values[nz]
    if len(S_idx) == 0:
        return 0.0
    box = f.region is None and f.d <= 2 and len(S_idx) < len(f)
    rows, mass = _sym_rows(S_idx, S_val, ker, p, box)
    abs_p = np.abs(S_val) ** p
    if box:
        lo, hi = f.window.index_range(f.level)
        zmass = _box_mass(S_idx, lo, hi, ker) - mass
        cross = abs_p * zmass
    else:
        Z_idx = f.cells[~nz]
        cross = _cross_rows(S_idx, S_val, Z_idx, np.zeros(len(Z_idx)), ker, p)
    return 2.0 * (math.fsum(rows) + math.fsum(cross))


def seminorm_wsp(f: GridFunction, symmetric: bool = True) -> float:
    """Truncated Gagliardo seminorm [f]_{W^{s,p}} by the midpoint rule."""
    return seminorm_p(f, symmetric) ** (1.0 / f.params.p)


def cross_term_p(f: GridFunction, other_cells: np.ndarray) -> float:
    """sum_{x in f's cells, y in other_cells, 0 < |x - y| < 1} |f(x)|^p K(x, y) h^2d."""
    ker = _Kernel(f.level, f.params)
    other = np.asarray(other_cells, dtype=np.int64).reshape(-1, f.d)
    rows = _cross_rows(f.cells, f.values, other, np.zeros(len(other)), ker, f.params.p)
    return math.fsum(rows)


def lp_norm(f: GridFunction) -> float:
    p = f.params.p
    return (math.fsum(np.abs(f.values) ** p) * f.h**f.d) ** (1.0 / p)


# -- Hardy term ---------------------------------------------------------------


@dataclass(frozen=True)
class HardyReport:
    value: float
    divergence_suspected: bool
    flagged_cells: int
    sums: tuple = ()

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "divergence_suspected": self.divergence_suspected,
            "flagged_cells": self.flagged_cells,
            "sums_coarse_to_fine": list(self.sums),
        }


def _hardy_sum(cells, values, cover, level, D: PointCloudSet, sp, p) -> tuple[float, int]:
    h = 2.0**-level
    dist = D.dist((cells + 0.5) * h)
    flagged = int(np.sum(dist < h))
    # cell centres of a resolved grid never sit closer than a quarter cell to D
    weight = np.maximum(dist, 0.25 * h) ** (-sp)
    return math.fsum(cover * np.abs(values) ** p * weight) * h ** cells.shape[1], flagged


def _coarsen(cells, values, cover, d):
    """Parent cells carrying the mean of their children and the covered volume fraction."""
    uniq, inv = np.unique(cells >> 1, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    vol = np.zeros(len(uniq))
    np.add.at(vol, inv, cover)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inv, cover * values)
    return uniq, acc / vol, vol / 2**d


def hardy_norm(f: GridFunction, D: PointCloudSet | None = None, decay: float = 0.75) -> HardyReport:
    """Midpoint quadrature of (int |f|^p dist_D^-sp)^(1/p).

    The sum is repeated on two coarsenings (parents carry the child mean).
    If the increment between successive levels does not shrink by at least
    ``decay``, the value is flagged as likely divergent under refinement.
    Cells closer than one cell width to D are counted in ``flagged_cells``.
    """
    if D is None:
        base = getattr(f.region, "base", f.region)
        if base is None:
            raise DomainError("hardy_norm needs D when the grid has no region")
        D = base.d_cloud
    if len(D) == 0 or len(f) == 0:
        return HardyReport(0.0, False, 0, (0.0,))
    p, sp = f.params.p, f.params.sp
    cells, vals, cover = f.cells, f.values, np.ones(len(f))
    fine, flagged = _hardy_sum(cells, vals, cover, f.level, D, sp, p)
    sums = [fine]
    for step in (1, 2):
        cells, vals, cover = _coarsen(cells, vals, cover, f.d)
        sums.append(_hardy_sum(cells, vals, cover, f.level - step, D, sp, p)[0])
    sums = tuple(sums[::-1])
    inc_coarse, inc_fine = sums[1] - sums[0], sums[2] - sums[1]
    suspected = inc_fine > 1e-9 * fine and inc_fine > decay * abs(inc_coarse)
    return HardyReport(fine ** (1.0 / p), bool(suspected), flagged, sums)


# -- kernel integral over the added region -------------------------------------


def kernel_constant(params: FractionalParams) -> float:
    """sigma_{d-1} (1/2)^-sp / sp: polar bound for the kernel outside B(x, dist_D(x)/2)."""
    d, sp = params.d, params.sp
    sphere = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return sphere * 0.5 ** (-sp) / sp


def annulus_integral(inner: float, params: FractionalParams) -> float:
    """Closed form of the kernel integral over {inner < |z| < 1}."""
    d, sp = params.d, params.sp
    sphere = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return sphere * (inner ** (-sp) - 1.0) / sp


def hardy_kernel_integral(x, target, params: FractionalParams, level: int, bbox: Box | None = None) -> float:
    """Midpoint quadrature of the kernel |x - y|^-(sp + d) over target cells with |x - y| < 1.

    ``target`` is a fattened domain (integrating over the added region, and
    then ``x`` must lie in the base region) or any predicate ``P -> bool``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.shape[0]
    base = getattr(target, "base", None)
    if base is not None:
        if not base.contains(x[None, :])[0]:
            raise DomainError(f"x = {x.tolist()} is not in the base region")
        pred = target.in_added
        bbox = target.bbox if bbox is None else bbox
    else:
        pred = target
    h = 2.0**-level
    lo = np.floor((x - 1.0) / h).astype(np.int64)
    hi = np.ceil((x + 1.0) / h).astype(np.int64)
    axes = [np.arange(a, b) for a, b in zip(lo, hi)]
    cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    c = (cells + 0.5) * h
    r = np.linalg.norm(c - x, axis=1)
    keep = (r < 1.0) & (r > 0)
    if bbox is not None:
        keep &= bbox.contains(c)
    c, r = c[keep], r[keep]
    hit = pred(c)
    return math.fsum(r[hit] ** (-params.kernel_exponent)) * h**d
