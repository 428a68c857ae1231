"""Zero extension onto the fattened domain and Whitney-average/median extension beyond it.

Everything is evaluated on the level-L cells of the region's window. The
exterior of the fattened domain inside the window is split into Whitney
cubes (generator: the sampled boundary of the fattened domain); the
finest-level collar left by the decomposition is handled cell by cell.
Each exterior cube Q gets one number a(Q) computed from the values on the
fattened domain inside B(centre(Q), 6 diam(Q)); a partition of unity on the
1.1-dilated cubes blends these numbers into cell values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import ContractViolation, DomainError
from .fattening import FattenedDomain
from .geometry import Box, PointCloudSet
from .norms import GridFunction, hardy_norm, lattice_cells, lp_norm, seminorm_wsp
from .whitney import WhitneyDecomposition, whitney_decompose

__all__ = [
    "ExteriorPlan",
    "ExtensionResult",
    "p_median",
    "zero_extend",
    "prepare_exterior",
    "whitney_extend",
    "extend_full",
    "restriction_check",
]

REACH = 6.0
DILATION = 1.1


def p_median(values, p: float, weights=None) -> float:
    """A minimiser of c -> sum_i w_i |v_i - c|^p.

    p < 1: the cost is concave between samples, so a sample minimises it;
    exhaustive scan over distinct values (first minimiser in sorted order).
    p = 1: weighted lower median. p = 2: weighted mean. Otherwise a bounded
    scalar minimisation of the convex cost.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if len(v) == 0:
        raise DomainError("p-median of an empty sample")
    w = np.ones(len(v)) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if p < 1.0:
        uniq, inv = np.unique(v, return_inverse=True)
        counts = np.bincount(inv.reshape(-1), weights=w)
        return float(_kernels.p_median_scan(uniq, counts, float(p), _kernels.pow_mode(p)))
    if p == 1.0:
        order = np.argsort(v, kind="stable")
        cum = np.cumsum(w[order])
        return float(v[order][np.searchsorted(cum, 0.5 * cum[-1])])
    if p == 2.0:
        return float(np.dot(w, v) / w.sum())
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo
    res = minimize_scalar(lambda c: float(np.dot(w, np.abs(v - c) ** p)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, hi - lo)})
    return float(res.x)


def zero_extend(f: GridFunction, fat: FattenedDomain) -> GridFunction:
    """Extend f by zero to the fattened domain (same window and level)."""
    if f.region is not fat.base:
        raise DomainError("grid function does not live on the fattened domain's base region")
    cells = lattice_cells(fat, f.level, f.window)
    pos = _CellIndex(cells, f.window, f.level)
    where = pos.lookup(f.cells)
    if np.any(where < 0):
        raise ContractViolation("some cells of O are missing from the fattened domain")
    values = np.zeros(len(cells))
    values[where] = f.values
    return GridFunction(fat, f.level, f.window, cells, values, f.params)


class _CellIndex:
    """Dense lookup from lattice index to row position within a window."""

    def __init__(self, cells: np.ndarray, window: Box, level: int):
        self.lo, hi = window.index_range(level)
        self.shape = tuple(hi - self.lo)
        self.grid = np.full(self.shape, -1, dtype=np.int64)
        self.grid[tuple((cells - self.lo).T)] = np.arange(len(cells))

    def lookup(self, cells: np.ndarray) -> np.ndarray:
        rel = cells - self.lo
        ok = np.all((rel >= 0) & (rel < self.shape), axis=1)
        out = np.full(len(cells), -1, dtype=np.int64)
        out[ok] = self.grid[tuple(rel[ok].T)]
        return out


@dataclass(frozen=True, eq=False)
class ExteriorPlan:
    """Everything about the exterior that does not depend on the function.

    ``cube_*`` lists the exterior cubes (accepted Whitney cubes outside the
    fattened domain, then collar cells). ``samples[q]`` holds the positions
    (in the fattened domain's cell list) that make up R(Q), ``far`` marks
    cubes with diameter above 1, and ``blend`` is the row-normalised
    partition-of-unity matrix from cubes to exterior cells.
    """

    fat: FattenedDomain
    level: int
    window: Box
    whitney: WhitneyDecomposition
    inner_cells: np.ndarray
    outer_cells: np.ndarray
    cube_levels: np.ndarray
    cube_indices: np.ndarray
    samples: list = field(repr=False)
    far: np.ndarray = field(repr=False)
    blend: sparse.csr_matrix = field(repr=False)

    @property
    def n_cubes(self) -> int:
        return len(self.cube_levels)

    def averaging_matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for q, idx in enumerate(self.samples):
            if self.far[q]:
                continue
            rows.append(np.full(len(idx), q))
            cols.append(idx)
            vals.append(np.full(len(idx), 1.0 / len(idx)))
        if not rows:
            return sparse.csr_matrix((self.n_cubes, len(self.inner_cells)))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cubes, len(self.inner_cells)),
        )


def _ball_samples(centre, radius, stride, level, inner: _CellIndex) -> np.ndarray:
    h = 2.0**-level
    c = centre / h - 0.5
    r = radius / h
    lo = np.maximum(np.ceil(c - r).astype(np.int64), inner.lo)
    hi = np.minimum(np.floor(c + r).astype(np.int64), inner.lo + np.asarray(inner.shape) - 1)
    # align the lattice to multiples of stride so neighbouring cubes sample alike
    lo = lo + (-lo) % stride
    if np.any(hi < lo):
        return np.empty(0, dtype=np.int64)
    axes = [np.arange(a, b + 1, stride) for a, b in zip(lo, hi)]
    cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    keep = np.sum((cells - c) ** 2, axis=1) < r * r
    pos = inner.lookup(cells[keep])
    return pos[pos >= 0]


def prepare_exterior(fat: FattenedDomain, level: int | None = None, window: Box | None = None) -> ExteriorPlan:
    """Exterior Whitney cubes, reflection samples and partition of unity for one grid."""
    level = fat.level if level is None else level
    window = fat.window if window is None else window
    d = fat.d
    h = 2.0**-level
    all_cells = lattice_cells(None, level, window)
    in_fat = fat.contains((all_cells + 0.5) * h)
    inner_cells, outer_cells = all_cells[in_fat], all_cells[~in_fat]
    inner = _CellIndex(inner_cells, window, level)

    # samples on the window's edge may belong to parts of the domain outside
    # the window; they would create cubes with nothing to reflect onto
    pts = fat.boundary_cloud.points
    gen = PointCloudSet(pts[window.contains(pts, closed=False)], fat.boundary_cloud.resolution_level, "boundary")
    if len(gen) == 0:
        raise DomainError("the fattened domain has no boundary inside the window")
    w = whitney_decompose(gen, window, level)
    ext = ~fat.contains(w.centers)
    lv, ix = w.levels[ext], w.indices[ext]
    # collar and any cell not covered by an exterior cube becomes its own cube
    covered = np.zeros(len(outer_cells), dtype=bool)
    outer = _CellIndex(outer_cells, window, level)
    for k, i in zip(lv, ix):
        span = 2 ** (level - int(k))
        axes = [np.arange(a * span, (a + 1) * span) for a in i]
        sub = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        pos = outer.lookup(sub)
        covered[pos[pos >= 0]] = True
    loose = outer_cells[~covered]
    lv = np.concatenate([lv, np.full(len(loose), level, dtype=np.int64)])
    ix = np.vstack([ix, loose]).astype(np.int64)

    side = 2.0 ** (-lv.astype(float))
    diam = math.sqrt(d) * side
    centres = (ix + 0.5) * side[:, None]
    far = diam > 1.0
    samples = []
    for q in range(len(lv)):
        if far[q]:
            samples.append(np.empty(0, dtype=np.int64))
            continue
        stride = int(2 ** (level - int(lv[q])))
        got = _ball_samples(centres[q], REACH * diam[q], stride, level, inner)
        if len(got) == 0 and stride > 1:
            got = _ball_samples(centres[q], REACH * diam[q], 1, level, inner)
        if len(got) == 0:
            raise ContractViolation(
                f"no cell of the fattened domain within {REACH} diameters of cube "
                f"level={int(lv[q])} index={ix[q].tolist()}"
            )
        samples.append(np.sort(got))

    blend = _partition_of_unity(lv, ix, outer_cells, outer, level)
    return ExteriorPlan(fat, level, window, w, inner_cells, outer_cells, lv, ix, samples, far, blend)


def _bump(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) < 1.0, (1.0 - t * t) ** 2, 0.0)


def _partition_of_unity(lv, ix, outer_cells, outer: _CellIndex, level: int) -> sparse.csr_matrix:
    d = ix.shape[1]
    h = 2.0**-level
    rows, cols, vals = [], [], []
    for q, (k, i) in enumerate(zip(lv, ix)):
        side = 2.0 ** -int(k)
        c = (i + 0.5) * side
        half = 0.5 * DILATION * side
        lo = np.ceil((c - half) / h - 0.5).astype(np.int64)
        hi = np.floor((c + half) / h - 0.5).astype(np.int64)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        pos = outer.lookup(cells)
        ok = pos >= 0
        t = ((cells[ok] + 0.5) * h - c) / half
        phi = np.prod(_bump(t), axis=1)
        nz = phi > 0
        rows.append(pos[ok][nz])
        cols.append(np.full(int(nz.sum()), q))
        vals.append(phi[nz])
    M = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(outer_cells), len(lv)),
    )
    total = np.asarray(M.sum(axis=1)).reshape(-1)
    if np.any(total <= 0):
        raise ContractViolation("partition of unity leaves exterior cells uncovered")
    return sparse.diags(1.0 / total) @ M


def _cube_values(g_values: np.ndarray, plan: ExteriorPlan, p: float) -> np.ndarray:
    if p >= 1.0:
        return plan.averaging_matrix() @ g_values
    out = np.zeros(plan.n_cubes)
    for q, idx in enumerate(plan.samples):
        if not plan.far[q]:
            out[q] = p_median(g_values[idx], p)
    return out


def whitney_extend(g: GridFunction, plan: ExteriorPlan | None = None) -> GridFunction:
    """Extend g from the fattened domain to every cell of the window."""
    fat = g.region
    if not isinstance(fat, FattenedDomain):
        raise DomainError("whitney_extend expects a grid function on a fattened domain")
    if plan is None:
        plan = prepare_exterior(fat, g.level, g.window)
    if plan.fat is not fat or plan.level != g.level:
        raise DomainError("exterior plan belongs to a different domain or level")
    if len(g) != len(plan.inner_cells) or not np.array_equal(g.cells, plan.inner_cells):
        raise DomainError("grid function cells differ from the plan's fattened-domain cells")
    a = _cube_values(g.values, plan, g.params.p)
    ext = plan.blend @ a
    cells = np.vstack([plan.inner_cells, plan.outer_cells])
    values = np.concatenate([g.values, ext])
    order = np.lexsort(cells.T[::-1])
    return GridFunction(None, g.level, g.window, cells[order], values[order], g.params)


@dataclass(frozen=True, eq=False)
class ExtensionResult:
    output: GridFunction
    intermediate: GridFunction
    input_norms: dict
    output_norms: dict
    input_combined: float
    output_combined: float
    ratio: float | None
    status: str
    hardy_divergence_suspected: bool = False

    def to_dict(self) -> dict:
        return {
            "input_norms": self.input_norms,
            "output_norms": self.output_norms,
            "input_combined": self.input_combined,
            "output_combined": self.output_combined,
            "ratio": self.ratio,
            "status": self.status,
            "hardy_divergence_suspected": self.hardy_divergence_suspected,
        }


def _combined(parts, p: float) -> float:
    return math.fsum(v**p for v in parts) ** (1.0 / p)


def extend_full(f: GridFunction, fat: FattenedDomain, plan: ExteriorPlan | None = None) -> ExtensionResult:
    """Zero extension followed by Whitney extension, with the norms on both sides."""
    p = f.params.p
    g = zero_extend(f, fat)
    out = whitney_extend(g, plan)
    hardy = hardy_norm(f)
    inp = {"seminorm": seminorm_wsp(f), "lp": lp_norm(f), "hardy": hardy.value}
    outp = {"seminorm": seminorm_wsp(out), "lp": lp_norm(out)}
    a = _combined(inp.values(), p)
    b = _combined(outp.values(), p)
    if a == 0.0:
        status, ratio = ("trivial", None) if b == 0.0 else ("unbounded", math.inf)
    elif not (math.isfinite(a) and math.isfinite(b)):
        status, ratio = "non-finite", None
    else:
        status, ratio = "ok", b / a
    return ExtensionResult(out, g, inp, outp, a, b, ratio, status, hardy.divergence_suspected)


def restriction_check(res: ExtensionResult, f: GridFunction) -> float:
    """Largest |Ext f - f| over the cells of f (zero for a genuine extension)."""
    idx = _CellIndex(res.output.cells, res.output.window, res.output.level).lookup(f.cells)
    if np.any(idx < 0):
        raise DomainError("extension output does not cover the input cells")
    diff = np.abs(res.output.values[idx] - f.values)
    return float(diff.max()) if len(diff) else 0.0
