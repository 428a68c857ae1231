"""Compiled inner loops: pair sums over lattice cells, p-median scans, cube distances.

Every reduction writes one partial sum per row, accumulated sequentially in
a fixed order; callers finish with ``math.fsum``. Results therefore do not
depend on the number of threads.
"""
import math

import numba
import numpy as np

# the bundled TBB is too old for numba; the portable layer keeps results identical anyway
numba.config.THREADING_LAYER = "workqueue"

# |t|^p evaluation modes
POW_SQUARE, POW_ABS, POW_SQRT, POW_GENERIC = 0, 1, 2, 3


def pow_mode(p: float) -> int:
    if p == 2.0:
        return POW_SQUARE
    if p == 1.0:
        return POW_ABS
    if p == 0.5:
        return POW_SQRT
    return POW_GENERIC


@numba.njit(inline="always")
def _ppow(t, p, mode):
    if mode == POW_SQUARE:
        return t * t
    t = abs(t)
    if mode == POW_ABS:
        return t
    if mode == POW_SQRT:
        return math.sqrt(t)
    return t**p


@numba.njit(cache=True)
def _kernel_value(r2, table, scale, expo):
    if r2 < table.shape[0]:
        return table[r2]
    return scale * r2 ** (-0.5 * expo)


@numba.njit(cache=True)
def _bucket_neighbours(d):
    n = 3**d
    offs = np.zeros((n, d), dtype=np.int64)
    for m in range(n):
        q = m
        for a in range(d):
            offs[m, a] = q % 3 - 1
            q //= 3
    return offs


@numba.njit(cache=True)
def pair_rows_sym(idx, val, bkey, bstart, bshape, width, rad2, table, scale, expo, p, mode, want_mass):
    """Unordered pairs inside one cell set (sorted by bucket).

    Returns ``rows[a] = sum_{b > a} |v_a - v_b|^p K(a, b)`` and, when
    ``want_mass``, the kernel mass ``mass[a] = sum_{b != a} K(a, b)`` over the
    same set (zeros otherwise).
    """
    n, d = idx.shape
    offs = _bucket_neighbours(d)
    rows = np.zeros(n)
    mass = np.zeros(n)
    bc = np.zeros(d, dtype=np.int64)
    for a in range(n):
        va = val[a]
        acc = 0.0
        for m in range(offs.shape[0]):
            flat = 0
            inside = True
            for ax in range(d):
                c = idx[a, ax] // width - bkey[ax] + offs[m, ax]
                if c < 0 or c >= bshape[ax]:
                    inside = False
                    break
                bc[ax] = c
            if not inside:
                continue
            for ax in range(d):
                flat = flat * bshape[ax] + bc[ax]
            for b in range(max(bstart[flat], a + 1), bstart[flat + 1]):
                r2 = 0
                for ax in range(d):
                    t = idx[b, ax] - idx[a, ax]
                    r2 += t * t
                if r2 >= rad2:
                    continue
                k = _kernel_value(r2, table, scale, expo)
                acc += _ppow(va - val[b], p, mode) * k
                if want_mass:
                    mass[a] += k
                    mass[b] += k
        rows[a] = acc
    return rows, mass


@numba.njit(cache=True, parallel=True)
def pair_rows_cross(aidx, aval, bidx, bval, bkey, bstart, bshape, width, rad2, table, scale, expo, p, mode):
    """Ordered pairs ``a`` in A, ``b`` in B (sorted by bucket), skipping coincident cells."""
    n, d = aidx.shape
    offs = _bucket_neighbours(d)
    rows = np.zeros(n)
    for a in numba.prange(n):
        bc = np.zeros(d, dtype=np.int64)
        va = aval[a]
        acc = 0.0
        for m in range(offs.shape[0]):
            inside = True
            for ax in range(d):
                c = aidx[a, ax] // width - bkey[ax] + offs[m, ax]
                if c < 0 or c >= bshape[ax]:
                    inside = False
                    break
                bc[ax] = c
            if not inside:
                continue
            flat = 0
            for ax in range(d):
                flat = flat * bshape[ax] + bc[ax]
            for b in range(bstart[flat], bstart[flat + 1]):
                r2 = 0
                for ax in range(d):
                    t = bidx[b, ax] - aidx[a, ax]
                    r2 += t * t
                if r2 == 0 or r2 >= rad2:
                    continue
                acc += _ppow(va - bval[b], p, mode) * _kernel_value(r2, table, scale, expo)
        rows[a] = acc
    return rows


@numba.njit(cache=True)
def p_median_scan(values, counts, p, mode):
    """Sample value minimising ``sum_j counts_j |values_j - c|^p`` (first minimiser wins)."""
    best = np.inf
    arg = 0
    for i in range(values.shape[0]):
        c = values[i]
        cost = 0.0
        for j in range(values.shape[0]):
            cost += counts[j] * _ppow(values[j] - c, p, mode)
            if cost >= best:
                break
        if cost < best:
            best = cost
            arg = i
    return values[arg]


@numba.njit(cache=True, parallel=True)
def brute_cube_distance(lo, hi, points):
    """Distance from each closed box ``[lo_q, hi_q]`` to a point set, by exhaustive scan."""
    nq, d = lo.shape
    out = np.empty(nq)
    for q in numba.prange(nq):
        best = np.inf
        for j in range(points.shape[0]):
            s = 0.0
            for ax in range(d):
                g = lo[q, ax] - points[j, ax]
                g2 = points[j, ax] - hi[q, ax]
                if g2 > g:
                    g = g2
                if g > 0.0:
                    s += g * g
            if s < best:
                best = s
        out[q] = math.sqrt(best)
    return out
