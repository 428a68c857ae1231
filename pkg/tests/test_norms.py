import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracext import DomainError, PointCloudSet
from fracext.fattening import fatten
from fracext.geometry import Box, FractionalParams, builtin_geometry
from fracext.norms import (
    GridFunction,
    annulus_integral,
    cross_term_p,
    hardy_kernel_integral,
    hardy_norm,
    kernel_constant,
    lattice_cells,
    lp_norm,
    seminorm_p,
    seminorm_wsp,
)


class _Everywhere:
    """A region without holes; forces the general (non box) code path."""

    name = "everywhere"

    def contains(self, P):
        return np.ones(len(np.atleast_2d(P)), dtype=bool)


def brute_seminorm_p(f):
    """All-pairs numpy evaluation of the truncated midpoint sum."""
    c, v = f.centers, f.values
    s, p, d = f.params.s, f.params.p, f.d
    diff = c[:, None, :] - c[None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1))
    mask = (r > 0) & (r < 1)
    k = np.zeros_like(r)
    k[mask] = r[mask] ** (-(s * p + d))
    return float(np.sum(np.abs(v[:, None] - v[None, :]) ** p * k) * f.h ** (2 * d))


def _fn(level, s=0.5, p=2.0, region=None, window=Box((0.0, 0.0), (1.25, 0.75)), func=None, seed=0):
    rng = np.random.default_rng(seed)
    cells = lattice_cells(region, level, window)
    vals = rng.normal(size=len(cells)) if func is None else func((cells + 0.5) * 2.0**-level)
    return GridFunction(region, level, window, cells, vals, FractionalParams(s, p, 2))


# -- one dimension: closed forms -------------------------------------------------


def _interval_x(level, p=2.0):
    R = builtin_geometry("interval_with_endpoint_D", level)
    return GridFunction.from_function(R, level, FractionalParams(0.5, p, 1), lambda x: x[:, 0])


def test_d1_seminorm_of_identity():
    # the midpoint sum misses exactly the diagonal: 1 - h
    errs = []
    for L in range(6, 12):
        f = _interval_x(L)
        assert len(f) == 2**L
        val = seminorm_wsp(f)
        assert val == pytest.approx(math.sqrt(1 - 2.0**-L), rel=1e-12)
        errs.append(abs(val - 1.0))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_d1_hardy_of_identity():
    f = _interval_x(11)
    rep = hardy_norm(f)
    assert rep.value == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert not rep.divergence_suspected


def test_d1_constant_is_flagged():
    R = builtin_geometry("interval_with_endpoint_D", 10)
    f = GridFunction.from_function(R, 10, FractionalParams(0.5, 2.0, 1), lambda x: np.ones(len(x)))
    rep = hardy_norm(f)
    assert rep.divergence_suspected and rep.flagged_cells == 1
    assert rep.sums[0] < rep.sums[1] < rep.sums[2]
    assert seminorm_p(f) == 0.0


def test_lp_norms():
    D = builtin_geometry("disk", 9)
    one = GridFunction.from_function(D, 9, FractionalParams(0.5, 1.0, 2), lambda x: np.ones(len(x)))
    assert lp_norm(one) == pytest.approx(math.pi, rel=2e-3)
    assert lp_norm(_interval_x(10)) == pytest.approx(1 / math.sqrt(3), rel=1e-6)


# -- brute-force oracle in two dimensions ---------------------------------------


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0, 3.0])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.9])
def test_pair_sum_matches_all_pairs(s, p):
    f = _fn(5, s, p, region=_Everywhere())
    ref = brute_seminorm_p(f)
    assert seminorm_p(f) == pytest.approx(ref, rel=1e-11)
    assert seminorm_p(f, symmetric=False) == pytest.approx(ref, rel=1e-11)


def test_pair_sum_on_a_disk_with_zeros():
    D = builtin_geometry("disk", 4)
    f = GridFunction.from_function(D, 4, FractionalParams(0.5, 1.5, 2), lambda x: np.maximum(x[:, 0], 0.0))
    assert (f.values == 0).sum() > 0
    assert seminorm_p(f) == pytest.approx(brute_seminorm_p(f), rel=1e-11)


def test_box_shortcut_equals_general_path():
    window = Box((0.0, 0.0), (1.25, 0.75))
    sparse = lambda x: np.where(x[:, 0] < 0.4, np.sin(7 * x[:, 1]) + 0.2, 0.0)  # noqa: E731
    a = _fn(5, region=None, window=window, func=sparse)
    b = _fn(5, region=_Everywhere(), window=window, func=sparse)
    assert seminorm_p(a) == pytest.approx(seminorm_p(b), rel=1e-12)
    assert seminorm_p(a) == pytest.approx(brute_seminorm_p(a), rel=1e-11)


def test_cross_term_matches_all_pairs():
    f = _fn(4, region=_Everywhere(), window=Box((0.0, 0.0), (0.5, 0.5)))
    other = lattice_cells(None, 4, Box((0.5, 0.0), (1.0, 0.75)))
    c, o = f.centers, (other + 0.5) * f.h
    r = np.linalg.norm(c[:, None] - o[None], axis=-1)
    k = np.where(r < 1, r ** -(f.params.sp + 2), 0.0)
    ref = float(np.sum(np.abs(f.values)[:, None] ** 2 * k) * f.h**4)
    assert cross_term_p(f, other) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3), p=st.sampled_from([0.5, 1.0, 2.0]))
def test_homogeneity(alpha, p):
    f = _fn(4, p=p, region=_Everywhere(), window=Box((0.0, 0.0), (0.75, 0.5)), seed=3)
    assert seminorm_p(f.scaled(alpha)) == pytest.approx(abs(alpha) ** p * seminorm_p(f), rel=1e-10)
    assert lp_norm(f.scaled(alpha)) == pytest.approx(abs(alpha) * lp_norm(f), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(shift=st.tuples(st.integers(-20, 20), st.integers(-20, 20)))
def test_lattice_translation_invariance(shift):
    f = _fn(4, region=None, window=Box((0.0, 0.0), (0.5, 0.5)), seed=4)
    moved = GridFunction(_Everywhere(), 4, f.window, f.cells + np.array(shift), f.values, f.params)
    assert seminorm_p(moved) == pytest.approx(seminorm_p(f), rel=1e-12)


def test_csv_roundtrip(tmp_path):
    D = builtin_geometry("disk", 5)
    f = GridFunction.from_function(D, 5, FractionalParams(0.3, 1.5, 2), lambda x: np.sin(x[:, 0]) / 3)
    f.to_csv(tmp_path / "f.csv", extra={"note": "x"})
    g = GridFunction.from_csv(tmp_path / "f.csv", D)
    g.validate()
    assert np.array_equal(f.cells, g.cells) and np.array_equal(f.values, g.values)
    assert g.params == f.params and g.level == 5


def test_validate_rejects_foreign_cells():
    D = builtin_geometry("disk", 5)
    f = GridFunction.from_function(D, 5, FractionalParams(0.5, 2.0, 2), lambda x: x[:, 0])
    bad = GridFunction(D, 5, f.window, f.cells[1:], f.values[1:], f.params)
    with pytest.raises(DomainError):
        bad.validate()
    with pytest.raises(DomainError):
        GridFunction(D, 5, f.window, f.cells, f.values[1:], f.params)


# -- Hardy term and kernel integrals --------------------------------------------


def test_hardy_trivial_cases():
    H = builtin_geometry("halfplane", 6)
    f = GridFunction.from_function(H, 6, FractionalParams(0.5, 2.0, 2), lambda x: np.ones(len(x)))
    assert hardy_norm(f).value == 0.0
    C = builtin_geometry("cusp_touching_halfplane", 6)
    z = GridFunction.from_function(C, 6, FractionalParams(0.5, 2.0, 2), lambda x: np.zeros(len(x)))
    assert hardy_norm(z).value == 0.0


def test_hardy_against_quadrature_in_the_plane():
    # f = 1 on {0 < y < 1/2} x (0, 1/2) with D = {y = 0}: integral of y^-1/2 = 2 sqrt(1/2) / 2
    D = PointCloudSet(np.stack([np.linspace(-1, 2, 3 * 2**10 + 1), np.zeros(3 * 2**10 + 1)], axis=1), 9)
    f = _fn(9, s=0.25, p=2.0, region=None, window=Box((0.0, 0.0), (0.5, 0.5)), func=lambda x: np.ones(len(x)))
    exact = 0.5 * 2 * math.sqrt(0.5)
    h = 2.0**-9
    y = (np.arange(2**8) + 0.5) * h
    midpoint = 0.5 * math.fsum(h * y**-0.5)
    got = hardy_norm(f, D).value ** 2
    assert got == pytest.approx(midpoint, rel=1e-12)
    # the singular first row costs (2 - sqrt 2) sqrt h per unit length
    assert abs(got - exact) < 0.35 * math.sqrt(h)


def test_annulus_closed_form():
    par = FractionalParams(0.5, 2.0, 2)
    for a in (0.25, 0.1):
        val = hardy_kernel_integral((0.0, 0.0), lambda P: np.linalg.norm(P, axis=1) > a, par, 10)
        assert val == pytest.approx(annulus_integral(a, par), rel=2e-3)
    assert kernel_constant(par) == pytest.approx(2 * math.pi * 2.0 / 1.0)


def test_kernel_integral_errors_and_far_targets(fat_cusp8):
    par = FractionalParams(0.5, 2.0, 2)
    with pytest.raises(DomainError):
        hardy_kernel_integral((-0.5, 0.3), fat_cusp8, par, 8)
    assert hardy_kernel_integral((0.0, 0.0), lambda P: np.zeros(len(P), bool), par, 8) == 0.0


def test_kernel_bound_on_cusp(fat_cusp8):
    par = FractionalParams(0.5, 2.0, 2)
    rng = np.random.default_rng(1)
    P = rng.uniform(-1, 1, size=(4000, 2))
    P = P[fat_cusp8.base.contains(P)][:20]
    C = kernel_constant(par)
    for x in P:
        dist = fat_cusp8.base.dist_D(x[None])[0]
        assert hardy_kernel_integral(x, fat_cusp8, par, 8) <= C * dist ** (-par.sp)
