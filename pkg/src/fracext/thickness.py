"""Monte-Carlo certification of interior thickness (measure density) conditions.

A region ``E`` is anything with ``contains(points)``, ``d``, ``level`` and a
``core`` box (RegionSpec and FattenedDomain both qualify). Every (center,
radius) sample gets its own generator seeded by ``(seed, sample_id)``, so a
report can be recomputed on any subset of its samples bit-for-bit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import Box, PointCloudSet

__all__ = [
    "ThicknessReport",
    "Lemma22Report",
    "measure_density",
    "check_itc_in",
    "check_itc",
    "check_degenerate_itc",
    "lemma22_consistency",
]

DEFAULT_MC = 10_000
_BATCH_POINTS = 2_000_000


def _ball_points(rng: np.random.Generator, x: np.ndarray, r: float, n: int) -> np.ndarray:
    d = x.shape[0]
    if d == 1:
        return x + r * rng.uniform(-1.0, 1.0, size=(n, 1))
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rho = r * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return x + rho * u


def _densities(E, centers, radii, ids, n_mc, seed) -> np.ndarray:
    out = np.empty(len(radii))
    per_batch = max(1, _BATCH_POINTS // n_mc)
    for a in range(0, len(radii), per_batch):
        b = min(len(radii), a + per_batch)
        pts = [
            _ball_points(np.random.default_rng([seed, int(ids[k])]), centers[k], radii[k], n_mc)
            for k in range(a, b)
        ]
        hit = E.contains(np.vstack(pts)).reshape(b - a, n_mc)
        out[a:b] = hit.mean(axis=1)
    return out


def measure_density(E, x, r: float, n_mc: int = DEFAULT_MC, seed: int = 0) -> float:
    """Estimate |B(x, r) & E| / |B(x, r)|; standard error at most 1 / (2 sqrt(n_mc))."""
    if r <= 0:
        raise DomainError(f"radius must be positive, got {r}")
    if n_mc < 1000:
        raise DomainError(f"n_mc must be at least 1000, got {n_mc}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(_densities(E, x, np.array([float(r)]), np.array([0]), n_mc, seed)[0])


@dataclass(frozen=True, eq=False)
class ThicknessReport:
    centers: np.ndarray
    radii: np.ndarray
    densities: np.ndarray
    protocol: dict = field(default_factory=dict)
    skipped: int = 0

    @property
    def inf_density(self) -> float:
        return float(self.densities.min()) if len(self.densities) else math.inf

    @property
    def argmin(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.densities))
        return self.centers[k], float(self.radii[k])

    def verdict(self, threshold: float) -> bool:
        return self.inf_density >= threshold

    def summary(self, threshold: float | None = None) -> dict:
        out = {
            "inf_density": self.inf_density,
            "n_samples": int(len(self.densities)),
            "skipped_centers": int(self.skipped),
            "protocol": self.protocol,
        }
        if len(self.densities):
            c, r = self.argmin
            out["argmin"] = {"center": [float(v) for v in c], "radius": r}
        if threshold is not None:
            out["threshold"] = threshold
            out["verdict"] = "PASS" if self.verdict(threshold) else "FAIL"
        return out

    def to_csv(self, path, comment: str | None = None) -> None:
        d = self.centers.shape[1] if self.centers.ndim == 2 else 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{a + 1}" for a in range(d)] + ["radius", "density"])
            for c, r, v in zip(self.centers, self.radii, self.densities):
                w.writerow([repr(float(t)) for t in c] + [repr(float(r)), repr(float(v))])

    def to_json(self, path, threshold: float | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(threshold), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _bias_weights(points: np.ndarray, bias_point, floor: float) -> np.ndarray:
    if bias_point is None:
        return None
    dist = np.linalg.norm(points - np.asarray(bias_point, dtype=float), axis=1)
    w = 1.0 / np.maximum(dist, floor)
    return w / w.sum()


def _pick_from_cloud(F: PointCloudSet, n, rng, box: Box, bias_point, floor) -> np.ndarray:
    pts = F.points[box.contains(F.points)]
    if len(pts) == 0:
        raise DomainError("no boundary samples to centre balls on")
    w = _bias_weights(pts, bias_point, floor)
    idx = rng.choice(len(pts), size=n, replace=n > len(pts), p=w)
    return pts[idx]


def _radius_floor(E) -> float:
    return 2.0 ** (-E.level + 2)


def _protocol(E, F, n_centers, n_radii, seed, n_mc, bias_point, box) -> tuple[dict, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 7919])
    centers = _pick_from_cloud(F, n_centers, rng, box, bias_point, 2.0 ** (-E.level - 1))
    r_min = _radius_floor(E)
    radii = np.exp(rng.uniform(math.log(r_min), 0.0, size=(n_centers, n_radii)))
    meta = {
        "centers": n_centers,
        "radii_per_center": n_radii,
        "radius_range": [r_min, 1.0],
        "n_mc": n_mc,
        "seed": seed,
        "bias_point": None if bias_point is None else [float(v) for v in bias_point],
        "center_box": box.to_dict(),
    }
    return meta, centers, radii


def check_itc_in(
    E,
    F: PointCloudSet,
    centers: int = 200,
    radii: int = 20,
    seed: int = 0,
    n_mc: int = DEFAULT_MC,
    bias_point=None,
    box: Box | None = None,
) -> ThicknessReport:
    """Density of E in balls centred on samples of F (a piece of the boundary of E)."""
    if len(F) == 0:
        raise DomainError("F is empty")
    box = E.core if box is None else box
    meta, ctr, rad = _protocol(E, F, centers, radii, seed, n_mc, bias_point, box)
    meta["kind"] = "itc_in"
    C = np.repeat(ctr, radii, axis=0)
    R = rad.reshape(-1)
    ids = np.arange(len(R))
    return ThicknessReport(C, R, _densities(E, C, R, ids, n_mc, seed), meta)


def _interior_centers(E, n, rng, box: Box, boundary: PointCloudSet, bias_point) -> np.ndarray:
    d = box.d
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    n_uniform = n // 2
    found = []
    for _ in range(200):
        cand = rng.uniform(lo, hi, size=(max(4 * n, 1000), d))
        found.extend(cand[E.contains(cand)])
        if len(found) >= n_uniform:
            break
    uniform = np.asarray(found[:n_uniform]).reshape(-1, d)
    # the rest: points pushed off the boundary by log-uniform offsets, so thin
    # parts (cusp tips) get centres at every scale
    near = []
    floor = 2.0 ** (-2 * E.level)
    for _ in range(200):
        base = _pick_from_cloud(boundary, n, rng, box, bias_point, 2.0 ** (-E.level - 1))
        step = np.exp(rng.uniform(math.log(floor), 0.0, size=(n, 1)))
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        cand = base + step * u
        ok = E.contains(cand) & box.contains(cand)
        near.extend(cand[ok])
        if len(uniform) + len(near) >= n:
            break
    out = np.vstack([uniform, np.asarray(near).reshape(-1, d)])[:n]
    if len(out) == 0:
        raise DomainError("could not sample any interior centre")
    return out


def check_itc(
    E,
    centers: int = 200,
    radii: int = 20,
    seed: int = 0,
    n_mc: int = DEFAULT_MC,
    bias_point=None,
    box: Box | None = None,
    boundary: PointCloudSet | None = None,
) -> ThicknessReport:
    """Density of E in balls centred inside E itself."""
    box = E.core if box is None else box
    boundary = E.boundary_cloud if boundary is None else boundary
    rng = np.random.default_rng([seed, 104729])
    ctr = _interior_centers(E, centers, rng, box, boundary, bias_point)
    r_min = _radius_floor(E)
    rad = np.exp(rng.uniform(math.log(r_min), 0.0, size=(len(ctr), radii)))
    C = np.repeat(ctr, radii, axis=0)
    R = rad.reshape(-1)
    meta = {
        "kind": "itc",
        "centers": int(len(ctr)),
        "radii_per_center": radii,
        "radius_range": [r_min, 1.0],
        "n_mc": n_mc,
        "seed": seed,
        "bias_point": None if bias_point is None else [float(v) for v in bias_point],
        "center_box": box.to_dict(),
    }
    return ThicknessReport(C, R, _densities(E, C, R, np.arange(len(R)), n_mc, seed), meta)


def check_degenerate_itc(
    O,
    N: PointCloudSet,
    D: PointCloudSet,
    centers: int = 200,
    radii: int = 20,
    seed: int = 0,
    n_mc: int = DEFAULT_MC,
    bias_point=None,
    box: Box | None = None,
) -> ThicknessReport:
    """Thickness in N with radii capped by min(1, dist_D(x)).

    Draws exactly the samples ``check_itc_in(O, N, ...)`` would draw and keeps
    those obeying the cap, so its infimum can only be larger.
    """
    if len(N) == 0:
        raise DomainError("N is empty")
    box = O.core if box is None else box
    meta, ctr, rad = _protocol(O, N, centers, radii, seed, n_mc, bias_point, box)
    meta["kind"] = "degenerate_itc"
    cap = np.minimum(1.0, D.dist(ctr)) if len(D) else np.ones(len(ctr))
    r_min = _radius_floor(O)
    below = cap < r_min
    keep = (rad <= cap[:, None]) & ~below[:, None]
    ids = np.flatnonzero(keep.reshape(-1))
    C = np.repeat(ctr, radii, axis=0)[ids]
    R = rad.reshape(-1)[ids]
    meta["kept_samples"] = int(len(ids))
    return ThicknessReport(C, R, _densities(O, C, R, ids, n_mc, seed), meta, skipped=int(below.sum()))


@dataclass(frozen=True)
class Lemma22Report:
    boundary_inf: float
    interior_inf: float
    tau: float
    weak_tau: float
    mc_tolerance: float

    @property
    def boundary_pass(self) -> bool:
        return self.boundary_inf >= self.tau

    @property
    def interior_pass(self) -> bool:
        return self.interior_inf >= self.tau

    @property
    def forward_ok(self) -> bool:
        """Boundary thickness tau implies interior thickness tau / 2^(d+1)."""
        return not self.boundary_pass or self.interior_inf >= self.weak_tau - self.mc_tolerance

    @property
    def backward_ok(self) -> bool:
        return not self.interior_pass or self.boundary_inf >= self.weak_tau - self.mc_tolerance

    @property
    def consistent(self) -> bool:
        return self.forward_ok and self.backward_ok

    def to_dict(self) -> dict:
        return {
            "boundary_inf": self.boundary_inf,
            "interior_inf": self.interior_inf,
            "tau": self.tau,
            "weak_tau": self.weak_tau,
            "boundary_pass": self.boundary_pass,
            "interior_pass": self.interior_pass,
            "consistent": self.consistent,
        }


def lemma22_consistency(
    E,
    tau: float = 0.2,
    boundary: PointCloudSet | None = None,
    centers: int = 200,
    radii: int = 20,
    seed: int = 0,
    n_mc: int = DEFAULT_MC,
    bias_point=None,
) -> Lemma22Report:
    """Run boundary- and interior-centred checks and compare their verdicts."""
    boundary = E.boundary_cloud if boundary is None else boundary
    b = check_itc_in(E, boundary, centers, radii, seed, n_mc, bias_point)
    i = check_itc(E, centers, radii, seed, n_mc, bias_point, boundary=boundary)
    return Lemma22Report(
        boundary_inf=b.inf_density,
        interior_inf=i.inf_density,
        tau=tau,
        weak_tau=tau / 2 ** (E.d + 1),
        mc_tolerance=2.0 / math.sqrt(n_mc),
    )
