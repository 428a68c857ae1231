"""Test functions with a vanishing trace on D, and controls that lack one.

Positions and radii are given as fractions of the region's window, so the
same specification makes sense on every planar geometry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import FractionalParams, RegionSpec
from .norms import GridFunction

__all__ = ["FAMILIES", "CorpusSpec", "generate", "default_corpus", "bump"]

FAMILIES = ("hardy_power", "smooth_bump", "random_trig", "indicator_negative_control")


def bump(x: np.ndarray, centre, radius: float) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - t^2)), t = |x - centre| / radius; 1 at the centre."""
    t2 = np.sum((x - np.asarray(centre, dtype=float)) ** 2, axis=1) / radius**2
    out = np.zeros(len(x))
    ok = t2 < 1.0
    out[ok] = np.exp(1.0 - 1.0 / (1.0 - t2[ok]))
    return out


@dataclass(frozen=True)
class CorpusSpec:
    """One corpus member.

    ``centre`` is in window coordinates scaled to [0, 1]^d and ``radius`` is
    a fraction of the window's shortest side. ``alpha`` defaults to s + 0.1.
    """

    family: str
    params: FractionalParams
    region: str
    alpha: float | None = None
    centre: tuple | None = None
    radius: float = 0.4
    seed: int = 0
    modes: int = 3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown corpus family {self.family!r}; choose one of {list(FAMILIES)}")

    @property
    def label(self) -> str:
        parts = [self.family]
        if self.alpha is not None:
            parts.append(f"alpha={self.alpha:g}")
        if self.centre is not None:
            parts.append("at=" + ",".join(f"{c:g}" for c in self.centre))
        parts.append(f"r={self.radius:g}")
        if self.family == "random_trig":
            parts.append(f"seed={self.seed}")
        return ":".join(parts)


def _window_point(region: RegionSpec, frac) -> np.ndarray:
    lo, hi = np.asarray(region.window.lo), np.asarray(region.window.hi)
    frac = np.full(region.d, 0.5) if frac is None else np.asarray(frac, dtype=float)
    return lo + frac * (hi - lo)


def _window_length(region: RegionSpec, radius: float) -> float:
    return radius * float(np.min(np.subtract(region.window.hi, region.window.lo)))


def _envelope(region, x, alpha, centre, radius):
    dist = region.dist_D(x)
    dist = np.where(np.isfinite(dist), dist, 1.0)
    return dist**alpha * bump(x, centre, radius)


def _trig(x: np.ndarray, seed: int, modes: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 2718])
    d = x.shape[1]
    out = np.full(len(x), 1.0)
    grids = np.stack(np.meshgrid(*[np.arange(-modes, modes + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    for k in grids:
        if not np.any(k):
            continue
        amp = rng.normal() / (1.0 + float(np.dot(k, k)))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += amp * np.cos(2.0 * np.pi * (x @ k) + phase)
    return out


def generate(spec: CorpusSpec, region: RegionSpec, level: int) -> GridFunction:
    """Sample the corpus member on the region's cells inside its window."""
    if spec.region != region.name:
        raise ConfigError(f"spec is for {spec.region!r}, region is {region.name!r}")
    centre = _window_point(region, spec.centre)
    radius = _window_length(region, spec.radius)
    alpha = spec.params.s + 0.1 if spec.alpha is None else spec.alpha
    if spec.family == "hardy_power":
        func = lambda x: _envelope(region, x, alpha, centre, radius)  # noqa: E731
    elif spec.family == "smooth_bump":
        if np.isfinite(region.dist_D(centre[None, :])[0]) and region.dist_D(centre[None, :])[0] <= radius:
            raise ConfigError(f"smooth bump {spec.label} reaches D")
        func = lambda x: bump(x, centre, radius)  # noqa: E731
    elif spec.family == "random_trig":
        func = lambda x: _trig(x, spec.seed, spec.modes) * _envelope(region, x, alpha, centre, radius)  # noqa: E731
    else:
        mid = 0.5 * (region.window.lo[0] + region.window.hi[0])
        func = lambda x: (x[:, 0] < mid).astype(float)  # noqa: E731
    return GridFunction.from_function(region, level, spec.params, func)


def default_corpus(region: RegionSpec, params: FractionalParams) -> list[CorpusSpec]:
    """Twenty functions in the vanishing-trace class on a planar region."""
    name = region.name
    specs = [CorpusSpec("hardy_power", params, name, alpha=a, radius=0.4) for a in (0.6, 0.8, 1.0, 1.5)]
    for c in ((0.3, 0.5), (0.7, 0.7), (0.65, 0.25)):
        specs.append(CorpusSpec("hardy_power", params, name, alpha=0.6, centre=c, radius=0.25))
    for c in ((0.75, 0.5), (0.7, 0.7), (0.8, 0.35)):
        specs.append(CorpusSpec("smooth_bump", params, name, centre=c, radius=0.15))
    for c in ((0.5, 0.8), (0.5, 0.2)):
        specs.append(CorpusSpec("smooth_bump", params, name, centre=c, radius=0.2))
    for seed in range(8):
        specs.append(CorpusSpec("random_trig", params, name, seed=seed, radius=0.4))
    return specs
