"""Tile utility model for octree-coded point-cloud video.

A tile is a sub-octree of fixed physical side length. Delivering deeper
octree levels (higher level of detail, LoD) raises the tile's angular
resolution on the viewer's retina; perceived per-degree quality grows
logarithmically with angular resolution and saturates at the human acuity
limit of ~60 points per degree. The byte cost of reaching LoD H follows
H(r) = a*log(b*r + 1) with tile-dependent coefficients (a, b), so tile
utility as a function of delivered bytes r and viewing distance d is

    Q(r, d) = (M/d) * (a*ln2*log(b*r + 1) + log(c*d/M)),   M = width*180/pi

which is concave and nondecreasing in r for fixed d. Q may be negative at
r = 0 and is deliberately not clamped: the rate allocator consumes only
marginals and bounds, and clamping would distort the optimality cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LOG2 = math.log(2.0)

# Poses closer to a tile than this are treated as being at this distance,
# which keeps 1/d and log(d) finite when a trace pose intersects a tile.
MIN_VIEW_DISTANCE = 0.05


class FitError(ValueError):
    """Rate/LoD samples are too degenerate to support a coefficient fit."""


@dataclass(frozen=True)
class UtilityConstants:
    """Perceptual constants shared by all tiles.

    ``saturation`` is chosen so that per-degree quality log(saturation * f_ang)
    peaks exactly at the acuity limit: with the defaults,
    saturation * acuity_limit == e.
    """

    saturation: float = math.e / 60.0
    acuity_limit: float = 60.0


@dataclass(frozen=True, slots=True)
class TileMeta:
    """Per-tile, per-frame coding metadata.

    ``lod_sizes[h]`` is the cumulative byte cost of delivering LoD levels
    1..h+1; the last entry equals ``max_rate``. ``center`` and ``width`` place
    the tile in the video cube (metres).
    """

    frame_index: int
    tile_id: tuple[int, int, int]
    a: float
    b: float
    max_rate: float
    lod_sizes: tuple[float, ...]
    center: tuple[float, float, float]
    width: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"tile coefficients must be positive, got a={self.a}, b={self.b}")
        if self.width <= 0:
            raise ValueError(f"tile width must be positive, got {self.width}")
        if not self.lod_sizes:
            raise ValueError("lod_sizes must be non-empty")
        if any(s2 < s1 for s1, s2 in zip(self.lod_sizes, self.lod_sizes[1:])):
            raise ValueError("lod_sizes must be nondecreasing")
        if not math.isclose(self.lod_sizes[-1], self.max_rate, rel_tol=1e-9, abs_tol=1e-6):
            raise ValueError("lod_sizes[-1] must equal max_rate")


@dataclass
class PointCloudVideo:
    """A sequence of frames, each a list of TileMeta sorted by tile_id."""

    cube_height: float
    tile_level: int
    lod_count: int
    frames: list[list[TileMeta]]

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def tile_width(self) -> float:
        return self.cube_height / (2 ** self.tile_level)

    def tiles_for(self, frame_index: int) -> list[TileMeta]:
        return self.frames[frame_index]


def angle_span_scale(width: float) -> float:
    """Scale M (degree*metres): a tile of side `width` subtends M/d degrees at distance d."""
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    return width * 180.0 / math.pi


def angular_resolution(lod_level: float, distance: float, width: float) -> float:
    """Points per degree delivered by LoD `lod_level` viewed from `distance`.

    A tile at LoD H carries 2^H points per axis across its angular span, so
    the resolution is d * 2^H * pi / (width * 180).
    """
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    if lod_level < 0:
        raise ValueError(f"lod_level must be nonnegative, got {lod_level}")
    return distance * (2.0 ** lod_level) * math.pi / (width * 180.0)


def rate_to_lod(rate: float, a: float, b: float) -> float:
    """Fractional LoD reached by `rate` bytes: a*log(b*rate + 1)."""
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    return a * math.log1p(b * rate)


def lod_to_rate(lod_level: float, a: float, b: float) -> float:
    """Bytes needed to reach `lod_level`; inverse of rate_to_lod."""
    if lod_level < 0:
        raise ValueError(f"lod_level must be nonnegative, got {lod_level}")
    return math.expm1(lod_level / a) / b


def tile_utility(rate: float, distance: float, tile: TileMeta,
                 consts: UtilityConstants = UtilityConstants()) -> float:
    """Utility of a tile delivered at `rate` bytes and viewed from `distance` metres.

    Distances below MIN_VIEW_DISTANCE are clamped before evaluation. The value
    may be negative at low rates.
    """
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    d = max(distance, MIN_VIEW_DISTANCE)
    m = angle_span_scale(tile.width)
    return (m / d) * (tile.a * LOG2 * math.log1p(tile.b * rate)
                      + math.log(consts.saturation * d / m))


def marginal_tile_utility(rate: float, distance: float, tile: TileMeta,
                          consts: UtilityConstants = UtilityConstants()) -> float:
    """dQ/dr at `rate`: (M/d) * a * ln2 * b / (b*rate + 1); strictly positive, decreasing."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    d = max(distance, MIN_VIEW_DISTANCE)
    m = angle_span_scale(tile.width)
    return (m / d) * tile.a * LOG2 * tile.b / (tile.b * rate + 1.0)


def per_degree_quality(f_ang: float, consts: UtilityConstants = UtilityConstants()) -> float:
    """Quality per degree at angular resolution `f_ang`: log(saturation * f_ang).

    Equals exactly 1 at the acuity limit with the default constants.
    """
    if f_ang <= 0:
        raise ValueError(f"angular resolution must be positive, got {f_ang}")
    return math.log(consts.saturation * f_ang)


def _fit_a_for_b(rates: np.ndarray, lods: np.ndarray, b: float) -> tuple[float, float]:
    """Closed-form least-squares `a` for fixed `b`; returns (a, sse)."""
    x = np.log1p(b * rates)
    denom = float(np.dot(x, x))
    if denom <= 0.0:
        return 0.0, float(np.dot(lods, lods))
    a = float(np.dot(lods, x)) / denom
    resid = lods - a * x
    return a, float(np.dot(resid, resid))


def fit_rate_lod(samples: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares fit of LoD = a*log(b*rate + 1) over (rate, lod) samples.

    Grid search over b (log-spaced, scale set by the largest rate) followed by
    golden-section refinement; `a` is solved in closed form at each b. The
    returned residual is never worse than the best grid point.
    """
    rates = np.asarray([s[0] for s in samples], dtype=float)
    lods = np.asarray([s[1] for s in samples], dtype=float)
    if rates.size < 2 or np.unique(rates).size < 2:
        raise FitError("need at least two samples with distinct rates")
    if np.any(rates < 0):
        raise FitError("rates must be nonnegative")
    if np.any(lods < 0):
        raise FitError("LoD levels must be nonnegative")
    if np.any((rates == 0) & (lods != 0)):
        raise FitError("a zero-rate sample must map to LoD 0")
    if not np.any(lods > 0):
        raise FitError("all LoD values are zero; coefficient a>0 cannot be fit")

    max_rate = float(rates.max())
    # b*max_rate spans twelve decades around the plausible e^(H/a)-1 range.
    grid = np.logspace(-6.0, 6.0, 481) / max_rate
    sses = np.array([_fit_a_for_b(rates, lods, b)[1] for b in grid])
    best = int(np.argmin(sses))

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    # Golden-section on log(b) within the bracketing grid cell.
    llo, lhi = math.log(lo), math.log(hi)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    m1 = lhi - invphi * (lhi - llo)
    m2 = llo + invphi * (lhi - llo)
    f1 = _fit_a_for_b(rates, lods, math.exp(m1))[1]
    f2 = _fit_a_for_b(rates, lods, math.exp(m2))[1]
    for _ in range(120):
        if f1 <= f2:
            lhi, m2, f2 = m2, m1, f1
            m1 = lhi - invphi * (lhi - llo)
            f1 = _fit_a_for_b(rates, lods, math.exp(m1))[1]
        else:
            llo, m1, f1 = m1, m2, f2
            m2 = llo + invphi * (lhi - llo)
            f2 = _fit_a_for_b(rates, lods, math.exp(m2))[1]
    b_star = math.exp((llo + lhi) / 2.0)
    a_star, sse = _fit_a_for_b(rates, lods, b_star)
    if sse > sses[best]:
        b_star = float(grid[best])
        a_star, sse = _fit_a_for_b(rates, lods, b_star)
    if a_star <= 0:
        raise FitError("fit produced non-positive coefficient a")
    return a_star, b_star


def rate_lod_residual(samples: Sequence[tuple[float, float]], a: float, b: float) -> float:
    """Sum of squared LoD residuals of the fit (a, b) over the samples."""
    rates = np.asarray([s[0] for s in samples], dtype=float)
    lods = np.asarray([s[1] for s in samples], dtype=float)
    resid = lods - a * np.log1p(b * rates)
    return float(np.dot(resid, resid))
