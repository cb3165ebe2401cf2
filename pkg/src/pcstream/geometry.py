"""Cube tiling, view-frustum visibility, and viewer-tile distances.

The video cube spans [0, cube_height]^3 and is partitioned into 2^L cells per
axis at the tile level L. Visibility uses a symmetric square frustum around
the pose's forward axis: a tile is visible iff its center lies in front of the
viewer and within the half-angle on both view axes. Roll is ignored for the
frustum test (a square frustum rotated by roll covers the same centers up to
corner effects), and the test is a center-point test rather than a
box-frustum intersection; both choices are documented trade-offs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import MIN_VIEW_DISTANCE


class ConfigError(ValueError):
    """Tiling configuration and occupancy grid disagree."""


def normalize_angle(deg: float) -> float:
    """Map an angle in degrees to [-180, 180)."""
    return (deg + 180.0) % 360.0 - 180.0


@dataclass(frozen=True, slots=True)
class Pose6DoF:
    """Viewer position (metres) and orientation (degrees) at a frame.

    Angles are normalized to [-180, 180) on construction.
    """

    frame_index: int
    x: float
    y: float
    z: float
    yaw: float
    pitch: float
    roll: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        object.__setattr__(self, "pitch", normalize_angle(self.pitch))
        object.__setattr__(self, "roll", normalize_angle(self.roll))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class TilingConfig:
    """Static tiling and viewing constants of a streaming session."""

    cube_height: float = 1.8
    tile_level: int = 4
    lod_count: int = 6
    base_layer_level: int | None = None
    fov_span_deg: float = 90.0

    def __post_init__(self) -> None:
        if self.tile_level < 1:
            raise ConfigError(f"tile_level must be >= 1, got {self.tile_level}")
        if self.lod_count < 1:
            raise ConfigError(f"lod_count must be >= 1, got {self.lod_count}")
        if not (0.0 < self.fov_span_deg < 180.0):
            raise ConfigError(f"fov_span_deg must be in (0, 180), got {self.fov_span_deg}")
        if self.cube_height <= 0:
            raise ConfigError(f"cube_height must be positive, got {self.cube_height}")
        if self.base_layer_level is None:
            object.__setattr__(self, "base_layer_level", self.tile_level + 1)

    @property
    def cells_per_axis(self) -> int:
        return 2 ** self.tile_level

    @property
    def tile_width(self) -> float:
        return self.cube_height / self.cells_per_axis

    def cell_center(self, tile_id: tuple[int, int, int]) -> tuple[float, float, float]:
        w = self.tile_width
        return ((tile_id[0] + 0.5) * w, (tile_id[1] + 0.5) * w, (tile_id[2] + 0.5) * w)


@dataclass(frozen=True, slots=True)
class TileCell:
    """An occupied tile cell: octree coordinates and center position."""

    tile_id: tuple[int, int, int]
    center: tuple[float, float, float]


def enumerate_tiles(cfg: TilingConfig, occupancy: np.ndarray) -> list[TileCell]:
    """Occupied cells of the boolean grid as TileCells, sorted by tile_id."""
    occupancy = np.asarray(occupancy)
    n = cfg.cells_per_axis
    if occupancy.shape != (n, n, n):
        raise ConfigError(
            f"occupancy grid shape {occupancy.shape} does not match {n}^3 cells at tile level {cfg.tile_level}")
    cells = []
    for tx, ty, tz in zip(*np.nonzero(occupancy)):
        tid = (int(tx), int(ty), int(tz))
        cells.append(TileCell(tid, cfg.cell_center(tid)))
    return cells


def view_basis(pose: Pose6DoF) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward/right/up unit vectors of the pose (z-up; roll ignored)."""
    cy, sy = math.cos(math.radians(pose.yaw)), math.sin(math.radians(pose.yaw))
    cp, sp = math.cos(math.radians(pose.pitch)), math.sin(math.radians(pose.pitch))
    forward = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    up = np.array([-sp * cy, -sp * sy, cp])
    return forward, right, up


def visible_mask(pose: Pose6DoF, centers: np.ndarray, cfg: TilingConfig) -> np.ndarray:
    """Boolean frustum-visibility mask over an (N, 3) array of tile centers."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    forward, right, up = view_basis(pose)
    v = centers - pose.position
    vf = v @ forward
    half_tan = math.tan(math.radians(cfg.fov_span_deg / 2.0))
    limit = vf * half_tan
    return (vf > 0.0) & (np.abs(v @ right) <= limit) & (np.abs(v @ up) <= limit)


def visible_tiles(pose: Pose6DoF, tiles: Iterable, cfg: TilingConfig) -> set[tuple[int, int, int]]:
    """Tile ids whose centers fall inside the pose's square frustum."""
    tiles = list(tiles)
    if not tiles:
        return set()
    centers = np.array([t.center for t in tiles], dtype=float)
    mask = visible_mask(pose, centers, cfg)
    return {tiles[i].tile_id for i in np.nonzero(mask)[0]}


def tile_distance(pose: Pose6DoF, tile) -> float:
    """Euclidean viewer-to-tile-center distance, clamped to MIN_VIEW_DISTANCE."""
    d = math.dist((pose.x, pose.y, pose.z), tuple(tile.center))
    return max(d, MIN_VIEW_DISTANCE)


def tile_distances(pose: Pose6DoF, centers: np.ndarray) -> np.ndarray:
    """Clamped distances from the pose to each row of an (N, 3) center array."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    d = np.linalg.norm(centers - pose.position, axis=1)
    return np.maximum(d, MIN_VIEW_DISTANCE)


def visibility_probability(pose: Pose6DoF, centers: np.ndarray, cfg: TilingConfig,
                           pos_std: float = 0.05, angle_std: float = 5.0,
                           n_samples: int = 16,
                           rng: np.random.Generator | None = None) -> np.ndarray:
    """View probability per tile as the visibility frequency over perturbed poses.

    Ensemble alternative to the default binary visibility: the pose is jittered
    n_samples times with Gaussian position/angle noise and visibility averaged.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    total = np.zeros(centers.shape[0])
    for _ in range(n_samples):
        jp = rng.normal(0.0, pos_std, size=3)
        ja = rng.normal(0.0, angle_std, size=2)
        sample = Pose6DoF(pose.frame_index,
                          pose.x + jp[0], pose.y + jp[1], pose.z + jp[2],
                          pose.yaw + ja[0], pose.pitch + ja[1], pose.roll)
        total += visible_mask(sample, centers, cfg)
    return total / n_samples
