"""Trace and tile-metadata file formats plus synthetic generators.

Three line-oriented text formats, each with a versioned header line:

FoV trace (``# fov-trace v1``)
    frame x y z yaw pitch roll        -- one line per wall-clock frame

Bandwidth trace (``# bw-trace v1``)
    t_seconds megabits_per_second     -- one line per round

Tile metadata (``# tile-meta v1 cube_height=H tile_level=L lod_count=N``)
    frame tx ty tz a b size_1 .. size_N   -- one line per tile per frame;
    size_h is the cumulative byte cost of LoD levels 1..h (nondecreasing,
    size_N is the tile's full-detail size)

Blank lines and ``#`` comments are tolerated anywhere. The generators stand in
for real capture datasets at desk scale and are pure functions of their seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Pose6DoF, TilingConfig, enumerate_tiles, normalize_angle
from .model import PointCloudVideo, TileMeta, lod_to_rate

FOV_HEADER = "# fov-trace v1"
BW_HEADER = "# bw-trace v1"
TILE_HEADER = "# tile-meta v1"

FOV_MODELS = ("static", "orbit", "random-walk")
BW_MODELS = ("constant", "step", "markov")


class TraceFormatError(ValueError):
    """Malformed trace file; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class BandwidthSample:
    t_seconds: float
    mbps: float

    @property
    def bytes_per_second(self) -> float:
        return self.mbps * 1e6 / 8.0


@dataclass(frozen=True)
class SyntheticVideoSpec:
    """Parameters for a synthetic tile-metadata set standing in for a coded capture."""

    frames: int
    occupancy_density: float = 0.3
    a_range: tuple[float, float] = (1.8, 2.6)
    b_range: tuple[float, float] = (5e-4, 2e-3)
    lod_count: int = 6
    seed: int = 0
    cube_height: float = 1.8
    tile_level: int = 4

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if not (0.0 < self.occupancy_density <= 1.0):
            raise ValueError(f"occupancy_density must be in (0, 1], got {self.occupancy_density}")
        for name, rng in (("a_range", self.a_range), ("b_range", self.b_range)):
            if not (0.0 < rng[0] <= rng[1]):
                raise ValueError(f"{name} must be positive and ordered, got {rng}")
        if self.lod_count < 1:
            raise ValueError(f"lod_count must be >= 1, got {self.lod_count}")


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield line_no, line


def _check_header(path, expected: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith(expected):
        raise TraceFormatError(path, 1, f"expected header {expected!r}, got {first!r}")
    return first


def save_fov_trace(path, poses: Sequence[Pose6DoF]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FOV_HEADER + "\n")
        for p in poses:
            fh.write(f"{p.frame_index} {p.x!r} {p.y!r} {p.z!r} {p.yaw!r} {p.pitch!r} {p.roll!r}\n")


def load_fov_trace(path) -> list[Pose6DoF]:
    _check_header(path, FOV_HEADER)
    poses = []
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 7:
            raise TraceFormatError(path, line_no, f"expected 7 fields, got {len(parts)}")
        try:
            poses.append(Pose6DoF(int(parts[0]), *(float(v) for v in parts[1:])))
        except ValueError as exc:
            raise TraceFormatError(path, line_no, str(exc)) from exc
    return poses


def save_bandwidth_trace(path, samples: Sequence[BandwidthSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(BW_HEADER + "\n")
        for s in samples:
            fh.write(f"{s.t_seconds!r} {s.mbps!r}\n")


def load_bandwidth_trace(path) -> list[BandwidthSample]:
    _check_header(path, BW_HEADER)
    samples = []
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise TraceFormatError(path, line_no, f"expected 2 fields, got {len(parts)}")
        try:
            samples.append(BandwidthSample(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise TraceFormatError(path, line_no, str(exc)) from exc
    return samples


def save_video(path, video: PointCloudVideo) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{TILE_HEADER} cube_height={video.cube_height!r} "
                 f"tile_level={video.tile_level} lod_count={video.lod_count}\n")
        for frame_tiles in video.frames:
            for t in frame_tiles:
                sizes = " ".join(repr(s) for s in t.lod_sizes)
                fh.write(f"{t.frame_index} {t.tile_id[0]} {t.tile_id[1]} {t.tile_id[2]} "
                         f"{t.a!r} {t.b!r} {sizes}\n")


def load_video(path) -> PointCloudVideo:
    header = _check_header(path, TILE_HEADER)
    fields = dict(part.split("=", 1) for part in header.split()[3:])
    try:
        cube_height = float(fields["cube_height"])
        tile_level = int(fields["tile_level"])
        lod_count = int(fields["lod_count"])
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(path, 1, f"bad tile-meta header: {exc}") from exc

    width = cube_height / (2 ** tile_level)
    frames: dict[int, list[TileMeta]] = {}
    for line_no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 6 + lod_count:
            raise TraceFormatError(path, line_no,
                                   f"expected {6 + lod_count} fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            tile_id = (int(parts[1]), int(parts[2]), int(parts[3]))
            a, b = float(parts[4]), float(parts[5])
            sizes = tuple(float(v) for v in parts[6:])
            center = ((tile_id[0] + 0.5) * width, (tile_id[1] + 0.5) * width,
                      (tile_id[2] + 0.5) * width)
            tile = TileMeta(frame, tile_id, a, b, sizes[-1], sizes, center, width)
        except ValueError as exc:
            raise TraceFormatError(path, line_no, str(exc)) from exc
        frames.setdefault(frame, []).append(tile)

    if not frames:
        raise TraceFormatError(path, 1, "tile-meta file has no records")
    n_frames = max(frames) + 1
    if sorted(frames) != list(range(n_frames)):
        missing = sorted(set(range(n_frames)) - set(frames))[:3]
        raise TraceFormatError(path, 1, f"missing tile records for frames {missing}")
    frame_lists = [sorted(frames[f], key=lambda t: t.tile_id) for f in range(n_frames)]
    return PointCloudVideo(cube_height, tile_level, lod_count, frame_lists)


def generate_fov_trace(model: str, frames: int, seed: int = 0, *,
                       cube_height: float = 1.8, radius: float = 1.5,
                       angular_speed_deg: float = 12.0, fps: int = 30,
                       pos_step: float = 0.004, yaw_step: float = 0.5,
                       pitch_step: float = 0.15, gaze_pull: float = 0.02,
                       box_half: float = 2.2) -> list[Pose6DoF]:
    """Synthetic viewer path around the cube center; deterministic per seed.

    static: one pose held; orbit: a circle of `radius` about the cube center at
    `angular_speed_deg` per second, gaze on the center; random-walk: jittered
    position plus yaw/pitch random walks whose gaze is softly pulled back
    toward the center so the object rarely leaves the view entirely.
    """
    if model not in FOV_MODELS:
        raise ValueError(f"unknown FoV model {model!r}, expected one of {FOV_MODELS}")
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    c = cube_height / 2.0
    if model == "static":
        return [Pose6DoF(f, c - radius, c, c, 0.0, 0.0, 0.0) for f in range(frames)]

    if model == "orbit":
        poses = []
        for f in range(frames):
            phi = math.radians(angular_speed_deg) * f / fps
            x = c + radius * math.cos(phi)
            y = c + radius * math.sin(phi)
            yaw = math.degrees(math.atan2(c - y, c - x))
            poses.append(Pose6DoF(f, x, y, c, yaw, 0.0, 0.0))
        return poses

    rng = np.random.default_rng(seed)
    pos = np.array([c - radius, c, c])
    lo = np.array([c - box_half, c - box_half, max(0.2, c - 0.6)])
    hi = np.array([c + box_half, c + box_half, c + 0.6])
    yaw, pitch, roll = 0.0, 0.0, 0.0
    poses = []
    for f in range(frames):
        poses.append(Pose6DoF(f, pos[0], pos[1], pos[2], yaw, pitch, roll))
        pos = pos + rng.normal(0.0, pos_step, size=3)
        pos = np.clip(pos, lo, hi)
        to_center = np.array([c, c, c]) - pos
        bearing = math.degrees(math.atan2(to_center[1], to_center[0]))
        elevation = math.degrees(math.atan2(to_center[2], math.hypot(to_center[0], to_center[1])))
        yaw = normalize_angle(yaw + gaze_pull * normalize_angle(bearing - yaw)
                              + rng.normal(0.0, yaw_step))
        pitch = normalize_angle(pitch + gaze_pull * normalize_angle(elevation - pitch)
                                + rng.normal(0.0, pitch_step))
        roll = normalize_angle(roll + rng.normal(0.0, 0.05))
    return poses


def generate_bandwidth(model: str, rounds: int, seed: int = 0, *,
                       mbps: float = 6.0, low: float = 2.0, high: float = 10.0,
                       period: int = 20, min_mbps: float = 1.0, max_mbps: float = 12.0,
                       sigma: float = 0.15, round_interval: float = 1.0) -> list[BandwidthSample]:
    """Synthetic per-round bandwidth series; deterministic per seed.

    constant: fixed rate; step: alternates low/high every `period` rounds;
    markov: a multiplicative random walk clipped to [min_mbps, max_mbps].
    """
    if model not in BW_MODELS:
        raise ValueError(f"unknown bandwidth model {model!r}, expected one of {BW_MODELS}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    times = [r * round_interval for r in range(rounds)]
    if model == "constant":
        return [BandwidthSample(t, mbps) for t in times]
    if model == "step":
        return [BandwidthSample(t, low if (r // period) % 2 == 0 else high)
                for r, t in enumerate(times)]
    rng = np.random.default_rng(seed)
    value = math.sqrt(min_mbps * max_mbps)
    samples = []
    for t in times:
        samples.append(BandwidthSample(t, value))
        value = float(np.clip(value * math.exp(rng.normal(0.0, sigma)), min_mbps, max_mbps))
    return samples


def generate_video(spec: SyntheticVideoSpec) -> PointCloudVideo:
    """Synthetic tile metadata: occupancy sampled once, per-tile (a, b) drawn
    from the configured ranges, LoD byte tables from inverting the rate-LoD law."""
    rng = np.random.default_rng(spec.seed)
    cfg = TilingConfig(cube_height=spec.cube_height, tile_level=spec.tile_level,
                       lod_count=spec.lod_count)
    n = cfg.cells_per_axis
    n_cells = n ** 3
    n_occupied = max(1, round(spec.occupancy_density * n_cells))
    chosen = np.sort(rng.choice(n_cells, size=n_occupied, replace=False))
    occupancy = np.zeros(n_cells, dtype=bool)
    occupancy[chosen] = True
    cells = enumerate_tiles(cfg, occupancy.reshape(n, n, n))

    a_vals = rng.uniform(spec.a_range[0], spec.a_range[1], size=len(cells))
    b_vals = rng.uniform(spec.b_range[0], spec.b_range[1], size=len(cells))
    size_tables = [tuple(lod_to_rate(h, a, b) for h in range(1, spec.lod_count + 1))
                   for a, b in zip(a_vals, b_vals)]
    width = cfg.tile_width

    frames = []
    for f in range(spec.frames):
        frames.append([TileMeta(f, cell.tile_id, float(a), float(b), sizes[-1],
                                sizes, cell.center, width)
                       for cell, a, b, sizes in zip(cells, a_vals, b_vals, size_tables)])
    return PointCloudVideo(spec.cube_height, spec.tile_level, spec.lod_count, frames)
