"""FoV prediction by per-DoF linear regression; bandwidth prediction by harmonic mean.

Each degree of freedom is extrapolated independently with an ordinary
least-squares line over the history frame indices. Angles are unwrapped
before fitting so that a steady rotation through +-180 degrees does not
produce a spurious slope, and re-normalized afterwards. With fewer than two
history poses the predictor degrades to holding the last observed pose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Pose6DoF

_ANGLE_COLS = (3, 4, 5)  # yaw, pitch, roll columns in the pose matrix


def predict_fov(history: Sequence[Pose6DoF], horizon: int,
                history_window: int | None = None) -> list[Pose6DoF]:
    """Predict the next `horizon` poses after the end of `history`.

    Uses at most the last `history_window` poses (all of them when None).
    Returned poses carry consecutive frame indices continuing the history.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    if not history:
        raise ValueError("history must contain at least one pose")
    if history_window is not None and history_window >= 1:
        history = history[-history_window:]

    last = history[-1]
    targets = np.arange(1, horizon + 1) + last.frame_index
    if len(history) < 2:
        # Documented fallback: hold the last pose.
        return [Pose6DoF(int(t), last.x, last.y, last.z, last.yaw, last.pitch, last.roll)
                for t in targets]

    t = np.array([p.frame_index for p in history], dtype=float)
    cols = np.array([[p.x, p.y, p.z, p.yaw, p.pitch, p.roll] for p in history], dtype=float)
    for c in _ANGLE_COLS:
        cols[:, c] = np.unwrap(cols[:, c], period=360.0)

    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    means = cols.mean(axis=0)
    slopes = (tc @ (cols - means)) / denom
    pred = means[None, :] + (targets[:, None] - t.mean()) * slopes[None, :]

    return [Pose6DoF(int(ti), row[0], row[1], row[2], row[3], row[4], row[5])
            for ti, row in zip(targets, pred)]


@dataclass
class FovPredictor:
    """Sliding linear-regression FoV predictor.

    Defaults: a 600-frame horizon predicted from the past 300 frames (half the
    20 s window at 30 fps).
    """

    history_window: int = 300
    horizon: int = 600

    def __post_init__(self) -> None:
        if self.history_window < 2:
            raise ValueError(f"history_window must be >= 2, got {self.history_window}")

    def predict(self, history: Sequence[Pose6DoF], horizon: int | None = None) -> list[Pose6DoF]:
        return predict_fov(history, self.horizon if horizon is None else horizon,
                           self.history_window)


def predict_bandwidth(observed: Sequence[float], history_len: int = 5) -> float:
    """Harmonic mean of the last `history_len` positive observations.

    Non-positive observations are excluded; an empty usable history raises.
    """
    if history_len < 1:
        raise ValueError(f"history_len must be >= 1, got {history_len}")
    usable = [b for b in observed if b > 0]
    if not usable:
        raise ValueError("no positive bandwidth observations to predict from")
    tail = usable[-history_len:]
    return len(tail) / sum(1.0 / b for b in tail)


@dataclass
class BandwidthPredictor:
    """Harmonic-mean bandwidth predictor over a short observation history."""

    history_len: int = 5

    def __post_init__(self) -> None:
        if self.history_len < 1:
            raise ValueError(f"history_len must be >= 1, got {self.history_len}")

    def predict(self, observed: Sequence[float]) -> float:
        return predict_bandwidth(observed, self.history_len)
