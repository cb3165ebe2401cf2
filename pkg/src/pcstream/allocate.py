"""Per-round tile rate allocation.

Each round the streamer splits a byte budget across (frame, tile) items, each
with a concave value z*log(b*r + 1) of its cumulative rate r, a floor r0
(bytes already buffered) and a cap (the tile's full-detail size). The exact
optimum is a water-filling solution: a single water level `lam` sets every
rate to clamp(z/lam - 1/b, [r0, cap]), and the level is chosen so the spend
matches the budget (or the remaining headroom, whichever is smaller).

The level is located by sweeping the sorted per-item entry/exit thresholds
z/(r0 + 1/b) and z/(cap + 1/b): between consecutive thresholds the set of
interior items is fixed and the level solves in closed form. A bisection on
the monotone spend function backs the sweep up.

Baselines: equal split with clip-and-redistribute, a greedy quantum allocator
driven by finite-difference marginal gains, and a non-progressive variant that
gives the whole budget to the newest segment.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import LOG2, angle_span_scale


@dataclass(frozen=True)
class AllocationItem:
    """One (frame, tile) allocation candidate."""

    key: tuple
    z: float      # weighted marginal coefficient: w * p * a * (M/d) * ln2
    b: float      # rate-to-LoD coefficient of the tile
    r0: float     # bytes already downloaded
    cap: float    # maximum useful bytes (full-detail size)


class AllocationProblem:
    """One round's allocation inputs, stored as parallel arrays.

    ``items`` may be AllocationItem instances or (key, z, b, r0, cap) tuples;
    alternatively pass the arrays directly via keywords.
    """

    __slots__ = ("keys", "z", "b", "r0", "cap", "budget", "frame_blocks")

    def __init__(self, items: Iterable | None = None, budget: float = 0.0, *,
                 keys: Sequence | None = None, z=None, b=None, r0=None, cap=None):
        if items is not None:
            items = [it if isinstance(it, AllocationItem) else AllocationItem(*it)
                     for it in items]
            keys = [it.key for it in items]
            z = [it.z for it in items]
            b = [it.b for it in items]
            r0 = [it.r0 for it in items]
            cap = [it.cap for it in items]
        self.keys = list(keys) if keys is not None else []
        self.z = np.asarray(z if z is not None else [], dtype=float)
        self.b = np.asarray(b if b is not None else [], dtype=float)
        self.r0 = np.asarray(r0 if r0 is not None else [], dtype=float)
        self.cap = np.asarray(cap if cap is not None else [], dtype=float)
        self.budget = float(budget)
        self.frame_blocks = None
        self._validate()

    def _validate(self) -> None:
        n = len(self.keys)
        for name in ("z", "b", "r0", "cap"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if not math.isfinite(self.budget) or self.budget < 0:
            raise ValueError(f"budget must be finite and nonnegative, got {self.budget}")
        if np.any(self.z < 0):
            raise ValueError("z coefficients must be nonnegative")
        if np.any(self.b <= 0):
            raise ValueError("b coefficients must be positive")
        if np.any(self.r0 < 0):
            raise ValueError("r0 must be nonnegative")
        if np.any(self.cap < self.r0):
            raise ValueError("cap must be >= r0 for every item")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def items(self) -> list[AllocationItem]:
        return [AllocationItem(k, float(zi), float(bi), float(ri), float(ci))
                for k, zi, bi, ri, ci in zip(self.keys, self.z, self.b, self.r0, self.cap)]


@dataclass
class AllocationResult:
    """Solved per-item rates; ``water_level`` is NaN for non-water-filling policies."""

    keys: list
    rates: np.ndarray
    water_level: float
    spent: float
    baseline: np.ndarray  # the r0 the rates were grown from

    def rate_of(self, key) -> float:
        return float(self.rates[self.keys.index(key)])

    def as_dict(self) -> dict:
        return {k: float(r) for k, r in zip(self.keys, self.rates)}


def allocation_utility(problem: AllocationProblem, rates: np.ndarray) -> float:
    """Objective value (variable part) of a rate vector: sum of z*log(b*r + 1)."""
    rates = np.asarray(rates, dtype=float)
    return float(np.sum(problem.z * np.log1p(problem.b * rates)))


def _interval_level(s_z: float, s_c: float, s_cap: float, target: float,
                    lo: float, hi: float) -> float | None:
    """Water level in [lo, hi] given the interval's interior/capped sums, if any."""
    if s_z > 0.0:
        denom = target - s_cap + s_c
        if denom > 0.0:
            lam = s_z / denom
            if lo * (1.0 - 1e-12) <= lam <= hi * (1.0 + 1e-12):
                return lam
    elif abs(s_cap - target) <= max(1e-6, 1e-12 * target):
        # No interior items: spend is flat here and already matches the target.
        return hi
    return None


def _sweep_level(z, inv_b, r0, cap, v1, v2, target) -> float | None:
    vals = np.concatenate([v1, v2])
    uniq = np.unique(vals)[::-1]
    pos = np.searchsorted(-uniq, -vals)  # positions in the descending array
    m = uniq.size
    d_sz = np.zeros(m)
    d_sc = np.zeros(m)
    d_scap = np.zeros(m)
    n = v1.size
    np.add.at(d_sz, pos[:n], z)
    np.add.at(d_sz, pos[n:], -z)
    np.add.at(d_sc, pos[:n], r0 + inv_b)
    np.add.at(d_sc, pos[n:], -(r0 + inv_b))
    np.add.at(d_scap, pos[n:], cap - r0)

    s_z = s_c = s_cap = 0.0
    for j in range(m):
        if j > 0:
            lam = _interval_level(s_z, s_c, s_cap, target, float(uniq[j]), float(uniq[j - 1]))
            if lam is not None:
                return lam
        s_z += d_sz[j]
        s_c += d_sc[j]
        s_cap += d_scap[j]
    return None


def _bisect_level(z, inv_b, r0, cap, v1, v2, target) -> float:
    def spend(lam: float) -> float:
        return float(np.sum(np.clip(z / lam - inv_b, r0, cap) - r0))

    lo = float(v2.min()) * 0.5   # below every cap threshold: spend == capacity
    hi = float(v1.max())         # above every floor threshold: spend == 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(mid) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_kkt(problem: AllocationProblem) -> AllocationResult:
    """Exact water-filling optimum of the round's allocation problem.

    Items with z == 0 stay at their floor. When the budget exceeds the total
    headroom every item saturates and the water level is 0.
    """
    n = len(problem)
    rates = problem.r0.astype(float).copy()
    if n == 0:
        return AllocationResult([], rates, 0.0, 0.0, problem.r0.copy())

    idx = np.nonzero(problem.z > 0)[0]
    if idx.size == 0:
        return AllocationResult(problem.keys, rates, 0.0, 0.0, problem.r0.copy())

    z = problem.z[idx]
    inv_b = 1.0 / problem.b[idx]
    r0 = problem.r0[idx]
    cap = problem.cap[idx]
    capacity = float(np.sum(cap - r0))
    target = min(problem.budget, capacity)
    v1 = z / (r0 + inv_b)
    v2 = z / (cap + inv_b)

    if target <= 0.0:
        return AllocationResult(problem.keys, rates, float(v1.max()), 0.0, problem.r0.copy())
    if problem.budget >= capacity:
        rates[idx] = cap
        return AllocationResult(problem.keys, rates, 0.0,
                                float(np.sum(rates - problem.r0)), problem.r0.copy())

    lam = _sweep_level(z, inv_b, r0, cap, v1, v2, target)
    if lam is None:
        lam = _bisect_level(z, inv_b, r0, cap, v1, v2, target)

    solved = np.clip(z / lam - inv_b, r0, cap)
    # Trim float excess so the budget constraint holds exactly.
    excess = float(np.sum(solved - r0)) - target
    if excess > 0.0:
        for j in np.nonzero(solved > r0)[0][::-1]:
            cut = min(float(solved[j] - r0[j]), excess)
            solved[j] -= cut
            excess -= cut
            if excess <= 0.0:
                break
    rates[idx] = solved
    spent = float(np.sum(rates - problem.r0))
    return AllocationResult(problem.keys, rates, float(lam), spent, problem.r0.copy())


def solve_equal_split(problem: AllocationProblem) -> AllocationResult:
    """Split the budget equally over all items, clipping at caps and
    redistributing the clipped residual among the still-open items."""
    n = len(problem)
    rates = problem.r0.astype(float).copy()
    if n == 0:
        return AllocationResult([], rates, float("nan"), 0.0, problem.r0.copy())
    left = problem.budget
    open_mask = (problem.cap - rates) > 0.0
    while left > 1e-9 and open_mask.any():
        share = left / int(open_mask.sum())
        room = problem.cap[open_mask] - rates[open_mask]
        add = np.minimum(room, share)
        rates[open_mask] += add
        left -= float(add.sum())
        if float(add.min()) >= share * (1.0 - 1e-12):
            break  # nobody clipped, budget fully handed out
        open_mask = (problem.cap - rates) > 1e-12
    spent = float(np.sum(rates - problem.r0))
    return AllocationResult(problem.keys, rates, float("nan"), spent, problem.r0.copy())


def solve_ruma(problem: AllocationProblem, quantum: float = 256.0) -> AllocationResult:
    """Greedy allocator: repeatedly grant `quantum` bytes to the item with the
    largest finite-difference utility gain until the budget or all caps are hit.

    The last grant is truncated to the remaining budget. Ties break on key
    order for determinism.
    """
    if quantum <= 0:
        raise ValueError(f"quantum must be positive, got {quantum}")
    n = len(problem)
    rates = problem.r0.astype(float).copy()
    if n == 0:
        return AllocationResult([], rates, float("nan"), 0.0, problem.r0.copy())

    z, b, cap = problem.z, problem.b, problem.cap

    def gain_entry(i: int):
        room = float(cap[i] - rates[i])
        if room <= 0.0 or z[i] <= 0.0:
            return None
        step = min(quantum, room)
        g = z[i] * (math.log1p(b[i] * (rates[i] + step)) - math.log1p(b[i] * rates[i])) / step
        return (-g, problem.keys[i], i, step)

    heap = [e for e in (gain_entry(i) for i in range(n)) if e is not None]
    heapq.heapify(heap)
    left = problem.budget
    while left > 1e-9 and heap:
        _, _, i, step = heapq.heappop(heap)
        grant = min(step, left)
        rates[i] += grant
        left -= grant
        entry = gain_entry(i)
        if entry is not None:
            heapq.heappush(heap, entry)
    spent = float(np.sum(rates - problem.r0))
    return AllocationResult(problem.keys, rates, float("nan"), spent, problem.r0.copy())


def solve_nonprogressive(new_segment_items: Iterable, budget: float) -> AllocationResult:
    """Water-filling over the newest segment's items only; every other frame in
    the buffer receives nothing this round."""
    return solve_kkt(AllocationProblem(list(new_segment_items), budget))


WEIGHT_KINDS = ("constant", "exponential", "linear", "accuracy")


@dataclass(frozen=True)
class WeightScheme:
    """Per-horizon frame weights w_i, i = 1..window; positive and nonincreasing.

    exponential: gamma^(i-1); linear: (window-i+1)/window; accuracy: the mean
    historical FoV-overlap ratio observed at horizon i (forced nonincreasing).
    """

    kind: str = "exponential"
    gamma: float = 0.8

    def __post_init__(self) -> None:
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}, expected one of {WEIGHT_KINDS}")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")

    def weights(self, window: int, accuracy: Sequence[float] | None = None) -> np.ndarray:
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        i = np.arange(window, dtype=float)
        if self.kind == "constant":
            return np.ones(window)
        if self.kind == "exponential":
            return self.gamma ** i
        if self.kind == "linear":
            return (window - i) / window
        acc = np.ones(window) if accuracy is None else np.asarray(accuracy, dtype=float)
        if acc.size < window:
            pad = acc[-1] if acc.size else 1.0
            acc = np.concatenate([acc, np.full(window - acc.size, pad)])
        acc = np.clip(acc[:window], 1e-3, None)
        return np.minimum.accumulate(acc)


def build_problem(window: Sequence[tuple[int, int]], buffer, weights: WeightScheme,
                  budget: float, window_rounds: int, *,
                  visibility: dict, distances: dict,
                  accuracy: Sequence[float] | None = None) -> AllocationProblem:
    """Assemble one round's problem from per-frame predictions.

    ``window`` holds (frame_index, horizon) pairs with horizon in
    1..window_rounds; ``visibility[frame]`` is the per-tile view probability
    (0/1 under the default binary test) and ``distances[frame]`` the clamped
    predicted viewer-tile distances. Tiles with zero probability are excluded.
    Frames must already be registered in the buffer; unknown frames raise
    KeyError (contract violation).
    """
    w = weights.weights(window_rounds, accuracy)
    keys: list = []
    z_parts, b_parts, r0_parts, cap_parts = [], [], [], []
    blocks = []
    pos = 0
    for frame, horizon in sorted(window):
        if not 1 <= horizon <= window_rounds:
            raise ValueError(f"horizon {horizon} for frame {frame} outside 1..{window_rounds}")
        entry = buffer.entry(frame)
        p = np.asarray(visibility[frame], dtype=float)
        d = np.asarray(distances[frame], dtype=float)
        rows = np.nonzero(p > 0.0)[0]
        if rows.size == 0:
            continue
        m = angle_span_scale(entry.width)
        z = w[horizon - 1] * p[rows] * entry.a[rows] * (m / d[rows]) * LOG2
        keys.extend((frame, entry.tile_ids[r]) for r in rows)
        z_parts.append(z)
        b_parts.append(entry.b[rows])
        r0_parts.append(entry.r0[rows])
        cap_parts.append(entry.cap[rows])
        blocks.append((frame, rows, slice(pos, pos + rows.size)))
        pos += rows.size

    def cat(parts):
        return np.concatenate(parts) if parts else np.empty(0)

    problem = AllocationProblem(budget=budget, keys=keys, z=cat(z_parts), b=cat(b_parts),
                                r0=cat(r0_parts), cap=cat(cap_parts))
    problem.frame_blocks = blocks
    return problem
