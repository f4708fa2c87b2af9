"""Service-area geometry and depot placement.

Depots are placed to minimise the mean distance from a uniformly random
demand point to its nearest depot (the continuous multi-median problem).
Perfect-square depot counts have a closed-form answer on a square area;
everything else is solved numerically with Lloyd/Weiszfeld alternation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Mean distance from a uniform point in the unit square to its centre.
C0 = (math.sqrt(2.0) + math.log(1.0 + math.sqrt(2.0))) / 6.0

WEISZFELD_EPS = 1e-9
N_RESTARTS = 16


@dataclass(frozen=True)
class ServiceArea:
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side}")

    @property
    def A(self) -> float:
        return self.side * self.side

    def contains(self, p, tol: float = 1e-12) -> bool:
        x, y = p
        return -tol <= x <= self.side + tol and -tol <= y <= self.side + tol

    def uniform(self, rng: np.random.Generator, n: int | None = None):
        return rng.uniform(0.0, self.side, size=2 if n is None else (n, 2))


@dataclass
class DepotLayout:
    positions: np.ndarray
    H_L: float
    method: str  # "analytic-grid" or "numeric"
    side: float = field(default=float("nan"))
    H_stderr: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    @property
    def L(self) -> int:
        return len(self.positions)

    def nearest(self, p) -> int:
        """Index of the depot closest to ``p`` (lowest index on ties)."""
        d = np.hypot(self.positions[:, 0] - p[0], self.positions[:, 1] - p[1])
        return int(np.argmin(d))

    def to_json(self) -> dict:
        return {
            "side_km": float(self.side),
            "depots": [[float(x), float(y)] for x, y in self.positions],
            "H_L_km": float(self.H_L),
            "method": self.method,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DepotLayout":
        return cls(
            positions=np.asarray(data["depots"], dtype=float),
            H_L=float(data["H_L_km"]),
            method=data["method"],
            side=float(data["side_km"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DepotLayout":
        return cls.from_json(json.loads(Path(path).read_text()))


def is_perfect_square(n: int) -> bool:
    r = math.isqrt(n)
    return r * r == n


def grid_centroids(side: float, k: int) -> np.ndarray:
    c = (np.arange(k) + 0.5) * side / k
    xs, ys = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel()])


def zemel_lower_bound(A: float, L: int) -> float:
    """Strict lower bound (2/3)*sqrt(A/(pi L)) on the optimal multi-median value."""
    if A <= 0 or L < 1:
        raise ValueError("A must be positive and L >= 1")
    return (2.0 / 3.0) * math.sqrt(A / (math.pi * L))


def stratified_samples(area: ServiceArea, samples: int, rng: np.random.Generator) -> np.ndarray:
    """One jittered point per cell of an m x m grid, m = floor(sqrt(samples))."""
    m = max(1, math.isqrt(samples))
    h = area.side / m
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    base = np.column_stack([i.ravel(), j.ravel()]).astype(float) * h
    return base + rng.uniform(0.0, h, size=base.shape)


def _nearest_distances(points: np.ndarray, depots: np.ndarray) -> np.ndarray:
    best = np.full(len(points), np.inf)
    # loop over depots keeps memory at O(samples)
    for dx, dy in depots:
        np.minimum(best, np.hypot(points[:, 0] - dx, points[:, 1] - dy), out=best)
    return best


def multimedian_value(layout, area: ServiceArea, samples: int = 10**6,
                      rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of the mean nearest-depot distance.

    Returns ``(estimate, standard_error)``. The standard error is the plain
    i.i.d. one, which overstates the error of the stratified estimator.
    """
    depots = layout.positions if isinstance(layout, DepotLayout) else np.asarray(layout, float).reshape(-1, 2)
    if len(depots) == 0:
        raise ValueError("layout has no depots")
    if samples < 10**4:
        raise ValueError("need at least 1e4 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    pts = stratified_samples(area, samples, rng)
    d = _nearest_distances(pts, depots)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(len(d)))


def _weiszfeld(points: np.ndarray, start: np.ndarray, tol: float, max_iter: int = 200) -> np.ndarray:
    y = start.copy()
    for _ in range(max_iter):
        d = np.hypot(points[:, 0] - y[0], points[:, 1] - y[1])
        keep = d > WEISZFELD_EPS
        if not keep.any():
            return y
        w = 1.0 / d[keep]
        y_new = (points[keep] * w[:, None]).sum(axis=0) / w.sum()
        if np.hypot(*(y_new - y)) < tol:
            return y_new
        y = y_new
    return y


def _lloyd(points: np.ndarray, depots: np.ndarray, tol: float, max_iter: int = 100):
    depots = depots.copy()
    prev = np.inf
    for _ in range(max_iter):
        dist = np.hypot(points[:, None, 0] - depots[None, :, 0], points[:, None, 1] - depots[None, :, 1])
        owner = dist.argmin(axis=1)
        H = float(dist[np.arange(len(points)), owner].mean())
        if prev - H < tol:
            break
        prev = H
        for l in range(len(depots)):
            cell = points[owner == l]
            if len(cell):
                depots[l] = _weiszfeld(cell, depots[l], tol * 1e-2)
    return depots, min(H, prev)


def optimize_depots(area: ServiceArea, L: int, rng: np.random.Generator,
                    samples: int = 20_000, restarts: int = N_RESTARTS) -> np.ndarray:
    pts = area.uniform(rng, samples)
    tol = 1e-4 * area.side
    best, best_H = None, np.inf
    for _ in range(restarts):
        start = pts[rng.choice(samples, size=L, replace=False)]
        depots, H = _lloyd(pts, start, tol)
        if H < best_H:
            best, best_H = depots, H
    return np.clip(best, 0.0, area.side)


def place_depots(area: ServiceArea, L: int, seed: int = 0, samples: int = 10**6) -> DepotLayout:
    """Optimal depot layout: analytic grid for perfect squares, numeric otherwise."""
    if L < 1:
        raise ValueError(f"depot count must be >= 1, got {L}")
    if is_perfect_square(L):
        k = math.isqrt(L)
        pos = grid_centroids(area.side, k)
        return DepotLayout(pos, C0 * area.side / k, "analytic-grid", area.side)
    rng = np.random.default_rng(seed)
    pos = optimize_depots(area, L, rng)
    H, se = multimedian_value(pos, area, samples, rng)
    return DepotLayout(pos, H, "numeric", area.side, H_stderr=se)


def optimal_H(area: ServiceArea, L: int, seed: int = 0) -> float:
    """H_L* for the area: exact for perfect squares, numeric estimate otherwise."""
    return place_depots(area, L, seed=seed).H_L
