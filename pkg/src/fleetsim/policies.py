"""Job-selection policies.

Four policies combine job ordering (nearest job, NJ, or first job, FJ) with
selection timing (``+``: right after a delivery, ``-``: at the depot just
before loading). NJ policies are distributed and resolve simultaneous
selections by a random priority order; FJ policies are run by a central
unit that hands the oldest job to the nearest vehicle.

All functions here are pure decisions over a state snapshot. Distances are
Euclidean. Ties go to the smaller job index, then the smaller depot index,
then the smaller vehicle id.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .fleet import InvalidState, Mode, VehicleState


class Ordering(str, Enum):
    NJ = "NJ"
    FJ = "FJ"


class Timing(str, Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class PolicyId:
    ordering: Ordering
    timing: Timing

    @property
    def token(self) -> str:
        return f"{self.ordering.value.lower()}{'+' if self.timing is Timing.PLUS else '-'}"

    @property
    def coordination(self) -> str:
        return "randomized" if self.ordering is Ordering.NJ else "assortative"

    @property
    def name(self) -> str:
        return POLICY_NAMES[self.token]

    def __str__(self) -> str:
        return self.token

    @classmethod
    def parse(cls, token: str) -> "PolicyId":
        t = token.strip().lower()
        if t not in POLICY_NAMES:
            raise ValueError(f"unknown policy {token!r}; expected one of {sorted(POLICY_NAMES)}")
        return cls(Ordering(t[:2].upper()), Timing.PLUS if t[2] == "+" else Timing.MINUS)


POLICY_NAMES = {
    "nj+": "Do Nearest Job",
    "nj-": "Rush to Depots",
    "fj+": "FCFS by Nearest Vehicle",
    "fj-": "FCFS by First Vehicle at Depot",
}
ALL_POLICIES = tuple(PolicyId.parse(t) for t in POLICY_NAMES)


@dataclass(frozen=True)
class Assignment:
    n: int
    k: int
    via_depot: int
    return_depot: int | None = None
    cost: float = 0.0


class WaitingSet:
    """Waiting jobs in arrival order.

    Each job carries its distances to every depot, computed once on insert.
    Removal is lazy; storage is compacted once half of it is dead.
    """

    def __init__(self, depots: np.ndarray, capacity: int = 256):
        self.depots = np.asarray(depots, dtype=float).reshape(-1, 2)
        L = len(self.depots)
        self._n = np.empty(capacity, dtype=np.int64)
        self._xy = np.empty((capacity, 2))
        self._dd = np.empty((capacity, L))
        self._alive = np.zeros(capacity, dtype=bool)
        self._slot: dict[int, int] = {}
        self._end = 0
        self._head = 0

    def __len__(self) -> int:
        return len(self._slot)

    def __contains__(self, n: int) -> bool:
        return n in self._slot

    def __iter__(self):
        return iter(self._slot)

    def add(self, n: int, pos) -> None:
        if self._slot and n <= self._n[self._end - 1]:
            raise ValueError("jobs must be added in increasing index order")
        if self._end == len(self._n):
            self._grow()
        i = self._end
        self._n[i] = n
        self._xy[i] = pos
        self._dd[i] = np.hypot(self.depots[:, 0] - pos[0], self.depots[:, 1] - pos[1])
        self._alive[i] = True
        self._slot[n] = i
        self._end += 1

    def remove(self, n: int) -> None:
        i = self._slot.pop(n)
        self._alive[i] = False
        if 2 * len(self._slot) < self._end - self._head and self._end > 64:
            self._compact()

    def position(self, n: int) -> tuple[float, float]:
        x, y = self._xy[self._slot[n]]
        return float(x), float(y)

    def depot_distances(self, n: int) -> np.ndarray:
        return self._dd[self._slot[n]]

    def oldest(self) -> int | None:
        if not self._slot:
            return None
        while not self._alive[self._head]:
            self._head += 1
        return int(self._n[self._head])

    def arrays(self):
        """(indices, positions, depot distances) of all waiting jobs, oldest first."""
        sl = slice(self._head, self._end)
        mask = self._alive[sl]
        return self._n[sl][mask], self._xy[sl][mask], self._dd[sl][mask]

    def _grow(self) -> None:
        cap = 2 * len(self._n)
        for name in ("_n", "_xy", "_dd", "_alive"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def _compact(self) -> None:
        n, xy, dd = self.arrays()
        m = len(n)
        self._n[:m], self._xy[:m], self._dd[:m] = n, xy, dd
        self._alive[:] = False
        self._alive[:m] = True
        self._slot = {int(j): i for i, j in enumerate(n)}
        self._head, self._end = 0, m


def _dist_to(points: np.ndarray, p) -> np.ndarray:
    return np.hypot(points[:, 0] - p[0], points[:, 1] - p[1])


def _depot_array(depots) -> np.ndarray:
    return getattr(depots, "positions", depots)


def _count(counter: Counter | None, n: int) -> None:
    if counter is not None:
        counter["comparisons"] += n


def nearest_depot(pos, depots, counter: Counter | None = None) -> int:
    d = _dist_to(_depot_array(depots), pos)
    _count(counter, len(d))
    return int(np.argmin(d))


def battery_gate(v: VehicleState, at_selection: bool = True,
                 low: float = 0.3, ready: float = 0.8) -> str:
    """``eligible``, ``must-charge`` or ``still-charging``."""
    if v.mode is Mode.CHARGING and v.battery < ready:
        return "still-charging"
    if at_selection and v.battery < low:
        return "must-charge"
    return "eligible"


def nj_plus_select(v: VehicleState, waiting: WaitingSet, depots, tau: float = 0.0,
                   counter: Counter | None = None) -> Assignment | None:
    """Job and loading depot minimising the vehicle -> depot -> customer distance."""
    if not len(waiting):
        return None
    dpos = _depot_array(depots)
    n, _, dd = waiting.arrays()
    cost = dd + _dist_to(dpos, v.position)[None, :]
    _count(counter, cost.size)
    # row-major argmin: first by job order, then depot order
    flat = int(np.argmin(cost))
    i, l = divmod(flat, cost.shape[1])
    return Assignment(int(n[i]), v.id, l, None, float(cost[i, l]))


def nj_minus_select(v: VehicleState, waiting: WaitingSet, tau_plus_R: float = 0.0,
                    depot: int | None = None, counter: Counter | None = None) -> Assignment | None:
    """Nearest waiting job from the depot where the vehicle stands."""
    if v.airborne:
        raise InvalidState(f"vehicle {v.id} is airborne; rush-to-depot selects only at a depot")
    if not len(waiting):
        return None
    n, xy, _ = waiting.arrays()
    d = _dist_to(xy, v.position)
    _count(counter, len(d))
    i = int(np.argmin(d))
    via = v.chosen_depot if depot is None else depot
    return Assignment(int(n[i]), v.id, via, None, float(d[i]))


def fj_plus_assign(ready: Sequence[VehicleState], waiting: WaitingSet, depots, tau: float = 0.0,
                   counter: Counter | None = None) -> list[Assignment]:
    """Central FCFS: oldest job to the vehicle/depot pair with the shortest route."""
    if not len(waiting) or not ready:
        return []
    dpos = _depot_array(depots)
    vehicles = sorted(ready, key=lambda v: v.id)
    dv = np.stack([_dist_to(dpos, v.position) for v in vehicles], axis=1)  # L x K'
    free = np.ones(len(vehicles), dtype=bool)
    n_all, _, dd_all = waiting.arrays()
    out = []
    for j in range(min(len(vehicles), len(n_all))):
        cost = dv[:, free] + dd_all[j][:, None]
        _count(counter, cost.size)
        # row-major argmin: depot order first, then vehicle id
        flat = int(np.argmin(cost))
        l, r = divmod(flat, cost.shape[1])
        k = int(np.flatnonzero(free)[r])
        free[k] = False
        out.append(Assignment(int(n_all[j]), vehicles[k].id, l, None, float(cost[l, r])))
    return out


def fj_minus_assign(at_depot: Sequence[VehicleState], waiting: WaitingSet, depots, tau_plus_R: float = 0.0,
                    counter: Counter | None = None) -> list[Assignment]:
    """Central FCFS from the depots: oldest job to the nearest vehicle standing at a depot,
    then the depot nearest to the customer as the return point."""
    if not len(waiting) or not at_depot:
        return []
    vehicles = sorted(at_depot, key=lambda v: v.id)
    vxy = np.array([v.position for v in vehicles])
    free = np.ones(len(vehicles), dtype=bool)
    n_all, xy_all, dd_all = waiting.arrays()
    out = []
    for j in range(min(len(vehicles), len(n_all))):
        d = _dist_to(vxy[free], xy_all[j])
        r = int(np.argmin(d))
        l = int(np.argmin(dd_all[j]))
        _count(counter, len(d) + len(dd_all[j]))
        k = int(np.flatnonzero(free)[r])
        free[k] = False
        v = vehicles[k]
        out.append(Assignment(int(n_all[j]), v.id, v.chosen_depot, l, float(d[r] + dd_all[j][l])))
    return out


def resolve_contention(selectors: Sequence[int], rng: np.random.Generator) -> list[int]:
    """Random priority order among vehicles selecting in the same step."""
    selectors = list(selectors)
    if len(selectors) < 2:
        return selectors
    return [selectors[i] for i in rng.permutation(len(selectors))]
