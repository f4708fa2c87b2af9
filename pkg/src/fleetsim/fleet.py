"""Configuration, job and vehicle records, battery dynamics."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Iterable, NamedTuple

from .geometry import ServiceArea


class ConfigError(ValueError):
    """A SystemConfig invariant does not hold."""


class InvalidState(RuntimeError):
    pass


def delta_bound(lam: float) -> float:
    """Largest observation step keeping the binomial arrivals Poisson-like."""
    return min(0.08 / lam, 1.0 / math.sqrt(1500.0 * lam))


def default_delta(lam: float) -> float:
    # bound truncated to 1e-3 min
    return math.floor(delta_bound(lam) * 1000.0) / 1000.0


@dataclass
class SystemConfig:
    """All knobs of one simulated system. Times in minutes, distances in km."""

    side: float = 4.0
    K: int = 12
    L: int = 16
    lam: float = 0.65          # arrivals per minute
    nu: float = 30.0           # km/h
    alpha: float = 0.25
    delta: float | None = None  # None -> default_delta(lam)
    flight_endurance: float = 60.0
    charge_time: float = 180.0
    battery_low: float = 0.3
    battery_ready: float = 0.8
    C_v: float = 2000.0
    C_d: float = 20000.0
    idle_charging: bool = False

    def __post_init__(self):
        if self.delta is None:
            self.delta = default_delta(self.lam) if self.lam > 0 else math.nan
        self.validate()

    def validate(self) -> None:
        bound = delta_bound(self.lam) if self.lam > 0 else math.nan
        checks = [
            (self.side > 0, "side > 0"),
            (int(self.K) == self.K and self.K >= 1, "K >= 1"),
            (int(self.L) == self.L and self.L >= 1, "L >= 1"),
            (self.lam > 0, "lambda > 0"),
            (self.nu > 0, "nu > 0"),
            (0 < self.alpha <= 1, "0 < alpha <= 1"),
            (self.delta > 0, "delta > 0"),
            (self.delta <= bound + 1e-12, f"delta <= min(0.08/lambda, 1/sqrt(1500 lambda)) = {bound:.6f}"),
            (self.flight_endurance > 0 and self.charge_time >= 0, "flight_endurance > 0, charge_time >= 0"),
            (abs(self.flight_endurance / (self.flight_endurance + self.charge_time) - self.alpha) <= 1e-6,
             "flight_endurance / (flight_endurance + charge_time) = alpha"),
            (0 < self.battery_low < self.battery_ready <= 1, "0 < battery_low < battery_ready <= 1"),
            (self.C_v >= 0 and self.C_d >= 0, "costs >= 0"),
        ]
        for ok, what in checks:
            if not ok:
                raise ConfigError(f"invalid config: violates {what}")
        self.K, self.L = int(self.K), int(self.L)

    @property
    def area(self) -> ServiceArea:
        return ServiceArea(self.side)

    @property
    def speed_km_per_min(self) -> float:
        return self.nu / 60.0

    @property
    def step_km(self) -> float:
        return self.speed_km_per_min * self.delta

    @property
    def p_arrival(self) -> float:
        return self.lam * self.delta

    def replace(self, **changes) -> "SystemConfig":
        d = asdict(self)
        d.update(changes)
        if "alpha" in changes and not {"flight_endurance", "charge_time"} & changes.keys():
            # keep endurance, rescale charge time to the new ratio
            d["charge_time"] = d["flight_endurance"] * (1.0 - d["alpha"]) / d["alpha"]
        if "lam" in changes and "delta" not in changes:
            d["delta"] = None
        return SystemConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


class Mode(str, Enum):
    TO_DEPOT = "to-depot"
    CHARGING = "at-depot-charging"
    READY = "at-depot-ready"
    TO_CUSTOMER = "to-customer"
    IDLE_FULL = "idle-at-depot-full"


FLIGHT_MODES = (Mode.TO_DEPOT, Mode.TO_CUSTOMER)


class JobStatus(str, Enum):
    WAITING = "waiting"
    ASSIGNED = "assigned"
    IN_SERVICE = "in-service"
    DELIVERED = "delivered"


@dataclass(slots=True)
class Job:
    n: int
    x: float
    y: float
    t_arrival: float
    t_assigned: float = math.nan
    t_depot_ready: float = math.nan
    t_delivered: float = math.nan
    vehicle_id: int | None = None
    status: JobStatus = JobStatus.WAITING

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(slots=True)
class VehicleState:
    id: int
    x: float
    y: float
    battery: float = 1.0
    mode: Mode = Mode.IDLE_FULL
    target: tuple[float, float] | None = None
    assigned_job: int | None = None
    chosen_depot: int | None = None
    energy_violation: bool = False

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def airborne(self) -> bool:
        return self.mode in FLIGHT_MODES


class ServiceTimes(NamedTuple):
    W: float
    R: float
    S: float
    T: float


def update_battery(v: VehicleState, dt: float, mode: Mode | None = None, *,
                   flight_endurance: float = 60.0, charge_time: float = 180.0) -> VehicleState:
    """Return a copy of ``v`` with its battery advanced by ``dt`` minutes in ``mode``.

    Flight drains linearly over the endurance, any time at a depot charges
    linearly over ``charge_time``. Running dry in flight clamps to zero and
    sets ``energy_violation``.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    mode = v.mode if mode is None else Mode(mode)
    b = v.battery
    violated = v.energy_violation
    if mode in FLIGHT_MODES:
        b -= dt / flight_endurance
        if b < 0.0:
            b, violated = 0.0, True
    else:
        b = 1.0 if charge_time == 0 else min(1.0, b + dt / charge_time)
    return VehicleState(v.id, v.x, v.y, b, mode, v.target, v.assigned_job, v.chosen_depot, violated)


def decompose_times(job: Job) -> ServiceTimes:
    if job.status is not JobStatus.DELIVERED:
        raise InvalidState(f"job {job.n} is not delivered")
    W = job.t_assigned - job.t_arrival
    R = job.t_depot_ready - job.t_assigned
    S = job.t_delivered - job.t_depot_ready
    return ServiceTimes(W, R, S, job.t_delivered - job.t_arrival)


JOB_CSV_HEADER = ["n", "t_arrival", "t_assigned", "t_depot_ready", "t_delivered", "vehicle_id", "W", "R", "S", "T"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def write_jobs_csv(jobs: Iterable[Job], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(JOB_CSV_HEADER)
        for j in jobs:
            if j.status is JobStatus.DELIVERED:
                st = decompose_times(j)
                tail = [j.vehicle_id, *map(_fmt, st)]
            else:
                tail = ["" if j.vehicle_id is None else j.vehicle_id, "", "", "", ""]
            w.writerow([j.n, _fmt(j.t_arrival), _fmt(j.t_assigned), _fmt(j.t_depot_ready),
                        _fmt(j.t_delivered), *tail])


def read_jobs_csv(path) -> list[dict]:
    """Rows of a jobs CSV; empty cells become None."""
    ints = {"n", "vehicle_id"}
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({k: None if v == "" else (int(v) if k in ints else float(v)) for k, v in row.items()})
    return rows
