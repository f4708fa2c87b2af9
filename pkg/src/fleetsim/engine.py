"""Discrete-time simulation of the delivery fleet.

The system is observed on a grid of ``delta`` minutes. Within a step the
order is fixed: vehicles reaching their targets, then at most one job
arrival, then job selection. Between events nothing but the clock changes,
so :meth:`Simulation.run` jumps straight to the next step that has an
event; :meth:`Simulation.step` advances a single step. Both go through the
same per-step routine and yield identical traces.

Vehicle positions and batteries are stored per flight segment and
evaluated as functions of the step index, never accumulated.
"""
from __future__ import annotations

import heapq
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .fleet import Job, JobStatus, Mode, SystemConfig, VehicleState, decompose_times, write_jobs_csv
from .geometry import DepotLayout, place_depots
from .policies import (
    Ordering,
    PolicyId,
    Timing,
    WaitingSet,
    fj_minus_assign,
    fj_plus_assign,
    nj_minus_select,
    nj_plus_select,
    resolve_contention,
)

SAMPLE_EVERY = 100
ESCALATE_TO = 10_000
ARRIVAL_SLACK = 1.25
RUNAWAY_FRACTION = 0.1
_EPS = 1e-9


def gen_arrival(rng: np.random.Generator, lam: float, delta: float) -> bool:
    """One observation step: does a job arrive? Probability lam*delta."""
    p = lam * delta
    if p > 0.08 or (p > 0 and 1.0 / delta < 1500.0 * p):
        raise ValueError(f"step {delta} too coarse for rate {lam}: Poisson approximation fails")
    return bool(rng.random() < p)


@dataclass(slots=True)
class _Segment:
    ox: float = 0.0
    oy: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    D: float = 0.0
    s0: int = 0
    b0: float = 1.0
    depot: int | None = None      # depot at the end of a to-depot leg
    ret: int | None = None        # return depot after delivery (fj-)
    forced: bool = False          # charging until battery_ready
    charging: bool = True         # battery gains while parked


@dataclass
class Trace:
    policy: str
    seed: int
    config: dict
    jobs: list
    pending_t: np.ndarray
    pending_N: np.ndarray
    energy_violations: int
    steps: int
    n_arrived: int
    verdict: str = "undecided"
    layout: dict | None = None

    def delivery_times(self) -> np.ndarray:
        """T_n for the longest prefix of jobs (by arrival index) that were all delivered."""
        out = []
        for j in self.jobs:
            if j.status is not JobStatus.DELIVERED:
                break
            out.append(j.t_delivered - j.t_arrival)
        return np.asarray(out)

    def service_times(self):
        return [decompose_times(j) for j in self.jobs if j.status is JobStatus.DELIVERED]

    def write(self, directory, stem: str = "") -> None:
        os.makedirs(directory, exist_ok=True)
        write_jobs_csv(self.jobs, os.path.join(directory, f"{stem}jobs.csv"))
        with open(os.path.join(directory, f"{stem}pending.csv"), "w") as fh:
            fh.write("t_min,N\n")
            for t, n in zip(self.pending_t, self.pending_N):
                fh.write(f"{t:.6f},{int(n)}\n")

    def fingerprint(self) -> bytes:
        rows = [(j.n, j.x, j.y, j.t_arrival, j.t_assigned, j.t_depot_ready, j.t_delivered, j.vehicle_id)
                for j in self.jobs]
        return repr((rows, self.pending_N.tolist(), self.energy_violations, self.steps)).encode()


class Simulation:
    """One replication: a single-threaded state machine owned by one caller."""

    def __init__(self, config: SystemConfig, policy, seed: int = 0, layout: DepotLayout | None = None,
                 max_arrivals: int | None = None):
        self.cfg = config
        self.policy = PolicyId.parse(policy) if isinstance(policy, str) else policy
        self.layout = layout if layout is not None else place_depots(config.area, config.L)
        if self.layout.L != config.L:
            raise ValueError("layout depot count differs from config.L")
        self.depots = self.layout.positions
        self._dep = [tuple(map(float, d)) for d in self.depots]
        self.seed = seed
        arr_ss, cont_ss = np.random.SeedSequence(seed).spawn(2)
        self.arr_rng = np.random.default_rng(arr_ss)
        self.cont_rng = np.random.default_rng(cont_ss)

        self.delta = config.delta
        self.step_km = config.step_km
        self.drain = config.delta / config.flight_endurance
        self.gain = math.inf if config.charge_time == 0 else config.delta / config.charge_time
        self.p = config.p_arrival
        self.plus = self.policy.timing is Timing.PLUS
        self.nj = self.policy.ordering is Ordering.NJ
        self.max_arrivals = max_arrivals

        self.s = 0
        self.jobs: list[Job] = []
        self.waiting = WaitingSet(self.depots)
        self.vehicles: list[VehicleState] = []
        self.seg: list[_Segment] = []
        for k in range(config.K):
            l = k % config.L
            x, y = self._dep[l]
            self.vehicles.append(VehicleState(k, x, y, 1.0, Mode.IDLE_FULL, None, None, l))
            self.seg.append(_Segment(x, y, x, y, 0.0, 0, 1.0, l))
        self.version = [0] * config.K
        self.events: list[tuple[int, int, int]] = []
        self.idle: set[int] = set(range(config.K))   # eligible, standing at a depot
        self.enroute_idle: set[int] = set()          # flying empty to a depot
        self._completed: list[int] = []
        self._at_depot_now: list[int] = []

        self.n_delivered = 0
        self.n_in_service = 0
        self.energy_violations = 0
        self.pending_t: list[float] = [0.0]
        self.pending_N: list[int] = [0]
        self.counter = Counter()
        self.next_arrival = self._draw_gap()

    # ---- arrivals -------------------------------------------------------
    def _draw_gap(self) -> int:
        if self.p <= 0:
            return -1
        return self.s + int(self.arr_rng.geometric(self.p))

    def _arrivals_open(self) -> bool:
        return self.next_arrival >= 0 and (self.max_arrivals is None or len(self.jobs) < self.max_arrivals)

    # ---- vehicle kinematics --------------------------------------------
    def _sync(self, k: int, s: int) -> VehicleState:
        """Bring vehicle k's position and battery to step s."""
        v, g = self.vehicles[k], self.seg[k]
        if v.mode is Mode.TO_DEPOT or v.mode is Mode.TO_CUSTOMER:
            frac = 1.0 if g.D == 0 else min(1.0, (s - g.s0) * self.step_km / g.D)
            v.x = g.ox + frac * (g.tx - g.ox)
            v.y = g.oy + frac * (g.ty - g.oy)
            b = g.b0 - (s - g.s0) * self.drain
            if b < 0.0:
                if not v.energy_violation:
                    self.energy_violations += 1
                v.energy_violation = True
                b = 0.0
            v.battery = b
        elif g.charging:
            v.battery = min(1.0, g.b0 + (s - g.s0) * self.gain)
            if v.mode is Mode.READY and v.battery >= 1.0:
                v.mode = Mode.IDLE_FULL
        return v

    def _fly(self, k: int, s: int, target, mode: Mode, depot: int | None = None) -> None:
        v = self._sync(k, s)
        g = self.seg[k]
        g.ox, g.oy = v.x, v.y
        g.tx, g.ty = target
        g.D = math.hypot(g.tx - g.ox, g.ty - g.oy)
        g.s0, g.b0 = s, v.battery
        g.depot = depot
        v.mode = mode
        v.target = (g.tx, g.ty)
        self.idle.discard(k)
        self.version[k] += 1
        m = max(1, math.ceil(g.D / self.step_km - _EPS))
        heapq.heappush(self.events, (s + m, k, self.version[k]))

    def _park(self, k: int, s: int, depot: int, forced: bool) -> None:
        """Vehicle k stands at ``depot`` from step s on, charging."""
        v, g = self.vehicles[k], self.seg[k]
        v.x, v.y = self._dep[depot]
        v.target = None
        v.chosen_depot = depot
        g.s0, g.b0, g.forced = s, v.battery, forced
        g.charging = forced or self.cfg.idle_charging
        self.enroute_idle.discard(k)
        self.version[k] += 1
        if forced:
            v.mode = Mode.CHARGING
            self.idle.discard(k)
            need = (self.cfg.battery_ready - v.battery) / self.gain if self.gain != math.inf else 0.0
            m = max(0, math.ceil(need - _EPS))
            heapq.heappush(self.events, (s + max(m, 1), k, self.version[k]))
        else:
            v.mode = Mode.IDLE_FULL if v.battery >= 1.0 else Mode.READY
            self.idle.add(k)

    def _to_nearest_depot(self, k: int, s: int, forced: bool) -> None:
        v = self._sync(k, s)
        l = self.layout.nearest((v.x, v.y))
        self.counter["comparisons"] += self.cfg.L
        self.seg[k].forced = forced
        self._fly(k, s, self._dep[l], Mode.TO_DEPOT, l)
        if not forced:
            self.enroute_idle.add(k)

    def _depart_to_customer(self, k: int, s: int) -> None:
        v = self.vehicles[k]
        job = self.jobs[v.assigned_job]
        job.t_depot_ready = s * self.delta
        job.status = JobStatus.IN_SERVICE
        self._fly(k, s, (job.x, job.y), Mode.TO_CUSTOMER)

    # ---- event handlers --------------------------------------------------
    def _on_event(self, k: int, s: int) -> None:
        v = self.vehicles[k]
        if v.mode is Mode.CHARGING:
            self._sync(k, s)
            self.seg[k].forced = False
            v.mode = Mode.READY
            self.idle.add(k)
            if not self.plus:
                self._at_depot_now.append(k)
            return
        self._sync(k, s)
        g = self.seg[k]
        v.x, v.y = g.tx, g.ty
        if v.mode is Mode.TO_CUSTOMER:
            job = self.jobs[v.assigned_job]
            job.t_delivered = s * self.delta
            job.status = JobStatus.DELIVERED
            self.n_delivered += 1
            self.n_in_service -= 1
            v.assigned_job = None
            if self.plus:
                self._completed.append(k)
            elif g.ret is not None:
                l, g.ret = g.ret, None
                self._fly(k, s, self._dep[l], Mode.TO_DEPOT, l)
            else:
                self._to_nearest_depot(k, s, forced=False)
                self.enroute_idle.discard(k)
        elif v.assigned_job is not None:
            v.chosen_depot = g.depot
            self._depart_to_customer(k, s)
        else:
            self._park(k, s, g.depot, g.forced)
            if not self.plus and not g.forced:
                self._at_depot_now.append(k)

    # ---- selection -------------------------------------------------------
    def _assign(self, k: int, s: int, n: int, via: int, ret: int | None = None) -> None:
        v = self.vehicles[k]
        job = self.jobs[n]
        self.waiting.remove(n)
        job.status = JobStatus.ASSIGNED
        job.vehicle_id = k
        job.t_assigned = s * self.delta
        self.n_in_service += 1
        v.assigned_job = n
        self.idle.discard(k)
        self.enroute_idle.discard(k)
        self.seg[k].ret = ret
        self.seg[k].forced = False
        at_via = v.mode in (Mode.READY, Mode.IDLE_FULL, Mode.CHARGING) and v.chosen_depot == via
        if not self.plus or at_via:
            v.chosen_depot = via
            self._sync(k, s)
            self._depart_to_customer(k, s)
        else:
            self._fly(k, s, self._dep[via], Mode.TO_DEPOT, via)

    def _gate(self, k: int, s: int) -> bool:
        """Battery check at a selection instant; sends low vehicles to charge."""
        v = self._sync(k, s)
        if v.battery >= self.cfg.battery_low:
            return True
        if v.mode is Mode.TO_CUSTOMER or (v.mode is Mode.TO_DEPOT and v.assigned_job is None) or \
                (self.plus and k in self._completed):
            if v.mode is Mode.TO_DEPOT:
                self.seg[k].forced = True
                self.enroute_idle.discard(k)
            else:
                self._to_nearest_depot(k, s, forced=True)
        else:
            self._park(k, s, v.chosen_depot, forced=True)
        return False

    def _select(self, s: int) -> None:
        completed, self._completed = self._completed, []
        at_depot_now, self._at_depot_now = self._at_depot_now, []
        if not len(self.waiting):
            for k in completed:
                if self._gate(k, s):
                    self._to_nearest_depot(k, s, forced=False)
            for k in at_depot_now:
                self._gate(k, s)
            return
        cands = set(completed) | self.idle | set(at_depot_now)
        if self.nj and self.plus:
            cands |= self.enroute_idle
        selectors = [k for k in sorted(cands) if self._gate(k, s)]
        done = set()
        if self.nj:
            for k in resolve_contention(selectors, self.cont_rng):
                if not len(self.waiting):
                    break
                v = self.vehicles[k]
                if self.plus:
                    a = nj_plus_select(v, self.waiting, self.depots, counter=self.counter)
                else:
                    a = nj_minus_select(v, self.waiting, depot=v.chosen_depot, counter=self.counter)
                self._assign(k, s, a.n, a.via_depot)
                done.add(k)
        else:
            vs = [self.vehicles[k] for k in selectors]
            if self.plus:
                plan = fj_plus_assign(vs, self.waiting, self.depots, counter=self.counter)
            else:
                plan = fj_minus_assign(vs, self.waiting, self.depots, counter=self.counter)
            for a in plan:
                self._assign(a.k, s, a.n, a.via_depot, a.return_depot)
                done.add(a.k)
        for k in completed:
            if k not in done and self.vehicles[k].mode is Mode.TO_CUSTOMER:
                self._to_nearest_depot(k, s, forced=False)

    # ---- stepping ----------------------------------------------------------
    def _process(self, s: int) -> None:
        ev = self.events
        while ev and ev[0][0] == s:
            _, k, ver = heapq.heappop(ev)
            if ver == self.version[k]:
                self._on_event(k, s)
        if s == self.next_arrival and self._arrivals_open():
            n = len(self.jobs)
            x, y = self.arr_rng.uniform(0.0, self.cfg.side, size=2)
            self.jobs.append(Job(n, float(x), float(y), s * self.delta))
            self.waiting.add(n, (x, y))
            self.next_arrival = self._draw_gap()
        if self._completed or self._at_depot_now or (len(self.waiting) and
                                                      (self.idle or (self.nj and self.plus and self.enroute_idle))):
            self._select(s)

    def _skip_stale(self) -> None:
        ev = self.events
        while ev and ev[0][2] != self.version[ev[0][1]]:
            heapq.heappop(ev)

    def _advance_to(self, target: int) -> None:
        n_now = len(self.waiting)
        first = (self.s // SAMPLE_EVERY + 1) * SAMPLE_EVERY
        for m in range(first, target, SAMPLE_EVERY):
            self.pending_t.append(m * self.delta)
            self.pending_N.append(n_now)
        self.s = target
        self._process(target)
        if target % SAMPLE_EVERY == 0:
            self.pending_t.append(target * self.delta)
            self.pending_N.append(len(self.waiting))

    def step(self) -> "Simulation":
        """Advance exactly one observation step."""
        self._skip_stale()
        self._advance_to(self.s + 1)
        return self

    def next_event_step(self) -> int | None:
        self._skip_stale()
        cands = []
        if self.events:
            cands.append(self.events[0][0])
        if self._arrivals_open():
            cands.append(self.next_arrival)
        return min(cands) if cands else None

    def run_until(self, n_target: int, max_arrivals: int | None = None) -> "Simulation":
        """Run until jobs 0..n_target-1 are all delivered or arrivals hit the cap."""
        if n_target < 1:
            raise ValueError("n_target must be >= 1")
        cap = max_arrivals if max_arrivals is not None else math.ceil(ARRIVAL_SLACK * n_target)
        self.max_arrivals = cap
        while True:
            if self._prefix_delivered(n_target) or len(self.jobs) >= cap:
                break
            nxt = self.next_event_step()
            if nxt is None:
                break
            self._advance_to(nxt)
        return self

    def _prefix_delivered(self, n: int) -> bool:
        if self.n_delivered < n or len(self.jobs) < n:
            return False
        # cheap scan from the last known frontier
        i = getattr(self, "_frontier", 0)
        jobs = self.jobs
        while i < n and jobs[i].status is JobStatus.DELIVERED:
            i += 1
        self._frontier = i
        return i >= n

    # ---- introspection -------------------------------------------------------
    def conservation(self) -> tuple[int, int, int, int]:
        """(arrived, waiting, assigned or in flight, delivered)."""
        return len(self.jobs), len(self.waiting), self.n_in_service, self.n_delivered

    def trace(self, verdict: str = "undecided") -> Trace:
        return Trace(
            policy=self.policy.token,
            seed=self.seed,
            config=self.cfg.to_dict(),
            jobs=self.jobs,
            pending_t=np.asarray(self.pending_t),
            pending_N=np.asarray(self.pending_N),
            energy_violations=self.energy_violations,
            steps=self.s,
            n_arrived=len(self.jobs),
            verdict=verdict,
            layout=self.layout.to_json(),
        )


def step(sim: Simulation) -> Simulation:
    return sim.step()


def run_replication(config: SystemConfig, policy, seed: int = 0, n_customers: int = 4000,
                    layout: DepotLayout | None = None, escalate_to: int = ESCALATE_TO,
                    rule: stats.InstabilityRule | None = None) -> Trace:
    """Simulate one replication, escalating to ``escalate_to`` customers when undecided."""
    if n_customers < 1:
        raise ValueError("n_customers must be >= 1")
    sim = Simulation(config, policy, seed, layout)
    sim.run_until(n_customers)
    verdict = stats.detect_instability(sim.trace(), rule)
    # unstable is only final once the escalation horizon is reached, unless
    # the backlog is already a sizeable fraction of the run
    runaway = verdict == "unstable" and sim.trace().pending_N[-1] >= RUNAWAY_FRACTION * n_customers
    if verdict != "stable" and n_customers < escalate_to and not runaway:
        sim.run_until(escalate_to)
        verdict = stats.detect_instability(sim.trace(), rule)
    if verdict == "undecided":
        verdict = stats.resolve_verdict(sim.trace(), rule)
    return sim.trace(verdict)


def _rep_job(args):
    config, policy, seed, n_customers, layout, escalate_to = args
    return run_replication(config, policy, seed, n_customers, layout, escalate_to)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FLEETSIM_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(config: SystemConfig, policy, n_reps: int = 10, seed: int = 0,
                   n_customers: int = 4000, layout: DepotLayout | None = None,
                   escalate_to: int = ESCALATE_TO, n_wu: int | None = None,
                   window_half: int = stats.WINDOW_HALF, keep_traces: bool = False,
                   seeds: list[int] | None = None) -> stats.ExperimentResult:
    """Independent replications plus Welch warm-up and replication/deletion estimate."""
    if n_reps < 2:
        raise ValueError("need at least two replications")
    policy = PolicyId.parse(policy) if isinstance(policy, str) else policy
    layout = layout if layout is not None else place_depots(config.area, config.L)
    seeds = list(seeds) if seeds is not None else [seed + r for r in range(n_reps)]
    jobs = [(config, policy, s, n_customers, layout, escalate_to) for s in seeds]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            traces = list(ex.map(_rep_job, jobs))
    else:
        traces = [_rep_job(j) for j in jobs]
    verdicts = [t.verdict for t in traces]
    n_unstable = verdicts.count("unstable")
    stable = 2 * n_unstable < len(traces)
    res = stats.ExperimentResult(policy.token, config.K, config.L, config.lam, None, None, None,
                                 stable, seeds, verdicts, traces=traces if keep_traces else [])
    if not stable:
        return res
    usable = [t for t in traces if t.verdict != "unstable" and len(t.delivery_times()) >= 2 * window_half + 2]
    if len(usable) < 2:
        res.stable = False
        return res
    curve = stats.welch_curve(usable, window_half)
    res.welch = curve
    res.n_wu = stats.warmup_from_curve(curve, window_half) if n_wu is None else n_wu
    shortest = min(len(t.delivery_times()) for t in usable)
    if res.n_wu >= shortest:
        # Welch never settled: no steady-state estimate
        res.stable = False
        return res
    res.T_mean, res.ci, res.rep_means = stats.replication_deletion(usable, res.n_wu)
    return res
