"""Closed-form stability and planning bounds.

Public functions take explicitly named units (rates per minute or per hour,
speeds in km/h, times in minutes) and convert internally.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import C0, ServiceArea, is_perfect_square, optimal_H, zemel_lower_bound


def _per_min(lambda_per_min: float | None, lambda_per_hour: float | None) -> float:
    if (lambda_per_min is None) == (lambda_per_hour is None):
        raise ValueError("give exactly one of lambda_per_min / lambda_per_hour")
    return lambda_per_min if lambda_per_min is not None else lambda_per_hour / 60.0


def load_factor(lam: float, B_mean: float, alpha: float, K: int) -> float:
    """rho = lambda * B / (alpha * K); lambda per minute, B in minutes."""
    if min(lam, B_mean, alpha, K) <= 0:
        raise ValueError("all inputs must be positive")
    return lam * B_mean / (alpha * K)


def stability_necessary(R_bar_prime: float, S_bar: float, alpha: float, K: float, lam: float) -> bool:
    """Necessary condition R' + S <= alpha K / lambda (minutes, lambda per minute)."""
    return R_bar_prime + S_bar <= alpha * K / lam


def stability_necessary_generic(D_bar: float, nu_kmh: float, K: float, lam: float) -> bool:
    """Single-trip form D/nu <= K/lambda, for alpha = 1 and no depots."""
    return D_bar / (nu_kmh / 60.0) <= K / lam


@dataclass
class LoadReport:
    rho: float
    B_mean: float
    R_bar_prime: float
    S_bar: float
    satisfied: bool


def load_report(service_times: Sequence, lam: float, alpha: float, K: int) -> LoadReport:
    """Load factor from observed (W, R, S, T) tuples of delivered jobs.

    The maximum return time is estimated by the mean R over jobs whose
    vehicle still had to fly back to a depot (R > 0).
    """
    R = np.array([s.R for s in service_times])
    S = np.array([s.S for s in service_times])
    B = float((R + S).mean())
    Rp = float(R[R > 0].mean()) if (R > 0).any() else 0.0
    Sb = float(S.mean())
    return LoadReport(load_factor(lam, B, alpha, K), B, Rp, Sb, stability_necessary(Rp, Sb, alpha, K, lam))


def min_delivery_time(A: float, nu_kmh: float, L: int, H_star: float | None = None) -> float:
    """Lower bound on mean delivery time in minutes.

    With ``H_star`` the exact tread H*/nu, otherwise the strict Zemel bound.
    """
    if A <= 0 or nu_kmh <= 0 or L < 1:
        raise ValueError("positive inputs required")
    H = H_star if H_star is not None else zemel_lower_bound(A, L)
    return 60.0 * H / nu_kmh


def min_depots(A: float, nu_kmh: float, T_target_min: float) -> float:
    """Real-valued depot count needed for a target mean delivery time."""
    T_h = T_target_min / 60.0
    return 4.0 * A / (9.0 * math.pi * nu_kmh ** 2 * T_h ** 2)


def min_vehicles(lam: float, alpha: float, T_target_min: float) -> float:
    """Vehicle count bound 2 lambda T / alpha; the fleet must strictly exceed it."""
    return 2.0 * lam * T_target_min / alpha


def infra_cost(K: float, L: float, C_v: float, C_d: float) -> float:
    return C_d * L + C_v * K


@dataclass(frozen=True)
class PlanningParams:
    """Inputs of the expenditure frontier. lambda stored per hour, speed km/h."""

    A: float = 16.0
    alpha: float = 0.25
    lambda_per_hour: float = 39.0
    nu_kmh: float = 30.0
    C_d: float = 20000.0
    C_v: float = 2000.0

    @classmethod
    def make(cls, *, A: float, alpha: float, nu_kmh: float, C_d: float, C_v: float,
             lambda_per_min: float | None = None, lambda_per_hour: float | None = None) -> "PlanningParams":
        lam = _per_min(lambda_per_min, lambda_per_hour) * 60.0
        return cls(A, alpha, lam, nu_kmh, C_d, C_v)

    @property
    def lambda_per_min(self) -> float:
        return self.lambda_per_hour / 60.0


MATTERNET = PlanningParams()


def aux_g_and_tau_star(p: PlanningParams):
    """Auxiliary cost g(tau) (tau in hours) and the closed-form tau* in hours."""
    A, a, lam, nu, Cd, Cv = p.A, p.alpha, p.lambda_per_hour, p.nu_kmh, p.C_d, p.C_v

    def g(tau):
        tau = np.asarray(tau, dtype=float)
        return Cd * 4.0 * A / (9.0 * math.pi * nu ** 2 * tau ** 2) + Cv * 2.0 * lam * tau / a

    # printed closed form; dimensionally it lacks one power of nu, see tau_stationary
    tau_star = (4.0 * a * A * Cd / (9.0 * math.pi * lam * nu * Cv)) ** (1.0 / 3.0)
    return g, tau_star


def tau_stationary(p: PlanningParams) -> float:
    """Actual minimiser of g in hours: g'(tau) = 0."""
    return (4.0 * p.alpha * p.A * p.C_d / (9.0 * math.pi * p.lambda_per_hour * p.nu_kmh ** 2 * p.C_v)) ** (1.0 / 3.0)


@dataclass
class FrontierPoint:
    L: int
    T_tread: float      # minutes
    I_min: float
    l_star: int
    K_term: int
    T_upper: float = math.inf


def frontier_term(p: PlanningParams, H: float, rounding: str = "paper") -> tuple[float, int]:
    """(total, vehicle count) of the bracketed summand for one depot count with value H."""
    depot_part = p.C_d * 4.0 * p.A / (9.0 * math.pi * H * H)
    x = 2.0 * p.lambda_per_hour * H / (p.alpha * p.nu_kmh)
    if rounding == "paper":
        k = math.floor(x)
    elif rounding == "strict":
        k = math.floor(x) + 1
    else:
        raise ValueError(f"unknown rounding {rounding!r}")
    return depot_part + p.C_v * k, k


def perfect_squares(l_max: int) -> list[int]:
    return [k * k for k in range(1, math.isqrt(l_max) + 1)]


def frontier(p: PlanningParams = MATTERNET, L_set: Iterable[int] | None = None, l_max: int = 100,
             rounding: str = "paper", H_of=None) -> list[FrontierPoint]:
    """Minimum infrastructure expenditure staircase over the admissible depot counts.

    ``H_of(l)`` gives the optimal multi-median value for ``l`` depots; the
    default uses the square area of size A (exact for perfect squares).
    """
    L_set = sorted(set(perfect_squares(l_max) if L_set is None else [l for l in L_set if l <= l_max]))
    if not L_set:
        raise ValueError("no admissible depot counts")
    area = ServiceArea(math.sqrt(p.A))
    if H_of is None:
        def H_of(l):
            return C0 * area.side / math.sqrt(l) if is_perfect_square(l) else optimal_H(area, l)
    H = {l: H_of(l) for l in L_set}
    terms = {}
    points = []
    for i, L in enumerate(L_set):
        best = None
        for l in L_set[i:]:
            if best is not None and p.C_d * 4.0 * p.A / (9.0 * math.pi * H[l] ** 2) >= best[0]:
                break  # depot term only grows with l from here on
            if l not in terms:
                terms[l] = frontier_term(p, H[l], rounding)
            total, k = terms[l]
            if best is None or total < best[0]:
                best = (total, k, l)
        upper = math.inf if i == 0 else 60.0 * H[L_set[i - 1]] / p.nu_kmh
        points.append(FrontierPoint(L, 60.0 * H[L] / p.nu_kmh, best[0], best[2], best[1], upper))
    return points


def integer_envelope(p: PlanningParams = MATTERNET, L_set: Iterable[int] | None = None,
                     l_max: int = 100) -> list[tuple[int, float, int, float]]:
    """Cheapest whole-number configuration meeting the necessary conditions per depot count.

    Rows are (L, T_tread_min, K, cost) with K the smallest integer strictly
    above the vehicle bound.
    """
    L_set = sorted(set(perfect_squares(l_max) if L_set is None else L_set))
    side = math.sqrt(p.A)
    rows = []
    for L in L_set:
        H = C0 * side / math.sqrt(L) if is_perfect_square(L) else optimal_H(ServiceArea(side), L)
        T = 60.0 * H / p.nu_kmh
        K = math.floor(min_vehicles(p.lambda_per_min, p.alpha, T)) + 1
        rows.append((L, T, K, infra_cost(K, L, p.C_v, p.C_d)))
    return rows


def write_frontier_csv(points: Sequence[FrontierPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "T_tread_min", "I_min_usd", "l_star", "K_term"])
        for pt in points:
            w.writerow([pt.L, f"{pt.T_tread:.6f}", f"{pt.I_min:.2f}", pt.l_star, pt.K_term])


def impossible_region(lam: float, alpha: float, nu_kmh: float, L: int, side: float = 4.0,
                      K_values: Iterable[int] = range(1, 25)) -> dict:
    """Boundary of the shaded region of the delivery-time-vs-fleet plot for L depots.

    Returns the minimum delivery time and, per K, the load factor obtained
    with the smallest possible service time B = 2 H*/nu.
    """
    H = C0 * side / math.sqrt(L) if is_perfect_square(L) else optimal_H(ServiceArea(side), L)
    T_min = 60.0 * H / nu_kmh
    B_min = 2.0 * T_min
    return {
        "L": L,
        "T_min": T_min,
        "K_rho1": lam * B_min / alpha,
        "rho": {int(K): load_factor(lam, B_min, alpha, K) for K in K_values},
    }
