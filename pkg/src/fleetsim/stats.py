"""Output analysis: Welch warm-up, replication/deletion, instability detection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

WINDOW_HALF = 500
BAND = 0.05
CONFIDENCE = 0.90


def _series(trace) -> np.ndarray:
    if hasattr(trace, "delivery_times"):
        return np.asarray(trace.delivery_times(), dtype=float)
    return np.asarray(trace, dtype=float)


def welch_curve(traces: Sequence, window_half: int = WINDOW_HALF) -> np.ndarray:
    """Ensemble average over replications, smoothed by a centred window of 2w+1."""
    series = [_series(t) for t in traces]
    m = min(len(s) for s in series)
    width = 2 * window_half + 1
    if m < width + 1:
        raise ValueError(f"traces need at least {width + 1} delivered jobs, shortest has {m}")
    ens = np.mean([s[:m] for s in series], axis=0)
    c = np.concatenate([[0.0], np.cumsum(ens)])
    return (c[width:] - c[:-width]) / width


def warmup_from_curve(curve: np.ndarray, window_half: int = WINDOW_HALF, band: float = BAND) -> int:
    """First demand index after which the curve stays within +-band of its final-quartile mean.

    Curve position i is centred on demand i + window_half. Returns
    len(curve) + 2*window_half (the full trace length) when the curve never settles.
    """
    full = len(curve) + 2 * window_half
    ref = curve[3 * len(curve) // 4:].mean()
    outside = np.abs(curve - ref) > band * abs(ref)
    if outside[-1]:
        return full
    bad = np.flatnonzero(outside)
    first = 0 if len(bad) == 0 else int(bad[-1]) + 1
    return first + window_half


def welch_warmup(traces: Sequence, window_half: int = WINDOW_HALF, band: float = BAND) -> int:
    """Warm-up length in demands by Welch's method."""
    if len(traces) < 2:
        raise ValueError("Welch's method needs at least two replications")
    return warmup_from_curve(welch_curve(traces, window_half), window_half, band)


def write_welch_csv(curve: np.ndarray, path, window_half: int = WINDOW_HALF) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "T_smoothed"])
        for i, v in enumerate(curve):
            w.writerow([i + window_half, f"{v:.6f}"])


def replication_deletion(traces: Sequence, n_wu: int, confidence: float = CONFIDENCE):
    """Grand mean of per-replication post-warm-up means with a Student-t interval.

    Returns ``(mean, (lo, hi), per_replication_means)``.
    """
    means = []
    for t in traces:
        s = _series(t)
        if len(s) > n_wu:
            means.append(float(s[n_wu:].mean()))
    if len(means) < 2:
        raise ValueError("need at least two replications longer than the warm-up")
    means = np.asarray(means)
    grand = float(means.mean())
    sem = float(means.std(ddof=1) / np.sqrt(len(means)))
    half = float(sps.t.ppf(0.5 + confidence / 2.0, len(means) - 1) * sem)
    return grand, (grand - half, grand + half), means.tolist()


def _slope_interval(t: np.ndarray, y: np.ndarray, level: float = 0.95, n_batches: int = 30):
    # regress on batch means; raw pending counts are strongly autocorrelated
    nb = min(n_batches, len(t))
    tb = np.array([b.mean() for b in np.array_split(t, nb)])
    yb = np.array([b.mean() for b in np.array_split(y, nb)])
    res = sps.linregress(tb, yb)
    if nb <= 2 or not np.isfinite(res.stderr):
        return res.slope, res.slope, res.slope
    half = sps.t.ppf(0.5 + level / 2.0, nb - 2) * res.stderr
    return res.slope, res.slope - half, res.slope + half


@dataclass
class InstabilityRule:
    level: float = 0.95
    growth_factor: float = 2.0
    growth_offset: float = 5.0
    band: float = BAND
    window_half: int = WINDOW_HALF


def detect_instability(trace, rule: InstabilityRule | None = None) -> str:
    """``stable``, ``unstable`` or ``undecided`` from the pending-job count series.

    Unstable needs a significantly positive drift over the second half of
    the run plus clear growth of the level between the second and last
    quarter. Stable needs a drift interval covering zero and a settled
    Welch curve.
    """
    rule = rule or InstabilityRule()
    if hasattr(trace, "pending_t"):
        t, N = np.asarray(trace.pending_t, float), np.asarray(trace.pending_N, float)
    else:
        t, N = (np.asarray(a, float) for a in trace)
    if len(N) < 8:
        return "undecided"
    half = len(N) // 2
    _, lo, hi = _slope_interval(t[half:], N[half:], rule.level)
    q = len(N) // 4
    second_q = N[q: 2 * q].mean()
    last_q = N[3 * q:].mean()
    if lo > 0 and last_q > rule.growth_factor * second_q + rule.growth_offset:
        return "unstable"
    if lo <= 0 <= hi and _settled(trace, rule):
        return "stable"
    return "undecided"


def _settled(trace, rule: InstabilityRule) -> bool:
    if not hasattr(trace, "delivery_times"):
        return True
    s = _series(trace)
    if len(s) < 2 * rule.window_half + 2:
        return False
    curve = welch_curve([s], rule.window_half)
    return warmup_from_curve(curve, rule.window_half, rule.band) < len(s)


def resolve_verdict(trace, rule: InstabilityRule | None = None) -> str:
    """Final stable/unstable call once escalation is exhausted.

    Undecided runs count as unstable only if the pending level still grew
    markedly over the run.
    """
    v = detect_instability(trace, rule)
    if v != "undecided":
        return v
    rule = rule or InstabilityRule()
    N = np.asarray(trace.pending_N, float)
    q = max(1, len(N) // 4)
    return "unstable" if N[3 * q:].mean() > rule.growth_factor * N[q: 2 * q].mean() + rule.growth_offset else "stable"


@dataclass
class ExperimentResult:
    policy: str
    K: int
    L: int
    lam: float
    n_wu: int | None
    T_mean: float | None
    ci: tuple[float, float] | None
    stable: bool
    seeds: list[int]
    verdicts: list[str] = field(default_factory=list)
    rep_means: list[float] = field(default_factory=list)
    welch: np.ndarray | None = field(default=None, repr=False)
    traces: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "K": self.K,
            "L": self.L,
            "lambda_per_min": self.lam,
            "n_wu": self.n_wu,
            "T_mean_min": None if self.T_mean is None else round(self.T_mean, 6),
            "ci90_lo": None if self.ci is None else round(self.ci[0], 6),
            "ci90_hi": None if self.ci is None else round(self.ci[1], 6),
            "stable": self.stable,
            "seeds": list(self.seeds),
        }
