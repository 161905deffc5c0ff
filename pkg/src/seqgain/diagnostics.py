"""Asymptotic verification instruments over per-trial traces.

Everything here is a pure fold over an immutable :class:`TrialTrace`.
The averaged-information series and entropy residuals support both clocks:
trial count for unit-cost runs, cumulative cost for cost-aware runs.

"Most trials" verdicts quantify convergence outside a vanishing fraction of
trials: the reported number is the fraction of a trailing window within a
tolerance band of the limit.  This is a finite-budget stand-in for an
asymptotic notion, so the tolerance, window and threshold are explicit
calibration parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .posterior import GridPosterior


@dataclass(frozen=True, eq=False)
class TrialTrace:
    """Per-trial record of a single sequential run.

    ``observed_info`` holds the per-trial negative Hessian of the
    log-likelihood at the true parameter; by conditional independence their
    running sum is the joint-likelihood information.  ``overrun_index`` is
    set when a cost budget was exceeded by the final (kept) trial.
    """

    x: np.ndarray
    y: np.ndarray
    cost: np.ndarray
    cum_cost: np.ndarray
    gain_nats: np.ndarray
    entropy_nats: np.ndarray
    efficiency_ratio: np.ndarray
    observed_info: np.ndarray
    fisher_at_truth: np.ndarray
    expected_cost_at_truth: np.ndarray
    overrun_index: Optional[int] = None
    flags: tuple = ()

    def __post_init__(self):
        T = len(self.x)
        for name in ("y", "cost", "cum_cost", "gain_nats", "entropy_nats",
                     "efficiency_ratio", "expected_cost_at_truth"):
            if len(getattr(self, name)) != T:
                raise ValueError(f"trace field {name} misaligned")
        if self.observed_info.shape[0] != T or self.fisher_at_truth.shape[0] != T:
            raise ValueError("matrix series misaligned")
        if np.any(self.cost <= 0):
            raise ValueError("costs must be positive")
        if np.any(np.diff(self.cum_cost) <= 0) or (T and self.cum_cost[0] <= 0):
            raise ValueError("cumulative cost must be strictly increasing")
        if not np.all(np.isfinite(self.entropy_nats)):
            raise ValueError("entropy must be finite at every trial")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_params(self) -> int:
        return self.observed_info.shape[1]


def rho(K: Union[Callable[[int], bool], Iterable[int]], a: int, b: int) -> float:
    """Proportion of the index window [a, b) falling in K."""
    if not a < b:
        raise ValueError("need a < b")
    window = np.arange(a, b)
    if callable(K):
        hits = sum(1 for k in window if K(int(k)))
    else:
        hits = int(np.isin(window, np.fromiter(K, dtype=np.int64)).sum())
    return hits / (b - a)


def most_trials_converges(series: np.ndarray, limit: float, eps: float,
                          tail_fraction: float = 0.5,
                          threshold: float = 0.95) -> tuple[float, bool]:
    """Fraction of the trailing window within eps of the limit, plus verdict.

    ``tail_fraction`` is the share of the series inspected (from the end);
    the verdict is True when the fraction reaches ``threshold``.
    """
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("series must be nonempty")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    start = int(np.floor(series.size * (1.0 - tail_fraction)))
    window = series[start:]
    fraction = float(np.mean(np.abs(window - limit) < eps))
    return fraction, fraction >= threshold


def track_B(trace: TrialTrace, normalization: str = "unit-time") -> np.ndarray:
    """Running averaged information: cumulative observed info over t or C_t."""
    sums = np.cumsum(trace.observed_info, axis=0)
    if normalization == "unit-time":
        clock = np.arange(1, len(trace) + 1, dtype=float)
    elif normalization == "cost":
        clock = trace.cum_cost
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return sums / clock[:, None, None]


def det_series(B_series: np.ndarray) -> np.ndarray:
    return np.linalg.det(B_series)


def entropy_residual(trace: TrialTrace, H_star: float,
                     clock: str = "unit-time") -> np.ndarray:
    """Residual H_t + (n/2) log(clock_t) - H_star per trial."""
    n = trace.n_params
    if clock == "unit-time":
        c = np.arange(1, len(trace) + 1, dtype=float)
    elif clock == "cost":
        c = trace.cum_cost
    else:
        raise ValueError(f"unknown clock {clock!r}")
    return trace.entropy_nats + 0.5 * n * np.log(c) - H_star


def gain_cost_ratio(trace: TrialTrace) -> np.ndarray:
    """Running realized gain over running cost."""
    return np.cumsum(trace.gain_nats) / trace.cum_cost


def info_budget_check(trace: TrialTrace, n: Optional[int] = None) -> tuple[float, bool]:
    """Check that cumulative realized gain stays below n log t plus a constant.

    Returns the running max of (cumulative gain - n log t) as the fitted
    constant, and a verdict that the running max has stabilized: its
    increase over the last quarter of the run is below 0.1 nats.
    """
    if len(trace) < 100:
        raise ValueError("trace too short for a budget check (need >= 100 trials)")
    if n is None:
        n = trace.n_params
    t = np.arange(1, len(trace) + 1, dtype=float)
    excess = np.cumsum(trace.gain_nats) - n * np.log(t)
    running_max = np.maximum.accumulate(excess)
    c_fit = float(running_max[-1])
    q = (3 * len(trace)) // 4
    verdict = bool(running_max[-1] - running_max[q] < 0.1)
    return c_fit, verdict


def entropy_plus_prior_kl(post: GridPosterior, prior: GridPosterior) -> float:
    """H_t + KL(p_t || p_0) = posterior expectation of -log prior density."""
    w = post.weights
    nz = w > 0.0
    log_prior_density = prior.log_weights[nz] - np.log(prior.grid.cell_volume)
    return float(-(w[nz] @ log_prior_density))


@dataclass(frozen=True, eq=False)
class AsymptoticReport:
    """Derived series and verdicts for one trace."""

    det_B_unit: np.ndarray
    det_B_cost: np.ndarray
    residual_unit: np.ndarray
    residual_cost: np.ndarray
    ratio: np.ndarray
    budget_constant: float
    budget_verdict: bool
    H_star_unit: Optional[float] = None
    H_star_cost: Optional[float] = None
    most_trials: dict = field(default_factory=dict)

    def __post_init__(self):
        T = len(self.ratio)
        for name in ("det_B_unit", "det_B_cost", "residual_unit", "residual_cost"):
            if len(getattr(self, name)) != T:
                raise ValueError(f"report series {name} misaligned")


def build_report(trace: TrialTrace,
                 H_star_unit: Optional[float] = None,
                 H_star_cost: Optional[float] = None,
                 eps: float = 0.15,
                 tail_fraction: float = 0.5,
                 threshold: float = 0.95) -> AsymptoticReport:
    det_unit = det_series(track_B(trace, "unit-time"))
    det_cost = det_series(track_B(trace, "cost"))
    res_unit = (entropy_residual(trace, H_star_unit, "unit-time")
                if H_star_unit is not None else np.full(len(trace), np.nan))
    res_cost = (entropy_residual(trace, H_star_cost, "cost")
                if H_star_cost is not None else np.full(len(trace), np.nan))
    ratio = gain_cost_ratio(trace)
    if len(trace) >= 100:
        c_fit, verdict = info_budget_check(trace)
    else:
        c_fit, verdict = float("nan"), False
    most = {}
    if H_star_unit is not None:
        frac, ok = most_trials_converges(res_unit, 0.0, eps, tail_fraction, threshold)
        most["residual_unit"] = {"fraction": frac, "verdict": ok, "eps": eps}
    if H_star_cost is not None:
        frac, ok = most_trials_converges(res_cost, 0.0, eps, tail_fraction, threshold)
        most["residual_cost"] = {"fraction": frac, "verdict": ok, "eps": eps}
    return AsymptoticReport(
        det_B_unit=det_unit,
        det_B_cost=det_cost,
        residual_unit=res_unit,
        residual_cost=res_cost,
        ratio=ratio,
        budget_constant=c_fit,
        budget_verdict=verdict,
        H_star_unit=H_star_unit,
        H_star_cost=H_star_cost,
        most_trials=most,
    )
