"""Trial-placement policies and the gain/cost evaluators they share.

The expected information gain of a placement is the mutual information
between the parameter and the next outcome, computed on the model's
discrete outcome table in nats.  Two algebraically equal forms are
implemented: the entropy-difference form used everywhere, and an averaged
KL form kept as an independent cross-check.

Ties always break toward the smallest placement (first entry of the
candidate list for non-scalar placements), which keeps traces reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import ModelViolationError
from .posterior import GridPosterior

STRATEGY_KINDS = (
    "greedy-info",
    "myopic-gain-per-cost",
    "offline-uniform",
    "fixed-x",
    "random-uniform",
)


@dataclass(frozen=True)
class PlacementDecision:
    """A chosen placement plus the quantities that justified it."""

    x: object
    expected_gain_nats: float
    expected_cost: float
    objective: float
    sup_objective: float
    efficiency_ratio: float


def _dist_entropy(p: np.ndarray, axis=0) -> np.ndarray:
    """Entropy in nats with the 0 log 0 := 0 convention."""
    return -xlogy(p, p).sum(axis=axis)


def expected_information_gain(post: GridPosterior, model, x) -> float:
    """I(parameter; next outcome at x) in nats, >= 0.

    Entropy-difference form: H(predictive) minus the posterior-weighted
    conditional outcome entropies.  Rounding can push the difference a hair
    below zero; it is clamped at exact zero.
    """
    _, cond = model.outcome_table(post, x)
    w = post.weights
    pred = cond @ w
    h_pred = float(_dist_entropy(pred))
    h_cond = float(_dist_entropy(cond, axis=0) @ w)
    return max(h_pred - h_cond, 0.0)


def information_gain_kl_form(post: GridPosterior, model, x) -> float:
    """Same quantity as the average KL from posterior-after to posterior-before.

    Kept deliberately independent of the entropy-difference route so the two
    can be checked against each other.
    """
    _, cond = model.outcome_table(post, x)
    w = post.weights
    pred = cond @ w
    total = 0.0
    for k in range(cond.shape[0]):
        if pred[k] <= 0.0:
            continue
        post_k = cond[k] * w / pred[k]
        nz = post_k > 0.0
        total += pred[k] * float(post_k[nz] @ np.log(post_k[nz] / w[nz]))
    return total


def expected_cost_under(post: GridPosterior, model, cost, x) -> float:
    """Posterior-predictive expected cost of observing at x."""
    values, cond = model.outcome_table(post, x)
    pred = cond @ post.weights
    v = float(pred @ cost.outcome_costs(values, x))
    if v <= 0.0:
        raise ModelViolationError(f"expected cost {v} must be positive")
    return v


class GainContext:
    """Precomputed tables for repeated gain/cost scans over fixed candidates.

    Binary models with a ``p1_table`` get a dense (cells x candidates)
    probability table; scans then slice the posterior's active cell range,
    which keeps long adaptive runs cheap.  Other models fall back to
    per-candidate evaluation.
    """

    def __init__(self, model, grid, candidates, cost=None):
        self.model = model
        self.grid = grid
        self.candidates = list(candidates)
        self.cost = cost
        self._p1 = None
        if getattr(model, "binary", False) and hasattr(model, "p1_table"):
            xs = np.asarray(candidates, dtype=float)
            if np.any(np.diff(xs) < 0):
                raise ValueError("scalar candidates must be sorted ascending")
            self._p1 = model.p1_table(grid.points, xs)
            self._hc = _dist_entropy(np.stack([1.0 - self._p1, self._p1]), axis=0)
            if cost is not None:
                self._c0 = np.array([cost.cost_given_outcome(0.0, x) for x in candidates])
                self._c1 = np.array([cost.cost_given_outcome(1.0, x) for x in candidates])

    def gain_profile(self, post: GridPosterior) -> np.ndarray:
        if self._p1 is not None:
            a, b = post.active_range
            w = post.weights[a:b]
            p1 = w @ self._p1[a:b]
            np.clip(p1, 0.0, 1.0, out=p1)
            h_pred = -xlogy(p1, p1) - xlogy(1.0 - p1, 1.0 - p1)
            gains = h_pred - w @ self._hc[a:b]
            return np.maximum(gains, 0.0)
        return np.array([expected_information_gain(post, self.model, x) for x in self.candidates])

    def cost_profile(self, post: GridPosterior) -> np.ndarray:
        if self.cost is None:
            raise ValueError("context built without a cost model")
        if self._p1 is not None:
            a, b = post.active_range
            w = post.weights[a:b]
            p1 = w @ self._p1[a:b]
            return self._c0 * (1.0 - p1) + self._c1 * p1
        return np.array([expected_cost_under(post, self.model, self.cost, x)
                         for x in self.candidates])


def _context(post, model, candidates, cost=None, context=None) -> GainContext:
    if context is not None:
        return context
    return GainContext(model, post.grid, candidates, cost=cost)


def _decision(candidates, idx, gains, costs, objective) -> PlacementDecision:
    sup = float(np.max(objective))
    obj = float(objective[idx])
    eff = obj / sup if sup > 0 else 1.0
    return PlacementDecision(
        x=candidates[idx],
        expected_gain_nats=float(gains[idx]),
        expected_cost=float(costs[idx]) if costs is not None else 1.0,
        objective=obj,
        sup_objective=sup,
        efficiency_ratio=eff,
    )


def choose_greedy(post: GridPosterior, model, candidates: Sequence,
                  context: Optional[GainContext] = None) -> PlacementDecision:
    """Placement maximizing expected information gain; ties -> smallest x."""
    if len(candidates) == 0:
        raise ValueError("candidates must be nonempty")
    ctx = _context(post, model, candidates, context=context)
    gains = ctx.gain_profile(post)
    idx = int(np.argmax(gains))
    return _decision(ctx.candidates, idx, gains, None, gains)


def choose_myopic_cost_aware(post: GridPosterior, model, cost, candidates: Sequence,
                             context: Optional[GainContext] = None) -> PlacementDecision:
    """Placement maximizing expected gain / expected cost; ties -> smallest x."""
    if len(candidates) == 0:
        raise ValueError("candidates must be nonempty")
    ctx = _context(post, model, candidates, cost=cost, context=context)
    gains = ctx.gain_profile(post)
    costs = ctx.cost_profile(post)
    if np.any(costs <= 0.0):
        raise ModelViolationError("expected cost must be positive for every candidate")
    objective = gains / costs
    idx = int(np.argmax(objective))
    return _decision(ctx.candidates, idx, gains, costs, objective)


def sweep_order(n: int) -> np.ndarray:
    """Low-discrepancy visiting order of n candidate indices (bit-reversal)."""
    keys = np.empty(n)
    for i in range(n):
        f, denom, k = 0.0, 1.0, i
        while k:
            denom *= 2.0
            f += (k & 1) / denom
            k >>= 1
        keys[i] = f
    return np.argsort(keys, kind="stable")


def choose_baseline(kind: str, t: int, candidates: Sequence, rng,
                    fixed_x=None, post: Optional[GridPosterior] = None,
                    model=None, cost=None,
                    context: Optional[GainContext] = None) -> PlacementDecision:
    """Posterior-blind placement rules; gain/cost fields are still evaluated
    for diagnostics when a posterior and model are supplied.

    offline-uniform cycles a low-discrepancy sweep of the candidates, so any
    multiple of len(candidates) trials uses every candidate equally often.
    """
    if kind not in ("offline-uniform", "fixed-x", "random-uniform"):
        raise ValueError(f"not a baseline strategy: {kind!r}")
    if len(candidates) == 0:
        raise ValueError("candidates must be nonempty")
    if kind == "offline-uniform":
        order = sweep_order(len(candidates))
        idx = int(order[t % len(candidates)])
        x = candidates[idx]
    elif kind == "fixed-x":
        if fixed_x is None:
            raise ValueError("fixed-x baseline needs fixed_x")
        x = fixed_x
    else:
        x = candidates[int(rng.integers(len(candidates)))]

    if post is None or model is None:
        return PlacementDecision(x=x, expected_gain_nats=np.nan, expected_cost=np.nan,
                                 objective=np.nan, sup_objective=np.nan, efficiency_ratio=np.nan)

    ctx = _context(post, model, candidates, cost=cost, context=context)
    gains = ctx.gain_profile(post)
    if x in ctx.candidates:
        idx = ctx.candidates.index(x)
        gain_x = float(gains[idx])
    else:
        idx = None
        gain_x = expected_information_gain(post, model, x)
    if cost is not None:
        costs = ctx.cost_profile(post)
        cost_x = float(costs[idx]) if idx is not None else expected_cost_under(post, model, cost, x)
        objective = gains / costs
        obj_x = gain_x / cost_x
    else:
        costs, cost_x = None, 1.0
        objective = gains
        obj_x = gain_x
    sup = float(np.max(objective))
    eff = obj_x / sup if sup > 0 else 1.0
    return PlacementDecision(x=x, expected_gain_nats=gain_x, expected_cost=cost_x,
                             objective=obj_x, sup_objective=sup, efficiency_ratio=eff)
