"""Observation models and cost models.

Each observation model exposes log-likelihoods, analytic first/second
derivatives, Fisher information, inverse-CDF outcome sampling, and two
discrete outcome representations:

* ``outcome_expectation_table(theta, x)`` -- outcome values and probabilities
  for expectations under p(y | theta, x).  Exact for finite outcome sets;
  Gauss-Hermite nodes for Gaussian outcomes (exact for polynomial
  integrands).
* ``outcome_table(post, x)`` -- a single outcome discretization shared
  across all grid cells, used for predictive distributions and expected
  information gain.

Models are immutable; random generators are always passed in, never stored.
Cost randomness depends on the parameter only through the outcome: cost
sampling receives ``(y, x, rng)`` and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, ndtri

from .errors import ModelViolationError
from .posterior import GridPosterior, ParameterGrid, regular_grid

_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GH_CACHE:
        z, w = np.polynomial.hermite.hermgauss(n)
        _GH_CACHE[n] = (z, w / np.sqrt(np.pi))
    return _GH_CACHE[n]


def log_sigmoid(u):
    """log(1 / (1 + e^-u)), stable for large |u|."""
    return -np.logaddexp(0.0, -np.asarray(u, dtype=float))


def sigmoid_slope(u):
    """d/du of the logistic function: psi(u) * (1 - psi(u)), in (0, 1/4]."""
    u = np.asarray(u, dtype=float)
    return expit(u) * expit(-u)


def fisher_psychometric(theta: float, x: float) -> float:
    """Fisher information of a logistic detection trial: e^u / (1+e^u)^2."""
    return float(sigmoid_slope(theta - x))


@dataclass(frozen=True)
class PsychometricModel:
    """Binary detection model: p(y=1 | theta, x) = 1 / (1 + e^{-(theta-x)}).

    theta is the detection threshold, x the stimulus intensity; both live on
    the same interval.  The observed information is outcome-free, so the
    per-trial negative Hessian equals the Fisher information exactly.
    """

    lower: float = 0.0
    upper: float = 100.0

    n_params: int = field(default=1, init=False)
    binary: bool = field(default=True, init=False)
    derivative_bound: float = field(default=1.0, init=False)

    @property
    def param_lower(self) -> np.ndarray:
        return np.array([self.lower])

    @property
    def param_upper(self) -> np.ndarray:
        return np.array([self.upper])

    def default_grid(self, cells: int = 1024) -> ParameterGrid:
        return regular_grid([self.lower], [self.upper], cells)

    def candidate_placements(self, count: int = 512) -> np.ndarray:
        return np.linspace(self.lower, self.upper, count)

    def outcome_values(self, x) -> np.ndarray:
        return np.array([0.0, 1.0])

    def p1_grid(self, points: np.ndarray, x: float) -> np.ndarray:
        return expit(points[:, 0] - x)

    def p1_table(self, points: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Detection probabilities for every (grid cell, candidate) pair."""
        return expit(points[:, 0][:, None] - np.asarray(xs)[None, :])

    def loglik(self, y, theta, x) -> float:
        u = float(np.atleast_1d(theta)[0]) - x
        return float(log_sigmoid(u) if y == 1 else log_sigmoid(-u))

    def loglik_grid(self, y, points: np.ndarray, x) -> np.ndarray:
        u = points[:, 0] - x
        return log_sigmoid(u) if y == 1 else log_sigmoid(-u)

    def score(self, y, theta, x) -> np.ndarray:
        u = float(np.atleast_1d(theta)[0]) - x
        return np.array([y - expit(u)])

    def neg_hessian(self, y, theta, x) -> np.ndarray:
        u = float(np.atleast_1d(theta)[0]) - x
        return np.array([[sigmoid_slope(u)]])

    def fisher(self, theta, x) -> np.ndarray:
        u = float(np.atleast_1d(theta)[0]) - x
        return np.array([[sigmoid_slope(u)]])

    def outcome_expectation_table(self, theta, x):
        p1 = expit(float(np.atleast_1d(theta)[0]) - x)
        return self.outcome_values(x), np.array([1.0 - p1, p1])

    def outcome_table(self, post: GridPosterior, x):
        p1 = self.p1_grid(post.grid.points, x)
        return self.outcome_values(x), np.stack([1.0 - p1, p1])

    def sample(self, theta, x, rng) -> float:
        p1 = expit(float(np.atleast_1d(theta)[0]) - x)
        u = rng.random()
        return 0.0 if u < 1.0 - p1 else 1.0


@dataclass(frozen=True)
class LinearGaussianModel:
    """y = theta . phi(x) + noise, noise ~ N(0, sigma^2).

    Placements are indices into a finite list of feature vectors.  Fisher
    information phi phi^T / sigma^2 does not depend on theta, and the
    observed information is outcome-free.  Outcome integrals use
    Gauss-Hermite quadrature.
    """

    features: np.ndarray
    sigma: float = 1.0
    lower: np.ndarray = None
    upper: np.ndarray = None
    quadrature_nodes: int = 32

    binary: bool = field(default=False, init=False)

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        object.__setattr__(self, "features", feats)
        n = feats.shape[1]
        lo = np.full(n, -1.0) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(n, 1.0) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def n_params(self) -> int:
        return self.features.shape[1]

    @property
    def param_lower(self) -> np.ndarray:
        return self.lower

    @property
    def param_upper(self) -> np.ndarray:
        return self.upper

    @property
    def derivative_bound(self) -> float:
        # Score magnitude over the quadrature-supported outcome range.
        z, _ = _gauss_hermite(self.quadrature_nodes)
        span = float(np.sqrt(2.0) * np.max(np.abs(z)) * self.sigma)
        box = float(np.max(np.linalg.norm(np.stack([self.lower, self.upper]), axis=1)))
        fmax = float(np.max(np.linalg.norm(self.features, axis=1)))
        reach = span + 2.0 * fmax * box
        return max(fmax * reach / self.sigma**2, fmax**2 / self.sigma**2) * 1.05

    def candidate_placements(self, count: Optional[int] = None) -> np.ndarray:
        return np.arange(self.features.shape[0])

    def phi(self, x) -> np.ndarray:
        return self.features[int(x)]

    def loglik(self, y, theta, x) -> float:
        mu = float(np.dot(np.atleast_1d(theta), self.phi(x)))
        return float(-0.5 * ((y - mu) / self.sigma) ** 2 - 0.5 * np.log(2 * np.pi * self.sigma**2))

    def loglik_grid(self, y, points: np.ndarray, x) -> np.ndarray:
        mu = points @ self.phi(x)
        return -0.5 * ((y - mu) / self.sigma) ** 2 - 0.5 * np.log(2 * np.pi * self.sigma**2)

    def score(self, y, theta, x) -> np.ndarray:
        phi = self.phi(x)
        mu = float(np.dot(np.atleast_1d(theta), phi))
        return (y - mu) / self.sigma**2 * phi

    def neg_hessian(self, y, theta, x) -> np.ndarray:
        phi = self.phi(x)
        return np.outer(phi, phi) / self.sigma**2

    def fisher(self, theta, x) -> np.ndarray:
        phi = self.phi(x)
        return np.outer(phi, phi) / self.sigma**2

    def outcome_expectation_table(self, theta, x):
        z, w = _gauss_hermite(self.quadrature_nodes)
        mu = float(np.dot(np.atleast_1d(theta), self.phi(x)))
        return mu + np.sqrt(2.0) * self.sigma * z, w.copy()

    def outcome_table(self, post: GridPosterior, x):
        """Quadrature nodes matched to the posterior-predictive envelope.

        Column k of the table holds a proper conditional pmf over the nodes
        for grid cell k, so downstream identities (two forms of the mutual
        information, predictive normalization) hold exactly on the
        discretization.
        """
        z, w = _gauss_hermite(self.quadrature_nodes)
        phi = self.phi(x)
        mu_cells = post.grid.points @ phi
        wts = post.weights
        m_hat = float(wts @ mu_cells)
        spread = float(wts @ (mu_cells - m_hat) ** 2)
        s_hat = np.sqrt(self.sigma**2 + spread)
        values = m_hat + np.sqrt(2.0) * s_hat * z
        # ratio of conditional density to the envelope density, times node weight
        resid_env = (values - m_hat) / s_hat
        log_env = -0.5 * resid_env**2 - np.log(s_hat)
        resid = (values[:, None] - mu_cells[None, :]) / self.sigma
        log_cond = -0.5 * resid**2 - np.log(self.sigma)
        cond = w[:, None] * np.exp(log_cond - log_env[:, None])
        cond /= cond.sum(axis=0, keepdims=True)
        return values, cond

    def sample(self, theta, x, rng) -> float:
        mu = float(np.dot(np.atleast_1d(theta), self.phi(x)))
        return mu + self.sigma * float(ndtri(rng.random()))


@dataclass(frozen=True, order=True)
class Question:
    """Membership query over a contiguous block of states: is theta in [lo, hi)?

    ``cost_tier`` tags the question for tiered cost models; ordering (and
    hence tie-breaking) is by (lo, hi, cost_tier).
    """

    lo: float
    hi: float
    cost_tier: int = 0

    @property
    def trace_value(self) -> float:
        return float(self.lo)


@dataclass(frozen=True)
class TwentyQuestionsModel:
    """Noiseless membership queries over a uniform discrete state space.

    States are the integers 1..2^m.  A question x is a state subset
    (realized as a contiguous block); the outcome is the indicator of
    membership.  The model is not smooth, so derivative and Fisher queries
    return zeros; it exists to exercise gain/cost accounting where each
    balanced split of a uniform support gains exactly log 2.
    """

    m: int = 16

    n_params: int = field(default=1, init=False)
    binary: bool = field(default=True, init=False)
    derivative_bound: float = field(default=0.0, init=False)

    @property
    def n_states(self) -> int:
        return 2**self.m

    @property
    def param_lower(self) -> np.ndarray:
        return np.array([0.5])

    @property
    def param_upper(self) -> np.ndarray:
        return np.array([self.n_states + 0.5])

    def default_grid(self, cells: Optional[int] = None) -> ParameterGrid:
        n = self.n_states
        pts = np.arange(1, n + 1, dtype=float)[:, None]
        return ParameterGrid(points=pts, spacing=np.array([1.0]),
                             lower=np.array([0.5]), upper=np.array([n + 0.5]))

    def outcome_values(self, x) -> np.ndarray:
        return np.array([0.0, 1.0])

    def _member(self, points: np.ndarray, q: Question) -> np.ndarray:
        v = points[:, 0]
        return (v >= q.lo) & (v < q.hi)

    def loglik(self, y, theta, x) -> float:
        v = float(np.atleast_1d(theta)[0])
        inside = (v >= x.lo) and (v < x.hi)
        return 0.0 if inside == bool(y) else -np.inf

    def loglik_grid(self, y, points: np.ndarray, x) -> np.ndarray:
        member = self._member(points, x)
        match = member == bool(y)
        out = np.where(match, 0.0, -np.inf)
        return out

    def score(self, y, theta, x) -> np.ndarray:
        return np.zeros(1)

    def neg_hessian(self, y, theta, x) -> np.ndarray:
        return np.zeros((1, 1))

    def fisher(self, theta, x) -> np.ndarray:
        return np.zeros((1, 1))

    def outcome_expectation_table(self, theta, x):
        inside = (float(np.atleast_1d(theta)[0]) >= x.lo) and (float(np.atleast_1d(theta)[0]) < x.hi)
        probs = np.array([0.0, 1.0]) if inside else np.array([1.0, 0.0])
        return self.outcome_values(x), probs

    def outcome_table(self, post: GridPosterior, x):
        member = self._member(post.grid.points, x).astype(float)
        return self.outcome_values(x), np.stack([1.0 - member, member])

    def sample(self, theta, x, rng) -> float:
        _, probs = self.outcome_expectation_table(theta, x)
        u = rng.random()
        return 0.0 if u < probs[0] else 1.0

    def balanced_question(self, post: GridPosterior, cost_tier: int = 0) -> Question:
        """Prefix question covering the lower half of the current support."""
        support = np.nonzero(post.weights > 0)[0]
        vals = post.grid.points[support, 0]
        k = len(vals) // 2
        if k == 0:
            return Question(lo=vals[0], hi=vals[0], cost_tier=cost_tier)
        return Question(lo=vals[0], hi=vals[k], cost_tier=cost_tier)


@dataclass(frozen=True)
class CostModel:
    """Observation cost with bounded support.

    Kinds:
      constant        -- fixed cost per trial.
      outcome-linear  -- base + penalty * [y == 0].
      custom          -- caller-supplied expected/sample functions with
                         declared bounds.

    ``gamma_lower`` and ``upper`` are the declared bounds on expected and
    sampled costs; violations raise ModelViolationError.
    """

    kind: str = "constant"
    base: float = 1.0
    outcome_penalty: float = 0.0
    expected_fn: Optional[Callable] = None
    sample_fn: Optional[Callable] = None
    gamma_lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("constant", "outcome-linear", "custom"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "custom" and self.expected_fn is None:
            raise ValueError("custom cost models need expected_fn")
        lo, hi = self.gamma_lower, self.upper
        if self.kind == "constant":
            lo = self.base if lo is None else lo
            hi = self.base if hi is None else hi
        elif self.kind == "outcome-linear":
            cands = (self.base, self.base + self.outcome_penalty)
            lo = min(cands) if lo is None else lo
            hi = max(cands) if hi is None else hi
        if lo is None or hi is None:
            raise ValueError("custom cost models must declare gamma_lower and upper")
        if not (0 < lo <= hi):
            raise ValueError("cost bounds must satisfy 0 < gamma_lower <= upper")
        object.__setattr__(self, "gamma_lower", float(lo))
        object.__setattr__(self, "upper", float(hi))

    def cost_given_outcome(self, y, x) -> float:
        if self.kind == "constant":
            return self.base
        if self.kind == "outcome-linear":
            return self.base + self.outcome_penalty * (1.0 if y == 0 else 0.0)
        return float(self.expected_fn(y, x))

    def outcome_costs(self, values: np.ndarray, x) -> np.ndarray:
        return np.array([self.cost_given_outcome(v, x) for v in values])

    def sample(self, y, x, rng) -> float:
        if self.kind == "custom" and self.sample_fn is not None:
            c = float(self.sample_fn(y, x, rng))
        else:
            c = self.cost_given_outcome(y, x)
        if not (0 < c <= self.upper + 1e-12):
            raise ModelViolationError(f"sampled cost {c} outside (0, {self.upper}]")
        return c


def constant_cost(value: float = 1.0) -> CostModel:
    return CostModel(kind="constant", base=value)


def outcome_linear_cost(base: float = 1.0, penalty: float = 3.0) -> CostModel:
    """Cost base + penalty on non-detection: e.g. 1 + 3 [y == 0]."""
    return CostModel(kind="outcome-linear", base=base, outcome_penalty=penalty)


def expected_cost_at(cost: CostModel, model, x, theta) -> float:
    """Expected cost at placement x when the true parameter is theta."""
    values, probs = model.outcome_expectation_table(theta, x)
    v = float(probs @ cost.outcome_costs(values, x))
    if not (0 < v <= cost.upper + 1e-12):
        raise ModelViolationError(f"expected cost {v} outside (0, {cost.upper}]")
    return v


def fisher_numeric(model, theta, x, step: float = 1e-5) -> np.ndarray:
    """Fisher information from central-finite-difference scores.

    Sums s s^T over the model's outcome expectation table; exact over
    outcomes for finite outcome sets.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n = theta.shape[0]
    values, probs = model.outcome_expectation_table(theta, x)
    fim = np.zeros((n, n))
    for val, p in zip(values, probs):
        if p == 0.0:
            continue
        s = np.empty(n)
        for d in range(n):
            up = theta.copy()
            dn = theta.copy()
            up[d] += step
            dn[d] -= step
            s[d] = (model.loglik(val, up, x) - model.loglik(val, dn, x)) / (2 * step)
        fim += p * np.outer(s, s)
    return 0.5 * (fim + fim.T)


def sample_outcome(model, theta, x, rng) -> float:
    """Draw one outcome at placement x; deterministic given the rng state."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(theta < model.param_lower - 1e-12) or np.any(theta > model.param_upper + 1e-12):
        raise ValueError("theta outside model bounds")
    return model.sample(theta, x, rng)
