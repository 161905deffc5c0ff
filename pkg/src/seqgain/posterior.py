"""Discretized posterior over a compact box of parameters.

The posterior is represented by log cell masses on a regular grid of cell
centers.  All operations are pure: they take a posterior and return a new
one, so values can be shared freely between concurrent replicates.

Entropy is reported in nats relative to Lebesgue measure: the discrete
entropy of the cell masses plus ``log(cell_volume)``.  With that correction
the value is comparable across grid resolutions and to the asymptotic
constant produced by :func:`seqgain.doptimal.h_star`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindowError, ImpossibleObservationError

# Cells whose log mass is more than this far below the maximum are skipped
# by the vectorized gain scans; they carry < 1e-34 relative mass.
ACTIVE_LOG_SPAN = 80.0


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Regular grid of cell centers covering a compact box.

    ``points`` has shape (n_cells, n_params); spacing is constant per axis
    and every point lies strictly inside ``lower``/``upper``.
    """

    points: np.ndarray
    spacing: np.ndarray      # per-axis cell width
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("grid needs at least one point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", np.atleast_1d(np.asarray(self.spacing, dtype=float)))
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if np.any(self.spacing <= 0):
            raise ValueError("grid spacing must be positive")
        if np.any(self.upper <= self.lower):
            raise ValueError("grid bounds must have positive volume")
        if np.any(pts < self.lower - 1e-12) or np.any(pts > self.upper + 1e-12):
            raise ValueError("grid points must lie within bounds")

    @property
    def n_params(self) -> int:
        return self.points.shape[1]

    @property
    def n_cells(self) -> int:
        return self.points.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axis(self) -> np.ndarray:
        """1-D coordinate array; only valid when n_params == 1."""
        if self.n_params != 1:
            raise ValueError("axis is defined for 1-D grids only")
        return self.points[:, 0]

    def diameter(self) -> float:
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


def regular_grid(lower, upper, cells) -> ParameterGrid:
    """Build a grid of cell centers with ``cells`` cells per axis."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    cells = np.broadcast_to(np.asarray(cells, dtype=int), lower.shape)
    if np.any(cells < 1):
        raise ValueError("need at least one cell per axis")
    spacing = (upper - lower) / cells
    axes = [lo + (np.arange(c) + 0.5) * d for lo, c, d in zip(lower, cells, spacing)]
    if len(axes) == 1:
        pts = axes[0][:, None]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    return ParameterGrid(points=pts, spacing=spacing, lower=lower, upper=upper)


def _log_normalize(log_w: np.ndarray) -> np.ndarray:
    """Normalize log masses; subtracts the max before exponentiating."""
    m = np.max(log_w)
    if not np.isfinite(m):
        raise ImpossibleObservationError("all grid cells carry zero mass")
    shifted = log_w - m
    total = np.log(np.sum(np.exp(shifted)))
    return shifted - total


@dataclass(frozen=True, eq=False)
class GridPosterior:
    """Normalized log cell masses aligned with a :class:`ParameterGrid`.

    ``weights`` (exp of the log masses) and ``active_range`` are computed
    eagerly: every consumer touches them, and attribute access stays cheap
    in the per-trial loop.  ``active_range`` is the contiguous index range
    of cells within ACTIVE_LOG_SPAN of the peak; slicing scans to it
    discards < 1e-34 relative mass per cell, far below every tolerance
    used in this package.
    """

    grid: ParameterGrid
    log_weights: np.ndarray
    weights: np.ndarray = None
    active_range: tuple = None

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (self.grid.n_cells,):
            raise ValueError("log_weights must align with the grid")
        if np.any(np.isnan(lw)):
            raise ValueError("log_weights may not contain NaN")
        object.__setattr__(self, "log_weights", lw)
        with np.errstate(under="ignore"):
            object.__setattr__(self, "weights", np.exp(lw))
        mask = lw > np.max(lw) - ACTIVE_LOG_SPAN
        first = int(np.argmax(mask))
        last = int(len(mask) - np.argmax(mask[::-1]))
        object.__setattr__(self, "active_range", (first, last))

    def mass_check(self) -> float:
        return float(abs(np.sum(self.weights) - 1.0))


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Moments, entropy and mode of a grid posterior."""

    mean: np.ndarray
    covariance: np.ndarray
    entropy_nats: float
    mode: np.ndarray


def uniform_posterior(grid: ParameterGrid) -> GridPosterior:
    lw = np.full(grid.n_cells, -np.log(grid.n_cells))
    return GridPosterior(grid=grid, log_weights=lw)


def posterior_from_density(grid: ParameterGrid, density: np.ndarray) -> GridPosterior:
    """Posterior proportional to ``density`` evaluated at cell centers."""
    d = np.asarray(density, dtype=float)
    if d.shape != (grid.n_cells,):
        raise ValueError("density must align with the grid")
    if np.any(d < 0):
        raise ValueError("density values must be nonnegative")
    with np.errstate(divide="ignore"):
        lw = np.log(d)
    return GridPosterior(grid=grid, log_weights=_log_normalize(lw))


def bayes_update(post: GridPosterior, model, x, y) -> GridPosterior:
    """Condition the posterior on outcome ``y`` observed at placement ``x``.

    Raises ImpossibleObservationError when the likelihood vanishes on the
    whole grid.  The input posterior is unchanged.
    """
    loglik = model.loglik_grid(y, post.grid.points, x)
    new_lw = post.log_weights + loglik
    return GridPosterior(grid=post.grid, log_weights=_log_normalize(new_lw))


def _entropy_of(raw_weights: np.ndarray, cell_volume: float) -> float:
    """Entropy of renormalized masses plus the Lebesgue volume correction."""
    w = raw_weights / raw_weights.sum()
    nz = w > 0.0
    wn = w[nz]
    return float(-(wn @ np.log(wn)) + np.log(cell_volume))


def differential_entropy(post: GridPosterior) -> float:
    """Riemann approximation of differential entropy w.r.t. Lebesgue measure."""
    return _entropy_of(post.weights, post.grid.cell_volume)


def _moments(points: np.ndarray, raw_weights: np.ndarray):
    w = raw_weights / raw_weights.sum()
    mean = w @ points
    centered = points - mean
    cov = (centered * w[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    return mean, cov, w


def summarize(post: GridPosterior) -> PosteriorSummary:
    """Mean, covariance, entropy and mode; mode ties break to the lowest index."""
    mean, cov, _ = _moments(post.grid.points, post.weights)
    mode = post.grid.points[int(np.argmax(post.log_weights))]
    return PosteriorSummary(
        mean=mean,
        covariance=cov,
        entropy_nats=differential_entropy(post),
        mode=mode,
    )


def local_summary(post: GridPosterior, center, radius: float):
    """Summary of the posterior conditioned on the ball B(center, radius).

    Returns ``(summary, mass)`` where ``mass`` is the posterior probability
    of the ball.  Raises EmptyWindowError when the ball carries no mass.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dist = np.linalg.norm(post.grid.points - center, axis=1)
    mask = dist <= radius
    w = post.weights
    mass = float(w[mask].sum()) if mask.any() else 0.0
    if mass <= 0.0:
        raise EmptyWindowError("no posterior mass within the window")
    pts = post.grid.points[mask]
    raw = w[mask]
    mean, cov, _ = _moments(pts, raw)
    entropy = _entropy_of(raw, post.grid.cell_volume)
    sub_idx = int(np.argmax(post.log_weights[mask]))
    summary = PosteriorSummary(mean=mean, covariance=cov, entropy_nats=entropy, mode=pts[sub_idx])
    return summary, mass


def predictive(post: GridPosterior, model, x) -> np.ndarray:
    """Posterior-predictive outcome distribution at placement ``x``."""
    values, cond = model.outcome_table(post, x)
    return cond @ post.weights
