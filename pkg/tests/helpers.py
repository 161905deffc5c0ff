"""Shared test fixtures: oracle models and brute-force searches."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from seqgain import posterior_from_density, regular_grid


def gaussian_posterior(grid, mu, sd):
    d = np.exp(-0.5 * ((grid.points[:, 0] - mu) / sd) ** 2)
    return posterior_from_density(grid, d)


def fine_grid(lo=40.0, hi=60.0, cells=8000):
    return regular_grid([lo], [hi], cells)


@dataclass(frozen=True)
class SineGaussianModel:
    """y = amp * sin(theta * x) + noise; observed information depends on y.

    The negative Hessian (g'^2 - (y - g) g'') / sigma^2 carries a zero-mean
    outcome term, unlike the logistic and linear-Gaussian models whose
    observed information is deterministic.  Used to exercise the martingale
    averaging of per-trial information.
    """

    amp: float = 1.0
    sigma: float = 0.5
    n_params: int = field(default=1, init=False)
    binary: bool = field(default=False, init=False)
    derivative_bound: float = field(default=100.0, init=False)

    @property
    def param_lower(self):
        return np.array([0.0])

    @property
    def param_upper(self):
        return np.array([3.0])

    def _g(self, theta, x):
        return self.amp * np.sin(theta * x)

    def _g1(self, theta, x):
        return self.amp * x * np.cos(theta * x)

    def _g2(self, theta, x):
        return -self.amp * x * x * np.sin(theta * x)

    def loglik(self, y, theta, x):
        th = float(np.atleast_1d(theta)[0])
        r = (y - self._g(th, x)) / self.sigma
        return float(-0.5 * r * r - 0.5 * np.log(2 * np.pi * self.sigma**2))

    def loglik_grid(self, y, points, x):
        r = (y - self._g(points[:, 0], x)) / self.sigma
        return -0.5 * r * r - 0.5 * np.log(2 * np.pi * self.sigma**2)

    def score(self, y, theta, x):
        th = float(np.atleast_1d(theta)[0])
        return np.array([(y - self._g(th, x)) * self._g1(th, x) / self.sigma**2])

    def neg_hessian(self, y, theta, x):
        th = float(np.atleast_1d(theta)[0])
        v = (self._g1(th, x) ** 2 - (y - self._g(th, x)) * self._g2(th, x)) / self.sigma**2
        return np.array([[v]])

    def fisher(self, theta, x):
        th = float(np.atleast_1d(theta)[0])
        return np.array([[self._g1(th, x) ** 2 / self.sigma**2]])

    def outcome_expectation_table(self, theta, x):
        z, w = np.polynomial.hermite.hermgauss(32)
        th = float(np.atleast_1d(theta)[0])
        return self._g(th, x) + np.sqrt(2.0) * self.sigma * z, w / np.sqrt(np.pi)

    def sample(self, theta, x, rng):
        th = float(np.atleast_1d(theta)[0])
        return self._g(th, x) + self.sigma * float(ndtri(rng.random()))


@dataclass(frozen=True)
class TableModel:
    """Finite-outcome model given by explicit likelihood tables per placement.

    ``tables[j]`` has shape (n_outcomes, n_cells) with columns summing to 1.
    Placements are indices.  Lets property tests range over arbitrary
    finite-outcome likelihood shapes.
    """

    tables: tuple
    binary: bool = field(default=False, init=False)
    n_params: int = field(default=1, init=False)

    def outcome_values(self, x):
        return np.arange(self.tables[int(x)].shape[0], dtype=float)

    def outcome_table(self, post, x):
        return self.outcome_values(x), self.tables[int(x)]

    def outcome_expectation_table(self, theta, x):
        raise NotImplementedError("table models are posterior-level only")

    def loglik_grid(self, y, points, x):
        with np.errstate(divide="ignore"):
            return np.log(self.tables[int(x)][int(y)])


def simplex_grid_search(infos, resolution=1e-3):
    """Brute-force max of log det over simplex weights at fixed resolution.

    Enumerates every weight vector on the grid for up to four candidates
    (n <= 2) and returns (best log det, best weights).
    """
    infos = np.asarray(infos, dtype=float)
    if infos.ndim == 1:
        infos = infos[:, None, None]
    m, n, _ = infos.shape
    s = int(round(1.0 / resolution))
    flat = infos.reshape(m, n * n)
    best_ld, best_w = -np.inf, None

    def consider(W):
        nonlocal best_ld, best_w
        B = W @ flat
        dets = B[:, 0] if n == 1 else B[:, 0] * B[:, 3] - B[:, 1] * B[:, 2]
        k = int(np.argmax(dets))
        if dets[k] > 0 and np.log(dets[k]) > best_ld:
            best_ld = float(np.log(dets[k]))
            best_w = W[k].copy()

    if m == 1:
        consider(np.ones((1, 1)))
    elif m == 2:
        a = np.arange(s + 1) / s
        consider(np.stack([a, 1 - a], axis=1))
    elif m == 3:
        for i in range(s + 1):
            b = np.arange(s + 1 - i) / s
            consider(np.stack([np.full(len(b), i / s), b, 1 - i / s - b], axis=1))
    elif m == 4:
        for i in range(s + 1):
            r = s - i
            counts = np.arange(r + 1, 0, -1)
            j = np.repeat(np.arange(r + 1), counts)
            starts = np.cumsum(counts) - counts
            k = np.arange(len(j)) - np.repeat(starts, counts)
            consider(np.stack([np.full(len(j), i / s), j / s, k / s,
                               1 - i / s - j / s - k / s], axis=1))
    else:
        raise ValueError("oracle supports at most 4 candidates")
    return best_ld, best_w
