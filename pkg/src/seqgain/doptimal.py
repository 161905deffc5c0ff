"""Reference designs: maximize det of the averaged information matrix.

Given candidate information matrices (optionally divided by their expected
cost), the solver finds simplex weights maximizing log det of the weighted
average.  The gradient of log det at B in the direction of candidate j is
tr(B^-1 I_j), and optimality is certified by the equivalence-theorem gap

    gap = max_j tr(B^-1 I_j) - n  <= tol.

The iteration combines the classical multiplicative weight update
w_j <- w_j * tr(B^-1 I_j) / n (monotone, good global progress) with
vertex-exchange steps that move weight from the worst supported candidate
to the best candidate under an exact line search (fast tail convergence,
including when candidates are nearly collinear).  A fixed 2/(k+2) step
toward the best vertex cannot certify gaps near 1e-8 in reasonable
iteration counts when the optimum sits on a face, so it is not used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import DegenerateDesignError
from .models import expected_cost_at


@dataclass(frozen=True, eq=False)
class CandidateInformationSet:
    """Candidate placements with their information matrices and expected costs.

    ``normalization``: "unit-cost" optimizes det of the averaged information;
    "per-cost" divides each matrix by its expected cost first.
    """

    placements: list
    infos: np.ndarray
    expected_costs: np.ndarray
    normalization: str = "unit-cost"

    def __post_init__(self):
        infos = np.asarray(self.infos, dtype=float)
        if infos.ndim == 1:
            infos = infos[:, None, None]
        object.__setattr__(self, "infos", infos)
        costs = np.asarray(self.expected_costs, dtype=float)
        object.__setattr__(self, "expected_costs", costs)
        if self.normalization not in ("unit-cost", "per-cost"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if infos.shape[0] != len(self.placements) or costs.shape[0] != infos.shape[0]:
            raise ValueError("placements, infos and costs must align")
        if np.any(costs <= 0):
            raise ValueError("expected costs must be positive")

    @property
    def n_params(self) -> int:
        return self.infos.shape[1]

    def effective_infos(self) -> np.ndarray:
        if self.normalization == "per-cost":
            return self.infos / self.expected_costs[:, None, None]
        return self.infos


@dataclass(frozen=True, eq=False)
class DesignWeights:
    """Solver output: weights on the simplex and the optimal averaged matrix."""

    weights: np.ndarray
    B_star: np.ndarray
    log_det: float
    H_star_nats: float
    gap: float
    converged: bool
    iterations: int
    normalization: str = "unit-cost"


def _log_det_chol(B: np.ndarray) -> float:
    """log det via Cholesky; -inf when not positive definite."""
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        return -np.inf
    return float(2.0 * np.sum(np.log(np.diag(L))))


def h_star(B_star: np.ndarray) -> float:
    """Asymptotic entropy constant -1/2 log det(B) + (n/2) log(2 pi e)."""
    B = np.atleast_2d(np.asarray(B_star, dtype=float))
    n = B.shape[0]
    ld = _log_det_chol(B)
    if not np.isfinite(ld):
        raise ValueError("matrix must be positive definite")
    return float(-0.5 * ld + 0.5 * n * np.log(2.0 * np.pi * np.e))


def _exchange_delta(B: np.ndarray, D: np.ndarray, lo: float, hi: float) -> float:
    """Maximize log det(B + delta * D) for delta in [lo, hi].

    Uses the generalized eigenvalues of (D, B): the objective derivative is
    sum_i lam_i / (1 + delta * lam_i), which is decreasing in delta.
    """
    from scipy.linalg import eigh

    lam = eigh(D, B, eigvals_only=True)

    def deriv(delta):
        return float(np.sum(lam / (1.0 + delta * lam)))

    # keep strictly inside the PD region
    pos = lam[lam > 0]
    neg = lam[lam < 0]
    lo_pd = max(lo, -1.0 / pos.max() + 1e-12) if pos.size else lo
    hi_pd = min(hi, -1.0 / neg.min() - 1e-12) if neg.size else hi
    if hi_pd <= lo_pd:
        return 0.0
    if deriv(hi_pd) >= 0:
        return hi_pd
    if deriv(lo_pd) <= 0:
        return lo_pd
    a, b = lo_pd, hi_pd
    for _ in range(200):
        mid = 0.5 * (a + b)
        if deriv(mid) > 0:
            a = mid
        else:
            b = mid
        if b - a < 1e-18 * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def solve_doptimal(cands: CandidateInformationSet, tol: float = 1e-8,
                   max_iter: int = 100_000) -> DesignWeights:
    """Maximize log det over the simplex; returns the gap certificate.

    Raises DegenerateDesignError when no convex combination of candidates is
    positive definite (the uniform average is singular exactly in that
    case, since the candidates are PSD).  When the gap has not reached tol
    after max_iter updates the result is returned with converged=False.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    infos = cands.effective_infos()
    m, n, _ = infos.shape
    w = np.full(m, 1.0 / m)
    B = np.einsum("j,jab->ab", w, infos)
    if not np.isfinite(_log_det_chol(B)):
        raise DegenerateDesignError("no positive-definite combination of candidates")

    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Binv = np.linalg.inv(B)
        d = np.einsum("ab,jab->j", Binv, infos)
        gap = float(np.max(d) - n)
        if gap <= tol:
            break
        if gap > 1e-2:
            # multiplicative ascent: strong global progress
            w = w * d / n
            w = np.maximum(w, 0.0)
            w /= w.sum()
        else:
            # vertex exchange: argmax-d gains weight from the worst support point
            jp = int(np.argmax(d))
            support = np.nonzero(w > 0)[0]
            jm = int(support[np.argmin(d[support])])
            if jp == jm:
                break
            delta = _exchange_delta(B, infos[jp] - infos[jm], -w[jp], w[jm])
            if delta == 0.0:
                break
            w[jp] += delta
            w[jm] -= delta
            w = np.maximum(w, 0.0)
            w /= w.sum()
        B = np.einsum("j,jab->ab", w, infos)

    B = 0.5 * (B + B.T)
    ld = _log_det_chol(B)
    return DesignWeights(
        weights=w,
        B_star=B,
        log_det=ld,
        H_star_nats=float(-0.5 * ld + 0.5 * n * np.log(2.0 * np.pi * np.e)),
        gap=gap,
        converged=gap <= tol,
        iterations=it,
        normalization=cands.normalization,
    )


def candidate_information_set(model, theta0, placements: Sequence, cost=None,
                              normalization: str = "unit-cost") -> CandidateInformationSet:
    """Evaluate Fisher matrices (and expected costs) at the true parameter."""
    infos = np.stack([model.fisher(theta0, x) for x in placements])
    if cost is None:
        costs = np.ones(len(placements))
    else:
        costs = np.array([expected_cost_at(cost, model, x, theta0) for x in placements])
    return CandidateInformationSet(placements=list(placements), infos=infos,
                                   expected_costs=costs, normalization=normalization)


def refine_scalar_optimum(model, theta0, cost=None, bounds=None) -> float:
    """Continuous-placement polish of the best scalar candidate.

    Maximizes the scalar Fisher information (or information per expected
    cost) over the placement interval; used to augment finite candidate
    grids, whose resolution otherwise caps the reference value.
    """
    lo, hi = bounds if bounds is not None else (model.lower, model.upper)

    def neg_objective(x):
        v = float(model.fisher(theta0, x)[0, 0])
        if cost is not None:
            v /= expected_cost_at(cost, model, x, theta0)
        return -v

    res = minimize_scalar(neg_objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def offline_reference(model, theta0, placements: Optional[Sequence] = None,
                      weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Averaged Fisher matrix of a fixed (posterior-blind) design at theta0.

    With explicit placements, averages fisher(theta0, x) under the given
    weights (uniform when omitted).  Without placements, averages over the
    model's full placement set: an exact integral over the interval for
    scalar-placement models, a uniform average over finite placement sets.
    """
    if placements is not None:
        infos = np.stack([model.fisher(theta0, x) for x in placements])
        if weights is None:
            weights = np.full(len(placements), 1.0 / len(placements))
        weights = np.asarray(weights, dtype=float)
        if weights.shape[0] != infos.shape[0] or abs(weights.sum() - 1.0) > 1e-10 or np.any(weights < 0):
            raise ValueError("weights must be a distribution over placements")
        return np.einsum("j,jab->ab", weights, infos)

    if hasattr(model, "candidate_placements") and getattr(model, "n_params", 1) == 1 \
            and hasattr(model, "lower"):
        lo, hi = model.lower, model.upper
        val, _ = quad(lambda x: float(model.fisher(theta0, x)[0, 0]), lo, hi,
                      limit=200, epsabs=1e-12, epsrel=1e-12)
        return np.array([[val / (hi - lo)]])

    placements = model.candidate_placements()
    return offline_reference(model, theta0, placements=placements)
