"""Built-in invariant suite behind the ``verify`` CLI subcommand.

Each check is self-contained and deterministic (fixed internal seeds) and
returns (name, passed, detail).  The CLI exits 2 when any check fails.
"""

from __future__ import annotations

import numpy as np

from .config import config_from_dict
from .diagnostics import gain_cost_ratio, rho
from .harness import run_experiment
from .models import PsychometricModel, outcome_linear_cost
from .posterior import bayes_update, differential_entropy, regular_grid, uniform_posterior
from .strategies import expected_information_gain, information_gain_kl_form


def _random_posterior(rng, cells=64, lower=0.0, upper=100.0):
    grid = regular_grid([lower], [upper], cells)
    post = uniform_posterior(grid)
    return posterior_jitter(post, rng)


def posterior_jitter(post, rng):
    lw = post.log_weights + rng.normal(0.0, 2.0, size=post.grid.n_cells)
    from .posterior import GridPosterior, _log_normalize
    return GridPosterior(grid=post.grid, log_weights=_log_normalize(lw))


def check_normalization() -> tuple[str, bool, str]:
    rng = np.random.default_rng(7)
    model = PsychometricModel()
    post = _random_posterior(rng)
    worst = 0.0
    for _ in range(50):
        x = float(rng.uniform(0, 100))
        y = float(rng.integers(2))
        post = bayes_update(post, model, x, y)
        worst = max(worst, post.mass_check())
    ok = worst < 1e-12
    return "normalization preserved by updates", ok, f"max |mass-1| = {worst:.3e}"


def check_two_form_agreement() -> tuple[str, bool, str]:
    rng = np.random.default_rng(11)
    model = PsychometricModel()
    worst = 0.0
    for _ in range(25):
        post = _random_posterior(rng)
        x = float(rng.uniform(0, 100))
        a = expected_information_gain(post, model, x)
        b = information_gain_kl_form(post, model, x)
        worst = max(worst, abs(a - b))
    ok = worst < 1e-10
    return "mutual information two-form agreement", ok, f"max |diff| = {worst:.3e}"


def check_rho_additivity() -> tuple[str, bool, str]:
    rng = np.random.default_rng(13)
    ok = True
    worst = 0.0
    for _ in range(50):
        a = int(rng.integers(0, 100))
        b = a + 1 + int(rng.integers(1, 200))
        c = b + 1 + int(rng.integers(1, 200))
        members = set(int(v) for v in rng.integers(a, c, size=c - a))
        K = members.__contains__
        lhs = rho(K, a, c)
        rhs = ((b - a) * rho(K, a, b) + (c - b) * rho(K, b, c)) / (c - a)
        err = abs(lhs - rhs)
        worst = max(worst, err)
        ok = ok and err < 1e-15
    return "proportion measure additivity", ok, f"max |diff| = {worst:.3e}"


def _short_run(seed=0, trials=300):
    cfg = config_from_dict({
        "model": {"kind": "psychometric", "grid_cells": 256, "candidates": 64},
        "strategy": {"kind": "greedy-info"},
        "run": {"theta0": "50", "trials": trials, "seed": seed},
    })
    return run_experiment(cfg)


def check_telescoping_gains() -> tuple[str, bool, str]:
    res = _short_run()
    trace = res.replicates[0].trace
    grid = regular_grid([0.0], [100.0], 256)
    h0 = differential_entropy(uniform_posterior(grid))
    err = abs(float(np.sum(trace.gain_nats)) - (h0 - float(trace.entropy_nats[-1])))
    ok = err < 1e-8
    return "realized gains telescope to the entropy drop", ok, f"|diff| = {err:.3e}"


def check_determinism() -> tuple[str, bool, str]:
    a = _short_run(seed=123).replicates[0].trace
    b = _short_run(seed=123).replicates[0].trace
    same = all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("x", "y", "cost", "cum_cost", "gain_nats", "entropy_nats"))
    return "identical seed reproduces the trace bit-for-bit", same, ""


def check_cost_bounds() -> tuple[str, bool, str]:
    cost = outcome_linear_cost(1.0, 3.0)
    rng = np.random.default_rng(17)
    draws = np.array([cost.sample(float(rng.integers(2)), 50.0, rng) for _ in range(100_000)])
    in_range = bool(np.all((draws >= cost.gamma_lower) & (draws <= cost.upper)))

    cfg = config_from_dict({
        "model": {"kind": "psychometric", "grid_cells": 256, "candidates": 64},
        "cost": {"kind": "outcome-linear", "base": 1.0, "penalty": 3.0},
        "strategy": {"kind": "myopic-gain-per-cost"},
        "run": {"theta0": "50", "trials": 400, "seed": 3},
    })
    trace = run_experiment(cfg).replicates[0].trace
    t = np.arange(1, len(trace) + 1)
    gamma = cost.gamma_lower - 1e-12
    linear = bool(np.all(trace.cum_cost >= gamma * t)
                  and np.all(trace.cum_cost <= cost.upper * t + 1e-9))
    ok = in_range and linear
    return "costs bounded and cumulative cost linear in t", ok, ""


ALL_CHECKS = (
    check_normalization,
    check_two_form_agreement,
    check_rho_additivity,
    check_telescoping_gains,
    check_determinism,
    check_cost_bounds,
)


def run_all(quiet: bool = False) -> list[tuple[str, bool, str]]:
    results = []
    for check in ALL_CHECKS:
        name, ok, detail = check()
        results.append((name, ok, detail))
        if not quiet:
            status = "PASS" if ok else "FAIL"
            suffix = f" ({detail})" if detail else ""
            print(f"[{status}] {name}{suffix}")
    return results
