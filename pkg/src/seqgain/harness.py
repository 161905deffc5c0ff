"""Simulation runner: replicated sequential experiments with full traces.

Replicate r of a run with seed s uses the PCG64 stream seeded with s + r,
and discrete outcomes are drawn by inverse CDF, so traces are bit-identical
across repeated runs of the same configuration.  The generator name is
recorded in all output metadata.

Trace files are CSV, one row per trial, fixed versioned header; run
summaries are JSON.  See README for both schemas.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .diagnostics import AsymptoticReport, TrialTrace, build_report
from .doptimal import (DesignWeights, candidate_information_set,
                       refine_scalar_optimum, solve_doptimal)
from .errors import ImpossibleObservationError, ValidationError
from .models import (CostModel, LinearGaussianModel, PsychometricModel,
                     TwentyQuestionsModel, constant_cost, expected_cost_at,
                     outcome_linear_cost)
from .posterior import (GridPosterior, bayes_update, differential_entropy,
                        posterior_from_density, regular_grid,
                        uniform_posterior)
from .strategies import GainContext, sweep_order
from scipy.special import expit, xlogy

RNG_NAME = "numpy-pcg64"
TRACE_VERSION = "seqgain-trace-v1"
TRACE_HEADER = ("t,x,y,cost,cum_cost,gain_nats,entropy_nats,det_Bt_unit,"
                "det_Bt_cost,residual_unit,residual_cost,efficiency_ratio")


# ---------------------------------------------------------------------------
# builders

def build_model(cfg: ExperimentConfig):
    m = cfg.model
    if m.kind == "psychometric":
        return PsychometricModel(lower=m.lower, upper=m.upper)
    if m.kind == "linear-gaussian":
        return LinearGaussianModel(features=m.feature_matrix(), sigma=m.sigma,
                                   quadrature_nodes=m.quadrature_nodes)
    if m.kind == "twenty-questions":
        return TwentyQuestionsModel(m=m.m)
    raise ValidationError("model.kind", f"unknown model {m.kind!r}")


def build_grid(cfg: ExperimentConfig, model):
    if isinstance(model, TwentyQuestionsModel):
        return model.default_grid()
    return regular_grid(model.param_lower, model.param_upper, cfg.model.grid_cells)


def build_candidates(cfg: ExperimentConfig, model):
    if isinstance(model, TwentyQuestionsModel):
        return None  # questions are generated per trial from the support
    if isinstance(model, LinearGaussianModel):
        return list(model.candidate_placements())
    return list(model.candidate_placements(cfg.model.candidates))


def build_cost(cfg: ExperimentConfig) -> CostModel:
    c = cfg.cost
    if c.kind == "constant":
        return constant_cost(c.base)
    if c.kind == "outcome-linear":
        return outcome_linear_cost(c.base, c.penalty)
    tiers = c.tiers()
    return CostModel(kind="custom",
                     expected_fn=lambda y, q: tiers[q.cost_tier],
                     gamma_lower=min(tiers), upper=max(tiers))


_PRIOR_FUNCS = {name: getattr(np, name) for name in
                ("exp", "log", "sqrt", "abs", "sin", "cos", "tanh", "where", "maximum", "minimum")}


def build_prior(cfg: ExperimentConfig, grid) -> GridPosterior:
    expr = cfg.run.prior.strip()
    if expr == "uniform":
        return uniform_posterior(grid)
    theta = grid.points[:, 0] if grid.n_params == 1 else grid.points
    env = dict(_PRIOR_FUNCS)
    env["theta"] = theta
    env["pi"] = np.pi
    try:
        vals = eval(expr, {"__builtins__": {}}, env)  # density expression from config
    except Exception as exc:
        raise ValidationError("run.prior", f"cannot evaluate density expression: {exc}")
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (grid.n_cells,)).copy()
    return posterior_from_density(grid, vals)


def reference_designs(model, cost: CostModel, theta0, candidates,
                      tol: float = 1e-12):
    """Unit-cost and per-cost reference designs at the true parameter.

    For scalar placement intervals the finite candidate grid is augmented
    with the continuous argmax of the (cost-normalized) information, since
    grid spacing otherwise caps the achievable optimum.  Returns
    (unit, per_cost) DesignWeights, or (None, None) for non-smooth models.
    """
    if isinstance(model, TwentyQuestionsModel):
        return None, None
    placements = list(candidates)
    if isinstance(model, PsychometricModel):
        polished_unit = refine_scalar_optimum(model, theta0)
        polished_cost = refine_scalar_optimum(model, theta0, cost=cost)
        placements = sorted(set(float(x) for x in placements)
                            | {float(polished_unit), float(polished_cost)})
    unit = solve_doptimal(candidate_information_set(
        model, theta0, placements, cost=None, normalization="unit-cost"), tol=tol)
    per_cost = solve_doptimal(candidate_information_set(
        model, theta0, placements, cost=cost, normalization="per-cost"), tol=tol)
    return unit, per_cost


# ---------------------------------------------------------------------------
# single-replicate simulation


def _binary_entropy(p: float) -> float:
    return float(-xlogy(p, p) - xlogy(1.0 - p, 1.0 - p))


def _fast_entropy(post: GridPosterior) -> float:
    """Entropy of a freshly normalized posterior via its active cell range.

    Equal to :func:`differential_entropy` to ~1e-15; falls back to the exact
    path when the slice contains zero-mass cells (non-contiguous support).
    """
    a, b = post.active_range
    w = post.weights[a:b]
    h = float(-(w @ post.log_weights[a:b]) + np.log(post.grid.cell_volume))
    if not np.isfinite(h):
        return differential_entropy(post)
    return h


def _draw_theta0(prior: GridPosterior, rng) -> np.ndarray:
    u = rng.random()
    cdf = np.cumsum(prior.weights)
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, prior.grid.n_cells - 1)
    return prior.grid.points[idx]


@dataclass
class ReplicateResult:
    seed: int
    theta0: np.ndarray
    trace: Optional[TrialTrace]
    report: Optional[AsymptoticReport]
    flags: tuple = ()
    trace_path: Optional[str] = None


@dataclass
class RunResult:
    config: ExperimentConfig
    replicates: list
    reference_unit: Optional[DesignWeights]
    reference_cost: Optional[DesignWeights]
    aggregate: dict
    rng_name: str = RNG_NAME


def _simulate_replicate(model, cost, cfg: ExperimentConfig, prior, theta0,
                        candidates, ctx: Optional[GainContext], rng):
    """Run one replicate loop; returns (trace, flags)."""
    strategy = cfg.strategy.kind
    cost_in_objective = strategy == "myopic-gain-per-cost"
    T = cfg.run.trials
    budget = cfg.run.budget
    cap = T if T >= 1 else int(math.ceil(budget / cost.gamma_lower)) + 1

    tq = isinstance(model, TwentyQuestionsModel)
    n = model.n_params
    xs = np.empty(cap)
    ys = np.empty(cap)
    costs = np.empty(cap)
    cums = np.empty(cap)
    gains = np.empty(cap)
    ents = np.empty(cap)
    effs = np.empty(cap)
    oinfo = np.empty((cap, n, n))
    ftruth = np.empty((cap, n, n))
    ectruth = np.empty(cap)

    post = prior
    h_prev = differential_entropy(post)
    cum = 0.0
    overrun = None
    flags = []
    order = sweep_order(len(candidates)) if (candidates is not None and strategy == "offline-uniform") else None
    if tq:
        tq_order = sweep_order(2) if strategy == "offline-uniform" else None

    # hot-path shortcuts for the logistic detection model
    psy = isinstance(model, PsychometricModel)
    cost_simple = cost.kind in ("constant", "outcome-linear")
    c_base, c_pen = cost.base, cost.outcome_penalty if cost.kind == "outcome-linear" else 0.0
    theta0_s = float(np.atleast_1d(theta0)[0]) if psy else None

    t = 0
    while t < cap:
        # --- choose a placement
        if tq:
            qs = [model.balanced_question(post, cost_tier=0),
                  model.balanced_question(post, cost_tier=1)]
            a, b = post.active_range
            vals = post.grid.points[a:b, 0]
            w = post.weights[a:b]
            g2 = np.array([float(w[(vals >= q.lo) & (vals < q.hi)].sum()) for q in qs])
            gvec = np.array([_binary_entropy(p) for p in g2])
            support_lo, support_hi = float(vals[0]), float(vals[-1])
            cvec = np.array([cost.cost_given_outcome(0.0, q) for q in qs])
            obj = gvec / cvec if cost_in_objective else gvec
            if strategy == "myopic-gain-per-cost":
                idx = int(np.argmax(obj))
            elif strategy == "greedy-info":
                idx = int(np.argmax(gvec))
            elif strategy == "offline-uniform":
                idx = int(tq_order[t % 2])
            elif strategy == "random-uniform":
                idx = int(rng.integers(2))
            else:
                raise ValidationError("strategy.kind", "fixed-x is undefined for twenty-questions")
            x = qs[idx]
            gain_exp, cost_exp = float(gvec[idx]), float(cvec[idx])
            sup = float(np.max(obj))
            eff = float(obj[idx]) / sup if sup > 0 else 1.0
            x_rec = x.trace_value
        else:
            gvec = ctx.gain_profile(post)
            cvec = ctx.cost_profile(post) if cost_in_objective else None
            obj = gvec / cvec if cost_in_objective else gvec
            if strategy == "greedy-info" or strategy == "myopic-gain-per-cost":
                idx = int(np.argmax(obj))
            elif strategy == "offline-uniform":
                idx = int(order[t % len(order)])
            elif strategy == "random-uniform":
                idx = int(rng.integers(len(ctx.candidates)))
            else:  # fixed-x
                idx = int(np.argmin(np.abs(np.asarray(ctx.candidates, dtype=float)
                                           - cfg.strategy.fixed_x)))
            x = ctx.candidates[idx]
            gain_exp = float(gvec[idx])
            cost_exp = float(cvec[idx]) if cvec is not None else 1.0
            sup = float(np.max(obj))
            eff = float(obj[idx]) / sup if sup > 0 else 1.0
            x_rec = float(x)

        # --- observe, pay, update
        if psy:
            p1_truth = float(expit(theta0_s - x))
            y = 0.0 if rng.random() < 1.0 - p1_truth else 1.0
            info_truth = p1_truth * (1.0 - p1_truth)
        else:
            y = model.sample(theta0, x, rng)
        c = cost.sample(y, x, rng)
        if tq and (x.hi <= support_lo or x.lo > support_hi
                   or (x.lo <= support_lo and x.hi > support_hi)):
            # outcome certain: the indicator likelihood is constant on the
            # support, so conditioning is exactly a no-op
            h_new = h_prev
        else:
            try:
                post = bayes_update(post, model, x, y)
            except ImpossibleObservationError:
                flags.append(f"impossible-observation at trial {t}")
                break
            h_new = _fast_entropy(post)
        cum += c

        xs[t] = x_rec
        ys[t] = float(y)
        costs[t] = c
        cums[t] = cum
        gains[t] = h_prev - h_new
        ents[t] = h_new
        effs[t] = eff
        if psy:
            oinfo[t, 0, 0] = info_truth
            ftruth[t, 0, 0] = info_truth
            ectruth[t] = (c_base + c_pen * (1.0 - p1_truth)) if cost_simple \
                else expected_cost_at(cost, model, x, theta0)
        else:
            oinfo[t] = model.neg_hessian(y, theta0, x)
            ftruth[t] = model.fisher(theta0, x)
            ectruth[t] = expected_cost_at(cost, model, x, theta0)
        h_prev = h_new
        t += 1

        if T >= 1 and t >= T:
            break
        if budget > 0 and cum > budget:
            overrun = t - 1
            flags.append(f"budget overrun at trial {t - 1}")
            break

    if t == 0:
        return None, tuple(flags)
    trace = TrialTrace(
        x=xs[:t].copy(), y=ys[:t].copy(), cost=costs[:t].copy(),
        cum_cost=cums[:t].copy(), gain_nats=gains[:t].copy(),
        entropy_nats=ents[:t].copy(), efficiency_ratio=effs[:t].copy(),
        observed_info=oinfo[:t].copy(), fisher_at_truth=ftruth[:t].copy(),
        expected_cost_at_truth=ectruth[:t].copy(),
        overrun_index=overrun, flags=tuple(flags),
    )
    return trace, tuple(flags)


# ---------------------------------------------------------------------------
# runs, sweeps, persistence


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
    """Run all replicates of one experiment and attach reference designs."""
    config.validate()
    model = build_model(config)
    grid = build_grid(config, model)
    candidates = build_candidates(config, model)
    cost = build_cost(config)
    prior = build_prior(config, grid)
    theta0_fixed = config.theta0_value()
    ctx = None
    if candidates is not None:
        need_cost = config.strategy.kind == "myopic-gain-per-cost"
        ctx = GainContext(model, grid, candidates, cost=cost if need_cost else None)

    out_dir = out_dir or config.output.dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    ref_unit = ref_cost = None
    reps = []
    for rep in range(config.run.replicates):
        seed = config.run.seed + rep
        rng = np.random.Generator(np.random.PCG64(seed))
        theta0 = theta0_fixed if theta0_fixed is not None else _draw_theta0(prior, rng)
        if ref_unit is None and theta0_fixed is not None:
            ref_unit, ref_cost = reference_designs(model, cost, theta0, candidates)
        ru, rc = (ref_unit, ref_cost)
        if theta0_fixed is None:
            ru, rc = reference_designs(model, cost, theta0, candidates)
        trace, flags = _simulate_replicate(model, cost, config, prior, theta0,
                                           candidates, ctx, rng)
        report = None
        path = None
        if trace is not None:
            report = build_report(
                trace,
                H_star_unit=ru.H_star_nats if ru is not None else None,
                H_star_cost=rc.H_star_nats if rc is not None else None,
                eps=config.diagnostics.eps,
                tail_fraction=config.diagnostics.tail_fraction,
                threshold=config.diagnostics.threshold,
            )
            if out_dir:
                path = os.path.join(out_dir, f"trace_rep{rep:03d}.csv")
                write_trace_csv(path, trace, report,
                                meta={"seed": seed, "rng": RNG_NAME,
                                      "theta0": np.atleast_1d(theta0).tolist(),
                                      "model": config.model.kind,
                                      "strategy": config.strategy.kind,
                                      "flags": list(flags)})
        reps.append(ReplicateResult(seed=seed, theta0=np.atleast_1d(theta0),
                                    trace=trace, report=report, flags=flags,
                                    trace_path=path))

    result = RunResult(config=config, replicates=reps,
                       reference_unit=ref_unit, reference_cost=ref_cost,
                       aggregate=_aggregate(reps))
    if out_dir:
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary_dict(result), fh, indent=2, sort_keys=True)
    return result


def _aggregate(reps: Sequence[ReplicateResult]) -> dict:
    def finals(fn):
        vals = [fn(r) for r in reps if r.report is not None]
        return [v for v in vals if v is not None]

    def med(vals):
        return float(np.median(vals)) if vals else None

    agg = {
        "replicates": len(reps),
        "median_final_det_unit": med(finals(lambda r: float(r.report.det_B_unit[-1]))),
        "median_final_det_cost": med(finals(lambda r: float(r.report.det_B_cost[-1]))),
        "median_final_residual_unit": med(finals(
            lambda r: float(r.report.residual_unit[-1])
            if np.isfinite(r.report.residual_unit[-1]) else None)),
        "median_final_residual_cost": med(finals(
            lambda r: float(r.report.residual_cost[-1])
            if np.isfinite(r.report.residual_cost[-1]) else None)),
        "median_final_ratio": med(finals(lambda r: float(r.report.ratio[-1]))),
        "flags": sorted({f for r in reps for f in r.flags}),
    }
    return agg


def summary_dict(result: RunResult) -> dict:
    """JSON-ready run summary; schema documented in the README."""
    def design(d: Optional[DesignWeights]):
        if d is None:
            return None
        nz = np.nonzero(d.weights > 1e-9)[0]
        return {
            "normalization": d.normalization,
            "B_star": np.atleast_2d(d.B_star).tolist(),
            "log_det": d.log_det,
            "H_star_nats": d.H_star_nats,
            "gap": d.gap,
            "converged": d.converged,
            "iterations": d.iterations,
            "support_size": int(len(nz)),
        }

    out = {
        "rng": result.rng_name,
        "seed": result.config.run.seed,
        "model": result.config.model.kind,
        "strategy": result.config.strategy.kind,
        "cost": result.config.cost.kind,
        "aggregate": result.aggregate,
        "reference_unit": design(result.reference_unit),
        "reference_cost": design(result.reference_cost),
        "replicates": [
            {
                "seed": r.seed,
                "theta0": r.theta0.tolist(),
                "trials": len(r.trace) if r.trace is not None else 0,
                "final_entropy": float(r.trace.entropy_nats[-1]) if r.trace is not None else None,
                "final_ratio": float(r.report.ratio[-1]) if r.report is not None else None,
                "budget_verdict": bool(r.report.budget_verdict) if r.report is not None else None,
                "most_trials": r.report.most_trials if r.report is not None else {},
                "overrun_index": r.trace.overrun_index if r.trace is not None else None,
                "flags": list(r.flags),
            }
            for r in result.replicates
        ],
    }
    return out


def run_sweep(config: ExperimentConfig, theta0_values: Optional[Sequence] = None,
              seeds: Optional[Sequence[int]] = None,
              out_dir: Optional[str] = None) -> dict:
    """Independent runs over a theta0 grid or a seed list, aggregated.

    Per-run failures are recorded as flags without aborting the sweep.
    Deterministic given the seed list.
    """
    if (theta0_values is None or len(theta0_values) == 0) and not seeds:
        raise ValidationError("sweep", "need a nonempty theta0 list or seed list")
    points = []
    if theta0_values is not None and len(theta0_values) > 0:
        for th in theta0_values:
            cfg = _clone_config(config)
            cfg.run.theta0 = ",".join(str(float(v)) for v in np.atleast_1d(th))
            res = run_experiment(cfg, out_dir=None)
            points.append({"theta0": cfg.run.theta0, "seed": cfg.run.seed,
                           "aggregate": res.aggregate,
                           "reference_unit_det": (res.reference_unit.log_det
                                                  if res.reference_unit else None)})
    else:
        for s in seeds:
            cfg = _clone_config(config)
            cfg.run.seed = int(s)
            res = run_experiment(cfg, out_dir=None)
            points.append({"theta0": cfg.run.theta0, "seed": int(s),
                           "aggregate": res.aggregate})

    def collect(key):
        vals = [p["aggregate"].get(key) for p in points]
        vals = [v for v in vals if v is not None]
        return float(np.median(vals)) if vals else None

    overall = {
        "points": len(points),
        "median_final_det_unit": collect("median_final_det_unit"),
        "median_final_det_cost": collect("median_final_det_cost"),
        "median_final_ratio": collect("median_final_ratio"),
        "flags": sorted({f for p in points for f in p["aggregate"].get("flags", [])}),
    }
    result = {"per_point": points, "overall": overall, "rng": RNG_NAME}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
    return result


def _clone_config(config: ExperimentConfig) -> ExperimentConfig:
    return ExperimentConfig(
        model=dataclasses.replace(config.model),
        cost=dataclasses.replace(config.cost),
        strategy=dataclasses.replace(config.strategy),
        run=dataclasses.replace(config.run),
        diagnostics=dataclasses.replace(config.diagnostics),
        output=dataclasses.replace(config.output),
    )


# ---------------------------------------------------------------------------
# trace CSV persistence


def write_trace_csv(path: str, trace: TrialTrace, report: AsymptoticReport,
                    meta: Optional[dict] = None) -> None:
    rows = np.column_stack([
        np.arange(1, len(trace) + 1, dtype=float),
        trace.x, trace.y, trace.cost, trace.cum_cost,
        trace.gain_nats, trace.entropy_nats,
        report.det_B_unit, report.det_B_cost,
        report.residual_unit, report.residual_cost,
        trace.efficiency_ratio,
    ])
    with open(path, "w") as fh:
        fh.write(f"# {TRACE_VERSION}\n")
        fh.write(TRACE_HEADER + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    if meta is not None:
        with open(path.replace(".csv", ".meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def read_trace_csv(path: str) -> dict:
    """Read a trace CSV back into column arrays keyed by header name."""
    with open(path) as fh:
        version = fh.readline().strip()
        if not version.startswith("#"):
            raise ValueError(f"{path}: missing version line")
        header = fh.readline().strip().split(",")
        data = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    arr = np.array(data) if data else np.empty((0, len(header)))
    return {name: arr[:, i] for i, name in enumerate(header)}
