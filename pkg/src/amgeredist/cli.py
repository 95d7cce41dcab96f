"""Command line: ``amgeredist plan|build|mlmc --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 hierarchy build failure,
4 estimator failure. ``AMGE_REDIST_THREADS`` sets the number of worker
threads used for samples (0 or unset: sequential).
"""

from __future__ import annotations

import json
import math
import os
import sys
import warnings
from pathlib import Path

import click

from .amge import build_hierarchy, plan_hierarchy
from .config import ConfigError, RunConfig, format_config, load_config
from .meshtopo import build_mesh, dump_mesh
from .mlmc import (MlmcProblem, classify_regime, fit_rates, fit_to_dict, predicted_cost, run_mlmc, screen_levels,
                   scaled_root_cost, write_levels_csv, write_summary_json)
from .simcores import comm_summary

EXIT_CONFIG = 2
EXIT_BUILD = 3
EXIT_ESTIMATOR = 4


class BuildFailure(RuntimeError):
    pass


class EstimatorFailure(RuntimeError):
    pass


def _threads():
    raw = os.environ.get("AMGE_REDIST_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"AMGE_REDIST_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("AMGE_REDIST_THREADS must be >= 0")
    return n


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# commands as plain functions -----------------------------------------------------

def cmd_plan(cfg: RunConfig, out):
    plan = plan_hierarchy(cfg.n_elements, cfg.n_cores, cfg.factor, cfg.beta_c, cfg.min_local, cfg.redistribution)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "plan.json", plan.to_dict())
    return plan


def _build(cfg: RunConfig, redistribution=None):
    try:
        mesh = build_mesh(cfg.dim, cfg.n)
        return mesh, build_hierarchy(mesh, cfg.hierarchy(redistribution))
    except Exception as exc:
        raise BuildFailure(f"hierarchy build failed: {exc}") from exc


def cmd_build(cfg: RunConfig, out):
    mesh, hier = _build(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dump_mesh(mesh, out / "mesh")
    hier.dump(out)
    hier.ledger.write_csv(out / "comm_ledger.csv")
    (out / "config.txt").write_text(format_config(cfg))
    # offline cost, kept apart from the deterministic artifacts
    _write_json(out / "build_time.json", {"seconds": hier.build_seconds,
                                          "per_level": [lv.build_seconds for lv in hier.levels]})
    return hier


def _problem(cfg, mesh, hier):
    return MlmcProblem(mesh, hier, cfg.field(), cfg.boundary(), seed=cfg.seed, threads=_threads(),
                       cost_model=cfg.cost_model, message_cost=cfg.message_cost, timing_solves=cfg.timing_solves)


def _rates(stats, solve_costs, factor):
    """Rate fit, regime and level screening; ``None`` entries when the data do not allow a fit."""
    M = [s.M for s in stats]
    try:
        fit = fit_rates([s.mean_Y for s in stats], [s.var_Y for s in stats], solve_costs, M)
    except ValueError as exc:
        return {"rates": None, "regime": None, "screening": None, "note": str(exc)}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        regime = classify_regime(fit)
    Y_costs = [s.cost for s in stats]
    V_Q = [s.var_Q for s in stats]
    R, extend = screen_levels(V_Q, Y_costs, fit, M)
    # one level beyond the hierarchy: cost from the gamma fit, V(Q) from the current coarsest level
    M_next = M + [max(1, math.ceil(M[-1] / factor))]
    C_next = Y_costs[:-1] + [Y_costs[-1] + float(predicted_cost(fit, M_next[-1]))] + \
        [float(predicted_cost(fit, M_next[-1]))]
    R_next = scaled_root_cost(V_Q[-1], C_next, fit, M_next, len(M))
    exponent = regime.exponent if math.isfinite(regime.exponent) else None
    return {
        "rates": fit_to_dict(fit),
        "regime": {"kind": regime.kind, "label": regime.label, "exponent": exponent,
                   "log_power": regime.log_power, "alpha_precondition": regime.alpha_ok},
        "screening": {"root_cost": R, "extend": extend,
                      "next_level": {"M": M_next[-1], "root_cost": R_next, "extend": R_next ** 2 < R[-1] ** 2,
                                     "extrapolated": True}},
    }


def cmd_mlmc(cfg: RunConfig, out):
    mesh, hier = _build(cfg)
    try:
        problem = _problem(cfg, mesh, hier)
        result = run_mlmc(problem, cfg.epsilon, n_pilot=cfg.pilot, floor=cfg.floor)
        rates = _rates(result.stats, problem.solve_costs(), cfg.factor)
    except ConfigError:
        raise
    except Exception as exc:
        raise EstimatorFailure(f"estimator failed: {exc}") from exc

    summary = {
        "estimate": result.estimate,
        "epsilon": cfg.epsilon,
        "sampling_error": result.sampling_error,
        "sampling_error_bound": cfg.epsilon ** 2 / 2,
        "standard_error": result.standard_error,
        "N": [s.n_samples for s in result.stats],
        "N_optimal": list(result.plan.N),
        "total_cost": result.total_cost,
        "cost_model": cfg.cost_model,
        "rounds": result.iterations,
        "seed": cfg.seed,
        "redistribution": cfg.redistribution,
        "levels": [{"M": s.M, "nc": s.nc} for s in result.stats],
        "communication": comm_summary([hier.ledger]),
        "speedup": None,
    }
    summary.update(rates)

    if cfg.compare:
        other = not cfg.redistribution
        mesh2, hier2 = _build(cfg, redistribution=other)
        try:
            alt = run_mlmc(_problem(cfg, mesh2, hier2), cfg.epsilon, n_pilot=cfg.pilot, floor=cfg.floor)
        except Exception as exc:
            raise EstimatorFailure(f"comparison run failed: {exc}") from exc
        with_r, without_r = (result, alt) if cfg.redistribution else (alt, result)
        summary["speedup"] = {
            "cost_with_redistribution": with_r.total_cost,
            "cost_without_redistribution": without_r.total_cost,
            "ratio": without_r.total_cost / with_r.total_cost,
        }

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_levels_csv(out / "levels.csv", result.stats)
    write_summary_json(out / "summary.json", summary)
    hier.ledger.write_csv(out / "comm_ledger.csv")
    _write_json(out / "plan.json", hier.plan().to_dict())
    return summary


# click wrappers --------------------------------------------------------------------------

def _load(config, seed, no_redistribution):
    cfg = load_config(config)
    over = {"seed": seed}
    if no_redistribution:
        over["redistribution"] = False
    if seed is not None and seed < 0:
        raise ConfigError("seed must be >= 0")
    return cfg.with_overrides(**over)


def _run(fn, config, out, seed, no_redistribution):
    try:
        cfg = _load(config, seed, no_redistribution)
        _threads()
        out = out or cfg.output
        if not out:
            raise ConfigError("no output directory (use --out or the 'output' key)")
        return fn(cfg, out)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except BuildFailure as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_BUILD)
    except EstimatorFailure as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_ESTIMATOR)


def _common(f):
    f = click.option("--config", "config", required=True, type=click.Path(dir_okay=False))(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default=None)(f)
    f = click.option("--no-redistribution", is_flag=True, default=False)(f)
    f = click.option("--seed", type=int, default=None)(f)
    return f


@click.group()
def main():
    """AMGe hierarchies with coarse-level redistribution and MLMC for Darcy flow."""


@main.command("plan")
@_common
def plan_command(config, out, no_redistribution, seed):
    """Print the per-level local sizes and core counts."""
    plan = _run(cmd_plan, config, out, seed, no_redistribution)
    click.echo("level  global_elements  local_elements  cores  redistributed")
    for i, lv in enumerate(plan.levels):
        click.echo(f"{i:5d}  {lv.global_elements:15d}  {lv.local_elements:14d}  {lv.n_cores:5d}  "
                   f"{'yes' if lv.redistributed else 'no'}")


@main.command("build")
@_common
def build_command(config, out, no_redistribution, seed):
    """Build the hierarchy and write its matrices and relations."""
    hier = _run(cmd_build, config, out, seed, no_redistribution)
    for lv in hier.levels:
        click.echo(f"level {lv.index}: {lv.n_elements} elements, {lv.dofs.n_truedofs} unknowns, "
                   f"{lv.n_active} active cores")


@main.command("mlmc")
@_common
def mlmc_command(config, out, no_redistribution, seed):
    """Run the pilot, allocate samples, run the estimator and write reports."""
    summary = _run(cmd_mlmc, config, out, seed, no_redistribution)
    click.echo(f"estimate {summary['estimate']:.8g}  standard error {summary['standard_error']:.3g}  "
               f"N {summary['N']}")
    if summary["regime"] is not None:
        click.echo(f"regime {summary['regime']['label']}")
    if summary["speedup"] is not None:
        click.echo(f"predicted speedup from redistribution {summary['speedup']['ratio']:.3g}")


if __name__ == "__main__":
    main()
