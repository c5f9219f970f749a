"""Command line interface: simulate, fit, select, path and benchmark.

Exit codes: 0 success, 1 solver non-convergence or solver failure,
2 input error (bad options, malformed files), 3 internal error.
"""
from __future__ import annotations

import csv
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click
import numpy as np

from mixedsel.benchmark import benchmark, replications_csv, summary_csv, summary_table
from mixedsel.data_io import build_report, read_csv, read_truth_json, write_csv, write_report_json, write_truth_json
from mixedsel.errors import (DegenerateSample, InvalidPenaltyParams, InvalidSpec, MixedSelError, ParseError,
                             SchemaError)
from mixedsel.problem import LMEProblem, Params
from mixedsel.regularizers import BlockRegularizer, L0Ball
from mixedsel.selection import (DEFAULT_LAM_RANGE, REGULARIZERS, InfoCriterion, SelectionReport, Support,
                                alasso_weights, l0_path, lambda_grid_path, merge_reports, penalty_family,
                                select_model)
from mixedsel.simulation import PRESETS, generate
from mixedsel.solvers import SOLVERS, SolverConfig, get_solver

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

INPUT_ERRORS = (SchemaError, ParseError, InvalidSpec, InvalidPenaltyParams, DegenerateSample, OSError, ValueError)

SOLVER_CHOICE = click.Choice(sorted(SOLVERS))
REG_CHOICE = click.Choice(list(REGULARIZERS))
IC_CHOICE = click.Choice(["bic", "aic", "aic-corrected", "aic-literal"])


class InputError(click.UsageError):
    pass


def _floats(text: Optional[str], name: str) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{name} must be a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise InputError(f"{name} must not be empty")
    return values


def _lam_range(text: Optional[str]) -> Optional[Tuple[float, float]]:
    values = _floats(text, "--lam-range")
    if values is None:
        return None
    if len(values) != 2:
        raise InputError("--lam-range takes two values: LO,HI")
    return values[0], values[1]


def _threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("MIXEDSEL_THREADS", "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise InputError(f"MIXEDSEL_THREADS must be an integer, got {env!r}") from None
    if threads < 1:
        raise InputError("thread count must be positive")
    return threads


def _config(tol, max_iter, eta, lam_bar) -> SolverConfig:
    return SolverConfig(tol=tol, max_iter=max_iter, eta=eta, lam_bar=lam_bar)


def solver_options(f):
    options = [
        click.option("--solver", type=SOLVER_CHOICE, default="msr3-fast", show_default=True),
        click.option("--reg", "reg_name", type=REG_CHOICE, default="l1", show_default=True),
        click.option("--rho", type=float, default=None, help="SCAD shape (default 3.7) or CAD clip level (1.0)."),
        click.option("--gamma-upper", type=float, default=float("inf"), help="Upper bound on γ."),
        click.option("--tol", type=float, default=1e-6, show_default=True),
        click.option("--max-iter", type=int, default=None, help="Iteration cap (solver default if omitted)."),
        click.option("--lam-bar", type=float, default=0.0, show_default=True,
                     help="Weak convexity constant added to the γ coupling."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _fit_regularizer(problem, solver, reg_name, lam, k, rho, gamma_upper, cfg) -> BlockRegularizer:
    if reg_name == "l0":
        if k is None:
            raise InputError("--reg l0 needs --k")
        return BlockRegularizer(L0Ball(min(k, problem.p)), L0Ball(min(k, problem.q)), gamma_upper)
    if k is not None:
        raise InputError("--k only applies to --reg l0")
    if reg_name != "none" and lam is None:
        raise InputError(f"--reg {reg_name} needs --lam")
    weights = alasso_weights(problem, solver, cfg, gamma_upper) if reg_name == "alasso" else None
    return penalty_family(reg_name, rho, weights, gamma_upper)(0.0 if lam is None else lam)


def _coef_table(problem: LMEProblem, params: Params, support: Support) -> str:
    lines = [f"{'covariate':<16} {'block':<6} {'value':>14}  selected"]
    for block, names, values, mask in (("beta", problem.fixed_names, params.beta, support.fixed),
                                       ("gamma", problem.random_names, params.gamma, support.random)):
        for name, value, on in zip(names, values, mask):
            lines.append(f"{name:<16} {block:<6} {value:>14.6g}  {'yes' if on else 'no'}")
    return "\n".join(lines)


def _path_rows(report: SelectionReport) -> List[dict]:
    return [{"hyper": e.hyper, "ic": e.ic_value,
             "nnz_fixed": e.support.nnz_fixed if e.support is not None else None,
             "nnz_random": e.support.nnz_random if e.support is not None else None,
             **({"error": e.error} if e.error else {})} for e in report.entries]


def _write_path_csv(report: SelectionReport, problem: LMEProblem, path) -> None:
    """hyper, ic, one column per coefficient, eta; rows sorted by (eta, hyper)."""
    key = "k" if report.kind == "l0" else "lam"
    coef_cols = [f"beta_{n}" for n in problem.fixed_names] + [f"gamma_{n}" for n in problem.random_names]
    entries = sorted(report.entries, key=lambda e: (e.hyper.get("eta", 1.0), e.hyper[key]))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hyper", "ic"] + coef_cols + ["eta"])
        for e in entries:
            coefs = e.result.params.to_vector() if e.result is not None else np.full(len(coef_cols), np.nan)
            ic = repr(e.ic_value) if np.isfinite(e.ic_value) else ""
            writer.writerow([repr(e.hyper[key]), ic] + ["" if np.isnan(c) else repr(float(c)) for c in coefs]
                            + [repr(e.hyper.get("eta", 1.0))])


def _finish_selection(report: SelectionReport, problem, config, output, path_csv, truth_path) -> int:
    best = report.best_entry
    if best is None:
        click.echo("every fit on the path failed", err=True)
        for e in report.entries[:3]:
            click.echo(f"  {e.hyper}: {e.error}", err=True)
        return EXIT_NOT_CONVERGED
    extra = {"best": {"hyper": best.hyper, "ic": best.ic_value}}
    if truth_path is not None:
        report.score(read_truth_json(truth_path))
        extra["metrics"] = report.metrics.as_dict()
    res = best.result
    payload = build_report(config, res.params, best.support.fixed, best.support.random, res.iterations,
                           res.converged, res.final_residual, _path_rows(report), extra)
    if output:
        write_report_json(payload, output)
    if path_csv:
        _write_path_csv(report, problem, path_csv)
    click.echo(f"best {best.hyper} {report.ic.name}={best.ic_value:.6g} "
               f"nnz_fixed={best.support.nnz_fixed} nnz_random={best.support.nnz_random}")
    if report.metrics is not None:
        m = report.metrics
        click.echo(f"accuracy={m.accuracy:.4f} fe_accuracy={m.fe_accuracy:.4f} re_accuracy={m.re_accuracy:.4f} "
                   f"f1={m.f1:.4f}")
    click.echo(_coef_table(problem, res.params, best.support))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _select_one_eta(args) -> SelectionReport:
    problem, kwargs, eta = args
    return select_model(problem, eta_grid=(eta,), **kwargs)


def _run_per_eta(problem, kwargs, etas, threads) -> SelectionReport:
    """One selection per η, in a process pool when ``threads`` > 1; merged in η order."""
    if threads == 1 or len(etas) == 1:
        return select_model(problem, eta_grid=tuple(etas), **kwargs)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(_select_one_eta, [(problem, kwargs, e) for e in etas]))
    return merge_reports(reports)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Sparse variable selection for linear mixed-effects models."""


@cli.command()
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="gbd-synthetic", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the first replication.")
@click.option("--replications", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--prefix", default="problem", show_default=True)
def simulate(preset, seed, replications, out_dir, prefix):
    """Writes synthetic problems (CSV) and their truth (JSON).

    Replication r uses seed SEED + r and is written to
    PREFIX-NNN.csv and PREFIX-NNN.truth.json.
    """
    if replications < 1:
        raise InputError("--replications must be positive")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in range(replications):
        problem, truth = generate(PRESETS[preset](seed + r))
        stem = out / f"{prefix}-{r:03d}"
        write_csv(problem, f"{stem}.csv")
        write_truth_json(truth, f"{stem}.truth.json", {"seed": seed + r, "preset": preset})
        click.echo(f"{stem}.csv")
    return EXIT_OK


@cli.command()
@click.option("--input", "input_path", type=click.Path(dir_okay=False), required=True)
@solver_options
@click.option("--lam", type=float, default=None, help="Penalty level λ.")
@click.option("--k", type=int, default=None, help="L0 budget on each block.")
@click.option("--eta", type=float, default=1.0, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Report JSON path.")
def fit(input_path, solver, reg_name, rho, gamma_upper, tol, max_iter, lam_bar, lam, k, eta, output):
    """Fits one model at fixed hyperparameters."""
    problem = read_csv(input_path)
    cfg = _config(tol, max_iter, eta, lam_bar)
    solve = get_solver(solver)
    reg = _fit_regularizer(problem, solve, reg_name, lam, k, rho, gamma_upper, cfg)
    result = solve(problem, reg, cfg, None)
    support = Support.for_fit(result.params, reg)
    config = {"command": "fit", "input": str(input_path), "solver": solver, "reg": reg_name, "lam": lam, "k": k,
              "rho": rho, "eta": eta, "lam_bar": lam_bar, "tol": tol, "max_iter": max_iter,
              "gamma_upper": gamma_upper}
    payload = build_report(config, result.params, support.fixed, support.random, result.iterations,
                           result.converged, result.final_residual, [],
                           {"objective": result.objective, "status": result.status})
    if output:
        write_report_json(payload, output)
    click.echo(f"{solver} {reg_name}: {result.status} after {result.iterations} iterations, "
               f"nll={result.objective:.6g}, residual={result.final_residual:.3g}")
    click.echo(_coef_table(problem, result.params, support))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def selection_options(f):
    options = [
        click.option("--input", "input_path", type=click.Path(dir_okay=False), required=True),
        click.option("--ic", "ic_name", type=IC_CHOICE, default="bic", show_default=True),
        click.option("--lam-range", default=None, help="LO,HI bracket for λ (solver default if omitted)."),
        click.option("--eta-grid", default="1", show_default=True, help="Comma-separated η values."),
        click.option("--k-max", type=int, default=None, help="Largest L0 budget (l0 only)."),
        click.option("--truth", "truth_path", type=click.Path(dir_okay=False), default=None,
                     help="Truth JSON; adds support metrics to the report."),
        click.option("--output", type=click.Path(dir_okay=False), default=None, help="Report JSON path."),
        click.option("--path-csv", type=click.Path(dir_okay=False), default=None, help="Path CSV."),
        click.option("--threads", type=int, default=None, help="Workers across η (env MIXEDSEL_THREADS)."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _selection_setup(reg_name, k_max, lam_range, eta_grid, ic_name):
    if k_max is not None and reg_name != "l0":
        raise InputError("--k-max only applies to --reg l0")
    if lam_range is not None and reg_name == "l0":
        raise InputError("--lam-range does not apply to --reg l0")
    etas = _floats(eta_grid, "--eta-grid")
    return _lam_range(lam_range), etas, InfoCriterion.parse(ic_name)


@cli.command()
@selection_options
@solver_options
def select(input_path, ic_name, lam_range, eta_grid, k_max, truth_path, output, path_csv, threads,
           solver, reg_name, rho, gamma_upper, tol, max_iter, lam_bar):
    """Tunes λ (golden section) or the L0 budget k by an information criterion."""
    lam_range, etas, ic = _selection_setup(reg_name, k_max, lam_range, eta_grid, ic_name)
    problem = read_csv(input_path)
    cfg = _config(tol, max_iter, 1.0, lam_bar)
    kwargs = dict(solver_name=solver, reg_name=reg_name, ic=ic, lam_range=lam_range, k_max=k_max, cfg=cfg,
                  rho=rho, gamma_upper=gamma_upper)
    report = _run_per_eta(problem, kwargs, etas, _threads(threads))
    config = {"command": "select", "input": str(input_path), "solver": solver, "reg": reg_name, "ic": ic.name,
              "lam_range": lam_range or (None if reg_name == "l0" else DEFAULT_LAM_RANGE[solver]),
              "eta_grid": etas, "k_max": k_max, "rho": rho, "lam_bar": lam_bar, "tol": tol,
              "max_iter": max_iter, "gamma_upper": gamma_upper}
    return _finish_selection(report, problem, config, output, path_csv, truth_path)


def _grid_path(args) -> SelectionReport:
    problem, solver, reg_name, ic, lams, eta, k_max, cfg, rho, gamma_upper = args
    solve = get_solver(solver)
    if reg_name == "l0":
        return l0_path(problem, solve, ic, k_max, cfg, (eta,), gamma_upper=gamma_upper)
    weights = alasso_weights(problem, solve, cfg, gamma_upper) if reg_name == "alasso" else None
    return lambda_grid_path(problem, solve, penalty_family(reg_name, rho, weights, gamma_upper), ic, lams, (eta,), cfg)


@cli.command()
@selection_options
@solver_options
@click.option("--n-lams", type=int, default=25, show_default=True, help="Log-spaced λ values over --lam-range.")
def path(input_path, ic_name, lam_range, eta_grid, k_max, truth_path, output, path_csv, threads,
         solver, reg_name, rho, gamma_upper, tol, max_iter, lam_bar, n_lams):
    """Fits a full regularization path (λ grid, or k = 0..k_max for l0)."""
    lam_range, etas, ic = _selection_setup(reg_name, k_max, lam_range, eta_grid, ic_name)
    if n_lams < 1:
        raise InputError("--n-lams must be positive")
    problem = read_csv(input_path)
    cfg = _config(tol, max_iter, 1.0, lam_bar)
    lo, hi = lam_range or DEFAULT_LAM_RANGE[solver]
    if reg_name != "l0" and not 0 < lo <= hi:
        raise InputError("--lam-range must satisfy 0 < LO <= HI")
    lams = np.geomspace(lo, hi, n_lams).tolist() if reg_name != "l0" else []
    jobs = [(problem, solver, reg_name, ic, lams, eta, k_max, cfg, rho, gamma_upper) for eta in etas]
    n_workers = _threads(threads)
    if n_workers == 1 or len(jobs) == 1:
        reports = [_grid_path(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = list(pool.map(_grid_path, jobs))
    report = merge_reports(reports)
    config = {"command": "path", "input": str(input_path), "solver": solver, "reg": reg_name, "ic": ic.name,
              "lams": lams, "eta_grid": etas, "k_max": k_max, "rho": rho, "lam_bar": lam_bar, "tol": tol,
              "max_iter": max_iter, "gamma_upper": gamma_upper}
    return _finish_selection(report, problem, config, output, path_csv, truth_path)


@cli.command(name="benchmark")
@click.option("--solvers", default="pgd,msr3-fast", show_default=True)
@click.option("--regs", default="l1", show_default=True)
@click.option("--replications", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the first replication.")
@click.option("--ic", "ic_name", type=IC_CHOICE, default="bic", show_default=True)
@click.option("--threads", type=int, default=None, help="Worker processes (env MIXEDSEL_THREADS).")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Summary CSV path.")
@click.option("--replications-csv", "reps_path", type=click.Path(dir_okay=False), default=None,
              help="Per-replication CSV path.")
@click.option("--no-timing", is_flag=True, help="Leave wall time out of the summary CSV.")
def benchmark_cmd(solvers, regs, replications, seed, ic_name, threads, output, reps_path, no_timing):
    """Replicated selection benchmark on the synthetic preset."""
    solver_list = [s.strip() for s in solvers.split(",") if s.strip()]
    reg_list = [r.strip() for r in regs.split(",") if r.strip()]
    for s in solver_list:
        if s not in SOLVERS:
            raise InputError(f"unknown solver {s!r}; choose from {sorted(SOLVERS)}")
    for r in reg_list:
        if r not in REGULARIZERS:
            raise InputError(f"unknown regularizer {r!r}; choose from {list(REGULARIZERS)}")
    if not solver_list or not reg_list:
        raise InputError("--solvers and --regs must not be empty")
    if replications < 1:
        raise InputError("--replications must be positive")
    rows, results = benchmark(solver_list, reg_list, replications, seed, _threads(threads),
                              ic=InfoCriterion.parse(ic_name))
    if output:
        Path(output).write_text(summary_csv(rows, include_time=not no_timing), encoding="utf-8")
    if reps_path:
        Path(reps_path).write_text(replications_csv(results), encoding="utf-8")
    click.echo(summary_table(rows), nl=False)
    for r in results:
        if r.error:
            click.echo(f"replication seed={r.seed} {r.solver}/{r.reg} failed: {r.error}", err=True)
    return EXIT_OK if all(r.n_failed == 0 for r in rows) else EXIT_NOT_CONVERGED


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns (and exits with) the documented exit code."""
    try:
        code = cli.main(args=list(argv) if argv is not None else None, prog_name="mixedsel",
                        standalone_mode=False)
    except click.exceptions.Exit as exc:
        code = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        code = EXIT_INPUT if isinstance(exc, click.UsageError) else exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        code = EXIT_INTERNAL
    except MixedSelError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        code = EXIT_INPUT if isinstance(exc, INPUT_ERRORS) else EXIT_NOT_CONVERGED
    except INPUT_ERRORS as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        code = EXIT_INPUT
    except Exception:
        traceback.print_exc()
        code = EXIT_INTERNAL
    code = EXIT_OK if code is None else int(code)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
