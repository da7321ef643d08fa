"""
Command-line interface for rested best-arm identification experiments.
"""
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click

from rested_bai import theory
from rested_bai.config import load_experiment_config
from rested_bai.env import load_instance
from rested_bai.exceptions import BudgetExhaustedError, ConfigError, RestedBanditError
from rested_bai.harness import SWEEP_PARAMETERS, monte_carlo, sweep
from rested_bai.reporting import (
    AxesSpec,
    PlotSeries,
    emit_csv,
    emit_svg_plot,
    format_value,
    read_table,
    series_from_table,
    write_experiment,
)

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

THEORY_KINDS = [kind.value for kind in theory.BoundKind]
HANDLED = (RestedBanditError, ValueError, OSError)


def exit_code(error: BaseException) -> int:
    """Process exit status for an error raised by a command."""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, BudgetExhaustedError):
        return EXIT_BUDGET
    return EXIT_FAILURE


def _fail(action: str, error: BaseException) -> None:
    click.echo(f"Error {action}: {error}", err=True)
    sys.exit(exit_code(error))


def parse_grid(text: str) -> List[float]:
    """
    Parse "a,b,c" into floats.

    Raises:
        ConfigError: If an entry is not a number or the grid is empty
    """
    try:
        values = [float(entry) for entry in text.split(",") if entry.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid grid {text!r}: {e}") from e
    if not values:
        raise ConfigError("Grid must contain at least one value")
    return values


def parse_params(text: Optional[str]) -> Dict[str, float]:
    """
    Parse "key=value,key=value" into floats.

    Raises:
        ConfigError: If an entry is malformed
    """
    params: Dict[str, float] = {}
    if not text:
        return params
    for entry in text.split(","):
        key, sep, value = entry.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Expected key=value, got {entry!r}")
        try:
            params[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"Invalid value for {key.strip()}: {value!r}") from e
    return params


def _require(params: Dict[str, float], kind: str, *names: str) -> Tuple[float, ...]:
    missing = [name for name in names if name not in params]
    if missing:
        raise ConfigError(f"Bound {kind} needs parameters {missing}")
    return tuple(params[name] for name in names)


def compute_bound(
    kind: str, params: Dict[str, float], instance_path: Optional[str], solver: str
) -> theory.BoundReport:
    """
    Dispatch a theory command to its solver.

    Raises:
        ConfigError: If a required parameter or the instance file is missing
    """
    c_value = params.get("C", theory.DEFAULT_KL_CONSTANT)
    if kind in ("tau_sub", "tau_sub_exact"):
        alpha, delta_gap, rho, horizon = _require(
            params, kind, "alpha", "delta_gap", "rho", "T"
        )
        if kind == "tau_sub":
            return theory.tau_sub(alpha, delta_gap, rho, int(horizon), c_value, solver)
        return theory.tau_sub_exact(alpha, delta_gap, rho, int(horizon), c_value)
    if kind == "cor1_tau_sub":
        alpha, delta_gap, horizon = _require(params, kind, "alpha", "delta_gap", "T")
        return theory.cor1_tau_sub(alpha, delta_gap, int(horizon), c_value, solver)
    if kind == "etc_n0":
        delta_gap, rho, upper, horizon = _require(
            params, kind, "delta_gap", "rho", "U", "T"
        )
        return theory.etc_n0(
            delta_gap,
            rho,
            upper,
            int(horizon),
            alpha=params.get("alpha", 1.0),
            residual_constant=params.get("kappa", 1.0),
            solver=solver,
        )
    if kind == "cor2_n0":
        alpha, delta_gap, upper, horizon = _require(
            params, kind, "alpha", "delta_gap", "U", "T"
        )
        return theory.cor2_n0(alpha, delta_gap, upper, int(horizon), solver)
    if not instance_path:
        raise ConfigError("Bound nbar needs --instance")
    exponent = int(params.get("exponent", 4))
    return theory.rest_sure_nbar(load_instance(instance_path), exponent)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log progress messages.")
@click.option("--debug", is_flag=True, help="Log every commit and elimination.")
@click.option(
    "--jobs",
    "-j",
    type=int,
    help="Parallel Monte Carlo workers (-1 for all cores). Overrides the config file.",
)
@click.pass_context
def cli(ctx: click.Context, verbose: bool, debug: bool, jobs: Optional[int]) -> None:
    """Rested best-arm identification: policies, regret experiments and bounds."""
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    ctx.obj = {"jobs": jobs}


@cli.command()
@click.option("--config", "config_path", required=True, help="Experiment JSON file.")
@click.option("--policy", multiple=True, help="Run only these policies.")
@click.option("--seed", type=int, help="Base seed, overrides the config file.")
@click.option(
    "--out", "output_dir", help="Output directory, overrides the config file."
)
@click.pass_context
def run(
    ctx: click.Context,
    config_path: str,
    policy: Tuple[str, ...],
    seed: Optional[int],
    output_dir: Optional[str],
) -> None:
    """Run a Monte Carlo experiment and write runs.csv and summary.csv."""
    overrides = {
        "policies": list(policy) if policy else None,
        "base_seed": seed,
        "output_dir": output_dir,
        "n_jobs": ctx.obj.get("jobs"),
    }
    try:
        config = load_experiment_config(config_path, overrides)
        stats, records = monte_carlo(config)
        runs_path, summary_path = write_experiment(
            records, stats.rows(), config.output_dir
        )
    except HANDLED as e:
        _fail("running experiment", e)
        return

    click.echo(f"{'policy':<12} {'mean_regret':>14} {'q90':>14} {'mean_tau_out':>14}")
    for row in stats.rows():
        click.echo(
            f"{row.policy:<12} {row.mean_regret:>14.6g} "
            f"{row.q90:>14.6g} {row.mean_tau_out:>14.1f}"
        )
    click.echo(f"Wrote {runs_path} and {summary_path}")


@cli.command(name="sweep")
@click.option("--config", "config_path", required=True, help="Experiment JSON file.")
@click.option("--param", type=click.Choice(list(SWEEP_PARAMETERS)), required=True)
@click.option("--grid", required=True, help="Comma-separated values, e.g. 0.1,0.2,0.4.")
@click.option(
    "--out", "out_path", help="CSV path (default: <output_dir>/sweep_<param>.csv)."
)
@click.option(
    "--plot", "plot_path", help="Also draw mean regret against the parameter."
)
@click.pass_context
def sweep_command(
    ctx: click.Context,
    config_path: str,
    param: str,
    grid: str,
    out_path: Optional[str],
    plot_path: Optional[str],
) -> None:
    """Repeat an experiment over a grid of one instance parameter."""
    try:
        config = load_experiment_config(config_path, {"n_jobs": ctx.obj.get("jobs")})
        rows = sweep(config, param, parse_grid(grid))
        target = (
            Path(out_path) if out_path else config.output_dir / f"sweep_{param}.csv"
        )
        target.parent.mkdir(parents=True, exist_ok=True)
        emit_csv(rows, target)
        if plot_path:
            series = []
            for name in config.policies:
                mine = [row for row in rows if row.stats.policy == name]
                series.append(
                    PlotSeries(
                        name,
                        tuple(row.value for row in mine),
                        tuple(row.stats.mean_regret for row in mine),
                    )
                )
            emit_svg_plot(
                series,
                plot_path,
                AxesSpec(x_label=param, y_label="mean regret", log_x=param == "T"),
            )
    except HANDLED as e:
        _fail("running sweep", e)
        return
    click.echo(f"Wrote {len(rows)} rows to {target}")


@cli.command(name="theory")
@click.option("--kind", type=click.Choice(THEORY_KINDS), required=True)
@click.option(
    "--params", help="key=value list, e.g. alpha=1,delta_gap=0.2,rho=0.5,T=100000."
)
@click.option("--instance", "instance_path", help="Instance JSON file (nbar only).")
@click.option("--solver", type=click.Choice(["scan", "bisect"]), default="scan")
@click.option("--out", "out_path", help="Write the report as a one-row CSV.")
def theory_command(
    kind: str,
    params: Optional[str],
    instance_path: Optional[str],
    solver: str,
    out_path: Optional[str],
) -> None:
    """Compute an exploration-length bound."""
    try:
        report = compute_bound(kind, parse_params(params), instance_path, solver)
        if out_path:
            emit_csv([report], out_path)
    except HANDLED as e:
        _fail("computing bound", e)
        return

    click.echo(f"{report.kind.value}: {report.value} (witness: {report.witness})")
    click.echo(f"  regret bound: {format_value(report.regret_bound)}")
    if report.residual:
        click.echo(f"  residual: {format_value(report.residual)}")
    for stage in report.stages:
        click.echo(
            f"  stage {stage.stage}: arm {stage.arm} at n={stage.n} "
            f"({stage.witness}, tau_out={stage.tau_out})"
        )


@cli.command()
@click.option(
    "--input", "input_path", required=True, help="CSV file with a header row."
)
@click.option("--x", "x_column", required=True, help="Column for the horizontal axis.")
@click.option("--y", "y_column", required=True, help="Column for the vertical axis.")
@click.option("--out", "out_path", required=True, help="SVG file to write.")
@click.option("--logx", is_flag=True, help="Logarithmic x axis.")
@click.option("--logy", is_flag=True, help="Logarithmic y axis.")
def plot(
    input_path: str, x_column: str, y_column: str, out_path: str, logx: bool, logy: bool
) -> None:
    """Plot one column of a CSV file against another, one line per policy."""
    try:
        series = series_from_table(read_table(input_path), x_column, y_column)
        axes = AxesSpec(x_label=x_column, y_label=y_column, log_x=logx, log_y=logy)
        emit_svg_plot(series, out_path, axes)
    except HANDLED as e:
        _fail("plotting", e)
        return
    click.echo(f"Plot written to {out_path}")


def main() -> None:
    """Main entry point for the CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()
