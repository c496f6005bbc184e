"""Command-line front end: solve, prices, run, replay, metrics, regress,
export-plot.  Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

import click

from . import metrics as metrics_mod
from . import stats as stats_mod
from .config import ConfigError, config_from_mapping, load_config
from .game import (
    GameSpec,
    NoEquilibriumError,
    TrajectoryKind,
    build_trajectory,
    solve_fee,
)
from .orchestrator import (
    enumerate_cells,
    build_agents,
    read_run_log,
    replay_log,
    run_cell,
    write_run_log,
)
from .plotdata import export_plot_data


def _atomic_write(path: Path, writer) -> None:
    """Write via a sibling temp file and rename, so partial output never lands."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_types(text: str | None, types_file: str | None) -> tuple[float, ...]:
    if types_file:
        content = Path(types_file).read_text(encoding="utf-8").split()
        return tuple(sorted(float(v) for v in content))
    if text is None:
        return tuple(float(i) for i in range(50))
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(float(i) for i in range(int(lo), int(hi) + 1))
    return tuple(sorted(float(v) for v in text.split(",")))


@click.group()
def cli():
    """Network-effect participation game toolkit."""


@cli.command()
@click.option("--beta", type=float, required=True)
@click.option("--price", type=float, required=True)
@click.option("--types", "types_text", default=None, help="e.g. '1..6' or '0,2,5'. Default 0..49.")
@click.option("--types-file", default=None, type=click.Path(exists=True))
def solve(beta, price, types_text, types_file):
    """Print all self-fulfilling participation counts and the benchmark."""
    spec = GameSpec(types=_parse_types(types_text, types_file), beta=beta)
    solution = solve_fee(spec, price)
    click.echo(f"price: {solution.price}")
    click.echo(f"fixed_points: {list(solution.fixed_points)}")
    click.echo(f"selected: {solution.selected}")


@cli.command()
@click.option("--beta", type=float, required=True)
@click.option("--kind", type=click.Choice([k.value for k in TrajectoryKind]), required=True)
@click.option("--targets", default="0,10,20,30,40,50", show_default=True)
@click.option("--population", type=int, default=50, show_default=True)
@click.option("--offset", type=float, default=0.01, show_default=True)
def prices(beta, kind, targets, population, offset):
    """Print the designed price sequence for one trajectory kind."""
    spec = GameSpec.integer_grid(population, beta)
    counts = tuple(int(v) for v in targets.split(","))
    seq = build_trajectory(spec, TrajectoryKind(kind), counts, offset)
    click.echo(f"kind: {seq.kind.value}")
    click.echo("prices: " + " ".join(f"{p:.2f}" for p in seq.prices))
    click.echo("target_counts: " + " ".join(str(n) for n in seq.target_counts))


@cli.command()
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--profile", type=click.Choice(["paper", "extended"]), default=None)
@click.option("--agent", type=click.Choice(["rational", "heuristic", "gateway"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def run(config_path, profile, agent, seed, out):
    """Run the full factorial and write one JSONL log per cell."""
    if config_path:
        config = load_config(config_path)
        if profile:
            raise click.UsageError("--profile and --config are mutually exclusive")
    else:
        config = config_from_mapping({"profile": profile or "paper"})
    updates = {}
    if agent:
        updates["agent_kind"] = agent
    if seed is not None:
        updates["master_seed"] = seed
    if updates:
        config = dataclasses.replace(config, **updates)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = config.snapshot()
    written = []
    for cell in enumerate_cells(config):
        spec = GameSpec.integer_grid(config.population, cell.beta_level)
        agents = build_agents(cell, config)
        log = run_cell(cell, spec, agents, config_snapshot=snapshot)
        path = out_dir / f"{cell.label()}.jsonl"
        _atomic_write(path, lambda tmp, log=log: write_run_log(log, tmp))
        written.append(path)
    click.echo(f"wrote {len(written)} run logs to {out_dir}")


def _collect_logs(paths: tuple[str, ...]) -> list:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("*.jsonl")))
        else:
            files.append(p)
    if not files:
        raise click.UsageError("no run logs found")
    return [read_run_log(f) for f in files]


@cli.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
def replay(log_path, out):
    """Re-run a logged cell with replay agents and verify it reproduces itself."""
    original = read_run_log(log_path)
    replayed = replay_log(original)
    same = all(
        (a.price, a.realized_total, a.agent_records)
        == (b.price, b.realized_total, b.agent_records)
        for a, b in zip(original.rounds, replayed.rounds)
    ) and len(original.rounds) == len(replayed.rounds)
    if out:
        _atomic_write(Path(out), lambda tmp: write_run_log(replayed, tmp))
    click.echo("replay: identical" if same else "replay: MISMATCH")
    if not same:
        raise RuntimeError("replayed run differs from the original log")


@cli.command("metrics")
@click.option("--logs", "log_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--rows-out", default=None, type=click.Path())
@click.option("--cells-out", default=None, type=click.Path())
def metrics_cmd(log_paths, rows_out, cells_out):
    """Build the deviation dataset and per-cell RMSE from run logs."""
    logs = _collect_logs(log_paths)
    rows = metrics_mod.build_deviation_rows(logs)
    cells = metrics_mod.cell_metrics(rows)
    if rows_out:
        _atomic_write(Path(rows_out), lambda tmp: metrics_mod.write_rows_csv(rows, tmp))
    if cells_out:
        _atomic_write(Path(cells_out), lambda tmp: metrics_mod.write_cell_metrics_csv(cells, tmp))
    click.echo(metrics_mod.format_cell_metrics(cells))
    click.echo(f"{len(rows)} deviation rows across {len(cells)} cells")


@cli.command()
@click.option("--rows", "rows_path", required=True, type=click.Path(exists=True))
@click.option("--model", type=click.Choice(["1", "2", "3", "4", "all"]), default="all", show_default=True)
@click.option("--lam", "lam", type=float, default=None, help="Fix the response transform instead of fitting it.")
@click.option("--baseline-path", default="static", show_default=True)
@click.option("--out", default=None, type=click.Path())
def regress(rows_path, model, lam, baseline_path, out):
    """Fit the nested deviation models with HC3 robust standard errors."""
    rows = metrics_mod.read_rows_csv(rows_path)
    try:
        fits = stats_mod.run_models(rows, transform_lambda=lam, baseline_path=baseline_path)
    except stats_mod.ZeroVarianceResponse as exc:
        click.echo(f"zero-variance response: {exc}")
        return
    if model != "all":
        fits = [f for f in fits if f.model_id == int(model)]
    if out:
        _atomic_write(Path(out), lambda tmp: stats_mod.write_fits_csv(fits, tmp))
    click.echo(stats_mod.format_comparison_table(fits))


@cli.command("export-plot")
@click.option("--rows", "rows_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--pool-directions", is_flag=True, help="Pool inc/dec and conv/div series.")
def export_plot(rows_path, out, pool_directions):
    """Write box-plot quantiles and the benchmark line as JSON plot data."""
    rows = metrics_mod.read_rows_csv(rows_path)
    data = export_plot_data(rows, pool_directions)

    def _write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_write(Path(out), _write)
    click.echo(f"wrote plot data for {len(data['series'])} series to {out}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (ConfigError, NoEquilibriumError, ValueError, OSError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
