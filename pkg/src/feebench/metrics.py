"""Deviation dataset and per-cell RMSE against the equilibrium benchmark.

The regression unit is one (agent, round) observation with deviation
Y = expectation - benchmark count at the same price.  The benchmark is
always recomputed from the game definition, never read out of a log.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

from .game import GameSpec, solve_fee
from .orchestrator import SCHEMA_VERSION, RunLog

CSV_COLUMNS = (
    "beta_level",
    "trajectory_kind",
    "window_length",
    "agent_kind",
    "agent_id",
    "theta",
    "round_index",
    "price",
    "y_hat",
    "y_fee",
    "deviation",
)


@dataclass(frozen=True)
class DeviationRow:
    beta_level: float
    trajectory_kind: str
    window_length: int
    agent_kind: str
    agent_id: int
    theta: float
    round_index: int
    price: float
    y_hat: int
    y_fee: int
    deviation: float

    @property
    def cell_key(self) -> tuple:
        return (self.beta_level, self.trajectory_kind, self.window_length, self.agent_kind)


@dataclass(frozen=True)
class CellMetrics:
    beta_level: float
    trajectory_kind: str
    window_length: int
    agent_kind: str
    n_rounds: int
    n_agents: int
    rmse: float
    mean_deviation: float
    sd_deviation: float


def build_deviation_rows(logs: list[RunLog], spec_by_beta: dict[float, GameSpec] | None = None) -> list[DeviationRow]:
    """One row per (agent, round); the benchmark count is solved fresh."""
    rows = []
    fee_cache: dict[tuple[float, float], int] = {}
    for run_log in logs:
        if run_log.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported log schema version {run_log.schema_version}")
        beta = run_log.cell.beta_level
        if spec_by_beta and beta in spec_by_beta:
            spec = spec_by_beta[beta]
        else:
            spec = GameSpec.integer_grid(len(run_log.rounds[0].agent_records), beta)
        for rec in run_log.rounds:
            key = (beta, rec.price)
            if key not in fee_cache:
                fee_cache[key] = solve_fee(spec, rec.price).selected
            y_fee = fee_cache[key]
            for ar in rec.agent_records:
                rows.append(
                    DeviationRow(
                        beta_level=beta,
                        trajectory_kind=run_log.cell.trajectory.kind.value,
                        window_length=run_log.cell.window_length,
                        agent_kind=run_log.cell.agent_kind,
                        agent_id=ar.agent_id,
                        theta=ar.theta,
                        round_index=rec.round_index,
                        price=rec.price,
                        y_hat=ar.expectation,
                        y_fee=y_fee,
                        deviation=float(ar.expectation - y_fee),
                    )
                )
    return rows


def rmse(rows: list[DeviationRow]) -> float:
    """sqrt of the mean squared deviation over every (agent, round) in the cell."""
    if not rows:
        raise ValueError("rmse of an empty cell is undefined")
    return math.sqrt(sum(r.deviation**2 for r in rows) / len(rows))


def group_by_cell(rows: list[DeviationRow]) -> dict[tuple, list[DeviationRow]]:
    cells: dict[tuple, list[DeviationRow]] = {}
    for row in rows:
        cells.setdefault(row.cell_key, []).append(row)
    return dict(sorted(cells.items()))


def cell_metrics(rows: list[DeviationRow]) -> list[CellMetrics]:
    out = []
    for key, cell_rows in group_by_cell(rows).items():
        beta, kind, window, agent_kind = key
        n = len(cell_rows)
        mean = sum(r.deviation for r in cell_rows) / n
        var = sum((r.deviation - mean) ** 2 for r in cell_rows) / n
        out.append(
            CellMetrics(
                beta_level=beta,
                trajectory_kind=kind,
                window_length=window,
                agent_kind=agent_kind,
                n_rounds=len({r.round_index for r in cell_rows}),
                n_agents=len({r.agent_id for r in cell_rows}),
                rmse=rmse(cell_rows),
                mean_deviation=mean,
                sd_deviation=math.sqrt(var),
            )
        )
    return out


def write_rows_csv(rows: list[DeviationRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([getattr(r, c) for c in CSV_COLUMNS])


def read_rows_csv(path) -> list[DeviationRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            rows.append(
                DeviationRow(
                    beta_level=float(rec["beta_level"]),
                    trajectory_kind=rec["trajectory_kind"],
                    window_length=int(rec["window_length"]),
                    agent_kind=rec["agent_kind"],
                    agent_id=int(rec["agent_id"]),
                    theta=float(rec["theta"]),
                    round_index=int(rec["round_index"]),
                    price=float(rec["price"]),
                    y_hat=int(rec["y_hat"]),
                    y_fee=int(rec["y_fee"]),
                    deviation=float(rec["deviation"]),
                )
            )
    return rows


def write_cell_metrics_csv(metrics: list[CellMetrics], path) -> None:
    cols = [f.name for f in fields(CellMetrics)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for m in metrics:
            writer.writerow([getattr(m, c) for c in cols])


def format_cell_metrics(metrics: list[CellMetrics]) -> str:
    header = f"{'beta':>5} {'trajectory':>11} {'window':>6} {'agent':>10} {'rmse':>10} {'mean_Y':>9} {'sd_Y':>9}"
    lines = [header, "-" * len(header)]
    for m in metrics:
        lines.append(
            f"{m.beta_level:>5} {m.trajectory_kind:>11} {m.window_length:>6} "
            f"{m.agent_kind:>10} {m.rmse:>10.4f} {m.mean_deviation:>9.4f} {m.sd_deviation:>9.4f}"
        )
    return "\n".join(lines)
