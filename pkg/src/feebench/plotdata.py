"""Plot-data export: box-plot quantiles of stated expectations per price tick,
with the equilibrium benchmark as a reference series.  Emits data, not images.
"""

from __future__ import annotations

import json
from statistics import mean, quantiles

from .metrics import DeviationRow, group_by_cell


def _box_stats(values: list[float]) -> dict:
    if len(values) == 1:
        v = values[0]
        return {"min": v, "q1": v, "median": v, "q3": v, "max": v, "mean": v}
    q1, med, q3 = quantiles(values, n=4)
    return {
        "min": min(values),
        "q1": q1,
        "median": med,
        "q3": q3,
        "max": max(values),
        "mean": mean(values),
    }


def export_plot_data(rows: list[DeviationRow], pool_directions: bool = False) -> dict:
    """One series per cell; optionally pool the two directions of each
    monotone / non-monotone pair into one series."""
    series = []
    grouped = group_by_cell(rows)
    if pool_directions:
        pooled: dict[tuple, list[DeviationRow]] = {}
        pairs = {
            "increasing": "monotonic",
            "decreasing": "monotonic",
            "converging": "non_monotonic",
            "diverging": "non_monotonic",
        }
        for (beta, kind, window, agent), cell_rows in grouped.items():
            label = pairs.get(kind, kind)
            pooled.setdefault((beta, label, window, agent), []).extend(cell_rows)
        grouped = dict(sorted(pooled.items()))
    for (beta, kind, window, agent), cell_rows in grouped.items():
        by_price: dict[float, list[DeviationRow]] = {}
        for r in cell_rows:
            by_price.setdefault(r.price, []).append(r)
        ticks = []
        for price in sorted(by_price):
            price_rows = by_price[price]
            fee_values = {r.y_fee for r in price_rows}
            ticks.append(
                {
                    "price": price,
                    "expectation": _box_stats([float(r.y_hat) for r in price_rows]),
                    "fee": sorted(fee_values)[0] if len(fee_values) == 1 else sorted(fee_values),
                    "n": len(price_rows),
                }
            )
        series.append(
            {
                "beta_level": beta,
                "trajectory_kind": kind,
                "window_length": window,
                "agent_kind": agent,
                "ticks": ticks,
            }
        )
    return {"series": series}


def write_plot_data(rows: list[DeviationRow], path, pool_directions: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_plot_data(rows, pool_directions), fh, indent=2, sort_keys=True)
        fh.write("\n")
