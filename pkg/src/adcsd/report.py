"""Run report rendering: a key/value text document plus per-horizon CSV.

Reports embed the full run configuration and the build version, contain no
timestamps, and format numbers deterministically, so the same configuration
always produces byte-identical output.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .engine import RunReport
from .metrics import MetricReport


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


_POLICY_NOTES = {
    "graph": "missing values excluded; truth==0 cells excluded from MAPE only",
    "grid": "missing values excluded; truth<10 cells excluded from all metrics",
}


def render_metrics(m: MetricReport, indent: str = "") -> list[str]:
    lines = [
        f"{indent}policy = {m.policy}",
        f"{indent}policy_note = {_POLICY_NOTES[m.policy]}",
        f"{indent}mae = {_num(m.mae)}",
        f"{indent}mape_pct = {_num(m.mape_pct)}",
        f"{indent}rmse = {_num(m.rmse)}",
        f"{indent}count = {int(m.count_by_horizon.sum())}",
        f"{indent}mae_by_horizon = " + " ".join(_num(v) for v in m.mae_by_horizon),
        f"{indent}mape_pct_by_horizon = " + " ".join(_num(v) for v in m.mape_pct_by_horizon),
        f"{indent}rmse_by_horizon = " + " ".join(_num(v) for v in m.rmse_by_horizon),
        f"{indent}count_by_horizon = " + " ".join(str(int(v)) for v in m.count_by_horizon),
    ]
    return lines


def render_report(config: dict, report: RunReport) -> str:
    lines = ["# adcsd run report", f"version = {__version__}", ""]
    lines.append("[config]")
    for key in sorted(config):
        lines.append(f"{key} = {config[key]}")
    lines.append("")
    lines.append("[metrics]")
    lines.extend(render_metrics(report.metrics))
    lines.append("")
    lines.append("[stream]")
    lines.append(f"entries = {len(report.predictions)}")
    lines.append(f"updates_applied = {report.updates_applied}")
    lines.append(f"label_delay = {report.label_delay}")
    lines.append("per_entry_loss = " + " ".join(_num(v) for v in report.per_entry_loss))
    lines.append("")
    lines.append("[node-scales]")
    lines.append("seasonal = " + " ".join(_num(v) for v in report.seasonal_scale))
    lines.append("trend = " + " ".join(_num(v) for v in report.trend_scale))
    return "\n".join(lines) + "\n"


def write_horizon_csv(path: str | Path, m: MetricReport) -> None:
    rows = ["horizon,mae,mape_pct,rmse,count,count_mape"]
    for h in range(m.n_horizons):
        rows.append(
            f"{h + 1},{_num(m.mae_by_horizon[h])},{_num(m.mape_pct_by_horizon[h])},"
            f"{_num(m.rmse_by_horizon[h])},{int(m.count_by_horizon[h])},"
            f"{int(m.count_mape_by_horizon[h])}"
        )
    Path(path).write_text("\n".join(rows) + "\n")


def parse_report_metrics(text: str) -> dict:
    """Pull the aggregate metric values back out of a rendered report."""
    out = {}
    in_metrics = False
    for line in text.splitlines():
        if line.startswith("["):
            in_metrics = line.strip() == "[metrics]"
            continue
        if in_metrics and " = " in line:
            key, value = line.split(" = ", 1)
            if key in ("mae", "mape_pct", "rmse"):
                out[key] = float(value)
    return out
