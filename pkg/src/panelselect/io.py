"""CSV ingestion and emission.

Panel files are long format ``unit,period,y[,control_1,...]``, one row
per (unit, period); weather files are ``unit,period,tau,w`` with
tau in 1..H.  Unit and period order follow first appearance in the
panel file.  All floats are written with 17 significant digits so files
round-trip exactly, and every file is written atomically (temp file +
rename).
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ValidationError
from .panel import PanelDataset


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV atomically with round-trip float formatting."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv_rows(path) -> tuple:
    """Read back header and rows; the inverse of write_csv."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV") from None
        return header, [row for row in reader]


def _parse_float(value: str, path, lineno: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValidationError(
            f"{path}:{lineno}: cannot parse {column}={value!r} as a number"
        ) from None


def read_panel_csv(path):
    """Parse a long-format panel CSV.

    Returns (unit_ids, period_ids, outcome (n,T), controls (n,T,c) or
    None, control_names).
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "unit" or header[1] != "period" or header[2] != "y":
            raise ValidationError(
                f"{path}:1: header must start with 'unit,period,y', got {header}"
            )
        control_names = tuple(header[3:])
        cells = {}
        units, periods = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            unit, period = row[0], row[1]
            if unit not in cells:
                cells[unit] = {}
                units.append(unit)
            if period in cells[unit]:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate observation for unit={unit}, period={period}"
                )
            if period not in periods:
                periods.append(period)
            y = _parse_float(row[2], path, lineno, "y")
            ctrl = [
                _parse_float(row[3 + j], path, lineno, control_names[j])
                for j in range(len(control_names))
            ]
            cells[unit][period] = (y, ctrl)

    n, T = len(units), len(periods)
    if n < 2 or T < 2:
        raise ValidationError(f"{path}: need at least 2 units and 2 periods, got n={n}, T={T}")
    outcome = np.empty((n, T))
    controls = np.empty((n, T, len(control_names))) if control_names else None
    for i, unit in enumerate(units):
        missing = [p for p in periods if p not in cells[unit]]
        if missing:
            raise ValidationError(
                f"{path}: unit {unit!r} is missing periods {missing}; panels must be balanced"
            )
        for t, period in enumerate(periods):
            y, ctrl = cells[unit][period]
            outcome[i, t] = y
            if controls is not None:
                controls[i, t] = ctrl
    return tuple(units), tuple(periods), outcome, controls, control_names


def read_weather_csv(path, unit_ids=None, period_ids=None):
    """Parse a weather CSV into an (n, T, H) array.

    When unit/period orderings are given (from a panel file) rows must
    match them; otherwise orderings are inferred from first appearance
    and returned alongside the array.
    """
    infer = unit_ids is None
    unit_index = {} if infer else {u: i for i, u in enumerate(unit_ids)}
    period_index = {} if infer else {p: t for t, p in enumerate(period_ids)}
    units = [] if infer else list(unit_ids)
    periods = [] if infer else list(period_ids)
    records = {}
    max_tau = 0
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header != ["unit", "period", "tau", "w"]:
            raise ValidationError(
                f"{path}:1: header must be 'unit,period,tau,w', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            unit, period, tau_s, w_s = row
            if unit not in unit_index:
                if not infer:
                    raise ValidationError(
                        f"{path}:{lineno}: unit {unit!r} does not appear in the panel file"
                    )
                unit_index[unit] = len(units)
                units.append(unit)
            if period not in period_index:
                if not infer:
                    raise ValidationError(
                        f"{path}:{lineno}: period {period!r} does not appear in the panel file"
                    )
                period_index[period] = len(periods)
                periods.append(period)
            try:
                tau = int(tau_s)
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: tau must be an integer in 1..H, got {tau_s!r}"
                ) from None
            if tau < 1:
                raise ValidationError(f"{path}:{lineno}: tau must be >= 1, got {tau}")
            w = _parse_float(w_s, path, lineno, "w")
            key = (unit_index[unit], period_index[period])
            records.setdefault(key, {})
            if tau in records[key]:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate tau={tau} for unit={unit}, period={period}"
                )
            records[key][tau] = w
            max_tau = max(max_tau, tau)

    unit_ids, period_ids = tuple(units), tuple(periods)
    n, T, H = len(unit_ids), len(period_ids), max_tau
    if H < 1:
        raise ValidationError(f"{path}: no weather observations found")
    weather = np.empty((n, T, H))
    for i, unit in enumerate(unit_ids):
        for t, period in enumerate(period_ids):
            got = records.get((i, t), {})
            if len(got) != H:
                raise ValidationError(
                    f"{path}: unit {unit!r}, period {period!r} has {len(got)} of "
                    f"H={H} weather observations"
                )
            for tau in range(1, H + 1):
                if tau not in got:
                    raise ValidationError(
                        f"{path}: unit {unit!r}, period {period!r} is missing tau={tau}"
                    )
                weather[i, t, tau - 1] = got[tau]
    if infer:
        return weather, unit_ids, period_ids
    return weather


def load_dataset(panel_path, weather_path) -> PanelDataset:
    units, periods, outcome, controls, control_names = read_panel_csv(panel_path)
    weather = read_weather_csv(weather_path, units, periods)
    return PanelDataset(
        unit_ids=units,
        period_ids=periods,
        outcome=outcome,
        weather=weather,
        controls=controls,
        control_names=control_names,
    )


def write_panel_csv(path, data: PanelDataset) -> None:
    header = ["unit", "period", "y", *data.control_names]
    rows = []
    for i, unit in enumerate(data.unit_ids):
        for t, period in enumerate(data.period_ids):
            row = [unit, period, data.outcome[i, t]]
            if data.controls is not None:
                row.extend(data.controls[i, t])
            rows.append(row)
    write_csv(path, header, rows)


def write_weather_csv(path, data: PanelDataset) -> None:
    rows = []
    for i, unit in enumerate(data.unit_ids):
        for t, period in enumerate(data.period_ids):
            for tau in range(data.H):
                rows.append([unit, period, tau + 1, data.weather[i, t, tau]])
    write_csv(path, ["unit", "period", "tau", "w"], rows)


# ---------------------------------------------------------------------------
# Result emitters
# ---------------------------------------------------------------------------

def p_value(t: float) -> float:
    return math.erfc(abs(t) / math.sqrt(2.0))


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def write_fit_csv(path, fits) -> None:
    rows = []
    for fit in fits:
        se = fit.clustered_se
        ts = fit.t_stats
        for j, name in enumerate(fit.coef_names):
            p = p_value(float(ts[j]))
            rows.append(
                [
                    fit.model_name,
                    name,
                    fit.beta_hat[j],
                    se[j],
                    float(ts[j]),
                    p,
                    significance_stars(p),
                ]
            )
        rows.append([fit.model_name, "_sigma2", fit.sigma2_hat, "", "", "", ""])
        rows.append([fit.model_name, "_loglik", fit.loglik, "", "", "", ""])
    write_csv(path, ["model", "coef", "estimate", "se", "t", "p", "stars"], rows)


def write_selection_csv(path, reports) -> None:
    rows = []
    for report in reports:
        for model in sorted(report.scores):
            rows.append(
                [
                    report.criterion,
                    model,
                    report.scores[model],
                    model == report.selected,
                ]
            )
    write_csv(path, ["criterion", "model", "score", "selected"], rows)


def write_oracle_csv(path, results) -> None:
    rows = []
    for res in results:
        parts = res.mspe_parts
        if res.beta_pseudo.size == 0:
            rows.append(
                [res.model_name, 0, 0.0, res.delta, res.category,
                 parts.noise, parts.dimension, parts.misspec]
            )
        for j, bj in enumerate(res.beta_pseudo):
            rows.append(
                [res.model_name, j + 1, bj, res.delta, res.category,
                 parts.noise, parts.dimension, parts.misspec]
            )
    write_csv(
        path,
        ["model", "coef_index", "beta_pseudo", "delta", "category",
         "mspe_noise", "mspe_dim", "mspe_misspec"],
        rows,
    )


def write_simulation_csvs(outdir, report) -> None:
    os.makedirs(outdir, exist_ok=True)
    write_csv(
        os.path.join(outdir, "coefficients.csv"),
        ["dgp", "model", "coef", "mean", "sd", "rej_rate", "n", "reps"],
        [
            [r["dgp"], r["model"], r["coef"], r["mean"], r["sd"], r["rej_rate"], r["n"], r["reps"]]
            for r in report.coefficient_rows
        ],
    )
    write_csv(
        os.path.join(outdir, "selection.csv"),
        ["dgp", "candidate_set", "criterion", "model", "frequency", "ci_halfwidth", "n", "reps"],
        [
            [r["dgp"], r["candidate_set"], r["criterion"], r["model"],
             r["frequency"], r["ci_halfwidth"], r["n"], r["reps"]]
            for r in report.selection_rows
        ],
    )
    write_csv(
        os.path.join(outdir, "mse.csv"),
        ["dgp", "model", "mse", "n", "reps"],
        [[r["dgp"], r["model"], r["mse"], r["n"], r["reps"]] for r in report.mse_rows],
    )
