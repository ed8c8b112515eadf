"""Accuracy arithmetic for the device comparison tables and the power budget."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DivisionByZero, EmptyInput, ParameterError, SchemaError

TABLE_PARAMETERS = ("RR", "QT", "PR", "QRS")
TABLE_PERIODS = (1, 2, 3, 4)
TABLE_COLUMNS = ("table_id", "parameter", "period", "lo_ms", "hi_ms", "reference_ms", "device_ms")


def round_half_up(x: float, places: int = 2) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def percent_error(measured: float, accepted: float) -> float:
    """``|measured - accepted| / accepted * 100`` at full precision."""
    if accepted == 0:
        raise DivisionByZero("accepted value must be non-zero")
    return abs((measured - accepted) / accepted) * 100.0


def range_error(value: float, lo: float, hi: float) -> float:
    """Percent distance outside ``[lo, hi]``, relative to the nearer bound; 0 inside."""
    if not lo < hi:
        raise ParameterError("need lo < hi")
    if lo <= value <= hi:
        return 0.0
    bound = lo if value < lo else hi
    return abs(value - bound) / bound * 100.0


@dataclass(frozen=True)
class ErrorRow:
    table_id: int
    parameter: str
    period: int
    lo_ms: float
    hi_ms: float
    reference_ms: float
    device_ms: float
    normal_pct_override: float | None = None

    @property
    def device_error_pct(self) -> float:
        # the device reading is the denominator of the reference comparison
        return percent_error(self.reference_ms, self.device_ms)

    @property
    def computed_normal_error_pct(self) -> float:
        return range_error(self.device_ms, self.lo_ms, self.hi_ms)

    @property
    def normal_error_pct(self) -> float:
        if self.normal_pct_override is not None:
            return self.normal_pct_override
        return self.computed_normal_error_pct

    @property
    def label(self) -> str:
        return f"{self.parameter}-{self.period}"


@dataclass(frozen=True)
class TableSummary:
    table_id: int
    device_error_pct: float
    normal_error_pct: float
    rows: tuple

    def to_dict(self) -> dict:
        return {
            "table_id": self.table_id,
            "device_error_pct": round_half_up(self.device_error_pct),
            "normal_error_pct": round_half_up(self.normal_error_pct),
            "rows": [
                {
                    "parameter": r.label,
                    "reference_ms": r.reference_ms,
                    "device_ms": r.device_ms,
                    "device_error_pct": round_half_up(r.device_error_pct),
                    "normal_error_pct": round_half_up(r.normal_error_pct),
                    "overridden": r.normal_pct_override is not None,
                }
                for r in self.rows
            ],
        }


@dataclass(frozen=True)
class EvaluationSummary:
    per_table: tuple
    overall_device_error_pct: float
    accuracy_pct: float
    # accuracy with every normal-column cell recomputed, ignoring overrides
    accuracy_pct_computed: float

    def to_dict(self) -> dict:
        return {
            "per_table": [t.to_dict() for t in self.per_table],
            "overall_device_error_pct": round_half_up(self.overall_device_error_pct),
            "accuracy_pct": round_half_up(self.accuracy_pct),
            "accuracy_pct_computed": round_half_up(self.accuracy_pct_computed),
        }


def _nonzero_mean(values) -> float:
    nz = [v for v in values if v != 0]
    return float(np.mean(nz)) if nz else 0.0


def table_summary(rows) -> EvaluationSummary:
    """Per-table and overall averages.

    Device column: mean over all rows of a table.  Normal column: mean over
    the rows that are out of range (non-zero), 0 when none are.  Accuracy is
    100 minus the mean of the per-table normal-column averages.
    """
    rows = list(rows)
    if not rows:
        raise SchemaError("no table rows")
    by_table: dict = {}
    for r in rows:
        by_table.setdefault(r.table_id, []).append(r)
    expected = {(p, k) for p in TABLE_PARAMETERS for k in TABLE_PERIODS}
    tables = []
    computed_normal = []
    for tid in sorted(by_table):
        trows = by_table[tid]
        keys = [(r.parameter, r.period) for r in trows]
        if len(keys) != len(expected) or set(keys) != expected:
            raise SchemaError(f"table {tid} must have one row per parameter and period "
                              f"({len(expected)} rows), got {len(trows)}")
        tables.append(TableSummary(
            tid,
            float(np.mean([r.device_error_pct for r in trows])),
            _nonzero_mean(r.normal_error_pct for r in trows),
            tuple(trows),
        ))
        computed_normal.append(_nonzero_mean(r.computed_normal_error_pct for r in trows))
    overall = float(np.mean([t.device_error_pct for t in tables]))
    accuracy = 100.0 - float(np.mean([t.normal_error_pct for t in tables]))
    return EvaluationSummary(tuple(tables), overall, accuracy, 100.0 - float(np.mean(computed_normal)))


def _data_path(name: str) -> Path:
    return Path(str(resources.files("fogecg") / "data" / name))


def bundled_tables_path() -> Path:
    return _data_path("tables_2_5.csv")


def bundled_components_path() -> Path:
    return _data_path("table7_components.csv")


def _csv_rows(path):
    with Path(path).open(newline="") as fh:
        yield from csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))


def load_tables(path=None) -> list:
    path = bundled_tables_path() if path is None else path
    rows = []
    for lineno, d in enumerate(_csv_rows(path), start=1):
        missing = [c for c in TABLE_COLUMNS if not d.get(c)]
        if missing:
            raise SchemaError(f"row {lineno}: missing {missing}")
        try:
            override = d.get("normal_pct_override") or None
            rows.append(ErrorRow(
                int(d["table_id"]), d["parameter"].strip(), int(d["period"]),
                float(d["lo_ms"]), float(d["hi_ms"]), float(d["reference_ms"]), float(d["device_ms"]),
                None if override is None else float(override),
            ))
        except ValueError as exc:
            raise SchemaError(f"row {lineno}: {exc}") from None
    return rows


@dataclass(frozen=True)
class PowerComponent:
    name: str
    volts: float
    amps: float

    def __post_init__(self):
        if not (self.volts > 0 and self.amps > 0):
            raise ParameterError(f"{self.name}: volts and amps must be > 0")


@dataclass(frozen=True)
class PowerBudget:
    watts: float
    hours: float

    @property
    def watt_hours(self) -> float:
        return self.watts * self.hours

    def to_dict(self) -> dict:
        return {"watts": self.watts, "hours": self.hours, "watt_hours": self.watt_hours}


def power_budget(components, hours: float = 24.0) -> PowerBudget:
    """Peak draw as the sum of V*I over components, and energy over ``hours``."""
    components = list(components)
    if not components:
        raise EmptyInput("no power components given")
    if hours < 0:
        raise ParameterError("hours must be >= 0")
    return PowerBudget(sum(c.volts * c.amps for c in components), hours)


def load_components(path=None) -> list:
    path = bundled_components_path() if path is None else path
    out = []
    for d in _csv_rows(path):
        try:
            out.append(PowerComponent(d["name"], float(d["volts"]), float(d["amps"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad component row {d!r}: {exc}") from None
    return out
