"""Event-log CSV export and import.

One row per event in recording order. ``cost`` is the cumulative case cost
after the event and ``timestamp`` marks the event's completion.
"""

from __future__ import annotations

import csv
import io
import os
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional

from ..engine import EventLog

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)
COLUMNS = (
    "case_nr",
    "activity",
    "timestamp",
    "cost",
    "amount",
    "est_quality",
    "unc_quality",
    "interest_rate",
    "discount_factor",
    "regime_tag",
)
HIDDEN_COLUMN = "quality"
_NUMERIC = ("cost", "amount", "est_quality", "unc_quality", "interest_rate", "discount_factor", "quality")


def timestamp(days: float) -> str:
    t = EPOCH + timedelta(days=days)
    return t.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_timestamp(text: str) -> float:
    t = datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
    return (t - EPOCH) / timedelta(days=1)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def header(include_hidden: bool = False) -> tuple[str, ...]:
    return COLUMNS + ((HIDDEN_COLUMN,) if include_hidden else ())


def iter_rows(log: EventLog, include_hidden: bool = False) -> Iterable[list[str]]:
    for case in log.cases:
        for e in case.events:
            row = [
                str(case.case_nr),
                e.activity.value,
                timestamp(e.end),
                _fmt(e.cum_cost),
                _fmt(e.amount),
                _fmt(e.est_quality),
                _fmt(e.unc_quality),
                _fmt(e.interest_rate),
                _fmt(e.discount_factor),
                case.regime_tag,
            ]
            if include_hidden:
                row.append(_fmt(case.quality))
            yield row


def to_csv_text(log: EventLog, include_hidden: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(include_hidden))
    w.writerows(iter_rows(log, include_hidden))
    return buf.getvalue()


def export_csv(log: EventLog, path, include_hidden: bool = False) -> None:
    text = to_csv_text(log, include_hidden)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.access(parent, os.W_OK):
        raise OSError(f"cannot write to {path}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def read_csv(path) -> list[dict]:
    """Rows with numeric fields parsed; empty cells become None."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row: dict = {"case_nr": int(raw["case_nr"]), "activity": raw["activity"]}
            row["timestamp"] = parse_timestamp(raw["timestamp"])
            for col in _NUMERIC:
                if col in raw:
                    row[col] = float(raw[col]) if raw[col] != "" else None
            row["regime_tag"] = raw["regime_tag"]
            rows.append(row)
    return rows
