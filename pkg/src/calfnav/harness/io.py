"""CSV encoding of the harness tables. Floats are written with nine significant digits."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..env import fmt
from .stats import EpisodeRow, SummaryRow

RAW_COLUMNS = ("seed", "episode", "total_cost", "reached_goal", "reach_time_s",
               "successful_updates", "recovery_invocations")
SUMMARY_COLUMNS = ("episode", "median_top25_cost", "ci_low", "ci_high", "success_rate")
CURVE_COLUMNS = ("t", "median_accumulated_cost", "ci_low", "ci_high")


class TableFormatError(ValueError):
    """A CSV file does not have the expected columns or values."""


def _table(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def raw_csv(rows: Iterable[EpisodeRow]) -> str:
    return _table(RAW_COLUMNS, (
        (r.seed, r.episode, fmt(r.total_cost), int(r.reached_goal), fmt(r.reach_time_s),
         r.successful_updates, r.recovery_invocations)
        for r in sorted(rows, key=lambda r: (r.seed, r.episode))
    ))


def summary_csv(rows: Iterable[SummaryRow]) -> str:
    return _table(SUMMARY_COLUMNS, (
        (r.episode, fmt(r.median_top25_cost), fmt(r.ci_low), fmt(r.ci_high), fmt(r.success_rate))
        for r in rows
    ))


def curve_csv(bands) -> str:
    return _table(CURVE_COLUMNS, ([fmt(v) for v in row] for row in bands))


def _rows(text: str, columns: Sequence[str], source: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != tuple(columns):
        raise TableFormatError(f"{source}: expected columns {','.join(columns)}")
    return list(reader)


def parse_raw(text: str, source: str = "<raw>") -> list[EpisodeRow]:
    out = []
    for i, d in enumerate(_rows(text, RAW_COLUMNS, source), start=2):
        try:
            out.append(EpisodeRow(
                seed=int(d["seed"]),
                episode=int(d["episode"]),
                total_cost=float(d["total_cost"]),
                reached_goal=bool(int(d["reached_goal"])),
                reach_time_s=float(d["reach_time_s"]),
                successful_updates=int(d["successful_updates"]),
                recovery_invocations=int(d["recovery_invocations"]),
            ))
        except (TypeError, ValueError) as exc:
            raise TableFormatError(f"{source}, line {i}: {exc}") from exc
    return out


def parse_summary(text: str, source: str = "<summary>") -> list[SummaryRow]:
    out = []
    for i, d in enumerate(_rows(text, SUMMARY_COLUMNS, source), start=2):
        try:
            out.append(SummaryRow(int(d["episode"]), *(float(d[c]) for c in SUMMARY_COLUMNS[1:])))
        except (TypeError, ValueError) as exc:
            raise TableFormatError(f"{source}, line {i}: {exc}") from exc
    return out


def read_raw(path: str | Path) -> list[EpisodeRow]:
    return parse_raw(Path(path).read_text(), str(path))


def read_summary(path: str | Path) -> list[SummaryRow]:
    return parse_summary(Path(path).read_text(), str(path))


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def reach_time_or_nan(value: float | None) -> float:
    return math.nan if value is None else value
