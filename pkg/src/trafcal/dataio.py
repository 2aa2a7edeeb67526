"""Measurement ingestion and validation reporting.

Raw induction-loop records (one count per detector, date, and quarter-hour
window) are filtered down to clean weekdays, averaged into one daily
series per detector, and later compared against simulated series to score
a scenario: one overall error, an error per time window, and a ranking of
detectors from best to worst reproduced.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from trafcal.calibrate import (
    WINDOWS_PER_DAY,
    DetectorSeries,
    aggregate_series,
    nrmse,
)

WEEKDAY_NAMES = {
    "Mon": 0, "Tue": 1, "Wed": 2, "Thu": 3, "Fri": 4, "Sat": 5, "Sun": 6,
}
WINDOW_S = 900


class MeasurementFormatError(ValueError):
    """Raised when a measurement file does not parse under the schema."""


class NoSurvivingDaysError(ValueError):
    def __init__(self, detector_id: str):
        super().__init__(
            f"detector '{detector_id}': no day of data survives the filters"
        )
        self.detector_id = detector_id


class MissingMonthError(ValueError):
    pass


class DetectorMismatchError(ValueError):
    def __init__(self, missing: list[str], extra: list[str]):
        super().__init__(
            f"detector sets differ: missing from sim {missing}, unexpected {extra}"
        )
        self.missing = missing
        self.extra = extra


@dataclass(frozen=True)
class RawMeasurement:
    detector_id: str
    date: datetime.date
    window_start: int  # seconds-of-day, multiple of 900
    count: int


@dataclass(frozen=True)
class IngestionFilter:
    """Which calendar days count: chosen weekdays, minus an explicit
    exclusion list, optionally limited to a date range."""

    include_weekdays: frozenset[int] = frozenset({1, 2, 3})  # Tue, Wed, Thu
    exclude_dates: frozenset[datetime.date] = frozenset()
    date_range: Optional[tuple[datetime.date, datetime.date]] = None

    def __post_init__(self):
        if self.date_range is not None and self.date_range[0] > self.date_range[1]:
            raise ValueError("date_range start must not be after its end")

    def admits(self, date: datetime.date) -> bool:
        if date.weekday() not in self.include_weekdays:
            return False
        if date in self.exclude_dates:
            return False
        if self.date_range is not None:
            lo, hi = self.date_range
            if not lo <= date <= hi:
                return False
        return True


@dataclass
class IngestResult:
    series: list[DetectorSeries]
    days_used: dict[str, int]


@dataclass(frozen=True)
class WindowStat:
    window: int
    absolute_error: float
    window_nrmse: Optional[float]  # None when the window has no real traffic


@dataclass(frozen=True)
class DetectorScore:
    detector_id: str
    nrmse: Optional[float]  # None when the detector has no real traffic


@dataclass
class ValidationReport:
    scenario_nrmse: float
    per_window: list[WindowStat]
    per_detector: list[DetectorScore]  # ascending by nrmse, None-scores last
    best_detector: str
    worst_detector: str


# ---------------------------------------------------------------------------
# Measurement files
# ---------------------------------------------------------------------------


def read_measurements_csv(path) -> list[RawMeasurement]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["detector_id", "date", "window_start_s", "count"]:
            raise MeasurementFormatError(f"{path}: bad header {header}")
        for lineno, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MeasurementFormatError(f"{path}: line {lineno}: expected 4 columns")
            det, date_s, start_s, count_s = row
            try:
                date = datetime.date.fromisoformat(date_s)
            except ValueError as exc:
                raise MeasurementFormatError(f"{path}: line {lineno}: {exc}") from exc
            try:
                start = int(start_s)
                count = int(count_s)
            except ValueError as exc:
                raise MeasurementFormatError(f"{path}: line {lineno}: {exc}") from exc
            records.append(_check_record(RawMeasurement(det, date, start, count), f"{path}: line {lineno}"))
    return records


def _check_record(rec: RawMeasurement, where: str) -> RawMeasurement:
    if rec.window_start % WINDOW_S != 0 or not 0 <= rec.window_start < 86400:
        raise MeasurementFormatError(
            f"{where}: window_start {rec.window_start} not a quarter-hour of the day"
        )
    if rec.count < 0:
        raise MeasurementFormatError(f"{where}: negative count")
    return rec


def write_measurements_csv(records: Sequence[RawMeasurement], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector_id", "date", "window_start_s", "count"])
        for rec in sorted(records, key=lambda r: (r.detector_id, r.date, r.window_start)):
            w.writerow([rec.detector_id, rec.date.isoformat(), rec.window_start, rec.count])


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def ingest(records: Sequence[RawMeasurement], filt: IngestionFilter = IngestionFilter()) -> IngestResult:
    """Average admitted days into one 96-window series per detector.

    A day only counts for a detector when every one of the 96 windows is
    present exactly once; partial or duplicated days are treated like any
    other faulty day and skipped. The result is independent of the order
    of the input records.
    """
    by_day: dict[tuple[str, datetime.date], dict[int, int]] = {}
    dupes: set[tuple[str, datetime.date]] = set()
    for rec in records:
        _check_record(rec, f"record for '{rec.detector_id}'")
        if not filt.admits(rec.date):
            continue
        key = (rec.detector_id, rec.date)
        windows = by_day.setdefault(key, {})
        if rec.window_start in windows:
            dupes.add(key)
        windows[rec.window_start] = rec.count

    sums: dict[str, list[int]] = {}
    days: dict[str, int] = {}
    for (det, date) in sorted(by_day, key=lambda k: (k[0], k[1])):
        if (det, date) in dupes:
            continue
        windows = by_day[(det, date)]
        if len(windows) != WINDOWS_PER_DAY:
            continue
        acc = sums.setdefault(det, [0] * WINDOWS_PER_DAY)
        for start, count in windows.items():
            acc[start // WINDOW_S] += count
        days[det] = days.get(det, 0) + 1

    detectors = sorted({rec.detector_id for rec in records})
    series = []
    for det in detectors:
        if days.get(det, 0) == 0:
            raise NoSurvivingDaysError(det)
        n = days[det]
        series.append(
            DetectorSeries(det, tuple(s / n for s in sums[det]), origin="real")
        )
    return IngestResult(series=series, days_used=days)


@dataclass
class SplitDataset:
    modeling: list[DetectorSeries]
    validation: list[DetectorSeries]
    flags: list[str] = field(default_factory=list)


def split_dataset(
    series_by_month: dict[str, list[DetectorSeries]],
    modeling_month: str,
    validation_month: str,
) -> SplitDataset:
    """Partition month-keyed series into the modeling and validation sets.

    The modeling month must exist; a missing validation month yields an
    empty subset with a flag instead of an error.
    """
    if modeling_month not in series_by_month:
        raise MissingMonthError(
            f"modeling month '{modeling_month}' not in {sorted(series_by_month)}"
        )
    flags = []
    validation = series_by_month.get(validation_month)
    if validation is None:
        validation = []
        flags.append(f"validation month '{validation_month}' has no data")
    return SplitDataset(
        modeling=list(series_by_month[modeling_month]),
        validation=list(validation),
        flags=flags,
    )


def month_label(date: datetime.date) -> str:
    return f"{date.year:04d}-{date.month:02d}"


def group_by_month(records: Sequence[RawMeasurement]) -> dict[str, list[RawMeasurement]]:
    out: dict[str, list[RawMeasurement]] = {}
    for rec in records:
        out.setdefault(month_label(rec.date), []).append(rec)
    return out


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


def validate(
    real: Sequence[DetectorSeries], sim: Sequence[DetectorSeries]
) -> ValidationReport:
    """Score how well the simulated series reproduce the measured ones.

    Three granularities: one scenario number (error of the aggregated
    series), a per-window slice (absolute error plus error across
    detectors within that window), and a per-detector ranking ascending
    from best reproduced to worst.
    """
    real_by_id = {s.detector_id: s for s in real}
    sim_by_id = {s.detector_id: s for s in sim}
    if set(real_by_id) != set(sim_by_id):
        raise DetectorMismatchError(
            missing=sorted(set(real_by_id) - set(sim_by_id)),
            extra=sorted(set(sim_by_id) - set(real_by_id)),
        )
    if not real_by_id:
        raise ValueError("validation needs at least one detector")
    ids = sorted(real_by_id)

    real_total = aggregate_series([real_by_id[i] for i in ids])
    sim_total = aggregate_series([sim_by_id[i] for i in ids])
    scenario = nrmse(real_total, sim_total)

    per_window = []
    for w in range(WINDOWS_PER_DAY):
        r_vec = [real_by_id[i].counts[w] for i in ids]
        s_vec = [sim_by_id[i].counts[w] for i in ids]
        abs_err = abs(math.fsum(r_vec) - math.fsum(s_vec))
        mean_r = math.fsum(r_vec) / len(r_vec)
        if mean_r > 0:
            w_nrmse = nrmse(r_vec, s_vec)
        else:
            w_nrmse = None
        per_window.append(WindowStat(w, abs_err, w_nrmse))

    scores = []
    for det in ids:
        r = real_by_id[det].counts
        s = sim_by_id[det].counts
        if math.fsum(r) > 0:
            scores.append(DetectorScore(det, nrmse(r, s)))
        else:
            scores.append(DetectorScore(det, None))
    scores.sort(key=lambda d: (d.nrmse is None, d.nrmse if d.nrmse is not None else 0.0, d.detector_id))
    ranked = [d for d in scores if d.nrmse is not None]
    best = ranked[0].detector_id if ranked else scores[0].detector_id
    worst = ranked[-1].detector_id if ranked else scores[-1].detector_id

    return ValidationReport(
        scenario_nrmse=scenario,
        per_window=per_window,
        per_detector=scores,
        best_detector=best,
        worst_detector=worst,
    )


def write_report(report: ValidationReport, json_path, per_window_path, per_detector_path) -> None:
    doc = {
        "scenario_nrmse": report.scenario_nrmse,
        "per_window": [
            {
                "window": ws.window,
                "absolute_error": ws.absolute_error,
                "window_nrmse": ws.window_nrmse,
            }
            for ws in report.per_window
        ],
        "per_detector": [
            {"detector_id": d.detector_id, "nrmse": d.nrmse}
            for d in report.per_detector
        ],
        "best_detector": report.best_detector,
        "worst_detector": report.worst_detector,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    with open(per_window_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "abs_error", "nrmse"])
        for ws in report.per_window:
            w.writerow([
                ws.window,
                f"{ws.absolute_error:.6f}",
                "" if ws.window_nrmse is None else f"{ws.window_nrmse:.6f}",
            ])
    with open(per_detector_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector_id", "nrmse"])
        for d in report.per_detector:
            w.writerow([d.detector_id, "" if d.nrmse is None else f"{d.nrmse:.6f}"])


def read_report(json_path) -> ValidationReport:
    with open(json_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return ValidationReport(
        scenario_nrmse=doc["scenario_nrmse"],
        per_window=[
            WindowStat(d["window"], d["absolute_error"], d["window_nrmse"])
            for d in doc["per_window"]
        ],
        per_detector=[
            DetectorScore(d["detector_id"], d["nrmse"]) for d in doc["per_detector"]
        ],
        best_detector=doc["best_detector"],
        worst_detector=doc["worst_detector"],
    )


def series_to_csv(series: Sequence[DetectorSeries], begin: float, path) -> None:
    """Detector series in the simulator's detector CSV shape (means may be
    fractional)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector_id", "window_start_s", "count"])
        for s in sorted(series, key=lambda s: s.detector_id):
            for i, x in enumerate(s.counts):
                value = int(x) if float(x).is_integer() else x
                w.writerow([s.detector_id, int(begin + i * WINDOW_S), value])


def series_from_csv(path, origin: str) -> list[DetectorSeries]:
    """Read a detector CSV (integer or mean counts) into series."""
    acc: dict[str, dict[int, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["detector_id", "window_start_s", "count"]:
            raise MeasurementFormatError(f"{path}: bad header {header}")
        for lineno, row in enumerate(r, start=2):
            if len(row) != 3:
                raise MeasurementFormatError(f"{path}: line {lineno}: expected 3 columns")
            det, start, value = row[0], int(row[1]), float(row[2])
            if start in acc.setdefault(det, {}):
                raise MeasurementFormatError(
                    f"{path}: line {lineno}: duplicate window {start} for '{det}'"
                )
            acc[det][start] = value
    series = []
    for det in sorted(acc):
        windows = acc[det]
        if len(windows) != WINDOWS_PER_DAY:
            raise MeasurementFormatError(
                f"{path}: detector '{det}' has {len(windows)} windows, expected {WINDOWS_PER_DAY}"
            )
        starts = sorted(windows)
        if any(b - a != WINDOW_S for a, b in zip(starts, starts[1:])):
            raise MeasurementFormatError(
                f"{path}: detector '{det}': window starts not on a {WINDOW_S} s grid"
            )
        series.append(DetectorSeries(det, tuple(windows[s] for s in starts), origin))
    return series
