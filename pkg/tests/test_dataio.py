"""Measurement ingestion, dataset splitting, and validation reports."""

import datetime
import math
import random

import pytest

from trafcal import dataio
from trafcal.calibrate import WINDOWS_PER_DAY, DetectorSeries, nrmse
from trafcal.dataio import (
    WINDOW_S,
    DetectorMismatchError,
    IngestionFilter,
    MeasurementFormatError,
    MissingMonthError,
    NoSurvivingDaysError,
    RawMeasurement,
    group_by_month,
    ingest,
    month_label,
    read_measurements_csv,
    read_report,
    series_from_csv,
    series_to_csv,
    split_dataset,
    validate,
    write_measurements_csv,
    write_report,
)


def full_day(det, date, base=0, bump=None):
    """96 records for one detector-day; bump=(window, delta) tweaks one."""
    counts = [base + (w % 7) for w in range(WINDOWS_PER_DAY)]
    if bump is not None:
        counts[bump[0]] += bump[1]
    return [
        RawMeasurement(det, date, w * WINDOW_S, counts[w])
        for w in range(WINDOWS_PER_DAY)
    ]


def series(det, counts, origin="real"):
    return DetectorSeries(det, tuple(counts), origin=origin)


def flat(det, value, origin="real"):
    return series(det, [value] * WINDOWS_PER_DAY, origin)


# September 2023: the 5th is a Tuesday.
TUE = datetime.date(2023, 9, 5)
WED = datetime.date(2023, 9, 6)
THU = datetime.date(2023, 9, 7)
FRI = datetime.date(2023, 9, 8)
SAT = datetime.date(2023, 9, 9)


# -- day filters ---------------------------------------------------------------


def test_filter_defaults_to_tue_wed_thu():
    filt = IngestionFilter()
    admitted = [
        datetime.date(2023, 9, d)
        for d in range(1, 31)
        if filt.admits(datetime.date(2023, 9, d))
    ]
    assert all(d.weekday() in (1, 2, 3) for d in admitted)
    assert len(admitted) == 12  # Tue/Wed/Thu in September 2023


def test_filter_exclusions_and_range():
    filt = IngestionFilter(
        exclude_dates=frozenset({WED}),
        date_range=(TUE, THU),
    )
    assert filt.admits(TUE)
    assert not filt.admits(WED)  # excluded
    assert filt.admits(THU)
    assert not filt.admits(FRI)  # wrong weekday
    assert not filt.admits(datetime.date(2023, 9, 12))  # Tue but out of range


def test_filter_rejects_inverted_range():
    with pytest.raises(ValueError):
        IngestionFilter(date_range=(THU, TUE))


# -- ingestion -----------------------------------------------------------------


def test_ingest_averages_admitted_days():
    records = full_day("d1", TUE, base=0) + full_day("d1", WED, base=2)
    result = ingest(records)
    assert result.days_used == {"d1": 2}
    (s,) = result.series
    assert s.detector_id == "d1"
    assert s.origin == "real"
    # mean of base 0 and base 2 is base 1
    assert s.counts == tuple(1 + (w % 7) for w in range(WINDOWS_PER_DAY))


def test_ingest_skips_weekend_and_excluded_days():
    records = (
        full_day("d1", TUE, base=0)
        + full_day("d1", SAT, base=90)  # weekend, never admitted
        + full_day("d1", WED, base=90)  # excluded below
    )
    filt = IngestionFilter(exclude_dates=frozenset({WED}))
    result = ingest(records, filt)
    assert result.days_used == {"d1": 1}
    assert result.series[0].counts == tuple(w % 7 for w in range(WINDOWS_PER_DAY))


def test_ingest_drops_day_with_missing_window():
    broken = [r for r in full_day("d1", WED, base=90) if r.window_start != 43200]
    result = ingest(full_day("d1", TUE, base=0) + broken)
    assert result.days_used == {"d1": 1}
    assert max(result.series[0].counts) <= 6


def test_ingest_drops_day_with_duplicate_window():
    day = full_day("d1", WED, base=90)
    day.append(RawMeasurement("d1", WED, 0, day[0].count))  # same value, still dup
    result = ingest(full_day("d1", TUE, base=0) + day)
    assert result.days_used == {"d1": 1}
    assert max(result.series[0].counts) <= 6


def test_ingest_requires_a_surviving_day_per_detector():
    records = full_day("d1", TUE) + full_day("d2", SAT)
    with pytest.raises(NoSurvivingDaysError) as exc:
        ingest(records)
    assert exc.value.detector_id == "d2"
    # no detectors at all is not an error, just an empty result
    empty = ingest([])
    assert empty.series == [] and empty.days_used == {}


def test_ingest_rejects_malformed_records():
    with pytest.raises(MeasurementFormatError):
        ingest([RawMeasurement("d1", TUE, 450, 1)])  # off-grid window
    with pytest.raises(MeasurementFormatError):
        ingest([RawMeasurement("d1", TUE, 86400, 1)])  # past end of day
    with pytest.raises(MeasurementFormatError):
        ingest([RawMeasurement("d1", TUE, 0, -1)])  # negative count


def test_ingest_against_brute_force():
    # A month of noisy multi-detector data with injected faults: compare
    # against a from-scratch average over the days that should survive.
    rng = random.Random(404)
    dets = ["d_a", "d_b", "d_c"]
    start = datetime.date(2023, 9, 1)
    dates = [start + datetime.timedelta(days=i) for i in range(30)]
    excluded = frozenset(rng.sample(dates, 4))
    filt = IngestionFilter(exclude_dates=excluded)

    records = []
    surviving = {det: [] for det in dets}
    for det in dets:
        for date in dates:
            day = [
                RawMeasurement(det, date, w * WINDOW_S, rng.randint(0, 40))
                for w in range(WINDOWS_PER_DAY)
            ]
            fault = rng.random()
            if fault < 0.15:
                del day[rng.randrange(len(day))]
            elif fault < 0.30:
                day.append(RawMeasurement(det, date, rng.choice(day).window_start, 7))
            elif filt.admits(date):
                surviving[det].append(day)
            records.extend(day)
        # guarantee at least one clean admitted day
        if not surviving[det]:
            day = full_day(det, THU)
            records.extend(day)
            surviving[det].append(day)

    result = ingest(records, filt)
    assert result.days_used == {det: len(surviving[det]) for det in dets}
    assert [s.detector_id for s in result.series] == sorted(dets)
    for s in result.series:
        days = surviving[s.detector_id]
        for w in range(WINDOWS_PER_DAY):
            want = math.fsum(d[w].count for d in days) / len(days)
            assert abs(s.counts[w] - want) < 1e-12


def test_ingest_is_order_independent():
    rng = random.Random(405)
    records = (
        full_day("d1", TUE, base=3)
        + full_day("d1", THU, base=8)
        + full_day("d2", WED, base=1)
    )
    base = ingest(records)
    for _ in range(5):
        shuffled = records[:]
        rng.shuffle(shuffled)
        again = ingest(shuffled)
        assert again.days_used == base.days_used
        assert again.series == base.series


# -- measurement files ---------------------------------------------------------


def test_measurements_csv_round_trip(tmp_path):
    records = full_day("d2", WED, base=5) + full_day("d1", TUE, base=0)
    path = tmp_path / "loops.csv"
    write_measurements_csv(records, path)
    back = read_measurements_csv(path)
    assert back == sorted(records, key=lambda r: (r.detector_id, r.date, r.window_start))
    assert path.read_text().splitlines()[0] == "detector_id,date,window_start_s,count"


def test_measurements_csv_rejects_bad_input(tmp_path):
    path = tmp_path / "loops.csv"
    path.write_text("detector,day,start,n\n")
    with pytest.raises(MeasurementFormatError):
        read_measurements_csv(path)
    path.write_text("detector_id,date,window_start_s,count\nd1,2023-09-05,0\n")
    with pytest.raises(MeasurementFormatError):
        read_measurements_csv(path)
    path.write_text("detector_id,date,window_start_s,count\nd1,05.09.2023,0,1\n")
    with pytest.raises(MeasurementFormatError):
        read_measurements_csv(path)
    path.write_text("detector_id,date,window_start_s,count\nd1,2023-09-05,0,-3\n")
    with pytest.raises(MeasurementFormatError):
        read_measurements_csv(path)


# -- monthly split -------------------------------------------------------------


def test_month_label_and_grouping():
    assert month_label(TUE) == "2023-09"
    assert month_label(datetime.date(2024, 1, 2)) == "2024-01"
    records = [
        RawMeasurement("d1", TUE, 0, 1),
        RawMeasurement("d1", datetime.date(2023, 10, 3), 0, 2),
        RawMeasurement("d2", WED, 900, 3),
    ]
    groups = group_by_month(records)
    assert sorted(groups) == ["2023-09", "2023-10"]
    assert len(groups["2023-09"]) == 2


def test_split_dataset():
    months = {
        "2023-09": [flat("d1", 4.0)],
        "2023-10": [flat("d1", 5.0)],
    }
    split = split_dataset(months, "2023-09", "2023-10")
    assert split.modeling == months["2023-09"]
    assert split.validation == months["2023-10"]
    assert split.flags == []

    partial = split_dataset(months, "2023-09", "2023-11")
    assert partial.modeling == months["2023-09"]
    assert partial.validation == []
    assert partial.flags and "2023-11" in partial.flags[0]

    with pytest.raises(MissingMonthError):
        split_dataset(months, "2023-01", "2023-10")


# -- validation ----------------------------------------------------------------


def test_validate_real_against_itself_is_all_zero():
    rng = random.Random(406)
    real = [
        series(f"d{i}", [rng.uniform(1.0, 30.0) for _ in range(WINDOWS_PER_DAY)])
        for i in range(4)
    ]
    report = validate(real, real)
    assert report.scenario_nrmse == 0.0
    assert len(report.per_window) == WINDOWS_PER_DAY
    for ws in report.per_window:
        assert ws.absolute_error == 0.0
        assert ws.window_nrmse == 0.0
    assert all(d.nrmse == 0.0 for d in report.per_detector)


def test_validate_ranks_detectors_by_error():
    rng = random.Random(407)
    real = [
        series(f"d{i}", [rng.uniform(5.0, 30.0) for _ in range(WINDOWS_PER_DAY)])
        for i in range(6)
    ]
    sim = []
    for i, s in enumerate(real):
        scale = 1.0 + 0.03 * i
        sim.append(series(s.detector_id, [scale * c for c in s.counts], "simulated"))
    sim[2] = series("d2", [0.5 * c for c in real[2].counts], "simulated")  # injected outlier

    report = validate(real, sim)
    want = sorted(
        (nrmse(r.counts, s.counts), r.detector_id) for r, s in zip(real, sim)
    )
    assert [d.detector_id for d in report.per_detector] == [d for _, d in want]
    for d, (score, _) in zip(report.per_detector, want):
        assert abs(d.nrmse - score) < 1e-12
    assert report.best_detector == "d0"  # scale 1.0, reproduced exactly
    assert report.worst_detector == "d2"
    assert report.scenario_nrmse > 0.0


def test_validate_per_window_stats():
    real = [flat("d1", 4.0), flat("d2", 6.0)]
    sim = [flat("d1", 5.0, "simulated"), flat("d2", 6.0, "simulated")]
    report = validate(real, sim)
    for ws in report.per_window:
        assert abs(ws.absolute_error - 1.0) < 1e-12
        # rmse over detectors is sqrt(1/2), window mean is 5
        assert abs(ws.window_nrmse - math.sqrt(0.5) / 5.0) < 1e-12


def test_validate_flags_silent_windows_and_detectors():
    counts = [0.0] * WINDOWS_PER_DAY
    counts[10] = 8.0
    real = [series("d_live", counts), flat("d_dead", 0.0)]
    sim = [series("d_live", counts, "simulated"), flat("d_dead", 0.0, "simulated")]
    report = validate(real, sim)
    assert report.per_window[10].window_nrmse == 0.0
    assert report.per_window[0].window_nrmse is None
    scores = {d.detector_id: d.nrmse for d in report.per_detector}
    assert scores == {"d_live": 0.0, "d_dead": None}
    # unscorable detectors sort last and never win best/worst
    assert report.per_detector[-1].detector_id == "d_dead"
    assert report.best_detector == "d_live"
    assert report.worst_detector == "d_live"


def test_validate_requires_matching_detectors():
    with pytest.raises(DetectorMismatchError) as exc:
        validate([flat("d1", 1.0)], [flat("d2", 1.0, "simulated")])
    assert exc.value.missing == ["d1"]
    assert exc.value.extra == ["d2"]
    with pytest.raises(ValueError):
        validate([], [])


# -- report files --------------------------------------------------------------


def test_report_round_trip(tmp_path):
    rng = random.Random(408)
    real = [
        series(f"d{i}", [rng.uniform(0.0, 20.0) for _ in range(WINDOWS_PER_DAY)])
        for i in range(3)
    ]
    sim = [
        series(s.detector_id, [c + rng.uniform(0.0, 2.0) for c in s.counts], "simulated")
        for s in real
    ]
    report = validate(real, sim)
    json_path = tmp_path / "report.json"
    win_path = tmp_path / "per_window.csv"
    det_path = tmp_path / "per_detector.csv"
    write_report(report, json_path, win_path, det_path)
    assert read_report(json_path) == report

    win_lines = win_path.read_text().splitlines()
    assert win_lines[0] == "window,abs_error,nrmse"
    assert len(win_lines) == 1 + WINDOWS_PER_DAY
    det_lines = det_path.read_text().splitlines()
    assert det_lines[0] == "detector_id,nrmse"
    assert len(det_lines) == 1 + len(real)


def test_report_serializes_missing_scores_as_blank(tmp_path):
    real = [flat("d_dead", 0.0), flat("d_live", 3.0)]
    sim = [flat("d_dead", 0.0, "simulated"), flat("d_live", 4.0, "simulated")]
    report = validate(real, sim)
    json_path = tmp_path / "report.json"
    win_path = tmp_path / "per_window.csv"
    det_path = tmp_path / "per_detector.csv"
    write_report(report, json_path, win_path, det_path)
    assert read_report(json_path) == report
    assert "d_dead," in det_path.read_text().splitlines()[-1]


# -- series files --------------------------------------------------------------


def test_series_csv_round_trip(tmp_path):
    rng = random.Random(409)
    original = [
        series("d2", [rng.uniform(0.0, 9.0) for _ in range(WINDOWS_PER_DAY)]),
        series("d1", [float(rng.randint(0, 9)) for _ in range(WINDOWS_PER_DAY)]),
    ]
    path = tmp_path / "series.csv"
    series_to_csv(original, begin=21600.0, path=path)
    back = series_from_csv(path, origin="real")
    assert [s.detector_id for s in back] == ["d1", "d2"]
    for got, want in zip(back, sorted(original, key=lambda s: s.detector_id)):
        assert got.origin == "real"
        assert all(abs(g - w) < 1e-12 for g, w in zip(got.counts, want.counts))
    # integer means are written without a decimal point
    first_count = path.read_text().splitlines()[1].split(",")[2]
    assert "." not in first_count


def test_series_from_csv_rejects_broken_files(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("detector,window,count\n")
    with pytest.raises(MeasurementFormatError):
        series_from_csv(path, origin="real")

    header = "detector_id,window_start_s,count\n"
    rows = [f"d1,{w * WINDOW_S},1" for w in range(WINDOWS_PER_DAY)]
    path.write_text(header + "\n".join(rows + ["d1,0,1"]) + "\n")
    with pytest.raises(MeasurementFormatError):  # duplicate window
        series_from_csv(path, origin="real")
    path.write_text(header + "\n".join(rows[:-1]) + "\n")
    with pytest.raises(MeasurementFormatError):  # one window short
        series_from_csv(path, origin="real")
    gappy = [f"d1,{w * WINDOW_S + (900 if w == 50 else 0)},1" for w in range(WINDOWS_PER_DAY)]
    path.write_text(header + "\n".join(gappy) + "\n")
    with pytest.raises(MeasurementFormatError):  # off the quarter-hour grid
        series_from_csv(path, origin="real")
