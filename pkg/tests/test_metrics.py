import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsim.errors import ReportError
from fedsim.metrics import (
    CSV_COLUMNS,
    MetricsRecord,
    accuracy_at,
    catch_up_time,
    compare_runs,
    plot_blocks,
    read_csv,
    time_to_accuracy,
    write_csv,
)


def trace(accs, algorithm="csmaafl", gamma=0.2, slot=10):
    return [MetricsRecord(k * slot, float(k), k, 1.0 - a, a, algorithm, gamma) for k, a in enumerate(accs)]


records = st.lists(st.builds(
    MetricsRecord,
    st.integers(0, 10**6), st.floats(0, 100, allow_nan=False), st.integers(0, 10**4),
    st.floats(0, 50, allow_nan=False), st.floats(0, 1), st.sampled_from(["sfl", "csmaafl", "afl-baseline"]),
    st.one_of(st.none(), st.floats(0.01, 5)),
), max_size=20)


@given(records)
def test_csv_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_csv(recs, path)
    assert read_csv(path) == recs
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_incompatible_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,accuracy\n0,0.1\n")
    with pytest.raises(ReportError, match="columns"):
        read_csv(path)


def test_step_lookup_helpers():
    recs = trace([0.1, 0.5, 0.7])
    assert accuracy_at(recs, 1.5) == 0.5
    assert accuracy_at(recs, -1) is None
    assert time_to_accuracy(recs, 0.5) == 1.0
    assert time_to_accuracy(recs, 0.9) is None
    assert catch_up_time(trace([0.0, 0.6, 0.6]), trace([0.0, 0.2, 0.6], "sfl", None)) == 2.0


def test_identical_files_have_zero_differences(tmp_path):
    a, b = write_csv(trace([0.1, 0.4]), tmp_path / "a.csv"), write_csv(trace([0.1, 0.4]), tmp_path / "b.csv")
    report = compare_runs([a, b], tmp_path / "r.txt")
    table = report.split("## accuracy by relative time")[1].strip().splitlines()[2:]  # heading tail, header
    assert [line.split("\t")[-1] for line in table] == ["+0.0000", "+0.0000"]
    assert (tmp_path / "r.txt").read_text() == report


def test_report_summary_and_catch_up(tmp_path):
    sfl = write_csv(trace([0.0, 0.3, 0.6, 0.8], "sfl", None), tmp_path / "sfl.csv")
    afl = write_csv(trace([0.0, 0.5, 0.7, 0.75]), tmp_path / "afl.csv")
    report = compare_runs([sfl, afl], tmp_path / "r.txt", target=0.7)
    assert "sfl [sfl.csv]\tfinal_accuracy=0.8000" in report
    assert "csmaafl(gamma=0.2) [afl.csv]\tfinal_accuracy=0.7500" in report
    assert "time_to_target=2.0000" in report
    assert "catch_up_time=3.0000" in report


def test_single_file_is_rejected(tmp_path):
    a = write_csv(trace([0.1]), tmp_path / "a.csv")
    with pytest.raises(ReportError, match="at least two"):
        compare_runs([a], tmp_path / "r.txt")


def test_plot_blocks():
    text = plot_blocks([("x", trace([0.1, 0.2])), ("y", trace([0.3]))])
    assert text.count('# "') == 2
    assert "\n\n\n" in text
    assert "1.000000 0.200000 0.800000" in text
