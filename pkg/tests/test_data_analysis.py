import pandas as pd

from data_analysis import CSV_COLUMNS, census_dataframe, export_census_csv, plot_census_ratios, summarize_census
from density import CensusRecord, append_census_record, census_path


def make_record(k, positive, negative, unknown, ball, partial=False, seed=0):
    return CensusRecord(2, k, 1, positive, negative, unknown, ball, seed, 2, partial)


def test_census_dataframe_ratios_and_filtering():
    records = [
        make_record(1, 0, 5, 0, 5),
        make_record(2, 4, 10, 3, 17),
        make_record(3, 1, 2, 0, 53, partial=True),
    ]
    df = census_dataframe(records)
    assert list(df["k"]) == [1, 2]
    assert df.loc[1, "positive_ratio"] == 4 / 17
    assert df.loc[0, "negative_ratio"] == 1.0


def test_census_dataframe_keeps_latest_duplicate():
    df = census_dataframe([make_record(1, 0, 5, 0, 5), make_record(1, 1, 4, 0, 5)])
    assert len(df) == 1
    assert df.loc[0, "positive"] == 1


def test_empty_census_dataframe():
    df = census_dataframe([])
    assert df.empty
    assert list(df.columns) == CSV_COLUMNS


def test_export_and_plot(tmp_path):
    df = census_dataframe([make_record(1, 0, 5, 0, 5), make_record(2, 4, 10, 3, 17)])
    csv_path = export_census_csv(df, str(tmp_path / "out" / "census.csv"))
    loaded = pd.read_csv(csv_path)
    assert list(loaded.columns) == CSV_COLUMNS
    assert len(loaded) == 2

    saved = plot_census_ratios(df, str(tmp_path / "plots"))
    assert len(saved) == 1
    assert saved[0].endswith("census_rank2_L1.png")
    assert (tmp_path / "plots" / "census_rank2_L1.png").exists()


def test_summarize_census_from_log(tmp_path):
    path = census_path(str(tmp_path))
    append_census_record(make_record(1, 0, 5, 0, 5), path)
    append_census_record(make_record(2, 4, 10, 3, 17), path)
    df = summarize_census(path, str(tmp_path))
    assert len(df) == 2
    assert (tmp_path / "census.csv").exists()
    assert (tmp_path / "census_rank2_L1.png").exists()


def test_summarize_census_without_log(tmp_path):
    assert summarize_census(census_path(str(tmp_path)), str(tmp_path)) is None
