import numpy as np
import pytest

from battsched.battery import default_curve
from battsched.ingest import IngestError, ingest_curve, ingest_history, ingest_prices, ingest_schedule


def write(path, text):
    path.write_text(text)
    return path


def price_csv(tmp_path, prices):
    body = "".join(f"{h},{p}\n" for h, p in enumerate(prices))
    return write(tmp_path / "prices.csv", "hour,price_usd_per_kwh\n" + body)


def test_prices_round_trip(tmp_path):
    s = ingest_prices(price_csv(tmp_path, np.linspace(0.05, 0.3, 12)))
    assert len(s) == 12 and s.prices[0] == 0.05 and s.label == "prices.csv"


def test_non_numeric_price_cites_row(tmp_path):
    prices = [0.1] * 12
    prices[6] = "abc"
    with pytest.raises(IngestError, match="row 7") as err:
        ingest_prices(price_csv(tmp_path, prices))
    assert err.value.row == 7


def test_price_hours_must_be_sequential(tmp_path):
    p = write(tmp_path / "p.csv", "hour,price_usd_per_kwh\n0,0.1\n2,0.1\n")
    with pytest.raises(IngestError, match="row 2"):
        ingest_prices(p)


@pytest.mark.parametrize("text, match", [
    ("", "empty"),
    ("hour,price\n0,0.1\n", "header"),
    ("hour,price_usd_per_kwh\n", "no data"),
    ("hour,price_usd_per_kwh\n0,0.1,9\n", "columns"),
    ("hour,price_usd_per_kwh\n0,nan\n", "finite"),
])
def test_price_file_errors(tmp_path, text, match):
    with pytest.raises(IngestError, match=match):
        ingest_prices(write(tmp_path / "p.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_prices(tmp_path / "missing.csv")


def test_curve_loads(tmp_path):
    c = ingest_curve(write(tmp_path / "c.csv", "soc_percent,cumulative_degradation\n0,0\n50,0.2\n100,1\n"))
    assert c(75.0) == pytest.approx(0.6)


def test_decreasing_curve_soc_cites_row(tmp_path):
    text = "soc_percent,cumulative_degradation\n0,0\n50,0.2\n40,0.3\n100,1\n"
    with pytest.raises(IngestError, match="row 3"):
        ingest_curve(write(tmp_path / "c.csv", text))


@pytest.mark.parametrize("body, match", [
    ("0,0\n50,0.5\n100,0.4\n", "row 3"),
    ("0,0\n50,-0.1\n100,1\n", "row 2"),
    ("0,0\n", "at least 2"),
    ("10,0\n100,1\n", "cover"),
])
def test_curve_errors(tmp_path, body, match):
    with pytest.raises(IngestError, match=match):
        ingest_curve(write(tmp_path / "c.csv", "soc_percent,cumulative_degradation\n" + body))


def test_bundled_curve_passes_ingest():
    assert default_curve().soc.size >= 2


def hist(tmp_path, stamps, value="50000"):
    return write(tmp_path / "h.csv", "datetime,mw\n" + "".join(f"{s},{value}\n" for s in stamps))


def test_history_hours(tmp_path):
    h = ingest_history(hist(tmp_path, ["2018-01-01T00:00:00", "2018-01-01T01:00:00", "2018-01-01T02:00"]))
    assert list(h.hours) == [0, 1, 2]


def test_history_gap_policy(tmp_path):
    path = hist(tmp_path, ["2018-01-01 00:00", "2018-01-01 01:00", "2018-01-01 04:00"])
    with pytest.raises(IngestError, match="row 3.*2 missing"):
        ingest_history(path)
    assert list(ingest_history(path, allow_gaps=True).hours) == [0, 1, 4]


def test_history_with_offsets(tmp_path):
    h = ingest_history(hist(tmp_path, ["2018-03-11T00:00:00+00:00", "2018-03-10T20:00:00-05:00"]))
    assert list(h.hours) == [0, 1]


@pytest.mark.parametrize("stamps, match", [
    (["2018-01-01T00:00", "yesterday"], "row 2"),
    (["2018-01-01T00:00", "2018-01-01T00:30"], "whole number"),
    (["2018-01-01T01:00", "2018-01-01T00:00"], "not after"),
    (["2018-01-01T00:00", "2018-01-01T01:00+00:00"], "offset"),
])
def test_history_errors(tmp_path, stamps, match):
    with pytest.raises(IngestError, match=match):
        ingest_history(hist(tmp_path, stamps))


def test_history_rejects_negative_usage(tmp_path):
    with pytest.raises(IngestError, match="row 1"):
        ingest_history(hist(tmp_path, ["2018-01-01T00:00"], value="-3"))


def test_schedule_soc_must_match_powers(tmp_path):
    good = "hour,power_w,soc_percent,price_usd_per_kwh\n0,1.0,62.570710245128846,0.1\n"
    sched, prices = ingest_schedule(write(tmp_path / "s.csv", good), 50.0)
    assert sched.powers[0] == 1.0 and prices.prices[0] == 0.1
    bad = good.replace("62.57", "70.57")
    with pytest.raises(IngestError, match="row 1"):
        ingest_schedule(write(tmp_path / "s.csv", bad), 50.0)
