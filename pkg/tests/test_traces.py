import bz2
import calendar
import gzip
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgemig import traces as tr
from edgemig.errors import EmptyInputError, InvalidArgument
from edgemig.harness.config import open_trace_text

SAMPLE = "156;2014-02-01 00:00:00.739166+01;POINT(41.8892 12.4869)"
BOX = tr.BoundingBox(0.0, 1.0, 0.0, 1.0)


def rec(vid, t, lat, lon):
    return tr.TraceRecord(vid, float(t), float(lat), float(lon))


def test_sample_record_fields():
    (r,) = tr.parse_trace_stream([SAMPLE])
    assert (r.vehicle_id, r.lat, r.lon) == (156, 41.8892, 12.4869)
    # 2014-02-01 00:00:00.739166 at UTC+1
    assert r.timestamp == pytest.approx(calendar.timegm((2014, 2, 1, 0, 0, 0)) + 0.739166 - 3600, abs=1e-6)


def test_empty_stream():
    with pytest.raises(EmptyInputError):
        tr.parse_trace_stream(io.StringIO(""))
    with pytest.raises(EmptyInputError):
        tr.parse_trace_stream(["garbage", "also;bad"])


def test_malformed_lines_are_counted():
    out = tr.parse_trace_stream([SAMPLE, "garbage", "", "7;not-a-date;POINT(1 2)"])
    assert len(out) == 1 and out.skipped == 2


def test_output_sorted():
    lines = ["9;2014-02-01 00:01:00+01;POINT(41.9 12.5)",
             "2;2014-02-01 00:02:00+01;POINT(41.9 12.5)",
             "2;2014-02-01 00:01:00+01;POINT(41.9 12.5)"]
    out = tr.parse_trace_stream(lines)
    assert [(r.vehicle_id, r.timestamp) for r in out] == sorted((r.vehicle_id, r.timestamp) for r in out)
    assert out[0].vehicle_id == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2e9), st.floats(-90, 90), st.floats(-180, 180))
def test_format_parse_round_trip(vid, t, lat, lon):
    t = round(t, 6)
    r = tr.TraceRecord(vid, t, lat, lon)
    back = tr.parse_line(tr.format_record(r))
    assert back.vehicle_id == vid and back.lat == lat and back.lon == lon
    assert back.timestamp == pytest.approx(t, abs=1e-6)


def test_linear_midpoint():
    recs = [rec(1, 0, 0.2, 0.1), rec(1, 120, 0.6, 0.5)]
    (v,) = tr.resample_to_slots(recs, BOX, 1000.0, 60.0, 3, 0.0)
    np.testing.assert_array_equal(v.positions, [[100.0, 200.0], [300.0, 400.0], [500.0, 600.0]])


def test_single_record_constant_and_clamped():
    (v,) = tr.resample_to_slots([rec(4, 50, 2.0, -1.0)], BOX, 1000.0, 60.0, 4, 0.0)
    np.testing.assert_array_equal(v.positions, [[0.0, 1000.0]] * 4)


def test_exact_at_record_times_and_drop_out_of_window():
    recs = [rec(1, 0, 0.1, 0.1), rec(1, 60, 0.3, 0.7), rec(1, 90, 0.9, 0.9), rec(2, 10_000, 0.5, 0.5)]
    out = tr.resample_to_slots(recs, BOX, 100.0, 60.0, 2, 0.0)
    assert [v.vehicle_id for v in out] == [1]
    np.testing.assert_allclose(out[0].positions[1], [70.0, 30.0])
    with pytest.raises(EmptyInputError):
        tr.resample_to_slots([rec(2, 10_000, 0.5, 0.5)], BOX, 100.0, 60.0, 2, 0.0)


def test_resample_argument_checks():
    with pytest.raises(InvalidArgument):
        tr.resample_to_slots([rec(1, 0, 0.5, 0.5)], BOX, 100.0, 60.0, 0, 0.0)
    with pytest.raises(InvalidArgument):
        tr.resample_to_slots([rec(1, 0, 0.5, 0.5)], BOX, 100.0, 0.0, 3, 0.0)
    with pytest.raises(InvalidArgument):
        tr.BoundingBox(1.0, 0.0, 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(0, 3600), st.floats(-1, 2), st.floats(-1, 2)),
                min_size=1, max_size=40))
def test_resampled_positions_inside_region(rows):
    recs = [rec(*r) for r in rows]
    try:
        out = tr.resample_to_slots(recs, BOX, 500.0, 60.0, 61, 0.0)
    except EmptyInputError:
        return
    for v in out:
        assert v.positions.shape == (61, 2)
        assert np.all(v.positions >= 0) and np.all(v.positions <= 500.0)


def test_select_vehicles():
    recs = [rec(1, 5, 0, 0), rec(2, 5, 0, 0), rec(2, 6, 0, 0), rec(3, 500, 0, 0), rec(3, 7, 0, 0)]
    assert tr.select_vehicles(recs, 0, 10, 2) == [2, 1]


@pytest.mark.parametrize("model", ["linear", "random_waypoint"])
def test_synthetic_deterministic_and_bounded(model):
    a = tr.synthetic_traces(model, 5, 30, 1000.0, 7.0, seed=3)
    b = tr.synthetic_traces(model, 5, 30, 1000.0, 7.0, seed=3)
    assert a == b
    assert a != tr.synthetic_traces(model, 5, 30, 1000.0, 7.0, seed=4)
    for v in a:
        assert len(v) == 30 and np.all(v.positions >= 0) and np.all(v.positions <= 1000.0)
    for v in tr.synthetic_traces(model, 3, 10, 1000.0, 0.0, seed=1):
        assert np.all(v.positions == v.positions[0])


def test_linear_step_length():
    side = 1e6  # large enough that reflections are rare
    for v in tr.synthetic_traces("linear", 20, 50, side, 5.0, seed=11):
        steps = np.hypot(*np.diff(v.positions, axis=0).T)
        raw_inside = steps[np.abs(steps - 300.0) > 1e-9]
        # only steps that straddle a reflection may deviate
        assert len(raw_inside) <= 2
        assert np.sum(np.abs(steps - 300.0) <= 1e-9) >= len(steps) - 2


def test_random_waypoint_speed_bound():
    for v in tr.synthetic_traces("random_waypoint", 5, 40, 2000.0, 5.0, seed=2):
        assert np.all(np.hypot(*np.diff(v.positions, axis=0).T) <= 300.0 + 1e-9)


def test_unknown_model():
    with pytest.raises(InvalidArgument):
        tr.synthetic_traces("teleport", 1, 2, 10.0, 1.0, 0)


def test_csv_round_trip():
    traces = tr.synthetic_traces("random_waypoint", 3, 5, 100.0, 1.0, seed=0)
    buf = io.StringIO()
    tr.write_traces_csv(traces, buf)
    assert buf.getvalue().splitlines()[0] == "vehicle_id,slot,x_m,y_m"
    buf.seek(0)
    assert tr.read_traces_csv(buf) == traces
    with pytest.raises(InvalidArgument):
        tr.read_traces_csv(io.StringIO("a,b\n1,2\n"))


@pytest.mark.parametrize("opener,suffix", [(open, ".txt"), (gzip.open, ".gz"), (bz2.open, ".bz2")])
def test_compressed_inputs(tmp_path, opener, suffix):
    path = tmp_path / f"t{suffix}"
    with opener(path, "wt") as fh:
        fh.write(SAMPLE + "\n")
    with open_trace_text(path) as fh:
        assert tr.parse_trace_stream(fh)[0].vehicle_id == 156
