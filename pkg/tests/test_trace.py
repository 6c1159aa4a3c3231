"""Wire formats and core record types."""

import math

import numpy as np
import pytest

from baroleak.trace import (
    Dataset,
    DatasetFormatError,
    Label,
    LabeledRecord,
    NO_TAP,
    PressureTrace,
    SPEAKER_ACTIVE,
    SPEAKER_INACTIVE,
    TAP,
    TraceFormatError,
    format_trace_csv,
    key_label,
    make_dataset,
    parse_trace_csv,
    read_dataset,
    write_dataset,
)


# ----------------------------------------------------------------- labels

def test_label_wire_round_trip():
    labels = [SPEAKER_ACTIVE, SPEAKER_INACTIVE, TAP, NO_TAP] + [key_label(k) for k in range(1, 10)]
    for label in labels:
        assert Label.from_wire(label.wire) == label


def test_key_label_wire_form():
    assert key_label(5).wire == "Key(5)"
    assert Label.from_wire("Key(5)") == Label("Key", 5)


def test_label_rejects_bad_keys():
    for k in (0, 10, -1):
        with pytest.raises(ValueError):
            key_label(k)
    with pytest.raises(ValueError):
        Label.from_wire("Key(10)")
    with pytest.raises(ValueError):
        Label("Tap", key=3)
    with pytest.raises(ValueError):
        Label.from_wire("Shout")


def test_label_sort_order_groups_then_keys():
    shuffled = [key_label(9), TAP, key_label(1), SPEAKER_ACTIVE, NO_TAP]
    ordered = sorted(shuffled, key=lambda lab: lab.sort_key)
    assert ordered[0] == SPEAKER_ACTIVE
    assert ordered[-2:] == [key_label(1), key_label(9)]


# ------------------------------------------------------------ trace type

def test_trace_requires_finite_samples():
    with pytest.raises(ValueError):
        PressureTrace([1013.25, math.nan])
    with pytest.raises(ValueError):
        PressureTrace([math.inf])
    with pytest.raises(ValueError):
        PressureTrace([])
    with pytest.raises(ValueError):
        PressureTrace([1.0], sample_rate_hz=0.0)


def test_trace_duration_spans_n_minus_1_periods():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 400))
        rate = float(rng.uniform(1.0, 200.0))
        trace = PressureTrace(rng.normal(1000, 1, n), rate)
        assert math.isclose(trace.duration_s, (n - 1) / rate, rel_tol=0, abs_tol=1e-12)
        times = trace.times_s()
        assert times.shape == (n,)
        assert times[0] == 0.0


def test_trace_samples_are_read_only():
    trace = PressureTrace([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        trace.samples[0] = 9.0


# -------------------------------------------------------------- trace csv

def test_parse_constant_trace():
    text = "# rate_hz=25,start_ms=0\n0,1013.25\n40,1013.25\n80,1013.25\n"
    trace = parse_trace_csv(text)
    assert len(trace) == 3
    assert np.all(trace.samples == 1013.25)
    assert trace.sample_rate_hz == 25.0
    assert trace.start_time_ms == 0


def test_parse_empty_body_is_an_error():
    with pytest.raises(TraceFormatError, match="no samples"):
        parse_trace_csv("# rate_hz=25,start_ms=0\n")


def test_parse_rejects_rate_mismatch():
    # rows spaced 100 ms apart imply 10 Hz, far beyond 1% of the declared 25 Hz
    text = "# rate_hz=25,start_ms=0\n0,1013.0\n100,1013.1\n200,1013.2\n"
    with pytest.raises(TraceFormatError, match="rate"):
        parse_trace_csv(text)


def test_parse_rejects_non_monotonic_timestamps():
    text = "# rate_hz=25,start_ms=0\n0,1.0\n40,2.0\n40,3.0\n"
    with pytest.raises(TraceFormatError, match="line 4"):
        parse_trace_csv(text)


def test_parse_rejects_malformed_row_with_line_number():
    text = "# rate_hz=25,start_ms=0\n0,1.0\nforty,2.0\n"
    with pytest.raises(TraceFormatError, match="line 3"):
        parse_trace_csv(text)


def test_parse_rejects_non_finite_pressure():
    text = "# rate_hz=25,start_ms=0\n0,1.0\n40,nan\n"
    with pytest.raises(TraceFormatError, match="non-finite"):
        parse_trace_csv(text)


def test_parse_rejects_missing_or_bad_header():
    with pytest.raises(TraceFormatError, match="header"):
        parse_trace_csv("")
    with pytest.raises(TraceFormatError, match="line 1"):
        parse_trace_csv("rate 25\n0,1.0\n")
    with pytest.raises(TraceFormatError, match="positive"):
        parse_trace_csv("# rate_hz=0,start_ms=0\n0,1.0\n")


def test_trace_csv_round_trip_preserves_samples_exactly():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(1, 200))
        rate = float(rng.choice([25.0, 50.0, 1.5]))
        start = int(rng.integers(-10_000, 10_000))
        trace = PressureTrace(1013.25 + rng.normal(0, 0.5, n), rate, start)
        again = parse_trace_csv(format_trace_csv(trace))
        assert again == trace


def test_trace_csv_format_shape():
    trace = PressureTrace([1013.25, 1013.5], 25.0, 120)
    text = format_trace_csv(trace)
    assert text == "# rate_hz=25.0,start_ms=120\n120,1013.25\n160,1013.5\n"


# ---------------------------------------------------------------- dataset

def _records(n, label=TAP, window_len=4, seed=0):
    rng = np.random.default_rng(seed)
    return [LabeledRecord(label, rng.normal(0, 1, window_len), {"i": i}) for i in range(n)]


def test_dataset_validates_membership_and_lengths():
    recs = _records(3)
    with pytest.raises(ValueError, match="not in class_set"):
        Dataset(tuple(recs), (NO_TAP,), 4)
    bad = recs + [LabeledRecord(TAP, np.zeros(5))]
    with pytest.raises(ValueError, match="window length"):
        Dataset(tuple(bad), (TAP, NO_TAP), 4)
    with pytest.raises(ValueError, match="duplicate"):
        Dataset(tuple(recs), (TAP, TAP), 4)


def test_dataset_matrix_and_counts():
    recs = _records(3, TAP) + _records(2, NO_TAP, seed=1)
    ds = Dataset(tuple(recs), (TAP, NO_TAP), 4)
    assert ds.class_counts() == {TAP: 3, NO_TAP: 2}
    assert ds.windows_matrix().shape == (5, 4)
    assert list(ds.label_indices()) == [0, 0, 0, 1, 1]


def test_make_dataset_infers_sorted_class_set():
    recs = _records(1, key_label(7)) + _records(1, key_label(2), seed=3)
    ds = make_dataset(recs)
    assert ds.class_set == (key_label(2), key_label(7))


def test_empty_dataset_writes_header_only():
    ds = Dataset((), (TAP, NO_TAP), 50)
    text = write_dataset(ds)
    assert text.count("\n") == 1
    assert read_dataset(text) == ds


def test_dataset_round_trip_exact_windows():
    # awkward values: non-representable decimals, tiny, huge, negative zero
    windows = [
        np.array([0.1, 1.0 / 3.0, 1e-308, -0.0]),
        np.array([1e17, -2.5e-9, math.pi, 1013.25]),
    ]
    recs = [
        LabeledRecord(TAP, windows[0], {"source": "a"}),
        LabeledRecord(NO_TAP, windows[1], {}),
    ]
    ds = Dataset(tuple(recs), (TAP, NO_TAP), 4)
    again = read_dataset(write_dataset(ds))
    for rec, orig in zip(again.records, recs):
        assert np.array_equal(rec.window, orig.window)
        assert rec.meta == orig.meta
    assert again == ds


def test_dataset_line_count_is_records_plus_header():
    recs = _records(450)
    ds = Dataset(tuple(recs), (TAP, NO_TAP), 4)
    assert write_dataset(ds).count("\n") == 451


def test_read_dataset_reports_offending_line():
    ds = Dataset(tuple(_records(2)), (TAP, NO_TAP), 4)
    lines = write_dataset(ds).splitlines()

    broken = "\n".join([lines[0], lines[1], "{oops"]) + "\n"
    with pytest.raises(DatasetFormatError, match="line 3"):
        read_dataset(broken)

    short = lines[2].replace('"window":[', '"window":[1.0,', 1)  # wrong length
    with pytest.raises(DatasetFormatError, match="line 3"):
        read_dataset("\n".join([lines[0], lines[1], short]) + "\n")

    bad_label = lines[1].replace('"Tap"', '"Key(10)"')
    with pytest.raises(DatasetFormatError, match="line 2"):
        read_dataset("\n".join([lines[0], bad_label]) + "\n")


def test_read_dataset_rejects_unknown_version():
    ds = Dataset(tuple(_records(1)), (TAP, NO_TAP), 4)
    text = write_dataset(ds).replace('"version":1', '"version":99')
    with pytest.raises(DatasetFormatError, match="version"):
        read_dataset(text)


def test_read_dataset_rejects_label_outside_class_set():
    header = '{"window_len": 2, "classes": ["Tap"], "version": 1}'
    row = '{"label": "NoTap", "window": [0.0, 1.0], "meta": {}}'
    with pytest.raises(DatasetFormatError, match="line 2"):
        read_dataset(header + "\n" + row + "\n")
