"""Core data types and wire formats for barometric pressure traces.

A trace is a uniformly sampled pressure time series as exposed by a phone's
pressure-sensor API (hectopascal values at a fixed, low sample rate). Labeled
fixed-length windows cut from traces are the unit of classification work and
travel as JSON-lines datasets.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

DATASET_VERSION = 1

_LABEL_KINDS = ("SpeakerActive", "SpeakerInactive", "Tap", "NoTap", "Key")
_KEY_RE = re.compile(r"^Key\((\d+)\)$")
_HEADER_RE = re.compile(r"^#\s*rate_hz=([^,\s]+),start_ms=(-?\d+)\s*$")


class TraceFormatError(ValueError):
    """Raised when a trace CSV stream violates the wire format."""


class DatasetFormatError(ValueError):
    """Raised when a dataset JSONL stream violates the wire format."""


@dataclass(frozen=True)
class Label:
    """Class label for a record: speaker state, tap presence, or numpad key.

    Keys carry the 3x3 numpad position 1..9; every other kind has key=None.
    The wire form is the kind name, with keys rendered as ``Key(5)``.
    """

    kind: str
    key: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _LABEL_KINDS:
            raise ValueError(f"unknown label kind {self.kind!r}")
        if self.kind == "Key":
            if not isinstance(self.key, int) or not 1 <= self.key <= 9:
                raise ValueError(f"key position must be 1..9, got {self.key!r}")
        elif self.key is not None:
            raise ValueError(f"label kind {self.kind!r} takes no key")

    @classmethod
    def from_wire(cls, text: str) -> "Label":
        m = _KEY_RE.match(text)
        if m:
            k = int(m.group(1))
            if not 1 <= k <= 9:
                raise ValueError(f"unknown label {text!r}")
            return cls("Key", k)
        if text in _LABEL_KINDS and text != "Key":
            return cls(text)
        raise ValueError(f"unknown label {text!r}")

    @property
    def wire(self) -> str:
        return f"Key({self.key})" if self.kind == "Key" else self.kind

    @property
    def sort_key(self) -> tuple[int, int]:
        return (_LABEL_KINDS.index(self.kind), self.key or 0)

    def __str__(self) -> str:
        return self.wire


SPEAKER_ACTIVE = Label("SpeakerActive")
SPEAKER_INACTIVE = Label("SpeakerInactive")
TAP = Label("Tap")
NO_TAP = Label("NoTap")


def key_label(k: int) -> Label:
    """Label for numpad key position k (1..9, row-major from top left)."""
    return Label("Key", k)


def _as_readonly_f64(values: Any, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PressureTrace:
    """Uniformly sampled absolute pressure, in hPa.

    Timestamps are implicit: sample i sits at start_time_ms/1000 + i/rate.
    Instances are immutable; the sample array is read-only.
    """

    samples: np.ndarray
    sample_rate_hz: float = 25.0
    start_time_ms: int = 0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        arr = _as_readonly_f64(self.samples, "samples")
        if arr.size < 1:
            raise ValueError("trace must hold at least one sample")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_ms", int(self.start_time_ms))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        """Span between first and last sample, (n - 1) / rate."""
        return (len(self) - 1) / self.sample_rate_hz

    def times_s(self) -> np.ndarray:
        """Sample times in seconds, relative to the start of the trace."""
        return np.arange(len(self)) / self.sample_rate_hz

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PressureTrace):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_ms == other.start_time_ms
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True, eq=False)
class LabeledRecord:
    """One fixed-length window with its class label and free-form provenance."""

    label: Label
    window: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "window", _as_readonly_f64(self.window, "window"))
        object.__setattr__(self, "meta", dict(self.meta))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledRecord):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.window, other.window)
            and self.meta == other.meta
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of labeled records with a declared class set."""

    records: tuple[LabeledRecord, ...]
    class_set: tuple[Label, ...]
    window_len: int

    def __post_init__(self) -> None:
        records = tuple(self.records)
        classes = tuple(self.class_set)
        if len(set(classes)) != len(classes):
            raise ValueError("class_set contains duplicate labels")
        if self.window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {self.window_len}")
        allowed = set(classes)
        for i, rec in enumerate(records):
            if rec.window.size != self.window_len:
                raise ValueError(
                    f"record {i} window length {rec.window.size} != {self.window_len}"
                )
            if rec.label not in allowed:
                raise ValueError(f"record {i} label {rec.label} not in class_set")
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "class_set", classes)
        object.__setattr__(self, "window_len", int(self.window_len))

    def __len__(self) -> int:
        return len(self.records)

    def class_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in self.class_set}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def windows_matrix(self) -> np.ndarray:
        """All windows stacked row-wise into an (n, window_len) float array."""
        if not self.records:
            return np.empty((0, self.window_len))
        return np.stack([rec.window for rec in self.records])

    def label_indices(self) -> np.ndarray:
        """Per-record index into class_set."""
        lut = {label: i for i, label in enumerate(self.class_set)}
        return np.array([lut[rec.label] for rec in self.records], dtype=np.intp)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.window_len == other.window_len
            and self.class_set == other.class_set
            and self.records == other.records
        )


def parse_trace_csv(text: str) -> PressureTrace:
    """Parse the trace CSV wire format into a PressureTrace.

    Line 1 is ``# rate_hz=<float>,start_ms=<int>``; every following non-empty
    line is ``timestamp_ms,pressure_hpa``. Timestamps must increase strictly
    and their median spacing must agree with the declared rate within 1%.
    After those checks the timestamps are discarded and samples snap to the
    uniform grid implied by the header.
    """
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError("empty input: missing header line")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise TraceFormatError(f"line 1: malformed header {lines[0]!r}")
    try:
        rate = float(m.group(1))
    except ValueError:
        raise TraceFormatError(f"line 1: bad rate_hz value {m.group(1)!r}") from None
    start_ms = int(m.group(2))
    if not (np.isfinite(rate) and rate > 0):
        raise TraceFormatError(f"line 1: rate_hz must be positive, got {rate}")

    timestamps: list[int] = []
    pressures: list[float] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"line {lineno}: malformed row {raw!r}")
        try:
            ts = int(parts[0])
            p = float(parts[1])
        except ValueError:
            raise TraceFormatError(f"line {lineno}: malformed row {raw!r}") from None
        if not np.isfinite(p):
            raise TraceFormatError(f"line {lineno}: non-finite pressure {parts[1]!r}")
        if timestamps and ts <= timestamps[-1]:
            raise TraceFormatError(
                f"line {lineno}: timestamp {ts} not strictly increasing"
            )
        timestamps.append(ts)
        pressures.append(p)

    if not pressures:
        raise TraceFormatError("no samples: body is empty")

    if len(timestamps) >= 2:
        median_delta = float(np.median(np.diff(timestamps)))
        implied = 1000.0 / median_delta
        if abs(implied - rate) / rate > 0.01:
            raise TraceFormatError(
                f"rate mismatch: header declares {rate} Hz but median timestamp "
                f"spacing {median_delta} ms implies {implied:.4g} Hz"
            )

    return PressureTrace(np.array(pressures), rate, start_ms)


def format_trace_csv(trace: PressureTrace) -> str:
    """Render a PressureTrace in the trace CSV wire format (LF line endings)."""
    out = [f"# rate_hz={trace.sample_rate_hz!r},start_ms={trace.start_time_ms}"]
    step_ms = 1000.0 / trace.sample_rate_hz
    for i, value in enumerate(trace.samples):
        ts = trace.start_time_ms + round(i * step_ms)
        out.append(f"{ts},{float(value)!r}")
    return "\n".join(out) + "\n"


def write_dataset(dataset: Dataset) -> str:
    """Serialize a Dataset as JSON lines.

    Line 1 is the header object; each following line is one record. Windows
    are written at full precision so that read_dataset reproduces them
    bit-identically.
    """
    header = {
        "window_len": dataset.window_len,
        "classes": [label.wire for label in dataset.class_set],
        "version": DATASET_VERSION,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for rec in dataset.records:
        obj = {
            "label": rec.label.wire,
            "window": [float(v) for v in rec.window],
            "meta": rec.meta,
        }
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def read_dataset(text: str) -> Dataset:
    """Parse the JSONL dataset wire format; errors name the offending line."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DatasetFormatError("empty input: missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: invalid JSON ({exc.msg})") from None
    if not isinstance(header, dict):
        raise DatasetFormatError("line 1: header must be a JSON object")
    for field_name in ("window_len", "classes", "version"):
        if field_name not in header:
            raise DatasetFormatError(f"line 1: header missing {field_name!r}")
    if header["version"] != DATASET_VERSION:
        raise DatasetFormatError(
            f"line 1: unsupported version {header['version']!r}"
        )
    window_len = header["window_len"]
    if not isinstance(window_len, int) or window_len < 1:
        raise DatasetFormatError(f"line 1: bad window_len {window_len!r}")
    try:
        classes = tuple(Label.from_wire(name) for name in header["classes"])
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"line 1: {exc}") from None
    if len(set(classes)) != len(classes):
        raise DatasetFormatError("line 1: duplicate labels in classes")

    allowed = set(classes)
    records: list[LabeledRecord] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or not {"label", "window"} <= set(obj):
            raise DatasetFormatError(f"line {lineno}: record needs label and window")
        try:
            label = Label.from_wire(obj["label"])
        except (TypeError, ValueError) as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
        if label not in allowed:
            raise DatasetFormatError(
                f"line {lineno}: label {label} not in declared classes"
            )
        window = obj["window"]
        if not isinstance(window, list) or len(window) != window_len:
            got = len(window) if isinstance(window, list) else type(window).__name__
            raise DatasetFormatError(
                f"line {lineno}: window length {got} != {window_len}"
            )
        meta = obj.get("meta", {})
        if not isinstance(meta, dict):
            raise DatasetFormatError(f"line {lineno}: meta must be an object")
        try:
            records.append(LabeledRecord(label, np.array(window, dtype=np.float64), meta))
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None

    return Dataset(tuple(records), classes, window_len)


def make_dataset(records: Iterable[LabeledRecord], class_set: Iterable[Label] | None = None) -> Dataset:
    """Bundle records into a Dataset, inferring class set and window length.

    When class_set is None the observed labels are used, in canonical label
    order, so the result is deterministic for any record order.
    """
    recs = tuple(records)
    if not recs:
        raise ValueError("cannot build a dataset from zero records")
    if class_set is None:
        classes = tuple(sorted({r.label for r in recs}, key=lambda l: l.sort_key))
    else:
        classes = tuple(class_set)
    return Dataset(recs, classes, recs[0].window.size)
