"""Window preprocessing: standardization, polynomial smoothing, segmentation.

Two per-record transforms feed the classifiers. Standardization removes the
absolute pressure level and per-record scale (weather drift and altitude make
raw hPa values meaningless across sessions); quadratic least-squares smoothing
over a short frame knocks down sensor noise on weak-signal corpora. Transforms
compose left to right through a small pipeline grammar, e.g. ``std|savgol(2,5)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from baroleak.trace import Dataset, Label, LabeledRecord, PressureTrace

DEGENERATE_STD = 1e-12

_STEP_RE = re.compile(r"^([a-z]+)(?:\(([^()]*)\))?$")


class Standardized(NamedTuple):
    """Z-scored window plus a flag for degenerate (near-constant) input."""

    values: np.ndarray
    degenerate: bool


def standardize(window: Sequence[float] | np.ndarray) -> Standardized:
    """Z-score a window: subtract the mean, divide by the population std.

    The population convention (divide by n) is used. A window whose std falls
    below 1e-12 cannot be scaled meaningfully; it comes back as all zeros with
    the degenerate flag set instead of raising.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"window must be one-dimensional, got shape {x.shape}")
    if x.size < 2:
        raise ValueError(f"window must hold at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("window contains non-finite values")
    s = float(x.std())
    if s < DEGENERATE_STD:
        return Standardized(np.zeros_like(x), True)
    return Standardized((x - x.mean()) / s, False)


def savgol_coefficients(order: int = 2, frame: int = 5) -> np.ndarray:
    """Convolution weights of the least-squares polynomial smoother.

    Fitting a degree-``order`` polynomial over a centered frame and reading it
    back at the center is a linear map of the frame, so the smoother reduces
    to a fixed convolution kernel. For (2, 5) the weights are
    (-3, 12, 17, 12, -3) / 35.
    """
    if frame % 2 == 0 or frame < 1:
        raise ValueError(f"frame must be odd and positive, got {frame}")
    if order < 0 or order >= frame:
        raise ValueError(f"order must satisfy 0 <= order < frame, got {order}")
    half = frame // 2
    positions = np.arange(-half, half + 1, dtype=np.float64)
    vander = np.vander(positions, order + 1, increasing=True)
    # value of the fitted polynomial at 0 = first row of (A^T A)^-1 A^T
    return np.linalg.solve(vander.T @ vander, vander.T)[0]


def savgol(window: Sequence[float] | np.ndarray, order: int = 2, frame: int = 5) -> np.ndarray:
    """Smooth a window by local polynomial least squares.

    Edges are mirror padded (reflection about the end points, without
    repeating them) so the output has the input's length. Interior points
    reproduce polynomials of degree <= order exactly; padded edges do not.
    """
    coeffs = savgol_coefficients(order, frame)
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"window must be one-dimensional, got shape {x.shape}")
    if x.size < frame:
        raise ValueError(f"window shorter than frame: {x.size} < {frame}")
    half = frame // 2
    padded = np.pad(x, half, mode="reflect")
    return np.convolve(padded, coeffs[::-1], mode="valid")


@dataclass(frozen=True)
class SegmentationProtocol:
    """How to cut records out of a trace.

    Two protocols mirror the two recording campaigns: alternating fixed
    activity blocks separated by rest gaps, and short windows anchored to
    known event times (window_s long, starting pre_event_s before the event).
    """

    kind: str  # "alternating-blocks" or "event-window"
    block_s: float = 10.0
    rest_s: float = 2.0
    pre_event_s: float = 1.0
    window_s: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("alternating-blocks", "event-window"):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.block_s <= 0 or self.window_s <= 0:
            raise ValueError("block_s and window_s must be positive")
        if self.rest_s < 0 or self.pre_event_s < 0:
            raise ValueError("rest_s and pre_event_s must be non-negative")
        if self.kind == "event-window" and self.pre_event_s >= self.window_s:
            raise ValueError("pre_event_s must be smaller than window_s")

    @classmethod
    def event_window(cls, window_s: float = 2.0, pre_event_s: float = 1.0) -> "SegmentationProtocol":
        return cls("event-window", window_s=window_s, pre_event_s=pre_event_s)

    @classmethod
    def alternating_blocks(cls, block_s: float = 10.0, rest_s: float = 2.0) -> "SegmentationProtocol":
        return cls("alternating-blocks", block_s=block_s, rest_s=rest_s)

    def window_len(self, rate_hz: float) -> int:
        span = self.block_s if self.kind == "alternating-blocks" else self.window_s
        return int(round(span * rate_hz))


class SegmentResult(NamedTuple):
    records: tuple[LabeledRecord, ...]
    dropped: int
    overlapping: int


def segment(
    trace: PressureTrace,
    protocol: SegmentationProtocol,
    events: Sequence[tuple[float, Label]],
) -> SegmentResult:
    """Cut labeled records out of a trace.

    ``events`` holds (time_s, label) pairs, times relative to the start of
    the trace: event anchors for the event-window protocol, block starts for
    alternating-blocks. Records that would extend past the trace bounds are
    dropped and counted; records that overlap a previously kept record are
    kept but counted as overlapping.
    """
    if not events:
        raise ValueError("empty event list")
    rate = trace.sample_rate_hz
    win = protocol.window_len(rate)
    n = len(trace)
    records: list[LabeledRecord] = []
    dropped = 0
    overlapping = 0
    prev_end = None
    for time_s, label in events:
        if protocol.kind == "event-window":
            start_s = time_s - protocol.pre_event_s
        else:
            start_s = time_s
        i0 = int(round(start_s * rate))
        if i0 < 0 or i0 + win > n:
            dropped += 1
            continue
        if prev_end is not None and i0 < prev_end:
            overlapping += 1
        prev_end = i0 + win
        meta = {
            "offset_s": i0 / rate,
            "source_start_ms": trace.start_time_ms,
            "protocol": protocol.kind,
        }
        records.append(LabeledRecord(label, trace.samples[i0 : i0 + win], meta))
    return SegmentResult(tuple(records), dropped, overlapping)


def parse_pipeline(spec: str) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Parse a transform chain like ``std|savgol(2,5)`` into (name, args) steps.

    Known steps: ``std`` (no arguments) and ``savgol(order,frame)`` (bare
    ``savgol`` means the (2, 5) default). An empty spec means no transforms.
    """
    spec = spec.strip()
    if not spec:
        return ()
    steps: list[tuple[str, tuple[int, ...]]] = []
    for part in spec.split("|"):
        part = part.strip()
        m = _STEP_RE.match(part)
        if not m:
            raise ValueError(f"malformed pipeline step {part!r}")
        name, argtext = m.group(1), m.group(2)
        if name == "std":
            if argtext:
                raise ValueError("std takes no arguments")
            steps.append(("std", ()))
        elif name == "savgol":
            if argtext is None or not argtext.strip():
                args = (2, 5)
            else:
                try:
                    pieces = [int(a.strip()) for a in argtext.split(",")]
                except ValueError:
                    raise ValueError(f"savgol arguments must be integers: {part!r}") from None
                if len(pieces) != 2:
                    raise ValueError(f"savgol takes (order, frame), got {part!r}")
                args = (pieces[0], pieces[1])
            savgol_coefficients(*args)  # validate early
            steps.append(("savgol", args))
        else:
            raise ValueError(f"unknown pipeline step {name!r}")
    return tuple(steps)


def apply_pipeline(window: np.ndarray, spec: str) -> np.ndarray:
    """Run a transform chain over one window and return the result."""
    values, _ = _apply_steps(np.asarray(window, dtype=np.float64), parse_pipeline(spec))
    return values


def _apply_steps(
    window: np.ndarray, steps: Iterable[tuple[str, tuple[int, ...]]]
) -> tuple[np.ndarray, bool]:
    degenerate = False
    for name, args in steps:
        if name == "std":
            result = standardize(window)
            window = result.values
            degenerate = degenerate or result.degenerate
        else:
            window = savgol(window, *args)
    return window, degenerate


def transform_dataset(dataset: Dataset, spec: str) -> Dataset:
    """Apply a transform chain to every record of a dataset.

    Transforms are strictly per-record, so applying them before a train/test
    split leaks nothing. The applied chain is recorded in each record's meta,
    along with a flag for windows that hit the degenerate standardization path.
    """
    steps = parse_pipeline(spec)
    if not steps:
        return dataset
    records = []
    for rec in dataset.records:
        values, degenerate = _apply_steps(rec.window, steps)
        meta = dict(rec.meta)
        meta["pipeline"] = spec
        if degenerate:
            meta["degenerate"] = True
        records.append(LabeledRecord(rec.label, values, meta))
    return Dataset(tuple(records), dataset.class_set, dataset.window_len)
