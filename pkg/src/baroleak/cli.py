"""Command line front end: simulate, segment, train, evaluate, predict, report.

Every command validates its inputs, builds all output content in memory, and
only then writes files, each atomically via a temporary sibling. Existing
files are never overwritten unless --force is given. Exit status 0 means all
requested outputs were written; any failure prints a message to stderr and
exits nonzero without leaving partial files.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from baroleak import evaluate as ev
from baroleak import prep, sim, svm
from baroleak import trace as tr


class CliError(Exception):
    """User-facing command failure."""


class _Outputs:
    """Collects planned outputs and writes them only when all are ready."""

    def __init__(self, force: bool) -> None:
        self.force = force
        self._texts: list[tuple[Path, str]] = []
        self._renders: list[tuple[Path, Callable[[str], None]]] = []

    def add_text(self, path: str | Path, text: str) -> None:
        self._texts.append((Path(path), text))

    def add_render(self, path: str | Path, render: Callable[[str], None]) -> None:
        self._renders.append((Path(path), render))

    def paths(self) -> list[Path]:
        return [p for p, _ in self._texts] + [p for p, _ in self._renders]

    def commit(self) -> None:
        seen = set()
        for path in self.paths():
            if path in seen:
                raise CliError(f"output path repeated: {path}")
            seen.add(path)
            if path.exists() and not self.force:
                raise CliError(f"refusing to overwrite {path} (use --force)")
        for path, text in self._texts:
            _atomic_write(path, text)
        for path, render in self._renders:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
            os.close(fd)
            try:
                render(tmp)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_dataset(path: str) -> tr.Dataset:
    return tr.read_dataset(_read_text(path))


def _svm_params(args: argparse.Namespace, dataset: tr.Dataset) -> svm.SvmParams:
    kernel = args.kernel
    if kernel is None:
        # Binary tasks separate linearly; the 9-key task needs the rbf kernel.
        kernel = "rbf" if len(dataset.class_set) >= 3 else "linear"
    return svm.SvmParams(
        kernel=kernel,
        gamma=args.gamma,
        c=args.c,
        tol=args.tol,
        max_passes=args.max_passes,
        seed=args.seed,
    )


def _default_pipeline(dataset: tr.Dataset) -> str:
    """Quadratic smoothing is on by default only for external-speaker corpora."""
    tasks = {rec.meta.get("task") for rec in dataset.records}
    if tasks == {"b-sad-external"}:
        return "std|savgol(2,5)"
    return "std"


def _add_svm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=("linear", "rbf"), default=None,
                   help="default: linear for 2 classes, rbf for more")
    p.add_argument("--gamma", type=float, default=None,
                   help="rbf width; default 1/(n_features*variance)")
    p.add_argument("--c", type=float, default=1.0, help="box constraint")
    p.add_argument("--tol", type=float, default=1e-3, help="KKT tolerance")
    p.add_argument("--max-passes", type=int, default=10,
                   help="stop after this many sweeps without progress")


# ---------------------------------------------------------------- simulate

def _resolve_generation(args: argparse.Namespace) -> tuple[sim.GenerationSpec, sim.SimulatorConfig]:
    if args.spec:
        gspec, config = sim.parse_generation_config(_read_text(args.spec))
        if args.task and args.task != gspec.task:
            raise CliError("--task conflicts with the task in --spec")
    else:
        if not args.task:
            raise CliError("either --task or --spec is required")
        gspec = sim.default_generation_spec(args.task)
        config = sim.SimulatorConfig()

    sim_over: dict = {}
    for flag, name in (
        ("ambient", "ambient_hpa"),
        ("tau", "tau_s"),
        ("tau_unsealed", "tau_unsealed_s"),
        ("noise_std", "noise_std_hpa"),
        ("quant_step", "quant_step_hpa"),
    ):
        value = getattr(args, flag)
        if value is not None:
            sim_over[name] = value
    if args.unsealed:
        sim_over["ip_sealed"] = False
    if args.seed is not None:
        sim_over["seed"] = args.seed
    if sim_over:
        config = replace(config, **sim_over)

    if args.per_class is not None:
        gspec = replace(gspec, per_class=args.per_class)
    if args.window_len is not None:
        gspec = replace(gspec, window_len=args.window_len)
    if args.phase_jitter:
        if gspec.task not in ("b-sad-internal", "b-sad-external"):
            raise CliError("--phase-jitter applies to speaker tasks only")
        gspec = replace(gspec, phase_jitter=True)

    tap_task = gspec.task in ("tap-detect", "key-position")
    if args.delta_p is not None or args.undershoot is not None:
        if not tap_task:
            raise CliError("--delta-p/--undershoot apply to tap tasks only")
        base = gspec.profile or (
            sim.TapProfile() if gspec.task == "tap-detect" else sim.key_task_profile()
        )
        prof_over: dict = {}
        if args.delta_p is not None:
            prof_over["delta_p_hpa"] = args.delta_p
        if args.undershoot is not None:
            prof_over["recovery_undershoot_ratio"] = args.undershoot
        gspec = replace(gspec, profile=replace(base, **prof_over))

    if args.amplitude is not None or args.tone_hz is not None or args.attenuation is not None:
        if tap_task:
            raise CliError("--amplitude/--tone-hz/--attenuation apply to speaker tasks only")
        base = gspec.source or sim.SpeakerSource.sinusoid(
            12.0, external=(gspec.task == "b-sad-external")
        )
        src_over: dict = {}
        if args.amplitude is not None:
            src_over["amplitude_hpa"] = args.amplitude
        if args.attenuation is not None:
            src_over["external_attenuation"] = args.attenuation
        if args.tone_hz is not None:
            base = sim.SpeakerSource.sinusoid(
                args.tone_hz, base.amplitude_hpa, base.external, base.external_attenuation
            )
        gspec = replace(gspec, source=replace(base, **src_over) if src_over else base)

    return gspec, config


def cmd_simulate(args: argparse.Namespace) -> int:
    gspec, config = _resolve_generation(args)
    out = _Outputs(args.force)
    if args.traces_dir:
        dataset, traces = sim.synth_dataset(config, gspec, return_traces=True)
        for i, (rec, trace) in enumerate(zip(dataset.records, traces)):
            name = f"record_{i:04d}_{rec.label.wire}.csv"
            out.add_text(Path(args.traces_dir) / name, tr.format_trace_csv(trace))
    else:
        dataset = sim.synth_dataset(config, gspec)
    out.add_text(args.out, tr.write_dataset(dataset))
    out.commit()
    counts = ", ".join(f"{label.wire}={n}" for label, n in dataset.class_counts().items())
    print(f"task {gspec.task}: {len(dataset)} records ({counts})")
    print(f"window_len {dataset.window_len}, seed {config.seed}")
    print(f"wrote {args.out}")
    if args.traces_dir:
        print(f"wrote {len(dataset)} trace files under {args.traces_dir}")
    return 0


# ----------------------------------------------------------------- segment

def _parse_events(text: str) -> list[tuple[float, tr.Label]]:
    events: list[tuple[float, tr.Label]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line == "time_s,label":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise CliError(f"events line {lineno}: expected time_s,label")
        try:
            time_s = float(parts[0])
        except ValueError:
            raise CliError(f"events line {lineno}: bad time {parts[0]!r}") from None
        try:
            label = tr.Label.from_wire(parts[1].strip())
        except ValueError as exc:
            raise CliError(f"events line {lineno}: {exc}") from None
        events.append((time_s, label))
    if not events:
        raise CliError("events file holds no events")
    return events


def cmd_segment(args: argparse.Namespace) -> int:
    trace = tr.parse_trace_csv(_read_text(args.trace))
    events = _parse_events(_read_text(args.events))
    if args.protocol == "event-window":
        protocol = prep.SegmentationProtocol.event_window(args.window_s, args.pre_event_s)
    else:
        protocol = prep.SegmentationProtocol.alternating_blocks(args.block_s, args.rest_s)
    records, dropped, overlapping = prep.segment(trace, protocol, events)
    if not records:
        raise CliError(f"no records kept ({dropped} dropped at trace bounds)")
    dataset = tr.make_dataset(records)
    out = _Outputs(args.force)
    out.add_text(args.out, tr.write_dataset(dataset))
    out.commit()
    print(f"kept {len(records)} records, dropped {dropped}, overlapping {overlapping}")
    print(f"wrote {args.out}")
    return 0


# ------------------------------------------------------------------- train

def cmd_train(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.data)
    pipeline = args.pipeline if args.pipeline is not None else _default_pipeline(dataset)
    params = _svm_params(args, dataset)
    working = prep.transform_dataset(dataset, pipeline)
    model = svm.train(dataset=working, params=params, extra_meta={
        "pipeline": pipeline,
        "dataset_fingerprint": ev.dataset_fingerprint(dataset),
    })
    out = _Outputs(args.force)
    out.add_text(args.out, svm.save_model(model))
    out.commit()
    kind = "binary" if len(model.classes) == 2 else f"{len(model.classes)}-class"
    print(f"trained {kind} {model.kernel} model on {len(dataset)} records")
    print(f"pipeline {pipeline!r}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.data)
    pipeline = args.pipeline if args.pipeline is not None else _default_pipeline(dataset)
    params = _svm_params(args, dataset)
    report = ev.cross_validate(
        dataset, k=args.k, repeats=args.repeats, params=params,
        pipeline=pipeline, seed=args.seed,
    )
    out = _Outputs(args.force)
    out.add_text(args.out, ev.report_to_json(report))
    if args.matrix_csv:
        out.add_text(args.matrix_csv, ev.probabilities_csv(report))
    out.commit()
    print(f"pipeline {pipeline!r}, {args.repeats}x{args.k}-fold cross validation")
    print(f"mean accuracy {report.mean_accuracy:.2f}")
    if len(report.confusion.classes) > 2:
        names = [label.wire for label in report.confusion.classes]
        width = max(len(n) for n in names)
        print("P(predicted | true), rows = predicted:")
        print(" " * (width + 2) + " ".join(f"{n:>{width}}" for n in names))
        for i, name in enumerate(names):
            row = " ".join(f"{v:>{width}.2f}" for v in report.confusion_prob[i])
            print(f"  {name:>{width}} {row}")
    print(f"wrote {args.out}")
    if args.matrix_csv:
        print(f"wrote {args.matrix_csv}")
    return 0


# ----------------------------------------------------------------- predict

def cmd_predict(args: argparse.Namespace) -> int:
    if bool(args.data) == bool(args.trace):
        raise CliError("exactly one of --data or --trace is required")
    model = svm.load_model(_read_text(args.model))
    pipeline = model.train_meta.get("pipeline", "std")
    lines: list[str] = []
    summary: str
    if args.data:
        dataset = _load_dataset(args.data)
        working = prep.transform_dataset(dataset, pipeline)
        labels, scores = svm.predict_scored(model, working.windows_matrix())
        correct = 0
        for i, (rec, pred, score) in enumerate(zip(dataset.records, labels, scores)):
            lines.append(f"{i},{rec.label.wire},{pred.wire},{score:.6f}")
            correct += int(pred == rec.label)
        summary = f"accuracy {correct / len(dataset):.2f} ({correct}/{len(dataset)})"
    else:
        trace = tr.parse_trace_csv(_read_text(args.trace))
        w = model.n_features
        rate = trace.sample_rate_hz
        hop = w if args.stride_s is None else max(1, int(round(args.stride_s * rate)))
        if len(trace) < w:
            raise CliError(f"trace has {len(trace)} samples, model needs windows of {w}")
        starts = range(0, len(trace) - w + 1, hop)
        windows = [prep.apply_pipeline(trace.samples[s : s + w], pipeline) for s in starts]
        labels, scores = svm.predict_scored(model, np.stack(windows))
        for s, pred, score in zip(starts, labels, scores):
            lines.append(f"{s / rate:.3f},{pred.wire},{score:.6f}")
        summary = f"{len(lines)} windows of {w} samples, stride {hop}"
    body = "\n".join(lines) + "\n"
    if args.out:
        out = _Outputs(args.force)
        out.add_text(args.out, body)
        out.commit()
        print(summary)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(body)
        print(summary)
    return 0


# ------------------------------------------------------------------ report

def cmd_report(args: argparse.Namespace) -> int:
    if not args.trace and not args.report:
        raise CliError("at least one of --trace or --report is required")
    from baroleak import plots  # deferred: pulls in matplotlib

    out_dir = Path(args.out_dir)
    out = _Outputs(args.force)
    messages: list[str] = []
    if args.trace:
        trace = tr.parse_trace_csv(_read_text(args.trace))
        stem = Path(args.trace).stem
        rows = ["time_s,value,series"]
        for t, v in zip(trace.times_s(), trace.samples):
            rows.append(f"{float(t)!r},{float(v)!r},pressure_hpa")
        out.add_text(out_dir / f"{stem}_tidy.csv", "\n".join(rows) + "\n")
        out.add_render(
            out_dir / f"{stem}_trace.png",
            lambda p, t=trace, s=stem: plots.save_trace_figure(t, p, title=s),
        )
        messages.append(f"{stem}: {len(trace)} samples at {trace.sample_rate_hz} Hz")
    if args.report:
        report = ev.report_from_json(_read_text(args.report))
        stem = Path(args.report).stem
        out.add_text(out_dir / f"{stem}_confusion_tidy.csv", ev.probabilities_tidy_csv(report))
        out.add_text(out_dir / f"{stem}_matrix.csv", ev.probabilities_csv(report))
        out.add_render(
            out_dir / f"{stem}_confusion.png",
            lambda p, r=report: plots.save_confusion_figure(r, p),
        )
        out.add_render(
            out_dir / f"{stem}_accuracy.png",
            lambda p, r=report: plots.save_accuracy_figure(r, p),
        )
        messages.append(f"{stem}: mean accuracy {report.mean_accuracy:.2f}")
    out.commit()
    for message in messages:
        print(message)
    for path in out.paths():
        print(f"wrote {path}")
    return 0


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="baroleak",
        description="Barometer side-channel toolkit: simulate traces, cut records, "
                    "train and evaluate SVM classifiers, render reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a labeled corpus")
    p.add_argument("--task", choices=sim.TASK_NAMES, default=None)
    p.add_argument("--spec", default=None, help="key=value generation config file")
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--window-len", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="dataset JSONL path")
    p.add_argument("--traces-dir", default=None, help="also write per-record trace CSVs here")
    p.add_argument("--ambient", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tau-unsealed", type=float, default=None)
    p.add_argument("--unsealed", action="store_true", help="simulate a non-rated, leaky case")
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--quant-step", type=float, default=None)
    p.add_argument("--delta-p", type=float, default=None)
    p.add_argument("--undershoot", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--tone-hz", type=float, default=None)
    p.add_argument("--attenuation", type=float, default=None)
    p.add_argument("--phase-jitter", action="store_true",
                   help="start each speaker record at a random offset into the tone")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("segment", help="cut labeled records out of a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--events", required=True, help="CSV of time_s,label rows")
    p.add_argument("--protocol", choices=("event-window", "alternating-blocks"),
                   default="event-window")
    p.add_argument("--window-s", type=float, default=2.0)
    p.add_argument("--pre-event-s", type=float, default=1.0)
    p.add_argument("--block-s", type=float, default=10.0)
    p.add_argument("--rest-s", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train an SVM on a dataset")
    p.add_argument("--data", required=True)
    _add_svm_flags(p)
    p.add_argument("--pipeline", default=None,
                   help="transform chain, e.g. std|savgol(2,5); default std "
                        "(std|savgol(2,5) for external-speaker corpora)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="repeated stratified k-fold cross validation")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--repeats", type=int, default=10)
    _add_svm_flags(p)
    p.add_argument("--pipeline", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--matrix-csv", default=None,
                   help="also write the probability matrix CSV here")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="apply a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None, help="dataset JSONL to classify")
    p.add_argument("--trace", default=None, help="trace CSV to slide windows over")
    p.add_argument("--stride-s", type=float, default=None,
                   help="window stride in seconds (default: one window)")
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="render CSVs and figures from traces or reports")
    p.add_argument("--trace", default=None)
    p.add_argument("--report", default=None, help="report JSON from evaluate")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
