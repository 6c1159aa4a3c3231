"""Vent-relaxation channel simulator for sealed-phone barometer traces.

An ingress-protected phone is an almost airtight cavity around the pressure
sensor; its vent equalizes internal and external pressure as a first order
relaxation with time constant tau. Events that pump air into or out of the
cavity (screen flex from a finger tap, a speaker membrane) show up as
transients riding on the ambient level, low-pass limited by the sensor API's
output rate.

The engine integrates the internal deviation from ambient at a fast internal
rate: each step adds the forcing increment for that step, then relaxes by the
closed-form factor exp(-dt/tau). The internal series is decimated to the
output rate by averaging each output-period block; Gaussian sensor noise and
ADC quantization are applied last, at the output rate. Tones above the output
Nyquist therefore fold to their alias frequencies naturally.

All randomness is driven by numpy's PCG64 generator. Per-record seeds fan out
from a base seed as ``base XOR record_index``; within one simulation the noise
stream and the event stream (tap contact durations) are separate PCG64
streams, so changing event parameters never perturbs the noise sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from baroleak.trace import (
    Dataset,
    Label,
    LabeledRecord,
    NO_TAP,
    PressureTrace,
    SPEAKER_ACTIVE,
    SPEAKER_INACTIVE,
    TAP,
    key_label,
)

RNG_ALGORITHM = "numpy PCG64"

_SEED_MASK = (1 << 64) - 1

# Screen flex gain by numpad key position (row-major from top left). Corner
# keys sit where the panel is stiffest, the center key where it flexes most.
KEY_FLEX_GAIN: dict[int, float] = {
    1: 0.80, 2: 0.95, 3: 0.80,
    4: 0.95, 5: 1.10, 6: 0.95,
    7: 0.80, 8: 0.95, 9: 0.80,
}

# Fixed per-key perturbation of the release undershoot ratio, spread evenly
# over [-0.10, +0.10] so every key has a distinct release signature even
# inside one flex-gain group.
KEY_UNDERSHOOT_OFFSET: dict[int, float] = {
    k: round(-0.10 + 0.025 * (k - 1), 4) for k in range(1, 10)
}

# Base undershoot ratio used for key-position corpora: leaves headroom for
# the +0.10 per-key offset without clipping at the ratio's upper bound 1.
KEY_TASK_UNDERSHOOT = 0.90

# Flex step for key-position corpora. Deliberate typing taps land harder than
# the detection task's threshold-sized default; the per-key undershoot steps
# are shape differences that scale with it, and this value puts the stock
# 9-key corpus near the mid-thirties diagonal instead of chance.
KEY_TASK_DELTA_P = 0.35

# Speaker oscillation amplitude inside the cavity. Sized against the default
# 0.01 hPa noise floor so a sealed case detects a 12 Hz tone near-perfectly
# while a leaky case, which passes only ~5/6 of the tone at 12 Hz, stays
# measurably behind it.
DEFAULT_AMPLITUDE_HPA = 0.008

# Ringtone stand-in: a few low tones with decaying relative amplitude.
RINGTONE_TONES: tuple[tuple[float, float], ...] = ((6.0, 1.0), (9.0, 0.7), (19.0, 0.5))


@dataclass(frozen=True)
class SimulatorConfig:
    """Channel and sensor parameters.

    tau_s is the sealed-case vent relaxation constant, tau_unsealed_s the
    constant used when ip_sealed is False (a leaky, non-rated case). The
    internal integration rate must be an integer multiple of the output rate
    and at least twice it.
    """

    ambient_hpa: float = 1013.25
    tau_s: float = 0.5
    internal_rate_hz: float = 1000.0
    output_rate_hz: float = 25.0
    noise_std_hpa: float = 0.01
    quant_step_hpa: float = 1.0 / 4096.0
    ip_sealed: bool = True
    tau_unsealed_s: float = 0.02
    seed: int = 0
    key_flex_gain: Mapping[int, float] = field(
        default_factory=lambda: dict(KEY_FLEX_GAIN)
    )
    key_undershoot_offset: Mapping[int, float] = field(
        default_factory=lambda: dict(KEY_UNDERSHOOT_OFFSET)
    )

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ambient_hpa)):
            raise ValueError("ambient_hpa must be finite")
        if self.tau_s <= 0 or self.tau_unsealed_s <= 0:
            raise ValueError("relaxation constants must be positive")
        if self.output_rate_hz <= 0 or self.internal_rate_hz <= 0:
            raise ValueError("rates must be positive")
        ratio = self.internal_rate_hz / self.output_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
            raise ValueError(
                "internal_rate_hz must be an integer multiple (>= 2x) of output_rate_hz"
            )
        if self.noise_std_hpa < 0 or self.quant_step_hpa < 0:
            raise ValueError("noise_std_hpa and quant_step_hpa must be non-negative")

    @property
    def effective_tau_s(self) -> float:
        return self.tau_s if self.ip_sealed else self.tau_unsealed_s

    @property
    def oversample(self) -> int:
        return int(round(self.internal_rate_hz / self.output_rate_hz))


@dataclass(frozen=True)
class TapProfile:
    """Finger-tap forcing: flex step at contact, vacuum dip at release.

    Contact duration is drawn per tap from a triangular distribution on
    [contact_ms_min, contact_ms_max] with mode contact_ms_mean. When key is
    set (numpad position 1..9), the simulator scales delta_p_hpa by the key's
    flex gain and shifts the undershoot ratio by the key's fixed offset.
    """

    key: int | None = None
    delta_p_hpa: float = 0.05
    recovery_undershoot_ratio: float = 0.98
    contact_ms_min: float = 24.0
    contact_ms_max: float = 183.0
    contact_ms_mean: float = 85.0

    def __post_init__(self) -> None:
        if self.key is not None and self.key not in range(1, 10):
            raise ValueError(f"key must be 1..9 or None, got {self.key}")
        if self.delta_p_hpa < 0:
            raise ValueError("delta_p_hpa must be non-negative")
        if not 0.0 <= self.recovery_undershoot_ratio <= 1.0:
            raise ValueError("recovery_undershoot_ratio must lie in [0, 1]")
        if not 0 < self.contact_ms_min <= self.contact_ms_mean <= self.contact_ms_max:
            raise ValueError("contact duration bounds must satisfy 0 < min <= mean <= max")


@dataclass(frozen=True)
class SpeakerSource:
    """Additive oscillation pumped into the cavity by a speaker membrane.

    tones is a set of (frequency_hz, relative_amplitude) pairs; the injected
    waveform is amplitude_hpa * sum(rel * sin(2 pi f t)). External sources
    couple through the case and arrive attenuated by external_attenuation.
    """

    tones: tuple[tuple[float, float], ...]
    amplitude_hpa: float = DEFAULT_AMPLITUDE_HPA
    external: bool = False
    external_attenuation: float = 0.5

    def __post_init__(self) -> None:
        tones = tuple((float(f), float(a)) for f, a in self.tones)
        for f, a in tones:
            if f <= 0:
                raise ValueError(f"tone frequency must be positive, got {f}")
            if a < 0:
                raise ValueError(f"relative amplitude must be non-negative, got {a}")
        if self.amplitude_hpa < 0:
            raise ValueError("amplitude_hpa must be non-negative")
        if not 0 < self.external_attenuation <= 1:
            raise ValueError("external_attenuation must lie in (0, 1]")
        object.__setattr__(self, "tones", tones)

    @classmethod
    def sinusoid(cls, freq_hz: float, amplitude_hpa: float = DEFAULT_AMPLITUDE_HPA,
                 external: bool = False, external_attenuation: float = 0.5) -> "SpeakerSource":
        return cls(((freq_hz, 1.0),), amplitude_hpa, external, external_attenuation)

    @classmethod
    def ringtone(cls, amplitude_hpa: float = DEFAULT_AMPLITUDE_HPA,
                 external: bool = False, external_attenuation: float = 0.5) -> "SpeakerSource":
        return cls(RINGTONE_TONES, amplitude_hpa, external, external_attenuation)

    @classmethod
    def silent(cls) -> "SpeakerSource":
        return cls((), 0.0)

    @property
    def effective_amplitude_hpa(self) -> float:
        return self.amplitude_hpa * (self.external_attenuation if self.external else 1.0)


def step_pressure(p_int: float, p_ext: float, dt: float, tau: float) -> float:
    """Internal pressure after dt seconds of first order vent relaxation.

    Closed form of dp/dt = (p_ext - p)/tau, so stepping dt twice equals one
    2*dt step exactly and the deviation halves every tau*ln(2) seconds.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not (math.isfinite(p_int) and math.isfinite(p_ext)):
        raise ValueError("pressures must be finite")
    return p_ext + (p_int - p_ext) * math.exp(-dt / tau)


def derive_record_seed(base_seed: int, record_index: int) -> int:
    """Deterministic per-record seed fan-out: base XOR record index."""
    if record_index < 0:
        raise ValueError("record_index must be non-negative")
    return (base_seed ^ record_index) & _SEED_MASK


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed & _SEED_MASK, stream)))


def _relaxation_scan(increments: np.ndarray, dt_over_tau: float) -> np.ndarray:
    """Run q[i] = (q[i-1] + increments[i]) * exp(-dt/tau) from q = 0, exactly.

    The linear recurrence unrolls to q[m] = d^m * (q0 + cumsum(inc * d^-j)),
    evaluated in chunks short enough that d^-j stays within a safe exponent
    budget, so the vectorized result matches the sequential scan to float
    precision at any length.
    """
    decay = math.exp(-dt_over_tau)
    n = increments.size
    chunk = max(1, min(n, int(30.0 / dt_over_tau)))
    out = np.empty(n)
    q0 = 0.0
    for s in range(0, n, chunk):
        blk = increments[s : s + chunk]
        m = blk.size
        pw = decay ** np.arange(1, m + 1)
        inv = decay ** (-np.arange(m, dtype=np.float64))
        out[s : s + m] = pw * (q0 + np.cumsum(blk * inv))
        q0 = out[s + m - 1]
    return out


def _render(config: SimulatorConfig, increments: np.ndarray, n_out: int) -> PressureTrace:
    """Integrate forcing increments, decimate, add noise, quantize."""
    m = config.oversample
    if np.any(increments):
        dt_over_tau = (1.0 / config.internal_rate_hz) / config.effective_tau_s
        q = _relaxation_scan(increments, dt_over_tau)
        deviation = q.reshape(n_out, m).mean(axis=1)
    else:
        # Null forcing never leaves ambient; skip integration so the output
        # is exactly ambient before noise for any ambient value.
        deviation = np.zeros(n_out)
    out = config.ambient_hpa + deviation
    if config.noise_std_hpa > 0:
        rng = _stream(config.seed, 0)
        out = out + rng.normal(0.0, config.noise_std_hpa, n_out)
    if config.quant_step_hpa > 0:
        out = np.round(out / config.quant_step_hpa) * config.quant_step_hpa
    return PressureTrace(out, config.output_rate_hz, 0)


def _output_samples(config: SimulatorConfig, duration_s: float) -> int:
    n_out = int(round(duration_s * config.output_rate_hz))
    if n_out < 1:
        raise ValueError(
            f"duration {duration_s} s is shorter than one output sample at "
            f"{config.output_rate_hz} Hz"
        )
    return n_out


def simulate_idle(config: SimulatorConfig, duration_s: float) -> PressureTrace:
    """Sealed phone at rest: ambient pressure plus sensor noise and quantization."""
    n_out = _output_samples(config, duration_s)
    return _render(config, np.zeros(n_out * config.oversample), n_out)


def draw_contact_s(profile: TapProfile, rng: np.random.Generator) -> float:
    """Draw one tap contact duration in seconds (triangular, mode at the mean)."""
    ms = rng.triangular(profile.contact_ms_min, profile.contact_ms_mean, profile.contact_ms_max)
    return float(ms) / 1000.0


def simulate_tap(
    config: SimulatorConfig,
    profile: TapProfile,
    tap_time_s: float,
    duration_s: float,
    contact_s: float | None = None,
) -> PressureTrace:
    """One finger tap: flex step at contact onset, vacuum dip at release.

    The internal pressure receives +delta at the contact onset (screen flex
    compresses the cavity), relaxes toward ambient during contact, receives
    -undershoot*delta at release (the panel springs back and briefly rarefies
    the cavity), then relaxes to ambient. When contact_s is None the contact
    duration is drawn from the profile's triangular distribution using the
    event stream of config.seed.
    """
    n_out = _output_samples(config, duration_s)
    if contact_s is None:
        contact_s = draw_contact_s(profile, _stream(config.seed, 1))
    if contact_s <= 0:
        raise ValueError(f"contact_s must be positive, got {contact_s}")
    if tap_time_s <= 0 or tap_time_s + contact_s >= n_out / config.output_rate_hz:
        raise ValueError(
            f"tap spanning {tap_time_s:.3f}..{tap_time_s + contact_s:.3f} s "
            f"exceeds the trace bounds"
        )

    if profile.key is not None:
        try:
            gain = config.key_flex_gain[profile.key]
            offset = config.key_undershoot_offset[profile.key]
        except KeyError:
            raise ValueError(f"no per-key entry for key {profile.key}") from None
    else:
        gain, offset = 1.0, 0.0
    delta = profile.delta_p_hpa * gain
    undershoot = min(1.0, max(0.0, profile.recovery_undershoot_ratio + offset))

    n_int = n_out * config.oversample
    increments = np.zeros(n_int)
    if delta > 0:
        i_on = int(round(tap_time_s * config.internal_rate_hz))
        i_rel = int(round((tap_time_s + contact_s) * config.internal_rate_hz))
        i_rel = max(i_rel, i_on + 1)
        if i_rel >= n_int:
            raise ValueError("tap release falls outside the trace")
        increments[i_on] += delta
        increments[i_rel] -= undershoot * delta
    return _render(config, increments, n_out)


def simulate_speaker(
    config: SimulatorConfig, source: SpeakerSource, duration_s: float,
    phase_s: float = 0.0,
) -> PressureTrace:
    """Speaker playback: the tone waveform is injected into the cavity.

    The membrane displaces air inside (or, for external sources, couples an
    attenuated waveform through the case), so per internal step the pressure
    state receives the waveform's increment and then leaks through the vent.
    Slow components drain away while components fast relative to 1/tau
    survive; a leaky (unsealed) case passes audibly less of the tone.

    phase_s shifts the source waveform: the trace starts phase_s seconds into
    the tone. A free-running generator is not synchronized with the sampling
    schedule, so records cut from a long capture see different offsets.
    """
    n_out = _output_samples(config, duration_s)
    n_int = n_out * config.oversample
    if not math.isfinite(phase_s):
        raise ValueError(f"phase_s must be finite, got {phase_s}")
    amp = source.effective_amplitude_hpa
    if amp <= 0 or not source.tones:
        return _render(config, np.zeros(n_int), n_out)
    t = phase_s + np.arange(n_int + 1) / config.internal_rate_hz
    wave = np.zeros(n_int + 1)
    for freq, rel in source.tones:
        wave += rel * np.sin(2.0 * math.pi * freq * t)
    return _render(config, np.diff(amp * wave), n_out)


TASK_NAMES = ("b-sad-internal", "b-sad-external", "tap-detect", "key-position")

_TASK_DEFAULTS = {
    # task: (per_class, window_len)
    "b-sad-internal": (225, 250),
    "b-sad-external": (135, 250),
    "tap-detect": (50, 50),
    "key-position": (124, 50),
}


@dataclass(frozen=True)
class GenerationSpec:
    """What corpus to synthesize: task, balance, window length, forcing knobs.

    profile and source default to None, meaning the task's standard forcing:
    a keyless default TapProfile for tap-detect, per-key profiles with the
    KEY_TASK_UNDERSHOOT base for key-position, and a 12 Hz sinusoid (internal
    or external) for the speaker activity tasks.

    phase_jitter models a free-running tone generator: each speaker record
    starts at a seeded random offset into the source waveform instead of at
    zero phase, as happens when records are cut from one long capture whose
    schedule is not locked to the tone. Off by default: the stock corpora
    keep every record phase-aligned so the binary tasks stay linearly
    separable.
    """

    task: str
    per_class: int
    window_len: int
    tap_time_s: float = 1.0
    profile: TapProfile | None = None
    source: SpeakerSource | None = None
    phase_jitter: bool = False

    def __post_init__(self) -> None:
        if self.task not in TASK_NAMES:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASK_NAMES}")
        if self.per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {self.per_class}")
        if self.window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {self.window_len}")
        if self.tap_time_s <= 0:
            raise ValueError("tap_time_s must be positive")


def default_generation_spec(task: str, per_class: int | None = None,
                            window_len: int | None = None) -> GenerationSpec:
    """Generation spec with the task's standard corpus size and window length."""
    if task not in _TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}, expected one of {TASK_NAMES}")
    d_per, d_win = _TASK_DEFAULTS[task]
    return GenerationSpec(task, per_class or d_per, window_len or d_win)


def key_task_profile() -> TapProfile:
    """Base tap profile for key-position corpora (before per-key offsets)."""
    return TapProfile(delta_p_hpa=KEY_TASK_DELTA_P,
                      recovery_undershoot_ratio=KEY_TASK_UNDERSHOOT)


def _task_classes(task: str) -> tuple[Label, ...]:
    if task in ("b-sad-internal", "b-sad-external"):
        return (SPEAKER_ACTIVE, SPEAKER_INACTIVE)
    if task == "tap-detect":
        return (TAP, NO_TAP)
    return tuple(key_label(k) for k in range(1, 10))


def synth_dataset(
    config: SimulatorConfig,
    spec: GenerationSpec,
    return_traces: bool = False,
) -> Dataset | tuple[Dataset, list[PressureTrace]]:
    """Synthesize a balanced labeled corpus for one task.

    Records are generated class by class; record i uses the derived seed
    config.seed XOR i, so any record can be regenerated in isolation and the
    whole corpus is reproducible bit for bit.
    """
    classes = _task_classes(spec.task)
    duration_s = spec.window_len / config.output_rate_hz
    speaker = spec.task in ("b-sad-internal", "b-sad-external")
    if speaker:
        source = spec.source or SpeakerSource.sinusoid(
            12.0, external=(spec.task == "b-sad-external")
        )
    else:
        if spec.tap_time_s >= duration_s:
            raise ValueError("tap_time_s must fall inside the record window")
        base_profile = spec.profile or (
            TapProfile() if spec.task == "tap-detect" else key_task_profile()
        )

    records: list[LabeledRecord] = []
    traces: list[PressureTrace] = []
    index = 0
    for label in classes:
        for _ in range(spec.per_class):
            seed = derive_record_seed(config.seed, index)
            rec_config = replace(config, seed=seed)
            meta: dict = {"task": spec.task, "index": index, "seed": seed}
            if speaker:
                if label == SPEAKER_ACTIVE:
                    phase_s = 0.0
                    if spec.phase_jitter:
                        # Offsets live on the event stream so the noise draw
                        # for a given record seed stays put either way.
                        phase_s = float(_stream(seed, 1).uniform(0.0, 1.0))
                        meta["phase_s"] = phase_s
                    trace = simulate_speaker(rec_config, source, duration_s, phase_s)
                else:
                    trace = simulate_idle(rec_config, duration_s)
            elif label == NO_TAP:
                trace = simulate_idle(rec_config, duration_s)
            else:
                profile = base_profile if label == TAP else replace(base_profile, key=label.key)
                contact_s = draw_contact_s(profile, _stream(seed, 1))
                trace = simulate_tap(
                    rec_config, profile, spec.tap_time_s, duration_s, contact_s=contact_s
                )
                meta["tap_time_s"] = spec.tap_time_s
                meta["contact_s"] = contact_s
                if profile.key is not None:
                    meta["key"] = profile.key
            if len(trace) != spec.window_len:
                raise AssertionError("synthesized trace length mismatch")
            records.append(LabeledRecord(label, trace.samples, meta))
            if return_traces:
                traces.append(trace)
            index += 1

    dataset = Dataset(tuple(records), classes, spec.window_len)
    return (dataset, traces) if return_traces else dataset


_CONFIG_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_SIM_FLOAT_KEYS = (
    "ambient_hpa", "tau_s", "internal_rate_hz", "output_rate_hz",
    "noise_std_hpa", "quant_step_hpa", "tau_unsealed_s",
)
_PROFILE_FLOAT_KEYS = (
    "delta_p_hpa", "recovery_undershoot_ratio",
    "contact_ms_min", "contact_ms_max", "contact_ms_mean",
)


def parse_generation_config(text: str) -> tuple[GenerationSpec, SimulatorConfig]:
    """Parse a key=value generation config.

    One ``key = value`` pair per line; ``#`` starts a comment. ``task`` is
    required; every other key falls back to the task default. Recognized keys
    cover the corpus shape (per_class, window_len, seed, tap_time_s,
    phase_jitter), the SimulatorConfig fields, the TapProfile fields, and the
    speaker source (source_kind, tone_hz, amplitude_hpa,
    external_attenuation).
    """
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        if key in pairs:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value

    if "task" not in pairs:
        raise ValueError("generation config must set task")
    task = pairs.pop("task")

    def pop_int(key: str) -> int | None:
        if key not in pairs:
            return None
        try:
            return int(pairs.pop(key))
        except ValueError:
            raise ValueError(f"{key} must be an integer") from None

    def pop_float(key: str) -> float | None:
        if key not in pairs:
            return None
        try:
            return float(pairs.pop(key))
        except ValueError:
            raise ValueError(f"{key} must be a number") from None

    spec = default_generation_spec(task, pop_int("per_class"), pop_int("window_len"))
    tap_time = pop_float("tap_time_s")
    if tap_time is not None:
        spec = replace(spec, tap_time_s=tap_time)
    if "phase_jitter" in pairs:
        raw = pairs.pop("phase_jitter").lower()
        if raw not in _CONFIG_BOOL:
            raise ValueError(f"phase_jitter must be a boolean, got {raw!r}")
        spec = replace(spec, phase_jitter=_CONFIG_BOOL[raw])

    sim_kwargs: dict = {}
    for key in _SIM_FLOAT_KEYS:
        value = pop_float(key)
        if value is not None:
            sim_kwargs[key] = value
    seed = pop_int("seed")
    if seed is not None:
        sim_kwargs["seed"] = seed
    if "ip_sealed" in pairs:
        raw = pairs.pop("ip_sealed").lower()
        if raw not in _CONFIG_BOOL:
            raise ValueError(f"ip_sealed must be a boolean, got {raw!r}")
        sim_kwargs["ip_sealed"] = _CONFIG_BOOL[raw]
    config = SimulatorConfig(**sim_kwargs)

    profile_kwargs: dict = {}
    for key in _PROFILE_FLOAT_KEYS:
        value = pop_float(key)
        if value is not None:
            profile_kwargs[key] = value
    if profile_kwargs:
        if task == "key-position":
            profile_kwargs.setdefault("recovery_undershoot_ratio", KEY_TASK_UNDERSHOOT)
            profile_kwargs.setdefault("delta_p_hpa", KEY_TASK_DELTA_P)
        spec = replace(spec, profile=TapProfile(**profile_kwargs))

    source_kind = pairs.pop("source_kind", None)
    tone_hz = pop_float("tone_hz")
    amplitude = pop_float("amplitude_hpa")
    attenuation = pop_float("external_attenuation")
    if any(v is not None for v in (source_kind, tone_hz, amplitude, attenuation)):
        external = task == "b-sad-external"
        kwargs = {"external": external}
        if amplitude is not None:
            kwargs["amplitude_hpa"] = amplitude
        if attenuation is not None:
            kwargs["external_attenuation"] = attenuation
        if source_kind == "ringtone":
            if tone_hz is not None:
                raise ValueError("tone_hz does not apply to the ringtone source")
            spec = replace(spec, source=SpeakerSource.ringtone(**kwargs))
        elif source_kind in (None, "sinusoid"):
            spec = replace(spec, source=SpeakerSource.sinusoid(tone_hz or 12.0, **kwargs))
        else:
            raise ValueError(f"unknown source_kind {source_kind!r}")

    if pairs:
        unknown = ", ".join(sorted(pairs))
        raise ValueError(f"unknown generation config keys: {unknown}")
    return spec, config
